import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

from core_net.confs import EngineConf
from experiments.drivers import DRIVERS
from experiments.output_dir import OutputDir
from shared_models.errors import FipError, InvalidConfigError
from shared_models.experiment_config import ExperimentConfig, ExperimentKind

DEFAULT_OUTPUT_PATH = Path(__file__).parent.joinpath("output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="experiments", description="Functionally invariant path experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    for kind in ExperimentKind:
        sub = commands.add_parser(kind.value)
        sub.add_argument("--config", type=Path, required=True, help="JSON experiment config")
        sub.add_argument("--out", type=Path, default=None, help="Output directory (default: config out_dir)")
        sub.add_argument("--seed", type=int, default=None, help="Overrides the run, training and path seeds")
    return parser


def load_config(path: Path, kind: ExperimentKind, seed: Optional[int], out: Optional[Path]) -> ExperimentConfig:
    raw = json.loads(path.read_text())
    raw.setdefault("kind", kind.value)
    if raw["kind"] != kind.value:
        raise InvalidConfigError(f"{path} configures a {raw['kind']} experiment, not {kind.value}", config=str(path))
    cfg = ExperimentConfig.model_validate(raw)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    out = out or cfg.out_dir or DEFAULT_OUTPUT_PATH.joinpath(cfg.resolved_run_id)
    return cfg.model_copy(update={"out_dir": out})


def report_failure(payload: dict) -> int:
    print(json.dumps(payload))
    return 2 if payload["error"] == "invalid-config" else 1


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    kind = ExperimentKind(args.command)
    logger.remove()
    logger.add(sys.stderr, level=EngineConf().log_level)
    try:
        cfg = load_config(args.config, kind, args.seed, args.out)
        with OutputDir(cfg.out_dir, cfg) as out:
            DRIVERS[kind](cfg, out)
    except ValidationError as e:
        return report_failure({
            "error": "invalid-config",
            "message": f"{len(e.errors())} invalid config value(s)",
            "details": {"errors": json.loads(e.json(include_url=False))},
        })
    except FipError as e:
        logger.error(f"{e.code}: {e.message}")
        return report_failure(e.to_payload())
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Cannot read {args.config}: {e}")
        return report_failure({"error": "io-error", "message": str(e), "details": {"config": str(args.config)}})
    except Exception as e:
        logger.opt(exception=e).error(f"Unexpected failure running {kind.value}")
        return report_failure({"error": "internal-error", "message": str(e), "details": {"type": type(e).__name__}})
    return 0


if __name__ == '__main__':
    sys.exit(main())
