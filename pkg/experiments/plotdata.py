"""
Plot data written from a RunLog.

    accuracy-vs-step.csv      step, phase, kind, phase_step, series, accuracy
    accuracy-vs-sparsity.csv  target_sparsity, achieved_sparsity, train_accuracy, test_accuracy
    adversarial.csv           model, clean_accuracy, adversarial_accuracy, coherence
    trajectory-pca.csv        path, t, pc1, pc2

Each CSV gets a seaborn rendering next to it (same stem, .pdf) unless render=False.
"""
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
from loguru import logger
from sklearn.decomposition import PCA

from experiments.run_log import RunLog
from shared_models.errors import EmptyRunLogError
from shared_models.experiment_config import ExperimentKind

ACCURACY_VS_STEP_COLUMNS = ["step", "phase", "kind", "phase_step", "series", "accuracy"]
ACCURACY_VS_SPARSITY_COLUMNS = ["target_sparsity", "achieved_sparsity", "train_accuracy", "test_accuracy"]
ADVERSARIAL_COLUMNS = ["model", "clean_accuracy", "adversarial_accuracy", "coherence"]
TRAJECTORY_COLUMNS = ["path", "t", "pc1", "pc2"]


def accuracy_vs_step(run_log: RunLog) -> pd.DataFrame:
    rows = [
        {"step": r.step, "phase": r.phase, "kind": r.kind, "phase_step": r.phase_step, "series": series,
         "accuracy": value}
        for r in run_log.records if r.kind in ("train-epoch", "path-step", "eval")
        for series, value in r.accuracies.items()
    ]
    return pd.DataFrame(rows, columns=ACCURACY_VS_STEP_COLUMNS)


def accuracy_vs_sparsity(run_log: RunLog) -> pd.DataFrame:
    rows = [{col: r.values.get(col) for col in ACCURACY_VS_SPARSITY_COLUMNS} for r in run_log.filter(kind="sparsity")]
    return pd.DataFrame(rows, columns=ACCURACY_VS_SPARSITY_COLUMNS)


def adversarial(run_log: RunLog) -> pd.DataFrame:
    rows = [{col: r.values.get(col) for col in ADVERSARIAL_COLUMNS} for r in run_log.filter(kind="attack")]
    return pd.DataFrame(rows, columns=ADVERSARIAL_COLUMNS)


def fit_trajectory_pca(points: np.ndarray, n_components: int = 2) -> Tuple[PCA, np.ndarray]:
    """PCA over the visited weights; coordinates are padded with zeros when fewer components exist"""
    usable = max(1, min(n_components, points.shape[0], points.shape[1]))
    pca = PCA(n_components=usable, svd_solver="full")
    coords = pca.fit_transform(points)
    if usable < n_components:
        coords = np.hstack([coords, np.zeros((coords.shape[0], n_components - usable))])
    return pca, coords


def trajectory_projection(trajectories: Dict[str, np.ndarray]) -> pd.DataFrame:
    """All trajectories projected onto the top-2 principal components of their union"""
    names = list(trajectories)
    _, coords = fit_trajectory_pca(np.concatenate([trajectories[name] for name in names]))
    rows = []
    offset = 0
    for name in names:
        for t in range(trajectories[name].shape[0]):
            rows.append({"path": name, "t": t, "pc1": coords[offset + t, 0], "pc2": coords[offset + t, 1]})
        offset += trajectories[name].shape[0]
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


# ━━━━━━━━━━━━━━━━━━    Rendering    ━━━━━━━━━━━━━━━━━━ #
def _save(output_path: Path, xlabel: str, ylabel: str):
    plt.xlabel(xlabel, fontsize=16)
    plt.ylabel(ylabel, fontsize=16)
    plt.xticks(fontsize=14)
    plt.yticks(fontsize=14)
    plt.savefig(output_path, bbox_inches='tight')
    plt.close("all")


def render(name: str, df: pd.DataFrame, output_path: Path):
    if name == "accuracy-vs-step":
        sns.lineplot(data=df, x="step", y="accuracy", hue="series", linewidth=1.25)
        _save(output_path, "Record", "Accuracy")
    elif name == "accuracy-vs-sparsity":
        long_df = df.melt(id_vars=["achieved_sparsity"], value_vars=["train_accuracy", "test_accuracy"],
                          var_name="split", value_name="accuracy")
        sns.lineplot(data=long_df, x="achieved_sparsity", y="accuracy", hue="split", marker="o")
        _save(output_path, "Sparsity", "Accuracy")
    elif name == "adversarial":
        long_df = df.melt(id_vars=["model"], value_vars=["clean_accuracy", "adversarial_accuracy"],
                          var_name="inputs", value_name="accuracy")
        plot = sns.barplot(data=long_df, x="model", y="accuracy", hue="inputs",
                           palette=sns.color_palette("pastel", 2))
        plot.set_xticklabels(plot.get_xticklabels(), rotation=45)
        _save(output_path, "Model", "Accuracy")
    elif name == "trajectory-pca":
        sns.scatterplot(data=df, x="pc1", y="pc2", hue="path", s=20)
        sns.lineplot(data=df, x="pc1", y="pc2", hue="path", sort=False, legend=False, linewidth=0.75)
        _save(output_path, "PC 1", "PC 2")


def emit_plotdata(
    run_log: RunLog,
    kind: ExperimentKind,
    out_dir: Path,
    trajectories: Optional[Dict[str, np.ndarray]] = None,
    render_figures: bool = True,
) -> List[Path]:
    if len(run_log) == 0:
        raise EmptyRunLogError(f"Run {run_log.run_id} has no records to plot")
    out_dir.mkdir(parents=True, exist_ok=True)
    frames: Dict[str, pd.DataFrame] = {"accuracy-vs-step": accuracy_vs_step(run_log)}
    if kind is ExperimentKind.SPARSIFY:
        frames["accuracy-vs-sparsity"] = accuracy_vs_sparsity(run_log)
    if kind is ExperimentKind.ENSEMBLE:
        frames["adversarial"] = adversarial(run_log)
    if trajectories:
        frames["trajectory-pca"] = trajectory_projection(trajectories)

    written: List[Path] = []
    for name, df in frames.items():
        csv_path = out_dir.joinpath(f"{name}.csv")
        df.to_csv(csv_path, index=False)
        written.append(csv_path)
        if render_figures and not df.empty:
            render(name, df, out_dir.joinpath(f"{name}.pdf"))
        logger.info(f"Plot data {name}: {len(df)} rows -> {csv_path}")
    return written
