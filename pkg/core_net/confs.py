from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings


class EngineConf(BaseSettings):
    """Process-level caps, overridable through FIP_* environment variables or the repo .env file"""
    jacobian_cap: int = Field(default=10_000_000, ge=1)  # m*n entries of a materialized output Jacobian
    dense_metric_cap: int = Field(default=2000, ge=1)  # n of a materialized metric matrix
    log_level: str = Field(default="INFO")

    class Config:
        env_prefix = "fip_"
        env_file = Path(__file__).parents[1].joinpath(".env")
        extra = "ignore"
