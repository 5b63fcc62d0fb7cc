"""
Experiment configuration.

Defaults come from the environment (a ``.env`` file is honoured) and command-line
flags override them.
"""
import os
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator, model_validator

EXPERIMENTS = ("lemma5", "pq-check", "dirichlet", "hartogs", "wedge", "reinhardt", "commutator",
               "eq3-sanity", "suite")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from e


class ExperimentConfig(BaseModel):
    """Everything one CLI invocation needs."""
    experiment: str = Field(..., description="Subcommand to run")
    out: Path = Field(default=Path("reports"), description="Output directory for reports")
    seed: int = Field(default=0, description="Seed for every random draw")
    grid: int = Field(default=256, description="Grid resolution N (nodes per unit length)")
    stages: int = Field(default=6, description="Number of Hartogs stages K")
    cutoff: int = Field(default=64, description="Monomial degree cutoff")
    epsilons: Optional[List[float]] = Field(default=None, description="Epsilon sweep; derived from the run when omitted")
    cert: Optional[Path] = Field(default=None, description="(P_q) certificate JSON")
    mask: Optional[Path] = Field(default=None, description="Mask file (0/1 rows)")
    shape: Optional[str] = Field(default=None, description="Built-in shape name")
    model: Optional[str] = Field(default=None, description="Reinhardt model file or built-in name")
    q: int = Field(default=1, description="Form degree")
    j: int = Field(default=2, description="Coordinate of the multiplier zbar_j")
    m: int = Field(default=20, description="Wedge family size")
    trace: Optional[str] = Field(default=None, description="JSONL trace path pattern ({run_id}, {timestamp})")
    plots: bool = Field(default=False, description="Emit SVG plots")

    @field_validator("experiment")
    @classmethod
    def _known(cls, v: str) -> str:
        if v not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {v!r}")
        return v

    @field_validator("grid", "stages", "cutoff", "q", "j", "m")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be positive")
        return v

    @field_validator("seed")
    @classmethod
    def _seed(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be non-negative")
        return v

    @field_validator("epsilons")
    @classmethod
    def _epsilons(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and (not v or any(e <= 0 for e in v)):
            raise ValueError("epsilons must be a non-empty list of positive numbers")
        return v

    @model_validator(mode="after")
    def _inputs(self):
        if self.experiment == "pq-check" and self.cert is None:
            raise ValueError("pq-check needs --cert")
        if self.experiment == "dirichlet" and (self.shape is None) == (self.mask is None):
            raise ValueError("dirichlet needs exactly one of --shape or --mask")
        if self.experiment in ("reinhardt", "commutator") and self.model is None:
            raise ValueError(f"{self.experiment} needs --model")
        return self

    @classmethod
    def from_env(cls, experiment: str, **overrides) -> "ExperimentConfig":
        """
        Build a config from DBARLAB_* variables, then apply non-None overrides.

        Args:
            experiment (str): subcommand name
            **overrides: values taken from command-line flags
        """
        load_dotenv()
        values = {
            "experiment": experiment,
            "seed": _env_int("DBARLAB_SEED", 0),
            "out": Path(os.environ.get("DBARLAB_OUT", "reports")),
            "grid": _env_int("DBARLAB_GRID", 256),
            "cutoff": _env_int("DBARLAB_CUTOFF", 64),
            "trace": os.environ.get("DBARLAB_TRACE") or None,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
