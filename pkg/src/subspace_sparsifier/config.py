"""Run configuration shared by the CLI and library entry points."""
from __future__ import annotations

from dataclasses import asdict, dataclass

from .sparsify import OracleSpec


@dataclass
class RunConfig:
    seed: int = 0
    eps: float = 0.5
    delta0: float = 0.25
    delta1: float = 1e-5
    cterm: float = 10.0
    beta: float = 1.0
    c_local: float = 1.0
    gamma: float | None = None
    column_rounds: int | None = None
    sketch_delta: float | None = None
    dense_cap: int = 500
    oracle: str = "slow"
    audit: bool = False
    exact_sc: bool = False

    def validate(self) -> "RunConfig":
        for name in ("eps", "delta0", "delta1"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if self.cterm <= 0 or self.beta <= 0 or self.c_local <= 0:
            raise ValueError("cterm, beta and c_local must be positive")
        if self.dense_cap <= 0:
            raise ValueError("dense_cap must be positive")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.column_rounds is not None and self.column_rounds < 1:
            raise ValueError("column_rounds must be at least 1")
        if self.sketch_delta is not None and not 0 < self.sketch_delta < 1:
            raise ValueError("sketch_delta must lie in (0, 1)")
        if self.oracle not in ("slow", "fast"):
            raise ValueError(f"unknown oracle {self.oracle!r}")
        return self

    def oracle_spec(self) -> OracleSpec:
        return OracleSpec(kind=self.oracle, beta=self.beta, c_local=self.c_local,
                          gamma=self.gamma, column_rounds=self.column_rounds,
                          sketch_delta=self.sketch_delta)

    def as_dict(self) -> dict:
        return asdict(self)
