"""Validated run configurations.

Every command builds one of these before touching data, so cross-field
violations (N_T not divisible by n_rf, N_r > N_R, ...) stop the run up front.
"""

from __future__ import annotations

import json
import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from hblab_app.app import constants as C
from hblab_app.core.errors import ConfigError


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SystemDims(_Frozen):
    nt: int = Field(C.DESK_NT, ge=1, description="transmit antennas N_T")
    nr: int = Field(C.DESK_NR, ge=1, description="receive antennas N_R")
    nsel: int = Field(C.DESK_NSEL, ge=1, description="selected receive antennas N_r")
    nrf: int = Field(C.N_RF, ge=1, description="transmit RF chains")
    ns: int = Field(C.N_S, ge=1, description="data streams")

    @model_validator(mode="after")
    def _cross_checks(self) -> "SystemDims":
        if self.nt % self.nrf:
            raise ValueError(f"N_T={self.nt} is not divisible by n_rf={self.nrf}")
        if self.nsel > self.nr:
            raise ValueError(f"N_r={self.nsel} exceeds N_R={self.nr}")
        if self.ns > self.nrf:
            raise ValueError(f"n_s={self.ns} exceeds n_rf={self.nrf}")
        if self.nrf > self.nsel:
            raise ValueError(f"n_rf={self.nrf} exceeds N_r={self.nsel}; the reduced channel has too few singular vectors")
        return self

    @property
    def m(self) -> int:
        return self.nt // self.nrf


class DatasetConfig(_Frozen):
    dims: SystemDims = SystemDims()
    num_paths: int = Field(C.NUM_PATHS, ge=1)
    pathloss: float = Field(C.PATHLOSS, gt=0)
    num_realizations: int = Field(C.NUM_REALIZATIONS, ge=1)
    num_copies: int = Field(C.NUM_NOISY_COPIES, ge=1)
    train_noise_snr_db: float = C.TRAIN_NOISE_SNR_DB
    label_snr_db: float = C.LABEL_SNR_DB
    seed: int = Field(0, ge=0)
    validation_fraction: float = Field(C.VALIDATION_FRACTION, gt=0, lt=1)
    generator_version: int = C.DATASET_GENERATOR_VERSION
    subset_budget: int = Field(1_000_000, ge=1)
    workers: int = Field(1, ge=1, exclude=True)

    @field_validator("train_noise_snr_db")
    @classmethod
    def _noise_snr(cls, v: float) -> float:
        if math.isnan(v) or v == -math.inf:
            raise ValueError("training noise snr must be finite or +inf")
        return v

    @field_validator("label_snr_db")
    @classmethod
    def _label_snr(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("labelling snr must be finite")
        return v


class TrainConfig(_Frozen):
    task: Literal["as", "rf"]
    epochs: int = Field(C.EPOCHS, ge=0)
    batch_size: int = Field(C.BATCH_SIZE, ge=1)
    learning_rate: float = Field(C.LEARNING_RATE, gt=0)
    seed: int = Field(0, ge=0)
    dtype: Literal["float64", "float32"] = "float64"


def _resolve_methods(names) -> tuple[str, ...]:
    out = []
    for name in names:
        canonical = C.METHOD_ALIASES.get(name, name)
        if canonical not in C.METHODS:
            raise ValueError(f"unknown method {name!r}; choose from {', '.join(C.METHOD_ALIASES)}")
        if canonical not in out:
            out.append(canonical)
    return tuple(out)


class EvalConfig(_Frozen):
    dims: SystemDims = SystemDims()
    snr_db: tuple[float, ...] = C.SNR_GRID_DB
    trials: int = Field(C.EVAL_TRIALS, ge=1)
    seed: int = Field(0, ge=0)
    methods: tuple[str, ...] = C.METHODS
    num_paths: int = Field(C.NUM_PATHS, ge=1)
    pathloss: float = Field(C.PATHLOSS, gt=0)
    csi_snr_db: float = math.inf
    label_snr_db: float = C.LABEL_SNR_DB
    subset_budget: int = Field(1_000_000, ge=1)
    workers: int = Field(1, ge=1)

    @field_validator("snr_db")
    @classmethod
    def _grid(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if not v:
            raise ValueError("snr grid is empty")
        if not all(math.isfinite(x) for x in v):
            raise ValueError("snr grid values must be finite")
        return tuple(sorted(v))

    @field_validator("methods")
    @classmethod
    def _methods(cls, v) -> tuple[str, ...]:
        if not v:
            raise ValueError("no methods requested")
        return _resolve_methods(v)

    @field_validator("csi_snr_db")
    @classmethod
    def _csi(cls, v: float) -> float:
        if math.isnan(v) or v == -math.inf:
            raise ValueError("csi snr must be finite or +inf")
        return v


class BenchConfig(_Frozen):
    dims: SystemDims = SystemDims()
    trials: int = Field(C.BENCH_TRIALS, ge=1)
    seed: int = Field(0, ge=0)
    snr_db: float = 0.0
    num_paths: int = Field(C.NUM_PATHS, ge=1)
    include_exhaustive: bool = True
    subset_budget: int = Field(1_000_000, ge=1)


class DatasetManifest(_Frozen):
    task: Literal["selection", "precoder"]
    config: DatasetConfig
    num_realizations: int
    num_samples: int
    input_shape: tuple[int, int, int]
    output_dim: int
    input_scale: float
    validation_realizations: tuple[int, ...]

    @model_validator(mode="after")
    def _counts(self) -> "DatasetManifest":
        if self.num_samples != self.num_realizations * self.config.num_copies:
            raise ValueError(f"{self.num_samples} samples for {self.num_realizations} realizations x {self.config.num_copies} copies")
        if any(not 0 <= r < self.num_realizations for r in self.validation_realizations):
            raise ValueError("validation realization index out of range")
        return self

    def canonical_json(self) -> str:
        # python-mode dump keeps +inf, which json writes as Infinity
        return json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return build(cls, **json.loads(text))


def build(model_cls, **values):
    """Construct a config model, turning pydantic's errors into ``ConfigError``."""
    try:
        return model_cls(**values)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or model_cls.__name__}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid {model_cls.__name__}: {problems}") from exc

