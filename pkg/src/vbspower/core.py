"""Domain types, dataset container, CSV I/O and model-file serialization."""

from __future__ import annotations

import csv
import datetime as _dt
import enum
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

MCS_MIN = 0
MCS_MAX = 28

CSV_HEADER = ("airtime", "snr_db", "mcs", "power_w", "scheduler", "platform")
AIRTIME_DECIMALS = 3
SNR_DECIMALS = 2
POWER_DECIMALS = 4

SCHEMA_VERSION = 1


class VbsPowerError(Exception):
    """Base class for all package errors."""


class DataError(VbsPowerError):
    """Invalid sample, dataset or file content."""


class ModelFileError(VbsPowerError):
    """Malformed or inconsistent model file."""


class Scheduler(str, enum.Enum):
    DEFAULT = "default"
    CUSTOM = "custom"


class Source(str, enum.Enum):
    SYNTHETIC = "synthetic"
    INGESTED_CSV = "ingested_csv"


class ModelKind(str, enum.Enum):
    DEFAULT_REG = "default_reg"
    CUSTOM_REG = "custom_reg"
    MLP = "mlp"


@dataclass(frozen=True)
class Sample:
    """One power measurement: airtime fraction, SNR (dB), MCS index, CPU power (W)."""

    airtime: float
    snr_db: float
    mcs: int
    power_w: float
    scheduler: Scheduler
    platform: str

    def __post_init__(self):
        if not 0.0 <= self.airtime <= 1.0:
            raise DataError(f"airtime {self.airtime} outside [0, 1]")
        if not (math.isfinite(self.snr_db) and self.snr_db >= 0.0):
            raise DataError(f"snr_db {self.snr_db} must be a finite value >= 0")
        if isinstance(self.mcs, bool) or int(self.mcs) != self.mcs:
            raise DataError(f"mcs {self.mcs} is not an integer")
        if not MCS_MIN <= self.mcs <= MCS_MAX:
            raise DataError(f"mcs {self.mcs} out of range [{MCS_MIN}, {MCS_MAX}]")
        if not (math.isfinite(self.power_w) and self.power_w > 0.0):
            raise DataError(f"power_w {self.power_w} must be positive")
        object.__setattr__(self, "mcs", int(self.mcs))
        object.__setattr__(self, "scheduler", Scheduler(self.scheduler))


@dataclass(frozen=True)
class Dataset:
    """Immutable ordered collection of samples from one platform and scheduler."""

    samples: tuple[Sample, ...]
    platform: str
    scheduler: Scheduler
    seed: int | None = None
    source: Source = Source.SYNTHETIC

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "scheduler", Scheduler(self.scheduler))
        object.__setattr__(self, "source", Source(self.source))
        for i, s in enumerate(self.samples):
            if s.platform != self.platform or s.scheduler != self.scheduler:
                raise DataError(
                    f"sample {i} tagged ({s.platform}, {s.scheduler.value}) in a "
                    f"({self.platform}, {self.scheduler.value}) dataset"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def _column(self, name: str, dtype) -> np.ndarray:
        arr = np.array([getattr(s, name) for s in self.samples], dtype=dtype)
        arr.setflags(write=False)
        return arr

    @cached_property
    def airtime(self) -> np.ndarray:
        return self._column("airtime", np.float64)

    @cached_property
    def snr_db(self) -> np.ndarray:
        return self._column("snr_db", np.float64)

    @cached_property
    def mcs(self) -> np.ndarray:
        return self._column("mcs", np.int64)

    @cached_property
    def power_w(self) -> np.ndarray:
        return self._column("power_w", np.float64)

    def features(self) -> np.ndarray:
        """(n, 3) float array of airtime, SNR and MCS."""
        return np.column_stack([self.airtime, self.snr_db, self.mcs.astype(np.float64)])

    def subset(self, indices: Iterable[int]) -> Dataset:
        return Dataset(
            samples=tuple(self.samples[i] for i in indices),
            platform=self.platform,
            scheduler=self.scheduler,
            seed=self.seed,
            source=self.source,
        )

    def fingerprint(self) -> str:
        """SHA-256 over the canonical CSV rows, order-sensitive."""
        h = hashlib.sha256()
        for s in self.samples:
            h.update(_format_row(s).encode())
            h.update(b"\n")
        return h.hexdigest()


@dataclass(frozen=True)
class PlatformProfile:
    """Ground-truth description of a computing platform used by the generator."""

    alias: str
    description: str
    oracle_params: Any  # regression.CustomRegParams
    noise_sigma_w: float = 0.15
    outlier_prob: float = 0.01
    outlier_range_w: tuple[float, float] = (4.0, 8.0)

    def __post_init__(self):
        if self.noise_sigma_w < 0:
            raise DataError("noise_sigma_w must be >= 0")
        if not 0.0 <= self.outlier_prob < 1.0:
            raise DataError("outlier_prob must lie in [0, 1)")
        lo, hi = self.outlier_range_w
        if not lo < hi:
            raise DataError("outlier range must satisfy low < high")
        object.__setattr__(self, "outlier_range_w", (float(lo), float(hi)))


# --------------------------------------------------------------------------
# CSV


def _format_row(s: Sample) -> str:
    return (
        f"{s.airtime:.{AIRTIME_DECIMALS}f},{s.snr_db:.{SNR_DECIMALS}f},{s.mcs:d},"
        f"{s.power_w:.{POWER_DECIMALS}f},{s.scheduler.value},{s.platform}"
    )


def dataset_to_csv(ds: Dataset) -> str:
    lines = [",".join(CSV_HEADER)]
    lines.extend(_format_row(s) for s in ds.samples)
    return "\n".join(lines) + "\n"


def emit_csv(ds: Dataset, path: str | os.PathLike) -> None:
    """Write ``ds`` in the dataset CSV schema with fixed decimal places."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dataset_to_csv(ds))


def ingest_csv(path: str | os.PathLike, seed: int | None = None) -> Dataset:
    """Read a dataset CSV, validating every row.

    Raises
    ------
    DataError
        Missing file, malformed header, or a row that fails parsing or the
        sample invariants. Row errors name the 1-based file line number.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_csv(text, seed=seed, name=str(path))


def parse_csv(text: str, seed: int | None = None, name: str = "<string>") -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{name}: empty file, expected header") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise DataError(f"{name}: malformed header {header!r}, expected {','.join(CSV_HEADER)}")

    samples = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise DataError(f"{name}: line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            airtime = float(row[0])
            snr = float(row[1])
            mcs_f = float(row[2])
            power = float(row[3])
        except ValueError as exc:
            raise DataError(f"{name}: line {lineno}: non-numeric field ({exc})") from None
        if not mcs_f.is_integer():
            raise DataError(f"{name}: line {lineno}: mcs {row[2]} is not an integer")
        try:
            samples.append(Sample(airtime, snr, int(mcs_f), power, Scheduler(row[4].strip()), row[5].strip()))
        except (ValueError, DataError) as exc:
            raise DataError(f"{name}: line {lineno}: {exc}") from None

    if not samples:
        return Dataset((), platform="", scheduler=Scheduler.DEFAULT, seed=seed, source=Source.INGESTED_CSV)
    first = samples[0]
    for lineno, s in enumerate(samples, start=2):
        if (s.platform, s.scheduler) != (first.platform, first.scheduler):
            raise DataError(f"{name}: line {lineno}: mixed platform/scheduler tags in one dataset")
    return Dataset(tuple(samples), first.platform, first.scheduler, seed=seed, source=Source.INGESTED_CSV)


# --------------------------------------------------------------------------
# Model files


@dataclass(frozen=True)
class ModelFile:
    model_kind: ModelKind
    payload: Any
    platform: str
    train_scenario: str
    seed: int
    created_at: str = field(default_factory=lambda: default_timestamp())

    def __post_init__(self):
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        expected = _payload_type(self.model_kind)
        if not isinstance(self.payload, expected):
            raise ModelFileError(
                f"payload {type(self.payload).__name__} does not match model kind {self.model_kind.value}"
            )


def default_timestamp() -> str:
    """ISO-8601 UTC timestamp; honours SOURCE_DATE_EPOCH for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        when = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return when.isoformat().replace("+00:00", "Z")


def _payload_type(kind: ModelKind):
    # deferred: regression and mlp import this module
    if kind is ModelKind.DEFAULT_REG:
        from .regression import DefaultRegParams

        return DefaultRegParams
    if kind is ModelKind.CUSTOM_REG:
        from .regression import CustomRegParams

        return CustomRegParams
    from .mlp import MlpModel

    return MlpModel


def model_to_json(m: ModelFile) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model_kind": m.model_kind.value,
        "platform": m.platform,
        "train_scenario": m.train_scenario,
        "seed": int(m.seed),
        "created_at": m.created_at,
        "payload": m.payload.to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str) -> ModelFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"not a model file: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelFileError("model file must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelFileError(f"schema_version {version!r} unsupported (expected {SCHEMA_VERSION})")
    try:
        kind = ModelKind(doc["model_kind"])
    except (KeyError, ValueError):
        raise ModelFileError(f"unknown model_kind {doc.get('model_kind')!r}") from None
    try:
        payload = _payload_type(kind).from_dict(doc["payload"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"payload does not match model kind {kind.value}: {exc}") from None
    return ModelFile(
        model_kind=kind,
        payload=payload,
        platform=str(doc.get("platform", "")),
        train_scenario=str(doc.get("train_scenario", "")),
        seed=int(doc.get("seed", 0)),
        created_at=str(doc.get("created_at", "")),
    )


def save_model(m: ModelFile, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(model_to_json(m))


def load_model(path: str | os.PathLike) -> ModelFile:
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"model file not found: {path}")
    return model_from_json(path.read_text(encoding="utf-8"))


def float_list(values: Sequence[float]) -> list[float]:
    return [float(v) for v in values]
