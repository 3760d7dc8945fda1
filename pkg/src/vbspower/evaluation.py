"""Train/test splitting, error metrics and the four evaluation scenarios.

Scenarios
---------
A  fit on default-scheduler train split, test on default-scheduler test split
B  fit on the whole default-scheduler dataset, test on the custom test split
C  fit on the custom train split, test on the custom test split
D  warm-start the scenario-B network on the custom train split, test as C

B, C and D share one custom test split (same seed), so their numbers are
directly comparable.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import mlp, regression
from .core import Dataset, ModelKind, VbsPowerError
from .datagen import default_campaign
from .regression import Variant

REPORT_CSV_HEADER = (
    "scenario",
    "platform",
    "model_kind",
    "train_rmse_w",
    "test_rmse_w",
    "train_mae_w",
    "test_mae_w",
    "n_train",
    "n_test",
    "n_skipped",
    "seed",
)

MODEL_FAMILIES = ("regression", "nn")


class EvalError(VbsPowerError):
    pass


class Scenario(str, enum.Enum):
    A = "A_DefaultToDefault"
    B = "B_DefaultToCustomTest"
    C = "C_CustomToCustomTest"
    D = "D_TransferFineTune"

    @classmethod
    def parse(cls, value) -> Scenario:
        if isinstance(value, Scenario):
            return value
        text = str(value).strip()
        for s in cls:
            if text == s.value or text.upper() == s.name:
                return s
        raise ValueError(f"unknown scenario {value!r}")


class SplitStrategy(str, enum.Enum):
    SHUFFLED = "shuffled"


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    strategy: SplitStrategy = SplitStrategy.SHUFFLED

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class EvalReport:
    scenario: Scenario
    platform: str
    model_kind: ModelKind
    train_rmse_w: float
    test_rmse_w: float
    train_mae_w: float
    test_mae_w: float
    n_train: int
    n_test: int
    n_infeasible_skipped: int  # included in n_test, excluded from test metrics
    seed: int
    test_fingerprint: str = ""
    flags: tuple[str, ...] = field(default=())

    def csv_row(self) -> list[str]:
        return [
            self.scenario.name,
            self.platform,
            self.model_kind.value,
            f"{self.train_rmse_w:.6f}",
            f"{self.test_rmse_w:.6f}",
            f"{self.train_mae_w:.6f}",
            f"{self.test_mae_w:.6f}",
            str(self.n_train),
            str(self.n_test),
            str(self.n_infeasible_skipped),
            str(self.seed),
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.value
        d["model_kind"] = self.model_kind.value
        d["flags"] = list(self.flags)
        return d


# --------------------------------------------------------------------------
# Splitting and metrics


def n_train_for(n: int, train_fraction: float) -> int:
    # test share rounds down: 598 -> 479/119, 1218 -> 975/243
    return int(math.ceil(train_fraction * n - 1e-9))


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first ``ceil(f * n)`` samples train."""
    n = len(ds)
    if n < 5:
        raise EvalError(f"dataset too small to split ({n} samples, need >= 5)")
    perm = np.random.default_rng(spec.seed).permutation(n)
    k = n_train_for(n, spec.train_fraction)
    return ds.subset(perm[:k].tolist()), ds.subset(perm[k:].tolist())


def _pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("error metrics need at least one (predicted, actual) pair")
    arr = arr.reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def rmse(pairs: Sequence[tuple[float, float]]) -> float:
    """Root mean squared error over (predicted, actual) pairs."""
    pred, actual = _pairs_to_arrays(pairs)
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def mae(pairs: Sequence[tuple[float, float]]) -> float:
    pred, actual = _pairs_to_arrays(pairs)
    return float(np.mean(np.abs(pred - actual)))


def _metrics(pred: np.ndarray, actual: np.ndarray) -> tuple[float, float]:
    pairs = np.column_stack([pred, actual])
    return rmse(pairs), mae(pairs)


# --------------------------------------------------------------------------
# Scenario runner


@dataclass
class ModelOutcome:
    report: EvalReport
    model: object
    test_pred: np.ndarray  # NaN where skipped


@dataclass
class ScenarioRun:
    scenario: Scenario
    platform: str
    seed: int
    test_set: Dataset
    outcomes: list[ModelOutcome]

    @property
    def reports(self) -> list[EvalReport]:
        return [o.report for o in self.outcomes]


def _custom_regression_outcome(scenario, train, test, seed, fingerprint, variant) -> ModelOutcome:
    fit = regression.fit_custom(train, variant)
    p = fit.params
    tr_pred = regression.custom_curve(p.beta, p.variant, train.airtime, train.snr_db, train.mcs)
    ok = regression.feasible_mask(p, test.snr_db, test.mcs)
    if not ok.any():
        raise EvalError(f"scenario {scenario.name}: every test sample is infeasible under the fitted model")
    te_pred = np.full(len(test), np.nan)
    te_pred[ok] = regression.predict_custom(p, test.airtime[ok], test.snr_db[ok], test.mcs[ok])
    tr = _metrics(tr_pred, train.power_w)
    te = _metrics(te_pred[ok], test.power_w[ok])
    report = EvalReport(
        scenario, train.platform, ModelKind.CUSTOM_REG, tr[0], te[0], tr[1], te[1],
        len(train), len(test), int((~ok).sum()), seed, fingerprint, fit.unidentified,
    )
    return ModelOutcome(report, p, te_pred)


def _default_regression_outcome(scenario, train, test, seed, fingerprint) -> ModelOutcome:
    fit = regression.fit_default(train)
    tr_pred = regression.default_curve(fit.params.gamma, train.airtime, train.snr_db)
    te_pred = regression.default_curve(fit.params.gamma, test.airtime, test.snr_db)
    tr, te = _metrics(tr_pred, train.power_w), _metrics(te_pred, test.power_w)
    report = EvalReport(
        scenario, train.platform, ModelKind.DEFAULT_REG, tr[0], te[0], tr[1], te[1],
        len(train), len(test), 0, seed, fingerprint, fit.unidentified,
    )
    return ModelOutcome(report, fit.params, te_pred)


def _nn_outcome(scenario, train, test, seed, fingerprint, model) -> ModelOutcome:
    tr_pred = mlp.predict_features(model, train.features())
    te_pred = mlp.predict_features(model, test.features())
    tr, te = _metrics(tr_pred, train.power_w), _metrics(te_pred, test.power_w)
    report = EvalReport(
        scenario, train.platform, ModelKind.MLP, tr[0], te[0], tr[1], te[1],
        len(train), len(test), 0, seed, fingerprint,
    )
    return ModelOutcome(report, model, te_pred)


def _train_config(base: mlp.TrainConfig | None, seed: int) -> mlp.TrainConfig:
    return dataclasses.replace(base or mlp.TrainConfig(), seed=seed)


def evaluate_scenario(
    scenario,
    platform_alias: str,
    seed: int,
    model_kinds: Iterable[str] = MODEL_FAMILIES,
    datasets: tuple[Dataset, Dataset] | None = None,
    train_config: mlp.TrainConfig | None = None,
    variant: Variant = Variant.CONTINUOUS,
    split_spec: SplitSpec | None = None,
) -> ScenarioRun:
    """Fit/train the requested model families for one scenario and evaluate them.

    ``datasets`` is ``(default, custom)``; when omitted the synthetic campaign
    for ``platform_alias`` and ``seed`` is generated. Scenario D is NN-only; a
    requested regression family is ignored there.
    """
    scenario = Scenario.parse(scenario)
    kinds = set(model_kinds)
    unknown = kinds - set(MODEL_FAMILIES)
    if unknown:
        raise EvalError(f"unknown model kinds {sorted(unknown)}; choose from {MODEL_FAMILIES}")
    if datasets is None:
        datasets = default_campaign(platform_alias, seed)
    ds_default, ds_custom = datasets
    if len(ds_default) == 0 or len(ds_custom) == 0:
        raise EvalError(f"scenario {scenario.name}: missing datasets for platform {platform_alias}")
    spec = split_spec or SplitSpec(seed=seed)
    cfg = _train_config(train_config, seed)

    if scenario is Scenario.A:
        train, test = split(ds_default, spec)
    elif scenario is Scenario.B:
        train, test = ds_default, split(ds_custom, spec)[1]
    else:
        train, test = split(ds_custom, spec)
    fp = test.fingerprint()

    outcomes = []
    try:
        if "regression" in kinds and scenario is not Scenario.D:
            if scenario is Scenario.A:
                outcomes.append(_default_regression_outcome(scenario, train, test, seed, fp))
            else:
                outcomes.append(_custom_regression_outcome(scenario, train, test, seed, fp, variant))
        if "nn" in kinds:
            if scenario is Scenario.D:
                source, _ = mlp.train(ds_default, cfg)
                model, _ = mlp.fine_tune(source, train, cfg)
            else:
                model, _ = mlp.train(train, cfg)
            outcomes.append(_nn_outcome(scenario, train, test, seed, fp, model))
    except VbsPowerError as exc:
        raise EvalError(f"scenario {scenario.name}, platform {platform_alias}, seed {seed}: {exc}") from exc
    return ScenarioRun(scenario, platform_alias, seed, test, outcomes)


def run_scenario(scenario, platform_alias: str, seed: int, model_kinds: Iterable[str] = MODEL_FAMILIES, **kwargs):
    """Evaluate one scenario; returns one EvalReport per model family."""
    return evaluate_scenario(scenario, platform_alias, seed, model_kinds, **kwargs).reports


# --------------------------------------------------------------------------
# Report files


def reports_to_csv(reports: Iterable[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def reports_to_json(reports: Iterable[EvalReport], meta: dict | None = None) -> str:
    doc = {"meta": meta or {}, "reports": [r.to_dict() for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def median_by(reports: Iterable[EvalReport], attr: str = "test_rmse_w") -> dict:
    """Median of ``attr`` keyed by (scenario, platform, model_kind)."""
    groups: dict = {}
    for r in reports:
        groups.setdefault((r.scenario, r.platform, r.model_kind), []).append(getattr(r, attr))
    return {k: float(np.median(v)) for k, v in groups.items()}
