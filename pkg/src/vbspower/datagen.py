"""Synthetic measurement campaigns for the default and custom schedulers.

The default scheduler only visits a narrow SNR-to-MCS band (it maps channel
quality to MCS); the custom scheduler visits every feasible (SNR, MCS) pair.
Power comes from the continuous custom-scheduler model plus Gaussian noise
and occasional low-power outliers.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MCS_MAX,
    MCS_MIN,
    SNR_DECIMALS,
    DataError,
    Dataset,
    PlatformProfile,
    Sample,
    Scheduler,
    Source,
)
from .regression import CustomRegParams, InfeasibleError, Variant, custom_curve

MAX_ATTEMPTS = 1000

#: Server-class ground truth, power roughly 20-26 W over the feasible grid.
SERVER_BETA = (20.0, 4.0, 0.05, 0.0, 0.002, 0.05, -0.5, -0.3, -0.02, -2.0, 0.6, 2.0, 0.8)


def _scaled(beta, base, airtime_slope):
    return (base, airtime_slope, *beta[2:])


# NUC boxes idle lower and scale less with airtime; only beta0/beta1 change.
NUC1_BETA = _scaled(SERVER_BETA, 9.0, 2.5)
NUC2_BETA = _scaled(SERVER_BETA, 8.0, 2.0)
SERVER1_BETA = _scaled(SERVER_BETA, 17.5, 3.5)

BUILTIN_PROFILES: dict[str, PlatformProfile] = {
    p.alias: p
    for p in (
        PlatformProfile("NUC1", "BOXNUC8I7BEH, i7-8559U @ 2.70GHz", CustomRegParams(NUC1_BETA)),
        PlatformProfile("NUC2", "NUC7i7DNHE, i7-8650U @ 1.90GHz", CustomRegParams(NUC2_BETA)),
        PlatformProfile("Server1", "Dell XPS 8900 Series, i7-6700 @ 3.40GHz", CustomRegParams(SERVER1_BETA)),
        PlatformProfile("Server2", "Dell Alienware Aurora R5, i7-9700 @ 3.00GHz", CustomRegParams(SERVER_BETA)),
    )
}

#: Default/custom campaign sizes (train + test) per platform.
CAMPAIGN_SIZES: dict[str, tuple[int, int]] = {
    "NUC1": (598, 4955),
    "NUC2": (160, 1091),
    "Server1": (107, 1218),
    "Server2": (107, 705),
}

DEFAULT_AIRTIME_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))


def get_profile(alias: str) -> PlatformProfile:
    try:
        return BUILTIN_PROFILES[alias]
    except KeyError:
        raise DataError(f"unknown platform {alias!r}; built-in: {', '.join(BUILTIN_PROFILES)}") from None


@dataclass(frozen=True)
class GenConfig:
    platform: PlatformProfile
    scheduler: Scheduler
    n_samples: int
    snr_range_db: tuple[float, float] = (0.0, 30.0)
    airtime_grid: tuple[float, ...] = DEFAULT_AIRTIME_GRID
    map_slope: float = 0.93
    map_intercept: float = 0.0
    map_jitter_sigma: float = 0.5
    seed: int = 0
    variant: Variant = field(default=Variant.CONTINUOUS)

    def __post_init__(self):
        object.__setattr__(self, "scheduler", Scheduler(self.scheduler))
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "airtime_grid", tuple(float(v) for v in self.airtime_grid))
        object.__setattr__(self, "snr_range_db", tuple(float(v) for v in self.snr_range_db))
        if self.n_samples <= 0:
            raise DataError("n_samples must be positive")
        lo, hi = self.snr_range_db
        if not lo < hi:
            raise DataError("snr_range_db must satisfy low < high")
        if lo < 0:
            raise DataError("snr_range_db must be nonnegative")
        grid = self.airtime_grid
        if not grid or any(not 0.0 < v <= 1.0 for v in grid):
            raise DataError("airtime grid values must lie in (0, 1]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DataError("airtime grid must be strictly increasing")

    def to_dict(self) -> dict:
        prof = self.platform
        return {
            "platform": {
                "alias": prof.alias,
                "description": prof.description,
                "oracle_params": prof.oracle_params.to_dict(),
                "noise_sigma_w": prof.noise_sigma_w,
                "outlier_prob": prof.outlier_prob,
                "outlier_range_w": list(prof.outlier_range_w),
            },
            "scheduler": self.scheduler.value,
            "n_samples": self.n_samples,
            "snr_range_db": list(self.snr_range_db),
            "airtime_grid": list(self.airtime_grid),
            "map_slope": self.map_slope,
            "map_intercept": self.map_intercept,
            "map_jitter_sigma": self.map_jitter_sigma,
            "seed": self.seed,
            "variant": self.variant.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GenConfig:
        d = dict(d)
        prof = d.pop("platform")
        if isinstance(prof, str):
            profile = get_profile(prof)
        else:
            prof = dict(prof)
            prof["oracle_params"] = CustomRegParams.from_dict(prof["oracle_params"])
            prof["outlier_range_w"] = tuple(prof.get("outlier_range_w", (4.0, 8.0)))
            profile = PlatformProfile(**prof)
        for key in ("snr_range_db", "airtime_grid"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(platform=profile, **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def oracle_power(p: CustomRegParams, a, c, m, variant: Variant = Variant.CONTINUOUS) -> float:
    """Noiseless ground-truth power for a feasible (airtime, SNR, MCS) point."""
    if not c > float(p.c_min(m)):
        raise InfeasibleError(f"snr {c:g} dB infeasible at mcs {m} (c_min={float(p.c_min(m)):g})")
    return float(custom_curve(p.beta, Variant(variant), a, c, m))


def _rng(seed: int, scheduler: Scheduler) -> np.random.Generator:
    tag = 0 if scheduler is Scheduler.DEFAULT else 1
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))


def _any_feasible(p: CustomRegParams, hi: float) -> bool:
    return any(hi > float(p.c_min(mv)) for mv in range(MCS_MIN, MCS_MAX + 1))


def generate(cfg: GenConfig) -> Dataset:
    """Draw ``cfg.n_samples`` samples; fully determined by ``cfg.seed``.

    SNR values are quantized to the CSV resolution (0.01 dB) before power is
    evaluated so that CSV round-trips keep the inputs exact.
    """
    prof = cfg.platform
    beta = prof.oracle_params
    lo, hi = cfg.snr_range_db
    if not _any_feasible(beta, hi):
        raise DataError(f"snr range {cfg.snr_range_db} is infeasible for every MCS")
    rng = _rng(cfg.seed, cfg.scheduler)
    grid = np.asarray(cfg.airtime_grid)
    out_lo, out_hi = prof.outlier_range_w

    samples = []
    for i in range(cfg.n_samples):
        for _ in range(MAX_ATTEMPTS):
            if cfg.scheduler is Scheduler.DEFAULT:
                snr = round(float(rng.uniform(lo, hi)), SNR_DECIMALS)
                target = cfg.map_slope * snr + cfg.map_intercept + rng.normal(0.0, cfg.map_jitter_sigma)
                mcs = int(np.clip(np.rint(target), MCS_MIN, MCS_MAX))
            else:
                mcs = int(rng.integers(MCS_MIN, MCS_MAX + 1))
                snr = round(float(rng.uniform(lo, hi)), SNR_DECIMALS)
            if snr > float(beta.c_min(mcs)):
                break
        else:
            raise DataError(f"no feasible configuration after {MAX_ATTEMPTS} attempts (sample {i})")
        airtime = float(grid[rng.integers(len(grid))])

        power = oracle_power(beta, airtime, snr, mcs, cfg.variant)
        if power <= 0.0:
            raise DataError(
                f"oracle power {power:.4f} W is not positive at airtime={airtime}, snr={snr}, mcs={mcs}; "
                f"the {cfg.variant.value} curve of profile {prof.alias!r} is unphysical there"
            )
        if prof.noise_sigma_w > 0:
            power += float(rng.normal(0.0, prof.noise_sigma_w))
        if prof.outlier_prob > 0 and rng.random() < prof.outlier_prob:
            power = float(rng.uniform(out_lo, out_hi))
        samples.append(Sample(airtime, snr, mcs, power, cfg.scheduler, prof.alias))
    return Dataset(tuple(samples), prof.alias, cfg.scheduler, seed=cfg.seed, source=Source.SYNTHETIC)


def default_campaign(platform_alias: str, seed: int) -> tuple[Dataset, Dataset]:
    """Default- and custom-scheduler datasets sized like the reference campaigns.

    Outliers are injected into the custom campaign only; the default campaign
    keeps Gaussian noise alone.
    """
    profile = get_profile(platform_alias)
    n_default, n_custom = CAMPAIGN_SIZES[platform_alias]
    default_profile = dataclasses.replace(profile, outlier_prob=0.0)
    ds_default = generate(GenConfig(default_profile, Scheduler.DEFAULT, n_default, seed=seed))
    ds_custom = generate(GenConfig(profile, Scheduler.CUSTOM, n_custom, seed=seed))
    return ds_default, ds_custom
