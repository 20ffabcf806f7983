"""Model size profiles: parameter counts and file sizes under pruning.

The measured size curve for four reference network architectures ships as a
CSV resource (one row per architecture and pruning rate, with the accuracy
and timing columns kept as metadata).  ``pruned_size`` answers "how big is a
checkpoint of profile X pruned at rate d" from that curve, interpolating
linearly between measured rates.  A synthetic ``toy`` profile covers the
built-in centroid learner.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources

__all__ = ["PruneCurvePoint", "ModelSizeProfile", "get_profile", "profile_names", "pruned_size"]


@dataclass(frozen=True)
class PruneCurvePoint:
    params_millions: float
    file_mb: float
    acc_orig_pct: float | None = None
    acc_pruned_pct: float | None = None
    acc_drop_pct: float | None = None
    retrain_s: float | None = None
    prune_s: float | None = None


@dataclass(frozen=True)
class ModelSizeProfile:
    name: str
    base_params_millions: float
    base_file_mb: float
    prune_curve: dict[float, PruneCurvePoint] = field(default_factory=dict)
    dataset: str | None = None


def _load_table() -> dict[str, ModelSizeProfile]:
    text = resources.files("edgeunlearn").joinpath("data/pruning_table.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    profiles: dict[str, ModelSizeProfile] = {}
    for row in rows:
        name = row["profile"]
        point = PruneCurvePoint(
            params_millions=float(row["params_m_pruned"]),
            file_mb=float(row["file_mb_pruned"]),
            acc_orig_pct=float(row["acc_orig_pct"]),
            acc_pruned_pct=float(row["acc_pruned_pct"]),
            acc_drop_pct=float(row["acc_drop_pct"]),
            retrain_s=float(row["retrain_s"]),
            prune_s=float(row["prune_s"]),
        )
        if name not in profiles:
            profiles[name] = ModelSizeProfile(
                name=name,
                base_params_millions=float(row["params_m_orig"]),
                base_file_mb=float(row["file_mb_orig"]),
                dataset=row["dataset"],
            )
        profiles[name].prune_curve[float(row["prune_rate"])] = point
    return profiles


def _toy_profile(label_space: int = 10, feature_dim: int = 8) -> ModelSizeProfile:
    params = label_space * feature_dim / 1e6
    file_mb = label_space * feature_dim * 8 / 2**20
    profile = ModelSizeProfile(name="toy", base_params_millions=params, base_file_mb=file_mb)
    for rate in (0.1, 0.3, 0.5, 0.7, 0.9):
        profile.prune_curve[rate] = PruneCurvePoint(
            params_millions=params * (1 - rate),
            file_mb=file_mb * (1 - rate),
        )
    return profile


_PROFILES = _load_table()
_PROFILES["toy"] = _toy_profile()


def profile_names() -> list[str]:
    return sorted(_PROFILES)


def get_profile(name: str) -> ModelSizeProfile:
    try:
        return _PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown model profile {name!r}; known: {profile_names()}") from None


def pruned_size(profile: ModelSizeProfile | str, rate: float) -> tuple[float, float]:
    """Size of ``profile`` pruned at ``rate`` as (params_millions, file_mb).

    Exact at measured rates and at 0 (base size); linear interpolation in
    between.  Rates outside [0, 0.9] are rejected.
    """
    if isinstance(profile, str):
        profile = get_profile(profile)
    if not 0.0 <= rate <= 0.9:
        raise ValueError(f"pruning rate {rate} outside the measured range [0, 0.9]")
    if rate == 0.0:
        return profile.base_params_millions, profile.base_file_mb
    if rate in profile.prune_curve:
        point = profile.prune_curve[rate]
        return point.params_millions, point.file_mb
    xs = [0.0] + sorted(profile.prune_curve)
    sizes = {0.0: (profile.base_params_millions, profile.base_file_mb)}
    sizes.update({r: (p.params_millions, p.file_mb) for r, p in profile.prune_curve.items()})
    for lo, hi in zip(xs, xs[1:]):
        if lo <= rate <= hi:
            w = (rate - lo) / (hi - lo)
            p0, f0 = sizes[lo]
            p1, f1 = sizes[hi]
            return p0 + w * (p1 - p0), f0 + w * (f1 - f0)
    raise ValueError(f"pruning rate {rate} outside the profile's curve")
