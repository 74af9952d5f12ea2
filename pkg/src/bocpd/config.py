"""Flat ``key = value`` run configuration.

Grammar: one ``key = value`` per line, ``#`` starts a comment, keys are
case-sensitive, unknown keys are rejected.

==================  ==========================================================
key                 meaning
==================  ==========================================================
model               ``gaussian_mean`` | ``gaussian_scale`` | ``poisson``
prior_mean          gaussian_mean: prior mean of the unknown mean
prior_std           gaussian_mean: prior standard deviation of the unknown mean
noise_std           gaussian_mean: known observation standard deviation
prior_a, prior_b    gaussian_scale / poisson: Gamma shape and rate
hazard              ``constant`` | ``geometric`` (both need ``hazard_lambda``)
                    or ``table`` (needs ``gap_table``)
hazard_lambda       timescale of the geometric gap, ``H = 1/hazard_lambda``
gap_table           two-column ``g, probability`` file, relative to the config
boundary            ``reset`` (default) | ``survival``
survival_horizon    optional; default is the smallest tau with S(tau) < 1e-6
truncation          tail-mass threshold in [0, 1); default 0 (off)
length              simulate only: number of points to generate
==================  ==========================================================
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .engine import DetectorConfig
from .errors import ConfigError
from .hazard import ConstantHazard, GapDistribution, GapHazard, GeometricGap, HazardFunction, read_gap_table
from .models import ConjugateModel, GaussianMean, GaussianScale, PoissonRate

MODEL_KEYS = {
    "gaussian_mean": ("prior_mean", "prior_std", "noise_std"),
    "gaussian_scale": ("prior_a", "prior_b"),
    "poisson": ("prior_a", "prior_b"),
}
KNOWN_KEYS = {
    "model", "prior_mean", "prior_std", "noise_std", "prior_a", "prior_b",
    "hazard", "hazard_lambda", "gap_table", "boundary", "survival_horizon",
    "truncation", "length",
}


@dataclass
class RunConfig:
    detector: DetectorConfig
    gap: GapDistribution
    length: Optional[int] = None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate config key '{key}'")
        values[key] = value
    return values


def _require(values: dict[str, str], key: str) -> str:
    try:
        return values[key]
    except KeyError:
        raise ConfigError(f"missing config key '{key}'") from None


def _number(values, key, cast=float):
    raw = _require(values, key)
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"config key '{key}': cannot parse {raw!r}") from None


def build_model(values: dict[str, str]) -> ConjugateModel:
    name = _require(values, "model")
    if name not in MODEL_KEYS:
        raise ConfigError(f"unknown model {name!r}; expected one of {', '.join(MODEL_KEYS)}")
    if name == "gaussian_mean":
        return GaussianMean(
            prior_mean=_number(values, "prior_mean"),
            prior_var=_number(values, "prior_std") ** 2,
            noise_var=_number(values, "noise_std") ** 2,
        )
    cls = GaussianScale if name == "gaussian_scale" else PoissonRate
    return cls(a=_number(values, "prior_a"), b=_number(values, "prior_b"))


def build_hazard(values: dict[str, str], base_dir: Path) -> tuple[HazardFunction, GapDistribution]:
    kind = _require(values, "hazard")
    if kind in ("constant", "geometric"):
        lam = _number(values, "hazard_lambda")
        hazard = ConstantHazard(lam) if kind == "constant" else GapHazard(GeometricGap(lam))
        return hazard, GeometricGap(lam)
    if kind == "table":
        path = base_dir / _require(values, "gap_table")
        try:
            gap = read_gap_table(path)
        except OSError as exc:
            raise ConfigError(f"cannot read gap table {path}: {exc.strerror}") from None
        return GapHazard(gap), gap
    raise ConfigError(f"unknown hazard {kind!r}; expected constant, geometric or table")


def build_config(values: dict[str, str], base_dir: Path = Path(".")) -> RunConfig:
    model = build_model(values)
    hazard, gap = build_hazard(values, base_dir)
    horizon = _number(values, "survival_horizon", int) if "survival_horizon" in values else None
    truncation = _number(values, "truncation") if "truncation" in values else 0.0
    length = _number(values, "length", int) if "length" in values else None
    detector = DetectorConfig(
        hazard=hazard,
        model=model,
        boundary=values.get("boundary", "reset"),
        survival_horizon=horizon,
        truncation_threshold=truncation,
    )
    return RunConfig(detector, gap, length)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(parse_config_text(text, str(path)), path.parent)
