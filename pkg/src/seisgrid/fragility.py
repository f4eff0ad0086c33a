"""Lognormal fragility curves, damage-state sampling and damage-to-functionality mapping."""
from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import ndtr

from .validation import ValidationError

if TYPE_CHECKING:
    from .config_io import FragilityTable, PowerNetworkModel
    from .hazard import GroundMotionField

DAMAGE_STATES = ("slight", "moderate", "extensive", "complete")

# Residual functionality per damage state 0..4.
DEFAULT_MAPPING: dict[str, tuple[float, ...]] = {
    "bus": (1.0, 1.0, 0.0, 0.0, 0.0),
    "generator": (1.0, 0.75, 0.5, 0.25, 0.0),
    "load": (1.0, 0.75, 0.5, 0.25, 0.0),
    "substation": (1.0, 0.75, 0.5, 0.25, 0.0),
}


@dataclass(frozen=True)
class FragilityCurveSet:
    """Medians (g) and log-standard deviations for Slight..Complete."""

    medians: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        if len(self.medians) != 4 or len(self.betas) != 4:
            raise ValidationError("need exactly four damage-state curves")
        if any(not m > 0 for m in self.medians):
            raise ValidationError(f"medians must be positive, got {self.medians}")
        if any(b >= a for a, b in zip(self.medians[1:], self.medians[:-1])):
            raise ValidationError(f"medians must increase from Slight to Complete, got {self.medians}")
        if any(not b > 0 for b in self.betas):
            raise ValidationError(f"betas must be positive, got {self.betas}")

    def scaled(self, factor: float) -> FragilityCurveSet:
        return FragilityCurveSet(tuple(m * factor for m in self.medians), self.betas)


def _exceedance(pga, medians, betas):
    pga = np.asarray(pga, dtype=float)
    with np.errstate(divide="ignore"):
        z = (np.log(pga)[..., None] - np.log(medians)) / betas
    # Curves with unequal betas may cross; cap each state by the one below it.
    return np.minimum.accumulate(ndtr(z), axis=-1)


def exceedance_probs(pga_g, curves: FragilityCurveSet) -> np.ndarray:
    """P(DS >= k | PGA) for k = Slight..Complete."""
    return _exceedance(pga_g, np.asarray(curves.medians), np.asarray(curves.betas))


def states_from_exceedance(p: np.ndarray, u) -> np.ndarray:
    """Damage state 0..4 given exceedance probabilities ``(..., 4)`` and draws ``u``.

    State k is assigned when ``P_{k+1} <= u < P_k`` (``P_0 = 1``, ``P_5 = 0``),
    so a draw landing exactly on a boundary takes the less damaged state and
    ``Pr[ds = k] = P_k - P_{k+1}`` for ``u ~ U[0, 1)``.
    """
    return np.sum(np.asarray(u)[..., None] < p, axis=-1).astype(np.int8)


def sample_damage_state(pga_g: float, curves: FragilityCurveSet, u: float) -> int:
    if not 0.0 <= u < 1.0:
        raise ValidationError(f"u must lie in [0, 1), got {u}")
    return int(states_from_exceedance(exceedance_probs(pga_g, curves), u))


def functionality_ratio(cls: str, ds: int, mapping: Mapping[str, tuple] = DEFAULT_MAPPING) -> float:
    if cls not in mapping:
        raise ValidationError(f"unknown component class {cls!r}")
    if not 0 <= ds <= 4:
        raise ValidationError(f"damage state must be 0..4, got {ds}")
    return float(mapping[cls][ds])


@dataclass
class ComponentFragility:
    """Fragility parameters resolved per component (canonical network order)."""

    labels: list[str]
    classes: list[str]
    medians: np.ndarray  # (n, 4)
    betas: np.ndarray  # (n, 4)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown component {label!r}") from None

    def with_scaled_medians(self, label: str, factor: float) -> ComponentFragility:
        i = self.index(label)
        med = self.medians.copy()
        med[i] *= factor
        return ComponentFragility(self.labels, self.classes, med, self.betas)

    def with_constant(self, medians, betas=None) -> ComponentFragility:
        """Every component gets the same four curves (used for degenerate checks)."""
        med = np.broadcast_to(np.asarray(medians, dtype=float), self.medians.shape).copy()
        bet = self.betas if betas is None else np.broadcast_to(np.asarray(betas, float), self.betas.shape).copy()
        return ComponentFragility(self.labels, self.classes, med, bet)

    def exceedance(self, pga_g) -> np.ndarray:
        return _exceedance(pga_g, self.medians, self.betas)

    def fingerprint(self) -> bytes:
        return self.medians.tobytes() + self.betas.tobytes()


def _plan_labels(plan, labels: list[str]) -> set[str]:
    if plan is None:
        return set()
    if hasattr(plan, "selected"):
        plan = plan.selected
    if isinstance(plan, np.ndarray) and plan.dtype != object:
        if plan.shape != (len(labels),):
            raise ValidationError(f"plan vector must have length {len(labels)}")
        return {lb for lb, x in zip(labels, plan) if x}
    chosen = set(plan)
    unknown = chosen - set(labels)
    if unknown:
        raise ValidationError(f"unknown component id(s) in plan: {sorted(unknown)}")
    return chosen


def apply_retrofit(table: FragilityTable, plan, network: PowerNetworkModel) -> ComponentFragility:
    """Resolve per-component curves; components in *plan* take the retrofitted set.

    *plan* may be None, an iterable of component labels, a binary vector over
    the canonical component order, or an object with a ``selected`` attribute.
    """
    labels = network.component_labels()
    chosen = _plan_labels(plan, labels)
    classes = [lb.split(":", 1)[0] for lb in labels]
    med = np.empty((len(labels), 4))
    bet = np.empty((len(labels), 4))
    for i, (lb, cls) in enumerate(zip(labels, classes)):
        curves = (table.retrofitted if lb in chosen else table.baseline)[cls]
        med[i] = curves.medians
        bet[i] = curves.betas
    return ComponentFragility(labels, classes, med, bet)


def alpha_lookup(classes: Iterable[str], mapping: Mapping[str, tuple] = DEFAULT_MAPPING) -> np.ndarray:
    """Per-component table ``(n, 5)`` of functionality by damage state."""
    return np.array([mapping[c] for c in classes], dtype=float)


@dataclass
class DamageRealization:
    labels: list[str]
    ds: np.ndarray  # int8, 0..4
    alpha: np.ndarray

    def as_dict(self) -> dict[str, tuple[int, float]]:
        return {lb: (int(d), float(a)) for lb, d, a in zip(self.labels, self.ds, self.alpha)}


def damage_from_draws(pga_g, u, fragility: ComponentFragility, table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized damage states and functionality for pga/u arrays ``(..., n)``."""
    ds = states_from_exceedance(fragility.exceedance(pga_g), u)
    alpha = np.take_along_axis(np.broadcast_to(table, ds.shape + (5,)), ds[..., None].astype(np.intp), -1)[..., 0]
    return ds, alpha


def realize_damage(field: GroundMotionField, fragility: ComponentFragility,
                   mapping: Mapping[str, tuple] = DEFAULT_MAPPING, rng=None, *, u=None) -> DamageRealization:
    """Sample one damage state per component given a PGA field.

    Each component receives its own uniform draw; spatial dependence enters
    only through the PGA values. Pass *u* to supply the draws explicitly.
    """
    n = len(fragility.labels)
    if len(field.pga_g) != n:
        raise ValidationError(f"field covers {len(field.pga_g)} sites, fragility has {n} components")
    if u is None:
        u = rng.random(n)
    ds, alpha = damage_from_draws(field.pga_g, u, fragility, alpha_lookup(fragility.classes, mapping))
    return DamageRealization(list(fragility.labels), ds, alpha)
