"""Earthquake recurrence, BSSA14 ground-motion model for PGA, and correlated PGA fields."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .validation import ValidationError

MECHANISMS = ("U", "SS", "NS", "RS")


class FactorizationError(RuntimeError):
    """The residual covariance could not be factorized even after jitter."""


@dataclass(frozen=True)
class GmpeCoefficients:
    """BSSA14 coefficients for PGA (period 0 s).

    The defaults are the values used in the reference case study; note that
    ``dc3``, ``c_site``, ``Vc`` and ``dphiV`` differ from the global BSSA14
    PGA row.
    """

    e0: float = 0.4473
    e1: float = 0.4856
    e2: float = 0.2459
    e3: float = 0.4539
    e4: float = 1.431
    e5: float = 0.05053
    e6: float = -0.1662
    Mh: float = 5.5
    c1: float = -1.134
    c2: float = 0.1917
    c3: float = -0.00809
    Mref: float = 4.5
    Rref: float = 1.0
    h: float = 4.5
    dc3: float = 0.00286
    c_site: float = -0.5150
    Vc: float = 925.0
    Vref: float = 760.0
    f1: float = 0.0
    f3: float = 0.1
    f4: float = -0.1500
    f5: float = -0.00701
    R1: float = 110.0
    R2: float = 270.0
    dphiR: float = 0.100
    dphiV: float = 0.084
    V1: float = 225.0
    V2: float = 300.0
    phi: float = 0.495
    tau: float = 0.348

    def __post_init__(self):
        if self.h <= 0 or self.Rref <= 0 or self.Vref <= 0:
            raise ValidationError("gmpe: h, Rref and Vref must be positive")
        if not (self.R1 < self.R2 and self.V1 < self.V2):
            raise ValidationError("gmpe: need R1 < R2 and V1 < V2")
        if self.phi <= 0 or self.tau < 0:
            raise ValidationError("gmpe: need phi > 0 and tau >= 0")


@dataclass(frozen=True)
class SeismicScenario:
    magnitude: float
    fault_p1: tuple[float, float] = (0.0, 50.0)
    fault_p2: tuple[float, float] = (40.0, 60.0)
    seed: int = 0

    def __post_init__(self):
        if not self.magnitude > 0:
            raise ValidationError(f"magnitude must be positive, got {self.magnitude}")


@dataclass
class GroundMotionField:
    site_ids: list
    ln_mean: np.ndarray
    sigma: np.ndarray
    residuals: np.ndarray
    pga_g: np.ndarray


# ------------------------------------------------------------- recurrence


def gr_annual_rate(m, a, b):
    """Mean annual rate of events with magnitude >= *m* (Gutenberg-Richter)."""
    return 10.0 ** (a - b * np.asarray(m, dtype=float))


def gr_exceedance_prob(m, a, b):
    """Poisson probability of at least one event >= *m* in a year."""
    return -np.expm1(-gr_annual_rate(m, a, b))


def magnitude_bin_rates(points, a, b) -> np.ndarray:
    """Annual probability mass assigned to each magnitude grid point.

    Point ``i`` owns ``[M_i, M_{i+1})``; the last point owns the open tail
    ``[M_last, inf)``. The masses telescope to ``gr_exceedance_prob(M_0)``.
    """
    m = np.asarray(points, dtype=float)
    if m.ndim != 1 or m.size == 0:
        raise ValidationError("magnitude grid is empty")
    if np.any(np.diff(m) <= 0):
        raise ValidationError("magnitude grid must be strictly increasing")
    p = gr_exceedance_prob(m, a, b)
    return np.append(p[:-1] - p[1:], p[-1])


# ------------------------------------------------------------- geometry


def joyner_boore_distance(site, fault_p1, fault_p2):
    """Horizontal distance (km) from *site* to the fault trace segment.

    *site* may be a single point or an ``(n, 2)`` array.
    """
    p1 = np.asarray(fault_p1, dtype=float)
    p2 = np.asarray(fault_p2, dtype=float)
    seg = p2 - p1
    seg_len2 = float(seg @ seg)
    if seg_len2 == 0.0:
        raise ValidationError("degenerate fault: endpoints coincide")
    pts = np.atleast_2d(np.asarray(site, dtype=float))
    t = np.clip(((pts - p1) @ seg) / seg_len2, 0.0, 1.0)
    d = np.linalg.norm(pts - (p1 + t[:, None] * seg), axis=1)
    return float(d[0]) if np.ndim(site) == 1 else d


# ------------------------------------------------------------- BSSA14


def _mechanism_term(mechanism, c: GmpeCoefficients):
    try:
        return {"U": c.e0, "SS": c.e1, "NS": c.e2, "RS": c.e3}[mechanism]
    except KeyError:
        raise ValidationError(f"unknown mechanism {mechanism!r}") from None


def magnitude_scaling(m, mechanism, c: GmpeCoefficients):
    dm = m - c.Mh
    base = _mechanism_term(mechanism, c)
    if m <= c.Mh:
        return base + c.e4 * dm + c.e5 * dm * dm
    return base + c.e6 * dm


def distance_scaling(m, r_jb, c: GmpeCoefficients):
    # Geometric spreading carries ln(R/Rref) as in the published model.
    r = np.sqrt(np.asarray(r_jb, dtype=float) ** 2 + c.h ** 2)
    return (c.c1 + c.c2 * (m - c.Mref)) * np.log(r / c.Rref) + (c.c3 + c.dc3) * (r - c.Rref)


def site_term(vs30, pga_rock, c: GmpeCoefficients):
    """ln F_lin + ln F_nl for the given rock PGA (g)."""
    ln_lin = c.c_site * math.log(min(vs30, c.Vc) / c.Vref)
    f2 = c.f4 * (math.exp(c.f5 * (min(vs30, 760.0) - 360.0)) - math.exp(c.f5 * (760.0 - 360.0)))
    ln_nl = c.f1 + f2 * np.log((pga_rock + c.f3) / c.f3)
    return ln_lin + ln_nl


def gmpe_ln_mean(m, r_jb, vs30, mechanism, coeffs: GmpeCoefficients | None = None):
    """Median ln PGA (ln g) from magnitude, distance and site terms."""
    c = coeffs or GmpeCoefficients()
    if vs30 <= 0:
        raise ValidationError("vs30 must be positive")
    fm = magnitude_scaling(m, mechanism, c)
    fd = distance_scaling(m, r_jb, c)
    pga_rock = np.exp(fm + fd)
    return fm + fd + site_term(vs30, pga_rock, c)


def gmpe_sigma(m, r_jb, vs30, coeffs: GmpeCoefficients | None = None):
    """Total aleatory standard deviation of ln PGA."""
    c = coeffs or GmpeCoefficients()
    r = np.asarray(r_jb, dtype=float)
    phi = np.where(
        r <= c.R1,
        c.phi,
        np.where(r <= c.R2, c.phi - c.dphiR * np.log(np.maximum(r, c.R1) / c.R1) / math.log(c.R2 / c.R1),
                 c.phi - c.dphiR),
    )
    if vs30 <= c.V1:
        phi = phi - c.dphiV
    elif vs30 <= c.V2:
        phi = phi - c.dphiV * math.log(c.V2 / vs30) / math.log(c.V2 / c.V1)
    return np.sqrt(phi ** 2 + c.tau ** 2)


# ------------------------------------------------------------- correlation


def correlation_length(m, cap_km=40.0):
    return np.minimum(5.4 + 4.7 * np.asarray(m, dtype=float), cap_km)


def correlation_coeff(d_km, m, cap_km=40.0):
    return np.exp(-3.0 * np.asarray(d_km, dtype=float) / correlation_length(m, cap_km))


def _jittered_cholesky(corr: np.ndarray) -> np.ndarray:
    eye = np.eye(corr.shape[0])
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10
    while jitter <= 1e-6 * (1 + 1e-9):
        try:
            return np.linalg.cholesky(corr + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError("residual correlation matrix is not positive definite after jitter 1e-6")


class FieldSampler:
    """Correlated PGA field generator for one magnitude and a fixed site layout.

    Sites sharing identical coordinates share one residual, so co-located
    components see the same shaking. The factorization is computed once and
    reused for every draw.
    """

    def __init__(self, magnitude, sites, *, fault_p1, fault_p2, vs30=760.0, mechanism="SS",
                 coeffs: GmpeCoefficients | None = None, cap_km=40.0, site_ids=None):
        sites = np.atleast_2d(np.asarray(sites, dtype=float))
        if sites.shape[0] == 0:
            raise ValidationError("at least one site is required")
        self.magnitude = float(magnitude)
        self.site_ids = list(site_ids) if site_ids is not None else list(range(sites.shape[0]))
        uniq, self.inverse = np.unique(sites, axis=0, return_inverse=True)
        self.inverse = self.inverse.ravel()
        self.n_unique = uniq.shape[0]
        c = coeffs or GmpeCoefficients()
        r_jb = joyner_boore_distance(uniq, fault_p1, fault_p2)
        self._ln_mean = np.asarray(gmpe_ln_mean(self.magnitude, r_jb, vs30, mechanism, c), dtype=float)
        self._sigma = np.asarray(gmpe_sigma(self.magnitude, r_jb, vs30, c), dtype=float)
        d = np.linalg.norm(uniq[:, None, :] - uniq[None, :, :], axis=-1)
        corr = correlation_coeff(d, self.magnitude, cap_km)
        self._chol = _jittered_cholesky(corr) * self._sigma[:, None]

    @property
    def ln_mean(self) -> np.ndarray:
        return self._ln_mean[self.inverse]

    @property
    def sigma(self) -> np.ndarray:
        return self._sigma[self.inverse]

    def residuals_from_normals(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals of shape ``(..., n_unique)`` to per-site residuals."""
        eps = z @ self._chol.T
        return eps[..., self.inverse]

    def sample(self, rng: np.random.Generator) -> GroundMotionField:
        eps = self.residuals_from_normals(rng.standard_normal(self.n_unique))
        ln_mean = self.ln_mean
        return GroundMotionField(self.site_ids, ln_mean, self.sigma, eps, np.exp(ln_mean + eps))


def sample_pga_field(scenario: SeismicScenario, sites, vs30=760.0, mechanism="SS",
                     coeffs: GmpeCoefficients | None = None, rng=None, *, cap_km=40.0,
                     site_ids=None) -> GroundMotionField:
    """Draw one spatially correlated PGA field at *sites* for *scenario*.

    When *rng* is None a generator seeded from ``scenario.seed`` is used.
    """
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    sampler = FieldSampler(scenario.magnitude, sites, fault_p1=scenario.fault_p1, fault_p2=scenario.fault_p2,
                           vs30=vs30, mechanism=mechanism, coeffs=coeffs, cap_km=cap_km, site_ids=site_ids)
    return sampler.sample(rng)
