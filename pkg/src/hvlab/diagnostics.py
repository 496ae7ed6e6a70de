"""Inequality monitors, the discrete maximal function and power-law fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import AccuracyWarning, SpatialGrid, warn_accuracy
from .quantum import (
    DensityMatrix,
    commutator_density,
    pair_displacements,
    trace_norm,
)


@dataclass(frozen=True)
class MonitorSample:
    t: float
    lhs: float
    rhs: float
    labels: tuple = ()
    flags: str = ""

    def __post_init__(self):
        if self.lhs < 0 or self.rhs < 0:
            raise ValueError(f"monitor sides must be nonnegative (lhs={self.lhs}, rhs={self.rhs})")

    @property
    def ratio(self) -> float:
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs == 0 else math.inf

    def row(self) -> dict:
        return {"t": self.t, "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio, "flags": self.flags}


# ---------------------------------------------------------------------------
# Maximal function
# ---------------------------------------------------------------------------


def dyadic_radii(grid: SpatialGrid) -> list[float]:
    """``{0} U {dx 2^m <= L/2}``."""
    out = [0.0]
    r = grid.dx
    while r <= grid.length / 2 + 1e-12:
        out.append(r)
        r *= 2
    return out


def _offsets_by_distance(grid: SpatialGrid):
    n, d = grid.points, grid.dim
    o = np.arange(n)
    o = np.where(o > n // 2, o - n, o)  # offset n/2 counted once, at +L/2
    mesh = np.meshgrid(*[o] * d, indexing="ij")
    offs = np.stack([m.ravel() for m in mesh], axis=1)
    dist = np.sqrt(np.sum((offs * grid.dx) ** 2, axis=1))
    order = np.argsort(dist, kind="stable")
    return offs[order], dist[order]


def hl_maximal(f: np.ndarray, grid: SpatialGrid, radii=None) -> np.ndarray:
    """Largest periodic ball average of ``f`` over the radius set, at every node.

    A ball average is the plain mean of ``f`` over the nodes within distance
    ``r`` of the center; radius 0 is the center node alone, so ``f* >= f``.
    """
    f = np.asarray(f, dtype=float).reshape(grid.shape)
    if np.any(f < 0):
        warn_accuracy("hl_maximal: negative entries clipped to 0")
        f = np.maximum(f, 0.0)
    radii = sorted(dyadic_radii(grid) if radii is None else radii)
    offs, dist = _offsets_by_distance(grid)
    axes = tuple(range(grid.dim))
    total = np.zeros(grid.shape)
    count = 0
    best = np.zeros(grid.shape)
    i = 0
    for r in radii:
        while i < len(dist) and dist[i] <= r * (1 + 1e-12):
            total = total + np.roll(f, tuple(-offs[i]), axis=axes)
            count += 1
            i += 1
        if count:
            best = np.maximum(best, total / count)
    return best


def hl_maximal_bruteforce(f: np.ndarray, grid: SpatialGrid, radii=None) -> np.ndarray:
    """Direct scan over centers and radii; an oracle for ``hl_maximal``."""
    f = np.maximum(np.asarray(f, dtype=float).reshape(grid.shape), 0.0)
    radii = dyadic_radii(grid) if radii is None else radii
    coords = np.stack([np.broadcast_to(c, grid.shape).ravel() for c in grid.coordinates()], axis=1)
    flat = f.ravel()
    out = np.empty(flat.shape)
    for z in range(len(flat)):
        sep = grid.minimal_image(coords - coords[z])
        dist = np.sqrt(np.sum(sep ** 2, axis=1))
        best = 0.0
        for r in radii:
            mask = dist <= r * (1 + 1e-12)
            if mask.any():
                best = max(best, float(np.sum(flat[mask])) / int(mask.sum()))
        out[z] = best
    return out.reshape(grid.shape)


# ---------------------------------------------------------------------------
# Commutator inequality at d = 3
# ---------------------------------------------------------------------------


def ball_indicator(grid: SpatialGrid, r: float, z) -> np.ndarray:
    coords = [c for c in grid.coordinates()]
    z = np.asarray(z, dtype=float)
    d2 = sum(grid.minimal_image(c - z[i]) ** 2 for i, c in enumerate(coords))
    return (np.sqrt(d2) <= r * (1 + 1e-12)).astype(float)


def _nearest_node(grid: SpatialGrid, z) -> tuple:
    return tuple(int(round((zi + grid.length / 2) / grid.dx)) % grid.points for zi in z)


@dataclass(frozen=True)
class LemmaCheck:
    samples: tuple
    constant: float
    spread: dict
    passed: bool | None
    lhs_agreement: float
    delta: float


def lemma3_check(dm: DensityMatrix, delta: float, radii=(0.5, 1.0, 2.0), centers=None, spread_limit: float = 3.0) -> LemmaCheck:
    """Compare ``tr|[chi_(r,z), omega]|`` with the maximal-function bound.

    The right side is ``r^(3/2 - 3 delta) sum_i ||rho_i||_1^(1/6 + delta) (rho_i*(z))^(5/6 - delta)``
    with ``rho_i`` the diagonal of ``|[x_i, omega]|``.  The exponents are the
    three-dimensional ones; at other dimensions the comparison is reported
    without a verdict.
    """
    if not 0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    grid = dm.grid
    d = grid.dim
    centers = [tuple([0.0] * d)] if centers is None else [tuple(c) for c in centers]
    disp = pair_displacements(grid)
    dens = [commutator_density(dm, i, disp) for i in range(d)]
    maxf = [hl_maximal(c.rho_abs, grid) for c in dens]
    samples = []
    agreement = 0.0
    for z in centers:
        node = _nearest_node(grid, z)
        for r in radii:
            chi = ball_indicator(grid, r, z).ravel()
            comm = (chi[:, None] - chi[None, :]) * dm.matrix
            lhs = trace_norm(comm, "antihermitian")
            lhs_svd = trace_norm(comm, "general")
            agreement = max(agreement, abs(lhs - lhs_svd) / max(lhs, 1e-300))
            rhs = r ** (1.5 - 3 * delta) * sum(
                c.l1 ** (1 / 6 + delta) * float(m[node]) ** (5 / 6 - delta) for c, m in zip(dens, maxf)
            )
            samples.append(MonitorSample(dm.t, lhs, rhs, (("r", r), ("z", z), ("delta", delta))))
    ratios = [s.ratio for s in samples]
    finite = [q for q in ratios if math.isfinite(q)]
    constant = max(finite) if finite else math.inf
    spread = {}
    for z in centers:
        rz = [s.ratio for s in samples if dict(s.labels)["z"] == z and s.ratio > 0]
        spread[z] = (max(rz) / min(rz)) if rz and all(math.isfinite(q) for q in rz) else math.inf
    if d != 3:
        passed = None
    else:
        passed = all(math.isfinite(q) for q in ratios) and all(v < spread_limit for v in spread.values())
    return LemmaCheck(tuple(samples), constant, spread, passed, agreement, delta)


# ---------------------------------------------------------------------------
# Time-series monitors
# ---------------------------------------------------------------------------


def assumption9_value(dm: DensityMatrix) -> tuple[float, bool]:
    """``sum_i (||rho_i||_1 + ||rho_i||_inf)`` and whether the state is localized."""
    disp = pair_displacements(dm.grid)
    total = 0.0
    local = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        for i in range(dm.grid.dim):
            c = commutator_density(dm, i, disp)
            total += c.l1 + c.linf
            local = local and c.local
    return total, local


def assumption9_monitor(series, threshold: float = 10.0):
    """Ratio ``lhs / (N hbar)`` along a series of density matrices; returns (samples, passed)."""
    samples = []
    for dm in series:
        lhs, local = assumption9_value(dm)
        samples.append(MonitorSample(dm.t, lhs, dm.n_particles * dm.hbar, (), "" if local else "untrusted"))
    passed = bool(samples) and max(s.ratio for s in samples) < threshold
    return samples, passed


@dataclass(frozen=True)
class CheckpointRecord:
    """Scalars measured at one checkpoint of a paired quantum/kinetic run."""

    t: float
    distance: float
    commutator: float
    remainder: float


def _trapezoid_cumulative(t, y):
    out = [0.0]
    for i in range(1, len(t)):
        out.append(out[-1] + 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]))
    return out


ROUNDOFF_FLOOR = 1e-10


def duhamel_monitor(records, hbar: float, tol: float = 0.05, floor: float = ROUNDOFF_FLOOR):
    """Duhamel bound and the commutator/distance ratio along a run.

    Returns ``(duhamel_samples, ratio_samples, passed)`` where ``passed`` means
    ``lhs <= rhs (1 + tol) + floor`` at every checkpoint.  The absolute floor
    absorbs round-off in distances that are zero in exact arithmetic (t = 0);
    ratios are only sampled where the distance exceeds it.
    """
    records = list(records)
    if not records:
        return [], [], True
    t = [r.t for r in records]
    if abs(t[0]) > 1e-12 or any(b <= a for a, b in zip(t, t[1:])):
        raise ValueError("checkpoints must start at t = 0 and increase strictly")
    ic = _trapezoid_cumulative(t, [r.commutator for r in records])
    ib = _trapezoid_cumulative(t, [r.remainder for r in records])
    duh, ratios = [], []
    for r, a, b in zip(records, ic, ib):
        duh.append(MonitorSample(r.t, r.distance, (a + b) / hbar, (("commutator_integral", a / hbar), ("remainder_integral", b / hbar))))
        if r.distance > floor:
            ratios.append(MonitorSample(r.t, r.commutator, hbar * r.distance))
    passed = all(s.lhs <= s.rhs * (1 + tol) + floor for s in duh)
    return duh, ratios, passed


# ---------------------------------------------------------------------------
# Power-law fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    ci: tuple
    residuals: tuple

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)


def scaling_fit(points, n_boot: int = 2000, level: float = 0.95, seed: int = 0) -> ScalingFit:
    """Least squares of ``log value`` on ``log hbar`` with a residual-bootstrap interval."""
    pts = sorted((float(h), float(v)) for h, v in points)
    if len(pts) < 4:
        raise ValueError(f"a scaling fit needs at least 4 points, got {len(pts)}")
    if any(h <= 0 or v <= 0 for h, v in pts):
        raise ValueError("scaling fit requires positive hbar and values")
    x = np.log([h for h, _ in pts])
    y = np.log([v for _, v in pts])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    fitted = A @ coef
    resid = y - fitted
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        yb = fitted + rng.choice(resid, size=len(resid), replace=True)
        boots[b] = np.linalg.lstsq(A, yb, rcond=None)[0][0]
    lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
    return ScalingFit(slope, intercept, (float(lo), float(hi)), tuple(float(r) for r in resid))


@dataclass
class SweepReport:
    hbars: list = field(default_factory=list)
    distance: list = field(default_factory=list)
    remainder: list = field(default_factory=list)
    assumption: list = field(default_factory=list)
    prop1_sup: list = field(default_factory=list)
    duhamel_ok: list = field(default_factory=list)
    distance_fit: ScalingFit | None = None
    remainder_fit: ScalingFit | None = None

    def fit(self) -> None:
        if len(self.hbars) >= 4:
            self.distance_fit = scaling_fit(zip(self.hbars, self.distance))
            self.remainder_fit = scaling_fit(zip(self.hbars, self.remainder))

    def prop1_variation(self) -> float:
        vals = [v for v in self.prop1_sup if math.isfinite(v) and v > 0]
        if not vals:
            return math.inf
        return max(vals) / min(vals)

    def to_dict(self) -> dict:
        def fit_dict(f):
            if f is None:
                return None
            return {"slope": f.slope, "intercept": f.intercept, "constant": f.constant, "ci": list(f.ci), "residuals": list(f.residuals)}

        return {
            "hbar": list(self.hbars),
            "distance_over_n": list(self.distance),
            "sup_remainder_over_n": list(self.remainder),
            "assumption_ratio": list(self.assumption),
            "prop1_sup_ratio": list(self.prop1_sup),
            "duhamel_holds": list(self.duhamel_ok),
            "distance_fit": fit_dict(self.distance_fit),
            "remainder_fit": fit_dict(self.remainder_fit),
            "prop1_variation": self.prop1_variation() if self.prop1_sup else None,
        }
