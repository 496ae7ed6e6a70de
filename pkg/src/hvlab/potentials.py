"""Radial interaction potentials, assumption checks and mean-field evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np
from scipy import integrate, special

from .core import (
    CapabilityError,
    ConfigurationError,
    NumericError,
    SpatialGrid,
)


class SingularityError(NumericError):
    pass


class DivergenceError(NumericError):
    pass


def _as_lib(lib):
    return np if lib is None else lib


@dataclass(frozen=True)
class RadialPotential:
    """A radial interaction ``V(|x|)`` with derivatives up to third order.

    ``value(r, lib)`` must work with numpy arrays (``lib=np``) and with mpmath
    scalars (``lib=mpmath``); the latter powers the finite-difference fallback.
    ``closed_derivative(r, m)`` returns the m-th radial derivative or ``None``
    when no closed form is known.
    """

    name: str
    value: Callable = field(repr=False)
    closed_derivative: Callable | None = field(default=None, repr=False)
    singular_at_zero: bool = False
    params: tuple = ()

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.value(r, np)

    def derivative(self, r, m: int):
        if m == 0:
            return self(r)
        if self.closed_derivative is not None:
            out = self.closed_derivative(np.asarray(r, dtype=float), m)
            if out is not None:
                return out
        return self.fd_derivative(r, m)

    def fd_derivative(self, r, m: int, dps: int = 40):
        """High-precision central differences (mpmath.diff, step scaled with r)."""
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        out = np.empty_like(flat)
        with mpmath.workdps(dps):
            for i, ri in enumerate(flat):
                f = lambda s: self.value(s, mpmath)  # noqa: E731
                h = mpmath.mpf(ri) * mpmath.mpf(10) ** (-dps // 4)
                out[i] = float(mpmath.diff(f, mpmath.mpf(ri), m, h=h))
        return out.reshape(r.shape)

    def param(self, key, default=None):
        return dict(self.params).get(key, default)

    def regularized(self, eps: float) -> "RadialPotential":
        """Potential ``V(sqrt(r^2 + eps^2))`` (no closed derivatives)."""
        if eps <= 0:
            return self
        lib_sqrt = lambda lib, x: lib.sqrt(x)  # noqa: E731
        base = self.value
        return RadialPotential(
            name=f"{self.name}_reg",
            value=lambda r, lib=np: base(lib_sqrt(_as_lib(lib), r * r + eps * eps), lib),
            singular_at_zero=False,
            params=self.params + (("regularization_eps", eps),),
        )


def _coulomb(strength=1.0):
    def value(r, lib=np):
        return strength / r

    def deriv(r, m):
        return strength * (-1) ** m * math.factorial(m) / r ** (m + 1)

    return RadialPotential("coulomb", value, deriv, True, (("strength", strength),))


def _inverse_power(a=1.0, strength=1.0):
    if not 0 < a < 3:
        raise ConfigurationError(f"inverse_power exponent must lie in (0, 3), got {a}")

    def value(r, lib=np):
        return strength * r ** (-a)

    def deriv(r, m):
        coef = 1.0
        for j in range(m):
            coef *= -a - j
        return strength * coef * r ** (-a - m)

    return RadialPotential("inverse_power", value, deriv, True, (("a", a), ("strength", strength)))


def _yukawa(mu=1.0, strength=1.0):
    if mu <= 0:
        raise ConfigurationError("yukawa screening mu must be positive")

    def value(r, lib=np):
        return strength * lib.exp(-mu * r) / r

    def deriv(r, m):
        total = 0.0
        for k in range(m + 1):
            total = total + math.comb(m, k) * (-mu) ** (m - k) * (-1) ** k * math.factorial(k) * r ** (-1.0 - k)
        return strength * np.exp(-mu * r) * total

    return RadialPotential("yukawa", value, deriv, True, (("mu", mu), ("strength", strength)))


def _gaussian(width=1.0, strength=1.0):
    if width <= 0:
        raise ConfigurationError("gaussian width must be positive")

    def value(r, lib=np):
        return strength * lib.exp(-((r / width) ** 2))

    def deriv(r, m):
        u = r / width
        return strength * (-1) ** m * special.eval_hermite(m, u) * np.exp(-u * u) / width ** m

    return RadialPotential("gaussian", value, deriv, False, (("strength", strength), ("width", width)))


def _soft_coulomb(eps=1.0, strength=1.0):
    if eps <= 0:
        raise ConfigurationError("soft_coulomb eps must be positive")
    e2 = eps * eps

    def value(r, lib=np):
        return strength / lib.sqrt(r * r + e2)

    def deriv(r, m):
        q = r * r + e2
        if m == 1:
            return -strength * r * q ** -1.5
        if m == 2:
            return strength * (2 * r * r - e2) * q ** -2.5
        if m == 3:
            return -3 * strength * r * (2 * r * r - 3 * e2) * q ** -3.5
        return None

    return RadialPotential("soft_coulomb", value, deriv, False, (("eps", eps), ("strength", strength)))


def _zero():
    def value(r, lib=np):
        return 0 * r

    def deriv(r, m):
        return np.zeros_like(r)

    return RadialPotential("zero", value, deriv, False, ())


_FACTORIES = {
    "coulomb": (_coulomb, {"strength"}),
    "inverse_power": (_inverse_power, {"a", "strength"}),
    "yukawa": (_yukawa, {"mu", "strength"}),
    "gaussian": (_gaussian, {"width", "strength"}),
    "soft_coulomb": (_soft_coulomb, {"eps", "strength"}),
    "zero": (_zero, set()),
}

BUILTIN_POTENTIALS = tuple(n for n in _FACTORIES if n != "zero")


def make_potential(name: str, **params) -> RadialPotential:
    try:
        factory, allowed = _FACTORIES[name]
    except KeyError:
        raise ConfigurationError(f"unknown potential {name!r}; choose from {sorted(_FACTORIES)}") from None
    extra = set(params) - allowed
    if extra:
        raise ConfigurationError(f"potential {name!r} does not take parameters {sorted(extra)}")
    return factory(**params)


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------

LIMIT_PROBES = (1e2, 1e3, 1e4)


@dataclass(frozen=True)
class AssumptionReport:
    passes_a: bool
    passes_b: bool
    passes_c: bool
    limits: dict
    c_integral: float
    c_error: float
    delta: float
    k: float
    notes: tuple = ()

    @property
    def passes(self) -> bool:
        return self.passes_a and self.passes_b and self.passes_c


def _limit_is_zero(values: np.ndarray) -> bool:
    a = np.abs(values)
    if not np.all(np.isfinite(a)):
        return False
    if np.any(np.diff(a) > 0):
        return False
    if a[-1] < 1e-6:
        return True
    # power-law decay towards zero rather than a plateau
    slope = math.log(a[-1] / a[-2]) / math.log(LIMIT_PROBES[-1] / LIMIT_PROBES[-2])
    return slope <= -0.5


def _c_integrand(V: RadialPotential, delta: float):
    def f(r):
        d2 = V.derivative(np.array([r]), 2)[0]
        d3 = V.derivative(np.array([r]), 3)[0]
        val = abs(r * r * d3 - r * d2) * r ** (4.5 - delta)
        if not math.isfinite(val):
            raise SingularityError(f"derivative evaluation failed at r={r:.6g}")
        return val

    return f


def c_integral(V: RadialPotential, delta: float, k: float, max_shells: int = 60, rtol: float = 1e-10):
    """Integral of ``|r^2 V''' - r V''| r^(9/2 - delta)`` over (0, k].

    The interval is split in dyadic shells ``[k 2^-(j+1), k 2^-j]``; once the
    shell contributions decay geometrically the remaining tail is summed in
    closed form.  Returns ``(value, error_estimate)``.
    """
    f = _c_integrand(V, delta)
    total = 0.0
    err = 0.0
    shells = []
    hi = k
    for _ in range(max_shells):
        lo = hi / 2
        val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
        total += val
        err += e
        shells.append(val)
        hi = lo
        if len(shells) >= 6:
            s = np.array(shells[-4:])
            if np.all(s == 0):
                return total, err
            if np.all(s[1:] > 0) and np.all(s[:-1] > 0):
                q = s[1:] / s[:-1]
                if np.all(q < 0.95) and np.ptp(q) < 1e-2 * max(q.max(), 1e-300):
                    ratio = q[-1]
                    tail = shells[-1] * ratio / (1 - ratio)
                    if abs(tail) <= rtol * abs(total) or len(shells) > 12:
                        return total + tail, err + abs(tail) * 1e-3 + 1e-15 * abs(total)
    s = np.array(shells[-4:])
    if np.all(s > 0) and np.all(s[1:] / s[:-1] >= 0.95):
        raise DivergenceError(
            f"assumption c) integral diverges near r=0 (shell ratio {s[-1] / s[-2]:.4g} at r={hi:.3g})"
        )
    return total, err


def check_assumptions(V: RadialPotential, delta: float, k: float) -> AssumptionReport:
    if not 0 < delta <= 1.5:
        raise ValueError(f"delta must lie in (0, 3/2], got {delta}")
    if k <= 0:
        raise ValueError("radius cutoff k must be positive")
    notes = []

    # a) finite derivatives on a log-spaced radius scan away from the origin
    scan = np.logspace(-3, 4, 57)
    passes_a = True
    with np.errstate(all="ignore"):
        for m in range(4):
            vals = V.derivative(scan, m)
            bad = ~np.isfinite(vals)
            if np.any(bad):
                passes_a = False
                notes.append(f"V^({m}) not finite at r={scan[bad][0]:.3g}")

    # b) r^m V^(m)(r) -> 0
    probes = np.array(LIMIT_PROBES)
    limits = {}
    passes_b = True
    with np.errstate(all="ignore"):
        for m in range(4):
            vals = probes ** m * V.derivative(probes, m)
            ok = _limit_is_zero(vals)
            limits[m] = tuple(float(v) for v in vals)
            if not ok:
                passes_b = False
                notes.append(f"r^{m} V^({m}) does not vanish at infinity")

    # c) weighted integral near the origin
    try:
        val, err = c_integral(V, delta, k)
        passes_c = math.isfinite(val) and err <= 1e-6 * max(abs(val), 1e-300)
        if not passes_c:
            notes.append(f"assumption c) quadrature not converged (error {err:.3g})")
    except DivergenceError as exc:
        val, err, passes_c = math.inf, math.inf, False
        notes.append(str(exc))
    return AssumptionReport(passes_a, passes_b, passes_c, limits, val, err, delta, k, tuple(notes))


# ---------------------------------------------------------------------------
# Periodized kernels and the mean field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicKernel:
    values: np.ndarray = field(repr=False)
    grid: SpatialGrid
    regularization: str

    @property
    def spectrum(self) -> np.ndarray:
        return np.fft.fftn(self.values) * self.grid.cell_volume


def cell_average_at_origin(V: RadialPotential, h: float) -> float:
    """Average of ``V(|x|)`` over the cube ``[-h/2, h/2]^3``.

    The cube is cut into six pyramids with apex at the origin; in each one
    ``(y, z) = x (s, t)`` so the singular radial factor integrates cleanly.
    """

    def radial(s, t):
        c = math.sqrt(1 + s * s + t * t)
        return integrate.quad(lambda x: V(np.array(x * c)) * x * x, 0, h / 2, limit=200)[0]

    quarter = integrate.dblquad(lambda t, s: radial(s, t), 0, 1, 0, 1, epsabs=1e-13, epsrel=1e-11)[0]
    return 6 * 4 * quarter / h ** 3


def periodized_kernel(V: RadialPotential, grid: SpatialGrid, eps: float = 0.0) -> PeriodicKernel:
    """Sample ``V`` at the minimal-image length of every grid offset (offset 0 at index 0)."""
    r = np.fft.ifftshift(grid.radius())
    if eps > 0:
        vals = V(np.sqrt(r * r + eps * eps))
        reg = f"softened r -> sqrt(r^2 + {eps:g}^2)"
    elif V.singular_at_zero:
        if grid.dim != 3:
            raise ConfigurationError(
                f"potential {V.name!r} is singular at 0; a regularization eps > 0 is required in d={grid.dim}"
            )
        vals = np.empty(grid.shape)
        nz = r > 0
        vals[nz] = V(r[nz])
        vals[~nz] = cell_average_at_origin(V, grid.dx)
        reg = "cell average at the singular node"
    else:
        vals = V(r)
        reg = "none"
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericError(f"kernel of {V.name!r} is not finite on the grid")
    vals.setflags(write=False)
    return PeriodicKernel(vals, grid, reg)


def spectral_gradient(f: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Gradient of a real periodic grid function, shape ``(d, *grid.shape)``."""
    fh = np.fft.fftn(f)
    k = grid.wavenumbers()
    n = grid.points
    k = k.copy()
    k[n // 2] = 0.0
    out = []
    for ax in range(grid.dim):
        sh = [1] * grid.dim
        sh[ax] = n
        out.append(np.real(np.fft.ifftn(1j * k.reshape(sh) * fh)))
    return np.array(out)


def convolve(kernel: PeriodicKernel, rho: np.ndarray) -> np.ndarray:
    return np.real(np.fft.ifftn(kernel.spectrum * np.fft.fftn(rho)))


def mean_field(
    V: RadialPotential | PeriodicKernel,
    rho: np.ndarray,
    grid: SpatialGrid,
    force_sign: int = -1,
    eps: float = 0.0,
):
    """Return ``(U, F)`` with ``U = V * rho`` periodized and ``F = force_sign * grad U``."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != grid.shape:
        raise ValueError(f"density shape {rho.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(rho)):
        raise NumericError("density contains non-finite values")
    kernel = V if isinstance(V, PeriodicKernel) else periodized_kernel(V, grid, eps)
    U = convolve(kernel, rho)
    F = force_sign * spectral_gradient(U, grid)
    return U, F


def direct_convolution(V: RadialPotential, rho: np.ndarray, grid: SpatialGrid, eps: float = 0.0) -> np.ndarray:
    """O(n^2) periodic summation over node pairs (d=1), an oracle for the spectral path."""
    x = grid.nodes
    sep = np.abs(grid.minimal_image(x[:, None] - x[None, :]))
    if eps > 0:
        sep = np.sqrt(sep * sep + eps * eps)
    return V(sep) @ rho * grid.dx
