"""Wave parameters, dispersion roots, vertical modes and the parity bands."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CutOff, ObliqueAngleTooLarge

DEFAULT_MODES = 12


def _bisect(f, lo, hi, rtol=1e-14):
    flo = f(lo)
    if flo == 0:
        return lo
    while hi - lo > rtol * max(abs(lo), abs(hi), 1e-300):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _polish(f, df, x, lo, hi, steps=2):
    for _ in range(steps):
        d = df(x)
        if d == 0:
            break
        x_new = x - f(x) / d
        if lo <= x_new <= hi:
            x = x_new
    return x


def propagating_root(nu, h):
    """Positive root kappa of kappa * tanh(kappa * h) = nu."""
    if math.isinf(h):
        return nu
    t = math.tanh(nu * h)
    lo, hi = nu, nu / t
    f = lambda k: k * math.tanh(k * h) - nu
    df = lambda k: math.tanh(k * h) + k * h / math.cosh(k * h) ** 2
    return _polish(f, df, _bisect(f, lo, hi), lo, hi)


def evanescent_roots(nu, h, M):
    """kappa_n in ((n - 1/2) pi / h, n pi / h) with kappa tan(kappa h) = -nu."""
    # kappa sin + nu cos has the same zeros and no poles
    f = lambda k: k * math.sin(k * h) + nu * math.cos(k * h)
    df = lambda k: math.sin(k * h) * (1 - nu * h) + k * h * math.cos(k * h)
    roots = []
    for n in range(1, M + 1):
        lo, hi = (n - 0.5) * math.pi / h, n * math.pi / h
        roots.append(_polish(f, df, _bisect(f, lo, hi), lo, hi))
    return np.array(roots)


def paper_ell0(ell, h):
    """Root of ell0 * tanh(ell0 * h) = ell, the form quoted with the theory.

    Kept only for comparison; see ``WaveParameters.ell0``.
    """
    return propagating_root(ell, h)


@dataclass(frozen=True)
class WaveParameters:
    """Frequency-dependent parameters for one (omega, k) pair.

    ``ell`` is the deep-water cross-plane wavenumber sqrt(nu^2 - k^2);
    ``ell0`` the outgoing x-wavenumber actually used, sqrt(kappa0^2 - k^2)
    with kappa0 tanh(kappa0 h) = nu (equal to ``ell`` in deep water).
    ``deep`` marks a finite ``depth`` that stands in for infinite depth.
    """

    omega: float
    k: float
    g: float
    depth: float
    nu: float
    ell: float
    kappa0: float
    ell0: float
    evanescent: np.ndarray
    ell0_alt: float
    deep: bool = False

    @property
    def finite(self):
        return not math.isinf(self.depth)

    @property
    def outgoing_wavenumber(self):
        return self.ell0 if self.finite else self.ell

    @property
    def n_modes(self):
        return len(self.evanescent)

    def with_depth(self, depth, modes=None, deep=True):
        """Same frequency on a finite (artificial) depth."""
        return make_wave_parameters(
            self.omega, self.k, self.g, depth,
            modes=self.n_modes if modes is None else modes, deep=deep,
        )


def make_wave_parameters(omega, k, g, depth=math.inf, modes=DEFAULT_MODES, deep=False):
    if not omega > 0:
        raise ValueError("omega must be positive")
    if not g > 0:
        raise ValueError("g must be positive")
    if k < 0:
        raise ValueError("k must be non-negative")
    nu = omega * omega / g
    if k >= nu:
        raise ObliqueAngleTooLarge(f"k = {k:g} >= nu = {nu:g}")
    ell = math.sqrt((nu - k) * (nu + k))
    if math.isinf(depth):
        return WaveParameters(omega, k, g, depth, nu, ell, nu, ell, np.zeros(0), ell, deep)
    kappa0 = propagating_root(nu, depth)
    if kappa0 <= k:
        raise CutOff(f"kappa0 = {kappa0:g} <= k = {k:g} at depth {depth:g}")
    ell0 = math.sqrt((kappa0 - k) * (kappa0 + k))
    ev = evanescent_roots(nu, depth, modes)
    return WaveParameters(omega, k, g, depth, nu, ell, kappa0, ell0, ev, paper_ell0(ell, depth), deep)


def effective_depth(depth, nu, draft):
    """Depth of the artificial bottom replacing deep water: max(10/nu, 3 b0)."""
    if not math.isinf(depth):
        return depth
    return max(10.0 / nu, 3.0 * draft)


class VerticalModes:
    """Orthonormal vertical eigenfunctions on (-h, 0) for one parameter set.

    Mode 0 is ``cosh(kappa0 (y + h))`` (outgoing, x-dependence
    ``exp(i ell0 |x|)``); mode n >= 1 is ``cos(kappa_n (y + h))`` decaying as
    ``exp(-sqrt(kappa_n^2 + k^2) |x|)``. ``beta`` holds the factor ``d/d|x|``
    applies to each mode, i.e. ``i ell0`` and ``-sqrt(kappa_n^2 + k^2)``.
    """

    def __init__(self, params: WaveParameters, M=None):
        if not params.finite:
            raise ValueError("vertical modes need a finite depth")
        M = params.n_modes if M is None else M
        if M > params.n_modes:
            params = params.with_depth(params.depth, modes=M, deep=params.deep)
        self.params = params
        self.h = params.depth
        self.kappa = np.concatenate([[params.kappa0], params.evanescent[:M]])
        k2 = params.k ** 2
        self.beta = np.concatenate([
            [1j * params.ell0],
            -np.sqrt(self.kappa[1:] ** 2 + k2),
        ])
        h, K0 = self.h, params.kappa0
        # stable normalisation of cosh: divide through by exp(kappa0 h) / 2
        self._n0 = math.sqrt((1 - math.exp(-4 * K0 * h)) / (2 * K0) + 2 * h * math.exp(-2 * K0 * h))
        kn = self.kappa[1:]
        self._nn = np.sqrt(h / 2 + np.sin(2 * kn * h) / (4 * kn))

    def __len__(self):
        return len(self.kappa)

    def __call__(self, y):
        """Mode values, shape (M + 1, len(y))."""
        y = np.asarray(y, dtype=float)
        K0, h = self.kappa[0], self.h
        f0 = (np.exp(K0 * y) + np.exp(-K0 * (y + 2 * h))) / self._n0
        fn = np.cos(self.kappa[1:, None] * (y[None, :] + h)) / self._nn[:, None]
        return np.vstack([f0[None, :], fn])

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        K0, h = self.kappa[0], self.h
        d0 = K0 * (np.exp(K0 * y) - np.exp(-K0 * (y + 2 * h))) / self._n0
        kn = self.kappa[1:, None]
        dn = -kn * np.sin(kn * (y[None, :] + h)) / self._nn[:, None]
        return np.vstack([d0[None, :], dn])

    def surface_profile(self):
        """cosh(kappa0 (y + h)) / cosh(kappa0 h) expressed in mode 0: its coefficient."""
        K0, h = self.kappa[0], self.h
        return self._n0 / (1 + math.exp(-2 * K0 * h))


def vertical_modes(params: WaveParameters, M=DEFAULT_MODES):
    return VerticalModes(params, M)


class BandInfo(NamedTuple):
    omega_minus: bool
    omega_plus: bool
    m: int
    ell_b: float


def band_classifier(params_or_ell, b) -> BandInfo:
    """Classify ell * b against the half-period bands of the parity results.

    Omega_minus: pi m <= ell b <= pi (2m + 1) / 2.
    Omega_plus:  pi (2m + 1) / 2 <= ell b <= pi (m + 1).
    Finite depth uses ell0. At common endpoints both hold; ``m`` is then the
    Omega_minus index.
    """
    if isinstance(params_or_ell, WaveParameters):
        ell = params_or_ell.ell0 if (params_or_ell.finite and not params_or_ell.deep) else params_or_ell.ell
    else:
        ell = float(params_or_ell)
    if b <= 0:
        raise ValueError("half spacing b must be positive")
    x = ell * b
    return classify_ell_b(x)


def classify_ell_b(x):
    pi = math.pi
    base = int(math.floor(x / pi))
    minus = plus = None
    for m in (base - 1, base, base + 1):
        if m < 0:
            continue
        if minus is None and pi * m <= x <= pi * (2 * m + 1) / 2:
            minus = m
        if plus is None and pi * (2 * m + 1) / 2 <= x <= pi * (m + 1):
            plus = m
    m = minus if minus is not None else plus
    return BandInfo(minus is not None, plus is not None, -1 if m is None else m, x)
