"""Reference answers computed without the bit-level machinery.

Grid masses come from exact antiderivatives (for exponential-polynomial
densities) or from scipy's QUADPACK wrapper (anything else), so they share no
numerical code with the compiler or the piecewise fitter.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import mpmath
import numpy as np
from scipy import integrate

from .bdd import FALSE, TRUE
from .compiler import GeneralizedGamma, MixedGamma
from .core import InferenceContext
from .fixedpoint import BitVectorDist

MAX_ORACLE_BITS = 24
MAX_CLOSURE_BITS = 12


class OracleSizeError(ValueError):
    pass


@dataclass
class NaiveDiscretization:
    masses: np.ndarray
    ll: float
    ul: float

    @property
    def bits(self) -> int:
        return int(self.masses.size).bit_length() - 1

    @property
    def grid(self) -> np.ndarray:
        n = self.masses.size
        return self.ll + (self.ul - self.ll) * np.arange(n) / n

    def as_dict(self) -> dict[float, float]:
        return {float(v): float(m) for v, m in zip(self.grid, self.masses)}

    def mean(self) -> float:
        return math.fsum(self.grid * self.masses)

    def var(self) -> float:
        m = self.mean()
        return math.fsum((self.grid - m) ** 2 * self.masses)

    def coarsen(self, bits: int) -> "NaiveDiscretization":
        """Sum adjacent cells down to 2^bits cells."""
        k = self.masses.size // (1 << bits)
        return NaiveDiscretization(self.masses.reshape(-1, k).sum(axis=1), self.ll, self.ul)


# --------------------------------------------------------- exact antiderivative
def _power_exp_integral(k: int, beta, t):
    """Integral of s^k e^{beta s} over [0, t], by integration by parts."""
    if beta == 0:
        return t ** (k + 1) / (k + 1)
    acc = mpmath.expm1(beta * t) / beta
    for j in range(1, k + 1):
        acc = (t ** j * mpmath.exp(beta * t) - j * acc) / beta
    return acc


def gamma_cell_masses(alpha: int, beta: float, b: int, width: float = 1.0) -> np.ndarray:
    """Cell masses of t^alpha e^{beta t} on [0, width) split into 2^b cells."""
    if b > MAX_ORACLE_BITS:
        raise OracleSizeError(f"2^{b} cells exceeds the oracle limit")
    n = 1 << b
    # integration by parts divides by beta once per power; keep enough digits
    lost = 0 if beta == 0 else max(0, int(-math.log10(abs(beta) * width)) + 1) * (alpha + 1)
    with mpmath.workdps(40 + lost):
        bm = mpmath.mpf(beta)
        w = mpmath.mpf(width)
        edges = [_power_exp_integral(alpha, bm, w * i / n) for i in range(n + 1)]
        total = edges[-1]
        out = np.array([float((edges[i + 1] - edges[i]) / total) for i in range(n)])
    return out


def quadrature_cell_masses(f: Callable[[float], float], b: int, ll: float, ul: float) -> np.ndarray:
    if b > MAX_ORACLE_BITS:
        raise OracleSizeError(f"2^{b} cells exceeds the oracle limit")
    n = 1 << b
    step = (ul - ll) / n
    raw = np.empty(n)
    for i in range(n):
        a = ll + i * step
        raw[i] = integrate.quad(f, a, a + step, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    total = math.fsum(raw)
    if not total > 0:
        raise ValueError("density has no mass on the interval")
    return raw / total


def naive_discretize(density, b: int, ll: float = 0.0, ul: float = 1.0) -> NaiveDiscretization:
    """Exact per-cell masses on [ll, ul) with 2^b cells.

    ``density`` may be a GeneralizedGamma or MixedGamma (interpreted in the
    coordinate x - ll, beta per unit of x) or any callable.
    """
    width = ul - ll
    if isinstance(density, GeneralizedGamma):
        density = MixedGamma([density], [1.0])
    if isinstance(density, MixedGamma):
        parts = [a * gamma_cell_masses(c.alpha, c.beta, b, width)
                 for c, a in zip(density.components, density.weights)]
        masses = np.sum(parts, axis=0)
    else:
        masses = quadrature_cell_masses(density, b, ll, ul)
    return NaiveDiscretization(masses, ll, ul)


# ---------------------------------------------------------------- naive closure
def sequential_parameters(masses: Sequence[float]) -> list[float]:
    """Flip i picks value i given that no earlier flip fired."""
    out = []
    remaining = 1.0
    for m in masses[:-1]:
        if remaining <= 0.0:
            out.append(0.0)
            continue
        out.append(min(max(m / remaining, 0.0), 1.0))
        remaining -= m
    return out


def naive_closure(ctx: InferenceContext, masses: Sequence[float], ll: float = 0.0,
                  ul: float = 1.0) -> BitVectorDist:
    """Enumerative encoding with 2^b - 1 flips."""
    n = len(masses)
    b = n.bit_length() - 1
    if n != 1 << b or b < 1:
        raise ValueError("need 2^b masses")
    if b > MAX_CLOSURE_BITS:
        raise OracleSizeError(f"naive closure limited to 2^{MAX_CLOSURE_BITS} values")
    from .compiler import interval_format
    fmt = interval_format(ll, ul - ll, b)
    codes = [fmt.code_of(ll + (ul - ll) * i / n) for i in range(n)]
    flips = [ctx.flip(p).formula for p in sequential_parameters(list(masses))]
    store = ctx.store
    width = fmt.total_bits
    bits = []
    for j in range(width):
        shift = width - 1 - j
        acc = TRUE if (codes[-1] >> shift) & 1 else FALSE
        for i in range(n - 2, -1, -1):
            acc = store.apply_ite(flips[i], TRUE if (codes[i] >> shift) & 1 else FALSE, acc)
        bits.append(acc)
    return BitVectorDist(ctx, fmt, bits)


# ----------------------------------------------------------- analytic posteriors
def conjugate_gaussian(mu0: float, sigma0: float, obs_sigma: float,
                       observations: Iterable[float]) -> tuple[float, float]:
    """Posterior mean and variance of a Gaussian mean under Gaussian noise."""
    prec = 1.0 / sigma0 ** 2
    weighted = mu0 * prec
    for y in observations:
        prec += 1.0 / obs_sigma ** 2
        weighted += y / obs_sigma ** 2
    return weighted / prec, 1.0 / prec


def two_mean_mixture_posterior(data: Sequence[float], weight: float = 2.0 / 3.0,
                               sigma: float = 1.0, ll: float = -16.0, ul: float = 16.0,
                               b_ref: int = 12, rows: int = 256) -> NaiveDiscretization:
    """Marginal posterior of mu1 when each datum is N(mu1) w.p. ``weight`` else N(mu2).

    Both means are uniform on [ll, ul); the joint is enumerated on a 2^b_ref
    grid of cell midpoints, a band of mu1 rows at a time, and summed over mu2.
    """
    if b_ref > 13:
        raise OracleSizeError("dense grid limited to 2^13 per axis")
    n = 1 << b_ref
    step = (ul - ll) / n
    mids = ll + (np.arange(n) + 0.5) * step
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))
    lik = [norm * np.exp(-0.5 * ((d - mids) / sigma) ** 2) for d in data]
    log_marg = np.empty(n)
    for start in range(0, n, rows):
        band = slice(start, min(start + rows, n))
        acc = np.zeros((band.stop - band.start, n))
        for l in lik:
            acc += np.log(weight * l[band, None] + (1.0 - weight) * l[None, :] + 1e-300)
        top = acc.max()
        log_marg[band] = top + np.log(np.exp(acc - top).sum(axis=1))
    marg = np.exp(log_marg - log_marg.max())
    return NaiveDiscretization(marg / math.fsum(marg), ll, ul)


def export_csv(path: str, table: NaiveDiscretization) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "prob"])
        for v, m in zip(table.grid, table.masses):
            w.writerow([repr(float(v)), repr(float(m))])
