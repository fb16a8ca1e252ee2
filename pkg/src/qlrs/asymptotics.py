"""Large-system limit BER curves for equal-power random spreading.

Linear receivers are Gaussian in the limit, so their BER is Q(sqrt(SIR))
with the limit SIR:

* matched filter: ``A^2 / (sigma^2 + alpha A^2)``
* decorrelator:   ``(1 - alpha) A^2 / sigma^2`` (alpha < 1 only)
* MMSE:           the positive root of ``b = A^2 / (sigma^2 + alpha A^2 / (1 + b))``

The jointly optimal (maximum likelihood) detector uses the replica-symmetric
zero-temperature fixed point of the statistical-mechanics analysis: with
``x = sqrt(SIR)``,

    x^2 (sigma^2 / A^2 + 4 alpha Q(x)) = 1,

whose solutions have ground-state energy ``(1 - 2 alpha x phi(x))^2 / (2 alpha x^2)``
(per user, in units of A^2).  Above a critical load there are three
solutions; the lowest-energy one among those with ``2 alpha x phi(x) < 1``
is reported and all of them are kept on the point.
"""

from dataclasses import dataclass, field
from math import erfc, exp, isfinite, log10, pi, sqrt

import numpy as np
from scipy import special

SQRT2 = sqrt(2.0)


def q_function(x):
    """Gaussian tail probability P(Z > x)."""
    if np.ndim(x) == 0:
        return 0.5 * erfc(float(x) / SQRT2)
    return 0.5 * special.erfc(np.asarray(x, dtype=np.float64) / SQRT2)


def _phi(x):
    return exp(-0.5 * x * x) / sqrt(2.0 * pi)


def single_user_ber(snr_db):
    """BER of an isolated unit-amplitude user, Q(10^(snr_db/20))."""
    return q_function(10.0 ** (snr_db / 20.0))


def _sigma2(snr_db):
    return 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class LimitPoint:
    alpha: float
    snr_db: float
    detector: str
    ber: float
    sir: float
    multiplicity: int = 1
    flag: str = ""
    residual: float = 0.0
    roots: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if isfinite(self.ber) and not (0.0 <= self.ber <= 0.5):
            raise ValueError(f"limit BER {self.ber} outside [0, 0.5]")
        if self.sir < 0:
            raise ValueError("SIR must be non-negative")


def _single_user_point(alpha, snr_db, detector, flag=""):
    return LimitPoint(alpha, snr_db, detector, single_user_ber(snr_db),
                      10.0 ** (snr_db / 10.0), flag=flag)


def mf_limit_ber(alpha, snr_db, A=1.0):
    if alpha == 0:
        return _single_user_point(alpha, snr_db, "mf")
    sir = A**2 / (_sigma2(snr_db) + alpha * A**2)
    return LimitPoint(alpha, snr_db, "mf", q_function(sqrt(sir)), sir)


def decorr_limit_ber(alpha, snr_db, A=1.0):
    """Decorrelator limit; undefined (BER 0.5, flagged) for alpha >= 1."""
    if alpha == 0:
        return _single_user_point(alpha, snr_db, "decorrelator")
    if alpha >= 1:
        return LimitPoint(alpha, snr_db, "decorrelator", 0.5, 0.0, flag="undefined")
    sir = (1.0 - alpha) * A**2 / _sigma2(snr_db)
    return LimitPoint(alpha, snr_db, "decorrelator", q_function(sqrt(sir)), sir)


def bisect(f, lo, hi, tol=0.0, maxiter=400):
    """Root of ``f`` in [lo, hi] (sign change required), halving to float resolution."""
    flo = f(lo)
    if flo == 0:
        return lo
    if np.sign(flo) == np.sign(f(hi)):
        raise ValueError("no sign change on the bracket")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = f(mid)
        if fm == 0 or abs(fm) <= tol:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mmse_fixed_point_residual(sir, alpha, snr_db, A=1.0):
    return A**2 / (_sigma2(snr_db) + alpha * A**2 / (1.0 + sir)) - sir


def mmse_limit_ber(alpha, snr_db, A=1.0):
    """MMSE limit from the effective-interference fixed point."""
    if alpha == 0:
        return _single_user_point(alpha, snr_db, "mmse")
    f = lambda b: mmse_fixed_point_residual(b, alpha, snr_db, A)
    sir = bisect(f, 0.0, A**2 / _sigma2(snr_db))
    return LimitPoint(alpha, snr_db, "mmse", q_function(sqrt(sir)), sir, residual=abs(f(sir)))


def _gml_equation(x, alpha, s2):
    return x * x * (s2 + 4.0 * alpha * q_function(x)) - 1.0


def gml_ground_energy(x, alpha):
    return (1.0 - 2.0 * alpha * x * _phi(x)) ** 2 / (2.0 * alpha * x * x)


def tanaka_gml_limit_ber(alpha, snr_db, A=1.0, grid=4000):
    """Replica-symmetric limit BER of the jointly optimal detector.

    Every solution found on a log grid of SIR values is returned in
    ``roots`` as ``(sir, ber, energy, stable)``; ``multiplicity`` counts
    them. Flagged "experimental"; "nonconverged" if no admissible solution.
    """
    if alpha == 0:
        return _single_user_point(alpha, snr_db, "gml", flag="experimental")
    s2 = _sigma2(snr_db) / A**2
    f = lambda x: _gml_equation(x, alpha, s2)
    x_max = 1.0 / sqrt(s2)
    sirs = np.logspace(-8, 2 * log10(x_max), grid)
    xs = np.sqrt(sirs)
    xs[-1] = x_max
    vals = xs * xs * (s2 + 4.0 * alpha * q_function(xs)) - 1.0
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]:
        x = bisect(f, xs[i], xs[i + 1])
        stable = 2.0 * alpha * x * _phi(x) < 1.0
        roots.append((x * x, q_function(x), gml_ground_energy(x, alpha), stable))
    admissible = [r for r in roots if r[3]]
    if not admissible:
        return LimitPoint(alpha, snr_db, "gml", float("nan"), 0.0, len(roots),
                          "nonconverged", roots=tuple(roots))
    best = min(admissible, key=lambda r: r[2])
    x = sqrt(best[0])
    return LimitPoint(alpha, snr_db, "gml", best[1], best[0], len(roots), "experimental",
                      residual=abs(f(x)), roots=tuple(roots))


LIMITS = {
    "mf": mf_limit_ber,
    "decorrelator": decorr_limit_ber,
    "mmse": mmse_limit_ber,
    "gml": tanaka_gml_limit_ber,
}


def limit_curves(alphas, snrs, tanaka=False):
    """Limit points on the (alpha, SNR) grid; the ML curve only with ``tanaka``."""
    names = [n for n in LIMITS if tanaka or n != "gml"]
    return [LIMITS[n](float(a), float(s)) for a in alphas for s in snrs for n in names]
