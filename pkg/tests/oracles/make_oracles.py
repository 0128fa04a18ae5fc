"""Regenerate tests/data/oracles.json from quadrature that does not import lfpp.

Run from the repository root: ``python tests/oracles/make_oracles.py``.
"""

import json
import math
from pathlib import Path

import numpy as np
from scipy import integrate, special

OUT = Path(__file__).resolve().parents[1] / "data" / "oracles.json"


def bump_raw(r):
    return math.exp(-1.0 / (1.0 - r * r)) if r < 1.0 else 0.0


def bump_constant(d):
    s = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    val, _ = integrate.quad(lambda r: bump_raw(r) ** 2 * r ** (d - 1), 0, 1, epsabs=0, epsrel=1e-13, limit=200)
    return 1.0 / math.sqrt(s * val)


def bump_ft_2d(s, c):
    """2-D radial Fourier transform, convention exp(-2 pi i x.k)."""
    val, _ = integrate.quad(lambda r: c * bump_raw(r) * special.j0(2 * math.pi * s * r) * r, 0, 1,
                            epsabs=1e-15, epsrel=1e-12, limit=400)
    return 2 * math.pi * val


def kappa_hat_2d(eps, k, c, t_max=80.0):
    """int_eps^inf t |b^(t k)|^2 dt in d = 2 (spectrum negligible past s = 80)."""
    f = lambda t: t * bump_ft_2d(t * k, c) ** 2
    pts = np.linspace(eps, t_max / k, 41)
    return sum(integrate.quad(f, a, b, epsabs=1e-16, epsrel=1e-11, limit=200)[0] for a, b in zip(pts, pts[1:]))


def autocorrelation_2d(u, c):
    """A(u) = int b(z) b(z - u e1) dz over R^2."""
    if u >= 2:
        return 0.0
    f = lambda y, x: c * c * bump_raw(math.hypot(x, y)) * bump_raw(math.hypot(x - u, y))
    lo, hi = max(-1.0, u - 1.0), min(1.0, u + 1.0)
    val, _ = integrate.dblquad(f, lo, hi, lambda x: -1.0, lambda x: 1.0, epsabs=1e-13, epsrel=1e-10)
    return val


def kappa_space_2d(eps, R, x, c):
    """kappa_{eps,R}(x) = int_eps^R A(|x| / t) dt / t (space domain)."""
    us = np.linspace(0.0, 2.0, 161)
    A = np.array([autocorrelation_2d(u, c) for u in us])
    from scipy.interpolate import CubicSpline
    spl = CubicSpline(us, A)
    g = lambda t: float(spl(x / t)) / t if x / t < 2 else 0.0
    lo = max(eps, x / 2)
    return integrate.quad(g, lo, R, epsabs=1e-14, epsrel=1e-11, limit=400)[0], float(A[0])


def ball_ft_3d(k):
    """Fourier transform of the unit-ball indicator in R^3 by direct radial quadrature."""
    f = lambda r: 4 * math.pi * r * r * (np.sinc(2 * k * r))
    return integrate.quad(f, 0, 1, epsabs=1e-15, epsrel=1e-13, limit=400)[0]


def main():
    c2 = bump_constant(2)
    c3 = bump_constant(3)
    out = {
        "bump_constant_d2": c2,
        "bump_constant_d3": c3,
        "bump_ft_d2": {str(s): bump_ft_2d(s, c2) for s in (0.0, 0.5, 1.0, 2.0, 5.0)},
        "kappa_hat_d2_eps1_k1": kappa_hat_2d(1.0, 1.0, c2),
        "kappa_hat_d2_eps0.5_k2": kappa_hat_2d(0.5, 2.0, c2),
        "ball_ft_d3": {str(k): ball_ft_3d(k) for k in (0.1, 0.5, 1.0, 2.5)},
    }
    kx, a0 = kappa_space_2d(0.1, 1.0, 0.5, c2)
    out["kappa_space_d2_eps0.1_R1_x0.5"] = kx
    out["autocorrelation_d2_at0"] = a0
    out["kappa_space_d2_eps1_R100_x0"] = math.log(100.0) * a0
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
