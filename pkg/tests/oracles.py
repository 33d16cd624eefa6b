"""Independent reference computations shared by the tests."""
import math

import numpy as np
from scipy import integrate
from scipy.special import gamma


def ball_newton(r, R, n):
    """Matched radial solution of -Delta u = 1_B_R: A - r^2/(2n) inside, C r^(2-n) outside."""
    A = R ** 2 / (2 * (n - 2))
    C = R ** n / (n * (n - 2))
    return np.where(r <= R, A - r ** 2 / (2 * n), C * np.maximum(r, R) ** (2 - n))


def sphere_mean_kernel(r, rho, n, s):
    """Integral over the unit sphere of |r e - rho w|^(-s) dw."""
    area = 2 * math.pi ** ((n - 1) / 2) / gamma((n - 1) / 2)
    f = lambda th: (r * r + rho * rho - 2 * r * rho * math.cos(th)) ** (-s / 2) * math.sin(th) ** (n - 2)
    val, _ = integrate.quad(f, 0.0, math.pi, epsabs=0, epsrel=1e-11, limit=200)
    return area * val


def kernel_quadrature(density, r, n, m):
    """gamma_nm * integral |x - y|^(2m - n) density(|y|) dy at |x| = r."""
    s = n - 2 * m
    cnm = gamma(n / 2 - m) / (4 ** m * math.pi ** (n / 2) * gamma(m))
    knots = [float(k) for k in density.knots]
    pts = sorted(set(knots + [r]))
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        g = lambda rho: rho ** (n - 1) * float(density.value(rho)) * sphere_mean_kernel(r, rho, n, s)
        val, _ = integrate.quad(g, a, b, epsabs=0, epsrel=1e-10, limit=200)
        total += val
    return cnm * total
