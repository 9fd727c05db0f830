"""Manufactured Stokes solution used to drive all benchmark problems.

The velocity is the curl of the stream function phi = cos(pi(2x - y)), hence
divergence free; the pressure is p = sin(2pi(x - y)). The body force matches
the momentum equation -Laplace(u) - grad(p) = f, with the sign-flipped
pressure convention of the symmetric Stokes operator.
"""

from __future__ import annotations

import numpy as np


def stream(x, y):
    return np.cos(np.pi * (2 * x - y))


def velocity(x, y):
    s = np.sin(np.pi * (2 * x - y))
    return np.pi * s, 2 * np.pi * s


def velocity_gradient(x, y):
    """Rows of grad(u): (du1/dx, du1/dy, du2/dx, du2/dy)."""
    c = np.cos(np.pi * (2 * x - y))
    return (
        2 * np.pi**2 * c,
        -(np.pi**2) * c,
        4 * np.pi**2 * c,
        -2 * np.pi**2 * c,
    )


def pressure(x, y):
    return np.sin(2 * np.pi * (x - y))


def pressure_gradient(x, y):
    c = np.cos(2 * np.pi * (x - y))
    return 2 * np.pi * c, -2 * np.pi * c


def body_force(x, y):
    """f = -Laplace(u) - grad(p)."""
    s = np.sin(np.pi * (2 * x - y))
    cp = np.cos(2 * np.pi * (x - y))
    f1 = 5 * np.pi**3 * s - 2 * np.pi * cp
    f2 = 10 * np.pi**3 * s + 2 * np.pi * cp
    return f1, f2


def traction(x, y, normal):
    """t = grad(u).n + p n on a boundary with outward normal ``normal``."""
    g11, g12, g21, g22 = velocity_gradient(x, y)
    p = pressure(x, y)
    nx, ny = normal
    t1 = g11 * nx + g12 * ny + p * nx
    t2 = g21 * nx + g22 * ny + p * ny
    return t1, t2


def mms_fields(x, y):
    """Exact solution bundle at (x, y): (u, p, f, grad_u)."""
    u = velocity(x, y)
    return u, pressure(x, y), body_force(x, y), velocity_gradient(x, y)
