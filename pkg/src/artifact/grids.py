"""Sampling grids on S2 and SO(3), quadrature weights, and rotations.

Grid layout for bandlimit L (all angles float64):

* S2: 2L x 2L equiangular grid, theta_j = pi*(2j+1)/(4L) (no points on the
  poles), phi_k = pi*k/L.  Signals are indexed [theta, phi].
* SO(3): 2L x 2L x 2L with alpha_i = pi*i/L, beta_j as above,
  gamma_k = pi*k/L.  Signals are indexed [alpha, beta, gamma].

Quadrature: the alpha/phi/gamma directions are exact by the trapezoid rule on
the circle; the beta/theta direction uses the classic equiangular weights
built from an odd-sine sum, which integrate every polynomial of degree
< 2L in cos(beta) exactly.  Ring weights fold the azimuthal step in, so
sum_jk w_j f_jk approximates the S2 integral (total weight 4*pi) and the
SO(3) weights carry total mass 8*pi^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


def _check_bandlimit(num_degrees: int) -> int:
    n = int(num_degrees)
    if n < 1:
        raise ValueError(f"bandlimit must be a positive integer, got {num_degrees}")
    return n


def beta_quadrature_weights(num_degrees: int) -> np.ndarray:
    """Weights q_j with sum_j q_j g(cos beta_j) = integral_{-1}^{1} g(x) dx
    for every polynomial g of degree < 2L.  Shape (2L,), all positive."""
    L = _check_bandlimit(num_degrees)
    j = np.arange(2 * L)
    beta = np.pi * (2 * j + 1) / (4 * L)
    k = np.arange(L)
    odd = 2 * k + 1
    # sum over odd frequencies sin((2k+1)*beta)/(2k+1)
    series = np.sin(np.outer(beta, odd)) @ (1.0 / odd)
    return (2.0 / L) * np.sin(beta) * series


@dataclass(frozen=True)
class S2Grid:
    """Driscoll-Healy style 2L x 2L grid with per-ring quadrature weights."""

    num_degrees: int
    thetas: np.ndarray = field(repr=False)
    phis: np.ndarray = field(repr=False)
    ring_weights: np.ndarray = field(repr=False)  # includes the phi step

    @property
    def shape(self) -> tuple[int, int]:
        n = 2 * self.num_degrees
        return (n, n)

    def quadrature(self, values: np.ndarray) -> np.ndarray:
        """Integrate samples over S2 (sum over the trailing two axes)."""
        return np.einsum("...jk,j->...", np.asarray(values), self.ring_weights)


@dataclass(frozen=True)
class So3Grid:
    """2L x 2L x 2L Euler-angle grid with per-beta-ring weights."""

    num_degrees: int
    alphas: np.ndarray = field(repr=False)
    betas: np.ndarray = field(repr=False)
    gammas: np.ndarray = field(repr=False)
    beta_weights: np.ndarray = field(repr=False)  # includes both circle steps

    @property
    def shape(self) -> tuple[int, int, int]:
        n = 2 * self.num_degrees
        return (n, n, n)

    def quadrature(self, values: np.ndarray) -> np.ndarray:
        """Integrate samples over SO(3) (sum over the trailing three axes)."""
        return np.einsum("...ijk,j->...", np.asarray(values), self.beta_weights)


@lru_cache(maxsize=64)
def make_s2_grid(num_degrees: int) -> S2Grid:
    L = _check_bandlimit(num_degrees)
    j = np.arange(2 * L)
    thetas = np.pi * (2 * j + 1) / (4 * L)
    phis = np.pi * j / L
    w = (np.pi / L) * beta_quadrature_weights(L)
    for a in (thetas, phis, w):
        a.setflags(write=False)
    return S2Grid(L, thetas, phis, w)


@lru_cache(maxsize=64)
def make_so3_grid(num_degrees: int) -> So3Grid:
    L = _check_bandlimit(num_degrees)
    j = np.arange(2 * L)
    alphas = np.pi * j / L
    betas = np.pi * (2 * j + 1) / (4 * L)
    gammas = np.pi * j / L
    w = (np.pi / L) ** 2 * beta_quadrature_weights(L)
    for a in (alphas, betas, gammas, w):
        a.setflags(write=False)
    return So3Grid(L, alphas, betas, gammas, w)


@dataclass(frozen=True)
class KernelSupportGrid:
    """Euler-angle support points for a localized kernel around the identity.

    Points live in the geodesic ball beta <= beta_max (beta strictly
    positive), ordered lexicographically by (beta, alpha, gamma).  The
    (alpha, beta, gamma) axes are a product grid, which the kernel-spectrum
    builder exploits.
    """

    beta_max: float
    counts: tuple[int, int, int]  # (n_alpha, n_beta, n_gamma)
    points: np.ndarray = field(repr=False)  # (N, 3) euler angles

    def __len__(self) -> int:
        return self.points.shape[0]


def make_kernel_support_grid(
    beta_max: float, counts: tuple[int, int, int]
) -> KernelSupportGrid:
    """Product support grid: beta in (0, beta_max], alpha and gamma full
    circles.  n_gamma = 1 collapses gamma to {0} (used by kernels on S2)."""
    n_alpha, n_beta, n_gamma = (int(c) for c in counts)
    if min(n_alpha, n_beta, n_gamma) < 1:
        raise ValueError(f"support counts must be positive, got {counts}")
    if not 0.0 < beta_max <= np.pi:
        raise ValueError(f"beta_max must lie in (0, pi], got {beta_max}")
    betas = beta_max * np.arange(1, n_beta + 1) / n_beta
    alphas = 2.0 * np.pi * np.arange(n_alpha) / n_alpha
    gammas = 2.0 * np.pi * np.arange(n_gamma) / n_gamma
    pts = np.empty((n_beta * n_alpha * n_gamma, 3))
    idx = 0
    for b in betas:
        for a in alphas:
            for g in gammas:
                pts[idx] = (a, b, g)
                idx += 1
    pts.setflags(write=False)
    return KernelSupportGrid(float(beta_max), (n_alpha, n_beta, n_gamma), pts)


def euler_to_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotation matrix Z(alpha) Y(beta) Z(gamma), shape (3, 3)."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    return np.array(
        [
            [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
            [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
            [-sb * cg, sb * sg, cb],
        ]
    )


def matrix_to_euler(rot: np.ndarray) -> tuple[float, float, float]:
    """ZYZ Euler angles of a rotation matrix.

    Ranges alpha, gamma in [0, 2*pi), beta in [0, pi].  At the gimbal-lock
    configurations beta = 0 or pi only alpha + gamma (resp. alpha - gamma)
    is defined; the convention here is gamma := 0.
    """
    rot = np.asarray(rot, dtype=np.float64)
    cb = float(np.clip(rot[2, 2], -1.0, 1.0))
    beta = float(np.arccos(cb))
    # sin(beta) from the stable pair of entries, not from sqrt(1-cb^2)
    sb = float(np.hypot(rot[0, 2], rot[1, 2]))
    if sb < 1e-12:
        gamma = 0.0
        if cb > 0:
            alpha = float(np.arctan2(rot[1, 0], rot[0, 0]))
        else:
            alpha = float(np.arctan2(-rot[1, 0], rot[1, 1]))
    else:
        alpha = float(np.arctan2(rot[1, 2], rot[0, 2]))
        gamma = float(np.arctan2(rot[2, 1], -rot[2, 0]))
    twopi = 2.0 * np.pi
    return (alpha % twopi, beta, gamma % twopi)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation matrix: alpha, gamma ~ U[0, 2pi), cos(beta) ~ U[-1, 1]."""
    alpha = rng.uniform(0.0, 2.0 * np.pi)
    gamma = rng.uniform(0.0, 2.0 * np.pi)
    beta = np.arccos(rng.uniform(-1.0, 1.0))
    return euler_to_matrix(alpha, beta, gamma)
