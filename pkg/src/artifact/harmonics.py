"""Representation kernels: spherical harmonics and Wigner d/D matrices.

Conventions, fixed once for the whole package:

* ZYZ Euler angles: R(alpha, beta, gamma) = Z(alpha) Y(beta) Z(gamma),
  alpha, gamma in [0, 2*pi), beta in [0, pi].
* Complex spherical harmonics Y_lm with Condon-Shortley phase,
  Y_00 = 1/sqrt(4*pi).
* Wigner D in the factored form
  D^l_{mn}(alpha, beta, gamma) = exp(-i*m*alpha) d^l_{mn}(beta) exp(-i*n*gamma)
  with the real orthogonal Wigner little-d.

Under these choices the rotation law reads
  Y_lm(R x) = sum_n conj(D^l_{mn}(R)) Y_ln(x),
which downstream code treats as the single source of truth for how spectra
rotate.

Everything is float64/complex128.  The little-d matrices are built by a
three-term recurrence in l at fixed (m, n); the boundary entries |m| = l or
|n| = l come from a closed form evaluated with log-gamma so nothing overflows
at high degree (the naive half-angle product formula dies around l ~ 30).
"""

from __future__ import annotations

import numpy as np


def s2_mode_count(num_degrees: int) -> int:
    """Number of (l, m) pairs with l < num_degrees: exactly num_degrees**2."""
    return num_degrees * num_degrees


def s2_index(ell: int, m: int) -> int:
    """Position of mode (ell, m) in the packed S2 layout l*l + l + m."""
    return ell * ell + ell + m


def legendre_table(num_degrees: int, theta: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre values for all l < num_degrees.

    Returns an array of shape (num_degrees**2, len(theta)) whose row
    s2_index(l, m) holds
        Lambda_lm(theta) = Y_lm(theta, phi=0)  (real),
    so Y_lm(theta, phi) = row * exp(i*m*phi).  Rows for m < 0 follow from
    Lambda_{l,-m} = (-1)^m Lambda_{l,m}.

    Uses the standard fully normalized upward recurrence in l at fixed m,
    which is stable far beyond the degrees used here.
    """
    theta = np.asarray(theta, dtype=np.float64)
    ct, st = np.cos(theta), np.sin(theta)
    L = int(num_degrees)
    out = np.zeros((L * L, theta.size), dtype=np.float64)

    # diagonal seed Lambda_mm, then one off-diagonal step, then recurrence up
    diag = np.full(theta.size, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(L):
        if m > 0:
            # includes the Condon-Shortley sign
            diag = -np.sqrt((2 * m + 1) / (2.0 * m)) * st * diag
        prev2 = None
        prev = diag
        out[s2_index(m, m)] = prev
        if m > 0:
            out[s2_index(m, -m)] = (-1) ** m * prev
        for ell in range(m + 1, L):
            if prev2 is None:
                cur = np.sqrt(2 * m + 3.0) * ct * prev
            else:
                a = np.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
                b = np.sqrt(
                    ((2.0 * ell + 1.0) * (ell - 1 + m) * (ell - 1 - m))
                    / ((2.0 * ell - 3.0) * (ell * ell - m * m))
                )
                cur = a * ct * prev - b * prev2
            out[s2_index(ell, m)] = cur
            if m > 0:
                out[s2_index(ell, -m)] = (-1) ** m * cur
            prev2, prev = prev, cur
    return out


def sph_harm_matrix(num_degrees: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Y_lm at arbitrary points, packed: shape (num_degrees**2, npts) complex.

    Row order matches s2_index.  Intended for quadrature oracles, kernel
    atoms and point evaluation; the grid transforms use the separable
    FFT/Legendre path instead.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    lam = legendre_table(num_degrees, theta)
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(num_degrees)])
    return lam * np.exp(1j * ms[:, None] * phi[None, :])


def spherical_harmonic(ell: int, m: int, theta, phi) -> np.ndarray:
    """Single-mode Y_lm evaluated pointwise (arrays broadcast)."""
    if not 0 <= abs(m) <= ell:
        raise ValueError(f"invalid mode (l={ell}, m={m})")
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    shape = np.broadcast_shapes(theta.shape, phi.shape)
    tt = np.broadcast_to(theta, shape).ravel()
    pp = np.broadcast_to(phi, shape).ravel()
    lam = legendre_table(ell + 1, tt)[s2_index(ell, m)]
    return (lam * np.exp(1j * m * pp)).reshape(shape)


def _binom_sqrt(ell: int, k: np.ndarray) -> np.ndarray:
    """sqrt(C(2l, l+k)) via log factorials; never overflows."""
    lf = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1.0, 2 * ell + 1)))))
    ki = np.asarray(k, dtype=np.int64)
    return np.exp(0.5 * (lf[2 * ell] - lf[ell + ki] - lf[ell - ki]))


def _pow_nonneg(base: np.ndarray, expo: np.ndarray) -> np.ndarray:
    """base**expo elementwise; exponents are >= 0 and numpy gives 0**0 = 1."""
    return np.power(base, expo)


def wigner_d_stack(num_degrees: int, beta: np.ndarray) -> list[np.ndarray]:
    """Wigner little-d matrices d^l(beta) for all l < num_degrees.

    Returns a list indexed by l of arrays with shape (2l+1, 2l+1, len(beta)),
    axes (m, n, beta), m and n running -l..l.  Stable at l = 64 and beyond,
    including beta at or near 0 and pi.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    nb = beta.size
    x = np.cos(beta)
    c = np.cos(beta / 2.0)
    s = np.sin(beta / 2.0)

    stack: list[np.ndarray] = []
    if num_degrees <= 0:
        return stack
    stack.append(np.ones((1, 1, nb)))

    for ell in range(1, num_degrees):
        cur = np.empty((2 * ell + 1, 2 * ell + 1, nb))
        if ell == 1:
            cur[1, 1] = x
        else:
            # interior |m|, |n| <= l-1 by the three-term recurrence in l
            prev = stack[ell - 1]
            prev2 = np.zeros_like(prev)
            prev2[1:-1, 1:-1] = stack[ell - 2]
            m = np.arange(-(ell - 1), ell, dtype=np.float64)[:, None, None]
            n = np.arange(-(ell - 1), ell, dtype=np.float64)[None, :, None]
            t1 = (2 * ell - 1.0) * (ell * (ell - 1.0) * x - m * n) * prev
            t2 = (
                ell
                * np.sqrt(((ell - 1.0) ** 2 - m * m) * ((ell - 1.0) ** 2 - n * n))
                * prev2
            )
            den = (ell - 1.0) * np.sqrt(
                (ell * ell - m * m) * (ell * ell - n * n)
            )
            cur[1:-1, 1:-1] = (t1 - t2) / den

        # boundary rows/columns from the closed form (log-space binomials)
        k = np.arange(-ell, ell + 1, dtype=np.float64)
        w = _binom_sqrt(ell, k)[:, None]
        cpk = _pow_nonneg(c[None, :], (ell + k)[:, None])
        cmk = _pow_nonneg(c[None, :], (ell - k)[:, None])
        spk = _pow_nonneg(s[None, :], (ell + k)[:, None])
        smk = _pow_nonneg(s[None, :], (ell - k)[:, None])
        sign = ((-1.0) ** (ell - k))[:, None]
        cur[-1, :] = sign * w * cpk * smk          # m = +l
        cur[0, :] = w * cmk * spk                  # m = -l
        cur[:, -1] = w * cpk * smk                 # n = +l
        cur[:, 0] = ((-1.0) ** (ell + k))[:, None] * w * cmk * spk  # n = -l
        stack.append(cur)
    return stack


def wigner_d_single(ell: int, beta) -> np.ndarray:
    """d^l(beta) alone, shape (2l+1, 2l+1, npts)."""
    return wigner_d_stack(ell + 1, np.atleast_1d(beta))[ell]


def wigner_D_single(ell: int, alpha, beta, gamma) -> np.ndarray:
    """D^l at arbitrary rotations, shape (npts, 2l+1, 2l+1) complex."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    d = np.moveaxis(wigner_d_single(ell, beta), -1, 0)  # (npts, m, n)
    m = np.arange(-ell, ell + 1)
    ea = np.exp(-1j * m[None, :] * alpha[:, None])  # (npts, m)
    eg = np.exp(-1j * m[None, :] * gamma[:, None])  # (npts, n)
    return ea[:, :, None] * d * eg[:, None, :]


def wigner_D_stack(num_degrees: int, alpha, beta, gamma) -> list[np.ndarray]:
    """D^l for all l < num_degrees at the given rotations.

    Returns a list of (npts, 2l+1, 2l+1) complex arrays; shares one little-d
    recurrence pass across degrees.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    ds = wigner_d_stack(num_degrees, beta)
    out = []
    for ell, d in enumerate(ds):
        m = np.arange(-ell, ell + 1)
        ea = np.exp(-1j * m[None, :] * alpha[:, None])
        eg = np.exp(-1j * m[None, :] * gamma[:, None])
        out.append(ea[:, :, None] * np.moveaxis(d, -1, 0) * eg[:, None, :])
    return out
