"""Forward and inverse Fourier transforms on S2 and SO(3), plus adjoints.

Spectra are packed into flat complex128 arrays over trailing axes so that
batches and channels ride along in front:

* S2, bandlimit L: index(ell, m) = ell^2 + ell + m, total L^2 modes.
* SO(3), bandlimit L: degree ell occupies a row-major (2ell+1, 2ell+1)
  block (row m, column n) starting at offset(ell) = ell(2ell-1)(2ell+1)/3,
  total L(2L-1)(2L+1)/3 modes.

Conventions:

* s2_analyze:  fhat^ell_m = integral f(x) conj(Y^ell_m(x)) dx
* s2_synthesize:  f(x) = sum fhat^ell_m Y^ell_m(x)
* so3_analyze:  Fhat^ell_mn = (2ell+1)/(8 pi^2) integral F(R) conj(D^ell_mn(R)) dR
* so3_synthesize:  F(R) = sum Fhat^ell_mn D^ell_mn(R)

Both analysis integrals are evaluated with the exact grid quadrature from
grids.py, so analyze(synthesize(.)) is the identity on bandlimited spectra
up to rounding.  The FFT handles the azimuthal phases; the polar direction
is a dense contraction against normalized Legendre or Wigner-d tables.

The *_adjoint functions are the conjugate transposes of the corresponding
linear maps under the unweighted inner products (sum over grid samples,
sum over packed modes).  They are the building blocks for reverse-mode
gradients: the pullback of a C-linear map A is A^H applied to the output
cotangent.
"""

from __future__ import annotations

from functools import lru_cache
from math import isqrt

import numpy as np

from .harmonics import legendre_table, s2_mode_count, wigner_d_stack
from .grids import make_s2_grid, make_so3_grid


# ---------------------------------------------------------------------------
# packed layouts


def so3_mode_count(num_degrees: int) -> int:
    L = int(num_degrees)
    return L * (2 * L - 1) * (2 * L + 1) // 3


def so3_offset(ell: int) -> int:
    """Start of the degree-ell block in a packed SO(3) spectrum."""
    return ell * (2 * ell - 1) * (2 * ell + 1) // 3


def s2_num_degrees(num_modes: int) -> int:
    L = isqrt(int(num_modes))
    if L * L != num_modes or L == 0:
        raise ValueError(f"{num_modes} is not a packed S2 spectrum size")
    return L


def so3_num_degrees(num_modes: int) -> int:
    L = max(1, round((3 * int(num_modes) / 4) ** (1.0 / 3.0)))
    for cand in (L - 1, L, L + 1):
        if cand >= 1 and so3_mode_count(cand) == num_modes:
            return cand
    raise ValueError(f"{num_modes} is not a packed SO(3) spectrum size")


def so3_block(spectrum: np.ndarray, ell: int) -> np.ndarray:
    """Degree-ell block as a (..., 2ell+1, 2ell+1) view."""
    off = so3_offset(ell)
    width = 2 * ell + 1
    flat = spectrum[..., off : off + width * width]
    return flat.reshape(spectrum.shape[:-1] + (width, width))


def s2_block(spectrum: np.ndarray, ell: int) -> np.ndarray:
    """Degree-ell coefficients as a (..., 2ell+1) view."""
    start = ell * ell
    return spectrum[..., start : start + 2 * ell + 1]


# ---------------------------------------------------------------------------
# cached tables


@lru_cache(maxsize=8)
def _s2_tables(num_degrees: int):
    """Per-order Legendre blocks for the grid rings.

    Returns a list of (fft_bin, packed_columns, table) with table of shape
    (L - |m|, 2L) holding Lambda^ell_m(theta_j) for ell = |m| .. L-1.
    """
    L = num_degrees
    grid = make_s2_grid(L)
    full = legendre_table(L, grid.thetas)  # (L^2, 2L)
    out = []
    for m in range(-(L - 1), L):
        cols = np.array([ell * ell + ell + m for ell in range(abs(m), L)])
        out.append((m % (2 * L), cols, np.ascontiguousarray(full[cols])))
    return out


@lru_cache(maxsize=4)
def _so3_d_tables(num_degrees: int):
    """Wigner-d stack sampled on the grid betas: list over ell of
    (2ell+1, 2ell+1, 2L) float64."""
    L = num_degrees
    grid = make_so3_grid(L)
    return wigner_d_stack(L, grid.betas)


# ---------------------------------------------------------------------------
# S2 transforms


def _s2_spatial_degrees(signal: np.ndarray) -> int:
    n = signal.shape[-1]
    if signal.ndim < 2 or signal.shape[-2] != n or n < 2 or n % 2:
        raise ValueError(f"expected (..., 2L, 2L) samples, got {signal.shape}")
    return n // 2


def _s2_project(signal: np.ndarray, ring_weights) -> np.ndarray:
    """Shared core of analysis and the synthesis adjoint: contract samples
    against conj(Y), with optional ring weights."""
    signal = np.asarray(signal)
    L = _s2_spatial_degrees(signal)
    C = np.fft.fft(signal, axis=-1)  # e^{-i m phi}
    if ring_weights is not None:
        C = C * ring_weights[:, None]
    out = np.zeros(signal.shape[:-2] + (s2_mode_count(L),), dtype=np.complex128)
    for fft_bin, cols, table in _s2_tables(L):
        out[..., cols] = C[..., :, fft_bin] @ table.T
    return out


def s2_analyze(signal: np.ndarray) -> np.ndarray:
    """Spherical harmonic coefficients of grid samples, shape (..., L^2)."""
    L = _s2_spatial_degrees(np.asarray(signal))
    return _s2_project(signal, make_s2_grid(L).ring_weights)


def s2_synthesize(spectrum: np.ndarray, num_degrees: int | None = None) -> np.ndarray:
    """Sample a packed S2 spectrum on the 2L x 2L grid (complex output)."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    L = s2_num_degrees(spectrum.shape[-1])
    if num_degrees is not None and num_degrees != L:
        spectrum = s2_resample(spectrum, num_degrees)
        L = num_degrees
    n = 2 * L
    G = np.zeros(spectrum.shape[:-1] + (n, n), dtype=np.complex128)
    for fft_bin, cols, table in _s2_tables(L):
        G[..., :, fft_bin] = spectrum[..., cols] @ table
    return np.fft.ifft(G, axis=-1) * n  # e^{+i m phi}


def s2_synthesize_adjoint(signal: np.ndarray) -> np.ndarray:
    """Conjugate transpose of s2_synthesize (no quadrature weights)."""
    return _s2_project(signal, None)


def s2_analyze_adjoint(spectrum: np.ndarray) -> np.ndarray:
    """Conjugate transpose of s2_analyze: weighted resynthesis."""
    out = s2_synthesize(spectrum)
    L = s2_num_degrees(np.asarray(spectrum).shape[-1])
    return out * make_s2_grid(L).ring_weights[:, None]


# ---------------------------------------------------------------------------
# SO(3) transforms


def _so3_spatial_degrees(signal: np.ndarray) -> int:
    n = signal.shape[-1]
    if signal.ndim < 3 or signal.shape[-3:] != (n, n, n) or n < 2 or n % 2:
        raise ValueError(f"expected (..., 2L, 2L, 2L) samples, got {signal.shape}")
    return n // 2


def _signed_bins(L: int) -> np.ndarray:
    """FFT bin of each signed order m = -(L-1) .. L-1 on a 2L grid."""
    return np.array([m % (2 * L) for m in range(-(L - 1), L)])


def _so3_project(signal: np.ndarray, beta_weights, degree_factors) -> np.ndarray:
    """Contract samples against conj(D^ell_mn) with optional beta weights and
    per-degree scale factors."""
    signal = np.asarray(signal)
    L = _so3_spatial_degrees(signal)
    n = 2 * L
    # e^{+i m alpha} and e^{+i n gamma} sums
    U = np.fft.ifft(np.fft.ifft(signal, axis=-3), axis=-1) * (n * n)
    bins = _signed_bins(L)
    U = U.take(bins, axis=-3).take(bins, axis=-1)  # (..., 2L-1, 2L, 2L-1)
    if beta_weights is not None:
        U = U * beta_weights[:, None]
    d = _so3_d_tables(L)
    out = np.zeros(signal.shape[:-3] + (so3_mode_count(L),), dtype=np.complex128)
    for ell in range(L):
        sl = slice(L - 1 - ell, L + ell)
        blk = np.einsum("...mjn,mnj->...mn", U[..., sl, :, sl], d[ell])
        if degree_factors is not None:
            blk *= degree_factors[ell]
        off = so3_offset(ell)
        width = 2 * ell + 1
        out[..., off : off + width * width] = blk.reshape(blk.shape[:-2] + (-1,))
    return out


def _so3_expand(spectrum: np.ndarray, degree_factors) -> np.ndarray:
    """Evaluate sum_q c_ell spectrum_q D_q on the grid."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    L = so3_num_degrees(spectrum.shape[-1])
    n = 2 * L
    d = _so3_d_tables(L)
    H = np.zeros(spectrum.shape[:-1] + (2 * L - 1, n, 2 * L - 1), dtype=np.complex128)
    for ell in range(L):
        blk = so3_block(spectrum, ell)
        if degree_factors is not None:
            blk = blk * degree_factors[ell]
        sl = slice(L - 1 - ell, L + ell)
        H[..., sl, :, sl] += np.einsum("...mn,mnj->...mjn", blk, d[ell])
    bins = _signed_bins(L)
    T = np.zeros(spectrum.shape[:-1] + (2 * L - 1, n, n), dtype=np.complex128)
    T[..., bins] = H
    G = np.zeros(spectrum.shape[:-1] + (n, n, n), dtype=np.complex128)
    G[..., bins, :, :] = T
    # e^{-i m alpha} and e^{-i n gamma}
    return np.fft.fft(np.fft.fft(G, axis=-3), axis=-1)


def _analysis_factors(L: int) -> np.ndarray:
    return np.array([(2 * ell + 1) / (8 * np.pi**2) for ell in range(L)])


def so3_analyze(signal: np.ndarray) -> np.ndarray:
    """Packed SO(3) Fourier coefficients of grid samples."""
    L = _so3_spatial_degrees(np.asarray(signal))
    grid = make_so3_grid(L)
    return _so3_project(signal, grid.beta_weights, _analysis_factors(L))


def so3_synthesize(spectrum: np.ndarray, num_degrees: int | None = None) -> np.ndarray:
    """Sample a packed SO(3) spectrum on the 2L x 2L x 2L grid."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    L = so3_num_degrees(spectrum.shape[-1])
    if num_degrees is not None and num_degrees != L:
        spectrum = so3_resample(spectrum, num_degrees)
    return _so3_expand(spectrum, None)


def so3_synthesize_adjoint(signal: np.ndarray) -> np.ndarray:
    """Conjugate transpose of so3_synthesize."""
    return _so3_project(signal, None, None)


def so3_analyze_adjoint(spectrum: np.ndarray) -> np.ndarray:
    """Conjugate transpose of so3_analyze."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    L = so3_num_degrees(spectrum.shape[-1])
    out = _so3_expand(spectrum, _analysis_factors(L))
    return out * make_so3_grid(L).beta_weights[:, None]


# ---------------------------------------------------------------------------
# bandlimit changes and norms


def s2_resample(spectrum: np.ndarray, num_degrees: int) -> np.ndarray:
    """Truncate or zero-pad a packed S2 spectrum to a new bandlimit."""
    spectrum = np.asarray(spectrum)
    L_in = s2_num_degrees(spectrum.shape[-1])
    L_out = int(num_degrees)
    if L_out == L_in:
        return spectrum.copy()
    keep = min(L_in, L_out) ** 2
    out = np.zeros(spectrum.shape[:-1] + (s2_mode_count(L_out),), dtype=spectrum.dtype)
    out[..., :keep] = spectrum[..., :keep]
    return out


def so3_resample(spectrum: np.ndarray, num_degrees: int) -> np.ndarray:
    """Truncate or zero-pad a packed SO(3) spectrum to a new bandlimit."""
    spectrum = np.asarray(spectrum)
    L_in = so3_num_degrees(spectrum.shape[-1])
    L_out = int(num_degrees)
    if L_out == L_in:
        return spectrum.copy()
    keep = so3_mode_count(min(L_in, L_out))
    out = np.zeros(spectrum.shape[:-1] + (so3_mode_count(L_out),), dtype=spectrum.dtype)
    out[..., :keep] = spectrum[..., :keep]
    return out


def s2_delta_spectrum(num_degrees: int, theta, phi) -> np.ndarray:
    """Bandlimited point mass at (theta, phi): fhat^ell_m = conj(Y^ell_m).

    Scalars give a packed (L^2,) spectrum; arrays of points give (..., L^2).
    """
    from .harmonics import sph_harm_matrix

    th = np.asarray(theta, dtype=np.float64)
    ph = np.asarray(phi, dtype=np.float64)
    shape = np.broadcast_shapes(th.shape, ph.shape)
    th = np.broadcast_to(th, shape).ravel()
    ph = np.broadcast_to(ph, shape).ravel()
    out = np.conj(sph_harm_matrix(num_degrees, th, ph)).T
    return out.reshape(shape + (num_degrees * num_degrees,))


def so3_delta_spectrum(num_degrees: int, alpha, beta, gamma) -> np.ndarray:
    """Bandlimited point mass at a rotation:
    Fhat^ell_mn = (2 ell+1)/(8 pi^2) conj(D^ell_mn).  Scalar angles give a
    packed spectrum; arrays give (..., modes)."""
    from .harmonics import wigner_D_stack

    al = np.asarray(alpha, dtype=np.float64)
    be = np.asarray(beta, dtype=np.float64)
    ga = np.asarray(gamma, dtype=np.float64)
    shape = np.broadcast_shapes(al.shape, be.shape, ga.shape)
    al, be, ga = (np.broadcast_to(a, shape).ravel() for a in (al, be, ga))
    L = num_degrees
    out = np.empty((al.size, so3_mode_count(L)), dtype=np.complex128)
    Ds = wigner_D_stack(L, al, be, ga)
    for ell in range(L):
        off = so3_offset(ell)
        width = 2 * ell + 1
        c = (2 * ell + 1) / (8 * np.pi**2)
        out[:, off : off + width * width] = c * np.conj(
            Ds[ell].reshape(al.size, -1)
        )
    return out.reshape(shape + (out.shape[-1],))


def s2_power(spectrum: np.ndarray) -> np.ndarray:
    """Integral of |f|^2 over S2, from the spectrum (Parseval)."""
    spectrum = np.asarray(spectrum)
    return np.sum(np.abs(spectrum) ** 2, axis=-1)


def so3_power(spectrum: np.ndarray) -> np.ndarray:
    """Integral of |F|^2 over SO(3), from the spectrum (Parseval)."""
    spectrum = np.asarray(spectrum)
    L = so3_num_degrees(spectrum.shape[-1])
    total = np.zeros(spectrum.shape[:-1])
    for ell in range(L):
        blk = so3_block(spectrum, ell)
        total += (8 * np.pi**2 / (2 * ell + 1)) * np.sum(
            np.abs(blk) ** 2, axis=(-2, -1)
        )
    return total
