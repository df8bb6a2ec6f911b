"""Equivariant spectral operators: convolutions between S2 and SO(3),
projections back to the sphere, invariant readout, and exact rotations.

All operators act on packed spectra (see transforms.py) and are C-linear in
each argument, so reverse-mode gradients are conjugate-transpose maps; the
*_grad_* helpers implement exactly those pullbacks.

Rotation semantics: rotate_*(f, R) is the signal x -> f(R^{-1} x) (resp.
Q -> F(R^{-1} Q)), i.e. the picture of f turned by R.  Per degree this is a
single Wigner block acting on the m index, exact for bandlimited signals.

Convolution semantics (kappa is the kernel, f the signal):

* conv_s2_to_so3: (kappa * f)(R) = integral_{S2} kappa(R^{-1} x) f(x) dx,
  a function on SO(3).  Per degree, (kappa*f)^ell_{mn} =
  (-1)^m kappahat^ell_n fhat^ell_{-m}.
* conv_so3: (kappa * f)(R) = integral_{SO(3)} f(S) kappa(S^{-1} R) dS.
  Per degree, (kappa*f)^ell = 8 pi^2/(2 ell+1) fhat^ell kappahat^ell
  (matrix product over the inner index).

Both formulas were fixed against direct spatial quadrature of the defining
integrals (see tests); they commute with rotation of f.

Kernels may carry channel axes: kappa with shape (c_out, c_in, modes)
against f with shape (..., c_in, modes) contracts the input channels and
yields (..., c_out, modes).  A 1-d kappa applies to any leading batch shape
of f by broadcasting.
"""

from __future__ import annotations

import numpy as np

from . import transforms as tf
from .grids import matrix_to_euler
from .harmonics import wigner_D_stack


def _degree_signs(ell: int) -> np.ndarray:
    """(-1)^m for m = -ell .. ell."""
    return np.where(np.arange(-ell, ell + 1) % 2 == 0, 1.0, -1.0)


def _wigner_blocks(num_degrees: int, rotation: np.ndarray) -> list[np.ndarray]:
    """D^ell(R) for ell < num_degrees, each (2ell+1, 2ell+1)."""
    alpha, beta, gamma = matrix_to_euler(np.asarray(rotation, dtype=np.float64))
    return [D[0] for D in wigner_D_stack(num_degrees, alpha, beta, gamma)]


# ---------------------------------------------------------------------------
# rotations


def rotate_s2_spectrum(spectrum: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Spectrum of x -> f(R^{-1} x): per degree, fhat' = D^ell(R) fhat."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    L = tf.s2_num_degrees(spectrum.shape[-1])
    blocks = _wigner_blocks(L, rotation)
    out = np.empty_like(spectrum)
    for ell in range(L):
        blk = tf.s2_block(spectrum, ell)
        tf.s2_block(out, ell)[...] = np.einsum("mn,...n->...m", blocks[ell], blk)
    return out


def rotate_so3_spectrum(spectrum: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Spectrum of Q -> F(R^{-1} Q): per degree, Fhat' = conj(D^ell(R)) Fhat."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    L = tf.so3_num_degrees(spectrum.shape[-1])
    blocks = _wigner_blocks(L, rotation)
    out = np.empty_like(spectrum)
    for ell in range(L):
        blk = tf.so3_block(spectrum, ell)
        tf.so3_block(out, ell)[...] = np.einsum(
            "mp,...pn->...mn", np.conj(blocks[ell]), blk
        )
    return out


# ---------------------------------------------------------------------------
# lifting convolution S2 -> SO(3)


def _check_channel_form(kappa: np.ndarray, signal: np.ndarray) -> bool:
    if kappa.ndim == 1:
        return False
    if kappa.ndim == 3:
        if signal.ndim < 2 or signal.shape[-2] != kappa.shape[1]:
            raise ValueError(
                f"signal channels {signal.shape} do not match kernel {kappa.shape}"
            )
        return True
    raise ValueError(f"kernel must have 1 or 3 axes, got shape {kappa.shape}")


def conv_s2_to_so3(kappa: np.ndarray, signal: np.ndarray) -> np.ndarray:
    """Lifting convolution of an S2 signal with an S2 kernel; SO(3) output."""
    kappa = np.asarray(kappa, dtype=np.complex128)
    signal = np.asarray(signal, dtype=np.complex128)
    channels = _check_channel_form(kappa, signal)
    L = tf.s2_num_degrees(kappa.shape[-1])
    if signal.shape[-1] != kappa.shape[-1]:
        raise ValueError(
            f"bandlimit mismatch: kernel {kappa.shape[-1]} vs signal {signal.shape[-1]} modes"
        )
    if channels:
        lead = signal.shape[:-2] + (kappa.shape[0],)
    else:
        lead = np.broadcast_shapes(kappa.shape[:-1], signal.shape[:-1])
    out = np.zeros(lead + (tf.so3_mode_count(L),), dtype=np.complex128)
    for ell in range(L):
        k_blk = tf.s2_block(kappa, ell)
        f_blk = tf.s2_block(signal, ell)
        # (-1)^m fhat_{-m} over the m axis
        flip = _degree_signs(ell) * f_blk[..., ::-1]
        if channels:
            blk = np.einsum("...im,oin->...omn", flip, k_blk)
        else:
            blk = np.einsum("...m,...n->...mn", flip, k_blk)
        tf.so3_block(out, ell)[...] = blk
    return out


def conv_s2_to_so3_grad_signal(kappa: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pullback of conv_s2_to_so3 onto the signal argument."""
    kappa = np.asarray(kappa, dtype=np.complex128)
    grad_out = np.asarray(grad_out, dtype=np.complex128)
    channels = kappa.ndim == 3
    L = tf.s2_num_degrees(kappa.shape[-1])
    if channels:
        lead = grad_out.shape[:-2] + (kappa.shape[1],)
    else:
        lead = grad_out.shape[:-1]
    out = np.zeros(lead + (L * L,), dtype=np.complex128)
    kc = np.conj(kappa)
    for ell in range(L):
        g_blk = tf.so3_block(grad_out, ell)
        k_blk = tf.s2_block(kc, ell)
        if channels:
            tmp = np.einsum("oin,...omn->...im", k_blk, g_blk)
        else:
            tmp = np.einsum("...n,...mn->...m", k_blk, g_blk)
        tf.s2_block(out, ell)[...] = _degree_signs(ell) * tmp[..., ::-1]
    return out


def conv_s2_to_so3_grad_kappa(signal: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pullback of conv_s2_to_so3 onto the kernel, summing batch axes.

    signal: (..., c_in, L^2), grad_out: (..., c_out, modes); returns
    (c_out, c_in, L^2).
    """
    signal = np.asarray(signal, dtype=np.complex128)
    grad_out = np.asarray(grad_out, dtype=np.complex128)
    L = tf.s2_num_degrees(signal.shape[-1])
    c_in = signal.shape[-2]
    c_out = grad_out.shape[-2]
    sig = signal.reshape((-1, c_in, signal.shape[-1]))
    g = grad_out.reshape((-1, c_out, grad_out.shape[-1]))
    out = np.zeros((c_out, c_in, L * L), dtype=np.complex128)
    for ell in range(L):
        f_blk = tf.s2_block(sig, ell)
        flip = np.conj(_degree_signs(ell) * f_blk[..., ::-1])
        g_blk = tf.so3_block(g, ell)
        tf.s2_block(out, ell)[...] = np.einsum("bim,bomn->oin", flip, g_blk)
    return out


# ---------------------------------------------------------------------------
# group convolution SO(3) -> SO(3)


def conv_so3(kappa: np.ndarray, signal: np.ndarray) -> np.ndarray:
    """Group convolution of an SO(3) signal with an SO(3) kernel."""
    kappa = np.asarray(kappa, dtype=np.complex128)
    signal = np.asarray(signal, dtype=np.complex128)
    channels = _check_channel_form(kappa, signal)
    L = tf.so3_num_degrees(kappa.shape[-1])
    if signal.shape[-1] != kappa.shape[-1]:
        raise ValueError(
            f"bandlimit mismatch: kernel {kappa.shape[-1]} vs signal {signal.shape[-1]} modes"
        )
    if channels:
        lead = signal.shape[:-2] + (kappa.shape[0],)
    else:
        lead = np.broadcast_shapes(kappa.shape[:-1], signal.shape[:-1])
    out = np.zeros(lead + (tf.so3_mode_count(L),), dtype=np.complex128)
    for ell in range(L):
        scale = 8 * np.pi**2 / (2 * ell + 1)
        k_blk = tf.so3_block(kappa, ell)
        f_blk = tf.so3_block(signal, ell)
        if channels:
            # matmul over the fused (in-channel, inner-index) axis
            w = 2 * ell + 1
            c_out, c_in = kappa.shape[:2]
            lhs = np.moveaxis(f_blk, -3, -2)  # (..., m, i, p)
            lhs = lhs.reshape(lhs.shape[:-3] + (w, c_in * w))
            rhs = np.moveaxis(k_blk, 0, 2).reshape(c_in * w, c_out * (2 * ell + 1))
            blk = (lhs @ rhs).reshape(lhs.shape[:-2] + (w, c_out, w))
            blk = np.moveaxis(blk, -2, -3)  # (..., o, m, n)
        else:
            blk = np.einsum("...mp,...pn->...mn", f_blk, k_blk)
        tf.so3_block(out, ell)[...] = scale * blk
    return out


def conv_so3_grad_signal(kappa: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pullback of conv_so3 onto the signal argument."""
    kappa = np.asarray(kappa, dtype=np.complex128)
    grad_out = np.asarray(grad_out, dtype=np.complex128)
    channels = kappa.ndim == 3
    L = tf.so3_num_degrees(kappa.shape[-1])
    if channels:
        lead = grad_out.shape[:-2] + (kappa.shape[1],)
    else:
        lead = grad_out.shape[:-1]
    out = np.zeros(lead + (tf.so3_mode_count(L),), dtype=np.complex128)
    kc = np.conj(kappa)
    for ell in range(L):
        scale = 8 * np.pi**2 / (2 * ell + 1)
        k_blk = tf.so3_block(kc, ell)
        g_blk = tf.so3_block(grad_out, ell)
        if channels:
            w = 2 * ell + 1
            c_out, c_in = kappa.shape[:2]
            lhs = np.moveaxis(g_blk, -3, -2)  # (..., m, o, n)
            lhs = lhs.reshape(lhs.shape[:-3] + (w, c_out * w))
            rhs = np.moveaxis(k_blk, 3, 1).reshape(c_out * w, c_in * w)
            blk = (lhs @ rhs).reshape(lhs.shape[:-2] + (w, c_in, w))
            blk = np.moveaxis(blk, -3, -2)  # (..., i, m, p)
        else:
            blk = np.einsum("...pn,...mn->...mp", k_blk, g_blk)
        tf.so3_block(out, ell)[...] = scale * blk
    return out


def conv_so3_grad_kappa(signal: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pullback of conv_so3 onto the kernel, summing batch axes."""
    signal = np.asarray(signal, dtype=np.complex128)
    grad_out = np.asarray(grad_out, dtype=np.complex128)
    L = tf.so3_num_degrees(signal.shape[-1])
    c_in = signal.shape[-2]
    c_out = grad_out.shape[-2]
    sig = np.conj(signal.reshape((-1, c_in, signal.shape[-1])))
    g = grad_out.reshape((-1, c_out, grad_out.shape[-1]))
    out = np.zeros((c_out, c_in, tf.so3_mode_count(L)), dtype=np.complex128)
    for ell in range(L):
        scale = 8 * np.pi**2 / (2 * ell + 1)
        f_blk = tf.so3_block(sig, ell)  # (b, i, m, p), already conjugated
        g_blk = tf.so3_block(g, ell)  # (b, o, m, n)
        w = 2 * ell + 1
        nb = f_blk.shape[0]
        lhs = f_blk.transpose(1, 3, 0, 2).reshape(c_in * w, nb * w)
        rhs = g_blk.transpose(0, 2, 1, 3).reshape(nb * w, c_out * w)
        blk = (lhs @ rhs).reshape(c_in, w, c_out, w).transpose(2, 0, 1, 3)
        tf.so3_block(out, ell)[...] = scale * blk
    return out


# ---------------------------------------------------------------------------
# SO(3) -> S2 projections


def so3_to_s2_spectrum(spectrum: np.ndarray) -> np.ndarray:
    """S2 spectrum of the n-summed final signal.

    Per degree, shat^ell_m = sum_n (-1)^{n-m} Fhat^ell_{-m,-n}; this is the
    spectral form of pairing F against the bandlimited kernel
    sum_{ell,n} (2ell+1)/(8 pi^2) Y^ell_n evaluated at S^{-1} x.
    """
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    L = tf.so3_num_degrees(spectrum.shape[-1])
    out = np.zeros(spectrum.shape[:-1] + (L * L,), dtype=np.complex128)
    for ell in range(L):
        signs = _degree_signs(ell)
        blk = tf.so3_block(spectrum, ell)
        row = blk @ signs.astype(np.complex128)  # sum_q (-1)^q Fhat_{p q}
        tf.s2_block(out, ell)[...] = signs * row[..., ::-1]
    return out


def so3_to_s2_final(spectrum: np.ndarray) -> np.ndarray:
    """Final-layer signal on the 2L x 2L grid at the same bandlimit."""
    return tf.s2_synthesize(so3_to_s2_spectrum(spectrum))


def so3_to_s2_spectrum_adjoint(grad_s2: np.ndarray) -> np.ndarray:
    """Pullback of so3_to_s2_spectrum: grad Fhat^ell_{pq} = (-1)^{p-q} g_{-p}."""
    grad_s2 = np.asarray(grad_s2, dtype=np.complex128)
    L = tf.s2_num_degrees(grad_s2.shape[-1])
    out = np.zeros(grad_s2.shape[:-1] + (tf.so3_mode_count(L),), dtype=np.complex128)
    for ell in range(L):
        signs = _degree_signs(ell)
        g_blk = tf.s2_block(grad_s2, ell)
        rows = signs * g_blk[..., ::-1]  # (-1)^p g_{-p}
        tf.so3_block(out, ell)[...] = rows[..., :, None] * signs
    return out


def h_orbit_projection(spectrum: np.ndarray) -> np.ndarray:
    """Integral of F over the gamma fiber through each sphere point.

    f(x) = integral_0^{2 pi} F(R_x Z(gamma)) dgamma where R_x maps the north
    pole to x; only the n = 0 columns survive.  Returned as samples on the
    2L x 2L grid.
    """
    return tf.s2_synthesize(h_orbit_spectrum(spectrum))


def h_orbit_spectrum(spectrum: np.ndarray) -> np.ndarray:
    """S2 spectrum of h_orbit_projection:
    fhat^ell_m = 2 pi sqrt(4 pi/(2 ell+1)) (-1)^m Fhat^ell_{-m, 0}."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    L = tf.so3_num_degrees(spectrum.shape[-1])
    out = np.zeros(spectrum.shape[:-1] + (L * L,), dtype=np.complex128)
    for ell in range(L):
        factor = 2 * np.pi * np.sqrt(4 * np.pi / (2 * ell + 1))
        col = tf.so3_block(spectrum, ell)[..., ell]  # n = 0 column
        tf.s2_block(out, ell)[...] = factor * _degree_signs(ell) * col[..., ::-1]
    return out


def invariant_readout(spectrum: np.ndarray) -> np.ndarray:
    """Integral of F over SO(3) per channel: 8 pi^2 Fhat^0_00, real part."""
    spectrum = np.asarray(spectrum)
    return 8 * np.pi**2 * spectrum[..., 0].real
