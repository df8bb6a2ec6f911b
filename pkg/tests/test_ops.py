"""Spectral-domain group operations: rotations, convolutions, projections."""

import numpy as np
import pytest

from artifact.grids import (
    make_s2_grid,
    make_so3_grid,
    matrix_to_euler,
    random_rotation,
)
from artifact.harmonics import s2_index, sph_harm_matrix, wigner_D_stack
from artifact.ops import (
    conv_s2_to_so3,
    conv_s2_to_so3_grad_kappa,
    conv_s2_to_so3_grad_signal,
    conv_so3,
    conv_so3_grad_kappa,
    conv_so3_grad_signal,
    h_orbit_projection,
    h_orbit_spectrum,
    invariant_readout,
    rotate_s2_spectrum,
    rotate_so3_spectrum,
    so3_to_s2_final,
    so3_to_s2_spectrum,
    so3_to_s2_spectrum_adjoint,
)
from artifact.transforms import (
    s2_mode_count,
    s2_synthesize,
    so3_block,
    so3_mode_count,
    so3_synthesize,
)


def rand_s2(rng, shape, L):
    n = s2_mode_count(L)
    return rng.standard_normal(shape + (n,)) + 1j * rng.standard_normal(shape + (n,))


def rand_so3(rng, shape, L):
    n = so3_mode_count(L)
    return rng.standard_normal(shape + (n,)) + 1j * rng.standard_normal(shape + (n,))


def eval_s2(spectrum, theta, phi):
    """Dense pointwise evaluation of a packed S2 spectrum."""
    L = int(round(np.sqrt(spectrum.shape[-1])))
    Y = sph_harm_matrix(L, np.atleast_1d(theta), np.atleast_1d(phi))
    return spectrum @ Y


def eval_so3(spectrum, rotations):
    """Dense evaluation of a packed SO(3) spectrum at rotation matrices."""
    from artifact.transforms import so3_num_degrees

    L = so3_num_degrees(spectrum.shape[-1])
    angles = np.array([matrix_to_euler(R) for R in rotations])
    Ds = wigner_D_stack(L, angles[:, 0], angles[:, 1], angles[:, 2])
    out = np.zeros(spectrum.shape[:-1] + (len(rotations),), dtype=complex)
    for ell in range(L):
        blk = so3_block(spectrum, ell)
        out += np.einsum("...mn,rmn->...r", blk, Ds[ell])
    return out


def sphere_dirs(rng, n):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    theta = np.arctan2(np.hypot(v[:, 0], v[:, 1]), v[:, 2])
    phi = np.arctan2(v[:, 1], v[:, 0])
    return v, theta, phi


class TestRotateS2:
    def test_pointwise(self):
        """rotate_s2_spectrum(f, R) samples to f(R^-1 x)."""
        rng = np.random.default_rng(60)
        L = 5
        f = rand_s2(rng, (), L)
        for _ in range(6):
            R = random_rotation(rng)
            rf = rotate_s2_spectrum(f, R)
            x, _, _ = sphere_dirs(rng, 8)
            y = x @ R  # rows R^T x = R^-1 x
            tx = np.arctan2(np.hypot(x[:, 0], x[:, 1]), x[:, 2])
            px = np.arctan2(x[:, 1], x[:, 0])
            ty = np.arctan2(np.hypot(y[:, 0], y[:, 1]), y[:, 2])
            py = np.arctan2(y[:, 1], y[:, 0])
            np.testing.assert_allclose(
                eval_s2(rf, tx, px), eval_s2(f, ty, py), atol=1e-11
            )

    def test_composition(self):
        rng = np.random.default_rng(61)
        f = rand_s2(rng, (2,), 4)
        R1, R2 = random_rotation(rng), random_rotation(rng)
        a = rotate_s2_spectrum(rotate_s2_spectrum(f, R2), R1)
        b = rotate_s2_spectrum(f, R1 @ R2)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_identity(self):
        rng = np.random.default_rng(62)
        f = rand_s2(rng, (), 6)
        np.testing.assert_allclose(rotate_s2_spectrum(f, np.eye(3)), f, atol=1e-13)

    def test_norm_preserved(self):
        rng = np.random.default_rng(63)
        f = rand_s2(rng, (), 5)
        R = random_rotation(rng)
        assert abs(np.linalg.norm(rotate_s2_spectrum(f, R)) - np.linalg.norm(f)) < 1e-12


class TestRotateSo3:
    def test_pointwise(self):
        """rotate_so3_spectrum(F, R) samples to F(R^-1 S)."""
        rng = np.random.default_rng(64)
        L = 4
        F = rand_so3(rng, (), L)
        for _ in range(4):
            R = random_rotation(rng)
            rF = rotate_so3_spectrum(F, R)
            probes = [random_rotation(rng) for _ in range(5)]
            lhs = eval_so3(rF, probes)
            rhs = eval_so3(F, [R.T @ S for S in probes])
            np.testing.assert_allclose(lhs, rhs, atol=1e-11)

    def test_composition(self):
        rng = np.random.default_rng(65)
        F = rand_so3(rng, (), 3)
        R1, R2 = random_rotation(rng), random_rotation(rng)
        a = rotate_so3_spectrum(rotate_so3_spectrum(F, R2), R1)
        b = rotate_so3_spectrum(F, R1 @ R2)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestLiftConv:
    def test_matches_quadrature(self):
        """Spectral lift equals the correlation
        (kappa star f)(S) = int f(x) kappa(S^-1 x) dx."""
        rng = np.random.default_rng(66)
        L = 4
        g = make_s2_grid(L)
        th = np.repeat(g.thetas, 2 * L)
        ph = np.tile(g.phis, 2 * L)
        pts = np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1
        )
        kappa = rand_s2(rng, (), L)
        f = rand_s2(rng, (), L)
        out = conv_s2_to_so3(kappa, f)
        f_vals = eval_s2(f, th, ph).reshape(g.shape)
        for _ in range(8):
            S = random_rotation(rng)
            y = pts @ S  # rows S^-1 x
            ty = np.arctan2(np.hypot(y[:, 0], y[:, 1]), y[:, 2])
            py = np.arctan2(y[:, 1], y[:, 0])
            k_vals = eval_s2(kappa, ty, py).reshape(g.shape)
            want = g.quadrature(f_vals * k_vals)
            got = eval_so3(out, [S])[0]
            assert abs(got - want) < 1e-10

    def test_single_mode_pins_sign_conventions(self):
        # kappa = Y_{2,-2}, f = Y_{2,1}: output spectrum has exactly one
        # nonzero entry, (l, m, n) = (2, -1, -2) with value (-1)^m = -1
        # conjugated into +... fixed numerically against the quadrature
        # oracle above, frozen here.
        L = 3
        kappa = np.zeros(9, dtype=complex)
        f = np.zeros(9, dtype=complex)
        kappa[s2_index(2, -2)] = 1.0
        f[s2_index(2, 1)] = 1.0
        out = conv_s2_to_so3(kappa, f)
        blk = so3_block(out, 2).copy()
        want = np.zeros((5, 5), dtype=complex)
        want[2 - 1, 2 - 2] = -1.0  # m = -1, n = -2
        np.testing.assert_allclose(blk, want, atol=1e-14)
        assert np.abs(so3_block(out, 0)).max() == 0
        assert np.abs(so3_block(out, 1)).max() == 0

    def test_equivariance(self):
        """Lifting commutes with rotations: kappa * (R.f) = R.(kappa * f)."""
        rng = np.random.default_rng(67)
        L = 5
        kappa = rand_s2(rng, (), L)
        f = rand_s2(rng, (), L)
        for _ in range(5):
            R = random_rotation(rng)
            a = conv_s2_to_so3(kappa, rotate_s2_spectrum(f, R))
            b = rotate_so3_spectrum(conv_s2_to_so3(kappa, f), R)
            np.testing.assert_allclose(a, b, atol=1e-11)

    def test_channel_contraction(self):
        rng = np.random.default_rng(68)
        L = 3
        kappa = rand_s2(rng, (4, 2), L)  # (out, in, modes)
        f = rand_s2(rng, (5, 2), L)  # (batch, in, modes)
        out = conv_s2_to_so3(kappa, f)
        assert out.shape == (5, 4, so3_mode_count(L))
        # contraction is a plain sum over the input channel
        parts = [
            conv_s2_to_so3(kappa[:, i : i + 1], f[:, i : i + 1]) for i in range(2)
        ]
        np.testing.assert_allclose(out, parts[0] + parts[1], atol=1e-12)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(69)
        with pytest.raises(ValueError):
            conv_s2_to_so3(rand_s2(rng, (2, 3), 4), rand_s2(rng, (1, 2), 4))


class TestGroupConv:
    def test_matches_quadrature(self):
        """(kappa star F)(R) = int F(S) kappa(S^-1 R) dS on SO(3)."""
        rng = np.random.default_rng(70)
        L = 3
        grid = make_so3_grid(L)
        aa, bb, gg = np.meshgrid(grid.alphas, grid.betas, grid.gammas, indexing="ij")
        kappa = rand_so3(rng, (), L)
        F = rand_so3(rng, (), L)
        out = conv_so3(kappa, F)
        F_vals = so3_synthesize(F)
        Tmats = np.zeros((aa.size, 3, 3))
        from artifact.grids import euler_to_matrix

        flat = list(zip(aa.ravel(), bb.ravel(), gg.ravel()))
        for i, (a, b, c) in enumerate(flat):
            Tmats[i] = euler_to_matrix(a, b, c)
        for _ in range(5):
            R = random_rotation(rng)
            args = np.einsum("rji,jk->rik", Tmats, R)  # S^-1 R per grid point S
            k_vals = eval_so3(kappa, list(args)).reshape(grid.shape)
            want = grid.quadrature(F_vals * k_vals)
            got = eval_so3(out, [R])[0]
            assert abs(got - want) < 1e-9

    def test_block_structure(self):
        """Per degree the output block is (8 pi^2/(2l+1)) F_block kappa_block."""
        rng = np.random.default_rng(71)
        L = 4
        kappa = rand_so3(rng, (), L)
        F = rand_so3(rng, (), L)
        out = conv_so3(kappa, F)
        for ell in range(L):
            fb = so3_block(F, ell)
            kb = so3_block(kappa, ell)
            ob = so3_block(out, ell)
            ref = (8 * np.pi**2 / (2 * ell + 1)) * fb @ kb
            np.testing.assert_allclose(ob, ref, atol=1e-12)

    def test_equivariance(self):
        rng = np.random.default_rng(72)
        L = 4
        kappa = rand_so3(rng, (), L)
        F = rand_so3(rng, (), L)
        for _ in range(5):
            R = random_rotation(rng)
            a = conv_so3(kappa, rotate_so3_spectrum(F, R))
            b = rotate_so3_spectrum(conv_so3(kappa, F), R)
            np.testing.assert_allclose(a, b, atol=1e-11)

    def test_channel_shapes(self):
        rng = np.random.default_rng(73)
        L = 2
        kappa = rand_so3(rng, (3, 2), L)
        F = rand_so3(rng, (4, 2), L)
        assert conv_so3(kappa, F).shape == (4, 3, so3_mode_count(L))


class TestConvGradients:
    """Reverse-mode maps are the conjugate-transpose of the forward maps."""

    def test_lift_signal_adjoint(self):
        rng = np.random.default_rng(74)
        L = 4
        kappa = rand_s2(rng, (3, 2), L)
        f = rand_s2(rng, (5, 2), L)
        gout = rand_so3(rng, (5, 3), L)
        lhs = np.vdot(gout, conv_s2_to_so3(kappa, f))
        rhs = np.vdot(conv_s2_to_so3_grad_signal(kappa, gout), f)
        assert abs(lhs - rhs) < 1e-10

    def test_lift_kappa_adjoint(self):
        rng = np.random.default_rng(75)
        L = 4
        kappa = rand_s2(rng, (3, 2), L)
        f = rand_s2(rng, (5, 2), L)
        gout = rand_so3(rng, (5, 3), L)
        lhs = np.vdot(gout, conv_s2_to_so3(kappa, f))
        rhs = np.vdot(conv_s2_to_so3_grad_kappa(f, gout), kappa)
        assert abs(lhs - rhs) < 1e-10

    def test_group_adjoints(self):
        rng = np.random.default_rng(76)
        L = 3
        kappa = rand_so3(rng, (2, 3), L)
        F = rand_so3(rng, (4, 3), L)
        gout = rand_so3(rng, (4, 2), L)
        lhs = np.vdot(gout, conv_so3(kappa, F))
        assert abs(lhs - np.vdot(conv_so3_grad_signal(kappa, gout), F)) < 1e-9
        assert abs(lhs - np.vdot(conv_so3_grad_kappa(F, gout), kappa)) < 1e-9

    def test_projection_adjoint(self):
        rng = np.random.default_rng(77)
        L = 5
        F = rand_so3(rng, (2, 3), L)
        gs2 = rand_s2(rng, (2, 3), L)
        lhs = np.vdot(gs2, so3_to_s2_spectrum(F))
        rhs = np.vdot(so3_to_s2_spectrum_adjoint(gs2), F)
        assert abs(lhs - rhs) < 1e-10


class TestSo3ToS2:
    def test_position_space(self):
        """Projected spectrum equals pairing F against the bandlimited
        plane-kernel sum_{l,n} (2l+1)/(8 pi^2) Y^l_n(S^-1 x) over SO(3)."""
        rng = np.random.default_rng(78)
        L = 3
        from artifact.grids import euler_to_matrix

        F = rand_so3(rng, (), L)
        s = so3_to_s2_spectrum(F)
        grid = make_so3_grid(L)
        n = 2 * L
        Fx = so3_synthesize(F)
        Smats = np.zeros((n, n, n, 3, 3))
        for i, a in enumerate(grid.alphas):
            for j, b in enumerate(grid.betas):
                for k, g in enumerate(grid.gammas):
                    Smats[i, j, k] = euler_to_matrix(a, b, g)
        xs, th, ph = sphere_dirs(rng, 6)
        vals = eval_s2(s, th, ph)
        weights = np.concatenate(
            [np.full(2 * l + 1, (2 * l + 1) / (8 * np.pi**2)) for l in range(L)]
        )
        for t in range(6):
            y = np.einsum("ijkba,b->ijka", Smats, xs[t])  # S^-1 x
            tt = np.arctan2(np.hypot(y[..., 0], y[..., 1]), y[..., 2]).ravel()
            pp = np.arctan2(y[..., 1], y[..., 0]).ravel()
            kern = (weights @ sph_harm_matrix(L, tt, pp)).reshape(n, n, n)
            want = grid.quadrature(Fx * kern)
            assert abs(vals[t] - want) < 1e-9

    def test_equivariance(self):
        rng = np.random.default_rng(79)
        L = 5
        F = rand_so3(rng, (2,), L)
        for _ in range(5):
            R = random_rotation(rng)
            a = so3_to_s2_spectrum(rotate_so3_spectrum(F, R))
            b = rotate_s2_spectrum(so3_to_s2_spectrum(F), R)
            np.testing.assert_allclose(a, b, atol=1e-11)

    def test_final_synthesizes_projection(self):
        rng = np.random.default_rng(80)
        L = 3
        F = rand_so3(rng, (), L)
        vals = so3_to_s2_final(F)
        assert vals.shape == (2 * L, 2 * L)
        np.testing.assert_allclose(
            vals, s2_synthesize(so3_to_s2_spectrum(F)), atol=1e-13
        )


class TestHOrbit:
    def test_spectrum_matches_fiber_integral(self):
        """h_orbit gives x -> int_0^2pi F(R_x Z(gamma)) dgamma."""
        rng = np.random.default_rng(82)
        L = 4
        from artifact.grids import euler_to_matrix

        F = rand_so3(rng, (), L)
        s = h_orbit_spectrum(F)
        assert s.shape == (s2_mode_count(L),)
        xs, th, ph = sphere_dirs(rng, 5)
        got = eval_s2(s, th, ph)
        gam = np.linspace(0, 2 * np.pi, 2 * L, endpoint=False)
        for k in range(5):
            mats = [euler_to_matrix(ph[k], th[k], g) for g in gam]
            fiber = 2 * np.pi * eval_so3(F, mats).mean()
            assert abs(got[k] - fiber) < 1e-10

    def test_spectrum_formula(self):
        # fhat^l_m = 2 pi sqrt(4 pi/(2l+1)) (-1)^m Fhat^l_{-m,0}
        rng = np.random.default_rng(81)
        L = 3
        F = rand_so3(rng, (), L)
        s = h_orbit_spectrum(F)
        for ell in range(L):
            blk = so3_block(F, ell)
            for m in range(-ell, ell + 1):
                want = (
                    2 * np.pi
                    * np.sqrt(4 * np.pi / (2 * ell + 1))
                    * (-1) ** m
                    * blk[ell - m, ell]
                )
                assert abs(s[s2_index(ell, m)] - want) < 1e-13

    def test_projection_synthesizes_spectrum(self):
        rng = np.random.default_rng(85)
        L = 3
        F = rand_so3(rng, (2,), L)
        np.testing.assert_allclose(
            h_orbit_projection(F), s2_synthesize(h_orbit_spectrum(F)), atol=1e-13
        )

    def test_invariant_readout(self):
        rng = np.random.default_rng(83)
        L = 3
        F = rand_so3(rng, (2, 2), L)
        r = invariant_readout(F)
        assert r.shape == (2, 2)
        want = 8 * np.pi**2 * so3_block(F, 0)[..., 0, 0].real
        np.testing.assert_allclose(r, want, atol=1e-13)

    def test_readout_rotation_invariant(self):
        rng = np.random.default_rng(84)
        F = rand_so3(rng, (3,), 5)
        base = invariant_readout(F)
        for _ in range(10):
            R = random_rotation(rng)
            np.testing.assert_allclose(
                invariant_readout(rotate_so3_spectrum(F, R)), base, atol=1e-12
            )
