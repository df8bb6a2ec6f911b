"""Self-check suites runnable from the command line.

Each check measures a property of the harmonic transforms, convolution
operators, network gradients, sampler, or data pipeline and compares it to
a tolerance.  Levels: "quick" runs the fast subset (seconds), "full" also
runs the expensive cross-validations (direct quadrature of the convolution
integrals, position-space projection identity, large-grid data checks).

All checks are seeded and deterministic.  Tolerances can be scaled up or
down globally (tolerance_scale) for noisy environments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import datagen as dg
from . import network as net
from . import ops
from . import transforms as tf
from .grids import (
    beta_quadrature_weights,
    euler_to_matrix,
    make_s2_grid,
    make_so3_grid,
    matrix_to_euler,
    random_rotation,
)
from .harmonics import sph_harm_matrix, wigner_D_stack


@dataclass
class CheckResult:
    name: str
    ok: bool
    measured: float
    tolerance: float


def _eval_so3(spectrum, mats):
    """Dense evaluation of an SO(3) spectrum at rotation matrices."""
    mats = np.asarray(mats).reshape(-1, 3, 3)
    angles = np.array([matrix_to_euler(m) for m in mats])
    L = tf.so3_num_degrees(spectrum.shape[-1])
    D = wigner_D_stack(L, angles[:, 0], angles[:, 1], angles[:, 2])
    out = np.zeros(spectrum.shape[:-1] + (len(mats),), dtype=np.complex128)
    for ell in range(L):
        out += np.einsum("...mn,rmn->...r", tf.so3_block(spectrum, ell), D[ell])
    return out


def _eval_s2(spectrum, vecs):
    """Dense evaluation of an S2 spectrum at unit vectors."""
    vecs = np.asarray(vecs).reshape(-1, 3)
    theta = np.arctan2(np.hypot(vecs[:, 0], vecs[:, 1]), vecs[:, 2])
    phi = np.arctan2(vecs[:, 1], vecs[:, 0])
    L = tf.s2_num_degrees(spectrum.shape[-1])
    return spectrum @ sph_harm_matrix(L, theta, phi)


def _rand_s2_spec(rng, L, shape=()):
    n = tf.s2_mode_count(L)
    return rng.standard_normal(shape + (n,)) + 1j * rng.standard_normal(shape + (n,))


def _rand_so3_spec(rng, L, shape=()):
    n = tf.so3_mode_count(L)
    return rng.standard_normal(shape + (n,)) + 1j * rng.standard_normal(shape + (n,))


# ---------------------------------------------------------------------------
# check bodies: each returns (measured, tolerance)


def check_beta_weights(rng):
    worst = 0.0
    for L in (4, 8, 16, 32):
        q = beta_quadrature_weights(L)
        worst = max(worst, abs(q.sum() - 2.0), float(-(q.min())) if q.min() < 0 else 0.0)
        grid = make_s2_grid(L)
        for k in range(0, 2 * L, 3):  # cos^k integrates to 2/(k+1) for even k
            val = q @ np.cos(grid.thetas) ** k
            exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
            worst = max(worst, abs(val - exact))
    return worst, 1e-12


def check_euler_round_trip(rng):
    worst = 0.0
    for _ in range(50):
        R = random_rotation(rng)
        worst = max(worst, np.abs(euler_to_matrix(*matrix_to_euler(R)) - R).max())
    for beta in (0.0, np.pi):  # gimbal cases
        R = euler_to_matrix(0.7, beta, 0.0)
        worst = max(worst, np.abs(euler_to_matrix(*matrix_to_euler(R)) - R).max())
    return worst, 1e-12


def check_rotation_matrices(rng):
    worst = 0.0
    for _ in range(50):
        R = random_rotation(rng)
        worst = max(worst, np.abs(R @ R.T - np.eye(3)).max())
        worst = max(worst, abs(np.linalg.det(R) - 1.0))
    return worst, 1e-12


def check_s2_round_trip(rng, bands=(4, 8, 16)):
    worst = 0.0
    for L in bands:
        spec = _rand_s2_spec(rng, L, (2,))
        back = tf.s2_analyze(tf.s2_synthesize(spec))
        worst = max(worst, np.linalg.norm(back - spec) / np.linalg.norm(spec))
    return worst, 1e-10


def check_so3_round_trip(rng, bands=(4, 8)):
    worst = 0.0
    for L in bands:
        spec = _rand_so3_spec(rng, L, (2,))
        back = tf.so3_analyze(tf.so3_synthesize(spec))
        worst = max(worst, np.linalg.norm(back - spec) / np.linalg.norm(spec))
    return worst, 1e-10


def check_sph_orthonormality(rng):
    L = 16
    grid = make_s2_grid(L)
    th = np.repeat(grid.thetas, 2 * L)
    ph = np.tile(grid.phis, 2 * L)
    Y = sph_harm_matrix(L, th, ph)
    w = np.repeat(grid.ring_weights, 2 * L)
    gram = (Y * w) @ np.conj(Y).T
    return np.abs(gram - np.eye(L * L)).max(), 1e-10


def check_wigner_orthogonality(rng):
    L = 5
    grid = make_so3_grid(L)
    a = grid.alphas[:, None, None]
    b = grid.betas[None, :, None]
    g = grid.gammas[None, None, :]
    aa = np.broadcast_to(a, (2 * L,) * 3).ravel()
    bb = np.broadcast_to(b, (2 * L,) * 3).ravel()
    gg = np.broadcast_to(g, (2 * L,) * 3).ravel()
    D = wigner_D_stack(L, aa, bb, gg)
    w = np.broadcast_to(grid.beta_weights[None, :, None], (2 * L,) * 3).ravel()
    worst = 0.0
    for l1 in range(5):
        for l2 in range(l1, 5):
            d1 = D[l1].reshape(-1, (2 * l1 + 1) ** 2)
            d2 = D[l2].reshape(-1, (2 * l2 + 1) ** 2)
            gram = (np.conj(d1) * w[:, None]).T @ d2
            expect = np.zeros_like(gram)
            if l1 == l2:
                expect = (8 * np.pi**2 / (2 * l1 + 1)) * np.eye(
                    (2 * l1 + 1) ** 2
                )
            worst = max(worst, np.abs(gram - expect).max())
    return worst, 1e-9


def check_parseval(rng):
    L = 8
    spec = _rand_s2_spec(rng, L)
    grid = make_s2_grid(L)
    f = tf.s2_synthesize(spec)
    quad = float(np.einsum("jk,j->", np.abs(f) ** 2, grid.ring_weights))
    worst = abs(quad - tf.s2_power(spec)) / quad
    spec3 = _rand_so3_spec(rng, L)
    g3 = make_so3_grid(L)
    F = tf.so3_synthesize(spec3)
    quad3 = float(np.einsum("ijk,j->", np.abs(F) ** 2, g3.beta_weights))
    worst = max(worst, abs(quad3 - tf.so3_power(spec3)) / quad3)
    return worst, 1e-10


def check_transform_adjoints(rng):
    L = 6
    worst = 0.0
    u = _rand_s2_spec(rng, L)
    v = rng.standard_normal((2 * L, 2 * L)) + 1j * rng.standard_normal((2 * L, 2 * L))
    lhs = np.vdot(v, tf.s2_synthesize(u))
    rhs = np.vdot(tf.s2_synthesize_adjoint(v), u)
    worst = max(worst, abs(lhs - rhs) / abs(lhs))
    lhs = np.vdot(u, tf.s2_analyze(v))
    rhs = np.vdot(tf.s2_analyze_adjoint(u), v)
    worst = max(worst, abs(lhs - rhs) / abs(lhs))
    u3 = _rand_so3_spec(rng, L)
    v3 = rng.standard_normal((2 * L,) * 3) + 1j * rng.standard_normal((2 * L,) * 3)
    lhs = np.vdot(v3, tf.so3_synthesize(u3))
    rhs = np.vdot(tf.so3_synthesize_adjoint(v3), u3)
    worst = max(worst, abs(lhs - rhs) / abs(lhs))
    lhs = np.vdot(u3, tf.so3_analyze(v3))
    rhs = np.vdot(tf.so3_analyze_adjoint(u3), v3)
    worst = max(worst, abs(lhs - rhs) / abs(lhs))
    return worst, 1e-10


def check_lift_conv_quadrature(rng, L=4, probes=10):
    kap = _rand_s2_spec(rng, L)
    sig = _rand_s2_spec(rng, L)
    out = ops.conv_s2_to_so3(kap, sig)
    grid = make_s2_grid(L)
    f = tf.s2_synthesize(sig)
    mats = [random_rotation(rng) for _ in range(probes)]
    vals = _eval_so3(out, mats)
    worst = 0.0
    for r, R in enumerate(mats):
        kr = tf.s2_synthesize(ops.rotate_s2_spectrum(kap, R))
        quad = np.einsum("jk,jk,j->", kr, f, grid.ring_weights)
        worst = max(worst, abs(quad - vals[r]) / max(abs(quad), 1e-12))
    return worst, 1e-8


def check_group_conv_quadrature(rng, L=4, probes=6):
    kap = _rand_so3_spec(rng, L)
    sig = _rand_so3_spec(rng, L)
    out = ops.conv_so3(kap, sig)
    grid = make_so3_grid(L)
    F = tf.so3_synthesize(sig)
    n = 2 * L
    Smats = np.zeros((n, n, n, 3, 3))
    for i, a in enumerate(grid.alphas):
        for j, b in enumerate(grid.betas):
            for k, g in enumerate(grid.gammas):
                Smats[i, j, k] = euler_to_matrix(a, b, g)
    mats = [random_rotation(rng) for _ in range(probes)]
    vals = _eval_so3(out, mats)
    worst = 0.0
    for r, R in enumerate(mats):
        arg = np.einsum("ijkba,bc->ijkac", Smats, R)  # S^{-1} R = S^T R
        kv = _eval_so3(kap, arg.reshape(-1, 3, 3)).reshape(n, n, n)
        quad = np.einsum("ijk,ijk,j->", F, kv, grid.beta_weights)
        worst = max(worst, abs(quad - vals[r]) / max(abs(quad), 1e-12))
    return worst, 1e-7


def check_conv_equivariance(rng):
    L = 6
    worst = 0.0
    kap = _rand_s2_spec(rng, L)
    sig = _rand_s2_spec(rng, L)
    for _ in range(5):
        R = random_rotation(rng)
        a = ops.conv_s2_to_so3(kap, ops.rotate_s2_spectrum(sig, R))
        b = ops.rotate_so3_spectrum(ops.conv_s2_to_so3(kap, sig), R)
        worst = max(worst, np.abs(a - b).max() / np.abs(b).max())
    kap3 = _rand_so3_spec(rng, L)
    sig3 = _rand_so3_spec(rng, L)
    for _ in range(5):
        R = random_rotation(rng)
        a = ops.conv_so3(kap3, ops.rotate_so3_spectrum(sig3, R))
        b = ops.rotate_so3_spectrum(ops.conv_so3(kap3, sig3), R)
        worst = max(worst, np.abs(a - b).max() / np.abs(b).max())
        a = ops.so3_to_s2_spectrum(ops.rotate_so3_spectrum(sig3, R))
        b = ops.rotate_s2_spectrum(ops.so3_to_s2_spectrum(sig3), R)
        worst = max(worst, np.abs(a - b).max() / np.abs(b).max())
    return worst, 1e-10


def check_projection_position_space(rng, L=4, probes=12):
    """SO(3)->S2 spectrum equals the position-space projected form."""
    F = _rand_so3_spec(rng, L)
    s2 = ops.so3_to_s2_spectrum(F)
    grid = make_so3_grid(L)
    n = 2 * L
    Fx = tf.so3_synthesize(F)
    Smats = np.zeros((n, n, n, 3, 3))
    for i, a in enumerate(grid.alphas):
        for j, b in enumerate(grid.betas):
            for k, g in enumerate(grid.gammas):
                Smats[i, j, k] = euler_to_matrix(a, b, g)
    th = rng.uniform(0.2, np.pi - 0.2, probes)
    ph = rng.uniform(0, 2 * np.pi, probes)
    xs = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)
    vals = _eval_s2(s2, xs)
    worst = 0.0
    for t in range(probes):
        y = np.einsum("ijkba,b->ijka", Smats, xs[t])  # S^{-1} x
        tt = np.arctan2(np.hypot(y[..., 0], y[..., 1]), y[..., 2]).ravel()
        pp = np.arctan2(y[..., 1], y[..., 0]).ravel()
        Y = sph_harm_matrix(L, tt, pp)
        weights = np.concatenate(
            [np.full(2 * ell + 1, (2 * ell + 1) / (8 * np.pi**2)) for ell in range(L)]
        )
        kern = (weights @ Y).reshape(n, n, n)
        quad = np.einsum("ijk,ijk,j->", Fx, kern, grid.beta_weights)
        worst = max(worst, abs(quad - vals[t]) / max(abs(vals[t]), 1e-12))
    return worst, 1e-8


def check_orbit_average(rng):
    """Stabilizer-orbit projection equals the gamma-fiber average."""
    L = 4
    F = _rand_so3_spec(rng, L)
    spec = ops.h_orbit_spectrum(F)
    grid = make_s2_grid(L)
    gammas = np.pi * np.arange(2 * L) / L
    worst = 0.0
    for j in (0, L // 2, L - 1):
        for k in (0, 1, L):
            mats = [
                euler_to_matrix(grid.phis[k], grid.thetas[j], g) for g in gammas
            ]
            fiber = 2 * np.pi * _eval_so3(F, mats).mean()
            val = _eval_s2(spec, np.array([
                np.sin(grid.thetas[j]) * np.cos(grid.phis[k]),
                np.sin(grid.thetas[j]) * np.sin(grid.phis[k]),
                np.cos(grid.thetas[j]),
            ]))[0]
            worst = max(worst, abs(fiber - val) / max(abs(val), 1e-12))
    return worst, 1e-9


def check_invariant_readout(rng):
    L = 6
    F = _rand_so3_spec(rng, L, (3,))
    base = ops.invariant_readout(F)
    worst = 0.0
    for _ in range(20):
        R = random_rotation(rng)
        rot = ops.invariant_readout(ops.rotate_so3_spectrum(F, R))
        worst = max(worst, np.abs(rot - base).max() / np.abs(base).max())
    return worst, 1e-10


def check_kernel_spectrum_atoms(rng):
    L = 4
    lay = net.LayerSpec("SO3conv", 2, 2, L, L, 0.8, (3, 2, 3))
    w = rng.standard_normal((2, 2, lay.support_size))
    kap = net.kernel_weights_to_spectrum(lay, w)
    from .grids import make_kernel_support_grid

    grid = make_kernel_support_grid(0.8, (3, 2, 3))
    oracle = np.zeros_like(kap)
    for p, (a, b, g) in enumerate(grid.points):
        oracle += w[..., p, None] * tf.so3_delta_spectrum(L, a, b, g)
    return np.abs(kap - oracle).max(), 1e-12


def check_network_gradients(rng, seeds=2):
    L = 5
    la = net.LayerSpec("S2SO3conv", 1, 2, L, 4, 0.5, (4, 2, 1))
    lb = net.LayerSpec("SO3S2conv", 2, 3, 4, 4, 0.7, (4, 2, 4))
    spec = net.ModelSpec(layers=(la, lb), head="segmentation")
    worst = 0.0
    for s in range(seeds):
        r = np.random.default_rng(1000 + s)
        params = net.init_params(spec, r)
        sig = r.standard_normal((1, 1, 2 * L, 2 * L))
        tgt = r.integers(0, 3, size=(1, 8, 8))
        out, tape = net.forward(spec, params, sig)
        _, gout = net.softmax_xent_loss(out, tgt)
        grads = net.backward(spec, params, tape, gout)
        h = 1e-5
        v = r.standard_normal(params.size)
        v /= np.linalg.norm(v)

        def loss_at(p):
            o, _ = net.forward(spec, p, sig)
            return net.softmax_xent_loss(o, tgt)[0]

        fd = (loss_at(params + h * v) - loss_at(params - h * v)) / (2 * h)
        an = float(grads @ v)
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))
    return worst, 1e-5


def check_network_linear_equivariance(rng):
    L = 6
    la = net.LayerSpec("S2SO3conv", 1, 2, L, 4, 0.5, (4, 2, 1))
    lb = net.LayerSpec("SO3S2conv", 2, 2, 4, 6, 0.7, (4, 2, 4))
    spec = net.ModelSpec(layers=(la, lb), head="segmentation", nonlinearity="none")
    params = net.init_params(spec, rng)
    xh = tf.s2_analyze(rng.standard_normal((1, 1, 2 * L, 2 * L)))
    worst = 0.0
    for _ in range(5):
        R = random_rotation(rng)
        f0 = tf.s2_synthesize(xh).real
        fr = tf.s2_synthesize(ops.rotate_s2_spectrum(xh, R)).real
        o0, _ = net.forward(spec, params, f0)
        orot, _ = net.forward(spec, params, fr)
        so = ops.rotate_s2_spectrum(tf.s2_analyze(o0), R)
        sr = tf.s2_analyze(orot)
        worst = max(worst, np.abs(so - sr).max() / np.abs(so).max())
    return worst, 1e-9


def check_sampler(rng, count=10):
    for _ in range(count):
        spec = net.sample_equivariant_architecture(20000, 400000, 16, 1, 11, rng)
        net.validate_model_spec(spec)
        n = net.count_parameters(spec)
        if not 20000 <= n <= 400000:
            return 1.0, 0.5
        prods = [l.beta_hat * l.in_bandlimit for l in spec.layers]
        if max(abs(p - prods[0]) for p in prods) > 1e-9:
            return 1.0, 0.5
        bands = [spec.layers[0].in_bandlimit] + [l.out_bandlimit for l in spec.layers]
        if bands != bands[::-1]:
            return 1.0, 0.5
    return 0.0, 0.5


def check_miou(rng):
    a = np.array([[1, 0], [0, 0]])
    b = np.array([[1, 1], [0, 0]])
    worst = abs(dg.miou(a, b, 3) - 0.5)
    worst = max(worst, abs(dg.miou(b, b, 3) - 1.0))
    try:
        dg.miou(np.zeros((2, 2), int), np.zeros((2, 2), int), 3)
        worst = max(worst, 1.0)
    except ValueError:
        pass
    return worst, 1e-12


def check_dataset_determinism(rng):
    import io

    imgs, classes = dg.make_source_images(8, np.random.default_rng(0))
    cfg = dg.DataGenConfig(num_degrees=4, seed=3, rotated=True)
    blobs = []
    for _ in range(2):
        recs = list(dg.generate_dataset(cfg, imgs, classes, 3))
        buf = io.BytesIO()
        for r in recs:
            buf.write(r.rotation.tobytes())
            buf.write(r.signal.astype("<f4").tobytes())
            buf.write(r.mask.astype(np.uint8).tobytes())
        blobs.append(buf.getvalue())
    ok = blobs[0] == blobs[1]
    recs = list(dg.generate_dataset(cfg, imgs, classes, 3))
    closure = all(0 <= r.mask.min() and r.mask.max() < cfg.num_classes for r in recs)
    return 0.0 if (ok and closure) else 1.0, 0.5


def check_disk_cap_area(rng):
    L = 50
    yy, xx = np.meshgrid(np.arange(60) + 0.5, np.arange(60) + 0.5, indexing="ij")
    disk = (np.hypot(yy - 30, xx - 30) <= 30).astype(float)
    sig, _ = dg.project_canvas_to_sphere(
        dg.Canvas(disk, np.zeros((60, 60), int)), L, "pole"
    )
    grid = make_s2_grid(L)
    area = float(np.einsum("jk,j->", sig, grid.ring_weights))
    cap = 2 * np.pi * (1 - np.cos(np.pi / 4))
    return abs(area - cap) / cap, 0.02


def check_rotation_consistency(rng):
    L = 50
    yy, xx = np.meshgrid(np.arange(60) + 0.5, np.arange(60) + 0.5, indexing="ij")
    disk = (np.hypot(yy - 30, xx - 30) <= 30).astype(float)
    smooth = dg.Canvas(dg._soften(disk * 255.0, passes=6) / 255.0,
                       np.zeros((60, 60), int))
    R = random_rotation(rng)
    f0, _ = dg.project_canvas_to_sphere(smooth, L, "pole")
    fr, _ = dg.project_canvas_to_sphere(smooth, L, "pole", rotation=R)
    want = ops.rotate_s2_spectrum(tf.s2_analyze(f0[None]), R)
    got = tf.s2_analyze(fr[None])
    return float(np.linalg.norm(got - want) / np.linalg.norm(want)), 0.05


QUICK_CHECKS = [
    ("grids.beta_quadrature", check_beta_weights),
    ("grids.euler_round_trip", check_euler_round_trip),
    ("grids.random_rotation", check_rotation_matrices),
    ("transforms.s2_round_trip", check_s2_round_trip),
    ("transforms.so3_round_trip", check_so3_round_trip),
    ("transforms.sph_orthonormality", check_sph_orthonormality),
    ("transforms.wigner_orthogonality", check_wigner_orthogonality),
    ("transforms.parseval", check_parseval),
    ("transforms.adjoints", check_transform_adjoints),
    ("ops.lift_conv_vs_quadrature", check_lift_conv_quadrature),
    ("ops.conv_equivariance", check_conv_equivariance),
    ("ops.invariant_readout", check_invariant_readout),
    ("ops.orbit_average", check_orbit_average),
    ("network.kernel_spectrum_atoms", check_kernel_spectrum_atoms),
    ("network.gradients_fd", check_network_gradients),
    ("network.linear_equivariance", check_network_linear_equivariance),
    ("network.sampler", check_sampler),
    ("datagen.miou", check_miou),
    ("datagen.determinism", check_dataset_determinism),
]

FULL_CHECKS = QUICK_CHECKS + [
    ("ops.group_conv_vs_quadrature", check_group_conv_quadrature),
    ("ops.projection_position_space", check_projection_position_space),
    ("datagen.disk_cap_area", check_disk_cap_area),
    ("datagen.rotation_consistency", check_rotation_consistency),
]


def run_checks(level: str = "quick", tolerance_scale: float = 1.0, seed: int = 0):
    """Run the property suite; returns (results, all_ok)."""
    if level not in ("quick", "full"):
        raise ValueError(f"unknown verify level {level!r}")
    import zlib

    checks = QUICK_CHECKS if level == "quick" else FULL_CHECKS
    results = []
    for name, fn in checks:
        rng = np.random.default_rng(zlib.crc32(name.encode()) ^ seed)
        measured, tol = fn(rng)
        tol = tol * tolerance_scale
        results.append(CheckResult(name, bool(measured < tol), float(measured), tol))
    return results, all(r.ok for r in results)
