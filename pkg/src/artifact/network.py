"""Trainable equivariant layer stacks.

A model is an ordered list of spectral convolution layers:

* S2SO3conv: lifts a multichannel S2 signal to SO(3) (always first),
* SO3conv: group convolution SO(3) -> SO(3),
* SO3S2conv: group convolution followed by the n-summed projection back to
  S2 (always last for segmentation).

Kernels are parameterized by real weights on a small Euler-angle support
grid near the identity; kernel_weights_to_spectrum sums bandlimited deltas
at the support points, so the number of trainable weights is independent of
the bandlimit.  Each layer adds a per-channel bias as a constant spectral
shift (the ell = 0 mode), which commutes with rotation.

Between layers the signal takes a spatial hop (synthesize, ReLU, analyze)
at the layer's output bandlimit; the pointwise ReLU is the only operation
that is not exactly equivariant (aliasing), and the error shrinks as the
bandlimit grows.  Everything else is linear, so reverse-mode gradients are
assembled from the conjugate-transpose maps in ops/transforms; backward()
returns exact float64 gradients for the whole parameter vector.

Heads: "segmentation" ends with the SO3S2conv layer and emits per-class
logits on the S2 grid; "classification" ends with an SO(3) layer, an
invariant readout per channel, and one affine map to class scores.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import ops
from . import transforms as tf
from .grids import make_kernel_support_grid
from .harmonics import wigner_d_stack

LAYER_KINDS = ("S2SO3conv", "SO3conv", "SO3S2conv")
DEFAULT_SUPPORT_SO3 = (8, 3, 8)
DEFAULT_SUPPORT_S2 = (8, 3, 1)

MODEL_MAGIC = b"SPHM"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    in_bandlimit: int
    out_bandlimit: int
    beta_hat: float
    support_counts: tuple[int, int, int]

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if min(self.in_channels, self.out_channels) < 1:
            raise ValueError("channel counts must be >= 1")
        if min(self.in_bandlimit, self.out_bandlimit) < 1:
            raise ValueError("bandlimits must be >= 1")
        if not 0.0 < self.beta_hat <= np.pi:
            raise ValueError(f"beta_hat must lie in (0, pi], got {self.beta_hat}")
        object.__setattr__(self, "support_counts", tuple(self.support_counts))
        if self.kind == "S2SO3conv" and self.support_counts[2] != 1:
            raise ValueError("S2 kernels use a single gamma point")

    @property
    def support_size(self) -> int:
        a, b, g = self.support_counts
        return a * b * g

    @property
    def weight_count(self) -> int:
        return self.in_channels * self.out_channels * self.support_size

    @property
    def param_count(self) -> int:
        return self.weight_count + self.out_channels


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]
    head: str = "segmentation"
    nonlinearity: str = "relu"
    num_classes: int | None = None  # classification head width

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.head not in ("segmentation", "classification"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.nonlinearity not in ("relu", "none"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")

    def to_json(self) -> str:
        obj = {
            "head": self.head,
            "nonlinearity": self.nonlinearity,
            "num_classes": self.num_classes,
            "layers": [
                {
                    "kind": l.kind,
                    "in_channels": l.in_channels,
                    "out_channels": l.out_channels,
                    "in_bandlimit": l.in_bandlimit,
                    "out_bandlimit": l.out_bandlimit,
                    "beta_hat": l.beta_hat,
                    "support_counts": list(l.support_counts),
                }
                for l in self.layers
            ],
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "ModelSpec":
        obj = json.loads(text)
        layers = tuple(
            LayerSpec(
                kind=d["kind"],
                in_channels=d["in_channels"],
                out_channels=d["out_channels"],
                in_bandlimit=d["in_bandlimit"],
                out_bandlimit=d["out_bandlimit"],
                beta_hat=d["beta_hat"],
                support_counts=tuple(d["support_counts"]),
            )
            for d in obj["layers"]
        )
        return ModelSpec(
            layers=layers,
            head=obj["head"],
            nonlinearity=obj["nonlinearity"],
            num_classes=obj["num_classes"],
        )


def validate_model_spec(spec: ModelSpec) -> None:
    """Raise ValueError unless layers chain correctly for the head."""
    if not spec.layers:
        raise ValueError("model has no layers")
    if spec.layers[0].kind != "S2SO3conv":
        raise ValueError("first layer must lift from S2")
    for lay in spec.layers[1:]:
        if lay.kind == "S2SO3conv":
            raise ValueError("only the first layer may lift from S2")
    for prev, cur in zip(spec.layers, spec.layers[1:]):
        if cur.in_channels != prev.out_channels:
            raise ValueError(
                f"channel chain broken: {prev.out_channels} -> {cur.in_channels}"
            )
        if cur.in_bandlimit != prev.out_bandlimit:
            raise ValueError(
                f"bandlimit chain broken: {prev.out_bandlimit} -> {cur.in_bandlimit}"
            )
    last = spec.layers[-1]
    if spec.head == "segmentation":
        if last.kind != "SO3S2conv":
            raise ValueError("segmentation head requires a final SO3S2conv layer")
    else:
        if last.kind == "SO3S2conv":
            raise ValueError("classification head ends on SO(3), not S2")
        if not spec.num_classes or spec.num_classes < 1:
            raise ValueError("classification head needs num_classes >= 1")


def count_parameters(spec: ModelSpec) -> int:
    total = sum(l.param_count for l in spec.layers)
    if spec.head == "classification":
        total += spec.layers[-1].out_channels * spec.num_classes + spec.num_classes
    return total


def param_slices(spec: ModelSpec) -> list[tuple[slice, slice]]:
    """Per layer, (weights slice, biases slice) into the flat vector."""
    out = []
    pos = 0
    for lay in spec.layers:
        w = slice(pos, pos + lay.weight_count)
        b = slice(w.stop, w.stop + lay.out_channels)
        out.append((w, b))
        pos = b.stop
    return out


# ---------------------------------------------------------------------------
# kernel spectra from support-grid weights


@lru_cache(maxsize=32)
def _s2_atom_matrix(num_degrees: int, beta_max: float, counts: tuple[int, int, int]):
    """(support_size, L^2) bandlimited deltas at the support points."""
    grid = make_kernel_support_grid(beta_max, counts)
    pts = grid.points
    return tf.s2_delta_spectrum(num_degrees, pts[:, 1], pts[:, 0])


@lru_cache(maxsize=32)
def _so3_support_d(num_degrees: int, beta_max: float, n_beta: int):
    """Wigner-d stack at the distinct support betas."""
    betas = beta_max * np.arange(1, n_beta + 1) / n_beta
    return wigner_d_stack(num_degrees, betas)


def kernel_weights_to_spectrum(layer: LayerSpec, weights: np.ndarray) -> np.ndarray:
    """Kernel spectrum kappahat = sum_p w_p (delta atom at support point p).

    weights: (out_channels, in_channels, support_size) real, or anything
    reshapeable to it.  Returns (out_channels, in_channels, modes) complex.
    """
    expected = (layer.out_channels, layer.in_channels, layer.support_size)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size != np.prod(expected):
        raise ValueError(f"expected {expected} weights, got shape {weights.shape}")
    weights = weights.reshape(expected)
    L = layer.in_bandlimit
    if layer.kind == "S2SO3conv":
        atoms = _s2_atom_matrix(L, layer.beta_hat, layer.support_counts)
        return weights @ atoms
    n_alpha, n_beta, n_gamma = layer.support_counts
    # support points are ordered (beta, alpha, gamma); the delta spectrum at
    # (alpha_a, beta_b, gamma_g) factorizes as
    # e^{+im alpha_a} d^ell_mn(beta_b) e^{+in gamma_g} (2ell+1)/(8 pi^2),
    # so the alpha/gamma sums are tiny DFTs and only the betas need Wigner-d.
    w = weights.reshape(
        (layer.out_channels, layer.in_channels, n_beta, n_alpha, n_gamma)
    )
    t = np.fft.ifft(w, axis=-2) * n_alpha
    t = np.fft.ifft(t, axis=-1) * n_gamma  # (o, i, b, alpha bin, gamma bin)
    d = _so3_support_d(L, layer.beta_hat, n_beta)
    out = np.zeros(
        (layer.out_channels, layer.in_channels, tf.so3_mode_count(L)),
        dtype=np.complex128,
    )
    for ell in range(L):
        c = (2 * ell + 1) / (8 * np.pi**2)
        ms = np.arange(-ell, ell + 1)
        tg = t[..., ms % n_alpha, :][..., ms % n_gamma]  # (o, i, b, m, n)
        blk = np.einsum("mnb,oibmn->oimn", d[ell], tg)
        tf.so3_block(out, ell)[...] = c * blk
    return out


def kernel_weights_to_spectrum_grad(
    layer: LayerSpec, grad_spectrum: np.ndarray
) -> np.ndarray:
    """Pullback of kernel_weights_to_spectrum onto the real weights."""
    grad_spectrum = np.asarray(grad_spectrum, dtype=np.complex128)
    L = layer.in_bandlimit
    if layer.kind == "S2SO3conv":
        atoms = _s2_atom_matrix(L, layer.beta_hat, layer.support_counts)
        return np.real(grad_spectrum @ np.conj(atoms).T)
    n_alpha, n_beta, n_gamma = layer.support_counts
    d = _so3_support_d(L, layer.beta_hat, n_beta)
    # accumulate over signed orders, then fold onto the DFT bins
    acc_m = np.zeros(
        (layer.out_channels, layer.in_channels, n_beta, 2 * L - 1, 2 * L - 1),
        dtype=np.complex128,
    )
    for ell in range(L):
        c = (2 * ell + 1) / (8 * np.pi**2)
        g_blk = tf.so3_block(grad_spectrum, ell)
        u = c * np.einsum("mnb,oimn->oibmn", d[ell], g_blk)
        sl = slice(L - 1 - ell, L + ell)
        acc_m[..., sl, sl] += u
    ms = np.arange(-(L - 1), L)
    folded = np.zeros(
        (layer.out_channels, layer.in_channels, n_beta, n_alpha, n_gamma),
        dtype=np.complex128,
    )
    # fold m = r (mod n_alpha), n = s (mod n_gamma)
    mid = np.zeros(acc_m.shape[:-2] + (n_alpha, 2 * L - 1), dtype=np.complex128)
    for idx, m in enumerate(ms):
        mid[..., m % n_alpha, :] += acc_m[..., idx, :]
    for idx, m in enumerate(ms):
        folded[..., m % n_gamma] += mid[..., idx]
    # conj(atom) carries e^{-im alpha_a} e^{-in gamma_g}: forward DFT on bins
    gw = np.fft.fft(np.fft.fft(folded, axis=-2), axis=-1)
    return np.real(gw).reshape(
        (layer.out_channels, layer.in_channels, layer.support_size)
    )


# ---------------------------------------------------------------------------
# pointwise nonlinearity and loss


def relu_pointwise(signal: np.ndarray) -> np.ndarray:
    """max(0, value) per sample point (spatial domain)."""
    return np.maximum(np.asarray(signal), 0.0)


def softmax_xent_loss(logits: np.ndarray, target: np.ndarray):
    """Mean pointwise cross entropy over all scored points.

    Segmentation: logits (..., C, n_theta, n_phi), target (..., n_theta,
    n_phi) integer class per grid point.  Classification: logits (..., C),
    target (...).  Returns (loss, grad) with grad shaped like logits;
    grad = (softmax - onehot) / N where N counts all scored points.
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target)
    if target.shape == logits.shape[:-3] + logits.shape[-2:]:
        axis = -3
        tidx = target[..., None, :, :]
    elif target.shape == logits.shape[:-1]:
        axis = -1
        tidx = target[..., None]
    else:
        raise ValueError(f"target shape {target.shape} does not match logits")
    C = logits.shape[axis]
    if target.min() < 0 or target.max() >= C:
        raise ValueError(f"target values must lie in [0, {C})")
    shifted = logits - logits.max(axis=axis, keepdims=True)
    expv = np.exp(shifted)
    logz = np.log(expv.sum(axis=axis, keepdims=True))
    softmax = expv / expv.sum(axis=axis, keepdims=True)
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, tidx, 1.0, axis=axis)
    n_points = target.size
    loss = float((onehot * (logz - shifted)).sum() / n_points)
    grad = (softmax - onehot) / n_points
    return loss, grad


# ---------------------------------------------------------------------------
# initialization


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Gaussian kernel weights scaled for roughly unit signal power, zero
    biases, small head."""
    params = np.zeros(count_parameters(spec), dtype=np.float64)
    for lay, (wsl, _) in zip(spec.layers, param_slices(spec)):
        p = lay.support_size
        if lay.kind == "S2SO3conv":
            sigma = 1.0 / np.sqrt(2 * np.pi * lay.in_channels * p)
        else:
            sigma = 1.0 / np.sqrt(lay.in_channels * p * lay.in_bandlimit)
        params[wsl] = sigma * rng.standard_normal(lay.weight_count)
    if spec.head == "classification":
        n_feat = spec.layers[-1].out_channels
        hw = spec.num_classes * n_feat
        params[-hw - spec.num_classes : -spec.num_classes] = rng.standard_normal(
            hw
        ) / np.sqrt(n_feat)
    return params


# ---------------------------------------------------------------------------
# forward / backward


def _constant_mode_scale(layer: LayerSpec) -> float:
    # a unit bias shifts the signal by a constant; on SO(3) the constant c has
    # coefficient c at block 0, on S2 it is c*sqrt(4 pi)
    return np.sqrt(4 * np.pi) if layer.kind == "SO3S2conv" else 1.0


def forward(spec: ModelSpec, params: np.ndarray, signal: np.ndarray):
    """Run the stack on a batch of spherical signals.

    signal: (batch, in_channels, 2L, 2L) real samples with L equal to the
    first layer's input bandlimit.  Returns (output, tape); output is
    (batch, classes, 2L', 2L') logits for segmentation or (batch, classes)
    scores for classification.
    """
    validate_model_spec(spec)
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (count_parameters(spec),):
        raise ValueError(
            f"expected {count_parameters(spec)} parameters, got {params.shape}"
        )
    signal = np.asarray(signal, dtype=np.float64)
    first = spec.layers[0]
    n = 2 * first.in_bandlimit
    if signal.ndim != 4 or signal.shape[1:] != (first.in_channels, n, n):
        raise ValueError(
            f"expected samples (batch, {first.in_channels}, {n}, {n}), got {signal.shape}"
        )
    slices = param_slices(spec)
    tape = {"params": params.copy(), "layers": []}
    x = tf.s2_analyze(signal)  # (batch, c, L^2)
    for idx, lay in enumerate(spec.layers):
        wsl, bsl = slices[idx]
        kappa = kernel_weights_to_spectrum(lay, params[wsl])
        entry = {"x": x, "kappa": kappa}
        if lay.kind == "S2SO3conv":
            y = ops.conv_s2_to_so3(kappa, x)
            y = tf.so3_resample(y, lay.out_bandlimit)
        elif lay.kind == "SO3conv":
            y = ops.conv_so3(kappa, x)
            y = tf.so3_resample(y, lay.out_bandlimit)
        else:  # SO3S2conv
            y = ops.conv_so3(kappa, x)
            y = tf.so3_resample(y, lay.out_bandlimit)
            y = ops.so3_to_s2_spectrum(y)
        y[..., 0] += params[bsl] * _constant_mode_scale(lay)
        last = idx == len(spec.layers) - 1
        if not last and spec.nonlinearity == "relu":
            spatial = tf.so3_synthesize(y).real
            mask = spatial > 0.0
            entry["mask"] = mask
            x = tf.so3_analyze(spatial * mask)
        else:
            entry["mask"] = None
            x = y
        tape["layers"].append(entry)
    if spec.head == "segmentation":
        output = tf.s2_synthesize(x).real
        tape["features"] = None
    else:
        feats = ops.invariant_readout(x)  # (batch, c)
        n_feat = spec.layers[-1].out_channels
        K = spec.num_classes
        hw = params[-K * n_feat - K : -K].reshape(K, n_feat)
        hb = params[-K:]
        output = feats @ hw.T + hb
        tape["features"] = feats
    tape["output_spectrum"] = x
    return output, tape


def backward(
    spec: ModelSpec, params: np.ndarray, tape: dict, grad_output: np.ndarray
) -> np.ndarray:
    """Exact gradient of a scalar loss w.r.t. the flat parameter vector.

    grad_output is the loss gradient at forward's output (real, same shape).
    """
    params = np.asarray(params, dtype=np.float64)
    if not np.array_equal(tape["params"], params):
        raise ValueError("stale tape: parameters changed since forward()")
    grad_output = np.asarray(grad_output, dtype=np.float64)
    slices = param_slices(spec)
    grads = np.zeros_like(params)
    if spec.head == "segmentation":
        gx = tf.s2_synthesize_adjoint(grad_output)
    else:
        feats = tape["features"]
        n_feat = spec.layers[-1].out_channels
        K = spec.num_classes
        hw = params[-K * n_feat - K : -K].reshape(K, n_feat)
        grads[-K:] = grad_output.sum(axis=0)
        gw = grad_output.T @ feats  # (K, n_feat)
        grads[-K * n_feat - K : -K] = gw.ravel()
        gfeat = grad_output @ hw  # (batch, c)
        gx = np.zeros_like(tape["output_spectrum"])
        gx[..., 0] = 8 * np.pi**2 * gfeat
    for idx in range(len(spec.layers) - 1, -1, -1):
        lay = spec.layers[idx]
        wsl, bsl = slices[idx]
        entry = tape["layers"][idx]
        if entry["mask"] is not None:
            spatial_grad = tf.so3_analyze_adjoint(gx).real * entry["mask"]
            gx = tf.so3_synthesize_adjoint(spatial_grad)
        # bias gradient: real part of the constant-mode cotangent
        batch_axes = tuple(range(gx.ndim - 2))
        grads[bsl] = gx[..., 0].real.sum(axis=batch_axes or None) * (
            _constant_mode_scale(lay)
        )
        if lay.kind == "SO3S2conv":
            gy = ops.so3_to_s2_spectrum_adjoint(gx)
            gy = tf.so3_resample(gy, lay.in_bandlimit)
            gkappa = ops.conv_so3_grad_kappa(entry["x"], gy)
            gx = ops.conv_so3_grad_signal(entry["kappa"], gy)
        elif lay.kind == "SO3conv":
            gy = tf.so3_resample(gx, lay.in_bandlimit)
            gkappa = ops.conv_so3_grad_kappa(entry["x"], gy)
            gx = ops.conv_so3_grad_signal(entry["kappa"], gy)
        else:  # S2SO3conv
            gy = tf.so3_resample(gx, lay.in_bandlimit)
            gkappa = ops.conv_s2_to_so3_grad_kappa(entry["x"], gy)
            if idx > 0:
                gx = ops.conv_s2_to_so3_grad_signal(entry["kappa"], gy)
        grads[wsl] = kernel_weights_to_spectrum_grad(lay, gkappa).ravel()
    return grads


# ---------------------------------------------------------------------------
# optimizer


def adam_init(num_params: int) -> dict:
    return {
        "step": 0,
        "m": np.zeros(num_params, dtype=np.float64),
        "v": np.zeros(num_params, dtype=np.float64),
    }


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: dict,
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> np.ndarray:
    """One Adam update; mutates state, returns new params."""
    b1, b2 = betas
    state["step"] += 1
    t = state["step"]
    state["m"] = b1 * state["m"] + (1 - b1) * grads
    state["v"] = b2 * state["v"] + (1 - b2) * grads * grads
    mhat = state["m"] / (1 - b1**t)
    vhat = state["v"] / (1 - b2**t)
    return params - lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# architecture sampler


def sample_equivariant_architecture(
    param_lo: int,
    param_hi: int,
    input_bandlimit: int,
    input_channels: int,
    out_channels: int,
    rng: np.random.Generator,
    max_tries: int = 1000,
) -> ModelSpec:
    """Random U-shaped segmentation stack with a parameter-count budget.

    Depth (number of downsampling layers) ~ U{1..max(1, param_hi // 20000)};
    bandlimits interpolate linearly from the input bandlimit down to a
    bottleneck ~ U{3..20} and mirror back up; channels interpolate from 11
    up to a maximum ~ U{11..30}; each layer's kernel radius keeps
    beta_hat * (input bandlimit of the layer) = L * beta_ref with
    beta_ref ~ U[0.02, 0.25].  Draws are rejected until the parameter count
    lands in [param_lo, param_hi], the bandlimit profile is monotone down
    then up, and every beta_hat fits in (0, pi].
    """
    if not param_lo < param_hi:
        raise ValueError("need param_lo < param_hi")
    L = int(input_bandlimit)
    for _ in range(max_tries):
        depth = int(rng.integers(1, max(1, param_hi // 20000) + 1))
        bottleneck = int(rng.integers(3, 21))
        beta_ref = float(rng.uniform(0.02, 0.25))
        c_max = int(rng.integers(11, 31))
        if bottleneck > L:
            continue  # keep the bandlimit profile monotone down then up
        down_b = [
            int(round(L + (bottleneck - L) * k / depth)) for k in range(1, depth + 1)
        ]
        bands = [L] + down_b + down_b[-2::-1] + [L]  # layer output bandlimits
        if depth == 1:
            down_c = [11]
        else:
            down_c = [
                int(round(11 + (c_max - 11) * (k - 1) / (depth - 1)))
                for k in range(1, depth + 1)
            ]
        chans = [input_channels] + down_c + down_c[-2::-1] + [out_channels]
        layers = []
        ok = True
        for k in range(2 * depth):
            b_in, b_out = bands[k], bands[k + 1]
            beta_hat = beta_ref * L / b_in
            if beta_hat > np.pi:
                ok = False
                break
            if k == 0:
                kind, counts = "S2SO3conv", DEFAULT_SUPPORT_S2
            elif k == 2 * depth - 1:
                kind, counts = "SO3S2conv", DEFAULT_SUPPORT_SO3
            else:
                kind, counts = "SO3conv", DEFAULT_SUPPORT_SO3
            layers.append(
                LayerSpec(
                    kind=kind,
                    in_channels=chans[k],
                    out_channels=chans[k + 1],
                    in_bandlimit=b_in,
                    out_bandlimit=b_out,
                    beta_hat=beta_hat,
                    support_counts=counts,
                )
            )
        if not ok:
            continue
        spec = ModelSpec(layers=tuple(layers), head="segmentation")
        if param_lo <= count_parameters(spec) <= param_hi:
            validate_model_spec(spec)
            return spec
    raise RuntimeError(
        f"no architecture with {param_lo}..{param_hi} parameters found "
        f"in {max_tries} tries"
    )


# ---------------------------------------------------------------------------
# model file I/O


def save_model(
    path, spec: ModelSpec, params: np.ndarray, adam_state: dict | None = None
) -> None:
    """Binary model file: magic, version, spec JSON, parameters, and
    optionally the optimizer state.  Little-endian throughout."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (count_parameters(spec),):
        raise ValueError("parameter vector does not match spec")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<I", MODEL_VERSION))
    blob = spec.to_json().encode("utf-8")
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<Q", params.size))
    buf.write(params.astype("<f8").tobytes())
    if adam_state is None:
        buf.write(struct.pack("<B", 0))
    else:
        buf.write(struct.pack("<B", 1))
        buf.write(struct.pack("<Q", adam_state["step"]))
        buf.write(adam_state["m"].astype("<f8").tobytes())
        buf.write(adam_state["v"].astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path):
    """Inverse of save_model: (spec, params, adam_state or None)."""
    with open(path, "rb") as fh:
        data = fh.read()
    view = memoryview(data)
    if bytes(view[:4]) != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    (spec_len,) = struct.unpack_from("<Q", view, 8)
    pos = 16
    spec = ModelSpec.from_json(bytes(view[pos : pos + spec_len]).decode("utf-8"))
    pos += spec_len
    (count,) = struct.unpack_from("<Q", view, pos)
    pos += 8
    params = np.frombuffer(view, dtype="<f8", count=count, offset=pos).copy()
    pos += 8 * count
    (flag,) = struct.unpack_from("<B", view, pos)
    pos += 1
    state = None
    if flag:
        (step,) = struct.unpack_from("<Q", view, pos)
        pos += 8
        m = np.frombuffer(view, dtype="<f8", count=count, offset=pos).copy()
        pos += 8 * count
        v = np.frombuffer(view, dtype="<f8", count=count, offset=pos).copy()
        pos += 8 * count
        state = {"step": step, "m": m, "v": v}
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes in model file")
    if count != count_parameters(spec):
        raise ValueError(f"{path}: parameter count does not match spec")
    return spec, params, state
