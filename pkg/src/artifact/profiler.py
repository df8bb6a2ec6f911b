"""Per-layer latency profiling for layer stacks.

Times a forward pass layer by layer over repeated warm iterations and
reports mean +/- standard error in milliseconds, each layer's fraction of
the total, and a breakdown by operation category:

* transform: harmonic analysis/synthesis and bandlimit resampling,
* block_multiply: kernel spectrum assembly, the per-degree block products
  of the convolutions, and the SO(3)->S2 block contraction,
* pointwise: bias shifts, ReLU, taking real parts.

Fractions are computed from the same accumulated clock, so layer fractions
sum to 100% up to float rounding.  The final SO(3)->S2 layer appears as its
own row like every other layer.
"""

from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np

from . import network as net
from . import ops
from . import transforms as tf

CATEGORIES = ("transform", "block_multiply", "pointwise")


class _Clock:
    def __init__(self, num_layers):
        self.layer = np.zeros(num_layers)
        self.cat = dict.fromkeys(CATEGORIES, 0.0)

    @contextmanager
    def track(self, layer_idx, category):
        t0 = time.perf_counter()
        yield
        dt = time.perf_counter() - t0
        self.layer[layer_idx] += dt
        self.cat[category] += dt


def _timed_forward(spec, params, signal, clock: _Clock):
    """network.forward with per-layer/per-category instrumentation."""
    slices = net.param_slices(spec)
    with clock.track(0, "transform"):
        x = tf.s2_analyze(signal)
    for idx, lay in enumerate(spec.layers):
        wsl, bsl = slices[idx]
        with clock.track(idx, "block_multiply"):
            kappa = net.kernel_weights_to_spectrum(lay, params[wsl])
            if lay.kind == "S2SO3conv":
                y = ops.conv_s2_to_so3(kappa, x)
            else:
                y = ops.conv_so3(kappa, x)
        with clock.track(idx, "transform"):
            y = tf.so3_resample(y, lay.out_bandlimit)
        if lay.kind == "SO3S2conv":
            with clock.track(idx, "block_multiply"):
                y = ops.so3_to_s2_spectrum(y)
        with clock.track(idx, "pointwise"):
            y[..., 0] += params[bsl] * net._constant_mode_scale(lay)
        last = idx == len(spec.layers) - 1
        if not last and spec.nonlinearity == "relu":
            with clock.track(idx, "transform"):
                spatial = tf.so3_synthesize(y)
            with clock.track(idx, "pointwise"):
                spatial = net.relu_pointwise(spatial.real)
            with clock.track(idx, "transform"):
                x = tf.so3_analyze(spatial)
        else:
            x = y
    lastidx = len(spec.layers) - 1
    if spec.head == "segmentation":
        with clock.track(lastidx, "transform"):
            out = tf.s2_synthesize(x)
        with clock.track(lastidx, "pointwise"):
            out = out.real
        return out
    with clock.track(lastidx, "block_multiply"):
        feats = ops.invariant_readout(x)
        K = spec.num_classes
        n_feat = spec.layers[-1].out_channels
        hw = params[-K * n_feat - K : -K].reshape(K, n_feat)
        out = feats @ hw.T + params[-K:]
    return out


def profile_model(
    spec,
    params,
    signal,
    iterations: int = 30,
    warmup: int = 3,
    threads: int | None = None,
):
    """Profile forward passes on the given input batch.

    Returns a report dict: per-layer rows (name, mean_ms, stderr_ms,
    fraction_pct), per-operation fraction_pct, total mean ms, and the run
    settings.  iterations must be >= 30 for a stable standard error unless
    explicitly lowered.
    """
    net.validate_model_spec(spec)
    params = np.asarray(params, dtype=np.float64)
    signal = np.asarray(signal, dtype=np.float64)
    n_layers = len(spec.layers)
    for _ in range(warmup):
        _timed_forward(spec, params, signal, _Clock(n_layers))
    per_iter = np.zeros((iterations, n_layers))
    cats = dict.fromkeys(CATEGORIES, 0.0)
    for it in range(iterations):
        clock = _Clock(n_layers)
        _timed_forward(spec, params, signal, clock)
        per_iter[it] = clock.layer
        for k in CATEGORIES:
            cats[k] += clock.cat[k]
    mean = per_iter.mean(axis=0)
    stderr = per_iter.std(axis=0, ddof=1) / np.sqrt(iterations)
    total = mean.sum()
    cat_total = sum(cats.values())
    layers = [
        {
            "name": f"layer{idx + 1}:{lay.kind}",
            "kind": lay.kind,
            "in_bandlimit": lay.in_bandlimit,
            "out_bandlimit": lay.out_bandlimit,
            "mean_ms": 1e3 * mean[idx],
            "stderr_ms": 1e3 * stderr[idx],
            "fraction_pct": 100.0 * mean[idx] / total,
        }
        for idx, lay in enumerate(spec.layers)
    ]
    return {
        "iterations": iterations,
        "warmup": warmup,
        "batch": int(signal.shape[0]),
        "threads": threads,
        "total_mean_ms": 1e3 * total,
        "layers": layers,
        "ops": {k: 100.0 * cats[k] / cat_total for k in CATEGORIES},
    }


def format_report(report: dict) -> str:
    lines = [
        f"profile: batch={report['batch']} iterations={report['iterations']}"
        f" threads={report['threads']}",
        f"total {report['total_mean_ms']:.2f} ms/pass",
        f"{'layer':<24}{'mean ms':>10}{'stderr':>10}{'fraction':>10}",
    ]
    for row in report["layers"]:
        lines.append(
            f"{row['name']:<24}{row['mean_ms']:>10.3f}{row['stderr_ms']:>10.3f}"
            f"{row['fraction_pct']:>9.2f}%"
        )
    frac_sum = sum(r["fraction_pct"] for r in report["layers"])
    lines.append(f"{'sum':<24}{'':>10}{'':>10}{frac_sum:>9.2f}%")
    lines.append(
        "ops: "
        + "  ".join(f"{k}={v:.2f}%" for k, v in report["ops"].items())
    )
    return "\n".join(lines)
