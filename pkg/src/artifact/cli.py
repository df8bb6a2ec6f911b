"""Command-line interface.

Subcommands: gen-sources, gen-data, gen-model, train, eval, verify,
profile.  Every run is seeded; commands that write files also write a
<out>.config.json describing exactly how the output was produced.  Flags
can be defaulted through environment variables named ARTIFACT_<FLAG>
(dashes as underscores, e.g. ARTIFACT_BATCH_SIZE=16); explicit flags win.

Exit codes: 0 success, 2 validation failure (bad metrics, failed checks,
incompatible model/dataset), 3 I/O error (missing or malformed files),
4 configuration error (bad flag values).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time

import numpy as np

from . import datagen as dg
from . import network as net
from . import profiler
from . import verify as verify_mod

ENV_PREFIX = "ARTIFACT_"


class ConfigError(Exception):
    exit_code = 4


class DataError(Exception):
    exit_code = 3


class ValidationError(Exception):
    exit_code = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _env(name: str, cast, fallback):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return fallback
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad {ENV_PREFIX}{name.upper()}: {raw!r}") from exc


def _limit_threads(threads):
    if threads is None:
        return contextlib.nullcontext()
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # best effort without the helper
        os.environ.setdefault("OMP_NUM_THREADS", str(threads))
        return contextlib.nullcontext()
    return threadpool_limits(limits=threads)


def _write_config(out_path: str, command: str, args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["command"] = command
    with open(out_path + ".config.json", "w") as fh:
        json.dump(cfg, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_model(path):
    try:
        return net.load_model(path)
    except OSError as exc:
        raise DataError(f"cannot read model: {exc}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _load_dataset(path):
    try:
        return dg.load_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset: {exc}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _dataset_arrays(header, records):
    n = 2 * header["num_degrees"]
    X = np.zeros((len(records), 1, n, n))
    T = np.zeros((len(records), n, n), dtype=np.int64)
    for i, rec in enumerate(records):
        X[i, 0] = rec.signal
        T[i] = rec.mask
    return X, T


def _check_compatible(spec: net.ModelSpec, header) -> None:
    first = spec.layers[0]
    if first.in_channels != 1:
        raise ValidationError("model expects multichannel input, dataset has 1")
    if first.in_bandlimit != header["num_degrees"]:
        raise ValidationError(
            f"model bandlimit {first.in_bandlimit} != dataset {header['num_degrees']}"
        )
    if spec.head == "segmentation":
        if spec.layers[-1].out_channels != header["num_classes"]:
            raise ValidationError(
                f"model classes {spec.layers[-1].out_channels} != dataset"
                f" {header['num_classes']}"
            )


def _forward_all(spec, params, X, batch_size):
    outs = []
    for i in range(0, len(X), batch_size):
        out, _ = net.forward(spec, params, X[i : i + batch_size])
        outs.append(out)
    return np.concatenate(outs, axis=0)


def _segmentation_metrics(spec, params, X, T, num_classes, batch_size):
    logits = _forward_all(spec, params, X, batch_size)
    pred = np.argmax(logits, axis=1)
    try:
        non_bg = dg.miou(pred, T, num_classes, drop_background=True)
    except ValueError as exc:
        raise ValidationError(f"undefined metric: {exc}") from exc
    per_class = dg.per_class_iou(pred, T, num_classes)
    return {
        "miou_non_background": non_bg,
        "miou_per_class": [None if np.isnan(v) else float(v) for v in per_class],
        "accuracy": float((pred == T).mean()),
    }


# ---------------------------------------------------------------------------
# commands


def cmd_gen_sources(args):
    rng = np.random.default_rng(args.seed)
    images, classes = dg.make_source_images(args.count, rng, args.classes)
    try:
        dg.save_source_images(args.out, images, classes)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    _write_config(args.out, "gen-sources", args)
    print(f"wrote {args.count} source images to {args.out}")
    return 0


def cmd_gen_data(args):
    try:
        images, classes = dg.load_source_images(args.sources)
    except OSError as exc:
        raise DataError(f"cannot read sources: {exc}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    try:
        cfg = dg.DataGenConfig(
            num_degrees=args.bandlimit,
            items_per_sphere=args.items_per_sphere,
            threshold=args.threshold,
            projection_point=args.projection_point,
            rotated=args.rotated,
            seed=args.seed,
            num_classes=args.classes,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    records = dg.generate_dataset(cfg, images, classes, args.count)
    try:
        dg.save_dataset(args.out, cfg, records)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    _write_config(args.out, "gen-data", args)
    print(f"wrote {args.count} records (L={args.bandlimit}, "
          f"rotated={args.rotated}) to {args.out}")
    return 0


def cmd_gen_model(args):
    if args.param_lo >= args.param_hi:
        raise ConfigError("--param-lo must be below --param-hi")
    rng = np.random.default_rng(args.seed)
    try:
        spec = net.sample_equivariant_architecture(
            args.param_lo, args.param_hi, args.bandlimit, args.in_channels,
            args.classes, rng,
        )
    except RuntimeError as exc:
        raise ValidationError(str(exc)) from exc
    params = net.init_params(spec, rng)
    try:
        net.save_model(args.out, spec, params)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    _write_config(args.out, "gen-model", args)
    print(
        f"sampled {len(spec.layers)}-layer model, "
        f"{net.count_parameters(spec)} parameters, to {args.out}"
    )
    return 0


def cmd_train(args):
    spec, params, state = _load_model(args.model)
    header, records = _load_dataset(args.data)
    _check_compatible(spec, header)
    X, T = _dataset_arrays(header, records)
    if len(X) == 0:
        raise ValidationError("dataset is empty")
    if args.val_data is not None:
        vheader, vrecords = _load_dataset(args.val_data)
        _check_compatible(spec, vheader)
        VX, VT = _dataset_arrays(vheader, vrecords)
    else:
        VX, VT = X, T
    metrics_path = args.metrics or args.out + ".metrics.jsonl"
    rng = np.random.default_rng(args.seed)
    if state is None:
        state = net.adam_init(params.size)
    best = (-np.inf, params.copy(), 0)  # miou, params, epoch
    stale = 0
    t_start = time.time()
    with _limit_threads(args.threads), open(metrics_path, "w") as log:
        for epoch in range(1, args.epochs + 1):
            perm = rng.permutation(len(X))
            total = 0.0
            for i in range(0, len(X), args.batch_size):
                sel = perm[i : i + args.batch_size]
                out, tape = net.forward(spec, params, X[sel])
                loss, gout = net.softmax_xent_loss(out, T[sel])
                grads = net.backward(spec, params, tape, gout)
                params = net.adam_step(params, grads, state, lr=args.lr)
                total += loss * len(sel)
            mets = _segmentation_metrics(
                spec, params, VX, VT, header["num_classes"], args.batch_size
            )
            row = {
                "epoch": epoch,
                "loss": total / len(X),
                "miou": mets["miou_non_background"],
                "wall_time_s": time.time() - t_start,
            }
            log.write(json.dumps(row, sort_keys=True) + "\n")
            log.flush()
            print(f"epoch {epoch}: loss {row['loss']:.4f} "
                  f"miou {row['miou']:.4f}", flush=True)
            if row["miou"] > best[0]:
                best = (row["miou"], params.copy(), epoch)
                stale = 0
            else:
                stale += 1
                if stale >= args.patience:
                    print(f"early stop at epoch {epoch} "
                          f"(best epoch {best[2]})")
                    break
    try:
        net.save_model(args.out, spec, best[1], state)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    _write_config(args.out, "train", args)
    print(f"saved best model (epoch {best[2]}, miou {best[0]:.4f}) to {args.out}")
    return 0


def cmd_eval(args):
    spec, params, _ = _load_model(args.model)
    header, records = _load_dataset(args.data)
    _check_compatible(spec, header)
    X, T = _dataset_arrays(header, records)
    if len(X) == 0:
        raise ValidationError("dataset is empty")
    with _limit_threads(args.threads):
        mets = _segmentation_metrics(
            spec, params, X, T, header["num_classes"], args.batch_size
        )
    mets["count"] = len(X)
    print(json.dumps(mets, sort_keys=True))
    return 0


def cmd_verify(args):
    with _limit_threads(args.threads):
        results, ok = verify_mod.run_checks(
            level=args.level, tolerance_scale=args.tolerance_scale, seed=args.seed
        )
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: "
              f"measured {r.measured:.3e}, tolerance {r.tolerance:.1e}")
    print(f"{sum(r.ok for r in results)}/{len(results)} checks passed")
    if not ok:
        raise ValidationError("verification failed")
    return 0


def cmd_profile(args):
    spec, params, _ = _load_model(args.model)
    first = spec.layers[0]
    n = 2 * first.in_bandlimit
    rng = np.random.default_rng(args.seed)
    signal = rng.standard_normal((args.batch_size, first.in_channels, n, n))
    with _limit_threads(args.threads):
        report = profiler.profile_model(
            spec, params, signal, iterations=args.iterations, threads=args.threads
        )
    print(profiler.format_report(report))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=1)
            fh.write("\n")
        _write_config(args.out, "profile", args)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, *names):
    if "seed" in names:
        p.add_argument("--seed", type=int, default=_env("seed", int, 0),
                       help="rng seed (default 0)")
    if "threads" in names:
        p.add_argument("--threads", type=int, default=_env("threads", int, None),
                       help="pin BLAS/FFT thread count")
    if "out" in names:
        p.add_argument("--out", required=_env("out", str, None) is None,
                       default=_env("out", str, None), help="output path")
    if "batch-size" in names:
        p.add_argument("--batch-size", type=int,
                       default=_env("batch-size", int, 32))


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(
        prog="artifact",
        description="Equivariant spherical segmentation toolkit",
        epilog="Environment defaults: ARTIFACT_<FLAG> (e.g. ARTIFACT_SEED).",
    )
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-sources", help="write a synthetic source-image pool")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--classes", type=int, default=11,
                   help="number of classes incl. background")
    _add_common(p, "seed", "out")
    p.set_defaults(func=cmd_gen_sources)

    p = sub.add_parser("gen-data", help="generate a spherical dataset")
    p.add_argument("--sources", required=True, help="source-image container")
    p.add_argument("--bandlimit", type=int,
                   default=_env("bandlimit", int, 16))
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--items-per-sphere", type=int, default=1)
    p.add_argument("--threshold", type=int, default=150)
    p.add_argument("--projection-point", choices=dg.PROJECTION_POINTS,
                   default="pole")
    p.add_argument("--rotated", action="store_true")
    p.add_argument("--classes", type=int, default=11)
    _add_common(p, "seed", "out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-model", help="sample a random equivariant model")
    p.add_argument("--param-lo", type=int, default=10000)
    p.add_argument("--param-hi", type=int, default=30000)
    p.add_argument("--bandlimit", type=int, default=_env("bandlimit", int, 16))
    p.add_argument("--in-channels", type=int, default=1)
    p.add_argument("--classes", type=int, default=11)
    _add_common(p, "seed", "out")
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--val-data", default=None,
                   help="dataset for the early-stopping metric (default: training data)")
    p.add_argument("--epochs", type=int, default=_env("epochs", int, 30))
    p.add_argument("--lr", type=float, default=_env("lr", float, 1e-3))
    p.add_argument("--patience", type=int, default=10,
                   help="early-stopping patience on non-background mIoU")
    p.add_argument("--metrics", default=None,
                   help="metrics log path (default <out>.metrics.jsonl)")
    _add_common(p, "seed", "threads", "out", "batch-size")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_common(p, "threads", "batch-size")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run property self-checks")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--tolerance-scale", type=float,
                   default=_env("tolerance-scale", float, 1.0))
    _add_common(p, "seed", "threads")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("profile", help="profile per-layer forward latency")
    p.add_argument("--model", required=True)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--out", default=None, help="also write the report as JSON")
    _add_common(p, "seed", "threads", "batch-size")
    p.set_defaults(func=cmd_profile)
    return top


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except DataError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except ValidationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return ValidationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
