"""Synthetic spherical segmentation data.

Pipeline: raster items (28x28 grayscale, one class id each) are pasted at
random positions onto a 60x60 canvas, composited by per-pixel max.  The
canvas is pulled onto the sphere by mapping each grid point through a
stereographic projection (from the antipode of the projection point onto
the tangent plane at that point) and sampling the canvas bilinearly;
segmentation masks use nearest-neighbor sampling.  Rotated samples rotate
the grid points before projecting, so a record with rotation R equals the
unrotated record left-translated by R (up to interpolation error).

Scale convention: the canvas half-width (30 px) subtends an angular radius
of cap_radius (default pi/4) about the projection point, i.e. 30 px maps
to a plane radius of 2*tan(cap_radius/2).  Grid points that land outside
the canvas read intensity 0 and background class.

File formats (little-endian):

* source container: magic "GRAY", count u64, then per image class u8 and
  28x28=784 u8 pixels;
* dataset: magic "SPHD", version u32, bandlimit u32, num_classes u32,
  count u64, rotated u8, projection_point u8 (0 pole, 1 grid_center),
  threshold u8; per record rotation 9xf64, signal 2Lx2L f32 row-major,
  mask 2Lx2L u8, then source ids as count u8 + that many u32.

Record generation derives an independent child seed per record index, so
records are reproducible in isolation and order-independent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .grids import make_s2_grid, random_rotation

CANVAS_SIZE = 60
ITEM_SIZE = 28
DEFAULT_CAP_RADIUS = np.pi / 4

SOURCE_MAGIC = b"GRAY"
DATASET_MAGIC = b"SPHD"
DATASET_VERSION = 1

PROJECTION_POINTS = ("pole", "grid_center")


@dataclass
class Canvas:
    pixels: np.ndarray  # (60, 60) float64 in [0, 1]
    mask: np.ndarray  # (60, 60) int, 0 = background


@dataclass
class DatasetRecord:
    signal: np.ndarray  # (2L, 2L) float64
    mask: np.ndarray  # (2L, 2L) int
    rotation: np.ndarray  # (3, 3)
    source_ids: tuple


@dataclass(frozen=True)
class DataGenConfig:
    num_degrees: int
    items_per_sphere: int = 1
    threshold: int = 150
    projection_point: str = "pole"
    rotated: bool = False
    seed: int = 0
    num_classes: int = 11

    def __post_init__(self):
        if not 0 <= self.threshold <= 255:
            raise ValueError(f"threshold must be in [0, 255], got {self.threshold}")
        if self.items_per_sphere < 1:
            raise ValueError("items_per_sphere must be >= 1")
        if self.projection_point not in PROJECTION_POINTS:
            raise ValueError(f"unknown projection point {self.projection_point!r}")
        if self.num_classes < 2:
            raise ValueError("need at least background plus one class")


# ---------------------------------------------------------------------------
# canvas composition


def paste_items(items, rng: np.random.Generator, threshold: int = 150) -> Canvas:
    """Composite (image, class_id) pairs onto a blank canvas.

    Each 28x28 uint8 image goes to a uniformly random in-bounds position.
    Intensities combine by per-pixel max; the mask takes the class of every
    source pixel >= threshold, with later items overwriting earlier ones.
    """
    pixels = np.zeros((CANVAS_SIZE, CANVAS_SIZE))
    mask = np.zeros((CANVAS_SIZE, CANVAS_SIZE), dtype=np.int64)
    hi = CANVAS_SIZE - ITEM_SIZE + 1
    for image, class_id in items:
        image = np.asarray(image)
        if image.shape != (ITEM_SIZE, ITEM_SIZE):
            raise ValueError(f"items must be {ITEM_SIZE}x{ITEM_SIZE}")
        r0 = int(rng.integers(0, hi))
        c0 = int(rng.integers(0, hi))
        win = (slice(r0, r0 + ITEM_SIZE), slice(c0, c0 + ITEM_SIZE))
        pixels[win] = np.maximum(pixels[win], image / 255.0)
        hot = image >= threshold
        mask[win][hot] = class_id
    return Canvas(pixels=pixels, mask=mask)


# ---------------------------------------------------------------------------
# stereographic pullback


def _projection_frame(projection_point: str):
    """(p, e1, e2): projection point and tangent-plane basis.

    pole: p = +z, canvas x along +x, canvas up along +y.  grid_center: the
    middle of the equiangular grid in index space (theta = pi/2, phi = pi),
    p = -x, canvas x along -y, canvas up along +z (toward the pole).
    """
    if projection_point == "pole":
        return (
            np.array([0.0, 0.0, 1.0]),
            np.array([1.0, 0.0, 0.0]),
            np.array([0.0, 1.0, 0.0]),
        )
    if projection_point == "grid_center":
        return (
            np.array([-1.0, 0.0, 0.0]),
            np.array([0.0, -1.0, 0.0]),
            np.array([0.0, 0.0, 1.0]),
        )
    raise ValueError(f"unknown projection point {projection_point!r}")


def _bilinear(pixels: np.ndarray, row: np.ndarray, col: np.ndarray) -> np.ndarray:
    """Bilinear sample at continuous canvas coords; outside reads 0."""
    n = pixels.shape[0]
    padded = np.zeros((n + 2, n + 2))
    padded[1:-1, 1:-1] = pixels
    fi = row - 0.5
    fj = col - 0.5
    i0 = np.floor(fi)
    j0 = np.floor(fj)
    di = fi - i0
    dj = fj - j0
    out = np.zeros(np.broadcast_shapes(row.shape, col.shape))
    for oi, wi in ((0, 1.0 - di), (1, di)):
        ii = np.clip(i0 + oi + 1, 0, n + 1).astype(np.int64)
        for oj, wj in ((0, 1.0 - dj), (1, dj)):
            jj = np.clip(j0 + oj + 1, 0, n + 1).astype(np.int64)
            out += wi * wj * padded[ii, jj]
    return out


def project_canvas_to_sphere(
    canvas: Canvas,
    num_degrees: int,
    projection_point: str = "pole",
    rotation: np.ndarray | None = None,
    cap_radius: float = DEFAULT_CAP_RADIUS,
):
    """Pull the canvas back onto the 2L x 2L grid.

    Returns (signal, mask) on the grid.  With a rotation R, each grid point
    x is replaced by R^T x before projecting, which makes the result equal
    the unrotated signal left-translated by R (f -> f(R^{-1} x)) up to
    interpolation error.
    """
    L = int(num_degrees)
    grid = make_s2_grid(L)
    theta = grid.thetas[:, None]
    phi = grid.phis[None, :]
    st = np.sin(theta)
    pts = np.stack(
        [
            st * np.cos(phi),
            st * np.sin(phi),
            np.cos(theta) * np.ones_like(phi),
        ],
        axis=-1,
    )  # (2L, 2L, 3)
    if rotation is not None:
        pts = pts @ np.asarray(rotation)  # row vectors: (R^T x)^T = x^T R
    p, e1, e2 = _projection_frame(projection_point)
    denom = 1.0 + pts @ p
    bad = denom < 1e-12
    denom = np.where(bad, 1.0, denom)
    u = np.where(bad, 1e9, 2.0 * (pts @ e1) / denom)
    v = np.where(bad, 1e9, 2.0 * (pts @ e2) / denom)
    half = CANVAS_SIZE / 2.0
    scale = half / (2.0 * np.tan(cap_radius / 2.0))
    col = half + u * scale
    row = half - v * scale
    signal = _bilinear(canvas.pixels, row, col)
    ri = np.floor(row).astype(np.int64)
    rj = np.floor(col).astype(np.int64)
    inside = (ri >= 0) & (ri < CANVAS_SIZE) & (rj >= 0) & (rj < CANVAS_SIZE)
    mask = np.where(
        inside,
        canvas.mask[np.clip(ri, 0, CANVAS_SIZE - 1), np.clip(rj, 0, CANVAS_SIZE - 1)],
        0,
    )
    return signal, mask


# ---------------------------------------------------------------------------
# dataset generation


def record_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for record #index (order-independent)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def generate_dataset(cfg: DataGenConfig, source_images, source_classes, n: int):
    """Yield n DatasetRecords drawn i.i.d. from the source pool.

    source_images: (N, 28, 28) uint8; source_classes: (N,) ints in
    [1, num_classes).  Sampling is with replacement; everything is
    determined by cfg.seed.
    """
    source_images = np.asarray(source_images)
    source_classes = np.asarray(source_classes)
    if source_images.ndim != 3 or len(source_images) == 0:
        raise ValueError("empty or malformed source pool")
    if source_classes.min() < 1 or source_classes.max() >= cfg.num_classes:
        raise ValueError("source classes must lie in [1, num_classes)")
    for i in range(n):
        rng = record_rng(cfg.seed, i)
        ids = rng.integers(0, len(source_images), size=cfg.items_per_sphere)
        items = [(source_images[j], int(source_classes[j])) for j in ids]
        canvas = paste_items(items, rng, threshold=cfg.threshold)
        rot = random_rotation(rng) if cfg.rotated else np.eye(3)
        signal, mask = project_canvas_to_sphere(
            canvas,
            cfg.num_degrees,
            cfg.projection_point,
            rotation=rot if cfg.rotated else None,
        )
        yield DatasetRecord(
            signal=signal,
            mask=mask,
            rotation=rot,
            source_ids=tuple(int(j) for j in ids),
        )


# ---------------------------------------------------------------------------
# metrics


def miou(pred_mask, true_mask, num_classes: int, drop_background: bool = True):
    """Mean IoU over classes present in either mask.

    Classes absent from both prediction and truth are excluded from the
    mean; drop_background also excludes class 0.  Raises ValueError when no
    class is includable.
    """
    pred = np.asarray(pred_mask)
    true = np.asarray(true_mask)
    if pred.shape != true.shape:
        raise ValueError("mask shapes differ")
    if min(pred.min(), true.min()) < 0 or max(pred.max(), true.max()) >= num_classes:
        raise ValueError("mask classes out of range")
    start = 1 if drop_background else 0
    scores = []
    for c in range(start, num_classes):
        p = pred == c
        t = true == c
        union = np.logical_or(p, t).sum()
        if union == 0:
            continue
        scores.append(np.logical_and(p, t).sum() / union)
    if not scores:
        raise ValueError("no includable class in either mask")
    return float(np.mean(scores))


def per_class_iou(pred_mask, true_mask, num_classes: int):
    """IoU per class id; classes absent from both get nan."""
    pred = np.asarray(pred_mask)
    true = np.asarray(true_mask)
    out = np.full(num_classes, np.nan)
    for c in range(num_classes):
        p = pred == c
        t = true == c
        union = np.logical_or(p, t).sum()
        if union:
            out[c] = np.logical_and(p, t).sum() / union
    return out


# ---------------------------------------------------------------------------
# synthetic source images


def _soften(img: np.ndarray, passes: int = 2) -> np.ndarray:
    """Cheap 3x3 box blur (zero boundary) to give edges a gray falloff."""
    out = img.astype(np.float64)
    for _ in range(passes):
        acc = np.zeros_like(out)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                shifted = np.zeros_like(out)
                src_i = slice(max(di, 0), ITEM_SIZE + min(di, 0))
                dst_i = slice(max(-di, 0), ITEM_SIZE + min(-di, 0))
                src_j = slice(max(dj, 0), ITEM_SIZE + min(dj, 0))
                dst_j = slice(max(-dj, 0), ITEM_SIZE + min(-dj, 0))
                shifted[dst_i, dst_j] = out[src_i, src_j]
                acc += shifted
        out = acc / 9.0
    return out


def make_source_images(count: int, rng: np.random.Generator, num_classes: int = 11):
    """Synthetic glyph pool standing in for a digit dataset.

    Returns (images (count, 28, 28) uint8, classes (count,) ints in
    [1, num_classes)).  Each class is a distinct stroke pattern with random
    position/size jitter, bright interior (255) and soft edges.
    """
    n_shapes = num_classes - 1
    yy, xx = np.meshgrid(np.arange(ITEM_SIZE), np.arange(ITEM_SIZE), indexing="ij")
    images = np.zeros((count, ITEM_SIZE, ITEM_SIZE), dtype=np.uint8)
    classes = np.zeros(count, dtype=np.int64)
    for i in range(count):
        cls = 1 + i % n_shapes
        cy = 13.5 + rng.uniform(-2.5, 2.5)
        cx = 13.5 + rng.uniform(-2.5, 2.5)
        w = rng.uniform(1.6, 2.8)  # stroke half-width
        s = rng.uniform(6.0, 9.0)  # pattern half-extent
        ang = rng.uniform(-0.25, 0.25)
        ca, sa = np.cos(ang), np.sin(ang)
        x = ca * (xx - cx) + sa * (yy - cy)
        y = -sa * (xx - cx) + ca * (yy - cy)
        r = np.hypot(x, y)
        vbar = (np.abs(x) <= w) & (np.abs(y) <= s)
        hbar = (np.abs(y) <= w) & (np.abs(x) <= s)
        diag = (np.abs(x - y) <= w * 1.4) & (r <= s * 1.2)
        anti = (np.abs(x + y) <= w * 1.4) & (r <= s * 1.2)
        ring = np.abs(r - s * 0.8) <= w
        disk = r <= s * 0.7
        box = (np.maximum(np.abs(x), np.abs(y)) <= s * 0.8) & (
            np.maximum(np.abs(x), np.abs(y)) >= s * 0.8 - 2 * w
        )
        shapes = {
            1: vbar,
            2: hbar,
            3: diag,
            4: anti,
            5: vbar | hbar,
            6: diag | anti,
            7: ring,
            8: disk,
            9: box,
            10: (np.abs(x - s * 0.45) <= w) & (np.abs(y) <= s)
            | (np.abs(x + s * 0.45) <= w) & (np.abs(y) <= s),
        }
        inside = shapes[1 + (cls - 1) % 10]
        soft = _soften(inside * 255.0)
        images[i] = np.clip(np.where(inside, 255.0, soft), 0, 255).astype(np.uint8)
        classes[i] = cls
    return images, classes


# ---------------------------------------------------------------------------
# file I/O


def save_source_images(path, images, classes) -> None:
    images = np.asarray(images, dtype=np.uint8)
    classes = np.asarray(classes)
    if images.ndim != 3 or images.shape[1:] != (ITEM_SIZE, ITEM_SIZE):
        raise ValueError("images must be (n, 28, 28) uint8")
    if len(classes) != len(images):
        raise ValueError("one class per image")
    with open(path, "wb") as fh:
        fh.write(SOURCE_MAGIC)
        fh.write(struct.pack("<Q", len(images)))
        for img, cls in zip(images, classes):
            fh.write(struct.pack("<B", int(cls)))
            fh.write(img.tobytes())


def load_source_images(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SOURCE_MAGIC:
        raise ValueError(f"{path}: not a source-image container")
    (count,) = struct.unpack_from("<Q", data, 4)
    rec = 1 + ITEM_SIZE * ITEM_SIZE
    if len(data) != 12 + count * rec:
        raise ValueError(f"{path}: truncated source container")
    images = np.zeros((count, ITEM_SIZE, ITEM_SIZE), dtype=np.uint8)
    classes = np.zeros(count, dtype=np.int64)
    pos = 12
    for i in range(count):
        classes[i] = data[pos]
        images[i] = np.frombuffer(data, np.uint8, ITEM_SIZE**2, pos + 1).reshape(
            ITEM_SIZE, ITEM_SIZE
        )
        pos += rec
    return images, classes


def save_dataset(path, cfg: DataGenConfig, records) -> None:
    """Write records (any iterable of DatasetRecord) with the cfg header."""
    records = list(records)
    n = 2 * cfg.num_degrees
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(
            struct.pack(
                "<IIIQBBB",
                DATASET_VERSION,
                cfg.num_degrees,
                cfg.num_classes,
                len(records),
                int(cfg.rotated),
                PROJECTION_POINTS.index(cfg.projection_point),
                cfg.threshold,
            )
        )
        for rec in records:
            if rec.signal.shape != (n, n) or rec.mask.shape != (n, n):
                raise ValueError("record grid does not match config bandlimit")
            fh.write(np.asarray(rec.rotation, dtype="<f8").tobytes())
            fh.write(rec.signal.astype("<f4").tobytes())
            fh.write(rec.mask.astype(np.uint8).tobytes())
            fh.write(struct.pack("<B", len(rec.source_ids)))
            fh.write(np.asarray(rec.source_ids, dtype="<u4").tobytes())


def load_dataset(path):
    """Returns (cfg-like header dict, list of DatasetRecord)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DATASET_MAGIC:
        raise ValueError(f"{path}: not a dataset file")
    version, L, num_classes, count, rotated, proj, threshold = struct.unpack_from(
        "<IIIQBBB", data, 4
    )
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    header = {
        "num_degrees": L,
        "num_classes": num_classes,
        "count": count,
        "rotated": bool(rotated),
        "projection_point": PROJECTION_POINTS[proj],
        "threshold": threshold,
    }
    n = 2 * L
    pos = 4 + struct.calcsize("<IIIQBBB")
    records = []
    for _ in range(count):
        rot = np.frombuffer(data, "<f8", 9, pos).reshape(3, 3).copy()
        pos += 72
        signal = (
            np.frombuffer(data, "<f4", n * n, pos).reshape(n, n).astype(np.float64)
        )
        pos += 4 * n * n
        mask = np.frombuffer(data, np.uint8, n * n, pos).reshape(n, n).astype(np.int64)
        pos += n * n
        nids = data[pos]
        pos += 1
        ids = tuple(int(v) for v in np.frombuffer(data, "<u4", nids, pos))
        pos += 4 * nids
        records.append(
            DatasetRecord(signal=signal, mask=mask, rotation=rot, source_ids=ids)
        )
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes in dataset file")
    return header, records
