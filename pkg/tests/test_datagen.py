"""Canvas pasting, stereographic projection, dataset files, metrics."""

import numpy as np
import pytest

from artifact.datagen import (
    CANVAS_SIZE,
    DEFAULT_CAP_RADIUS,
    ITEM_SIZE,
    Canvas,
    DataGenConfig,
    generate_dataset,
    load_dataset,
    load_source_images,
    make_source_images,
    miou,
    paste_items,
    per_class_iou,
    project_canvas_to_sphere,
    record_rng,
    save_dataset,
    save_source_images,
)
from artifact.grids import make_s2_grid, random_rotation


class FixedRng:
    """Stands in for a Generator when a test wants pinned paste positions."""

    def __init__(self, values):
        self.values = list(values)

    def integers(self, lo, hi):
        return self.values.pop(0)


def bright_square(value=255):
    img = np.zeros((ITEM_SIZE, ITEM_SIZE), dtype=np.uint8)
    img[4:24, 4:24] = value
    return img


class TestPaste:
    def test_single_item_lands_where_drawn(self):
        img = bright_square()
        cv = paste_items([(img, 3)], FixedRng([10, 20]))
        assert cv.pixels.shape == (CANVAS_SIZE, CANVAS_SIZE)
        np.testing.assert_allclose(cv.pixels[10:38, 20:48], img / 255.0)
        assert (cv.mask[14:34, 24:44] == 3).all()
        assert cv.mask.sum() == 3 * 400

    def test_max_composites_intensity(self):
        a = np.full((ITEM_SIZE, ITEM_SIZE), 100, dtype=np.uint8)
        b = np.full((ITEM_SIZE, ITEM_SIZE), 180, dtype=np.uint8)
        cv = paste_items([(a, 1), (b, 2)], FixedRng([0, 0, 0, 0]))
        assert cv.pixels.max() == 180 / 255.0
        # overlap: later paste owns the mask where it clears the threshold
        assert (cv.mask[:ITEM_SIZE, :ITEM_SIZE] == 2).all()

    def test_threshold_controls_mask(self):
        img = bright_square(120)
        cv = paste_items([(img, 5)], FixedRng([0, 0]), threshold=150)
        assert cv.mask.sum() == 0
        assert cv.pixels.max() > 0
        cv2 = paste_items([(img, 5)], FixedRng([0, 0]), threshold=100)
        assert (cv2.mask[4:24, 4:24] == 5).all()

    def test_dim_item_does_not_erase_mask(self):
        bright = bright_square(255)
        dim = bright_square(50)
        cv = paste_items([(bright, 1), (dim, 2)], FixedRng([0, 0, 0, 0]))
        # dim pixels stay under the threshold so class 1 keeps the region
        assert (cv.mask[4:24, 4:24] == 1).all()

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            paste_items([(np.zeros((10, 10), dtype=np.uint8), 1)], FixedRng([0, 0]))

    def test_positions_cover_canvas(self):
        rng = np.random.default_rng(0)
        img = bright_square()
        seen_origin = False
        seen_far = False
        for _ in range(200):
            cv = paste_items([(img, 1)], rng)
            rows, cols = np.nonzero(cv.pixels)
            seen_origin |= rows.min() < 6
            seen_far |= rows.max() > CANVAS_SIZE - 7
        assert seen_origin and seen_far


class TestConfig:
    def test_validation(self):
        DataGenConfig(num_degrees=8)
        with pytest.raises(ValueError):
            DataGenConfig(num_degrees=8, threshold=300)
        with pytest.raises(ValueError):
            DataGenConfig(num_degrees=8, items_per_sphere=0)
        with pytest.raises(ValueError):
            DataGenConfig(num_degrees=8, projection_point="equator")
        with pytest.raises(ValueError):
            DataGenConfig(num_degrees=8, num_classes=1)


class TestProjection:
    def test_blank_canvas_maps_to_zero(self):
        cv = Canvas(
            pixels=np.zeros((CANVAS_SIZE, CANVAS_SIZE)),
            mask=np.zeros((CANVAS_SIZE, CANVAS_SIZE), dtype=np.int64),
        )
        signal, mask = project_canvas_to_sphere(cv, 8)
        assert signal.shape == (16, 16) and mask.shape == (16, 16)
        assert np.all(signal == 0) and np.all(mask == 0)

    def test_canvas_center_appears_at_projection_point(self):
        cv = Canvas(
            pixels=np.zeros((CANVAS_SIZE, CANVAS_SIZE)),
            mask=np.zeros((CANVAS_SIZE, CANVAS_SIZE), dtype=np.int64),
        )
        cv.pixels[27:33, 27:33] = 1.0
        signal, _ = project_canvas_to_sphere(cv, 16, "pole")
        # pole projection puts the canvas center on the smallest-theta rings
        top_ring = signal[0]
        assert top_ring.min() >= 0.9
        assert signal[16:].max() == 0.0

    def test_far_hemisphere_is_background(self):
        rng = np.random.default_rng(1)
        img = (rng.uniform(0, 255, (ITEM_SIZE, ITEM_SIZE))).astype(np.uint8)
        cv = paste_items([(img, 4)], rng, threshold=100)
        signal, mask = project_canvas_to_sphere(cv, 12, "pole")
        grid = make_s2_grid(12)
        lower = grid.thetas > np.pi / 2 + 0.2
        assert np.abs(signal[lower]).max() == 0.0
        assert mask[lower].max() == 0

    def test_mask_values_come_from_canvas(self):
        rng = np.random.default_rng(2)
        img = bright_square()
        cv = paste_items([(img, 7)], rng)
        _, mask = project_canvas_to_sphere(cv, 16)
        assert set(np.unique(mask)) <= {0, 7}
        assert (mask == 7).any()

    def test_projected_area_matches_spherical_cap(self):
        """A disk inscribed in the canvas covers a polar cap whose area the
        quadrature must reproduce."""
        yy, xx = np.meshgrid(np.arange(CANVAS_SIZE), np.arange(CANVAS_SIZE), indexing="ij")
        r = np.hypot(yy + 0.5 - CANVAS_SIZE / 2, xx + 0.5 - CANVAS_SIZE / 2)
        cv = Canvas(
            pixels=(r <= CANVAS_SIZE / 2).astype(float),
            mask=np.zeros((CANVAS_SIZE, CANVAS_SIZE), dtype=np.int64),
        )
        L = 50
        signal, _ = project_canvas_to_sphere(cv, L, "pole")
        grid = make_s2_grid(L)
        got = grid.quadrature(signal)
        want = 2 * np.pi * (1 - np.cos(DEFAULT_CAP_RADIUS))
        assert abs(got - want) / want < 0.02

    def test_grid_center_projection_centers_mass(self):
        cv = Canvas(
            pixels=np.zeros((CANVAS_SIZE, CANVAS_SIZE)),
            mask=np.zeros((CANVAS_SIZE, CANVAS_SIZE), dtype=np.int64),
        )
        cv.pixels[27:33, 27:33] = 1.0
        L = 24
        signal, _ = project_canvas_to_sphere(cv, L, "grid_center")
        grid = make_s2_grid(L)
        th = np.repeat(grid.thetas, 2 * L).reshape(2 * L, 2 * L)
        ph = np.tile(grid.phis, 2 * L).reshape(2 * L, 2 * L)
        pts = np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1
        )
        w = signal / signal.sum()
        centroid = (pts * w[..., None]).sum(axis=(0, 1))
        centroid /= np.linalg.norm(centroid)
        # the grid-center frame points at theta = pi/2, phi = pi
        np.testing.assert_allclose(centroid, [-1.0, 0.0, 0.0], atol=0.02)

    def test_rotation_argument_rotates_the_signal(self):
        """Generating with rotation R approximates rotating the unrotated
        signal; checked on smooth content where truncation noise is small."""
        from artifact.datagen import _soften
        from artifact.ops import rotate_s2_spectrum
        from artifact.transforms import s2_analyze

        yy, xx = np.meshgrid(
            np.arange(CANVAS_SIZE), np.arange(CANVAS_SIZE), indexing="ij"
        )
        rr = np.hypot(yy + 0.5 - CANVAS_SIZE / 2, xx + 0.5 - CANVAS_SIZE / 2)
        disk = (rr <= 20).astype(float)
        cv = Canvas(
            pixels=_soften(disk * 255.0, passes=6) / 255.0,
            mask=np.zeros((CANVAS_SIZE, CANVAS_SIZE), dtype=np.int64),
        )
        L = 50
        plain, _ = project_canvas_to_sphere(cv, L, "pole")
        R = random_rotation(np.random.default_rng(9))
        rotated, _ = project_canvas_to_sphere(cv, L, "pole", rotation=R)
        want = rotate_s2_spectrum(s2_analyze(plain), R)
        got = s2_analyze(rotated)
        err = np.linalg.norm(got - want) / np.linalg.norm(want)
        assert err < 0.05


class TestRecordStreams:
    def test_records_do_not_depend_on_count(self):
        rng = np.random.default_rng(4)
        imgs, classes = make_source_images(8, rng)
        cfg = DataGenConfig(num_degrees=6, seed=99)
        five = list(generate_dataset(cfg, imgs, classes, 5))
        two = list(generate_dataset(cfg, imgs, classes, 2))
        for a, b in zip(two, five):
            np.testing.assert_array_equal(a.signal, b.signal)
            np.testing.assert_array_equal(a.mask, b.mask)
            assert a.source_ids == b.source_ids

    def test_record_rng_streams_differ(self):
        a = record_rng(7, 0).integers(0, 1 << 30, 8)
        b = record_rng(7, 1).integers(0, 1 << 30, 8)
        assert not np.array_equal(a, b)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        imgs, classes = make_source_images(8, rng)
        cfg = DataGenConfig(num_degrees=6, seed=3, rotated=True)
        a = list(generate_dataset(cfg, imgs, classes, 4))
        b = list(generate_dataset(cfg, imgs, classes, 4))
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.signal, rb.signal)
            np.testing.assert_array_equal(ra.rotation, rb.rotation)

    def test_unrotated_records_carry_identity(self):
        rng = np.random.default_rng(6)
        imgs, classes = make_source_images(4, rng)
        cfg = DataGenConfig(num_degrees=4, seed=1)
        for rec in generate_dataset(cfg, imgs, classes, 3):
            np.testing.assert_array_equal(rec.rotation, np.eye(3))

    def test_rotated_shares_canvas_with_unrotated(self):
        """Same seed: the rotated variant reuses the pastes and only adds
        the rotation afterwards."""
        rng = np.random.default_rng(7)
        imgs, classes = make_source_images(8, rng)
        plain_cfg = DataGenConfig(num_degrees=6, seed=42)
        rot_cfg = DataGenConfig(num_degrees=6, seed=42, rotated=True)
        plain = list(generate_dataset(plain_cfg, imgs, classes, 3))
        rot = list(generate_dataset(rot_cfg, imgs, classes, 3))
        for a, b in zip(plain, rot):
            assert a.source_ids == b.source_ids
            assert not np.array_equal(b.rotation, np.eye(3))

    def test_bad_source_pool(self):
        cfg = DataGenConfig(num_degrees=4)
        with pytest.raises(ValueError):
            list(generate_dataset(cfg, np.zeros((0, 28, 28)), np.zeros(0), 1))
        with pytest.raises(ValueError):
            list(
                generate_dataset(
                    cfg, np.zeros((2, 28, 28)), np.array([0, 1]), 1
                )
            )


class TestMetrics:
    def test_perfect_prediction(self):
        m = np.array([[0, 1], [2, 0]])
        assert miou(m, m, 3) == 1.0

    def test_half_overlap(self):
        true = np.array([[1, 1, 0, 0]])
        pred = np.array([[1, 0, 1, 0]])
        # class 1: intersection 1, union 3; background likewise dropped
        assert abs(miou(pred, true, 2) - 1 / 3) < 1e-12

    def test_absent_classes_excluded(self):
        true = np.array([[1, 1], [0, 0]])
        pred = np.array([[1, 1], [0, 0]])
        # classes 2.. never appear and must not drag the mean down
        assert miou(pred, true, 11) == 1.0

    def test_background_kept_when_asked(self):
        true = np.array([[0, 1], [1, 1]])
        pred = np.array([[1, 1], [1, 1]])
        with_bg = miou(pred, true, 2, drop_background=False)
        # class 1: 3/4; background: 0/1
        assert abs(with_bg - 0.5 * (0.75 + 0.0)) < 1e-12

    def test_all_background_raises_without_it(self):
        z = np.zeros((3, 3), dtype=int)
        with pytest.raises(ValueError):
            miou(z, z, 5)

    def test_per_class_nans(self):
        true = np.array([[1, 0]])
        pred = np.array([[1, 0]])
        vals = per_class_iou(pred, true, 4)
        assert vals[0] == 1.0 and vals[1] == 1.0
        assert np.isnan(vals[2]) and np.isnan(vals[3])


class TestSources:
    def test_pool_properties(self):
        rng = np.random.default_rng(8)
        imgs, classes = make_source_images(25, rng)
        assert imgs.shape == (25, ITEM_SIZE, ITEM_SIZE)
        assert imgs.dtype == np.uint8
        assert classes.min() >= 1 and classes.max() <= 10
        # every image has a bright interior and dark border
        assert (imgs.max(axis=(1, 2)) == 255).all()
        assert imgs[:, 0, :].max() < 80

    def test_all_classes_present(self):
        rng = np.random.default_rng(9)
        _, classes = make_source_images(30, rng)
        assert set(classes) == set(range(1, 11))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        imgs, classes = make_source_images(7, rng)
        path = tmp_path / "pool.gray"
        save_source_images(path, imgs, classes)
        imgs2, classes2 = load_source_images(path)
        np.testing.assert_array_equal(imgs, imgs2)
        np.testing.assert_array_equal(classes, classes2)

    def test_corrupt_rejected(self, tmp_path):
        p = tmp_path / "bad.gray"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            load_source_images(p)
        rng = np.random.default_rng(11)
        imgs, classes = make_source_images(2, rng)
        good = tmp_path / "good.gray"
        save_source_images(good, imgs, classes)
        truncated = tmp_path / "short.gray"
        truncated.write_bytes(good.read_bytes()[:-5])
        with pytest.raises(ValueError):
            load_source_images(truncated)


class TestDatasetFiles:
    def make_records(self, n=3, L=6, rotated=False, seed=0):
        rng = np.random.default_rng(12)
        imgs, classes = make_source_images(6, rng)
        cfg = DataGenConfig(num_degrees=L, seed=seed, rotated=rotated)
        return cfg, list(generate_dataset(cfg, imgs, classes, n))

    def test_round_trip(self, tmp_path):
        cfg, recs = self.make_records(rotated=True)
        path = tmp_path / "d.sphd"
        save_dataset(path, cfg, recs)
        header, recs2 = load_dataset(path)
        assert header["num_degrees"] == cfg.num_degrees
        assert header["count"] == len(recs)
        assert header["rotated"] is True
        assert header["projection_point"] == cfg.projection_point
        for a, b in zip(recs, recs2):
            np.testing.assert_array_equal(a.signal.astype(np.float32), b.signal)
            np.testing.assert_array_equal(a.mask, b.mask)
            np.testing.assert_allclose(a.rotation, b.rotation, atol=0)
            assert a.source_ids == b.source_ids

    def test_empty_dataset(self, tmp_path):
        cfg = DataGenConfig(num_degrees=4)
        path = tmp_path / "empty.sphd"
        save_dataset(path, cfg, [])
        header, recs = load_dataset(path)
        assert header["count"] == 0 and recs == []

    def test_rewrite_is_byte_identical(self, tmp_path):
        cfg, recs = self.make_records()
        p1, p2 = tmp_path / "a.sphd", tmp_path / "b.sphd"
        save_dataset(p1, cfg, recs)
        save_dataset(p2, cfg, recs)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.sphd"
        p.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(ValueError):
            load_dataset(p)

    def test_grid_mismatch_rejected(self, tmp_path):
        cfg, recs = self.make_records(L=6)
        wrong = DataGenConfig(num_degrees=8)
        with pytest.raises(ValueError):
            save_dataset(tmp_path / "x.sphd", wrong, recs)
