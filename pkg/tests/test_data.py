import math

import numpy as np
import pytest

from conftest import quadrant_image
from neurodx import data, tensor
from neurodx.errors import ArgumentError, StructureError


def bilinear_oracle(img, th, tw):
    """Independent per-pixel bilinear resize with the (i+0.5)*src/dst-0.5
    coordinate convention."""
    c, h, w = img.shape
    out = np.zeros((c, th, tw), dtype=np.float64)
    for ch in range(c):
        for i in range(th):
            for j in range(tw):
                sy = min(max((i + 0.5) * h / th - 0.5, 0), h - 1)
                sx = min(max((j + 0.5) * w / tw - 0.5, 0), w - 1)
                y0, x0 = int(math.floor(sy)), int(math.floor(sx))
                y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
                fy, fx = sy - y0, sx - x0
                out[ch, i, j] = (img[ch, y0, x0] * (1 - fy) * (1 - fx) +
                                 img[ch, y0, x1] * (1 - fy) * fx +
                                 img[ch, y1, x0] * fy * (1 - fx) +
                                 img[ch, y1, x1] * fy * fx)
    return out


class TestLoadDataset:
    def test_fixture_counts_and_labels(self, tmp_path):
        names = ["beta", "alpha", "gamma", "delta"]
        for name in names:
            d = tmp_path / name
            d.mkdir()
            for i in range(3):
                data.write_raw_image(d / f"{i}.raw", np.full((3, 4, 4), 0.5))
        ds = data.load_dataset(tmp_path)
        assert ds.class_names == ["alpha", "beta", "delta", "gamma"]
        assert len(ds.items) == 12
        assert ds.class_counts() == [3, 3, 3, 3]
        # labels follow sorted directory order
        for item in ds.items:
            assert ds.class_names[item.label] in item.source_path

    def test_wrong_class_count(self, tmp_path):
        for name in ["a", "b"]:
            (tmp_path / name).mkdir()
        with pytest.raises(StructureError):
            data.load_dataset(tmp_path)

    def test_undecodable_skipped_empty_class_fails(self, tmp_path):
        for name in ["a", "b", "c", "d"]:
            d = tmp_path / name
            d.mkdir()
            if name == "d":
                (d / "junk.png").write_bytes(b"not a png")
            else:
                data.write_raw_image(d / "ok.raw", np.full((3, 2, 2), 0.5))
        with pytest.raises(StructureError):
            with pytest.warns(UserWarning):
                data.load_dataset(tmp_path)

    def test_png_and_raw_decode_agree(self, tmp_path):
        from PIL import Image
        rng = tensor.make_rng(5)
        arr = (rng.uniform(0, 1, size=(6, 5, 3)) * 255).astype(np.uint8)
        Image.fromarray(arr).save(tmp_path / "x.png")
        data.write_raw_image(tmp_path / "x.raw",
                             arr.transpose(2, 0, 1).astype(np.float64) / 255.0)
        png = data.decode_image(tmp_path / "x.png")
        raw = data.decode_image(tmp_path / "x.raw")
        assert png.shape == raw.shape == (3, 6, 5)
        assert np.allclose(png, raw, atol=1 / 255)
        assert png.min() >= 0 and png.max() <= 1

    def test_grayscale_replicated(self, tmp_path):
        from PIL import Image
        Image.fromarray(np.full((4, 4), 128, dtype=np.uint8), mode="L").save(
            tmp_path / "g.png")
        img = data.decode_image(tmp_path / "g.png")
        assert img.shape == (3, 4, 4)
        assert np.array_equal(img[0], img[1]) and np.array_equal(img[1], img[2])


class TestResize:
    def test_identity(self):
        img = tensor.make_rng(1).uniform(0, 1, size=(3, 224, 224))
        assert np.array_equal(data.resize(img, (224, 224)), img)

    def test_constant(self):
        img = np.full((3, 5, 7), 0.37)
        out = data.resize(img, (10, 9))
        assert np.allclose(out, 0.37)

    def test_checkerboard_matches_oracle(self):
        img = np.array([[[0.0, 1.0], [1.0, 0.0]]])
        out = data.resize(img, (4, 4))
        assert np.allclose(out, bilinear_oracle(img, 4, 4), atol=1e-12)

    def test_random_matches_oracle(self):
        img = tensor.make_rng(2).uniform(0, 1, size=(3, 7, 5))
        out = data.resize(img, (11, 13))
        assert np.allclose(out, bilinear_oracle(img, 11, 13), atol=1e-12)
        assert out.min() >= 0 and out.max() <= 1

    def test_empty_rejected(self):
        with pytest.raises(ArgumentError):
            data.resize(np.zeros((3, 0, 4)), (4, 4))


class TestRotate:
    def test_zero_angle_identity(self):
        img = tensor.make_rng(3).uniform(0, 1, size=(3, 5, 5))
        assert np.array_equal(data.rotate_nearest(img, 0), img)

    def test_constant_invariant(self):
        img = np.full((3, 6, 6), 0.42)
        assert np.allclose(data.rotate_nearest(img, 37.0), 0.42)

    def test_90_degree_single_pixel(self):
        img = np.zeros((1, 3, 3))
        img[0, 0, 1] = 1.0
        out = data.rotate_nearest(img, 90.0)
        # inverse-map by hand: output (y,x) samples source
        # (cos*dy + sin*dx + cy, -sin*dy + cos*dx + cx); the bright source
        # (0,1) lands at output (1,0)
        expected = np.zeros((1, 3, 3))
        expected[0, 1, 0] = 1.0
        assert np.array_equal(out, expected)

    def test_values_stay_in_range_and_from_input(self):
        img = tensor.make_rng(4).uniform(0, 1, size=(3, 8, 8))
        out = data.rotate_nearest(img, 15.0)
        assert np.all(np.isin(out, img))


class TestSplit:
    def make_ds(self, counts):
        ds = data.Dataset(class_names=[f"c{i}" for i in range(len(counts))])
        for label, n in enumerate(counts):
            for i in range(n):
                ds.items.append(data.LabeledImage(
                    pixels=np.zeros((3, 2, 2), dtype=np.float32),
                    label=label, source_path=f"{label}/{i}"))
        ds.tags = ["train"] * len(ds.items)
        return ds

    def test_80_20_totals(self):
        counts = [896, 64, 2240, 3200]
        ds = self.make_ds(counts)
        data.split(ds, seed=3)
        # per-class ceiling rule: sum(ceil(0.8 * n_c)) = 717+52+1792+2560
        expected_train = sum(math.ceil(0.8 * n) for n in counts)
        assert len(ds.indices("train")) == expected_train == 5121
        assert len(ds.indices("test")) == sum(counts) - expected_train

    def test_ceiling_rule_per_class(self):
        ds = self.make_ds([64, 10, 10, 10])
        data.split(ds, seed=3)
        moderate_train = [i for i in ds.indices("train") if ds.items[i].label == 0]
        assert len(moderate_train) == 52  # ceil(0.8 * 64)

    def test_stratification_within_one_item(self):
        counts = [17, 33, 5, 101]
        ds = self.make_ds(counts)
        data.split(ds, seed=9)
        for label, n in enumerate(counts):
            n_train = sum(1 for i in ds.indices("train") if ds.items[i].label == label)
            assert abs(n_train - 0.8 * n) <= 1

    def test_deterministic(self):
        a = self.make_ds([10, 10, 10, 10])
        b = self.make_ds([10, 10, 10, 10])
        data.split(a, seed=5)
        data.split(b, seed=5)
        assert a.tags == b.tags
        c = self.make_ds([10, 10, 10, 10])
        data.split(c, seed=6)
        assert a.tags != c.tags

    def test_tiny_class_rejected(self):
        ds = self.make_ds([5, 1, 5, 5])
        with pytest.raises(ArgumentError):
            data.split(ds)


class TestBatches:
    def make_ds(self, n, size=8):
        rng = tensor.make_rng(7)
        ds = data.Dataset(class_names=["a", "b", "c", "d"])
        for i in range(n):
            ds.items.append(data.LabeledImage(
                pixels=quadrant_image(i % 4, rng, size=size),
                label=i % 4, source_path=f"m{i}"))
        ds.tags = ["train"] * n
        return ds

    def test_exact_batching(self):
        ds = self.make_ds(96)
        got = list(data.batches(ds, "train", batch_size=32, image_size=8))
        assert len(got) == 3
        assert all(img.shape == (32, 3, 8, 8) for img, _ in got)

    def test_remainder_kept(self):
        ds = self.make_ds(10)
        got = list(data.batches(ds, "train", batch_size=32, image_size=8))
        assert len(got) == 1
        assert got[0][0].shape[0] == 10

    def test_label_multiset_preserved(self):
        ds = self.make_ds(37)
        all_labels = []
        for _, labels in data.batches(ds, "train", batch_size=8, shuffle=True,
                                      seed=3, image_size=8):
            assert np.all(labels.sum(axis=1) == 1)
            all_labels.extend(int(i) for i in labels.argmax(axis=1))
        assert sorted(all_labels) == sorted(item.label for item in ds.items)

    def test_empty_subset(self):
        ds = self.make_ds(4)
        with pytest.raises(ArgumentError):
            list(data.batches(ds, "test", image_size=8))

    def test_augmentation_independent_of_order(self):
        # per-item rng streams: shuffled and unshuffled epochs produce the
        # same pixels for the same item
        ds = self.make_ds(12)
        def collect(shuffle):
            out = {}
            for imgs, labels in data.batches(ds, "train", batch_size=5,
                                             shuffle=shuffle, augment=True,
                                             seed=11, epoch=2, image_size=8):
                for row in range(imgs.shape[0]):
                    out[imgs[row].tobytes()] = True
            return set(out)
        assert collect(False) == collect(True)

    def test_augment_stays_in_range(self):
        ds = self.make_ds(8)
        for imgs, _ in data.batches(ds, "train", batch_size=4, augment=True,
                                    seed=1, image_size=8):
            assert imgs.min() >= 0 and imgs.max() <= 1

    def test_resizes_to_target(self):
        ds = self.make_ds(4, size=10)
        imgs, _ = next(data.batches(ds, "train", batch_size=4, image_size=16))
        assert imgs.shape == (4, 3, 16, 16)
