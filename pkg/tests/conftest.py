import numpy as np
import pytest

from neurodx import data as data_mod
from neurodx import tensor


def numerical_grad(f, x, eps=1e-5):
    """Central finite differences of scalar-valued f() wrt array x,
    perturbed in place. x must be float64."""
    assert x.dtype == np.float64
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def max_rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def quadrant_image(label, rng, size=32, noise=0.05):
    """One synthetic image: a bright quadrant selects the class."""
    img = np.full((3, size, size), 0.1, dtype=np.float32)
    r, c = divmod(label, 2)
    half = size // 2
    img[:, r * half:(r + 1) * half, c * half:(c + 1) * half] = 0.9
    img = img + rng.normal(0, noise, size=img.shape).astype(np.float32)
    return np.clip(img, 0, 1)


def make_overfit_dataset(seed=123, n=64):
    """In-memory 4-class separable dataset, split 80/20."""
    rng = tensor.make_rng(seed)
    ds = data_mod.Dataset(class_names=["a", "b", "c", "d"])
    for i in range(n):
        label = i % 4
        ds.items.append(data_mod.LabeledImage(
            pixels=quadrant_image(label, rng), label=label, source_path=f"mem{i}"))
    ds.tags = ["train"] * n
    data_mod.split(ds, seed=1)
    return ds


@pytest.fixture(scope="session")
def fixture_dataset_dir(tmp_path_factory):
    """On-disk 4-class dataset (16 raw images per class) for CLI tests."""
    root = tmp_path_factory.mktemp("tinydata")
    rng = tensor.make_rng(123)
    class_names = ["mild", "moderate", "non", "very_mild"]
    for label, name in enumerate(class_names):
        d = root / name
        d.mkdir()
        for i in range(16):
            data_mod.write_raw_image(d / f"img{i:02d}.raw",
                                     quadrant_image(label, rng))
    return root
