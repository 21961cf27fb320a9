"""Dataset ingestion and preprocessing.

Directory-per-class layout: root/<class_name>/*.{png,jpg,jpeg,raw}; the
class index is the position of the directory name in lexicographic
order. Pixels are intensity/255 in [0,1], channels-first. Grayscale
sources are replicated to 3 channels.

The .raw fixture codec is: width, height, channels as u32 little-endian,
then height*width*channels uint8 bytes in HWC order.
"""

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import tensor
from .errors import ArgumentError, FormatError, StructureError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".raw"}


@dataclass
class LabeledImage:
    pixels: np.ndarray  # (3, h, w) float in [0,1]
    label: int
    source_path: str


@dataclass
class Dataset:
    class_names: list
    items: list = field(default_factory=list)
    tags: list = field(default_factory=list)  # "train" | "test" per item

    def indices(self, subset):
        return [i for i, t in enumerate(self.tags) if t == subset]

    def class_counts(self):
        counts = [0] * len(self.class_names)
        for item in self.items:
            counts[item.label] += 1
        return counts


def write_raw_image(path, pixels):
    """Write a (3,h,w) or (h,w) float [0,1] array in the fixture codec."""
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = arr[None].repeat(3, axis=0)
    c, h, w = arr.shape
    data = np.clip(arr * 255.0 + 0.5, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", w, h, c))
        fh.write(data.transpose(1, 2, 0).tobytes())


def _read_raw_image(path):
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: raw image header truncated")
    w, h, c = struct.unpack("<III", raw[:12])
    if c not in (1, 3) or len(raw) != 12 + w * h * c:
        raise FormatError(f"{path}: raw image payload does not match header")
    arr = np.frombuffer(raw[12:], dtype=np.uint8).reshape(h, w, c)
    return arr


def decode_image(path):
    """Decode one file to a (3,h,w) float array in [0,1]."""
    path = Path(path)
    if path.suffix.lower() == ".raw":
        arr = _read_raw_image(path)
    else:
        with Image.open(path) as img:
            img = img.convert("RGB")
            arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape[2] == 1:
        arr = arr.repeat(3, axis=2)
    pixels = arr.astype(tensor.get_default_dtype()) / 255.0
    return np.ascontiguousarray(pixels.transpose(2, 0, 1))


def load_dataset(root_dir, num_classes=4):
    """Scan root/<class>/* into a Dataset; undecodable files are skipped
    with a warning, but a class that ends empty is an error."""
    root = Path(root_dir)
    if not root.is_dir():
        raise StructureError(f"dataset root {root} is not a directory")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if len(class_dirs) != num_classes:
        raise StructureError(
            f"expected {num_classes} class directories under {root}, "
            f"found {len(class_dirs)}")
    ds = Dataset(class_names=[d.name for d in class_dirs])
    for label, d in enumerate(class_dirs):
        n_loaded = 0
        for f in sorted(d.iterdir()):
            if not f.is_file() or f.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                pixels = decode_image(f)
            except Exception as exc:  # undecodable file: skip, keep going
                warnings.warn(f"skipping undecodable image {f}: {exc}")
                continue
            ds.items.append(LabeledImage(pixels=pixels, label=label,
                                         source_path=str(f)))
            n_loaded += 1
        if n_loaded == 0:
            raise StructureError(f"class directory {d} has no decodable images")
    ds.tags = ["train"] * len(ds.items)
    return ds


def resize(img, target=(224, 224)):
    """Bilinear resize of a (c,h,w) array. Source coordinate for output
    index i is (i+0.5)*src/dst - 0.5, clamped to the image."""
    img = np.asarray(img)
    c, h, w = img.shape
    if h == 0 or w == 0:
        raise ArgumentError("resize: empty input image")
    th, tw = target
    if (h, w) == (th, tw):
        return img.copy()

    def axis_coords(src, dst):
        coord = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        coord = np.clip(coord, 0, src - 1)
        lo = np.floor(coord).astype(int)
        hi = np.minimum(lo + 1, src - 1)
        frac = coord - lo
        return lo, hi, frac

    ylo, yhi, yf = axis_coords(h, th)
    xlo, xhi, xf = axis_coords(w, tw)
    yf = yf[:, None]
    xf = xf[None, :]
    top = img[:, ylo][:, :, xlo] * (1 - xf) + img[:, ylo][:, :, xhi] * xf
    bot = img[:, yhi][:, :, xlo] * (1 - xf) + img[:, yhi][:, :, xhi] * xf
    out = top * (1 - yf) + bot * yf
    return out.astype(img.dtype)


def rotate_nearest(img, angle_deg):
    """Rotate about the image center; each output pixel takes the nearest
    source pixel of the inverse-mapped coordinate, clamped to the edges
    ("nearest fill")."""
    img = np.asarray(img)
    c, h, w = img.shape
    if angle_deg == 0:
        return img.copy()
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    # inverse rotation of the output grid back into source coordinates
    src_y = cos_t * yy + sin_t * xx + cy
    src_x = -sin_t * yy + cos_t * xx + cx
    src_y = np.clip(np.rint(src_y).astype(int), 0, h - 1)
    src_x = np.clip(np.rint(src_x).astype(int), 0, w - 1)
    return img[:, src_y, src_x]


def split(ds: Dataset, train_frac=0.8, seed=0):
    """Stratified split: per class, shuffle by seed and tag the first
    ceil(train_frac * n) items train, the rest test."""
    tags = [None] * len(ds.items)
    for label in range(len(ds.class_names)):
        idxs = [i for i, item in enumerate(ds.items) if item.label == label]
        if len(idxs) < 2:
            raise ArgumentError(
                f"class {ds.class_names[label]!r} has {len(idxs)} item(s); "
                "need at least 2 to split")
        rng = tensor.make_rng(seed, stream=(label,))
        order = rng.permutation(len(idxs))
        n_train = math.ceil(train_frac * len(idxs))
        for rank, j in enumerate(order):
            tags[idxs[j]] = "train" if rank < n_train else "test"
    ds.tags = tags
    return ds


def batches(ds: Dataset, subset, batch_size=32, seed=0, epoch=0,
            shuffle=False, augment=False, max_rotation_deg=15.0,
            image_size=224):
    """Yield (images[b,3,s,s], one_hot[b,K]) covering the subset exactly
    once. Augmentation draws come from per-item streams of (seed, epoch,
    item index), so the order of emission never changes the pixels."""
    idxs = ds.indices(subset)
    if not idxs:
        raise ArgumentError(f"batches: subset {subset!r} is empty")
    if batch_size < 1:
        raise ArgumentError("batches: batch_size must be >= 1")
    if shuffle:
        rng = tensor.make_rng(seed, stream=(1, epoch))
        idxs = [idxs[j] for j in rng.permutation(len(idxs))]
    k = len(ds.class_names)
    dtype = tensor.get_default_dtype()
    for start in range(0, len(idxs), batch_size):
        chunk = idxs[start:start + batch_size]
        images = np.empty((len(chunk), 3, image_size, image_size), dtype=dtype)
        labels = np.zeros((len(chunk), k), dtype=dtype)
        for row, i in enumerate(chunk):
            item = ds.items[i]
            pixels = item.pixels
            if augment and max_rotation_deg > 0:
                item_rng = tensor.make_rng(seed, stream=(2, epoch, i))
                angle = item_rng.uniform(-max_rotation_deg, max_rotation_deg)
                pixels = rotate_nearest(pixels, angle)
            if pixels.shape[1:] != (image_size, image_size):
                pixels = resize(pixels, (image_size, image_size))
            images[row] = pixels
            labels[row, item.label] = 1.0
        yield images, labels
