"""Dense array primitives: dtype mode, seeded RNG streams, matmul,
elementwise ops, and weight initialization schemes.

Arrays are plain row-major numpy ndarrays. A module-level default dtype
selects single precision for training and double precision for gradient
checking; arrays created by `init`-style helpers pick it up.
"""

from contextlib import contextmanager

import numpy as np

from .errors import ArgumentError, DimensionError

_DEFAULT_DTYPE = np.float32

_DTYPES = {"float32": np.float32, "float64": np.float64}


def set_default_dtype(name):
    """Set the global element precision: 'float32' or 'float64'."""
    global _DEFAULT_DTYPE
    if name not in _DTYPES:
        raise ArgumentError(f"unknown dtype {name!r}; expected float32 or float64")
    _DEFAULT_DTYPE = _DTYPES[name]


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def use_dtype(name):
    """Temporarily switch the default precision (used by gradient checks)."""
    global _DEFAULT_DTYPE
    old = _DEFAULT_DTYPE
    set_default_dtype(name)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


def make_rng(seed, stream=()):
    """Seeded PCG64 generator.

    `stream` is a tuple of integers selecting an independent substream of
    the same master seed (epoch index, item index, ...). Identical
    (seed, stream) gives a bit-identical draw sequence on every platform.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def matmul(a, b):
    """Matrix product of two 2-D arrays with explicit shape validation."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    return a @ b


def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _check_same_shape("add", a, b)
    return a + b


def sub(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _check_same_shape("sub", a, b)
    return a - b


def mul(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _check_same_shape("mul", a, b)
    return a * b


def scale(a, s):
    """Multiply by a scalar (the only permitted broadcast)."""
    return np.asarray(a) * float(s)


def apply(a, fn):
    """Elementwise map by an arbitrary scalar function."""
    return np.vectorize(fn, otypes=[np.asarray(a).dtype])(a)


def zeros(shape):
    return np.zeros(shape, dtype=_DEFAULT_DTYPE)


def full(shape, value):
    return np.full(shape, value, dtype=_DEFAULT_DTYPE)


def he_uniform(shape, fan_in, rng):
    """U(-sqrt(6/fan_in), +sqrt(6/fan_in)) — for layers feeding ReLU."""
    if fan_in <= 0:
        raise ArgumentError(f"he_uniform: fan_in must be positive, got {fan_in}")
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(_DEFAULT_DTYPE)


def xavier_uniform(shape, fan_in, fan_out, rng):
    """U(-sqrt(6/(fan_in+fan_out)), +...) — for sigmoid/tanh/softmax layers."""
    if fan_in <= 0 or fan_out <= 0:
        raise ArgumentError(f"xavier_uniform: fans must be positive, got {fan_in}, {fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(_DEFAULT_DTYPE)
