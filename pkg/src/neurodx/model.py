"""Hybrid CNN-LSTM classifier: VGG16-style extractor (5 blocks of 3x3
convs + 2x2 max pool, 13 convs total), flatten-to-sequence, one LSTM
layer, and a dense head ending in softmax over 4 classes.

Also owns the binary checkpoint format (parameters + Adam state).
"""

import io
import struct
from dataclasses import dataclass

import numpy as np

from . import layers, recurrent, tensor
from .errors import ConfigError, DimensionError, FormatError, StateError, VersionError

VGG_CONVS_PER_BLOCK = (2, 2, 3, 3, 3)


@dataclass
class ModelConfig:
    input_shape: tuple = (3, 224, 224)
    num_classes: int = 4
    channels: tuple = (64, 128, 256, 512, 512)
    lstm_hidden: int = 128
    head_hidden: int = 128
    # "spatial49": feature map (C,H,W) becomes H*W timesteps of C features;
    # "single_step": one timestep of C*H*W features
    sequence_mode: str = "spatial49"


PRESETS = {
    "paper": ModelConfig(),
    "toy": ModelConfig(input_shape=(3, 32, 32), channels=(4, 8, 8, 16, 16),
                       lstm_hidden=16, head_hidden=16),
}


@dataclass
class ModelGraph:
    config: ModelConfig
    plan: list          # ordered layer descriptors
    params: dict        # name -> ndarray
    lstm: recurrent.LSTMParams = None

    def conv_params(self, name, stride=(1, 1), padding="same"):
        return layers.Conv2DParams(self.params[f"{name}.w"], self.params[f"{name}.b"],
                                   stride=stride, padding=padding)

    def dense_params(self, name):
        return layers.DenseParams(self.params[f"{name}.w"], self.params[f"{name}.b"])

    def all_params(self):
        """Flat name -> array view of every trainable tensor (LSTM included)."""
        out = dict(self.params)
        for k in self.lstm.names():
            out[f"lstm.{k}"] = getattr(self.lstm, k)
        return out

    def set_param(self, name, value):
        if name.startswith("lstm."):
            setattr(self.lstm, name[5:], value)
        else:
            self.params[name] = value

    def forward(self, batch, mode="train"):
        """Run the full graph; returns (probs, caches). caches is None in
        eval mode."""
        x = np.asarray(batch)
        expected = (self.config.input_shape[0],) + tuple(self.config.input_shape[1:])
        if x.ndim != 4 or x.shape[1:] != expected:
            raise DimensionError(
                f"model: batch shape {x.shape} != (n, {', '.join(map(str, expected))})")
        train = mode == "train"
        caches = [] if train else None
        for layer in self.plan:
            kind = layer["kind"]
            if kind == "conv":
                x, c = layers.conv2d_forward(x, self.conv_params(layer["name"]))
            elif kind == "relu":
                x, c = layers.relu(x)
            elif kind == "pool":
                x, c = layers.maxpool_forward(x, layers.Pool2DParams())
            elif kind == "to_seq":
                x, c = _to_sequence(x, self.config.sequence_mode)
            elif kind == "lstm":
                outputs, final, c = recurrent.lstm_forward(x, self.lstm)
                x = final.h  # head consumes only the last hidden state
                c = (c, outputs.shape)
            elif kind == "dense":
                x, c = layers.dense_forward(x, self.dense_params(layer["name"]))
            elif kind == "softmax":
                x = layers.softmax(x)
                c = x
            else:
                raise ConfigError(f"unknown layer kind {kind!r}")
            if train:
                caches.append(c)
        return x, caches

    def backward(self, caches, grad_probs):
        """Gradients of every trainable tensor given dL/d(probs)."""
        if caches is None:
            raise StateError("backward requires caches from a train-mode forward")
        grads = {}
        g = np.asarray(grad_probs)
        for layer, c in zip(reversed(self.plan), reversed(caches)):
            kind = layer["kind"]
            if kind == "softmax":
                g = layers.softmax_backward(c, g)
            elif kind == "dense":
                g, gw, gb = layers.dense_backward(c, g)
                grads[f"{layer['name']}.w"] = gw
                grads[f"{layer['name']}.b"] = gb
            elif kind == "lstm":
                lstm_cache, out_shape = c
                up = np.zeros(out_shape, dtype=g.dtype)
                up[:, -1, :] = g
                g, gp, _ = recurrent.lstm_backward(lstm_cache, up)
                for k, v in gp.items():
                    grads[f"lstm.{k}"] = v
            elif kind == "to_seq":
                g = _from_sequence_grad(g, c)
            elif kind == "pool":
                g = layers.maxpool_backward(c, g)
            elif kind == "relu":
                g = layers.relu_backward(c, g)
            elif kind == "conv":
                g, gw, gb = layers.conv2d_backward(c, g)
                grads[f"{layer['name']}.w"] = gw
                grads[f"{layer['name']}.b"] = gb
        return grads

    def layer_census(self):
        counts = {}
        for layer in self.plan:
            counts[layer["kind"]] = counts.get(layer["kind"], 0) + 1
        return counts

    def layer_table(self):
        """(name, output shape, parameter count) per layer, for inspection."""
        c, h, w = self.config.input_shape
        shape = (c, h, w)
        rows = []
        for layer in self.plan:
            kind = layer["kind"]
            nparams = 0
            if kind == "conv":
                wts = self.params[f"{layer['name']}.w"]
                shape = (wts.shape[0], shape[1], shape[2])
                nparams = wts.size + wts.shape[0]
            elif kind == "pool":
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif kind == "to_seq":
                flat = shape[0] * shape[1] * shape[2]
                rows.append(("flatten", (flat,), 0))
                if self.config.sequence_mode == "spatial49":
                    shape = (shape[1] * shape[2], shape[0])
                else:
                    shape = (1, flat)
            elif kind == "lstm":
                shape = (self.config.lstm_hidden,)
                nparams = sum(getattr(self.lstm, k).size for k in self.lstm.names())
            elif kind == "dense":
                wts = self.params[f"{layer['name']}.w"]
                shape = (wts.shape[1],)
                nparams = wts.size + wts.shape[1]
            name = layer.get("name", kind)
            rows.append((name, shape, nparams))
        return rows


def _to_sequence(x, mode):
    n, c, h, w = x.shape
    if mode == "spatial49":
        seq = x.reshape(n, c, h * w).transpose(0, 2, 1)
    elif mode == "single_step":
        seq = x.reshape(n, 1, c * h * w)
    else:
        raise ConfigError(f"unknown sequence_mode {mode!r}")
    return seq, (x.shape, mode)


def _from_sequence_grad(g, cache):
    x_shape, mode = cache
    n, c, h, w = x_shape
    if mode == "spatial49":
        return np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(x_shape)
    return g.reshape(x_shape)


def build_hybrid(config: ModelConfig, rng):
    """Instantiate the hybrid graph with fresh parameters.

    Conv and the first head dense use He uniform (they feed ReLU); the
    softmax head dense uses Xavier uniform.
    """
    c_in, h, w = config.input_shape
    if h % 32 != 0 or w % 32 != 0 or h < 32 or w < 32:
        raise ConfigError(
            f"input {h}x{w} must be divisible by 32 (5 pooling halvings)")
    if len(config.channels) != len(VGG_CONVS_PER_BLOCK):
        raise ConfigError(f"expected {len(VGG_CONVS_PER_BLOCK)} channel entries, "
                          f"got {len(config.channels)}")
    if config.sequence_mode not in ("spatial49", "single_step"):
        raise ConfigError(f"unknown sequence_mode {config.sequence_mode!r}")

    plan = []
    params = {}
    prev = c_in
    idx = 0
    for out_ch, n_convs in zip(config.channels, VGG_CONVS_PER_BLOCK):
        for _ in range(n_convs):
            idx += 1
            name = f"conv{idx}"
            fan_in = prev * 9
            params[f"{name}.w"] = tensor.he_uniform((out_ch, prev, 3, 3), fan_in, rng)
            params[f"{name}.b"] = tensor.zeros((out_ch,))
            plan.append({"kind": "conv", "name": name})
            plan.append({"kind": "relu"})
            prev = out_ch
        plan.append({"kind": "pool"})

    fh, fw = h // 32, w // 32
    plan.append({"kind": "to_seq"})
    if config.sequence_mode == "spatial49":
        lstm_input = prev
    else:
        lstm_input = prev * fh * fw
    lstm = recurrent.init_lstm_params(lstm_input, config.lstm_hidden, rng)
    plan.append({"kind": "lstm"})

    params["fc1.w"] = tensor.he_uniform(
        (config.lstm_hidden, config.head_hidden), config.lstm_hidden, rng)
    params["fc1.b"] = tensor.zeros((config.head_hidden,))
    plan.append({"kind": "dense", "name": "fc1"})
    plan.append({"kind": "relu"})
    params["fc2.w"] = tensor.xavier_uniform(
        (config.head_hidden, config.num_classes),
        config.head_hidden, config.num_classes, rng)
    params["fc2.b"] = tensor.zeros((config.num_classes,))
    plan.append({"kind": "dense", "name": "fc2"})
    plan.append({"kind": "softmax"})

    return ModelGraph(config=config, plan=plan, params=params, lstm=lstm)


def extractor_param_count(config: ModelConfig):
    """Closed-form parameter count of the 13-conv extractor:
    sum of (9 * c_in * c_out + c_out)."""
    total = 0
    prev = config.input_shape[0]
    for out_ch, n_convs in zip(config.channels, VGG_CONVS_PER_BLOCK):
        for _ in range(n_convs):
            total += 9 * prev * out_ch + out_ch
            prev = out_ch
    return total


# ---------------------------------------------------------------------------
# Checkpoint format: little-endian binary.
#   8-byte magic, u32 version,
#   u32 metadata length + metadata bytes ("key=value\n" lines),
#   u32 tensor count, then per tensor:
#     u32 name length + name bytes, u32 rank, rank x u64 dims,
#     raw float32 data.
# ---------------------------------------------------------------------------

MAGIC = b"NDXCKPT\x01"
VERSION = 1


def _config_to_meta(config: ModelConfig):
    return {
        "input_shape": ",".join(map(str, config.input_shape)),
        "num_classes": str(config.num_classes),
        "channels": ",".join(map(str, config.channels)),
        "lstm_hidden": str(config.lstm_hidden),
        "head_hidden": str(config.head_hidden),
        "sequence_mode": config.sequence_mode,
    }


def _config_from_meta(meta):
    return ModelConfig(
        input_shape=tuple(int(v) for v in meta["input_shape"].split(",")),
        num_classes=int(meta["num_classes"]),
        channels=tuple(int(v) for v in meta["channels"].split(",")),
        lstm_hidden=int(meta["lstm_hidden"]),
        head_hidden=int(meta["head_hidden"]),
        sequence_mode=meta["sequence_mode"],
    )


def save_checkpoint(model: ModelGraph, optstate, path, epoch=0, seed=0):
    """Serialize parameters plus optimizer moments; bit-exact round trip."""
    meta = _config_to_meta(model.config)
    meta["epoch"] = str(epoch)
    meta["seed"] = str(seed)
    meta["adam_t"] = str(optstate.t if optstate is not None else -1)

    tensors = dict(model.all_params())
    if optstate is not None:
        for name in sorted(optstate.m):
            tensors[f"adam.m.{name}"] = optstate.m[name]
            tensors[f"adam.v.{name}"] = optstate.v[name]

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    meta_bytes = "".join(f"{k}={v}\n" for k, v in sorted(meta.items())).encode()
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"checkpoint truncated while reading {what}")
    return data


def load_checkpoint(path):
    """Returns (model, optstate_or_None, meta dict)."""
    from .optim import AdamState

    with open(path, "rb") as fh:
        if _read_exact(fh, 8, "magic") != MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise VersionError(f"{path}: unsupported checkpoint version {version}")
        (mlen,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        meta = {}
        for line in _read_exact(fh, mlen, "metadata").decode().splitlines():
            k, _, v = line.partition("=")
            meta[k] = v
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, nlen, "name").decode()
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, "dims"))
            size = int(np.prod(dims)) if rank else 1
            raw = _read_exact(fh, 4 * size, f"data of {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()

    config = _config_from_meta(meta)
    rng = tensor.make_rng(0)
    model = build_hybrid(config, rng)
    for name in model.all_params():
        if name not in tensors:
            raise FormatError(f"checkpoint missing tensor {name}")
        model.set_param(name, tensors[name])

    optstate = None
    t = int(meta.get("adam_t", "-1"))
    if t >= 0:
        m = {k[len("adam.m."):]: v for k, v in tensors.items() if k.startswith("adam.m.")}
        v = {k[len("adam.v."):]: w for k, w in tensors.items() if k.startswith("adam.v.")}
        optstate = AdamState(m=m, v=v, t=t)
    return model, optstate, meta
