"""Minimal tensor/layer library with hand-derived forward and backward passes.

No ML framework: every layer is plain numpy with an explicit gradient, checked
against central finite differences by the test suite.  Data is channel-last;
layers run on batches (N, H, W, C), and the stack transparently promotes a
single (H, W, C) sample.

The reference network maps a 64x64x3 patch to 9 linear outputs (three
3-value heads off a shared trunk): a gray-world branch concatenates the
per-channel global means onto the input, followed by 3x3 conv / ReLU /
2x2 max-pool stages, global average pooling, one dense layer, and three
parallel dense heads.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArchMismatch, InvalidConfig, MagicMismatch, ShapeMismatch, TruncatedFile

CCNN_MAGIC = b"CCNN"
CCNN_VERSION = 1


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _as_batch(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim == ndim:
        return x, False
    raise ShapeMismatch(f"expected {ndim - 1}- or {ndim}-dim input, got shape {x.shape}")


class Layer:
    """Base: stateful cache between forward and backward, named parameters."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class GrayWorldBranch(Layer):
    """Concatenate per-channel global means (broadcast spatially) after the
    input channels: (N,H,W,C) -> (N,H,W,2C).

    Backward: identity on the pass-through channels plus 1/(H*W) of the
    mean-path gradient distributed to every input cell.
    """

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeMismatch(f"gray-world branch expects N,H,W,C, got {x.shape}")
        self._hw = x.shape[1] * x.shape[2]
        means = x.mean(axis=(1, 2))
        branch = np.broadcast_to(means[:, None, None, :], x.shape)
        return np.concatenate([x, branch], axis=3)

    def backward(self, dy):
        c = dy.shape[3] // 2
        return dy[..., :c] + dy[..., c:].sum(axis=(1, 2), keepdims=True) / self._hw


class Conv3x3(Layer):
    """3x3 cross-correlation, stride 1, zero padding 1 (same-size output).

    im2col formulation: gather the nine shifted views of the padded input
    into one (N*H*W, 9*Cin) matrix and run a single GEMM.  Backward is the
    transpose pair (weight gradient via cols^T, input gradient via col2im
    scatter-add of the nine shifts).
    """

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.params["w"] = _he_uniform(rng, (3, 3, c_in, c_out), fan_in=9 * c_in, dtype=dtype)
        self.params["b"] = np.zeros(c_out, dtype=dtype)

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.c_in:
            raise ShapeMismatch(
                f"conv expects (N,H,W,{self.c_in}), got {x.shape}")
        n, h, w, c = x.shape
        xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
        xp[:, 1:h + 1, 1:w + 1, :] = x
        cols = np.empty((n, h, w, 3, 3, c), dtype=x.dtype)
        for ky in range(3):
            for kx in range(3):
                cols[:, :, :, ky, kx, :] = xp[:, ky:ky + h, kx:kx + w, :]
        self._cols, self._dims = cols, (n, h, w)
        wmat = self.params["w"].reshape(9 * c, self.c_out)
        y = cols.reshape(-1, 9 * c) @ wmat + self.params["b"]
        return y.reshape(n, h, w, self.c_out)

    def backward(self, dy):
        n, h, w = self._dims
        c = self.c_in
        dy2 = dy.reshape(-1, self.c_out)
        self.grads["b"] = dy2.sum(axis=0)
        cols2 = self._cols.reshape(-1, 9 * c)
        self.grads["w"] = (cols2.T @ dy2).reshape(3, 3, c, self.c_out)
        dcols = (dy2 @ self.params["w"].reshape(9 * c, self.c_out).T) \
            .reshape(n, h, w, 3, 3, c)
        dxp = np.zeros((n, h + 2, w + 2, c), dtype=dy.dtype)
        for ky in range(3):
            for kx in range(3):
                dxp[:, ky:ky + h, kx:kx + w, :] += dcols[:, :, :, ky, kx, :]
        return dxp[:, 1:h + 1, 1:w + 1, :]


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._mask


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2.  The gradient routes to the first maximal
    element in row-major window order (argmax tie rule)."""

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] % 2 or x.shape[2] % 2:
            raise ShapeMismatch(f"maxpool expects even H and W, got {x.shape}")
        n, h, w, c = x.shape
        win = (x.reshape(n, h // 2, 2, w // 2, 2, c)
               .transpose(0, 1, 3, 2, 4, 5)
               .reshape(n, h // 2, w // 2, 4, c))
        self._idx = win.argmax(axis=3)
        self._shape = x.shape
        return np.take_along_axis(win, self._idx[:, :, :, None, :], axis=3).squeeze(3)

    def backward(self, dy):
        n, h, w, c = self._shape
        dwin = np.zeros((n, h // 2, w // 2, 4, c), dtype=dy.dtype)
        np.put_along_axis(dwin, self._idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
        return (dwin.reshape(n, h // 2, w // 2, 2, 2, c)
                .transpose(0, 1, 3, 2, 4, 5)
                .reshape(n, h, w, c))


class GlobalAvgPool(Layer):
    def forward(self, x):
        if x.ndim != 4:
            raise ShapeMismatch(f"global average pool expects N,H,W,C, got {x.shape}")
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dy):
        n, h, w, c = self._shape
        return np.broadcast_to(dy[:, None, None, :] / (h * w), self._shape).copy()


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.params["w"] = _he_uniform(rng, (n_in, n_out), fan_in=n_in, dtype=dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"dense expects (N,{self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy):
        self.grads["w"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["w"].T


class ThreeHeads(Layer):
    """Three parallel Dense(F -> 3) heads; outputs concatenate to 9 values.

    Head 0 carries the contest answer, heads 1 and 2 the left and right cube
    edges.  Parameters are named head0/w ... head2/b.
    """

    def __init__(self, n_in: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.n_in = n_in
        self.heads = [Dense(n_in, 3, rng, dtype) for _ in range(3)]
        for i, head in enumerate(self.heads):
            self.params[f"head{i}/w"] = head.params["w"]
            self.params[f"head{i}/b"] = head.params["b"]

    def forward(self, x):
        return np.concatenate([h.forward(x) for h in self.heads], axis=1)

    def backward(self, dy):
        dx = None
        for i, head in enumerate(self.heads):
            d = head.backward(dy[:, 3 * i:3 * i + 3])
            self.grads[f"head{i}/w"] = head.grads["w"]
            self.grads[f"head{i}/b"] = head.grads["b"]
            dx = d if dx is None else dx + d
        return dx


class LayerStack:
    """Ordered layers with flat, named parameter access."""

    def __init__(self, layers: list[tuple[str, Layer]], arch_tag: str, input_ndim: int = 4):
        self.layers = layers
        self.arch_tag = arch_tag
        self.input_ndim = input_ndim

    def forward(self, x: np.ndarray, check_finite: bool = False) -> np.ndarray:
        x, self._single = _as_batch(x, self.input_ndim)
        for name, layer in self.layers:
            x = layer.forward(x)
            if check_finite and not np.isfinite(x).all():
                raise FloatingPointError(f"non-finite activation after layer {name}")
        return x[0] if self._single else x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dy = np.asarray(dy)
        if self._single:
            dy = dy[None]
        for _, layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy[0] if self._single else dy

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers:
            for pname, arr in layer.params.items():
                out[f"{name}/{pname}"] = arr
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers:
            for pname, arr in layer.grads.items():
                out[f"{name}/{pname}"] = arr
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        params = self.params()
        if set(values) != set(params):
            raise ArchMismatch("parameter names do not match this architecture")
        for name, arr in values.items():
            if params[name].shape != arr.shape:
                raise ArchMismatch(
                    f"parameter {name}: shape {arr.shape} != {params[name].shape}")
            params[name][...] = arr

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params().items()}

    @property
    def param_count(self) -> int:
        return sum(v.size for v in self.params().values())


@dataclass(frozen=True)
class ArchConfig:
    """Widths of the reference network; depth follows len(conv_channels)."""

    conv_channels: tuple[int, ...] = (16, 32, 64)
    dense_units: int = 64
    input_side: int = 64

    def validate(self):
        if not self.conv_channels or any(c < 1 for c in self.conv_channels):
            raise InvalidConfig(f"conv channels must be positive, got {self.conv_channels}")
        if self.dense_units < 1:
            raise InvalidConfig(f"dense units must be positive, got {self.dense_units}")
        if self.input_side < 1:
            raise InvalidConfig(f"input side must be positive, got {self.input_side}")
        side = self.input_side
        for _ in self.conv_channels:
            if side % 2:
                raise InvalidConfig(
                    f"input side {self.input_side} is not divisible by 2^{len(self.conv_channels)}")
            side //= 2
        if side < 1:
            raise InvalidConfig("too many pooling stages for the input side")

    @property
    def tag(self) -> str:
        return (f"gwcnn-in{self.input_side}"
                f"-c{'x'.join(str(c) for c in self.conv_channels)}"
                f"-d{self.dense_units}")


def parse_arch_tag(tag: str) -> ArchConfig:
    try:
        prefix, in_part, c_part, d_part = tag.split("-")
        if prefix != "gwcnn":
            raise ValueError(tag)
        cfg = ArchConfig(
            conv_channels=tuple(int(c) for c in c_part[1:].split("x")),
            dense_units=int(d_part[1:]),
            input_side=int(in_part[2:]),
        )
        cfg.validate()
        return cfg
    except (ValueError, InvalidConfig):
        raise ArchMismatch(f"cannot rebuild architecture from tag {tag!r}") from None


def build_cerberus(config: ArchConfig = ArchConfig(), seed: int = 0,
                   dtype=np.float32) -> LayerStack:
    """Build the three-headed gray-world-branch network.

    Parameters use seeded He-style fan-in-scaled uniform initialization;
    checkpoints always store float32, so pass dtype=np.float64 only for
    numerical experiments (e.g. gradient checking).
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    layers: list[tuple[str, Layer]] = [("gw", GrayWorldBranch())]
    c_in = 6
    for i, c_out in enumerate(config.conv_channels):
        layers.append((f"conv{i}", Conv3x3(c_in, c_out, rng, dtype)))
        layers.append((f"relu{i}", ReLU()))
        layers.append((f"pool{i}", MaxPool2x2()))
        c_in = c_out
    layers.append(("gap", GlobalAvgPool()))
    layers.append(("dense", Dense(c_in, config.dense_units, rng, dtype)))
    layers.append(("relu_dense", ReLU()))
    layers.append(("heads", ThreeHeads(config.dense_units, rng, dtype)))
    return LayerStack(layers, arch_tag=config.tag)


def normalize_head(raw: np.ndarray) -> np.ndarray:
    """Map raw 3-value head output to a unit-sum chromaticity vector.

    Values below 1e-6 (in particular negatives) are clamped up before
    normalizing, so the result is always a valid chromaticity.
    """
    v = np.maximum(np.asarray(raw, dtype=np.float64), 1e-6)
    return v / v.sum()


# --- checkpoints ---------------------------------------------------------------

def _write_str(fh, s: str) -> None:
    data = s.encode("utf-8")
    fh.write(struct.pack("<I", len(data)))
    fh.write(data)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) < n:
        raise TruncatedFile(f"unexpected end of checkpoint while reading {what}")
    return buf


def _read_str(fh, what: str) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4, what))
    return _read_exact(fh, n, what).decode("utf-8")


def checkpoint_save(model: LayerStack, path) -> None:
    """Write magic, version, arch tag, and every named tensor as float32."""
    params = model.params()
    with open(path, "wb") as fh:
        fh.write(CCNN_MAGIC)
        fh.write(struct.pack("<I", CCNN_VERSION))
        _write_str(fh, model.arch_tag)
        fh.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            _write_str(fh, name)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CCNN_MAGIC:
            raise MagicMismatch(f"expected {CCNN_MAGIC!r}, got {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CCNN_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        tag = _read_str(fh, "arch tag")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            name = _read_str(fh, "tensor name")
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "tensor rank"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "tensor dims"))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(fh, 4 * n, f"tensor {name}"), dtype="<f4")
            tensors[name] = data.reshape(shape).copy()
    return tag, tensors


def checkpoint_load(model: LayerStack, path) -> None:
    """Load parameters into an existing model; the arch tag must match."""
    tag, tensors = _read_checkpoint(path)
    if tag != model.arch_tag:
        raise ArchMismatch(f"checkpoint is {tag!r}, model is {model.arch_tag!r}")
    dtype = next(iter(model.params().values())).dtype
    model.set_params({k: v.astype(dtype) for k, v in tensors.items()})


def load_model(path) -> LayerStack:
    """Rebuild the architecture from the stored tag and load its parameters."""
    tag, tensors = _read_checkpoint(path)
    model = build_cerberus(parse_arch_tag(tag))
    model.set_params(tensors)
    return model
