"""Small dense-network engine on numpy, double precision throughout.

Just enough machinery for the two networks the trainers need: ReLU hidden
layers, either a linear output or a (0,1)-squashed output 0.5*tanh(z)+0.5,
plain SGD, Polyak averaging, and a byte-exact parameter codec shared with
the online parameter-push protocol.  Gradients are analytic; the oracle
suite checks them against central finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

OUT_LINEAR = "linear"
OUT_UNIT_TANH = "unit_tanh"  # 0.5 * tanh(z) + 0.5, range (0, 1)

_HEADER = struct.Struct("<QI")  # version, layer-count-of-dims
_DIM = struct.Struct("<I")


@dataclass
class MlpParams:
    """Dense network parameters; weights[l] has shape (dims[l+1], dims[l])."""

    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output: str = OUT_UNIT_TANH
    version: int = 0

    @classmethod
    def init(cls, dims: list[int], output: str, rng: np.random.Generator) -> "MlpParams":
        """Uniform +-1/sqrt(fan_in) init, the classic small-net recipe."""
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"need at least two positive layer dims, got {dims}")
        if output not in (OUT_LINEAR, OUT_UNIT_TANH):
            raise ValueError(f"unknown output activation '{output}'")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(list(dims), weights, biases, output)

    def copy(self) -> "MlpParams":
        return MlpParams(list(self.dims), [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.output, self.version)


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def _apply_output(z: np.ndarray, output: str) -> np.ndarray:
    if output == OUT_LINEAR:
        return z
    return 0.5 * np.tanh(z) + 0.5


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network; x may be a single vector or a (batch, dim) matrix."""
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = _apply_output(z, params.output) if l == last else np.maximum(z, 0.0)
    return a[0] if np.asarray(x).ndim == 1 else a


def backward(params: MlpParams, x: np.ndarray,
             upstream: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """Backpropagate d(loss)/d(output) through the network.

    Args:
        x: input batch (batch, dims[0]) or single vector.
        upstream: d(loss)/d(output), same leading shape as forward's result.

    Returns:
        (grads summed over the batch, d(loss)/d(input) per sample).
    """
    single = np.asarray(x).ndim == 1
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))

    acts = [a]
    zs = []
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        zs.append(z)
        acts.append(_apply_output(z, params.output) if l == last else np.maximum(z, 0.0))

    if params.output == OUT_UNIT_TANH:
        t = np.tanh(zs[-1])
        dz = g * 0.5 * (1.0 - t * t)
    else:
        dz = g
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    for l in range(last, -1, -1):
        gw[l] = dz.T @ acts[l]
        gb[l] = dz.sum(axis=0)
        da = dz @ params.weights[l]
        if l > 0:
            dz = da * (zs[l - 1] > 0.0)
    input_grad = da[0] if single else da
    return MlpGrads(gw, gb), input_grad


def sgd_step(params: MlpParams, grads: MlpGrads, lr: float) -> None:
    """In-place p <- p - lr * g."""
    for w, g in zip(params.weights, grads.weights):
        w -= lr * g
    for b, g in zip(params.biases, grads.biases):
        b -= lr * g


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> None:
    """In-place Polyak step t <- (1 - tau) * t + tau * s."""
    if target.dims != source.dims:
        raise ValueError("network shapes differ")
    for tw, sw in zip(target.weights, source.weights):
        tw *= 1.0 - tau
        tw += tau * sw
    for tb, sb in zip(target.biases, source.biases):
        tb *= 1.0 - tau
        tb += tau * sb


# --- parameter codec ----------------------------------------------------------
# Layout: version u64 LE | dim-count u32 LE | dims u32 LE each |
# per layer: weights row-major f64 LE, then biases f64 LE.
# The same bytes serve as the on-disk parameter file and the body of a
# parameter-push message, so a served model round-trips bit-exactly.

def serialize(params: MlpParams) -> bytes:
    chunks = [_HEADER.pack(params.version, len(params.dims))]
    chunks += [_DIM.pack(d) for d in params.dims]
    for w, b in zip(params.weights, params.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(chunks)


def deserialize(data: bytes, output: str = OUT_UNIT_TANH) -> MlpParams:
    """Inverse of serialize; raises ValueError on truncated or oversized input."""
    if len(data) < _HEADER.size:
        raise ValueError("parameter blob too short for header")
    version, ndims = _HEADER.unpack_from(data, 0)
    off = _HEADER.size
    if ndims < 2 or ndims > 64:
        raise ValueError(f"implausible layer count {ndims}")
    if len(data) < off + ndims * _DIM.size:
        raise ValueError("parameter blob too short for layer dims")
    dims = []
    for _ in range(ndims):
        dims.append(_DIM.unpack_from(data, off)[0])
        off += _DIM.size
    if any(d < 1 for d in dims):
        raise ValueError(f"non-positive layer dim in {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        need = 8 * fan_out * (fan_in + 1)
        if len(data) < off + need:
            raise ValueError("parameter blob truncated inside layer data")
        w = np.frombuffer(data, dtype="<f8", count=fan_out * fan_in, offset=off)
        off += 8 * fan_out * fan_in
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        weights.append(w.reshape(fan_out, fan_in).copy())
        biases.append(b.copy())
    if off != len(data):
        raise ValueError(f"{len(data) - off} trailing bytes after layer data")
    return MlpParams(dims, weights, biases, output, version)
