"""Minimal fully connected networks with exact reverse-mode gradients, an
adaptive-moment optimizer, and a versioned checkpoint format.

Everything runs on flat float64 parameter vectors so optimizers, checkpoints
and hashing see a single contiguous array.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

CHECKPOINT_MAGIC = b"SACLONET"
CHECKPOINT_VERSION = 1

_HIDDEN_ACTS = ("elu", "tanh", "relu")
_OUTPUT_ACTS = ("identity", "sigmoid")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture description: [in, hidden..., out] widths plus activations."""

    widths: tuple[int, ...]
    hidden_act: str = "elu"
    output_act: str = "identity"
    init: str = "he_normal"
    last_layer_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if len(self.widths) < 3:
            raise ValueError("need at least one hidden layer: widths = (in, hidden..., out)")
        if any(w < 1 for w in self.widths):
            raise ValueError("all layer widths must be >= 1")
        if self.hidden_act not in _HIDDEN_ACTS:
            raise ValueError(f"unknown hidden activation {self.hidden_act!r}")
        if self.output_act not in _OUTPUT_ACTS:
            raise ValueError(f"unknown output activation {self.output_act!r}")

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def num_params(self) -> int:
        return sum(
            self.widths[i] * self.widths[i + 1] + self.widths[i + 1]
            for i in range(len(self.widths) - 1)
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @staticmethod
    def from_dict(d: dict) -> "MlpSpec":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return MlpSpec(**d)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "elu":
        return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "identity":
        return z
    raise ValueError(name)


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "elu":
        return np.where(z > 0.0, 1.0, a + 1.0)
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(name)


def init_params(spec: MlpSpec) -> np.ndarray:
    """Seeded He-style initialization; biases start at zero."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    chunks = []
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        scale = np.sqrt(2.0 / fan_in)
        if i == n_layers - 1:
            scale *= spec.last_layer_scale
        w = rng.normal(0.0, scale, size=(fan_in, fan_out))
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def _unpack(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    if params.shape != (spec.num_params(),):
        raise ValueError(
            f"parameter vector length {params.shape} does not match spec ({spec.num_params()},)"
        )
    layers = []
    ofs = 0
    for i in range(len(spec.widths) - 1):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        w = params[ofs : ofs + fan_in * fan_out].reshape(fan_in, fan_out)
        ofs += fan_in * fan_out
        b = params[ofs : ofs + fan_out]
        ofs += fan_out
        layers.append((w, b))
    return layers


def forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Batched forward pass; accepts (in,) or (batch, in)."""
    y, _ = forward_cached(spec, params, x)
    return y


def forward_cached(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    """Forward pass that also returns the layer cache needed by `gradient`."""
    squeeze = x.ndim == 1
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != spec.in_dim:
        raise ValueError(f"input width {h.shape[1]} does not match spec input {spec.in_dim}")
    layers = _unpack(spec, params)
    cache = {"inputs": [h], "pre": []}
    n = len(layers)
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        cache["pre"].append(z)
        act = spec.output_act if i == n - 1 else spec.hidden_act
        h = _act(act, z)
        cache["inputs"].append(h)
    cache["squeeze"] = squeeze
    return (h[0] if squeeze else h), cache


def gradient(
    spec: MlpSpec,
    params: np.ndarray,
    cache: dict,
    upstream: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode gradient of sum(output * upstream) w.r.t. params.

    Returns (flat parameter gradient, gradient w.r.t. the input batch).
    """
    layers = _unpack(spec, params)
    n = len(layers)
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if g.shape != cache["inputs"][-1].shape:
        raise ValueError(
            f"upstream shape {g.shape} does not match forward output {cache['inputs'][-1].shape}"
        )
    grads_w: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        act = spec.output_act if i == n - 1 else spec.hidden_act
        z = cache["pre"][i]
        a = cache["inputs"][i + 1]
        g = g * _act_grad(act, z, a)
        grads_w[i] = cache["inputs"][i].T @ g
        grads_b[i] = g.sum(axis=0)
        g = g @ layers[i][0].T
    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)])
    return flat, (g[0] if cache["squeeze"] else g)


def grad_for_input(spec: MlpSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray):
    """Convenience: forward + gradient in one call."""
    _, cache = forward_cached(spec, params, x)
    return gradient(spec, params, cache, upstream)


@dataclass
class Adam:
    """Adaptive-moment optimizer over one flat parameter vector."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def save_checkpoint(
    path,
    spec: MlpSpec,
    params: np.ndarray,
    extras: dict | None = None,
    adam: Adam | None = None,
) -> None:
    """Versioned binary checkpoint: magic, version, JSON header, raw float64
    arrays. Byte-for-byte reproducible for identical inputs."""
    header = {
        "spec": spec.to_dict(),
        "extras": extras or {},
        "n_params": int(params.size),
        "has_moments": adam is not None and adam.m is not None,
        "adam": None,
    }
    if header["has_moments"]:
        header["adam"] = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                          "eps": adam.eps, "t": adam.t}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(params, dtype=np.float64).tobytes())
        if header["has_moments"]:
            f.write(np.ascontiguousarray(adam.m, dtype=np.float64).tobytes())
            f.write(np.ascontiguousarray(adam.v, dtype=np.float64).tobytes())


def load_checkpoint(path) -> tuple[MlpSpec, np.ndarray, dict, Adam | None]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a network checkpoint: bad magic {magic!r}")
        version = struct.unpack("<I", f.read(4))[0]
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        hlen = struct.unpack("<I", f.read(4))[0]
        header = json.loads(f.read(hlen).decode("utf-8"))
        spec = MlpSpec.from_dict(header["spec"])
        n = header["n_params"]
        params = np.frombuffer(f.read(8 * n), dtype=np.float64).copy()
        adam = None
        if header["has_moments"]:
            a = header["adam"]
            adam = Adam(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], t=a["t"])
            adam.m = np.frombuffer(f.read(8 * n), dtype=np.float64).copy()
            adam.v = np.frombuffer(f.read(8 * n), dtype=np.float64).copy()
    return spec, params, header["extras"], adam


@dataclass
class GaussianPolicy:
    """Diagonal-Gaussian policy: an MLP mean head plus a learned,
    state-independent log-std vector appended to the flat parameters."""

    spec: MlpSpec
    params: np.ndarray = field(default=None)  # type: ignore[assignment]
    log_std_init: float = -1.0

    def __post_init__(self):
        if self.params is None:
            self.params = np.concatenate(
                [init_params(self.spec), np.full(self.spec.out_dim, self.log_std_init)]
            )
        expected = self.spec.num_params() + self.spec.out_dim
        if self.params.shape != (expected,):
            raise ValueError("parameter vector does not match policy spec")

    # Effective log-std is clamped so the 1/sigma^2 log-prob gradients cannot
    # blow up once the policy sharpens; the raw parameters stay unclamped.
    LOG_STD_MIN = -2.3
    LOG_STD_MAX = 1.0

    @property
    def mlp_params(self) -> np.ndarray:
        return self.params[: self.spec.num_params()]

    @property
    def raw_log_std(self) -> np.ndarray:
        return self.params[self.spec.num_params():]

    @property
    def log_std(self) -> np.ndarray:
        return np.clip(self.raw_log_std, self.LOG_STD_MIN, self.LOG_STD_MAX)

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return forward(self.spec, self.mlp_params, obs)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Draw actions; returns (actions, log_probs, means)."""
        mu = self.mean(obs)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(mu.shape)
        actions = mu + std * noise
        logp = self.log_prob(obs, actions, mu=mu)
        return actions, logp, mu

    def log_prob(self, obs: np.ndarray, actions: np.ndarray, mu: np.ndarray | None = None):
        if mu is None:
            mu = self.mean(obs)
        log_std = self.log_std
        var = np.exp(2.0 * log_std)
        d = actions - mu
        return -0.5 * np.sum(d * d / var + 2.0 * log_std + np.log(2.0 * np.pi), axis=-1)

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * np.log(2.0 * np.pi * np.e)))
