"""A small multilayer perceptron with hand-written gradients and AdamW."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

CHECKPOINT_VERSION = 1
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "softplus")


class StaleCacheError(RuntimeError):
    """backward() called without a matching forward()."""


def softplus(x):
    return np.logaddexp(0.0, x)


def _activate(kind, x):
    if kind == "identity":
        return x
    if kind == "sigmoid":
        return expit(x)
    if kind == "softplus":
        return softplus(x)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(kind, pre, out):
    if kind == "identity":
        return np.ones_like(pre)
    if kind == "sigmoid":
        return out * (1.0 - out)
    return expit(pre)


class Mlp:
    """Fully connected network: rectifier hidden layers, chosen output activation.

    ``widths`` lists every layer size including input and output, so
    ``[4, 50, 50, 1]`` has three weight layers.
    """

    def __init__(self, widths, output="identity", rng=None, params=None):
        self.widths = [int(w) for w in widths]
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError("need at least input and output widths, all positive")
        if output not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output activation must be one of {OUTPUT_ACTIVATIONS}")
        self.output = output
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = []
            for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
                params.append(np.zeros(fan_out))
        self.params = [np.array(p, dtype=np.float64) for p in params]
        self._check_params()
        self._cache = None

    def _check_params(self):
        if len(self.params) != 2 * (len(self.widths) - 1):
            raise ValueError("parameter count does not match widths")
        for i, (fan_in, fan_out) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            if self.params[2 * i].shape != (fan_in, fan_out) or self.params[2 * i + 1].shape != (fan_out,):
                raise ValueError(f"layer {i} parameters have the wrong shape")
        if not all(np.all(np.isfinite(p)) for p in self.params):
            raise ValueError("parameters must be finite")

    @property
    def num_layers(self) -> int:
        return len(self.widths) - 1

    def copy(self) -> "Mlp":
        return Mlp(self.widths, self.output, params=[p.copy() for p in self.params])

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None]
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ValueError(f"expected input dimension {self.widths[0]}, got shape {x.shape}")
        return x, single

    def forward(self, x, return_pre=False):
        """Evaluate on a vector or a (batch, in) array and cache activations."""
        x, single = self._as_batch(x)
        acts = [x]
        h = x
        for i in range(self.num_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < self.num_layers - 1:
                h = np.maximum(z, 0.0)
                acts.append(h)
        out = _activate(self.output, z)
        self._cache = (acts, z, out)
        res = (out, z) if return_pre else out
        if single:
            return tuple(r[0] for r in res) if return_pre else res[0]
        return res

    def predict(self, x, dtype=np.float64):
        """Forward pass without caching; ``dtype=np.float32`` trades precision for speed."""
        x, single = self._as_batch(x)
        h = x.astype(dtype, copy=False)
        for i in range(self.num_layers):
            z = h @ self.params[2 * i].astype(dtype, copy=False) + self.params[2 * i + 1].astype(dtype, copy=False)
            if i < self.num_layers - 1:
                h = np.maximum(z, 0)
        out = _activate(self.output, z.astype(np.float64))
        return out[0] if single else out

    def backward(self, grad, wrt="output"):
        """Gradients of a scalar loss given its gradient at the output.

        ``wrt="pre"`` means ``grad`` is taken with respect to the output
        pre-activation, which is the stable route for logistic losses.
        Returns (param_grads, input_grad). The cache is consumed.
        """
        if self._cache is None:
            raise StaleCacheError("backward() needs a fresh forward() on the same input")
        acts, pre, out = self._cache
        self._cache = None
        g = np.asarray(grad, dtype=np.float64)
        if g.ndim == 1 and pre.shape[0] == 1 and g.shape[0] == pre.shape[1]:
            g = g[None]
        if g.shape != pre.shape:
            raise ValueError(f"upstream gradient shape {g.shape} does not match output {pre.shape}")
        if wrt == "output":
            g = g * _activation_grad(self.output, pre, out)
        elif wrt != "pre":
            raise ValueError("wrt must be 'output' or 'pre'")
        grads = [None] * len(self.params)
        for i in reversed(range(self.num_layers)):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
            if i > 0:
                g = g * (acts[i] > 0)
        return grads, g

    def save(self, path):
        arrays = {f"p{i}": p for i, p in enumerate(self.params)}
        np.savez(
            path,
            version=np.array(CHECKPOINT_VERSION),
            widths=np.array(self.widths),
            output=np.array(self.output),
            **arrays,
        )

    @classmethod
    def load(cls, path) -> "Mlp":
        with np.load(path, allow_pickle=False) as data:
            return cls.from_arrays(data)

    def to_arrays(self, prefix=""):
        out = {f"{prefix}widths": np.array(self.widths), f"{prefix}output": np.array(self.output)}
        out.update({f"{prefix}p{i}": p for i, p in enumerate(self.params)})
        return out

    @classmethod
    def from_arrays(cls, data, prefix="") -> "Mlp":
        version = int(data["version"]) if "version" in data else CHECKPOINT_VERSION
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        widths = [int(w) for w in data[f"{prefix}widths"]]
        params = [data[f"{prefix}p{i}"] for i in range(2 * (len(widths) - 1))]
        return cls(widths, str(data[f"{prefix}output"]), params=params)


@dataclass
class AdamW:
    """Adam with decoupled weight decay.

    Decay is applied as ``p -= lr * weight_decay * p`` before the adaptive step.
    """

    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def _init(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        """Update ``params`` in place and return them."""
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        if not self.m:
            self._init(params)
        for p, g, m in zip(params, grads, self.m):
            if p.shape != g.shape or p.shape != m.shape:
                raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if self.weight_decay:
                p -= self.lr * self.weight_decay * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params

    def state_arrays(self):
        return {"step": np.array(self.step_count), **{f"m{i}": a for i, a in enumerate(self.m)},
                **{f"v{i}": a for i, a in enumerate(self.v)}}
