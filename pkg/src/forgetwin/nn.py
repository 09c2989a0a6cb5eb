"""Small fully connected networks with hand-written gradients.

Weights are stored as ``(fan_in, fan_out)`` so a batch ``x`` of shape
``(B, fan_in)`` maps to ``x @ W + b``. Hidden layers use tanh, the output
layer is linear.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
CHECKPOINT_VERSION = 1


class Mlp:
    def __init__(self, sizes, rng: np.random.Generator | None = None, out_scale: float = 1.0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError("need at least an input and an output size")
        self.sizes = sizes
        rng = rng or np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / math.sqrt(n_in)
            if i == len(sizes) - 2:
                bound *= out_scale
            self.params.append(rng.uniform(-bound, bound, (n_in, n_out)))
            self.params.append(np.zeros(n_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x):
        """Return ``(y, cache)``; ``cache`` feeds :meth:`backward`."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {x.shape[-1]}")
        acts = [x]
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out, need_input_grad: bool = False):
        """Gradients of ``sum(grad_out * y)`` w.r.t. every parameter.

        Returns a list aligned with :attr:`params` (and the input gradient
        too when ``need_input_grad``).
        """
        if cache is None:
            raise ValueError("backward needs the cache from forward")
        acts = cache
        g = np.asarray(grad_out, dtype=np.float64)
        grads: list[np.ndarray] = [None] * len(self.params)
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            a_in = acts[i]
            if a_in.ndim == 1:
                grads[2 * i] = np.outer(a_in, g)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = a_in.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            if i > 0 or need_input_grad:
                g = g @ self.params[2 * i].T
        if need_input_grad:
            return grads, g
        return grads

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size


def gaussian_logprob(actions, mean, log_std):
    """Diagonal Gaussian log-density, summed over the last axis."""
    std = np.exp(log_std)
    z = (actions - mean) / std
    return np.sum(-0.5 * z**2 - log_std - 0.5 * LOG_2PI, axis=-1)


class GaussianPolicy:
    """State-dependent mean, state-independent learnable log-std."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), rng=None,
                 init_log_std: float = math.log(0.5), out_scale: float = 0.01):
        self.mean_net = Mlp([obs_dim, *hidden, act_dim], rng, out_scale=out_scale)
        self.log_std = np.full(act_dim, float(init_log_std))

    @property
    def params(self) -> list[np.ndarray]:
        return self.mean_net.params + [self.log_std]

    def mean(self, states):
        return self.mean_net(states)

    def sample(self, state, noise):
        """Reparameterised draw ``mu + sigma * noise`` and its log-probability."""
        mu = self.mean_net(state)
        a = mu + np.exp(self.log_std) * noise
        return a, float(gaussian_logprob(a, mu, self.log_std))

    def log_prob(self, states, actions):
        mu, cache = self.mean_net.forward(states)
        return gaussian_logprob(actions, mu, self.log_std), (mu, cache)

    def log_prob_grads(self, states, actions, dlogp, cache=None):
        """Gradients of ``sum(dlogp * log pi(a|s))`` w.r.t. :attr:`params`."""
        if cache is None:
            _, cache = self.log_prob(states, actions)
        mu, net_cache = cache
        var = np.exp(2.0 * self.log_std)
        diff = actions - mu
        w = np.asarray(dlogp)[..., None]
        g_mu = w * diff / var
        g_logstd = np.sum(w * (diff**2 / var - 1.0), axis=tuple(range(diff.ndim - 1)))
        return self.mean_net.backward(net_cache, g_mu) + [g_logstd]

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (LOG_2PI + 1.0)))


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads) -> None:
        """Apply one descent step in place (``grads`` are of the loss)."""
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        for g, p in zip(grads, self.params):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for g, p, m, v in zip(grads, self.params, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t), "hyper": np.array([self.lr, self.beta1, self.beta2, self.eps])}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_arrays(self, arrs: dict[str, np.ndarray]) -> None:
        self.t = int(arrs["t"])
        self.lr, self.beta1, self.beta2, self.eps = (float(x) for x in arrs["hyper"])
        for i in range(len(self.m)):
            self.m[i][...] = arrs[f"m{i}"]
            self.v[i][...] = arrs[f"v{i}"]


# --- checkpoints --------------------------------------------------------------

def save_checkpoint(path, policy: GaussianPolicy, critic: Mlp, pi_opt: Adam | None = None,
                    v_opt: Adam | None = None, meta: dict | None = None) -> Path:
    """Write an ``.npz`` holding layer sizes, weights, log-std and optimiser state."""
    arrs = {
        "version": np.array(CHECKPOINT_VERSION),
        "pi_sizes": np.array(policy.mean_net.sizes),
        "v_sizes": np.array(critic.sizes),
        "log_std": policy.log_std,
    }
    for i, p in enumerate(policy.mean_net.params):
        arrs[f"pi_{i}"] = p
    for i, p in enumerate(critic.params):
        arrs[f"v_{i}"] = p
    for prefix, opt in (("pi_opt_", pi_opt), ("v_opt_", v_opt)):
        if opt is not None:
            for k, a in opt.state_arrays().items():
                arrs[prefix + k] = a
    for k, val in (meta or {}).items():
        arrs[f"meta_{k}"] = np.array(val)
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrs)
    return path


def load_checkpoint(path):
    """Return ``(policy, critic, pi_opt, v_opt, meta)``; optimisers may be None."""
    with np.load(path, allow_pickle=False) as z:
        arrs = {k: z[k] for k in z.files}
    if int(arrs["version"]) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {int(arrs['version'])}")
    pi_sizes = [int(s) for s in arrs["pi_sizes"]]
    policy = GaussianPolicy(pi_sizes[0], pi_sizes[-1], hidden=pi_sizes[1:-1])
    for i, p in enumerate(policy.mean_net.params):
        p[...] = arrs[f"pi_{i}"]
    policy.log_std[...] = arrs["log_std"]
    critic = Mlp([int(s) for s in arrs["v_sizes"]])
    for i, p in enumerate(critic.params):
        p[...] = arrs[f"v_{i}"]
    opts = []
    for prefix, params in (("pi_opt_", policy.params), ("v_opt_", critic.params)):
        if prefix + "t" in arrs:
            opt = Adam(params)
            opt.load_arrays({k[len(prefix):]: v for k, v in arrs.items() if k.startswith(prefix)})
            opts.append(opt)
        else:
            opts.append(None)
    meta = {k[5:]: arrs[k].item() if arrs[k].ndim == 0 else arrs[k].tolist() for k in arrs if k.startswith("meta_")}
    return policy, critic, opts[0], opts[1], meta
