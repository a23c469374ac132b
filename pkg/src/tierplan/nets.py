"""Minimal neural substrate: feedforward nets, losses, optimizers.

Everything is plain numpy with hand-written backward passes, which keeps the
finite-difference checks in the test suite meaningful. Inputs are batches of
row vectors; parameters live in flat lists so one optimizer implementation
serves every network.
"""

from __future__ import annotations

import numpy as np

SIGMOID_CLAMP = 1e-7


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def relu(z):
    return np.maximum(z, 0.0)


def drelu(z):
    return (z > 0.0).astype(z.dtype)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


class Mlp:
    """Fully connected stack: ReLU hidden layers, linear or sigmoid output."""

    def __init__(self, widths: list[int], rng: np.random.Generator, output: str = "linear"):
        if output not in ("linear", "sigmoid"):
            raise ValueError(f"unknown output activation {output!r}")
        self.widths = list(widths)
        self.output = output
        self.weights = [glorot(rng, widths[i], widths[i + 1]) for i in range(len(widths) - 1)]
        self.biases = [np.zeros(widths[i + 1]) for i in range(len(widths) - 1)]

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: np.ndarray):
        """Returns (output, cache); cache feeds backward()."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.widths[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.widths[0]}")
        acts = [x]
        zs = []
        h = x
        last = len(self.weights) - 1
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            zs.append(z)
            if j < last:
                h = relu(z)
            elif self.output == "sigmoid":
                h = sigmoid(z)
            else:
                h = z
            acts.append(h)
        return h, (acts, zs)

    def backward(self, cache, dout: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(pre-activation output).

        ``dout`` must already include the output activation's derivative
        (for the usual losses that term cancels into a simple residual).
        Returns (param gradients aligned with ``params``, d(loss)/d(input)).
        """
        acts, zs = cache
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        delta = dout
        for j in range(len(self.weights) - 1, -1, -1):
            grads[2 * j] = acts[j].T @ delta
            grads[2 * j + 1] = delta.sum(axis=0)
            if j > 0:
                delta = (delta @ self.weights[j].T) * drelu(zs[j - 1])
        dx = delta @ self.weights[0].T if self.weights else dout
        return grads, dx


class SiameseNet:
    """Twin embedding towers with an absolute-difference merge.

    Both inputs pass through the same embedding stack; the merged vector
    feeds a small head whose penultimate activations are the similarity
    latents and whose single sigmoid unit is the similarity score. The merge
    keeps elementwise |a - b| (rather than a scalar distance) so the
    penultimate layer still sees a vector.
    """

    def __init__(self, input_width: int, rng: np.random.Generator,
                 embed_widths: tuple[int, ...] = (64, 64, 32), latent_width: int = 16):
        self.embed = Mlp([input_width] + list(embed_widths), rng, output="linear")
        self.pen_w = glorot(rng, embed_widths[-1], latent_width)
        self.pen_b = np.zeros(latent_width)
        self.out_w = glorot(rng, latent_width, 1)
        self.out_b = np.zeros(1)

    @property
    def params(self) -> list[np.ndarray]:
        return self.embed.params + [self.pen_w, self.pen_b, self.out_w, self.out_b]

    @property
    def trunk_params(self) -> list[np.ndarray]:
        """Embedding plus penultimate parameters (everything but the head)."""
        return self.embed.params + [self.pen_w, self.pen_b]

    def forward_pair(self, ha: np.ndarray, hb: np.ndarray):
        """Returns (score in (0,1), latents, cache)."""
        ha = np.atleast_2d(np.asarray(ha, dtype=float))
        hb = np.atleast_2d(np.asarray(hb, dtype=float))
        ea_raw, cache_a = self.embed.forward(ha)
        eb_raw, cache_b = self.embed.forward(hb)
        ea, eb = relu(ea_raw), relu(eb_raw)
        merged = np.abs(ea - eb)
        pen_z = merged @ self.pen_w + self.pen_b
        latent = relu(pen_z)
        logit = latent @ self.out_w + self.out_b
        score = sigmoid(logit)
        return score[:, 0], latent, (cache_a, cache_b, ea_raw, eb_raw, ea, eb, merged, pen_z, latent)

    def backward_bce(self, cache, score: np.ndarray, labels: np.ndarray):
        """Gradients of the mean binary cross-entropy over the batch."""
        (cache_a, cache_b, ea_raw, eb_raw, ea, eb, merged, pen_z, latent) = cache
        batch = score.shape[0]
        dlogit = ((score - labels) / batch)[:, None]
        d_out_w = latent.T @ dlogit
        d_out_b = dlogit.sum(axis=0)
        dlatent = dlogit @ self.out_w.T
        dpen_z = dlatent * drelu(pen_z)
        d_pen_w = merged.T @ dpen_z
        d_pen_b = dpen_z.sum(axis=0)
        dmerged = dpen_z @ self.pen_w.T
        dea = dmerged * np.sign(ea - eb) * drelu(ea_raw)
        deb = -dmerged * np.sign(ea - eb) * drelu(eb_raw)
        grads_a, _ = self.embed.backward(cache_a, dea)
        grads_b, _ = self.embed.backward(cache_b, deb)
        embed_grads = [ga + gb for ga, gb in zip(grads_a, grads_b)]
        return embed_grads + [d_pen_w, d_pen_b, d_out_w, d_out_b]


def bce_loss(score: np.ndarray, labels: np.ndarray) -> float:
    s = np.clip(score, SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
    return float(np.mean(-(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s))))


def bce_grad(net: SiameseNet, ha: np.ndarray, hb: np.ndarray, labels: np.ndarray):
    """Loss and parameter gradients for a labeled batch of feature pairs."""
    labels = np.atleast_1d(np.asarray(labels, dtype=float))
    score, _latent, cache = net.forward_pair(ha, hb)
    return bce_loss(score, labels), net.backward_bce(cache, score, labels)


def td_loss(q: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
    taken = q[np.arange(q.shape[0]), actions]
    return float(np.mean((targets - taken) ** 2))


def mse_td_grad(net: Mlp, states: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Squared temporal-difference error, gradient only through taken actions.

    Targets are constants here; whoever builds them decides on bootstrap
    terms. Returns (loss, parameter gradients).
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.atleast_1d(np.asarray(actions, dtype=int))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    q, cache = net.forward(states)
    batch = states.shape[0]
    taken = q[np.arange(batch), actions]
    dout = np.zeros_like(q)
    dout[np.arange(batch), actions] = 2.0 * (taken - targets) / batch
    grads, _ = net.backward(cache, dout)
    return td_loss(q, actions, targets), grads


class RmsProp:
    def __init__(self, lr: float = 1e-3, decay: float = 0.9, eps: float = 1e-8):
        self.lr, self.decay, self.eps = lr, decay, eps
        self.sq: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.sq is None:
            self.sq = [np.zeros_like(p) for p in params]
        for p, g, s in zip(params, grads, self.sq):
            s *= self.decay
            s += (1.0 - self.decay) * g * g
            p -= self.lr * g / (np.sqrt(s) + self.eps)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def save_params(path, arrays: list[np.ndarray]) -> None:
    """Parameter checkpoint: tensors keyed t0000, t0001, ... with shapes."""
    np.savez(path, **{f"t{j:04d}": a for j, a in enumerate(arrays)})


def load_params(path) -> list[np.ndarray]:
    with np.load(path) as data:
        return [data[k] for k in sorted(data.files)]


def load_params_into(path, params: list[np.ndarray]) -> None:
    """Overwrite live parameter arrays in place, checking shapes."""
    loaded = load_params(path)
    if len(loaded) != len(params):
        raise ValueError(f"checkpoint holds {len(loaded)} tensors, expected {len(params)}")
    for dst, src in zip(params, loaded):
        if dst.shape != src.shape:
            raise ValueError(f"shape mismatch {dst.shape} vs {src.shape}")
        dst[...] = src
