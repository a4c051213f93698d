"""Parameterized sampling policies with exact log-probabilities.

Both policies keep their parameters in one flat float64 vector so gradient
accumulation, finite differences and serialization share one code path.
"""

import io
import itertools

import numpy as np

from pombo import kernels

_MAGIC = b"POMBO-POLICY 1\n"


class DomainError(ValueError):
    pass


class GradAccumulator:
    """Gradient buffer shaped like a policy's flat parameter vector."""

    def __init__(self, size, scale=1.0):
        self.buffer = np.zeros(size)
        self.scale = scale

    def add(self, grad, weight=1.0):
        self.buffer += weight * grad
        return self

    def clear(self):
        self.buffer[:] = 0.0
        return self

    @property
    def value(self):
        return self.scale * self.buffer


class Policy:
    """Shared flat-parameter plumbing; subclasses define the distribution."""

    kind = None
    params: np.ndarray

    @property
    def n_params(self):
        return self.params.size

    def new_accumulator(self):
        return GradAccumulator(self.n_params)

    def step(self, acc, lr):
        """Plain gradient ascent ``theta += lr * grad``, then clear ``acc``."""
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr!r}")
        self.params += lr * acc.value
        acc.clear()
        return self

    def set_params(self, flat):
        self.params[:] = flat
        return self

    def grad_logprob(self, points, acc, weights=1.0):
        """Accumulate ``sum_i weights_i * d ln pi(points_i) / d theta`` into ``acc``."""
        points = self.check_points(points)
        weights = np.broadcast_to(np.asarray(weights, dtype=np.float64), (len(points),))
        if np.any(weights != 0.0):
            acc.add(self._weighted_grad(points, weights))
        return acc

    def entropy(self):
        lp = self.logprob(self.enumerate_points())
        return float(-(np.exp(lp) @ lp))

    def save(self, path):
        header = [f"kind: {self.kind}"] + [f"{k}: {v}" for k, v in self.dims().items()]
        header.append(f"params: {self.n_params}")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(("\n".join(header) + "\n\n").encode("ascii"))
            fh.write(self.params.astype("<f8").tobytes())


class TabularSoftmaxPolicy(Policy):
    kind = "tabular"

    def __init__(self, n_arms, logits=None):
        if n_arms < 1:
            raise ValueError("need at least one arm")
        self.n_arms = int(n_arms)
        self.params = np.zeros(self.n_arms) if logits is None else np.array(logits, dtype=np.float64)
        if self.params.shape != (self.n_arms,):
            raise ValueError("logits must have one entry per arm")

    @property
    def logits(self):
        return self.params

    def dims(self):
        return {"n_arms": self.n_arms}

    def copy(self):
        return TabularSoftmaxPolicy(self.n_arms, self.params.copy())

    def log_probs(self):
        z = self.params - self.params.max()
        return z - np.log(np.exp(z).sum())

    def probs(self):
        return np.exp(self.log_probs())

    def enumerate_points(self):
        return np.arange(self.n_arms)

    def check_points(self, points):
        pts = np.atleast_1d(np.asarray(points))
        if pts.ndim != 1 or not np.issubdtype(pts.dtype, np.integer):
            raise DomainError("tabular points must be integer arm indices")
        if pts.size and (pts.min() < 0 or pts.max() >= self.n_arms):
            raise DomainError(f"arm index outside [0, {self.n_arms})")
        return pts

    def sample(self, rng, count):
        cum = np.cumsum(self.probs())
        idx = np.searchsorted(cum, rng.random(count), side="right")
        return np.minimum(idx, self.n_arms - 1)

    def logprob(self, points):
        return self.log_probs()[self.check_points(points)]

    def _weighted_grad(self, points, weights):
        # d ln pi_x / d logits = e_x - pi
        return np.bincount(points, weights, minlength=self.n_arms) - weights.sum() * self.probs()


def all_sequences(vocab, length):
    """Every token sequence in lexicographic order (first token most significant)."""
    return np.array(list(itertools.product(range(vocab), repeat=length)), dtype=np.int64).reshape(-1, length)


class AutoregressiveSeqPolicy(Policy):
    """Fixed-length autoregressive model over ``vocab ** length`` sequences.

    The conditional at position ``t`` is ``softmax(W2 tanh(W1 e_t + b1) + b2[t])``
    where ``e_t`` concatenates one-hot codes of the first ``t`` tokens,
    zero-pads the rest, and appends a one-hot code of ``t`` itself.  Only the
    output bias is position-specific; a shared bias would pull every position
    toward the same token whenever most positions prefer it.
    """

    kind = "sequence"

    def __init__(self, vocab, length, hidden=32, params=None, rng=None, init_std=0.01, pos_std=1.0):
        self.vocab, self.length, self.hidden = int(vocab), int(length), int(hidden)
        n_in = self.vocab * self.length + self.length
        self._shapes = [(self.hidden, n_in), (self.hidden,), (self.vocab, self.hidden), (self.length, self.vocab)]
        sizes = [int(np.prod(s)) for s in self._shapes]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        if params is not None:
            self.params = np.array(params, dtype=np.float64)
            if self.params.size != self._offsets[-1]:
                raise ValueError("parameter vector has the wrong size")
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            self.params = np.zeros(self._offsets[-1])
            self._view(0)[:] = rng.normal(0.0, init_std, self._shapes[0])
            # distinct hidden codes per position keep shared-weight updates from
            # leaking across positions; W2 stays small so conditionals start near-uniform
            self._view(0)[:, self.vocab * self.length:] = rng.normal(0.0, pos_std, (self.hidden, self.length))
            self._view(2)[:] = rng.normal(0.0, init_std, self._shapes[2])

    def _view(self, i):
        return self.params[self._offsets[i]:self._offsets[i + 1]].reshape(self._shapes[i])

    @property
    def weights(self):
        return tuple(self._view(i) for i in range(4))

    def dims(self):
        return {"vocab": self.vocab, "length": self.length, "hidden": self.hidden}

    def copy(self):
        return AutoregressiveSeqPolicy(self.vocab, self.length, self.hidden, params=self.params.copy())

    def enumerate_points(self):
        return all_sequences(self.vocab, self.length)

    def check_points(self, points):
        pts = np.asarray(points)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != self.length or not np.issubdtype(pts.dtype, np.integer):
            raise DomainError(f"sequence points must be integer arrays of length {self.length}")
        if pts.size and (pts.min() < 0 or pts.max() >= self.vocab):
            raise DomainError(f"token outside [0, {self.vocab})")
        return pts.astype(np.int64, copy=False)

    def sample(self, rng, count):
        w1, b1, w2, b2 = self.weights
        u = rng.random((count, self.length))
        return kernels.ar_sample(
            np.ascontiguousarray(w1), np.ascontiguousarray(b1),
            np.ascontiguousarray(w2), np.ascontiguousarray(b2),
            self.length, self.vocab, u,
        )

    def _forward(self, pts):
        w1, b1, w2, b2 = self.weights
        cols = np.arange(self.length) * self.vocab + pts  # (n, L) input slots
        contrib = w1.T[cols]  # (n, L, H)
        pos = w1[:, self.vocab * self.length:].T  # (L, H)
        pre = np.cumsum(contrib, axis=1) - contrib + pos + b1  # exclusive prefix sums
        h = np.tanh(pre)
        logits = h @ w2.T + b2
        logits -= logits.max(axis=2, keepdims=True)
        logp = logits - np.log(np.exp(logits).sum(axis=2, keepdims=True))
        return cols, h, logp

    def logprob(self, points):
        pts = self.check_points(points)
        _, _, logp = self._forward(pts)
        return np.take_along_axis(logp, pts[:, :, None], axis=2)[:, :, 0].sum(axis=1)

    def _weighted_grad(self, pts, weights):
        w1, _, w2, _ = self.weights
        _, h, logp = self._forward(pts)
        delta = -np.exp(logp)
        np.put_along_axis(delta, pts[:, :, None], np.take_along_axis(delta, pts[:, :, None], axis=2) + 1.0, axis=2)
        delta *= weights[:, None, None]
        g_w2 = np.einsum("ntv,nth->vh", delta, h)
        g_b2 = delta.sum(axis=0)
        d_pre = (delta @ w2) * (1.0 - h * h)
        g_b1 = d_pre.sum(axis=(0, 1))
        # token at slot tau feeds every later position: reverse exclusive cumsum
        d_contrib = np.cumsum(d_pre[:, ::-1], axis=1)[:, ::-1] - d_pre
        g_w1 = np.empty_like(w1)
        for k in range(self.vocab):
            slot = np.einsum("nl,nlh->hl", (pts == k).astype(np.float64), d_contrib)
            g_w1[:, k:self.vocab * self.length:self.vocab] = slot
        g_w1[:, self.vocab * self.length:] = d_pre.sum(axis=0).T
        return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2.ravel()])


def policy_sample(policy, rng, count):
    if count < 1:
        raise ValueError("sample count must be at least 1")
    return policy.sample(rng, count)


def policy_logprob(policy, x):
    return policy.logprob(x)


def policy_grad_logprob(policy, x, accumulator, weight):
    return policy.grad_logprob(x, accumulator, weight)


def policy_step(policy, accumulator, lr):
    return policy.step(accumulator, lr)


def load_policy(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path}: not a policy file")
    head, _, body = data[len(_MAGIC):].partition(b"\n\n")
    fields = {}
    for line in io.StringIO(head.decode("ascii")):
        key, _, val = line.strip().partition(": ")
        fields[key] = val
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if params.size != int(fields["params"]):
        raise ValueError(f"{path}: expected {fields['params']} parameters, found {params.size}")
    if fields["kind"] == "tabular":
        return TabularSoftmaxPolicy(int(fields["n_arms"]), params)
    if fields["kind"] == "sequence":
        return AutoregressiveSeqPolicy(
            int(fields["vocab"]), int(fields["length"]), int(fields["hidden"]), params=params
        )
    raise ValueError(f"{path}: unknown policy kind {fields['kind']!r}")
