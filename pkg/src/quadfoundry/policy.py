"""The tiny recurrent flight policy: dense-in, GRU, dense-out.

Architecture (hidden size H, default 16):
    x   = tanh(obs @ W_in + b_in)                       dense input, 22 -> H
    z   = sigmoid(x @ W_ih[z] + b_ih[z] + h @ W_hh[z] + b_hh[z])
    r   = sigmoid(x @ W_ih[r] + b_ih[r] + h @ W_hh[r] + b_hh[r])
    n   = tanh(x @ W_ih[n] + b_ih[n] + r * (h @ W_hh[n] + b_hh[n]))
    h'  = (1 - z) * n + z * h
    act = (tanh(h' @ W_out + b_out) + 1) / 2            dense output, H -> 4

Gate blocks are stored in z|r|n order inside the 3H-wide matrices. The
initial hidden state is a learnable H-vector (starts at zeros), which is
what reset() restores. Inference is constant work per step regardless of
how long the policy has been running.

Weights are immutable at inference time; any number of hidden states can be
evolved in parallel against the same weights.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nets import sigmoid

POLICY_MAGIC = b"QFPG"
POLICY_VERSION = 1

OBS_DIM_DEFAULT = 22
ACT_DIM_DEFAULT = 4


def param_count(hidden: int, obs_dim: int = OBS_DIM_DEFAULT,
                act_dim: int = ACT_DIM_DEFAULT) -> int:
    """Exact learnable-parameter count of the architecture above."""
    if hidden < 1:
        raise ValueError("hidden size must be >= 1")
    p_in = obs_dim * hidden + hidden
    p_gru = 2 * 3 * hidden * hidden + 2 * 3 * hidden + hidden  # + initial hidden vector
    p_out = hidden * act_dim + act_dim
    return p_in + p_gru + p_out


def flop_count(hidden: int, obs_dim: int = OBS_DIM_DEFAULT,
               act_dim: int = ACT_DIM_DEFAULT) -> int:
    """Floating-point operations per inference step.

    Counting 2 ops per multiply-accumulate in the matrix products, 1 op per
    bias/elementwise add or multiply, and 1 op per scalar nonlinearity:
      input : 2*obs*H + H (bias) + H (tanh)
      gru   : 2*H*3H * 2 (both matmuls) + 6H (biases) + 3H (gate-sum adds)
              + 2H (sigmoids) + H (tanh) + H (r*gh_n)
              + 4H (h' = (1-z)*n + z*h)
      output: 2*H*act + act (bias) + act (tanh) + 2*act (affine to [0,1])
    """
    if hidden < 1:
        raise ValueError("hidden size must be >= 1")
    f_in = 2 * obs_dim * hidden + 2 * hidden
    f_gru = 12 * hidden * hidden + 17 * hidden
    f_out = 2 * hidden * act_dim + 4 * act_dim
    return f_in + f_gru + f_out


class PolicyGRU:
    """Student policy weights plus stateless forward/backward kernels."""

    PARAM_NAMES = ("W_in", "b_in", "W_ih", "b_ih", "W_hh", "b_hh", "h0",
                   "W_out", "b_out")

    def __init__(self, hidden: int = 16, obs_dim: int = OBS_DIM_DEFAULT,
                 act_dim: int = ACT_DIM_DEFAULT,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.hidden = hidden
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.dtype = np.dtype(dtype)
        h = hidden
        if rng is None:
            self.W_in = np.zeros((obs_dim, h), dtype=self.dtype)
            self.b_in = np.zeros(h, dtype=self.dtype)
            self.W_ih = np.zeros((h, 3 * h), dtype=self.dtype)
            self.b_ih = np.zeros(3 * h, dtype=self.dtype)
            self.W_hh = np.zeros((h, 3 * h), dtype=self.dtype)
            self.b_hh = np.zeros(3 * h, dtype=self.dtype)
            self.W_out = np.zeros((h, act_dim), dtype=self.dtype)
            self.b_out = np.zeros(act_dim, dtype=self.dtype)
        else:
            def unif(n_in, shape):
                bound = 1.0 / np.sqrt(n_in)
                return rng.uniform(-bound, bound, shape).astype(self.dtype)
            self.W_in = unif(obs_dim, (obs_dim, h))
            self.b_in = unif(obs_dim, h)
            self.W_ih = unif(h, (h, 3 * h))
            self.b_ih = unif(h, 3 * h)
            self.W_hh = unif(h, (h, 3 * h))
            self.b_hh = unif(h, 3 * h)
            self.W_out = unif(h, (h, act_dim))
            self.b_out = unif(h, act_dim)
        self.h0 = np.zeros(h, dtype=self.dtype)  # learnable initial hidden

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in self.PARAM_NAMES]

    def set_parameters(self, params: list[np.ndarray]) -> None:
        for name, arr in zip(self.PARAM_NAMES, params):
            setattr(self, name, np.asarray(arr, dtype=self.dtype))

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "PolicyGRU":
        clone = PolicyGRU(self.hidden, self.obs_dim, self.act_dim, dtype=self.dtype)
        clone.set_parameters([p.copy() for p in self.parameters()])
        return clone

    def reset_hidden(self, batch: int | None = None) -> np.ndarray:
        """Fresh hidden state(s) holding the learnable initial vector."""
        if batch is None:
            return self.h0.copy()
        return np.tile(self.h0, (batch, 1))

    # -- forward ------------------------------------------------------------

    def step(self, obs: np.ndarray, h: np.ndarray, cache: dict | None = None):
        """One step for a batch: obs (B, obs_dim), h (B, H) -> (act, h')."""
        if not np.all(np.isfinite(obs)):
            raise FloatingPointError("non-finite observation")
        obs = obs.astype(self.dtype, copy=False)
        h = h.astype(self.dtype, copy=False)
        hd = self.hidden
        x = np.tanh(obs @ self.W_in + self.b_in)
        gi = x @ self.W_ih + self.b_ih
        gh = h @ self.W_hh + self.b_hh
        z = sigmoid(gi[:, :hd] + gh[:, :hd])
        r = sigmoid(gi[:, hd:2 * hd] + gh[:, hd:2 * hd])
        ghn = gh[:, 2 * hd:]
        n = np.tanh(gi[:, 2 * hd:] + r * ghn)
        h_new = (1.0 - z) * n + z * h
        y = h_new @ self.W_out + self.b_out
        ty = np.tanh(y)
        act = 0.5 * (ty + 1.0)
        if cache is not None:
            cache.update(obs=obs, x=x, z=z, r=r, n=n, ghn=ghn,
                         h_prev=h, h_new=h_new, ty=ty)
        return act, h_new

    def forward(self, obs: np.ndarray, h: np.ndarray):
        """Single-vehicle step: obs (obs_dim,), h (H,) -> (action (4,), h')."""
        act, h_new = self.step(obs[None], h[None])
        return act[0], h_new[0]

    def forward_sequence(self, obs_seq: np.ndarray, h_start: np.ndarray | None = None,
                         want_cache: bool = False):
        """Unroll over obs_seq (T, B, obs_dim). Returns (actions, hiddens[, caches]).

        hiddens[t] is the state *after* step t; the initial state is the
        learnable vector unless h_start is given.
        """
        T, B = obs_seq.shape[0], obs_seq.shape[1]
        h = self.reset_hidden(B).astype(self.dtype) if h_start is None else h_start
        actions = np.empty((T, B, self.act_dim), dtype=self.dtype)
        hiddens = np.empty((T, B, self.hidden), dtype=self.dtype)
        caches = [] if want_cache else None
        for t in range(T):
            cache = {} if want_cache else None
            act, h = self.step(obs_seq[t], h, cache)
            actions[t] = act
            hiddens[t] = h
            if want_cache:
                caches.append(cache)
        if want_cache:
            return actions, hiddens, caches
        return actions, hiddens

    # -- backward (truncated BPTT) -------------------------------------------

    def backward_sequence(self, caches: list[dict], dactions: np.ndarray,
                          truncation: int | None = None) -> list[np.ndarray]:
        """Gradients of a scalar loss given d loss / d action per step.

        Processes the sequence in truncation-length chunks; the hidden state
        was carried across chunk boundaries in the forward pass but gradients
        stop there. The gradient reaching t=0 flows into the learnable
        initial hidden vector. Returns grads in parameters() order.
        """
        T = len(caches)
        B = dactions.shape[1]
        hd = self.hidden
        K = T if truncation is None else max(1, truncation)
        g = {name: np.zeros_like(getattr(self, name)) for name in self.PARAM_NAMES}

        chunk_starts = list(range(0, T, K))
        for t0 in reversed(chunk_starts):
            t1 = min(t0 + K, T)
            dh = np.zeros((B, hd), dtype=self.dtype)
            for t in range(t1 - 1, t0 - 1, -1):
                c = caches[t]
                dy = dactions[t].astype(self.dtype) * 0.5 * (1.0 - c["ty"] ** 2)
                g["W_out"] += c["h_new"].T @ dy
                g["b_out"] += dy.sum(axis=0)
                dh = dh + dy @ self.W_out.T
                z, r, n, hp = c["z"], c["r"], c["n"], c["h_prev"]
                dz = dh * (hp - n)
                dn = dh * (1.0 - z)
                dh_prev = dh * z
                dpre_n = dn * (1.0 - n ** 2)
                dr = dpre_n * c["ghn"]
                dpre_z = dz * z * (1.0 - z)
                dpre_r = dr * r * (1.0 - r)
                dgi = np.concatenate([dpre_z, dpre_r, dpre_n], axis=1)
                dgh = np.concatenate([dpre_z, dpre_r, dpre_n * r], axis=1)
                g["W_ih"] += c["x"].T @ dgi
                g["b_ih"] += dgi.sum(axis=0)
                g["W_hh"] += hp.T @ dgh
                g["b_hh"] += dgh.sum(axis=0)
                dh_prev = dh_prev + dgh @ self.W_hh.T
                dxpre = (dgi @ self.W_ih.T) * (1.0 - c["x"] ** 2)
                g["W_in"] += c["obs"].T @ dxpre
                g["b_in"] += dxpre.sum(axis=0)
                dh = dh_prev
            if t0 == 0:
                g["h0"] += dh.sum(axis=0)
        return [g[name] for name in self.PARAM_NAMES]


# ---------------------------------------------------------------------------
# portable export

def export_policy(policy: PolicyGRU, path: str | Path) -> None:
    """Flat binary: magic, version, H, obs_dim, act_dim (u32 LE), then the
    parameter arrays row-major as little-endian float32 in PARAM_NAMES order."""
    blob = bytearray()
    blob += POLICY_MAGIC
    blob += struct.pack("<IIII", POLICY_VERSION, policy.hidden,
                        policy.obs_dim, policy.act_dim)
    for p in policy.parameters():
        blob += np.ascontiguousarray(p, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_policy(path: str | Path) -> PolicyGRU:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != POLICY_MAGIC:
        raise ValueError(f"{path}: not a policy file (bad magic)")
    version, hidden, obs_dim, act_dim = struct.unpack_from("<IIII", raw, 4)
    if version != POLICY_VERSION:
        raise ValueError(f"{path}: unsupported policy version {version}")
    policy = PolicyGRU(hidden, obs_dim, act_dim, dtype=np.float32)
    off = 20
    params = []
    for ref in policy.parameters():
        count = ref.size
        end = off + 4 * count
        if end > len(raw):
            raise ValueError(f"{path}: truncated policy file")
        params.append(np.frombuffer(raw, dtype="<f4", count=count,
                                    offset=off).reshape(ref.shape).copy())
        off = end
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in policy file")
    policy.set_parameters(params)
    return policy
