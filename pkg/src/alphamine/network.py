"""Gated recurrent sequence encoder with a feedforward head, in numpy.

Token prefixes are embedded, run through a stack of GRU layers, and the last
hidden state feeds a tanh MLP whose output layer produces one logit per
vocabulary entry. Probabilities are a masked softmax over legal tokens.

Everything is float64 and hand-differentiated (backprop through time), which
keeps full runs bit-reproducible and lets the optimizer treat the parameters
as one flat vector. Gradients are validated against central finite
differences in the test suite.

GRU cell (single combined bias per gate):

    z = sigmoid(x Wz + h Uz + bz)
    r = sigmoid(x Wr + h Ur + br)
    n = tanh(x Wn + r * (h Un) + bn)
    h' = (1 - z) * n + z * h

Forward passes are read-only on the parameters and safe to run concurrently;
updates require exclusive access.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture shape; defaults follow the reference setup (4x64 GRU, 2x32 head)."""

    vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 64
    gru_layers: int = 4
    head_dims: tuple[int, ...] = (32, 32)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class GruPolicyNetwork:
    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        v, e, h = config.vocab_size, config.embed_dim, config.hidden_dim

        def uniform(shape, fan_in):
            s = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-s, s, size=shape)

        self.params["embed"] = uniform((v, e), e)
        for layer in range(config.gru_layers):
            d_in = e if layer == 0 else h
            for gate in ("z", "r", "n"):
                self.params[f"gru{layer}.W{gate}"] = uniform((d_in, h), d_in)
                self.params[f"gru{layer}.U{gate}"] = uniform((h, h), h)
                self.params[f"gru{layer}.b{gate}"] = np.zeros(h)
        widths = (h,) + tuple(config.head_dims)
        for j in range(len(config.head_dims)):
            self.params[f"head{j}.W"] = uniform((widths[j], widths[j + 1]), widths[j])
            self.params[f"head{j}.b"] = np.zeros(widths[j + 1])
        self.params["out.W"] = uniform((widths[-1], v), widths[-1])
        self.params["out.b"] = np.zeros(v)

        self._keys = list(self.params)
        self._slices: dict[str, tuple[int, int, tuple[int, ...]]] = {}
        start = 0
        for k in self._keys:
            size = self.params[k].size
            self._slices[k] = (start, start + size, self.params[k].shape)
            start += size
        self.n_params = start

    # -- flat parameter vector ------------------------------------------

    def theta(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self._keys])

    def set_theta(self, flat: np.ndarray) -> None:
        for k in self._keys:
            lo, hi, shape = self._slices[k]
            self.params[k] = np.asarray(flat[lo:hi], dtype=float).reshape(shape).copy()

    def add_theta(self, flat: np.ndarray) -> None:
        for k in self._keys:
            lo, hi, shape = self._slices[k]
            self.params[k] += np.asarray(flat[lo:hi]).reshape(shape)

    def param_slices(self) -> dict[str, tuple[int, int, tuple[int, ...]]]:
        return dict(self._slices)

    def flatten_grads(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[k].ravel() for k in self._keys])

    # -- stepwise forward -------------------------------------------------

    def initial_hidden(self) -> list[np.ndarray]:
        return [np.zeros(self.config.hidden_dim) for _ in range(self.config.gru_layers)]

    def _gru_step(self, layer: int, x: np.ndarray, h: np.ndarray):
        p = self.params
        z = _sigmoid(x @ p[f"gru{layer}.Wz"] + h @ p[f"gru{layer}.Uz"] + p[f"gru{layer}.bz"])
        r = _sigmoid(x @ p[f"gru{layer}.Wr"] + h @ p[f"gru{layer}.Ur"] + p[f"gru{layer}.br"])
        u = h @ p[f"gru{layer}.Un"]
        n = np.tanh(x @ p[f"gru{layer}.Wn"] + r * u + p[f"gru{layer}.bn"])
        h_new = (1.0 - z) * n + z * h
        return h_new, (x, h, z, r, u, n)

    def step_hidden(self, hidden: list[np.ndarray], token_index: int) -> list[np.ndarray]:
        x = self.params["embed"][token_index]
        out = []
        for layer in range(self.config.gru_layers):
            h_new, _ = self._gru_step(layer, x, hidden[layer])
            out.append(h_new)
            x = h_new
        return out

    def encode(self, token_indices) -> list[np.ndarray]:
        hidden = self.initial_hidden()
        for idx in token_indices:
            hidden = self.step_hidden(hidden, int(idx))
        return hidden

    def _head_forward(self, h_top: np.ndarray):
        p = self.params
        acts = [h_top]
        x = h_top
        for j in range(len(self.config.head_dims)):
            x = np.tanh(x @ p[f"head{j}.W"] + p[f"head{j}.b"])
            acts.append(x)
        logits = x @ p["out.W"] + p["out.b"]
        return logits, acts

    def logits_from_hidden(self, hidden: list[np.ndarray]) -> np.ndarray:
        return self._head_forward(hidden[-1])[0]

    def logits(self, token_indices) -> np.ndarray:
        return self.logits_from_hidden(self.encode(token_indices))

    # -- log-probability of an action sequence ----------------------------

    def sequence_log_prob(self, inputs, actions, masks) -> float:
        """Sum over steps of log pi(action_t | prefix up to t) under the masks."""
        logp = 0.0
        hidden = self.initial_hidden()
        for idx, action, mask in zip(inputs, actions, masks):
            hidden = self.step_hidden(hidden, int(idx))
            logits = self.logits_from_hidden(hidden)
            logp += _masked_log_prob(logits, mask, int(action))
        return float(logp)

    def sequence_grad(self, inputs, actions, masks) -> tuple[float, np.ndarray]:
        """Backprop-through-time gradient of :meth:`sequence_log_prob`."""
        cfg = self.config
        t_len = len(inputs)
        hidden = self.initial_hidden()
        gru_caches: list[list] = [[] for _ in range(cfg.gru_layers)]
        head_caches = []
        logp = 0.0
        for s in range(t_len):
            x = self.params["embed"][int(inputs[s])]
            for layer in range(cfg.gru_layers):
                h_new, cache = self._gru_step(layer, x, hidden[layer])
                gru_caches[layer].append(cache)
                hidden[layer] = h_new
                x = h_new
            logits, acts = self._head_forward(hidden[-1])
            mask = masks[s]
            p = _masked_softmax(logits, mask)
            logp += float(np.log(p[int(actions[s])]))
            dlogits = -p
            dlogits[int(actions[s])] += 1.0
            head_caches.append((acts, dlogits))

        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dh_time = [np.zeros(cfg.hidden_dim) for _ in range(cfg.gru_layers)]
        for s in range(t_len - 1, -1, -1):
            dh = dh_time[-1] + self._head_backward(head_caches[s], grads)
            for layer in range(cfg.gru_layers - 1, -1, -1):
                dx, dh_prev = self._gru_step_backward(layer, gru_caches[layer][s], dh, grads)
                dh_time[layer] = dh_prev
                if layer > 0:
                    dh = dh_time[layer - 1] + dx
                else:
                    grads["embed"][int(inputs[s])] += dx
        return float(logp), self.flatten_grads(grads)

    def _head_backward(self, cache, grads) -> np.ndarray:
        acts, dlogits = cache
        p = self.params
        grads["out.W"] += np.outer(acts[-1], dlogits)
        grads["out.b"] += dlogits
        dx = dlogits @ p["out.W"].T
        for j in range(len(self.config.head_dims) - 1, -1, -1):
            da = dx * (1.0 - acts[j + 1] ** 2)
            grads[f"head{j}.W"] += np.outer(acts[j], da)
            grads[f"head{j}.b"] += da
            dx = da @ p[f"head{j}.W"].T
        return dx

    def _gru_step_backward(self, layer: int, cache, dh, grads):
        x, h, z, r, u, n = cache
        p = self.params
        dz = dh * (h - n) * z * (1.0 - z)
        dn = dh * (1.0 - z) * (1.0 - n * n)
        dr = dn * u * r * (1.0 - r)
        du = dn * r
        grads[f"gru{layer}.Wz"] += np.outer(x, dz)
        grads[f"gru{layer}.Uz"] += np.outer(h, dz)
        grads[f"gru{layer}.bz"] += dz
        grads[f"gru{layer}.Wr"] += np.outer(x, dr)
        grads[f"gru{layer}.Ur"] += np.outer(h, dr)
        grads[f"gru{layer}.br"] += dr
        grads[f"gru{layer}.Wn"] += np.outer(x, dn)
        grads[f"gru{layer}.Un"] += np.outer(h, du)
        grads[f"gru{layer}.bn"] += dn
        dx = dz @ p[f"gru{layer}.Wz"].T + dr @ p[f"gru{layer}.Wr"].T + dn @ p[f"gru{layer}.Wn"].T
        dh_prev = dh * z + dz @ p[f"gru{layer}.Uz"].T + dr @ p[f"gru{layer}.Ur"].T + du @ p[f"gru{layer}.Un"].T
        return dx, dh_prev


def _masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Probabilities over legal entries; exact zeros elsewhere."""
    out = np.zeros_like(logits)
    legal = logits[mask]
    shifted = np.exp(legal - legal.max())
    out[mask] = shifted / shifted.sum()
    return out


def _masked_log_prob(logits: np.ndarray, mask: np.ndarray, action: int) -> float:
    legal = logits[mask]
    m = legal.max()
    lse = m + np.log(np.exp(legal - m).sum())
    return float(logits[action] - lse)


__all__ = ["NetworkConfig", "GruPolicyNetwork"]
