"""First-order optimizer: bias-corrected adaptive moments (Adam rule) with
one group per learnable subsystem and a freeze switch for ablations.

Groups hold dicts of named arrays that are updated in place.  Each entry has
its own step counter so sparsely-touched parameters (per-frame flows) get
correct bias correction; dense groups always pass every key, which makes the
counters behave like a single group-wide iteration count.
"""

import numpy as np


class ParamGroup:
    def __init__(self, name, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("moment decays must lie in [0, 1)")
        self.name = name
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = {k: 0 for k in params}
        self.frozen = False

    def freeze(self):
        """Disable updates; parameters and moments stay untouched until
        unfrozen, after which updates resume with the preserved moments."""
        self.frozen = True

    def unfreeze(self):
        self.frozen = False

    def step(self, grads):
        """Apply one update for every key present in `grads`."""
        if self.frozen:
            return
        for key in sorted(grads):
            g = grads[key]
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(
                    f"non-finite gradient for '{key}' in group '{self.name}'")
            p = self.params[key]
            if g.shape != p.shape:
                raise ValueError(
                    f"gradient shape {g.shape} != parameter shape {p.shape} "
                    f"for '{key}' in group '{self.name}'")
            self.t[key] += 1
            t = self.t[key]
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_tensors(self, prefix):
        """Flatten parameters + moments + counters for checkpointing."""
        out = {}
        for k in self.params:
            out[f"{prefix}.param.{k}"] = self.params[k]
            out[f"{prefix}.m.{k}"] = self.m[k]
            out[f"{prefix}.v.{k}"] = self.v[k]
            out[f"{prefix}.t.{k}"] = np.array([self.t[k]], dtype=np.int64)
        return out

    def load_state_tensors(self, prefix, tensors):
        for k in self.params:
            self.params[k][...] = tensors[f"{prefix}.param.{k}"]
            self.m[k][...] = tensors[f"{prefix}.m.{k}"]
            self.v[k][...] = tensors[f"{prefix}.v.{k}"]
            self.t[k] = int(tensors[f"{prefix}.t.{k}"][0])
