"""Adam with coupled L2 weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def init_for(self, params) -> None:
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0


def adam_step(params, grads, st: AdamState) -> None:
    """One in-place bias-corrected Adam update; weight decay is added to the gradient."""
    params = list(params)
    grads = list(grads)
    if len(grads) != len(params):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    if not st.m:
        st.init_for(params)
    st.t += 1
    c1 = 1.0 - st.beta1 ** st.t
    c2 = 1.0 - st.beta2 ** st.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            raise ValueError(f"missing gradient for parameter {i} {p.name or ''}".rstrip())
        if st.weight_decay:
            g = g + st.weight_decay * p.data
        m, v = st.m[i], st.v[i]
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * (g * g)
        update = st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)
        p.data -= update.astype(p.dtype, copy=False)


class Adam:
    """Optimizer over the trainable parameters of a module."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = [p for p in params if p.requires_grad]
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)
        self.state.init_for(self.params)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = float(value)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def state_arrays(self) -> dict:
        out = {"t": np.asarray(self.state.t)}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"m.{i}"] = m.copy()
            out[f"v.{i}"] = v.copy()
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        self.state.t = int(arrays["t"])
        for i in range(len(self.params)):
            self.state.m[i][...] = arrays[f"m.{i}"]
            self.state.v[i][...] = arrays[f"v.{i}"]
