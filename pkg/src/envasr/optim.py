"""Named parameter sets and the Adam update used by both training stages."""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamHyper:
    """Optimizer hyper-parameters (defaults follow the training recipe)."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


@dataclass
class ParameterSet:
    """Ordered map name -> parameter tensor plus per-parameter Adam state.

    Iteration is always sorted by name so that updates, checkpoints, and
    hashes are deterministic.
    """

    _params: dict = field(default_factory=dict)
    _state: dict = field(default_factory=dict)

    def add(self, name: str, data, dtype=None) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = data if isinstance(data, Tensor) else Tensor(data, dtype=dtype)
        t.requires_grad = True
        self._params[name] = t
        self._state[name] = AdamState(np.zeros_like(t.data), np.zeros_like(t.data))
        return t

    def names(self):
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def state(self, name: str) -> AdamState:
        return self._state[name]

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None


def adam_step(params: ParameterSet, lr: float, beta1: float = 0.9,
              beta2: float = 0.99, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update; gradients are consumed (cleared)."""
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ValueError(f"adam_step: missing gradient for {missing[0]}")
    for name, p in params.items():
        st = params.state(name)
        g = p.grad
        st.t += 1
        st.m = beta1 * st.m + (1.0 - beta1) * g
        st.v = beta2 * st.v + (1.0 - beta2) * (g * g)
        m_hat = st.m / (1.0 - beta1 ** st.t)
        v_hat = st.v / (1.0 - beta2 ** st.t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None


def count_parameters(params: ParameterSet) -> int:
    return sum(p.data.size for _, p in params.items())
