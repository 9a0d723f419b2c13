"""Bias-corrected Adam, one state per parameter tensor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Moment estimates for a single parameter tensor."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7  # Keras default, not the 1e-8 of the original paper

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float = 0.001, beta1: float = 0.9,
                  beta2: float = 0.999, epsilon: float = 1e-7) -> "AdamState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param), t=0,
                   lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def copy(self) -> "AdamState":
        return AdamState(m=self.m.copy(), v=self.v.copy(), t=self.t, lr=self.lr,
                         beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> AdamState:
    """One in-place update: m, v moving averages, bias correction, then
    param -= lr * m_hat / (sqrt(v_hat) + eps)."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


@dataclass
class Adam:
    """Adam across a whole parameter list, lazily creating per-tensor states."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    states: list[AdamState] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        if not self.states:
            self.states = [AdamState.for_param(p, self.lr, self.beta1, self.beta2,
                                               self.epsilon) for p in params]
        if len(self.states) != len(params):
            raise ValueError("optimizer was created for a different parameter list")
        for p, g, s in zip(params, grads, self.states):
            adam_step(p, g, s)

    def copy(self) -> "Adam":
        return Adam(lr=self.lr, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
                    states=[s.copy() for s in self.states])
