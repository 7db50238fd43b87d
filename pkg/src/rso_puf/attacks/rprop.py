"""Resilient-propagation step-size adaptation, shared by the LR and MLP attacks.

Sign-based variant without weight backtracking: a per-parameter step grows
by eta_plus while the gradient sign persists, shrinks by eta_minus on a sign
flip (and that gradient entry is dropped for the update), and the parameter
moves by -step * sign(gradient).
"""
import numpy as np

ETA_PLUS = 1.2
ETA_MINUS = 0.5
STEP_INIT = 0.1
STEP_MIN = 1e-6
STEP_MAX = 50.0


class Rprop:
    def __init__(self, shapes, step_init=STEP_INIT, step_min=STEP_MIN,
                 step_max=STEP_MAX, eta_plus=ETA_PLUS, eta_minus=ETA_MINUS):
        self.steps = [np.full(s, step_init) for s in shapes]
        self.prev = [np.zeros(s) for s in shapes]
        self.step_min = step_min
        self.step_max = step_max
        self.eta_plus = eta_plus
        self.eta_minus = eta_minus

    def update(self, params, grads) -> None:
        """Apply one step in place; ``params`` and ``grads`` align with shapes."""
        for p, g, s, gp in zip(params, grads, self.steps, self.prev):
            prod = g * gp
            s[prod > 0] = np.minimum(s[prod > 0] * self.eta_plus, self.step_max)
            s[prod < 0] = np.maximum(s[prod < 0] * self.eta_minus, self.step_min)
            g_eff = np.where(prod < 0, 0.0, g)
            p -= s * np.sign(g_eff)
            gp[...] = g_eff
