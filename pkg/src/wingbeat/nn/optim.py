from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    learning_rate: float = 0.001
    decay_rho: float = 0.9
    epsilon: float = 1e-7
    accumulators: dict = field(default_factory=dict, repr=False)

    def hyperparameters(self):
        return {"optimizer": "rmsprop", "learning_rate": self.learning_rate, "rho": self.decay_rho, "epsilon": self.epsilon}


def rmsprop_step(params, grads, state):
    """In-place RMSProp update of every array in ``params`` (a dict keyed like ``grads``).

    v <- rho * v + (1 - rho) * g**2 ;  theta <- theta - lr * g / (sqrt(v) + eps)
    """
    rho, lr, eps = state.decay_rho, state.learning_rate, state.epsilon
    for key, g in grads.items():
        p = params[key]
        v = state.accumulators.get(key)
        if v is None:
            v = state.accumulators[key] = np.zeros_like(p)
        # in place: the dense layers hold tens of millions of weights
        tmp = np.multiply(g, g)
        tmp *= 1 - rho
        v *= rho
        v += tmp
        np.sqrt(v, out=tmp)
        tmp += eps
        np.divide(g, tmp, out=tmp)
        tmp *= lr
        p -= tmp
    return params, state
