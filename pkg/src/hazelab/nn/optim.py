"""Adam-style optimizer acting on a :class:`~hazelab.nn.tensor.ParamStore`."""

from __future__ import annotations

import numpy as np

from .tensor import ParamStore

# Defaults follow the adversarial-restoration training recipe this toolkit
# targets: a low first-moment decay stabilizes the critic.
BETA1 = 0.5
BETA2 = 0.999
EPS = 1e-8


def adam_step(
    params: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPS,
) -> None:
    """Apply one bias-corrected adaptive-moment update in place.

    Only names present in ``grads`` are updated; each such parameter's step
    counter advances by one.  Raises on unknown names or shape mismatches
    before touching anything.
    """
    for name, g in grads.items():
        if name not in params:
            raise ValueError(f"gradient for unknown parameter {name!r}")
        p = params[name]
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {name!r} of shape {p.data.shape}"
            )
    for name in sorted(grads):
        p = params[name]
        g = grads[name]
        m, v, _ = params.moment_state(name)
        t = params.bump_step(name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
