from .autodiff import NumericError, ShapeError, Var, grad, value_and_grad
from .mlp import MlpParams, init_mlp, mlp_forward, mlp_vjp, time_embedding
from .optim import AdamState, adam_init, adam_step
from .rng import make_rng

__all__ = [
    "AdamState",
    "MlpParams",
    "NumericError",
    "ShapeError",
    "Var",
    "adam_init",
    "adam_step",
    "grad",
    "init_mlp",
    "make_rng",
    "mlp_forward",
    "mlp_vjp",
    "time_embedding",
    "value_and_grad",
]
