"""Maximal output p-norms, block Schatten-norm inequalities and extreme qubit maps."""

__version__ = "0.1.0"

from .matcore import NormOrder, as_order, schatten_norm  # noqa: E402
from .channels import AffineQubitMap, QuantumMap, nu_p_qubit  # noqa: E402
from .pnorm import OptimizerConfig, nu_p_estimate  # noqa: E402

__all__ = [
    "__version__",
    "NormOrder",
    "as_order",
    "schatten_norm",
    "AffineQubitMap",
    "QuantumMap",
    "nu_p_qubit",
    "OptimizerConfig",
    "nu_p_estimate",
]
