"""Batch-independent normalization layers with analytic gradients.

The core idea: normalize each channel of each sample by the square root of
its uncentered second moment (no mean subtraction), pair it with a
max-threshold activation whose threshold is learned per channel, and make
every backward pass explicit so it can be checked against a
finite-difference oracle. Centered baselines (instance, batch, group and
layer normalization) and group/layer-extent uncentered variants share the
same interface for comparison experiments.
"""

from .activation import (ActContext, ActGrads, ActKind, ActSpec, act_backward,
                         act_forward, branch_alternative)
from .gradcheck import (GradReport, check_layer, compare_grads,
                        finite_diff_grad)
from .norm import (BnState, ConfigError, EpsPolicy, Fixed, FrnLayerParams,
                   Learned, NormContext, NormGrads, NormKind, NormSpec,
                   UninitializedStateError, bn_backward, bn_forward_eval,
                   bn_forward_train, effective_eps, frn_backward, frn_forward,
                   frn_scalar, gfrn_backward, gfrn_forward, gn_backward,
                   gn_forward, identity_backward, identity_forward,
                   in_backward, in_forward, lfrn_backward, lfrn_forward,
                   ln_backward, ln_forward, norm_backward, norm_forward)
from .tensor import (ShapeError, Tensor4, broadcast_channel, full, make_rng,
                     map_elements, random_normal, reduce_mean_spatial, zeros,
                     zip_elements)

__version__ = "0.1.0"

__all__ = [
    "ActContext", "ActGrads", "ActKind", "ActSpec", "act_backward",
    "act_forward", "branch_alternative",
    "GradReport", "check_layer", "compare_grads", "finite_diff_grad",
    "BnState", "ConfigError", "EpsPolicy", "Fixed", "FrnLayerParams",
    "Learned", "NormContext", "NormGrads", "NormKind", "NormSpec",
    "UninitializedStateError", "bn_backward", "bn_forward_eval",
    "bn_forward_train", "effective_eps", "frn_backward", "frn_forward",
    "frn_scalar", "gfrn_backward", "gfrn_forward", "gn_backward",
    "gn_forward", "identity_backward", "identity_forward", "in_backward",
    "in_forward", "lfrn_backward", "lfrn_forward", "ln_backward",
    "ln_forward", "norm_backward", "norm_forward",
    "ShapeError", "Tensor4", "broadcast_channel", "full", "make_rng",
    "map_elements", "random_normal", "reduce_mean_spatial", "zeros",
    "zip_elements",
    "__version__",
]
