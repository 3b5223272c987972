import numpy as np
import pytest

from frnlayer import ActKind, Fixed, FrnLayerParams, Learned, NormKind, NormSpec
from frnlayer.trainer import NormAct


def make_spec(kind: NormKind, eps_policy=Fixed(1e-6), group_size=None) -> NormSpec:
    if kind in (NormKind.GN, NormKind.GFRN):
        group_size = group_size if group_size is not None else 2
    else:
        group_size = None
    return NormSpec(kind=kind, group_size=group_size, eps_policy=eps_policy)


def make_norm_act(kind: NormKind, channels: int, act=ActKind.TLU,
                  eps_policy=Fixed(1e-6), group_size=None) -> NormAct:
    return NormAct(channels, make_spec(kind, eps_policy, group_size), act)


def identity_params(channels: int, eps_l=None) -> FrnLayerParams:
    """gamma=1, beta=0, tau=0: normalization output equals xhat."""
    return FrnLayerParams(gamma=np.ones(channels), beta=np.zeros(channels),
                          tau=np.zeros(channels), eps_l=eps_l)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
