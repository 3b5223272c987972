import numpy as np
import pytest

from frnlayer import (BnState, ConfigError, Fixed, FrnLayerParams, Learned,
                      NormKind, NormSpec, ShapeError, UninitializedStateError,
                      bn_backward, bn_forward_eval, bn_forward_train,
                      effective_eps, frn_backward, frn_forward, frn_scalar,
                      gfrn_forward, gn_forward, identity_forward, in_forward,
                      lfrn_forward, ln_forward, norm_backward, norm_forward)

from conftest import identity_params, make_spec

PER_SAMPLE_KINDS = [NormKind.FRN, NormKind.IN, NormKind.GN, NormKind.LN,
                    NormKind.GFRN, NormKind.LFRN]


def frn0(channels=1):
    return make_spec(NormKind.FRN, eps_policy=Fixed(0.0))


class TestFrnForward:
    def test_constant_positive_slice_normalizes_to_one(self):
        for c in (0.5, 1.0, 7.25):
            x = np.full((1, 2, 2, 1), c)
            y, _ = frn_forward(x, identity_params(1), frn0())
            np.testing.assert_allclose(y, 1.0, rtol=1e-15)

    def test_hand_evaluated_slice(self):
        # mean square of [3, 4] is 12.5; dividing by its root gives these
        x = np.array([3.0, 4.0]).reshape(1, 1, 2, 1)
        y, ctx = frn_forward(x, identity_params(1), frn0())
        np.testing.assert_allclose(y.ravel(),
                                   [0.8485281374238570, 1.1313708498984762],
                                   rtol=1e-15)
        assert ctx.denom.ravel()[0] == pytest.approx(np.sqrt(12.5), rel=1e-15)

    def test_zero_input_with_eps_yields_beta(self):
        params = FrnLayerParams(gamma=np.ones(3), beta=np.array([1.0, -2.0, 0.5]),
                                tau=np.zeros(3))
        x = np.zeros((2, 4, 4, 3))
        y, _ = frn_forward(x, params, make_spec(NormKind.FRN, Fixed(1e-6)))
        np.testing.assert_array_equal(y, np.broadcast_to(params.beta, y.shape))

    def test_zero_eps_zero_slice_raises(self):
        x = np.zeros((1, 2, 2, 1))
        with pytest.raises(ZeroDivisionError):
            frn_forward(x, identity_params(1), frn0())

    def test_non_finite_input_raises(self):
        x = np.full((1, 2, 2, 1), np.nan)
        with pytest.raises(FloatingPointError):
            frn_forward(x, identity_params(1), make_spec(NormKind.FRN))

    def test_affine_applied_per_channel(self, rng):
        x = rng.normal(size=(2, 3, 3, 4))
        params = FrnLayerParams(gamma=np.array([1.0, 2.0, 3.0, 4.0]),
                                beta=np.array([0.0, 1.0, -1.0, 0.5]),
                                tau=np.zeros(4))
        y, ctx = frn_forward(x, params, make_spec(NormKind.FRN))
        np.testing.assert_allclose(y, params.gamma * ctx.xhat + params.beta,
                                   rtol=1e-15)


class TestFrnBackward:
    def test_hand_evaluated_projection(self):
        # slice [1, 1] with eps 0: xhat = [1, 1]; upstream [1, 0] projects to
        # +-0.5 because the component along xhat is removed
        x = np.array([1.0, 1.0]).reshape(1, 1, 2, 1)
        _, ctx = frn_forward(x, identity_params(1), frn0())
        g = np.array([1.0, 0.0]).reshape(1, 1, 2, 1)
        grads = frn_backward(g, ctx, identity_params(1))
        np.testing.assert_allclose(grads.dx.ravel(), [0.5, -0.5], atol=1e-15)

    def test_zero_upstream_zero_grads(self, rng):
        x = rng.normal(size=(2, 3, 3, 4))
        params = identity_params(4)
        _, ctx = frn_forward(x, params, make_spec(NormKind.FRN))
        grads = frn_backward(np.zeros_like(x), ctx, params)
        assert np.all(grads.dx == 0.0)
        assert np.all(grads.dgamma == 0.0)
        assert np.all(grads.dbeta == 0.0)

    def test_gamma_beta_are_channel_sums(self, rng):
        x = rng.normal(size=(2, 3, 3, 4))
        params = identity_params(4)
        _, ctx = frn_forward(x, params, make_spec(NormKind.FRN))
        g = rng.normal(size=x.shape)
        grads = frn_backward(g, ctx, params)
        np.testing.assert_allclose(grads.dbeta, g.sum(axis=(0, 1, 2)), rtol=1e-12)
        np.testing.assert_allclose(grads.dgamma,
                                   (g * ctx.xhat).sum(axis=(0, 1, 2)), rtol=1e-12)

    def test_upstream_shape_mismatch(self, rng):
        x = rng.normal(size=(2, 3, 3, 4))
        params = identity_params(4)
        _, ctx = frn_forward(x, params, make_spec(NormKind.FRN))
        with pytest.raises(ShapeError):
            frn_backward(rng.normal(size=(2, 3, 3, 5)), ctx, params)


class TestStructuralInvariants:
    """Exact-arithmetic identities of the uncentered normalizer, at float
    tolerance, with eps = 0."""

    def test_normalized_norm_equals_cell_size(self, rng):
        x = rng.normal(size=(4, 5, 5, 3))
        n = 25
        _, ctx = frn_forward(x, identity_params(3), frn0())
        norms = np.square(ctx.xhat).sum(axis=(1, 2))
        np.testing.assert_allclose(norms, n, atol=1e-9 * n)

    def test_input_gradient_orthogonal_to_input(self, rng):
        x = rng.normal(size=(4, 5, 5, 3))
        params = identity_params(3)
        _, ctx = frn_forward(x, params, frn0())
        g = rng.normal(size=x.shape)  # gamma=1 so this is the xhat gradient
        grads = frn_backward(g, ctx, params)
        for b in range(4):
            for c in range(3):
                xs = x[b, :, :, c].ravel()
                ds = grads.dx[b, :, :, c].ravel()
                gs = g[b, :, :, c].ravel()
                bound = 1e-10 * np.linalg.norm(xs) * np.linalg.norm(gs)
                assert abs(float(xs @ ds)) <= bound

    def test_positive_scale_invariance(self, rng):
        x = rng.normal(size=(2, 4, 4, 3))
        params = identity_params(3)
        y1, _ = frn_forward(x, params, frn0())
        for alpha in (2.0, 3.7, 1e-3):
            y2, _ = frn_forward(alpha * x, params, frn0())
            np.testing.assert_allclose(y2, y1, rtol=1e-12)

    def test_mean_not_removed(self):
        # a fixed asymmetric slice keeps its bias after normalization
        x = np.array([1.0, 2.0, 3.0, 7.0]).reshape(1, 2, 2, 1)
        _, ctx = frn_forward(x, identity_params(1), frn0())
        assert abs(float(ctx.xhat.mean())) > 0.5


class TestBatchIndependence:
    @pytest.mark.parametrize("kind", PER_SAMPLE_KINDS)
    def test_per_sample_schemes_bit_identical(self, kind, rng):
        x8 = rng.normal(size=(8, 3, 3, 4))
        params = identity_params(4)
        spec = make_spec(kind)
        y8, _ = norm_forward(x8, params, spec)
        y1, _ = norm_forward(x8[:1], params, spec)
        assert np.array_equal(y1, y8[:1])

    def test_bn_train_mode_depends_on_batch(self, rng):
        x8 = rng.normal(size=(8, 3, 3, 4))
        params = identity_params(4)
        spec = make_spec(NormKind.BN)
        y8, _ = bn_forward_train(x8, params, spec)
        y1, _ = bn_forward_train(x8[:1], params, spec)
        assert not np.allclose(y1, y8[:1])


class TestEps:
    def test_effective_eps_fixed(self):
        assert effective_eps(Fixed(1e-6)) == 1e-6
        assert effective_eps(Fixed(0.0)) == 0.0

    def test_effective_eps_learned_abs_parameterization(self):
        assert effective_eps(Learned(1e-4)) == pytest.approx(1.01e-4, rel=1e-15)
        assert effective_eps(Learned(-1e-4)) == pytest.approx(1.01e-4, rel=1e-15)

    def test_learned_policy_reads_live_param(self, rng):
        x = rng.normal(size=(1, 2, 2, 1))
        spec = make_spec(NormKind.FRN, eps_policy=Learned(1e-4))
        y_a, _ = frn_forward(x, identity_params(1, eps_l=1e-4), spec)
        y_b, _ = frn_forward(x, identity_params(1, eps_l=0.5), spec)
        assert not np.allclose(y_a, y_b)
        # sign does not matter under the absolute-value parameterization
        y_c, _ = frn_forward(x, identity_params(1, eps_l=-0.5), spec)
        np.testing.assert_array_equal(y_b, y_c)

    def test_learned_policy_requires_eps_l(self, rng):
        x = rng.normal(size=(1, 2, 2, 1))
        spec = make_spec(NormKind.FRN, eps_policy=Learned(1e-4))
        with pytest.raises(ConfigError):
            frn_forward(x, identity_params(1, eps_l=None), spec)

    def test_negative_fixed_eps_rejected(self):
        with pytest.raises(ConfigError):
            Fixed(-1e-6)


class TestFrnScalar:
    def test_sign_limit(self):
        assert frn_scalar(1.0, 0.0) == 1.0
        assert frn_scalar(-2.5, 0.0) == -1.0

    def test_unit_point(self):
        assert frn_scalar(1.0, 1.0) == pytest.approx(1 / np.sqrt(2), rel=1e-15)

    def test_odd_symmetry(self, rng):
        for _ in range(100):
            x = float(rng.normal() * 3)
            eps = float(rng.uniform(0, 1))
            assert frn_scalar(-x, eps) == -frn_scalar(x, eps)

    def test_zero_over_zero_raises(self):
        with pytest.raises(ZeroDivisionError):
            frn_scalar(0.0, 0.0)


class TestInstanceNorm:
    def test_constant_slice_gives_beta(self):
        params = FrnLayerParams(gamma=np.ones(2), beta=np.array([0.7, -0.3]),
                                tau=np.zeros(2))
        x = np.full((2, 3, 3, 2), 5.0)
        y, _ = in_forward(x, params, make_spec(NormKind.IN, Fixed(1e-6)))
        np.testing.assert_array_equal(y, np.broadcast_to(params.beta, y.shape))

    def test_hand_evaluated_slice(self):
        x = np.array([3.0, 4.0]).reshape(1, 1, 2, 1)
        y, ctx = in_forward(x, identity_params(1),
                            make_spec(NormKind.IN, Fixed(0.0)))
        assert ctx.mu.ravel()[0] == 3.5
        assert ctx.denom.ravel()[0] ** 2 == pytest.approx(0.25, rel=1e-15)
        np.testing.assert_allclose(y.ravel(), [-1.0, 1.0], rtol=1e-12)


class TestBatchNorm:
    def test_hand_evaluated_channel(self):
        # two samples whose single channel is constant 1 and 3: mean 2, var 1
        x = np.stack([np.full((2, 2, 1), 1.0), np.full((2, 2, 1), 3.0)])
        y, ctx = bn_forward_train(x, identity_params(1),
                                  make_spec(NormKind.BN, Fixed(0.0)))
        assert ctx.mu.ravel()[0] == 2.0
        assert ctx.denom.ravel()[0] == 1.0
        np.testing.assert_allclose(y[0], -1.0, rtol=1e-15)
        np.testing.assert_allclose(y[1], 1.0, rtol=1e-15)

    def test_single_element_statistics(self):
        x = np.array([[[[2.0]]]])
        y, _ = bn_forward_train(x, identity_params(1),
                                make_spec(NormKind.BN, Fixed(1e-6)))
        assert y.ravel()[0] == 0.0

    def test_moving_statistics_update(self, rng):
        x = rng.normal(size=(4, 3, 3, 2)) + 5.0
        state = BnState.for_channels(2, momentum=0.9)
        spec = make_spec(NormKind.BN)
        bn_forward_train(x, identity_params(2), spec, state)
        batch_mean = x.mean(axis=(0, 1, 2))
        batch_var = x.var(axis=(0, 1, 2))
        np.testing.assert_allclose(state.moving_mean, 0.1 * batch_mean, rtol=1e-12)
        np.testing.assert_allclose(state.moving_var,
                                   0.9 * 1.0 + 0.1 * batch_var, rtol=1e-12)
        assert state.num_updates == 1

    def test_eval_before_update_raises(self, rng):
        state = BnState.for_channels(2)
        with pytest.raises(UninitializedStateError):
            bn_forward_eval(rng.normal(size=(1, 2, 2, 2)), identity_params(2),
                            make_spec(NormKind.BN), state)

    def test_eval_uses_moving_statistics(self, rng):
        spec = make_spec(NormKind.BN, Fixed(1e-6))
        state = BnState.for_channels(2)
        params = identity_params(2)
        for _ in range(200):
            bn_forward_train(rng.normal(size=(8, 2, 2, 2)), params, spec, state)
        x = rng.normal(size=(4, 2, 2, 2))
        y = bn_forward_eval(x, params, spec, state)
        expected = (x - state.moving_mean) / np.sqrt(state.moving_var + 1e-6)
        np.testing.assert_allclose(y, expected, rtol=1e-12)


class TestDefinitionalCoincidences:
    def test_gn_full_group_equals_ln(self, rng):
        x = rng.normal(size=(2, 3, 3, 6))
        params = identity_params(6)
        y_gn, _ = gn_forward(x, params, make_spec(NormKind.GN, group_size=6))
        y_ln, _ = ln_forward(x, params, make_spec(NormKind.LN))
        np.testing.assert_allclose(y_gn, y_ln, atol=1e-12)

    def test_gn_group_one_equals_in(self, rng):
        x = rng.normal(size=(2, 3, 3, 6))
        params = identity_params(6)
        y_gn, _ = gn_forward(x, params, make_spec(NormKind.GN, group_size=1))
        y_in, _ = in_forward(x, params, make_spec(NormKind.IN))
        np.testing.assert_allclose(y_gn, y_in, atol=1e-12)

    def test_gfrn_group_one_equals_frn(self, rng):
        x = rng.normal(size=(2, 3, 3, 6))
        params = identity_params(6)
        y_g, _ = gfrn_forward(x, params, make_spec(NormKind.GFRN, group_size=1))
        y_f, _ = frn_forward(x, params, make_spec(NormKind.FRN))
        np.testing.assert_allclose(y_g, y_f, atol=1e-12)

    def test_gfrn_constant_positive_input(self):
        x = np.full((1, 2, 2, 4), 3.0)
        y, _ = gfrn_forward(x, identity_params(4),
                            make_spec(NormKind.GFRN, Fixed(0.0), group_size=2))
        np.testing.assert_allclose(y, 1.0, rtol=1e-15)

    def test_lfrn_uses_whole_sample_cell(self, rng):
        x = rng.normal(size=(2, 3, 3, 4))
        y, ctx = lfrn_forward(x, identity_params(4), make_spec(NormKind.LFRN))
        assert ctx.cell_size == 3 * 3 * 4
        ms = np.square(x).mean(axis=(1, 2, 3), keepdims=True)
        np.testing.assert_allclose(ctx.xhat, x / np.sqrt(ms + 1e-6), rtol=1e-12)


class TestIdentityScheme:
    def test_affine_only(self, rng):
        x = rng.normal(size=(2, 3, 3, 2))
        params = FrnLayerParams(gamma=np.array([2.0, 0.5]),
                                beta=np.array([1.0, -1.0]), tau=np.zeros(2))
        y, ctx = identity_forward(x, params, make_spec(NormKind.NONE))
        np.testing.assert_allclose(y, params.gamma * x + params.beta, rtol=1e-15)
        grads = norm_backward(np.ones_like(x), ctx, params)
        np.testing.assert_allclose(grads.dx,
                                   np.broadcast_to(params.gamma, x.shape),
                                   rtol=1e-15)


class TestSpecValidation:
    def test_group_kind_requires_group_size(self):
        with pytest.raises(ConfigError):
            NormSpec(kind=NormKind.GN)

    def test_group_size_only_for_group_kinds(self):
        with pytest.raises(ConfigError):
            NormSpec(kind=NormKind.FRN, group_size=4)

    def test_divisibility_checked_at_forward(self, rng):
        x = rng.normal(size=(1, 2, 2, 6))
        with pytest.raises(ConfigError):
            gn_forward(x, identity_params(6),
                       NormSpec(kind=NormKind.GN, group_size=4))

    def test_bn_momentum_range(self):
        with pytest.raises(ConfigError):
            NormSpec(kind=NormKind.BN, bn_momentum=1.0)

    def test_wrong_kind_routed_to_wrong_function(self, rng):
        x = rng.normal(size=(1, 2, 2, 2))
        with pytest.raises(ConfigError):
            frn_forward(x, identity_params(2), make_spec(NormKind.IN))

    def test_backward_context_kind_checked(self, rng):
        x = rng.normal(size=(1, 2, 2, 2))
        params = identity_params(2)
        _, ctx = frn_forward(x, params, make_spec(NormKind.FRN))
        with pytest.raises(ConfigError):
            bn_backward(np.ones_like(x), ctx, params)
