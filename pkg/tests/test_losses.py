import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from tfvaegan import losses
from tfvaegan.errors import DomainError, GradientUnavailableError, NumericError, ShapeError

from gradcheck import gradient_cases, relative_errors

D = torch.float64


def t(*rows):
    return torch.tensor(rows, dtype=D)


class TestKL:
    def test_prior(self):
        assert losses.kl_term(t([0.0]), t([0.0])).item() == 0.0

    def test_unit_mean(self):
        assert losses.kl_term(t([1.0]), t([0.0])).item() == pytest.approx(0.5)

    def test_wide_posterior(self):
        expected = 0.5 * (4 - math.log(4) - 1)
        assert losses.kl_term(t([0.0]), t([math.log(4)])).item() == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.8069, abs=1e-4)

    def test_batch_mean(self):
        assert losses.kl_term(t([1.0], [0.0]), t([0.0], [0.0])).item() == pytest.approx(0.25)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            losses.kl_term(t([math.nan]), t([0.0]))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=6))
    def test_non_negative(self, pairs):
        mu = torch.tensor([[p[0] for p in pairs]], dtype=D)
        lv = torch.tensor([[p[1] for p in pairs]], dtype=D)
        assert losses.kl_term(mu, lv).item() >= -1e-12


class TestReconstruction:
    def test_fair_coin(self):
        assert losses.reconstruction_term(t([0.5]), t([0.5])).item() == pytest.approx(math.log(2))
        assert losses.reconstruction_term(t([0.5]), t([1.0])).item() == pytest.approx(math.log(2))

    def test_two_dims_sum(self):
        v = losses.reconstruction_term(t([0.9, 0.2]), t([1.0, 0.0])).item()
        assert v == pytest.approx(-math.log(0.9) - math.log(0.8), rel=1e-12)
        assert v == pytest.approx(0.3285, abs=1e-4)

    def test_target_out_of_range(self):
        with pytest.raises(DomainError):
            losses.reconstruction_term(t([0.5]), t([1.5]))


class TestGradientPenalty:
    def test_unit_linear_critic(self):
        w = torch.tensor([0.6, 0.8], dtype=D)
        gp = losses.gradient_penalty(lambda v: v @ w, torch.rand(5, 2, dtype=D), torch.rand(5, 2, dtype=D))
        assert gp.item() == pytest.approx(0.0, abs=1e-12)

    def test_zero_critic(self):
        gp = losses.gradient_penalty(lambda v: v.sum(1) * 0, torch.rand(3, 2), torch.rand(3, 2))
        assert gp.item() == pytest.approx(1.0)

    def test_constant_critic_has_no_input_path(self):
        gp = losses.gradient_penalty(lambda v: torch.ones(v.shape[0]), torch.rand(3, 2), torch.rand(3, 2))
        assert gp.item() == 1.0

    def test_unusable_critic(self):
        with pytest.raises(GradientUnavailableError):
            losses.gradient_penalty(lambda v: 3.0, torch.rand(3, 2), torch.rand(3, 2))

    def test_degenerate_segment(self):
        x = torch.rand(4, 3)
        assert torch.equal(losses.interpolate(x, x, torch.rand(4)), x)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            losses.gradient_penalty(lambda v: v.sum(1), torch.rand(3, 2), torch.rand(3, 3))

    def test_non_negative(self):
        crit = torch.nn.Linear(3, 1, dtype=D)
        gp = losses.gradient_penalty(lambda v: crit(v).squeeze(1), torch.rand(6, 3, dtype=D), torch.rand(6, 3, dtype=D))
        assert gp.item() >= 0


class TestCriticLoss:
    def test_identical_inputs_unit_critic(self):
        w = torch.tensor([0.6, 0.8], dtype=D)
        x = torch.rand(4, 2, dtype=D)
        assert losses.critic_loss(lambda v: v @ w, x, x).item() == pytest.approx(0.0, abs=1e-12)

    def test_constant_critic(self):
        v = losses.critic_loss(lambda v: torch.full((v.shape[0],), 2.0), torch.rand(3, 2), torch.rand(3, 2), lambda_gp=7)
        assert v.item() == pytest.approx(7.0)

    def test_hand_composed(self):
        crit = torch.nn.Sequential(torch.nn.Linear(3, 4, dtype=D), torch.nn.Tanh(), torch.nn.Linear(4, 1, dtype=D))
        f = lambda v: crit(v).squeeze(1)
        x, xh, eps = torch.rand(5, 3, dtype=D), torch.rand(5, 3, dtype=D), torch.rand(5, dtype=D)
        xt = (eps[:, None] * x + (1 - eps[:, None]) * xh).requires_grad_()
        (g,) = torch.autograd.grad(f(xt).sum(), xt)
        expected = f(xh).mean() - f(x).mean() + 10 * ((g.norm(dim=1) - 1) ** 2).mean()
        assert losses.critic_loss(f, x, xh, lambda_gp=10, eps=eps).item() == pytest.approx(expected.item(), rel=1e-12)


class TestGeneratorAdv:
    def test_constant(self):
        assert losses.generator_adv_loss(lambda v: torch.full((v.shape[0],), 5.0), torch.rand(2, 2)).item() == -5

    def test_linearity(self, tiny_model):
        xh, a = torch.rand(4, 6), torch.rand(4, 4)
        one = losses.generator_adv_loss(tiny_model.discriminate, xh, a)
        two = losses.generator_adv_loss(lambda v, c: 2 * tiny_model.discriminate(v, c), xh, a)
        assert two.item() == pytest.approx(2 * one.item(), rel=1e-6)
        assert one.item() == pytest.approx(-tiny_model.discriminate(xh, a).mean().item(), rel=1e-6)


class TestCycle:
    @staticmethod
    def _dec(lookup):
        return lambda feats: (None, lookup[id(feats)])

    def test_hand_value(self):
        x, xh = torch.zeros(1, 2), torch.ones(1, 2)
        dec = self._dec({id(x): t([0.5]), id(xh): t([0.1])})
        assert losses.cycle_loss(dec, x, xh, t([0.2])).item() == pytest.approx(0.4)

    def test_exact_is_zero(self):
        x, xh, a = torch.zeros(2, 2), torch.ones(2, 2), torch.rand(2, 3)
        assert float(losses.cycle_loss(self._dec({id(x): a, id(xh): a}), x, xh, a)) == 0.0

    def test_swap_symmetry(self, tiny_model):
        x, xh, a = torch.rand(3, 6), torch.rand(3, 6), torch.rand(3, 4)
        assert losses.cycle_loss(tiny_model.decode, x, xh, a).item() == pytest.approx(
            losses.cycle_loss(tiny_model.decode, xh, x, a).item(), rel=1e-6)


class TestTotals:
    def test_example(self):
        v = losses.total_with_cycle(losses.total_vae_gan(1.0, 2.0, 3.0, 10.0), 4.0, 0.01)
        assert v == pytest.approx(33.04)

    def test_beta_zero(self):
        assert losses.total_with_cycle(12.5, 99.0, 0.0) == 12.5


@pytest.mark.parametrize("case", gradient_cases(), ids=lambda c: c[0])
def test_finite_difference(case):
    name, fn, params = case
    errs = relative_errors(fn, params, step=1e-4)
    assert max(errs) < 1e-3, (name, errs)
