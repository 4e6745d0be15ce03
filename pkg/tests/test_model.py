import numpy as np
import pytest
import torch

from lsdm.denoiser import Denoiser, DenoiserConfig
from lsdm.diffusion import make_schedule
from lsdm.model import ConditionalDenoiser, PredictionModel
from lsdm.normalize import Normalizer

TINY = DenoiserConfig(channel_width=8, num_heads=2, blocks=1, condition_dim=16,
                      timestep_dim=8, services=10, window_len=1,
                      history_len=4, history_dim=8, env_dim=4)


def _identity_normalizer():
    return Normalizer(mean=np.zeros(10), std=np.ones(10),
                      is_constant=np.zeros(10, dtype=bool))


@pytest.fixture()
def tiny_model():
    torch.manual_seed(0)
    return PredictionModel(
        denoiser=Denoiser(TINY), towers=None, normalizer=_identity_normalizer(),
        schedule=make_schedule(T_diff=3), conditional=False, samples=2, trained=True)


class TestConditionalDenoiser:
    def test_split_condition(self):
        torch.manual_seed(0)
        wrapper = ConditionalDenoiser(Denoiser(TINY))
        cond = torch.randn(2, TINY.history_len * TINY.services + TINY.env_dim)
        history, env = wrapper.split_condition(cond)
        assert history.shape == (2, TINY.history_len, TINY.services)
        assert env.shape == (2, TINY.env_dim)
        torch.testing.assert_close(history.flatten(1),
                                   cond[:, :TINY.history_len * TINY.services])
        with pytest.raises(ValueError, match="condition width"):
            wrapper.split_condition(torch.randn(2, 7))

    def test_unconditional_wrapper_ignores_env_slot(self):
        torch.manual_seed(1)
        den = Denoiser(TINY)
        with torch.no_grad():
            for p in den.parameters():
                p.add_(0.05 * torch.randn_like(p))
        x = torch.randn(1, 1, 10, 1)
        t = torch.tensor([1])
        hist = torch.randn(1, TINY.history_len * TINY.services)
        with torch.no_grad():
            a = ConditionalDenoiser(den, conditional=False)(
                x, t, torch.cat([hist, torch.full((1, TINY.env_dim), 9.0)], dim=1))
            b = ConditionalDenoiser(den, conditional=False)(
                x, t, torch.cat([hist, torch.zeros(1, TINY.env_dim)], dim=1))
        torch.testing.assert_close(a, b)


class TestPredictionModel:
    def test_env_vector_zero_when_unconditional(self, tiny_model):
        env = tiny_model.env_vector(np.zeros(17), np.zeros((8, 8, 3)))
        np.testing.assert_array_equal(env, np.zeros(TINY.env_dim))

    def test_pack_condition_layout(self, tiny_model):
        history = np.arange(40, dtype=np.float64).reshape(4, 10)
        env = np.full(4, -1.0)
        cond = tiny_model.pack_condition(history, env)
        assert cond.shape == (1, 44)
        np.testing.assert_allclose(cond[0, :40].numpy(), np.arange(40), rtol=1e-6)
        np.testing.assert_allclose(cond[0, 40:].numpy(), -1.0)

    def test_predict_next_shape_and_determinism(self, tiny_model):
        history = np.zeros((4, 10))
        a = tiny_model.predict_next(history, np.zeros(17), np.zeros((8, 8, 3)), seed=5)
        b = tiny_model.predict_next(history, np.zeros(17), np.zeros((8, 8, 3)), seed=5)
        c = tiny_model.predict_next(history, np.zeros(17), np.zeros((8, 8, 3)), seed=6)
        assert a.shape == (10,)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_predict_next_requires_training(self, tiny_model):
        tiny_model.trained = False
        with pytest.raises(RuntimeError, match="not been trained"):
            tiny_model.predict_next(np.zeros((4, 10)), np.zeros(17),
                                    np.zeros((8, 8, 3)), seed=0)

    def test_predict_next_checks_history_shape(self, tiny_model):
        with pytest.raises(ValueError, match="history shape"):
            tiny_model.predict_next(np.zeros((3, 10)), np.zeros(17),
                                    np.zeros((8, 8, 3)), seed=0)

    def test_history_len_property(self, tiny_model):
        assert tiny_model.history_len == 4
        assert tiny_model.config is TINY
