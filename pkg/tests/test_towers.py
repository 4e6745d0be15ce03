import numpy as np
import pytest
import torch

from lsdm.synthetic import generate_contrastive_pairs
from lsdm.text import poi_to_text
from lsdm.towers import (ContrastiveConfig, EmbeddingProvider, TowerParameters,
                         embed_context, encode_image, encode_text, fuse,
                         info_nce, train_contrastive)

TILE_SHAPE = (8, 8, 3)


@pytest.fixture(scope="module")
def towers():
    torch.manual_seed(0)
    params = TowerParameters(TILE_SHAPE, embed_dim=8)
    params.eval()
    return params


class TestInfoNCE:
    def test_single_pair_is_zero(self):
        z = np.array([[1.0, 0.0]])
        assert info_nce(z, z, tau=1.0) == pytest.approx(0.0, abs=1e-12)

    def test_identical_embeddings_give_2ln2(self):
        # two pairs with the same embedding: chance-level 2-way classification
        z = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert info_nce(z, z, tau=1.0) == pytest.approx(2 * np.log(2.0), abs=1e-6)

    def test_orthonormal_pairs_at_unit_temperature(self):
        z = np.eye(2)
        expected = 2 * np.log(1 + np.exp(-1.0))
        assert info_nce(z, z, tau=1.0) == pytest.approx(expected, abs=1e-6)

    def test_validation(self):
        z = np.eye(2)
        with pytest.raises(ValueError, match="tau"):
            info_nce(z, z, tau=0.0)
        with pytest.raises(ValueError, match="batch shapes"):
            info_nce(z, np.eye(3), tau=1.0)


class TestEncoders:
    def test_image_embedding_unit_norm(self, towers, rng):
        tile = rng.normal(size=TILE_SHAPE)
        z = encode_image(tile, towers)
        assert z.shape == (8,)
        assert np.linalg.norm(z) == pytest.approx(1.0, abs=1e-6)

    def test_image_shape_and_finiteness_checks(self, towers):
        with pytest.raises(ValueError, match="tile shape"):
            encode_image(np.zeros((4, 4, 3)), towers)
        with pytest.raises(ValueError, match="non-finite"):
            encode_image(np.full(TILE_SHAPE, np.nan), towers)

    def test_text_embedding_unit_norm(self, towers):
        counts = np.zeros(17, dtype=np.int64)
        counts[2] = 4
        z = encode_text(poi_to_text(counts), towers)
        assert np.linalg.norm(z) == pytest.approx(1.0, abs=1e-6)

    def test_empty_token_text_uses_null_embedding(self, towers):
        from lsdm.text import TextDescription
        z = encode_text(TextDescription(text="", token_ids=()), towers)
        assert np.linalg.norm(z) == pytest.approx(1.0, abs=1e-6)

    def test_initial_temperature_is_clip_value(self, towers):
        assert towers.temperature == pytest.approx(0.07, rel=1e-5)


class TestFusion:
    def test_weighted_sum(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        np.testing.assert_allclose(fuse(a, b, 0.5, 0.5), [0.5, 0.5])
        np.testing.assert_allclose(fuse(a, b, 1.0, 0.0), a)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            fuse(np.zeros(2), np.zeros(2), -0.1, 0.5)

    def test_zero_weights_warn(self):
        with pytest.warns(UserWarning, match="all zeros"):
            out = fuse(np.ones(2), np.ones(2), 0.0, 0.0)
        np.testing.assert_allclose(out, 0.0)

    def test_embed_context_internal_towers(self, towers, rng):
        counts = np.zeros(17, dtype=np.int64)
        counts[7] = 3
        emb = embed_context(counts, rng.normal(size=TILE_SHAPE), towers)
        np.testing.assert_allclose(emb.z_env, 0.5 * emb.z_image + 0.5 * emb.z_text)

    def test_embed_context_provider_override(self, towers):
        zi, zt = np.ones(8) / np.sqrt(8), -np.ones(8) / np.sqrt(8)
        emb = embed_context(np.zeros(17), np.zeros(TILE_SHAPE), towers,
                            provider_vectors=(zi, zt))
        np.testing.assert_allclose(emb.z_image, zi)
        np.testing.assert_allclose(emb.z_env, 0.0, atol=1e-12)
        with pytest.raises(ValueError, match="provider vector shape"):
            embed_context(np.zeros(17), np.zeros(TILE_SHAPE), towers,
                          provider_vectors=(np.ones(4), np.ones(4)))


class TestTraining:
    def test_loss_decreases(self):
        pairs = generate_contrastive_pairs(64, seed=9)
        config = ContrastiveConfig(embed_dim=8, epochs=8, batch_size=16, seed=0)
        params, log = train_contrastive(pairs, config, TILE_SHAPE)
        assert len(log) == 8
        assert log[-1] < log[0]

    def test_validation(self):
        pairs = generate_contrastive_pairs(8, seed=9)
        with pytest.raises(ValueError, match="at least 2"):
            train_contrastive(pairs[:1], ContrastiveConfig(), TILE_SHAPE)
        with pytest.raises(ValueError, match="batch size"):
            train_contrastive(pairs, ContrastiveConfig(batch_size=1), TILE_SHAPE)
        with pytest.raises(ValueError, match="fewer pairs"):
            train_contrastive(pairs, ContrastiveConfig(batch_size=16), TILE_SHAPE)

    def test_deterministic_given_seed(self):
        pairs = generate_contrastive_pairs(32, seed=9)
        config = ContrastiveConfig(embed_dim=8, epochs=2, batch_size=16, seed=5)
        _, log_a = train_contrastive(pairs, config, TILE_SHAPE)
        _, log_b = train_contrastive(pairs, config, TILE_SHAPE)
        assert log_a == log_b


class TestProvider:
    def test_write_load_lookup(self, tmp_path, rng):
        vectors = {
            ("u1", 0): (rng.normal(size=8), rng.normal(size=8)),
            ("u1", 1): (rng.normal(size=8), rng.normal(size=8)),
            ("u2", 0): (rng.normal(size=8), rng.normal(size=8)),
        }
        index = tmp_path / "env.json"
        EmbeddingProvider.write(index, vectors, embed_dim=8)
        provider = EmbeddingProvider.load(index)
        assert provider.embed_dim == 8
        for key, (zi, zt) in vectors.items():
            got_i, got_t = provider.lookup(*key)
            np.testing.assert_allclose(got_i, zi.astype(np.float32), rtol=1e-6)
            np.testing.assert_allclose(got_t, zt.astype(np.float32), rtol=1e-6)
        with pytest.raises(KeyError):
            provider.lookup("u3", 0)
