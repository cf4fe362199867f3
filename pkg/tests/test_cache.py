import numpy as np
import pytest

import hsdacs
from hsdacs.cache import InMemoryCache, array_digest, default_cache
from hsdacs.tensor import no_grad
from tests.base_test import BaseTest


class TestInMemoryCache(BaseTest):
    def test_lru_eviction(self):
        cache = InMemoryCache(max_size=2)
        cache.insert("a", 1)
        cache.insert("b", 2)
        assert cache.get("a") == 1
        cache.insert("c", 3)
        assert cache.get("b") is None
        assert (cache.get("a"), cache.get("c")) == (1, 3)

    def test_reset(self):
        cache = InMemoryCache(max_size=4)
        cache.insert("a", 1)
        cache.reset(max_size=1)
        assert len(cache) == 0
        assert cache.max_size == 1

    def test_default_size_follows_settings(self):
        hsdacs.settings.configure(cache_max_size=7)
        assert default_cache().max_size == 7
        assert default_cache(3).max_size == 3


class TestArrayDigest(BaseTest):
    def test_shape_is_part_of_the_key(self):
        data = np.arange(6, dtype=np.float64)
        assert array_digest(data.reshape(2, 3)) != array_digest(data.reshape(3, 2))

    def test_tag_is_part_of_the_key(self):
        data = np.zeros(3)
        assert array_digest(data, tag="a") != array_digest(data, tag="b")
        assert array_digest(data, tag="a") == array_digest(data.copy(), tag="a")


class TestProjectionCache(BaseTest):
    @pytest.fixture
    def enc(self):
        model = self.make_model()
        with no_grad():
            return model, model.encode(self.make_dataset(1)[0].features).utterance(0)

    def test_repeat_projection_hits(self, enc):
        model, states = enc
        attn = model.layers[0].cross_attn
        first = attn.project_memory(states)
        assert attn.project_memory(states) is first
        assert len(model.cache) == 1

    def test_layers_do_not_share_entries(self, enc):
        model, states = enc
        keys = [layer.cross_attn.project_memory(states)[0] for layer in model.layers]
        assert len(model.cache) == len(model.layers)
        assert not np.array_equal(keys[0], keys[1])

    def test_updated_weights_miss(self, enc):
        model, states = enc
        attn = model.layers[0].cross_attn
        first = attn.project_memory(states)
        attn.w_k.weight.data = attn.w_k.weight.data + 1.0
        second = attn.project_memory(states)
        assert second is not first
        assert not np.array_equal(second[0], first[0])
        assert np.array_equal(second[1], first[1])

    def test_disabled_cache_recomputes(self, enc):
        model, states = enc
        hsdacs.settings.configure(enable_cache=False)
        attn = model.layers[0].cross_attn
        first = attn.project_memory(states)
        second = attn.project_memory(states)
        assert second is not first
        assert np.array_equal(second[0], first[0])
        assert len(model.cache) == 0
