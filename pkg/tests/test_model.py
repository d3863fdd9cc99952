import numpy as np
import pytest

from neuroplug import model
from neuroplug.errors import ConfigError, DomainError, ShapeError

from oracles import conv_brute, maxpool_brute, nsqf_sieve


def small_layer(**kw):
    base = dict(k=2, c=3, h=8, w=8, r=3, s=3, stride=1, pad=1, pool=1)
    base.update(kw)
    return model.LayerShape(**base)


class TestConvForward:
    def test_zero_ifmap_gives_zero_ofmap(self):
        layer = small_layer()
        rng = np.random.default_rng(0)
        w = rng.integers(-64, 64, size=(2, 3, 3, 3), dtype=np.int8)
        out = model.conv_forward(layer, np.zeros((3, 8, 8), np.int8), w)
        assert out.shape == (2, 8, 8)
        assert not out.any()

    def test_center_impulse_ones_filter(self):
        # single 1 in the middle, 3x3 filter of ones, pad 1: every output in
        # reach of the impulse counts it exactly once
        layer = small_layer(k=1, c=1, h=3, w=3)
        ifmap = np.zeros((1, 3, 3), np.int8)
        ifmap[0, 1, 1] = 1
        w = np.ones((1, 1, 3, 3), np.int8)
        acc = model.conv_accumulate(layer, ifmap, w)
        assert acc.tolist() == [[[1, 1, 1], [1, 1, 1], [1, 1, 1]]]

    def test_ones_image_gives_overlap_counts(self):
        layer = small_layer(k=1, c=1, h=3, w=3)
        ifmap = np.ones((1, 3, 3), np.int8)
        w = np.ones((1, 1, 3, 3), np.int8)
        acc = model.conv_accumulate(layer, ifmap, w)
        assert acc.tolist() == [[[4, 6, 4], [6, 9, 6], [4, 6, 4]]]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for stride, pad in [(1, 1), (1, 0), (2, 1)]:
            layer = small_layer(k=3, c=2, h=9, w=9, stride=stride, pad=pad)
            ifmap = rng.integers(-32, 32, size=(2, 9, 9), dtype=np.int8)
            w = rng.integers(-32, 32, size=(3, 2, 3, 3), dtype=np.int8)
            got = model.conv_accumulate(layer, ifmap, w)
            want = conv_brute(ifmap, w, stride, pad)
            np.testing.assert_array_equal(got.astype(np.int64), want)

    def test_linear_before_relu(self):
        layer = small_layer(k=2, c=2, h=6, w=6)
        rng = np.random.default_rng(3)
        w = rng.integers(-16, 16, size=(2, 2, 3, 3), dtype=np.int8)
        for trial in range(10):
            a = rng.integers(-20, 20, size=(2, 6, 6), dtype=np.int8)
            b = rng.integers(-20, 20, size=(2, 6, 6), dtype=np.int8)
            lhs = model.conv_accumulate(layer, (a + b).astype(np.int8), w)
            rhs = model.conv_accumulate(layer, a, w) + model.conv_accumulate(layer, b, w)
            np.testing.assert_array_equal(lhs, rhs)

    def test_impulse_nnz_bounded_by_filter_area(self):
        # pre-ReLU response of a single impulse touches at most r*s outputs,
        # exactly r*s away from the boundary
        layer = small_layer(k=1, c=1, h=8, w=8)
        w = np.ones((1, 1, 3, 3), np.int8)
        for row in range(8):
            for col in range(8):
                ifmap = np.zeros((1, 8, 8), np.int8)
                ifmap[0, row, col] = 1
                acc = model.conv_accumulate(layer, ifmap, w)
                nnz = int(np.count_nonzero(acc))
                assert nnz <= 9
                interior = 1 <= row <= 6 and 1 <= col <= 6
                if interior:
                    assert nnz == 9

    def test_boundary_effect_corner_vs_midrow(self):
        layer = small_layer(k=1, c=1, h=64, w=64)
        w = np.ones((1, 1, 3, 3), np.int8)
        corner = np.zeros((1, 64, 64), np.int8)
        corner[0, 0, 0] = 1
        mid = np.zeros((1, 64, 64), np.int8)
        mid[0, 0, 32] = 1
        nnz_corner = np.count_nonzero(model.conv_forward(layer, corner, w))
        nnz_mid = np.count_nonzero(model.conv_forward(layer, mid, w))
        assert nnz_corner < nnz_mid

    def test_pooling_matches_brute(self):
        layer = small_layer(k=2, c=2, h=8, w=8, pool=2)
        rng = np.random.default_rng(11)
        ifmap = rng.integers(-32, 32, size=(2, 8, 8), dtype=np.int8)
        w = rng.integers(-8, 8, size=(2, 2, 3, 3), dtype=np.int8)
        out = model.conv_forward(layer, ifmap, w)
        acc = conv_brute(ifmap, w, 1, 1)
        acc = np.maximum(acc, 0)
        want = maxpool_brute(acc, 2)
        peak = int(want.max(initial=0))
        shift = 0
        while (peak >> shift) > 127:
            shift += 1
        np.testing.assert_array_equal(out.astype(np.int64), want >> shift)
        assert out.shape == (2, 4, 4)

    def test_shape_errors(self):
        layer = small_layer()
        w = np.zeros((2, 3, 3, 3), np.int8)
        with pytest.raises(ShapeError):
            model.conv_forward(layer, np.zeros((2, 8, 8), np.int8), w)
        with pytest.raises(ShapeError):
            model.conv_forward(layer, np.zeros((3, 8, 8), np.int8), np.zeros((2, 3, 3, 5), np.int8))


class TestGenerateWeights:
    def _net(self, sparsity):
        shape = small_layer(k=10, c=10, h=10, w=10)
        return model.NetworkSpec(
            layers=[model.Layer(shape=shape, tiling=model.auto_tile(shape), sparsity=sparsity)]
        )

    def test_zero_sparsity_forces_nothing(self):
        w0 = model.generate_weights(self._net(0.0), seed=1)[0]
        # natural zeros from the uniform draw are fine; just check the count
        # is far below any forced-pruning level
        assert np.count_nonzero(w0 == 0) < w0.size * 0.05

    def test_sparsity_hits_target(self):
        w = model.generate_weights(self._net(0.9), seed=1)[0]
        n_zero = int(np.count_nonzero(w == 0))
        assert abs(n_zero - round(0.9 * w.size)) <= 0.01 * w.size

    def test_deterministic(self):
        a = model.generate_weights(self._net(0.5), seed=42)[0]
        b = model.generate_weights(self._net(0.5), seed=42)[0]
        np.testing.assert_array_equal(a, b)
        c = model.generate_weights(self._net(0.5), seed=43)[0]
        assert (a != c).any()


class TestNsqf:
    def test_known_values(self):
        assert model.is_nsqf(12) is True
        assert model.is_nsqf(30) is False
        assert model.is_nsqf(150528) is True  # 2^9 * 3 * 7^2
        assert model.is_nsqf(1) is False

    def test_zero_rejected(self):
        with pytest.raises(DomainError):
            model.is_nsqf(0)

    def test_range_8_12(self):
        assert model.nsqf_in_range(8, 12).tolist() == [8, 9, 12]

    def test_primes_squarefree(self):
        assert model.nsqf_in_range(2, 3).tolist() == []

    def test_empty_on_reversed_bounds(self):
        assert model.nsqf_in_range(12, 8).tolist() == []

    def test_sieve_agreement_small(self):
        sieve = nsqf_sieve(20000)
        got = model.nsqf_mask(1, 20000)
        np.testing.assert_array_equal(got.astype(bool), sieve[1:])

    def test_count_1_to_100(self):
        sieve = nsqf_sieve(100)
        assert len(model.nsqf_in_range(1, 100)) == int(sieve[1:].sum())


class TestVolumesAndConfigs:
    def test_unit_volume(self):
        assert model.ifmap_volume(model.LayerShape(k=1, c=1, h=1, w=1, r=1, s=1)) == 1

    def test_vgg16_head_layer1(self):
        net = model.load_network("vgg16-head")
        assert model.ifmap_volume(net.layers[0].shape) == 150528
        assert model.ifmap_volume(net.layers[2].shape) == 802816

    def test_bundled_configs_validate(self):
        for name in ("vgg16-32", "toy-sparse", "vgg16-head"):
            net = model.load_network(name)
            net.validate()

    def test_roundtrip_json(self):
        net = model.load_network("toy-sparse")
        doc = model.network_to_json(net)
        again = model.network_from_json(doc)
        assert again == net

    def test_dimension_mismatch_rejected(self):
        doc = model.network_to_json(model.load_network("toy-sparse"))
        doc["layers"][1]["c"] = 32
        with pytest.raises(ConfigError):
            model.network_from_json(doc)

    def test_bad_skip_rejected(self):
        doc = model.network_to_json(model.load_network("toy-sparse"))
        doc["skips"] = [[2, 1]]
        with pytest.raises(ConfigError):
            model.network_from_json(doc)
