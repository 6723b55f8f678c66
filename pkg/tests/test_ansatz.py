import math

import numpy as np
import pytest

from hypervmc import ansatz as az
from hypervmc import autodiff as ad
from hypervmc.ansatz import AnsatzConfig, ParameterStore, ProjectionCounter


def all_configs(n):
    return (np.arange(2 ** n)[:, None] >> np.arange(n)[::-1]) & 1


def zero_store(config):
    store = ParameterStore.initialize(config, seed=0)
    for name in store.order:
        store.tensors[name] = np.zeros_like(store.tensors[name])
    return store


def random_store(config, seed, bias_scale=0.2):
    store = ParameterStore.initialize(config, seed=seed)
    rng = np.random.default_rng(seed + 1)
    for name in store.order:
        if store.tensors[name].ndim == 1:
            store.tensors[name] = rng.uniform(-bias_scale, bias_scale, store.tensors[name].shape)
    return store


class TestParameterCounts:
    # (cell, d_h, complex) -> published size
    TABLE = [
        ("ernn", 50, False, 2752),
        ("egru", 50, False, 8052),
        ("hgru", 50, False, 8052),
        ("ernn2d", 50, False, 5352),
        ("egru", 75, True, 17854),
        ("hgru", 75, True, 17854),
        ("hgru", 60, True, 11584),
        ("hgru", 70, True, 15614),
        ("egru", 50, True, 8154),
        ("hgru", 55, True, 9794),
        ("hgru", 57, True, 10492),
        ("egru", 60, True, 11584),
    ]

    @pytest.mark.parametrize("cell,d_h,cplx,expected", TABLE)
    def test_exact_counts(self, cell, d_h, cplx, expected):
        kwargs = dict(cell=cell, d_h=d_h, n_sites=20, complex_output=cplx)
        if cell == "ernn2d":
            kwargs.update(n_sites=25, n_x=5, n_y=5)
        config = AnsatzConfig(**kwargs)
        assert az.count_parameters(config) == expected
        store = ParameterStore.initialize(config)
        assert store.n_parameters == expected

    def test_unknown_cell_rejected(self):
        with pytest.raises(ValueError):
            AnsatzConfig(cell="lstm", d_h=4, n_sites=4)


class TestParameterStore:
    def test_hyperbolic_tags_only_on_hgru_biases(self):
        config = AnsatzConfig(cell="hgru", d_h=4, n_sites=4)
        store = ParameterStore.initialize(config)
        hyper = {n for n, m in store.manifolds.items() if m == az.HYPERBOLIC}
        assert hyper == {"b_r", "b_z", "b_h"}
        config_e = AnsatzConfig(cell="egru", d_h=4, n_sites=4)
        store_e = ParameterStore.initialize(config_e)
        assert all(m == az.EUCLIDEAN for m in store_e.manifolds.values())

    def test_flat_roundtrip(self):
        config = AnsatzConfig(cell="egru", d_h=3, n_sites=4, complex_output=True)
        store = ParameterStore.initialize(config, seed=5)
        flat = store.to_flat()
        other = ParameterStore.initialize(config, seed=9)
        other.load_flat(flat)
        for name in store.order:
            assert np.array_equal(store.tensors[name], other.tensors[name])

    def test_load_flat_size_mismatch(self):
        config = AnsatzConfig(cell="ernn", d_h=3, n_sites=4)
        store = ParameterStore.initialize(config)
        with pytest.raises(ValueError):
            store.load_flat(np.zeros(store.n_parameters + 1))


class TestCellSteps:
    def test_rnn_zero_params(self):
        config = AnsatzConfig(cell="ernn", d_h=4, n_sites=2)
        p = zero_store(config).tensors
        h = az.euclidean_rnn_step(np.ones((3, 4)), np.ones((3, 2)), p)
        assert np.allclose(h, 0.0)

    def test_rnn_bias_only(self):
        config = AnsatzConfig(cell="ernn", d_h=4, n_sites=2)
        store = zero_store(config)
        store.tensors["b_h"] = np.array([0.1, -0.2, 0.3, 0.0])
        h = az.euclidean_rnn_step(np.zeros((1, 4)), np.zeros((1, 2)), store.tensors)
        assert np.allclose(h, np.tanh(store.tensors["b_h"]))

    def test_gru_zero_fixed_point(self):
        config = AnsatzConfig(cell="egru", d_h=4, n_sites=2)
        p = zero_store(config).tensors
        h = az.euclidean_gru_step(np.zeros((1, 4)), np.zeros((1, 2)), p)
        assert np.allclose(h, 0.0)
        h_half = az.euclidean_gru_step(np.full((1, 4), 0.8), np.zeros((1, 2)), p)
        assert np.allclose(h_half, 0.4)  # z = 0.5 gates, tanh(0) candidate

    def test_gru_copy_gate(self):
        config = AnsatzConfig(cell="egru", d_h=4, n_sites=2)
        store = random_store(config, seed=3)
        store.tensors["b_z"] = np.full(4, -50.0)
        store.tensors["W_z"] = np.zeros((4, 4))
        store.tensors["U_z"] = np.zeros((4, 2))
        h_prev = np.array([[0.3, -0.2, 0.5, 0.1]])
        h = az.euclidean_gru_step(h_prev, np.array([[1.0, 0.0]]), store.tensors)
        assert np.allclose(h, h_prev, atol=1e-12)

    def test_hgru_origin_fixed_point(self):
        config = AnsatzConfig(cell="hgru", d_h=4, n_sites=2)
        p = zero_store(config).tensors
        h = az.hyperbolic_gru_step(np.zeros((1, 4)), np.zeros((1, 2)), p, 1.0)
        assert np.allclose(h, 0.0, atol=1e-15)

    def test_hgru_flat_limit_matches_egru(self):
        config_h = AnsatzConfig(cell="hgru", d_h=5, n_sites=2, curvature=1e-8)
        store = random_store(config_h, seed=7)
        h_prev = np.random.default_rng(0).uniform(-0.3, 0.3, (4, 5))
        x = np.eye(2)[np.array([0, 1, 1, 0])]
        out_h = az.hyperbolic_gru_step(h_prev, x, store.tensors, 1e-8)
        out_e = az.euclidean_gru_step(h_prev, x, store.tensors)
        assert np.max(np.abs(out_h - out_e)) < 1e-5

    def test_hgru_states_stay_in_ball(self):
        config = AnsatzConfig(cell="hgru", d_h=6, n_sites=2)
        store = random_store(config, seed=11)
        counter = ProjectionCounter()
        rng = np.random.default_rng(2)
        h = np.zeros((50, 6))
        for _ in range(200):  # 10^4 row-steps in total
            x = np.eye(2)[rng.integers(0, 2, 50)]
            h = az.hyperbolic_gru_step(h, x, store.tensors, 1.0, counter)
            assert np.all(np.linalg.norm(h, axis=-1) <= 1.0 - az.geo.BALL_EPS + 1e-12)
        assert counter.hits == 0

    def test_rnn2d_zero_params(self):
        config = AnsatzConfig(cell="ernn2d", d_h=4, n_sites=4, n_x=2, n_y=2)
        p = zero_store(config).tensors
        h = az.rnn2d_step(np.ones((1, 4)), np.ones((1, 4)), np.ones((1, 2)), np.ones((1, 2)), p)
        assert np.allclose(h, 0.0)

    def test_rnn2d_degenerates_to_1d(self):
        config2 = AnsatzConfig(cell="ernn2d", d_h=4, n_sites=4, n_x=2, n_y=2)
        store2 = ParameterStore.initialize(config2, seed=4)
        store2.tensors["W_v"] = np.zeros((4, 4))
        store2.tensors["U_v"] = np.zeros((4, 2))
        p1 = {"W_h": store2.tensors["W_h"], "U_h": store2.tensors["U_h"], "b_h": store2.tensors["b"]}
        h_prev = np.random.default_rng(1).uniform(-0.5, 0.5, (3, 4))
        x = np.eye(2)[np.array([1, 0, 1])]
        out2 = az.rnn2d_step(h_prev, np.ones((3, 4)), x, np.ones((3, 2)), store2.tensors)
        out1 = az.euclidean_rnn_step(h_prev, x, p1)
        assert np.allclose(out2, out1, atol=1e-12)


class TestHeads:
    def test_zero_head_uniform(self):
        config = AnsatzConfig(cell="ernn", d_h=4, n_sites=2)
        p = zero_store(config).tensors
        y = az.conditional_dist(np.random.default_rng(0).standard_normal((1, 4)) * 0.0, p, config)
        assert np.allclose(y, 0.5)

    def test_probabilities_sum_to_one(self):
        config = AnsatzConfig(cell="ernn", d_h=6, n_sites=2)
        store = ParameterStore.initialize(config, seed=2)
        h = np.random.default_rng(3).standard_normal((1000, 6))
        y = az.conditional_dist(h, store.tensors, config)
        assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(y > 0)

    def test_onehot_picks_component(self):
        config = AnsatzConfig(cell="ernn", d_h=4, n_sites=2)
        store = ParameterStore.initialize(config, seed=8)
        h = np.random.default_rng(4).standard_normal((5, 4))
        y = az.conditional_dist(h, store.tensors, config)
        onehot = np.eye(2)[np.array([0, 1, 1, 0, 1])]
        picked = ad.dot(y, onehot)
        expect = y[np.arange(5), np.array([0, 1, 1, 0, 1])]
        assert np.allclose(picked, expect)

    def test_phase_head_zero_and_bounds(self):
        config = AnsatzConfig(cell="ernn", d_h=6, n_sites=2, complex_output=True)
        p = zero_store(config).tensors
        assert np.allclose(az.phase_component(np.zeros((1, 6)), p, config), 0.0)
        store = ParameterStore.initialize(config, seed=5)
        h = np.random.default_rng(6).standard_normal((1000, 6)) * 5
        y2 = az.phase_component(h, store.tensors, config)
        assert np.all(np.abs(y2) < math.pi)


class TestLogPsi:
    @pytest.mark.parametrize("cell", ["ernn", "egru", "hgru"])
    def test_zero_params_uniform(self, cell):
        config = AnsatzConfig(cell=cell, d_h=4, n_sites=6)
        store = zero_store(config)
        value = az.log_psi(config, store, np.array([0, 1, 1, 0, 1, 0]))
        assert value.log_amplitude == pytest.approx(3 * math.log(0.5), abs=1e-12)
        assert value.phase == pytest.approx(0.0)

    def test_zero_params_uniform_2d(self):
        config = AnsatzConfig(cell="ernn2d", d_h=4, n_sites=6, n_x=3, n_y=2)
        store = zero_store(config)
        value = az.log_psi(config, store, np.array([1, 0, 0, 1, 1, 1]))
        assert value.log_amplitude == pytest.approx(3 * math.log(0.5), abs=1e-12)

    @pytest.mark.parametrize("cell,n,kwargs", [
        ("ernn", 8, {}),
        ("egru", 7, {}),
        ("hgru", 6, {}),
        ("ernn2d", 6, {"n_x": 3, "n_y": 2}),
        ("egru", 6, {"complex_output": True, "marshall_sign": True}),
    ])
    def test_normalization(self, cell, n, kwargs):
        config = AnsatzConfig(cell=cell, d_h=5, n_sites=n, **kwargs)
        store = random_store(config, seed=13)
        la, _ = az.log_psi_batch(config, store.tensors, all_configs(n))
        total = np.sum(np.exp(2.0 * la))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_marshall_parity_example(self):
        sigma = np.array([[1, 0, 1, 0]])
        assert az.marshall_exponent(sigma)[0] == 2
        config = AnsatzConfig(cell="egru", d_h=4, n_sites=4,
                              complex_output=True, marshall_sign=True)
        store = zero_store(config)
        _, ph = az.log_psi_batch(config, store.tensors, sigma)
        assert math.cos(ph[0]) == pytest.approx(1.0)  # shift by 2*pi is a no-op
        assert ph[0] == pytest.approx(2 * math.pi)

    def test_flat_limit_full_sequence(self):
        n = 6
        config_h = AnsatzConfig(cell="hgru", d_h=5, n_sites=n, curvature=1e-8)
        config_e = AnsatzConfig(cell="egru", d_h=5, n_sites=n)
        store = random_store(config_h, seed=21)
        sig = all_configs(n)[:17]
        la_h, _ = az.log_psi_batch(config_h, store.tensors, sig)
        la_e, _ = az.log_psi_batch(config_e, store.tensors, sig)
        assert np.max(np.abs(la_h - la_e)) < 1e-5 * n


class TestSampling:
    def test_uniform_frequencies(self):
        config = AnsatzConfig(cell="egru", d_h=4, n_sites=4)
        store = zero_store(config)
        rng = np.random.default_rng(123)
        samples = az.sample_batch(config, store, 100_000, rng)
        codes = samples @ (1 << np.arange(4)[::-1])
        counts = np.bincount(codes, minlength=16)
        p = 1.0 / 16.0
        sigma = math.sqrt(p * (1 - p) / 100_000)
        assert np.all(np.abs(counts / 100_000 - p) < 3 * sigma + 1e-12)

    def test_seed_reproducibility(self):
        config = AnsatzConfig(cell="hgru", d_h=4, n_sites=5)
        store = random_store(config, seed=17)
        s1 = az.sample_batch(config, store, 64, np.random.default_rng(99))
        s2 = az.sample_batch(config, store, 64, np.random.default_rng(99))
        assert np.array_equal(s1, s2)

    def test_tv_distance_against_enumeration(self):
        n = 8
        config = AnsatzConfig(cell="egru", d_h=6, n_sites=n)
        store = random_store(config, seed=29)
        la, _ = az.log_psi_batch(config, store.tensors, all_configs(n))
        probs = np.exp(2.0 * la)
        samples = az.sample_batch(config, store, 100_000, np.random.default_rng(7))
        codes = samples @ (1 << np.arange(n)[::-1])
        freq = np.bincount(codes, minlength=2 ** n) / 100_000
        tv = 0.5 * np.abs(freq - probs).sum()
        assert tv < 0.02

    def test_sampler_product_matches_log_psi(self):
        for cell, kwargs in [("egru", {}), ("ernn2d", {"n_x": 3, "n_y": 2})]:
            config = AnsatzConfig(cell=cell, d_h=5, n_sites=6, **kwargs)
            store = random_store(config, seed=31)
            samples, running = az.sample_batch(config, store, 40, np.random.default_rng(5),
                                               return_log_amp=True)
            la, _ = az.log_psi_batch(config, store.tensors, samples)
            assert np.max(np.abs(la - running)) < 1e-12


class TestGradients:
    @pytest.mark.parametrize("cell,kwargs", [
        ("ernn", {}),
        ("egru", {}),
        ("hgru", {}),
        ("ernn2d", {"n_x": 2, "n_y": 2}),
    ])
    def test_log_amp_gradient_matches_fd(self, cell, kwargs):
        config = AnsatzConfig(cell=cell, d_h=3, n_sites=4, **kwargs)
        store = random_store(config, seed=41)
        sigma = np.array([[0, 1, 1, 0]])

        def fn(params):
            la, _ = az.log_psi_batch(config, params, sigma)
            return ad.sum_all(la)

        err, _ = ad.finite_diff_check(fn, store.tensors)
        assert err < 1e-6

    def test_phase_gradient_matches_fd(self):
        config = AnsatzConfig(cell="egru", d_h=3, n_sites=3, complex_output=True)
        store = random_store(config, seed=43)
        sigma = np.array([[1, 0, 1]])

        def fn(params):
            _, ph = az.log_psi_batch(config, params, sigma)
            return ad.sum_all(ph)

        err, _ = ad.finite_diff_check(fn, store.tensors)
        assert err < 1e-6
