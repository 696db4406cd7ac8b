"""Correlation metric tests against brute-force oracles, plus the repeat harness."""

import numpy as np
import pytest

from oracle_utils import oracle_krcc, oracle_plcc, oracle_rmse, oracle_srcc

from fragvqa.errors import ConfigError, FormatError
from fragvqa.metrics import (EvalResult, kfold_eval, kfold_indices, krcc,
                             plcc, repeated_eval, rmse, srcc)
from fragvqa.regressor import TrainConfig


def random_pair(rng, n, with_ties=True):
    if with_ties and rng.random() < 0.5:
        p = rng.integers(0, max(2, n // 3), n).astype(np.float64)
        t = rng.integers(0, max(2, n // 3), n).astype(np.float64)
        if len(set(p)) < 2:
            p[0] += 1.0
        if len(set(t)) < 2:
            t[0] += 1.0
        return p, t
    return rng.normal(size=n), rng.normal(size=n)


class TestSrcc:
    def test_perfect_monotone(self):
        t = np.arange(10, dtype=np.float64)
        assert srcc(t * 3 + 2, t) == pytest.approx(1.0, abs=1e-15)

    def test_antitone(self):
        t = np.arange(10, dtype=np.float64)
        assert srcc(t[::-1], t) == pytest.approx(-1.0, abs=1e-15)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        p, t = rng.normal(size=30), rng.normal(size=30)
        assert srcc(np.exp(p), t) == pytest.approx(srcc(p, t), abs=1e-14)
        assert srcc(p, t**3) == pytest.approx(srcc(p, t), abs=1e-14)

    def test_constant_vector_rejected(self):
        with pytest.raises(FormatError, match="constant"):
            srcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            p, t = random_pair(rng, int(rng.integers(5, 50)))
            assert srcc(p, t) == pytest.approx(oracle_srcc(list(p), list(t)), abs=1e-12)


class TestPlcc:
    def test_positive_affine_invariance(self):
        rng = np.random.default_rng(2)
        t = rng.normal(size=20)
        assert plcc(2 * t + 3, t) == pytest.approx(1.0, abs=1e-12)

    def test_negation_flips_sign(self):
        rng = np.random.default_rng(3)
        t = rng.normal(size=20)
        p = t + 0.1 * rng.normal(size=20)
        assert plcc(-p, t) == pytest.approx(-plcc(p, t), abs=1e-15)

    def test_matches_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            p, t = random_pair(rng, int(rng.integers(5, 50)))
            assert plcc(p, t) == pytest.approx(oracle_plcc(list(p), list(t)), abs=1e-12)


class TestKrcc:
    def test_identical_order_no_ties(self):
        t = np.array([1.0, 5.0, 2.0, 8.0])
        assert krcc(t, t) == 1.0

    def test_enumerated_three_items(self):
        assert krcc([1.0, 3.0, 2.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_all_tied_rejected(self):
        with pytest.raises(FormatError, match="tied"):
            krcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_matches_pair_enumeration_exactly(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            p, t = random_pair(rng, int(rng.integers(4, 30)))
            assert krcc(p, t) == oracle_krcc(list(p), list(t))


class TestRmse:
    def test_identity_and_arithmetic(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5), abs=1e-15)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(6)
        p, t = rng.normal(size=100), rng.normal(size=100)
        assert rmse(p, t) == pytest.approx(oracle_rmse(list(p), list(t)), abs=1e-12)


class TestSymmetry:
    def test_all_metrics_symmetric(self):
        rng = np.random.default_rng(7)
        p, t = rng.normal(size=25), rng.normal(size=25)
        assert srcc(p, t) == pytest.approx(srcc(t, p), abs=1e-15)
        assert plcc(p, t) == pytest.approx(plcc(t, p), abs=1e-15)
        assert krcc(p, t) == krcc(t, p)
        assert rmse(p, t) == rmse(t, p)


class TestRepeatedEval:
    def test_single_repeat_median_is_that_result(self):
        fixed = EvalResult(srcc=0.5, plcc=0.6, krcc=0.4, rmse=1.0, n=10)
        out = repeated_eval(None, None, TrainConfig(), repeats=1,
                            run_one=lambda cfg, rep: fixed)
        assert out.median.srcc == 0.5
        assert len(out.repeats) == 1

    def test_injected_median(self):
        vals = iter([0.9, 0.1, 0.5])
        results = [EvalResult(srcc=v, plcc=v, krcc=v, rmse=v, n=4, repeat_index=i)
                   for i, v in enumerate(vals)]
        out = repeated_eval(None, None, TrainConfig(), repeats=3,
                            run_one=lambda cfg, rep: results[rep])
        assert out.median.srcc == 0.5

    def test_per_metric_medians_are_independent(self):
        # one run cannot dominate every median
        rows = [
            EvalResult(srcc=0.1, plcc=0.9, krcc=0.5, rmse=1.0, n=4, repeat_index=0),
            EvalResult(srcc=0.5, plcc=0.1, krcc=0.9, rmse=2.0, n=4, repeat_index=1),
            EvalResult(srcc=0.9, plcc=0.5, krcc=0.1, rmse=3.0, n=4, repeat_index=2),
        ]
        out = repeated_eval(None, None, TrainConfig(), repeats=3,
                            run_one=lambda cfg, rep: rows[rep])
        assert (out.median.srcc, out.median.plcc, out.median.krcc) == (0.5, 0.5, 0.5)
        assert out.median.rmse == 2.0

    def test_seeds_derive_from_base_plus_index(self):
        seen = []
        repeated_eval(None, None, TrainConfig(seed=100), repeats=4,
                      run_one=lambda cfg, rep: (seen.append(cfg.seed),
                                                EvalResult(0, 0, 0, 0, 2, rep))[1])
        assert seen == [100, 101, 102, 103]

    def test_default_repeat_count_is_21(self):
        import inspect
        from fragvqa.metrics import repeated_eval as re_fn
        assert inspect.signature(re_fn).parameters["repeats"].default == 21

    def test_end_to_end_on_learnable_data(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(24, 6)).astype(np.float32)
        y = x @ rng.normal(size=6)
        out = repeated_eval(x, y, TrainConfig(epochs=30, seed=0), repeats=3)
        assert len(out.repeats) == 3
        assert -1.0 <= out.median.srcc <= 1.0

    def test_zero_repeats_rejected(self):
        with pytest.raises(ConfigError):
            repeated_eval(None, None, TrainConfig(), repeats=0)


class TestKfold:
    def test_partition_covers_everything_once(self):
        folds = kfold_indices(23, 5, seed=0)
        all_test = np.concatenate([test for _, test in folds])
        assert sorted(all_test.tolist()) == list(range(23))
        for train_idx, test_idx in folds:
            assert not set(train_idx) & set(test_idx)
            assert len(train_idx) + len(test_idx) == 23

    def test_bad_k_rejected(self):
        with pytest.raises(ConfigError):
            kfold_indices(5, 1, seed=0)
        with pytest.raises(ConfigError):
            kfold_indices(5, 6, seed=0)

    def test_desk_scale_harness_runs(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(20, 5)).astype(np.float32)
        y = x @ rng.normal(size=5)
        results = kfold_eval(x, y, TrainConfig(epochs=10, seed=1), k=4)
        assert len(results) == 4
        assert all(r.n == 5 for r in results)
