"""Regressor tests: forward oracle, losses, gradients, schedule, SWA, training."""

import math

import numpy as np
import pytest

from oracle_utils import (finite_diff_grads, grad_check_max_errors,
                          oracle_forward)

from fragvqa.errors import ConfigError, FormatError
from fragvqa.regressor import (MlpModel, OptimState, TrainConfig, backward,
                               composite_loss, cosine_lr, forward,
                               load_checkpoint, loss_grad_wrt_pred, mae_loss,
                               predict, rank_loss, save_checkpoint,
                               swa_accumulate, swa_parameters, train)


def tiny_model(d=8, seed=0, dropout=0.0):
    model = MlpModel(d, dropout_p=dropout, seed=seed)
    return model


class TestForward:
    def test_zero_model_maps_to_zero(self):
        model = tiny_model(d=6)
        for name in ("w1", "b1", "beta1", "w2", "b2", "beta2", "w3"):
            setattr(model, name, np.zeros_like(getattr(model, name)))
        model.b3 = np.float64(0.0)
        model.set_eval()
        out = forward(model, np.random.default_rng(0).normal(size=(5, 6)))
        assert np.all(out == 0.0)

    def test_eval_mode_is_dropout_free_and_pure(self):
        model = tiny_model(d=4, dropout=0.5).set_eval()
        x = np.random.default_rng(1).normal(size=(3, 4))
        before = {k: np.array(v, copy=True) for k, v in model.params().items()}
        a = forward(model, x)
        b = forward(model, x)
        assert np.array_equal(a, b)
        for k, v in model.params().items():
            assert np.array_equal(before[k], np.asarray(v))

    @pytest.mark.parametrize("train_mode", [False, True])
    def test_matches_straight_line_oracle(self, train_mode):
        rng = np.random.default_rng(2)
        model = tiny_model(d=8, seed=3)
        model.feat_mean = rng.normal(size=8)
        model.feat_std = np.abs(rng.normal(size=8)) + 0.5
        model.rm1 = rng.normal(size=256) * 0.1
        model.rv1 = np.abs(rng.normal(size=256)) + 0.5
        x = rng.normal(size=(5, 8))
        if train_mode:
            model.set_train()
            got, _ = forward(model, x, update_running=False)
        else:
            model.set_eval()
            got = forward(model, x)
        expect = oracle_forward(model, x, train=train_mode)
        assert np.allclose(got, expect, rtol=1e-12, atol=1e-12)

    def test_train_mode_batch_of_one_rejected(self):
        model = tiny_model().set_train()
        with pytest.raises(ConfigError, match=">= 2"):
            forward(model, np.zeros((1, 8)), rng=np.random.default_rng(0))

    def test_nonfinite_input_rejected(self):
        model = tiny_model().set_eval()
        with pytest.raises(FormatError, match="non-finite"):
            forward(model, np.array([[np.nan] * 8]))

    def test_batched_predict_equals_per_item(self):
        rng = np.random.default_rng(4)
        model = tiny_model(d=5, seed=7)
        x = rng.normal(size=(6, 5))
        batched = predict(model, x)
        single = np.array([predict(model, x[i])[0] for i in range(6)])
        assert np.allclose(batched, single, rtol=1e-12, atol=0)


class TestLosses:
    def test_mae_identity_and_arithmetic(self):
        assert mae_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mae_loss([1.0, 2.0], [0.0, 2.0]) == 0.5

    def test_mae_matches_loop(self):
        rng = np.random.default_rng(5)
        p, t = rng.normal(size=100), rng.normal(size=100)
        expect = sum(abs(a - b) for a, b in zip(p, t)) / 100
        assert abs(mae_loss(p, t) - expect) < 1e-12

    def test_rank_constant_inputs_zero(self):
        assert rank_loss([2.0, 2.0, 2.0], [1.0, 1.0, 1.0]) == 0.0

    def test_rank_hand_enumerated_case(self):
        # four ordered pairs: (0,0)->0, (0,1)->0.5, (1,0)->0.5, (1,1)->0
        assert rank_loss([0.5, 0.0], [1.0, 0.0], margin=0.0) == 0.25

    def test_rank_zero_when_ordered_with_margin_gaps(self):
        truth = [0.0, 1.0, 3.0]
        pred = [0.0, 2.0, 6.0]  # prediction gaps exceed truth gaps
        assert rank_loss(pred, truth) == 0.0

    def test_rank_matches_pair_enumeration(self):
        rng = np.random.default_rng(6)
        p, t = rng.normal(size=40), rng.normal(size=40)
        total = 0.0
        for i in range(40):
            for j in range(40):
                delta = abs(t[i] - t[j])
                e = 1.0 if t[i] >= t[j] else -1.0
                total += max(0.0, delta - e * (p[i] - p[j]))
        assert abs(rank_loss(p, t) - total / 1600) < 1e-12

    def test_rank_margin_disregards_small_gaps(self):
        truth = [0.0, 0.1]
        pred = [1.0, 0.0]  # wrong order, truth gap below margin
        assert rank_loss(pred, truth, margin=0.5) == 0.0
        assert rank_loss(pred, truth, margin=0.0) > 0.0

    def test_rank_translation_invariance_exact(self):
        # dyadic values keep the shifted subtraction exact
        rng = np.random.default_rng(7)
        pred = rng.integers(-40, 40, 12).astype(np.float64) / 8.0
        truth = rng.integers(-40, 40, 12).astype(np.float64) / 8.0
        base = rank_loss(pred, truth)
        for c in (1.0, -2.25, 64.5):
            assert rank_loss(pred + c, truth) == base

    def test_composite_weighting(self):
        cfg = TrainConfig(mae_w=0.6, rank_w=1.0)
        pred, truth = np.array([0.5, 0.0]), np.array([1.0, 0.0])
        # L_MAE = 0.25, L_Rank = 0.25 -> 0.6*0.25 + 1.0*0.25 = 0.4
        assert abs(composite_loss(pred, truth, cfg) - 0.4) < 1e-15
        cfg0 = TrainConfig(mae_w=0.6, rank_w=0.0)
        assert composite_loss(pred, truth, cfg0) == 0.6 * mae_loss(pred, truth)
        assert composite_loss(truth, truth, cfg) == 0.0

    def test_composite_nonnegative(self):
        rng = np.random.default_rng(8)
        cfg = TrainConfig()
        for _ in range(50):
            p, t = rng.normal(size=9), rng.normal(size=9)
            assert composite_loss(p, t, cfg) >= 0.0


class TestGradients:
    def test_zero_loss_gives_zero_grads(self):
        model = tiny_model(d=4)
        model.set_train()
        x = np.random.default_rng(9).normal(size=(6, 4))
        pred, cache = forward(model, x, update_running=False)
        cfg = TrainConfig()
        grads = backward(model, cache, loss_grad_wrt_pred(pred, pred.copy(), cfg))
        for g in grads.values():
            assert not np.asarray(g).any()

    def test_rank_weight_linearity(self):
        rng = np.random.default_rng(10)
        p, t = rng.normal(size=10), rng.normal(size=10)
        g1 = loss_grad_wrt_pred(p, t, TrainConfig(mae_w=0.0, rank_w=1.0))
        g2 = loss_grad_wrt_pred(p, t, TrainConfig(mae_w=0.0, rank_w=2.0))
        assert np.allclose(g2, 2.0 * g1, rtol=0, atol=1e-18)

    def test_full_finite_difference_check_small(self):
        # smaller instance for the quick suite; acceptance runs D=8, B=16
        rng = np.random.default_rng(11)
        model = tiny_model(d=3, seed=12)
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=5)
        cfg = TrainConfig(mae_w=0.6, rank_w=1.0)
        model.set_train()
        pred, cache = forward(model, x, update_running=False)
        model.set_eval()
        analytic = backward(model, cache, loss_grad_wrt_pred(pred, y, cfg))
        numeric = finite_diff_grads(model, x, y, cfg)
        _, worst = grad_check_max_errors(analytic, numeric)
        assert worst <= 1.0  # abs <= 1e-6 or rel <= 1e-4 per parameter


class TestScheduleAndSwa:
    def test_cosine_endpoints_exact(self):
        lr0, e = 0.1, 50
        assert cosine_lr(lr0, 0, e) == lr0
        assert cosine_lr(lr0, e - 1, e) == lr0 * (1 + math.cos(math.pi * (e - 1) / e)) / 2
        assert cosine_lr(lr0, e, e) == pytest.approx(0.0, abs=1e-18)

    def test_cosine_monotone_decreasing(self):
        vals = [cosine_lr(1.0, k, 30) for k in range(30)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_swa_average_equals_snapshot_mean(self):
        rng = np.random.default_rng(13)
        model = tiny_model(d=4, seed=14)
        state = OptimState.for_model(model)
        snapshots = []
        for _ in range(5):
            for name in ("w1", "b1", "w3"):
                arr = np.asarray(getattr(model, name))
                setattr(model, name,
                        arr + rng.normal(size=arr.shape) if arr.ndim else np.float64(arr))
            snapshots.append({k: np.array(v, copy=True) for k, v in model.trained_params().items()})
            swa_accumulate(state, model)
        avg = swa_parameters(state)
        for k in avg:
            expect = snapshots[0][k].astype(np.float64)
            for snap in snapshots[1:]:
                expect = expect + snap[k]
            expect = expect / 5
            assert np.array_equal(avg[k], expect)  # same summation order: bit-exact


class TestTraining:
    @staticmethod
    def linear_problem(n=32, d=12, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, d))
        w = rng.normal(size=d)
        y = x @ w
        return x.astype(np.float32), y

    def test_learns_linear_target(self):
        x, y = self.linear_problem()
        cfg = TrainConfig(epochs=120, lr0=1e-2, weight_decay=5e-4, batch_size=256, seed=1)
        model, log = train(x, y, cfg)
        from fragvqa.metrics import srcc
        train_pred = predict(model, np.asarray(x, np.float64)[log.train_indices])
        assert srcc(train_pred, y[log.train_indices]) > 0.9

    def test_bit_identical_given_seed(self):
        x, y = self.linear_problem(seed=3)
        cfg = TrainConfig(epochs=12, seed=42)
        m1, log1 = train(x, y, cfg)
        m2, log2 = train(x, y, cfg)
        for k, v in m1.params().items():
            assert np.array_equal(np.asarray(v), np.asarray(getattr(m2, k))), k
        assert log1.train_loss == log2.train_loss
        assert log1.selected == log2.selected

    def test_different_seed_changes_split(self):
        x, y = self.linear_problem(seed=4)
        _, log_a = train(x, y, TrainConfig(epochs=2, seed=0))
        _, log_b = train(x, y, TrainConfig(epochs=2, seed=9))
        assert not np.array_equal(log_a.val_indices, log_b.val_indices)

    def test_swa_branch_runs_and_logs(self):
        x, y = self.linear_problem(seed=5)
        cfg = TrainConfig(epochs=8, swa_start_frac=0.5, seed=6)
        _, log = train(x, y, cfg)
        assert math.isfinite(log.swa_val_rmse)
        assert log.selected in ("best", "swa")

    def test_too_few_videos_rejected(self):
        with pytest.raises(ConfigError, match="at least 4"):
            train(np.zeros((3, 4)), np.zeros(3), TrainConfig(epochs=1))

    def test_tiny_validation_rejected(self):
        x, y = self.linear_problem(n=5)
        with pytest.raises(ConfigError, match="validation"):
            train(x, y, TrainConfig(epochs=1, split=0.9))

    def test_lr_held_at_lr0_during_swa(self):
        x, y = self.linear_problem(seed=7)
        cfg = TrainConfig(epochs=10, lr0=0.05, swa_start_frac=0.6, seed=8)
        _, log = train(x, y, cfg)
        swa_start = math.ceil(0.6 * 10)
        for epoch, lr in zip(log.epoch, log.lr):
            if epoch >= swa_start:
                assert lr == 0.05
            else:
                assert lr == cosine_lr(0.05, epoch, 10)


class TestCheckpoint:
    def test_roundtrip_predictions_match_float32_params(self, tmp_path):
        rng = np.random.default_rng(15)
        x, y = TestTraining.linear_problem(seed=16)
        cfg = TrainConfig(epochs=4, seed=17)
        model, _ = train(x, y, cfg)
        path = tmp_path / "model.fvq"
        save_checkpoint(path, model, cfg)
        loaded, header = load_checkpoint(path)
        assert header["dims"]["input"] == 12
        assert header["seed"] == 17
        probe = rng.normal(size=(3, 12))
        # float32 storage: compare against the model cast to f32 and back
        reference = model.copy()
        for name, value in reference.params().items():
            arr = np.asarray(value, dtype=np.float32).astype(np.float64)
            setattr(reference, name, arr if arr.ndim else np.float64(arr))
        assert np.allclose(predict(loaded, probe), predict(reference, probe),
                           rtol=0, atol=0)

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "bogus"
        path.write_bytes(b'{"format": "other"}\n')
        with pytest.raises(FormatError):
            load_checkpoint(path)
