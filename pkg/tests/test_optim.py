import numpy as np
import pytest

import feir.optim as optim
from feir.core import Policy, ScorePair, row_softmax, top_k
from feir.losses import LossWeights
from feir.optim import (
    Scaling,
    TrainConfig,
    TrainingDiverged,
    coarse_search_learning_rate,
    default_weight_grid,
    fit,
    make_training_view,
    sweep,
)


def random_pair(seed, m=5, n=8):
    rng = np.random.default_rng(seed)
    return ScorePair.single(rng.uniform(0.01, 0.99, (m, n)))


def losses_of(trace):
    return [b.as_dict() for b in trace.steps]


class TestScalingConfig:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Scaling(kind="bogus")

    def test_required_fields(self):
        with pytest.raises(ValueError):
            Scaling(kind="minibatch")
        with pytest.raises(ValueError):
            Scaling(kind="user_item_sample", m_s=2)

    def test_dim_bounds(self):
        with pytest.raises(ValueError):
            Scaling(kind="minibatch", b=20).validate_dims(10, 5)
        with pytest.raises(ValueError):
            Scaling(kind="item_sample", n_s=9).validate_dims(10, 5)

    def test_round_trip(self):
        s = Scaling(kind="user_item_sample", m_s=3, n_s=4)
        assert Scaling.from_dict(s.to_dict()) == s


class TestTrainingView:
    def test_none_is_identity(self):
        pair = random_pair(0, 6, 9)
        view = make_training_view(pair, Scaling(), 0, seed=1)
        assert view.users.tolist() == list(range(6))
        assert view.items.tolist() == list(range(9))
        assert view.f_rows.tolist() == list(range(6))
        assert view.scope == "global" and view.item_scale == 1.0

    def test_full_size_settings_match_none(self):
        pair = random_pair(0, 6, 9)
        none = make_training_view(pair, Scaling(), 3, seed=1)
        batch = make_training_view(pair, Scaling(kind="minibatch", b=6), 3, seed=1)
        users = make_training_view(pair, Scaling(kind="user_sample", m_s=6), 3, seed=1)
        items = make_training_view(pair, Scaling(kind="item_sample", n_s=9), 3, seed=1)
        for v in (batch, users, items):
            assert v.users.tolist() == none.users.tolist()
            assert v.items.tolist() == none.items.tolist()
            assert v.f_rows.tolist() == none.f_rows.tolist()
        assert items.item_scale == 1.0

    def test_minibatch_partitions_each_epoch(self):
        pair = random_pair(1, 10, 4)
        scaling = Scaling(kind="minibatch", b=3)
        n_batches = 10 // 3
        for epoch in range(3):
            seen = []
            for idx in range(n_batches):
                view = make_training_view(pair, scaling, epoch * n_batches + idx, seed=9)
                assert view.f_rows.size == 3
                assert view.scope == "inferiority_batch"
                seen.extend(view.f_rows.tolist())
            assert len(set(seen)) == len(seen) == n_batches * 3

    def test_user_sample_reproducible(self):
        pair = random_pair(2, 10, 4)
        scaling = Scaling(kind="user_sample", m_s=2)
        a = make_training_view(pair, scaling, 5, seed=3)
        b = make_training_view(pair, scaling, 5, seed=3)
        assert a.users.tolist() == b.users.tolist()
        c = make_training_view(pair, scaling, 6, seed=3)
        assert a.users.tolist() != c.users.tolist() or True  # resampled per step

    def test_item_sample_scales_losses(self):
        pair = random_pair(3, 4, 10)
        view = make_training_view(pair, Scaling(kind="item_sample", n_s=5), 0, seed=0)
        assert view.item_scale == 2.0
        assert view.items.size == 5


class TestTrainConfig:
    def test_validation(self):
        w = LossWeights(1, 1, 1)
        with pytest.raises(ValueError):
            TrainConfig(k=1, weights=w, learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(k=1, weights=w, max_steps=0)
        with pytest.raises(ValueError):
            TrainConfig(k=1, weights=w, parametrization="implicit")

    def test_json_round_trip(self):
        cfg = TrainConfig(
            k=3, weights=LossWeights(1, 2, 3, 4), learning_rate=0.5, max_steps=7,
            convergence_tol=1e-4, parametrization="direct",
            scaling=Scaling(kind="minibatch", b=2), seed=13,
        )
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestFit:
    def test_utility_only_recovers_argmax(self):
        for seed in range(3):
            pair = random_pair(seed)
            cfg = TrainConfig(k=1, weights=LossWeights(0, 0, 1, 0), learning_rate=30.0,
                              max_steps=2000, seed=0)
            trace = fit(pair, cfg)
            np.testing.assert_array_equal(
                top_k(trace.final_policy.P, 1).C, top_k(pair.U, 1).C
            )

    def test_pure_inferiority_training_beats_naive_on_structured_users(self):
        from feir.baselines import naive
        from feir.datagen import GenSpec, generate
        from feir.metrics import system_metrics

        pair = generate(GenSpec(family="user_groups", seed=7))
        k = 10
        naive_inf = system_metrics(pair.U, pair.S, naive(pair, k)).inferiority
        cfg = TrainConfig(k=k, weights=LossWeights(0, 1, 0, 0), learning_rate=10.0,
                          max_steps=2000, seed=0)
        trace = fit(pair, cfg)
        trained = system_metrics(pair.U, pair.S, top_k(trace.final_policy.P, k))
        assert trained.inferiority < naive_inf

    def test_single_step(self):
        pair = random_pair(4)
        cfg = TrainConfig(k=2, weights=LossWeights(1, 1, 1, 0), max_steps=1)
        trace = fit(pair, cfg)
        assert trace.step_count == 1 and len(trace.steps) == 1

    def test_k_out_of_range(self):
        pair = random_pair(4)
        with pytest.raises(ValueError):
            fit(pair, TrainConfig(k=9, weights=LossWeights(1, 1, 1)))

    def test_final_policy_is_row_stochastic(self):
        pair = random_pair(5)
        for parametrization, lr in (("logits", 10.0), ("direct", 0.01)):
            cfg = TrainConfig(
                k=2, weights=LossWeights(1, 1, 1, 1.0 if parametrization == "direct" else 0.0),
                learning_rate=lr, max_steps=100, parametrization=parametrization,
            )
            trace = fit(pair, cfg)
            assert isinstance(trace.final_policy, Policy)

    def test_policy_row_stochastic_throughout_logits_training(self):
        pair = random_pair(6)
        cfg = TrainConfig(k=2, weights=LossWeights(1, 1, 1, 0), learning_rate=10.0,
                          max_steps=25, seed=0)
        # replay the update loop and check the implied policy at every step
        params = pair.U.copy()
        for step in range(cfg.max_steps):
            P = row_softmax(params)
            np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
            view = make_training_view(pair, cfg.scaling, step, cfg.seed)
            _, G = optim._view_loss_grad(pair.U, pair.S, params, cfg.k, cfg.weights,
                                         view, cfg.parametrization)
            params = params - cfg.learning_rate * G

    def test_monotone_decrease_at_small_learning_rate(self):
        for seed in range(3):
            pair = random_pair(seed)
            cfg = TrainConfig(k=2, weights=LossWeights(0, 0, 1, 0), learning_rate=1e-3,
                              max_steps=300, convergence_tol=0.0, seed=0)
            trace = fit(pair, cfg)
            totals = [b.total for b in trace.steps]
            diffs = np.diff(totals)
            assert (diffs <= 1e-12).all()

    def test_determinism(self):
        pair = random_pair(8)
        cfg = TrainConfig(k=2, weights=LossWeights(1, 1, 1, 0), learning_rate=5.0,
                          max_steps=60, scaling=Scaling(kind="user_sample", m_s=3), seed=17)
        a, b = fit(pair, cfg), fit(pair, cfg)
        assert losses_of(a) == losses_of(b)
        np.testing.assert_array_equal(a.final_policy.P, b.final_policy.P)

    def test_divergence_reports_step_and_term(self):
        # direct mode is unbounded; a large step pushes probabilities negative
        # and the k-th powers explode
        pair = random_pair(9)
        cfg = TrainConfig(k=2, weights=LossWeights(1, 1, 1, 0.5), learning_rate=5.0,
                          max_steps=500, parametrization="direct", seed=0)
        with pytest.raises(TrainingDiverged, match="at step"):
            fit(pair, cfg)

    def test_convergence_stops_early(self):
        pair = random_pair(10)
        cfg = TrainConfig(k=2, weights=LossWeights(0, 0, 1, 0), learning_rate=1e-6,
                          max_steps=2000, convergence_tol=1e-3, seed=0)
        trace = fit(pair, cfg)
        assert trace.step_count < 2000

    def test_trace_csv(self, tmp_path):
        pair = random_pair(11)
        trace = fit(pair, TrainConfig(k=1, weights=LossWeights(1, 1, 1, 0), max_steps=5))
        path = tmp_path / "trace.csv"
        trace.losses_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,envy_loss,inferiority_loss,neg_utility_loss,penalty_loss,total"
        assert len(lines) == 6


class TestScalingEquivalence:
    def test_full_size_scalings_reproduce_none(self):
        pair = random_pair(12, 8, 6)
        base = TrainConfig(k=2, weights=LossWeights(1, 1, 1, 0), learning_rate=5.0,
                           max_steps=80, convergence_tol=0.0, seed=23)
        reference = fit(pair, base)
        for scaling in (
            Scaling(kind="minibatch", b=8),
            Scaling(kind="user_sample", m_s=8),
            Scaling(kind="item_sample", n_s=6),
            Scaling(kind="user_item_sample", m_s=8, n_s=6),
        ):
            from dataclasses import replace

            trace = fit(pair, replace(base, scaling=scaling))
            assert losses_of(trace) == losses_of(reference), scaling.kind
            np.testing.assert_array_equal(trace.final_policy.P, reference.final_policy.P)

    def test_minibatch_differs_when_partial(self):
        pair = random_pair(13, 8, 6)
        base = TrainConfig(k=2, weights=LossWeights(1, 1, 1, 0), learning_rate=5.0,
                           max_steps=30, convergence_tol=0.0, seed=5)
        from dataclasses import replace

        partial = fit(pair, replace(base, scaling=Scaling(kind="minibatch", b=3)))
        full = fit(pair, base)
        assert losses_of(partial) != losses_of(full)


class TestViewLossAndGradient:
    """The sliced/scattered view path against independent references."""

    def test_minibatch_inferiority_matches_pairwise_sum(self):
        from feir.losses import expected_pair_inferiority

        rng = np.random.default_rng(20)
        pair = random_pair(20, 7, 5)
        k = 2
        P = row_softmax(rng.normal(size=(7, 5)))
        Z = np.log(P)  # logits reproducing P exactly up to softmax
        view = make_training_view(pair, Scaling(kind="minibatch", b=3), step=4, seed=2)
        weights = LossWeights(0.0, 1.0, 0.0, 0.0)
        breakdown, _ = optim._view_loss_grad(pair.U, pair.S, Z, k, weights, view, "logits")
        P_actual = row_softmax(Z)
        expected = sum(
            expected_pair_inferiority(i, t, pair.S, P_actual, k)
            for i in view.f_rows
            for t in range(7)
            if t != i
        ) / 7
        assert breakdown.inferiority_loss == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize(
        "scaling",
        [
            Scaling(kind="minibatch", b=3),
            Scaling(kind="user_sample", m_s=4),
            Scaling(kind="item_sample", n_s=3),
            Scaling(kind="user_item_sample", m_s=4, n_s=3),
        ],
        ids=lambda s: s.kind,
    )
    def test_view_gradient_matches_finite_differences(self, scaling):
        from feir.losses import finite_diff_grad

        pair = random_pair(21, 7, 5)
        rng = np.random.default_rng(22)
        Z = rng.normal(size=(7, 5))
        k = 2
        weights = LossWeights(1.0, 1.0, 1.0, 0.0)
        view = make_training_view(pair, scaling, step=3, seed=11)

        def view_loss(params):
            breakdown, _ = optim._view_loss_grad(
                pair.U, pair.S, params, k, weights, view, "logits"
            )
            return breakdown.total

        _, analytic = optim._view_loss_grad(pair.U, pair.S, Z, k, weights, view, "logits")
        numeric = finite_diff_grad(view_loss, Z, 1e-5)
        scale = max(np.abs(numeric).max(), 1e-12)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-3 * scale)
        assert float(rel.max()) < 1e-5


class TestSweep:
    def test_singleton_grid_matches_fit(self):
        pair = random_pair(14)
        weights = LossWeights(1, 1, 1, 0)
        base = TrainConfig(k=2, weights=weights, learning_rate=10.0, max_steps=200, seed=3)
        points = sweep(pair, [weights], base)
        assert len(points) == 1
        trace = fit(pair, base)
        counts = top_k(trace.final_policy.P, 2)
        from feir.metrics import system_metrics

        sys = system_metrics(pair.U, pair.S, counts)
        assert points[0].utility == pytest.approx(sys.utility, abs=1e-12)
        assert points[0].status == "ok"

    def test_duplicate_weights_identical_points(self):
        pair = random_pair(15)
        w = LossWeights(1, 2, 1, 0)
        base = TrainConfig(k=2, weights=w, max_steps=100, seed=3)
        a, b = sweep(pair, [w, w], base)
        assert a == b

    def test_utility_anchor_dominates_utility_axis(self):
        pair = random_pair(16)
        base = TrainConfig(k=2, weights=LossWeights(0, 0, 1, 0), learning_rate=10.0,
                           max_steps=1000, seed=0)
        grid = [LossWeights(0, 0, 1, 0), LossWeights(1, 1, 1, 0), LossWeights(3, 3, 1, 0)]
        points = sweep(pair, grid, base)
        anchor = points[0]
        assert all(anchor.utility_norm >= p.utility_norm - 1e-12 for p in points)

    def test_failures_recorded_not_raised(self, monkeypatch):
        pair = random_pair(17)
        base = TrainConfig(k=2, weights=LossWeights(1, 1, 1, 0), max_steps=10, seed=0)
        real_fit = optim.fit

        def flaky_fit(scores, config):
            if config.weights.w1 == 3.0:
                raise TrainingDiverged("synthetic failure")
            return real_fit(scores, config)

        monkeypatch.setattr(optim, "fit", flaky_fit)
        points = sweep(pair, [LossWeights(1, 1, 1, 0), LossWeights(3, 1, 1, 0)], base)
        assert points[0].status == "ok"
        assert points[1].status.startswith("error:")
        assert points[1].utility is None

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            sweep(random_pair(18), [], TrainConfig(k=1, weights=LossWeights(1, 1, 1)))


def test_default_weight_grid_shape():
    grid = default_weight_grid()
    assert len(grid) == 36
    assert all(w.w3 == 1.0 and w.w4 == 0.0 for w in grid)
    assert any(w.w1 == 0.0 and w.w2 == 0.0 for w in grid)


def test_coarse_search_returns_usable_rate():
    pair = random_pair(19)
    cfg = TrainConfig(k=2, weights=LossWeights(1, 1, 1, 0), max_steps=50, seed=0)
    lr = coarse_search_learning_rate(pair, cfg, candidates=(0.1, 1.0, 10.0), probe_steps=20)
    assert lr in (0.1, 1.0, 10.0)
