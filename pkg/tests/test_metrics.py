import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from feir.core import top_k
from feir.metrics import (
    competition_metrics,
    gini_index,
    inferiority_by_user,
    metrics_record,
    normalized_metrics,
    system_metrics,
    user_envy,
    user_inferiority,
    user_utility,
)

INTRO_U = np.array([[0.2, 0.6, 0.9], [0.1, 0.8, 0.7]])
INTRO_S = np.array([[0.3, 0.9, 0.4], [0.3, 0.8, 0.8]])
SECOND_TOY = np.array([[0.1, 0.9, 0.8], [0.4, 0.6, 0.5]])


class TestUserLevel:
    def test_utility_single_item(self):
        C = np.array([[0, 0, 1], [0, 0, 1]])
        assert user_utility(0, INTRO_U, C) == pytest.approx(0.9, abs=1e-12)

    def test_utility_repeated_item_is_linear(self):
        C = np.array([[0, 3, 0], [0, 0, 3]])
        assert user_utility(0, INTRO_U, C) == pytest.approx(3 * 0.6, abs=1e-12)

    def test_utility_two_items(self):
        C = np.array([[0, 1, 1], [0, 1, 1]])
        assert user_utility(1, INTRO_U, C) == pytest.approx(1.5, abs=1e-12)

    def test_envy_split_recommendation(self):
        C = np.array([[1, 0, 0], [0, 1, 0]])
        assert user_envy(0, 1, INTRO_U, C) == pytest.approx(0.4, abs=1e-12)
        assert user_envy(1, 0, INTRO_U, C) == pytest.approx(-0.7, abs=1e-12)

    def test_envy_identical_lists(self):
        C = np.array([[1, 0, 1], [1, 0, 1]])
        assert user_envy(0, 1, INTRO_U, C) == 0.0

    def test_envy_same_user_rejected(self):
        with pytest.raises(ValueError):
            user_envy(1, 1, INTRO_U, np.eye(2, 3, dtype=int))

    def test_inferiority_shared_triangle(self):
        C = np.array([[0, 0, 1], [0, 0, 1]])
        assert user_inferiority(0, 1, INTRO_S, C) == pytest.approx(0.4, abs=1e-12)

    def test_inferiority_disjoint_lists(self):
        C = np.array([[1, 0, 0], [0, 1, 0]])
        assert user_inferiority(0, 1, INTRO_S, C) == 0.0

    def test_inferiority_second_toy(self):
        C = np.array([[0, 1, 0], [0, 1, 0]])
        assert user_inferiority(1, 0, SECOND_TOY, C) == pytest.approx(0.3, abs=1e-12)

    def test_inferiority_counts_item_once(self):
        C = np.array([[0, 2, 0], [0, 3, 0]])
        assert user_inferiority(1, 0, SECOND_TOY, C) == pytest.approx(0.3, abs=1e-12)


class TestSystemLevel:
    def test_both_triangle(self):
        C = np.array([[0, 0, 1], [0, 0, 1]])
        sys = system_metrics(INTRO_U, INTRO_S, C)
        assert sys.envy == 0.0
        assert sys.inferiority == pytest.approx(0.2, abs=1e-12)
        assert sys.overall_fairness == pytest.approx(0.2, abs=1e-12)

    def test_both_circle(self):
        C = np.array([[1, 0, 0], [1, 0, 0]])
        sys = system_metrics(INTRO_U, INTRO_S, C)
        assert sys.envy == 0.0 and sys.inferiority == 0.0
        assert sys.utility == pytest.approx(0.15, abs=1e-12)

    def test_single_user_has_no_pairs(self):
        sys = system_metrics(INTRO_U[:1], INTRO_S[:1], np.array([[1, 0, 0]]))
        assert sys.envy == 0.0 and sys.inferiority == 0.0

    def test_pair_normalizer_flag(self):
        C = np.array([[0, 0, 1], [0, 0, 1]])
        users = system_metrics(INTRO_U, INTRO_S, C)
        pairs = system_metrics(INTRO_U, INTRO_S, C, pair_normalizer="pairs")
        assert pairs.inferiority == pytest.approx(users.inferiority * 2 / 2, abs=1e-12)
        m = 2
        assert pairs.inferiority * m * (m - 1) == pytest.approx(users.inferiority * m, abs=1e-12)

    @given(st.integers(0, 10**6), st.integers(2, 6), st.integers(2, 10), st.integers(1, 3))
    def test_naive_recommendation_is_envy_free(self, seed, m, n, k):
        rng = np.random.default_rng(seed)
        U = rng.uniform(0.01, 0.99, size=(m, max(n, k)))
        sys = system_metrics(U, U, top_k(U, k))
        assert sys.envy == 0.0

    @given(st.integers(0, 10**6))
    def test_inferiority_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        S = rng.uniform(0.01, 0.99, size=(4, 6))
        C = top_k(rng.uniform(size=(4, 6)), 2)
        sys = system_metrics(S, S, C)
        assert sys.inferiority >= 0.0

    def test_disjoint_lists_have_zero_inferiority(self):
        C = np.eye(3, 5, dtype=int)
        rng = np.random.default_rng(1)
        S = rng.uniform(0.01, 0.99, (3, 5))
        assert system_metrics(S, S, C).inferiority == 0.0

    def test_envy_antisymmetric_for_equal_utility_rows(self):
        U = np.tile(np.array([[0.2, 0.5, 0.8, 0.4]]), (2, 1))
        C = np.array([[1, 1, 0, 0], [0, 0, 1, 1]])
        assert user_envy(0, 1, U, C) == pytest.approx(-user_envy(1, 0, U, C), abs=1e-12)

    def test_matches_bruteforce_on_small_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            m, n = rng.integers(2, 4), rng.integers(2, 5)
            k = int(rng.integers(1, min(n, 2) + 1))
            U = rng.uniform(0.01, 0.99, (m, n))
            S = rng.uniform(0.01, 0.99, (m, n))
            C = top_k(rng.uniform(size=(m, n)), k).C
            sys = system_metrics(U, S, C)
            u_ref, e_ref, f_ref = oracles.system_values(U.tolist(), S.tolist(), C.tolist())
            assert sys.utility == pytest.approx(u_ref, abs=1e-12)
            assert sys.envy == pytest.approx(e_ref, abs=1e-12)
            assert sys.inferiority == pytest.approx(f_ref, abs=1e-12)

    def test_inferiority_by_user_matches_system(self):
        rng = np.random.default_rng(3)
        S = rng.uniform(0.01, 0.99, (5, 8))
        C = top_k(rng.uniform(size=(5, 8)), 3)
        per_user = inferiority_by_user(S, C)
        assert per_user.sum() / 5 == pytest.approx(system_metrics(S, S, C).inferiority, abs=1e-12)


class TestNormalized:
    def test_identity(self):
        sys = system_metrics(INTRO_U, INTRO_S, np.array([[0, 0, 1], [0, 0, 1]]))
        norm = normalized_metrics(sys, sys)
        assert norm.utility_norm == pytest.approx(1.0)
        assert norm.inferiority_norm == pytest.approx(1.0)
        assert norm.overall_norm == pytest.approx(1.0)

    def test_ratio(self):
        a = system_metrics(INTRO_U, INTRO_S, np.array([[1, 0, 0], [1, 0, 0]]))
        b = system_metrics(INTRO_U, INTRO_S, np.array([[0, 0, 1], [0, 1, 0]]))
        norm = normalized_metrics(a, b)
        assert norm.utility_norm == pytest.approx(a.utility / b.utility)

    def test_zero_denominator_reported_absent(self):
        # disjoint naive lists: zero inferiority and zero overall fairness
        U = np.array([[0.9, 0.1, 0.2], [0.1, 0.9, 0.2]])
        naive_sys = system_metrics(U, U, top_k(U, 1))
        assert naive_sys.inferiority == 0.0
        norm = normalized_metrics(naive_sys, naive_sys)
        assert norm.inferiority_norm is None
        assert norm.overall_norm is None
        assert norm.envy == 0.0


class TestCompetition:
    def test_two_users_one_shared_item(self):
        S = np.array([[0.4, 0.5], [0.8, 0.5]])
        C = np.array([[1, 0], [1, 0]])
        comp = competition_metrics(S, C, 1)
        assert comp.mean_rank_per_user.tolist() == [1.0, 0.0]
        assert comp.mean_gap_per_user.tolist() == pytest.approx([0.4, 0.0], abs=1e-12)

    def test_three_way_competition(self):
        S = np.array([[0.1], [0.5], [0.9]])
        C = np.ones((3, 1), dtype=int)
        comp = competition_metrics(S, C, 1)
        assert comp.mean_rank_per_user.tolist() == [2.0, 1.0, 0.0]
        assert comp.mean_gap_per_user[0] == pytest.approx(0.6, abs=1e-12)

    def test_disjoint_items_no_competition(self):
        S = np.random.default_rng(0).uniform(0.01, 0.99, (3, 6))
        C = np.eye(3, 6, dtype=int) + np.eye(3, 6, 3, dtype=int)
        comp = competition_metrics(S, C, 2)
        assert comp.mean_rank == 0.0 and comp.mean_gap == 0.0

    def test_requires_binary(self):
        with pytest.raises(ValueError):
            competition_metrics(INTRO_S, np.array([[2, 0, 0], [0, 2, 0]]), 2)

    def test_bounds_and_bruteforce(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m, n, k = 4, 5, 2
            S = rng.uniform(0.01, 0.99, (m, n))
            C = top_k(rng.uniform(size=(m, n)), k).C
            comp = competition_metrics(S, C, k)
            ranks_ref, gaps_ref = oracles.rank_and_gap(S.tolist(), C.tolist(), k)
            np.testing.assert_allclose(comp.mean_rank_per_user, ranks_ref, atol=1e-12)
            np.testing.assert_allclose(comp.mean_gap_per_user, gaps_ref, atol=1e-12)
            assert (comp.mean_rank_per_user <= m - 1).all()
            assert (comp.mean_gap_per_user <= S.max()).all()


class TestGini:
    def test_uniform_exposure(self):
        C = np.ones((4, 4), dtype=int)
        assert gini_index(C) == pytest.approx(0.0, abs=1e-12)

    def test_single_spike(self):
        C = np.zeros((3, 5), dtype=int)
        C[:, 0] = 1
        assert gini_index(C) == pytest.approx(4 / 5, abs=1e-12)

    def test_known_exposure_vector(self):
        C = np.array([[1, 1, 0, 0], [1, 0, 1, 0]])
        # exposures (2, 1, 1, 0)
        assert gini_index(C) == pytest.approx(0.375, abs=1e-12)
        assert gini_index(C) == pytest.approx(oracles.gini(C.tolist()), abs=1e-12)

    def test_all_zero_exposure(self):
        assert gini_index(np.zeros((2, 3), dtype=int)) == 0.0

    @given(st.integers(0, 10**6))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        C = top_k(rng.uniform(size=(5, 7)), 2).C
        perm = rng.permutation(7)
        assert gini_index(C[:, perm]) == pytest.approx(gini_index(C), abs=1e-12)


def test_metrics_record_shape():
    C = top_k(INTRO_U, 1)
    sys = system_metrics(INTRO_U, INTRO_S, C)
    comp = competition_metrics(INTRO_S, C, 1)
    record = metrics_record(sys, comp, gini_index(C))
    assert set(record) == {
        "utility", "envy", "inferiority", "overall_fairness",
        "mean_rank", "mean_gap", "gini", "k",
    }
    assert record["k"] == 1
