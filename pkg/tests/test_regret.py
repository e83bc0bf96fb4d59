import numpy as np
import pytest

from driftlearn import regret
from driftlearn.streams import ComparatorPath


def random_quadratic_ledger(rng, T, d, beta, lam=None, with_lambdas=False):
    Z = rng.standard_normal((T, d))
    y = rng.standard_normal(T)
    play = rng.random(T)
    lambdas = rng.random(T) * 0.1 if with_lambdas else None
    return regret.quadratic_loss_ledger(Z, y, play, beta=beta, lam=lam, lambdas=lambdas)


class TestDynamicRegret:
    def test_self_comparator_gives_zero(self):
        rng = np.random.default_rng(0)
        ledger = random_quadratic_ledger(rng, 6, 2, beta=0.7)
        path = ComparatorPath(rng.standard_normal((6, 2)))
        ledger.losses_at_play = np.array(
            [ledger.loss_eval(t, path[t - 1]) for t in range(1, 7)]
        )
        assert regret.dynamic_regret(ledger, path) == 0.0

    def test_single_round(self):
        ledger = regret.RegretLedger(
            losses_at_play=np.array([3.0]), loss_eval=lambda t, u: 1.0, beta=1.0
        )
        assert regret.dynamic_regret(ledger, ComparatorPath(np.zeros((1, 1)))) == 2.0

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(1)
        ledger = random_quadratic_ledger(rng, 5, 3, beta=0.9)
        path = ComparatorPath(rng.standard_normal((5, 3)))
        direct = sum(
            ledger.losses_at_play[t - 1] - ledger.loss_eval(t, path[t - 1])
            for t in range(1, 6)
        )
        assert abs(regret.dynamic_regret(ledger, path) - direct) <= 1e-12

    def test_length_mismatch_rejected(self):
        rng = np.random.default_rng(2)
        ledger = random_quadratic_ledger(rng, 5, 2, beta=1.0)
        with pytest.raises(ValueError):
            regret.dynamic_regret(ledger, ComparatorPath(np.zeros((4, 2))))


class TestDiscountedRegret:
    def test_beta_one_reduces_to_static_prefix(self):
        rng = np.random.default_rng(3)
        ledger = random_quadratic_ledger(rng, 8, 2, beta=1.0)
        u = rng.standard_normal(2)
        for t in (1, 4, 8):
            static = sum(
                ledger.losses_at_play[s - 1] - ledger.loss_eval(s, u)
                for s in range(1, t + 1)
            )
            assert abs(regret.discounted_regret(ledger, t, u) - static) <= 1e-12

    def test_single_term(self):
        rng = np.random.default_rng(4)
        ledger = random_quadratic_ledger(rng, 3, 2, beta=0.4)
        u = np.zeros(2)
        expected = ledger.losses_at_play[0] - ledger.loss_eval(1, u)
        assert abs(regret.discounted_regret(ledger, 1, u) - expected) <= 1e-15

    def test_frozen_half_discount_example(self):
        # plays [1, 2, 4] against a zero-loss comparator: 0.25 + 1 + 4
        ledger = regret.RegretLedger(
            losses_at_play=np.array([1.0, 2.0, 4.0]),
            loss_eval=lambda t, u: 0.0,
            beta=0.5,
        )
        assert abs(regret.discounted_regret(ledger, 3, np.zeros(1)) - 5.25) <= 1e-12

    def test_round_out_of_range_rejected(self):
        rng = np.random.default_rng(5)
        ledger = random_quadratic_ledger(rng, 3, 1, beta=0.5)
        with pytest.raises(ValueError):
            regret.discounted_regret(ledger, 4, np.zeros(1))


class TestConversionIdentity:
    def test_single_round_any_beta(self):
        rng = np.random.default_rng(6)
        for beta in (0.1, 0.5, 1.0):
            ledger = random_quadratic_ledger(rng, 1, 2, beta=beta)
            path = ComparatorPath(rng.standard_normal((1, 2)))
            assert regret.d2d_identity_gap(ledger, path) <= 1e-14

    @pytest.mark.parametrize("beta,T", [(1.0, 8), (0.3, 50)])
    def test_random_instances(self, beta, T):
        rng = np.random.default_rng(7)
        ledger = random_quadratic_ledger(rng, T, 3, beta=beta)
        path = ComparatorPath(rng.standard_normal((T, 3)))
        lhs = regret.dynamic_regret(ledger, path)
        assert regret.d2d_identity_gap(ledger, path) <= 1e-9 * (1.0 + abs(lhs))

    def test_fuzz(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            T = int(rng.integers(1, 60))
            d = int(rng.integers(1, 4))
            beta = float(rng.choice([0.1, 0.5, 0.9, 1.0]))
            ledger = random_quadratic_ledger(rng, T, d, beta=beta)
            path = ComparatorPath(rng.standard_normal((T, d)))
            lhs = regret.dynamic_regret(ledger, path)
            assert regret.d2d_identity_gap(ledger, path) <= 1e-9 * (1.0 + abs(lhs))


class TestPathVariation:
    def test_constant_path_has_no_variation(self):
        rng = np.random.default_rng(9)
        ledger = random_quadratic_ledger(rng, 10, 2, beta=0.8, lam=1.0)
        path = ComparatorPath.constant(rng.standard_normal(2), 10)
        assert regret.path_variation(ledger, path, 0.5).value == 0.0

    def test_unit_jump_with_unit_weights_sums_to_one(self):
        # f_0(u) = f_1(u) = u[0]; jump from 0 to 1 gives [diff]_+ = 1 at both
        # s = 0 and s = 1, and the normalized weights sum to 1.
        ledger = regret.RegretLedger(
            losses_at_play=np.zeros(2),
            loss_eval=lambda t, u: float(u[0]),
            beta=0.5,
            phi_eval=lambda t, u: float(u[0]),
        )
        path = ComparatorPath(np.array([[0.0], [1.0]]))
        pv = regret.path_variation(ledger, path, 0.5)
        assert abs(pv.value - 1.0) <= 1e-15
        assert pv.includes_f0

    def test_lipschitz_upper_bound(self):
        # linear losses f_s(u) = g_s . u are G-Lipschitz with G = max |g_s|
        rng = np.random.default_rng(10)
        T, d = 12, 3
        Gmat = rng.standard_normal((T, d))
        ledger = regret.RegretLedger(
            losses_at_play=np.zeros(T),
            loss_eval=lambda t, u: float(Gmat[t - 1] @ u),
            beta=0.9,
            phi_eval=lambda t, u: 0.0,
        )
        U = rng.standard_normal((T, d))
        path = ComparatorPath(U)
        G = float(np.linalg.norm(Gmat, axis=1).max())
        hops = float(np.linalg.norm(np.diff(U, axis=0), axis=1).sum())
        for gamma in (0.3, 0.8, 0.99):
            pv = regret.path_variation(ledger, path, gamma)
            assert pv.value <= G * hops + 1e-9

    def test_nonnegative_and_grows_with_jump_size(self):
        # f_s(u) = u^2/2 around 0; a bigger jump away from 0 costs more
        ledger = regret.RegretLedger(
            losses_at_play=np.zeros(5),
            loss_eval=lambda t, u: 0.5 * float(u @ u),
            beta=0.5,
        )
        values = []
        for jump in (0.0, 1.0, 2.0):
            U = np.zeros((5, 1))
            U[3:] = jump
            values.append(regret.path_variation(ledger, ComparatorPath(U), 0.5).value)
        assert values[0] == 0.0
        assert values[0] <= values[1] <= values[2]

    def test_gamma_out_of_range_rejected(self):
        rng = np.random.default_rng(11)
        ledger = random_quadratic_ledger(rng, 4, 1, beta=0.5)
        with pytest.raises(ValueError):
            regret.path_variation(ledger, ComparatorPath(np.zeros((4, 1))), 1.0)


class TestModularBound:
    def test_all_terms_vanish(self):
        rng = np.random.default_rng(12)
        T, d = 6, 2
        ledger = random_quadratic_ledger(rng, T, d, beta=0.7)
        ledger.phi_eval = lambda t, u: 0.0
        ledger.lambdas = np.zeros(T)
        path = ComparatorPath.constant(rng.standard_normal(d), T)
        assert regret.modular_bound_rhs(ledger, path) == 0.0

    def test_time_independent_phi_kills_drift_term(self):
        rng = np.random.default_rng(13)
        T = 8
        ledger = random_quadratic_ledger(rng, T, 2, beta=0.6, lam=0.5, with_lambdas=True)
        path = ComparatorPath(rng.standard_normal((T, 2)))
        rhs = regret.modular_bound_rhs(ledger, path)
        manual = (
            0.6 * ledger.phi_eval(1, path[0])
            + ledger.lambdas.sum()
            + regret.ft_difference_term(ledger, path)
        )
        assert rhs == pytest.approx(manual, abs=0.0)  # drift term is exactly 0

    def test_matches_slow_direct_summation(self):
        rng = np.random.default_rng(14)
        for T in (5, 40, 200):
            d = 3
            Z = rng.standard_normal((T, d))
            y = rng.standard_normal(T)
            play = rng.random(T)
            lambdas = rng.random(T) * 0.05
            beta, lam = 0.9, 0.8
            ledger = regret.quadratic_loss_ledger(Z, y, play, beta, lam, lambdas)
            path = ComparatorPath(rng.standard_normal((T, d)))

            def f(s, u):
                return 0.5 * float(Z[s - 1] @ u - y[s - 1]) ** 2

            def F(t, u):
                return beta**t * 0.5 * lam * float(u @ u) + sum(
                    beta ** (t - s) * f(s, u) for s in range(1, t + 1)
                )

            slow = beta * 0.5 * lam * float(path[0] @ path[0]) + lambdas.sum()
            slow += beta * sum(
                F(t, path[t]) - F(t, path[t - 1]) for t in range(1, T)
            )
            fast = regret.modular_bound_rhs(ledger, path)
            assert abs(fast - slow) <= 1e-8 * (1.0 + abs(slow))

    def test_missing_pieces_rejected(self):
        rng = np.random.default_rng(15)
        ledger = random_quadratic_ledger(rng, 4, 2, beta=0.5)
        path = ComparatorPath(np.zeros((4, 2)))
        with pytest.raises(ValueError):
            regret.modular_bound_rhs(ledger, path)


class TestPathLengthLemma:
    def _ledger(self, rng, T, d, lam=0.3):
        Z = rng.standard_normal((T, d))
        y = rng.standard_normal(T)
        return regret.quadratic_loss_ledger(Z, y, np.zeros(T), beta=0.5, lam=lam)

    def test_constant_path_holds(self):
        rng = np.random.default_rng(16)
        ledger = self._ledger(rng, 8, 2)
        path = ComparatorPath.constant(rng.standard_normal(2), 8)
        assert regret.check_path_length_lemma(ledger, path, 0.5, 0.5)

    @pytest.mark.parametrize("beta,gamma", [(0.6, 0.6), (0.2, 0.8)])
    def test_random_instances_hold(self, beta, gamma):
        rng = np.random.default_rng(17)
        for _ in range(30):
            T = int(rng.integers(2, 40))
            ledger = self._ledger(rng, T, 2)
            path = ComparatorPath(rng.standard_normal((T, 2)))
            assert regret.check_path_length_lemma(ledger, path, beta, gamma)

    def test_bad_ordering_rejected(self):
        rng = np.random.default_rng(18)
        ledger = self._ledger(rng, 4, 1)
        with pytest.raises(ValueError):
            regret.check_path_length_lemma(
                ledger, ComparatorPath(np.zeros((4, 1))), 0.9, 0.5
            )
