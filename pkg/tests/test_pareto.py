import io

import numpy as np
import pytest

from channelgames.pareto import (
    ParetoWeights,
    frontier_sweep,
    pareto_kkt_residuals,
    pareto_solve,
    simplex_grid,
    sweep_to_csv,
    two_user_closed_form,
    weight_map_gamma_to_r,
    weight_map_r_to_gamma,
)
from channelgames.rates import BroadcastGame, CovarianceProfile, MultipleAccessGame
from channelgames.solver import solve_noe

from conftest import make_adbc, make_mac, ordered_weights


def stationary_q1(g1, g2):
    """Interior split of the scalar two-user channel with noises (1, 3)."""
    return (g2 - 3.0 * g1) / (g1 - g2)


class TestParetoSolve:
    def test_reference_frontier_point(self, adbc2):
        game = BroadcastGame(adbc2)
        profile, rates = pareto_solve(game, (0.41, 0.59))
        assert profile[0][0, 0] == pytest.approx(stationary_q1(0.41, 0.59), abs=1e-6)
        assert rates[0] == pytest.approx(1.5, abs=0.02)
        assert rates[1] == pytest.approx(0.7, abs=0.02)

    @pytest.mark.parametrize("g1", [11.0 / 24.0, 0.6, 0.8, 1.0])
    def test_corner_regime(self, adbc2, g1):
        game = BroadcastGame(adbc2)
        with pytest.warns(UserWarning) if g1 > 0.5 else _nullcontext():
            profile, rates = pareto_solve(game, (g1, 1.0 - g1))
        assert profile[0][0, 0] == pytest.approx(10.0, abs=1e-6)
        assert profile[1][0, 0] == pytest.approx(0.0, abs=1e-6)
        assert rates[0] == pytest.approx(np.log(11.0), abs=1e-6)
        assert rates[1] == pytest.approx(0.0, abs=1e-6)

    def test_interior_split(self, adbc2):
        game = BroadcastGame(adbc2)
        profile, rates = pareto_solve(game, (0.40, 0.60))
        assert profile[0][0, 0] == pytest.approx(3.0, abs=1e-6)
        assert rates[0] == pytest.approx(np.log(4.0), abs=1e-7)
        assert rates[1] == pytest.approx(np.log(13.0 / 6.0), abs=1e-7)

    def test_kkt_residuals_small(self, adbc2):
        game = BroadcastGame(adbc2)
        gamma = (0.41, 0.59)
        profile, _ = pareto_solve(game, gamma)
        res = pareto_kkt_residuals(game, gamma, profile)
        assert res["psd_residual"] <= 1e-6
        assert res["slackness_residual"] <= 1e-6
        assert res["power_residual"] <= 1e-6

    def test_matrix_adbc_kkt(self):
        rng = np.random.default_rng(0)
        ch = make_adbc(rng, num_users=3, dim=2)
        game = BroadcastGame(ch)
        gamma = ParetoWeights.normalize([1.0, 2.0, 3.0])  # nondecreasing along order
        profile, _ = pareto_solve(game, gamma)
        res = pareto_kkt_residuals(game, gamma, profile)
        assert res["psd_residual"] <= 1e-6
        assert res["slackness_residual"] <= 1e-5
        assert res["power_residual"] <= 1e-6

    def test_mac_weighted_sum(self):
        rng = np.random.default_rng(1)
        ch = make_mac(rng, num_users=2, n_r=2, tx_dims=[2, 2], power=6.0)
        game = MultipleAccessGame(ch)
        gamma = (0.7, 0.3)  # nonincreasing along order: concave
        profile, rates = pareto_solve(game, gamma)
        assert profile.total_power == pytest.approx(6.0, abs=1e-7)
        res = pareto_kkt_residuals(game, gamma, profile)
        assert res["psd_residual"] <= 1e-6


class _nullcontext:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False


class TestWeightedObjectiveGradients:
    """The sweep objective carries cross-interference terms; anchor its
    gradient against central finite differences, independently of the
    per-user gradient code."""

    @staticmethod
    def _fd(fun, mats, k, step=1e-6):
        dim = mats[k].shape[0]
        out = np.zeros((dim, dim))
        for i in range(dim):
            for j in range(i, dim):
                e = np.zeros((dim, dim))
                e[i, j] = e[j, i] = 1.0
                plus = [m.copy() for m in mats]
                minus = [m.copy() for m in mats]
                plus[k] = plus[k] + step * e
                minus[k] = minus[k] - step * e
                d = (fun(plus)[0] - fun(minus)[0]) / (2 * step)
                out[i, j] = out[j, i] = d / (2.0 if i != j else 1.0)
        return out

    def test_downlink_objective(self):
        from channelgames.pareto import _bc_objective
        from conftest import make_bc, feasible_profile

        rng = np.random.default_rng(41)
        ch = make_bc(rng, num_users=3, n_t=2, colored=True)
        game = BroadcastGame(ch, order=(2, 0, 1))
        gamma = np.array([0.2, 0.5, 0.3])
        fun = _bc_objective(game, gamma)
        mats = list(feasible_profile(rng, game.slot_dims, 6.0).matrices)
        _, grads = fun(mats)
        for k in range(3):
            ref = self._fd(fun, mats, k)
            assert np.linalg.norm(grads[k] - ref) <= 1e-6 * (1 + np.linalg.norm(ref))

    def test_uplink_objective(self):
        from channelgames.pareto import _mac_objective
        from conftest import make_mac, feasible_profile

        rng = np.random.default_rng(42)
        ch = make_mac(rng, num_users=3, n_r=2, tx_dims=[1, 2, 2])
        game = MultipleAccessGame(ch, order=(1, 2, 0))
        gamma = np.array([0.5, 0.3, 0.2])
        fun = _mac_objective(game, gamma)
        mats = list(feasible_profile(rng, game.slot_dims, 6.0).matrices)
        _, grads = fun(mats)
        for k in range(3):
            ref = self._fd(fun, mats, k)
            assert np.linalg.norm(grads[k] - ref) <= 1e-6 * (1 + np.linalg.norm(ref))


class TestWeightMaps:
    def test_gamma_to_r_reference(self, adbc2):
        game = BroadcastGame(adbc2)
        gamma = (0.41, 0.59)
        profile, _ = pareto_solve(game, gamma)
        result = weight_map_gamma_to_r(game, gamma, profile)
        assert result.status == "ok"
        assert result.weights_r[1] == pytest.approx(1.0)
        assert result.weights_r[0] == pytest.approx(0.35, abs=0.01)
        assert result.eta == pytest.approx(0.59, abs=1e-9)

    def test_gamma_to_r_hand_value(self, adbc2):
        game = BroadcastGame(adbc2)
        profile = CovarianceProfile([[[3.0]], [[7.0]]])
        result = weight_map_gamma_to_r(game, (0.40, 0.60), profile)
        assert result.weights_r[0] == pytest.approx(
            2.0 / 3.0 - (4.0 * 7.0) / (13.0 * 6.0), abs=1e-9
        )

    def test_single_user_maps(self):
        rng = np.random.default_rng(2)
        ch = make_adbc(rng, num_users=1, dim=2, power=4.0)
        game = BroadcastGame(ch)
        profile, _ = pareto_solve(game, (1.0,))
        fwd = weight_map_gamma_to_r(game, (1.0,), profile)
        assert fwd.weights_r[0] == pytest.approx(1.0, abs=1e-9)
        assert fwd.eta == pytest.approx(1.0, abs=1e-9)
        back = weight_map_r_to_gamma(game, (1.0,), profile)
        assert back.weights_gamma[0] == pytest.approx(1.0, abs=1e-12)

    def test_r_to_gamma_reference(self, adbc2):
        game = BroadcastGame(adbc2)
        profile, _ = solve_noe(game, (0.35, 1.0))
        result = weight_map_r_to_gamma(game, (0.35, 1.0), profile)
        assert result.weights_gamma[0] == pytest.approx(0.41, abs=0.01)
        assert result.weights_gamma.sum() == pytest.approx(1.0, abs=1e-12)

    def test_round_trip_through_solvers(self):
        from channelgames.channel import BCChannel, ColoredNoise

        ch = BCChannel(
            [np.eye(1)] * 3,
            ColoredNoise([np.eye(1), 2.0 * np.eye(1), 3.0 * np.eye(1)]),
            8.0,
        )
        game = BroadcastGame(ch)
        gamma = ParetoWeights((0.25, 0.35, 0.40))  # all users carry power here
        profile, _ = pareto_solve(game, gamma)
        assert all(float(np.trace(m)) > 1e-6 for m in profile)
        fwd = weight_map_gamma_to_r(game, gamma, profile)
        assert fwd.status == "ok"
        r = fwd.weights_r
        noe_profile, cert = solve_noe(game, r)
        assert cert.ok(1e-6)
        back = weight_map_r_to_gamma(game, r, noe_profile)
        np.testing.assert_allclose(back.weights_gamma, gamma.as_array(), atol=1e-4)

    def test_degenerate_corner(self, adbc2):
        game = BroadcastGame(adbc2)
        profile = CovarianceProfile([[[10.0]], [[0.0]]])
        result = weight_map_gamma_to_r(game, (0.6, 0.4), profile)
        assert result.status == "degenerate game"
        assert result.weights_r[0] == 1.0
        assert np.isnan(result.weights_r[1])
        back = weight_map_r_to_gamma(game, (1.0, 1.0), profile)
        assert back.status == "degenerate game"
        np.testing.assert_allclose(back.weights_gamma, [1.0, 0.0])

    def test_reduced_game_mapping(self):
        """Three users, middle one inactive: map on the reduced game."""
        rng = np.random.default_rng(4)
        ch = make_adbc(rng, num_users=3, dim=1, power=6.0)
        game = BroadcastGame(ch)
        profile, _ = solve_noe(game, (1.5, 1.0, 1.0))
        traces = [float(np.trace(m)) for m in profile]
        result = weight_map_r_to_gamma(game, (1.5, 1.0, 1.0), profile)
        active = [t > 1e-8 for t in traces]
        np.testing.assert_array_equal(result.active_mask, active)
        assert result.weights_gamma.sum() == pytest.approx(1.0, abs=1e-10)
        assert all(result.weights_gamma[k] == 0.0 for k in range(3) if not active[k])

    def test_a_matrix_structure(self):
        rng = np.random.default_rng(5)
        ch = make_adbc(rng, num_users=3, dim=2, power=9.0)
        game = BroadcastGame(ch)
        gamma = ParetoWeights.normalize([1.0, 1.5, 2.5])
        profile, _ = pareto_solve(game, gamma)
        result = weight_map_gamma_to_r(game, gamma, profile)
        a = result.a_matrix
        k = a.shape[0]
        covs = [ch.noise_covariance(i) for i in range(3)]
        for j in range(k):
            assert a[j, j] > 0.0
            for l in range(k):
                if l < j:
                    assert a[j, l] == 0.0
                elif l > j:
                    assert a[j, l] <= 1e-12
        # entrywise match against the aligned-channel closed form
        for j in range(k):
            for l in range(j, k):
                s_l = sum(profile[i] for i in range(l + 1))
                inv_full = np.linalg.inv(covs[l] + s_l)
                if l == j:
                    expected = float(np.sum(inv_full * profile[j]))
                else:
                    inv_part = np.linalg.inv(covs[l] + s_l - profile[l])
                    expected = float(np.sum((inv_full - inv_part) * profile[j]))
                assert a[j, l] == pytest.approx(expected, abs=1e-9)

    def test_closed_form_examples(self):
        q1 = np.exp(1.5) - 1.0
        r_ratio = two_user_closed_form(q1, 10.0 - q1, 1.0, 3.0, 10.0, 0.41 / 0.59)
        assert r_ratio == pytest.approx(0.348, abs=1e-3)
        # no power on the weaker user: the two ratios coincide
        assert two_user_closed_form(10.0, 0.0, 1.0, 3.0, 10.0, 0.9) == pytest.approx(0.9)
        assert two_user_closed_form(10.0, 0.0, 1.0, 3.0, 10.0, 0.9, "r_to_gamma") == pytest.approx(0.9)

    def test_closed_form_matches_general_map(self, adbc2):
        game = BroadcastGame(adbc2)
        rng = np.random.default_rng(6)
        for _ in range(10):
            q1 = float(rng.uniform(0.5, 9.5))
            profile = CovarianceProfile([[[q1]], [[10.0 - q1]]])
            gamma_ratio = (q1 + 1.0) / (q1 + 3.0)
            gamma = ParetoWeights.normalize([gamma_ratio, 1.0])
            result = weight_map_gamma_to_r(game, gamma, profile)
            expected = two_user_closed_form(q1, 10.0 - q1, 1.0, 3.0, 10.0, gamma_ratio)
            assert result.weights_r[0] == pytest.approx(expected, abs=1e-9)

    def test_closed_form_requires_saturation(self):
        with pytest.raises(ValueError, match="saturated"):
            two_user_closed_form(1.0, 2.0, 1.0, 3.0, 10.0, 0.5)


class TestEquilibriaAreParetoOptimal:
    def test_mapped_gamma_supports_equilibrium(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            ch = make_adbc(rng, num_users=2 + trial % 2, dim=1 + trial % 2, power=8.0)
            game = BroadcastGame(ch)
            r = ordered_weights(rng, game.num_users)
            profile, cert = solve_noe(game, r)
            assert cert.ok(1e-6)
            result = weight_map_r_to_gamma(game, r, profile)
            gamma = np.maximum(result.weights_gamma, 0.0)
            gamma = gamma / gamma.sum()
            rates_noe = np.asarray(game.rates(profile).values)
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # corner gammas go multi-start
                _, rates_opt = pareto_solve(game, gamma)
            value_noe = float(gamma @ rates_noe)
            value_opt = float(gamma @ np.asarray(rates_opt.values))
            assert value_noe >= value_opt - 1e-6


class TestSweep:
    def test_endpoints_and_shape(self, adbc2):
        game = BroadcastGame(adbc2)
        sweep = frontier_sweep(game, grid=21)
        assert len(sweep.rows) == 21
        assert sweep.num_failed == 0
        rates = np.array([row.rates.values for row in sweep.rows])
        gammas = np.array([row.gamma for row in sweep.rows])
        # grid runs from (1,0) to (0,1); the strong user's rate decreases
        order = np.argsort(-gammas[:, 0])
        r1 = rates[order, 0]
        r2 = rates[order, 1]
        assert np.all(np.diff(r1) <= 1e-9)
        assert np.all(np.diff(r2) >= -1e-9)
        # single-user endpoints
        by_gamma = {tuple(np.round(g, 6)): r for g, r in zip(gammas, rates)}
        np.testing.assert_allclose(by_gamma[(1.0, 0.0)], [np.log(11.0), 0.0], atol=1e-6)
        np.testing.assert_allclose(by_gamma[(0.0, 1.0)], [0.0, np.log(13.0 / 3.0)], atol=1e-6)

    def test_sum_rate_bounded_by_max(self, adbc2):
        game = BroadcastGame(adbc2)
        sweep = frontier_sweep(game, grid=15)
        sums = [row.rates.sum() for row in sweep.rows]
        # the equal-weight point achieves the maximum sum rate
        profile, rates = pareto_solve(game, (0.5, 0.5))
        assert max(sums) <= rates.sum() + 1e-8

    def test_hundred_one_point_frontier(self, adbc2):
        """Full-resolution frontier: the marked point sits on the 0.01 grid."""
        game = BroadcastGame(adbc2)
        sweep = frontier_sweep(game, grid=101)
        assert len(sweep.rows) == 101 and sweep.num_failed == 0
        marked = next(
            row for row in sweep.rows if abs(row.gamma[0] - 0.41) < 1e-12
        )
        assert marked.rates[0] == pytest.approx(1.5, abs=0.02)
        assert marked.rates[1] == pytest.approx(0.7, abs=0.02)
        assert marked.weights_r[0] == pytest.approx(0.35, abs=0.01)
        # frontier shape: strong-user rate spans [0, ln 11] monotonically
        rates = np.array([row.rates.values for row in sweep.rows])
        assert rates[:, 0].max() == pytest.approx(np.log(11.0), abs=1e-6)
        assert rates[:, 1].max() == pytest.approx(np.log(13.0 / 3.0), abs=1e-6)

    def test_csv_format(self, adbc2):
        game = BroadcastGame(adbc2)
        sweep = frontier_sweep(game, grid=5)
        buf = io.StringIO()
        sweep_to_csv(sweep, buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "gamma_1,gamma_2,rate_1,rate_2,r_1,r_2,eta,active_mask"
        assert len(lines) == 6

    def test_parallel_matches_serial(self, adbc2):
        game = BroadcastGame(adbc2)
        serial = frontier_sweep(game, grid=7, jobs=1)
        parallel = frontier_sweep(game, grid=7, jobs=2)
        for a, b in zip(serial.rows, parallel.rows):
            np.testing.assert_allclose(a.rates.values, b.rates.values, atol=1e-12)

    def test_simplex_grid_three_users(self):
        pts = simplex_grid(3, 5)
        assert all(abs(sum(p) - 1.0) < 1e-12 for p in pts)
        assert len(pts) == 15  # compositions of 4 into 3 parts


class TestParetoWeights:
    def test_validation(self):
        with pytest.raises(ValueError):
            ParetoWeights([0.5, 0.6])
        with pytest.raises(ValueError):
            ParetoWeights([-0.1, 1.1])
        w = ParetoWeights.normalize([2.0, 2.0])
        assert w.values == (0.5, 0.5)
