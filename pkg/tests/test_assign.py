import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invskill.assign import CostMatrix, build_cost_matrix, pair_demonstrations, solve_assignment, write_cost_csv
from invskill.core import Demonstration, Role, Trajectory
from invskill.errors import DimMismatch, InvalidCost, SizeMismatch


def brute_force(c):
    """Lexicographically first permutation among those of minimum cost."""
    n = len(c)
    best, best_perm = None, None
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for i, j in enumerate(perm):
            total += c[i][j]
        if best is None or total < best:
            best, best_perm = total, perm
    return best, best_perm


def state_demo(state, role, psi=0.1):
    tr = Trajectory([0.0, 1.0], [0.0, 1.0])
    state = np.atleast_1d(np.asarray(state, dtype=float))
    return Demonstration(tr, [psi], state, state, Role(role))


class TestCostMatrix:
    def test_scalar_states(self):
        fw = [state_demo(0.9, "forward"), state_demo(0.75, "forward")]
        inv = [state_demo(0.75, "inverse"), state_demo(0.9, "inverse")]
        c = build_cost_matrix(fw, inv).entries
        np.testing.assert_allclose(c, [[0.15, 0.0], [0.0, 0.15]], rtol=0, atol=1e-15)

    def test_zero_distance(self):
        c = build_cost_matrix([state_demo(0.3, "forward")], [state_demo(0.3, "inverse")])
        assert c.entries.tolist() == [[0.0]]

    def test_three_four_five(self):
        c = build_cost_matrix([state_demo([0, 0], "forward")], [state_demo([3, 4], "inverse")])
        assert c.entries[0, 0] == 5.0

    def test_uses_final_and_initial_states(self):
        tr = Trajectory([0.0, 1.0], [0.0, 1.0])
        f = Demonstration(tr, [0.1], [100.0], [1.0], Role.FORWARD)
        i = Demonstration(tr, [0.1], [4.0], [-50.0], Role.INVERSE)
        assert build_cost_matrix([f], [i]).entries[0, 0] == 3.0

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatch):
            build_cost_matrix([state_demo(0, "forward")], [])

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            build_cost_matrix([state_demo([0, 1], "forward")], [state_demo(0, "inverse")])

    @pytest.mark.parametrize("bad", [[[np.nan]], [[np.inf, 0], [0, 0]], [[-1.0]]])
    def test_invalid_entries(self, bad):
        with pytest.raises(InvalidCost):
            solve_assignment(np.array(bad))

    def test_csv_dump(self, tmp_path):
        c = CostMatrix([[0.15, 0.0], [0.0, 0.15]])
        write_cost_csv(c, tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "forward,inverse_0,inverse_1"
        assert len(lines) == 3


class TestSolve:
    def test_anti_diagonal(self):
        a = solve_assignment([[0.15, 0.0], [0.0, 0.15]])
        assert a.perm == (1, 0) and a.total_cost == 0.0

    def test_zero_diagonal(self):
        c = np.ones((4, 4)) - np.eye(4)
        a = solve_assignment(c)
        assert a.perm == (0, 1, 2, 3) and a.total_cost == 0.0

    def test_all_ties_gives_identity(self):
        assert solve_assignment(np.zeros((5, 5))).perm == (0, 1, 2, 3, 4)

    def test_tie_break_prefers_low_indices(self):
        # Both (0,1,2) and (1,0,2) cost 2; lexicographic order picks the first.
        c = [[1, 1, 9], [1, 1, 9], [9, 9, 0]]
        assert solve_assignment(np.array(c, float)).perm == (0, 1, 2)

    def test_random_6x6_against_720_permutations(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            c = rng.random((6, 6))
            best, perm = brute_force(c)
            a = solve_assignment(c)
            assert a.total_cost == best and a.perm == perm

    @settings(max_examples=150, deadline=None)
    @given(st.integers(1, 6).flatmap(
        lambda n: st.lists(st.lists(st.integers(0, 4), min_size=n, max_size=n), min_size=n, max_size=n)))
    def test_integer_costs_with_ties(self, rows):
        c = np.array(rows, dtype=float)
        best, perm = brute_force(c)
        a = solve_assignment(c)
        assert a.total_cost == best
        assert a.perm == perm

    def test_larger_instance_is_bijection(self):
        rng = np.random.default_rng(0)
        c = rng.random((60, 60))
        a = solve_assignment(c)
        assert sorted(a.perm) == list(range(60))
        # no improving 2-swap exists at an optimum
        p = np.array(a.perm)
        for i in range(60):
            for k in range(i + 1, 60):
                assert c[i, p[i]] + c[k, p[k]] <= c[i, p[k]] + c[k, p[i]] + 1e-12


class TestPairing:
    def test_single(self):
        p = pair_demonstrations([state_demo(0.2, "forward")], [state_demo(0.5, "inverse")])
        assert len(p) == 1 and p.pairing_cost == pytest.approx(0.3)

    def test_matches_states(self):
        amps = [0.11, 0.2, 0.15, 0.24]
        fw = [state_demo(1 - a, "forward", a) for a in amps]
        inv = [state_demo(1 - a, "inverse", a) for a in reversed(amps)]
        p = pair_demonstrations(fw, inv)
        assert p.pairing_cost == 0.0
        for f, i in p.pairs:
            assert f.task_param[0] == i.task_param[0]
        assert p.pairing_cost == sum(p.pair_costs)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 7), st.integers(0, 2**32 - 1))
    def test_invariant_under_inverse_shuffle(self, n, seed):
        # 2-D continuous states make the optimum unique with probability one
        # (1-D absolute differences tie whenever intervals nest).
        rng = np.random.default_rng(seed)
        fw = [state_demo(s, "forward") for s in rng.random((n, 2))]
        inv = [state_demo(s, "inverse", psi=k) for k, s in enumerate(rng.random((n, 2)))]
        shuffled = [inv[k] for k in rng.permutation(n)]
        key = lambda p: sorted((tuple(f.s_final), i.task_param[0]) for f, i in p.pairs)  # noqa: E731
        a = pair_demonstrations(fw, inv)
        b = pair_demonstrations(fw, shuffled)
        assert key(a) == key(b)
        assert a.pairing_cost == pytest.approx(b.pairing_cost, abs=1e-12)

    def test_cost_non_increasing_as_pairs_match(self):
        # States spaced 1 apart with |noise| < 0.3 keep the identity optimal;
        # making the first k inverse states exact removes their cost.
        rng = np.random.default_rng(1)
        f_states = np.arange(8.0)
        noise = rng.uniform(-0.3, 0.3, 8)
        costs = []
        for k in range(9):
            i_states = f_states + np.where(np.arange(8) < k, 0.0, noise)
            fw = [state_demo(s, "forward") for s in f_states]
            inv = [state_demo(s, "inverse") for s in i_states]
            costs.append(pair_demonstrations(fw, inv).pairing_cost)
        assert all(b <= a for a, b in zip(costs, costs[1:]))
        assert costs[-1] == 0.0 and costs[0] > 0.0
