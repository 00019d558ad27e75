"""Weighted spine chain: moments m_d, branch-type laws, skeleton weights."""

import json
import math

import numpy as np
import pytest

from branchlab.process import Model, eigenpair, sigma_squared, MarkedTree
from branchlab.spine import (
    SpineKernel,
    build_kernel,
    delta_k,
    elementary_symmetric,
    q_expectation,
)
from branchlab.trees import PlanarTree, TreeShape


def make_triple():
    # a -> (a, a, b) surely; b is sterile.  With psi = (1, 2) the factorial
    # moments of a are easy to check by hand.
    return Model(("a", "b"), {"a": [(1, ("a", "a", "b"))], "b": [(1, ())]})


class TestElementarySymmetric:
    def test_small_cases(self):
        vals = [1.0, 2.0, 3.0]
        assert elementary_symmetric(vals, 0) == 1.0
        assert elementary_symmetric(vals, 1) == 6.0
        assert elementary_symmetric(vals, 2) == 11.0
        assert elementary_symmetric(vals, 3) == 6.0
        assert elementary_symmetric(vals, 4) == 0.0
        assert elementary_symmetric([], 1) == 0.0
        with pytest.raises(ValueError):
            elementary_symmetric(vals, -1)


class TestKernelTables:
    def test_binary_unit_moments(self, binary):
        ker = build_kernel(binary, "unit")
        assert ker.m[0, 0] == 1.0
        assert abs(ker.m[1, 0] - 1.0) <= 1e-15
        assert abs(ker.m[2, 0] - 1.0) <= 1e-15
        assert abs(ker.lam[0] - 1.0) <= 1e-15
        assert ker.transition == np.array([[1.0]])

    def test_triple_model_hand_values(self):
        ker = build_kernel(make_triple(), {"a": 1, "b": 2})
        ia = 0
        assert abs(ker.m[1, ia] - 4.0) <= 1e-14
        assert abs(ker.m[2, ia] - 10.0) <= 1e-14
        assert abs(ker.m[3, ia] - 12.0) <= 1e-14
        # sterile type has no offspring moments beyond m_0
        assert ker.m[1, 1] == 0.0 and ker.m[2, 1] == 0.0
        # one-step law: each a-child picked w.p. psi/m1
        assert np.allclose(ker.transition[ia], [0.5, 0.5], atol=1e-14)
        assert np.all(ker.transition[1] == 0.0)
        row = ker.chi[2][ia]
        assert abs(row[(0, 0)] - 0.2) <= 1e-14
        assert abs(row[(0, 1)] - 0.4) <= 1e-14
        assert abs(row[(1, 0)] - 0.4) <= 1e-14
        assert ker.chi[2][1] == {}

    def test_chi_rows_are_exchangeable_laws(self, asymmetric):
        ker = build_kernel(asymmetric, "harmonic")
        for d, rows in ker.chi.items():
            for row in rows:
                if not row:
                    continue
                assert abs(sum(row.values()) - 1.0) <= 1e-9
                for z, q in row.items():
                    assert abs(q - row[z[::-1]]) <= 1e-12

    def test_harmonic_weight_gives_unit_rate(
        self, binary, symmetric, asymmetric
    ):
        for model in (binary, symmetric, asymmetric):
            ker = build_kernel(model, "harmonic")
            assert np.allclose(ker.lam, 1.0, atol=1e-9)
            assert np.allclose(ker.transition.sum(axis=1), 1.0, atol=1e-9)

    def test_subcritical_halved_rate(self, subcritical):
        with pytest.warns(UserWarning, match="not critical"):
            ker = build_kernel(subcritical, "harmonic")
        assert abs(ker.lam[0] - 0.5) <= 1e-9

    def test_branching_variance_is_mean_quadratic_moment(self, asymmetric):
        # sigma^2 equals the pi-average of m_2 under the harmonic weight
        eig = eigenpair(asymmetric)
        ker = build_kernel(asymmetric, eig.h)
        want = float(eig.pi @ ker.m[2])
        assert abs(sigma_squared(asymmetric, eig) - want) <= 1e-9

    def test_psi_forms_agree(self, asymmetric):
        by_dict = build_kernel(asymmetric, {"A": 0.75, "B": 1.5})
        by_vec = build_kernel(asymmetric, [0.75, 1.5])
        assert np.allclose(by_dict.step, by_vec.step, atol=1e-15)

    def test_psi_validation(self, binary):
        with pytest.raises(ValueError):
            SpineKernel(binary, np.array([0.0]))
        with pytest.raises(ValueError):
            SpineKernel(binary, np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            build_kernel(binary, "perron")

    def test_matrix_power_cache(self, asymmetric):
        ker = build_kernel(asymmetric, "unit")
        want = np.linalg.matrix_power(ker.step, 5)
        assert np.allclose(ker.matrix_power(5), want, atol=1e-12)
        wantP = np.linalg.matrix_power(ker.transition, 4)
        assert np.allclose(ker.matrix_power(4, biased=False), wantP, atol=1e-12)
        assert ker.matrix_power(5) is ker.matrix_power(5)

    def test_json_dump(self, binary, asymmetric):
        data = json.loads(build_kernel(binary, "unit").to_json())
        assert data["types"] == ["a"]
        assert data["lam"] == [1.0]
        assert data["transition"] == [[1.0]]
        assert data["chi"]["2"]["a"] == {"a,a": 1.0}
        data = json.loads(build_kernel(asymmetric, "harmonic").to_json())
        assert set(data["chi"]) == {"1", "2", "3"}
        for row in data["chi"]["2"].values():
            if row:
                assert abs(sum(row.values()) - 1.0) <= 1e-9


class TestSkeletonWeights:
    def test_cherry_factor(self, binary):
        ker = build_kernel(binary, "unit")
        tree = PlanarTree({(): 2, (1,): 0, (2,): 0})
        mt = MarkedTree(tree, {v: "a" for v in tree.vertices})
        assert abs(delta_k(ker, mt) - 0.5) <= 1e-14

    def test_single_vertex_is_inverse_weight(self, asymmetric):
        ker = build_kernel(asymmetric, "harmonic")
        mt = MarkedTree(PlanarTree({(): 0}), {(): "B"})
        assert abs(delta_k(ker, mt) - 1 / 1.5) <= 1e-9

    def test_sterile_type_rejected(self):
        ker = build_kernel(make_triple(), "unit")
        mt = MarkedTree(PlanarTree({(): 0}), {(): "b"})
        with pytest.raises(ValueError, match="zero spine weight"):
            delta_k(ker, mt)


class TestSpineExpectation:
    def test_single_leaf_at_height_zero(self, asymmetric):
        ker = build_kernel(asymmetric, "harmonic")
        F = lambda shape, lt, bt: 1.0
        got = q_expectation(ker, TreeShape((0,), ()), F, "B")
        assert abs(got - 1 / 1.5) <= 1e-9

    def test_binary_cherry(self, binary):
        ker = build_kernel(binary, "unit")
        F = lambda shape, lt, bt: 1.0
        got = q_expectation(ker, TreeShape((1, 1), (0,)), F, "a")
        assert abs(got - 0.5) <= 1e-14

    def test_unreachable_degree_is_zero(self, binary):
        ker = build_kernel(binary, "unit")
        F = lambda shape, lt, bt: 1.0
        got = q_expectation(ker, TreeShape((1, 1, 1), (0, 0)), F, "a")
        assert got == 0.0

    def test_unbiased_tables_are_probabilities(self, asymmetric):
        ker = build_kernel(asymmetric, "unit")
        F = lambda shape, lt, bt: 1.0
        for x0 in asymmetric.types:
            got = q_expectation(
                ker, TreeShape((3,), ()), F, x0, with_bias=False
            )
            assert abs(got - 1.0) <= 1e-12
            got = q_expectation(
                ker, TreeShape((2, 1), (0,)), F, x0, with_bias=False
            )
            assert abs(got - 1.0) <= 1e-12

    def test_type_marginals_match_transition(self, asymmetric):
        # P(leaf type = y) on a path shape is the unbiased n-step matrix
        ker = build_kernel(asymmetric, "unit")
        n = 4
        P4 = ker.matrix_power(n, biased=False)
        for y, label in enumerate(asymmetric.types):
            F = lambda shape, lt, bt, lab=label: float(lt[0] == lab)
            got = q_expectation(
                ker, TreeShape((n,), ()), F, "A", with_bias=False
            )
            assert abs(got - P4[0, y]) <= 1e-12

    def test_float_shape_rejected(self, binary):
        ker = build_kernel(binary, "unit")
        with pytest.raises(ValueError):
            q_expectation(
                ker, TreeShape((1.5,), ()), lambda s, lt, bt: 1.0, "a"
            )
