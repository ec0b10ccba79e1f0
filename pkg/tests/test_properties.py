"""Property checks that hold for any input; runnable on their own with
``pytest tests/test_properties.py``."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from bipartite_ustat import inference as I
from bipartite_ustat import kernels as K
from bipartite_ustat import models as M
from bipartite_ustat import sim
from bipartite_ustat import ustat as U
from bipartite_ustat import varest as VE

KERNELS = ["h6", "h14", "hA", "hA1", "hA2", "h1", "hB", "hC", "hD", "h2"]


def matrices(min_side=3, max_side=7, hi=4):
    shape = st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side))
    return arrays(np.float64, shape, elements=st.integers(0, hi).map(float))


class TestKernelSymmetry:
    @pytest.mark.parametrize("name", KERNELS)
    @given(data=st.data())
    def test_permutation_invariant(self, name, data):
        h = K.builtin(name)
        B = data.draw(arrays(np.float64, (h.p, h.q), elements=st.integers(0, 3).map(float)))
        rp = data.draw(st.permutations(range(h.p)))
        cp = data.draw(st.permutations(range(h.q)))
        assert K.evaluate(h, B[np.ix_(rp, cp)]) == pytest.approx(K.evaluate(h, B), abs=1e-12)


class TestCovariance:
    @given(matrices())
    def test_symmetric_psd(self, Y):
        cov = VE.covariance_estimate(Y, ["hD", "h1", "hC", "h2"])
        np.testing.assert_array_equal(cov.sigma, cov.sigma.T)
        scale = max(1.0, np.abs(cov.sigma).max())
        assert np.linalg.eigvalsh(cov.sigma).min() >= -1e-10 * scale

    @given(matrices())
    def test_variance_nonnegative(self, Y):
        for name in ("hD", "h1", "h2"):
            for method in ("direct", "leave_one_out"):
                est = VE.variance_estimate(Y, name, method=method)
                assert est.v10 >= 0 and est.v01 >= 0 and est.V >= 0


class TestExtension:
    @pytest.mark.parametrize("name, size", [("hD", (2, 2)), ("h1", (2, 2)), ("hC", (2, 3)), ("h2", (3, 2))])
    @given(Y=matrices(min_side=3, max_side=5))
    def test_same_ustat(self, name, size, Y):
        h = K.builtin(name)
        ext = K.extend(h, *size)
        a = U.u_statistic(Y, h).value
        b = U.u_naive(Y, ext).value
        assert b == pytest.approx(a, rel=1e-10, abs=1e-12)


class TestGradients:
    @given(st.lists(st.floats(0.2, 5.0), min_size=4, max_size=4))
    def test_t(self, u):
        u = np.array(u)
        h = 1e-6
        fd = np.array([(I.t_stat(u + h * e) - I.t_stat(u - h * e)) / (2 * h) for e in np.eye(4)])
        np.testing.assert_allclose(I.grad_t(u), fd, rtol=1e-5, atol=1e-6)

    @given(st.lists(st.floats(0.2, 5.0), min_size=2, max_size=2))
    def test_kappa(self, u):
        u = np.array(u)
        h = 1e-6
        fd = np.array([(I.kappa(u + h * e) - I.kappa(u - h * e)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(I.grad_kappa(u), fd, rtol=1e-5, atol=1e-6)


class TestTwoSample:
    @pytest.mark.parametrize("stat", ["f2", "g2"])
    @given(seed=st.integers(0, 10**6))
    def test_antisymmetry(self, stat, seed):
        model = M.named_model("III")
        A = M.sample_matrix(model, 12, 15, seed)
        B = M.sample_matrix(model, 14, 11, seed + 1)
        ab = I.compare_networks(A, B, stat)
        ba = I.compare_networks(B, A, stat)
        assert ab.z == -ba.z
        assert ab.estimate == -ba.estimate


class TestDeterminism:
    def test_naive_threads(self):
        Y = M.sample_matrix(M.named_model("II", epsilon=1.0), 30, 30, 7)
        ref = U.u_naive(Y, K.builtin("h6"), threads=1)
        par = U.u_naive(Y, K.builtin("h6"), threads=8)
        assert ref.value == par.value
        np.testing.assert_array_equal(ref.row_sums, par.row_sums)
        np.testing.assert_array_equal(ref.col_sums, par.col_sums)

    def test_pipeline_threads(self, tmp_path):
        outputs = []
        for threads in (1, 8):
            cfg = sim.ExperimentConfig("coverage", {"type": "named", "which": "III"}, N_list=[30, 40], K=8,
                                       output_dir=str(tmp_path / f"t{threads}"), threads=threads)
            sim.run(cfg)
            outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / f"t{threads}").iterdir())})
        assert outputs[0] == outputs[1]

    def test_sampler_repeatable(self):
        model = M.named_model("I")
        np.testing.assert_array_equal(M.sample_matrix(model, 25, 30, 11), M.sample_matrix(model, 25, 30, 11))
