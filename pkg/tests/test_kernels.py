import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

import oracles
from bipartite_ustat import kernels as K
from bipartite_ustat.errors import UnknownKernelError, ValidationError


def blocks(p, q):
    return arrays(np.float64, (p, q), elements=st.integers(0, 4).map(float))


class TestBuiltins:
    @pytest.mark.parametrize("name", K.BUILTIN_NAMES)
    def test_matches_reference_symmetrization(self, name, rng):
        h = K.builtin(name)
        for _ in range(20):
            B = rng.poisson(1.5, size=(h.p, h.q)).astype(float)
            expected = oracles.sym_value(oracles.RAW[name][2], B.tolist())
            assert_allclose(K.evaluate(h, B), expected, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("name", K.BUILTIN_NAMES)
    def test_vectorised_eval(self, name, rng):
        h = K.builtin(name)
        B = rng.poisson(1.0, size=(7, 3, h.p, h.q)).astype(float)
        out = h(B)
        assert out.shape == (7, 3)
        assert_allclose(out[4, 1], K.evaluate(h, B[4, 1]))

    def test_h14_equals_generic_symmetrization(self, rng):
        generic = K.symmetrize(K.raw_builtin("h14"))
        B = rng.integers(0, 2, size=(200, 2, 3)).astype(float)
        assert_allclose(K.builtin("h14")(B), generic(B), atol=1e-15)

    def test_motif_values(self):
        assert K.evaluate(K.builtin("h6"), np.ones((2, 2))) == 1.0
        # path motif: one row holds columns 0,1 and the other 1,2
        path = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
        assert K.evaluate(K.builtin("h14"), path) == pytest.approx(1 / 6)
        assert K.evaluate(K.builtin("h14"), np.ones((2, 3))) == 0.0

    def test_unknown_name_lists_valid(self):
        with pytest.raises(UnknownKernelError, match="h6"):
            K.builtin("h99")

    def test_shape_checked(self):
        with pytest.raises(ValidationError):
            K.evaluate(K.builtin("h6"), np.ones((2, 3)))


class TestSymmetry:
    @pytest.mark.parametrize("name", K.BUILTIN_NAMES)
    @given(data=st.data())
    def test_invariant_under_permutations(self, name, data):
        h = K.builtin(name)
        B = data.draw(blocks(h.p, h.q))
        rp = data.draw(st.permutations(range(h.p)))
        cp = data.draw(st.permutations(range(h.q)))
        assert_allclose(K.evaluate(h, B[np.ix_(rp, cp)]), K.evaluate(h, B), rtol=1e-12, atol=1e-12)

    def test_symmetrize_idempotent(self):
        h = K.builtin("h2")
        assert K.symmetrize(h) is h

    def test_raw_is_not_symmetric(self):
        raw = K.raw_builtin("hA")
        assert not raw.is_symmetric
        B = np.array([[2.0, 1.0], [0.0, 3.0]])
        assert K.evaluate(raw, B) != K.evaluate(raw, B[::-1])

    def test_permutation_guard(self):
        big = K.Kernel(10, 1, "big", lambda B: B[..., 0, 0])
        with pytest.raises(ValidationError):
            K.symmetrize(big)


class TestConstruction:
    def test_extend_averages_subblocks(self, rng):
        h = K.builtin("h1")
        e = K.extend(h, 2, 3)
        B = rng.random((2, 3))
        expected = np.mean([K.evaluate(h, B[np.ix_(r, c)])
                            for r in itertools.combinations(range(2), 1)
                            for c in itertools.combinations(range(3), 2)])
        assert (e.p, e.q) == (2, 3)
        assert_allclose(K.evaluate(e, B), expected)

    def test_extend_same_size_is_identity(self):
        h = K.builtin("h6")
        assert K.extend(h, 2, 2) is h

    def test_extend_cannot_shrink(self):
        with pytest.raises(ValidationError):
            K.extend(K.builtin("h6"), 1, 2)

    def test_linear_combination(self, rng):
        hA = K.linear_combination([(1.0, K.builtin("hA1")), (-2.0, K.builtin("hA2"))], "combo")
        B = rng.poisson(2.0, size=(50, 2, 2)).astype(float)
        assert_allclose(hA(B), K.builtin("hA")(B), atol=1e-12)

    def test_linear_combination_sizes_must_match(self):
        with pytest.raises(ValidationError):
            K.linear_combination([(1.0, K.builtin("h6")), (1.0, K.builtin("h1"))])

    def test_json_kernel_reproduces_h6(self, rng):
        doc = {"p": 2, "q": 2, "id": "c4", "terms": [{"coef": 1, "factors": [[1, 1], [1, 2], [2, 1], [2, 2]]}]}
        h = K.from_json(json.dumps(doc))
        B = rng.random((30, 2, 2))
        assert h.is_symmetric
        assert_allclose(h(B), K.builtin("h6")(B))

    def test_json_constant_and_powers(self):
        h = K.from_terms(1, 1, [{"coef": 2.0, "factors": []}, {"coef": 1.0, "factors": [[1, 1, 2]]}])
        assert K.evaluate(h, np.array([[3.0]])) == 11.0

    def test_json_position_outside_block(self):
        with pytest.raises(ValidationError):
            K.from_terms(2, 2, [{"coef": 1, "factors": [[3, 1, 1]]}])

    def test_json_dimension_guard(self):
        with pytest.raises(ValidationError):
            K.from_terms(5, 1, [{"coef": 1, "factors": []}])

    def test_json_missing_field(self):
        with pytest.raises(ValidationError):
            K.from_json({"p": 1, "terms": []})

    def test_resolve(self):
        assert K.resolve("h6").id == "h6"
        h = K.builtin("hD")
        assert K.resolve(h) is h
