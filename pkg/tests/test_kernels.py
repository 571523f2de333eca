"""Cross-checks between the compiled extension and the numpy fallback."""

import os

import numpy as np
import pytest

from groupdance._kernels import backend_name, numpy_backend

compiled = pytest.importorskip(
    "groupdance._kernels._ckern", reason="compiled extension not built"
)


def test_selected_backend_is_compiled_when_available():
    forced = os.environ.get("GROUPDANCE_BACKEND", "").strip().lower()
    if forced:
        assert backend_name() == forced
    else:
        assert backend_name() == "compiled"


@pytest.mark.parametrize("with_mask", [False, True])
def test_attention_forward_matches(rng, with_mask):
    q = rng.normal(size=(3, 2, 7, 5))
    k = rng.normal(size=(3, 2, 9, 5))
    v = rng.normal(size=(3, 2, 9, 5))
    mask = None
    if with_mask:
        mask = np.zeros((7, 9))
        mask[np.triu_indices(7, k=1, m=9)] = -1e9
    scale = 1.0 / np.sqrt(5.0)
    o1, w1 = numpy_backend.attn_forward(q, k, v, mask, scale)
    o2, w2 = compiled.attn_forward(q, k, v, mask, scale)
    np.testing.assert_allclose(o1, o2, atol=1e-12)
    np.testing.assert_allclose(w1, w2, atol=1e-12)


def test_attention_backward_matches(rng):
    q = rng.normal(size=(2, 2, 6, 4))
    k = rng.normal(size=(2, 2, 6, 4))
    v = rng.normal(size=(2, 2, 6, 4))
    scale = 0.5
    _, w = numpy_backend.attn_forward(q, k, v, None, scale)
    g = rng.normal(size=(2, 2, 6, 4))
    for a, b in zip(numpy_backend.attn_backward(g, q, k, v, w, scale),
                    compiled.attn_backward(g, q, k, v, w, scale)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_fk_positions_match(rng, skel):
    r6 = rng.normal(size=(11, 24, 6))
    rot = numpy_backend.sixd_to_matrix_batch(r6)
    tau = rng.normal(size=(11, 3))
    p1 = numpy_backend.fk_positions(rot, tau, skel.parents, skel.offsets)
    p2 = compiled.fk_positions(np.ascontiguousarray(rot), tau, skel.parents,
                               np.ascontiguousarray(skel.offsets))
    np.testing.assert_allclose(p1, p2, atol=1e-12)


def test_sixd_batch_matches(rng):
    r6 = rng.normal(size=(40, 6))
    np.testing.assert_allclose(
        numpy_backend.sixd_to_matrix_batch(r6),
        compiled.sixd_to_matrix_batch(r6),
        atol=1e-12,
    )
