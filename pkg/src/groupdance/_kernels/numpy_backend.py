"""Pure-numpy reference implementations of the hot kernels.

The compiled extension (`_ckern`) implements the same four entry points with
identical semantics; either backend can serve `groupdance._kernels`. Keep
the two in lockstep — `tests/test_kernels.py` cross-checks them numerically.
"""

import numpy as np

NAME = "numpy"


def attn_forward(q, k, v, mask, scale):
    """Fused scaled-dot attention forward.

    q: (B, H, Lq, D), k/v: (B, H, Lk, D), mask: (Lq, Lk) additive or None.
    Returns (out (B, H, Lq, D), weights (B, H, Lq, Lk)).
    """
    scores = np.matmul(q, np.swapaxes(k, -1, -2)) * scale
    if mask is not None:
        scores = scores + mask
    scores -= scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    return np.matmul(w, v), w


def attn_backward(gout, q, k, v, weights, scale):
    """Gradients of attn_forward given cached softmax weights.

    The additive mask is a constant, so it contributes no gradient term.
    """
    gv = np.matmul(np.swapaxes(weights, -1, -2), gout)
    gw = np.matmul(gout, np.swapaxes(v, -1, -2))
    # softmax backward: dS = P * (dP - sum(dP * P, axis=-1))
    gs = weights * (gw - (gw * weights).sum(axis=-1, keepdims=True))
    gq = np.matmul(gs, k) * scale
    gk = np.matmul(np.swapaxes(gs, -1, -2), q) * scale
    return gq, gk, gv


def fk_positions(rotmats, tau, parents, offsets):
    """World-space joint positions for a batch of frames.

    rotmats: (F, J, 3, 3) local joint rotations, tau: (F, 3) root translation,
    parents: (J,) int32 with parents[0] == -1, offsets: (J, 3) rest bones.
    Joint j sits at parent position + parent world rotation @ offsets[j].
    """
    F, J = rotmats.shape[0], rotmats.shape[1]
    world_rot = np.empty((F, J, 3, 3))
    pos = np.empty((F, J, 3))
    world_rot[:, 0] = rotmats[:, 0]
    pos[:, 0] = tau
    for j in range(1, J):
        p = parents[j]
        pos[:, j] = pos[:, p] + np.einsum("fab,b->fa", world_rot[:, p], offsets[j])
        world_rot[:, j] = np.matmul(world_rot[:, p], rotmats[:, j])
    return pos


def sixd_to_matrix_batch(r6):
    """Gram-Schmidt a batch of 6D rotations into matrices.

    r6: (..., 6) laid out column-major (first column then second).
    Returns (..., 3, 3). Raises no errors here; degenerate rows are the
    caller's job to detect (see groupdance.rotations).
    """
    a1 = r6[..., :3]
    a2 = r6[..., 3:]
    b1 = a1 / np.linalg.norm(a1, axis=-1, keepdims=True)
    proj = (b1 * a2).sum(axis=-1, keepdims=True)
    u2 = a2 - proj * b1
    b2 = u2 / np.linalg.norm(u2, axis=-1, keepdims=True)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)
