"""6D rotation representation and conversions.

A rotation is encoded as the first two columns of its 3x3 matrix, flattened
column-major (first column, then second). The matrix is recovered by
Gram-Schmidt orthonormalization, which absorbs scale and non-orthogonality
of the two stored vectors.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as kernels
from .errors import DegenerateInputError, ValidationError

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

_NORM_EPS = 1e-8


def sixd_to_matrix(r: np.ndarray) -> np.ndarray:
    """Orthonormalize one 6D rotation into a proper rotation matrix.

    Raises DegenerateInputError when either embedded vector has (near-)zero
    norm or the second is parallel to the first.
    """
    r = np.asarray(r, dtype=np.float64).reshape(6)
    _check_degenerate(r[None, :])
    return kernels.sixd_to_matrix_batch(r)


def sixd_to_matrix_batch(r6: np.ndarray) -> np.ndarray:
    """Vectorized conversion of (..., 6) rotations to (..., 3, 3) matrices."""
    r6 = np.asarray(r6, dtype=np.float64)
    if r6.shape[-1] != 6:
        raise ValidationError(f"expected trailing dimension 6, got {r6.shape}")
    _check_degenerate(r6.reshape(-1, 6))
    return kernels.sixd_to_matrix_batch(r6)


def _check_degenerate(flat: np.ndarray):
    n1 = np.linalg.norm(flat[:, :3], axis=-1)
    if (n1 < _NORM_EPS).any():
        raise DegenerateInputError("zero-norm first column in 6D rotation")
    n2 = np.linalg.norm(flat[:, 3:], axis=-1)
    if (n2 < _NORM_EPS).any():
        raise DegenerateInputError("zero-norm second column in 6D rotation")
    b1 = flat[:, :3] / n1[:, None]
    resid = flat[:, 3:] - (b1 * flat[:, 3:]).sum(-1, keepdims=True) * b1
    if (np.linalg.norm(resid, axis=-1) < _NORM_EPS * n2).any():
        raise DegenerateInputError("second 6D column is parallel to the first")


def matrix_to_sixd(R: np.ndarray) -> np.ndarray:
    """Extract the 6D representation (first two columns) of a rotation matrix.

    The input must be orthonormal within 1e-4 with positive determinant.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise ValidationError(f"expected (..., 3, 3) matrix, got {R.shape}")
    err = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max()
    if err > 1e-4:
        raise ValidationError(f"matrix is not orthonormal (|R^T R - I| = {err:.2e})")
    if (np.linalg.det(R) <= 0).any():
        raise ValidationError("matrix has non-positive determinant")
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def axis_angle_to_matrix(axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues formula; axis (..., 3) need not be unit, angle (...) radians."""
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    u = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    zero = np.zeros_like(x)
    k = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrices via normalized quaternions, (n, 3, 3)."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((n, 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R
