"""Axis-angle rotations: exponential map, its parameter derivative, and
canonicalization onto the |v| < pi branch.

The derivative follows from differentiating the Rodrigues form
R = I + a(t) K + b(t) K^2 with K = [v]_x, t = |v|, a = sin(t)/t,
b = (1 - cos(t))/t^2. All scalar coefficients are evaluated through
series near t = 0 so the formulas stay smooth at the identity.
"""

from __future__ import annotations

import numpy as np

# Below this squared angle the closed-form coefficients lose digits to
# cancellation; the quoted series keep full double precision there.
_SMALL_SQ = 1e-8


def _sinc_coeffs(t2):
    """Return a = sin t / t and b = (1 - cos t) / t^2 for t^2 = t2 (array)."""
    t2 = np.asarray(t2, dtype=np.float64)
    small = t2 < _SMALL_SQ
    ts = np.where(small, 0.0, t2)
    t = np.sqrt(ts)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(t) / np.where(small, 1.0, t))
        b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(t)) / np.where(small, 1.0, ts))
    return a, b


def skew(v):
    """Cross-product matrices for the trailing axis: (..., 3) -> (..., 3, 3)."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3), dtype=np.float64)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def axis_angle_to_matrix(v):
    """Rotation matrices for axis-angle vectors: (..., 3) -> (..., 3, 3)."""
    v = np.asarray(v, dtype=np.float64)
    t2 = np.einsum("...i,...i->...", v, v)
    a, b = _sinc_coeffs(t2)
    K = skew(v)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * K2


def axis_angle_jacobian(v):
    """Derivative of the exponential map: (..., 3) -> (..., 3, 3, 3).

    Output axis 0 of the trailing three indexes the parameter component c,
    so result[..., c, :, :] = dR/dv_c. Smooth at v = 0 where it reduces to
    the generators [e_c]_x.
    """
    v = np.asarray(v, dtype=np.float64)
    t2 = np.einsum("...i,...i->...", v, v)
    a, b = _sinc_coeffs(t2)
    # ca = a'(t)/t and cb = b'(t)/t, series-stabilized like a and b.
    small = t2 < _SMALL_SQ
    ts = np.where(small, 1.0, t2)
    t = np.sqrt(np.where(small, 0.0, t2))
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_t = np.cos(t)
        sin_t = np.sin(t)
        ca = np.where(
            small,
            -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0,
            (t * cos_t - sin_t) / (ts * np.where(small, 1.0, t)),
        )
        cb = np.where(
            small,
            -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0,
            (t * sin_t - 2.0 * (1.0 - cos_t)) / (ts * ts),
        )
    K = skew(v)
    K2 = K @ K
    eye = np.eye(3)
    gen = skew(eye)  # gen[c] = [e_c]_x
    out = np.empty(v.shape[:-1] + (3, 3, 3), dtype=np.float64)
    for c in range(3):
        vc = v[..., c]
        Gc = gen[c]
        KG = K @ Gc + Gc @ K
        out[..., c, :, :] = (
            (ca * vc)[..., None, None] * K
            + a[..., None, None] * Gc
            + (cb * vc)[..., None, None] * K2
            + b[..., None, None] * KG
        )
    return out


def matrix_to_axis_angle(R):
    """Inverse of the exponential map for a single 3x3 rotation matrix.

    Returns the representative with angle in [0, pi]. At exactly pi the
    axis sign is arbitrary and one of the two is returned.
    """
    R = np.asarray(R, dtype=np.float64)
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(c))
    w = 0.5 * np.array(
        [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]
    )  # = sin(angle) * axis
    if angle < 1e-7:
        return w  # sin(angle)/angle = 1 to double precision here
    if angle > np.pi - 1e-5:
        # sin(angle) is tiny; recover the axis from (R + I)/2 = axis axis^T.
        B = (R + np.eye(3)) / 2.0
        d = np.sqrt(np.clip(np.diag(B), 0.0, 1.0))
        k = int(np.argmax(d))
        axis = B[:, k] / d[k]
        axis = axis / np.linalg.norm(axis)
        if np.dot(axis, w) < 0.0:
            axis = -axis
        return angle * axis
    return w * (angle / np.sin(angle))


def canonicalize_axis_angle(v):
    """Map axis-angle vectors onto the equivalent branch with |v| < pi.

    Subtracts full turns, then reflects a leftover angle in (pi, 2 pi)
    to the opposite axis. Vectors already inside the branch pass through
    bit-identically.
    """
    v = np.asarray(v, dtype=np.float64)
    t = np.sqrt(np.einsum("...i,...i->...", v, v))
    out = np.array(v, copy=True)
    over = t >= np.pi
    if not np.any(over):
        return out
    # theta mod 2 pi in [0, 2 pi), then fold (pi, 2 pi) to (-pi, 0).
    theta = np.mod(t[over], 2.0 * np.pi)
    folded = np.where(theta > np.pi, theta - 2.0 * np.pi, theta)
    out[over] = v[over] * (folded / t[over])[..., None]
    return out
