"""Validity-aware image sampling used by label and assessment math."""

from __future__ import annotations

import numpy as np

__all__ = ["sample_bilinear", "sample_nearest", "in_frame"]

_EDGE_TOL = 1e-6  # keeps round-trip float noise from invalidating border pixels


def in_frame(uv: np.ndarray, width: int, height: int) -> np.ndarray:
    """True where a continuous pixel coordinate lies in the image domain."""
    u, v = uv[..., 0], uv[..., 1]
    with np.errstate(invalid="ignore"):
        return (
            (u >= -_EDGE_TOL)
            & (u <= width - 1 + _EDGE_TOL)
            & (v >= -_EDGE_TOL)
            & (v <= height - 1 + _EDGE_TOL)
        )


def sample_nearest(
    values: np.ndarray, uv: np.ndarray, valid: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor lookup. Returns (sampled, ok); out-of-frame is not ok."""
    h, w = values.shape[:2]
    ok = in_frame(uv, w, h)
    u = np.clip(np.rint(np.where(ok, uv[..., 0], 0)).astype(np.int64), 0, w - 1)
    v = np.clip(np.rint(np.where(ok, uv[..., 1], 0)).astype(np.int64), 0, h - 1)
    sampled = values[v, u]
    if valid is not None:
        ok = ok & valid[v, u]
    zero = np.zeros_like(sampled)
    mask = ok if sampled.ndim == ok.ndim else ok[..., None]
    return np.where(mask, sampled, zero), ok


def sample_bilinear(
    values: np.ndarray, uv: np.ndarray, valid: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear lookup of (H, W) or (H, W, C) data at continuous coordinates.

    Returns (sampled, ok). A sample is ok only when the coordinate is
    in-frame and, if a validity mask is given, all four neighbors are
    valid; elsewhere the sampled value is 0.
    """
    h, w = values.shape[:2]
    ok = in_frame(uv, w, h)
    u = np.where(ok, uv[..., 0], 0.0)
    v = np.where(ok, uv[..., 1], 0.0)
    u0 = np.clip(np.floor(u).astype(np.int64), 0, max(w - 2, 0))
    v0 = np.clip(np.floor(v).astype(np.int64), 0, max(h - 2, 0))
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = (u - u0)[..., None] if values.ndim == 3 else u - u0
    fv = (v - v0)[..., None] if values.ndim == 3 else v - v0

    s00 = values[v0, u0]
    s01 = values[v0, u1]
    s10 = values[v1, u0]
    s11 = values[v1, u1]
    top = s00 * (1 - fu) + s01 * fu
    bot = s10 * (1 - fu) + s11 * fu
    sampled = top * (1 - fv) + bot * fv

    if valid is not None:
        ok = ok & valid[v0, u0] & valid[v0, u1] & valid[v1, u0] & valid[v1, u1]
    zero = np.zeros_like(sampled)
    mask = ok if sampled.ndim == ok.ndim else ok[..., None]
    return np.where(mask, sampled, zero), ok
