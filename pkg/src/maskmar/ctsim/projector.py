"""Joseph ray-driven forward projection.

Each ray steps one pixel at a time along its dominant axis and linearly
interpolates the image along the other axis (zero outside the image). The
projector is linear, so it is assembled once per (geometry, image shape,
pixel size) into a sparse matrix and cached.

Image convention: ``image[row, col]`` has center
``x = (col - (W-1)/2) * pixel_size``, ``y = (row - (H-1)/2) * pixel_size``.
A parallel ray at view angle theta and detector offset t is the line
``{p : p . (cos theta, sin theta) = t}``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from maskmar.ctsim.geometry import ScanGeometry


def ray_lines(geom: ScanGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Return (origins, unit directions), each (n_views * n_detectors, 2), view-major."""
    beta = geom.angles[:, None]
    u = geom.detector_positions[None, :]
    normal = np.stack(np.broadcast_arrays(np.cos(beta), np.sin(beta)), axis=-1)
    along = np.stack(np.broadcast_arrays(-np.sin(beta), np.cos(beta)), axis=-1)
    if geom.beam == "parallel":
        origins = u[..., None] * normal
        dirs = np.broadcast_to(along, origins.shape)
    else:
        d = geom.source_to_center
        source = -d * along
        target = u[..., None] * normal
        vec = target - source
        dirs = vec / np.linalg.norm(vec, axis=-1, keepdims=True)
        origins = np.broadcast_to(source, dirs.shape)
    return origins.reshape(-1, 2).copy(), dirs.reshape(-1, 2).copy()


def _major_axis_entries(o_major, o_minor, d_major, d_minor, n_major, n_minor, pixel_size, ray_ids):
    """Sparse entries for rays stepping along the 'major' image axis."""
    centers = (np.arange(n_major) - (n_major - 1) / 2.0) * pixel_size
    lam = (centers[None, :] - o_major[:, None]) / d_major[:, None]
    minor = o_minor[:, None] + lam * d_minor[:, None]
    pos = minor / pixel_size + (n_minor - 1) / 2.0
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    step = pixel_size / np.abs(d_major)
    rows, majors, minors, vals = [], [], [], []
    major_idx = np.broadcast_to(np.arange(n_major)[None, :], pos.shape)
    ray_idx = np.broadcast_to(ray_ids[:, None], pos.shape)
    for idx, w in ((i0, 1.0 - frac), (i0 + 1, frac)):
        ok = (idx >= 0) & (idx < n_minor) & (w > 0)
        rows.append(ray_idx[ok])
        majors.append(major_idx[ok])
        minors.append(idx[ok])
        vals.append((w * step[:, None])[ok])
    return np.concatenate(rows), np.concatenate(majors), np.concatenate(minors), np.concatenate(vals)


@lru_cache(maxsize=32)
def system_matrix(geom: ScanGeometry, height: int, width: int, pixel_size: float) -> sp.csr_matrix:
    """Sparse (n_views*n_detectors, height*width) Joseph projection matrix."""
    geom.check_image(height, width, pixel_size)
    origins, dirs = ray_lines(geom)
    n_rays = origins.shape[0]
    ids = np.arange(n_rays)
    x_major = np.abs(dirs[:, 0]) >= np.abs(dirs[:, 1])

    r_list, c_list, v_list = [], [], []
    sel = ids[x_major]
    if sel.size:
        r, col, row, v = _major_axis_entries(
            origins[sel, 0], origins[sel, 1], dirs[sel, 0], dirs[sel, 1], width, height, pixel_size, sel
        )
        r_list.append(r)
        c_list.append(row * width + col)
        v_list.append(v)
    sel = ids[~x_major]
    if sel.size:
        r, row, col, v = _major_axis_entries(
            origins[sel, 1], origins[sel, 0], dirs[sel, 1], dirs[sel, 0], height, width, pixel_size, sel
        )
        r_list.append(r)
        c_list.append(row * width + col)
        v_list.append(v)
    mat = sp.coo_matrix(
        (np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
        shape=(n_rays, height * width),
    )
    return mat.tocsr()


def radon(image: np.ndarray, geom: ScanGeometry, pixel_size: float = 1.0) -> np.ndarray:
    """Line integrals (mu * mm) of a 2-D image or a (Z, H, W) stack of slices.

    Returns (n_views, n_detectors) or (Z, n_views, n_detectors).
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[-2:]
    a = system_matrix(geom, h, w, float(pixel_size))
    if img.ndim == 2:
        return (a @ img.reshape(-1)).reshape(geom.shape)
    flat = img.reshape(-1, h * w)
    return np.ascontiguousarray((a @ flat.T).T).reshape(img.shape[:-2] + geom.shape)


def backproject_adjoint(sinogram: np.ndarray, geom: ScanGeometry, height: int, width: int, pixel_size: float = 1.0) -> np.ndarray:
    """Exact transpose of :func:`radon` (unfiltered, ray-driven)."""
    a = system_matrix(geom, height, width, float(pixel_size))
    return (a.T @ np.asarray(sinogram, dtype=np.float64).reshape(-1)).reshape(height, width)
