"""Pure-numpy sprite kernels, used when the compiled extension is unavailable."""

import numpy as np


def warp_bilinear(intensity, alpha, hinv, x0, y0, out_h, out_w):
    """Inverse-map sprite pixel centres through ``hinv`` and sample bilinearly, zero outside."""
    intensity = np.asarray(intensity, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    Y, X = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    X += x0 + 0.5
    Y += y0 + 0.5
    w = hinv[2, 0] * X + hinv[2, 1] * Y + hinv[2, 2]
    valid = w != 0.0
    w = np.where(valid, w, 1.0)
    tx = (hinv[0, 0] * X + hinv[0, 1] * Y + hinv[0, 2]) / w - 0.5
    ty = (hinv[1, 0] * X + hinv[1, 1] * Y + hinv[1, 2]) / w - 0.5
    th, tw = intensity.shape
    valid &= (tx > -1.0) & (ty > -1.0) & (tx < tw) & (ty < th)
    tx = np.where(valid, tx, -0.5)
    ty = np.where(valid, ty, -0.5)
    ix = np.floor(tx).astype(np.intp)
    iy = np.floor(ty).astype(np.intp)
    fx = tx - ix
    fy = ty - iy
    weights = ((1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy)
    offsets = ((0, 0), (0, 1), (1, 0), (1, 1))

    padded_i = np.pad(intensity, 1)
    padded_a = np.pad(alpha, 1)
    out_i = np.zeros((out_h, out_w))
    out_a = np.zeros((out_h, out_w))
    for wgt, (dy, dx) in zip(weights, offsets):
        yy = np.clip(iy + dy + 1, 0, th + 1)
        xx = np.clip(ix + dx + 1, 0, tw + 1)
        out_i += wgt * padded_i[yy, xx]
        out_a += wgt * padded_a[yy, xx]
    out_i[~valid] = 0.0
    out_a[~valid] = 0.0
    return out_i, out_a


def blend_into(canvas, intensity, alpha, gain, x0, y0, tau1, exposure, tau0):
    """Blend a grayscale sprite times ``gain`` into ``canvas`` in place."""
    h, w = intensity.shape
    H, W = canvas.shape[:2]
    ya, yb = max(0, y0), min(H, y0 + h)
    xa, xb = max(0, x0), min(W, x0 + w)
    if ya >= yb or xa >= xb:
        return
    sl = (slice(ya - y0, yb - y0), slice(xa - x0, xb - x0))
    keep = (exposure - alpha[sl] * tau1) / exposure
    s = intensity[sl][..., None]
    region = canvas[ya:yb, xa:xb]
    region[...] = keep[..., None] * region + s * np.asarray(gain) * (tau1 / tau0)


def project_drops(positions, velocities, diameters_mm, focal_px, cx, cy, exposure, width, height):
    """Project exposure start/end points and drop diameters; flag streaks touching the image."""
    p0 = positions
    p1 = p0 + velocities * exposure
    z0, z1 = p0[:, 2], p1[:, 2]
    front = (z0 > 1e-6) & (z1 > 1e-6)
    with np.errstate(divide="ignore", invalid="ignore"):
        start = np.stack([focal_px * p0[:, 0] / z0 + cx, focal_px * p0[:, 1] / z0 + cy], axis=1)
        end = np.stack([focal_px * p1[:, 0] / z1 + cx, focal_px * p1[:, 1] / z1 + cy], axis=1)
        diam = diameters_mm * 1e-3 * focal_px / z0
    half = diam / 2
    lo = np.minimum(start, end) - half[:, None]
    hi = np.maximum(start, end) + half[:, None]
    keep = front & (hi[:, 0] >= 0) & (lo[:, 0] <= width) & (hi[:, 1] >= 0) & (lo[:, 1] <= height)
    return start, end, diam, keep
