"""Independent scalar reference implementations used as test oracles.

Everything here is deliberately written as plain Python loops over pixels and
planes (or plain 4x4 matrix algebra), independent of the vectorized engine
code paths it checks.
"""

import numpy as np


def compose_pose_matmul(rot_a, trans_a, rot_b, trans_b):
    """Pose composition via 4x4 homogeneous matrix product."""
    ma = np.eye(4)
    ma[:3, :3] = rot_a
    ma[:3, 3] = trans_a
    mb = np.eye(4)
    mb[:3, :3] = rot_b
    mb[:3, 3] = trans_b
    mc = ma @ mb
    return mc[:3, :3], mc[:3, 3]


def composite_scalar(content, alpha):
    """Back-to-front compositing as a per-pixel scalar loop.

    content: (m, H, W, C), alpha: (m, H, W, 1), both front first.
    Returns (image (H, W, C), transmittance (H, W)) in float64.
    """
    content = np.asarray(content, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    m, h, w, c = content.shape
    image = np.zeros((h, w, c))
    trans = np.ones((h, w))
    for y in range(h):
        for x in range(w):
            through = 1.0
            for z in range(m):
                a = alpha[z, y, x, 0]
                for ch in range(c):
                    image[y, x, ch] += content[z, y, x, ch] * a * through
                through *= 1.0 - a
            trans[y, x] = through
    return image, trans


def normalize_phi_scalar(phi):
    """Column normalization of (H, W, k, m) over k, uniform fallback."""
    phi = np.asarray(phi, dtype=np.float64)
    h, w, k, m = phi.shape
    out = np.zeros_like(phi)
    for y in range(h):
        for x in range(w):
            for i in range(m):
                s = 0.0
                for j in range(k):
                    s += phi[y, x, j, i]
                for j in range(k):
                    out[y, x, j, i] = (1.0 / k) if s <= 1e-8 else phi[y, x, j, i] / s
    return out


def expand_scalar(lifted, phi_normalized):
    """Per-pixel (l x k) @ (k x m) triple loop.

    lifted: (k, H, W, C); phi_normalized: (H, W, k, m).
    Returns content (m, H, W, C) float64.
    """
    lifted = np.asarray(lifted, dtype=np.float64)
    phi = np.asarray(phi_normalized, dtype=np.float64)
    k, h, w, c = lifted.shape
    m = phi.shape[3]
    out = np.zeros((m, h, w, c))
    for y in range(h):
        for x in range(w):
            for i in range(m):
                for ch in range(c):
                    acc = 0.0
                    for j in range(k):
                        acc += lifted[j, y, x, ch] * phi[y, x, j, i]
                    out[i, y, x, ch] = acc
    return out


def argmax_scalar(probs):
    """Per-pixel argmax with ties broken toward the lowest channel index."""
    probs = np.asarray(probs)
    h, w, c = probs.shape
    labels = np.zeros((h, w), dtype=np.int32)
    for y in range(h):
        for x in range(w):
            best = 0
            for ch in range(1, c):
                if probs[y, x, ch] > probs[y, x, best]:
                    best = ch
            labels[y, x] = best
    return labels


def depth_composite_scalar(alpha, values):
    """sum_i v_i * alpha_i * prod_{j<i}(1 - alpha_j) per pixel, plus the
    residual transmittance."""
    alpha = np.asarray(alpha, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    m, h, w, _ = alpha.shape
    raw = np.zeros((h, w))
    trans = np.ones((h, w))
    for y in range(h):
        for x in range(w):
            through = 1.0
            for i in range(m):
                a = alpha[i, y, x, 0]
                raw[y, x] += values[i] * a * through
                through *= 1.0 - a
            trans[y, x] = through
    return raw, trans


def photometric_scalar(pred, gt):
    """Mean |diff| and mean diff^2 by explicit accumulation."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    sum_abs = 0.0
    sum_sq = 0.0
    for a, b in zip(pred, gt):
        d = a - b
        sum_abs += abs(d)
        sum_sq += d * d
    return sum_abs / pred.size, sum_sq / pred.size
