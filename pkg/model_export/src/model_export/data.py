"""Synthetic point-cloud datasets for desk-scale training.

Three geometric classes (box, sphere, pyramid) sampled as surface point
clouds, plus a "house" shape whose parts (walls, roof, floor) serve as
per-point segmentation labels. Every cloud is centered and scaled to the
unit sphere; training applies random z-rotation augmentation on top.
"""

import numpy as np

CLASS_NAMES = ("box", "sphere", "pyramid")
PART_NAMES = ("walls", "roof", "floor")


def _uniform_on_triangles(rng, tris, weights, n):
    """Sample n points uniformly over weighted triangles (t, 3, 3)."""
    tris = np.asarray(tris, float)
    w = np.asarray(weights, float)
    idx = rng.choice(len(tris), size=n, p=w / w.sum())
    r1 = np.sqrt(rng.uniform(size=n))[:, None]
    r2 = rng.uniform(size=n)[:, None]
    a, b, c = tris[idx, 0], tris[idx, 1], tris[idx, 2]
    return (1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c


def _quad(p00, p10, p11, p01):
    """Two triangles covering the quad, each with its area weight."""
    p00, p10, p11, p01 = (np.asarray(p, float) for p in (p00, p10, p11, p01))
    t1, t2 = (p00, p10, p11), (p00, p11, p01)
    area = lambda t: 0.5 * np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0]))
    return [t1, t2], [area(t1), area(t2)]


def sample_box(rng, n):
    """n points on the surface of the cube [-1, 1]^3."""
    face = rng.integers(6, size=n)
    uv = rng.uniform(-1.0, 1.0, (n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    for ax in range(3):
        m = axis == ax
        others = [a for a in range(3) if a != ax]
        pts[m, ax] = sign[m]
        pts[m, others[0]] = uv[m, 0]
        pts[m, others[1]] = uv[m, 1]
    return pts


def sample_sphere(rng, n):
    """n points uniform on the unit sphere."""
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _pyramid_faces(base_z=-1.0, apex_z=1.0, half=1.0):
    apex = np.array([0.0, 0.0, apex_z])
    corners = [np.array([sx * half, sy * half, base_z])
               for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    tris, weights = _quad(*corners)
    for i in range(4):
        t = (corners[i], corners[(i + 1) % 4], apex)
        tris.append(t)
        weights.append(0.5 * np.linalg.norm(
            np.cross(t[1] - t[0], t[2] - t[0])))
    return tris, weights


def sample_pyramid(rng, n):
    """n points on a square pyramid (base at z = -1, apex at z = 1)."""
    tris, weights = _pyramid_faces()
    return _uniform_on_triangles(rng, tris, weights, n)


def sample_house(rng, n):
    """n labeled points on a box body with a pyramid roof.

    Returns (points, parts) with parts in {0 walls, 1 roof, 2 floor}.
    """
    wall_tris, wall_w = [], []
    c = lambda x, y, z: np.array([x, y, z], float)
    for sx in (-1.0, 1.0):
        t, w = _quad(c(sx, -1, -1), c(sx, 1, -1), c(sx, 1, 0), c(sx, -1, 0))
        wall_tris += t
        wall_w += w
        t, w = _quad(c(-1, sx, -1), c(1, sx, -1), c(1, sx, 0), c(-1, sx, 0))
        wall_tris += t
        wall_w += w
    roof_tris, roof_w = _pyramid_faces(base_z=0.0, apex_z=1.0)
    roof_tris, roof_w = roof_tris[2:], roof_w[2:]  # slanted faces only
    floor_tris, floor_w = _quad(c(-1, -1, -1), c(1, -1, -1),
                                c(1, 1, -1), c(-1, 1, -1))
    tris = wall_tris + roof_tris + floor_tris
    weights = np.array(wall_w + roof_w + floor_w)
    parts = np.repeat((0, 1, 2), (len(wall_tris), len(roof_tris),
                                  len(floor_tris)))
    idx = rng.choice(len(tris), size=n, p=weights / weights.sum())
    tarr = np.asarray(tris, float)[idx]
    r1 = np.sqrt(rng.uniform(size=n))[:, None]
    r2 = rng.uniform(size=n)[:, None]
    pts = (1 - r1) * tarr[:, 0] + r1 * (1 - r2) * tarr[:, 1] + r1 * r2 * tarr[:, 2]
    return pts, parts[idx]


def normalize_cloud(pts):
    """Center on the mean and scale the farthest point onto the unit sphere."""
    pts = np.asarray(pts, float)
    pts = pts - pts.mean(axis=0)
    r = np.linalg.norm(pts, axis=1).max()
    return pts / r if r > 0 else pts


def rotate_z(pts, angle):
    """Rotate points around the z (up) axis."""
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return pts @ rot.T


_SAMPLERS = (sample_box, sample_sphere, sample_pyramid)


def classification_set(rng, per_class, num_points):
    """Normalized clouds (N, n, 3) and class labels (N,) for 3 shapes."""
    clouds, labels = [], []
    for cls, sampler in enumerate(_SAMPLERS):
        for _ in range(per_class):
            clouds.append(normalize_cloud(sampler(rng, num_points)))
            labels.append(cls)
    order = rng.permutation(len(clouds))
    return np.asarray(clouds)[order], np.asarray(labels)[order]


def segmentation_set(rng, count, num_points):
    """Normalized house clouds (N, n, 3) and part labels (N, n)."""
    clouds, parts = [], []
    for _ in range(count):
        pts, lab = sample_house(rng, num_points)
        clouds.append(normalize_cloud(pts))
        parts.append(lab)
    return np.asarray(clouds), np.asarray(parts)
