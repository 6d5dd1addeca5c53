"""Shared fixtures for the verification tests: packets, random group
elements, and support-adapted quadrature boxes."""

import numpy as np
from scipy.linalg import expm

from btforms.formbasis import DynamicsForm, chart_grid


class Gaussian3:
    """Gaussian packet in a chart, callable on (..., 3) point arrays."""

    def __init__(self, center, width, amplitude=1.0):
        self.center = np.asarray(center, dtype=float)
        self.width = np.asarray(width, dtype=float)
        self.amplitude = amplitude

    def __call__(self, v):
        z = (np.asarray(v) - self.center) / self.width
        return self.amplitude * np.exp(-0.5 * np.sum(z * z, axis=-1)) + 0.0j


def rotation_matrix(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    out = np.eye(4)
    out[1:, 1:] = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
    return out


def boost_matrix(axis, rapidity):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    gen = np.zeros((4, 4))
    gen[0, 1:] = axis
    gen[1:, 0] = axis
    return expm(rapidity * gen)


def random_poincare(rng, max_rapidity=1.0, translation_scale=0.0):
    lam = rotation_matrix(rng.normal(size=3), rng.uniform(0, 2.5)) @ boost_matrix(
        rng.normal(size=3), rng.uniform(-max_rapidity, max_rapidity)
    )
    a = rng.normal(0.0, translation_scale, size=4) if translation_scale else np.zeros(4)
    return lam, a


def random_kinematic(form, rng, mass_scale=1.0):
    """A random element of the form's kinematic subgroup."""
    if form is DynamicsForm.INSTANT:
        lam = rotation_matrix(rng.normal(size=3), rng.uniform(0.2, 2.5))
        a = np.array([0.0, *rng.normal(0.0, 1.0 / mass_scale, size=3)])
    elif form is DynamicsForm.POINT:
        lam = rotation_matrix(rng.normal(size=3), rng.uniform(0.2, 2.5)) @ boost_matrix(
            rng.normal(size=3), rng.uniform(-1.0, 1.0)
        )
        a = np.zeros(4)
    else:
        lam = (
            rotation_matrix([0, 0, 1], rng.uniform(0.2, 2.5))
            @ boost_matrix([0, 0, 1], rng.uniform(-0.8, 0.8))
            @ front_transverse(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3))
        )
        a3 = rng.normal(0.0, 1.0 / mass_scale, size=3)
        a = np.array([a3[0], a3[1], a3[2], -a3[0]])  # a+ = 0
    return lam, a


def front_transverse(q1, q2):
    from btforms.kinematics import transverse_front_boost

    return transverse_front_boost(q1, q2)


def nonkinematic_witness(form):
    """One Poincare element outside each form's kinematic subgroup."""
    if form is DynamicsForm.INSTANT:
        return boost_matrix([0, 0, 1], 0.5), np.zeros(4)
    if form is DynamicsForm.POINT:
        return np.eye(4), np.array([0.7, 0.0, 0.0, 0.0])
    return boost_matrix([1, 0, 0], 0.5), np.zeros(4)


def probe_box_through(map_fn, center, halfwidth, nsigma=1.0, pad=1.05, floor=None):
    """Bounding box of the image of a source box under a point map."""
    center = np.asarray(center, dtype=float)
    halfwidth = np.asarray(halfwidth, dtype=float)
    lo = center - nsigma * halfwidth
    hi = center + nsigma * halfwidth
    if floor is not None:
        lo[0] = max(lo[0], floor)
    axes = [np.linspace(lo[i], hi[i], 7) for i in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    img = map_fn(pts)
    c = 0.5 * (img.max(axis=0) + img.min(axis=0))
    h = 0.5 * pad * (img.max(axis=0) - img.min(axis=0))
    return c, h


def default_packet(form, mass_scale):
    """A chart packet comfortably inside the chart domain."""
    if form is DynamicsForm.INSTANT:
        return Gaussian3([30.0, -40.0, 60.0], [280.0, 280.0, 280.0])
    if form is DynamicsForm.POINT:
        return Gaussian3([0.02, -0.03, 0.04], [0.16, 0.16, 0.16])
    return Gaussian3(
        [1.15 * mass_scale, 50.0, -40.0], [0.13 * mass_scale, 260.0, 260.0]
    )


def default_probe_points(form, mass_scale, n=40, seed=11):
    rng = np.random.default_rng(seed)
    if form is DynamicsForm.INSTANT:
        return rng.normal(0.0, 350.0, size=(n, 3))
    if form is DynamicsForm.POINT:
        return rng.normal(0.0, 0.3, size=(n, 3))
    pts = rng.normal(0.0, 300.0, size=(n, 3))
    pts[:, 0] = rng.uniform(0.5, 2.0, size=n) * mass_scale
    return pts


def residual_grid(form, mass_scale, npts=10):
    """A modest quadrature box used as the measure for residual checks."""
    if form is DynamicsForm.INSTANT:
        return chart_grid(form, [0.0, 0.0, 0.0], [900.0, 900.0, 900.0], npts)
    if form is DynamicsForm.POINT:
        return chart_grid(form, [0.0, 0.0, 0.0], [0.5, 0.5, 0.5], npts)
    return chart_grid(
        form, [1.3 * mass_scale, 0.0, 0.0], [0.9 * mass_scale, 800.0, 800.0], npts
    )
