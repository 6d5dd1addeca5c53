"""Four-vector algebra, Lorentz transformations, and spin rotations.

Conventions used throughout the package:

* metric signature (+, -, -, -), natural units, energies in MeV
* four-vectors are numpy arrays with components (p0, p1, p2, p3);
  batched inputs of shape (..., 4) are accepted where documented
* matrices act on column vectors, ``p' = L @ p``
* SU(2) lifts are built from the axis-angle form with angle in [0, pi]
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation as _Rotation

METRIC = np.diag([1.0, -1.0, -1.0, -1.0])

# relative tolerance on p.p - m^2 for quadrature-generated inputs
OFF_SHELL_RTOL = 1e-9


class FrontChartError(ValueError):
    """Raised when a momentum leaves the p+ > 0 front-form chart."""


def minkowski_dot(p, q):
    """Invariant product p.q = p0*q0 - p1*q1 - p2*q2 - p3*q3 (batched)."""
    p = np.asarray(p)
    q = np.asarray(q)
    return p[..., 0] * q[..., 0] - np.sum(p[..., 1:] * q[..., 1:], axis=-1)


def minkowski_square(p):
    return minkowski_dot(p, p)


def on_shell_energy(pvec, mass):
    """Energy sqrt(|p|^2 + m^2) for spatial momenta of shape (..., 3)."""
    pvec = np.asarray(pvec)
    return np.sqrt(np.sum(pvec * pvec, axis=-1) + mass * mass)


def four_momentum(pvec, mass):
    """On-shell four-momentum from spatial momentum, shape (..., 4)."""
    pvec = np.asarray(pvec, dtype=float)
    e = on_shell_energy(pvec, mass)
    return np.concatenate([e[..., None], pvec], axis=-1)


def plus_component(p):
    p = np.asarray(p)
    return p[..., 0] + p[..., 3]


def _require_on_shell(p, mass):
    p = np.asarray(p, dtype=float)
    if mass <= 0.0:
        raise ValueError(f"mass must be positive, got {mass}")
    resid = np.abs(minkowski_square(p) - mass * mass)
    if np.any(resid > OFF_SHELL_RTOL * mass * mass):
        raise ValueError(
            f"four-momentum off shell: |p.p - m^2| = {np.max(resid):.3e} "
            f"exceeds {OFF_SHELL_RTOL:.1e} * m^2"
        )
    return p


def is_proper_orthochronous(lam, tol=1e-10):
    """Check L^T g L = g, det L = +1 and L[0,0] >= 1."""
    lam = np.asarray(lam)
    metric_ok = np.allclose(lam.T @ METRIC @ lam, METRIC, atol=tol)
    return metric_ok and np.linalg.det(lam) > 0.0 and lam[0, 0] >= 1.0 - tol


def canonical_boost(p, mass):
    """Rotationless boost B_c(p) taking (m, 0, 0, 0) to p.

    Parameters
    ----------
    p : array, shape (..., 4)
        On-shell four-momentum (checked to OFF_SHELL_RTOL).
    mass : float
        Rest mass, > 0.

    Returns
    -------
    array, shape (..., 4, 4)
        Symmetric proper orthochronous matrix with B_c(p) (m,0,0,0)^T = p.
    """
    p = _require_on_shell(p, mass)
    e = p[..., 0]
    pv = p[..., 1:]
    shape = p.shape[:-1]
    out = np.zeros(shape + (4, 4))
    out[..., 0, 0] = e / mass
    out[..., 0, 1:] = pv / mass
    out[..., 1:, 0] = pv / mass
    denom = mass * (e + mass)
    outer = pv[..., :, None] * pv[..., None, :] / denom[..., None, None]
    out[..., 1:, 1:] = np.eye(3) + outer
    return out


def canonical_boost_inverse(p, mass):
    """Inverse of canonical_boost, via B_c(p)^-1 = B_c(p0, -pvec)."""
    p = np.asarray(p, dtype=float)
    flipped = p.copy()
    flipped[..., 1:] *= -1.0
    return canonical_boost(flipped, mass)


def z_boost(eta):
    """Boost along the z axis with rapidity eta."""
    ch, sh = np.cosh(eta), np.sinh(eta)
    return np.array(
        [[ch, 0.0, 0.0, sh], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [sh, 0.0, 0.0, ch]]
    )


def transverse_front_boost(q1, q2):
    """Front-form transverse boost: p+ fixed, p_perp -> p_perp + q_perp p+.

    q1, q2 may be scalars or arrays of matching shape; the result has
    shape (..., 4, 4).
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    half = 0.5 * (q1 * q1 + q2 * q2)
    shape = np.broadcast(q1, q2).shape
    out = np.zeros(shape + (4, 4))
    out[..., 0, 0] = 1.0 + half
    out[..., 0, 1] = q1
    out[..., 0, 2] = q2
    out[..., 0, 3] = half
    out[..., 1, 0] = q1
    out[..., 1, 1] = 1.0
    out[..., 1, 3] = q1
    out[..., 2, 0] = q2
    out[..., 2, 2] = 1.0
    out[..., 2, 3] = q2
    out[..., 3, 0] = -half
    out[..., 3, 1] = -q1
    out[..., 3, 2] = -q2
    out[..., 3, 3] = 1.0 - half
    return out


def _z_boost_batch(eta):
    eta = np.asarray(eta, dtype=float)
    out = np.zeros(eta.shape + (4, 4))
    ch, sh = np.cosh(eta), np.sinh(eta)
    out[..., 0, 0] = ch
    out[..., 0, 3] = sh
    out[..., 3, 0] = sh
    out[..., 3, 3] = ch
    out[..., 1, 1] = 1.0
    out[..., 2, 2] = 1.0
    return out


def front_form_boost(p, mass):
    """Front-form boost B_f(p) taking (m, 0, 0, 0) to p.

    Composed of a longitudinal boost with rapidity ln(p+/m) followed by a
    transverse front-form boost with parameters p_perp/p+; both factors lie
    in the kinematic subgroup preserving the x+ = 0 plane.

    Raises FrontChartError if p+ <= 0.
    """
    pp = plus_component(np.asarray(p, dtype=float))
    if np.any(pp <= 0.0):
        raise FrontChartError("front-form boost requires p+ > 0")
    p = _require_on_shell(p, mass)
    eta = np.log(pp / mass)
    trans = transverse_front_boost(p[..., 1] / pp, p[..., 2] / pp)
    return trans @ _z_boost_batch(eta)


def front_form_boost_inverse(p, mass):
    """Analytic inverse Z(-eta) T(-q) of front_form_boost."""
    p = np.asarray(p, dtype=float)
    pp = plus_component(p)
    if np.any(pp <= 0.0):
        raise FrontChartError("front-form boost requires p+ > 0")
    eta = np.log(pp / mass)
    trans = transverse_front_boost(-p[..., 1] / pp, -p[..., 2] / pp)
    return _z_boost_batch(-eta) @ trans


_BOOSTS = {
    "canonical": (canonical_boost, canonical_boost_inverse),
    "front": (front_form_boost, front_form_boost_inverse),
}


def wigner_rotation(lam, p, mass, kind="canonical"):
    """Momentum-dependent rotation R_w = B^-1(Lp) L B(p).

    Parameters
    ----------
    lam : array, shape (4, 4)
        Proper orthochronous Lorentz transformation.
    p : array, shape (..., 4)
        On-shell four-momentum.
    mass : float
    kind : {"canonical", "front"}
        Which family of standard boosts defines the spin convention.

    Returns
    -------
    array, shape (..., 3, 3)
        The SO(3) matrix of the rotation (spatial block of the 4x4 result).

    Raises
    ------
    FrontChartError
        For kind="front" when (L p)+ <= 0.
    """
    if kind not in _BOOSTS:
        raise ValueError(f"unknown boost kind {kind!r}")
    boost, boost_inv = _BOOSTS[kind]
    p = _require_on_shell(p, mass)
    lam = np.asarray(lam, dtype=float)
    lp = p @ lam.T
    full = boost_inv(lp, mass) @ lam @ boost(p, mass)
    # the result fixes (1,0,0,0); keep only the spatial block
    return full[..., 1:, 1:]


def melosh_rotation(p, mass, j):
    """Rotation relating canonical and front-form spin at momentum p.

    Returns the SpinRotation for R_M = B_c^-1(p) B_f(p); the identity for
    p_perp = 0.  Requires p+ > 0.
    """
    p = _require_on_shell(p, mass)
    full = canonical_boost_inverse(p, mass) @ front_form_boost(p, mass)
    return SpinRotation.from_so3(full[..., 1:, 1:], j)


def spin_matrices(j):
    """Angular momentum matrices (Jx, Jy, Jz) for spin j (0, 1/2, 1, ...)."""
    dim = int(round(2 * j)) + 1
    m = j - np.arange(dim)  # j, j-1, ..., -j
    jz = np.diag(m).astype(complex)
    # <j, m+1 | J+ | j, m> = sqrt(j(j+1) - m(m+1))
    mp = m[1:]
    raise_elem = np.sqrt(j * (j + 1) - mp * (mp + 1))
    jplus = np.zeros((dim, dim), dtype=complex)
    jplus[np.arange(dim - 1), np.arange(1, dim)] = raise_elem
    jminus = jplus.T.conj()
    jx = 0.5 * (jplus + jminus)
    jy = -0.5j * (jplus - jminus)
    return jx, jy, jz


def rotation_vector(so3):
    """Axis-angle vector theta*n of an SO(3) matrix, angle in [0, pi]."""
    return _Rotation.from_matrix(np.asarray(so3)).as_rotvec()


def wigner_d_matrix(j, so3):
    """(2j+1)-dimensional unitary D^j for an SO(3) rotation matrix.

    Accepts batched rotations of shape (..., 3, 3) and returns
    (..., 2j+1, 2j+1).  The SU(2) lift uses angle in [0, pi].
    """
    so3 = np.asarray(so3, dtype=float)
    batched = so3.ndim > 2
    rv = _Rotation.from_matrix(so3.reshape(-1, 3, 3)).as_rotvec()
    dim = int(round(2 * j)) + 1
    if dim == 1:
        out = np.ones((rv.shape[0], 1, 1), dtype=complex)
    elif dim == 2:
        theta = np.linalg.norm(rv, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            axis = np.where(theta[:, None] > 0.0, rv / np.where(theta == 0.0, 1.0, theta)[:, None], 0.0)
        c = np.cos(theta / 2.0)
        s = np.sin(theta / 2.0)
        sx, sy, sz = axis[:, 0] * s, axis[:, 1] * s, axis[:, 2] * s
        out = np.empty((rv.shape[0], 2, 2), dtype=complex)
        out[:, 0, 0] = c - 1j * sz
        out[:, 0, 1] = -sy - 1j * sx
        out[:, 1, 0] = sy - 1j * sx
        out[:, 1, 1] = c + 1j * sz
    else:
        jx, jy, jz = spin_matrices(j)
        out = np.empty((rv.shape[0], dim, dim), dtype=complex)
        for i, vec in enumerate(rv):
            gen = vec[0] * jx + vec[1] * jy + vec[2] * jz
            vals, vecs = np.linalg.eigh(gen)
            out[i] = (vecs * np.exp(-1j * vals)) @ vecs.conj().T
    if not batched:
        return out[0]
    return out.reshape(so3.shape[:-2] + (dim, dim))


def su2_composition_phase(r_second, r_first, j=0.5):
    """Sign s with D^j(R2) D^j(R1) = s * D^j(R2 R1) for half-integer j.

    The [0, pi] axis-angle lift is double valued; this makes the tracked
    phase explicit.  Returns +1 or -1.
    """
    d2 = wigner_d_matrix(j, r_second)
    d1 = wigner_d_matrix(j, r_first)
    dprod = wigner_d_matrix(j, np.asarray(r_second) @ np.asarray(r_first))
    ratio = np.trace(d2 @ d1 @ dprod.conj().T) / (2 * j + 1)
    return 1 if ratio.real > 0 else -1


class SpinRotation:
    """A (2j+1)-dimensional unitary spin rotation with its SO(3) source."""

    def __init__(self, matrix, so3, j):
        self.matrix = np.asarray(matrix)
        self.so3 = np.asarray(so3)
        self.j = j

    @classmethod
    def from_so3(cls, so3, j):
        return cls(wigner_d_matrix(j, so3), so3, j)

    @property
    def dim(self):
        return int(round(2 * self.j)) + 1

    def is_unitary(self, tol=1e-12):
        eye = np.eye(self.dim)
        prod = self.matrix @ np.swapaxes(self.matrix, -1, -2).conj()
        return bool(np.all(np.abs(prod - eye) <= tol))
