"""Form-specific irreducible bases and the kinematic maps between them.

Each form of dynamics owns a chart on the mass shell:

* instant:  v = (p1, p2, p3), the spatial momentum
* point:    v = u = p/m, the four-velocity's spatial part
* front:    v = (p+, p1, p2) with p+ = p0 + p3 > 0

Bases are delta-normalized with unit weight in their own chart.  The
kinematic change of basis between two forms is realized as a point map
with a scalar sqrt(Jacobian) weight and a spin rotation (identity between
canonical-spin charts, Melosh between canonical and front spin); improper
delta-normalized vectors are never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .kinematics import (
    FrontChartError,
    METRIC,
    canonical_boost_inverse,
    front_form_boost,
    is_proper_orthochronous,
    wigner_d_matrix,
)


class DynamicsForm(Enum):
    INSTANT = "instant"
    POINT = "point"
    FRONT = "front"


_SPIN_KIND = {
    DynamicsForm.INSTANT: "canonical",
    DynamicsForm.POINT: "canonical",
    DynamicsForm.FRONT: "front",
}


def spin_kind(form):
    """Boost family fixing the spin convention of a form's basis."""
    return _SPIN_KIND[form]


@dataclass(frozen=True)
class IrrepLabel:
    """Mass and spin (m, j) labelling an irreducible subspace."""

    mass: float
    j: float = 0.0

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError(f"irrep mass must be positive, got {self.mass}")
        if self.j < 0.0 or round(2 * self.j) != 2 * self.j:
            raise ValueError(f"spin must be a non-negative half-integer, got {self.j}")

    @property
    def dim_spin(self):
        return int(round(2 * self.j)) + 1


@dataclass(frozen=True)
class FormBasisPoint:
    """A point in one form's chart, with a spin projection."""

    form: DynamicsForm
    v: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (3,):
            raise ValueError("chart variables must have three components")
        if self.form is DynamicsForm.FRONT and v[0] <= 0.0:
            raise FrontChartError("front-form basis point requires p+ > 0")
        object.__setattr__(self, "v", v)


def reconstruct_momentum(form, v, mass):
    """On-shell four-momentum from chart coordinates, shape (..., 4)."""
    v = np.asarray(v, dtype=float)
    if form is DynamicsForm.INSTANT:
        e = np.sqrt(np.sum(v * v, axis=-1) + mass * mass)
        return np.concatenate([e[..., None], v], axis=-1)
    if form is DynamicsForm.POINT:
        u0 = np.sqrt(1.0 + np.sum(v * v, axis=-1))
        return mass * np.concatenate([u0[..., None], v], axis=-1)
    pplus = v[..., 0]
    if np.any(pplus <= 0.0):
        raise FrontChartError("front-form chart requires p+ > 0")
    perp2 = v[..., 1] ** 2 + v[..., 2] ** 2
    pminus = (mass * mass + perp2) / pplus
    out = np.empty(v.shape[:-1] + (4,))
    out[..., 0] = 0.5 * (pplus + pminus)
    out[..., 1] = v[..., 1]
    out[..., 2] = v[..., 2]
    out[..., 3] = 0.5 * (pplus - pminus)
    return out


def chart_coordinates(form, p, mass):
    """Chart coordinates of a four-momentum, shape (..., 3)."""
    p = np.asarray(p, dtype=float)
    if form is DynamicsForm.INSTANT:
        return p[..., 1:].copy()
    if form is DynamicsForm.POINT:
        return p[..., 1:] / mass
    pplus = p[..., 0] + p[..., 3]
    if np.any(pplus <= 0.0):
        raise FrontChartError("momentum outside the p+ > 0 front chart")
    return np.stack([pplus, p[..., 1], p[..., 2]], axis=-1)


def chart_density_wrt_instant(form, p, mass):
    """Jacobian det d(v_form)/d(pvec) at the physical point p."""
    p = np.asarray(p, dtype=float)
    if form is DynamicsForm.INSTANT:
        return np.ones(p.shape[:-1])
    if form is DynamicsForm.POINT:
        return np.full(p.shape[:-1], mass**-3)
    return (p[..., 0] + p[..., 3]) / p[..., 0]


def measure_weight(form, point, mass):
    """Density of the invariant integration measure in the form's own chart.

    Unit by convention (each chart integrates with its native volume
    element); kept as an explicit operation so normalization conventions
    are visible and testable.
    """
    if not isinstance(point, FormBasisPoint):
        point = FormBasisPoint(form, np.asarray(point, dtype=float))
    reconstruct_momentum(form, point.v, mass)  # validates the chart domain
    return 1.0


@dataclass(frozen=True)
class FormMapCoefficient:
    """Kinematic basis change between two forms at fixed (m, j).

    Realized as the triple (point map, sqrt-Jacobian weight, spin
    rotation); ``apply`` transports wave functions by the pullback
    psi_a(v_a) = D^j(R) psi_b(f^-1(v_a)) / weight(f^-1(v_a)).
    """

    target: DynamicsForm
    source: DynamicsForm
    irrep: IrrepLabel

    def map_points(self, v_src):
        p = reconstruct_momentum(self.source, v_src, self.irrep.mass)
        return chart_coordinates(self.target, p, self.irrep.mass)

    def inverse_points(self, v_tgt):
        p = reconstruct_momentum(self.target, v_tgt, self.irrep.mass)
        return chart_coordinates(self.source, p, self.irrep.mass)

    def jacobian(self, v_src):
        """det d(v_target)/d(v_source) at source points."""
        p = reconstruct_momentum(self.source, v_src, self.irrep.mass)
        m = self.irrep.mass
        return chart_density_wrt_instant(self.target, p, m) / chart_density_wrt_instant(
            self.source, p, m
        )

    def weight(self, v_src):
        return np.sqrt(self.jacobian(v_src))

    def rotation_so3(self, v_src):
        """SO(3) rotation relating the source spin axis to the target's."""
        p = reconstruct_momentum(self.source, v_src, self.irrep.mass)
        m = self.irrep.mass
        kinds = (spin_kind(self.target), spin_kind(self.source))
        if kinds[0] == kinds[1]:
            return np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3)).copy()
        full = canonical_boost_inverse(p, m) @ front_form_boost(p, m)
        melosh = full[..., 1:, 1:]
        if kinds == ("canonical", "front"):
            return melosh
        return np.swapaxes(melosh, -1, -2)

    def spin_rotation(self, v_src):
        return wigner_d_matrix(self.irrep.j, self.rotation_so3(v_src))

    def apply(self, func):
        """Pullback of a chart function from the source to the target form.

        ``func`` maps points (..., 3) to amplitudes (...,) for j = 0 or
        (..., 2j+1) for j > 0; the returned callable does the same in the
        target chart.
        """
        if self.source is self.target:
            return func

        spinless = self.irrep.dim_spin == 1

        def mapped(v_tgt):
            v_src = self.inverse_points(v_tgt)
            w = self.weight(v_src)
            if spinless:
                return func(v_src) / w
            vals = func(v_src) / w[..., None]
            rot = self.spin_rotation(v_src)
            return np.einsum("...ab,...b->...a", rot, vals)

        return mapped


def form_map(target, source, irrep):
    """Basis-change realization mapping the source form into the target.

    Instant <- point is the dilation p = m u with Jacobian m^3; instant <->
    front exchanges (p+, p_perp) and p with Jacobian p+/p0 and a Melosh
    spin rotation; the remaining pair follows by composition.
    """
    if irrep.mass <= 0.0:
        raise ValueError("form_map requires a positive mass")
    return FormMapCoefficient(target=target, source=source, irrep=irrep)


def kinematic_subgroup_contains(form, lam, a=None, tol=1e-10):
    """Whether the Poincare element (lam, a) is kinematic for the form.

    instant: rotations with spatial translations; point: the full Lorentz
    group with no translation; front: the stabilizer of the x+ = 0 plane
    with translations inside it (a+ = 0).
    """
    lam = np.asarray(lam, dtype=float)
    if a is None:
        a = np.zeros(4)
    a = np.asarray(a, dtype=float)
    if not is_proper_orthochronous(lam, tol=tol):
        raise ValueError("transformation is not proper orthochronous")
    scale = max(1.0, float(np.max(np.abs(a))))

    if form is DynamicsForm.INSTANT:
        rest = lam @ np.array([1.0, 0.0, 0.0, 0.0])
        fixes_time = np.allclose(rest, [1.0, 0.0, 0.0, 0.0], atol=tol)
        return fixes_time and abs(a[0]) <= tol * scale
    if form is DynamicsForm.POINT:
        return bool(np.all(np.abs(a) <= tol * scale))

    # front: the row functional x -> (Lx)+ must be proportional to x -> x+
    row = lam[0] + lam[3]
    plane_ok = (
        abs(row[1]) <= tol and abs(row[2]) <= tol and abs(row[0] - row[3]) <= tol and row[0] > 0.0
    )
    return plane_ok and abs(a[0] + a[3]) <= tol * scale


def chart_grid(form, center, halfwidth, npts):
    """Tensor-product Gauss-Legendre quadrature box in a form's chart.

    Parameters
    ----------
    center, halfwidth : array-like, shape (3,)
        Box center and half-extents in chart coordinates.
    npts : int or (3,) ints
        Gauss-Legendre points per axis.

    Returns
    -------
    points : array, shape (N, 3)
    weights : array, shape (N,)
    """
    center = np.asarray(center, dtype=float)
    halfwidth = np.asarray(halfwidth, dtype=float)
    npts = np.broadcast_to(np.asarray(npts, dtype=int), (3,))
    if form is DynamicsForm.FRONT and center[0] - halfwidth[0] <= 0.0:
        raise FrontChartError("front-form grid box must satisfy p+ > 0")
    axes, wts = [], []
    for c, h, n in zip(center, halfwidth, npts):
        x, w = np.polynomial.legendre.leggauss(int(n))
        axes.append(c + h * x)
        wts.append(h * w)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    ww = (
        wts[0][:, None, None] * wts[1][None, :, None] * wts[2][None, None, :]
    ).reshape(-1)
    return pts, ww
