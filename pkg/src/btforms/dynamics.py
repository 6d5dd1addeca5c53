"""Dynamical unitary representations and the cross-form equivalence maps.

A state of the interacting two-body model is carried here in two
interchangeable shapes:

* ProductState: a chart function F(v) times an internal grid vector g(d, k)
* SpectralState: one chart function per mass eigenvalue of the spectrum

Finite Poincare transformations act blockwise at the dynamical masses.
Each block is realized as an exact pullback on chart functions (point map,
translation phase, Wigner spin rotation, analytic Jacobian weight), so
composite pipelines stay pointwise exact and residual checks measure the
operator identities themselves rather than interpolation error.

Sign conventions, fixed once: translations contribute exp(-i a.p) with
a.p = a0 p0 - avec.pvec, and group elements compose as
(L2, a2)(L1, a1) = (L2 L1, a2 + L2 a1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .formbasis import (
    DynamicsForm,
    IrrepLabel,
    chart_coordinates,
    chart_density_wrt_instant,
    form_map,
    kinematic_subgroup_contains,
    reconstruct_momentum,
    spin_kind,
)
from .kinematics import (
    is_proper_orthochronous,
    minkowski_dot,
    wigner_d_matrix,
    wigner_rotation,
)


class KinematicDomainError(ValueError):
    """A transformation outside the form's kinematic subgroup was rejected."""


class SpectralExpansionError(RuntimeError):
    """The internal vector is not resolved by the spectral basis."""


def compose_poincare(second, first):
    """(L2, a2) . (L1, a1) = (L2 L1, a2 + L2 a1)."""
    l2, a2 = second
    l1, a1 = first
    return l2 @ l1, np.asarray(a2) + np.asarray(l2) @ np.asarray(a1)


class WignerBlock:
    """Irreducible action of one Poincare element at fixed (mass, j).

    The realization consists of the chart point map v -> chart(L p(v)),
    the translation phase exp(-i a.p), the Wigner rotation of the form's
    boost kind, and the analytic chart Jacobian.  ``apply`` pulls a chart
    function back through the transformation; the forward pieces are
    exposed for tests and for the kinematic-subgroup diagnostics.
    """

    def __init__(self, form, mass, j, lam, a=None):
        if mass <= 0.0:
            raise ValueError("block mass must be positive")
        lam = np.asarray(lam, dtype=float)
        if not is_proper_orthochronous(lam):
            raise ValueError("transformation is not proper orthochronous")
        self.form = form
        self.mass = float(mass)
        self.j = float(j)
        self.lam = lam
        self.a = np.zeros(4) if a is None else np.asarray(a, dtype=float)
        self._lam_inv = np.linalg.inv(lam)
        self._kind = spin_kind(form)

    def map_points(self, v):
        p = reconstruct_momentum(self.form, v, self.mass)
        return chart_coordinates(self.form, p @ self.lam.T, self.mass)

    def jacobian(self, v):
        """det d(v')/dv of the forward point map, analytic."""
        p = reconstruct_momentum(self.form, v, self.mass)
        pl = p @ self.lam.T
        dens = chart_density_wrt_instant
        return (dens(self.form, pl, self.mass) * pl[..., 0]) / (
            dens(self.form, p, self.mass) * p[..., 0]
        )

    def phase(self, v):
        """Translation phase exp(-i a.p) at the chart point v."""
        p = reconstruct_momentum(self.form, v, self.mass)
        return np.exp(-1j * minkowski_dot(self.a, p))

    def rotation_so3(self, v):
        p = reconstruct_momentum(self.form, v, self.mass)
        return wigner_rotation(self.lam, p, self.mass, kind=self._kind)

    def apply(self, func):
        """Pullback: psi'(v) = phase(v) D^j(R_w) psi(chart(L^-1 p)) / sqrt(J)."""
        spinless = round(2 * self.j) == 0

        def transformed(v):
            p = reconstruct_momentum(self.form, v, self.mass)
            p_src = p @ self._lam_inv.T
            v_src = chart_coordinates(self.form, p_src, self.mass)
            dens = chart_density_wrt_instant
            jac = (dens(self.form, p, self.mass) * p[..., 0]) / (
                dens(self.form, p_src, self.mass) * p_src[..., 0]
            )
            phase = np.exp(-1j * minkowski_dot(self.a, p))
            if spinless:
                return phase * func(v_src) / np.sqrt(jac)
            rot = wigner_d_matrix(
                self.j, wigner_rotation(self.lam, p_src, self.mass, kind=self._kind)
            )
            vals = func(v_src) / np.sqrt(jac)[..., None]
            return phase[..., None] * np.einsum("...ab,...b->...a", rot, vals)

        return transformed


def wigner_block(form, irrep, lam, a=None):
    """WignerBlock for an (mass, j) irrep; irrep may be an IrrepLabel."""
    if isinstance(irrep, IrrepLabel):
        mass, j = irrep.mass, irrep.j
    else:
        mass, j = irrep
    return WignerBlock(form, mass, j, lam, a)


def realization_distance(block_a, block_b, probes):
    """Worst relative disagreement of two block realizations at probe points.

    Used to show the kinematic subgroup is sharp: for kinematic elements
    blocks at different masses coincide pointwise, for non-kinematic ones
    they must differ.
    """
    probes = np.asarray(probes, dtype=float)
    pa, pb = block_a.map_points(probes), block_b.map_points(probes)
    scale = np.maximum(1.0, np.maximum(np.abs(pa), np.abs(pb)))
    d_map = np.max(np.abs(pa - pb) / scale)
    d_jac = np.max(np.abs(block_a.jacobian(probes) - block_b.jacobian(probes)))
    d_phase = np.max(np.abs(block_a.phase(probes) - block_b.phase(probes)))
    d_rot = np.max(np.abs(block_a.rotation_so3(probes) - block_b.rotation_so3(probes)))
    return float(max(d_map, d_jac, d_phase, d_rot))


# ---------------------------------------------------------------------------
# model states


@dataclass
class ProductState:
    """Chart function times internal grid vector, in one form's basis."""

    form: DynamicsForm
    j: float
    vfunc: object  # callable (..., 3) -> complex
    internal: np.ndarray  # (nd, N) complex amplitudes on the kernel grid

    def copy_with(self, vfunc=None, internal=None):
        return ProductState(
            self.form,
            self.j,
            self.vfunc if vfunc is None else vfunc,
            self.internal if internal is None else internal,
        )


@dataclass
class SpectralState:
    """Mass-eigenbasis expansion: one chart function per eigenvalue."""

    form: DynamicsForm
    j: float
    spectrum: object  # SpectrumSolution
    blocks: dict  # eigenvalue index -> callable


def _scaled(func, factor):
    return lambda v: factor * func(v)


def expand_to_spectral(state, spectrum, tail_budget=1e-6):
    """Expand a ProductState over the mass eigenbasis.

    The Nystrom eigenbasis is complete on the grid, so the reconstruction
    tail is a pure consistency check; a violation means the internal vector
    does not live on the spectrum's grid.
    """
    if isinstance(state, SpectralState):
        if state.spectrum is not spectrum:
            raise SpectralExpansionError("state belongs to a different spectrum")
        return state
    coeffs = spectrum.expand(state.internal)
    keep = np.abs(coeffs) > 1e-14 * np.max(np.abs(coeffs))
    back = spectrum.synthesize(np.where(keep, coeffs, 0.0))
    norm = np.sqrt(spectrum.norm_sq(state.internal))
    tail = np.sqrt(spectrum.norm_sq(back - state.internal))
    if norm > 0 and tail > tail_budget * norm:
        raise SpectralExpansionError(
            f"spectral reconstruction tail {tail / norm:.3e} exceeds budget"
        )
    blocks = {
        idx: _scaled(state.vfunc, coeffs[idx])
        for idx in range(coeffs.size)
        if keep[idx]
    }
    return SpectralState(state.form, state.j, spectrum, blocks)


def synthesize_product_basis(spectral_state, points):
    """Dense kinematic-basis amplitudes Psi[point, d, k] of a SpectralState."""
    spec = spectral_state.spectrum
    npts = np.asarray(points).shape[0]
    nd, n = spec.n_channels, spec.grid.n
    out = np.zeros((npts, nd, n), dtype=complex)
    for idx, func in spectral_state.blocks.items():
        out += func(points)[:, None, None] * spec.wavefunction_k(idx)[None, :, :]
    return out


def apply_dynamical_U(state, lam, a, spectrum):
    """Finite Poincare transformation of the interacting representation.

    Expands in mass eigenstates, acts with the Wigner block at each mass
    eigenvalue, and returns the result in the spectral shape (exact
    resynthesis to the kinematic basis is available on demand).
    """
    spectral = expand_to_spectral(state, spectrum)
    evs = spectrum.eigenvalues
    blocks = {
        idx: WignerBlock(spectral.form, evs[idx], spectral.j, lam, a).apply(func)
        for idx, func in spectral.blocks.items()
    }
    return SpectralState(spectral.form, spectral.j, spectrum, blocks)


def apply_kinematic_U(state, lam, a=None):
    """Mass-independent action for kinematic (lam, a); no spectral data used.

    Raises KinematicDomainError outside the form's kinematic subgroup.
    """
    a = np.zeros(4) if a is None else np.asarray(a, dtype=float)
    if not kinematic_subgroup_contains(state.form, lam, a):
        raise KinematicDomainError(
            f"(lam, a) is not kinematic for the {state.form.value} form"
        )
    if isinstance(state, ProductState):
        # any reference mass gives the same realization on the subgroup
        ref = WignerBlock(state.form, 1.0, state.j, lam, a)
        return state.copy_with(vfunc=ref.apply(state.vfunc))
    ref = WignerBlock(state.form, 1.0, state.j, lam, a)
    blocks = {idx: ref.apply(func) for idx, func in state.blocks.items()}
    return SpectralState(state.form, state.j, state.spectrum, blocks)


# ---------------------------------------------------------------------------
# quadrature norms and residuals


def state_norm(state, points, weights, spectrum=None):
    """L2 norm under the form's chart measure times the grid measure."""
    if isinstance(state, ProductState):
        if spectrum is None:
            raise ValueError("state_norm of a ProductState needs the spectrum")
        state = expand_to_spectral(state, spectrum)
    total = 0.0
    for func in state.blocks.values():
        vals = func(points)
        total += float(np.sum(weights * np.abs(vals) ** 2))
    return np.sqrt(total)


def state_residual(state_a, state_b, points, weights, spectrum=None):
    """L2 distance of two states over a shared quadrature grid."""
    if spectrum is None:
        for st in (state_a, state_b):
            if isinstance(st, SpectralState):
                spectrum = st.spectrum
                break
        else:
            raise ValueError("state_residual of ProductStates needs the spectrum")
    sa = expand_to_spectral(state_a, spectrum)
    sb = expand_to_spectral(state_b, spectrum)
    if sa.spectrum is not sb.spectrum:
        raise SpectralExpansionError("states expanded over different spectra")
    if sa.form is not sb.form:
        raise ValueError("states live in different form charts")
    total = 0.0
    zero = lambda v: np.zeros(np.asarray(v).shape[0], dtype=complex)
    for idx in set(sa.blocks) | set(sb.blocks):
        fa = sa.blocks.get(idx, zero)
        fb = sb.blocks.get(idx, zero)
        diff = fa(points) - fb(points)
        total += float(np.sum(weights * np.abs(diff) ** 2))
    return np.sqrt(total)


# ---------------------------------------------------------------------------
# cross-form equivalence


class EquivalenceUnitary:
    """Unitary intertwining the dynamical representations of two forms.

    Acts blockwise: at each mass eigenvalue the kinematic basis change is
    evaluated at the dynamical mass, while the internal wave functions are
    left untouched (they are identical in all forms).
    """

    def __init__(self, target_form, source_form, spectrum, j=0.0):
        self.target_form = target_form
        self.source_form = source_form
        self.spectrum = spectrum
        self.j = float(j)

    def block_map(self, mass):
        return form_map(self.target_form, self.source_form, IrrepLabel(mass, self.j))

    def apply(self, state):
        spectral = expand_to_spectral(state, self.spectrum)
        if spectral.form is not self.source_form:
            raise ValueError(
                f"state is in the {spectral.form.value} form, expected "
                f"{self.source_form.value}"
            )
        evs = self.spectrum.eigenvalues
        blocks = {
            idx: self.block_map(evs[idx]).apply(func)
            for idx, func in spectral.blocks.items()
        }
        return SpectralState(self.target_form, spectral.j, self.spectrum, blocks)

    def inverse(self):
        return EquivalenceUnitary(
            self.source_form, self.target_form, self.spectrum, self.j
        )


def equivalence_unitary(target_form, source_form, spectrum, j=0.0):
    return EquivalenceUnitary(target_form, source_form, spectrum, j)


def relate_irreducible_vectors(state, target_form, spectrum, j=0.0):
    """Move a dynamical state between form charts at the dynamical masses."""
    source = state.form
    return EquivalenceUnitary(target_form, source, spectrum, j).apply(state)


def verify_wigner_relation(
    form_c, form_b, irrep, lam, a, packets, points, weights
):
    """Residual of the cross-form Wigner-function identity.

    Compares D-in-c against A(c<-b) D-in-b A(b<-c) applied to sampled
    packets on a chart-c quadrature grid; returns the worst relative L2
    residual.
    """
    if isinstance(irrep, IrrepLabel):
        mass, j = irrep.mass, irrep.j
    else:
        mass, j = irrep
    irrep_label = IrrepLabel(mass, j)
    block_c = WignerBlock(form_c, mass, j, lam, a)
    block_b = WignerBlock(form_b, mass, j, lam, a)
    to_b = form_map(form_b, form_c, irrep_label)
    to_c = form_map(form_c, form_b, irrep_label)
    worst = 0.0
    for packet in packets:
        lhs = block_c.apply(packet)(points)
        rhs = to_c.apply(block_b.apply(to_b.apply(packet)))(points)
        num = np.sqrt(np.sum(weights * np.abs(lhs - rhs) ** 2))
        den = np.sqrt(np.sum(weights * np.abs(lhs) ** 2))
        worst = max(worst, num / den)
    return worst


@dataclass
class SMatrixEquivalenceReport:
    max_residual: float
    chart_roundtrip_defect: float
    energies_match: bool

    @property
    def passed(self):
        return self.energies_match and self.max_residual < 1e-10


def verify_smatrix_equivalence(s_a, s_b, form_a, form_b, probe_points=None):
    """Compare two reduced S-matrices after the cross-form variable change.

    The basis change acts only on the chart variables, which the reduced
    matrices do not carry, so after verifying that the chart map composed
    with its inverse is the identity realization the reduced matrices are
    compared elementwise on the shared on-shell set.
    """
    if s_a.k_on.shape != s_b.k_on.shape or not np.allclose(
        s_a.k_on, s_b.k_on, rtol=1e-12
    ):
        raise ValueError("mismatched on-shell energy grids")
    defect = 0.0
    if form_a is not form_b:
        for m0 in s_a.masses:
            irrep = IrrepLabel(float(m0), s_a.j)
            fwd = form_map(form_b, form_a, irrep)
            rev = form_map(form_a, form_b, irrep)
            if probe_points is None:
                probes = np.array(
                    [[0.22 * m0, 0.05 * m0, -0.08 * m0], [0.05 * m0, 0.0, 0.3 * m0]]
                )
                if form_a is DynamicsForm.FRONT:
                    probes[:, 0] = np.abs(probes[:, 0]) + 0.5 * m0
            else:
                probes = probe_points
            back = rev.map_points(fwd.map_points(probes))
            scale = np.maximum(1.0, np.abs(probes))
            defect = max(defect, float(np.max(np.abs(back - probes) / scale)))
            wprod = fwd.weight(probes) * rev.weight(fwd.map_points(probes))
            defect = max(defect, float(np.max(np.abs(wprod - 1.0))))
    resid = float(np.max(np.abs(s_a.smatrix - s_b.smatrix)))
    return SMatrixEquivalenceReport(
        max_residual=resid,
        chart_roundtrip_defect=defect,
        energies_match=True,
    )
