"""Two-body invariant-mass operator: kernels, bound states, scattering.

The interacting mass operator is m + V with a reduced kernel
<m, d || V^j || m', d'> that carries no dependence on the one-body chart
variables; everything here is therefore deliberately form-agnostic.
Kernels and solvers work in the relative-momentum chart k, with
m(k) = sqrt(k^2 + m1^2) + sqrt(k^2 + m2^2) and the dm/dk Jacobian carried
explicitly, so the operator is exactly the reduced mass-chart kernel while
the quadrature never sees the threshold square-root singularity.

Solvers: a dense symmetric Nystrom eigensolve for the spectrum, and a
partial-wave Lippmann-Schwinger solve with the standard add-and-subtract
treatment of the principal-value singularity for the reduced S-matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ModelRejectionError(Exception):
    """The discretized mass operator is not positive: model rejected."""


class NodeCollisionError(ValueError):
    """An on-shell momentum coincides with a quadrature node."""


def invariant_mass(k, m1, m2):
    """Two-body invariant mass m(k) of the relative-momentum chart."""
    k = np.asarray(k, dtype=float)
    return np.sqrt(k * k + m1 * m1) + np.sqrt(k * k + m2 * m2)


def dmass_dk(k, m1, m2):
    k = np.asarray(k, dtype=float)
    w1 = np.sqrt(k * k + m1 * m1)
    w2 = np.sqrt(k * k + m2 * m2)
    return k * (w1 + w2) / (w1 * w2)


def momentum_of_mass(m, m1, m2):
    """Inverse chart map k(m), from the triangle function."""
    m = np.asarray(m, dtype=float)
    ksq = (m * m - (m1 + m2) ** 2) * (m * m - (m1 - m2) ** 2) / (4.0 * m * m)
    return np.sqrt(np.maximum(ksq, 0.0))


class QuadratureGrid:
    """Gauss-Legendre nodes mapped to k = c (1+x)/(1-x) on (0, inf).

    Parameters
    ----------
    n : int
        Number of nodes (>= 16 for production use).
    scale : float
        Map scale c in MeV; half the nodes fall below k = c.
    m1, m2 : float
        Constituent masses, fixing the derived mass nodes m_i = m(k_i).
    """

    def __init__(self, n, scale, m1, m2):
        if n < 2:
            raise ValueError("grid needs at least two nodes")
        if scale <= 0.0 or m1 <= 0.0 or m2 <= 0.0:
            raise ValueError("scale and masses must be positive")
        x, wx = np.polynomial.legendre.leggauss(int(n))
        self.n = int(n)
        self.scale = float(scale)
        self.m1 = float(m1)
        self.m2 = float(m2)
        self.k = scale * (1.0 + x) / (1.0 - x)
        self.w = wx * 2.0 * scale / (1.0 - x) ** 2
        self.mass = invariant_mass(self.k, m1, m2)
        self.dm_dk = dmass_dk(self.k, m1, m2)

    @property
    def threshold(self):
        return self.m1 + self.m2

    @property
    def weights_k2(self):
        """Quadrature weights for the k^2 dk measure."""
        return self.w * self.k**2


# ---------------------------------------------------------------------------
# reference interaction models


@dataclass(frozen=True)
class GaussianModel:
    """Separable Gaussian well V(k, k') = -strength exp(-(k^2+k'^2)/range^2).

    strength in MeV^-2, range in MeV.
    """

    strength: float
    range_: float

    def __post_init__(self):
        if self.range_ <= 0.0:
            raise ValueError("gaussian range must be positive")

    def __call__(self, k, kp):
        k = np.asarray(k, dtype=float)
        kp = np.asarray(kp, dtype=float)
        return -self.strength * np.exp(-(k * k + kp * kp) / self.range_**2)


@dataclass(frozen=True)
class YamaguchiModel:
    """Rank-1 separable model -strength g(k) g(k') with g = 1/(k^2 + beta^2).

    strength in MeV^2, beta in MeV.
    """

    strength: float
    beta: float

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError("yamaguchi beta must be positive")

    def form_factor(self, k):
        k = np.asarray(k, dtype=float)
        return 1.0 / (k * k + self.beta * self.beta)

    def __call__(self, k, kp):
        return -self.strength * self.form_factor(k) * self.form_factor(kp)


@dataclass(frozen=True)
class LocalGaussianWellModel:
    """s-wave kernel of a local Gaussian well, depth in MeV, range in MeV.

    The momentum representation of -depth * exp(-(r * range / 2)^2) in the
    s wave; a deep well hosts several bound states, unlike the rank-1
    separable models.
    """

    depth: float
    range_: float

    def __post_init__(self):
        if self.range_ <= 0.0:
            raise ValueError("well range must be positive")

    def __call__(self, k, kp):
        k = np.asarray(k, dtype=float)
        kp = np.asarray(kp, dtype=float)
        lam2 = self.range_**2
        pref = -self.depth / (np.sqrt(np.pi) * self.range_)
        return (
            pref
            * np.exp(-((k - kp) ** 2) / lam2)
            * (-np.expm1(-4.0 * k * kp / lam2))
            / (k * kp)
        )


def model_from_spec(name, params):
    """Instantiate a bundled reference model from a config-style mapping."""
    name = name.lower()
    if name == "free":
        return GaussianModel(strength=0.0, range_=params.get("range", 100.0))
    if name == "gaussian":
        return GaussianModel(strength=params["strength"], range_=params["range"])
    if name == "yamaguchi":
        return YamaguchiModel(strength=params["strength"], beta=params["beta"])
    if name == "gausswell":
        return LocalGaussianWellModel(depth=params["depth"], range_=params["range"])
    raise ValueError(f"unknown potential model {name!r}")


def _pairwise(model, k, kp):
    """Model values on the outer product of two momentum arrays."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    kp = np.atleast_1d(np.asarray(kp, dtype=float))
    kk, pp = np.meshgrid(k, kp, indexing="ij")
    return np.asarray(model(kk, pp))


@dataclass
class InteractionKernel:
    """Reduced interaction kernel on a quadrature grid.

    values[d, i, d', i'] approximates the reduced kernel between degeneracy
    channels d, d' at momenta k_i, k_i'.  ``evaluate`` extends it to
    off-grid momenta (needed at on-shell points), so recoupled kernels stay
    exact rather than interpolated.  Deliberately carries no form tag.
    """

    j: float
    labels: tuple
    grid: QuadratureGrid
    values: np.ndarray
    evaluate: Callable
    provenance: str

    @property
    def n_channels(self):
        return len(self.labels)

    def flat(self):
        nd, n = self.n_channels, self.grid.n
        return self.values.reshape(nd * n, nd * n)

    def hermiticity_residual(self):
        flat = self.flat()
        return float(np.max(np.abs(flat - flat.conj().T)))

    def hilbert_schmidt_norm(self):
        """HS norm under the grid k^2 dk measure."""
        wt = np.sqrt(np.tile(self.grid.weights_k2, self.n_channels))
        flat = self.flat() * wt[:, None] * wt[None, :]
        return float(np.linalg.norm(flat))


def build_kernel(model, grid, j=0.0, labels=None, provenance=None):
    """Evaluate a reduced kernel on the grid.

    Parameters
    ----------
    model : callable or mapping
        Either one model applied to every diagonal degeneracy channel, or a
        mapping label -> model for channel-dependent diagonal kernels.
    grid : QuadratureGrid
    j : float
        Channel spin.
    labels : tuple, optional
        Degeneracy labels; defaults to the single spinless channel (l = j,).
    """
    if labels is None:
        labels = (int(round(j)),)
    labels = tuple(labels)
    nd = len(labels)
    if isinstance(model, dict):
        models = [model[lab] for lab in labels]
    else:
        models = [model] * nd

    def evaluate(k, kp):
        k = np.atleast_1d(np.asarray(k, dtype=float))
        kp = np.atleast_1d(np.asarray(kp, dtype=float))
        out = np.zeros((nd, k.size, nd, kp.size))
        for d, mod in enumerate(models):
            out[d, :, d, :] = _pairwise(mod, k, kp)
        return out

    values = evaluate(grid.k, grid.k)
    kern = InteractionKernel(
        j=float(j),
        labels=labels,
        grid=grid,
        values=values,
        evaluate=evaluate,
        provenance=provenance or repr(model),
    )
    resid = kern.hermiticity_residual()
    if resid > 1e-12 * max(1.0, float(np.max(np.abs(values)))):
        raise ValueError(f"kernel is not Hermitian (residual {resid:.3e})")
    return kern


# ---------------------------------------------------------------------------
# spectrum


class SpectrumSolution:
    """Eigenvalues and internal wave functions of the mass operator.

    The full Nystrom eigenbasis is kept: it is complete on the grid and
    plays the role of the continuum in spectral expansions.
    """

    def __init__(self, grid, labels, eigenvalues, vectors):
        self.grid = grid
        self.labels = labels
        self.eigenvalues = eigenvalues  # ascending
        self.vectors = vectors  # columns, orthonormal in the plain L2 sense
        nd = len(labels)
        self._sqrt_wt = np.sqrt(np.tile(grid.weights_k2, nd))

    @property
    def n_channels(self):
        return len(self.labels)

    @property
    def bound_masses(self):
        return self.eigenvalues[self.eigenvalues < self.grid.threshold]

    def wavefunction_k(self, idx):
        """Internal wave function in the k chart, shape (nd, N)."""
        phi = self.vectors[:, idx] / self._sqrt_wt
        return phi.reshape(self.n_channels, self.grid.n)

    def wavefunction_m(self, idx):
        """Internal wave function in the mass chart, shape (nd, N)."""
        phi = self.wavefunction_k(idx)
        return phi * self.grid.k / np.sqrt(self.grid.dm_dk)

    def expand(self, g):
        """Coefficients of a grid function g(d, i) over the eigenbasis."""
        g = np.asarray(g)
        flat = g.reshape(-1) * self._sqrt_wt
        return self.vectors.conj().T @ flat

    def synthesize(self, coeffs):
        """Grid function from eigenbasis coefficients (inverse of expand)."""
        flat = self.vectors @ np.asarray(coeffs)
        return (flat / self._sqrt_wt).reshape(self.n_channels, self.grid.n)

    def norm_sq(self, g):
        g = np.asarray(g).reshape(-1)
        return float(np.sum(np.abs(g) ** 2 * self._sqrt_wt**2))


def mass_operator_matrix(kernel):
    """Symmetrized Nystrom matrix of m + V on the grid."""
    grid = kernel.grid
    nd = kernel.n_channels
    sqrt_wt = np.sqrt(np.tile(grid.weights_k2, nd))
    mdiag = np.tile(grid.mass, nd)
    return np.diag(mdiag) + sqrt_wt[:, None] * kernel.flat() * sqrt_wt[None, :]


def solve_bound_states(kernel):
    """Diagonalize the discretized mass operator.

    Returns the full SpectrumSolution (bound states are the eigenvalues
    below threshold).  Raises ModelRejectionError if the spectrum is not
    positive, which signals an inadmissible interaction rather than a
    numerical failure.
    """
    mat = mass_operator_matrix(kernel)
    vals, vecs = np.linalg.eigh(mat)
    if vals[0] <= 0.0:
        raise ModelRejectionError(
            f"mass operator not positive: lowest eigenvalue {vals[0]:.6e} MeV"
        )
    return SpectrumSolution(kernel.grid, kernel.labels, vals, vecs)


# ---------------------------------------------------------------------------
# scattering


@dataclass
class ReducedSMatrix:
    """Reduced S-matrix <d || S^{m j} || d'> on a set of on-shell points."""

    j: float
    labels: tuple
    k_on: np.ndarray  # on-shell relative momenta
    masses: np.ndarray  # corresponding invariant masses
    smatrix: np.ndarray  # (nE, nd, nd) complex
    t_on: np.ndarray  # (nE, nd, nd) complex half-shell T at the on-shell point

    @property
    def phase_shifts(self):
        """Single-channel phase shifts delta(k) in radians."""
        if self.smatrix.shape[-1] != 1:
            raise ValueError("phase shifts are defined for single-channel S")
        return 0.5 * np.angle(self.smatrix[:, 0, 0])

    def unitarity_defect(self):
        """max |S S^dag - 1| over the energy set."""
        eye = np.eye(self.smatrix.shape[-1])
        prods = self.smatrix @ np.swapaxes(self.smatrix, -1, -2).conj()
        return float(np.max(np.abs(prods - eye)))


def solve_scattering(kernel, k_on, outgoing=True):
    """Half-on-shell Lippmann-Schwinger solve at the given momenta.

    The principal-value singularity of the resolvent 1/(m(k0) - m(k)) is
    handled by the standard subtraction: the vanishing principal value of
    1/(k0^2 - k^2) over (0, inf) is added and subtracted so the quadrature
    only ever sees a smooth integrand.  With ``outgoing`` the -i pi on-shell
    term is included and S = 1 - 2 pi i rho T; otherwise the real
    standing-wave (K-matrix) problem is solved.

    Raises NodeCollisionError when k0 falls on a quadrature node.
    """
    grid = kernel.grid
    nd = kernel.n_channels
    n = grid.n
    k_on = np.atleast_1d(np.asarray(k_on, dtype=float))
    if np.any(k_on <= 0.0):
        raise ValueError("on-shell momenta must be positive")

    smats = np.empty((k_on.size, nd, nd), dtype=complex)
    tmats = np.empty_like(smats)
    for ie, k0 in enumerate(k_on):
        if np.min(np.abs(grid.k - k0)) < 1e-8 * grid.scale:
            raise NodeCollisionError(
                f"on-shell momentum {k0} collides with a quadrature node; "
                "shift the energy or change the grid"
            )
        m0 = float(invariant_mass(k0, grid.m1, grid.m2))
        mprime = float(dmass_dk(k0, grid.m1, grid.m2))
        rho = k0 * k0 / mprime  # density of states dm -> k0^2 dk

        kfull = np.concatenate([grid.k, [k0]])
        vfull = kernel.evaluate(kfull, kfull)  # (nd, n+1, nd, n+1)

        u = np.empty(n + 1, dtype=complex)
        u[:n] = grid.weights_k2 / (m0 - grid.mass)
        # subtraction constant: residue of the principal-value pole
        sub = np.sum(grid.w / (k0 * k0 - grid.k**2))
        u[n] = -2.0 * k0**3 / mprime * sub
        if outgoing:
            u[n] -= 1j * np.pi * rho

        dim = nd * (n + 1)
        vmat = vfull.reshape(dim, dim)
        amat = np.eye(dim, dtype=complex) - vmat * np.tile(u, nd)[None, :]
        tmat = np.linalg.solve(amat, vmat.astype(complex))
        ton = tmat.reshape(nd, n + 1, nd, n + 1)[:, n, :, n]
        tmats[ie] = ton
        smats[ie] = np.eye(nd) - 2j * np.pi * rho * ton

    return ReducedSMatrix(
        j=kernel.j,
        labels=kernel.labels,
        k_on=k_on,
        masses=invariant_mass(k_on, grid.m1, grid.m2),
        smatrix=smats,
        t_on=tmats,
    )


# ---------------------------------------------------------------------------
# cross-validation of the two solvers


def kernel_table(kernel):
    """Text-table serialization of a kernel (same CSV dialect as exports).

    Columns: d, i, d', i', k_i, k_i', value; floats carry 17 significant
    digits so the table round-trips losslessly.
    """
    lines = ["d,i,dp,ip,k_mev,kp_mev,value"]
    grid = kernel.grid
    for d in range(kernel.n_channels):
        for i in range(grid.n):
            for dp in range(kernel.n_channels):
                for ip in range(grid.n):
                    lines.append(
                        f"{d},{i},{dp},{ip},{grid.k[i]:.17g},{grid.k[ip]:.17g},"
                        f"{kernel.values[d, i, dp, ip]:.17g}"
                    )
    return "\n".join(lines) + "\n"


def parse_kernel_table(text):
    """Kernel values array from a kernel_table string."""
    rows = text.strip().splitlines()
    header = rows[0].split(",")
    if header != ["d", "i", "dp", "ip", "k_mev", "kp_mev", "value"]:
        raise ValueError("unrecognized kernel table header")
    cells = [row.split(",") for row in rows[1:]]
    nd = max(int(c[0]) for c in cells) + 1
    n = max(int(c[1]) for c in cells) + 1
    values = np.zeros((nd, n, nd, n))
    for c in cells:
        values[int(c[0]), int(c[1]), int(c[2]), int(c[3])] = float(c[6])
    return values


def spectrum_table(spectrum):
    """Text-table serialization of eigenvalues and internal wave functions.

    Columns: state, eigenvalue_mev, d, i, k_mev, m_mev, psi_k, psi_m; one
    row per (state, channel, grid node).
    """
    lines = ["state,eigenvalue_mev,d,i,k_mev,m_mev,psi_k,psi_m"]
    grid = spectrum.grid
    for idx in range(spectrum.eigenvalues.size):
        phi_k = spectrum.wavefunction_k(idx)
        phi_m = spectrum.wavefunction_m(idx)
        for d in range(spectrum.n_channels):
            for i in range(grid.n):
                lines.append(
                    f"{idx},{spectrum.eigenvalues[idx]:.17g},{d},{i},"
                    f"{grid.k[i]:.17g},{grid.mass[i]:.17g},"
                    f"{phi_k[d, i]:.17g},{phi_m[d, i]:.17g}"
                )
    return "\n".join(lines) + "\n"


def fredholm_determinant(kernel, lam):
    """det(1 + (m - lam)^-1 V) on the grid, for lam below threshold."""
    grid = kernel.grid
    nd = kernel.n_channels
    gdiag = 1.0 / (np.tile(grid.mass, nd) - lam)
    if np.any(gdiag <= 0.0):
        raise ValueError("determinant scan is defined below threshold only")
    sq = np.sqrt(gdiag) * np.sqrt(np.tile(grid.weights_k2, nd))
    mat = np.eye(nd * grid.n) + sq[:, None] * kernel.flat() * sq[None, :]
    return float(np.linalg.det(mat))


@dataclass
class PoleConsistencyReport:
    scan_masses: np.ndarray
    determinants: np.ndarray
    brackets: list
    bound_masses: np.ndarray
    consistent: bool


def bound_state_pole_consistency(kernel, depth=None, n_scan=512):
    """Check that determinant sign changes bracket the Nystrom eigenvalues.

    Scans the Fredholm determinant below threshold; each sign change is an
    analytic-continuation indicator of a bound-state pole and must bracket
    an eigenvalue of solve_bound_states within one scan step.
    """
    grid = kernel.grid
    if depth is None:
        depth = 0.5 * grid.threshold
    lams = np.linspace(grid.threshold - depth, grid.threshold - 1e-9 * grid.threshold, n_scan)
    dets = np.array([fredholm_determinant(kernel, lam) for lam in lams])
    brackets = [
        (float(lams[i]), float(lams[i + 1]))
        for i in range(n_scan - 1)
        if dets[i] * dets[i + 1] < 0.0
    ]
    bound = solve_bound_states(kernel).bound_masses
    step = lams[1] - lams[0]
    consistent = len(brackets) == len(
        [b for b in bound if b >= lams[0]]
    ) and all(
        any(lo - step <= b <= hi + step for b in bound) for lo, hi in brackets
    )
    return PoleConsistencyReport(
        scan_masses=lams,
        determinants=dets,
        brackets=brackets,
        bound_masses=bound,
        consistent=consistent,
    )
