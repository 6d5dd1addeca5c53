"""Orchestration of solvers and cross-form verifications.

The reduced kernel is built once (it is form independent by construction);
each requested form then runs its own solver pipeline and the enabled
verifications compare the pipelines against each other and against the
analytic oracles.  All randomness is drawn from the configured seed, so a
given configuration always produces the same report.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .config import ModelConfig
from .coupling import (
    PairCoupling,
    TwoBodyChannel,
    ls_helicity_recoupling,
    recouple_kernel,
    verify_intertwining,
)
from .dynamics import (
    ProductState,
    WignerBlock,
    apply_dynamical_U,
    apply_kinematic_U,
    equivalence_unitary,
    realization_distance,
    state_norm,
    state_residual,
    verify_smatrix_equivalence,
    verify_wigner_relation,
)
from .formbasis import DynamicsForm, IrrepLabel, chart_grid, form_map
from .kinematics import transverse_front_boost
from .massop import (
    GaussianModel,
    ModelRejectionError,
    QuadratureGrid,
    ReducedSMatrix,
    build_kernel,
    dmass_dk,
    invariant_mass,
    model_from_spec,
    solve_bound_states,
    solve_scattering,
)
from .report import (
    PhaseShiftRow,
    RunReport,
    SpectrumRow,
    VerificationEntry,
    make_provenance,
)

TOLERANCES = {
    "spectrum-equality": (1e-10, "max<=tol"),
    "smatrix-equivalence": (1e-10, "max<=tol"),
    "smatrix-unitarity": (1e-8, "max<=tol"),
    "bound-state-oracle": (1e-8, "max<=tol"),
    "phase-shift-oracle": (1e-8, "max<=tol"),
    "kinematic-shortcut": (1e-6, "max<=tol"),
    "subgroup-sharpness": (1e-3, "min>=tol"),
    "equivalence-intertwining": (1e-6, "max<=tol"),
    "wigner-relation": (1e-8, "max<=tol"),
    "cg-intertwining": (1e-6, "max<=tol"),
    "form-map-norms": (1e-8, "max<=tol"),
    "recoupling": (1e-12, "max<=tol"),
}

_SEPARABLE = {"free", "gaussian", "yamaguchi"}


def worker_count():
    env = os.environ.get("BTFORMS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# deterministic helper geometry


def _rotation(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    out = np.eye(4)
    out[1:, 1:] = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
    return out


def _boost(axis, rapidity):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    out = np.eye(4)
    out[0, 0] = ch
    out[0, 1:] = sh * axis
    out[1:, 0] = sh * axis
    out[1:, 1:] = np.eye(3) + (ch - 1.0) * np.outer(axis, axis)
    return out


def _random_poincare(rng, rapidity, translation_scale):
    lam = _rotation(rng.normal(size=3), rng.uniform(0, 2.5)) @ _boost(
        rng.normal(size=3), rng.uniform(-rapidity, rapidity)
    )
    a = rng.normal(0.0, translation_scale, size=4)
    return lam, a


def _random_kinematic(form, rng, mass_scale):
    if form is DynamicsForm.INSTANT:
        return _rotation(rng.normal(size=3), rng.uniform(0.2, 2.5)), np.array(
            [0.0, *rng.normal(0.0, 1.0 / mass_scale, size=3)]
        )
    if form is DynamicsForm.POINT:
        lam = _rotation(rng.normal(size=3), rng.uniform(0.2, 2.5)) @ _boost(
            rng.normal(size=3), rng.uniform(-1.0, 1.0)
        )
        return lam, np.zeros(4)
    lam = (
        _rotation([0, 0, 1], rng.uniform(0.2, 2.5))
        @ _boost([0, 0, 1], rng.uniform(-0.8, 0.8))
        @ transverse_front_boost(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3))
    )
    a3 = rng.normal(0.0, 1.0 / mass_scale, size=3)
    return lam, np.array([a3[0], a3[1], a3[2], -a3[0]])


_NONKINEMATIC = {
    DynamicsForm.INSTANT: lambda: (_boost([0, 0, 1], 0.5), np.zeros(4)),
    DynamicsForm.POINT: lambda: (np.eye(4), np.array([0.7e-3, 0.0, 0.0, 0.0])),
    DynamicsForm.FRONT: lambda: (_boost([1, 0, 0], 0.5), np.zeros(4)),
}


class _Gaussian:
    def __init__(self, center, width):
        self.center = np.asarray(center, dtype=float)
        self.width = np.asarray(width, dtype=float)

    def __call__(self, v):
        z = (np.asarray(v) - self.center) / self.width
        return np.exp(-0.5 * np.sum(z * z, axis=-1)) + 0.0j


def _packet(form, config, threshold):
    w = config.packet_width
    if form is DynamicsForm.INSTANT:
        return _Gaussian([0.0, 0.0, 0.0], [w, w, w])
    if form is DynamicsForm.POINT:
        return _Gaussian([0.0, 0.0, 0.0], [w / threshold] * 3)
    return _Gaussian(
        [config.packet_pplus_center * threshold, 0.0, 0.0],
        [config.packet_pplus_width * threshold, w, w],
    )


def _residual_grid(form, threshold, npts=8):
    if form is DynamicsForm.INSTANT:
        return chart_grid(form, [0.0] * 3, [900.0] * 3, npts)
    if form is DynamicsForm.POINT:
        return chart_grid(form, [0.0] * 3, [0.5] * 3, npts)
    return chart_grid(form, [1.3 * threshold, 0.0, 0.0], [0.9 * threshold, 800.0, 800.0], npts)


def _internal_packet(grid):
    g = np.exp(-(grid.k**2) / (2.0 * (0.5 * grid.scale) ** 2))
    return (g / np.sqrt(np.sum(grid.weights_k2 * g * g))).reshape(1, -1)


# ---------------------------------------------------------------------------
# analytic oracles for the separable reference models


def _form_factor(config):
    name = config.potential
    if name == "free":
        return (lambda k: np.ones_like(np.asarray(k, dtype=float))), 0.0
    if name == "gaussian":
        rng_ = config.potential_params["range"]
        return (lambda k: np.exp(-np.asarray(k, dtype=float) ** 2 / rng_**2)), config.potential_params["strength"]
    if name == "yamaguchi":
        beta = config.potential_params["beta"]
        return (
            lambda k: 1.0 / (np.asarray(k, dtype=float) ** 2 + beta * beta)
        ), config.potential_params["strength"]
    raise ValueError(f"{name} is not a separable reference model")


def separable_bound_state(config):
    """Root of the rank-1 bound-state condition, or None if unbound."""
    g, strength = _form_factor(config)
    if strength == 0.0:
        return None
    m1, m2 = config.m1, config.m2
    thr = m1 + m2

    def condition(lam):
        f = lambda k: k * k * float(g(k)) ** 2 / (float(invariant_mass(k, m1, m2)) - lam)
        hi = 10.0 * config.grid_scale
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            v1, _ = quad(f, 0.0, hi, limit=400, epsabs=0.0, epsrel=1e-12)
            v2, _ = quad(f, hi, np.inf, limit=400, epsabs=0.0, epsrel=1e-12)
        return 1.0 - strength * (v1 + v2)

    lo = thr * 0.55
    hi = thr - 1e-9 * thr
    if condition(lo) * condition(hi) > 0:
        return None
    return brentq(condition, lo, hi, xtol=1e-10 * thr)


def separable_smatrix(config, k0):
    """Closed-form rank-1 S-matrix element at on-shell momentum k0."""
    g, strength = _form_factor(config)
    if strength == 0.0:
        return 1.0 + 0.0j
    m1, m2 = config.m1, config.m2
    m0 = float(invariant_mass(k0, m1, m2))
    mp0 = float(dmass_dk(k0, m1, m2))
    w10, w20 = np.hypot(k0, m1), np.hypot(k0, m2)

    def h(k):
        w1, w2 = np.hypot(k, m1), np.hypot(k, m2)
        denom = (k0 + k) * (1.0 / (w10 + w1) + 1.0 / (w20 + w2))
        return k * k * float(g(k)) ** 2 / denom

    v1, _ = quad(h, 0.0, 2 * k0, weight="cauchy", wvar=k0, limit=400, epsabs=0.0, epsrel=1e-12)
    tail = lambda k: k * k * float(g(k)) ** 2 / (m0 - float(invariant_mass(k, m1, m2)))
    v2, _ = quad(tail, 2 * k0, np.inf, limit=400, epsabs=0.0, epsrel=1e-12)
    pv = -v1 + v2
    kmat = -strength * float(g(k0)) ** 2 / (1.0 + strength * pv)
    rho = k0 * k0 / mp0
    return (1.0 - 1j * np.pi * rho * kmat) / (1.0 + 1j * np.pi * rho * kmat)


# ---------------------------------------------------------------------------
# run


def build_problem(config):
    grid = QuadratureGrid(config.grid_n, config.grid_scale, config.m1, config.m2)
    model = model_from_spec(config.potential, config.potential_params)
    if config.scheme == "spinless-l":
        labels = (int(round(config.j)),)
    elif config.scheme == "ls":
        from .coupling import ls_labels

        labels = ls_labels(config.j)
    else:
        from .coupling import helicity_labels

        labels = helicity_labels(config.j)
    kernel = build_kernel(
        model, grid, j=config.j, labels=labels, provenance=config.potential
    )
    return grid, kernel


def scatter_all_forms(config, kernel):
    """Per-form scattering solves, parallel over energies."""
    results = {}
    if not config.energies:
        return results
    energies = list(config.energies)
    threads = worker_count()
    for form in config.form_enums():
        if threads > 1 and len(energies) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                partial = list(
                    pool.map(lambda k0: solve_scattering(kernel, [k0]), energies)
                )
            results[form] = ReducedSMatrix(
                j=kernel.j,
                labels=kernel.labels,
                k_on=np.array(energies),
                masses=invariant_mass(
                    np.array(energies), kernel.grid.m1, kernel.grid.m2
                ),
                smatrix=np.concatenate([p.smatrix for p in partial], axis=0),
                t_on=np.concatenate([p.t_on for p in partial], axis=0),
            )
        else:
            results[form] = solve_scattering(kernel, energies)
    return results


ALL_TASKS = frozenset({"spectrum", "scatter", "verify"})


def run(config, tasks=ALL_TASKS):
    """Execute the pipeline for a configuration and build the report.

    ``tasks`` selects the stages: the CLI subcommands solve/scatter/verify
    map onto subsets, ``run`` does all three.  The spectrum is solved
    whenever verifications need it.
    """
    tasks = frozenset(tasks)
    report = RunReport(provenance=make_provenance(config))
    report.provenance["tasks"] = sorted(tasks)
    grid, kernel = build_problem(config)
    forms = config.form_enums()
    threshold = grid.threshold

    spectra = {}
    if "spectrum" in tasks or "verify" in tasks:
        try:
            for form in forms:
                spectra[form] = solve_bound_states(kernel)
            if "spectrum" in tasks:
                for form in forms:
                    for i, mass in enumerate(spectra[form].bound_masses):
                        report.spectra.append(
                            SpectrumRow(
                                form=form.value,
                                state_index=i,
                                mass_mev=float(mass),
                                binding_mev=float(threshold - mass),
                            )
                        )
        except ModelRejectionError as exc:
            report.solver_rejections.append(str(exc))
            spectra = {}

    smatrices = {}
    if "scatter" in tasks or "verify" in tasks:
        smatrices = scatter_all_forms(config, kernel)
    if "scatter" in tasks:
        for form in forms:
            if form not in smatrices:
                continue
            sol = smatrices[form]
            defect = sol.unitarity_defect()
            for i, k0 in enumerate(sol.k_on):
                s_el = sol.smatrix[i, 0, 0]
                report.phase_shifts.append(
                    PhaseShiftRow(
                        form=form.value,
                        k_mev=float(k0),
                        invariant_mass_mev=float(sol.masses[i]),
                        delta_rad=float(0.5 * np.angle(s_el)),
                        s_real=float(s_el.real),
                        s_imag=float(s_el.imag),
                        unitarity_defect=float(defect),
                    )
                )

    if "verify" not in tasks:
        return report

    effective = [v for v in config.verifications if _applicable(v, config)]
    report.provenance["verifications_requested"] = list(config.verifications)
    report.provenance["verifications_effective"] = effective

    margin_ok = config.packet_pplus_center - 4.0 * config.packet_pplus_width > 0.0
    if not margin_ok and DynamicsForm.FRONT in forms:
        report.verifications.append(
            VerificationEntry(
                name="front-chart-margin",
                forms="front",
                value=float(config.packet_pplus_center - 4.0 * config.packet_pplus_width),
                tolerance=0.0,
                comparison="min>=tol",
                passed=False,
                detail=(
                    "front-form packet leaves the p+ > 0 chart within four widths; "
                    "front-form packet verifications were skipped"
                ),
            )
        )

    ctx = _VerifyContext(config, grid, kernel, spectra, smatrices, margin_ok)
    for name in effective:
        report.verifications.append(ctx.dispatch(name))
    return report


def _applicable(name, config):
    if name in ("bound-state-oracle", "phase-shift-oracle"):
        if config.potential not in _SEPARABLE:
            return False
        if name == "phase-shift-oracle" and not config.energies:
            return False
    if name in ("smatrix-equivalence", "smatrix-unitarity") and not config.energies:
        return False
    if name == "spectrum-equality" and len(config.forms) < 2:
        return False
    if name in ("smatrix-equivalence", "equivalence-intertwining", "wigner-relation"):
        if len(config.forms) < 2:
            return False
    return True


class _VerifyContext:
    def __init__(self, config, grid, kernel, spectra, smatrices, margin_ok):
        self.config = config
        self.grid = grid
        self.kernel = kernel
        self.spectra = spectra
        self.smatrices = smatrices
        self.margin_ok = margin_ok
        self.forms = config.form_enums()
        self.threshold = grid.threshold
        self.rng = np.random.default_rng(config.seed)

    def tolerance(self, name):
        base, comparison = TOLERANCES[name]
        return base * self.config.tolerance_scale, comparison

    def entry(self, name, forms, value, detail=""):
        tol, comparison = self.tolerance(name)
        passed = value <= tol if comparison == "max<=tol" else value >= tol
        return VerificationEntry(
            name=name,
            forms=forms,
            value=float(value),
            tolerance=float(tol),
            comparison=comparison,
            passed=bool(passed),
            detail=detail,
        )

    def failed_entry(self, name, forms, detail):
        tol, comparison = self.tolerance(name)
        return VerificationEntry(
            name=name,
            forms=forms,
            value=float("nan"),
            tolerance=float(tol),
            comparison=comparison,
            passed=False,
            detail=detail,
        )

    def packet_forms(self):
        if self.margin_ok:
            return self.forms
        return tuple(f for f in self.forms if f is not DynamicsForm.FRONT)

    def spectrum(self):
        return next(iter(self.spectra.values()), None)

    def dispatch(self, name):
        handler = getattr(self, "verify_" + name.replace("-", "_"))
        return handler()

    # -- individual verifications ------------------------------------------

    def verify_spectrum_equality(self):
        if not self.spectra:
            return self.failed_entry(
                "spectrum-equality", "all", "no spectrum: model rejected"
            )
        forms = list(self.spectra)
        worst = 0.0
        base = self.spectra[forms[0]].eigenvalues
        for other in forms[1:]:
            ev = self.spectra[other].eigenvalues
            worst = max(worst, float(np.max(np.abs(ev - base) / np.abs(base))))
        label = ",".join(f.value for f in forms)
        return self.entry("spectrum-equality", label, worst)

    def verify_smatrix_equivalence(self):
        forms = list(self.smatrices)
        worst = 0.0
        for i in range(len(forms)):
            for j in range(i + 1, len(forms)):
                rep = verify_smatrix_equivalence(
                    self.smatrices[forms[i]],
                    self.smatrices[forms[j]],
                    forms[i],
                    forms[j],
                )
                worst = max(worst, rep.max_residual, rep.chart_roundtrip_defect)
        return self.entry(
            "smatrix-equivalence", ",".join(f.value for f in forms), worst
        )

    def verify_smatrix_unitarity(self):
        worst = max(
            (sol.unitarity_defect() for sol in self.smatrices.values()), default=0.0
        )
        return self.entry(
            "smatrix-unitarity", ",".join(f.value for f in self.smatrices), worst
        )

    def verify_bound_state_oracle(self):
        if not self.spectra:
            return self.failed_entry(
                "bound-state-oracle", "all", "no spectrum: model rejected"
            )
        reference = separable_bound_state(self.config)
        bound = self.spectrum().bound_masses
        if reference is None and bound.size == 0:
            return self.entry("bound-state-oracle", "all", 0.0, "unbound on both routes")
        if reference is None or bound.size == 0:
            return self.failed_entry(
                "bound-state-oracle",
                "all",
                f"oracle root {reference} vs solver states {bound.size}",
            )
        value = float(abs(bound[0] - reference) / reference)
        return self.entry("bound-state-oracle", "all", value)

    def verify_phase_shift_oracle(self):
        if not self.smatrices:
            return self.failed_entry("phase-shift-oracle", "all", "no scattering run")
        sol = next(iter(self.smatrices.values()))
        worst = 0.0
        for i, k0 in enumerate(sol.k_on):
            ref = separable_smatrix(self.config, float(k0))
            worst = max(worst, float(abs(sol.smatrix[i, 0, 0] - ref)))
        return self.entry("phase-shift-oracle", "all", worst)

    def verify_kinematic_shortcut(self):
        spectrum = self.spectrum()
        if spectrum is None:
            return self.failed_entry(
                "kinematic-shortcut", "all", "no spectrum: model rejected"
            )
        internal = _internal_packet(self.grid)
        worst = 0.0
        tested = []
        for form in self.packet_forms():
            state = ProductState(form, self.config.j, _packet(form, self.config, self.threshold), internal)
            pts, wts = _residual_grid(form, self.threshold)
            norm = state_norm(state, pts, wts, spectrum)
            for _ in range(5):
                lam, a = _random_kinematic(form, self.rng, self.threshold)
                via = apply_dynamical_U(state, lam, a, spectrum)
                short = apply_kinematic_U(state, lam, a)
                worst = max(
                    worst, state_residual(via, short, pts, wts, spectrum) / norm
                )
            tested.append(form.value)
        if not tested:
            return self.failed_entry(
                "kinematic-shortcut", "none", "all packet forms skipped"
            )
        return self.entry("kinematic-shortcut", ",".join(tested), worst)

    def verify_subgroup_sharpness(self):
        least = np.inf
        tested = []
        for form in self.forms:
            lam, a = _NONKINEMATIC[form]()
            pts = _residual_grid(form, self.threshold)[0]
            b1 = WignerBlock(form, 0.97 * self.threshold, self.config.j, lam, a)
            b2 = WignerBlock(form, 1.40 * self.threshold, self.config.j, lam, a)
            least = min(least, realization_distance(b1, b2, pts))
            tested.append(form.value)
        return self.entry("subgroup-sharpness", ",".join(tested), least)

    def verify_equivalence_intertwining(self):
        spectrum = self.spectrum()
        if spectrum is None:
            return self.failed_entry(
                "equivalence-intertwining", "all", "no spectrum: model rejected"
            )
        internal = _internal_packet(self.grid)
        forms = self.packet_forms()
        worst = 0.0
        labels = []
        for i in range(len(forms)):
            for j in range(len(forms)):
                if i == j:
                    continue
                fa, fb = forms[i], forms[j]
                gamma = equivalence_unitary(fa, fb, spectrum, self.config.j)
                pts, wts = _residual_grid(fa, self.threshold)
                for _ in range(3):
                    state = ProductState(
                        fb, self.config.j, _packet(fb, self.config, self.threshold), internal
                    )
                    norm = state_norm(
                        state, *_residual_grid(fb, self.threshold), spectrum
                    )
                    lam, a = _random_poincare(
                        self.rng, self.config.rapidity, 1.0 / self.threshold
                    )
                    lhs = gamma.apply(apply_dynamical_U(state, lam, a, spectrum))
                    rhs = apply_dynamical_U(gamma.apply(state), lam, a, spectrum)
                    worst = max(
                        worst, state_residual(lhs, rhs, pts, wts, spectrum) / norm
                    )
                labels.append(f"{fa.value}<-{fb.value}")
        if not labels:
            return self.failed_entry(
                "equivalence-intertwining", "none", "fewer than two usable forms"
            )
        return self.entry("equivalence-intertwining", ";".join(labels), worst)

    def verify_wigner_relation(self):
        forms = self.packet_forms()
        worst = 0.0
        labels = []
        mass = 1.05 * self.threshold
        for i in range(len(forms)):
            for j in range(len(forms)):
                if i == j:
                    continue
                fc, fb = forms[i], forms[j]
                pts, wts = _residual_grid(fc, self.threshold)
                packets = [_packet(fc, self.config, self.threshold)]
                for _ in range(5):
                    lam, a = _random_poincare(
                        self.rng, self.config.rapidity, 1.0 / self.threshold
                    )
                    worst = max(
                        worst,
                        verify_wigner_relation(
                            fc, fb, (mass, self.config.j), lam, a, packets, pts, wts
                        ),
                    )
                labels.append(f"{fc.value}|{fb.value}")
        if not labels:
            return self.failed_entry(
                "wigner-relation", "none", "fewer than two usable forms"
            )
        return self.entry("wigner-relation", ";".join(labels), worst)

    def verify_cg_intertwining(self):
        channel = TwoBodyChannel(self.config.m1, self.config.m2)
        sub = QuadratureGrid(16, self.grid.scale, self.config.m1, self.config.m2)
        k_nodes, k_weights = sub.k[2:10:2], sub.w[2:10:2]
        pts, wts = chart_grid(DynamicsForm.INSTANT, [0.0] * 3, [1100.0] * 3, 8)
        width = self.config.packet_width

        def packet(p1, p2):
            from .coupling import pair_jacobian, relative_from_pair

            pvec, kvec, _mass = relative_from_pair(p1, p2)
            kk = np.linalg.norm(kvec, axis=-1)
            f = np.exp(-0.5 * np.sum(pvec * pvec, axis=-1) / width**2)
            g = np.exp(-0.5 * kk**2 / (0.5 * self.grid.scale) ** 2)
            return f * g / np.sqrt(pair_jacobian(pvec, kvec, channel))

        coupling = PairCoupling(channel)
        worst = 0.0
        for _ in range(3):
            lam, a = _random_poincare(self.rng, self.config.rapidity, 1.0 / self.threshold)
            rep = verify_intertwining(
                lam, a, packet, channel, k_nodes, k_weights, pts, wts,
                l_max=1, coupling=coupling,
            )
            worst = max(worst, rep.relative_residual)
        return self.entry("cg-intertwining", "instant", worst)

    def verify_form_map_norms(self):
        worst = 0.0
        mass = self.threshold
        pairs = []
        usable = self.packet_forms()
        for fa in self.forms:
            for fb in usable:
                if fa is fb:
                    continue
                fmap = form_map(fa, fb, IrrepLabel(mass))
                packet = _packet(fb, self.config, mass)
                src_c, src_h = _clamp_front_box(fb, packet.center, 6.5 * packet.width)
                src_pts, src_w = chart_grid(fb, src_c, src_h, (48, 40, 40))
                n_src = float(np.sum(src_w * np.abs(packet(src_pts)) ** 2))
                floor = 1e-3 * mass if fb is DynamicsForm.FRONT else None
                c, h = _image_box(
                    fmap.map_points, packet.center, packet.width, floor=floor
                )
                c, h = _clamp_front_box(fa, c, h)
                npts = (128, 56, 56) if DynamicsForm.FRONT in (fa, fb) else (44, 44, 44)
                tgt_pts, tgt_w = chart_grid(fa, c, h, npts)
                vals = fmap.apply(packet)(tgt_pts)
                n_tgt = float(np.sum(tgt_w * np.abs(vals) ** 2))
                worst = max(worst, abs(n_tgt - n_src) / n_src)
                pairs.append(f"{fa.value}<-{fb.value}")
        if not pairs:
            return self.failed_entry("form-map-norms", "none", "no usable form pairs")
        return self.entry("form-map-norms", ";".join(pairs), worst)

    def verify_recoupling(self):
        # self-contained finite instance: distinct diagonal LS channels at
        # j = 1 conjugated to helicity labels
        reco = ls_helicity_recoupling(1)
        sub = QuadratureGrid(16, self.grid.scale, self.config.m1, self.config.m2)
        models = {
            lab: GaussianModel(strength=(1 + i) * 2e-6, range_=380.0)
            for i, lab in enumerate(reco.source_labels)
        }
        kern = build_kernel(models, sub, j=1.0, labels=reco.source_labels)
        hel = recouple_kernel(kern, reco)
        worst = reco.unitarity_defect()
        ev_a = solve_bound_states(kern).eigenvalues
        ev_b = solve_bound_states(hel).eigenvalues
        worst = max(worst, float(np.max(np.abs(ev_a - ev_b) / np.abs(ev_a))))
        hs_a = kern.hilbert_schmidt_norm()
        worst = max(worst, abs(hel.hilbert_schmidt_norm() - hs_a) / hs_a)
        return self.entry("recoupling", "all", worst)


def _clamp_front_box(form, center, halfwidth):
    """Shrink a front-chart box so it stays inside p+ > 0."""
    center = np.asarray(center, dtype=float).copy()
    halfwidth = np.asarray(halfwidth, dtype=float).copy()
    if form is DynamicsForm.FRONT and center[0] - halfwidth[0] <= 0.0:
        halfwidth[0] = 0.999 * center[0]
    return center, halfwidth


def _image_box(map_fn, center, halfwidth, nsigma=4.8, pad=1.03, floor=None):
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
