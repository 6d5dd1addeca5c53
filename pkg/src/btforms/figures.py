"""Figure rendering for run reports.

Phase shifts, bound-state levels, and verification residuals are drawn to
PNG files next to the delimited output.  Rendering is best-effort plumbing
for human inspection; the CSV/JSON files remain the machine interface.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_FORM_COLORS = {"instant": "tab:blue", "point": "tab:orange", "front": "tab:green"}
_FORM_MARKERS = {"instant": "o", "point": "s", "front": "^"}


def render_phase_shifts(report, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    forms = sorted({r.form for r in report.phase_shifts})
    for form in forms:
        rows = [r for r in report.phase_shifts if r.form == form]
        ks = [r.k_mev for r in rows]
        deltas = [r.delta_rad for r in rows]
        ax.plot(
            ks,
            deltas,
            marker=_FORM_MARKERS.get(form, "o"),
            ms=3.5,
            lw=1.0,
            color=_FORM_COLORS.get(form),
            label=form,
        )
    ax.set_xlabel(r"$k_0$  [MeV]")
    ax.set_ylabel(r"$\delta_j(k_0)$  [rad]")
    ax.grid(True, alpha=0.3)
    if forms:
        ax.legend(title="form")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_spectrum(report, path):
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    forms = sorted({r.form for r in report.spectra})
    for i, form in enumerate(forms):
        rows = [r for r in report.spectra if r.form == form]
        for r in rows:
            ax.hlines(r.mass_mev, i + 0.8, i + 1.2, color=_FORM_COLORS.get(form), lw=2)
    ax.set_xticks([i + 1 for i in range(len(forms))])
    ax.set_xticklabels(forms)
    ax.set_ylabel("bound-state mass  [MeV]")
    ax.set_title("mass spectrum by form pipeline")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_verifications(report, path):
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    entries = report.verifications
    if entries:
        names = [f"{v.name}\n[{v.forms}]" for v in entries]
        ratios = []
        for v in entries:
            if v.tolerance > 0:
                ratios.append(max(v.value / v.tolerance, 1e-16))
            else:
                ratios.append(1e-16)
        colors = ["tab:green" if v.passed else "tab:red" for v in entries]
        ax.barh(range(len(entries)), ratios, color=colors)
        ax.set_yticks(range(len(entries)))
        ax.set_yticklabels(names, fontsize=6)
        ax.set_xscale("log")
        ax.axvline(1.0, color="k", lw=1, ls="--")
        ax.set_xlabel("value / tolerance  (dashed line = tolerance)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_all(report, out_dir):
    written = []
    if report.phase_shifts:
        written.append(
            render_phase_shifts(report, os.path.join(out_dir, "phaseshifts.png"))
        )
    if report.spectra:
        written.append(render_spectrum(report, os.path.join(out_dir, "spectrum.png")))
    if report.verifications:
        written.append(
            render_verifications(report, os.path.join(out_dir, "verifications.png"))
        )
    return written
