"""Run reports and their deterministic CSV/JSON serialization.

Identical configurations produce byte-identical output files: floats are
written with 17 significant digits, orderings are fixed, and provenance
timestamps are only included when BTFORMS_TIMESTAMP is set in the
environment (reproducible builds would otherwise differ run to run).
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field

from . import __version__


def fmt(x):
    """Lossless float formatting for the CSV tables."""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


@dataclass
class VerificationEntry:
    name: str
    forms: str  # e.g. "instant,front" or "all"
    value: float
    tolerance: float
    comparison: str  # "max<=tol" or "min>=tol"
    passed: bool
    detail: str = ""


@dataclass
class SpectrumRow:
    form: str
    state_index: int
    mass_mev: float
    binding_mev: float


@dataclass
class PhaseShiftRow:
    form: str
    k_mev: float
    invariant_mass_mev: float
    delta_rad: float
    s_real: float
    s_imag: float
    unitarity_defect: float


@dataclass
class RunReport:
    spectra: list = field(default_factory=list)  # SpectrumRow
    phase_shifts: list = field(default_factory=list)  # PhaseShiftRow
    verifications: list = field(default_factory=list)  # VerificationEntry
    solver_rejections: list = field(default_factory=list)  # strings
    provenance: dict = field(default_factory=dict)

    @property
    def all_passed(self):
        return all(v.passed for v in self.verifications) and not self.solver_rejections

    def to_dict(self):
        return {
            "spectra": [asdict(r) for r in self.spectra],
            "phase_shifts": [asdict(r) for r in self.phase_shifts],
            "verifications": [asdict(v) for v in self.verifications],
            "solver_rejections": list(self.solver_rejections),
            "provenance": dict(self.provenance),
            "all_passed": self.all_passed,
        }

    @classmethod
    def from_dict(cls, data):
        report = cls(
            spectra=[SpectrumRow(**r) for r in data.get("spectra", [])],
            phase_shifts=[PhaseShiftRow(**r) for r in data.get("phase_shifts", [])],
            verifications=[VerificationEntry(**v) for v in data.get("verifications", [])],
            solver_rejections=list(data.get("solver_rejections", [])),
            provenance=dict(data.get("provenance", {})),
        )
        return report

    def __eq__(self, other):
        if not isinstance(other, RunReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def make_provenance(config):
    prov = {
        "config_digest": config.digest(),
        "effective_config": config.as_dict(),
        "btforms_version": __version__,
    }
    stamp = os.environ.get("BTFORMS_TIMESTAMP")
    if stamp:
        prov["timestamp"] = stamp
    return prov


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def export(report, out_dir, figures=True):
    """Write CSV tables, report.json, and (optionally) figures.

    Returns the list of paths written.  Re-export of an identical report is
    byte-identical (deterministic ordering, no timestamps unless the
    BTFORMS_TIMESTAMP environment variable is set).
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "spectrum.csv")
    _write_csv(
        path,
        ["form", "state_index", "mass_mev", "binding_mev"],
        [
            (r.form, r.state_index, r.mass_mev, r.binding_mev)
            for r in report.spectra
        ],
    )
    written.append(path)

    path = os.path.join(out_dir, "phaseshifts.csv")
    _write_csv(
        path,
        [
            "form",
            "k_mev",
            "invariant_mass_mev",
            "delta_rad",
            "s_real",
            "s_imag",
            "unitarity_defect",
        ],
        [
            (
                r.form,
                r.k_mev,
                r.invariant_mass_mev,
                r.delta_rad,
                r.s_real,
                r.s_imag,
                r.unitarity_defect,
            )
            for r in report.phase_shifts
        ],
    )
    written.append(path)

    path = os.path.join(out_dir, "verifications.csv")
    _write_csv(
        path,
        ["name", "forms", "value", "tolerance", "comparison", "passed", "detail"],
        [
            (v.name, v.forms, v.value, v.tolerance, v.comparison, v.passed, v.detail)
            for v in report.verifications
        ],
    )
    written.append(path)

    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)

    if figures:
        from .figures import render_all

        written.extend(render_all(report, out_dir))
    return written


def load_report(path):
    with open(path) as fh:
        return RunReport.from_dict(json.load(fh))
