"""Run configuration: strict TOML schema with explicit defaults.

Unknown sections or keys are rejected by name; every default is
materialized on load so the effective configuration can be echoed into
the run report verbatim.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .formbasis import DynamicsForm

FORM_ORDER = ("instant", "point", "front")

VERIFICATION_NAMES = (
    "spectrum-equality",
    "smatrix-equivalence",
    "smatrix-unitarity",
    "bound-state-oracle",
    "phase-shift-oracle",
    "kinematic-shortcut",
    "subgroup-sharpness",
    "equivalence-intertwining",
    "wigner-relation",
    "cg-intertwining",
    "form-map-norms",
    "recoupling",
)

_POTENTIAL_KEYS = {
    "free": set(),
    "gaussian": {"strength", "range"},
    "yamaguchi": {"strength", "beta"},
    "gausswell": {"depth", "range"},
}


class ConfigError(ValueError):
    """Configuration file rejected; the message names the offending keys."""


@dataclass
class ModelConfig:
    m1: float = 939.0
    m2: float = 939.0
    potential: str = "free"
    potential_params: dict = field(default_factory=dict)
    j: float = 0.0
    scheme: str = "spinless-l"
    grid_n: int = 64
    grid_scale: float = 300.0
    energies: tuple = ()
    forms: tuple = FORM_ORDER
    verifications: tuple = VERIFICATION_NAMES
    seed: int = 7
    rapidity: float = 0.75
    tolerance_scale: float = 1.0
    packet_width: float = 280.0
    packet_pplus_center: float = 1.15
    packet_pplus_width: float = 0.12

    def form_enums(self):
        return tuple(DynamicsForm(name) for name in self.forms)

    def as_dict(self):
        out = asdict(self)
        out["energies"] = list(self.energies)
        out["forms"] = list(self.forms)
        out["verifications"] = list(self.verifications)
        return out

    def digest(self):
        """Stable hash of the effective configuration."""
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _require_keys(section, mapping, allowed):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")


def _positive(section, key, value):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
        raise ConfigError(f"[{section}] {key} must be a positive number, got {value!r}")
    return float(value)


def config_from_mapping(data):
    """Validate a parsed TOML mapping into a ModelConfig."""
    _require_keys(
        "top level",
        data,
        {"model", "potential", "channel", "grid", "scattering", "forms", "verify"},
    )
    cfg = ModelConfig()

    model = data.get("model", {})
    _require_keys("model", model, {"m1", "m2"})
    if "m1" in model:
        cfg.m1 = _positive("model", "m1", model["m1"])
    if "m2" in model:
        cfg.m2 = _positive("model", "m2", model["m2"])

    pot = data.get("potential", {})
    if "name" not in pot:
        raise ConfigError("[potential] is missing the required key: name")
    name = pot["name"]
    if name not in _POTENTIAL_KEYS:
        raise ConfigError(
            f"[potential] unknown name {name!r}; expected one of "
            f"{sorted(_POTENTIAL_KEYS)}"
        )
    _require_keys("potential", pot, {"name"} | _POTENTIAL_KEYS[name])
    missing = sorted(_POTENTIAL_KEYS[name] - set(pot))
    if missing:
        raise ConfigError(f"[potential] {name} is missing keys: {', '.join(missing)}")
    cfg.potential = name
    cfg.potential_params = {}
    for key in sorted(_POTENTIAL_KEYS[name]):
        val = pot[key]
        if key == "strength" and name == "gaussian":
            if not isinstance(val, (int, float)) or val < 0:
                raise ConfigError("[potential] strength must be non-negative")
            cfg.potential_params[key] = float(val)
        else:
            cfg.potential_params[key] = _positive("potential", key, val)

    chan = data.get("channel", {})
    _require_keys("channel", chan, {"j", "scheme"})
    if "j" in chan:
        j = chan["j"]
        if not isinstance(j, (int, float)) or j < 0 or round(2 * j) != 2 * j:
            raise ConfigError(f"[channel] j must be a non-negative half-integer, got {j!r}")
        cfg.j = float(j)
    if "scheme" in chan:
        if chan["scheme"] not in ("spinless-l", "ls", "helicity"):
            raise ConfigError(f"[channel] unknown scheme {chan['scheme']!r}")
        cfg.scheme = chan["scheme"]

    grid = data.get("grid", {})
    _require_keys("grid", grid, {"n", "scale"})
    if "n" in grid:
        n = grid["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 16:
            raise ConfigError(f"[grid] n must be an integer >= 16, got {n!r}")
        cfg.grid_n = n
    if "scale" in grid:
        cfg.grid_scale = _positive("grid", "scale", grid["scale"])

    scat = data.get("scattering", {})
    _require_keys("scattering", scat, {"energies"})
    if "energies" in scat:
        energies = scat["energies"]
        if not isinstance(energies, list) or not all(
            isinstance(e, (int, float)) and e > 0 for e in energies
        ):
            raise ConfigError("[scattering] energies must be a list of positive momenta")
        cfg.energies = tuple(float(e) for e in energies)

    forms = data.get("forms", {})
    _require_keys("forms", forms, {"run"})
    if "run" in forms:
        run = forms["run"]
        if not isinstance(run, list) or not run:
            raise ConfigError("[forms] run must be a non-empty list")
        bad = sorted(set(run) - set(FORM_ORDER))
        if bad:
            raise ConfigError(f"[forms] unknown forms: {', '.join(bad)}")
        cfg.forms = tuple(name for name in FORM_ORDER if name in run)

    verify = data.get("verify", {})
    _require_keys(
        "verify",
        verify,
        {"enabled", "seed", "rapidity", "tolerance_scale", "packet"},
    )
    if "enabled" in verify:
        enabled = verify["enabled"]
        if not isinstance(enabled, list):
            raise ConfigError("[verify] enabled must be a list of verification names")
        bad = sorted(set(enabled) - set(VERIFICATION_NAMES))
        if bad:
            raise ConfigError(f"[verify] unknown verifications: {', '.join(bad)}")
        cfg.verifications = tuple(v for v in VERIFICATION_NAMES if v in enabled)
    if "seed" in verify:
        seed = verify["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("[verify] seed must be a non-negative integer")
        cfg.seed = seed
    if "rapidity" in verify:
        cfg.rapidity = _positive("verify", "rapidity", verify["rapidity"])
        if cfg.rapidity > 1.0:
            raise ConfigError("[verify] rapidity is capped at 1.0 for bounded tests")
    if "tolerance_scale" in verify:
        cfg.tolerance_scale = _positive(
            "verify", "tolerance_scale", verify["tolerance_scale"]
        )
    packet = verify.get("packet", {})
    _require_keys("verify.packet", packet, {"width", "pplus_center", "pplus_width"})
    if "width" in packet:
        cfg.packet_width = _positive("verify.packet", "width", packet["width"])
    if "pplus_center" in packet:
        cfg.packet_pplus_center = _positive(
            "verify.packet", "pplus_center", packet["pplus_center"]
        )
    if "pplus_width" in packet:
        cfg.packet_pplus_width = _positive(
            "verify.packet", "pplus_width", packet["pplus_width"]
        )
    return cfg


def load_config(path):
    """Parse and validate a TOML configuration file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from exc
    try:
        return config_from_mapping(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
