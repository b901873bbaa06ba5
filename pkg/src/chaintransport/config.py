"""Scenario configuration files (JSON, ``"schema": 1``)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .environment import (
    QuadratureModel,
    RateSet,
    SppChainModel,
    load_rate_table,
    make_artificially_reciprocal,
    quadrature_rate_set,
    reverse_bias,
    spp_chain_rate_set,
)
from .operators import ChainSpec
from .transport import DEFAULT_DRIVE, ScanBase

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config",
           "SCAN_SCENARIOS", "DYNAMIC_SCENARIOS"]

DYNAMIC_SCENARIOS = ("populations", "efficiency_dynamics", "bias_compare")
SCAN_SCENARIOS = {
    "step_scan": "chain_step",
    "length_scan": "n_atoms",
    "gamma12_scan": "gamma12_ratio",
    "phi_scan": "phi",
}
_SCAN_MODEL = {"step_scan": "spp_chain", "length_scan": "spp_chain",
               "gamma12_scan": "quadrature", "phi_scan": "quadrature"}
_QUADRATURE_KEYS = ("X", "phi", "gamma_local")
_SPP_KEYS = ("gamma_local", "decay_length", "wavenumber", "direction")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _schema() -> dict:
    text = resources.files("chaintransport").joinpath("config_schema.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    chain: ChainSpec
    environment: dict
    initial_state: str | None
    gamma_in: float
    gamma_out: float
    t_end: float | None
    samples: int
    scan_values: tuple | None
    scan_workers: int | None
    output_dir: Path
    include_hamiltonian: bool
    base_dir: Path = field(default=Path("."))

    @property
    def is_scan(self) -> bool:
        return self.scenario in SCAN_SCENARIOS

    @property
    def scan_parameter(self) -> str | None:
        return SCAN_SCENARIOS.get(self.scenario)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.samples)

    def rates(self) -> RateSet:
        """Resolved environment for the configured chain, transform applied."""
        env = self.environment
        drive = dict(gamma_in=self.gamma_in, gamma_out=self.gamma_out)
        if "rate_table" in env:
            path = Path(env["rate_table"])
            if not path.is_absolute():
                path = self.base_dir / path
            rates = load_rate_table(path)
            if rates.n_atoms != self.chain.n_atoms:
                raise ConfigError("environment.rate_table",
                                  f"table is for N={rates.n_atoms}, chain has n_atoms={self.chain.n_atoms}")
        elif env["model"] == "quadrature":
            rates = quadrature_rate_set(self.quadrature_model(), env.get("mode", "uni"), **drive)
        else:
            rates = spp_chain_rate_set(self.chain, self.spp_model(), env.get("mode", "uni"), **drive)
        transform = env.get("transform", "none")
        if transform == "artificially_reciprocal":
            rates = make_artificially_reciprocal(rates)
        elif transform == "reverse_bias":
            rates = reverse_bias(rates)
        return rates

    def quadrature_model(self) -> QuadratureModel:
        return QuadratureModel(**{k: self.environment[k] for k in _QUADRATURE_KEYS if k in self.environment})

    def spp_model(self) -> SppChainModel:
        return SppChainModel(**{k: self.environment[k] for k in _SPP_KEYS if k in self.environment})

    def scan_base(self) -> ScanBase:
        env = self.environment
        kwargs = dict(mode=env.get("mode", "uni"), n_atoms=self.chain.n_atoms,
                      step=self.chain.step, gamma_in=self.gamma_in,
                      gamma_out=self.gamma_out,
                      include_hamiltonian=self.include_hamiltonian)
        if env.get("model") == "quadrature":
            kwargs["quadrature"] = self.quadrature_model()
        elif env.get("model") == "spp_chain":
            kwargs["spp"] = self.spp_model()
        return ScanBase(**kwargs)

    def to_dict(self) -> dict:
        """Fully resolved configuration, defaults filled in."""
        out = {
            "schema": 1,
            "scenario": self.scenario,
            "chain": {"n_atoms": self.chain.n_atoms, "step": self.chain.step,
                      "omega0": self.chain.omega0, "dipole_note": self.chain.dipole_note},
            "environment": dict(sorted(self.environment.items())),
            "drive": {"gamma_in": self.gamma_in, "gamma_out": self.gamma_out},
            "include_hamiltonian": self.include_hamiltonian,
            "output": {"directory": str(self.output_dir)},
        }
        if self.initial_state is not None:
            out["initial_state"] = self.initial_state
        if self.t_end is not None:
            out["time"] = {"t_end": self.t_end, "samples": self.samples}
        if self.scan_values is not None:
            out["scan"] = {"values": list(self.scan_values)}
        return out


def _jsonschema_error(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(_schema())
    error = jsonschema.exceptions.best_match(validator.iter_errors(raw))
    if error is None:
        return
    path = ".".join(str(p) for p in error.absolute_path)
    if error.validator == "required":
        missing = error.message.split("'")[1]
        path = f"{path}.{missing}" if path else missing
    elif error.validator == "additionalProperties" and "'" in error.message:
        extra = error.message.split("'")[1]
        path = f"{path}.{extra}" if path else extra
    raise ConfigError(path or "<root>", error.message)


def _scan_values(raw: dict) -> tuple:
    spec = raw.get("scan")
    if spec is None:
        raise ConfigError("scan", "scan scenarios need a 'scan' grid")
    has_values = "values" in spec
    has_range = any(k in spec for k in ("start", "stop", "num"))
    if has_values == has_range:
        raise ConfigError("scan", "give either 'values' or all of 'start', 'stop', 'num'")
    if has_values:
        return tuple(float(v) for v in spec["values"])
    for key in ("start", "stop", "num"):
        if key not in spec:
            raise ConfigError(f"scan.{key}", "missing grid bound")
    grid = np.linspace(spec["start"], spec["stop"], spec["num"])
    return tuple(float(v) for v in grid)


def parse_config(raw: dict, base_dir: Path | str = ".") -> ScenarioConfig:
    """Validate a decoded config mapping and resolve defaults.

    Raises :class:`ConfigError` naming the offending field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    _jsonschema_error(raw)
    base_dir = Path(base_dir)
    scenario = raw["scenario"]
    chain_raw = raw["chain"]
    try:
        chain = ChainSpec(n_atoms=chain_raw["n_atoms"], step=float(chain_raw.get("step", 0.0)),
                          omega0=float(chain_raw.get("omega0", 1.0)),
                          **({"dipole_note": chain_raw["dipole_note"]} if "dipole_note" in chain_raw else {}))
    except ValueError as exc:
        raise ConfigError("chain", str(exc)) from None

    env = dict(raw["environment"])
    if ("model" in env) == ("rate_table" in env):
        raise ConfigError("environment", "give exactly one of 'model' (inline) or 'rate_table'")
    if "rate_table" in env:
        stray = sorted(set(env) - {"rate_table", "transform"})
        if stray:
            raise ConfigError(f"environment.{stray[0]}", "not allowed together with 'rate_table'")
    else:
        allowed = set(_QUADRATURE_KEYS if env["model"] == "quadrature" else _SPP_KEYS)
        allowed |= {"model", "mode", "transform"}
        stray = sorted(set(env) - allowed)
        if stray:
            raise ConfigError(f"environment.{stray[0]}", f"not a parameter of the {env['model']} model")
        if env["model"] == "quadrature" and "X" not in env:
            raise ConfigError("environment.X", "quadrature model needs the coupling amplitude X")
        if env["model"] == "quadrature" and chain.n_atoms != 2:
            raise ConfigError("chain.n_atoms", "quadrature model is defined for n_atoms = 2")
        env.setdefault("mode", "uni")
    transform = env.get("transform", "none")
    if transform == "artificially_reciprocal" and env.get("mode") == "rec":
        raise ConfigError("environment.transform", "artificially_reciprocal needs mode 'uni'")
    if transform == "reverse_bias" and env.get("mode") == "rec":
        raise ConfigError("environment.transform", "reverse_bias needs mode 'uni'")

    initial_state = raw.get("initial_state")
    t_end = samples = None
    scan_values = None
    workers = None
    if scenario in DYNAMIC_SCENARIOS:
        if initial_state is None:
            raise ConfigError("initial_state", f"required by scenario {scenario!r}")
        if len(initial_state) != chain.n_atoms:
            raise ConfigError("initial_state",
                              f"length {len(initial_state)} does not match n_atoms = {chain.n_atoms}")
        if "time" not in raw:
            raise ConfigError("time", f"required by scenario {scenario!r}")
        t_end = float(raw["time"]["t_end"])
        samples = int(raw["time"].get("samples", 501))
        if scenario == "bias_compare" and env.get("mode") == "rec":
            raise ConfigError("environment.mode", "bias_compare needs a unidirectional environment")
        if chain.n_atoms > 7 and scenario != "populations":
            raise ConfigError("chain.n_atoms", "efficiency scenarios support n_atoms <= 7")
    else:
        if initial_state is not None and len(initial_state) != chain.n_atoms:
            raise ConfigError("initial_state",
                              f"length {len(initial_state)} does not match n_atoms = {chain.n_atoms}")
        if env.get("model") != _SCAN_MODEL[scenario]:
            raise ConfigError("environment.model",
                              f"scenario {scenario!r} needs the {_SCAN_MODEL[scenario]} model")
        if transform != "none":
            raise ConfigError("environment.transform", "transforms are not applied in scans")
        scan_values = _scan_values(raw)
        workers = raw["scan"].get("workers")
        if scenario == "length_scan":
            for v in scan_values:
                if v != int(v) or not 1 <= v <= 7:
                    raise ConfigError("scan", f"length_scan values must be integers in 1..7, got {v!r}")
        if scenario == "step_scan" and any(v < 0 for v in scan_values):
            raise ConfigError("scan", "chain steps must be nonnegative")
        if scenario == "step_scan" and chain.n_atoms > 7:
            raise ConfigError("chain.n_atoms", "scans support n_atoms <= 7")
        if not all(math.isfinite(v) for v in scan_values):
            raise ConfigError("scan", "grid values must be finite")

    drive = raw.get("drive", {})
    out_dir = Path(raw.get("output", {}).get("directory", "output"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    return ScenarioConfig(
        scenario=scenario,
        chain=chain,
        environment=env,
        initial_state=initial_state,
        gamma_in=float(drive.get("gamma_in", DEFAULT_DRIVE)),
        gamma_out=float(drive.get("gamma_out", DEFAULT_DRIVE)),
        t_end=t_end,
        samples=samples or 0,
        scan_values=scan_values,
        scan_workers=workers,
        output_dir=out_dir,
        include_hamiltonian=bool(raw.get("include_hamiltonian", True)),
        base_dir=base_dir,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("<file>", f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON ({exc})") from None
    return parse_config(raw, base_dir=path.parent)
