"""TOML scenario files: one document drives every command.

Sections: ``[network]`` and ``[generator]`` are required, ``[analysis]`` and
``[sim]`` are optional and filled with defaults. Modes are 0-based.
"""

from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import sim, stability, throughput
from .ctmc import GeneratorMatrix, validate_generator
from .errors import InvalidNetwork, ParseError, UnknownKey, ValidationError
from .netmodel import NetworkParams, Topology, check_state


@dataclass(frozen=True)
class ReferenceWitness:
    alpha: tuple
    beta: float


@dataclass(frozen=True)
class AnalysisSettings:
    beta_min: float = stability.BETA_MIN
    beta_max: float = stability.BETA_MAX
    n_beta: int = stability.N_BETA
    alpha_min: float = stability.ALPHA_MIN
    tolerance: float = throughput.DEFAULT_TOL
    oracle_check: bool = False
    oracle_resolution: int | None = None
    audit_resolution: int = 50
    ray: tuple | None = None
    sweep_axis: str = "mu"
    sweep_grid: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    cdf_max: float | None = None
    cdf_points: int = 201
    reference_witness: ReferenceWitness | None = None

    def search_options(self) -> dict:
        return {
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "n_beta": self.n_beta,
            "alpha_min": self.alpha_min,
        }

    def throughput_options(self) -> dict:
        return {
            "check_oracle": self.oracle_check,
            "oracle_n_max": self.oracle_resolution,
            **self.search_options(),
        }


@dataclass(frozen=True)
class SimSettings:
    q0: tuple | None = None  # zeros when omitted
    i0: int = 0
    horizon: float = sim.DEFAULT_HORIZON
    dt: float = sim.DEFAULT_DT
    seed: int = 0
    record_stride: int = 1
    n_paths: int = 1
    tail_fraction: float = 0.5
    empirical_paths: int = 0
    burn_in: float = 100.0


@dataclass(frozen=True)
class Scenario:
    network: NetworkParams
    generator: GeneratorMatrix
    analysis: AnalysisSettings = AnalysisSettings()
    sim: SimSettings = SimSettings()

    def initial_state(self) -> np.ndarray:
        if self.sim.q0 is None:
            return np.zeros(self.network.n_queues)
        return np.array(self.sim.q0, dtype=float)

    def to_dict(self) -> dict:
        net = self.network.to_dict()
        out = {"network": net, "generator": {"rates": self.generator.rates.tolist()}}
        out["analysis"] = _settings_dict(self.analysis)
        out["sim"] = _settings_dict(self.sim)
        return out


def _settings_dict(settings) -> dict:
    out = {}
    for f in dataclasses.fields(settings):
        val = getattr(settings, f.name)
        if val is None:
            continue
        if isinstance(val, ReferenceWitness):
            val = {"alpha": list(val.alpha), "beta": val.beta}
        elif isinstance(val, tuple):
            val = list(val)
        out[f.name] = val
    return out


_NETWORK_KEYS = {"topology", "v", "w", "theta", "capacities", "inflows"}
_GENERATOR_KEYS = {"rates"}


def _reject_unknown(section: str, table: dict, allowed) -> None:
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise UnknownKey(f"unknown key {extra[0]!r} in [{section}]")


def _as_table(doc, name):
    val = doc.get(name, {})
    if not isinstance(val, dict):
        raise ValidationError(f"[{name}] must be a table")
    return val


def _coerce(section: str, name: str, value, default):
    """Convert ``value`` to the type of the field's default."""
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(default, tuple):
            return tuple(float(x) for x in value)
    except (TypeError, ValueError):
        raise ValidationError(f"[{section}] {name}: cannot use {value!r}") from None
    return value


def _build_settings(cls, section: str, table: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _reject_unknown(section, table, fields)
    kwargs = {}
    for name, value in table.items():
        default = fields[name].default
        if name == "reference_witness":
            if not isinstance(value, dict):
                raise ValidationError("[analysis] reference_witness must be a table with alpha and beta")
            _reject_unknown("analysis.reference_witness", value, {"alpha", "beta"})
            try:
                kwargs[name] = ReferenceWitness(tuple(float(a) for a in value["alpha"]), float(value["beta"]))
            except (KeyError, TypeError, ValueError):
                raise ValidationError("[analysis] reference_witness needs numeric alpha list and beta") from None
        elif name in ("oracle_resolution",):
            kwargs[name] = _coerce(section, name, value, 0)
        elif name in ("cdf_max",):
            kwargs[name] = _coerce(section, name, value, 0.0)
        elif name in ("ray", "q0"):
            kwargs[name] = _coerce(section, name, value, ())
        else:
            kwargs[name] = _coerce(section, name, value, default)
    return cls(**kwargs)


def _check_settings(sc: Scenario) -> None:
    a, s = sc.analysis, sc.sim
    if not 0 < a.beta_min < a.beta_max:
        raise ValidationError("[analysis] need 0 < beta_min < beta_max")
    if a.n_beta < 2 or a.alpha_min <= 0 or a.tolerance <= 0:
        raise ValidationError("[analysis] n_beta >= 2, alpha_min > 0 and tolerance > 0 required")
    if a.sweep_axis not in throughput.AXES:
        raise ValidationError(f"[analysis] sweep_axis must be one of {throughput.AXES}")
    if a.reference_witness is not None and len(a.reference_witness.alpha) != sc.network.m:
        raise ValidationError("[analysis] reference_witness alpha needs one entry per mode")
    if s.q0 is not None:
        check_state(sc.network, s.q0)
    if not 0 <= s.i0 < sc.network.m:
        raise ValidationError(f"[sim] i0 must be in 0..{sc.network.m - 1}")
    if s.dt <= 0 or s.horizon < s.dt or s.record_stride < 1 or s.n_paths < 1:
        raise ValidationError("[sim] need dt > 0, horizon >= dt, record_stride >= 1, n_paths >= 1")
    if not 0 < s.tail_fraction <= 1:
        raise ValidationError("[sim] tail_fraction must be in (0, 1]")


def scenario_from_dict(doc: dict) -> Scenario:
    _reject_unknown("top level", doc, {"network", "generator", "analysis", "sim"})
    if "network" not in doc or "generator" not in doc:
        raise ValidationError("scenario needs [network] and [generator] sections")
    net = _as_table(doc, "network")
    _reject_unknown("network", net, _NETWORK_KEYS)
    gen = _as_table(doc, "generator")
    _reject_unknown("generator", gen, _GENERATOR_KEYS)
    for key in ("topology", "capacities", "inflows"):
        if key not in net:
            raise ValidationError(f"[network] missing {key}")
    if "rates" not in gen:
        raise ValidationError("[generator] missing rates")
    try:
        topology = Topology(net["topology"])
    except ValueError:
        raise InvalidNetwork(f"[network] unknown topology {net['topology']!r}") from None
    try:
        rates = np.array(gen["rates"], dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("[generator] rates must be a numeric matrix") from None
    generator = validate_generator(rates)
    network = NetworkParams(
        topology,
        net["capacities"],
        net["inflows"],
        net.get("v"),
        net.get("w"),
        net.get("theta"),
    )
    if generator.m != network.m:
        raise ValidationError(
            f"generator has {generator.m} modes but capacities have {network.m} columns"
        )
    analysis = _build_settings(AnalysisSettings, "analysis", _as_table(doc, "analysis"))
    sim_settings = _build_settings(SimSettings, "sim", _as_table(doc, "sim"))
    sc = Scenario(network, generator, analysis, sim_settings)
    _check_settings(sc)
    return sc


_POSITION = re.compile(r"line (\d+), column (\d+)")


def loads_scenario(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        if line is None:
            m = _POSITION.search(str(exc))
            if m:
                line, col = int(m.group(1)), int(m.group(2))
        raise ParseError(str(exc), line, col) from None
    return scenario_from_dict(doc)


def load_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"scenario is not UTF-8: {exc}") from None
    return loads_scenario(text)


def dump_scenario(scenario: Scenario) -> str:
    return tomli_w.dumps(scenario.to_dict())
