"""Experiment configuration: YAML schema, validation and object construction.

Schema (every key optional unless marked; defaults shown)::

    network:
      preset: l5k3            # bundled 5-RAU / 3-user network; omit for explicit
      antennas: [1, 1, 1]     # explicit: N_l per RAU
      sigma_sq: 1.0           # scalar or per-user list
      P: 1000.0               # mW, scalar or per-RAU list
      gamma_db: 3.0           # scalar or per-user list
    uncertainty:
      preset: l5k3            # channel model of the bundled network
      tau_known: 0.01         # preset only: tau on each user's strongest links
      type: sim | additive    # explicit models
      large_scale: [[...]]    # sim: (K, L) amplitudes D
      mean_re / mean_im       # sim: small-scale estimate c_hat (K, N); additive: mean (K, N)
      tau: [[...]]            # sim: (K, L) or scalar
      error_var: 0.01         # additive: i.i.d. CN(0, error_var) error per entry
    dc:       {eps, M, obj_tol, max_iters, kappa_min, fixed_kappa, fresh_samples_per_iter, init_J}
    scenario: {J, beta}
    study:
      mode: single | replication | sweep
      R: 50                   # replications / seeds per sweep value (single mode uses one)
      base_seed: 0
      sweep: {param: M | J, values: [100, 300, 1000]}
    validation: {n_validate: 100000}
    output: {dir: results}
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .algorithms import DcSettings, ScenarioSettings
from .model import ConfigError, NetworkConfig, db_to_linear
from .presets import PRESET_J, PRESET_NAME, load_paper_preset
from .uncertainty import AdditiveErrorModel, SimChannelModel

PRESETS = (PRESET_NAME,)
MODES = ("single", "replication", "sweep")

DEFAULTS = {
    "network": {"preset": PRESET_NAME, "sigma_sq": 1.0, "P": 1e3, "gamma_db": 3.0},
    "uncertainty": {"preset": PRESET_NAME, "tau_known": 0.01},
    "dc": {"eps": 0.1, "M": 1000, "obj_tol": 1e-4, "max_iters": 50, "kappa_min": 1e-8,
           "fixed_kappa": None, "fresh_samples_per_iter": False, "init_J": None},
    "scenario": {"J": PRESET_J, "beta": 1e-6},
    "study": {"mode": "single", "R": 50, "base_seed": 0, "sweep": {"param": "M", "values": [100, 300, 1000]}},
    "validation": {"n_validate": 100_000},
    "output": {"dir": "results"},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def key_lines(text: str) -> dict[str, int]:
    """1-based line of every mapping key, addressed as ``section.key``."""
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return lines


@dataclass
class ExperimentConfig:
    raw: dict
    source: str = ""
    lines: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict | None, source: str = "", lines=None) -> "ExperimentConfig":
        user = d or {}
        raw = _merge(DEFAULTS, user)
        # an explicit network or model replaces the preset unless named again
        for sec in ("network", "uncertainty"):
            if sec in user and "preset" not in user[sec] and (
                    "antennas" in user[sec] or "type" in user[sec]):
                raw[sec].pop("preset", None)
        return cls(raw, source, lines or {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as err:
            raise ConfigError(f"{path}: not valid YAML: {err}") from err
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data, str(path), key_lines(text))

    def section(self, name) -> dict:
        return self.raw[name]

    def line_of(self, path: str) -> str:
        ln = self.lines.get(path)
        return f" (line {ln})" if ln else ""

    # object construction ------------------------------------------------------
    def network_and_model(self):
        net, unc = self.raw["network"], self.raw["uncertainty"]
        if net.get("preset") and unc.get("preset"):
            return load_paper_preset(sigma_sq=net["sigma_sq"], P=net["P"], gamma_db=net["gamma_db"],
                                     tau_known=unc["tau_known"])
        if net.get("preset"):
            ant = (1,) * 5
        else:
            ant = tuple(net["antennas"])
        L = len(ant)
        K = _infer_users(unc, net)
        gamma = db_to_linear(np.broadcast_to(np.asarray(net["gamma_db"], float), (K,)))
        cfg = NetworkConfig(antennas=ant,
                            sigma_sq=np.broadcast_to(np.asarray(net["sigma_sq"], float), (K,)),
                            P=np.broadcast_to(np.asarray(net["P"], float), (L,)),
                            gamma=gamma)
        if unc.get("preset"):
            _, model = load_paper_preset(tau_known=unc["tau_known"])
            return cfg, model
        mean = np.asarray(unc["mean_re"], float) + 1j * np.asarray(unc.get("mean_im", 0.0), float)
        if unc["type"] == "sim":
            D = np.asarray(unc["large_scale"], float)
            tau = np.broadcast_to(np.asarray(unc.get("tau", 1.0), float), D.shape)
            return cfg, SimChannelModel(antennas=ant, D=D, c_hat=mean, tau=tau)
        var = float(unc.get("error_var", 0.0))
        N = sum(ant)
        Theta = np.broadcast_to(var * np.eye(N), (K, N, N)).astype(complex)
        return cfg, AdditiveErrorModel(h_hat=mean, Theta=Theta)

    def dc_settings(self, **over) -> DcSettings:
        d = dict(self.raw["dc"])
        d["n_validate"] = self.raw["validation"]["n_validate"]
        d.update(over)
        names = {f.name for f in fields(DcSettings)}
        return DcSettings(**{k: v for k, v in d.items() if k in names})

    def scenario_settings(self, **over) -> ScenarioSettings:
        d = {"J": self.raw["scenario"]["J"], "beta": self.raw["scenario"]["beta"],
             "eps": self.raw["dc"]["eps"]}
        d.update(over)
        return ScenarioSettings(**d)


def _infer_users(unc, net) -> int:
    if "mean_re" in unc:
        return int(np.asarray(unc["mean_re"]).shape[0])
    g = np.atleast_1d(np.asarray(net.get("gamma_db", 0.0)))
    return int(g.size)


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def validate_config(config) -> list[str]:
    """Every violated rule as ``"<field> = <value>: <rule>"``; empty when valid."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    raw = config.raw
    out = []

    def bad(path, value, rule):
        out.append(f"{path} = {value!r}: {rule}{config.line_of(path)}")

    known = set(DEFAULTS)
    for sec in raw:
        if sec not in known:
            bad(sec, "...", f"unknown section (expected one of {sorted(known)})")

    net, unc = raw["network"], raw["uncertainty"]
    if net.get("preset") is not None and net["preset"] not in PRESETS:
        bad("network.preset", net["preset"], f"unknown preset (available: {list(PRESETS)})")
    if not net.get("preset"):
        ant = net.get("antennas")
        if not isinstance(ant, list) or not ant or not all(isinstance(a, int) and a >= 1 for a in ant):
            bad("network.antennas", ant, "must be a nonempty list of integers >= 1")
    for key in ("sigma_sq", "P"):
        vals = np.atleast_1d(np.asarray(net.get(key), dtype=object))
        if not all(_num(x) and x > 0 for x in vals):
            bad(f"network.{key}", net.get(key), "must be > 0")
    gvals = np.atleast_1d(np.asarray(net.get("gamma_db"), dtype=object))
    if not all(_num(x) for x in gvals):
        bad("network.gamma_db", net.get("gamma_db"), "must be a finite number (dB)")

    if unc.get("preset") is not None:
        if unc["preset"] not in PRESETS:
            bad("uncertainty.preset", unc["preset"], f"unknown preset (available: {list(PRESETS)})")
        tk = unc.get("tau_known")
        if not (_num(tk) and 0 <= tk <= 1):
            bad("uncertainty.tau_known", tk, "tau must lie in [0, 1]")
    else:
        typ = unc.get("type")
        if typ not in ("sim", "additive"):
            bad("uncertainty.type", typ, "must be 'sim' or 'additive' when no preset is named")
        if "mean_re" not in unc:
            bad("uncertainty.mean_re", None, "required for explicit models")
        if typ == "sim":
            tau = np.asarray(unc.get("tau", 1.0), dtype=float)
            if np.any(tau < 0) or np.any(tau > 1):
                bad("uncertainty.tau", unc.get("tau"), "tau must lie in [0, 1]")
            D = np.asarray(unc.get("large_scale", -1.0), dtype=float)
            if np.any(D < 0):
                bad("uncertainty.large_scale", unc.get("large_scale"), "must be a (K, L) array of values >= 0")
        if typ == "additive":
            ev = unc.get("error_var", 0.0)
            if not (_num(ev) and ev >= 0):
                bad("uncertainty.error_var", ev, "must be >= 0")

    dc = raw["dc"]
    eps = dc.get("eps")
    if not (_num(eps) and 0 < eps < 1):
        bad("dc.eps", eps, "eps must lie in (0,1)")
    if not (isinstance(dc.get("M"), int) and dc["M"] >= 1):
        bad("dc.M", dc.get("M"), "must be an integer >= 1")
    if not (_num(dc.get("obj_tol")) and dc["obj_tol"] > 0):
        bad("dc.obj_tol", dc.get("obj_tol"), "must be > 0")
    if not (isinstance(dc.get("max_iters"), int) and dc["max_iters"] >= 1):
        bad("dc.max_iters", dc.get("max_iters"), "must be an integer >= 1")
    if not (_num(dc.get("kappa_min")) and dc["kappa_min"] > 0):
        bad("dc.kappa_min", dc.get("kappa_min"), "must be > 0")
    fk = dc.get("fixed_kappa")
    if fk is not None and not (_num(fk) and _num(dc.get("kappa_min")) and fk >= dc["kappa_min"]):
        bad("dc.fixed_kappa", fk, "must be null or >= kappa_min")
    if not isinstance(dc.get("fresh_samples_per_iter"), bool):
        bad("dc.fresh_samples_per_iter", dc.get("fresh_samples_per_iter"), "must be true or false")

    sc = raw["scenario"]
    if sc.get("J") is not None and not (isinstance(sc["J"], int) and sc["J"] >= 1):
        bad("scenario.J", sc.get("J"), "must be null or an integer >= 1")
    if not (_num(sc.get("beta")) and 0 < sc["beta"] < 1):
        bad("scenario.beta", sc.get("beta"), "beta must lie in (0,1)")

    st = raw["study"]
    if st.get("mode") not in MODES:
        bad("study.mode", st.get("mode"), f"must be one of {list(MODES)}")
    if not (isinstance(st.get("R"), int) and st["R"] >= 1):
        bad("study.R", st.get("R"), "must be an integer >= 1")
    if not (isinstance(st.get("base_seed"), int) and st["base_seed"] >= 0):
        bad("study.base_seed", st.get("base_seed"), "seeds must be explicit integers >= 0")
    sw = st.get("sweep") or {}
    if st.get("mode") == "sweep":
        if sw.get("param") not in ("M", "J"):
            bad("study.sweep.param", sw.get("param"), "must be 'M' or 'J'")
        vals = sw.get("values")
        if not (isinstance(vals, list) and vals and all(isinstance(v, int) and v >= 1 for v in vals)):
            bad("study.sweep.values", vals, "must be a nonempty list of integers >= 1")

    nv = raw["validation"].get("n_validate")
    if not (isinstance(nv, int) and nv >= 0):
        bad("validation.n_validate", nv, "must be an integer >= 0")

    if not out:
        try:
            config.network_and_model()
        except (ValueError, KeyError, TypeError) as err:
            out.append(f"network/uncertainty: {err}")
    return out
