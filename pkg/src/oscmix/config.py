"""INI-style run configuration.

Exactly one network section (``[chain]``, ``[langevin]``, ``[semi_markov]``
or ``[linear]``) plus optional ``[potential]``, ``[hypotheses]``,
``[simulate]``, ``[control]``, ``[drift]``, ``[minorization]``, ``[mix]``,
``[wiener]`` and ``[outputs]``.  Vectors are comma separated; matrices and
lists of points separate rows with ``;``.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

import numpy as np

from . import networks as nw
from .dynamics import DynamicsSpec

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "NETWORK_SECTIONS"]

NETWORK_SECTIONS = ("chain", "langevin", "semi_markov", "linear")
KNOWN_SECTIONS = NETWORK_SECTIONS + (
    "potential", "hypotheses", "simulate", "control", "drift", "minorization", "mix",
    "wiener", "outputs",
)


class ConfigError(ValueError):
    pass


def _vec(text):
    return np.array([float(v) for v in text.replace(" ", "").split(",") if v != ""])


def _mat(text):
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([_vec(r) for r in rows])


def _points(text):
    return [_vec(r) for r in text.split(";") if r.strip()]


@dataclass
class RunConfig:
    text: str
    parser: configparser.ConfigParser
    network: str

    def section(self, name):
        return self.parser[name] if self.parser.has_section(name) else {}

    def get(self, section, key, default=None, kind=str):
        sec = self.section(section)
        if key not in sec:
            return default
        raw = sec[key].strip()
        try:
            if kind is str:
                return raw
            if kind == "vec":
                return _vec(raw)
            if kind == "mat":
                return _mat(raw)
            if kind == "points":
                return _points(raw)
            return kind(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc

    @property
    def seed(self):
        return self.get("simulate", "seed", None, int)

    def canonical(self):
        """Sections and keys sorted, values stripped; the hashed form."""
        lines = []
        for sec in sorted(self.parser.sections()):
            lines.append(f"[{sec}]")
            for k in sorted(self.parser[sec]):
                lines.append(f"{k} = {self.parser[sec][k].strip()}")
        return "\n".join(lines) + "\n"

    @property
    def sha256(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def set(self, section, key, value):
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser[section][key] = str(value)

    def build_potential_spec(self):
        sec = self.section("potential")
        variant = sec.get("variant", "none").strip() if sec else "none"
        try:
            return nw.PotentialSpec(
                variant=variant,
                coupling=float(sec.get("coupling", "1")) if sec else 1.0,
                sigma=float(sec.get("sigma", "1")) if sec else 1.0,
                q_eq=list(_vec(sec["q_eq"])) if sec and "q_eq" in sec else None,
            )
        except ValueError as exc:
            raise ConfigError(f"[potential]: {exc}") from exc

    def build_spec(self):
        """Construct the DynamicsSpec; construction failures become ConfigError."""
        pot = self.build_potential_spec()
        s = self.section(self.network)
        try:
            if self.network == "chain":
                cs = nw.ChainSpec(
                    L=int(s.get("L", s.get("l", "2"))),
                    kappa=float(s.get("kappa", "1")),
                    k=float(s.get("k", "1")),
                    gamma1=float(s.get("gamma1", "1")),
                    gammaL=float(s.get("gammal", "1")),
                    theta1=float(s.get("theta1", "1")),
                    thetaL=float(s.get("thetal", "1")),
                )
                return nw.build_chain(cs, pot)
            if self.network == "langevin":
                ls = nw.LangevinNetSpec(
                    n_sites=int(s["n_sites"]),
                    bath_sites=[int(v) for v in _vec(s["bath_sites"])],
                    omega=_mat(s["omega"]),
                    theta=list(_vec(s["theta"])),
                    gamma=list(_vec(s["gamma"])),
                )
                return nw.build_langevin(ls, pot)
            if self.network == "semi_markov":
                ss = nw.SemiMarkovSpec(
                    n_sites=int(s["n_sites"]),
                    n_baths=int(s["n_baths"]),
                    omega=_mat(s["omega"]),
                    Lam=_mat(s["lambda"]),
                    iota=_mat(s["iota"]),
                    theta=_mat(s["theta"]),
                )
                return nw.build_semi_markov(ss, pot)
            if pot.variant != "none":
                raise ConfigError("[linear] systems take no potential")
            return DynamicsSpec(_mat(s["a"]), _mat(s["b"]), label="linear")
        except KeyError as exc:
            raise ConfigError(f"[{self.network}] missing key {exc}") from exc
        except nw.ConstructionError as exc:
            raise ConfigError(f"[{self.network}] {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[{self.network}] {exc}") from exc


def parse_config(text):
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    unknown = [s for s in cp.sections() if s not in KNOWN_SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    nets = [s for s in cp.sections() if s in NETWORK_SECTIONS]
    if len(nets) != 1:
        raise ConfigError(f"need exactly one network section, found {nets or 'none'}")
    cfg = RunConfig(text, cp, nets[0])
    if cp.has_section("simulate") and "seed" not in cp["simulate"]:
        raise ConfigError("[simulate] needs an explicit seed")
    for sec in cp.sections():
        for k, v in cp[sec].items():
            if k in ("eps_rank", "h", "delta", "tol", "sigma") and not _positive(v):
                raise ConfigError(f"[{sec}] {k} must be positive")
    return cfg


def _positive(v):
    try:
        return float(v) > 0
    except ValueError:
        return False


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
