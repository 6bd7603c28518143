"""INI run configurations.

Sections (one level, ``key = value``):

``[run]``
    ``kind`` (bernoulli | phd), ``state`` (finite | gaussian), ``horizon``,
    ``seed``, ``algorithm`` (exact | meanfield | association | mixed),
    ``N``, ``N_inner``, ``trials``, ``eps``, ``variant``.
``[model]``
    finite: ``survival``, ``detection``, ``likelihood``, ``clutter``,
    ``birth``, ``motion`` and for PHD ``spawn_rate``, ``spawn_kernel``.
    gaussian: ``F``, ``Q``, ``H``, ``R``, ``survival``, ``detection``,
    ``clutter``, ``birth_mass``, ``birth_mean``, ``birth_cov``,
    ``spawn_rate``, ``region``.
``[init]``
    ``mass`` and ``law`` (finite) or ``mean``, ``cov`` (gaussian).
``[observations]``
    ``source`` (simulate | fixed), ``seed``, ``max_count``, ``record``.
``[study]``
    ``N_list``, ``trials``, ``horizon``.
``[stability]``
    ``m``, ``horizon``, ``init2_mass``, ``init2_law``, ``y_max``.

Vectors are comma separated; matrix rows are separated by ``;``. A fixed
observation record lists steps separated by ``;`` (an empty step is
allowed), each a comma list of ids (finite) or of ``/``-joined
coordinates (gaussian).
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..association import GaussianState, LinearGaussianPhdSpec
from ..bernoulli import BernoulliModelSpec, BernoulliStep
from ..exceptions import ConfigError, MvflowError
from ..observations import ObservationSet
from ..phd import PhdModelSpec

KINDS = ("bernoulli", "phd")
STATES = ("finite", "gaussian")
ALGORITHMS = ("exact", "meanfield", "association", "mixed")


def vector(text: str) -> np.ndarray:
    text = text.strip()
    if not text:
        return np.zeros(0)
    return np.array([float(v) for v in text.split(",")])


def matrix(text: str) -> np.ndarray:
    rows = [vector(r) for r in text.split(";") if r.strip()]
    if len({r.size for r in rows}) != 1:
        raise ConfigError("matrix rows have different lengths")
    return np.vstack(rows)


def _record(text: str, gaussian: bool) -> list:
    steps = []
    for k, part in enumerate(text.split(";")):
        items = [t for t in part.split(",") if t.strip()]
        if gaussian:
            pts = np.array([[float(c) for c in t.split("/")] for t in items]) if items else None
            steps.append(ObservationSet(pts if pts is not None else np.zeros((0, 1)), k))
        else:
            steps.append(ObservationSet(np.array([int(t) for t in items], dtype=np.int64), k))
    return steps


@dataclass
class ScenarioConfig:
    kind: str
    state: str
    horizon: int
    seed: int
    algorithm: str
    spec: object
    init: object
    N: int = 1000
    N_inner: int = 100
    trials: int = 1
    eps: float = 0.0
    variant: str = "additive"
    obs_source: str = "simulate"
    obs_seed: int = 0
    max_count: int | None = None
    record: list | None = None
    study: dict = field(default_factory=dict)
    stability: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)

    def snapshot(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_dict(self.raw)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()


def _get(sec, key, conv, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"missing key '{key}' in section [{sec.name}]")
        return default
    try:
        return conv(sec[key])
    except (ValueError, TypeError) as err:
        raise ConfigError(f"bad value for '{key}' in [{sec.name}]: {err}") from None


def _finite_spec(kind, sec):
    K = _get(sec, "motion", matrix, required=True).shape[0]

    def per_state(key, default=None):
        v = _get(sec, key, vector, default=None)
        if v is None:
            if default is None:
                raise ConfigError(f"missing key '{key}' in section [model]")
            return np.full(K, default)
        return np.full(K, v[0]) if v.size == 1 else v

    common = dict(survival=per_state("survival"), detection=per_state("detection"),
                  likelihood=_get(sec, "likelihood", matrix, required=True),
                  clutter=_get(sec, "clutter", vector, required=True),
                  birth=_get(sec, "birth", vector, required=True),
                  motion=_get(sec, "motion", matrix, required=True))
    if kind == "bernoulli":
        return BernoulliModelSpec(BernoulliStep(**common))
    return PhdModelSpec(**common, spawn_rate=per_state("spawn_rate", 0.0),
                        spawn_kernel=_get(sec, "spawn_kernel", matrix))


def _gaussian_spec(sec):
    region = _get(sec, "region", matrix, required=True)
    return LinearGaussianPhdSpec(
        F=_get(sec, "F", matrix, required=True), Q=_get(sec, "Q", matrix, required=True),
        H=_get(sec, "H", matrix, required=True), R=_get(sec, "R", matrix, required=True),
        survival=_get(sec, "survival", float, required=True), detection=_get(sec, "detection", float, required=True),
        clutter=_get(sec, "clutter", float, required=True), birth_mass=_get(sec, "birth_mass", float, required=True),
        birth_mean=_get(sec, "birth_mean", vector, required=True),
        birth_cov=_get(sec, "birth_cov", matrix, required=True),
        spawn_rate=_get(sec, "spawn_rate", float, 0.0),
        region=tuple((float(lo), float(hi)) for lo, hi in region))


def parse_config(text: str, seed: int | None = None) -> ScenarioConfig:
    """Parse and validate a configuration; ``seed`` overrides ``[run] seed``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"unparseable config: {err}") from None
    for name in ("run", "model"):
        if not cp.has_section(name):
            raise ConfigError(f"missing section [{name}]")
    if seed is not None:
        if seed < 0 or seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cp["run"]["seed"] = str(seed)
    raw = {s: dict(cp[s]) for s in cp.sections()}
    run, model = cp["run"], cp["model"]
    kind = _get(run, "kind", str.strip, required=True)
    state = _get(run, "state", str.strip, "finite")
    algorithm = _get(run, "algorithm", str.strip, "exact")
    if kind not in KINDS or state not in STATES or algorithm not in ALGORITHMS:
        raise ConfigError(f"kind/state/algorithm must be one of {KINDS}/{STATES}/{ALGORITHMS}")
    if state == "gaussian" and kind != "phd":
        raise ConfigError("gaussian sub-filters are only available for the PHD model")
    try:
        spec = _gaussian_spec(model) if state == "gaussian" else _finite_spec(kind, model)
        init_sec = cp["init"] if cp.has_section("init") else {}
        mass = float(init_sec.get("mass", "1.0"))
        if state == "gaussian":
            init = (mass, GaussianState(vector(init_sec.get("mean", "0")), matrix(init_sec.get("cov", "1"))))
        else:
            law = vector(init_sec["law"]) if "law" in init_sec else None
            size = spec.size
            law = np.full(size, 1.0 / size) if law is None else law / law.sum()
            init = (mass, law)
    except ConfigError:
        raise
    except (MvflowError, ValueError, KeyError) as err:
        raise ConfigError(f"invalid model: {err}") from None
    obs = cp["observations"] if cp.has_section("observations") else {}
    source = obs.get("source", "simulate").strip()
    if source not in ("simulate", "fixed"):
        raise ConfigError("observations source must be 'simulate' or 'fixed'")
    record = _record(obs["record"], state == "gaussian") if source == "fixed" else None
    cfg = ScenarioConfig(
        kind=kind, state=state, horizon=_get(run, "horizon", int, 10), seed=_get(run, "seed", int, 0),
        algorithm=algorithm, spec=spec, init=init, N=_get(run, "N", int, 1000),
        N_inner=_get(run, "N_inner", int, 100), trials=_get(run, "trials", int, 1),
        eps=_get(run, "eps", float, 0.0), variant=_get(run, "variant", str.strip, "additive"),
        obs_source=source, obs_seed=int(obs.get("seed", "0")),
        max_count=int(obs["max_count"]) if "max_count" in obs else None, record=record,
        study={k: v for k, v in cp["study"].items()} if cp.has_section("study") else {},
        stability={k: v for k, v in cp["stability"].items()} if cp.has_section("stability") else {},
        raw=raw)
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig):
    if cfg.horizon < 1 or cfg.N < 1 or cfg.N_inner < 1 or cfg.trials < 1:
        raise ConfigError("horizon, N, N_inner and trials must be positive")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.variant not in ("additive", "multiplicative"):
        raise ConfigError("variant must be additive or multiplicative")
    if cfg.record is not None and len(cfg.record) < cfg.horizon:
        raise ConfigError("fixed observation record is shorter than the horizon")
    if cfg.state == "gaussian" and cfg.algorithm == "meanfield":
        raise ConfigError("mean-field runs need a finite state space")
    if cfg.kind == "bernoulli" and cfg.algorithm in ("association", "mixed"):
        raise ConfigError("association schemes apply to the PHD model")
    mass = cfg.init[0]
    if not mass > 0 or (cfg.kind == "bernoulli" and mass > 1):
        raise ConfigError("initial mass must be positive (and at most 1 for Bernoulli)")


def load_config(path: str, seed: int | None = None) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    return parse_config(text, seed)
