"""Line-oriented experiment configuration.

Grammar: one ``section.key = value`` per line; blank lines and lines starting
with ``#`` are ignored; a repeated key keeps its last value (with a warning).
Lists (sweep axes, output epsilons) are comma-separated.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError, ConfigTypeError, MissingRequired, UnknownKey

log = logging.getLogger(__name__)

_ALPHA_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*/\s*L\s*$")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _alpha(text: str) -> str:
    text = text.strip()
    if _ALPHA_RE.match(text):
        float(_ALPHA_RE.match(text).group(1))
        return text
    if float(text) <= 0:
        raise ValueError("alpha must be positive")
    return text


def _str_list(text: str) -> tuple:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def _int_list(text: str) -> tuple:
    return tuple(int(tok) for tok in _str_list(text))


def _float_list(text: str) -> tuple:
    return tuple(float(tok) for tok in _str_list(text))


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_render_value(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ProblemSection:
    kind: str = "least_squares"
    risk: str = "empirical"
    n: int = 4
    p: int = 10
    m: int = 100
    heterogeneity: float = 0.5
    a: float = 0.1
    noise: float = 0.1
    regularizer: str = "zero"
    dataset: str | None = None
    partition: str = "contiguous"


@dataclass(frozen=True)
class GraphSection:
    topology: str = "ring"
    weights: str | None = None
    lazy: bool = False


@dataclass(frozen=True)
class EstimatorSection:
    kind: str | None = None
    b: int | None = None
    B: int | None = None
    q: int | None = None
    full_pass: bool = False


@dataclass(frozen=True)
class RunSection:
    alpha: str | None = None
    K: int | None = None
    T: int | None = None
    theorem: str | None = None
    epsilon: float | None = None
    consensus: str = "plain"
    x0: float = 0.0
    seed: int = 0
    repetitions: int = 1
    check_every: int = 1
    psi_lower: float = 0.0
    mult_K: float = 1.0
    mult_alpha: float = 1.0
    mult_b: float = 1.0
    mult_B: float = 1.0
    mult_q: float = 1.0
    mult_T: float = 1.0


@dataclass(frozen=True)
class OutputSection:
    dir: str = "results"
    timing: bool = False
    epsilons: tuple = ()


@dataclass(frozen=True)
class SweepSection:
    topology: tuple = ()
    estimator: tuple = ()
    n: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    graph: GraphSection = field(default_factory=GraphSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def get(self, key: str):
        section, name = key.split(".", 1)
        return getattr(getattr(self, section), name)

    def with_values(self, **dotted) -> "ExperimentConfig":
        """Copy with ``section__key=value`` replacements (already typed)."""
        out = self
        for key, value in dotted.items():
            section, name = key.split("__", 1)
            out = replace(out, **{section: replace(getattr(out, section), **{name: value})})
        return out

    def as_dict(self) -> dict:
        return {f"{s}.{k}": v for s, k, v in _items(self)}

    def digest(self) -> str:
        return hashlib.sha256(render_config(self).encode("utf-8")).hexdigest()[:12]


_SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig)}

_PARSERS = {
    "run.alpha": _alpha,
    "output.epsilons": _float_list,
    "sweep.topology": _str_list,
    "sweep.estimator": _str_list,
    "sweep.n": _int_list,
}

_CHOICES = {
    "problem.kind": ("least_squares", "nc_logistic"),
    "problem.risk": ("empirical", "population"),
    "problem.partition": ("contiguous", "shuffled", "label_skewed"),
    "estimator.kind": ("exact", "sa", "sro", "sre"),
    "run.theorem": ("sa", "sro", "sre"),
    "run.consensus": ("plain", "chebyshev"),
}


def _schema():
    out = {}
    for section, factory in _SECTIONS.items():
        for f in fields(factory()):
            out[f"{section}.{f.name}"] = f.type
    return out


SCHEMA = _schema()


def _items(cfg: ExperimentConfig):
    for section in _SECTIONS:
        sec = getattr(cfg, section)
        for f in fields(sec):
            yield section, f.name, getattr(sec, f.name)


def _convert(key: str, text: str):
    if key in _PARSERS:
        return _PARSERS[key](text)
    kind = SCHEMA[key]
    base = kind.replace(" | None", "")
    text = text.strip()
    if base == "int":
        return int(text)
    if base == "float":
        return float(text)
    if base == "bool":
        return _bool(text)
    return text


def _lines(text: str, origin: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.key = value'")
        key, value = line.split("=", 1)
        yield lineno, key.strip(), value.strip()


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse config text, then apply ``key=value`` overrides on top.

    Precedence: overrides, then the file, then built-in defaults.
    """
    raw: dict[str, str] = {}
    for lineno, key, value in _lines(text, "config"):
        if key not in SCHEMA:
            raise UnknownKey(f"config:{lineno}: unknown key {key!r}")
        if key in raw:
            log.warning("config:%d: duplicate key %s, keeping the last value", lineno, key)
        raw[key] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in SCHEMA:
            raise UnknownKey(f"override: unknown key {key!r}")
        raw[key] = value

    values = {}
    for key, text_value in raw.items():
        try:
            value = _convert(key, text_value)
        except ValueError as exc:
            raise ConfigTypeError(f"{key}: cannot parse {text_value!r} as {SCHEMA[key]}") from exc
        if key in _CHOICES and value not in _CHOICES[key]:
            raise ConfigTypeError(f"{key}: {value!r} is not one of {_CHOICES[key]}")
        values[key.replace(".", "__", 1)] = value
    cfg = ExperimentConfig().with_values(**values)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    run, est = cfg.run, cfg.estimator
    explicit = [k for k in ("alpha", "K", "T") if getattr(run, k) is not None]
    if run.theorem is not None:
        if explicit:
            raise ConfigError(f"run.theorem conflicts with explicit run.{', run.'.join(explicit)}")
        if run.epsilon is None:
            raise MissingRequired("run.theorem needs run.epsilon")
        if est.kind is not None and est.kind != run.theorem:
            raise ConfigError(f"estimator.kind={est.kind} disagrees with run.theorem={run.theorem}")
        return
    if est.kind is None:
        raise MissingRequired("estimator.kind is required")
    missing = [f"run.{k}" for k in ("alpha", "K", "T") if getattr(run, k) is None]
    if missing:
        raise MissingRequired(f"need run.theorem or all of run.alpha, run.K, run.T (missing {', '.join(missing)})")
    needed = {"exact": (), "sa": ("b",), "sro": ("B", "b", "q"), "sre": ("b", "q")}[est.kind]
    absent = [f"estimator.{k}" for k in needed if getattr(est, k) is None]
    if absent:
        raise MissingRequired(f"estimator.kind = {est.kind} needs {', '.join(absent)}")


def render_config(cfg: ExperimentConfig) -> str:
    """Text form of every non-None value; ``parse_config(render_config(c)) == c``."""
    lines = []
    for section, name, value in _items(cfg):
        if value is None or value == ():
            continue
        lines.append(f"{section}.{name} = {_render_value(value)}")
    return "\n".join(lines) + "\n"


def resolve_alpha(text: str, L: float) -> float:
    match = _ALPHA_RE.match(text)
    if match:
        return float(match.group(1)) / L
    return float(text)
