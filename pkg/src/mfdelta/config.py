"""Flat key = value run configuration files.

One assignment per line, ``#`` comments, and a single nesting level for
model parameters via the ``model.`` prefix:

    model = mean_vol
    payoff = call
    strike = 2.0
    x0 = 1.0
    horizon = 1.0
    n_steps = 512
    n_paths = 100000
    seed = 12345
    methods = malliavin, fd_forward
    h_list = 0.1, 0.01
    model.mu = 1.0
    model.sigma = 0.8

Unknown keys, type mismatches and invalid values raise ConfigParse with the
offending line number.  Every key except ``model`` has a default, so a
minimal file runs; defaults that were filled in are recorded on the parsed
config for the CLI to report.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

from .errors import ConfigParse
from .estimators import METHOD_NAMES, RunSettings
from .grid import TimeGrid
from .models import MODEL_IDS, PAYOFF_KINDS, ModelSpec, Payoff, build_model, make_payoff

_DEFAULTS = {
    "payoff": "identity",
    "strike": None,
    "x0": 1.0,
    "horizon": 1.0,
    "n_steps": 512,
    "n_paths": 100_000,
    "seed": 12345,
    "methods": ["malliavin"],
    "h_list": [],
    "fd_crn": True,
    "resolver": "analytic",
    "n_particles": 100_000,
    "picard_tol": 1e-6,
    "picard_max_iters": 50,
    "log_euler": False,
    "generic_weight": False,
    "weight_convention": "cancelled",
    "dump_path": False,
    "threads": 1,
    "timings": False,
    "out": "out",
}

_METHOD_ALIASES = {"fd": "fd_central"}


@dataclass
class RunConfig:
    model: str
    params: dict = field(default_factory=dict)
    payoff: str = "identity"
    strike: float | None = None
    x0: float = 1.0
    horizon: float = 1.0
    n_steps: int = 512
    n_paths: int = 100_000
    seed: int = 12345
    methods: list = field(default_factory=lambda: ["malliavin"])
    h_list: list = field(default_factory=list)
    fd_crn: bool = True
    resolver: str = "analytic"
    n_particles: int = 100_000
    picard_tol: float = 1e-6
    picard_max_iters: int = 50
    log_euler: bool = False
    generic_weight: bool = False
    weight_convention: str = "cancelled"
    dump_path: bool = False
    threads: int = 1
    timings: bool = False
    out: str = "out"
    applied_defaults: list = field(default_factory=list)

    def build_model(self) -> ModelSpec:
        return build_model(self.model, self.params)

    def build_payoff(self) -> Payoff:
        return make_payoff(self.payoff, self.strike)

    def grid(self) -> TimeGrid:
        return TimeGrid(horizon=self.horizon, n_steps=self.n_steps)

    def settings(self) -> RunSettings:
        return RunSettings(
            x0=self.x0,
            grid=self.grid(),
            n_paths=self.n_paths,
            seed=self.seed,
            threads=self.threads,
            log_euler=self.log_euler,
            use_generic_weight=self.generic_weight,
            fd_crn=self.fd_crn,
            resolver=self.resolver,
            n_particles=self.n_particles,
            picard_tol=self.picard_tol,
            picard_max_iters=self.picard_max_iters,
            weight_convention=self.weight_convention,
        )


def _parse_bool(raw: str, line_no: int, key: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigParse(f"key {key!r}: expected a boolean, got {raw!r}", line_no)


def _parse_float(raw: str, line_no: int, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigParse(f"key {key!r}: expected a number, got {raw!r}", line_no)


def _parse_int(raw: str, line_no: int, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigParse(f"key {key!r}: expected an integer, got {raw!r}", line_no)


def _split_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document."""
    values: dict = {}
    params: dict = {}
    seen_lines: dict = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParse(f"expected 'key = value', got {raw_line.strip()!r}", line_no)
        key, raw = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigParse("empty key", line_no)
        if key in seen_lines:
            raise ConfigParse(f"duplicate key {key!r} (first set on line {seen_lines[key]})", line_no)
        seen_lines[key] = line_no

        if key.startswith("model."):
            name = key[len("model.") :]
            if not name:
                raise ConfigParse("empty model parameter name", line_no)
            try:
                params[name] = float(raw)
            except ValueError:
                params[name] = raw  # string-valued parameters like f_kind
            continue

        if key == "model":
            if raw not in MODEL_IDS:
                raise ConfigParse(
                    f"unknown model {raw!r}; expected one of {MODEL_IDS}", line_no
                )
            values["model"] = raw
        elif key == "payoff":
            if raw not in PAYOFF_KINDS:
                raise ConfigParse(
                    f"unknown payoff {raw!r}; expected one of {PAYOFF_KINDS}", line_no
                )
            values["payoff"] = raw
        elif key in ("strike", "x0", "horizon", "picard_tol"):
            values[key] = _parse_float(raw, line_no, key)
        elif key in ("n_steps", "n_paths", "seed", "n_particles", "picard_max_iters", "threads"):
            values[key] = _parse_int(raw, line_no, key)
        elif key in ("fd_crn", "log_euler", "generic_weight", "dump_path", "timings"):
            values[key] = _parse_bool(raw, line_no, key)
        elif key == "methods":
            methods = [_METHOD_ALIASES.get(m, m) for m in _split_list(raw)]
            for m in methods:
                if m not in METHOD_NAMES:
                    raise ConfigParse(
                        f"unknown method {m!r}; expected one of {METHOD_NAMES}", line_no
                    )
            values["methods"] = methods
        elif key == "h_list":
            values["h_list"] = [_parse_float(v, line_no, key) for v in _split_list(raw)]
        elif key == "resolver":
            if raw not in ("analytic", "particle"):
                raise ConfigParse(f"resolver must be analytic or particle, got {raw!r}", line_no)
            values["resolver"] = raw
        elif key == "weight_convention":
            if raw not in ("cancelled", "literal"):
                raise ConfigParse(
                    f"weight_convention must be cancelled or literal, got {raw!r}", line_no
                )
            values["weight_convention"] = raw
        elif key == "out":
            values["out"] = raw
        else:
            raise ConfigParse(f"unknown key {key!r}", line_no)

    if "model" not in values:
        raise ConfigParse("missing required key 'model'")

    applied = [k for k in _DEFAULTS if k not in values]
    merged = {**_DEFAULTS, **values}
    cfg = RunConfig(model=values["model"], params=params, applied_defaults=applied)
    for key, val in merged.items():
        setattr(cfg, key, val)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.horizon <= 0.0:
        raise ConfigParse(f"horizon must be positive, got {cfg.horizon}")
    if cfg.n_steps < 1:
        raise ConfigParse(f"n_steps must be >= 1, got {cfg.n_steps}")
    if cfg.n_paths < 1:
        raise ConfigParse(f"n_paths must be >= 1, got {cfg.n_paths}")
    if cfg.threads < 1:
        raise ConfigParse(f"threads must be >= 1, got {cfg.threads}")
    if cfg.x0 <= 0.0:
        raise ConfigParse(f"x0 must be positive for the geometric models, got {cfg.x0}")
    if cfg.payoff in ("call", "digital") and cfg.strike is None:
        raise ConfigParse(f"payoff {cfg.payoff!r} requires a strike")
    if any(h <= 0.0 for h in cfg.h_list):
        raise ConfigParse("h_list entries must be positive")
    if cfg.generic_weight and cfg.log_euler:
        raise ConfigParse("generic_weight requires log_euler = false")
    needs_h = any(m.startswith("fd_") for m in cfg.methods)
    if needs_h and not cfg.h_list:
        raise ConfigParse("finite-difference methods need a nonempty h_list")


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: RunConfig) -> str:
    """Render a config document that parses back to the same resolved run."""
    out = io.StringIO()
    out.write(f"model = {cfg.model}\n")
    out.write(f"payoff = {cfg.payoff}\n")
    if cfg.strike is not None:
        out.write(f"strike = {cfg.strike:.17g}\n")
    out.write(f"x0 = {cfg.x0:.17g}\n")
    out.write(f"horizon = {cfg.horizon:.17g}\n")
    out.write(f"n_steps = {cfg.n_steps}\n")
    out.write(f"n_paths = {cfg.n_paths}\n")
    out.write(f"seed = {cfg.seed}\n")
    out.write(f"methods = {', '.join(cfg.methods)}\n")
    if cfg.h_list:
        out.write(f"h_list = {', '.join(f'{h:.17g}' for h in cfg.h_list)}\n")
    out.write(f"fd_crn = {str(cfg.fd_crn).lower()}\n")
    out.write(f"resolver = {cfg.resolver}\n")
    out.write(f"n_particles = {cfg.n_particles}\n")
    out.write(f"picard_tol = {cfg.picard_tol:.17g}\n")
    out.write(f"picard_max_iters = {cfg.picard_max_iters}\n")
    out.write(f"log_euler = {str(cfg.log_euler).lower()}\n")
    out.write(f"generic_weight = {str(cfg.generic_weight).lower()}\n")
    out.write(f"weight_convention = {cfg.weight_convention}\n")
    out.write(f"dump_path = {str(cfg.dump_path).lower()}\n")
    out.write(f"threads = {cfg.threads}\n")
    out.write(f"timings = {str(cfg.timings).lower()}\n")
    out.write(f"out = {cfg.out}\n")
    for name in sorted(cfg.params):
        out.write(f"model.{name} = {cfg.params[name]}\n")
    return out.getvalue()


def with_overrides(
    cfg: RunConfig,
    seed: int | None = None,
    out: str | None = None,
    threads: int | None = None,
) -> RunConfig:
    updated = replace(cfg)
    if seed is not None:
        updated.seed = seed
    if out is not None:
        updated.out = out
    if threads is not None:
        updated.threads = threads
    return updated
