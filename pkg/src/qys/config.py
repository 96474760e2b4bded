"""Run configuration: YAML file plus command-line overrides.

Schema (all sections optional unless the mode needs them)::

    mode: line | tip | sweep | oracle
    formulation: constraint | flow
    seed: 0
    params:     {n: 3, lambda: 0.0, c: 1.0, rbar: 2.0}
    init:       {r: 0.0, psi: 1.0, dpsi: 0.1, F: 0.0}          # line
    span:       {back: 10.0, fwd: 10.0}                        # line
    tip:        {F0: 0.0 | [F0, ...], r_end: 10.0, r_start: 1e-4, order: 3}
    sweep:      {cells: [above-c-pos, ...], samples: 50, span: 50.0,
                 eps: 0.1, workers: 1, runs: [{n, lambda, c, rbar, mode, init, back, fwd}]}
    oracle:     {family: exponential | constant_psi, m, n, c, a, c1, lambda, span}
    integrator: {rtol, atol, h_init, h_min, h_max, max_steps, blowup_threshold,
                 psi_event, asymptote_tol, asymptote_window}
    events:     [PsiZero, DPsiZero, DDPsiZero, Asymptote]
    output:     {dir: out, stride: 1}

Unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .classifier import DEFAULT_EPS, FALSIFICATION_CELLS, RunSpec
from .core import Formulation, SolitonParams, SolitonState
from .errors import ConfigError
from .integrator import DEFAULT_EVENTS, EventKind, IntegratorConfig

_SECTIONS = {
    "mode": None,
    "formulation": None,
    "seed": None,
    "params": {"n", "lambda", "c", "rbar"},
    "init": {"r", "psi", "dpsi", "F"},
    "span": {"back", "fwd"},
    "tip": {"F0", "r_end", "r_start", "order"},
    "sweep": {"cells", "samples", "span", "eps", "workers", "runs"},
    "oracle": {"family", "m", "n", "c", "a", "c1", "lambda", "span"},
    "integrator": {f.name for f in fields(IntegratorConfig)},
    "events": None,
    "output": {"dir", "stride"},
}
_RUN_KEYS = {"n", "lambda", "c", "rbar", "mode", "init", "back", "fwd"}
MODES = ("line", "tip", "sweep", "oracle")


@dataclass
class RunConfig:
    mode: str
    params: SolitonParams | None = None
    formulation: Formulation = Formulation.CONSTRAINT
    init: SolitonState | None = None
    back: float = 0.0
    fwd: float = 10.0
    tip_F0: tuple[float, ...] = (0.0,)
    tip_r_end: float = 10.0
    tip_r_start: float = 1e-4
    tip_order: int = 3
    sweep_cells: tuple[str, ...] = ()
    sweep_samples: int = 50
    sweep_span: float = 50.0
    sweep_eps: float = DEFAULT_EPS
    sweep_workers: int = 1
    sweep_runs: tuple[RunSpec, ...] = ()
    oracle: dict = field(default_factory=dict)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    events: frozenset = DEFAULT_EVENTS
    out_dir: Path = Path("out")
    stride: int = 1
    seed: int = 0


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ConfigError(f"{where}: malformed YAML: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def merge(base: dict, overrides: dict) -> dict:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for key, value in overrides.items():
        if isinstance(value, dict):
            out.setdefault(key, {})
            if not isinstance(out[key], dict):
                raise ConfigError(f"{key}: expected a mapping")
            out[key].update(value)
        else:
            out[key] = value
    return out


def _num(section: str, key: str, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{section}.{key}: must be finite")
    return value


def _check_keys(data: dict) -> None:
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown key")
        allowed = _SECTIONS[key]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected a mapping")
        for sub in value:
            if sub not in allowed:
                raise ConfigError(f"{key}.{sub}: unknown key")


def _params(d: dict, section: str = "params") -> SolitonParams:
    for key in ("n", "lambda", "c"):
        if key not in d:
            raise ConfigError(f"{section}.{key}: required")
    n = _num(section, "n", d["n"], int)
    lam = _num(section, "lambda", d["lambda"])
    c = _num(section, "c", d["c"])
    rbar = _num(section, "rbar", d.get("rbar", 0.0))
    if n < 3:
        raise ConfigError(f"{section}.n: dimension must be >= 3, got {n}")
    if c == 0:
        raise ConfigError(f"{section}.c: must be nonzero (a quasi-Yamabe soliton requires c != 0)")
    return SolitonParams(n, lam, c, rbar)


def _run_spec(i: int, d: dict, seed: int, eps: float) -> RunSpec:
    where = f"sweep.runs[{i}]"
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    for key in d:
        if key not in _RUN_KEYS:
            raise ConfigError(f"{where}.{key}: unknown key")
    p = _params(d, where)
    mode = d.get("mode", "line")
    if mode not in ("line", "tip"):
        raise ConfigError(f"{where}.mode: expected 'line' or 'tip'")
    init = d.get("init")
    want = 3 if mode == "line" else 1
    if not isinstance(init, list) or len(init) != want:
        raise ConfigError(f"{where}.init: expected a list of {want} numbers")
    init = tuple(_num(where, "init", v) for v in init)
    return RunSpec(
        p.n, p.lam, p.c, p.rbar, mode, init,
        back=_num(where, "back", d.get("back", 50.0)),
        fwd=_num(where, "fwd", d.get("fwd", 50.0)),
        seed=seed, eps=eps,
    )


def build_config(data: dict) -> RunConfig:
    """Validate a merged config mapping; raises ConfigError naming the field."""
    _check_keys(data)
    mode = data.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {', '.join(MODES)}, got {mode!r}")
    cfg = RunConfig(mode=mode)
    cfg.seed = _num("", "seed", data.get("seed", 0), int) if "seed" in data else 0
    try:
        cfg.formulation = Formulation(data.get("formulation", "constraint"))
    except ValueError:
        raise ConfigError("formulation: expected 'constraint' or 'flow'") from None

    integ = data.get("integrator", {})
    kwargs = {}
    for f in fields(IntegratorConfig):
        if f.name in integ:
            kwargs[f.name] = _num("integrator", f.name, integ[f.name], int if f.name == "max_steps" else float)
    try:
        cfg.integrator = IntegratorConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None

    if "events" in data:
        ev = data["events"]
        if not isinstance(ev, list):
            raise ConfigError("events: expected a list")
        try:
            cfg.events = frozenset(EventKind(e) for e in ev)
        except ValueError:
            raise ConfigError(f"events: unknown event kind in {ev!r}") from None

    out = data.get("output", {})
    cfg.out_dir = Path(out.get("dir", "out"))
    cfg.stride = _num("output", "stride", out.get("stride", 1), int)
    if cfg.stride < 1:
        raise ConfigError("output.stride: must be >= 1")

    if mode in ("line", "tip"):
        if "params" not in data:
            raise ConfigError("params: required for this mode")
        cfg.params = _params(data["params"])

    if mode == "line":
        init = data.get("init")
        if init is None:
            raise ConfigError("init: required for line mode")
        for key in ("psi", "dpsi", "F"):
            if key not in init:
                raise ConfigError(f"init.{key}: required")
        psi = _num("init", "psi", init["psi"])
        if not psi > 0:
            raise ConfigError("init.psi: must be positive")
        cfg.init = SolitonState(
            _num("init", "r", init.get("r", 0.0)), psi,
            _num("init", "dpsi", init["dpsi"]), _num("init", "F", init["F"]),
        )
        span = data.get("span", {})
        cfg.back = _num("span", "back", span.get("back", 0.0))
        cfg.fwd = _num("span", "fwd", span.get("fwd", 10.0))
        if cfg.back < 0 or cfg.fwd < 0:
            raise ConfigError("span: back and fwd must be >= 0")

    if mode == "tip":
        tip = data.get("tip", {})
        F0 = tip.get("F0", 0.0)
        F0s = F0 if isinstance(F0, list) else [F0]
        cfg.tip_F0 = tuple(_num("tip", "F0", v) for v in F0s)
        cfg.tip_r_end = _num("tip", "r_end", tip.get("r_end", 10.0))
        cfg.tip_r_start = _num("tip", "r_start", tip.get("r_start", 1e-4))
        cfg.tip_order = _num("tip", "order", tip.get("order", 3), int)
        if not cfg.params.rbar > 0:
            raise ConfigError("params.rbar: tip mode needs rbar > 0 (round sphere fiber)")
        if not 0 < cfg.tip_r_start <= 0.01:
            raise ConfigError("tip.r_start: must lie in (0, 0.01]")
        if cfg.tip_order < 3:
            raise ConfigError("tip.order: must be >= 3")

    if mode == "sweep":
        sw = data.get("sweep", {})
        cells = sw.get("cells", [])
        if not isinstance(cells, list):
            raise ConfigError("sweep.cells: expected a list")
        for name in cells:
            if name not in FALSIFICATION_CELLS:
                raise ConfigError(
                    f"sweep.cells: unknown cell {name!r} (known: {', '.join(FALSIFICATION_CELLS)})"
                )
        cfg.sweep_cells = tuple(cells)
        cfg.sweep_samples = _num("sweep", "samples", sw.get("samples", 50), int)
        cfg.sweep_span = _num("sweep", "span", sw.get("span", 50.0))
        cfg.sweep_eps = _num("sweep", "eps", sw.get("eps", DEFAULT_EPS))
        cfg.sweep_workers = _num("sweep", "workers", sw.get("workers", 1), int)
        runs = sw.get("runs", [])
        if not isinstance(runs, list):
            raise ConfigError("sweep.runs: expected a list")
        cfg.sweep_runs = tuple(_run_spec(i, d, cfg.seed, cfg.sweep_eps) for i, d in enumerate(runs))

    if mode == "oracle":
        o = dict(data.get("oracle", {}))
        family = o.get("family", "exponential")
        if family not in ("exponential", "constant_psi"):
            raise ConfigError("oracle.family: expected 'exponential' or 'constant_psi'")
        o["family"] = family
        if "c" not in o:
            raise ConfigError("oracle.c: required")
        if _num("oracle", "c", o["c"]) == 0:
            raise ConfigError("oracle.c: must be nonzero (a quasi-Yamabe soliton requires c != 0)")
        if "n" in o and _num("oracle", "n", o["n"], int) < 3:
            raise ConfigError("oracle.n: dimension must be >= 3")
        for key in ("m", "a"):
            if key in o and not _num("oracle", key, o[key]) > 0:
                raise ConfigError(f"oracle.{key}: must be positive")
        cfg.oracle = o
    return cfg
