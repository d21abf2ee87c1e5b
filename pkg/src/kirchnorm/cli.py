"""Batch command-line front end.

Every command prints one JSON object (or writes it to ``--json``) that embeds the
resolved configuration and the constants bundle, so a run can be replayed exactly.
``sweep`` and ``instanton-check`` also emit CSV.  Errors are reported as JSON on
standard error with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from kirchnorm.constants import auto_mu, sobolev_constant, thresholds
from kirchnorm.field import (
    RadialGrid,
    dump_field,
    fiber_of,
    grad_norm_sq,
    load_field,
    lp_norm_p,
    mass_norm,
    resample,
)
from kirchnorm.groundstate import ShootingConfig, instanton, solve_limit_ground_state, solve_wp
from kirchnorm.landscape import barrier, classify
from kirchnorm.model import ModelParams, Regime, RegimeError, is_critical
from kirchnorm.solver import (
    SolverConfig,
    gaussian_initial,
    local_minimize,
    mountain_pass,
    mu_sweep,
    sweep_csv,
)

COMMANDS = ("constants", "landscape", "groundstate", "solve-local", "solve-mp", "sweep", "instanton-check")

EXIT_CONFIG = 2
EXIT_COMPUTE = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one command.

    ``mu`` is the numeric value actually used; when it came from ``auto`` the fraction
    is kept in ``mu_auto`` so the serialized config still records the convention.
    ``mu_auto`` alone does nothing; it is the fraction applied when ``mu`` is "auto".
    Grid fields of None select the solver's default grid.
    """

    command: str
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    mu: float = 0.0
    p: float = 5.0
    q: float = 3.0
    regime: Optional[str] = None
    mu_auto: Optional[float] = None
    r_min: Optional[float] = None
    r_max: Optional[float] = None
    nodes: Optional[int] = None
    tol: float = 1e-7
    pohozaev_tol: float = 1e-6
    max_iter: int = 100_000
    ode_step: float = 0.5
    decay_threshold: float = 1e-6
    branch: str = "mp"
    mu_geom: Optional[str] = None
    eps: str = "0.05:0.4:8"
    field: Optional[str] = None
    json: Optional[str] = None
    csv: Optional[str] = None
    dump: Optional[str] = None
    wp_dump: Optional[str] = None

    @property
    def model(self) -> ModelParams:
        return ModelParams(a=self.a, b=self.b, c=self.c, mu=self.mu, p=self.p, q=self.q, regime=self.regime)

    @property
    def grid(self) -> Optional[RadialGrid]:
        if self.r_min is None and self.r_max is None and self.nodes is None:
            return None
        base = RadialGrid()
        return RadialGrid.cached(
            self.r_min if self.r_min is not None else base.r_min,
            self.r_max if self.r_max is not None else base.r_max,
            self.nodes if self.nodes is not None else base.n,
        )

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(tol=self.tol, pohozaev_tol=self.pohozaev_tol, max_iter=self.max_iter, grid=self.grid)

    @property
    def shooting(self) -> ShootingConfig:
        return ShootingConfig(ode_step=self.ode_step, decay_threshold=self.decay_threshold)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        """key=value lines that parse back to this config (mu is written numerically)."""
        lines = []
        for f in fields(self):
            if f.name == "command":
                continue
            value = getattr(self, f.name)
            if value is not None:
                lines.append(f"{f.name}={value!r}" if isinstance(value, float) else f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_KEYS = {f.name: f for f in fields(RunConfig) if f.name != "command"}
_FLOAT_KEYS = {"a", "b", "c", "p", "q", "mu_auto", "r_min", "r_max", "tol", "pohozaev_tol", "ode_step", "decay_threshold"}
_INT_KEYS = {"nodes", "max_iter"}


def _convert(key: str, text: str):
    text = text.strip()
    if key == "mu":
        return text if text == "auto" else _number(key, text, float)
    if key in _FLOAT_KEYS:
        return _number(key, text, float)
    if key in _INT_KEYS:
        return _number(key, text, int)
    return text


def _number(key: str, text: str, kind):
    try:
        value = kind(text)
    except ValueError:
        raise ConfigError(f"malformed number for {key}: {text!r}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{key} must be finite, got {text!r}")
    return value


def read_config_file(path) -> dict:
    """Parse key=value lines; ``#`` starts a comment and blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


class _Parser(argparse.ArgumentParser):
    """Raises ConfigError instead of printing usage and exiting."""

    def error(self, message):
        raise ConfigError(message)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kirchnorm", description="Normalized solutions of the Kirchhoff equation.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key=value file; flags override it")
    for key in _KEYS:
        # SUPPRESS keeps absent flags out of the namespace so file values survive
        ap.add_argument("--" + key.replace("_", "-"), dest=key, default=argparse.SUPPRESS)
    return ap


def parse_config(args: Sequence[str], file: Optional[str] = None) -> RunConfig:
    """Merge defaults, the config file and command-line flags, then validate.

    Raises
    ------
    ConfigError
        Unknown key, malformed number, bad option value.
    RegimeError
        Exponents or coefficients out of range, or an explicit regime that contradicts them.
    """
    ns = _parser().parse_args(list(args))
    values: dict = {}
    path = file if file is not None else getattr(ns, "config", None)
    if path is not None:
        values.update(read_config_file(path))
    for key in _KEYS:
        if hasattr(ns, key):
            values[key] = _convert(key, getattr(ns, key))

    mu = values.pop("mu", 0.0)
    if mu == "auto":
        frac = values.get("mu_auto") or 0.1
        placeholder = ModelParams(**_model_kwargs(values, mu=1.0))
        try:
            mu = auto_mu(placeholder, frac)
        except RegimeError as exc:
            raise RegimeError(f"--mu auto: {exc}") from None
        values["mu_auto"] = frac
    cfg = RunConfig(command=ns.command, mu=mu, **values)
    _validate(cfg)
    return cfg


def _model_kwargs(values: dict, mu: float) -> dict:
    base = RunConfig(command="constants")
    kw = {k: values.get(k, getattr(base, k)) for k in ("a", "b", "c", "p", "q")}
    return dict(kw, mu=mu, regime=values.get("regime"))


def _validate(cfg: RunConfig) -> None:
    model = cfg.model
    if cfg.regime is not None and Regime(cfg.regime) is not model.regime:
        raise RegimeError(f"regime {cfg.regime} contradicts exponents")
    if cfg.branch not in ("local", "mp", "both"):
        raise ConfigError(f"branch must be local, mp or both, got {cfg.branch!r}")
    if cfg.mu_geom is not None:
        mu_geometric(cfg.mu_geom)
    eps_grid(cfg.eps)
    if cfg.command == "sweep" and cfg.mu_geom is None:
        raise ConfigError("sweep needs --mu-geom start,ratio,count")
    cfg.shooting
    cfg.grid


def mu_geometric(spec: str) -> list[float]:
    """"start,ratio,count" -> start * ratio^k for k < count, which must decrease."""
    parts = spec.split(",")
    if len(parts) != 3:
        raise ConfigError(f"mu-geom needs start,ratio,count, got {spec!r}")
    start = _number("mu_geom", parts[0], float)
    ratio = _number("mu_geom", parts[1], float)
    count = _number("mu_geom", parts[2], int)
    if not (start > 0 and 0 < ratio < 1 and count >= 1):
        raise ConfigError("mu-geom needs start > 0, 0 < ratio < 1 and count >= 1")
    return [start * ratio**k for k in range(count)]


def eps_grid(spec: str) -> np.ndarray:
    """"lo:hi:n" -> n log-spaced values from lo to hi."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"eps needs lo:hi:n, got {spec!r}")
    lo = _number("eps", parts[0], float)
    hi = _number("eps", parts[1], float)
    n = _number("eps", parts[2], int)
    if not (0 < lo < hi and n >= 2):
        raise ConfigError("eps needs 0 < lo < hi and n >= 2")
    return np.geomspace(lo, hi, n)


# ---------------------------------------------------------------------------
# commands


def _constants_dict(model: ModelParams) -> dict:
    bundle = thresholds(model)
    out = bundle.to_dict()
    out.update(p_tilde=model.p_tilde, q_tilde=model.q_tilde, regime=model.regime.value)
    if model.regime.is_mixed and bundle.mu_star_upper is not None and model.mu < bundle.mu_star_upper:
        out["barrier"] = barrier(model, bundle).to_dict()
    return out


def _grid_for(cfg: RunConfig) -> RadialGrid:
    return cfg.solver.grid_for(cfg.model)


def _initial(cfg: RunConfig):
    if cfg.field is None:
        return None
    return resample(load_field(cfg.field), _grid_for(cfg))


def _dump(cfg: RunConfig, u) -> None:
    if cfg.dump is not None:
        dump_field(u, cfg.dump)


def _cmd_constants(cfg: RunConfig) -> dict:
    return {}


def _cmd_landscape(cfg: RunConfig) -> dict:
    model = cfg.model
    u = _initial(cfg) or gaussian_initial(model, _grid_for(cfg))
    fp = fiber_of(model, u)
    return {"fiber": dataclasses.asdict(fp), "landscape": classify(fp).to_dict()}


def _cmd_groundstate(cfg: RunConfig) -> dict:
    model = cfg.model.with_mu(0.0)
    if cfg.wp_dump is not None and not is_critical(model.p):
        dump_field(solve_wp(model.p, cfg.shooting), cfg.wp_dump)
    if is_critical(model.p):
        return {"m_c0": thresholds(model).critical_energy, "note": "at p = 6 the mu = 0 level is the critical energy"}
    res = solve_limit_ground_state(model, cfg.shooting, grid=cfg.grid)
    _dump(cfg, res.field)
    return {"result": res.summary(), "m_c0": res.energy}


def _cmd_solve_local(cfg: RunConfig) -> dict:
    res = local_minimize(cfg.model, _initial(cfg), cfg.solver)
    _dump(cfg, res.field)
    return {"result": res.summary()}


def _cmd_solve_mp(cfg: RunConfig) -> dict:
    res = mountain_pass(cfg.model, _initial(cfg), cfg.solver)
    _dump(cfg, res.field)
    return {"result": res.summary()}


def _cmd_sweep(cfg: RunConfig) -> dict:
    mus = mu_geometric(cfg.mu_geom)
    rows = mu_sweep(cfg.model.with_mu(mus[0]), mus, cfg.branch, cfg.solver)
    return {"csv": sweep_csv(rows), "rows": len(rows)}


INSTANTON_COLUMNS = ("eps", "mass_sq", "l5_5", "l6_6", "grad_sq", "l6_gap", "grad_gap")
# columns with a fitted log-log slope against eps
INSTANTON_FITTED = ("mass_sq", "l5_5", "l6_gap", "grad_gap")


def instanton_table(eps_values, grid: Optional[RadialGrid] = None) -> tuple[list[dict], dict]:
    """Norms of the truncated instanton eta U_eps and their log-log slopes against eps.

    The gaps are S^{3/2} - |u_eps|_6^6 and |grad u_eps|^2 - S^{3/2}.
    """
    s32 = sobolev_constant() ** 1.5
    rows = []
    for eps in eps_values:
        u = instanton(float(eps), 1.0, grid).u_cut
        l6 = lp_norm_p(u, 6.0)
        g = grad_norm_sq(u)
        rows.append(
            {
                "eps": float(eps),
                "mass_sq": mass_norm(u) ** 2,
                "l5_5": lp_norm_p(u, 5.0),
                "l6_6": l6,
                "grad_sq": g,
                "l6_gap": s32 - l6,
                "grad_gap": g - s32,
            }
        )
    x = np.log([r["eps"] for r in rows])
    slopes = {}
    for key in INSTANTON_FITTED:
        y = np.array([r[key] for r in rows])
        slopes[key] = float(np.polyfit(x, np.log(y), 1)[0]) if np.all(y > 0) else math.nan
    return rows, slopes


def instanton_csv(rows: list[dict], slopes: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(INSTANTON_COLUMNS)
    for row in rows:
        writer.writerow([repr(row[k]) for k in INSTANTON_COLUMNS])
    writer.writerow(["slope"] + [repr(slopes[k]) if k in slopes else "" for k in INSTANTON_COLUMNS[1:]])
    return buf.getvalue()


def _cmd_instanton_check(cfg: RunConfig) -> dict:
    rows, slopes = instanton_table(eps_grid(cfg.eps), cfg.grid)
    return {"csv": instanton_csv(rows, slopes), "slopes": slopes, "rows": len(rows)}


_HANDLERS = {
    "constants": _cmd_constants,
    "landscape": _cmd_landscape,
    "groundstate": _cmd_groundstate,
    "solve-local": _cmd_solve_local,
    "solve-mp": _cmd_solve_mp,
    "sweep": _cmd_sweep,
    "instanton-check": _cmd_instanton_check,
}


def _clean(obj):
    """Make the payload strict JSON: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def to_json(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute ``cfg.command`` and write its outputs; returns the exit status.

    The JSON object goes to ``cfg.json`` or, failing that, to stdout.  For commands
    that produce CSV, the CSV goes to ``cfg.csv`` or, when that is unset, to stdout
    while the JSON is written only if ``cfg.json`` is given.
    """
    stdout = stdout or sys.stdout
    model = cfg.model
    payload = {"command": cfg.command, "config": cfg.to_dict(), "model": model.to_dict(), "constants": _constants_dict(model)}
    payload.update(_HANDLERS[cfg.command](cfg))
    table = payload.pop("csv", None)
    text = to_json(payload)
    if table is not None:
        if cfg.csv is not None:
            Path(cfg.csv).write_text(table, encoding="utf-8", newline="")
        else:
            stdout.write(table)
        if cfg.json is not None:
            Path(cfg.json).write_text(text, encoding="utf-8")
        elif cfg.csv is not None:
            stdout.write(text)
        return 0
    if cfg.json is not None:
        Path(cfg.json).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    return 0


def _error(exc: BaseException, command: Optional[str]) -> str:
    return to_json({"error": type(exc).__name__, "message": str(exc), "command": command})


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    command = argv[0] if argv else None
    try:
        cfg = parse_config(argv)
    except (ConfigError, RegimeError, OSError, ValueError) as exc:
        sys.stderr.write(_error(exc, command))
        return EXIT_CONFIG
    try:
        return run(cfg)
    except Exception as exc:  # every failure is reported as JSON
        sys.stderr.write(_error(exc, command))
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
