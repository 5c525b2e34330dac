"""Config-driven experiments: single runs, parameter sweeps, graph checks, coupling checks.

Config files are flat ``key = value`` text.  Lists are bracketed and
comma-separated; ``#`` starts a comment.  Example::

    mode = distributed
    n = 10
    graph = ring              # path | ring | complete | erdos(p), or graph_file = PATH
    sigma = 0.5               # scalar or [s1, ..., sN]
    c = 1
    q = 0.8
    b = 0.5
    theta0 = uniform(0, 10)   # [..] | uniform(lo, hi) | gaussian(mean, sd)
    rounds = 200              # or auto
    runs = 100
    seed = 7
    compromised = [3]         # 1-based client ids
    sweep = q: [0.25, 0.5, 0.75, 0.9]
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import analysis
from .graph import (
    Graph,
    check_convergence_condition,
    complete_graph,
    erdos_renyi,
    path_graph,
    read_graph,
    ring_graph,
)
from .mechanism import MechanismParams, default_horizon, observe, run_execution, weighted_mean
from .noise import ClientStreams

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "cmd_run",
    "cmd_sweep",
    "cmd_check_graph",
    "cmd_couple",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = ("value", "epsilon", "valid", "radius", "empirical_fraction", "mean_drift")

KNOWN_KEYS = {
    "mode", "n", "graph", "graph_file", "sigma", "c", "q", "b", "theta0",
    "rounds", "runs", "seed", "compromised", "sweep",
}
REQUIRED_KEYS = ("n", "sigma", "c", "q", "rounds")
SWEEP_VARIABLES = ("q", "c", "sigma")


class ConfigError(ValueError):
    """Invalid configuration; `errors` lists ``(key, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    sigma: Union[float, tuple]
    c: float
    q: float
    rounds: Optional[int]  # None means pick the default horizon
    mode: str = "centralized"
    graph: Optional[str] = None
    graph_file: Optional[str] = None
    b: float = 0.5
    theta0: tuple = ("uniform", 0.0, 1.0)
    runs: int = 1
    seed: int = 0
    compromised: tuple = ()
    sweep: Optional[tuple] = None  # (variable, values)

    # seeds ------------------------------------------------------------
    def _seed_children(self):
        # Fresh SeedSequence each call: spawn() mutates its parent.
        return np.random.SeedSequence(self.seed).spawn(3)

    @property
    def run_seed(self) -> np.random.SeedSequence:
        return self._seed_children()[1]

    # derived objects --------------------------------------------------
    def build_graph(self) -> Optional[Graph]:
        if self.mode == "centralized":
            return None
        if self.graph_file:
            g = read_graph(self.graph_file)
            if g.n != self.n:
                raise ConfigError([("graph_file", f"graph has {g.n} nodes but n = {self.n}")])
            return g
        name, *args = self.graph
        if name == "path":
            return path_graph(self.n)
        if name == "ring":
            return ring_graph(self.n)
        if name == "complete":
            return complete_graph(self.n)
        return erdos_renyi(self.n, args[0], np.random.default_rng(self._seed_children()[2]))

    def sigma_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma, dtype=float), (self.n,)).copy()

    def params(self, graph: Optional[Graph] = None) -> MechanismParams:
        if self.mode == "centralized":
            return MechanismParams.centralized(self.n, float(self.sigma_vector()[0]), self.c, self.q)
        graph = graph if graph is not None else self.build_graph()
        return MechanismParams.distributed(graph, self.sigma_vector(), self.c, self.q,
                                           [i - 1 for i in self.compromised])

    def theta0_vector(self) -> np.ndarray:
        kind = self.theta0[0]
        if kind == "explicit":
            return np.array(self.theta0[1], dtype=float)
        rng = np.random.default_rng(self._seed_children()[0])
        if kind == "uniform":
            return rng.uniform(self.theta0[1], self.theta0[2], self.n)
        return rng.normal(self.theta0[1], self.theta0[2], self.n)

    def horizon(self, params: MechanismParams, theta0) -> int:
        return default_horizon(params, theta0) if self.rounds is None else self.rounds

    def with_value(self, variable: str, value: float) -> "ExperimentConfig":
        return replace(self, **{variable: value})


# parsing ---------------------------------------------------------------

_CALL = re.compile(r"^([a-z_]+)\s*\((.*)\)$")


def _parse_list(text: str) -> list:
    inner = text.strip()[1:-1].strip()
    return [] if not inner else [float(v) for v in inner.split(",")]


def _parse_call(text: str):
    m = _CALL.match(text.strip())
    if not m:
        return None
    args = [a for a in m.group(2).split(",") if a.strip()]
    return m.group(1), [float(a) for a in args]


def parse_config(text: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse and validate config text, reporting every violation at once."""
    raw: dict[str, str] = {}
    errors: list[tuple[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((f"line {lineno}", f"expected 'key = value', got {line!r}"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            errors.append((key, "unknown key"))
            continue
        raw[key] = value
    for key, value in (overrides or {}).items():
        raw[key] = str(value)
    for key in REQUIRED_KEYS:
        if key not in raw:
            errors.append((key, "missing required key"))

    vals: dict = {}

    def number(key, kind=float):
        if key not in raw:
            return None
        try:
            v = kind(raw[key])
            if kind is float and not math.isfinite(v):
                raise ValueError
            vals[key] = v
            return v
        except ValueError:
            errors.append((key, f"expected {'an integer' if kind is int else 'a number'}, got {raw[key]!r}"))
            return None

    mode = raw.get("mode", "centralized")
    if mode not in ("centralized", "distributed"):
        errors.append(("mode", f"must be 'centralized' or 'distributed', got {mode!r}"))
    vals["mode"] = mode

    n = number("n", int)
    if n is not None and n < 1:
        errors.append(("n", "must be a positive integer"))
    c = number("c")
    if c is not None and c < 0:
        errors.append(("c", "must be nonnegative"))
    q = number("q")
    if q is not None and not 0 < q < 1:
        errors.append(("q", f"must lie in the open interval (0,1), got {q}"))
    b = number("b")
    if b is not None and not 0 < b < 1:
        errors.append(("b", f"must lie in the open interval (0,1), got {b}"))
    runs = number("runs", int)
    if runs is not None and runs < 1:
        errors.append(("runs", "must be at least 1"))
    number("seed", int)
    if "rounds" in raw:
        if raw["rounds"].strip() == "auto":
            vals["rounds"] = None
        else:
            r = number("rounds", int)
            if r is not None and r < 0:
                errors.append(("rounds", "must be nonnegative"))

    if "sigma" in raw:
        s = raw["sigma"].strip()
        try:
            sigma = tuple(_parse_list(s)) if s.startswith("[") else float(s)
            svals = np.atleast_1d(sigma)
            if svals.size == 0 or not np.all((svals > 0) & (svals < 1)):
                errors.append(("sigma", "every value must lie in the open interval (0,1)"))
            elif isinstance(sigma, tuple):
                if n is not None and len(sigma) != n:
                    errors.append(("sigma", f"has {len(sigma)} entries but n = {n}"))
                if mode == "centralized" and len(set(sigma)) > 1:
                    errors.append(("sigma", "centralized mode needs a single common value"))
            vals["sigma"] = sigma
        except ValueError:
            errors.append(("sigma", f"expected a number or a list, got {s!r}"))

    if "theta0" in raw:
        s = raw["theta0"].strip()
        try:
            if s.startswith("["):
                lst = _parse_list(s)
                if n is not None and len(lst) != n:
                    errors.append(("theta0", f"has {len(lst)} entries but n = {n}"))
                vals["theta0"] = ("explicit", tuple(lst))
            else:
                call = _parse_call(s)
                if call is None or call[0] not in ("uniform", "gaussian") or len(call[1]) != 2:
                    raise ValueError
                if call[0] == "uniform" and call[1][0] > call[1][1]:
                    errors.append(("theta0", "uniform(lo, hi) needs lo <= hi"))
                if call[0] == "gaussian" and call[1][1] < 0:
                    errors.append(("theta0", "gaussian(mean, sd) needs sd >= 0"))
                vals["theta0"] = (call[0], *call[1])
        except ValueError:
            errors.append(("theta0", f"expected [..], uniform(lo, hi) or gaussian(mean, sd), got {s!r}"))

    if mode == "distributed":
        if "graph_file" in raw:
            vals["graph_file"] = raw["graph_file"]
            if "graph" in raw:
                errors.append(("graph", "give either graph or graph_file, not both"))
        elif "graph" in raw:
            s = raw["graph"].strip()
            if s in ("path", "ring", "complete"):
                vals["graph"] = (s,)
            else:
                try:
                    call = _parse_call(s)
                except ValueError:
                    call = None
                if call is None or call[0] != "erdos" or len(call[1]) != 1 or not 0 <= call[1][0] <= 1:
                    errors.append(("graph", f"expected path, ring, complete or erdos(p), got {s!r}"))
                else:
                    vals["graph"] = ("erdos", call[1][0])
        else:
            errors.append(("graph_file", "distributed mode needs graph_file or a named graph"))
        if "compromised" in raw:
            try:
                ids = _parse_list(raw["compromised"])
                if any(v != int(v) for v in ids):
                    raise ValueError
                ids = tuple(sorted({int(v) for v in ids}))
                if n is not None and any(not 1 <= i <= n for i in ids):
                    errors.append(("compromised", f"client ids must lie in 1..{n}"))
                vals["compromised"] = ids
            except ValueError:
                errors.append(("compromised", "expected a list of client ids"))
    else:
        for key in ("graph", "graph_file", "compromised"):
            if key in raw:
                errors.append((key, "only allowed in distributed mode"))

    if "sweep" in raw:
        s = raw["sweep"]
        var, sep, rest = s.partition(":")
        var = var.strip()
        try:
            if not sep or var not in SWEEP_VARIABLES:
                raise ValueError
            values = _parse_list(rest.strip())
            if not values:
                raise ValueError
        except ValueError:
            errors.append(("sweep", f"expected '<q|c|sigma>: [v1, v2, ...]', got {s!r}"))
        else:
            for v in values:
                msg = _sweep_value_error(var, v)
                if msg:
                    errors.append(("sweep", msg))
            if var == "sigma" and isinstance(vals.get("sigma"), tuple):
                errors.append(("sweep", "sweeping sigma needs a scalar sigma"))
            vals["sweep"] = (var, tuple(values))

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(**vals)


def _sweep_value_error(var: str, v: float) -> Optional[str]:
    if var == "q" and not 0 < v < 1:
        return f"q value {v} outside the open interval (0,1)"
    if var == "sigma" and not 0 < v < 1:
        return f"sigma value {v} outside the open interval (0,1)"
    if var == "c" and v < 0:
        return f"c value {v} is negative"
    return None


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


# commands --------------------------------------------------------------

def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_run(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> str:
    """Sample one execution, export it, and summarise privacy and accuracy.

    Writes ``trace.csv``, ``observation.csv`` and ``summary.txt`` to `out_dir`
    when given.  With ``runs > 1`` the summary also holds the Monte Carlo
    accuracy estimate; the exported trace is that batch's first run.
    """
    params = cfg.params()
    theta0 = cfg.theta0_vector()
    T = cfg.horizon(params, theta0)
    run_seeds = np.random.SeedSequence(cfg.run_seed.entropy, spawn_key=cfg.run_seed.spawn_key)
    first = run_seeds.spawn(1)[0]
    trace = run_execution(theta0, params, T, seed=first)

    final = trace.final_theta
    lines = [
        f"mode = {params.mode}",
        f"n = {params.n}",
        f"rounds = {T}",
        f"initial_spread = {float(theta0.max() - theta0.min())!r}",
        f"final_spread = {float(final.max() - final.min())!r}",
        f"target_mean = {weighted_mean(theta0, params)!r}",
        f"final_mean = {weighted_mean(final, params)!r}",
        f"drift = {abs(weighted_mean(final, params) - weighted_mean(theta0, params))!r}",
    ]
    if params.graph is not None:
        lines.append(f"convergence_guaranteed = {'true' if check_convergence_condition(params.graph, params.sigma).holds else 'false'}")
    priv = analysis.epsilon_bound(params.sigma, params.c, params.q)
    if cfg.runs > 1:
        acc = analysis.monte_carlo_accuracy(theta0, params, T, cfg.runs, cfg.b, seed=cfg.run_seed,
                                            workers=workers)
    else:
        acc = analysis.accuracy_radius(params, cfg.b, theta0)
    summary = "\n".join(lines) + "\n[privacy]\n" + priv.to_text() + "[accuracy]\n" + acc.to_text()
    if out_dir is not None:
        out = Path(out_dir)
        _write(out / "trace.csv", trace.to_csv())
        _write(out / "observation.csv", observe(trace).to_csv())
        _write(out / "summary.txt", summary)
    return summary


def sweep_rows(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    if cfg.sweep is None:
        raise ConfigError([("sweep", "no sweep configured")])
    var, values = cfg.sweep
    problems = [(("sweep", m)) for m in (_sweep_value_error(var, v) for v in values) if m]
    if problems:
        raise ConfigError(problems)
    graph = cfg.params().graph
    theta0 = cfg.theta0_vector()
    rows = []
    for v in values:
        c2 = cfg.with_value(var, v)
        params = c2.params(graph)
        T = c2.horizon(params, theta0)
        priv = analysis.epsilon_bound(params.sigma, params.c, params.q)
        acc = analysis.monte_carlo_accuracy(theta0, params, T, cfg.runs, cfg.b, seed=cfg.run_seed,
                                            workers=workers)
        rows.append({
            "value": v,
            "epsilon": priv.epsilon,
            "valid": priv.valid,
            "radius": acc.r,
            "empirical_fraction": acc.empirical_fraction,
            "mean_drift": acc.mean_drift,
        })
    return rows


def format_sweep_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([analysis._kv_value(r[k]) for k in SWEEP_COLUMNS])
    return out.getvalue()


def cmd_sweep(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> str:
    """One CSV row per swept value, in the order given.

    Every value uses the same seed, so differences between rows are not
    sampling noise from independent streams.
    """
    text = format_sweep_csv(sweep_rows(cfg, workers))
    if out_dir is not None:
        _write(Path(out_dir) / "sweep.csv", text)
    return text


def cmd_check_graph(graph: Union[str, Path, Graph], sigma) -> str:
    g = graph if isinstance(graph, Graph) else read_graph(graph)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim and sigma.size != g.n:
        raise ValueError(f"sigma has {sigma.size} entries but the graph has {g.n} nodes")
    if not np.all((sigma > 0) & (sigma < 1)):
        raise ValueError("every sigma_i must lie in the open interval (0,1)")
    return f"n = {g.n}\nedges = {len(g.edges)}\n" + check_convergence_condition(g, sigma).to_text()


def cmd_couple(cfg: ExperimentConfig, k: int, delta: float) -> str:
    """Check the noise-shifting coupling on freshly sampled noise.

    `k` is a 1-based client id; the second start is ``theta0`` with client
    `k` lowered by `delta`.
    """
    params = cfg.params()
    if not 1 <= k <= params.n:
        raise ValueError(f"k must lie in 1..{params.n}, got {k}")
    if k - 1 in params.compromised:
        raise ValueError(f"client {k} is compromised; its input is not protected")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    theta0 = cfg.theta0_vector()
    theta0_prime = theta0.copy()
    theta0_prime[k - 1] -= delta
    T = cfg.horizon(params, theta0)
    eta = ClientStreams(cfg.run_seed, params.n).noise(params.schedule, 0, T)
    res = analysis.verify_coupling(theta0, theta0_prime, params, eta)
    res = replace(res, k=k)
    return res.to_text()
