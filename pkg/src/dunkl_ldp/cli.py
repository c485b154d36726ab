"""Batch front-end.

Every subcommand writes its artifacts into ``--out`` through a temp file
plus rename, then a ``manifest.json`` listing each file with its sha256
and the hash of the resolved configuration.  Library modules are imported
lazily so that ``--threads`` can cap the BLAS pools before numpy loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# argument helpers -------------------------------------------------------------


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _numbers(text) -> list:
    """Comma list of ints, floats or fractions like 1/2 (kept exact when possible)."""
    from fractions import Fraction

    if isinstance(text, (list, tuple)):
        items = [str(v) for v in text]
    else:
        items = [v for v in str(text).split(",") if v.strip()]
    out = []
    for v in items:
        f = Fraction(v.strip())
        out.append(int(f) if f.denominator == 1 else f)
    return out


def _floats(text) -> list[float]:
    return [float(v) for v in _numbers(text)]


def _grid(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        a, b = text
        return int(a), int(b)
    parts = str(text).lower().split("x")
    if len(parts) == 1:
        return int(parts[0]), int(parts[0])
    if len(parts) != 2:
        raise ValueError(f"grid must look like 64x64, got {text!r}")
    return int(parts[0]), int(parts[1])


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file whose keys override the flags")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)


def _family(p, choices=("A", "B", "C", "D", "BC"), default=None):
    p.add_argument("--family", choices=choices, default=default)


# flags that must be present after --config has been merged
REQUIRED = {
    "roots": ("family", "rank"),
    "simulate": ("family", "n"),
    "bessel": ("family", "lam", "x"),
    "rate": ("nu_a", "nu_b"),
    "mult": ("family", "lam"),
    "ldp-check": ("mu",),
    "kirillov-check": ("family", "lam", "y"),
}
# keys that do not change the numbers and stay out of the config hash
UNHASHED = ("out", "threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dunkl-ldp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("roots", help="root-system data")
    _common(p)
    _family(p)
    p.add_argument("--rank", type=int)
    p.add_argument("--k", default="1,1,1", help="k_short,k_medium,k_long")

    p = sub.add_parser("simulate", help="Dyson Bessel / radial Dunkl particle path")
    _common(p)
    _family(p, ("A", "B", "D"))
    p.add_argument("--n", type=int)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.0, help="alpha_N for the Dyson Bessel process")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--scheme", choices=("euler_maruyama", "tamed_euler"), default="tamed_euler")
    p.add_argument("--stride", type=int, default=10, help="keep every stride-th time step in the CSV")
    p.add_argument("--gamma", type=float, default=None, help="simulate the modified process with this gamma")
    p.add_argument("--delta", type=float, default=0.0)

    p = sub.add_parser("bessel", help="generalized Bessel function")
    _common(p)
    _family(p)
    p.add_argument("--k", default="0,1,0", help="k_short,k_medium,k_long")
    p.add_argument("--lambda", dest="lam")
    p.add_argument("--x")
    p.add_argument("--method", choices=("auto", "hciz_exact", "haar_mc"), default="auto")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--precision", choices=("auto", "double", "extended"), default="auto")

    p = sub.add_parser("rate", help="rate functional I between two measures")
    _common(p)
    p.add_argument("--nu-a", help="quantile CSV or JSON")
    p.add_argument("--nu-b")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--grid", default="64x64", help="K_t x K_q")
    p.add_argument("--type-a", action="store_true", help="unsymmetrized type-A functional")
    p.add_argument("--method", choices=("newton", "lbfgs"), default="newton")

    p = sub.add_parser("mult", help="weight multiplicities by Freudenthal's formula")
    _common(p)
    _family(p, ("A", "B", "C", "D"))
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--lambda", dest="lam")
    p.add_argument("--max-dim", type=int, default=10**7)
    p.add_argument("--no-cache", action="store_true")

    p = sub.add_parser("ldp-check", help="multiplicity asymptotics against the rate functional")
    _common(p)
    _family(p, ("B", "C", "D"), default="C")
    p.add_argument("--mu", help="quantile CSV or JSON")
    p.add_argument("--lambda-slope", type=int, default=1, help="lambda_i = slope (N - i)")
    p.add_argument("--n-list", default="2,3,4")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--points", type=int, default=32)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--rate-value", type=float, default=None)

    p = sub.add_parser("kirillov-check", help="character vs orbit-integral identity")
    _common(p)
    _family(p, ("A", "B", "C", "D"))
    p.add_argument("--lambda", dest="lam")
    p.add_argument("--y")
    p.add_argument("--mc-budget", type=int, default=100_000)
    return parser


# configuration -------------------------------------------------------------


def resolve_config(argv) -> dict:
    """Parse flags, then apply ``--config`` overrides; unknown keys are an error."""
    parser = build_parser()
    args = parser.parse_args(argv)
    config = vars(args)
    path = config.pop("config")
    if path:
        try:
            with open(path) as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(extra, dict):
            raise ConfigError("config file must hold a JSON object")
        known = set(config)
        for key, value in extra.items():
            name = key.replace("-", "_")
            if name == "lambda":
                name = "lam"
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if name == "command" and value != config["command"]:
                raise ConfigError("config command does not match the subcommand")
            config[name] = value
    missing = [k for k in REQUIRED[config["command"]] if config.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    families = {a.dest: a.choices for a in _subparser(parser, config["command"])._actions if a.choices}
    for key, choices in families.items():
        if config.get(key) is not None and config[key] not in choices:
            raise ConfigError(f"invalid value {config[key]!r} for {key}")
    return config


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def config_hash(config: dict) -> str:
    blob = json.dumps(_hashed(config), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _hashed(config: dict) -> dict:
    return {k: v for k, v in config.items() if k not in UNHASHED}


# output -------------------------------------------------------------------


class Artifacts:
    """Atomic writer that remembers what it produced."""

    def __init__(self, out: str, config: dict):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.hash = config_hash(config)
        self.files: list[dict] = []

    def _write(self, name: str, data: bytes):
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, self.dir / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files.append({"file": name, "sha256": hashlib.sha256(data).hexdigest(), "config_hash": self.hash})

    def json(self, name: str, record: dict):
        record = dict(record, seed=self.config["seed"], config_hash=self.hash)
        self._write(name, (json.dumps(record, indent=2, sort_keys=True, default=_jsonable) + "\n").encode())

    def csv(self, name: str, header: list[str], rows):
        lines = [",".join(header)]
        lines.append(f"# seed={self.config['seed']} config_hash={self.hash}")
        for row in rows:
            lines.append(",".join(_cell(v) for v in row))
        self._write(name, ("\n".join(lines) + "\n").encode())

    def manifest(self):
        record = {"command": self.config["command"], "seed": self.config["seed"], "config_hash": self.hash,
                  "config": _hashed(self.config), "files": self.files}
        data = (json.dumps(record, indent=2, sort_keys=True, default=str) + "\n").encode()
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=".manifest.", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, self.dir / "manifest.json")


def _cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    if hasattr(v, "dtype"):
        return format(float(v), ".17g") if v.dtype.kind == "f" else str(v)
    return str(v)


def _jsonable(v):
    if hasattr(v, "tolist"):
        return v.tolist()
    return str(v)


def _load_measure(path: str):
    from .measures import read_quantile_csv, read_quantile_json

    if not os.path.exists(path):
        raise ConfigError(f"measure file not found: {path}")
    return read_quantile_json(path) if path.endswith(".json") else read_quantile_csv(path)


def _kparam(text):
    from .rootsys import MultiplicityParam

    vals = _floats(text)
    if len(vals) != 3:
        raise ConfigError("--k needs three values k_short,k_medium,k_long")
    return MultiplicityParam(*vals)


# commands ------------------------------------------------------------------


def cmd_roots(cfg: dict, art: Artifacts):
    from .rootsys import (RootSystemSpec, fundamental_weights, positive_roots, rho, simple_roots,
                          weyl_group_order)

    spec = RootSystemSpec(cfg["family"], cfg["rank"])
    k = _kparam(cfg["k"])
    record = {
        "family": spec.family,
        "rank": spec.rank,
        "positive_roots": [list(r) for r in positive_roots(spec)],
        "simple_roots": [list(r) for r in simple_roots(spec)],
        "rho": [str(c) for c in rho(spec, k)],
        "weyl_group_order": weyl_group_order(spec),
    }
    if spec.family in ("B", "C", "D"):
        record["fundamental_weights"] = [[str(c) for c in w] for w in fundamental_weights(spec)]
    art.json("roots.json", record)


def cmd_simulate(cfg: dict, art: Artifacts):
    import numpy as np

    from .dunkl_sim import SimConfig, simulate_dyson_bessel, simulate_modified_dyson_bessel
    from .measures import AtomicMeasure, symmetrize, wasserstein1, semicircle
    from .rootsys import MultiplicityParam, RootSystemSpec

    n, beta, fam = cfg["n"], cfg["beta"], cfg["family"]
    opts = dict(t_end=cfg["t"], dt=cfg["dt"], seed=cfg["seed"], scheme=cfg["scheme"])
    if fam == "A":
        if cfg["alpha"] or cfg["gamma"] is not None:
            raise ConfigError("type A takes no alpha or gamma")
        sim = SimConfig(RootSystemSpec("A", n), MultiplicityParam(k_medium=beta / 2), **opts)
    else:
        if fam == "D" and cfg["alpha"]:
            raise ConfigError("family D means alpha = 0")
        if fam == "B" and not cfg["alpha"] and cfg["gamma"] is None:
            raise ConfigError("family B needs alpha > 0")
        sim = SimConfig.dyson_bessel(n, beta, cfg["alpha"], **opts)
    if cfg["gamma"] is not None:
        path = simulate_modified_dyson_bessel(sim, cfg["gamma"], cfg["delta"])
    else:
        path = simulate_dyson_bessel(sim)
    stride = max(1, cfg["stride"])
    idx = list(range(0, len(path.times), stride))
    if idx[-1] != len(path.times) - 1:
        idx.append(len(path.times) - 1)
    header = ["t"] + [f"s{i + 1}" for i in range(n)]
    art.csv("path.csv", header, ([path.times[i], *path.states[i]] for i in idx))
    summary = {"config": sim.to_json(), "stats": path.stats, "steps": len(path.times) - 1}
    if cfg["gamma"] is None and not cfg["alpha"]:
        # both limits are the semicircle of radius 2 in these coordinates
        emp = AtomicMeasure(np.sqrt(2) * path.final) if fam == "A" else symmetrize(AtomicMeasure(path.final))
        summary["w1_to_semicircle"] = wasserstein1(emp, semicircle(2000))
    art.json("summary.json", summary)


def cmd_bessel(cfg: dict, art: Artifacts):
    from .bessel import haar_mc, hciz_exact, log_bessel
    from .rootsys import RootSystemSpec

    lam, x = _floats(cfg["lam"]), _floats(cfg["x"])
    if len(lam) != len(x):
        raise ConfigError("--lambda and --x must have the same length")
    spec = RootSystemSpec(cfg["family"], len(lam))
    k = _kparam(cfg["k"])
    method, se = cfg["method"], 0.0
    if method == "hciz_exact":
        if spec.family != "A" or k.k_medium != 1:
            raise ConfigError("hciz_exact needs family A with k_medium = 1")
        value = hciz_exact(lam, x, cfg["precision"])
    elif method == "haar_mc":
        value, se = haar_mc(spec, k, lam, x, cfg["samples"], cfg["seed"])
    else:
        value = log_bessel(spec, k, lam, x, cfg["samples"], cfg["seed"])
    art.json("bessel.json", {"family": spec.family, "rank": spec.rank, "lambda": lam, "x": x,
                             "method": method, "log_value": value, "std_error": se})


def cmd_rate(cfg: dict, art: Artifacts):
    from .rate import rate_I, rate_I_typeA

    nu_a, nu_b = _load_measure(cfg["nu_a"]), _load_measure(cfg["nu_b"])
    grid = _grid(cfg["grid"])
    if cfg["type_a"]:
        res = rate_I_typeA(nu_a, nu_b, cfg["beta"], grid, method=cfg["method"])
    else:
        res = rate_I(nu_a, nu_b, cfg["alpha"], cfg["beta"], grid, method=cfg["method"])
    art.json("rate.json", res.to_json())
    art.csv("path.csv", ["t", "q", "X"], res.path.to_rows())


def cmd_mult(cfg: dict, art: Artifacts):
    from .repthy import freudenthal_multiplicities
    from .rootsys import RootSystemSpec

    lam = _numbers(cfg["lam"])
    rank = cfg["rank"] or len(lam)
    if rank != len(lam):
        raise ConfigError("--rank does not match the length of --lambda")
    table = freudenthal_multiplicities(RootSystemSpec(cfg["family"], rank), lam, cfg["max_dim"],
                                       use_cache=not cfg["no_cache"])
    art.json("mult.json", table.to_json())


def cmd_ldp_check(cfg: dict, art: Artifacts):
    from .repthy import mult_ldp_table

    mu = _load_measure(cfg["mu"])
    slope = cfg["lambda_slope"]
    rows = mult_ldp_table(lambda N: [slope * (N - i) for i in range(1, N + 1)], mu, _ints(cfg["n_list"]),
                          family=cfg["family"], delta=cfg["delta"], rate_value=cfg["rate_value"],
                          rate_opts={"points": cfg["points"], "restarts": cfg["restarts"], "seed": cfg["seed"]})
    art.csv("ldp.csv", ["N", "log_sup_mult_over_N2", "minus_rate", "candidates"],
            ([r.N, r.log_sup_mult, r.minus_rate, r.candidates] for r in rows))


def cmd_kirillov(cfg: dict, art: Artifacts):
    from .repthy import char_decomposition_check, kirillov_check
    from .rootsys import RootSystemSpec

    lam, y = _numbers(cfg["lam"]), _floats(cfg["y"])
    if len(lam) != len(y):
        raise ConfigError("--lambda and --y must have the same length")
    spec = RootSystemSpec(cfg["family"], len(lam))
    res = kirillov_check(spec, lam, y, mc_budget=cfg["mc_budget"], seed=cfg["seed"])
    record = res.to_json()
    if spec.family != "A":
        record["char_decomposition"] = char_decomposition_check(spec, lam, y)
    art.json("kirillov.json", record)


COMMANDS = {
    "roots": cmd_roots,
    "simulate": cmd_simulate,
    "bessel": cmd_bessel,
    "rate": cmd_rate,
    "mult": cmd_mult,
    "ldp-check": cmd_ldp_check,
    "kirillov-check": cmd_kirillov,
}


def _fail(kind: str, exc: BaseException, status: int) -> int:
    message = " ".join(str(exc).split())
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": message}), file=sys.stderr)
    return status


def run(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    if cfg.get("threads"):
        for var in THREAD_VARS:
            os.environ[var] = str(cfg["threads"])

    from .bessel import CancellationError
    from .dunkl_sim import SimulationError
    from .repthy import BudgetExceeded, DegenerateArgument
    from .rootsys import ChamberError, WeylGroupTooLarge

    try:
        art = Artifacts(cfg["out"], cfg)
        COMMANDS[cfg["command"]](cfg, art)
        art.manifest()
    except (BudgetExceeded, WeylGroupTooLarge) as exc:
        return _fail("budget", exc, EXIT_BUDGET)
    except (CancellationError, DegenerateArgument, ChamberError, SimulationError, FloatingPointError) as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)
    except (ConfigError, ValueError, TypeError, KeyError, OSError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
