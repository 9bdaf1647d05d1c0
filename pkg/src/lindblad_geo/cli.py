"""Command-line front end.

    lindblad-geo extremal     --config pair.conf --out runs/pair
    lindblad-geo return-map   --out runs/rmap --format json
    lindblad-geo conjugate    --config sweep.json --jobs 2
    lindblad-geo classify | grusin-locus | cut

Configs are flat ``key = value`` files or one JSON object; command-line flags
and ``--set key=value`` override them.  Angles are radians; ``pi`` may be used
in numeric expressions (``phi0 = pi/4``).
"""
from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import math
import operator
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__, analysis, grusin
from ._jit import BACKEND
from .errors import ConfigError, InvalidParameters, LindbladGeoError, NoBarrier
from .hamiltonians import control_arrays, h_reduced
from .integrator import AntipodalParallel, EquatorCross, Tolerances, integrate_extremal
from .model import PHI_MIN, DissipationParams, ExtremalPoint, ReducedCostate

COMMANDS = ("extremal", "return-map", "conjugate", "classify", "grusin-locus", "cut")


# ---------------------------------------------------------------- config

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}
_NAMES = {"pi": math.pi, "e": math.e, "inf": math.inf}
_FUNCS = {"sqrt": math.sqrt}


def _eval_num(node):
    if isinstance(node, ast.Expression):
        return _eval_num(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval_num(node.left), _eval_num(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval_num(node.operand))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and len(node.args) == 1:
        return _FUNCS[node.func.id](_eval_num(node.args[0]))
    raise ValueError("not a numeric expression")


def parse_value(text: str):
    """Numbers, arithmetic with pi, booleans, comma lists, JSON, or a bare string."""
    s = text.strip()
    if s.lower() in ("true", "yes", "on"):
        return True
    if s.lower() in ("false", "no", "off"):
        return False
    if s.startswith("[") or s.startswith("{"):
        try:
            return json.loads(s)
        except json.JSONDecodeError:
            inner = s.strip("[]")
            return [parse_value(p) for p in inner.split(",") if p.strip()] if s.startswith("[") else s
    if "," in s:
        return [parse_value(p) for p in s.split(",") if p.strip()]
    try:
        return _eval_num(ast.parse(s, mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError):
        return s


def read_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
        return {k: (parse_value(v) if isinstance(v, str) else v) for k, v in data.items()}
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


@dataclass
class ScenarioConfig:
    Gamma: float = 2.5
    gamma_plus: float = 2.0
    gamma_minus: float = 0.0
    phi0: float = math.pi / 4
    theta0: float = 0.0
    r0: float = 0.0
    p_r: float = 1.0
    p_theta: float = 2.0
    p_phi0: list = field(default_factory=list)
    epsilon: int = 1
    normalize: bool = True
    t_max: float = 20.0
    atol: float = 1e-10
    rtol: float = 1e-10
    samples: int = 0
    mode: str = "auto"
    trajectories: bool = False
    grusin_reference: bool = False
    require_barrier: bool = False
    # return map / Grusin family
    lam: float = 1.0
    lambdas: list = field(default_factory=lambda: [round(0.1 * k, 10) for k in range(11)])
    p_theta_fractions: list = field(default_factory=lambda: list(np.linspace(0.1, 0.9, 20)))
    p_theta_cap: float = 10.0
    n_directions: int = 161
    format: str = "csv"
    jobs: int = 1

    @classmethod
    def from_mapping(cls, data: dict) -> "ScenarioConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for k, v in data.items():
            key = {"lambda": "lam", "tol_abs": "atol", "tol_rel": "rtol", "eps": "epsilon"}.get(k, k)
            if key not in known:
                raise ConfigError(f"unknown config key {k!r}")
            kw[key] = v
        cfg = cls(**kw)
        cfg._coerce()
        cfg.validate()
        return cfg

    def _coerce(self):
        try:
            for name in ("Gamma", "gamma_plus", "gamma_minus", "phi0", "theta0", "r0", "p_r", "p_theta",
                         "t_max", "atol", "rtol", "lam", "p_theta_cap"):
                setattr(self, name, float(getattr(self, name)))
            for name in ("epsilon", "samples", "n_directions", "jobs"):
                v = getattr(self, name)
                if isinstance(v, bool) or float(v) != int(v):
                    raise ValueError(f"{name} must be an integer")
                setattr(self, name, int(v))
            for name in ("normalize", "trajectories", "grusin_reference", "require_barrier"):
                if not isinstance(getattr(self, name), bool):
                    raise ValueError(f"{name} must be true or false")
            for name in ("p_phi0", "lambdas", "p_theta_fractions"):
                v = getattr(self, name)
                if isinstance(v, (int, float)) and not isinstance(v, bool):
                    v = [v]
                setattr(self, name, [float(x) for x in v])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self):
        try:
            self.params
        except InvalidParameters as exc:
            raise ConfigError(str(exc)) from exc
        checks = [
            (self.epsilon in (0, 1), "epsilon must be 0 or 1"),
            (self.t_max > 0.0 and math.isfinite(self.t_max), "t_max must be positive"),
            (self.atol > 0.0 and self.rtol > 0.0, "tolerances must be positive"),
            (PHI_MIN <= self.phi0 <= math.pi - PHI_MIN, "phi0 outside the chart band"),
            (self.r0 <= 0.0, "r0 = ln rho must be <= 0 (inside the Bloch ball)"),
            (0.0 <= self.lam <= 1.0, "lambda must lie in [0, 1]"),
            (all(0.0 <= v <= 1.0 for v in self.lambdas), "lambdas must lie in [0, 1]"),
            (all(0.0 < v < 1.0 for v in self.p_theta_fractions), "p_theta_fractions must lie in (0, 1)"),
            (self.p_theta_cap > 0.0, "p_theta_cap must be positive"),
            (self.mode in ("auto", "full", "reduced"), "mode must be auto, full or reduced"),
            (self.format in ("csv", "json"), "format must be csv or json"),
            (self.jobs >= 1, "jobs must be >= 1"),
            (self.samples >= 0, "samples must be >= 0"),
            (self.n_directions >= 5, "n_directions must be >= 5"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def params(self) -> DissipationParams:
        return DissipationParams(self.Gamma, self.gamma_plus, self.gamma_minus)

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(self.atol, self.rtol)

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- output

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


class Writer:
    def __init__(self, out_dir: str, fmt_: str):
        self.out_dir = out_dir
        self.format = fmt_
        self.files: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def table(self, stem: str, columns: list, rows) -> str:
        name = f"{stem}.{self.format}"
        path = os.path.join(self.out_dir, name)
        if self.format == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([fmt(v) for v in row])
            text = buf.getvalue()
        else:
            text = json.dumps({"columns": columns, "rows": _jsonable([list(r) for r in rows])}, indent=1) + "\n"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.files.append(name)
        return name

    def json(self, stem: str, payload) -> str:
        name = f"{stem}.json"
        with open(os.path.join(self.out_dir, name), "w", encoding="utf-8") as fh:
            json.dump(_jsonable(payload), fh, indent=1, sort_keys=True)
            fh.write("\n")
        self.files.append(name)
        return name

    def manifest(self, command: str, cfg: ScenarioConfig, body: dict) -> str:
        payload = {
            "command": command,
            "version": __version__,
            "backend": BACKEND,
            "config": cfg.as_dict(),
            "tolerances": {"atol": cfg.atol, "rtol": cfg.rtol},
            "outputs": list(self.files),
        }
        payload.update(body)
        return self.json("manifest", payload)


# ---------------------------------------------------------------- commands

TRAJ_COLUMNS = ["t", "r", "phi", "theta", "p_r", "p_phi", "p_theta", "H", "Q", "u1", "u2", "H_err", "class"]


def _seed(cfg: ScenarioConfig, p_phi0: float) -> ExtremalPoint:
    z = ExtremalPoint(cfg.r0, cfg.phi0, cfg.theta0, ReducedCostate(cfg.p_r, p_phi0, cfg.p_theta), cfg.epsilon)
    if cfg.normalize and cfg.epsilon == 1:
        z = analysis.normalize_to_level(z, cfg.params, 1)
    return z


def _extremal_job(args):
    cfg, i, p_phi0 = args
    params = cfg.params
    z0 = _seed(cfg, p_phi0)
    level = analysis.seed_level(z0, params)
    events = [EquatorCross(), AntipodalParallel(math.pi - cfg.phi0)]
    traj = integrate_extremal(z0, params, (0.0, cfg.t_max), cfg.tolerances, events)
    try:
        cls = analysis.classify_extremal(z0, params, max(cfg.t_max, 50.0), cfg.tolerances)
        label = "periodic" if cls.periodic else "aperiodic"
        cls_d = cls.as_dict()
    except LindbladGeoError as exc:
        label, cls_d = "unclassified", {"error": str(exc)}
    if cfg.samples > 0:
        ts = np.linspace(0.0, traj.t_end, cfg.samples)
        Y = traj(ts)
    else:
        ts, Y = traj.t, traj.base
    # beyond |p_phi| ~ 1e4 the asymptotic regime of aperiodic extremals is reached; rows stop there
    keep = np.nonzero(np.abs(Y[:, 4]) <= analysis.APERIODIC_PPHI)[0]
    truncated = None
    if len(keep) < len(ts):
        stop = keep[-1] + 1 if len(keep) else 1
        truncated = float(ts[stop - 1])
        ts, Y = ts[:stop], Y[:stop]
    H = h_reduced(Y[:, 1], Y[:, 3], Y[:, 4], Y[:, 5], params)
    Q = np.hypot(Y[:, 4], Y[:, 5] * np.cos(Y[:, 1]) / np.sin(Y[:, 1]))
    u1, u2 = control_arrays(Y[:, 1], Y[:, 4], Y[:, 5])
    H_err = H - level
    rows = [list(r) + [label] for r in np.column_stack([ts, Y, H, Q, u1, u2, H_err])]
    ev = [{"t": e.t, "kind": e.kind, "phi": float(e.y[1]), "theta": float(e.y[2]), "r": float(e.y[0])}
          for e in traj.events]
    diag = {"seed_id": i, "p_phi0_input": p_phi0, "level": level, "status": traj.status,
            "n_steps": traj.n_steps, "max_abs_H_err": float(np.max(np.abs(H_err))),
            "truncated_at": truncated, "classification": cls_d, "events": ev}
    return rows, diag


def cmd_extremal(cfg: ScenarioConfig, w: Writer) -> dict:
    jobs = [(cfg, i, p) for i, p in enumerate(cfg.p_phi0)]
    results = analysis.parallel_map(_extremal_job, jobs, cfg.jobs)
    seeds = []
    for i, (rows, diag) in enumerate(results):
        diag["file"] = w.table(f"extremal_{i:03d}", TRAJ_COLUMNS, rows)
        seeds.append(diag)
    return {"seeds": seeds, "max_abs_H_err": max((s["max_abs_H_err"] for s in seeds), default=0.0)}


def _rmap_job(args):
    lam, frac, cap, tol = args
    hi = grusin.return_map_domain(lam)[1]
    p = frac * (cap if math.isinf(hi) else hi)
    closed = grusin.return_map(lam, p)
    num = grusin.return_map_numeric(lam, p, tol)
    return [lam, p, closed, num.delta_theta, abs(closed - num.delta_theta), num.period]


def cmd_return_map(cfg: ScenarioConfig, w: Writer) -> dict:
    jobs = [(lam, f, cfg.p_theta_cap, cfg.tolerances) for lam in cfg.lambdas for f in cfg.p_theta_fractions]
    rows = analysis.parallel_map(_rmap_job, jobs, cfg.jobs)
    w.table("return_map", ["lambda", "p_theta", "R_closed", "R_numeric", "abs_err", "period"], rows)
    return {"max_abs_err": max((r[4] for r in rows), default=0.0), "n_points": len(rows),
            "grusin_p_theta_cap": cfg.p_theta_cap}


def cmd_conjugate(cfg: ScenarioConfig, w: Writer) -> dict:
    params = cfg.params
    sweep = analysis.conjugate_locus_sweep(cfg.phi0, cfg.p_r, cfg.epsilon, params, cfg.p_theta, cfg.p_phi0,
                                           cfg.t_max, cfg.tolerances, cfg.mode, cfg.jobs, cfg.r0, cfg.theta0)
    index = {p: i for i, p in enumerate(cfg.p_phi0)}
    rows = [[lp.point[2], lp.point[1], lp.point[0], lp.t, index[p], p]
            for p, lp in zip(sweep.sources, sweep.points)]
    w.table("conjugate_locus", ["theta", "phi", "r", "t_1c", "seed_id", "p_phi0"], rows)
    notes = []
    if sweep.no_conjugate:
        notes.append(f"{len(sweep.no_conjugate)} seed(s) without a conjugate point on [0, {cfg.t_max}]")
    if sweep.skipped:
        notes.append(f"{len(sweep.skipped)} seed(s) skipped (no positive level)")
    body = {"n_points": len(rows), "mode": analysis.resolve_mode(params, cfg.mode),
            "no_conjugate": [index[p] for p in sweep.no_conjugate],
            "skipped": [{"seed_id": index[p], "reason": r} for p, r in sweep.skipped], "notes": notes}
    if cfg.trajectories:
        for p_in, lp in zip(sweep.sources, sweep.points):
            z0 = lp.seed
            traj = integrate_extremal(z0, params, (0.0, lp.t), cfg.tolerances)
            w.table(f"trajectory_{index[p_in]:03d}", ["t", "r", "phi", "theta"],
                    np.column_stack([traj.t, traj.base[:, :3]]).tolist())
    if cfg.grusin_reference:
        ref = []
        for i, p in enumerate(cfg.p_phi0):
            Q = math.hypot(p, cfg.p_theta * math.cos(cfg.phi0) / math.sin(cfg.phi0))
            res = grusin.conjugate_time(1.0, cfg.phi0, p / Q, cfg.p_theta / Q, cfg.t_max, cfg.tolerances)
            if res is not None:
                ref.append([res[2], res[1], res[0], i])
        w.table("grusin_reference", ["theta", "phi", "t_1c", "seed_id"], ref)
        B = np.array([r[:2] for r in ref]).reshape(-1, 2)
        body["hausdorff_to_grusin"] = analysis.hausdorff(sweep.theta_phi(), B)
    return body


def cmd_classify(cfg: ScenarioConfig, w: Writer) -> dict:
    params = cfg.params
    finsler = analysis.finsler_regime(params)
    if cfg.require_barrier and abs(params.detuning) < 2.0:
        raise NoBarrier(f"|Gamma - gamma_plus| = {abs(params.detuning)} < 2: no singular parallels")
    sing = list(analysis.singular_phi(params)) if abs(params.detuning) >= 2.0 else []
    seeds = []
    rows = []
    for i, p in enumerate(cfg.p_phi0):
        z0 = _seed(cfg, p)
        try:
            c = analysis.classify_extremal(z0, params, max(cfg.t_max, 50.0), cfg.tolerances)
            d = c.as_dict()
        except LindbladGeoError as exc:
            d = {"kind": "unclassified", "error": str(exc)}
        d.update({"seed_id": i, "p_phi0": p})
        seeds.append(d)
        rows.append([i, p, d["kind"], d.get("period"), d.get("phi_end")])
    report = {"regime": "finsler" if finsler else "barrier", "singular_phis": sing,
              "barrier_band": [list(b) for b in analysis.barrier_band(params)], "seeds": seeds}
    w.json("classify", report)
    if cfg.format == "csv":
        w.table("classify_table", ["seed_id", "p_phi0", "kind", "period", "phi_end"],
                [[("" if v is None else v) for v in r] for r in rows])
    return {"regime": report["regime"], "singular_phis": sing}


def cmd_grusin_locus(cfg: ScenarioConfig, w: Writer) -> dict:
    lam, phi0 = cfg.lam, cfg.phi0
    rows = []
    for p_phi0, p_th in grusin.covector_sweep(lam, phi0, cfg.n_directions):
        res = grusin.conjugate_time(lam, phi0, p_phi0, p_th, None, cfg.tolerances)
        if res is not None:
            rows.append([res[2], res[1], res[0], p_phi0, p_th])
    half = np.array([r[:2] for r in rows]).reshape(-1, 2)
    closed = np.vstack([half, grusin.mirror_opposite_meridian(half)[::-1]])
    w.table("conjugate_locus", ["theta", "phi", "t_1c", "p_phi0", "p_theta"], rows)
    w.table("conjugate_locus_closed", ["theta", "phi"], closed.tolist())
    cut = grusin.cut_locus_sphere(lam, phi0, tol=cfg.tolerances)
    w.table("cut_locus", ["theta", "phi", "t"], [[p.point[2], p.point[1], p.t] for p in cut.points])
    reversals = grusin.tangent_reversals(closed) if len(closed) > 3 else []
    return {"cusps": len(reversals), "cusp_points": [closed[i % len(closed)].tolist() for i in reversals],
            "cut_locus": {"kind": cut.kind, "phi": cut.phi, "theta_range": list(cut.theta_range),
                          "max_time_mismatch": cut.max_time_mismatch}}


def cmd_cut(cfg: ScenarioConfig, w: Writer) -> dict:
    params = cfg.params
    rows = []
    notes = []
    for i, p in enumerate(cfg.p_phi0):
        z0 = _seed(cfg, p)
        try:
            ai = analysis.antipodal_intersection(z0, params, cfg.tolerances)
        except LindbladGeoError as exc:
            notes.append({"seed_id": i, "error": str(exc)})
            continue
        q = 0.5 * (ai.q_plus + ai.q_minus)
        conj = analysis.conjugate_time(z0, params, cfg.t_max, cfg.tolerances, cfg.mode)
        t1c = conj[0] if conj else math.nan
        rows.append([i, p, ai.t_half, q[0], q[1], q[2], ai.mismatch["r"], ai.mismatch["theta"],
                     ai.mismatch["phi"], t1c, bool(not conj or ai.t_half <= t1c)])
    w.table("cut_points", ["seed_id", "p_phi0", "t_cut", "r", "phi", "theta", "mismatch_r",
                           "mismatch_theta", "mismatch_phi", "t_1c", "t_cut_le_t_1c"], rows)
    return {"n_points": len(rows), "failures": notes}


HANDLERS = {"extremal": cmd_extremal, "return-map": cmd_return_map, "conjugate": cmd_conjugate,
            "classify": cmd_classify, "grusin-locus": cmd_grusin_locus, "cut": cmd_cut}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lindblad-geo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR", default=None)
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--tol-abs", type=float)
        sp.add_argument("--tol-rel", type=float)
        sp.add_argument("--t-max", type=float)
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config entry")
    return ap


def resolve_config(ns) -> ScenarioConfig:
    data = read_config_file(ns.config) if ns.config else {}
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        data[k.strip()] = parse_value(v)
    for flag, key in (("format", "format"), ("tol_abs", "atol"), ("tol_rel", "rtol"),
                      ("t_max", "t_max"), ("jobs", "jobs")):
        v = getattr(ns, flag)
        if v is not None:
            data[key] = v
    return ScenarioConfig.from_mapping(data)


def run(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    out_dir = ns.out or os.path.join("out", ns.command)
    try:
        cfg = resolve_config(ns)
        w = Writer(out_dir, cfg.format)
        body = HANDLERS[ns.command](cfg, w)
        w.manifest(ns.command, cfg, body)
    except LindbladGeoError as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code,
                  "command": ns.command}
        print(json.dumps(record), file=sys.stderr)
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "error.json"), "w", encoding="utf-8") as fh:
                json.dump(record, fh, indent=1, sort_keys=True)
                fh.write("\n")
        except OSError:
            pass
        return exc.exit_code
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
