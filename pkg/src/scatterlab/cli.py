"""Command-line driver.

    python -m scatterlab <subcommand> [--spec PATH] [--out PATH] [--format csv|json]
                         [--tol FLOAT] [--strict] [--seed INT] ...

Exit codes: 0 success, 2 validation error, 3 instability flags with --strict.
Every table carries ``config_hash`` and ``tol`` columns.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dirac, eigen, multilinear, potential, spectral, waveop

log = logging.getLogger("scatterlab")

EXIT_OK, EXIT_INVALID, EXIT_UNSTABLE = 0, 2, 3


class ValidationError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    spec: dict | None
    options: dict
    tol: float
    seed: int | None
    fmt: str = "csv"
    out: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("out")
        return json.dumps(d, sort_keys=True, default=str)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


@dataclass
class Result:
    columns: list
    rows: list
    unstable: bool = False
    records: list | None = None  # json-only payloads
    notes: dict = field(default_factory=dict)


# -- helpers --------------------------------------------------------------------

def _load_spec(text: str | None, seed: int | None) -> dict | None:
    if text is None:
        return None
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            raw = fh.read()
    elif text.lstrip().startswith("{"):
        raw = text
    else:
        raise ValidationError(f"spec file not found: {text}")
    try:
        d = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ValidationError(f"malformed spec: {e}") from None
    if seed is not None and d.get("kind") == "random_decaying":
        d["seed"] = seed
    return d


def _potential(cfg: RunConfig) -> potential.Potential:
    if cfg.spec is None:
        raise ValidationError("--spec is required for this subcommand")
    try:
        return potential.from_spec(cfg.spec)
    except (ValueError, TypeError) as e:
        raise ValidationError(str(e)) from None


def _c(z):
    return [float(np.real(z)), float(np.imag(z))]


def _parse_complex(s: str) -> complex:
    try:
        return complex(s.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {s}") from None


def _packet(text: str, x):
    kind, *a = text.split(":")
    if kind != "gauss" or len(a) != 3:
        raise ValidationError("packet must be gauss:x0:sigma:k0")
    x0, s, k0 = map(float, a)
    return np.exp(-((x - x0) ** 2) / (2 * s * s)) * np.exp(1j * k0 * x)


# -- subcommands ------------------------------------------------------------------

def cmd_eigen(cfg, o) -> Result:
    p = _potential(cfg)
    z = o["z"]
    x = np.arange(0.0, o["x_max"] + o["dx"] / 2, o["dx"])
    if o["method"] == "series":
        sol, diag = eigen.solve_series(p, x, z, N=o["N"])
        unstable = not diag.converged
    elif o["method"] == "decaying":
        sol = eigen.decaying_solution(p, z, x)
        unstable = False
    else:
        X = eigen.far_point(p)
        grid = np.unique(np.concatenate([x, [X]]))
        sol = eigen.solve_ivp(p, z, eigen.wkb_data(p, z, X), grid, "backward")
        keep = np.searchsorted(grid, x)
        sol = eigen.EigenSolution(x, sol.u[keep], sol.up[keep], sol.z, sol.tag, sol.meta)
        unstable = False
    rows = [[xi, *_c(u), *_c(up)] for xi, u, up in zip(sol.x, sol.u, sol.up)]
    return Result(["x", "Re u", "Im u", "Re u'", "Im u'"], rows, unstable)


def cmd_mfun(cfg, o) -> Result:
    p = _potential(cfg)
    rows, unstable = [], False
    for E in o["E"]:
        for eps in o["eps"]:
            m = eigen.weyl_m(p, E + 1j * eps, beta=o["beta"])
            rows.append([E, eps, *_c(m), float("nan"), 1])
        bl = eigen.boundary_limit(lambda z: eigen.weyl_m(p, z, beta=o["beta"]), E)
        v = bl.value if bl.value is not None else complex(np.nan, np.nan)
        unstable |= not bl.stable
        rows.append([E, 0.0, *_c(v), bl.error, int(bl.stable)])
    return Result(["E", "eps", "Re m", "Im m", "error", "stable_flag"], rows, unstable)


def cmd_spectral_table(cfg, o) -> Result:
    p = _potential(cfg)
    lam = np.linspace(o["lambda_min"], o["lambda_max"], o["n"])
    try:
        tab = spectral.build_table(p, lam)
    except eigen.SpectralPoleError as e:
        raise ValidationError(str(e)) from None
    return Result(list(spectral.SpectralTable.COLUMNS), tab.rows().tolist(), bool(not tab.stable.all()))


def cmd_scatter(cfg, o) -> Result:
    p = _potential(cfg)
    lam = np.asarray(o["lambda"], dtype=float)
    if o["geometry"] == "whole":
        S = waveop.scattering_wholeline(p, lam)
        rows = [[l, *_c(a), *_c(b), *_c(c), *_c(d), u]
                for l, a, b, c, d, u in zip(lam, S.t1, S.r1, S.t2, S.r2, S.unitarity_defect())]
        cols = ["lambda", "Re t1", "Im t1", "Re r1", "Im r1", "Re t2", "Im t2", "Re r2", "Im r2", "unitarity_defect"]
        return Result(cols, rows, bool(np.any(S.unitarity_defect() > 1e-6)))
    S = waveop.scattering_halfline(p, lam)
    mp = S.moller_phase if S.moller_phase is not None else np.full(lam.shape, np.nan)
    rows = [[l, *_c(m), ph, q] for l, m, ph, q in zip(lam, S.multiplier, S.phase, mp)]
    return Result(["lambda", "Re S", "Im S", "omega", "moller_phase"], rows)


def cmd_evolve(cfg, o) -> Result:
    p = _potential(cfg)
    x = np.arange(0.0 if o["geometry"] == "half" else -o["x_max"], o["x_max"] + o["dx"] / 2, o["dx"])
    g = _packet(o["packet"], x)
    lam = np.arange(max(o["dlam"], eigen.RHO), o["lambda_max"] + o["dlam"] / 2, o["dlam"])
    if o["geometry"] == "half":
        g = g * (x > 0)
        tab = spectral.build_psi(p, lam, x, check=False)
        pk = spectral.make_packet(tab, g)
        try:
            out = spectral.evolve_V(tab, g, o["t"], pk.gt)
        except ValueError as e:
            raise ValidationError(str(e)) from None
        unstable = pk.defect > 0.02
    else:
        tab = waveop.build_psi_wholeline(p, lam, x)
        out = waveop.evolve_V_wholeline(tab, g, o["t"])
        unstable = False
    rows = [[xi, *_c(v)] for xi, v in zip(x, out)]
    return Result(["x", "Re g_t", "Im g_t"], rows, unstable)


def cmd_waveop(cfg, o) -> Result:
    p = _potential(cfg)
    try:
        sched = waveop.parse_schedule(o["schedule"])
        rep = waveop.waveop_experiment(p, tuple(o["band"]), sched, modified=o["modified"])
    except ValueError as e:
        raise ValidationError(str(e)) from None
    res = Result(list(waveop.ConvergenceReport.COLUMNS), rep.rows().tolist(), not rep.admissible)
    res.notes = {"admissible": rep.admissible, "modified": rep.modified}
    return res


def cmd_dirac(cfg, o) -> Result:
    mode = o["mode"]
    if mode == "embedded":
        q, st, rep = dirac.design_embedded(o["E"][0], o["A"], X=o["X"])
        rows = [[x, r, th] for x, r, th in zip(st.x, st.R, st.theta1)]
        res = Result(["x", "R", "theta1"], rows, not rep.lock_ok)
        res.notes = {k: v for k, v in asdict(rep).items()}
        return res
    p = _potential(cfg)
    if mode == "scatter":
        S = dirac.dirac_scattering(p, o["E"])
        rows = [[e, *_c(a), *_c(b), *_c(c), *_c(d)] for e, a, b, c, d in zip(S.E, S.t1, S.r1, S.t2, S.r2)]
        cols = ["E", "Re t1", "Im t1", "Re r1", "Im r1", "Re t2", "Im t2", "Re r2", "Im r2"]
        return Result(cols, rows, bool(np.any(S.unitarity_defect() > 1e-6)))
    x = np.arange(0.0, o["X"] + o["dx"] / 2, o["dx"])
    sol = dirac.dirac_ivp(p, o["E"][0], [0.0, 1.0], x)
    return Result(["x", "Re y1", "Im y1", "Re y2", "Im y2"], sol.to_csv_rows().tolist())


def cmd_multilinear(cfg, o) -> Result:
    kind, _, val = o["corpus"].partition(":")
    if kind != "seed" or not val.lstrip("-").isdigit():
        raise ValidationError("corpus must be seed:INT")
    seed = int(val)
    n = o["n"]
    cal = multilinear.random_step_corpus(o["samples"], seed, (n, n))
    held = multilinear.random_step_corpus(o["samples"], seed + 1, (n, n))
    C = o["C"] if o["C"] is not None else multilinear.calibrate_C(cal).C
    cid = multilinear.corpus_hash(cal)
    ms = multilinear.uniform_structure(0.0, 1.0, 10)
    recs, fail = [], False
    for fs in held:
        for r in multilinear.check_numerical_bound(fs, C, o["delta"], o["delta_prime"], ms=ms, corpus_id=cid):
            d = json.loads(r.to_json())
            d["star"] = r.star
            recs.append(d)
            fail |= not r.holds
    cols = ["n", "lhs", "rhs", "margin", "C", "delta", "corpus_id", "star"]
    return Result(cols, [[d[c] for c in cols] for d in recs], fail, records=recs)


def cmd_norms(cfg, o) -> Result:
    p = _potential(cfg)
    rows = []
    for e in o["p"]:
        lp = potential.norm_lp(p, e)
        am = potential.norm_amalgam(p, e)
        rows.append([e, lp.value, int(lp.finite), am.value, int(am.finite)])
    return Result(["exponent", "lp", "lp_finite", "amalgam", "amalgam_finite"], rows)


COMMANDS = {
    "eigen": cmd_eigen, "mfun": cmd_mfun, "spectral-table": cmd_spectral_table, "scatter": cmd_scatter,
    "evolve": cmd_evolve, "waveop": cmd_waveop, "dirac": cmd_dirac, "multilinear-check": cmd_multilinear,
    "norms": cmd_norms,
}


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="potential spec (JSON file or inline JSON)")
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--strict", action="store_true", help="exit 3 when instability flags are present")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="scatterlab")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("eigen", parents=[common])
    s.add_argument("--z", type=_parse_complex, required=True)
    s.add_argument("--x-max", type=float, default=10.0)
    s.add_argument("--dx", type=float, default=0.1)
    s.add_argument("--method", choices=("series", "ivp", "decaying"), default="ivp")
    s.add_argument("--N", type=int, default=16)

    s = sub.add_parser("mfun", parents=[common])
    s.add_argument("--E", type=float, nargs="+", required=True)
    s.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    s.add_argument("--beta", type=float)

    s = sub.add_parser("spectral-table", parents=[common])
    s.add_argument("--lambda-min", type=float, default=0.5)
    s.add_argument("--lambda-max", type=float, default=2.0)
    s.add_argument("--n", type=int, default=20)

    s = sub.add_parser("scatter", parents=[common])
    s.add_argument("--lambda", type=float, nargs="+", required=True)
    s.add_argument("--geometry", choices=("half", "whole"), default="half")

    s = sub.add_parser("evolve", parents=[common])
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--packet", default="gauss:10:2:4")
    s.add_argument("--geometry", choices=("half", "whole"), default="half")
    s.add_argument("--x-max", type=float, default=30.0)
    s.add_argument("--dx", type=float, default=0.05)
    s.add_argument("--lambda-max", type=float, default=8.0)
    s.add_argument("--dlam", type=float, default=0.02)

    s = sub.add_parser("waveop", parents=[common])
    s.add_argument("--band", type=float, nargs=2, required=True)
    s.add_argument("--schedule", default="geometric:12.5:9")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--modified", dest="modified", action="store_true", default=True)
    g.add_argument("--unmodified", dest="modified", action="store_false")

    s = sub.add_parser("dirac", parents=[common])
    s.add_argument("--mode", choices=("ivp", "scatter", "embedded"), default="scatter")
    s.add_argument("--E", type=float, nargs="+", default=[1.0])
    s.add_argument("--A", type=float, default=1.0)
    s.add_argument("--X", type=float, default=50.0)
    s.add_argument("--dx", type=float, default=0.1)

    s = sub.add_parser("multilinear-check", parents=[common])
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--corpus", default="seed:0")
    s.add_argument("--samples", type=int, default=50)
    s.add_argument("--C", type=float)
    s.add_argument("--delta", type=float, default=multilinear.DELTA)
    s.add_argument("--delta-prime", type=float, default=multilinear.DELTA_PRIME)

    s = sub.add_parser("norms", parents=[common])
    s.add_argument("--p", type=float, nargs="+", default=[1.0, 1.8, 2.0])
    return ap


# -- output ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def render(res: Result, cfg: RunConfig) -> str:
    if cfg.fmt == "json":
        recs = res.records if res.records is not None else [dict(zip(res.columns, r)) for r in res.rows]
        payload = {"config_hash": cfg.hash, "tol": cfg.tol, "subcommand": cfg.subcommand,
                   "columns": res.columns, "records": recs, "unstable": res.unstable, "notes": res.notes}
        return json.dumps(payload, default=_json_default, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(res.columns) + ["config_hash", "tol"])
    for r in res.rows:
        w.writerow([_fmt(v) for v in r] + [cfg.hash, repr(cfg.tol)])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def write_atomic(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    opts = {k: v for k, v in vars(ns).items()
            if k not in {"spec", "out", "format", "tol", "strict", "seed", "verbose", "subcommand"}}
    try:
        spec = _load_spec(ns.spec, ns.seed)
        cfg = RunConfig(ns.subcommand, spec, opts, ns.tol, ns.seed, ns.format, ns.out)
        res = COMMANDS[ns.subcommand](cfg, opts)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    text = render(res, cfg)
    if ns.out:
        write_atomic(ns.out, text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head)
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    if res.unstable:
        log.warning("instability flags present")
        if ns.strict:
            return EXIT_UNSTABLE
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
