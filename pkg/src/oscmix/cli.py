"""Command line entry point: ``oscmix <command> --config run.ini --out DIR``.

Every command parses the configuration and computes all of its artifacts in
memory before anything is written, so a failing run leaves no partial
outputs.  Exit codes: 0 success, 2 hypothesis failure, 3 numeric failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from . import io as oio
from .config import ConfigError, parse_config
from .linops import CertificateError, NotHurwitzError, NumericError

EXIT_OK, EXIT_HYP, EXIT_NUM, EXIT_CFG = 0, 2, 3, 4
COMMANDS = ("verify", "certify", "control", "simulate", "mix", "wiener", "report")
EMBED = "config| "


class HypothesisFailure(Exception):
    pass


# ------------------------------------------------------------------ helpers

def extract_config_text(text):
    """Plain configs pass through; a report yields its embedded configuration."""
    lines = [ln[len(EMBED):] for ln in text.splitlines() if ln.startswith(EMBED)]
    return "\n".join(lines) + "\n" if lines else text


def _meta(cfg, scheme=None, h=None):
    m = {"seed": cfg.seed if cfg.seed is not None else "none"}
    if scheme is not None:
        m["scheme"] = scheme
    if h is not None:
        m["h"] = h
    m["config_sha256"] = cfg.sha256
    return m


def _sim_params(cfg):
    scheme = cfg.get("simulate", "scheme", "exponential_euler")
    h = cfg.get("simulate", "h", 0.01, float)
    return scheme, h


def _require_seed(cfg):
    if cfg.seed is None:
        raise ConfigError("this command needs [simulate] seed (or --seed)")
    return cfg.seed


def _default_points(spec):
    return [np.zeros(spec.d), np.ones(spec.d)]


def _pairs(points, what):
    if len(points) % 2:
        raise ConfigError(f"{what} needs an even number of points (start pairs)")
    return [(points[i], points[i + 1]) for i in range(0, len(points), 2)]


def _dim_check(spec, pts, what):
    for p in pts:
        if p.size != spec.d:
            raise ConfigError(f"{what}: point of length {p.size}, state dimension is {spec.d}")


# ---------------------------------------------------------------- commands

def cmd_verify(cfg, spec, args, out):
    from .hypotheses import check_all

    x0s = cfg.get("hypotheses", "x0", None, "points") or _default_points(spec)
    _dim_check(spec, x0s, "[hypotheses] x0")
    ray = cfg.get("hypotheses", "ray", None, "vec")
    if ray is not None:
        _dim_check(spec, [ray], "[hypotheses] ray")
    eps = cfg.get("hypotheses", "eps_rank", 1e-10, float)
    depth = cfg.get("hypotheses", "max_depth", None, int)
    gk = {"samples_per_shell": cfg.get("hypotheses", "samples_per_shell", 256, int),
          "seed": cfg.seed if cfg.seed is not None else 0, "workers": args.workers}
    verdict = check_all(spec, x0s, ray, None, depth, gk, eps)
    lines = [f"config_sha256={cfg.sha256}", f"network={cfg.network}"] + verdict.as_lines()
    lines.append(f"all_hold={'yes' if verdict.all_hold else 'no'}")
    out["verify.txt"] = "\n".join(lines) + "\n"
    summary = [f"D (dissipative):   {verdict.D['status']}",
               f"K (Kalman):        {verdict.K['status']} d*={verdict.K['d_star']}",
               f"G (growth):        {verdict.G['status']} a={verdict.G['a']:g} < {verdict.G['bound']}",
               f"H (Hoermander):    {verdict.H['status']} ({verdict.H['how']})"]
    return verdict, summary


def cmd_certify(cfg, spec, args, out):
    from .simulate import certify_lyapunov

    cert = certify_lyapunov(spec)
    rows = [[i] + list(r) for i, r in enumerate(cert.M)]
    out["M.csv"] = oio.csv_text(["row"] + [f"m{j}" for j in range(spec.d)], rows, _meta(cfg))
    kv = {"norm_M": cert.norm_M, "c1": cert.c1, "c2": cert.c2, "c3": cert.c3,
          "gamma": cert.gamma, "K": cert.K, "R": cert.R, "trace_MBBt": cert.trace, "a": cert.a}
    out["certificate.csv"] = oio.csv_text(["name", "value"], list(kv.items()), _meta(cfg))
    summary = ["M = " + np.array2string(cert.M, precision=6, separator=", ").replace("\n", "")]
    summary += [f"gamma = {cert.gamma:.10g}", f"K = {cert.K:.10g}", f"R = {cert.R:.10g}"]
    summary += [f"note: {n}" for n in cert.notes]
    return cert, summary


def cmd_control(cfg, spec, args, out):
    from .control import integrate_plan, linear_min_energy_control, steer_perturbed

    x = cfg.get("control", "start", None, "vec")
    if x is None:
        raise ConfigError("control needs a start (--start or [control] start)")
    x0 = cfg.get("control", "target", np.zeros(spec.d), "vec")
    _dim_check(spec, [x, x0], "[control]")
    T = cfg.get("control", "horizon", 1.0, float)
    delta = cfg.get("control", "delta", 0.1, float)
    if not T > 0:
        raise ConfigError("[control] horizon must be positive")
    if spec.force.is_zero:
        plan = linear_min_energy_control(spec.A, spec.B, x, x0, T)
        end, _, _ = integrate_plan(spec, plan)
        res = float(np.linalg.norm(end - x0))
        log, target, perturb, bound = ["linear minimum-energy control"], None, 0.0, 0.0
    else:
        plan, sr = steer_perturbed(spec, x, x0, delta, T)
        end, res, log, target = sr.endpoint, sr.residual, sr.phase_log, sr.target
        perturb, bound = sr.perturbation, sr.certified_bound
    n_out = cfg.get("control", "samples", 201, int)
    tt = np.linspace(0.0, T, n_out)
    _, ts, xs = integrate_plan(spec, plan, t_eval=tt)
    _, keep = np.unique(ts, return_index=True)
    ts, xs = ts[keep], xs[keep]
    U = plan.u(ts)
    hdr = ["t"] + [f"u{j}" for j in range(spec.n)] + [f"x{j}" for j in range(spec.d)]
    out["control.csv"] = oio.csv_text(hdr, [[t, *u, *xv] for t, u, xv in zip(ts, U, xs)], _meta(cfg))
    kv = [("phase", plan.phase), ("T", T), ("delta", delta), ("residual", res),
          ("target_radius", target if target is not None else "none"),
          ("perturbation", perturb if perturb is not None else "none"),
          ("gronwall_bound", bound if bound is not None else "none"), ("m", plan.m)]
    out["control_summary.csv"] = oio.csv_text(["name", "value"], kv, _meta(cfg))
    summary = [f"{k} = {oio.fmt(v)}" for k, v in kv] + log
    if target is not None and not res < target:
        raise HypothesisFailure(f"steering residual {res:.3g} >= target radius {target:.3g}")
    return res, summary


def cmd_simulate(cfg, spec, args, out):
    from .simulate import simulate_ensemble

    seed = _require_seed(cfg)
    scheme, h = _sim_params(cfg)
    T = cfg.get("simulate", "T", 1.0, float)
    N = cfg.get("simulate", "N", 1000, int)
    x = cfg.get("simulate", "start", np.zeros(spec.d), "vec")
    _dim_check(spec, [x], "[simulate] start")
    n_steps = int(round(T / h))
    stride = max(1, cfg.get("simulate", "record_every", max(1, n_steps // 100), int))
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    times = idx * h
    ens = simulate_ensemble(spec, x, times, h, N, seed, scheme, args.workers)
    S = ens.states
    k = min(N, cfg.get("simulate", "n_show", 5, int))
    rows = [[t, i, *S[i, j]] for i in range(k) for j, t in enumerate(times)]
    meta = _meta(cfg, scheme, h)
    xs = [f"x{j}" for j in range(spec.d)]
    out["trajectories.csv"] = oio.csv_text(["t", "trajectory"] + xs, rows, meta)
    mean, var = S.mean(axis=0), S.var(axis=0)
    mrows = [[t, *mean[j], *var[j]] for j, t in enumerate(times)]
    out["moments.csv"] = oio.csv_text(["t"] + [f"mean_{c}" for c in xs] + [f"var_{c}" for c in xs],
                                      mrows, meta)
    summary = [f"N={N} T={T:g} h={h:g} scheme={scheme}", f"final mean = {mean[-1]}"]
    if ens.diagnostic:
        summary.append("diagnostic: " + ens.diagnostic)
    return ens, summary


def cmd_mix(cfg, spec, args, out):
    from .simulate import mixing_report

    seed = _require_seed(cfg)
    scheme, h = _sim_params(cfg)
    h = cfg.get("mix", "h", h, float)
    pts = cfg.get("mix", "pairs", None, "points")
    if not pts:
        raise ConfigError("[mix] pairs is required (points a;b[;c;d...], consecutive points pair up)")
    _dim_check(spec, pts, "[mix] pairs")
    pairs = _pairs(pts, "[mix] pairs")
    horizon = cfg.get("mix", "horizon", 20.0, float)
    N = cfg.get("mix", "N", 10000, int)
    dt = cfg.get("mix", "dt_record", 0.5, float)
    proj = cfg.get("mix", "projection", None, "vec")
    proj = None if proj is None else tuple(int(v) for v in proj)
    rep = mixing_report(spec, pairs, horizon, N, seed, None, dt, h, proj, scheme, args.workers)
    hdr = ["t"]
    for p in range(len(pairs)):
        hdr += [f"tv_{p}", f"floor_{p}", f"vdist_{p}"]
    rows = [[t] + [v for p in range(len(pairs))
                   for v in (rep.tv[p, j], rep.noise_floor[p, j], rep.v_distance[p, j])]
            for j, t in enumerate(rep.times)]
    meta = _meta(cfg, scheme, h)
    out["mixing.csv"] = oio.csv_text(hdr, rows, meta)
    fits = [[p, rep.rate[p], rep.prefactor[p], rep.r2[p], rep.windows[p][0], rep.windows[p][1],
             int(rep.monotone(p)), rep.outcome[p]] for p in range(len(pairs))]
    out["mixing_fit.csv"] = oio.csv_text(
        ["pair", "rate", "prefactor", "r2", "window_start", "window_end", "monotone", "outcome"],
        fits, meta)
    series = []
    for p in range(len(pairs)):
        series.append((f"TV pair {p}", rep.times, rep.tv[p]))
        series.append((f"noise floor {p}", rep.times, rep.noise_floor[p]))
    out["mixing.svg"] = oio.svg_lines(series, "total variation between ensembles", "t", "TV", logy=True)
    summary = [f"pair {p}: {rep.outcome[p]} rate={rep.rate[p]:.4g} R2={rep.r2[p]:.3g}"
               for p in range(len(pairs))]
    return rep, summary


def cmd_wiener(cfg, spec, args, out):
    from .wiener import build_basis, band_limited_family, lemma_bound_check, rough_control_demo

    seed = _require_seed(cfg)
    M = cfg.get("wiener", "M", 10000, int)
    n_ctrl = cfg.get("wiener", "n_controls", 10, int)
    Ns = cfg.get("wiener", "N_grid", np.array([10, 100, 1000]), "vec")
    Ns = [int(v) for v in Ns]
    G = cfg.get("wiener", "grid", 2**14, int)
    n_export = min(M, cfg.get("wiener", "export_terms", 20, int))
    basis = build_basis(M)
    tg = np.linspace(0.0, 1.0, cfg.get("wiener", "export_points", 101, int))
    P = basis.psi(tg, n_export)
    out["basis.csv"] = oio.csv_text(["t"] + [f"psi_{m}" for m in range(1, n_export + 1)],
                                    [[t, *r] for t, r in zip(tg, P)],
                                    {**_meta(cfg), "basis": basis.tag})
    ctrls = band_limited_family(n_ctrl, seed, G=G)
    rows = lemma_bound_check(basis, ctrls, Ns, 1.0)
    out["lemma.csv"] = oio.csv_text(["N", "max_residual", "bound", "pass"],
                                    [[r["N"], r["max_residual"], r["bound"], int(r["pass"])] for r in rows],
                                    _meta(cfg))
    rough = rough_control_demo(basis, seed, Ns, G)
    out["rough_control.csv"] = oio.csv_text(["N", "residual", "smooth_bound_form"], rough, _meta(cfg))
    summary = [f"N={r['N']}: residual {r['max_residual']:.3e} <= {r['bound']:.3e} "
               f"{'ok' if r['pass'] else 'FAIL'}" for r in rows]
    if not all(r["pass"] for r in rows):
        raise HypothesisFailure("projection residual exceeds the tail bound")
    return rows, summary


def _drift_stage(cfg, spec, args, out, cert):
    from .simulate import drift_check

    seed = _require_seed(cfg)
    scheme, h = _sim_params(cfg)
    starts = cfg.get("drift", "starts", None, "points") or _default_points(spec)
    _dim_check(spec, starts, "[drift] starts")
    times = cfg.get("drift", "times", np.array([0.0, 0.5, 1.0, 2.0]), "vec")
    N = cfg.get("drift", "N", 10000, int)
    rows = drift_check(spec, cert, starts, times, N, seed, h, scheme, args.workers)
    out["drift.csv"] = oio.csv_text(["start", "t", "estimate", "se", "bound", "pass"],
                                    [[r["start"], r["t"], r["estimate"], r["se"], r["bound"], int(r["pass"])]
                                     for r in rows], _meta(cfg, scheme, h))
    ok = all(r["pass"] for r in rows)
    return ok, [f"drift table: {'all cells within bound' if ok else 'bound exceeded'}"]


def _minorization_stage(cfg, spec, args, out):
    from .simulate import minorization_probe

    seed = _require_seed(cfg)
    scheme, h = _sim_params(cfg)
    starts = cfg.get("minorization", "starts", None, "points") or _default_points(spec)
    _dim_check(spec, starts, "[minorization] starts")
    x0 = cfg.get("minorization", "center", np.zeros(spec.d), "vec")
    T = cfg.get("minorization", "T", 2.0, float)
    delta = cfg.get("minorization", "delta", 1.0, float)
    N = cfg.get("minorization", "N", 10000, int)
    res = minorization_probe(spec, T, starts, x0, delta, N, seed, h, scheme, args.workers)
    out["minorization.csv"] = oio.csv_text(
        ["start", "n", "hits", "p", "lower", "upper", "status"],
        [[i, r["n"], r["hits"], r["p"], r["lower"], r["upper"], r["status"]]
         for i, r in enumerate(res["rows"])], _meta(cfg, scheme, h))
    return res["pass"], [f"minorization lower bound = {res['lower_bound']:.4g}"]


def cmd_report(cfg, spec, args, out):
    sections = set(cfg.parser.sections())
    lines, ok = [], True
    t0 = time.perf_counter()
    verdict, s = cmd_verify(cfg, spec, args, out)
    lines += ["[verify]"] + verdict.as_lines()
    ok &= verdict.all_hold
    cert = None
    if verdict.all_hold:
        cert, s = cmd_certify(cfg, spec, args, out)
        lines += ["[certify]", f"norm_M={cert.norm_M:.17g}", f"gamma={cert.gamma:.17g}",
                  f"K={cert.K:.17g}", f"R={cert.R:.17g}"]
    stages = [("control", cmd_control), ("simulate", cmd_simulate), ("mix", cmd_mix),
              ("wiener", cmd_wiener)]
    for name, fn in stages:
        if name in sections:
            try:
                _, s = fn(cfg, spec, args, out)
            except HypothesisFailure as exc:
                s, ok = [f"failed: {exc}"], False
            lines += [f"[{name}]"] + s
    if cert is not None and "drift" in sections:
        good, s = _drift_stage(cfg, spec, args, out, cert)
        ok &= good
        lines += ["[drift]"] + s
    if "minorization" in sections:
        good, s = _minorization_stage(cfg, spec, args, out)
        ok &= good
        lines += ["[minorization]"] + s
    elapsed = time.perf_counter() - t0
    head = [f"# oscmix {__version__} run report", f"config_sha256={cfg.sha256}",
            f"elapsed_seconds={elapsed:.3f}", f"status={'ok' if ok else 'failed'}"]
    manifest = ["[manifest]"] + [f"{name} sha256={oio.sha256_text(txt)}" for name, txt in sorted(out.items())]
    embedded = ["[embedded config]"] + [EMBED + ln for ln in cfg.canonical().splitlines()]
    out["report.txt"] = "\n".join(head + lines + manifest + embedded) + "\n"
    if not ok:
        raise HypothesisFailure("at least one stage failed; see report.txt")
    return ok, lines


HANDLERS = {"verify": cmd_verify, "certify": cmd_certify, "control": cmd_control,
            "simulate": cmd_simulate, "mix": cmd_mix, "wiener": cmd_wiener, "report": cmd_report}


# -------------------------------------------------------------------- main

def build_parser():
    p = argparse.ArgumentParser(prog="oscmix", description="Hypoelliptic oscillator networks: "
                                "hypothesis checks, certificates, control and mixing experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI configuration or a previous report.txt")
        sp.add_argument("--out", default=None, help="output directory (default [outputs] directory or ./out)")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None, help="overrides [simulate] seed")
        if name == "control":
            sp.add_argument("--start", default=None)
            sp.add_argument("--target", default=None)
            sp.add_argument("--horizon", default=None)
            sp.add_argument("--delta", default=None)
    return p


def _load(args):
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc}") from exc
    cfg = parse_config(extract_config_text(text))
    if args.seed is not None:
        cfg.set("simulate", "seed", args.seed)
    for key in ("start", "target", "horizon", "delta"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.set("control", key, val)
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    return cfg


def _write_all(outdir, files):
    os.makedirs(outdir, exist_ok=True)
    root = os.path.realpath(outdir)
    for name, text in files.items():
        path = os.path.realpath(os.path.join(root, name))
        if os.path.dirname(path) != root:
            raise RuntimeError(f"refusing to write outside the output directory: {name}")
        with open(path, "w", newline="") as fh:
            fh.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    files = {}
    try:
        cfg = _load(args)
        spec = cfg.build_spec()
        outdir = args.out or cfg.get("outputs", "directory", "out")
        result, summary = HANDLERS[args.command](cfg, spec, args, files)
        code = EXIT_OK
        if args.command == "verify" and not result.all_hold:
            code = EXIT_HYP
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CFG
    except (HypothesisFailure, CertificateError, NotHurwitzError) as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYP
    except (NumericError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUM
    _write_all(outdir, files)
    for ln in summary:
        print(ln)
    print(f"wrote {len(files)} file(s) to {outdir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
