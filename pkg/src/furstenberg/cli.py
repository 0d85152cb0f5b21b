"""Reproducible command-line front end: experiment orchestration with
deterministic CSV/JSON artifacts.

Every run is a pure function of (measure document, seed, parameters); CSVs
carry a header row and a trailing metadata comment.  Exit codes: 0 success,
2 validation/precondition failure, 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, fourier, model, renewal, smoothing, transfer, walk
from .proj2 import ProjPoint, point
from .transfer import NonConvergenceError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, complex):
        return f"{x.real:.17g}{x.imag:+.17g}j"
    return f"{float(x):.17g}"


def write_csv(path: Path, header: list[str], rows: list[tuple], seed) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    lines.append(f"# seed={seed}, version={__version__}")
    path.write_text("\n".join(lines) + "\n")


def _load(args) -> model.GeneratorMeasure:
    if args.config is None:
        return model.test_measure()
    return model.load_measure(args.config)


def _sampler(args) -> walk.TrajectorySampler:
    return walk.TrajectorySampler(_load(args), seed=args.seed)


def _out(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else Path(default_name)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------------
# Subcommands.


def cmd_validate(args) -> int:
    mu = _load(args)
    rep = model.moment_report(mu)
    probe = model.nonelementary_probe(mu, depth=args.depth)
    print(f"atoms={len(mu.atoms)} m1={rep.m1:.6g} m2={rep.m2:.6g} "
          f"probe={probe.verdict}")
    return EXIT_OK


def cmd_lyapunov(args) -> int:
    s = _sampler(args)
    est = walk.estimate_lyapunov_clt(s, args.n, args.samples)
    out = _out(args, "lyapunov.csv")
    write_csv(out, ["n", "N", "gamma_hat", "se_gamma", "a2_hat", "se_a2"],
              [(est.n, est.N, est.gamma_hat, est.se_gamma, est.a2_hat, est.se_a2)],
              args.seed)
    print(f"gamma_hat = {est.gamma_hat:.6g} +- {est.se_gamma:.2g}, "
          f"a2_hat = {est.a2_hat:.6g} +- {est.se_a2:.2g} -> {out}")
    return EXIT_OK


def cmd_ldp(args) -> int:
    s = _sampler(args)
    n_list = [int(v) for v in args.n_list.split(",")]
    prof = walk.deviation_profile(s, args.epsilon, n_list, args.samples)
    out = _out(args, "deviations.csv")
    write_csv(out, ["event", "n", "epsilon", "fraction", "se"],
              [(r.event, r.n, r.epsilon, r.fraction, r.se) for r in prof.rows],
              args.seed)
    worst = max(prof.rows, key=lambda r: r.fraction)
    print(f"{len(prof.rows)} rows; largest fraction {worst.fraction:.4g} "
          f"({worst.event}, n={worst.n}) -> {out}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    mu = _load(args)
    s = _sampler(args)
    est = walk.estimate_lyapunov_clt(s, 2000, 400)
    xi_max = args.xi_max or min(0.3, 0.3 / math.sqrt(max(est.a2_hat, 1e-12)))
    curve = transfer.lambda_curve(mu, xi_max, args.points, args.grid)
    rows = []
    radii = dict(transfer.spectral_radius_scan(mu, [1.0, 2.0, 5.0], args.grid))
    op0 = transfer.TransferOperator(mu, 0.0, args.grid)
    lam0, right = transfer.leading_eigen(op0)
    try:
        gap = 1.0 - transfer.subdominant_modulus(op0, lam0, right)
    except NonConvergenceError:
        gap = float("nan")
    for xi, lam in zip(curve.xi_grid, curve.lam):
        rows.append((xi, lam.real, lam.imag, gap, radii.get(abs(xi), float("nan"))))
    out = _out(args, "spectrum.csv")
    write_csv(out, ["xi", "re_lambda", "im_lambda", "gap", "radius"], rows, args.seed)
    print(f"gamma_fit = {curve.gamma_fit:.6g}, curvature_fit = "
          f"{curve.curvature_fit:.6g}, residual = {curve.residual:.2g} -> {out}")
    return EXIT_OK


def cmd_equidist(args) -> int:
    mu = _load(args)
    u = transfer.GridFunction.from_function(np.cos, args.grid)
    rep = transfer.equidistribution_check(mu, u, range(1, args.n + 1))
    out = _out(args, "equidist.csv")
    write_csv(out, ["n", "sup_deviation"], list(rep.rows), args.seed)
    print(f"slope = {rep.slope:.4g}, R2 = {rep.r_squared:.4f} -> {out}")
    return EXIT_OK


def _bump(theta, u):
    u = np.asarray(u)
    return np.where(np.abs(u) < 2.0, np.cos(np.pi * u / 4.0) ** 2, 0.0)


def _one3(theta, v, u):
    return np.ones_like(np.asarray(u, dtype=float))


def _one4(tc, theta, v, u):
    return np.ones_like(np.asarray(u, dtype=float))


def cmd_renewal(args) -> int:
    mu = _load(args)
    s = _sampler(args)
    gamma = s.calibrated_gamma()
    t = args.t if args.t is not None else 30.0 * gamma
    x = point(0.4)
    if args.kind == "R":
        q = renewal.RenewalQuery(kind="R", f=_bump, u_support=(-2.0, 2.0), x=x, t=t)
    elif args.kind == "E":
        q = renewal.RenewalQuery(kind="E", f=lambda th, v, u: _bump(th, u),
                                 u_support=(-2.0, 2.0), x=x, t=t)
    elif args.kind in ("E1+", "E1-"):
        q = renewal.RenewalQuery(kind=args.kind, f=_one3, u_support=(-20, 20),
                                 x=x, t=t)
    elif args.kind in ("E2+", "E2-"):
        q = renewal.RenewalQuery(kind=args.kind, f=_one4, u_support=(-20, 20),
                                 x=x, t=t, xcheck=point(2.0))
    elif args.kind == "L":
        est = renewal.L_estimate(args.b, x, t, s, args.samples)
        out = _out(args, "renewal.csv")
        write_csv(out, ["kind", "t", "estimate", "se", "limit", "limit_se",
                        "tail_proxy"],
                  [("L", t, est.value, est.se, float("nan"), float("nan"),
                    est.tail_bound_proxy)], args.seed)
        print(f"L({args.b}) at t={t:.4g}: {est.value:.6g} +- {est.se:.2g} -> {out}")
        return EXIT_OK
    else:
        raise ValueError(f"unknown kind {args.kind}")
    est = renewal.estimate(q, s, args.samples, gamma_hint=gamma)
    nu = walk.empirical_measure(s, 200, max(args.samples, 10 ** 5))
    nu_rev = None
    if args.kind in ("E2+", "E2-"):
        rev = walk.TrajectorySampler(model.reverse(mu), args.seed + 1)
        nu_rev = walk.empirical_measure(rev, 200, max(args.samples, 10 ** 5))
    lim = renewal.limit(q, nu, nu_rev, mu, gamma)
    out = _out(args, "renewal.csv")
    write_csv(out, ["kind", "t", "estimate", "se", "limit", "limit_se",
                    "tail_proxy"],
              [(args.kind, t, est.value, est.se, lim.value, lim.se,
                est.tail_bound_proxy)], args.seed)
    print(f"{args.kind} at t={t:.4g}: estimate {est.value:.6g} +- {est.se:.2g}, "
          f"limit {lim.value:.6g} +- {lim.se:.2g} -> {out}")
    return EXIT_OK


def cmd_fourier(args) -> int:
    s = _sampler(args)
    fs = fourier.fourier_coefficients(s, args.kmax, args.samples)
    out = _out(args, "fourier.csv")
    rows = [(k, re, im, math.hypot(re, im), se)
            for k, re, im, se in zip(fs.k, fs.re, fs.im, fs.se)]
    write_csv(out, ["k", "re", "im", "abs", "se"], rows, args.seed)
    mags = fs.magnitudes()
    print(f"kmax={args.kmax}, N={fs.sample_size}; |c(1)| = {mags[1]:.4f}, "
          f"median |c(k)| over top half = "
          f"{float(np.median(mags[args.kmax // 2:])):.4f} -> {out}")
    return EXIT_OK


def cmd_decomp(args) -> int:
    s = _sampler(args)
    gamma = s.calibrated_gamma()
    t = args.t if args.t is not None else 10.0 * gamma
    rows = []
    for name, f in (("one", lambda th: np.ones_like(th)),
                    ("e_i_theta", lambda th: np.exp(1j * th)),
                    ("e_3i_theta", lambda th: np.exp(3j * th))):
        rep = fourier.decomp_check(f, t, s, args.samples, gamma_hint=gamma)
        rows.append((t, name, rep.lhs.real, rep.lhs.imag, rep.rhs.real,
                     rep.rhs.imag, math.hypot(rep.se_lhs, rep.se_rhs)))
    out = _out(args, "decomp.csv")
    write_csv(out, ["t", "f_id", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "se"],
              rows, args.seed)
    gap = max(math.hypot(r[2] - r[4], r[3] - r[5]) for r in rows)
    print(f"decomposition at t={t:.4g}: max |lhs - rhs| = {gap:.4g} -> {out}")
    return EXIT_OK


def cmd_gammalambda(args) -> int:
    s = _sampler(args)
    rep = fourier.gamma_lambda_compare(point(0.3), point(1.1), args.t, args.s,
                                       s, args.samples)
    out = _out(args, "gammalambda.csv")
    write_csv(out, ["s", "t", "good_fraction", "n_good", "mean_gap", "max_gap"],
              [(st.s, args.t, st.good_fraction, st.n_good, st.mean_gap, st.max_gap)
               for st in (rep.at_s, rep.at_s_hi)], args.seed)
    print(f"s={args.s}: good fraction {rep.at_s.good_fraction:.4f}, "
          f"mean gap {rep.at_s.mean_gap:.3g} -> {out}")
    return EXIT_OK


def cmd_regularity(args) -> int:
    s = _sampler(args)
    nu = walk.empirical_measure(s, 200, args.samples)
    rows = fourier.regularity_profile(nu, [math.exp(-k) for k in range(2, 9)],
                                      args.centers)
    out = _out(args, "regularity.csv")
    write_csv(out, ["r", "sup_mass", "ratio"],
              [(r["r"], r["sup_mass"], r["ratio"]) for r in rows], args.seed)
    print(f"max ratio {max(r['ratio'] for r in rows):.4g} -> {out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Exact identities across the modules; prints one residual per check."""
    import numpy.random as npr

    from . import proj2

    rng = npr.default_rng(0)
    checks: list[tuple[str, float, float]] = []

    def rand_mat():
        a = rng.uniform(0.3, 2.0) * rng.choice([-1.0, 1.0])
        b, c = rng.uniform(-2.0, 2.0, size=2)
        return proj2.Mat2([[a, b], [c, (1.0 + b * c) / a]])

    worst_cocycle = worst_contract = worst_cartan = worst_norm = 0.0
    for _ in range(2000):
        g1, g2 = rand_mat(), rand_mat()
        x = point(rng.uniform(0, math.pi))
        y = point(rng.uniform(0, math.pi))
        worst_cocycle = max(worst_cocycle, abs(
            proj2.cocycle(g2 @ g1, x) - proj2.cocycle(g2, proj2.act(g1, x))
            - proj2.cocycle(g1, x)))
        lhs = proj2.dist(proj2.act(g1, x), proj2.act(g1, y))
        rhs = (math.exp(-proj2.cocycle(g1, x) - proj2.cocycle(g1, y))
               * proj2.dist(x, y))
        worst_contract = max(worst_contract, abs(lhs - rhs) / max(rhs, 1e-300))
        ct = proj2.cartan(g1)
        worst_cartan = max(worst_cartan, float(
            np.max(np.abs(ct.reconstruct() - g1.m)) / g1.norm))
        worst_norm = max(worst_norm, abs(g1.norm - g1.inv().norm))
    checks.append(("cocycle additivity", worst_cocycle, 1e-10))
    checks.append(("contraction identity", worst_contract, 1e-9))
    checks.append(("polar reconstruction", worst_cartan, 1e-10))
    checks.append(("norm of inverse", worst_norm, 1e-9))

    mu = model.test_measure()
    op = transfer.TransferOperator(mu, 0.0, 256)
    checks.append(("markov fixes constants",
                   float(np.max(np.abs(op.apply(np.ones(256)) - 1.0))), 1e-12))
    lam0, _ = transfer.leading_eigen(op)
    checks.append(("unit leading eigenvalue", abs(lam0 - 1.0), 1e-10))

    ker = smoothing.make_kernel(0.4)
    from scipy import integrate as _int
    mass, _ = _int.quad(ker.density, -np.inf, np.inf, limit=400)
    checks.append(("kernel mass", abs(mass - 1.0), 1e-8))
    g = smoothing.gaussian_pair()
    res = max(smoothing.pv_hilbert(g, t).residual for t in (-1.0, 0.0, 1.0))
    checks.append(("hilbert identity", res, 1e-6))

    status = EXIT_OK
    for name, val, tol in checks:
        ok = val <= tol
        print(f"{'PASS' if ok else 'FAIL'} {name}: residual {val:.3g} "
              f"(tolerance {tol:g})")
        if not ok:
            status = EXIT_NUMERICAL
    return status


_SCHEMAS = {
    "lyapunov": ["n", "N", "gamma_hat", "se_gamma", "a2_hat", "se_a2"],
    "deviations": ["event", "n", "epsilon", "fraction", "se"],
    "spectrum": ["xi", "re_lambda", "im_lambda", "gap", "radius"],
    "equidist": ["n", "sup_deviation"],
    "renewal": ["kind", "t", "estimate", "se", "limit", "limit_se", "tail_proxy"],
    "fourier": ["k", "re", "im", "abs", "se"],
    "decomp": ["t", "f_id", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "se"],
    "gammalambda": ["s", "t", "good_fraction", "n_good", "mean_gap", "max_gap"],
    "regularity": ["r", "sup_mass", "ratio"],
}


def _parse_csv(path: Path):
    lines = [ln for ln in path.read_text().splitlines()
             if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


def cmd_report(args) -> int:
    summary: dict = {"version": __version__, "sections": {}}
    for raw in args.csv:
        path = Path(raw)
        kind = path.stem.split("-")[0]
        if kind not in _SCHEMAS:
            print(f"unrecognized artifact {path}", file=sys.stderr)
            return EXIT_VALIDATION
        header, rows = _parse_csv(path)
        if header != _SCHEMAS[kind]:
            print(f"schema mismatch in {path}: {header}", file=sys.stderr)
            return EXIT_VALIDATION
        section: dict = {"rows": len(rows)}
        if kind == "fourier":
            mags = [math.hypot(float(r[1]), float(r[2])) for r in rows[1:]]
            if len(mags) >= 256:
                lo = float(np.median(mags[0:8]))
                hi = float(np.median(mags[127:256]))
                section["decay_margin"] = lo - hi
                section["pass_decay"] = bool(lo - 0.1 > hi
                                             and max(mags[127:256]) <= 0.3)
        if kind == "spectrum":
            lam_mags = [math.hypot(float(r[1]), float(r[2])) for r in rows]
            section["max_modulus"] = max(lam_mags)
            section["pass_modulus"] = bool(max(lam_mags) <= 1.0 + 1e-6)
        if kind == "decomp":
            gaps = [math.hypot(float(r[2]) - float(r[4]),
                               float(r[3]) - float(r[5])) for r in rows]
            ses = [float(r[6]) for r in rows]
            section["pass_identity"] = bool(
                all(g <= max(3 * s, 1e-9) for g, s in zip(gaps, ses)))
        if kind == "regularity":
            ratios = [float(r[2]) for r in rows]
            section["max_ratio"] = max(ratios)
        summary["sections"][kind] = section
    out = _out(args, "report.json")
    out.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{len(summary['sections'])} section(s) -> {out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# Argument wiring.


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="furstenberg",
        description="Random walks on the projective line: growth rates, "
                    "transfer spectra, renewal asymptotics, Fourier decay.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(q, samples=10000):
        q.add_argument("--config", help="measure document (JSON); "
                       "defaults to the built-in benchmark measure")
        q.add_argument("--seed", type=int, default=1)
        q.add_argument("--samples", type=int, default=samples)
        q.add_argument("--out", help="output file path")

    q = sub.add_parser("validate", help="check a measure document")
    q.add_argument("--config", required=False)
    q.add_argument("--depth", type=int, default=6)
    q.set_defaults(fn=cmd_validate)

    q = sub.add_parser("lyapunov", help="growth rate and CLT variance")
    common(q, samples=1000)
    q.add_argument("--n", type=int, default=10000)
    q.set_defaults(fn=cmd_lyapunov)

    q = sub.add_parser("ldp", help="large-deviation exceedance tables")
    common(q, samples=4000)
    q.add_argument("--epsilon", type=float, default=0.2)
    q.add_argument("--n-list", default="4,8,16,32,64")
    q.set_defaults(fn=cmd_ldp)

    q = sub.add_parser("spectrum", help="leading-eigenvalue curve and radii")
    common(q, samples=400)
    q.add_argument("--xi-max", type=float, default=None)
    q.add_argument("--points", type=int, default=21)
    q.add_argument("--grid", type=int, default=1024)
    q.set_defaults(fn=cmd_spectrum)

    q = sub.add_parser("equidist", help="power-iteration equidistribution decay")
    common(q, samples=0)
    q.add_argument("--grid", type=int, default=1024)
    q.add_argument("--n", type=int, default=40)
    q.set_defaults(fn=cmd_equidist)

    q = sub.add_parser("renewal", help="renewal estimates against their limits")
    common(q, samples=20000)
    q.add_argument("--kind", default="R", choices=list(renewal.KINDS))
    q.add_argument("--t", type=float, default=None)
    q.add_argument("--b", type=float, default=1.0)
    q.set_defaults(fn=cmd_renewal)

    q = sub.add_parser("fourier", help="empirical Fourier coefficients")
    common(q, samples=10 ** 6)
    q.add_argument("--kmax", type=int, default=256)
    q.set_defaults(fn=cmd_fourier)

    q = sub.add_parser("decomp", help="crossing decomposition identity")
    common(q, samples=20000)
    q.add_argument("--t", type=float, default=None)
    q.set_defaults(fn=cmd_decomp)

    q = sub.add_parser("gammalambda", help="phase approximation comparison")
    common(q, samples=20000)
    q.add_argument("--s", type=float, default=14.0)
    q.add_argument("--t", type=float, default=45.0)
    q.set_defaults(fn=cmd_gammalambda)

    q = sub.add_parser("regularity", help="ball-mass regularity profile")
    common(q, samples=10 ** 6)
    q.add_argument("--centers", type=int, default=256)
    q.set_defaults(fn=cmd_regularity)

    q = sub.add_parser("selftest", help="exact identity suite")
    q.set_defaults(fn=cmd_selftest)

    q = sub.add_parser("report", help="merge artifacts into a JSON summary")
    q.add_argument("csv", nargs="*")
    q.add_argument("--out", help="output file path")
    q.set_defaults(fn=cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, RuntimeError) as e:
        # covers eigen non-convergence, truncation domination, cap overruns
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
