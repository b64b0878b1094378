"""Command-line interface.

Subcommands:

* ``simulate --config FILE [--jobs N] [--out CSV]`` - run an experiment grid.
* ``noise sample|tail --mechanism NAME --params k=v ...`` - draw noise or
  evaluate tail formulas.
* ``account rdp|convert|compose|returning --params k=v ...`` - accounting.
* ``audit --epsilon E --n N --g G [--trust MODEL]`` - brute-force pure-DP audit.

Exit codes: 0 success, 2 config/usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from . import accountant, experiments, noise, protocol
from .errors import ConfigError, DpBanditError
from .rng import RngStream


def _parse_params(pairs: list[str]) -> dict[str, str]:
    out = {}
    for token in pairs:
        if "=" not in token:
            raise ConfigError(f"--params entries must look like key=value, got {token!r}")
        key, value = token.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _need(params: dict[str, str], key: str) -> str:
    if key not in params:
        raise ConfigError(f"missing required parameter {key}=...")
    return params.pop(key)


def _reject_unknown(params: dict[str, str]) -> None:
    if params:
        raise ConfigError(f"unknown parameters: {', '.join(sorted(params))}")


def _cmd_simulate(args) -> int:
    config = experiments.load_config(args.config)
    out = args.out or config.output_path
    if out is None:
        raise ConfigError("no output path: pass --out or set 'out' in the config")
    rows = experiments.run_experiment(config, jobs=args.jobs)
    experiments.write_csv(out, rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _cmd_noise_sample(args) -> int:
    params = _parse_params(args.params)
    rng = RngStream(args.seed)
    count = args.count
    name = args.mechanism
    if name == "polya":
        dist = noise.PolyaParams(float(_need(params, "r")), float(_need(params, "beta")))
        draws = noise.sample_polya(dist, rng, size=count)
    elif name == "discrete_laplace":
        dist = noise.DiscreteLaplaceParams(float(_need(params, "b")))
        draws = noise.sample_discrete_laplace(dist, rng, size=count)
    elif name == "skellam":
        dist = noise.SkellamParams(float(_need(params, "sigma2")))
        draws = noise.sample_skellam(dist, rng, size=count)
    elif name == "discrete_gaussian":
        dist = noise.DiscreteGaussianParams(float(_need(params, "sigma2")))
        draws = noise.sample_discrete_gaussian(dist, rng, size=count)
    else:
        raise ConfigError(f"unknown sampling mechanism {name!r}")
    _reject_unknown(params)
    print(" ".join(str(int(v)) for v in draws))
    return 0


def _cmd_noise_tail(args) -> int:
    params = _parse_params(args.params)
    name = args.mechanism
    if name == "discrete_laplace":
        scale = float(_need(params, "b"))
        m = int(_need(params, "m"))
        _reject_unknown(params)
        print(f"tail: {noise.discrete_laplace_tail(scale, m):.12g}")
    elif name == "skellam":
        sigma = float(_need(params, "sigma"))
        p = float(_need(params, "p"))
        _reject_unknown(params)
        print(f"radius: {noise.skellam_tail_radius(sigma, p):.12g}")
    else:
        raise ConfigError(f"unknown tail mechanism {name!r}")
    return 0


def _print_report(report: accountant.PrivacyReport, machine: bool, orders=(2, 4, 8, 16, 32)):
    rows: list[tuple[str, str]] = []
    if report.pure_eps is not None:
        rows.append(("pure_eps", f"{report.pure_eps:.9g}"))
    if report.cdp_half_eps2 is not None:
        rows.append(("cdp_half_eps2", f"{report.cdp_half_eps2:.9g}"))
    if report.rdp is not None:
        for a in orders:
            if a >= report.rdp.min_order:
                rows.append((f"rdp_alpha_{a}", f"{report.rdp(a):.9g}"))
    if report.approx is not None:
        rows.append(("approx_eps", f"{report.approx[0]:.9g}"))
        rows.append(("approx_delta", f"{report.approx[1]:.9g}"))
    for key, value in rows:
        print(f"{key}={value}" if machine else f"{key}: {value}")


def _cmd_account(args) -> int:
    params = _parse_params(args.params)
    if args.what == "rdp":
        alpha = int(_need(params, "alpha"))
        epsilon = float(_need(params, "epsilon"))
        s = float(_need(params, "s"))
        if "n" in params:
            n = int(params.pop("n"))
            _reject_unknown(params)
            value = accountant.rdp_skellam_batch(alpha, epsilon, s, n)
        else:
            _reject_unknown(params)
            value = accountant.rdp_skellam(alpha, epsilon, s)
        print(f"rdp_eps={value:.9g}" if args.machine else f"rdp_eps: {value:.9g}")
    elif args.what == "convert":
        delta = float(_need(params, "delta"))
        kind = params.pop("curve", "skellam")
        if kind == "skellam":
            curve = accountant.skellam_rdp_curve(
                float(_need(params, "epsilon")), float(_need(params, "s"))
            )
        elif kind == "pure":
            curve = accountant.pure_dp_rdp_curve(float(_need(params, "epsilon")))
        elif kind == "cdp":
            curve = accountant.cdp_rdp_curve(float(_need(params, "epsilon")))
        else:
            raise ConfigError(f"unknown curve kind {kind!r}")
        _reject_unknown(params)
        eps = accountant.rdp_to_approx_dp(curve, delta)
        _print_report(accountant.PrivacyReport(approx=(eps, delta)), args.machine)
    elif args.what == "compose":
        eps = float(_need(params, "epsilon"))
        delta_prime = float(_need(params, "delta_prime"))
        k = int(_need(params, "k"))
        _reject_unknown(params)
        value = accountant.advanced_composition(eps, delta_prime, k)
        print(f"per_mechanism_eps={value:.9g}" if args.machine else f"per_mechanism_eps: {value:.9g}")
    elif args.what == "returning":
        B = int(_need(params, "b"))
        epsilon = float(_need(params, "epsilon"))
        delta = float(_need(params, "delta"))
        _reject_unknown(params)
        approx = accountant.returning_users_variance(B, epsilon, delta, "approxdp")
        rdp = accountant.returning_users_variance(B, epsilon, delta, "rdp")
        sep = "=" if args.machine else ": "
        print(f"variance_approx_dp{sep}{approx:.9g}")
        print(f"variance_rdp{sep}{rdp:.9g}")
        print(f"ratio{sep}{approx / rdp:.9g}")
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown accounting query {args.what!r}")
    return 0


def _cmd_audit(args) -> int:
    trust = protocol.TrustModel(args.trust)
    g = args.g
    tau = max(1, args.n * args.g)  # any >= 1 value; the audit never uses tau
    params = protocol.ProtocolParams(
        trust=trust,
        mechanism=protocol.Mechanism.DISCRETE_LAPLACE_POLYA,
        epsilon=args.epsilon,
        s=1.0,
        n=args.n,
        g=g,
        tau=tau,
        m=args.n * g + 2 * tau + 1,
        p=0.1,
    )
    llr = protocol.audit_llr(params)
    report = accountant.report_privacy(params)
    print(f"max_llr: {llr:.9g}")
    print(f"accountant_pure_eps: {report.pure_eps:.9g}")
    print(f"within_budget: {'yes' if llr <= report.pure_eps + 1e-6 else 'no'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpbandit",
        description="Differentially private bandit simulator and privacy accountant",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment grid from a config file")
    sim.add_argument("--config", required=True)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--out", default=None)
    sim.set_defaults(func=_cmd_simulate)

    noise_p = sub.add_parser("noise", help="noise sampling and tail formulas")
    noise_sub = noise_p.add_subparsers(dest="what", required=True)
    ns = noise_sub.add_parser("sample")
    ns.add_argument("--mechanism", required=True)
    ns.add_argument("--params", nargs="*", default=[])
    ns.add_argument("--count", type=int, default=1)
    ns.add_argument("--seed", type=int, default=0)
    ns.set_defaults(func=_cmd_noise_sample)
    nt = noise_sub.add_parser("tail")
    nt.add_argument("--mechanism", required=True)
    nt.add_argument("--params", nargs="*", default=[])
    nt.set_defaults(func=_cmd_noise_tail)

    acc = sub.add_parser("account", help="privacy accounting queries")
    acc.add_argument("what", choices=["rdp", "convert", "compose", "returning"])
    acc.add_argument("--params", nargs="*", default=[])
    acc.add_argument("--machine", action="store_true", help="key=value output rows")
    acc.set_defaults(func=_cmd_account)

    audit = sub.add_parser("audit", help="brute-force pure-DP audit of a tiny batch")
    audit.add_argument("--epsilon", type=float, required=True)
    audit.add_argument("--n", type=int, required=True)
    audit.add_argument("--g", type=int, required=True)
    audit.add_argument("--trust", choices=["central", "local", "distributed"], default="distributed")
    audit.set_defaults(func=_cmd_audit)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DpBanditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
