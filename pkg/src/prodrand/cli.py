"""Command-line front end.

Exit status 0 on success, 1 on parameter or validity errors, 2 on I/O errors.
Errors are reported as one JSON line on stderr. Scalar results print as
``key=value`` lines with round-trip float precision.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from typing import Any, Sequence

from . import analytics, config, experiments, nets
from .ensembles import EnsembleSpec, Family, sample
from .errors import ParameterError, ProdrandError
from .products import product_log_opnorm, product_log_vector

ENS = ("family", "n_dim", "sigma", "spectrum", "alpha_lo", "alpha_hi", "bern_lo", "bern_hi", "prob_hi")
REPORT = ("trials", "master_seed", "format")

ORACLES = {
    "gaussian-moment": ("n_dim", "z"),
    "mean-log": ("n_dim", "sigma"),
    "stirling": ("n_dim", "alpha"),
    "vn-moments": ("values", "p_max", "exact"),
    "quadform": ("t", "n_dim", "B"),
    "relative-quadform": ("t", "n_dim", "b"),
    "mgf": ("z", "n_dim", "c"),
    "prop1": ("case", "t", "n", "n_dim", "b"),
    "theorem1": ("delta", "n", "n_dim", "c_rate"),
}

COUNTER = {
    "rank-one": ("n_dim", "steps", "seed"),
    "bernoulli": ("n_dim", "bern_lo", "bern_hi", "prob_hi", "steps", "seed"),
}

COMMANDS = {
    "sample": ENS + ("seed",),
    "lyapunov": ENS + ("steps", "seed", "mode", "method", "cap", "step_logs"),
    "tails": ENS + ("N_grid", "n_grid", "t_grid", "center", "center_samples") + REPORT,
    "uniformity": ENS + ("N_grid", "n_grid", "delta", "center_samples", "cap") + REPORT,
    "nets": ("n_dim", "eps", "seed", "budget", "n_points"),
    "normscan": ENS + ("N_grid", "threshold") + REPORT,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParameterError(f"{self.prog}: {message}")


def _add_keys(p: argparse.ArgumentParser, names: Sequence[str]) -> None:
    p.add_argument("--config", help="INI config file, or a report whose config echo should be replayed")
    p.add_argument("--output", "-o", help="write the result here instead of standard output")
    p.add_argument("overrides", nargs="*", metavar="key=value", help="overrides applied after the config file")
    g = p.add_argument_group("keys")
    for n in names:
        k = config.KEYS[n]
        g.add_argument(
            "--" + n.replace("_", "-"), dest=n, type=k.parse, default=None, metavar=n.upper(),
            help=f"[{k.section}] {k.help} (default: {config._show(k.default)})",
        )


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="prodrand", description="Products of rotationally invariant random matrices.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, names in COMMANDS.items():
        _add_keys(sub.add_parser(cmd, help=f"{cmd} subcommand"), names)
    orc = sub.add_parser("oracles", help="closed forms and bound evaluators").add_subparsers(dest="which", required=True, parser_class=_Parser)
    for name, names in ORACLES.items():
        _add_keys(orc.add_parser(name), names)
    ce = sub.add_parser("counterexamples", help="exact counterexample identities").add_subparsers(dest="which", required=True, parser_class=_Parser)
    for name, names in COUNTER.items():
        _add_keys(ce.add_parser(name), names)
    return ap


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Fraction):
        return str(v)
    if v is None:
        return "none"
    return str(v)


def _kv(pairs) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in pairs)


def _spec(v: dict) -> EnsembleSpec:
    return EnsembleSpec.from_config({k: config._show(v[k]) for k in ENS})


def _records_from_uniformity(spec: EnsembleSpec, rep, delta: float, seed: int):
    out = []
    for r in rep.rows:
        out.append(
            experiments.ExperimentRecord(
                f"{spec.label}:opnorm", spec.family.value, r.N, r.n, delta, r.trials, r.hits,
                r.freq, r.ci_upper, math.inf, "no-bound", seed,
            )
        )
    return out


def _run(args, v: dict) -> tuple[str, str | None]:
    """Return (stdout text, text destined for --output or stdout)."""
    cmd = args.command
    if cmd == "oracles":
        return _oracle(args.which, v), None
    if cmd == "counterexamples":
        if args.which == "rank-one":
            r = experiments.reproduce_rank_one_identity(v["n_dim"], v["steps"], v["seed"])
            return _kv(r._asdict().items()), None
        spec = EnsembleSpec.bernoulli(v["n_dim"], v["bern_lo"], v["bern_hi"], v["prob_hi"])
        r = experiments.reproduce_bernoulli_identity(spec, v["steps"], v["seed"])
        return _kv(r._asdict().items()), None
    if cmd == "sample":
        spec = _spec(v)
        s = sample(spec, v["seed"])
        if spec.family is Family.HAAR_VECTOR:
            rec = {"family": spec.family.value, "n_dim": spec.n_dim, "seed": v["seed"], "vector": s.tolist()}
        else:
            rec = {"family": spec.family.value, "n_dim": spec.n_dim, "seed": v["seed"], "entries": s.entries.tolist()}
            if s.spectrum_summary is not None:
                rec.update(s_bar=s.spectrum_summary.s_bar, s_max=s.spectrum_summary.s_max)
        return "", json.dumps(rec) + "\n"
    if cmd == "lyapunov":
        spec = _spec(v)
        if v["mode"] == "vector":
            tr = product_log_vector(spec, v["steps"], seed=v["seed"], method=v["method"])
        elif v["mode"] == "operator":
            tr = product_log_opnorm(spec, v["steps"], v["seed"], cap=v["cap"])
        else:
            raise ParameterError("mode must be 'vector' or 'operator'")
        return _kv([("lyapunov", tr.cum_log / tr.n_steps)]), json.dumps(tr.to_record(v["step_logs"])) + "\n"
    if cmd == "nets":
        net = nets.build_net(v["n_dim"], v["eps"], v["seed"], v["budget"])
        cap = nets.net_cardinality_bound(v["n_dim"], v["eps"])
        cov = nets.coverage_check(net, v["n_points"], v["seed"])
        pairs = [
            ("n_dim", net.n_dim), ("eps", net.eps), ("cardinality", net.cardinality), ("certified", net.certified),
            ("radius", net.radius), ("cap_log", cap.log_cap), ("cap", cap.cap), ("saturated", cap.saturated),
            ("worst_angle", cov.worst_angle), ("covered", cov.covered),
        ]
        return _kv(pairs), (nets.dumps_net(net) if args.output else None)

    spec = _spec(v)
    echo = config.echo(v)
    if cmd == "tails":
        cfg = experiments.TailExperimentConfig(
            spec, v["N_grid"], v["n_grid"], v["t_grid"], v["trials"], v["master_seed"], v["center"] or None
        )
        recs = experiments.run_tail_experiment(cfg, v["center_samples"])
        return "", experiments.report_text(recs, v["format"], echo)
    if cmd == "uniformity":
        rep = experiments.run_uniformity_check(
            spec, v["delta"], v["n_grid"], v["N_grid"], v["trials"], v["master_seed"], v["center_samples"], v["cap"]
        )
        summary = "".join(
            f"n={s.n} max_freq={_fmt(s.max_freq)} mk_s={_fmt(s.mk_s)} mk_p={_fmt(s.mk_p)} uniform={_fmt(s.uniform)}\n"
            for s in rep.summary
        ) + f"nonincreasing={_fmt(rep.nonincreasing)}\n"
        recs = _records_from_uniformity(spec, rep, v["delta"], v["master_seed"])
        return summary, experiments.report_text(recs, v["format"], echo)
    if cmd == "normscan":
        recs = experiments.run_norm_tail_scan(spec, v["N_grid"], v["threshold"], v["trials"], v["master_seed"])
        return "", experiments.report_text(recs, v["format"], echo)
    raise ParameterError(f"unknown command {cmd!r}")


def _oracle(which: str, v: dict) -> str:
    N = v.get("n_dim")
    if which == "gaussian-moment":
        return _kv([("value", analytics.gaussian_log_moment(N, v["z"])), ("log_value", analytics.log_gaussian_moment(N, v["z"]))])
    if which == "mean-log":
        return _kv([("value", analytics.mean_log_gaussian(N, v["sigma"]))])
    if which == "stirling":
        a = v["alpha"]
        return _kv([
            ("log_value", analytics.stirling_asymptotic(N, a, log=True)),
            ("log_exact", analytics.log_gaussian_moment(N, a * N)),
            ("exponent", analytics.stirling_exponent(a)),
        ])
    if which == "vn-moments":
        ms = analytics.vn_moments(v["values"], v["p_max"], exact=v["exact"])
        return _kv((f"moment_{p}", m) for p, m in enumerate(ms, 1))
    if which == "quadform":
        return _kv([("value", analytics.quadform_tail_bound(v["t"], N, v["B"]))])
    if which == "relative-quadform":
        r = analytics.relative_quadform_bounds(v["t"], N, v["b"])
        return _kv(r._asdict().items())
    if which == "mgf":
        return _kv([("value", analytics.mgf_lemma_bound(v["z"], N, v["c"]))])
    if which == "prop1":
        b = v["b"] if v["case"] == "BoundedSV" else None
        r = analytics.prop1_bound(v["case"], v["t"], v["n"], N, b)
        return _kv([("raw", r.raw), ("value", r.value), ("valid", r.valid), ("note", r.note or "ok")])
    if which == "theorem1":
        return _kv([
            ("value", analytics.theorem1_union_bound(v["delta"], v["n"], N, v["c_rate"])),
            ("min_steps", analytics.theorem1_min_steps(v["delta"], v["c_rate"])),
        ])
    raise ParameterError(f"unknown oracle {which!r}")


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in ("oracles", "counterexamples"):
            names = (ORACLES if args.command == "oracles" else COUNTER)[args.which]
        else:
            names = COMMANDS[args.command]
        file_values = config.read_config(args.config) if args.config else None
        flags = {n: getattr(args, n) for n in names}
        values = config.resolve(names, file_values, args.overrides, flags)
        out, payload = _run(args, values)
        if payload is not None and args.output:
            with open(args.output, "w") as fh:
                fh.write(payload)
        elif payload is not None:
            sys.stdout.write(payload)
        sys.stdout.write(out)
        return 0
    except OSError as exc:
        return _fail(exc, 2)
    except (ProdrandError, ValueError, TypeError) as exc:
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
