"""Flat INI configuration: one section per module, every key typed and documented.

Precedence, lowest first: key defaults, config file, ``key=value`` overrides,
command-line flags. A report written by the CLI carries its resolved keys as
comment lines and can be loaded back as a config file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .errors import ParameterError

CONFIG_MARK = "# prodrand-config"


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(" ", "").split(",") if x)


def _show(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_show(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    parse: Callable[[str], Any]
    default: Any
    help: str

    def show(self, value) -> str:
        return _show(value)


_K = [
    # ensemble
    Key("ensemble", "family", str, "GaussianIID", "GaussianIID | RotatedSpectrum | RankOne | DiagonalBernoulli | HaarVector"),
    Key("ensemble", "n_dim", int, 8, "matrix dimension N >= 1 (>= 2 for nets and the rank-one identity)"),
    Key("ensemble", "sigma", float, 1.0, "GaussianIID scale, sigma > 0"),
    Key("ensemble", "spectrum", str, "uniform", "RotatedSpectrum law on [alpha_lo, alpha_hi]: uniform | point | two_point | table:q0,...,qm"),
    Key("ensemble", "alpha_lo", float, 1.0, "spectrum support lower end, 0 < alpha_lo <= alpha_hi"),
    Key("ensemble", "alpha_hi", float, 2.0, "spectrum support upper end; b = (alpha_hi/alpha_lo)^2"),
    Key("ensemble", "bern_lo", float, 1.0, "DiagonalBernoulli low value a > 0"),
    Key("ensemble", "bern_hi", float, 2.0, "DiagonalBernoulli high value b >= a"),
    Key("ensemble", "prob_hi", float, 0.5, "DiagonalBernoulli probability p of the high value, 0 <= p <= 1"),
    # products
    Key("products", "steps", int, 10, "number of factors n >= 1 (>= 2 for the rank-one identity)"),
    Key("products", "seed", int, 0, "64-bit seed, 0 <= seed < 2^64"),
    Key("products", "mode", str, "vector", "vector (log ||Pi_n v||, v = e1) | operator (log ||Pi_n||)"),
    Key("products", "method", str, "matrix", "vector mode: matrix (form factors) | action (exact-law X v draws)"),
    Key("products", "cap", int, 512, "largest N for exact operator norms"),
    Key("products", "step_logs", _bool, False, "include per-step log stretches in trajectory records"),
    # experiment
    Key("experiment", "N_grid", _ints, (16, 64), "comma-separated dimensions"),
    Key("experiment", "n_grid", _ints, (10, 50), "comma-separated step counts"),
    Key("experiment", "t_grid", _floats, (0.5,), "comma-separated deviation levels t > 0; BoundedSV needs t in (0, 1/4)"),
    Key("experiment", "trials", int, 10**4, "trials per cell; cells with bound < 0.1 need >= 1000"),
    Key("experiment", "master_seed", int, 0, "64-bit master seed, 0 <= seed < 2^64"),
    Key("experiment", "center", str, "", "LogSigma | RunningLogSbar | EstimatedMean (empty: family default)"),
    Key("experiment", "delta", float, 0.1, "deviation level delta in (0, 1) for uniformity and the union bound"),
    Key("experiment", "center_samples", int, 10**6, "stretch samples for the Monte Carlo centre"),
    Key("experiment", "threshold", str, "log", "norm threshold b(N): log | sqrt_log | power:kappa | const:c"),
    Key("experiment", "format", str, "csv", "report format: csv | jsonl"),
    # nets
    Key("nets", "eps", float, 0.25, "angular radius, 0 < eps <= 1/2"),
    Key("nets", "budget", int, 10**6, "greedy candidates for n_dim >= 4"),
    Key("nets", "n_points", int, 10**5, "Haar test points for the coverage check"),
    # oracle
    Key("oracle", "z", float, 0.25, "moment order z > -N/2; MGF argument |z| < N/(16c)"),
    Key("oracle", "alpha", float, 0.1, "Stirling parameter alpha > -1/2"),
    Key("oracle", "values", _floats, (1.0, 2.0, 4.0), "comma-separated spectrum s_1..s_N for vn-moments"),
    Key("oracle", "p_max", int, 6, "highest moment order p_max >= 1"),
    Key("oracle", "exact", _bool, False, "rational arithmetic for vn-moments"),
    Key("oracle", "t", float, 0.25, "deviation t > 0; bounded-SV bound needs t in (0, 1/4), log form t in (0, 1/2)"),
    Key("oracle", "n", int, 10, "number of factors n >= 1"),
    Key("oracle", "B", float, 1.0, "almost-sure bound |s_k| <= B, B > 0"),
    Key("oracle", "b", float, 4.0, "singular-value ratio constant b >= 1"),
    Key("oracle", "c", float, 1.5, "log-deviation constant c > 0 (c = 2 log 2 * b)"),
    Key("oracle", "case", str, "Gaussian", "Gaussian | BoundedSV"),
    Key("oracle", "c_rate", float, 1.0 / 32, "union-bound rate constant c > 0"),
]

KEYS: dict[str, Key] = {k.name: k for k in _K}
SECTIONS = tuple(dict.fromkeys(k.section for k in _K))


def valid_keys() -> list[str]:
    return [f"{k.section}.{k.name}" for k in _K]


def _lookup(name: str, section: str | None = None) -> Key:
    key = KEYS.get(name)
    if key is None or (section is not None and key.section != section):
        where = f"[{section}] " if section else ""
        raise ParameterError(f"unknown key {where}{name!r}; valid keys: {', '.join(valid_keys())}")
    return key


def _typed(key: Key, raw: str):
    try:
        return key.parse(raw)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"bad value for {key.name}: {raw!r} ({exc})") from None


def parse_override(text: str) -> tuple[Key, Any]:
    """``key=value`` or ``section.key=value``."""
    name, sep, raw = text.partition("=")
    if not sep:
        raise ParameterError(f"override {text!r} is not of the form key=value")
    sect, dot, bare = name.strip().rpartition(".")
    key = _lookup(bare, sect if dot else None)
    return key, _typed(key, raw.strip())


def _echo_to_ini(text: str) -> str:
    out = []
    sect = None
    for line in text.splitlines()[1:]:
        if not line.startswith("# "):
            break
        name, _, val = line[2:].partition(" = ")
        s, _, k = name.partition(".")
        if s != sect:
            out.append(f"[{s}]")
            sect = s
        out.append(f"{k} = {val}")
    return "\n".join(out) + "\n"


def read_config(path) -> dict[str, Any]:
    """Typed values from an INI file or from the config echo of a CSV report."""
    text = Path(path).read_text()
    if text.startswith(CONFIG_MARK):
        text = _echo_to_ini(text)
    elif text.lstrip().startswith("{"):
        import json

        head = json.loads(text.splitlines()[0]).get("config", {})
        text = _echo_to_ini(CONFIG_MARK + "\n" + "".join(f"# {k} = {v}\n" for k, v in head.items()))
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParameterError(f"malformed config: {exc}") from None
    values = {}
    for sect in cp.sections():
        if sect not in SECTIONS:
            raise ParameterError(f"unknown section [{sect}]; valid sections: {', '.join(SECTIONS)}")
        for name, raw in cp.items(sect):
            key = _lookup(name, sect)
            values[name] = _typed(key, raw)
    return values


def resolve(names: Iterable[str], file_values: Mapping[str, Any] | None, overrides: Iterable[str], flags: Mapping[str, Any]) -> dict[str, Any]:
    """Merge the layers for the keys a subcommand uses; unused file keys are ignored."""
    names = list(names)
    out = {n: KEYS[n].default for n in names}
    for n, v in (file_values or {}).items():
        if n in out:
            out[n] = v
    for text in overrides:
        key, v = parse_override(text)
        if key.name not in out:
            raise ParameterError(f"key {key.name!r} does not apply here; valid keys: {', '.join(names)}")
        out[key.name] = v
    for n, v in flags.items():
        if v is not None:
            out[n] = v
    return out


def echo(values: Mapping[str, Any]) -> dict[str, str]:
    """``section.key -> text`` for a report header, in registry order."""
    return {f"{KEYS[n].section}.{n}": _show(values[n]) for n in KEYS if n in values}


def write_config(values: Mapping[str, Any], path) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for n in KEYS:
        if n in values:
            s = KEYS[n].section
            if not cp.has_section(s):
                cp.add_section(s)
            cp.set(s, n, _show(values[n]))
    with open(path, "w") as fh:
        cp.write(fh)
