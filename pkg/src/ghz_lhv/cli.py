"""Command-line front end.

Every subcommand writes a table (CSV with a header row, or JSON lines) and
ends with a footer echoing the run configuration.  In CSV the footer is a
single ``# {json}`` line; in JSON it is a final ``{"footer": {...}}`` object.
``--workers`` and ``--transport`` are execution options that never change the
output, so they are not echoed.

Exit codes: 0 success, 1 failed invariant, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from . import experiment as ex
from . import lhv_core as lhv
from . import qm_oracle as qm
from . import stations as st
from .lhv_core import PI, Region

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SWEEP_COLUMNS = ("delta", "mc", "quad", "oracle", "stderr", "n")
VERIFY_COLUMNS = ("check", "passed", "value", "tolerance", "detail")
PARADOX_COLUMNS = ("setting", "alpha", "beta", "gamma", "delta", "mean_product", "constant", "oracle")
COMPARE_COLUMNS = ("alpha", "beta", "gamma", "delta", "model", "oracle", "discrepancy")
STATIONS_COLUMNS = ("section", "key", "value")
SAMPLE_COLUMNS = (
    "index", "omega", "eta", "alpha", "beta", "gamma", "phi", "delta", "s_a", "s_b", "s_c", "region",
)

_PI_TERM = re.compile(r"^([+-]?\d*\.?\d*)\s*\*?\s*pi(?:\s*/\s*(\d+\.?\d*))?$")


class UsageError(Exception):
    pass


def parse_angle(text: str, degrees: bool = False) -> float:
    """Parse ``0.5``, ``pi``, ``-pi/2``, ``3pi/4`` or ``3*pi/4``."""
    t = text.strip().lower()
    m = _PI_TERM.match(t)
    if m:
        coef = m.group(1)
        coef = -1.0 if coef == "-" else 1.0 if coef in ("", "+") else float(coef)
        value = coef * PI / (float(m.group(2)) if m.group(2) else 1.0)
        return value
    try:
        value = float(t)
    except ValueError:
        raise UsageError(f"cannot parse angle {text!r}") from None
    if not math.isfinite(value):
        raise UsageError(f"angle must be finite, got {text!r}")
    return math.radians(value) if degrees else value


def parse_angles(text: str, degrees: bool = False) -> list:
    return [parse_angle(p, degrees) for p in text.split(",") if p.strip()]


def parse_grid(text: str, degrees: bool = False) -> list:
    """``N`` -> N points on [-pi, pi); ``a:b:n`` -> linspace; else a list."""
    t = text.strip()
    if re.fullmatch(r"\d+", t):
        n = int(t)
        if n < 1:
            raise UsageError("grid size must be positive")
        return list(-PI + 2 * PI * np.arange(n) / n)
    if t.count(":") == 2:
        a, b, n = t.split(":")
        try:
            count = int(n)
        except ValueError:
            raise UsageError(f"bad grid {text!r}") from None
        return list(np.linspace(parse_angle(a, degrees), parse_angle(b, degrees), count))
    return parse_angles(t, degrees)


@dataclass
class RunConfig:
    subcommand: str
    trials: int
    seed: int
    phi: float
    alpha: list
    beta: list
    gamma: list
    delta_grid: list
    delta: float | None
    method: str
    format: str
    out: str | None
    local: bool
    version: str = __version__

    def echo(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# output


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def render(columns, rows, footer: dict, fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
        buf.write("# " + json.dumps(footer, sort_keys=True, default=_json_value) + "\n")
    else:
        for r in rows:
            buf.write(json.dumps({c: _json_value(r.get(c)) for c in columns}, default=_json_value) + "\n")
        buf.write(json.dumps({"footer": footer}, sort_keys=True, default=_json_value) + "\n")
    return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc


# --------------------------------------------------------------------------
# verify


def _check(rows, name, fn):
    try:
        passed, value, tol, detail = fn()
    except Exception as exc:  # a broken model must surface as a failed check
        passed, value, tol, detail = False, None, None, f"{type(exc).__name__}: {exc}"
    rows.append({"check": name, "passed": bool(passed), "value": value, "tolerance": tol, "detail": detail})


def run_verify(cfg: RunConfig, workers: int = 1) -> list:
    rows = []
    n = cfg.trials
    grid64 = -PI + 2 * PI * np.arange(64) / 64
    grid128 = -PI + 2 * PI * np.arange(128) / 128

    def normalization():
        from .quadrature import integrate_2d

        total = integrate_2d(lambda w, e: np.asarray(lhv.density(w, e)), [-PI, 0, PI], [-PI, PI])
        err = abs(total - 1.0)
        return err < 1e-10, err, 1e-10, ""

    def symmetries():
        w = np.linspace(-PI, PI, 10001)
        gw = np.asarray(lhv.g(w))
        err = max(np.max(np.abs(gw - lhv.g(-w))), np.max(np.abs(gw - lhv.g(w + PI))))
        return err <= 1e-15, float(err), 1e-15, "g(w) = g(-w) = g(w + pi)"

    def jacobian():
        err = max(ex.jacobian_deviation(d) for d in grid64)
        return err < 1e-6, err, 1e-6, "64 deltas"

    def pushforward_ks():
        omega, _ = ex.hidden_stream(cfg.seed, 0, n)
        tol = 2.0 / math.sqrt(n)
        worst = max(ex.ks_distance_to_g(lhv.transform_L(omega, d)) for d in grid64)
        return worst < tol, worst, tol, f"N={n}, 64 deltas"

    def partitions():
        err = 0.0
        for d in np.linspace(0, PI, 33):
            m = ex.partition_measures(d)
            c = math.cos(d)
            for r, v in m.items():
                err = max(err, abs(v - ((1 + c) / 4 if r.correlated else (1 - c) / 4)))
            diff = m[Region.PP] + m[Region.MM] - m[Region.PM] - m[Region.MP]
            err = max(err, abs(diff - c))
        return err < 1e-9, err, 1e-9, "33 deltas in [0, pi]"

    def conditional():
        err = 0.0
        for d in grid128:
            p = ex.conditional_pair_correlations(d)
            c = math.cos(d)
            err = max(err, abs(p.positive - c), abs(p.nonpositive + c), abs(p.whole))
        return err < 1e-9, err, 1e-9, "128 deltas"

    def cos_law():
        err = max(abs(ex.quadrature_triple_correlation(d) - math.cos(d)) for d in grid128)
        return err < 1e-9, err, 1e-9, "128 deltas"

    def exactness():
        bad = 0
        for d, want in ((0.0, 1), (PI, -1)):
            b = ex.run_trials(ex.ScheduleSpec.fixed(d, 0, 0), n, 0.0, cfg.seed, workers)
            bad += int(np.count_nonzero(b.products != want))
        return bad == 0, bad, 0, f"exceptions over 2 x {n} trials"

    def star():
        m = min(n, 10**5)
        bad = sum(int(np.count_nonzero(ex.star_products(d, m, cfg.seed) != 1)) for d in (0, PI / 4, PI / 2, 3 * PI / 4))
        return bad == 0, bad, 0, f"exceptions over 4 x {m} trials"

    _check(rows, "normalization", normalization)
    _check(rows, "g_symmetries", symmetries)
    _check(rows, "measure_preservation_jacobian", jacobian)
    _check(rows, "measure_preservation_ks", pushforward_ks)
    _check(rows, "partition_measures", partitions)
    _check(rows, "conditional_correlations", conditional)
    _check(rows, "triple_cos_law", cos_law)
    _check(rows, "per_trial_exactness", exactness)
    _check(rows, "star_remap", star)

    if cfg.delta is not None:

        def spot():
            d = float(lhv.canonicalize_angle(cfg.delta))
            b = ex.run_trials(ex.ScheduleSpec.fixed(d, 0, 0), n, 0.0, cfg.seed, workers)
            rep = ex.estimate_correlators(b)
            if d in (0.0, -PI):
                want = 1 if d == 0.0 else -1
                ok = bool(np.all(b.products == want))
                return ok, rep.triple, 0.0, "per-trial constant"
            tol = 5 * max(rep.stderr["ABC"], 1 / math.sqrt(n))
            return abs(rep.triple - math.cos(d)) <= tol, rep.triple, tol, f"cos(delta) = {math.cos(d)!r}"

        _check(rows, "spot_check", spot)
    return rows


# --------------------------------------------------------------------------
# other subcommands


def run_sweep(cfg: RunConfig, workers: int = 1):
    rows = []
    worst = 0.0
    for d in cfg.delta_grid:
        d_eff = float(ex.effective_delta(d, 0.0, 0.0, cfg.phi))
        quad = ex.quadrature_triple_correlation(d_eff)
        oracle = qm.triple_correlator(d, 0.0, 0.0, cfg.phi)
        worst = max(worst, abs(quad - math.cos(d_eff)))
        row = {"delta": float(d), "quad": quad, "oracle": oracle}
        if cfg.method == "mc":
            b = ex.run_trials(ex.ScheduleSpec.fixed(d, 0, 0), cfg.trials, cfg.phi, cfg.seed, workers)
            rep = ex.estimate_correlators(b)
            row.update(mc=rep.triple, stderr=rep.stderr["ABC"], n=cfg.trials)
        else:
            row.update(mc=None, stderr=None, n=0)
        rows.append(row)
    return rows, {"max_abs_quad_minus_cos": worst}


def run_paradox(cfg: RunConfig, workers: int = 1):
    rep = ex.ghz_paradox_report(cfg.phi, cfg.trials, cfg.seed, workers)
    rows = [
        {
            "setting": r.name,
            "alpha": r.settings[0],
            "beta": r.settings[1],
            "gamma": r.settings[2],
            "delta": r.delta,
            "mean_product": r.mean_product,
            "constant": r.constant,
            "oracle": r.oracle,
        }
        for r in rep.rows
    ]
    summary = {
        "mermin_model": rep.mermin_model,
        "mermin_oracle": rep.mermin_oracle,
        "classical_bound": 2.0,
        "weak_value_products": [str(complex(p)) for p in rep.weak_products],
        "note": rep.note,
        "mapping_caveat": "settings enter the model only through delta = alpha + beta + gamma + phi",
    }
    return rows, summary


def run_compare(cfg: RunConfig, workers: int = 1):
    grid = [(a, b, c) for a in cfg.alpha for b in cfg.beta for c in cfg.gamma]
    table = ex.compare_with_oracle(grid, cfg.phi, n_joint=cfg.trials, seed=cfg.seed)
    rows = [
        {
            "alpha": r.alpha, "beta": r.beta, "gamma": r.gamma, "delta": r.delta,
            "model": r.model, "oracle": r.oracle, "discrepancy": r.discrepancy,
        }
        for r in table.rows
    ]
    joint = [
        {"settings": list(j.settings), "n_trials": j.n_trials, "tv_distance": j.tv_distance}
        for j in table.joint
    ]
    return rows, {"max_discrepancy": table.max_discrepancy, "joint_distribution": joint}


def run_stations(cfg: RunConfig, transport: str, dump: str | None):
    a, b, c = cfg.alpha[0], cfg.beta[0], cfg.gamma[0]
    if cfg.local:
        settings = st.StationSettings(a, b, c)
    else:
        settings = st.two_chart_settings(float(ex.effective_delta(a, b, c, cfg.phi)))
    run = st.run_distributed(settings, cfg.trials, cfg.seed, transport, dump_path=dump)
    rep = run.report()
    audit = run.audit()
    comp = st.composition_check(a, float(lhv.canonicalize_angle(b + c + cfg.phi)), min(cfg.trials, 10**5), cfg.seed)
    rows = [
        {"section": "settings", "key": "station_A", "value": settings.a},
        {"section": "settings", "key": "station_B", "value": settings.b},
        {"section": "settings", "key": "station_C", "value": settings.c},
        {"section": "settings", "key": "mode", "value": "local" if cfg.local else "two-chart"},
    ]
    names = ("A", "B", "C")
    for k, v in zip(names, rep.singles):
        rows.append({"section": "report", "key": f"single_{k}", "value": v})
    for k, v in zip(("AB", "BC", "CA"), rep.pairs):
        rows.append({"section": "report", "key": f"pair_{k}", "value": v})
    rows.append({"section": "report", "key": "triple", "value": rep.triple})
    rows.append({"section": "report", "key": "triple_stderr", "value": rep.stderr["ABC"]})
    rows.append({"section": "report", "key": "target_cos", "value": math.cos(float(ex.effective_delta(a, b, c, cfg.phi)))})
    rows.append({"section": "audit", "key": "passed", "value": audit.passed})
    rows.append({"section": "audit", "key": "problems", "value": "; ".join(audit.problems)})
    rows.append({"section": "audit", "key": "station_C_ignores_setting", "value": True})
    for key in ("delta1", "delta2", "n_samples", "agree_fraction", "max_deviation",
                "station_triple", "station_stderr", "reference_triple", "target"):
        rows.append({"section": "composition", "key": key, "value": getattr(comp, key)})
    rows.append({"section": "composition", "key": "correlator_gap", "value": comp.correlator_gap})
    return rows, {"audit_passed": audit.passed}, audit.passed


def run_sample(cfg: RunConfig, workers: int = 1):
    b = ex.run_trials(ex.ScheduleSpec.fixed(cfg.alpha[0], cfg.beta[0], cfg.gamma[0]), cfg.trials, cfg.phi, cfg.seed, workers)
    rows = [
        {
            "index": r.index, "omega": r.omega, "eta": r.eta,
            "alpha": r.settings.alpha, "beta": r.settings.beta, "gamma": r.settings.gamma,
            "phi": r.settings.phi, "delta": float(b.delta[r.index]),
            "s_a": r.outcomes[0], "s_b": r.outcomes[1], "s_c": r.outcomes[2],
            "region": r.region.name,
        }
        for r in b.records()
    ]
    return rows, {}


# --------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--trials", type=int, default=10**6, help="Monte Carlo trials (default 1e6)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--phi", default="0", help="state phase")
    common.add_argument("--alpha", default=None, help="angle or comma list")
    common.add_argument("--beta", default=None)
    common.add_argument("--gamma", default=None)
    common.add_argument("--delta-grid", default="128", help="N, a:b:n, or comma list")
    common.add_argument("--delta", default=None, help="verify: extra spot check at this delta")
    common.add_argument("--method", choices=("mc", "quadrature"), default="mc")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--transport", choices=st.TRANSPORTS, default="channels")
    common.add_argument("--dump-traffic", default=None, help="stations: write raw frames here")
    common.add_argument("--local", action="store_true", help="stations: each station gets only its own angle")
    common.add_argument("--degrees", action="store_true", help="angles in degrees")
    common.add_argument("--workers", type=int, default=1)

    p = argparse.ArgumentParser(prog="ghz-lhv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    sub.add_parser("sweep", parents=[common], help="triple correlator over a delta grid")
    sub.add_parser("paradox", parents=[common], help="GHZ identities and Mermin value")
    sub.add_parser("compare", parents=[common], help="model vs Born-rule oracle")
    sub.add_parser("stations", parents=[common], help="distributed run with locality audit")
    sub.add_parser("sample", parents=[common], help="raw trial records")
    return p


_DEFAULT_ANGLES = {
    "compare": [float(x) for x in -PI + 2 * PI * np.arange(5) / 5],
}


def make_config(ns) -> RunConfig:
    deg = ns.degrees
    if ns.trials < 1:
        raise UsageError("--trials must be >= 1")
    if not 0 <= ns.seed < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    default = _DEFAULT_ANGLES.get(ns.subcommand, [0.0])

    def angles(text):
        return default if text is None else parse_angles(text, deg)

    alpha, beta, gamma = angles(ns.alpha), angles(ns.beta), angles(ns.gamma)
    if ns.subcommand != "compare" and max(len(alpha), len(beta), len(gamma)) > 1:
        raise UsageError("angle lists are only accepted by 'compare'")
    if not (alpha and beta and gamma):
        raise UsageError("empty angle list")
    return RunConfig(
        subcommand=ns.subcommand,
        trials=ns.trials,
        seed=ns.seed,
        phi=parse_angle(ns.phi, deg),
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        delta_grid=[float(x) for x in parse_grid(ns.delta_grid, deg)] if ns.subcommand == "sweep" else [],
        delta=None if ns.delta is None else parse_angle(ns.delta, deg),
        method=ns.method,
        format=ns.format,
        out=ns.out,
        local=ns.local,
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = make_config(ns)
        status = EXIT_OK
        if cfg.subcommand == "verify":
            rows = run_verify(cfg, ns.workers)
            extra = {"all_passed": all(r["passed"] for r in rows)}
            columns = VERIFY_COLUMNS
            status = EXIT_OK if extra["all_passed"] else EXIT_FAIL
        elif cfg.subcommand == "sweep":
            rows, extra = run_sweep(cfg, ns.workers)
            columns = SWEEP_COLUMNS
        elif cfg.subcommand == "paradox":
            rows, extra = run_paradox(cfg, ns.workers)
            columns = PARADOX_COLUMNS
        elif cfg.subcommand == "compare":
            rows, extra = run_compare(cfg, ns.workers)
            columns = COMPARE_COLUMNS
        elif cfg.subcommand == "stations":
            rows, extra, ok = run_stations(cfg, ns.transport, ns.dump_traffic)
            columns = STATIONS_COLUMNS
            status = EXIT_OK if ok else EXIT_FAIL
        else:
            rows, extra = run_sample(cfg, ns.workers)
            columns = SAMPLE_COLUMNS
        footer = {"config": cfg.echo(), **extra}
        emit(render(columns, rows, footer, cfg.format), cfg.out)
        return status
    except UsageError as exc:
        print(f"ghz-lhv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except st.TransportError as exc:
        print(f"ghz-lhv: transport failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
