"""Command-line entry point: ``prilsim run|predict|compare|sweep|oracle``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from fractions import Fraction

from . import metrics
from .analytic import compose_predictions, delta_p
from .engine import ScenarioError, run as run_engine
from .oracle import oracle_run
from .pril import t_min
from .scenario import assign_technique, load_scenario, multi_hop_links, render, scenario_text

TECHNIQUES = ("tsch", "pril-m", "pril-ml")


class CliError(Exception):
    pass


class OutputSet:
    """Files written atomically (temp file + rename); ``discard`` removes everything written so far."""

    def __init__(self, directory):
        self.directory = directory
        self.written = []

    def write(self, name, text):
        os.makedirs(self.directory, exist_ok=True)
        path = os.path.join(self.directory, name)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
        self.written.append(path)
        return path

    def discard(self):
        for path in self.written:
            try:
                os.remove(path)
            except OSError:
                pass
        self.written = []


def _load(args, technique=None, r=None):
    try:
        text = scenario_text(args.scenario)
    except OSError as e:
        raise CliError(f"cannot read scenario {args.scenario}: {e.strerror}") from None
    sc = load_scenario(text, seed=getattr(args, "seed", None), duration=getattr(args, "duration", None),
                       warmup=getattr(args, "warmup", None), loss=getattr(args, "loss", None))
    technique = technique or getattr(args, "technique", None)
    if r is None and hasattr(args, "technique") and args.r is not None:
        if technique != "pril-ml":
            raise CliError("--r needs --technique pril-ml")
        r = args.r
    if technique:
        sc = assign_technique(sc, technique, 4 if r is None else r)
    return sc


def _write_report(out: OutputSet, sc, report):
    out.write("power.csv", report.power_csv())
    out.write("latency.csv", report.latency_csv())
    out.write("report.json", report.to_json())
    out.write("scenario.toml", render(sc))


def cmd_run(args, engine=run_engine):
    sc = _load(args)
    report = engine(sc)
    if args.out:
        out = OutputSet(args.out)
        try:
            _write_report(out, sc, report)
        except BaseException:
            out.discard()
            raise
    sys.stdout.write(report.power_csv() + "\n" + report.latency_csv())
    return 0


def cmd_oracle(args):
    return cmd_run(args, engine=oracle_run)


def _read(path, reader):
    try:
        with open(path, encoding="utf-8") as fh:
            return reader(fh.read())
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None
    except (KeyError, ValueError) as e:
        raise CliError(f"malformed {path}: {e}") from None


def predictions(sc, baselines, r):
    """Rows of (link, slow flow, AnalyticPrediction) plus the network-wide power estimate.

    ``baselines`` holds ``tsch/latency.csv`` and ``pril-m/power.csv`` from
    earlier runs.  Every link managed by PRIL-M/ML contributes its own ΔP.
    """
    tsch_lat = _read(os.path.join(baselines, "tsch", "latency.csv"), metrics.read_latency_csv)
    m_power = _read(os.path.join(baselines, "pril-m", "power.csv"), metrics.read_power_csv)
    if metrics.ALL not in m_power:
        raise CliError("pril-m/power.csv has no All row")
    links = multi_hop_links(sc)
    extra = {}
    for link in links:
        period, _ = t_min(sc.flows_through(link))
        dp = delta_p(r, sc.energy.e_listen, period)
        extra[link[1]] = extra.get(link[1], 0) + dp
    total_dp = sum(extra.values(), Fraction(0))
    rows = []
    for link in links:
        flows = sc.flows_through(link)
        period, star = t_min(flows)
        listen = m_power.get(link[1], {}).get("P_listen")
        if listen is None:
            raise CliError(f"pril-m/power.csv has no row for {link[1]}")
        for f in flows:
            if f.id == star:
                continue
            lat = tsch_lat.get(f.id)
            if lat is None or lat["mu"] is None:
                raise CliError(f"tsch/latency.csv has no samples for {f.id}")
            p = compose_predictions(lat["mu"], lat["max"], m_power[metrics.ALL]["P"], listen, period, r,
                                    sc.energy.e_listen, sc.frame.slot_duration)
            # several managed links add up; the per-link ΔP stays in delta_p
            p = replace(p, power=m_power[metrics.ALL]["P"] + total_dp,
                        power_listen=listen + extra[link[1]])
            rows.append((link, f.id, p))
    return rows


def _prediction_table(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["link", "flow", "T_min", "r", "mu_pril_m", "dmax_pril_m", "mu_pril_ml", "dmax_pril_ml",
                "delta_P", "P", "P_listen"])
    for link, flow, p in rows:
        w.writerow([f"{link[0]}->{link[1]}", flow, metrics.fmt(p.t_min, 3), p.r,
                    metrics.fmt(p.pril_m_mean, 3), metrics.fmt(p.pril_m_max, 3),
                    metrics.fmt(p.pril_ml_mean, 3), metrics.fmt(p.pril_ml_max, 3),
                    metrics.fmt(p.delta_p, 1), metrics.fmt(p.power, 1), metrics.fmt(p.power_listen, 1)])
    return buf.getvalue()


def _prediction_json(rows):
    doc = []
    for link, flow, p in rows:
        d = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in p.as_dict().items()}
        doc.append({"link": list(link), "flow": flow, **d})
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_predict(args):
    sc = _load(args)
    rows = predictions(sc, args.baselines, args.r or 4)
    table = _prediction_table(rows)
    if args.out:
        out = OutputSet(args.out)
        try:
            out.write("prediction.csv", table)
            out.write("prediction.json", _prediction_json(rows))
        except BaseException:
            out.discard()
            raise
    sys.stdout.write(table)
    return 0


def compare_dirs(a, b):
    """Per-cell differences (b - a) between two run directories' CSVs."""
    lines = [["file", "row", "column", "a", "b", "delta"]]
    for name, reader in (("power.csv", metrics.read_power_csv), ("latency.csv", metrics.read_latency_csv)):
        ra = _read(os.path.join(a, name), reader)
        rb = _read(os.path.join(b, name), reader)
        for row in list(ra) + [k for k in rb if k not in ra]:
            ca, cb = ra.get(row, {}), rb.get(row, {})
            for col in list(ca) + [k for k in cb if k not in ca]:
                va, vb = ca.get(col), cb.get(col)
                delta = "" if va is None or vb is None else vb - va
                lines.append([name, row, col, _plain(va), _plain(vb), _plain(delta)])
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(lines)
    return buf.getvalue()


def _plain(v):
    if v is None or v == "":
        return ""
    if isinstance(v, Fraction):
        return format(metrics.to_decimal(v).normalize(), "f")
    return str(v)


def cmd_compare(args):
    sys.stdout.write(compare_dirs(args.a, args.b))
    return 0


def parse_r_range(text):
    """``"1..8"`` -> [1, ..., 8]; ``"2,4,8"`` -> [2, 4, 8]."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad r range {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"bad r range {text!r}")
    return values


def _sweep_one(job):
    sc, r = job
    report = run_engine(assign_technique(sc, "pril-ml", r))
    return r, report


def _sweep_row(r, report, flows):
    p = report.power.all
    row = [r, metrics.fmt(p.total, 1), metrics.fmt(p.listen, 1)]
    for f in flows:
        s = report.latency[f.id]
        row += ["", ""] if s.empty else [metrics.fmt(metrics.us_to_s(s.mean), 3),
                                         metrics.fmt(metrics.us_to_s(s.max), 3)]
    return row


def cmd_sweep(args):
    sc = _load(args, technique="tsch", r=1)  # techniques are assigned per r below
    jobs = [(sc, r) for r in args.r_values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "P", "P_listen"] + [f"{f.id}_{c}" for f in sc.flows for c in ("mu", "max")])
    for r, report in results:
        w.writerow(_sweep_row(r, report, sc.flows))
    text = buf.getvalue()
    if args.out:
        out = OutputSet(args.out)
        try:
            for r, report in results:
                sub = OutputSet(os.path.join(args.out, f"r{r}"))
                _write_report(sub, assign_technique(sc, "pril-ml", r), report)
                out.written += sub.written
            out.write("sweep.csv", text)
        except BaseException:
            out.discard()
            raise
    sys.stdout.write(text)
    return 0


def _common(p, technique=True):
    p.add_argument("scenario", help="built-in name (fig1, fig1-tsch, fig1-pril-m, fig1-pril-ml-r4) or TOML file")
    if technique:
        p.add_argument("--technique", choices=TECHNIQUES)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", help="e.g. 3600, 30d, 1y")
    p.add_argument("--warmup", help="e.g. 10min")
    p.add_argument("--loss", type=float, help="loss probability per attempt")
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="prilsim", description="TSCH idle-listening reduction simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario")
    _common(p)
    p.add_argument("--r", type=int, help="PRIL-ML window count")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="slot-by-slot reference run (short horizons)")
    _common(p)
    p.add_argument("--r", type=int)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("predict", help="analytic PRIL-M/ML estimates from baseline runs")
    p.add_argument("scenario")
    p.add_argument("--baselines", required=True, help="directory with tsch/ and pril-m/ run outputs")
    p.add_argument("--r", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="per-metric deltas between two run directories")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="PRIL-ML over a range of r, one CSV row per r")
    _common(p, technique=False)
    p.add_argument("--r", dest="r_values", type=parse_r_range, default=parse_r_range("1..8"))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CliError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
