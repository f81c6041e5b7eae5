"""Scenario documents (TOML): parsing, validation, rendering, built-ins.

Every problem in a document is collected before anything is reported, so a
single load shows all typos and dangling references at once.
"""

from __future__ import annotations

import re
import sys
from dataclasses import replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .engine import Node, Scenario, ScenarioError, first_hop_flow, scenario_problems
from .mac import ChannelModel, MacConfig
from .metrics import EnergyModel
from .pril import PrilConfig, Technique
from .schedule import DEFAULT_HOP_SEQUENCE, Cell, Slotframe
from .traffic import PPB, Flow, asynchronous_defaults

US = 1_000_000
_UNITS = {"us": 1, "ms": 1_000, "s": US, "min": 60 * US, "h": 3600 * US,
          "d": 86400 * US, "y": 365 * 86400 * US}
_DURATION_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]*)?|\.[0-9]+)\s*(us|ms|s|min|h|d|y)?\s*$")

SECTIONS = {
    "slotframe": {"num_slots", "slot_duration_us", "channel_offsets", "hop_sequence"},
    "nodes": {"id", "parent"},
    "cells": {"slot", "choffset", "from", "to"},
    "flows": {"id", "source", "path", "period_s", "drift_ppm", "phase_s", "payload_size"},
    "pril": {"link", "technique", "r"},
    "channel": {"loss_probability", "per_channel"},
    "energy": {"e_send_uj", "e_rec_uj", "e_listen_uj", "e_send_cmd_uj", "e_rec_cmd_uj"},
    "mac": {"retry_limit", "queue_capacity"},
    "run": {"duration_s", "seed", "warmup_s"},
}
REQUIRED = ("slotframe", "nodes", "cells", "flows", "run")
TABLE_ARRAYS = ("nodes", "cells", "flows", "pril")


def parse_duration(value) -> int:
    """Seconds (number) or a string with a unit suffix (us/ms/s/min/h/d/y) -> microseconds.

    ``y`` is exactly 365 days; results are rounded half-up to the microsecond.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a duration: {value!r}")
    if isinstance(value, (int, Decimal, float)):
        amount, unit = Decimal(str(value)), US
    elif isinstance(value, str):
        m = _DURATION_RE.match(value)
        if not m:
            raise ValueError(f"not a duration: {value!r}")
        amount, unit = Decimal(m.group(1)), _UNITS[m.group(2) or "s"]
    else:
        raise ValueError(f"not a duration: {value!r}")
    if amount < 0:
        raise ValueError(f"negative duration: {value!r}")
    return int((amount * unit).to_integral_value(rounding=ROUND_HALF_UP))


def _seconds(us) -> Decimal:
    d = (Decimal(us) / US).normalize()
    return Decimal(format(d, "f"))


def _decimal(x) -> Decimal:
    f = Fraction(x)
    d = Decimal(f.numerator) / Decimal(f.denominator)
    return Decimal(format(d.normalize(), "f"))


def _line_of(text, key):
    if not text:
        return None
    pat = re.compile(rf"^\s*(\[\[?\s*{re.escape(key)}\s*\]\]?|{re.escape(key)}\s*=)")
    for n, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return n
    return None


class _Collector:
    def __init__(self, text):
        self.text = text
        self.problems = []

    def add(self, where, msg, key=None):
        line = _line_of(self.text, key) if key else None
        loc = f"{where} (line {line})" if line else where
        self.problems.append(f"{loc}: {msg}")

    def get(self, table, key, where, conv, default=None, required=False):
        if key not in table:
            if required:
                self.add(where, f"missing required key '{key}'")
            return default
        try:
            return conv(table[key])
        except (ValueError, TypeError, ArithmeticError) as e:
            self.add(where, f"{key}: {e}", key)
            return default


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _str(v):
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _prob(v):
    if isinstance(v, bool) or not isinstance(v, (int, float, Decimal)):
        raise ValueError(f"expected a probability, got {v!r}")
    p = float(v)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {v} outside [0, 1]")
    return p


def _energy(v):
    if isinstance(v, bool) or not isinstance(v, (int, float, Decimal)):
        raise ValueError(f"expected a number, got {v!r}")
    e = Fraction(str(v))
    if e < 0:
        raise ValueError("energy must be >= 0")
    return e


def _ppb(v):
    if isinstance(v, bool) or not isinstance(v, (int, float, Decimal)):
        raise ValueError(f"expected a number, got {v!r}")
    return int((Decimal(str(v)) * 1000).to_integral_value(rounding=ROUND_HALF_UP))


def scenario_from_doc(doc: dict, text: str | None = None) -> Scenario:
    """Build and validate a Scenario from a parsed document; raises ScenarioError."""
    col = _Collector(text)
    for key in doc:
        if key not in SECTIONS:
            col.add("document", f"unknown section '{key}'", key)
    for name in REQUIRED:
        if name not in doc:
            col.add("document", f"missing required section [{name}]")

    def table(name):
        t = doc.get(name, [] if name in TABLE_ARRAYS else {})
        if name in TABLE_ARRAYS:
            if not isinstance(t, list) or not all(isinstance(x, dict) for x in t):
                col.add(name, "expected an array of tables", name)
                return []
            rows = t
        else:
            if not isinstance(t, dict):
                col.add(name, "expected a table", name)
                return {}
            rows = [t]
        for i, row in enumerate(rows):
            for k in row:
                if k not in SECTIONS[name]:
                    where = f"{name}[{i}]" if name in TABLE_ARRAYS else f"[{name}]"
                    col.add(where, f"unknown key '{k}'", k)
        return t

    # slotframe
    sf = table("slotframe")
    frame = None
    try:
        frame = Slotframe(
            num_slots=col.get(sf, "num_slots", "[slotframe]", _int, 101),
            slot_duration=col.get(sf, "slot_duration_us", "[slotframe]", _int, 20_000),
            num_channel_offsets=col.get(sf, "channel_offsets", "[slotframe]", _int, 16),
            hop_sequence=tuple(col.get(sf, "hop_sequence", "[slotframe]",
                                       lambda v: [_int(x) for x in v], DEFAULT_HOP_SEQUENCE)),
        )
    except ValueError as e:
        col.add("[slotframe]", str(e))

    # run
    rn = table("run")
    seed = col.get(rn, "seed", "[run]", _int, 1)
    if seed is not None and not 0 <= seed < 2**64:
        col.add("[run]", "seed must fit in 64 unsigned bits", "seed")
    duration = col.get(rn, "duration_s", "[run]", parse_duration, 0, required="run" in doc)
    warmup = col.get(rn, "warmup_s", "[run]", parse_duration, 0)

    nodes = []
    for i, row in enumerate(table("nodes")):
        nid = col.get(row, "id", f"nodes[{i}]", _str, required=True)
        parent = col.get(row, "parent", f"nodes[{i}]", _str)
        if nid is not None:
            nodes.append(Node(nid, parent))

    cells = []
    for i, row in enumerate(table("cells")):
        where = f"cells[{i}]"
        slot = col.get(row, "slot", where, _int, required=True)
        ch = col.get(row, "choffset", where, _int, 0)
        a = col.get(row, "from", where, _str, required=True)
        b = col.get(row, "to", where, _str, required=True)
        if None not in (slot, ch, a, b):
            cells.append(Cell(slot, ch, (a, b)))

    flows = []
    for i, row in enumerate(table("flows")):
        where = f"flows[{i}]"
        fid = col.get(row, "id", where, _str, required=True)
        path = col.get(row, "path", where, lambda v: tuple(_str(x) for x in v), required=True)
        source = col.get(row, "source", where, _str)
        period = col.get(row, "period_s", where, parse_duration, required=True)
        payload = col.get(row, "payload_size", where, _int, 127)
        if path is not None and source is not None and path and source != path[0]:
            col.add(where, f"source {source} is not the first node of the path", "source")
        if None in (fid, path, period) or period <= 0:
            if period is not None and period <= 0:
                col.add(where, "period_s must be positive", "period_s")
            continue
        drift, phase = asynchronous_defaults(seed or 0, i, period)
        drift = col.get(row, "drift_ppm", where, _ppb, drift)
        phase = col.get(row, "phase_s", where, parse_duration, phase)
        try:
            flows.append(Flow(fid, path, period, drift, phase, payload))
        except ValueError as e:
            col.add(where, str(e).replace(f"flow {fid}: ", ""), "path")

    pril = {}
    for i, row in enumerate(table("pril")):
        where = f"pril[{i}]"
        link = col.get(row, "link", where, lambda v: tuple(_str(x) for x in v), required=True)
        tech = col.get(row, "technique", where, Technique, required=True)
        r = col.get(row, "r", where, _int, 4 if tech is Technique.PRIL_ML else 1)
        if link is None or tech is None or r is None:
            continue
        if len(link) != 2:
            col.add(where, "link must be [transmitter, receiver]", "link")
            continue
        if link in pril:
            col.add(where, f"duplicate entry for link {link[0]}->{link[1]}", "link")
        try:
            pril[link] = PrilConfig(tech, r)
        except ValueError as e:
            col.add(where, str(e), "r")

    chn = table("channel")
    loss = col.get(chn, "loss_probability", "[channel]", _prob, 0.0)
    per_channel = col.get(chn, "per_channel", "[channel]",
                          lambda t: {int(k): _prob(v) for k, v in t.items()}, {})

    en = table("energy")
    energy = EnergyModel(
        e_send=col.get(en, "e_send_uj", "[energy]", _energy, Fraction("485.7")),
        e_rec=col.get(en, "e_rec_uj", "[energy]", _energy, Fraction("651.0")),
        e_listen=col.get(en, "e_listen_uj", "[energy]", _energy, Fraction("303.3")),
        e_send_cmd=col.get(en, "e_send_cmd_uj", "[energy]", _energy),
        e_rec_cmd=col.get(en, "e_rec_cmd_uj", "[energy]", _energy),
    )

    mc = table("mac")
    mac = None
    try:
        mac = MacConfig(col.get(mc, "retry_limit", "[mac]", _int),
                        col.get(mc, "queue_capacity", "[mac]", _int))
    except ValueError as e:
        col.add("[mac]", str(e))

    if frame is None or mac is None:
        raise ScenarioError(col.problems or ["invalid scenario"])
    try:
        channel = ChannelModel(loss, per_channel)
    except ValueError as e:
        col.add("[channel]", str(e))
        channel = ChannelModel(0.0)

    # cross-reference checks still run when some values were rejected above
    sc = Scenario(frame, tuple(nodes), tuple(cells), tuple(flows), pril,
                  channel, energy, 0 if duration is None else duration, seed or 0, warmup or 0, mac)
    problems = col.problems + [p for p in scenario_problems(sc) if p not in col.problems]
    if problems:
        raise ScenarioError(problems)
    return sc


def parse_document(text: str) -> dict:
    try:
        return tomllib.loads(text, parse_float=Decimal)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError([f"syntax: {e}"]) from None


def load_scenario(text: str, *, seed=None, duration=None, warmup=None, loss=None) -> Scenario:
    """Parse and validate ``text``; keyword overrides replace [run]/[channel] values.

    A seed override is applied before defaults are drawn, so unspecified drift
    and phase follow the new seed.
    """
    doc = parse_document(text)
    overrides = {k: v for k, v in (("seed", seed), ("duration_s", duration), ("warmup_s", warmup)) if v is not None}
    if overrides and isinstance(doc.get("run", {}), dict):
        doc.setdefault("run", {}).update(overrides)
    if loss is not None and isinstance(doc.get("channel", {}), dict):
        doc.setdefault("channel", {})["loss_probability"] = Decimal(str(loss))
    return scenario_from_doc(doc, text)


def to_doc(sc: Scenario) -> dict:
    doc = {
        "slotframe": {
            "num_slots": sc.frame.num_slots,
            "slot_duration_us": sc.frame.slot_duration,
            "channel_offsets": sc.frame.num_channel_offsets,
            "hop_sequence": list(sc.frame.hop_sequence),
        },
        "nodes": [{"id": n.id, **({"parent": n.parent} if n.parent is not None else {})}
                  for n in sc.nodes],
        "cells": [{"slot": c.slot_offset, "choffset": c.channel_offset, "from": c.link[0], "to": c.link[1]}
                  for c in sc.cells],
        "flows": [{"id": f.id, "source": f.source, "path": list(f.path),
                   "period_s": _seconds(f.nominal_period),
                   "drift_ppm": Decimal(f.drift_ppb) / 1000, "phase_s": _seconds(f.phase),
                   "payload_size": f.payload_size} for f in sc.flows],
        "channel": {"loss_probability": sc.channel.loss_probability},
        "energy": {"e_send_uj": _decimal(sc.energy.e_send), "e_rec_uj": _decimal(sc.energy.e_rec),
                   "e_listen_uj": _decimal(sc.energy.e_listen)},
        "run": {"duration_s": _seconds(sc.duration), "seed": sc.seed, "warmup_s": _seconds(sc.warmup)},
    }
    if sc.pril:
        doc["pril"] = [{"link": list(link), "technique": cfg.technique.value, "r": cfg.r}
                       for link, cfg in sc.pril.items()]
    if sc.channel.per_channel:
        doc["channel"]["per_channel"] = {str(k): v for k, v in sorted(sc.channel.per_channel.items())}
    for key, v in (("e_send_cmd_uj", sc.energy.e_send_cmd), ("e_rec_cmd_uj", sc.energy.e_rec_cmd)):
        if v is not None:
            doc["energy"][key] = _decimal(v)
    mac = {k: v for k, v in (("retry_limit", sc.mac.retry_limit),
                             ("queue_capacity", sc.mac.queue_capacity)) if v is not None}
    if mac:
        doc["mac"] = mac
    return doc


def render(sc: Scenario) -> str:
    return tomli_w.dumps(to_doc(sc))


def assign_technique(sc: Scenario, technique: str, r: int = 4) -> Scenario:
    """Scenario with every trafficked link set for ``technique`` (tsch | pril-m | pril-ml).

    Sole-flow first hops get PRIL-F; every other trafficked link gets PRIL-M or
    PRIL-ML.
    """
    technique = technique.lower()
    if technique not in ("tsch", "pril-m", "pril-ml"):
        raise ValueError(f"unknown technique {technique!r}")
    pril = {}
    if technique != "tsch":
        for link in dict.fromkeys(c.link for c in sc.cells):
            if not sc.flows_through(link):
                continue
            if first_hop_flow(sc, link) is not None:
                pril[link] = PrilConfig(Technique.PRIL_F)
            elif technique == "pril-m":
                pril[link] = PrilConfig(Technique.PRIL_M)
            else:
                pril[link] = PrilConfig(Technique.PRIL_ML, r)
    return replace(sc, pril=pril)


def multi_hop_links(sc: Scenario):
    """Trafficked links that PRIL-M/ML would manage (i.e. not sole-flow first hops)."""
    return [link for link in dict.fromkeys(c.link for c in sc.cells)
            if sc.flows_through(link) and first_hop_flow(sc, link) is None]


_FIG1 = """\
# Four nodes in two layers: N2 and N3 are leaves, N1 relays to the root N0.
[slotframe]
num_slots = 101
slot_duration_us = 20000
channel_offsets = 16
hop_sequence = [11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26]

[[nodes]]
id = "N0"

[[nodes]]
id = "N1"
parent = "N0"

[[nodes]]
id = "N2"
parent = "N1"

[[nodes]]
id = "N3"
parent = "N1"

[[cells]]
slot = 0
choffset = 0
from = "N2"
to = "N1"

[[cells]]
slot = 1
choffset = 0
from = "N3"
to = "N1"

[[cells]]
slot = 2
choffset = 0
from = "N1"
to = "N0"

[[flows]]
id = "tau0"
source = "N2"
path = ["N2", "N1", "N0"]
period_s = 60

[[flows]]
id = "tau1"
source = "N3"
path = ["N3", "N1", "N0"]
period_s = 600
{pril}
[channel]
loss_probability = 0.0

[energy]
e_send_uj = 485.7
e_rec_uj = 651.0
e_listen_uj = 303.3

[run]
duration_s = "10y"
seed = 7
"""

_FIRST_HOPS = """
[[pril]]
link = ["N2", "N1"]
technique = "pril-f"

[[pril]]
link = ["N3", "N1"]
technique = "pril-f"
"""

BUILTINS = {
    "fig1-tsch": _FIG1.format(pril=""),
    "fig1-pril-m": _FIG1.format(pril=_FIRST_HOPS + """
[[pril]]
link = ["N1", "N0"]
technique = "pril-m"
"""),
    "fig1-pril-ml-r4": _FIG1.format(pril=_FIRST_HOPS + """
[[pril]]
link = ["N1", "N0"]
technique = "pril-ml"
r = 4
"""),
}
BUILTINS["fig1"] = BUILTINS["fig1-tsch"]


def scenario_text(name_or_path: str) -> str:
    """Text of a built-in scenario, or of the file at ``name_or_path``."""
    if name_or_path in BUILTINS:
        return BUILTINS[name_or_path]
    with open(name_or_path, encoding="utf-8") as fh:
        return fh.read()


def builtin(name: str, **overrides) -> Scenario:
    return load_scenario(BUILTINS[name], **overrides)


# re-exported for callers that only import this module
__all__ = ["BUILTINS", "PPB", "ScenarioError", "assign_technique", "builtin", "load_scenario",
           "multi_hop_links", "parse_document", "parse_duration", "render", "scenario_from_doc",
           "scenario_text", "to_doc"]
