"""Acceptance criteria, one test (or group) per criterion.

Runs are shared through the ``fig1_runs`` fixture, so the 1-year simulations
are computed once per session.
"""

import os
import random
import time
from dataclasses import replace
from fractions import Fraction

import pytest

from prilsim import metrics
from prilsim.cli import main
from prilsim.engine import run
from prilsim.oracle import oracle_run
from prilsim.scenario import assign_technique, builtin

from conftest import DAY, YEAR
from randomized import random_scenario

S = 1_000_000
FRAME = 101 * 20_000  # one slotframe in microseconds


def _tau1_shift(a, b):
    """(mean shift, max shift) of tau1 from report a to report b, in microseconds."""
    la, lb = a.latency["tau1"], b.latency["tau1"]
    return lb.mean - la.mean, lb.max - la.max


# -- 1 ------------------------------------------------------------------------

REFERENCE_TSCH_LATENCY = (
    "flow,mu,sigma,min,p99,p99_9,p99_99,max,n\n"
    "tau0,1.644,1.300,0.060,5.960,8.360,11.120,18.120,1\n"
    "tau1,1.731,1.413,0.040,6.440,9.500,11.900,17.960,1\n"
    "tau0+tau1,1.652,1.310,0.040,5.980,8.560,11.280,18.120,2\n"
)
REFERENCE_PRIL_M_POWER = (
    "node,P_send,P_rec,P_listen,P\n"
    "N0,0.0,13.8,0.4,14.2\n"
    "N1,19.9,13.7,0.0,33.6\n"
    "N2,18.9,0.0,0.0,18.9\n"
    "N3,1.9,0.0,0.0,1.9\n"
    "All,40.7,27.5,0.4,68.6\n"
)


@pytest.mark.criterion(1, "analytic predictions exact after display rounding")
def test_c1_predict_reproduces_reference_numbers(tmp_path, capsys):
    (tmp_path / "tsch").mkdir()
    (tmp_path / "pril-m").mkdir()
    (tmp_path / "tsch" / "latency.csv").write_text(REFERENCE_TSCH_LATENCY)
    (tmp_path / "pril-m" / "power.csv").write_text(REFERENCE_PRIL_M_POWER)
    t0 = time.perf_counter()
    assert main(["predict", "fig1", "--baselines", str(tmp_path), "--r", "4"]) == 0
    elapsed = time.perf_counter() - t0
    lines = capsys.readouterr().out.splitlines()
    header, row = lines[0].split(","), lines[1].split(",")
    got = dict(zip(header, row))
    assert got["delta_P"] == "15.2"
    assert got["mu_pril_ml"] == "9.231"
    assert got["dmax_pril_ml"] == "32.960"
    assert got["P"] == "83.8"
    assert got["P_listen"] == "15.6"
    assert got["mu_pril_m"] == "31.731"
    assert got["dmax_pril_m"] == "77.960"
    assert elapsed < 1.0


# -- 2 ------------------------------------------------------------------------

@pytest.mark.criterion(2, "PRIL-M idle listening exactly zero at N0 and N1")
def test_c2_idle_listening_eliminated():
    sc = builtin("fig1-pril-m", duration="30d", warmup="10min", loss=0)
    report = run(sc)
    for node in ("N0", "N1"):
        assert report.power.nodes[node].listen == 0
        assert metrics.fmt(report.power.nodes[node].listen, 1) == "0.0"
    assert report.diagnostics["tx_into_off"] == 0


# -- 3 ------------------------------------------------------------------------

@pytest.mark.criterion(3, "PRIL-M mean shift of tau1 within 10% of 30 s, max shift bounded")
def test_c3_pril_m_latency_shift(fig1_runs):
    tsch, m = fig1_runs.get("tsch"), fig1_runs.get("pril-m")
    mean_shift, max_shift = _tau1_shift(tsch, m)
    print(f"PRIL-M tau1 mean shift {float(mean_shift) / S:.3f} s, max shift {max_shift / S:.3f} s")
    assert Fraction(9, 10) * 30 * S <= mean_shift <= Fraction(11, 10) * 30 * S
    assert max_shift <= 60 * S + 2 * FRAME


# -- 4 ------------------------------------------------------------------------

@pytest.mark.criterion(4, "PRIL-ML(r=4) mean shift of tau1 within 15% of 7.5 s, max shift bounded")
def test_c4_pril_ml_latency_shift(fig1_runs):
    tsch, ml = fig1_runs.get("tsch"), fig1_runs.get("pril-ml", 4)
    mean_shift, max_shift = _tau1_shift(tsch, ml)
    print(f"PRIL-ML tau1 mean shift {float(mean_shift) / S:.3f} s, max shift {max_shift / S:.3f} s")
    assert Fraction(85, 100) * Fraction(15, 2) * S <= mean_shift <= Fraction(115, 100) * Fraction(15, 2) * S
    assert max_shift <= 15 * S + 2 * FRAME


def test_c4_builtin_matches_assigned_technique():
    ml = builtin("fig1-pril-ml-r4", duration="1d")
    assert ml == assign_technique(builtin("fig1", duration="1d"), "pril-ml", 4)


# -- 5 ------------------------------------------------------------------------

@pytest.mark.criterion(5, "PRIL-ML power increase positive and within the analytic bound")
@pytest.mark.parametrize("r", [2, 4, 8])
def test_c5_delta_p_upper_bound(fig1_runs, r):
    m, ml = fig1_runs.get("pril-m"), fig1_runs.get("pril-ml", r)
    increase = ml.power.all.total - m.power.all.total
    bound = Fraction(r - 1) * Fraction("303.3") * S / (60 * S) + Fraction(2, 10)
    print(f"r={r}: increase {float(increase):.3f} uW, bound {float(bound):.3f} uW")
    assert 0 < increase <= bound


# -- 6 ------------------------------------------------------------------------

@pytest.mark.criterion(6, "engine byte-identical to the slot-by-slot oracle on 100 random scenarios")
def test_c6_oracle_equivalence():
    mismatches = []
    for case in range(100):
        sc = random_scenario(case)
        a, b = run(sc), oracle_run(sc)
        if (a.power_csv(), a.latency_csv(), a.to_json()) != (b.power_csv(), b.latency_csv(), b.to_json()):
            mismatches.append(case)
    assert mismatches == []


# -- 7 ------------------------------------------------------------------------

@pytest.mark.criterion(7, "PRIL-ML with r=1 byte-identical to PRIL-M")
@pytest.mark.parametrize("seed,loss", [(1, 0), (7, 0), (2024, 0.1), (99991, 0.3)])
def test_c7_r1_degenerates_to_pril_m(seed, loss):
    sc = builtin("fig1", duration="30d", seed=seed, loss=loss)
    m = run(assign_technique(sc, "pril-m"))
    ml = run(assign_technique(sc, "pril-ml", 1))
    assert ml.power_csv() == m.power_csv()
    assert ml.latency_csv() == m.latency_csv()
    assert ml.to_json() == m.to_json()


# -- 8 ------------------------------------------------------------------------

@pytest.mark.criterion(8, "10 simulated years under 5 minutes, identical bytes for equal seeds")
@pytest.mark.slow
def test_c8_decade_runtime_and_determinism(tmp_path):
    outputs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        t0 = time.perf_counter()
        assert main(["run", "fig1", "--duration", "10y", "--seed", "7", "--out", str(out)]) == 0
        elapsed = time.perf_counter() - t0
        print(f"10-year run {i}: {elapsed:.1f} s")
        assert elapsed < 300
        outputs.append({name: (out / name).read_bytes() for name in sorted(os.listdir(out))})
    assert outputs[0] == outputs[1]
    assert set(outputs[0]) == {"power.csv", "latency.csv", "report.json", "scenario.toml"}


# -- 9 ------------------------------------------------------------------------

def _random_samples(rnd):
    n = rnd.randint(1, 3000)
    shape = rnd.choice(["uniform", "heavy", "constant", "few"])
    if shape == "uniform":
        return [rnd.randint(0, 10**8) for _ in range(n)]
    if shape == "heavy":
        return [int(rnd.paretovariate(1.2) * 20_000) for _ in range(n)]
    if shape == "constant":
        return [60_000] * n
    return [rnd.choice([40_000, 60_000, 2_020_000]) for _ in range(n)]


@pytest.mark.criterion(9, "percentile monotonicity, energy conservation, merged-row consistency")
def test_c9_metrics_properties():
    rnd = random.Random(9)
    model = metrics.EnergyModel()
    for _ in range(1000):
        a, b = _random_samples(rnd), _random_samples(rnd)
        sa, sb = metrics.latency_summary(a), metrics.latency_summary(b)
        merged = metrics.latency_summary(a + b)
        for s in (sa, sb, merged):
            assert s.min <= s.p99 <= s.p99_9 <= s.p99_99 <= s.max
            assert s.min <= s.mean <= s.max
        assert merged.n == sa.n + sb.n
        assert merged.mean == (sa.mean * sa.n + sb.mean * sb.n) / (sa.n + sb.n)

        nodes = ["A", "B", "C"]
        account = metrics.EnergyAccount(nodes)
        events = [(rnd.choice(nodes), rnd.choice(list(metrics.Event)), rnd.randint(1, 50), rnd.random() < 0.3)
                  for _ in range(rnd.randint(1, 40))]
        rnd.shuffle(events)
        for node, event, count, cmd in events:
            account.charge(node, event, count, with_command=cmd)
        duration = rnd.randint(1, 10**9)
        report = metrics.power_report(account, model, duration)
        energy = {metrics.Event.SENT: model.e_send, metrics.Event.RECEIVED: model.e_rec,
                  metrics.Event.IDLE_LISTENED: model.e_listen}
        expected = sum(count * energy[event] for _, event, count, _ in events) * S / duration
        assert report.all.total == expected
        for p in report.nodes.values():
            assert p.total == p.send + p.rec + p.listen
