"""Closed-form latency and power estimates for PRIL-M and PRIL-ML.

Packets of a slower flow reach the relay uniformly between two packets of the
fastest flow, so switching the outgoing link off for ``T`` after each fastest
packet delays them by ``T/2`` on average and ``T`` at worst.  PRIL-ML reopens
the link ``r - 1`` extra times per period; each reopening costs at most one
idle-listened slot at the receiver.

Durations are integer microseconds, energies microjoules, powers microwatts,
and every result is an exact ``Fraction``.  Retransmissions are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .pril import t_act

US = 1_000_000


def pril_m_deltas(t_min_us):
    """(mean, worst-case) latency increase in microseconds."""
    t = Fraction(t_min_us)
    return t / 2, t


def pril_ml_deltas(t_min_us, r, slot_duration=20_000):
    if t_min_us == 0:
        return Fraction(0), Fraction(0)
    act = Fraction(t_act(t_min_us, r, slot_duration))
    return act / 2, act


def delta_p(r, e_listen_uj, t_min_us):
    """Upper bound on the PRIL-ML power increase over PRIL-M, in microwatts."""
    if r < 1:
        raise ValueError("r must be >= 1")
    return Fraction(r - 1) * Fraction(e_listen_uj) * US / t_min_us


@dataclass(frozen=True)
class AnalyticPrediction:
    t_min: Fraction  # seconds
    r: int
    pril_m_delta_mean: Fraction  # seconds
    pril_m_delta_max: Fraction
    pril_ml_delta_mean: Fraction
    pril_ml_delta_max: Fraction
    delta_p: Fraction  # microwatts
    pril_m_mean: Fraction  # composed estimates, seconds
    pril_m_max: Fraction
    pril_ml_mean: Fraction
    pril_ml_max: Fraction
    power: Fraction  # microwatts, whole network
    power_listen: Fraction  # microwatts, receiver of the link

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def compose_predictions(tsch_mean, tsch_max, pril_m_power, pril_m_listen, t_min_us, r,
                        e_listen_uj=Fraction("303.3"), slot_duration=20_000):
    """Shift measured baselines by the analytic deltas.

    ``tsch_mean``/``tsch_max`` are the slow flow's plain-TSCH latency (seconds);
    ``pril_m_power`` is the PRIL-M network total and ``pril_m_listen`` the
    PRIL-M idle-listen power of the link's receiver (microwatts).
    """
    m_mean, m_max = pril_m_deltas(t_min_us)
    ml_mean, ml_max = pril_ml_deltas(t_min_us, r, slot_duration)
    dp = delta_p(r, e_listen_uj, t_min_us)
    tsch_mean, tsch_max = Fraction(tsch_mean), Fraction(tsch_max)
    return AnalyticPrediction(
        t_min=Fraction(t_min_us, US),
        r=r,
        pril_m_delta_mean=m_mean / US,
        pril_m_delta_max=m_max / US,
        pril_ml_delta_mean=ml_mean / US,
        pril_ml_delta_max=ml_max / US,
        delta_p=dp,
        pril_m_mean=tsch_mean + m_mean / US,
        pril_m_max=tsch_max + m_max / US,
        pril_ml_mean=tsch_mean + ml_mean / US,
        pril_ml_max=tsch_max + ml_max / US,
        power=Fraction(pril_m_power) + dp,
        power_listen=Fraction(pril_m_listen) + dp,
    )
