"""Monte Carlo simulation of photon-number-resolving entanglement QKD.

Alice keeps arm A, Bob receives arm B.  Each round both pick H/V or
diagonal analysis independently, count photons at their two detectors, and
keep the round if the bases agree and Alice saw at least one photon.  The
key symbol is Alice's count at her second detector; Bob reads his first
detector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from pbsent.fock import ModeId, QuantumState
from pbsent.optics import (
    ARM_B,
    OUT_A,
    OUT_B,
    SourceParams,
    apply_rotation,
    build_fig2_circuit,
    loss_branches,
)

Counts = tuple[int, int]


class Basis(str, enum.Enum):
    RECTILINEAR = "rectilinear"
    DIAGONAL = "diagonal"

    @property
    def angle(self) -> float:
        return 0.0 if self is Basis.RECTILINEAR else math.pi / 4


BASES = (Basis.RECTILINEAR, Basis.DIAGONAL)


def bits_per_outcome(n: int) -> float:
    """Information in one sifted round with ``n`` photons: ``log2(n + 1)``."""
    if n <= 0:
        raise ValueError("bits_per_outcome needs n >= 1")
    return math.log2(n + 1)


@dataclass(frozen=True)
class RoundRecord:
    alice_basis: Basis
    bob_basis: Basis
    alice_counts: Counts
    bob_counts: Counts
    sifted: bool
    symbol: int | None
    n: int


@dataclass(frozen=True)
class QkdParams:
    r: float
    rounds: int
    seed: int
    cutoff: int = 8
    eta: float = 1.0
    reflection_phase: complex = 1.0

    def validate(self) -> None:
        if not isinstance(self.rounds, int) or self.rounds < 1:
            raise ValueError("rounds must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.cutoff < 1:
            raise ValueError("cutoff must be at least 1")
        if not math.isfinite(self.r):
            raise ValueError("r must be finite")


@dataclass(frozen=True)
class QkdSessionReport:
    rounds: int
    sifted: int
    sift_rate: float
    symbol_errors: int
    symbol_error_rate: float
    erasures: int
    erasure_rate: float
    mean_bits_per_sifted_round: float
    bits_stderr: float
    raw_key_rate: float
    mean_photon_number: float
    photon_histogram: dict[int, int]
    records: tuple[RoundRecord, ...] = field(default=(), repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("records")
        d["photon_histogram"] = {str(k): v for k, v in sorted(self.photon_histogram.items())}
        return d


def round_rng(seed: int, index: int) -> np.random.Generator:
    """Independent substream for one round."""
    return np.random.default_rng([seed, index])


def _split(occ: Sequence[int], reg) -> tuple[Counts, Counts]:
    g = lambda s, p: occ[reg.index(ModeId(s, p))]  # noqa: E731
    return (g(OUT_A, "H"), g(OUT_A, "V")), (g(OUT_B, "H"), g(OUT_B, "V"))


def _rotate(s: QuantumState, bases: tuple[Basis, Basis]) -> QuantumState:
    return apply_rotation(apply_rotation(s, OUT_A, bases[0].angle), OUT_B, bases[1].angle)


class _Sampler:
    """Cumulative Born tables of a fixed state under each basis pair."""

    def __init__(self, s: QuantumState):
        self.tables = {}
        for ba in BASES:
            for bb in BASES:
                rot = _rotate(s, (ba, bb))
                keys = list(rot.amplitudes)
                p = np.array([abs(rot.amplitudes[k]) ** 2 for k in keys])
                self.tables[ba, bb] = (keys, np.cumsum(p) / p.sum(), rot.registry)

    def draw(self, bases: tuple[Basis, Basis], u: float) -> tuple[Counts, Counts]:
        keys, cdf, reg = self.tables[bases]
        i = min(int(np.searchsorted(cdf, u, side="right")), len(keys) - 1)
        return _split(keys[i], reg)


class _LossyChannel:
    """Every loss trajectory of arm B, enumerated once, each with its own sampler."""

    def __init__(self, s: QuantumState, eta: float):
        branches = [(1.0, s)]
        for mode in ARM_B:
            branches = [(p * q, b) for p, st in branches for _, q, b in loss_branches(st, mode, eta)]
        self.cdf = np.cumsum([p for p, _ in branches])
        self.cdf /= self.cdf[-1]
        self.samplers = [_Sampler(b) for _, b in branches]

    def draw(self, bases: tuple[Basis, Basis], rng: np.random.Generator) -> tuple[Counts, Counts]:
        i = min(int(np.searchsorted(self.cdf, rng.random(), side="right")), len(self.samplers) - 1)
        return self.samplers[i].draw(bases, rng.random())


def sample_measurement(
    s: QuantumState, bases: tuple[Basis, Basis], rng: np.random.Generator
) -> tuple[Counts, Counts]:
    """Photon counts (detector 1, detector 2) of each arm after basis rotation."""
    if not s.is_normalized():
        raise ValueError("sample_measurement needs a normalised state")
    bases = (Basis(bases[0]), Basis(bases[1]))
    return _single(s, bases, rng)


def _single(s: QuantumState, bases: tuple[Basis, Basis], rng: np.random.Generator) -> tuple[Counts, Counts]:
    rot = _rotate(s, bases)
    keys = list(rot.amplitudes)
    cdf = np.cumsum([abs(rot.amplitudes[k]) ** 2 for k in keys])
    cdf /= cdf[-1]
    i = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(keys) - 1)
    return _split(keys[i], rot.registry)


def run_session(params: QkdParams, keep_records: bool = True, state: QuantumState | None = None) -> QkdSessionReport:
    """Simulate ``params.rounds`` protocol rounds.

    Each round draws from its own generator seeded by ``(seed, round index)``,
    so the report is a deterministic function of ``params``.  With loss the
    channel (arm B) is sampled as a photon-loss trajectory before Bob's
    analysis; a sifted round where Bob's total differs from Alice's is an
    erasure, not a symbol error.
    """
    params.validate()
    if state is None:
        state = build_fig2_circuit(SourceParams.squeezed(params.r), params.cutoff, params.reflection_phase)
    lossless = params.eta == 1.0
    sampler = _Sampler(state) if lossless else _LossyChannel(state, params.eta)

    records = []
    hist: dict[int, int] = {}
    sifted = errors = erasures = 0
    bits: list[float] = []
    for i in range(params.rounds):
        rng = round_rng(params.seed, i)
        ia, ib = rng.integers(0, 2, size=2)
        bases = (BASES[ia], BASES[ib])
        if lossless:
            alice, bob = sampler.draw(bases, rng.random())
        else:
            alice, bob = sampler.draw(bases, rng)
        n = alice[0] + alice[1]
        hist[n] = hist.get(n, 0) + 1
        keep = bases[0] is bases[1] and n >= 1
        symbol = None
        if keep:
            sifted += 1
            symbol = alice[1]
            if bob[0] + bob[1] != n:
                erasures += 1
            else:
                bits.append(bits_per_outcome(n))
                if bob[0] != symbol:
                    errors += 1
        if keep_records:
            records.append(RoundRecord(bases[0], bases[1], alice, bob, keep, symbol, n))

    rounds = params.rounds
    mean_bits = float(np.mean(bits)) if bits else 0.0
    stderr = float(np.std(bits, ddof=1) / math.sqrt(len(bits))) if len(bits) > 1 else 0.0
    decoded = sifted - erasures
    return QkdSessionReport(
        rounds=rounds,
        sifted=sifted,
        sift_rate=sifted / rounds,
        symbol_errors=errors,
        symbol_error_rate=errors / decoded if decoded else 0.0,
        erasures=erasures,
        erasure_rate=erasures / sifted if sifted else 0.0,
        mean_bits_per_sifted_round=mean_bits,
        bits_stderr=stderr,
        raw_key_rate=math.fsum(bits) / rounds,
        mean_photon_number=sum(n * c for n, c in hist.items()) / rounds,
        photon_histogram=dict(sorted(hist.items())),
        records=tuple(records),
    )
