"""Closed-form target states, post-selection, fidelity and the CHSH test."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from pbsent.fock import (
    ModeId,
    Occupation,
    QuantumState,
    normalize,
    overlap,
    photon_numbers,
    project_photon_number,
    total_photon_number_distribution,
)
from pbsent.optics import ARM_A, ARM_B, OUT_A, OUT_B, OUTPUT_REGISTRY, apply_rotation

SQRT2 = math.sqrt(2.0)
TSIRELSON = 2.0 * SQRT2


class TargetKind(str, enum.Enum):
    SINGLET = "singlet"
    PHI = "phi"
    E_N = "e-n"


@dataclass(frozen=True)
class TargetState:
    kind: TargetKind
    realized: QuantumState
    r: float | None = None
    n: int | None = None


def _arm_term(n: int, m: int) -> Occupation:
    # (A:H, A:V, B:H, B:V) = (n-m, m, m, n-m)
    return (n - m, m, m, n - m)


def phi_probability(r: float, n: int) -> float:
    """Probability of ``n`` photons per arm in the normalised infinite |Phi>."""
    x = math.tanh(r) ** 2
    return (n + 1) * x**n * (1.0 - x) ** 2


def phi_truncation_mass(r: float, cutoff: int) -> float:
    return max(0.0, 1.0 - math.fsum(phi_probability(r, n) for n in range(cutoff + 1)))


def make_target(kind: TargetKind | str, *, r: float = 0.0, n: int = 1, cutoff: int | None = None) -> TargetState:
    """Closed-form reference state over the output arms.

    ``phi`` carries ``tanh(r)^n (-1)^m`` on each ``(n, m)`` term for
    ``n <= cutoff``; ``e-n`` is the equal-weight ``(n+1)``-term state; the
    singlet is ``(|H>_A|V>_B - |V>_A|H>_B)/sqrt(2)``.
    """
    kind = TargetKind(kind)
    if kind is TargetKind.SINGLET:
        amps = {(1, 0, 0, 1): 1 / SQRT2, (0, 1, 1, 0): -1 / SQRT2}
        return TargetState(kind, QuantumState(OUTPUT_REGISTRY, amps, cutoff=2), n=1)
    if kind is TargetKind.E_N:
        if n < 0:
            raise ValueError("photon number must be non-negative")
        if cutoff is not None and n > cutoff:
            raise ValueError(f"n={n} exceeds cutoff {cutoff}")
        c = 1.0 / math.sqrt(n + 1)
        amps = {_arm_term(n, m): (-1) ** m * c for m in range(n + 1)}
        return TargetState(kind, QuantumState(OUTPUT_REGISTRY, amps, cutoff=2 * n), n=n)
    if cutoff is None:
        raise ValueError("phi target needs a cutoff")
    t = math.tanh(r)
    amps = {}
    for k in range(cutoff + 1):
        for m in range(k + 1):
            amps[_arm_term(k, m)] = t**k * (-1) ** m
    raw = QuantumState(OUTPUT_REGISTRY, amps, cutoff=2 * cutoff, truncation_mass=phi_truncation_mass(r, cutoff))
    return TargetState(kind, normalize(raw), r=r)


class PostSelection(NamedTuple):
    state: QuantumState | None
    probability: float


def postselect_total(s: QuantumState, modes: Iterable[ModeId], n: int) -> PostSelection:
    """Condition on ``n`` photons in ``modes``; ``state`` is None for an impossible outcome."""
    modes = tuple(modes)
    proj = project_photon_number(s, modes, n)
    prob = proj.norm_squared() / s.norm_squared()
    if prob == 0.0:
        return PostSelection(None, 0.0)
    return PostSelection(normalize(proj), prob)


def _as_state(t: TargetState | QuantumState) -> QuantumState:
    return t.realized if isinstance(t, TargetState) else t


def fidelity(s: QuantumState, t: TargetState | QuantumState) -> float:
    """``|<t|s>|^2`` for normalised inputs (global phase is irrelevant)."""
    t = _as_state(t)
    return abs(overlap(t, s)) ** 2 / (s.norm_squared() * t.norm_squared())


def _lattice_basis(rows: list[list[int]]) -> tuple[list[list[int]], list[list[int]]]:
    """Integer row reduction of ``rows``.

    Returns ``(basis, combos)`` where ``basis`` spans the same integer lattice
    as ``rows`` with independent vectors and ``basis[i] = sum_b combos[i][b] * rows[b]``.
    """
    k = len(rows)
    vecs = [list(r) for r in rows]
    comb = [[int(i == j) for j in range(k)] for i in range(k)]
    pivot = 0
    n_cols = len(rows[0]) if rows else 0
    for col in range(n_cols):
        while True:
            live = [i for i in range(pivot, k) if vecs[i][col] != 0]
            if not live:
                break
            best = min(live, key=lambda i: abs(vecs[i][col]))
            vecs[pivot], vecs[best] = vecs[best], vecs[pivot]
            comb[pivot], comb[best] = comb[best], comb[pivot]
            done = True
            for i in range(pivot + 1, k):
                if vecs[i][col]:
                    q = vecs[i][col] // vecs[pivot][col]
                    vecs[i] = [a - q * b for a, b in zip(vecs[i], vecs[pivot])]
                    comb[i] = [a - q * b for a, b in zip(comb[i], comb[pivot])]
                    if vecs[i][col]:
                        done = False
            if done:
                pivot += 1
                break
    return vecs[:pivot], comb[:pivot]


def fidelity_up_to_local_phases(s: QuantumState, t: TargetState | QuantumState) -> float:
    """Best fidelity over a free phase on every (spatial, polarization) mode.

    A mode phase vector ``phi`` multiplies each basis state by
    ``exp(i phi . occupation)``.  Occupation differences between the shared
    basis states generate an integer lattice; the phase each lattice basis
    vector must carry is an exact integer combination of the observed
    phases, so solving for ``phi`` on that basis aligns every term whenever
    a perfect alignment exists.  Otherwise the result is refined by
    accept-if-better Gauss-Newton steps and stays a lower bound.
    """
    t = _as_state(t)
    if s.registry != t.registry:
        raise ValueError("fidelity requires states on the same mode registry")
    norm = s.norm_squared() * t.norm_squared()
    keys = [k for k in t.amplitudes if k in s.amplitudes]
    if not keys or norm == 0.0:
        return 0.0
    w = np.array([t.amplitudes[k].conjugate() * s.amplitudes[k] for k in keys])
    occ = np.array(keys, dtype=float)
    ref = int(np.argmax(np.abs(w)))
    # heaviest terms first so they define the lattice basis
    order = sorted(range(len(keys)), key=lambda b: (-abs(w[b]), keys[b]))
    order = [b for b in order if b != ref]
    theta = np.angle(w) - np.angle(w[ref])
    phi = np.zeros(occ.shape[1])
    if order:
        rows = [[keys[b][j] - keys[ref][j] for j in range(occ.shape[1])] for b in order]
        basis, combos = _lattice_basis(rows)
        if basis:
            need = np.array([sum(c * theta[b] for c, b in zip(cb, order)) for cb in combos])
            phi = -np.linalg.lstsq(np.array(basis, dtype=float), need, rcond=None)[0]

    def value(p: np.ndarray) -> float:
        return abs(np.sum(w * np.exp(1j * (occ @ p)))) ** 2 / norm

    best = value(phi)
    for _ in range(20):
        z = w * np.exp(1j * (occ @ phi))
        total = z.sum()
        if abs(total) == 0.0:
            break
        resid = np.angle(z * np.conj(total))
        step = -np.linalg.lstsq(occ * np.abs(z)[:, None], resid * np.abs(z), rcond=None)[0]
        trial = value(phi + step)
        if trial <= best + 1e-16:
            break
        phi, best = phi + step, trial
    plain = abs(np.sum(w)) ** 2 / norm
    return float(min(1.0, max(best, plain)))


@dataclass(frozen=True)
class ChshSettings:
    alpha: float
    alpha_prime: float
    beta: float
    beta_prime: float

    @classmethod
    def standard(cls) -> ChshSettings:
        return cls(0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)


def _check_one_photon_per_arm(s: QuantumState, arm_a: Sequence[ModeId], arm_b: Sequence[ModeId]) -> None:
    na = photon_numbers(s, arm_a)
    nb = photon_numbers(s, arm_b)
    if any(na[k] != 1 or nb[k] != 1 for k in s.amplitudes):
        raise ValueError("CHSH evaluation needs exactly one photon in each arm")


def correlation(s: QuantumState, theta_a: float, theta_b: float, arms: tuple[str, str] = (OUT_A, OUT_B)) -> float:
    """``P(same) - P(different)`` for polarization analyzers at the given angles.

    Outcome +1 is the transmitted (H after rotating by ``-theta``) port.
    """
    a, b = arms
    rotated = apply_rotation(apply_rotation(s, a, -theta_a), b, -theta_b)
    reg = rotated.registry
    ia, ib = reg.index(ModeId(a, "H")), reg.index(ModeId(b, "H"))
    e = 0.0
    for k, amp in rotated.items():
        sign = (1 if k[ia] else -1) * (1 if k[ib] else -1)
        e += sign * abs(amp) ** 2
    return e / rotated.norm_squared()


def chsh_value(s: QuantumState, settings: ChshSettings, arms: tuple[str, str] = (OUT_A, OUT_B)) -> float:
    """CHSH combination ``E(a,b) - E(a,b') + E(a',b) + E(a',b')`` on a two-photon state."""
    reg = s.registry
    _check_one_photon_per_arm(s, reg.arm(arms[0]), reg.arm(arms[1]))
    E = lambda x, y: correlation(s, x, y, arms)  # noqa: E731
    st = settings
    return (
        E(st.alpha, st.beta)
        - E(st.alpha, st.beta_prime)
        + E(st.alpha_prime, st.beta)
        + E(st.alpha_prime, st.beta_prime)
    )


def correlation_surface(s: QuantumState, angles: np.ndarray, arms: tuple[str, str] = (OUT_A, OUT_B)) -> np.ndarray:
    reg = s.registry
    _check_one_photon_per_arm(s, reg.arm(arms[0]), reg.arm(arms[1]))
    return np.array([[correlation(s, x, y, arms) for y in angles] for x in angles])


def max_chsh_on_grid(surface: np.ndarray) -> tuple[float, tuple[int, int, int, int]]:
    """Largest ``|S|`` over all index quadruples of a correlation surface.

    Returns the value and the indices ``(alpha, alpha', beta, beta')``.
    """
    best, arg = -1.0, (0, 0, 0, 0)
    n = surface.shape[0]
    for i in range(n):
        # S[j, k, l] for alpha=i, alpha'=j, beta=k, beta'=l
        s = surface[i][None, :, None] - surface[i][None, None, :] + surface[:, :, None] + surface[:, None, :]
        mag = np.abs(s)
        flat = int(np.argmax(mag))
        if mag.flat[flat] > best:
            best = float(mag.flat[flat])
            j, k, l = np.unravel_index(flat, mag.shape)
            arg = (i, int(j), int(k), int(l))
    return best, arg


def rotation_invariance_deviation(n: int, angle: float) -> float:
    """``1 - |<E_n| R(angle) x R(angle) |E_n>|^2``."""
    target = make_target(TargetKind.E_N, n=n).realized
    rotated = apply_rotation(apply_rotation(target, OUT_A, angle), OUT_B, angle)
    return max(0.0, 1.0 - fidelity(rotated, target))


def check_pi4_invariance(n: int) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    return rotation_invariance_deviation(n, math.pi / 4)


def arm_distribution(s: QuantumState, arm: Sequence[ModeId] = ARM_A) -> dict[int, float]:
    return total_photon_number_distribution(s, arm)


__all__ = [
    "ARM_A",
    "ARM_B",
    "ChshSettings",
    "PostSelection",
    "TSIRELSON",
    "TargetKind",
    "TargetState",
    "arm_distribution",
    "check_pi4_invariance",
    "chsh_value",
    "correlation",
    "correlation_surface",
    "fidelity",
    "fidelity_up_to_local_phases",
    "make_target",
    "max_chsh_on_grid",
    "phi_probability",
    "phi_truncation_mass",
    "postselect_total",
    "rotation_invariance_deviation",
]
