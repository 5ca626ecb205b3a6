"""Linear-optical elements, pair sources and the two-PBS erasure network.

Conventions:

* A PBS transmits H and reflects V.  Port ``in1`` transmits to ``out1`` and
  reflects to ``out2``; ``in2`` transmits to ``out2`` and reflects to ``out1``.
  Every reflected photon picks up ``reflection_phase``.
* A rotation by ``theta`` maps creation operators as
  ``H -> cos(theta) H + sin(theta) V`` and ``V -> -sin(theta) H + cos(theta) V``.
* Source cutoffs count photon *pairs* (equivalently photons per arm); the
  resulting :class:`~pbsent.fock.QuantumState` has a total-photon cutoff of
  twice that.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Union

import numpy as np

from pbsent.fock import (
    ModeId,
    ModeRegistry,
    Occupation,
    Polarization,
    QuantumState,
    drop_empty_modes,
    normalize,
    tensor,
)

H, V = Polarization.H, Polarization.V

SOURCE_1_A = "source-1-a"
SOURCE_1_B = "source-1-b"
SOURCE_2_A = "source-2-a"
SOURCE_2_B = "source-2-b"
OUT_A = "out-A"
OUT_B = "out-B"
PBS1_DUMP = "pbs-1-out-2"
PBS2_DUMP = "pbs-2-out-2"

OUTPUT_REGISTRY = ModeRegistry.from_spatial((OUT_A, OUT_B))
ARM_A = OUTPUT_REGISTRY.arm(OUT_A)
ARM_B = OUTPUT_REGISTRY.arm(OUT_B)


class SourceKind(str, enum.Enum):
    WEAK_PAIR = "weak-pair"
    SQUEEZED = "squeezed"


class Sign(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


class PolarizationOrder(str, enum.Enum):
    HV = "hv"
    VH = "vh"


@dataclass(frozen=True)
class SourceParams:
    """Parameters shared by both sources of the network.

    ``P`` is the pair amplitude of a weak-pair source, ``r`` the squeezing
    parameter of a squeezed source; only the one matching ``kind`` is used.
    """

    kind: SourceKind
    P: float = 0.0
    r: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.kind is SourceKind.WEAK_PAIR and not 0.0 <= self.P < 1.0:
            raise ValueError(f"weak-pair amplitude must satisfy 0 <= P < 1, got {self.P}")
        if self.kind is SourceKind.SQUEEZED and not math.isfinite(self.r):
            raise ValueError(f"squeezing parameter must be finite, got {self.r}")

    @classmethod
    def weak(cls, P: float) -> SourceParams:
        return cls(SourceKind.WEAK_PAIR, P=P)

    @classmethod
    def squeezed(cls, r: float) -> SourceParams:
        return cls(SourceKind.SQUEEZED, r=r)


def make_weak_pair_source(P: float, sign: Sign | str, modes: tuple[str, str]) -> QuantumState:
    """``sqrt(1-P^2)|00> + P|H>_a|V>_b`` (plus) or ``... - P|V>_a|H>_b`` (minus)."""
    if not 0.0 <= P < 1.0:
        raise ValueError(f"weak-pair amplitude must satisfy 0 <= P < 1, got {P}")
    sign = Sign(sign)
    a, b = modes
    reg = ModeRegistry.from_spatial((a, b))
    occ = [0, 0, 0, 0]
    if sign is Sign.PLUS:
        occ[reg.index(ModeId(a, H))] = occ[reg.index(ModeId(b, V))] = 1
        amp = P
    else:
        occ[reg.index(ModeId(a, V))] = occ[reg.index(ModeId(b, H))] = 1
        amp = -P
    return QuantumState(reg, {(0, 0, 0, 0): math.sqrt(1.0 - P * P), tuple(occ): amp}, cutoff=2)


def squeezed_truncation_mass(r: float, cutoff: int) -> float:
    """Weight of the pairs k > cutoff in a normalised two-mode squeezed vacuum."""
    return math.tanh(r) ** (2 * (cutoff + 1))


def make_squeezed_source(
    r: float,
    order: PolarizationOrder | str,
    modes: tuple[str, str],
    cutoff: int,
) -> QuantumState:
    """Normalised two-mode squeezed vacuum ``sum_k tanh(r)^k |k>|k>`` with k <= cutoff.

    For ``hv`` the k photons in arm ``a`` are H and those in arm ``b`` are V;
    ``vh`` swaps the polarizations.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    order = PolarizationOrder(order)
    a, b = modes
    reg = ModeRegistry.from_spatial((a, b))
    pol_a, pol_b = (H, V) if order is PolarizationOrder.HV else (V, H)
    ia, ib = reg.index(ModeId(a, pol_a)), reg.index(ModeId(b, pol_b))
    t = math.tanh(r)
    amps: dict[Occupation, complex] = {}
    for k in range(cutoff + 1):
        occ = [0, 0, 0, 0]
        occ[ia] = occ[ib] = k
        amps[tuple(occ)] = t**k
    state = QuantumState(reg, amps, cutoff=2 * cutoff, truncation_mass=squeezed_truncation_mass(r, cutoff))
    return normalize(state)


@dataclass(frozen=True)
class Pbs:
    in1: str
    in2: str
    out1: str
    out2: str
    reflection_phase: complex = 1.0
    kind: str = field(default="pbs", init=False)

    def __post_init__(self) -> None:
        if abs(abs(self.reflection_phase) - 1.0) > 1e-12:
            raise ValueError("reflection phase must have unit modulus")


@dataclass(frozen=True)
class Rotation:
    spatial: str
    theta: float
    kind: str = field(default="rotation", init=False)


@dataclass(frozen=True)
class Loss:
    mode: ModeId
    eta: float
    kind: str = field(default="loss", init=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"transmissivity must lie in [0, 1], got {self.eta}")


OpticalElement = Union[Pbs, Rotation, Loss]


def apply_pbs(s: QuantumState, element: Pbs) -> QuantumState:
    reg = s.registry
    for port in (element.in1, element.in2):
        if not reg.has_spatial(port):
            raise ValueError(f"PBS input port {port!r} not in registry")
    if element.in1 == element.in2:
        raise ValueError("PBS input ports must differ")
    image = {
        ModeId(element.in1, H): ModeId(element.out1, H),
        ModeId(element.in2, H): ModeId(element.out2, H),
        ModeId(element.in1, V): ModeId(element.out2, V),
        ModeId(element.in2, V): ModeId(element.out1, V),
    }
    untouched = [m for m in reg if m not in image]
    if set(untouched) & set(image.values()):
        raise ValueError("PBS output ports collide with modes outside the element")
    new_reg = ModeRegistry(tuple(image.get(m, m) for m in reg))
    refl = reg.indices_of((ModeId(element.in1, V), ModeId(element.in2, V)))
    phase = complex(element.reflection_phase)
    if phase == 1:
        out = dict(s.amplitudes)
    else:
        out = {k: a * phase ** sum(k[i] for i in refl) for k, a in s.items()}
    return QuantumState(new_reg, out, s.cutoff, s.truncation_mass)


@lru_cache(maxsize=4096)
def _rotation_column(p: int, q: int, theta: float) -> tuple[float, ...]:
    """Amplitudes on |j, p+q-j> of the rotated |p H, q V> for j = 0..p+q."""
    c, s = math.cos(theta), math.sin(theta)
    total = p + q
    coeff = [0.0] * (total + 1)
    for a in range(p + 1):
        ca = math.comb(p, a) * c**a * s ** (p - a)
        for b in range(q + 1):
            coeff[a + b] += ca * math.comb(q, b) * (-s) ** b * c ** (q - b)
    norm_in = math.sqrt(math.factorial(p) * math.factorial(q))
    return tuple(
        coeff[j] * math.sqrt(math.factorial(j) * math.factorial(total - j)) / norm_in
        for j in range(total + 1)
    )


def apply_rotation(s: QuantumState, spatial: str, theta: float) -> QuantumState:
    """Rotate the linear polarization of one spatial mode by ``theta``."""
    ih = s.registry.index(ModeId(spatial, H))
    iv = s.registry.index(ModeId(spatial, V))
    theta = float(theta)
    if theta == 0.0:
        return s
    out: dict[Occupation, complex] = {}
    for k, a in s.items():
        col = _rotation_column(k[ih], k[iv], theta)
        total = k[ih] + k[iv]
        base = list(k)
        for j, c in enumerate(col):
            if c == 0.0:
                continue
            base[ih], base[iv] = j, total - j
            key = tuple(base)
            out[key] = out.get(key, 0j) + a * c
    return s.with_amplitudes(out)


def loss_branches(s: QuantumState, mode: ModeId, eta: float) -> list[tuple[int, float, QuantumState]]:
    """All trajectories ``(photons lost, probability, normalised branch)`` of a lossy mode."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {eta}")
    i = s.registry.index(mode)
    nrm2 = s.norm_squared()
    branches: dict[int, dict[Occupation, complex]] = {}
    for k, a in s.items():
        n = k[i]
        for lost in range(n + 1):
            w = math.comb(n, lost) * eta ** (n - lost) * (1.0 - eta) ** lost
            if w == 0.0:
                continue
            key = k[:i] + (n - lost,) + k[i + 1 :]
            b = branches.setdefault(lost, {})
            b[key] = b.get(key, 0j) + a * math.sqrt(w)
    out = []
    for lost in sorted(branches):
        st = s.with_amplitudes(branches[lost])
        p = st.norm_squared() / nrm2
        if st.norm_squared() > 0.0:
            out.append((lost, p, normalize(st)))
    return out


def apply_loss(s: QuantumState, mode: ModeId, eta: float, rng: np.random.Generator) -> QuantumState:
    """Sample one loss trajectory: each photon in ``mode`` survives with probability ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {eta}")
    if eta == 1.0:
        return s
    branches = loss_branches(s, mode, eta)
    probs = np.array([p for _, p, _ in branches])
    pick = rng.choice(len(branches), p=probs / probs.sum())
    return branches[pick][2]


@dataclass(frozen=True)
class Circuit:
    elements: tuple[OpticalElement, ...]

    def __add__(self, other: Circuit) -> Circuit:
        return Circuit(self.elements + other.elements)

    def apply(self, s: QuantumState, rng: np.random.Generator | None = None) -> QuantumState:
        for el in self.elements:
            if isinstance(el, Pbs):
                s = apply_pbs(s, el)
            elif isinstance(el, Rotation):
                s = apply_rotation(s, el.spatial, el.theta)
            elif isinstance(el, Loss):
                if rng is None:
                    raise ValueError("loss elements need an explicit rng")
                s = apply_loss(s, el.mode, el.eta, rng)
            else:
                raise TypeError(f"unknown optical element {el!r}")
        return s

    def to_dicts(self) -> list[dict]:
        out = []
        for el in self.elements:
            d = {"kind": el.kind}
            if isinstance(el, Pbs):
                ph = complex(el.reflection_phase)
                d.update(in1=el.in1, in2=el.in2, out1=el.out1, out2=el.out2,
                         reflection_phase=[ph.real, ph.imag])
            elif isinstance(el, Rotation):
                d.update(spatial=el.spatial, theta=el.theta)
            else:
                d.update(spatial=el.mode.spatial, polarization=el.mode.polarization.value, eta=el.eta)
            out.append(d)
        return out

    @classmethod
    def from_dicts(cls, items: Iterable[dict]) -> Circuit:
        els: list[OpticalElement] = []
        for d in items:
            kind = d["kind"]
            if kind == "pbs":
                re, im = d.get("reflection_phase", [1.0, 0.0])
                els.append(Pbs(d["in1"], d["in2"], d["out1"], d["out2"], complex(re, im)))
            elif kind == "rotation":
                els.append(Rotation(d["spatial"], float(d["theta"])))
            elif kind == "loss":
                els.append(Loss(ModeId(d["spatial"], Polarization(d["polarization"])), float(d["eta"])))
            else:
                raise ValueError(f"unknown element kind {kind!r}")
        return cls(tuple(els))


def fig2_circuit(reflection_phase: complex = 1.0) -> Circuit:
    """Both a-beams meet on PBS 1, both b-beams on PBS 2."""
    return Circuit((
        Pbs(SOURCE_1_A, SOURCE_2_A, OUT_A, PBS1_DUMP, reflection_phase),
        Pbs(SOURCE_2_B, SOURCE_1_B, OUT_B, PBS2_DUMP, reflection_phase),
    ))


def make_sources(params: SourceParams, cutoff: int) -> tuple[QuantumState, QuantumState]:
    if params.kind is SourceKind.WEAK_PAIR:
        return (
            make_weak_pair_source(params.P, Sign.PLUS, (SOURCE_1_A, SOURCE_1_B)),
            make_weak_pair_source(params.P, Sign.MINUS, (SOURCE_2_A, SOURCE_2_B)),
        )
    return (
        make_squeezed_source(params.r, PolarizationOrder.HV, (SOURCE_1_A, SOURCE_1_B), cutoff),
        make_squeezed_source(-params.r, PolarizationOrder.VH, (SOURCE_2_A, SOURCE_2_B), cutoff),
    )


def build_fig2_circuit(params: SourceParams, cutoff: int = 8, reflection_phase: complex = 1.0) -> QuantumState:
    """Run both sources through the two-PBS network.

    Args:
        params: source description shared by both sources; source 2 uses the
            opposite sign.
        cutoff: maximum photon number per output arm.
        reflection_phase: phase acquired by each reflected (V) photon.

    Returns:
        Normalised state over ``OUTPUT_REGISTRY``.  Its ``truncation_mass``
        is the weight of the ideal output lost to the cutoff.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    s1, s2 = make_sources(params, cutoff)
    joint = tensor(s1, s2, cutoff=2 * cutoff)
    out = fig2_circuit(reflection_phase).apply(joint)
    return normalize(drop_empty_modes(out, OUTPUT_REGISTRY))
