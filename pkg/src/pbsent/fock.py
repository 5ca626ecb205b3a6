"""Sparse multimode Fock states over polarization-labelled optical modes.

A :class:`QuantumState` is an immutable map from occupation tuples (one
entry per registered mode) to complex amplitudes.  Every operation returns a
new state; nothing is mutated in place.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

PRUNE_THRESHOLD = 1e-15
NORM_TOL = 1e-12

Occupation = tuple[int, ...]


class Polarization(str, enum.Enum):
    H = "H"
    V = "V"


@dataclass(frozen=True, order=True)
class ModeId:
    spatial: str
    polarization: Polarization

    def __str__(self) -> str:
        return f"{self.spatial}:{self.polarization.value}"


@dataclass(frozen=True)
class ModeRegistry:
    """Fixed total order over the modes a state is defined on."""

    modes: tuple[ModeId, ...]

    def __post_init__(self) -> None:
        if len(set(self.modes)) != len(self.modes):
            raise ValueError(f"duplicate modes in registry: {self.modes}")

    @classmethod
    def from_spatial(cls, labels: Iterable[str]) -> ModeRegistry:
        """Registry with an (H, V) pair for each spatial label, in the given order."""
        return cls(tuple(ModeId(s, p) for s in labels for p in (Polarization.H, Polarization.V)))

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self) -> Iterator[ModeId]:
        return iter(self.modes)

    def __contains__(self, mode: object) -> bool:
        return mode in self.modes

    def index(self, mode: ModeId) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise KeyError(f"mode {mode} not in registry") from None

    def mode(self, spatial: str, polarization: Polarization | str) -> ModeId:
        m = ModeId(spatial, Polarization(polarization))
        self.index(m)
        return m

    @property
    def spatial_labels(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for m in self.modes:
            seen.setdefault(m.spatial, None)
        return tuple(seen)

    def has_spatial(self, label: str) -> bool:
        return any(m.spatial == label for m in self.modes)

    def indices_of(self, modes: Iterable[ModeId]) -> tuple[int, ...]:
        return tuple(self.index(m) for m in modes)

    def arm(self, spatial: str) -> tuple[ModeId, ...]:
        """All registered modes sharing a spatial label."""
        out = tuple(m for m in self.modes if m.spatial == spatial)
        if not out:
            raise KeyError(f"spatial label {spatial!r} not in registry")
        return out


@dataclass(frozen=True)
class QuantumState:
    """Pure state as a sparse amplitude map.

    Attributes:
        registry: the ordered modes each occupation tuple refers to.
        amplitudes: read-only map from occupation tuple to amplitude.
        cutoff: maximum total photon number of any stored basis state.
        truncation_mass: probability carried by the ideal (untruncated)
            state that is not represented here.
    """

    registry: ModeRegistry
    amplitudes: Mapping[Occupation, complex]
    cutoff: int
    truncation_mass: float = 0.0
    _norm_sq: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.cutoff < 0:
            raise ValueError("cutoff must be non-negative")
        n_modes = len(self.registry)
        clean: dict[Occupation, complex] = {}
        for occ, amp in self.amplitudes.items():
            occ = tuple(int(x) for x in occ)
            if len(occ) != n_modes:
                raise ValueError(f"occupation {occ} does not match {n_modes} registered modes")
            if min(occ, default=0) < 0:
                raise ValueError(f"negative occupation in {occ}")
            if sum(occ) > self.cutoff:
                raise ValueError(f"basis state {occ} exceeds cutoff {self.cutoff}")
            amp = complex(amp)
            if abs(amp) >= PRUNE_THRESHOLD:
                clean[occ] = amp
        ordered = {k: clean[k] for k in sorted(clean)}
        object.__setattr__(self, "amplitudes", MappingProxyType(ordered))
        object.__setattr__(self, "_norm_sq", math.fsum(abs(a) ** 2 for a in ordered.values()))

    def __len__(self) -> int:
        return len(self.amplitudes)

    def items(self):
        return self.amplitudes.items()

    def amplitude(self, occ: Sequence[int]) -> complex:
        return self.amplitudes.get(tuple(occ), 0j)

    def norm(self) -> float:
        return math.sqrt(self._norm_sq)

    def norm_squared(self) -> float:
        return self._norm_sq

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self._norm_sq - 1.0) <= tol

    def with_amplitudes(self, amplitudes: Mapping[Occupation, complex], **changes) -> QuantumState:
        kwargs = dict(registry=self.registry, cutoff=self.cutoff, truncation_mass=self.truncation_mass)
        kwargs.update(changes)
        return QuantumState(amplitudes=amplitudes, **kwargs)

    def to_dense(self) -> tuple[list[Occupation], np.ndarray]:
        keys = list(self.amplitudes)
        return keys, np.array([self.amplitudes[k] for k in keys], dtype=complex)

    def __str__(self) -> str:
        terms = [f"({a.real:+.6g}{a.imag:+.6g}j)|{','.join(map(str, k))}>" for k, a in self.items()]
        return " ".join(terms) if terms else "0"


def vacuum(registry: ModeRegistry, cutoff: int = 0) -> QuantumState:
    return QuantumState(registry, {(0,) * len(registry): 1.0}, cutoff)


def basis_state(
    registry: ModeRegistry,
    occupations: Mapping[ModeId, int],
    amplitude: complex = 1.0,
    cutoff: int | None = None,
) -> QuantumState:
    """Single basis state with the given photon counts (unlisted modes empty)."""
    occ = [0] * len(registry)
    for mode, count in occupations.items():
        occ[registry.index(mode)] = count
    total = sum(occ)
    return QuantumState(registry, {tuple(occ): amplitude}, total if cutoff is None else cutoff)


def tensor(s1: QuantumState, s2: QuantumState, cutoff: int | None = None) -> QuantumState:
    """Product state of two states on disjoint modes.

    Basis states whose total photon number exceeds ``cutoff`` (default: the
    sum of both cutoffs) are discarded.  The result is *not* renormalised;
    its norm deficit is exactly the discarded weight, and ``truncation_mass``
    accumulates it together with the inputs' own truncation.
    """
    overlap_modes = set(s1.registry.modes) & set(s2.registry.modes)
    if overlap_modes:
        raise ValueError(f"tensor requires disjoint modes, shared: {sorted(map(str, overlap_modes))}")
    if cutoff is None:
        cutoff = s1.cutoff + s2.cutoff
    registry = ModeRegistry(s1.registry.modes + s2.registry.modes)
    out: dict[Occupation, complex] = {}
    dropped = []
    for k1, a1 in s1.items():
        n1 = sum(k1)
        for k2, a2 in s2.items():
            amp = a1 * a2
            if n1 + sum(k2) > cutoff:
                dropped.append(abs(amp) ** 2)
            else:
                out[k1 + k2] = amp
    full = s1.norm_squared() * s2.norm_squared()
    lost = math.fsum(dropped) / full if full > 0 else 0.0
    kept = (1.0 - s1.truncation_mass) * (1.0 - s2.truncation_mass) * (1.0 - lost)
    return QuantumState(registry, out, cutoff, truncation_mass=max(0.0, 1.0 - kept))


def normalize(s: QuantumState) -> QuantumState:
    nrm = s.norm()
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero state")
    return s.with_amplitudes({k: a / nrm for k, a in s.items()})


def overlap(s1: QuantumState, s2: QuantumState) -> complex:
    """Inner product <s1|s2>."""
    if s1.registry != s2.registry:
        raise ValueError("overlap requires states on the same mode registry")
    small, big = (s1, s2) if len(s1) <= len(s2) else (s2, s1)
    total = 0j
    for k, a in small.items():
        b = big.amplitudes.get(k)
        if b is not None:
            total += a.conjugate() * b if small is s1 else b.conjugate() * a
    return total


def photon_numbers(s: QuantumState, modes: Iterable[ModeId]) -> dict[Occupation, int]:
    idx = s.registry.indices_of(modes)
    return {k: sum(k[i] for i in idx) for k in s.amplitudes}


def total_photon_number_distribution(s: QuantumState, modes: Iterable[ModeId]) -> dict[int, float]:
    """Born distribution of the total photon count over a subset of modes."""
    modes = tuple(modes)
    if not modes:
        raise ValueError("mode subset must be non-empty")
    nrm2 = s.norm_squared()
    if nrm2 == 0.0:
        raise ValueError("distribution of the zero state is undefined")
    acc: dict[int, list[float]] = {}
    for k, n in photon_numbers(s, modes).items():
        acc.setdefault(n, []).append(abs(s.amplitudes[k]) ** 2)
    return {n: math.fsum(v) / nrm2 for n, v in sorted(acc.items())}


def project_photon_number(s: QuantumState, modes: Iterable[ModeId], n: int) -> QuantumState:
    """Unnormalised projection onto total photon number ``n`` in ``modes``."""
    counts = photon_numbers(s, tuple(modes))
    return s.with_amplitudes({k: a for k, a in s.items() if counts[k] == n})


def permute_modes(s: QuantumState, registry: ModeRegistry) -> QuantumState:
    """Same state expressed over a reordering of its registry."""
    if set(registry.modes) != set(s.registry.modes):
        raise ValueError("target registry must contain exactly the same modes")
    perm = [s.registry.index(m) for m in registry.modes]
    return QuantumState(registry, {tuple(k[i] for i in perm): a for k, a in s.items()},
                        s.cutoff, s.truncation_mass)


def drop_empty_modes(s: QuantumState, keep: ModeRegistry) -> QuantumState:
    """Restrict to the modes of ``keep``; every discarded mode must be unoccupied."""
    idx = [s.registry.index(m) for m in keep.modes]
    others = [i for i in range(len(s.registry)) if i not in idx]
    out = {}
    for k, a in s.items():
        if any(k[i] for i in others):
            raise ValueError("cannot drop occupied modes from a pure state")
        out[tuple(k[i] for i in idx)] = a
    return QuantumState(keep, out, s.cutoff, s.truncation_mass)


def relabel_spatial(s: QuantumState, mapping: Mapping[str, str]) -> QuantumState:
    modes = tuple(ModeId(mapping.get(m.spatial, m.spatial), m.polarization) for m in s.registry)
    return QuantumState(ModeRegistry(modes), dict(s.amplitudes), s.cutoff, s.truncation_mass)
