"""Sparse labeled-basis state container for the QRAM machine.

One basis label describes a full classical configuration of the machine:
router-node orientations, address register bits, the flying photon (where
its optical mode sits and how many quanta it carries), and the contents of
every memory cell.  A state is a map from such labels to complex amplitudes,
so a product-of-branches state costs O(number of branches) terms instead of
the full node Hilbert space of dimension 2^(2^n - 1).

Every unitary used by the routing and cell protocols is a permutation-with-
phase on labels.  They are all funneled through
:meth:`SparseState.apply_label_map`, which enforces injectivity on the
support, unit-modulus factors, amplitude finiteness, and norm preservation
to 1e-10.

Labels carry an ``env`` field: an append-only record of spontaneous-emission
events.  Dissipative resets (modeled as ideal deterministic label maps) stay
injective by recording which cell decayed; when the record is identical on
every branch it is a global product factor and is cleared automatically.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Iterable, Mapping

import numpy as np

DEFAULT_TOL = 1e-12     # amplitude pruning threshold
NORM_ATOL = 1e-10       # norm-preservation assertion after unitaries
CONTRACT_ATOL = 1e-8    # normalization contract on operation inputs


class QramError(Exception):
    """Base class for simulator errors."""


class CollisionError(QramError):
    """A label map was not injective on the state's support."""


class UnitarityError(QramError):
    """A label-map factor was not unit modulus, or the norm drifted."""


class ContractError(QramError):
    """An operation precondition (normalization, finiteness) was violated."""


class ProtocolError(QramError):
    """An operation was applied to a state it is not defined on."""


class ConfigError(QramError):
    """Invalid scenario or machine configuration."""


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

MEMORY_LEVELS = ("g", "s", "r", "rp")
ANCILLA_LEVELS = ("g", "s", "r", "rp", "t")
RYDBERG_LEVELS = frozenset({"r", "rp"})

REGISTER = "register"
NODE = "node"
CELL = "cell"
ABSORBED = "absorbed"
_PHOTON_KINDS = (REGISTER, NODE, CELL, ABSORBED)


@dataclass(frozen=True, order=True)
class CellLabel:
    """Classical configuration of one memory cell.

    ``m``/``a`` are the memory and ancillary atom levels, ``mode`` the shared
    motional quanta (0 or 1), ``photon`` the Fock occupation of the cell's
    local optical mode.  The motional mode is physical only while both atoms
    sit in the Rydberg manifold; the pulse engine enforces that.
    """

    m: str = "g"
    a: str = "g"
    mode: int = 0
    photon: int = 0

    def __post_init__(self) -> None:
        if self.m not in MEMORY_LEVELS:
            raise ConfigError(f"bad memory level {self.m!r}")
        if self.a not in ANCILLA_LEVELS:
            raise ConfigError(f"bad ancilla level {self.a!r}")
        if self.mode not in (0, 1):
            raise ConfigError(f"motional mode {self.mode!r} outside {{0,1}}")
        if self.photon not in (0, 1):
            raise ConfigError(f"cell photon number {self.photon!r} outside {{0,1}}")

    def render(self) -> str:
        return f"{self.m}.{self.a}.{self.mode}.{self.photon}"

    @classmethod
    def parse(cls, text: str) -> "CellLabel":
        m, a, mode, photon = text.split(".")
        return cls(m, a, int(mode), int(photon))


@dataclass(frozen=True, order=True)
class PhotonReg:
    """Location and occupation of the flying optical mode.

    ``kind`` is one of ``register``/``node``/``cell``/``absorbed``; ``index``
    is the node or cell index (-1 otherwise); ``occ`` the Fock occupation.
    ``absorbed`` means the quantum has been handed to a cell or atom and the
    flying mode is empty.
    """

    kind: str = REGISTER
    index: int = -1
    occ: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _PHOTON_KINDS:
            raise ConfigError(f"bad photon site kind {self.kind!r}")
        if self.occ not in (0, 1):
            raise ConfigError(f"photon occupation {self.occ!r} outside {{0,1}}")
        if self.kind == ABSORBED and self.occ != 0:
            raise ConfigError("absorbed photon slot must be empty")
        if self.kind in (REGISTER, ABSORBED) and self.index != -1:
            raise ConfigError(f"site kind {self.kind!r} carries no index")

    def render(self) -> str:
        if self.kind == ABSORBED:
            return ABSORBED
        if self.kind == REGISTER:
            return f"register:{self.occ}"
        return f"{self.kind}:{self.index}:{self.occ}"

    @classmethod
    def parse(cls, text: str) -> "PhotonReg":
        if text == ABSORBED:
            return cls(ABSORBED)
        parts = text.split(":")
        if parts[0] == REGISTER:
            return cls(REGISTER, -1, int(parts[1]))
        return cls(parts[0], int(parts[1]), int(parts[2]))


@dataclass(frozen=True, order=True)
class BranchLabel:
    """One classical configuration of the whole machine.

    ``nodes`` holds one orientation character per tree node ('L'/'R'),
    level-major; ``addr`` the address register bits MSB-first (bit j picks
    the branch at tree level j).  Both are empty strings for standalone
    cell-array states with no tree attached.  ``env`` records spontaneous
    emissions as ``(tag, cell_index)`` pairs.
    """

    nodes: str = ""
    addr: str = ""
    photon: PhotonReg = PhotonReg()
    cells: tuple[CellLabel, ...] = ()
    env: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        if self.nodes:
            total = len(self.nodes)
            n = total.bit_length()  # 2^n - 1 nodes for depth n
            if (1 << n) - 1 != total or set(self.nodes) - {"L", "R"}:
                raise ConfigError(f"bad node configuration {self.nodes!r}")
            if len(self.addr) != n:
                raise ConfigError(
                    f"address register length {len(self.addr)} != tree depth {n}"
                )
        if set(self.addr) - {"0", "1"}:
            raise ConfigError(f"bad address register {self.addr!r}")
        if self.photon.kind == NODE and not 0 <= self.photon.index < len(self.nodes):
            raise ConfigError(f"photon node index {self.photon.index} out of range")
        if self.photon.kind == CELL and not 0 <= self.photon.index < len(self.cells):
            raise ConfigError(f"photon cell index {self.photon.index} out of range")

    @property
    def depth(self) -> int:
        return len(self.addr)

    def render(self) -> str:
        parts = [
            f"nodes={self.nodes}",
            f"addr={self.addr}",
            f"photon={self.photon.render()}",
            "cells=[" + ",".join(c.render() for c in self.cells) + "]",
        ]
        if self.env:
            parts.append("env=[" + ",".join(f"{t}:{i}" for t, i in self.env) + "]")
        return "(" + ",".join(parts) + ")"

    def with_cell(self, index: int, cell: CellLabel) -> "BranchLabel":
        cells = self.cells[:index] + (cell,) + self.cells[index + 1 :]
        return replace(self, cells=cells)


_LABEL_RE = re.compile(
    r"^\(nodes=([LR]*),addr=([01]*),photon=([a-z0-9:\-]+),"
    r"cells=\[([^\]]*)\](?:,env=\[([^\]]*)\])?\)$"
)


def parse_label(text: str) -> BranchLabel:
    match = _LABEL_RE.match(text)
    if match is None:
        raise ConfigError(f"unparseable label {text!r}")
    nodes, addr, photon, cells_text, env_text = match.groups()
    cells = tuple(
        CellLabel.parse(c) for c in cells_text.split(",") if c
    )
    env: tuple[tuple[str, int], ...] = ()
    if env_text:
        env = tuple(
            (t, int(i)) for t, i in (e.rsplit(":", 1) for e in env_text.split(","))
        )
    return BranchLabel(nodes, addr, PhotonReg.parse(photon), cells, env)


# ---------------------------------------------------------------------------
# Sparse state
# ---------------------------------------------------------------------------

LabelMap = Callable[[BranchLabel], tuple[BranchLabel, complex]]


class SparseState:
    """Immutable sparse complex-amplitude state over :class:`BranchLabel`.

    All operations return new states; instances are safe to share across
    threads.  The term map never stores amplitudes below ``tol``.
    """

    __slots__ = ("terms", "tol")

    def __init__(
        self,
        terms: Mapping[BranchLabel, complex] | Iterable[tuple[BranchLabel, complex]],
        tol: float = DEFAULT_TOL,
        *,
        require_normalized: bool = True,
    ):
        items = terms.items() if isinstance(terms, Mapping) else terms
        kept: dict[BranchLabel, complex] = {}
        for label, amp in items:
            c = complex(amp)
            if not (math.isfinite(c.real) and math.isfinite(c.imag)):
                raise ContractError(f"non-finite amplitude for {label.render()}")
            if abs(c) < tol:
                continue
            if label in kept:
                raise CollisionError(f"duplicate label {label.render()}")
            kept[label] = c
        object.__setattr__(self, "terms", kept)
        object.__setattr__(self, "tol", tol)
        if require_normalized and abs(self.norm_sq() - 1.0) > CONTRACT_ATOL:
            raise ContractError(f"state not normalized: |psi|^2 = {self.norm_sq()}")

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("SparseState is immutable")

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, SparseState) and self.terms == other.terms

    def __repr__(self) -> str:
        body = ", ".join(
            f"{label.render()}: {amp:.6g}" for label, amp in sorted(
                self.terms.items(), key=lambda kv: kv[0].render()
            )
        )
        return f"SparseState({{{body}}})"

    @classmethod
    def single(cls, label: BranchLabel, tol: float = DEFAULT_TOL) -> "SparseState":
        return cls({label: 1.0 + 0.0j}, tol)

    def norm_sq(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.terms.values()))

    def amplitude(self, label: BranchLabel) -> complex:
        return self.terms.get(label, 0.0 + 0.0j)

    def apply_label_map(self, label_map: LabelMap) -> "SparseState":
        """Apply a permutation-with-phase map to every supported label.

        The map must be injective on the support and every factor must have
        unit modulus; violations raise :class:`CollisionError` /
        :class:`UnitarityError`.  Norm is asserted preserved to 1e-10.
        """
        new_terms: dict[BranchLabel, complex] = {}
        for label, amp in self.terms.items():
            new_label, factor = label_map(label)
            f = complex(factor)
            if abs(abs(f) - 1.0) > 1e-12:
                raise UnitarityError(
                    f"label-map factor {f} is not unit modulus at {label.render()}"
                )
            if new_label in new_terms:
                raise CollisionError(
                    f"label map collides on support at {new_label.render()}"
                )
            new_terms[new_label] = amp * f
        out = SparseState(new_terms, self.tol, require_normalized=False)
        if abs(out.norm_sq() - self.norm_sq()) > NORM_ATOL:
            raise UnitarityError("label map did not preserve the norm")
        return out

    def map_terms(
        self, fn: Callable[[BranchLabel, complex], Iterable[tuple[BranchLabel, complex]]]
    ) -> "SparseState":
        """Expand every term into weighted labels (for isometric preparations).

        Unlike :meth:`apply_label_map` this may be one-to-many; amplitudes
        landing on the same label accumulate.  Norm preservation is still
        asserted, so only use it for maps that are isometries on the support.
        """
        new_terms: dict[BranchLabel, complex] = {}
        for label, amp in self.terms.items():
            for new_label, new_amp in fn(label, amp):
                new_terms[new_label] = new_terms.get(new_label, 0.0 + 0.0j) + new_amp
        out = SparseState(new_terms, self.tol, require_normalized=False)
        if abs(out.norm_sq() - self.norm_sq()) > NORM_ATOL:
            raise UnitarityError("term expansion did not preserve the norm")
        return out

    def clear_uniform_env(self) -> "SparseState":
        """Drop the emission record when identical on every branch.

        A uniform record is a product factor with the environment and
        carries no which-path information.
        """
        envs = {label.env for label in self.terms}
        if len(envs) != 1 or envs == {()}:
            return self
        return self.apply_label_map(lambda l: (replace(l, env=()), 1.0))


def fidelity(a: SparseState, b: SparseState) -> float:
    """Squared overlap |<a|b>|^2 of two normalized states."""
    for name, state in (("a", a), ("b", b)):
        if abs(state.norm_sq() - 1.0) > CONTRACT_ATOL:
            raise ContractError(f"fidelity input {name} is not normalized")
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    overlap = sum(
        amp.conjugate() * large.terms.get(label, 0.0) for label, amp in small.terms.items()
    )
    return min(abs(overlap) ** 2, 1.0)


def fidelity_vs_pure_ignoring_env(state: SparseState, target: SparseState) -> float:
    """Fidelity <t|rho|t> of the env-traced state against an env-free target.

    Terms are grouped by emission record; each group is an (unnormalized)
    conditional pure state, and the reduced density operator is their sum of
    projectors.
    """
    if any(label.env for label in target.terms):
        raise ContractError("target must carry no emission record")
    groups: dict[tuple, dict[BranchLabel, complex]] = {}
    for label, amp in state.terms.items():
        groups.setdefault(label.env, {})[replace(label, env=())] = amp
    total = 0.0
    for group in groups.values():
        overlap = sum(
            target.terms.get(label, 0.0).conjugate() * amp
            for label, amp in group.items()
        )
        total += abs(overlap) ** 2
    return min(total, 1.0)


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------

_SELECTORS: dict[str, Callable[[BranchLabel], Hashable]] = {
    "addr": lambda l: l.addr,
    "nodes": lambda l: l.nodes,
    "photon_occ": lambda l: l.photon.occ,
    "photon_site": lambda l: l.photon.render(),
    "cells": lambda l: tuple(c.render() for c in l.cells),
}


def sample_measurement(
    state: SparseState,
    register: str | Callable[[BranchLabel], Hashable],
    seed: int,
) -> tuple[Hashable, SparseState]:
    """Projectively measure a label field; deterministic given ``seed``.

    ``register`` is a selector name ('addr', 'nodes', 'photon_occ',
    'photon_site', 'cells') or any callable on labels.  Returns the sampled
    outcome and the renormalized collapsed state.
    """
    if not state.terms:
        raise ContractError("cannot measure a state with empty support")
    if abs(state.norm_sq() - 1.0) > CONTRACT_ATOL:
        raise ContractError("measurement input is not normalized")
    selector = _SELECTORS[register] if isinstance(register, str) else register

    probs: dict[Hashable, float] = {}
    for label, amp in state.terms.items():
        key = selector(label)
        probs[key] = probs.get(key, 0.0) + abs(amp) ** 2

    outcomes = sorted(probs, key=repr)  # stable draw order
    rng = np.random.default_rng(seed)
    u = rng.random()
    acc = 0.0
    outcome = outcomes[-1]
    for key in outcomes:
        acc += probs[key]
        if u < acc:
            outcome = key
            break

    scale = 1.0 / math.sqrt(probs[outcome])
    collapsed = SparseState(
        {
            label: amp * scale
            for label, amp in state.terms.items()
            if selector(label) == outcome
        },
        state.tol,
    )
    return outcome, collapsed


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def dumps(state: SparseState) -> str:
    """One term per line: ``label<TAB>re<TAB>im``, labels sorted."""
    lines = [
        f"{label.render()}\t{amp.real!r}\t{amp.imag!r}"
        for label, amp in state.terms.items()
    ]
    return "\n".join(sorted(lines)) + "\n"


def loads(text: str, tol: float = DEFAULT_TOL) -> SparseState:
    terms: dict[BranchLabel, complex] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        label_text, re_text, im_text = line.split("\t")
        terms[parse_label(label_text)] = complex(float(re_text), float(im_text))
    return SparseState(terms, tol)


# ---------------------------------------------------------------------------
# Small construction helpers
# ---------------------------------------------------------------------------

def normalized_amplitudes(
    pairs: Iterable[tuple[complex, Hashable]], atol: float = 1e-9
) -> list[tuple[complex, Hashable]]:
    """Validate and exactly renormalize a small superposition descriptor."""
    pairs = [(complex(a), k) for a, k in pairs]
    if not pairs:
        raise ContractError("empty superposition descriptor")
    keys = [k for _, k in pairs]
    if len(set(keys)) != len(keys):
        raise ContractError("duplicate basis entries in superposition descriptor")
    norm_sq = sum(abs(a) ** 2 for a, _ in pairs)
    if abs(norm_sq - 1.0) > atol:
        raise ContractError(f"superposition norm^2 = {norm_sq}, expected 1")
    scale = 1.0 / math.sqrt(norm_sq)
    return [(a * scale, k) for a, k in pairs]
