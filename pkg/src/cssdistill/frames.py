"""Pauli-frame error propagation through noisy Clifford circuits.

Only the accumulated Pauli error is tracked, never the state: every circuit
here prepares stabilizer states, every fault is a Pauli, and every observed
quantity is GF(2)-linear in the frame, so the ideal state's contribution to
any measured parity is identically zero.  Measurement records therefore
hold only the *error* contribution to the outcome.

Phases are dropped throughout; syndromes and weights are phase-blind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import gf2
from .css import AncillaSpec
from .gf2 import BitMatrix

PAULI_1Q = ("X", "Y", "Z")
# Order follows the failure model's enumeration of two-qubit Paulis.
PAULI_2Q = (
    "IX", "IY", "IZ",
    "XI", "XX", "XY", "XZ",
    "YI", "YX", "YY", "YZ",
    "ZI", "ZX", "ZY", "ZZ",
)

_CHAR_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


class Gate(NamedTuple):
    kind: str  # prep_z | prep_x | cnot | phase | meas_z | meas_x
    locs: tuple[tuple[int, int], ...]  # (block, qubit); cnot = (control, target)


@dataclass
class PauliFrame:
    """Per-block X/Z error bit masks."""

    ns: tuple[int, ...]
    e: list[int]
    f: list[int]

    @classmethod
    def zeros(cls, ns: Sequence[int]) -> "PauliFrame":
        ns = tuple(ns)
        return cls(ns, [0] * len(ns), [0] * len(ns))

    def copy(self) -> "PauliFrame":
        return PauliFrame(self.ns, list(self.e), list(self.f))

    def xor(self, other: "PauliFrame") -> "PauliFrame":
        if self.ns != other.ns:
            raise ValueError("shape mismatch")
        return PauliFrame(
            self.ns,
            [a ^ b for a, b in zip(self.e, other.e)],
            [a ^ b for a, b in zip(self.f, other.f)],
        )

    def is_zero(self) -> bool:
        return not any(self.e) and not any(self.f)

    def validate(self) -> None:
        for n, eb, fb in zip(self.ns, self.e, self.f):
            if eb >> n or fb >> n:
                raise ValueError("frame bits beyond block length")


@dataclass(frozen=True)
class Circuit:
    """Time steps of gates on disjoint qubits over fixed-size blocks."""

    ns: tuple[int, ...]
    steps: tuple[tuple[Gate, ...], ...]

    def __post_init__(self) -> None:
        measured: dict[tuple[int, int], str] = {}
        controls: set[tuple[int, int]] = set()
        targets: set[tuple[int, int]] = set()
        for step in self.steps:
            seen: set[tuple[int, int]] = set()
            for gate in step:
                for b, q in gate.locs:
                    if not (0 <= b < len(self.ns) and 0 <= q < self.ns[b]):
                        raise ValueError(f"location out of range: {(b, q)}")
                    if (b, q) in seen:
                        raise ValueError(f"qubit used twice in one step: {(b, q)}")
                    if (b, q) in measured:
                        raise ValueError(f"measured qubit reused: {(b, q)}")
                    seen.add((b, q))
                if gate.kind == "cnot":
                    controls.add(gate.locs[0])
                    targets.add(gate.locs[1])
                elif gate.kind in ("meas_z", "meas_x"):
                    measured[gate.locs[0]] = gate.kind
        for loc, kind in measured.items():
            if kind == "meas_z" and loc in controls:
                raise ValueError(f"Z-measured qubit is a CNOT control: {loc}")
            if kind == "meas_x" and loc in targets:
                raise ValueError(f"X-measured qubit is a CNOT target: {loc}")

    def gates(self) -> Iterator[tuple[int, int, Gate]]:
        for s, step in enumerate(self.steps):
            for g, gate in enumerate(step):
                yield s, g, gate

    def count(self, kind: str) -> int:
        return sum(1 for _, _, g in self.gates() if g.kind == kind)

    def locations(self) -> list[tuple[int, int, Gate]]:
        """Fault locations: every gate, in execution order."""
        return list(self.gates())

    def idle_slots(self) -> list[tuple[int, tuple[int, int]]]:
        """(step, (block, qubit)) pairs where an alive qubit does nothing."""
        first: dict[tuple[int, int], int] = {}
        last: dict[tuple[int, int], int] = {}
        busy: dict[tuple[int, int], set[int]] = {}
        for s, _, gate in self.gates():
            for loc in gate.locs:
                first.setdefault(loc, s)
                last[loc] = s
                busy.setdefault(loc, set()).add(s)
        out = []
        for loc, f0 in first.items():
            for s in range(f0 + 1, last[loc]):
                if s not in busy[loc]:
                    out.append((s, loc))
        return out


@dataclass(frozen=True)
class FailureModel:
    """Independent-failure circuit noise: depolarizing CNOT and prep
    failures at p_gate, measurement flips at p_meas, idle-qubit memory
    failures at p_mem (zero by default: relevant platforms have memory
    noise far below gate noise)."""

    p_gate: float
    p_meas: float
    p_mem: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_gate", "p_meas", "p_mem"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    @classmethod
    def uniform(cls, p: float) -> "FailureModel":
        return cls(p_gate=p, p_meas=p)


class Fault(NamedTuple):
    step: int
    gate_idx: int  # -1 for a memory fault
    pauli: str  # one char per gate loc; single char for memory
    loc: tuple[int, int] | None = None  # memory faults only


@dataclass(frozen=True)
class FaultInjection:
    """An explicit set of Pauli faults at circuit locations."""

    items: tuple[Fault, ...]

    def __len__(self) -> int:
        return len(self.items)

    def to_text(self) -> str:
        lines = []
        for it in self.items:
            if it.gate_idx < 0:
                b, q = it.loc
                lines.append(f"{it.step} mem {it.pauli} {b} {q}")
            else:
                lines.append(f"{it.step} {it.gate_idx} {it.pauli}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "FaultInjection":
        items = []
        for ln in text.strip().splitlines():
            parts = ln.split()
            if not parts:
                continue
            if parts[1] == "mem":
                items.append(Fault(int(parts[0]), -1, parts[2], (int(parts[3]), int(parts[4]))))
            else:
                items.append(Fault(int(parts[0]), int(parts[1]), parts[2]))
        return cls(tuple(items))


def apply_gate(frame: PauliFrame, gate: Gate) -> None:
    """Propagate the frame through one gate, in place."""
    if gate.kind == "cnot":
        (bc, qc), (bt, qt) = gate.locs
        if (frame.e[bc] >> qc) & 1:
            frame.e[bt] ^= 1 << qt
        if (frame.f[bt] >> qt) & 1:
            frame.f[bc] ^= 1 << qc
    elif gate.kind in ("prep_z", "prep_x"):
        b, q = gate.locs[0]
        frame.e[b] &= ~(1 << q)
        frame.f[b] &= ~(1 << q)
    elif gate.kind == "phase":
        b, q = gate.locs[0]
        if (frame.e[b] >> q) & 1:
            frame.f[b] ^= 1 << q
    elif gate.kind in ("meas_z", "meas_x"):
        pass
    else:
        raise ValueError(f"unknown gate kind {gate.kind!r}")


def _inject(frame: PauliFrame, gate_locs, pauli: str) -> None:
    for (b, q), ch in zip(gate_locs, pauli):
        xb, zb = _CHAR_XZ[ch]
        if xb:
            frame.e[b] ^= 1 << q
        if zb:
            frame.f[b] ^= 1 << q


def run_noisy(
    circuit: Circuit,
    injection: FaultInjection,
    initial: PauliFrame | None = None,
) -> tuple[PauliFrame, dict[int, int]]:
    """Execute the circuit on a zero frame (or ``initial``) with the faults.

    Faults attached to a gate are applied right after it; a fault on a
    measurement gate is a classical readout flip (its relevant component
    XORs into the record, the frame is untouched).  Memory faults
    (gate_idx -1) apply after their step.  Returns the final frame and, per
    measured block, the packed error contribution to the outcomes: the e
    bit under meas_z, the f bit under meas_x, at measurement time.
    """
    by_gate: dict[tuple[int, int], list[str]] = {}
    by_step_mem: dict[int, list[Fault]] = {}
    for it in injection.items:
        if it.gate_idx < 0:
            by_step_mem.setdefault(it.step, []).append(it)
        else:
            by_gate.setdefault((it.step, it.gate_idx), []).append(it.pauli)

    frame = PauliFrame.zeros(circuit.ns) if initial is None else initial.copy()
    records: dict[int, int] = {}
    for s, step in enumerate(circuit.steps):
        for g, gate in enumerate(step):
            pend = by_gate.get((s, g), ())
            if gate.kind in ("meas_z", "meas_x"):
                part = 0 if gate.kind == "meas_z" else 1
                flip = 0
                for pauli in pend:
                    flip ^= _CHAR_XZ[pauli[0]][part]
                b, q = gate.locs[0]
                bit = (frame.e[b] >> q) & 1 if gate.kind == "meas_z" else (frame.f[b] >> q) & 1
                bit ^= flip
                records.setdefault(b, 0)
                if bit:
                    records[b] |= 1 << q
            else:
                apply_gate(frame, gate)
                for pauli in pend:
                    _inject(frame, gate.locs, pauli)
        for it in by_step_mem.get(s, ()):
            b, q = it.loc
            xb, zb = _CHAR_XZ[it.pauli]
            if xb:
                frame.e[b] ^= 1 << q
            if zb:
                frame.f[b] ^= 1 << q
    return frame, records


def sample_failures(model: FailureModel, circuit: Circuit, rng: np.random.Generator) -> FaultInjection:
    """Draw an independent fault set for one execution of the circuit.

    CNOTs fail with p_gate, uniformly over the 15 nontrivial two-qubit
    Paulis; preps (and phase gates) with p_gate, uniformly over {X, Y, Z};
    measurements flip with p_meas (an X before meas_z, a Z before meas_x);
    idle qubit-steps suffer uniform single-qubit Paulis at p_mem.
    """
    items: list[Fault] = []
    for s, g, gate in circuit.gates():
        if gate.kind == "cnot":
            if rng.random() < model.p_gate:
                items.append(Fault(s, g, PAULI_2Q[rng.integers(15)]))
        elif gate.kind in ("prep_z", "prep_x", "phase"):
            if rng.random() < model.p_gate:
                items.append(Fault(s, g, PAULI_1Q[rng.integers(3)]))
        elif gate.kind == "meas_z":
            if rng.random() < model.p_meas:
                items.append(Fault(s, g, "X"))
        elif gate.kind == "meas_x":
            if rng.random() < model.p_meas:
                items.append(Fault(s, g, "Z"))
    if model.p_mem > 0:
        for s, loc in circuit.idle_slots():
            if rng.random() < model.p_mem:
                items.append(Fault(s, -1, PAULI_1Q[rng.integers(3)], loc))
    return FaultInjection(tuple(items))


def effective_support(
    injection: FaultInjection, circuit: Circuit
) -> tuple[list[int], list[int]]:
    """Per-block X-part and Z-part effective supports of a fault set.

    A qubit toggled by an even number of fault components cancels out and
    leaves the support.
    """
    x_sup = [0] * len(circuit.ns)
    z_sup = [0] * len(circuit.ns)
    for it in injection.items:
        if it.gate_idx < 0:
            locs = (it.loc,)
        else:
            locs = circuit.steps[it.step][it.gate_idx].locs
        for (b, q), ch in zip(locs, it.pauli):
            xb, zb = _CHAR_XZ[ch]
            if xb:
                x_sup[b] ^= 1 << q
            if zb:
                z_sup[b] ^= 1 << q
    return x_sup, z_sup


def _greedy_schedule(prep_gates: list[Gate], cnots: list[Gate], meas_gates: list[Gate], ns) -> Circuit:
    steps: list[list[Gate]] = [prep_gates] if prep_gates else []
    occupied: list[set[tuple[int, int]]] = [set()] if prep_gates else []
    if prep_gates:
        occupied[0] = {loc for g in prep_gates for loc in g.locs}
    start = len(steps)
    for gate in cnots:
        placed = False
        for idx in range(start, len(steps)):
            if not any(loc in occupied[idx] for loc in gate.locs):
                steps[idx].append(gate)
                occupied[idx].update(gate.locs)
                placed = True
                break
        if not placed:
            steps.append([gate])
            occupied.append(set(gate.locs))
    if meas_gates:
        steps.append(meas_gates)
    return Circuit(tuple(ns), tuple(tuple(s) for s in steps))


def synth_encoding_circuit(spec: AncillaSpec) -> Circuit:
    """Deterministic CNOT encoding circuit for a CSS-type ancilla spec.

    Row-reduces the round-2 X-generator matrix over the concatenated
    qubits; pivots are prepared in |+>, the rest in |0>, and each row
    becomes CNOTs from its pivot onto its other qubits.  Verified
    symbolically: the prepared single-qubit stabilizers conjugate through
    the circuit onto exactly the specified stabilizer group.
    """
    m = spec.m
    sizes = spec.block_sizes
    total = spec.total_qubits
    offs = [0]
    for n in sizes[:-1]:
        offs.append(offs[-1] + n)

    for el in spec.s1:
        if any(el.x):
            raise ValueError("encoding synthesis needs pure-Z round-1 elements; "
                             f"{spec.kind!r} states are not CNOT-preparable")
    x_rows = []
    for el in spec.s2:
        if any(el.z):
            raise ValueError("encoding synthesis needs pure-X round-2 elements; "
                             f"{spec.kind!r} states are not CNOT-preparable")
        bits = 0
        for b in range(m):
            bits |= el.x[b] << offs[b]
        x_rows.append(bits)

    xmat = BitMatrix(len(x_rows), total, tuple(x_rows))
    red, pivots, rnk = gf2.rref(xmat)
    if rnk < len(x_rows):
        raise ValueError("degenerate spec: dependent round-2 generators")

    def to_loc(idx: int) -> tuple[int, int]:
        for b in range(m - 1, -1, -1):
            if idx >= offs[b]:
                return b, idx - offs[b]
        raise AssertionError

    piv_set = set(pivots)
    preps = [Gate("prep_x", (to_loc(q),)) for q in sorted(piv_set)]
    preps += [Gate("prep_z", (to_loc(q),)) for q in range(total) if q not in piv_set]
    cnots = []
    for r_idx, p in enumerate(pivots):
        row = red.data[r_idx]
        for c in range(total):
            if c != p and (row >> c) & 1:
                cnots.append(Gate("cnot", (to_loc(p), to_loc(c))))
    circuit = _greedy_schedule(preps, cnots, [], sizes)
    _verify_encoding(circuit, spec)
    return circuit


def _conjugate_through(circuit: Circuit, x0: list[int], z0: list[int]) -> tuple[list[int], list[int]]:
    """Conjugate a Pauli (per-block x/z masks) forward through the circuit."""
    x, z = list(x0), list(z0)
    for _, _, gate in circuit.gates():
        if gate.kind == "cnot":
            (bc, qc), (bt, qt) = gate.locs
            if (x[bc] >> qc) & 1:
                x[bt] ^= 1 << qt
            if (z[bt] >> qt) & 1:
                z[bc] ^= 1 << qc
        elif gate.kind == "phase":
            b, q = gate.locs[0]
            if (x[b] >> q) & 1:
                z[b] ^= 1 << q
    return x, z


def _verify_encoding(circuit: Circuit, spec: AncillaSpec) -> None:
    m = spec.m
    sizes = spec.block_sizes
    total = spec.total_qubits
    offs = [0]
    for n in sizes[:-1]:
        offs.append(offs[-1] + n)

    x_rows, z_rows = [], []
    for _, _, gate in circuit.gates():
        if gate.kind == "prep_x":
            b, q = gate.locs[0]
            x0 = [1 << q if bb == b else 0 for bb in range(m)]
            xs, zs = _conjugate_through(circuit, x0, [0] * m)
            assert not any(zs)
            x_rows.append(sum(xs[b] << offs[b] for b in range(m)))
        elif gate.kind == "prep_z":
            b, q = gate.locs[0]
            z0 = [1 << q if bb == b else 0 for bb in range(m)]
            xs, zs = _conjugate_through(circuit, [0] * m, z0)
            assert not any(xs)
            z_rows.append(sum(zs[b] << offs[b] for b in range(m)))

    spec_x = [sum(el.x[b] << offs[b] for b in range(m)) for el in spec.s2]
    spec_z = [sum(el.z[b] << offs[b] for b in range(m)) for el in spec.s1]
    got_x = BitMatrix(len(x_rows), total, tuple(x_rows))
    got_z = BitMatrix(len(z_rows), total, tuple(z_rows))
    want_x = BitMatrix(len(spec_x), total, tuple(spec_x))
    want_z = BitMatrix(len(spec_z), total, tuple(spec_z))
    if not gf2.row_space_equal(got_x, want_x):
        raise AssertionError("synthesized X stabilizer group differs from spec")
    if not gf2.row_space_equal(got_z, want_z):
        raise AssertionError("synthesized Z stabilizer group differs from spec")
