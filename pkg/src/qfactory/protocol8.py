"""The 8-states extension: two 4-states runs merged into one |+_{L pi/4}>.

The merge gadget entangles an ancilla |+_{pi/4}> with the BB84 input and the
rotated input through two CZs, then reads the ancilla and the BB84 wire in
the X basis.  The surviving wire carries |+_{L pi/4}> with L computed from the
input indices and the two outcomes.

The index equations are frozen from an exhaustive statevector sweep.  Written
as integer phase bookkeeping (quarter turns of pi/4, tau = s2 xor B2):

    B1 = 0:  L = 4*(B2 + B2') + 2*B1'                            (mod 8)
    B1 = 1:  L = 2*(B1' + 2*B2') + 4*s1 + (-1)^tau               (mod 8)

equivalently, bitwise with L = L1 L2 L3 (most significant first):

    L3 = B1
    L2 = B1' xor (B1 & (B2 xor s2))
    L1 = B2' xor B2 xor (B1 & (s1 xor s2)) xor (B1 & B1' & (B2 xor s2))

The last xor term of L1 is the carry of the quarter-turn arithmetic into the
half-turn digit; dropping it breaks 16 of the 64 (index, outcome) cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import protocol4 as p4
from .params import ParamSet
from .seeds import derive_seed
from .sim import QubitDescription, StateVector, xy_plane


@dataclass(frozen=True)
class EightIndex:
    L: int  # 0..7, theta = L*pi/4

    def __post_init__(self):
        if not 0 <= self.L <= 7:
            raise ValueError("L must be a 3-bit index")

    @property
    def bits(self) -> tuple[int, int, int]:
        return ((self.L >> 2) & 1, (self.L >> 1) & 1, self.L & 1)

    @property
    def basis_bits(self) -> tuple[int, int]:
        return self.bits[1], self.bits[2]

    def qubit(self) -> QubitDescription:
        return QubitDescription.eight(self.L)


@dataclass(frozen=True)
class MergeResult:
    s1: int
    s2: int
    out: QubitDescription


def compute_L(B1: int, B2: int, B1p: int, B2p: int, s1: int, s2: int) -> EightIndex:
    """Output index from the two input indices and the gadget outcomes."""
    l3 = B1 & 1
    l2 = (B1p ^ (B1 & (B2 ^ s2))) & 1
    carry = B1 & B1p & (B2 ^ s2)
    l1 = (B2p ^ B2 ^ (B1 & (s1 ^ s2)) ^ carry) & 1
    return EightIndex((l1 << 2) | (l2 << 1) | l3)


def merge_gadget(
    in1: QubitDescription, in2: QubitDescription, rng: np.random.Generator
) -> MergeResult:
    """Execute the 3-qubit merge circuit, sampling the two X-basis outcomes."""
    sv = _merge_state(in1, in2)
    (s1, s2), _ = sv.measure([0, 1], xy_plane(0.0), rng)
    return MergeResult(s1=s1, s2=s2, out=QubitDescription(sv.qubit_state(2)))


def merge_branches(in1: QubitDescription, in2: QubitDescription):
    """All four (s1, s2) branches with exact probabilities; no sampling."""
    out = []
    for s1 in (0, 1):
        for s2 in (0, 1):
            sv = _merge_state(in1, in2)
            for qb in (0, 1):
                sv.h(qb)
            try:
                prob = sv.postselect([0, 1], (s1, s2))
            except ValueError:
                continue
            out.append((s1, s2, prob, QubitDescription(sv.qubit_state(2))))
    return out


def _merge_state(in1: QubitDescription, in2: QubitDescription) -> StateVector:
    # qubit 0 = ancilla |+_{pi/4}>, qubit 1 = in1, qubit 2 = in2
    sv = StateVector(3)
    anc = np.array([1, np.exp(1j * math.pi / 4)], dtype=complex) / math.sqrt(2)
    sv.amps = np.kron(np.kron(in2.vec, in1.vec), anc)
    sv.cz(0, 1)
    sv.cz(1, 2)
    return sv


# ---------------------------------------------------------------------------
# orchestration


@dataclass(frozen=True)
class Protocol8Result:
    index: EightIndex | None
    usable: bool
    run1: p4.Protocol4Result
    run2: p4.Protocol4Result
    s1: int
    s2: int
    held: QubitDescription | None


def run_protocol8(
    params: ParamSet,
    seed: int,
    backend: str = "two_branch",
    adversarial_flips: tuple[int, int] = (0, 0),
) -> Protocol8Result:
    """Two 4-states runs (plain + rotated) followed by the merge gadget.

    A run is usable when the rotated input landed in an equatorial pair;
    otherwise the merged state cannot be an eighth-turn state and the client
    records the run as unusable (the classification never leaves the client).
    """
    run1 = p4.run_protocol4(params, derive_seed(seed, "p8", 1), backend=backend, variant=p4.PLAIN)
    run2 = p4.run_protocol4(params, derive_seed(seed, "p8", 2), backend=backend, variant=p4.ROTATED)
    usable = run2.out.family in (p4.PAULI_X, p4.PAULI_Y) and run1.out.accepted != p4.NO_PREIMAGE
    rng = np.random.default_rng(derive_seed(seed, "p8", "merge"))
    held = None
    if run1.held is not None and run2.held is not None:
        merged = merge_gadget(run1.held, run2.held, rng)
        s1, s2 = merged.s1, merged.s2
        held = merged.out
    else:
        s1, s2 = (int(v) for v in rng.integers(0, 2, size=2))
    s1 ^= adversarial_flips[0]
    s2 ^= adversarial_flips[1]
    index = None
    if usable:
        index = compute_L(run1.out.B1, run1.out.B2, run2.out.B1, run2.out.B2, s1, s2)
    return Protocol8Result(
        index=index, usable=usable, run1=run1, run2=run2, s1=s1, s2=s2, held=held
    )


# ---------------------------------------------------------------------------
# guessing statistics (two-predicate decomposition)


@dataclass(frozen=True)
class GuessStats:
    p_a: float
    p_b: float
    p_xor: float
    p_joint: float
    max_single: float
    epsilon: float
    epsilon_prime: float


def guess_stats(records) -> GuessStats:
    """Empirical decomposition of joint-guessing success into single-bit edges.

    records: iterable of (guess_a, guess_b, a, b).  Checks the exact identity
    P_xor = e1 + e4 and, whenever the joint rate exceeds 1/4 by eps, that one
    of the three single-bit predictors exceeds 1/2 by eps' = 2*eps/3.
    """
    records = list(records)
    if not records:
        raise ValueError("empty record set")
    n = len(records)
    e = [0, 0, 0, 0]  # (wrong,wrong), (right,wrong), (wrong,right), (right,right)
    for ga, gb, a, b in records:
        e[(ga == a) + 2 * (gb == b)] += 1
    e1, e2, e3, e4 = (v / n for v in e)
    p_a = e2 + e4
    p_b = e3 + e4
    p_xor = e1 + e4
    assert abs((e1 + e2 + e3 + e4) - 1.0) < 1e-12
    eps = max(0.0, e4 - 0.25)
    eps_p = 2 * eps / 3
    best = max(p_a, p_b, p_xor)
    if eps > 0 and best < 0.5 + eps_p - 1e-12:
        raise AssertionError("two-predicate counting bound violated on the data")
    return GuessStats(
        p_a=p_a, p_b=p_b, p_xor=p_xor, p_joint=e4, max_single=best,
        epsilon=eps, epsilon_prime=eps_p,
    )
