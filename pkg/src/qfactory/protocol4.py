"""Client and server state machines for the malicious 4-states protocol.

One run: the client generates a keypair and sends the public key; the server
(honestly) builds the preimage superposition, measures the image register to
get y, routes the hardcore bit to a fresh target qubit and measures everything
else in an XY-plane basis to get the record b; the client inverts y and
derives the held qubit's description from (preimages, b).

The rotated variant replaces the X-basis record measurements with the
pi/2-rotated basis.  Its output-state family is richer than the plain BB84
set: two-preimage runs with opposite hardcore bits give an equatorial state
whose quarter-turn index depends on the Hamming-weight difference of the two
encoded preimages; all other runs give a computational state.  The closed
forms below were frozen from the statevector oracle and are regression-tested
against it exhaustively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import lwe
from .params import ParamSet
from .seeds import derive_seed
from .sim import (
    COMPUTATIONAL as MEAS_COMPUTATIONAL,
    QubitDescription,
    StateVector,
    analytic_stage2,
    sample_b,
    xy_plane,
)

TWO_PREIMAGES = "two_preimages"
SINGLE_PREIMAGE = "single_preimage"
NO_PREIMAGE = "no_preimage"

# which 2-state family the honest held qubit lives in
COMPUTATIONAL = "computational"  # {|0>, |1>}
PAULI_X = "pauli_x"  # {|+>, |->}
PAULI_Y = "pauli_y"  # {|+_{pi/2}>, |-_{pi/2}>}

PLAIN = "plain"
ROTATED = "rotated"

HARDCORE_TAG = "last-domain-component"


@dataclass(frozen=True)
class KeyMessage:
    pk: lwe.PublicKey
    variant: str
    hardcore_tag: str = HARDCORE_TAG


@dataclass(frozen=True)
class Transcript4:
    y: tuple[int, ...]
    b: tuple[int, ...]
    variant: str


@dataclass(frozen=True)
class OutputIndex4:
    """Client-side description of the server's held qubit."""

    B1: int
    B2: int
    accepted: str
    family: str

    def qubit(self) -> QubitDescription:
        if self.family == COMPUTATIONAL:
            return QubitDescription.computational(self.B2)
        if self.family == PAULI_X:
            return QubitDescription.eight(4 * self.B2)  # Z^B2 |+>
        return QubitDescription.eight(2 + 4 * self.B2)  # R(pi/2) Z^B2 |+>


@dataclass(frozen=True)
class ClientState4:
    pk: lwe.PublicKey
    trapdoor: lwe.Trapdoor
    params: ParamSet
    variant: str
    seed: int


@dataclass(frozen=True)
class StrategyReply:
    y: tuple[int, ...]
    b: tuple[int, ...]
    held: QubitDescription | None


ServerStrategy = Callable[[KeyMessage, np.random.Generator], StrategyReply]


def meas_theta(variant: str) -> float:
    return 0.0 if variant == PLAIN else math.pi / 2


def client_init(params: ParamSet, variant: str, seed: int) -> tuple[ClientState4, KeyMessage]:
    if variant not in (PLAIN, ROTATED):
        raise ValueError(f"unknown variant {variant!r}")
    pk, td = lwe.gen(params, derive_seed(seed, "gen"))
    client = ClientState4(pk=pk, trapdoor=td, params=params, variant=variant, seed=seed)
    return client, KeyMessage(pk=pk, variant=variant)


# ---------------------------------------------------------------------------
# honest server


def _unpack_y(params: ParamSet, packed: int) -> tuple[int, ...]:
    return tuple(int(v) for v in lwe.unpack_image(params, packed))


def server_honest(key_msg: KeyMessage, backend: str, seed: int) -> StrategyReply:
    """Run the honest server on one of the two backends.

    The statevector backend materializes the image register when the whole
    circuit fits under the qubit cap, and otherwise samples y classically and
    prepares the post-measurement state directly (the image measurement
    commutes with everything that follows, so the two routes agree exactly).
    """
    if backend == "two_branch":
        return _server_two_branch(key_msg, seed)
    if backend == "statevector":
        return _server_statevector(key_msg, seed)
    raise ValueError(f"unknown backend {backend!r}")


def _preimage_bits(pk: lwe.PublicKey, packed_y: int, table: np.ndarray) -> list[int]:
    return [int(x) for x in np.flatnonzero(table == packed_y)]


def _server_two_branch(key_msg: KeyMessage, seed: int) -> StrategyReply:
    pk = key_msg.pk
    params = pk.params
    rng = np.random.default_rng(derive_seed(seed, "server"))
    table = lwe.f_bit_table(pk)
    x = lwe.sample_domain_element(params, rng)
    packed_y = int(table[lwe.encode_int(params, x)])
    branches = _preimage_bits(pk, packed_y, table)
    theta = meas_theta(key_msg.variant)
    nbits = params.total_bits
    to_bits = lambda v: tuple((v >> j) & 1 for j in range(nbits))
    if len(branches) == 2:
        xb, xpb = to_bits(branches[0]), to_bits(branches[1])
        if xb[-1] == 1:
            xb, xpb = xpb, xb
        b = sample_b(xb, xpb, theta, rng)
        held = analytic_stage2(xb, xpb, b, theta)
    else:
        xb = to_bits(branches[0])
        b = tuple(int(v) for v in rng.integers(0, 2, size=nbits))
        held = QubitDescription.computational(xb[-2])
    return StrategyReply(y=_unpack_y(params, packed_y), b=b, held=held)


def _stage2_state(params: ParamSet, branch_bits: list[int]) -> StateVector:
    """The post-image-measurement state on (register, target) qubits."""
    nbits = params.total_bits
    sv = StateVector(nbits + 1)
    amps = np.zeros(1 << (nbits + 1), dtype=complex)
    scale = 1 / math.sqrt(len(branch_bits))
    for xb in branch_bits:
        hbit = (xb >> (nbits - 2)) & 1
        amps[xb | (hbit << nbits)] = scale
    sv.amps = amps
    return sv


def _server_statevector(key_msg: KeyMessage, seed: int) -> StrategyReply:
    pk = key_msg.pk
    params = pk.params
    rng = np.random.default_rng(derive_seed(seed, "server"))
    nbits = params.total_bits
    ybits = params.m * params.ell_q
    table = lwe.f_bit_table(pk)
    if nbits + ybits + 1 <= 16:
        sv = StateVector(nbits + ybits + 1)
        for qb in range(nbits):
            sv.h(qb)
        sv.apply_function_unitary(
            table, controls=list(range(nbits)), targets=list(range(nbits, nbits + ybits))
        )
        # bits[i] is the outcome of the i-th listed qubit
        ybits_out, _ = sv.measure(list(range(nbits, nbits + ybits)), MEAS_COMPUTATIONAL, rng)
        packed_y = sum(bit << j for j, bit in enumerate(ybits_out))
        sv.apply_function_unitary([0, 1], controls=[nbits - 2], targets=[nbits + ybits])
        b, _ = sv.measure(list(range(nbits)), xy_plane(meas_theta(key_msg.variant)), rng)
        held = QubitDescription(sv.qubit_state(nbits + ybits))
        return StrategyReply(y=_unpack_y(params, packed_y), b=tuple(b), held=held)

    # projection route: draw y classically, prepare the collapsed state
    x = lwe.sample_domain_element(params, rng)
    packed_y = int(table[lwe.encode_int(params, x)])
    branches = _preimage_bits(pk, packed_y, table)
    sv = _stage2_state(params, branches)
    b, _ = sv.measure(list(range(nbits)), xy_plane(meas_theta(key_msg.variant)), rng)
    held = QubitDescription(sv.qubit_state(nbits))
    return StrategyReply(y=_unpack_y(params, packed_y), b=b, held=held)


def honest_strategy(backend: str, seed: int) -> ServerStrategy:
    def strategy(key_msg: KeyMessage, rng: np.random.Generator) -> StrategyReply:
        return server_honest(key_msg, backend, int(rng.integers(0, 2**63)))

    return strategy


def fixed_reply_strategy(y, b) -> ServerStrategy:
    """An adversary that ignores the key and parrots a fixed message."""

    def strategy(key_msg: KeyMessage, rng: np.random.Generator) -> StrategyReply:
        return StrategyReply(y=tuple(y), b=tuple(b), held=None)

    return strategy


# ---------------------------------------------------------------------------
# client finalization


def _sorted_pair(params: ParamSet, preimages):
    by_c = {el.c: el for el in preimages}
    return by_c[0], by_c[1]


def _record_parity(b, diff_bits) -> int:
    return sum(bi & di for bi, di in zip(b, diff_bits)) & 1


def client_finalize(client: ClientState4, y, b, always_output: bool = False) -> OutputIndex4:
    """Plain-variant output index.

    Two preimages: the basis bit is the hardcore-bit XOR and the value bit is
    <b, x xor x'> inside the basis branch.  One preimage: a computational
    qubit holding the hardcore bit.  None: abort, or a fresh uniform pair in
    always-output mode.
    """
    params = client.params
    b = _check_b(params, b)
    preimages = lwe.invert(client.trapdoor, client.pk, y)
    if len(preimages) == 0:
        return _no_preimage_output(client, y, b, always_output)
    if len(preimages) == 1:
        return OutputIndex4(0, lwe.h(preimages[0]), SINGLE_PREIMAGE, COMPUTATIONAL)
    z, zp = _sorted_pair(params, preimages)
    xb = lwe.encode(params, z)
    xpb = lwe.encode(params, zp)
    b1 = lwe.h(z) ^ lwe.h(zp)
    beta = _record_parity(b, tuple(a ^ c for a, c in zip(xb, xpb)))
    b2 = (beta & b1) ^ (lwe.h(z) & (1 ^ b1))
    family = PAULI_X if b1 else COMPUTATIONAL
    return OutputIndex4(b1, b2, TWO_PREIMAGES, family)


def client_finalize_rotated(client: ClientState4, y, b, always_output: bool = False) -> OutputIndex4:
    """Rotated-variant output index, frozen from the theta = pi/2 oracle.

    With opposite hardcore bits the state is |+_{k pi/2}> where
    k = (2 h(z) - 1) * (wt(x') - wt(x)) + 2 <b, x xor x'>  (mod 4);
    B1' = k mod 2 selects the X or Y equatorial pair and B2' the sign.
    Runs without branch interference give the computational state |h>.
    """
    params = client.params
    b = _check_b(params, b)
    preimages = lwe.invert(client.trapdoor, client.pk, y)
    if len(preimages) == 0:
        return _no_preimage_output(client, y, b, always_output)
    if len(preimages) == 1:
        return OutputIndex4(0, lwe.h(preimages[0]), SINGLE_PREIMAGE, COMPUTATIONAL)
    z, zp = _sorted_pair(params, preimages)
    if lwe.h(z) == lwe.h(zp):
        return OutputIndex4(0, lwe.h(z), TWO_PREIMAGES, COMPUTATIONAL)
    xb = lwe.encode(params, z)
    xpb = lwe.encode(params, zp)
    delta = sum(xpb) - sum(xb)
    beta = _record_parity(b, tuple(a ^ c for a, c in zip(xb, xpb)))
    k = ((2 * lwe.h(z) - 1) * delta + 2 * beta) % 4
    b1 = k & 1
    b2 = ((k - b1) // 2) & 1
    family = PAULI_Y if b1 else PAULI_X
    return OutputIndex4(b1, b2, TWO_PREIMAGES, family)


def finalize(client: ClientState4, y, b, always_output: bool = False) -> OutputIndex4:
    if client.variant == ROTATED:
        return client_finalize_rotated(client, y, b, always_output)
    return client_finalize(client, y, b, always_output)


def _check_b(params: ParamSet, b) -> tuple[int, ...]:
    b = tuple(int(v) & 1 for v in b)
    if len(b) != params.total_bits:
        raise ValueError("measurement record has the wrong length")
    return b


def _no_preimage_output(client: ClientState4, y, b, always_output: bool) -> OutputIndex4:
    if not always_output:
        return OutputIndex4(0, 0, NO_PREIMAGE, COMPUTATIONAL)
    ybytes = ",".join(str(int(v)) for v in y)
    bbytes = "".join(str(v) for v in b)
    rng = np.random.default_rng(derive_seed(client.seed, "always-output", ybytes, bbytes))
    b1, b2 = int(rng.integers(0, 2)), int(rng.integers(0, 2))
    family = PAULI_X if b1 else COMPUTATIONAL
    return OutputIndex4(b1, b2, NO_PREIMAGE, family)


# ---------------------------------------------------------------------------
# orchestration


@dataclass(frozen=True)
class Protocol4Result:
    out: OutputIndex4
    transcript: Transcript4
    held: QubitDescription | None
    client: ClientState4


def run_protocol4(
    params: ParamSet,
    seed: int,
    strategy: ServerStrategy | None = None,
    backend: str = "two_branch",
    variant: str = PLAIN,
    always_output: bool = False,
) -> Protocol4Result:
    client, key_msg = client_init(params, variant, derive_seed(seed, "client"))
    if strategy is None:
        strategy = honest_strategy(backend, seed)
    rng = np.random.default_rng(derive_seed(seed, "strategy"))
    reply = strategy(key_msg, rng)
    out = finalize(client, reply.y, reply.b, always_output=always_output)
    transcript = Transcript4(y=tuple(int(v) for v in reply.y), b=reply.b, variant=variant)
    return Protocol4Result(out=out, transcript=transcript, held=reply.held, client=client)


# ---------------------------------------------------------------------------
# exhaustive oracle support


def honest_output_table(pk: lwe.PublicKey, branch_bits: list[int], theta: float) -> np.ndarray:
    """(2^N, 2) array: amplitude of the target qubit per measurement record.

    Row index is the packed record b (bit j = register qubit j); zero rows are
    records of probability zero.  Built by the statevector pipeline, so the
    client formulas can be checked against it exhaustively.
    """
    params = pk.params
    nbits = params.total_bits
    sv = _stage2_state(params, branch_bits)
    for qb in range(nbits):
        sv.r(-theta, qb)
        sv.h(qb)
    flat = sv.amps
    return np.stack([flat[: 1 << nbits], flat[1 << nbits :]], axis=1)
