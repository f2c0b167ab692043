"""Cross-validation drivers: every closed form against its brute-force oracle.

These checks are what the test suite automates; the CLI exposes them so a
fresh environment can be validated from the command line.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from . import lwe, protocol4 as p4, protocol8 as p8, abort
from .params import ParamSet
from .seeds import derive_seed
from .sim import QubitDescription, fidelity
from .stats import tv_distance


@dataclass
class OracleReport:
    invert_mismatches: int
    invert_images_checked: int
    formula_failures: int
    formula_cases: int
    tv_y_marginal: float
    tv_outputs: float
    samples: int
    corrupted_trapdoor_detected: bool

    def as_dict(self) -> dict:
        return asdict(self)


def _invert_vs_enumeration(pk, td) -> tuple[int, int]:
    table = lwe.exhaustive_image_map(pk)
    mismatches = 0
    for y, want in table.items():
        got = lwe.invert(td, pk, np.array(y))
        if list(got) != list(want):
            mismatches += 1
    # also probe images with no preimages
    params = pk.params
    rng = np.random.default_rng(1)
    for _ in range(50):
        y = tuple(int(v) for v in rng.integers(0, params.q, size=params.m))
        got = lwe.invert(td, pk, np.array(y))
        want = tuple(table.get(y, ()))
        if tuple(got) != want:
            mismatches += 1
    return mismatches, len(table) + 50


def _formula_regressions(params: ParamSet, seed: int) -> tuple[int, int]:
    """Stage-2 descriptions (both variants), merge L, and combine bits."""
    failures = 0
    cases = 0
    client_p, _ = p4.client_init(params, p4.PLAIN, derive_seed(seed, "fp"))
    client_r = p4.ClientState4(
        pk=client_p.pk,
        trapdoor=client_p.trapdoor,
        params=params,
        variant=p4.ROTATED,
        seed=client_p.seed,
    )
    table = lwe.f_bit_table(client_p.pk)
    nbits = params.total_bits
    rng = np.random.default_rng(derive_seed(seed, "fy"))
    for packed_y in rng.choice(np.unique(table), size=12, replace=False):
        branches = [int(v) for v in np.flatnonzero(table == packed_y)]
        y = tuple(int(v) for v in lwe.unpack_image(params, int(packed_y)))
        for theta, client in ((0.0, client_p), (np.pi / 2, client_r)):
            cols = p4.honest_output_table(client_p.pk, branches, theta)
            for bidx in range(1 << nbits):
                col = cols[bidx]
                if np.linalg.norm(col) < 1e-12:
                    continue
                b = tuple((bidx >> j) & 1 for j in range(nbits))
                out = p4.finalize(client, y, b)
                cases += 1
                if fidelity(out.qubit(), col) < 1 - 1e-9:
                    failures += 1
    # merge sweep
    for B1 in (0, 1):
        for B2 in (0, 1):
            for B1p in (0, 1):
                for B2p in (0, 1):
                    in1 = QubitDescription.bb84(B1, B2)
                    in2 = QubitDescription.eight(2 * B1p + 4 * B2p)
                    for s1, s2, _, out in p8.merge_branches(in1, in2):
                        cases += 1
                        want = p8.compute_L(B1, B2, B1p, B2p, s1, s2).qubit()
                        if fidelity(out, want) < 1 - 1e-9:
                            failures += 1
    # combine sweep at t = 2
    for combo in range(16):
        bits = [((combo >> 1) & 1, combo & 1), ((combo >> 3) & 1, (combo >> 2) & 1)]
        states = [QubitDescription.bb84(b1, b2) for b1, b2 in bits]
        recs = [abort.RunRecord(1, b1, b2) for b1, b2 in bits]
        for s_pairs, _, out in abort.gad_xor_branches(states):
            cases += 1
            b1, b2 = abort.combine_bits(recs, s_pairs)
            if fidelity(out, QubitDescription.equatorial(b1 + 2 * b2)) < 1 - 1e-9:
                failures += 1
    return failures, cases


def _backend_tv(params: ParamSet, samples: int, seed: int) -> tuple[float, float]:
    """Sampled agreement of the two backends on the y marginal and on the
    coarse (acceptance, index, family) output statistic."""
    client, key_msg = p4.client_init(params, p4.PLAIN, derive_seed(seed, "tvk"))
    y_counts = {"statevector": Counter(), "two_branch": Counter()}
    o_counts = {"statevector": Counter(), "two_branch": Counter()}
    for backend in ("statevector", "two_branch"):
        for t in range(samples):
            reply = p4.server_honest(key_msg, backend, derive_seed(seed, backend, t))
            out = p4.finalize(client, reply.y, reply.b)
            y_counts[backend][reply.y] += 1
            o_counts[backend][(out.accepted, out.B1, out.B2, out.family)] += 1
    return (
        tv_distance(y_counts["statevector"], y_counts["two_branch"]),
        tv_distance(o_counts["statevector"], o_counts["two_branch"]),
    )


def oracle_check(params: ParamSet, trials: int, seed: int) -> OracleReport:
    pk, td = lwe.gen(params, derive_seed(seed, "key"))
    inv_mism, inv_total = _invert_vs_enumeration(pk, td)
    form_fail, form_cases = _formula_regressions(params, seed)
    tv_y, tv_out = _backend_tv(params, trials, seed)

    # fault injection: a flipped plant bit must surface as a hardcore-identity
    # mismatch on every two-preimage image
    bad_z0 = lwe.DomainElement(td.z0.s, td.z0.e, td.z0.d ^ 1, None)
    bad_td = lwe.Trapdoor(gadget=td.gadget, z0=bad_z0)
    corrupted_detected = False
    table = lwe.exhaustive_image_map(pk)
    for y, want in table.items():
        if len(want) == 2:
            got = lwe.invert(bad_td, pk, np.array(y))
            if len(got) == 2 and (lwe.h(got[0]) ^ lwe.h(got[1])) != bad_td.d0:
                corrupted_detected = True
                break
    return OracleReport(
        invert_mismatches=inv_mism,
        invert_images_checked=inv_total,
        formula_failures=form_fail,
        formula_cases=form_cases,
        tv_y_marginal=tv_y,
        tv_outputs=tv_out,
        samples=trials,
        corrupted_trapdoor_detected=corrupted_detected,
    )
