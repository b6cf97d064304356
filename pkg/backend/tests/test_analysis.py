"""
Tests for the CFG and liveness analyses

Liveness is checked against a brute-force path search from every
instruction on 200 random programs of up to 8 blocks.
"""

from typing import Dict, FrozenSet, List, Set

import numpy as np
import pytest

from app.rewriter.analysis import (
    CFG,
    LIVENESS,
    build_cfg,
    compute_liveness,
    liveness_of,
    reanalyze,
)
from app.rewriter.assembler import assemble
from app.rewriter.errors import AnalysisError
from app.rewriter.ir import ProgramIR
from app.rewriter.isa import GENERAL_REGS, INDIRECT_BRANCHES
from app.rewriter.lifter import lift

from .conftest import load_fixture

STRAIGHT = ["movi", "mov", "add", "sub", "mul", "in", "out", "load", "store"]


def random_program(rng: np.random.Generator) -> str:
    """Random assembly over up to 8 labelled blocks; the last one halts"""
    n_blocks = int(rng.integers(1, 9))

    def reg() -> str:
        return f"r{int(rng.integers(0, 8))}"

    def label() -> str:
        return f"L{int(rng.integers(0, n_blocks))}"

    lines = []
    uses_table = False
    for k in range(n_blocks):
        lines.append(f"L{k}:")
        for _ in range(int(rng.integers(1, 4))):
            op = STRAIGHT[int(rng.integers(0, len(STRAIGHT)))]
            if op == "movi":
                lines.append(f"    movi {reg()}, {int(rng.integers(-5, 5))}")
            elif op == "mov":
                lines.append(f"    mov {reg()}, {reg()}")
            elif op in ("add", "sub", "mul"):
                lines.append(f"    {op} {reg()}, {reg()}, {reg()}")
            elif op in ("in", "out"):
                lines.append(f"    {op} {reg()}")
            else:
                lines.append(f"    {op} {reg()}, {reg()}, {int(rng.integers(0, 4))}")
        if k == n_blocks - 1:
            lines.append("    halt")
            continue
        ending = int(rng.integers(0, 6))
        if ending == 1:
            lines.append(f"    jmp {label()}")
        elif ending == 2:
            lines.append(f"    beq {reg()}, {reg()}, {label()}")
        elif ending == 3:
            lines.append(f"    blt {reg()}, {reg()}, {label()}")
        elif ending == 4:
            lines.append(f"    jmpi {reg()}")
            uses_table = True
        elif ending == 5:
            lines.append("    halt")
    header = []
    if uses_table:
        header.append(f".jumptable table: {label()} {label()}")
    return "\n".join(header + lines) + "\n"


def oracle_live_in(ir: ProgramIR) -> Dict[int, FrozenSet[int]]:
    """
    Registers read on some path before being written

    Exhaustive search over (instruction, registers not yet written) states,
    which covers every acyclic path and every loop unrolling that matters.
    """
    targets = ir.known_indirect_targets()

    def successors(iid: int) -> List[int]:
        ins = ir.instructions[iid]
        succ = list(ins.branch_targets)
        if ins.opcode in INDIRECT_BRANCHES:
            succ.extend(targets)
        if ins.fallthrough is not None:
            succ.append(ins.fallthrough)
        return succ

    result = {}
    for start in ir.instructions:
        live: Set[int] = set()
        seen = set()
        stack = [(start, frozenset(GENERAL_REGS))]
        while stack:
            iid, undecided = stack.pop()
            if (iid, undecided) in seen:
                continue
            seen.add((iid, undecided))
            payload = ir.instructions[iid].payload
            live.update(undecided & payload.reads())
            remaining = undecided - payload.writes()
            if remaining:
                stack.extend((succ, remaining) for succ in successors(iid))
        result[start] = frozenset(live)
    return result


class TestLivenessOracle:
    def test_random_programs_match_brute_force(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for _ in range(200):
            ir = lift(assemble(random_program(rng)))
            assert len(ir.blocks) <= 8
            computed = compute_liveness(ir)
            expected = oracle_live_in(ir)
            for iid, regs in expected.items():
                assert computed.live_in[iid] & GENERAL_REGS == regs, iid
                assert computed.dead_before(iid) == GENERAL_REGS - regs
            checked += 1
        assert checked == 200

    def test_fixtures_match_brute_force(self):
        for name in ("sum_loop", "jumptable_switch", "bubble_sort", "state_machine"):
            ir = lift(load_fixture(name).image)
            computed = compute_liveness(ir)
            for iid, regs in oracle_live_in(ir).items():
                assert computed.live_in[iid] & GENERAL_REGS == regs, (name, iid)


class TestLiveness:
    def test_dead_after_overwrite(self):
        ir = lift(assemble("movi r0, 1\nmovi r1, 2\nout r1\nhalt\n"))
        result = compute_liveness(ir)
        assert 0 in result.dead_before(0)
        assert 1 in result.dead_before(1)
        assert 1 not in result.dead_before(2)

    def test_sp_never_reported(self):
        ir = lift(load_fixture("factorial").image)
        result = compute_liveness(ir)
        assert all(8 not in dead for dead in result.dead.values())

    def test_ret_reaches_every_return_site(self):
        ir = lift(assemble("""
            call f
            out r1
            halt
        f:
            movi r1, 3
            ret
        """))
        result = compute_liveness(ir)
        assert 1 not in result.dead_before(4)
        assert 1 in result.dead_before(3)


class TestCaching:
    def test_reanalyze_marks_valid(self):
        ir = lift(load_fixture("gcd").image)
        fresh = reanalyze(ir, [LIVENESS])
        assert fresh.is_valid(LIVENESS)
        assert fresh.cached(LIVENESS) == compute_liveness(ir)
        assert not ir.is_valid(LIVENESS)

    def test_reanalyze_in_place(self):
        ir = lift(load_fixture("gcd").image)
        assert reanalyze(ir, "all", in_place=True) is ir
        assert ir.is_valid(CFG) and ir.is_valid(LIVENESS)

    def test_liveness_of_caches(self):
        ir = lift(load_fixture("gcd").image)
        first = liveness_of(ir)
        assert ir.cached(LIVENESS) is first

    def test_unknown_analysis(self):
        with pytest.raises(AnalysisError, match="unknown analysis"):
            reanalyze(lift(load_fixture("gcd").image), "dominators")

    def test_invalid_ir_is_refused(self):
        ir = lift(load_fixture("gcd").image)
        ir.entry = 999
        with pytest.raises(AnalysisError, match="invalid IR"):
            reanalyze(ir)


class TestCfg:
    def test_jumptable_edges(self):
        ir = lift(load_fixture("jumptable_switch").image)
        graph = build_cfg(ir)
        dispatch = next(blk for blk in ir.blocks if ir.instructions[blk.members[-1]].opcode.name == "JMPI")
        cases = {ir.block_of(e).id for e in ir.jumptable_entries()}
        assert cases <= set(graph.successors(dispatch.id))
        assert graph.graph["entry"] == ir.block_of(ir.entry).id
        assert graph.number_of_nodes() == len(ir.blocks)
