"""
Static analyses over the IR

The control-flow model is conservative: indirect branches may reach every
known indirect target (jumptable entries and pins) and RET may reach every
return site in the program.
"""

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Union
import logging

import networkx as nx

from .errors import AnalysisError
from .ir import CachedAnalysis, ProgramIR, validate
from .isa import GENERAL_REGS, INDIRECT_BRANCHES, Opcode

logger = logging.getLogger(__name__)

CFG = "cfg"
LIVENESS = "liveness"
ANALYSES = (CFG, LIVENESS)


@dataclass(frozen=True)
class LivenessResult:
    """Registers dead immediately before each instruction (SP never included)"""

    dead: Dict[int, FrozenSet[int]]
    live_in: Dict[int, FrozenSet[int]]

    def dead_before(self, iid: int) -> FrozenSet[int]:
        return self.dead.get(iid, frozenset())

    def __eq__(self, other) -> bool:
        return isinstance(other, LivenessResult) and self.dead == other.dead and self.live_in == other.live_in


def instruction_successors(ir: ProgramIR, iid: int, targets: Optional[List[int]] = None,
                           returns: Optional[List[int]] = None) -> List[int]:
    ins = ir.instructions[iid]
    op = ins.opcode
    succ: List[int] = list(ins.branch_targets)
    if op in INDIRECT_BRANCHES:
        succ.extend(ir.known_indirect_targets() if targets is None else targets)
    elif op is Opcode.RET:
        succ.extend(ir.return_sites() if returns is None else returns)
    if ins.fallthrough is not None:
        succ.append(ins.fallthrough)
    seen = set()
    return [s for s in succ if not (s in seen or seen.add(s))]


def build_cfg(ir: ProgramIR) -> nx.DiGraph:
    """Block-level control-flow graph; nodes are block ids"""
    graph = nx.DiGraph()
    for blk in ir.layout():
        graph.add_node(blk.id, rank=blk.layout_rank, size=len(blk.members))
    for blk in ir.blocks:
        for succ in blk.successors:
            graph.add_edge(blk.id, succ)
    if ir.entry is not None and ir.entry in ir.instructions:
        graph.graph["entry"] = ir.block_of(ir.entry).id
    return graph


def instruction_graph(ir: ProgramIR) -> nx.DiGraph:
    """Instruction-level control-flow graph; nodes are instruction ids"""
    targets = ir.known_indirect_targets()
    returns = ir.return_sites()
    graph = nx.DiGraph()
    graph.add_nodes_from(ir.instructions)
    for iid in ir.instructions:
        for succ in instruction_successors(ir, iid, targets, returns):
            graph.add_edge(iid, succ)
    return graph


def _require_valid(ir: ProgramIR) -> None:
    report = validate(ir)
    if report:
        raise AnalysisError(f"invalid IR: {report[0]} ({len(report)} violation(s))")


def compute_liveness(ir: ProgramIR) -> LivenessResult:
    """
    Backward may-liveness over the instruction-level CFG

    A register is dead before an instruction when no path from it reads the
    register before writing it.
    """
    _require_valid(ir)
    graph = instruction_graph(ir)

    uses = {iid: ins.payload.reads() for iid, ins in ir.instructions.items()}
    defs = {iid: ins.payload.writes() for iid, ins in ir.instructions.items()}
    live_in: Dict[int, FrozenSet[int]] = {iid: frozenset() for iid in ir.instructions}

    order = [ins.id for ins in ir.iter_layout()]
    worklist = list(order)
    pending = set(worklist)
    while worklist:
        iid = worklist.pop()
        pending.discard(iid)
        live_out = frozenset().union(*(live_in[s] for s in graph.successors(iid)))
        new_in = uses[iid] | (live_out - defs[iid])
        if new_in != live_in[iid]:
            live_in[iid] = new_in
            for pred in graph.predecessors(iid):
                if pred not in pending:
                    pending.add(pred)
                    worklist.append(pred)

    dead = {iid: frozenset(GENERAL_REGS - regs) for iid, regs in live_in.items()}
    return LivenessResult(dead, live_in)


Selector = Union[str, Iterable[str]]


def _selection(which: Selector) -> List[str]:
    if isinstance(which, str):
        names = list(ANALYSES) if which == "all" else [which]
    else:
        names = list(which)
    unknown = [n for n in names if n not in ANALYSES]
    if unknown:
        raise AnalysisError(f"unknown analysis: {', '.join(unknown)}")
    return names


def reanalyze(ir: ProgramIR, which: Selector = "all", in_place: bool = False) -> ProgramIR:
    """
    Recompute the selected cached analyses and mark them valid

    Unselected analyses are left as they are, stale or not.
    """
    names = _selection(which)
    _require_valid(ir)
    target = ir if in_place else ir.copy()
    for name in names:
        if name == CFG:
            result = build_cfg(target)
        else:
            result = compute_liveness(target)
        target.analyses[name] = CachedAnalysis(result, True)
        logger.debug(f"reanalyzed {name}")
    return target


def liveness_of(ir: ProgramIR) -> LivenessResult:
    """Cached liveness when valid, freshly computed (and cached) otherwise"""
    cached = ir.cached(LIVENESS)
    if cached is None:
        cached = compute_liveness(ir)
        ir.analyses[LIVENESS] = CachedAnalysis(cached, True)
    return cached
