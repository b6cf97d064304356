"""
Pipeline composition

Stages run in order, each with its own seed derived from the master seed,
the stage index and the plugin name. Analyses a plugin declares are
recomputed before it runs. A stage left with nothing to do because an
earlier stage rewrote a facet it reads produces a warning, not an error.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union
import logging
import time

from ...models.schemas import PipelineSpec
from ..analysis import reanalyze
from ..errors import TransformError, UnknownPluginError
from ..ir import ProgramIR
from ..prng import derive_seed
from .base import TransformPlugin
from .heap import HeapPad
from .indirect import CfiCheck, IndirectToDirect
from .layout import Bilr, GlobalShuffle
from .stack import Canary, StackPad

logger = logging.getLogger(__name__)

CATALOG: Mapping[str, TransformPlugin] = {
    plugin.name: plugin
    for plugin in (Bilr(), StackPad(), GlobalShuffle(), HeapPad(), Canary(), IndirectToDirect(), CfiCheck())
}


def resolve(name: str) -> TransformPlugin:
    plugin = CATALOG.get(name)
    if plugin is None:
        raise UnknownPluginError(f"unknown plugin '{name}' (known: {', '.join(sorted(CATALOG))})")
    return plugin


def as_pipeline(pipeline: Union[PipelineSpec, Dict]) -> PipelineSpec:
    if isinstance(pipeline, PipelineSpec):
        return pipeline
    return PipelineSpec.model_validate(pipeline)


@dataclass
class StageReport:
    index: int
    plugin: str
    seed: int
    work_set: int
    seconds: float
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "index": self.index,
            "plugin": self.plugin,
            "seed": self.seed,
            "work_set": self.work_set,
            "ms": round(self.seconds * 1000, 3),
            "warnings": list(self.warnings),
        }


@dataclass
class PipelineResult:
    ir: ProgramIR
    stages: List[StageReport]

    @property
    def warnings(self) -> List[str]:
        return [w for stage in self.stages for w in stage.warnings]


def _starvation_warning(plugins: List[TransformPlugin], index: int, initial: int) -> Optional[str]:
    plugin = plugins[index]
    if plugin.diversity:
        return None
    if initial > 0:
        for earlier in reversed(plugins[:index]):
            consumed = sorted(f.value for f in plugin.reads & earlier.writes)
            if consumed:
                return f"facet {consumed[0]} consumed by earlier stage"
    return plugin.idle_warning


def run_pipeline(pipeline: Union[PipelineSpec, Dict], ir: ProgramIR) -> PipelineResult:
    """
    Apply every stage of a pipeline

    Raises:
        UnknownPluginError: before any stage runs
        TransformError: a plugin refused; carries the stage index
    """
    spec = as_pipeline(pipeline)
    plugins = [resolve(stage.plugin) for stage in spec.stages]
    initial = [plugin.work_set(ir) for plugin in plugins]

    current = ir
    reports: List[StageReport] = []
    for index, (stage, plugin) in enumerate(zip(spec.stages, plugins)):
        seed = derive_seed(spec.master_seed, index, plugin.name)
        started = time.perf_counter()
        stale = [name for name in plugin.needs if not current.is_valid(name)]
        if stale:
            current = reanalyze(current, stale)
        work = plugin.work_set(current)
        warnings: List[str] = []
        if work == 0:
            message = _starvation_warning(plugins, index, initial[index])
            if message:
                warnings.append(f"stage {index} ({plugin.name}): {message}")
                logger.warning(f"⚠ {warnings[-1]}")
        try:
            current = plugin.apply(current, seed, stage.config)
        except TransformError as e:
            raise TransformError(plugin.name, e.diagnostic, stage=index) from e
        elapsed = time.perf_counter() - started
        reports.append(StageReport(index, plugin.name, seed, work, elapsed, warnings))
        logger.debug(f"stage {index} {plugin.name}: work_set={work} {elapsed * 1000:.2f} ms")
    return PipelineResult(current, reports)


def compose(pipeline: Union[PipelineSpec, Dict], ir: ProgramIR) -> Tuple[ProgramIR, List[str]]:
    """Apply a pipeline and return (transformed IR, warnings)"""
    result = run_pipeline(pipeline, ir)
    return result.ir, result.warnings


def check_composition(pipeline: Union[PipelineSpec, Dict]) -> List[str]:
    """Static facet overlaps: later stages reading what an earlier stage writes"""
    spec = as_pipeline(pipeline)
    plugins = [resolve(stage.plugin) for stage in spec.stages]
    notes = []
    for index, plugin in enumerate(plugins):
        for earlier_index, earlier in enumerate(plugins[:index]):
            shared = sorted(f.value for f in plugin.reads & earlier.writes)
            if shared and earlier is not plugin:
                notes.append(f"stage {index} ({plugin.name}) reads {', '.join(shared)} "
                             f"written by stage {earlier_index} ({earlier.name})")
    return notes
