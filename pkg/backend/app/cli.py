"""
mosaic: command-line entry point for the diversity toolchain

    mosaic asm prog.dasm -o prog.disa
    mosaic run prog.disa --input 1,2,3
    mosaic transform prog.disa --pipeline pipeline.json -o variant.disa
    mosaic verify prog.disa variant.disa --inputs random:50:1
    mosaic sim --config data/sim_config.json

Exit codes: 0 success, 1 operational error, 2 usage error, 3 divergence.
Results go to standard output, diagnostics to standard error.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence
import argparse
import json
import logging
import sys

from pydantic import ValidationError

from .models.schemas import PipelineSpec
from .rewriter.assembler import assemble, disassemble
from .rewriter.emitter import digest_hex, emit
from .rewriter.equivalence import multi_variant_run, parse_input_source, verify
from .rewriter.errors import RewriterError
from .rewriter.interpreter import DEFAULT_STEP_LIMIT, execute
from .rewriter.ir import dump_ir, validate
from .rewriter.isa import ProgramImage
from .rewriter.lifter import lift
from .rewriter.transforms.pipeline import check_composition, run_pipeline
from .services.config import ServiceConfig
from .services.registry import RegistryError
from .services.replay import ReplayError, replay_against_registry
from .services.sim import SimConfigError, load_sim_config, simulate

logger = logging.getLogger("mosaic")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3


class UsageError(Exception):
    pass


def load_image(path: str) -> ProgramImage:
    """Read a .disa image; .dasm sources are assembled on the fly"""
    source = Path(path)
    if source.suffix == ".dasm":
        return assemble(source.read_text())
    return ProgramImage.from_bytes(source.read_bytes())


def parse_words(text: Optional[str]) -> List[int]:
    if not text:
        return []
    try:
        return [int(word, 0) for word in text.split(",") if word.strip()]
    except ValueError as e:
        raise UsageError(f"bad input word list '{text}': {e}") from e


def load_pipeline(path: str) -> PipelineSpec:
    try:
        with open(path, "r") as f:
            return PipelineSpec.model_validate(json.load(f))
    except json.JSONDecodeError as e:
        raise UsageError(f"pipeline {path} is not JSON: {e}") from e
    except ValidationError as e:
        raise UsageError(f"invalid pipeline {path}: {e}") from e


def emit_result(args, payload: Dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2))
    elif text:
        print(text)


# ---------------------------------------------------------------- subcommands

def cmd_asm(args) -> int:
    image = assemble(Path(args.source).read_text())
    output = Path(args.output or Path(args.source).with_suffix(".disa"))
    output.write_bytes(image.to_bytes())
    logger.info(f"✓ Assembled {len(image.code)} records into {output}")
    emit_result(args, {"output": str(output), "records": len(image.code), "digest": digest_hex(image)}, "")
    return EXIT_OK


def cmd_dasm(args) -> int:
    text = disassemble(load_image(args.image))
    if args.output:
        Path(args.output).write_text(text)
    emit_result(args, {"text": text}, "" if args.output else text.rstrip("\n"))
    return EXIT_OK


def cmd_run(args) -> int:
    result = execute(load_image(args.image), parse_words(args.input), args.step_limit)
    lines = [str(word) for word in result.output] + [f"[{result.describe()}]"]
    emit_result(args, result.to_dict(), "\n".join(lines))
    return EXIT_OK


def cmd_transform(args) -> int:
    pipeline = load_pipeline(args.pipeline)
    if args.seed is not None:
        pipeline = pipeline.with_seed(args.seed)
    image = load_image(args.image)
    for note in check_composition(pipeline):
        logger.info(f"composition: {note}")
    result = run_pipeline(pipeline, lift(image))
    variant = emit(result.ir)
    output = Path(args.output)
    output.write_bytes(variant.to_bytes())

    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    lines = [f"stage {s.index} {s.plugin:<20} work={s.work_set:<4} {s.seconds * 1000:8.2f} ms"
             for s in result.stages]
    lines.append(f"wrote {output} digest={digest_hex(variant)}")
    emit_result(args, {
        "output": str(output),
        "digest": digest_hex(variant),
        "stages": [s.to_dict() for s in result.stages],
        "warnings": result.warnings,
    }, "\n".join(lines))
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        vectors = parse_input_source(args.inputs)
    except ValueError as e:
        raise UsageError(str(e)) from e
    report = verify(load_image(args.original), load_image(args.candidate), vectors, args.step_limit)
    if report.equivalent:
        text = f"equivalent on {report.vectors} input vectors"
    else:
        text = "\n".join(["DIVERGENT"] + [d.describe() for d in report.divergences[:10]])
    emit_result(args, report.to_dict(), text)
    return EXIT_OK if report.equivalent else EXIT_DIVERGENCE


def cmd_lift(args) -> int:
    ir = lift(load_image(args.image))
    violations = validate(ir)
    text = dump_ir(ir)
    if violations:
        text += "\n" + "\n".join(f"violation: {v}" for v in violations)
    emit_result(args, {
        "blocks": len(ir.blocks),
        "instructions": len(ir.instructions),
        "residue": len(ir.residue),
        "dump": dump_ir(ir),
        "violations": [str(v) for v in violations],
    }, text)
    return EXIT_OK if not violations else EXIT_ERROR


def cmd_mvx(args) -> int:
    images = [load_image(path) for path in args.images]
    report = multi_variant_run(images, parse_words(args.input), args.step_limit)
    lines = [f"{path}: {list(r.output)} [{r.describe()}]" + ("  <- dissent" if i in report.dissenters else "")
             for i, (path, r) in enumerate(zip(args.images, report.results))]
    emit_result(args, report.to_dict(), "\n".join(lines))
    return EXIT_DIVERGENCE if report.divergent else EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .main import create_app

    overrides = {
        "server.host": args.host,
        "server.port": args.port,
        "registry.data_dir": args.data_dir,
        "log_level": args.log_level,
    }
    config = ServiceConfig(args.config, overrides=overrides)
    uvicorn.run(create_app(config), host=config.get("server.host"), port=int(config.get("server.port")),
                log_level=config.log_level.lower())
    return EXIT_OK


def cmd_sim(args) -> int:
    config = load_sim_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["rng_seed"] = args.seed
    if args.event_log:
        updates["event_log"] = args.event_log
    if updates:
        config = config.model_copy(update=updates)
    result = simulate(config)
    # Results are always JSON
    print(json.dumps(result.model_dump(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_replay(args) -> int:
    config = load_sim_config(args.config)
    report = replay_against_registry(config, args.endpoint, args.image, tolerance=args.tolerance)
    lines = [f"{key}: |sim - live| = {value:.4f}" for key, value in report.differences.items()]
    lines += [f"policy mismatch: {m}" for m in report.policy_mismatches]
    lines.append("DIVERGENT" if report.divergent else "consistent")
    emit_result(args, report.to_dict(), "\n".join(lines))
    return EXIT_DIVERGENCE if report.divergent else EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="Emit a single JSON object on stdout")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR")

    parser = argparse.ArgumentParser(prog="mosaic", description="Binary diversity toolchain and variant registry")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asm", parents=[common], help="Assemble .dasm into .disa")
    p.add_argument("source")
    p.add_argument("-o", "--output")
    p.set_defaults(handler=cmd_asm)

    p = sub.add_parser("dasm", parents=[common], help="Disassemble a .disa image")
    p.add_argument("image")
    p.add_argument("-o", "--output")
    p.set_defaults(handler=cmd_dasm)

    p = sub.add_parser("run", parents=[common], help="Execute an image")
    p.add_argument("image")
    p.add_argument("--input", default="", help="Comma-separated input words")
    p.add_argument("--step-limit", type=int, default=DEFAULT_STEP_LIMIT)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("transform", parents=[common], help="Apply a transform pipeline")
    p.add_argument("image")
    p.add_argument("--pipeline", required=True, help="Pipeline spec JSON")
    p.add_argument("--seed", type=int, help="Override the pipeline master seed")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(handler=cmd_transform)

    p = sub.add_parser("verify", parents=[common], help="Check functional equivalence of two images")
    p.add_argument("original")
    p.add_argument("candidate")
    p.add_argument("--inputs", required=True, help="File of input vectors or random:N:seed")
    p.add_argument("--step-limit", type=int, default=DEFAULT_STEP_LIMIT)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("lift", parents=[common], help="Print the IR dump and validation report")
    p.add_argument("image")
    p.set_defaults(handler=cmd_lift)

    p = sub.add_parser("mvx", parents=[common], help="Run variants side by side and flag divergence")
    p.add_argument("images", nargs="+")
    p.add_argument("--input", default="")
    p.add_argument("--step-limit", type=int, default=DEFAULT_STEP_LIMIT)
    p.set_defaults(handler=cmd_mvx)

    p = sub.add_parser("serve", parents=[common], help="Run the registry service")
    p.add_argument("--config")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--data-dir")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("sim", parents=[common], help="Simulate a pool policy")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="Override rng_seed")
    p.add_argument("--event-log", help="CSV path for the event log")
    p.set_defaults(handler=cmd_sim)

    p = sub.add_parser("replay", parents=[common], help="Replay a simulator workload against a registry")
    p.add_argument("--config", required=True)
    p.add_argument("--endpoint", required=True, help="Registry base URL")
    p.add_argument("--image", required=True)
    p.add_argument("--tolerance", type=float, default=0.03)
    p.set_defaults(handler=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    level = args.log_level or ServiceConfig(overrides=None).log_level
    logging.basicConfig(level=level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.handler(args)
    except UsageError as e:
        print(f"mosaic {args.command}: {e}", file=sys.stderr)
        if args.json:
            print(json.dumps({"error": str(e), "code": "usage"}))
        return EXIT_USAGE
    except (RewriterError, RegistryError, SimConfigError, ReplayError, OSError, ValueError) as e:
        code = getattr(e, "code", "error")
        print(f"mosaic {args.command}: ✗ {e}", file=sys.stderr)
        if args.json:
            print(json.dumps({"error": str(e), "code": code}))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
