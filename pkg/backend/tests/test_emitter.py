"""
Tests for lowering the IR back to an image
"""

import pytest

from app.rewriter.emitter import digest, digest_hex, emit
from app.rewriter.errors import EmitError
from app.rewriter.interpreter import execute
from app.rewriter.isa import Opcode
from app.rewriter.lifter import lift
from app.rewriter.transforms import bilr

from .conftest import load_fixture


class TestPlacement:
    def test_severed_fallthroughs_get_jumps(self):
        fixture = load_fixture("sum_loop")
        ir = lift(fixture.image)
        ir.set_layout([blk.id for blk in reversed(ir.layout())])
        image = emit(ir)
        assert len(image.code) > len(fixture.image.code)
        for vector in fixture.vectors(count=30):
            assert execute(image, vector).outcome == execute(fixture.image, vector).outcome

    def test_pins_hold_under_shuffling(self):
        fixture = load_fixture("pinned_handler")
        base = lift(fixture.image)
        for seed in range(10):
            image = emit(bilr(base, seed))
            assert [(p.offset, p.required) for p in image.pins] == [(40, 40)]
            assert image.code[40].opcode is Opcode.MUL
            for vector in ([3], [-2], [0]):
                assert execute(image, vector).outcome == execute(fixture.image, vector).outcome

    def test_filler_is_trap(self):
        image = emit(lift(load_fixture("pinned_handler").image))
        assert all(ins.opcode is Opcode.TRAP for ins in image.code[8:40])

    def test_pin_already_passed(self):
        ir = lift(load_fixture("pinned_handler").image)
        (pinned, _), = ir.pins.items()
        ir.pins[pinned] = 2
        with pytest.raises(EmitError, match="unreachable"):
            emit(ir)

    def test_invalid_ir_is_refused(self):
        ir = lift(load_fixture("const7").image)
        ir.entry = 42
        with pytest.raises(EmitError, match="invalid IR"):
            emit(ir)


class TestReferences:
    def test_global_references_follow_data_order(self):
        fixture = load_fixture("global_offsets")
        ir = lift(fixture.image)
        ir.set_data_order([1, 0])
        image = emit(ir)
        assert image.data_objects[0] == fixture.image.data_objects[1]
        assert execute(image, [0, 3]).output == (240,)

    def test_jumptables_are_patched(self):
        fixture = load_fixture("jumptable_switch")
        ir = lift(fixture.image)
        ir.set_layout([blk.id for blk in reversed(ir.layout())])
        image = emit(ir)
        table = image.data_objects[0]
        assert table.words != fixture.image.data_objects[0].words
        for selector in range(-1, 5):
            assert execute(image, [selector, 10]).outcome == execute(fixture.image, [selector, 10]).outcome


class TestDigest:
    def test_digest_is_sha256_of_bytes(self):
        image = load_fixture("const7").image
        assert len(digest(image)) == 32
        assert digest_hex(image) == digest(image).hex()

    def test_deterministic(self):
        ir = lift(load_fixture("weighted_blocks").image)
        assert digest_hex(emit(bilr(ir, 5))) == digest_hex(emit(bilr(ir, 5)))
        assert digest_hex(emit(bilr(ir, 5))) != digest_hex(emit(bilr(ir, 6)))
