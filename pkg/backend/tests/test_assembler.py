"""
Tests for the .dasm assembler and disassembler
"""

import pytest

from app.rewriter.assembler import assemble, disassemble, name_hash
from app.rewriter.errors import AssemblyError
from app.rewriter.interpreter import execute
from app.rewriter.isa import GLOBAL_BASE, GLOBAL_STRIDE, DataKind, Instruction, Opcode

from .conftest import all_fixtures


class TestAssemble:
    def test_straight_line(self):
        image = assemble("movi r0, 7\nout r0\nhalt\n")
        assert image.entry == 0
        assert image.code == (
            Instruction(Opcode.MOVI, a=0, imm=7),
            Instruction(Opcode.OUT, a=0),
            Instruction(Opcode.HALT),
        )

    def test_labels_resolve_to_offsets(self):
        image = assemble("""
        .entry start
        pad:
            trap
        start:
            jmp done   ; forward
        done:
            halt
        """)
        assert image.entry == 1
        assert image.code[1] == Instruction(Opcode.JMP, imm=2)

    def test_global_references(self):
        image = assemble("""
        .global first, 2, 5
        .global second, 3
            movi r1, @second+2
            halt
        """)
        assert image.code[0].imm == GLOBAL_BASE + GLOBAL_STRIDE + 2
        assert image.data_objects[0].words == (5, 0)
        assert image.data_objects[1].name_hash == name_hash("second")

    def test_jumptable_is_a_data_object(self):
        image = assemble("""
        .jumptable cases: a b
        a:  halt
        b:  trap
        """)
        table = image.data_objects[0]
        assert table.kind is DataKind.JUMPTABLE
        assert table.words == (0, 1)

    def test_pin_inserts_trap_filler(self):
        image = assemble("""
            movi r0, 1
            halt
        .pin handler 5
        handler:
            out r0
            halt
        """)
        assert [ins.opcode for ins in image.code[2:5]] == [Opcode.TRAP] * 3
        assert image.code[5].opcode is Opcode.OUT
        assert image.pins[0].offset == 5 and image.pins[0].required == 5

    def test_hash_names_are_literal(self):
        assert name_hash("h_00000000000000ff") == 0xFF

    def test_comments_and_case(self):
        image = assemble("# header\nMOVI R0, 0x10 ; sixteen\nHALT\n")
        assert image.code[0].imm == 16


class TestAssembleErrors:
    @pytest.mark.parametrize("source, message", [
        ("jmp nowhere\n", "undefined label"),
        ("a: halt\na: halt\n", "duplicate label"),
        ("movi r0, 99999999999999999999\nhalt\n", "overflow"),
        (".global\nhalt\n", "malformed directive"),
        (".bogus x\nhalt\n", "unknown directive"),
        ("frob r0\n", "unknown mnemonic"),
        ("add r0, r1\nhalt\n", "expects 3 operand"),
        ("movi r9, 1\nhalt\n", "expected a register"),
        ("; nothing\n", "no instructions"),
        (".global big, 1048577\nhalt\n", "overflows its 1048576-word slot"),
    ])
    def test_rejects(self, source, message):
        with pytest.raises(AssemblyError, match=message):
            assemble(source)

    def test_error_carries_line(self):
        with pytest.raises(AssemblyError) as info:
            assemble("halt\n\njmp missing\n")
        assert info.value.line == 3

    def test_pin_already_passed(self):
        source = "movi r0, 1\nmovi r0, 2\nhalt\n.pin late 1\nlate: halt\n"
        with pytest.raises(AssemblyError, match="unreachable"):
            assemble(source)


class TestDisassemble:
    def test_synthetic_labels(self):
        text = disassemble(assemble("start: jmp start\n"))
        assert ".entry L0" in text
        assert "L0:" in text
        assert "jmp L0" in text

    def test_reassembly_runs_identically(self):
        for fixture in all_fixtures():
            image = fixture.image
            again = assemble(disassemble(image))
            for vector in fixture.vectors(count=100, seed=7):
                assert execute(again, vector).outcome == execute(image, vector).outcome, fixture.name

    def test_reassembly_is_byte_identical(self):
        for fixture in all_fixtures():
            once = assemble(disassemble(fixture.image))
            assert once.to_bytes() == fixture.image.to_bytes(), fixture.name
