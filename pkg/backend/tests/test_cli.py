"""
Tests for the mosaic command line
"""

import json

import pytest

from app.cli import EXIT_DIVERGENCE, EXIT_ERROR, EXIT_OK, EXIT_USAGE, main
from app.rewriter.isa import ProgramImage

from .conftest import PROGRAM_DIR


def program(name: str) -> str:
    return str(PROGRAM_DIR / f"{name}.dasm")


class TestRun:
    def test_run_prints_output(self, capsys):
        assert main(["run", program("const7")]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "7"
        assert lines[-1] == "[halt]"

    def test_run_json(self, capsys):
        assert main(["run", program("sum_loop"), "--input", "1,2,3,4,5", "--json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["termination"] == "halt"

    def test_bad_words_are_usage_errors(self, capsys):
        assert main(["run", program("const7"), "--input", "1,x"]) == EXIT_USAGE
        assert "bad input word list" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert main(["run", "/nonexistent/prog.disa"]) == EXIT_ERROR

    def test_no_subcommand(self):
        assert main([]) == EXIT_USAGE

    def test_help(self):
        assert main(["--help"]) == EXIT_OK


class TestToolchain:
    def test_asm_and_dasm(self, tmp_path, capsys):
        output = tmp_path / "const7.disa"
        assert main(["asm", program("const7"), "-o", str(output)]) == EXIT_OK
        image = ProgramImage.from_bytes(output.read_bytes())
        assert image.code
        assert main(["dasm", str(output)]) == EXIT_OK
        assert "halt" in capsys.readouterr().out

    def test_transform_then_verify(self, tmp_path, capsys):
        pipeline = tmp_path / "pipeline.json"
        pipeline.write_text(json.dumps({"master_seed": 3, "stages": [{"plugin": "bilr"}, {"plugin": "stack_pad"}]}))
        variant = tmp_path / "variant.disa"
        assert main(["transform", program("weighted_blocks"), "--pipeline", str(pipeline),
                     "-o", str(variant), "--json"]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert [s["plugin"] for s in report["stages"]] == ["bilr", "stack_pad"]

        assert main(["verify", program("weighted_blocks"), str(variant), "--inputs", "random:30:1"]) == EXIT_OK
        assert "equivalent on 30 input vectors" in capsys.readouterr().out

    def test_transform_warnings_go_to_stderr(self, tmp_path, capsys):
        pipeline = tmp_path / "pipeline.json"
        pipeline.write_text(json.dumps({"stages": [{"plugin": "cfi_check"}]}))
        assert main(["transform", program("sum_loop"), "--pipeline", str(pipeline),
                     "-o", str(tmp_path / "v.disa")]) == EXIT_OK
        assert "no indirect branches to instrument" in capsys.readouterr().err

    def test_refusal_is_an_error(self, tmp_path, capsys):
        pipeline = tmp_path / "pipeline.json"
        pipeline.write_text(json.dumps({"stages": [{"plugin": "global_shuffle"}]}))
        assert main(["transform", program("unattributed_global"), "--pipeline", str(pipeline),
                     "-o", str(tmp_path / "v.disa"), "--json"]) == EXIT_ERROR
        assert json.loads(capsys.readouterr().out)["code"] == "transform_refused"

    def test_invalid_pipeline_is_usage(self, tmp_path):
        pipeline = tmp_path / "pipeline.json"
        pipeline.write_text(json.dumps({"master_seed": -1}))
        assert main(["transform", program("sum_loop"), "--pipeline", str(pipeline),
                     "-o", str(tmp_path / "v.disa")]) == EXIT_USAGE

    def test_verify_divergence(self, capsys):
        assert main(["verify", program("abs_diff"), program("max3"), "--inputs", "random:10:2"]) == EXIT_DIVERGENCE
        assert capsys.readouterr().out.startswith("DIVERGENT")

    def test_verify_bad_inputs(self):
        assert main(["verify", program("abs_diff"), program("max3"), "--inputs", "random:10"]) == EXIT_USAGE

    def test_lift(self, capsys):
        assert main(["lift", program("jumptable_switch")]) == EXIT_OK
        assert capsys.readouterr().out.startswith("entry")

    def test_mvx_flags_hardened_dissent(self, tmp_path, capsys):
        pipeline = tmp_path / "pipeline.json"
        pipeline.write_text(json.dumps({"stages": [{"plugin": "cfi_check"}]}))
        hardened = tmp_path / "hardened.disa"
        assert main(["transform", program("cfi_dispatch"), "--pipeline", str(pipeline), "-o", str(hardened)]) == 0
        capsys.readouterr()
        code = main(["mvx", program("cfi_dispatch"), program("cfi_dispatch"), str(hardened), "--input", "5,1"])
        assert code == EXIT_DIVERGENCE
        assert "<- dissent" in capsys.readouterr().out.splitlines()[2]


class TestSim:
    def test_sim_prints_json(self, tmp_path, capsys):
        config = tmp_path / "sim.json"
        config.write_text(json.dumps({"arrival": {"kind": "poisson", "rate": 5},
                                      "generation_time": {"kind": "fixed", "seconds": 0.1},
                                      "horizon": 20}))
        assert main(["sim", "--config", str(config), "--seed", "4"]) == EXIT_OK
        result = json.loads(capsys.readouterr().out)
        assert result["requests"] == result["served"] + result["rejected"]

    def test_sim_bad_config(self, tmp_path):
        config = tmp_path / "sim.json"
        config.write_text("{}")
        assert main(["sim", "--config", str(config)]) == EXIT_ERROR


@pytest.mark.parametrize("command", ["asm", "run", "verify", "transform"])
def test_missing_arguments_are_usage_errors(command):
    assert main([command]) == EXIT_USAGE
