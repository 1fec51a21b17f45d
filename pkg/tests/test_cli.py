"""End-to-end tests of the command line surface and its report contract."""
import json
import math

import numpy as np
import pytest

from mobius_lab.cli import EXIT_OK, EXIT_TOLERANCE, EXIT_VALIDATION, main
from mobius_lab.spaceio import load_space, save_space
from mobius_lab.generate import random_euclidean_space
from mobius_lab.space import Quadruple, cross_ratio
from mobius_lab.transforms import PointMap, moebius_defect


def write_config(path, text):
    path.write_text(text)
    return str(path)


def read_report(path):
    with open(path) as fh:
        return json.load(fh)


class TestRun:
    def test_cnd_heisenberg_report(self, tmp_path):
        config = write_config(
            tmp_path / "cnd.toml",
            f"""
kind = "cnd_heisenberg"
seed = 7
dim = 1
count = 24
output = "{tmp_path}/cnd.report.json"
""",
        )
        assert main(["run", config]) == EXIT_OK
        report = read_report(tmp_path / "cnd.report.json")
        assert report["results"]["is_cnd"] is True
        assert len(report["results"]["centered_spectrum"]) == 24
        assert report["status"] == "ok"

    def test_integral_grid_csv(self, tmp_path):
        config = write_config(
            tmp_path / "grid.toml",
            f"""
kind = "integral_grid"
output = "{tmp_path}/grid.report.json"
output_csv = "{tmp_path}/grid.csv"
""",
        )
        assert main(["run", config]) == EXIT_OK
        rows = (tmp_path / "grid.csv").read_text().strip().splitlines()
        assert rows[0] == "r,t,lhs,rhs,rel_error"
        assert len(rows) == 10  # 3 x 3 grid plus header

    def test_missing_config_is_validation_error(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.toml")]) == EXIT_VALIDATION

    def test_unknown_kind(self, tmp_path):
        config = write_config(tmp_path / "bad.toml", 'kind = "not_a_thing"\n')
        assert main(["run", config]) == EXIT_VALIDATION

    def test_missing_space_file(self, tmp_path):
        config = write_config(
            tmp_path / "missing.toml",
            'kind = "moebius_defect"\nseed = 1\nspace = "no_such.csv"\n',
        )
        assert main(["run", config]) == EXIT_VALIDATION

    def test_missing_seed_rejected(self, tmp_path):
        config = write_config(
            tmp_path / "noseed.toml",
            f'kind = "cnd_heisenberg"\ndim = 1\ncount = 8\noutput = "{tmp_path}/x.json"\n',
        )
        assert main(["run", config]) == EXIT_VALIDATION

    def test_seed_override_flag(self, tmp_path):
        config = write_config(
            tmp_path / "s.toml",
            f'kind = "cnd_heisenberg"\ndim = 1\ncount = 8\noutput = "{tmp_path}/s.json"\n',
        )
        assert main(["run", config, "--seed", "3"]) == EXIT_OK
        assert read_report(tmp_path / "s.json")["seed"] == 3

    def test_tolerance_failure_exit_code(self, tmp_path):
        # a space violating the axioms drives verify_space to exit 3
        bad = tmp_path / "bad_space.csv"
        bad.write_text("id,a,b\na,0,inf\nb,inf,0\n")
        config = write_config(
            tmp_path / "verify.toml",
            f'kind = "verify_space"\nspace = "{bad}"\noutput = "{tmp_path}/v.json"\n',
        )
        assert main(["run", config]) == EXIT_TOLERANCE
        assert read_report(tmp_path / "v.json")["status"] == "tolerance_failure"

    def test_deterministic_reports_modulo_timestamp(self, tmp_path):
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        body = 'kind = "moebius_defect"\nseed = 5\nbudget = 400\n'
        space_file = tmp_path / "space.csv"
        save_space(random_euclidean_space(10, seed=1, with_infinity=True), space_file)
        c1 = write_config(tmp_path / "c1.toml", body + f'space = "{space_file}"\noutput = "{out1}"\n')
        c2 = write_config(tmp_path / "c2.toml", body + f'space = "{space_file}"\noutput = "{out2}"\n')
        assert main(["run", c1]) == EXIT_OK
        assert main(["run", c2]) == EXIT_OK
        r1, r2 = read_report(out1), read_report(out2)
        for rep in (r1, r2):
            rep.pop("timestamp")
            rep["inputs"].pop("output")
        assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)

    def test_report_validates_against_schema(self, tmp_path):
        jsonschema = pytest.importorskip("jsonschema")
        from importlib.resources import files

        schema = json.loads(
            files("mobius_lab").joinpath("schemas/report.schema.json").read_text()
        )
        config = write_config(
            tmp_path / "ok.toml",
            f'kind = "integral_grid"\noutput = "{tmp_path}/ok.json"\n',
        )
        assert main(["run", config]) == EXIT_OK
        jsonschema.validate(read_report(tmp_path / "ok.json"), schema)

    def test_envelope_experiment(self, tmp_path):
        space_file = tmp_path / "line.csv"
        assert main(["gen", "real_line_grid", "n_points=40", "with_infinity=true",
                     "--out", str(space_file)]) == EXIT_OK
        config = write_config(
            tmp_path / "env.toml",
            f"""
kind = "am_envelope"
seed = 0
space = "{space_file}"
gauge = "log:1,1"
budget = 4000
output = "{tmp_path}/env.json"
""",
        )
        assert main(["run", config]) == EXIT_OK
        report = read_report(tmp_path / "env.json")
        assert report["results"]["vanishes_at_zero"] is True


class TestConvert:
    def test_round_trip_chain_is_moebius(self, tmp_path):
        src = random_euclidean_space(9, seed=4, with_infinity=True)
        infile, outfile = tmp_path / "in.csv", tmp_path / "out.csv"
        save_space(src, infile)
        code = main(["convert", "--in", str(infile),
                     "--chain", "inverse_cayley@p0,cayley@*", "--out", str(outfile)])
        assert code == EXIT_OK
        result = load_space(outfile)
        defect = moebius_defect(PointMap.identity(src, result), 600, seed=2)
        assert defect.defect <= 1e-10
        sidecar = json.loads((tmp_path / "out.csv.provenance.json").read_text())
        assert sidecar["steps"] == ["inverse_cayley@p0", "cayley@*"]

    def test_snowflake_chain_square_roots_cross_ratios(self, tmp_path):
        src = random_euclidean_space(8, seed=5)
        infile, outfile = tmp_path / "in.csv", tmp_path / "half.csv"
        save_space(src, infile)
        assert main(["convert", "--in", str(infile), "--chain", "snowflake@0.5",
                     "--out", str(outfile)]) == EXIT_OK
        flaked = load_space(outfile)
        quad = Quadruple(*src.ids[:4])
        assert cross_ratio(flaked, quad) == pytest.approx(
            math.sqrt(cross_ratio(src, quad)), rel=1e-12
        )

    def test_empty_chain_rejected(self, tmp_path):
        infile = tmp_path / "in.csv"
        save_space(random_euclidean_space(5, seed=0), infile)
        assert main(["convert", "--in", str(infile), "--chain", " ",
                     "--out", str(tmp_path / "o.csv")]) == EXIT_VALIDATION

    def test_failing_step_reports_index(self, tmp_path, capsys):
        infile = tmp_path / "in.csv"
        save_space(random_euclidean_space(5, seed=0), infile)  # no infinity point
        code = main(["convert", "--in", str(infile),
                     "--chain", "snowflake@0.5,inverse_cayley@p0",
                     "--out", str(tmp_path / "o.csv")])
        assert code == EXIT_VALIDATION
        assert "step 1" in capsys.readouterr().err


class TestVerifyAndGen:
    def test_gen_then_verify(self, tmp_path):
        out = tmp_path / "grid.csv"
        assert main(["gen", "lp_grid", "p=2", "dims=2", "side=3", "--out", str(out)]) == EXIT_OK
        assert main(["verify", str(out)]) == EXIT_OK

    def test_verify_flags_bad_space(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,a,b,c\na,0,1,3\nb,1,0,1\nc,3,1,0\n")
        assert main(["verify", str(bad)]) == EXIT_TOLERANCE

    def test_gen_bad_params(self, tmp_path):
        assert main(["gen", "lp_grid", "p=2", "--out", str(tmp_path / "x.csv")]) == EXIT_VALIDATION
        assert main(["gen", "nope", "--out", str(tmp_path / "y.csv")]) == EXIT_VALIDATION
