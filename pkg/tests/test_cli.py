"""End-to-end runs of the command line tool on synthetic tables."""

import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from porosgp import cli
from porosgp.catalogue import CellTable

from conftest import affine_cross_table, affine_sphere_table


def write_config(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return str(path)


@pytest.fixture()
def table_dir(tmp_path):
    affine_cross_table().save(str(tmp_path / "cross.pscat"))
    affine_sphere_table().save(str(tmp_path / "sphere.pscat"))
    return tmp_path


def optimize_config(extra=None):
    body = {
        "schema_version": 1, "kind": "optimize",
        "mesh": {"nx": 3, "ny": 2, "nz": 1},
        "catalogues": {"cross": "cross.pscat", "sphere": "sphere.pscat"},
        "design_space": {"n_radii": 5, "n_angles": 12, "n_sphere": 6},
        "optimizer": {"lam_phi": 1.0, "lam_psi": -5.0, "lam_reg": 0.01,
                      "k_max": 5},
        "output": {"dir": "run"},
    }
    body.update(extra or {})
    return body


class TestConfigErrors:
    def test_missing_file(self, tmp_path):
        assert cli.main(["check", "--config",
                         str(tmp_path / "nope.json")]) == 1

    def test_broken_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert cli.main(["check", "--config", str(path)]) == 1

    def test_wrong_schema_version(self, tmp_path):
        path = write_config(tmp_path, "v9.json",
                            {"schema_version": 9, "kind": "check"})
        assert cli.main(["check", "--config", path]) == 1

    def test_kind_subcommand_mismatch(self, tmp_path):
        path = write_config(tmp_path, "kind.json",
                            {"schema_version": 1, "kind": "optimize"})
        assert cli.main(["check", "--config", path]) == 1


class TestHomogenizeCommand:
    def test_build_load_and_identical_rerun(self, tmp_path):
        path = write_config(tmp_path, "hom.json", {
            "schema_version": 1, "kind": "homogenize", "family": "sphere",
            "resolution": 8, "nodes": 2, "out": "s8.pscat"})
        assert cli.main(["homogenize", "--config", path]) == 0
        out = tmp_path / "s8.pscat"
        first = out.read_bytes()
        table = CellTable.load(str(out))
        assert table.kind == "sphere"
        assert table.meta["config_sha256"]
        assert (tmp_path / "s8_nodes.csv").exists()
        assert cli.main(["homogenize", "--config", path]) == 0
        assert out.read_bytes() == first

    def test_unknown_family(self, tmp_path):
        path = write_config(tmp_path, "hom.json", {
            "schema_version": 1, "kind": "homogenize", "family": "torus",
            "resolution": 8, "out": "t.pscat"})
        assert cli.main(["homogenize", "--config", path]) == 1


class TestOptimizeCommand:
    def test_outputs_and_identical_rerun(self, table_dir):
        path = write_config(table_dir, "opt.json", optimize_config())
        assert cli.main(["optimize", "--config", path]) == 0
        run = table_dir / "run"
        for name in ("history.csv", "timings.csv", "design.csv",
                     "summary.json", "fields_final.vtk"):
            assert (run / name).exists(), name

        lines = (run / "history.csv").read_text().splitlines()
        assert lines[0].startswith("# porosgp ")
        assert "config=" in lines[0]
        assert lines[1] == "k,J,Phi,Psi,Xi,rho,lambda_rho,lambda_g"
        assert lines[2].split(",")[0] == "0"

        design = (run / "design.csv").read_text().splitlines()
        assert len(design) == 2 + 6            # stamp, header, elements
        assert design[1] == "element,type,r0,r1,angle_deg,rho"
        assert all(r.split(",")[1] in ("cross", "sphere")
                   for r in design[2:])

        summary = json.loads((run / "summary.json").read_text())
        assert summary["status"] in ("converged", "max_iterations")
        assert summary["config_sha256"]
        assert summary["Phi"] > 0

        first = (run / "history.csv").read_bytes()
        assert cli.main(["optimize", "--config", path]) == 0
        assert (run / "history.csv").read_bytes() == first

    def test_legacy_vtk_structure(self, table_dir):
        path = write_config(table_dir, "opt.json", optimize_config())
        assert cli.main(["optimize", "--config", path]) == 0
        text = (table_dir / "run" / "fields_final.vtk").read_text()
        lines = text.splitlines()
        assert lines[0] == "# vtk DataFile Version 3.0"
        assert lines[2] == "ASCII"
        assert lines[3] == "DATASET UNSTRUCTURED_GRID"
        assert "POINTS 24 double" in text        # (3+1)(2+1)(1+1) nodes
        assert "CELL_TYPES 6" in text
        for field in ("displacement", "pressure", "design_rho",
                      "design_type", "stiff_norm", "perm_trace"):
            assert field in text, field

    def test_xml_vtk_parses(self, table_dir):
        path = write_config(table_dir, "opt.json", optimize_config(
            {"output": {"dir": "run", "vtk_format": "xml"}}))
        assert cli.main(["optimize", "--config", path]) == 0
        tree = ET.parse(str(table_dir / "run" / "fields_final.vtu"))
        piece = tree.getroot().find(".//Piece")
        assert piece.get("NumberOfPoints") == "24"
        assert piece.get("NumberOfCells") == "6"
        names = {d.get("Name") for d in piece.iter("DataArray")}
        assert {"displacement", "pressure", "design_rho"} <= names

    def test_dump_every_writes_iterates(self, table_dir):
        path = write_config(table_dir, "opt.json", optimize_config())
        assert cli.main(["optimize", "--config", path,
                         "--dump-every", "1"]) == 0
        dumps = sorted(p.name for p in (table_dir / "run").iterdir()
                       if p.name.startswith("fields_0"))
        assert "fields_0000.vtk" in dumps and len(dumps) >= 2


class TestParetoCommand:
    def test_sweep_rows_and_single_point_matches_optimize(self, table_dir):
        opt = write_config(table_dir, "opt.json", optimize_config(
            {"optimizer": {"lam_phi": 1.0, "lam_psi": -2.0,
                           "lam_reg": 0.01, "k_max": 5}}))
        assert cli.main(["optimize", "--config", opt]) == 0

        par = write_config(table_dir, "par.json", optimize_config(
            {"kind": "pareto", "sweep": [-2.0],
             "optimizer": {"lam_phi": 1.0, "lam_psi": -5.0,
                           "lam_reg": 0.01, "k_max": 5},
             "output": {"dir": "sweep"}}))
        assert cli.main(["pareto", "--config", par]) == 0
        csv = (table_dir / "sweep" / "pareto.csv").read_text().splitlines()
        assert csv[1] == "lam_psi,Phi,Psi,iterations,status"
        assert len(csv) == 3 and csv[2].endswith("converged")

        # a one-point sweep is the plain run at that flux weight: identical
        # history apart from the config hash in the stamp line
        hist_opt = (table_dir / "run" / "history.csv").read_text()
        hist_par = (table_dir / "sweep" / "lam_psi_-2" /
                    "history.csv").read_text()
        assert (hist_opt.splitlines()[1:] == hist_par.splitlines()[1:])

    def test_failed_point_recorded_and_sweep_continues(self, table_dir):
        # a solid-fraction budget below the lightest candidate cannot be
        # bracketed; every point must fail yet the sweep must finish
        par = write_config(table_dir, "par.json", optimize_config(
            {"kind": "pareto", "sweep": [-2.0, -5.0],
             "optimizer": {"lam_phi": 1.0, "lam_psi": -2.0, "k_max": 3,
                           "rho_budget": 0.01},
             "output": {"dir": "sweep"}}))
        assert cli.main(["pareto", "--config", par]) == 0
        rows = (table_dir / "sweep" / "pareto.csv").read_text().splitlines()
        assert len(rows) == 4
        for row in rows[2:]:
            assert "error" in row and "nan" in row


class TestCheckCommand:
    def test_default_config_passes(self, tmp_path, capsys):
        path = write_config(tmp_path, "check.json",
                            {"schema_version": 1, "kind": "check"})
        assert cli.main(["check", "--config", path]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 5 and "FAIL" not in out

    def test_corrupted_catalogue_fails_nonzero(self, table_dir, capsys):
        raw = bytearray((table_dir / "cross.pscat").read_bytes())
        raw[120] ^= 0xFF
        (table_dir / "cross.pscat").write_bytes(bytes(raw))
        path = write_config(table_dir, "check.json",
                            {"schema_version": 1, "kind": "check",
                             "catalogues": {"cross": "cross.pscat"}})
        assert cli.main(["check", "--config", path]) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out and out.count("PASS") == 4

    def test_tighter_fd_step_shrinks_reported_error(self, tmp_path,
                                                    capsys):
        path = write_config(tmp_path, "check.json",
                            {"schema_version": 1, "kind": "check"})

        def adjoint_err(step):
            assert cli.main(["check", "--config", path,
                             "--fd-step", str(step)]) == 0
            for line in capsys.readouterr().out.splitlines():
                if "adjoint" in line:
                    return float(line.split("err=")[1].rstrip(")"))
            raise AssertionError("no adjoint line")

        assert adjoint_err(1e-5) < adjoint_err(1e-4)
