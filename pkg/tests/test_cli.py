import csv
import json

import numpy as np
import pytest

from rseik.cli import main
from rseik.io import read_grid_file, read_pgm_mask


def run(*argv):
    return main(list(argv))


@pytest.fixture()
def outdir(tmp_path):
    return tmp_path


class TestSolveTraceCompare:
    def test_pipeline_uniform(self, outdir):
        dist = str(outdir / "d")
        assert run("solve", "--uniform", "31,31", "--h", "0.05",
                   "--origin", "-0.75,-0.75", "--orientations", "24",
                   "--epsilon", "0.1", "--seed", "0,0,0",
                   "--out", dist) == 0
        dom, vals, header = read_grid_file(dist + ".pogrid")
        assert header["quantity"] == "distance"
        assert header["variant"] == "symmetric"
        assert vals[15, 15, 0] == 0.0
        manifest = json.loads((outdir / "d.manifest.json").read_text())
        for key in ("variant", "epsilon", "xi", "backend", "seed", "uniform", "h"):
            assert key in manifest["parameters"]
        assert manifest["solver_stats"]["nodes_accepted"] > 0

        assert run("trace", "--dist", dist + ".pogrid", "--end", "0.5,0.2,1.0",
                   "--step", "0.02", "--out", str(outdir / "p")) == 0
        rows = list(csv.DictReader(open(outdir / "p_0.csv")))
        assert set(rows[0].keys()) == {"t", "x", "y", "nx", "ny", "mode", "U"}
        assert float(rows[0]["t"]) == 0.0
        assert float(rows[-1]["t"]) == 1.0
        assert abs(float(rows[-1]["x"])) < 0.05 + 1e-9
        side = json.loads((outdir / "p_0.points.json").read_text())
        assert "interest_points" in side and "length" in side

        assert run("compare", dist + ".pogrid", dist + ".pogrid") == 0

    def test_trace_end_is_seed_single_row_ish(self, outdir):
        dist = str(outdir / "d")
        run("solve", "--uniform", "15,15", "--h", "0.1", "--origin", "-0.7,-0.7",
            "--orientations", "12", "--seed", "0,0,0", "--out", dist)
        assert run("trace", "--dist", dist + ".pogrid", "--end", "0,0,0",
                   "--out", str(outdir / "p")) == 0
        rows = list(csv.DictReader(open(outdir / "p_0.csv")))
        assert len(rows) <= 3

    def test_determinism_byte_identical(self, outdir):
        args = ("solve", "--uniform", "21,21", "--h", "0.08",
                "--origin", "-0.8,-0.8", "--orientations", "16",
                "--seed", "0,0,0", "--seed", "0.3,0.3,1.5")
        run(*args, "--out", str(outdir / "a"))
        run(*args, "--out", str(outdir / "b"))
        assert (outdir / "a.pogrid").read_bytes() == (outdir / "b.pogrid").read_bytes()

    def test_multi_seed_minimum(self, outdir):
        base = ("solve", "--uniform", "17,17", "--h", "0.1",
                "--origin", "-0.8,-0.8", "--orientations", "12")
        run(*base, "--seed", "0.3,0,0", "--out", str(outdir / "a"))
        run(*base, "--seed", "-0.3,0,2.0", "--out", str(outdir / "b"))
        run(*base, "--seed", "0.3,0,0", "--seed", "-0.3,0,2.0",
            "--out", str(outdir / "ab"))
        _, ua, _ = read_grid_file(outdir / "a.pogrid")
        _, ub, _ = read_grid_file(outdir / "b.pogrid")
        _, uab, _ = read_grid_file(outdir / "ab.pogrid")
        mn = np.minimum(ua, ub)
        fin = np.isfinite(mn)
        assert np.all(uab[fin] <= mn[fin] + 1e-5)

    def test_iterative_solver_flag(self, outdir):
        assert run("solve", "--uniform", "13,13", "--h", "0.1",
                   "--origin", "-0.6,-0.6", "--orientations", "8",
                   "--solver", "iterative", "--theta", "1e-4",
                   "--seed", "0,0,0", "--out", str(outdir / "it")) == 0
        _, vals, _ = read_grid_file(outdir / "it.pogrid")
        assert vals[6, 6, 0] == 0.0

    def test_stop_flag(self, outdir):
        assert run("solve", "--uniform", "31,31", "--h", "0.05",
                   "--origin", "-0.75,-0.75", "--orientations", "16",
                   "--seed", "0,0,0", "--stop", "0.2,0.2,0",
                   "--out", str(outdir / "s")) == 0
        _, vals, _ = read_grid_file(outdir / "s.pogrid")
        assert np.isinf(vals).any()


class TestMaskPipeline:
    def test_mask_walls_avoided(self, outdir):
        assert run("phantom", "--preset", "pompidou_mask", "--dims", "61,45",
                   "--out", str(outdir / "walls")) == 0
        blocked = read_pgm_mask(outdir / "walls.pgm")
        assert blocked.shape == (61, 45)
        assert run("solve", "--mask", str(outdir / "walls.pgm"), "--h", "1.0",
                   "--orientations", "16", "--seed", "30,7,0",
                   "--out", str(outdir / "d")) == 0
        assert run("trace", "--dist", str(outdir / "d.pogrid"),
                   "--end", "10,38,1.0", "--all-orientations",
                   "--out", str(outdir / "p")) == 0
        rows = list(csv.DictReader(open(outdir / "p_0.csv")))
        for r in rows:
            ix = int(round(float(r["x"])))
            iy = int(round(float(r["y"])))
            assert not blocked[ix, iy]

    def test_masked_seed_exit_code(self, outdir):
        run("phantom", "--preset", "pompidou_mask", "--dims", "61,45",
            "--out", str(outdir / "walls"))
        assert run("solve", "--mask", str(outdir / "walls.pgm"), "--h", "1.0",
                   "--orientations", "8", "--seed", "0,0,0",
                   "--out", str(outdir / "d")) == 2


class TestErrors:
    def test_bad_seed_syntax(self, outdir):
        assert run("solve", "--uniform", "9,9", "--h", "1.0",
                   "--seed", "1,2", "--out", str(outdir / "x")) == 2

    def test_conflicting_inputs(self, outdir):
        assert run("solve", "--uniform", "9,9", "--mask", "nope.pgm",
                   "--h", "1.0", "--seed", "1,1,0",
                   "--out", str(outdir / "x")) == 2

    def test_compare_grid_mismatch(self, outdir):
        run("solve", "--uniform", "9,9", "--h", "1.0", "--orientations", "8",
            "--seed", "4,4,0", "--out", str(outdir / "a"))
        run("solve", "--uniform", "11,11", "--h", "1.0", "--orientations", "8",
            "--seed", "4,4,0", "--out", str(outdir / "b"))
        assert run("compare", str(outdir / "a.pogrid"),
                   str(outdir / "b.pogrid")) == 2

    def test_trace_end_outside(self, outdir):
        run("solve", "--uniform", "9,9", "--h", "1.0", "--orientations", "8",
            "--seed", "4,4,0", "--out", str(outdir / "a"))
        assert run("trace", "--dist", str(outdir / "a.pogrid"),
                   "--end", "40,4,0", "--out", str(outdir / "p")) == 2

    def test_unknown_preset_usage(self, outdir):
        assert run("phantom", "--preset", "nonexistent",
                   "--out", str(outdir / "x")) == 2


class TestPhantomPresets:
    def test_two_crossings_density(self, outdir):
        assert run("phantom", "--preset", "two_crossings", "--dims", "20,20,20",
                   "--h", "1.0", "--sphere-level", "1",
                   "--out", str(outdir / "w")) == 0
        dom, W, header = read_grid_file(outdir / "w.pogrid")
        assert header["quantity"] == "density"
        assert W.max() > 0

    def test_torsion_parallel_density(self, outdir):
        assert run("phantom", "--preset", "torsion_parallel", "--dims", "20,20,20",
                   "--h", "1.0", "--sphere-level", "1",
                   "--out", str(outdir / "w")) == 0
        dom, W, _ = read_grid_file(outdir / "w.pogrid")
        assert W.max() > 0


class TestBench:
    def test_small_sweep(self, outdir):
        assert run("bench", "--sizes", "3000,12000", "--orientations", "12",
                   "--out", str(outdir / "bench")) == 0
        rows = list(csv.reader(open(outdir / "bench.csv")))
        assert rows[0] == ["engine", "nodes", "seconds"]
        assert len(rows) == 3
