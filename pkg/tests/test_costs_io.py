import json
import math

import numpy as np
import pytest

from rseik.costs import (CostField, DensityField, TubeSpec, cost_from_density,
                         synth_tube_phantom, tube_centerline_distance)
from rseik.errors import DomainError, FormatError
from rseik.grid import Domain, SpatialGrid
from rseik.io import (read_grid_file, read_pgm_mask, write_grid_file,
                      write_pgm_mask)
from rseik.sphere import build_s1, build_s2_icosphere


@pytest.fixture(scope="module")
def dom3():
    return Domain(SpatialGrid((20, 20, 20), 1.0), build_s2_icosphere(1))


def mkdensity(dom, fn):
    vals = np.zeros(dom.shape)
    for j in range(dom.n_orient):
        n = dom.sphere.vertices[j]
        for idx in np.ndindex(*dom.grid.dims):
            vals[idx + (j,)] = fn(dom.grid.position(idx), n)
    return DensityField(vals, dom)


class TestCostFromDensity:
    def test_zero_density_unit_cost(self, dom3):
        W = DensityField(np.zeros(dom3.shape), dom3)
        C = cost_from_density(W, 3.0, 3, 0.1)
        assert np.all(C.c2 == 1.0)
        assert np.all(C.c1 == pytest.approx(0.1))

    def test_peak_value(self, dom3):
        W = DensityField(np.random.default_rng(0).uniform(0, 0.5, dom3.shape), dom3)
        W.values[3, 4, 5, 6] = 2.0
        C = cost_from_density(W, 3.0, 3, 0.1)
        assert C.c2[3, 4, 5, 6] == pytest.approx(0.25)

    def test_negative_density_clipped(self, dom3):
        W = DensityField(-np.ones(dom3.shape), dom3)
        C = cost_from_density(W, 3.0, 3, 1.0)
        assert np.all(C.c2 == 1.0)

    def test_bounds_and_balance(self, dom3):
        rng = np.random.default_rng(1)
        W = DensityField(rng.uniform(-1, 5, dom3.shape), dom3)
        sigma, xi = 4.0, 0.2
        C = cost_from_density(W, sigma, 2, xi)
        assert np.all(C.c2 >= 1.0 / (1.0 + sigma) - 1e-12)
        assert np.all(C.c2 <= 1.0)
        assert np.allclose(C.c1, xi * C.c2)

    def test_monotone_in_density(self, dom3):
        rng = np.random.default_rng(2)
        W1 = rng.uniform(0, 1, dom3.shape)
        W2 = W1 + rng.uniform(0, 1, dom3.shape)
        # same normalization scale for a fair pointwise claim
        W2 *= W1.max() / W2.max()
        base = np.maximum(W1, 0) / W1.max()
        other = np.maximum(W2, 0) / W2.max()
        mask = other >= base
        C1 = cost_from_density(DensityField(W1, dom3), 3.0, 3, 1.0)
        C2 = cost_from_density(DensityField(W2, dom3), 3.0, 3, 1.0)
        assert np.all(C2.c2[mask] <= C1.c2[mask] + 1e-12)


class TestPhantom:
    def test_single_tube_alignment(self, dom3):
        t = np.linspace(2, 17, 60)
        pts = np.stack([t, np.full_like(t, 9.0), np.full_like(t, 9.0)], axis=1)
        W = synth_tube_phantom(dom3, [TubeSpec(pts, 1.5)])
        col = W.values[9, 9, 9, :]
        e1 = np.array([1.0, 0, 0])
        best = np.argmax(col)
        assert abs(abs(dom3.sphere.vertices[best] @ e1) - 1.0) < 0.05
        # both signs peak equally
        anti = np.argmax(dom3.sphere.vertices @ -dom3.sphere.vertices[best])
        assert col[anti] == pytest.approx(col[best], rel=1e-6)

    def test_crossing_bimodal(self, dom3):
        t = np.linspace(2, 17, 60)
        a = np.stack([t, np.full_like(t, 9.0), np.full_like(t, 9.0)], axis=1)
        b = np.stack([np.full_like(t, 9.0), t, np.full_like(t, 9.0)], axis=1)
        W = synth_tube_phantom(dom3, [TubeSpec(a, 1.5), TubeSpec(b, 1.5)])
        col = W.values[9, 9, 9, :]
        vv = dom3.sphere.vertices
        m_x = col[np.argmax(np.abs(vv @ np.array([1.0, 0, 0])))]
        m_y = col[np.argmax(np.abs(vv @ np.array([0, 1.0, 0])))]
        m_z = col[np.argmax(np.abs(vv @ np.array([0, 0, 1.0])))]
        assert m_x > 3 * m_z and m_y > 3 * m_z

    def test_far_decay(self, dom3):
        t = np.linspace(2, 17, 60)
        pts = np.stack([t, np.full_like(t, 3.0), np.full_like(t, 3.0)], axis=1)
        W = synth_tube_phantom(dom3, [TubeSpec(pts, 1.5)])
        far = W.values[18, 16, 16, :]
        assert far.max() < 1e-6 * W.values.max()

    def test_degenerate_tangent(self, dom3):
        pts = np.tile(np.array([[9.0, 9.0, 9.0]]), (5, 1))
        with pytest.raises(DomainError):
            synth_tube_phantom(dom3, [TubeSpec(pts, 1.0)])

    def test_outside_grid(self, dom3):
        pts = np.array([[0.0, 0.0, 0.0], [25.0, 0.0, 0.0]])
        with pytest.raises(DomainError):
            synth_tube_phantom(dom3, [TubeSpec(pts, 1.0)])

    def test_tangent_cheaper_than_across(self, dom3):
        t = np.linspace(2, 17, 60)
        pts = np.stack([t, np.full_like(t, 9.0), np.full_like(t, 9.0)], axis=1)
        W = synth_tube_phantom(dom3, [TubeSpec(pts, 1.5)])
        C = cost_from_density(W, 3.0, 3, 0.1)
        vv = dom3.sphere.vertices
        along = np.argmax(np.abs(vv @ np.array([1.0, 0, 0])))
        across = np.argmax(np.abs(vv @ np.array([0, 0, 1.0])))
        for ix in range(5, 15):
            assert C.c2[ix, 9, 9, along] < C.c2[ix, 9, 9, across]


class TestGridFileFormat:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        dom = Domain(SpatialGrid((6, 5), 0.25, np.array([-1.0, 2.0])), build_s1(8))
        vals = rng.standard_normal(dom.shape).astype(np.float32).astype(float)
        p = tmp_path / "t.pogrid"
        write_grid_file(p, dom, vals, "density", extra={"xi": 0.5})
        dom2, back, header = read_grid_file(p)
        assert np.array_equal(back, vals)
        assert header["quantity"] == "density"
        assert header["xi"] == 0.5
        assert dom2.grid.dims == dom.grid.dims
        assert dom2.grid.h == dom.grid.h
        write_grid_file(tmp_path / "t2.pogrid", dom2, back, "density",
                        extra={"xi": 0.5})
        assert (tmp_path / "t.pogrid").read_bytes() == (tmp_path / "t2.pogrid").read_bytes()

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "bad.pogrid"
        p.write_bytes(b'{"magic": "NOPE", "d": 2}\n' + b"\x00" * 16)
        with pytest.raises(FormatError):
            read_grid_file(p)

    def test_payload_length_mismatch_names_counts(self, tmp_path):
        dom = Domain(SpatialGrid((4, 4), 1.0), build_s1(4))
        p = tmp_path / "t.pogrid"
        write_grid_file(p, dom, np.zeros(dom.shape), "distance")
        data = p.read_bytes()
        p.write_bytes(data[:-8])
        with pytest.raises(FormatError) as err:
            read_grid_file(p)
        assert "62" in str(err.value) and "64" in str(err.value)
        assert err.value.offset is not None

    def test_missing_field(self, tmp_path):
        p = tmp_path / "t.pogrid"
        p.write_bytes(b'{"magic": "POGRID1", "d": 2}\n')
        with pytest.raises(FormatError):
            read_grid_file(p)

    def test_sphere_header_consistency(self, tmp_path):
        dom = Domain(SpatialGrid((4, 4), 1.0), build_s1(6))
        p = tmp_path / "t.pogrid"
        write_grid_file(p, dom, np.zeros(dom.shape), "distance")
        raw = p.read_bytes()
        head, _, payload = raw.partition(b"\n")
        hdr = json.loads(head)
        hdr["sphere"]["k_or_N"] = 8
        p.write_bytes(json.dumps(hdr).encode() + b"\n" + payload)
        with pytest.raises(FormatError):
            read_grid_file(p)


class TestMaskImages:
    def test_roundtrip(self, tmp_path, rng):
        blocked = rng.random((17, 12)) < 0.3
        p = tmp_path / "m.pgm"
        write_pgm_mask(p, blocked)
        back = read_pgm_mask(p)
        assert np.array_equal(back, blocked)

    def test_ascii_pbm(self, tmp_path):
        p = tmp_path / "m.pbm"
        p.write_bytes(b"P1\n# comment\n3 2\n1 0 1\n0 1 0\n")
        got = read_pgm_mask(p)
        assert got.shape == (3, 2)
        # image row 0 (top) maps to the highest y
        assert bool(got[0, 1]) and not bool(got[1, 1]) and bool(got[2, 1])

    def test_binary_pbm(self, tmp_path):
        import numpy as np
        bits = np.array([[1, 0, 1], [0, 1, 0]], dtype=np.uint8)
        packed = np.packbits(bits, axis=1)
        p = tmp_path / "m.pbm"
        p.write_bytes(b"P4\n3 2\n" + packed.tobytes())
        got = read_pgm_mask(p)
        assert np.array_equal(got, np.array([[1, 0, 1], [0, 1, 0]], bool).T[:, ::-1])

    def test_truncated(self, tmp_path):
        p = tmp_path / "m.pgm"
        p.write_bytes(b"P5\n10 10\n255\n" + b"\x00" * 20)
        with pytest.raises(FormatError):
            read_pgm_mask(p)
