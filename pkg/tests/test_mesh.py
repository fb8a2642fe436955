import numpy as np
import pytest

from fpsi.mesh import (BoundaryTag, MeshError, MeshFormatError, build_channel_mesh,
                       build_rectangle_coupled_mesh, read_mesh, uniform_refine, validate,
                       write_mesh)


def test_minimal_pair_counts(unit_pair):
    m = unit_pair
    assert m.fluid.n_cells == 2 and m.poro.n_cells == 2
    assert len(m.interface) == 1
    assert m.interface.lengths[0] == pytest.approx(1.0, abs=1e-15)
    assert validate(m) == []


def test_interface_normals_opposite(small_pair):
    itf = small_pair.interface
    np.testing.assert_allclose(itf.n_f, np.tile([0.0, -1.0], (len(itf), 1)))
    np.testing.assert_allclose(itf.n_p, -itf.n_f)
    np.testing.assert_allclose(np.einsum("ea,ea->e", itf.n_f, itf.tau_f), 0.0)


def test_refine_splits_into_four_and_halves_diameter(unit_pair):
    r = uniform_refine(unit_pair)
    assert r.fluid.n_cells == 8 and r.poro.n_cells == 8
    assert r.fluid.h == 0.5 * unit_pair.fluid.h
    assert len(r.interface) == 2
    assert validate(r) == []


def test_refine_keeps_tags(unit_pair):
    r = uniform_refine(unit_pair)
    assert r.fluid.tags_present() == unit_pair.fluid.tags_present()
    assert r.poro.tags_present() == unit_pair.poro.tags_present()


def test_round_trip(tmp_path, small_pair):
    p = tmp_path / "m.mesh"
    write_mesh(small_pair, p)
    m = read_mesh(p)
    for a, b in ((m.fluid, small_pair.fluid), (m.poro, small_pair.poro)):
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.triangles, b.triangles)
        np.testing.assert_array_equal(a.boundary_edges, b.boundary_edges)
        assert a.boundary_tags == b.boundary_tags
    np.testing.assert_array_equal(m.interface.fluid_vertices, small_pair.interface.fluid_vertices)


def _lines(mesh, tmp_path):
    p = tmp_path / "m.mesh"
    write_mesh(mesh, p)
    return p, p.read_text().splitlines()


def test_negative_orientation_rejected(tmp_path, unit_pair):
    p, lines = _lines(unit_pair, tmp_path)
    k = lines.index("triangles 2") + 1
    i, j, l = lines[k].split()
    lines[k] = f"{j} {i} {l}"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError, match="orientation"):
        read_mesh(p)


def test_offset_interface_rejected(tmp_path, unit_pair):
    p, lines = _lines(unit_pair, tmp_path)
    # shift a poroelastic vertex lying on y = 0
    start = [i for i, s in enumerate(lines) if s == "submesh poro"][0] + 2
    for k in range(start, start + 4):
        x, y = map(float, lines[k].split())
        if y == 0.0 and x == 1.0:
            lines[k] = f"{x} {1e-6}"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError, match="matching-trace|interface"):
        read_mesh(p)


def test_format_error_has_location(tmp_path, unit_pair):
    p, lines = _lines(unit_pair, tmp_path)
    lines[2] = "vertices x"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshFormatError) as exc:
        read_mesh(p)
    assert exc.value.line == 3 and exc.value.column == 2


def test_bad_header(tmp_path):
    p = tmp_path / "m.mesh"
    p.write_text("not a mesh\n")
    with pytest.raises(MeshFormatError, match="header"):
        read_mesh(p)


def test_channel_tags():
    m = build_channel_mesh(6.0, 0.5, 0.1, 6, 2, 1)
    T = BoundaryTag
    assert m.fluid.tags_present() == {T.FInlet, T.FOutlet, T.GammaFP}
    assert m.poro.tags_present() == {T.PInlet, T.POutlet, T.PExt, T.GammaFP}
    assert len(m.interface) == 12
    assert validate(m) == []


def test_invalid_interface_height():
    with pytest.raises(MeshError):
        build_rectangle_coupled_mesh((0, 1, 0, 1), 2.0, 1, 1, 1)
