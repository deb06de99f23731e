import numpy as np
import pytest

from radiance.scene import (BRICK, CONCRETE, CLASS_BS, CLASS_FLOOR, CLASS_WALL,
                            GridSpec, Material, Scene, SceneError, Wall, build_room,
                            grid_for_scene, point_in_polygon, polygon_area,
                            rasterize_semantic, room_layout, save_scene, load_scene,
                            scene_from_dict, scene_to_dict, validate_scene, ROOM_IDS)


def wall_cells_oracle(scene, grid):
    """Independent rasterization: dense sampling along each segment with
    closed-cell membership."""
    cells = set()
    cs = grid.cell_size
    for w in scene.walls:
        p0 = np.array(w.p0)
        p1 = np.array(w.p1)
        n = int(np.ceil(np.linalg.norm(p1 - p0) / (cs / 64))) + 1
        for t in np.linspace(0.0, 1.0, n):
            x, y = p0 + t * (p1 - p0)
            for ix in (int(np.floor(x / cs - 1e-12)), int(np.floor(x / cs + 1e-12))):
                for iy in (int(np.floor(y / cs - 1e-12)), int(np.floor(y / cs + 1e-12))):
                    if 0 <= ix < grid.nx and 0 <= iy < grid.ny \
                            and ix * cs - 1e-9 <= x <= (ix + 1) * cs + 1e-9 \
                            and iy * cs - 1e-9 <= y <= (iy + 1) * cs + 1e-9:
                        cells.add((ix, iy))
    return cells


def empty_scene(bs=(5.0, 5.0, 3.0)):
    return Scene(bounds=(0, 0, 10, 10), walls=(), floor_material=CONCRETE,
                 bs_position=bs, bs_height=3.0, rx_height=1.5)


class TestBuildRoom:
    def test_square_room(self):
        sc = build_room({"shape": "rectangle", "width_m": 10, "depth_m": 10})
        assert len(sc.walls) == 4
        assert sc.bs_position == (5.0, 5.0, 3.0)
        assert sc.walls[0].material is BRICK
        assert sc.floor_material is CONCRETE

    def test_degenerate_dimensions_rejected(self):
        with pytest.raises(SceneError):
            build_room({"shape": "rectangle", "width_m": 0, "depth_m": 10})

    def test_lshape_walls_and_area(self):
        sc = build_room(room_layout("lshape"))
        assert len(sc.walls) == 6
        assert polygon_area(sc.floor_polygon) == pytest.approx(75.0, abs=1e-12)

    def test_bs_outside_walkable_area_rejected(self):
        with pytest.raises(SceneError, match="walkable"):
            build_room(room_layout("lshape", bs=(8.0, 8.0)))

    def test_unknown_shape(self):
        with pytest.raises(SceneError):
            build_room({"shape": "hexagon", "width_m": 10, "depth_m": 10})

    def test_catalog_rooms_validate(self):
        for rid in ROOM_IDS:
            sc = build_room(room_layout(rid))
            assert validate_scene(sc) == []


class TestValidateScene:
    def test_bs_outside_bounds(self):
        sc = empty_scene(bs=(20.0, 20.0, 3.0))
        assert "bs outside bounds" in validate_scene(sc)

    def test_rx_above_walls(self):
        walls = (Wall((0, 0), (10, 0), 4.0, BRICK),)
        sc = Scene(bounds=(0, 0, 10, 10), walls=walls, floor_material=CONCRETE,
                   bs_position=(5, 5, 6.0), bs_height=6.0, rx_height=5.0)
        out = validate_scene(sc)
        assert "rx above wall height" in out
        assert "bs above wall height" in out

    def test_rx_must_be_below_bs(self):
        sc = empty_scene()
        bad = Scene(bounds=sc.bounds, walls=(), floor_material=CONCRETE,
                    bs_position=(5, 5, 1.0), bs_height=1.0, rx_height=1.5)
        assert "rx height not below bs height" in validate_scene(bad)


class TestMaterials:
    def test_conductivity_grows_with_frequency(self):
        assert CONCRETE.conductivity(70e9) > CONCRETE.conductivity(5e9) > 0

    def test_permittivity_floor(self):
        with pytest.raises(SceneError):
            Material("vacuum-ish", rel_permittivity=0.5, cond_a=0, cond_b=1)


class TestRasterize:
    def test_empty_scene_8x8(self):
        grid = GridSpec(8, 8, 10 / 8)
        sm = rasterize_semantic(empty_scene(), grid)
        counts = np.bincount(sm.classes.ravel(), minlength=3)
        assert counts[CLASS_FLOOR] == 63
        assert counts[CLASS_WALL] == 0
        assert counts[CLASS_BS] == 1

    def test_square_room_border_cells(self):
        sc = build_room(room_layout("room1"))
        sm = rasterize_semantic(sc, grid_for_scene(sc, 64))
        assert int((sm.classes == CLASS_WALL).sum()) == 252

    @pytest.mark.parametrize("rid", ["room2", "lshape"])
    def test_wall_cells_match_sampling_oracle(self, rid):
        sc = build_room(room_layout(rid))
        grid = grid_for_scene(sc, 64)
        sm = rasterize_semantic(sc, grid)
        got = {tuple(c) for c in np.argwhere(sm.classes == CLASS_WALL)[:, ::-1]}
        want = wall_cells_oracle(sc, grid)
        want.discard(sm.bs_cell())  # the BS label wins on its single cell
        assert got == want

    def test_every_cell_has_exactly_one_class(self):
        sc = build_room(room_layout("room4"))
        sm = rasterize_semantic(sc, grid_for_scene(sc, 32))
        ch = sm.channels()
        assert ch.shape == (3, 32, 32)
        assert np.array_equal(ch.sum(axis=0), np.ones((32, 32)))
        assert int((sm.classes == CLASS_BS).sum()) == 1

    @pytest.mark.parametrize("rid", ["room3", "lshape"])
    def test_resolution_monotone(self, rid):
        sc = build_room(room_layout(rid))
        coarse = rasterize_semantic(sc, grid_for_scene(sc, 16)).classes == CLASS_WALL
        fine = rasterize_semantic(sc, grid_for_scene(sc, 32)).classes == CLASS_WALL
        for iy, ix in np.argwhere(coarse):
            sub = fine[2 * iy:2 * iy + 2, 2 * ix:2 * ix + 2]
            assert sub.any(), f"{rid}: wall cell ({ix},{iy}) lost at 2x resolution"

    def test_grid_must_match_bounds(self):
        sc = build_room(room_layout("room1"))
        with pytest.raises(SceneError):
            rasterize_semantic(sc, GridSpec(32, 32, 0.5))


class TestGridSpec:
    def test_too_small(self):
        with pytest.raises(SceneError):
            GridSpec(4, 4, 1.0)

    def test_cell_lookup_roundtrip(self):
        g = GridSpec(32, 32, 10 / 32)
        x, y = g.cell_center(7, 21)
        assert g.cell_of(x, y) == (7, 21)


class TestPolygon:
    def test_containment(self):
        poly = ((0, 0), (10, 0), (10, 5), (5, 5), (5, 10), (0, 10))
        assert point_in_polygon(3, 3, poly)
        assert point_in_polygon(8, 3, poly)
        assert not point_in_polygon(8, 8, poly)
        assert point_in_polygon(5, 5, poly)  # boundary counts as inside


class TestSceneFiles:
    def test_roundtrip(self, tmp_path):
        sc = build_room(room_layout("room4", bs=(2.0, 2.0)))
        path = tmp_path / "room4.json"
        save_scene(sc, path, grid=GridSpec(32, 32, 10 / 32))
        back = load_scene(path)
        assert back.bs_position == sc.bs_position
        assert len(back.walls) == len(sc.walls)
        assert back.walls[-1].material.name == sc.walls[-1].material.name
        assert back.floor_polygon == sc.floor_polygon

    def test_invalid_file_rejected(self):
        d = scene_to_dict(build_room(room_layout("room1")))
        d["bs"]["x"] = 99.0
        with pytest.raises(SceneError):
            scene_from_dict(d)
