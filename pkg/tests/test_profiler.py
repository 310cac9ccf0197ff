import numpy as np
import pytest

from courtgrid.model import LowRankModel, SampleEncoding, forward_lowrank
from courtgrid.profiler import (
    Heatmap,
    context_heatmaps,
    export_heatmap,
    general_heatmaps,
    heatmap_filename,
    parse_heatmap_csv,
    player_profiles,
)


def make_model(family="base", I=5, court=(4, 5), defender=(6, 6), n_contexts=1, rank=4, seed=0):
    rng = np.random.default_rng(seed)
    n_court = court[0] * court[1] * (n_contexts if family == "dynamic" else 1)
    return LowRankModel(
        family=family,
        A=rng.standard_normal((I, rank)),
        B=rng.standard_normal((n_contexts, rank)) if family == "st" else None,
        C=rng.standard_normal((n_court, rank)),
        D=rng.standard_normal((defender[0] * defender[1], rank)),
        bias=rng.standard_normal(),
        court_res=court,
        defender_res=defender,
        n_contexts=n_contexts,
    )


class TestGeneralHeatmaps:
    def test_one_heatmap_per_component(self):
        model = make_model(rank=1)
        assert len(general_heatmaps(model)) == 1
        model4 = make_model(rank=4)
        assert len(general_heatmaps(model4)) == 4

    def test_zero_court_factor_gives_zero_grids(self):
        model = make_model()
        model.C = np.zeros_like(model.C)
        for hm in general_heatmaps(model):
            assert not hm.grid.any()

    def test_reshape_roundtrip(self):
        model = make_model()
        for hm in general_heatmaps(model):
            assert np.array_equal(hm.grid.reshape(-1), model.C[:, hm.k])

    def test_weights_are_mean_player_loadings(self):
        model = make_model()
        by_k = {hm.k: hm.weight for hm in general_heatmaps(model)}
        for k in range(model.rank):
            assert by_k[k] == pytest.approx(model.A[:, k].mean())

    def test_st_weights_include_context_mean(self):
        model = make_model(family="st", n_contexts=4)
        by_k = {hm.k: hm.weight for hm in general_heatmaps(model)}
        for k in range(model.rank):
            assert by_k[k] == pytest.approx(model.A[:, k].mean() * model.B[:, k].mean())

    def test_dynamic_directs_to_context_heatmaps(self):
        model = make_model(family="dynamic", n_contexts=4)
        with pytest.raises(ValueError, match="context_heatmaps"):
            general_heatmaps(model)

    def test_ordering_descending_abs_weight(self):
        model = make_model(seed=3)
        weights = [abs(hm.weight) for hm in general_heatmaps(model)]
        assert weights == sorted(weights, reverse=True)


class TestPlayerProfiles:
    def test_single_dominant_profile_ranked_first(self):
        model = make_model(rank=3)
        model.A[2] = np.array([0.0, 5.0, 0.0])
        profiles = player_profiles(model, player=2, top_n=3)
        assert profiles[0].k == 1
        assert profiles[0].weight == pytest.approx(5.0)

    def test_st_zero_context_loading_zeroes_profile(self):
        model = make_model(family="st", n_contexts=4, rank=3)
        model.B[1, 2] = 0.0
        profiles = player_profiles(model, player=0, context=1, top_n=3)
        by_k = {hm.k: hm for hm in profiles}
        assert by_k[2].weight == 0.0
        assert not by_k[2].grid.any()

    def test_ordering_matches_full_sort(self):
        model = make_model(rank=6, seed=4)
        for player in range(model.n_players):
            profiles = player_profiles(model, player, top_n=6)
            weights = model.A[player]
            expect = sorted(range(6), key=lambda k: (-abs(weights[k]), k))
            assert [hm.k for hm in profiles] == expect

    def test_top_n_truncates(self):
        model = make_model(rank=6)
        assert len(player_profiles(model, 0, top_n=4)) == 4

    def test_grid_is_weight_scaled_column(self):
        model = make_model(rank=2, seed=5)
        for hm in player_profiles(model, 1, top_n=2):
            expect = model.A[1, hm.k] * model.C[:, hm.k].reshape(model.court_res)
            assert np.allclose(hm.grid, expect, atol=0)

    def test_invalid_player_or_context(self):
        model = make_model()
        with pytest.raises(ValueError):
            player_profiles(model, player=99)
        st = make_model(family="st", n_contexts=4)
        with pytest.raises(ValueError):
            player_profiles(st, player=0, context=7)

    def test_st_profile_decomposition_reproduces_logit(self):
        # weighted profiles are an exact additive decomposition of the score
        model = make_model(family="st", n_contexts=4, rank=5, seed=6)
        rng = np.random.default_rng(7)
        for _ in range(100):
            enc = SampleEncoding(
                player=int(rng.integers(model.n_players)),
                context=int(rng.integers(4)),
                court_cell=int(rng.integers(model.C.shape[0])),
                defender_cells=tuple(
                    sorted(rng.choice(model.D.shape[0], rng.integers(0, 4), replace=False).tolist())
                ),
                label=0,
            )
            profiles = player_profiles(model, enc.player, enc.context, top_n=model.rank)
            rows, cols = model.court_res
            r, c = divmod(enc.court_cell, cols)
            logit = model.bias + sum(
                hm.grid[r, c] * model.D[d2, hm.k]
                for hm in profiles
                for d2 in enc.defender_cells
            )
            prob = forward_lowrank(model, enc)
            expect_logit = np.log(prob / (1 - prob))
            assert logit == pytest.approx(expect_logit, abs=1e-9)


class TestContextHeatmaps:
    def test_one_profile_set_per_context(self):
        model = make_model(family="dynamic", n_contexts=4, rank=3)
        sets = context_heatmaps(model, player=0, top_n=3)
        assert sorted(sets) == [0, 1, 2, 3]
        for f, profiles in sets.items():
            assert len(profiles) == 3
            for hm in profiles:
                assert hm.block == f

    def test_block_extraction_inverts_extension(self):
        model = make_model(family="dynamic", n_contexts=3, rank=2, seed=8)
        sets = context_heatmaps(model, player=1, top_n=2)
        n_court = model.court_res[0] * model.court_res[1]
        for f, profiles in sets.items():
            for hm in profiles:
                expect = model.A[1, hm.k] * model.C[f * n_court : (f + 1) * n_court, hm.k]
                assert np.allclose(hm.grid.reshape(-1), expect, atol=0)

    def test_requires_dynamic(self):
        with pytest.raises(ValueError):
            context_heatmaps(make_model(), player=0)

    def test_identical_blocks_give_identical_heatmaps(self):
        model = make_model(family="dynamic", n_contexts=4, rank=2, seed=9)
        n_court = model.court_res[0] * model.court_res[1]
        block = model.C[:n_court].copy()
        model.C = np.tile(block, (4, 1))
        sets = context_heatmaps(model, player=0, top_n=2)
        for k in range(2):
            grids = [
                next(hm.grid for hm in sets[f] if hm.k == k) for f in range(4)
            ]
            for g in grids[1:]:
                assert np.array_equal(g, grids[0])


class TestExport:
    def test_zero_grid_renders_white(self, tmp_path):
        hm = Heatmap(grid=np.zeros((4, 5)), weight=0.0, k=0)
        path = tmp_path / "zero.ppm"
        export_heatmap(hm, path, fmt="raster")
        data = path.read_bytes()
        assert data.startswith(b"P6\n5 4\n255\n")
        assert data[len(b"P6\n5 4\n255\n"):] == b"\xff" * (4 * 5 * 3)

    def test_csv_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(10)
        grid = rng.standard_normal((8, 10))
        hm = Heatmap(grid=grid, weight=1.0, k=0)
        path = tmp_path / "grid.csv"
        export_heatmap(hm, path, fmt="csv")
        parsed = parse_heatmap_csv(path)
        assert parsed.shape == grid.shape
        assert np.array_equal(parsed, grid)  # bitwise-equal values

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(11)
        hm = Heatmap(grid=rng.standard_normal((6, 6)), weight=0.5, k=1)
        p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
        export_heatmap(hm, p1, fmt="raster")
        export_heatmap(hm, p2, fmt="raster")
        assert p1.read_bytes() == p2.read_bytes()
        c1, c2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_heatmap(hm, c1, fmt="csv")
        export_heatmap(hm, c2, fmt="csv")
        assert c1.read_bytes() == c2.read_bytes()

    def test_negation_swaps_red_and_blue(self, tmp_path):
        rng = np.random.default_rng(12)
        grid = rng.standard_normal((5, 5))
        pos, neg = tmp_path / "pos.ppm", tmp_path / "neg.ppm"
        export_heatmap(Heatmap(grid=grid, weight=1.0, k=0), pos, fmt="raster")
        export_heatmap(Heatmap(grid=-grid, weight=1.0, k=0), neg, fmt="raster")
        header = b"P6\n5 5\n255\n"
        a = np.frombuffer(pos.read_bytes()[len(header):], dtype=np.uint8).reshape(-1, 3)
        b = np.frombuffer(neg.read_bytes()[len(header):], dtype=np.uint8).reshape(-1, 3)
        assert np.array_equal(a[:, 0], b[:, 2])
        assert np.array_equal(a[:, 2], b[:, 0])
        assert np.array_equal(a[:, 1], b[:, 1])

    def test_unknown_format_rejected(self, tmp_path):
        hm = Heatmap(grid=np.zeros((2, 2)), weight=0.0, k=0)
        with pytest.raises(ValueError):
            export_heatmap(hm, tmp_path / "x.bmp", fmt="bmp")

    def test_unwritable_path_raises_oserror(self, tmp_path):
        hm = Heatmap(grid=np.zeros((2, 2)), weight=0.0, k=0)
        with pytest.raises(OSError):
            export_heatmap(hm, tmp_path / "no_such_dir" / "x.csv", fmt="csv")

    def test_filename_scheme(self):
        assert heatmap_filename("st_quarter", "12", 3, 2, "csv") == "st_quarter_12_3_k2.csv"
        assert heatmap_filename("base", "general", None, 0, "raster") == "base_general_all_k0.ppm"
