import json

import numpy as np
import pytest

from courtgrid.ingest import (
    LabeledSample,
    SYNERGY_HEADER,
    TrackingFrame,
    densify_players,
    label_frames,
    parse_samples,
    parse_synergy_table,
    serialize_samples,
    split_dataset,
    synergy_matrix,
)


def sample_line(player=0, label=1, quarter=1, t=0, game="g1"):
    return json.dumps(
        {
            "game_id": game,
            "quarter": quarter,
            "t": t,
            "player": player,
            "bh": [10.0, 12.0],
            "basket": [25.0, 5.25],
            "defenders": [[11.0, 13.0], [9.5, 12.5]],
            "label": label,
        }
    )


def make_sample(player=0, label=0, quarter=1, context=0):
    return LabeledSample(
        game_id="g",
        quarter=quarter,
        player=player,
        context=context,
        bh_pos=(10.0, 10.0),
        basket_pos=(25.0, 5.25),
        defenders=((11.0, 11.0),),
        label=label,
    )


class TestParseSamples:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        samples, mapping = parse_samples(path)
        assert samples == [] and mapping == {}

    def test_single_line(self, tmp_path):
        path = tmp_path / "one.jsonl"
        path.write_text(sample_line(player=3, label=1) + "\n")
        samples, mapping = parse_samples(path)
        assert len(samples) == 1
        assert samples[0].label == 1
        assert mapping == {3: 0}
        assert samples[0].player == 0

    def test_sparse_ids_densified(self, tmp_path):
        path = tmp_path / "sparse.jsonl"
        path.write_text(sample_line(player=97) + "\n" + sample_line(player=12) + "\n")
        samples, mapping = parse_samples(path)
        assert mapping == {12: 0, 97: 1}
        assert [s.player for s in samples] == [1, 0]

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(sample_line() + "\n{oops\n")
        with pytest.raises(ValueError, match="line 2"):
            parse_samples(path)

    def test_unknown_field_rejected(self, tmp_path):
        obj = json.loads(sample_line())
        obj["extra"] = 1
        path = tmp_path / "unknown.jsonl"
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(ValueError, match="unknown field"):
            parse_samples(path)

    def test_missing_field_rejected(self, tmp_path):
        obj = json.loads(sample_line())
        del obj["basket"]
        path = tmp_path / "missing.jsonl"
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(ValueError, match="missing field"):
            parse_samples(path)

    def test_bad_label_rejected(self, tmp_path):
        obj = json.loads(sample_line())
        obj["label"] = 2
        path = tmp_path / "label.jsonl"
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(ValueError, match="line 1"):
            parse_samples(path)

    def test_parse_serialize_parse_identity(self, tmp_path):
        path = tmp_path / "round.jsonl"
        lines = [sample_line(player=p, label=p % 2, quarter=q, t=q - 1)
                 for p, q in ((40, 1), (7, 3), (40, 4))]
        path.write_text("\n".join(lines) + "\n")
        samples, mapping = parse_samples(path)
        out = tmp_path / "out.jsonl"
        inverse = {dense: orig for orig, dense in mapping.items()}
        serialize_samples(samples, out, id_map=inverse)
        samples2, mapping2 = parse_samples(out)
        assert samples2 == samples
        assert mapping2 == mapping


class TestLabelFrames:
    def frame(self, ts, game="g1", quarter=1, player=0):
        return TrackingFrame(
            game_id=game,
            quarter=quarter,
            timestamp_s=ts,
            ballhandler_id=player,
            bh_pos=(10.0, 20.0),
            basket_pos=(25.0, 5.25),
            defenders=(),
        )

    def test_shot_inside_window(self):
        frames = [self.frame(10.0)]
        shots = [(0, "g1", 1, 10.5)]
        assert label_frames(frames, shots)[0].label == 1

    def test_shot_outside_window(self):
        frames = [self.frame(10.0)]
        shots = [(0, "g1", 1, 11.5)]
        assert label_frames(frames, shots)[0].label == 0

    def test_boundary_is_inclusive(self):
        # window is the half-open interval (t, t+horizon]
        frames = [self.frame(9.0), self.frame(10.0), self.frame(11.0)]
        shots = [(0, "g1", 1, 11.0)]

        def brute(frame_ts, shot_ts, horizon=1.0):
            return int(frame_ts < shot_ts <= frame_ts + horizon)

        got = [s.label for s in label_frames(frames, shots)]
        assert got == [brute(f.timestamp_s, 11.0) for f in frames]
        assert got == [0, 1, 0]  # a shot at the frame's own instant never counts

    def test_different_player_game_quarter_ignored(self):
        frames = [self.frame(10.0)]
        assert label_frames(frames, [(1, "g1", 1, 10.5)])[0].label == 0
        assert label_frames(frames, [(0, "g2", 1, 10.5)])[0].label == 0
        assert label_frames(frames, [(0, "g1", 2, 10.5)])[0].label == 0

    def test_monotone_in_horizon(self):
        rng = np.random.default_rng(0)
        frames = sorted(
            (self.frame(float(ts)) for ts in rng.uniform(0, 30, 40)),
            key=lambda f: f.timestamp_s,
        )
        shots = [(0, "g1", 1, float(ts)) for ts in sorted(rng.uniform(0, 30, 10))]
        small = [s.label for s in label_frames(frames, shots, horizon_s=0.5)]
        large = [s.label for s in label_frames(frames, shots, horizon_s=2.0)]
        assert all(a <= b for a, b in zip(small, large))

    def test_unsorted_frames_rejected(self):
        frames = [self.frame(10.0), self.frame(5.0)]
        with pytest.raises(ValueError, match="not sorted"):
            label_frames(frames, [])

    def test_context_is_quarter_minus_one(self):
        frames = [self.frame(1.0, quarter=3)]
        assert label_frames(frames, [])[0].context == 2


class TestSplitDataset:
    def test_exact_ratios(self):
        samples = [make_sample(player=i) for i in range(10)]
        split = split_dataset(samples, (0.8, 0.1, 0.1), seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == (8, 1, 1)

    def test_deterministic(self):
        samples = [make_sample(player=i) for i in range(30)]
        a = split_dataset(samples, (0.6, 0.2, 0.2), seed=5)
        b = split_dataset(samples, (0.6, 0.2, 0.2), seed=5)
        assert a == b

    def test_partition_property(self):
        samples = [make_sample(player=i) for i in range(10)]
        split = split_dataset(samples, (1 / 3, 1 / 3, 1 / 3), seed=1)
        sizes = [len(split.train), len(split.validation), len(split.test)]
        assert sum(sizes) == 10
        assert all(abs(s - 10 / 3) <= 1 for s in sizes)
        ids = [s.player for part in split for s in part]
        assert sorted(ids) == list(range(10))

    def test_empty_input(self):
        split = split_dataset([], (0.8, 0.1, 0.1), seed=0)
        assert split.train == () and split.validation == () and split.test == ()

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValueError):
            split_dataset([], (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(ValueError):
            split_dataset([], (1.2, -0.1, -0.1), seed=0)

    def test_shuffle_uniformity(self):
        # every sample should land in the test fold about equally often
        samples = [make_sample(player=i) for i in range(5)]
        counts = np.zeros(5)
        trials = 400
        for seed in range(trials):
            split = split_dataset(samples, (0.4, 0.2, 0.4), seed=seed)
            for s in split.test:
                counts[s.player] += 1
        expected = trials * 0.4
        assert np.all(np.abs(counts - expected) < 4 * np.sqrt(expected))


class TestSynergyTable:
    def write_table(self, tmp_path, rows):
        path = tmp_path / "synergy.csv"
        lines = [",".join(SYNERGY_HEADER)]
        lines += [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_single_zero_player(self, tmp_path):
        path = self.write_table(tmp_path, [[7] + [0.0] * 23])
        rows = parse_synergy_table(path)
        assert len(rows) == 1
        assert rows[0].player == 7
        assert not rows[0].features().any()
        assert rows[0].features().shape == (23,)

    def test_missing_header_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(",".join(SYNERGY_HEADER[:-1]) + "\n")
        with pytest.raises(ValueError, match="bad header"):
            parse_synergy_table(path)

    def test_two_players_matrix_shape(self, tmp_path):
        path = self.write_table(
            tmp_path, [[1] + [0.1] * 23, [2] + [0.2] * 23]
        )
        ids, X = synergy_matrix(parse_synergy_table(path))
        assert ids == [1, 2]
        assert X.shape == (2, 23)

    def test_wrong_feature_count_names_player(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text(",".join(SYNERGY_HEADER) + "\n9," + ",".join(["0.5"] * 22) + "\n")
        with pytest.raises(ValueError, match="player 9"):
            parse_synergy_table(path)


class TestDensify:
    def test_contiguous_after_densify(self):
        samples = [make_sample(player=p) for p in (10, 200, 10, 5)]
        dense, mapping = densify_players(samples)
        assert mapping == {5: 0, 10: 1, 200: 2}
        assert [s.player for s in dense] == [1, 2, 1, 0]


class TestTypes:
    def test_frame_validates_quarter(self):
        with pytest.raises(ValueError):
            TrackingFrame("g", 5, 0.0, 0, (0, 0), (1, 1), ())

    def test_sample_validates_label(self):
        with pytest.raises(ValueError):
            make_sample(label=3)
