"""Tracking-data ingestion: canonical JSONL parsing, shoot-within-horizon
labeling, dataset splitting, and synergy play-type tables.

Canonical sample files hold one JSON object per line with keys
``game_id, quarter, t, player, bh, basket, defenders, label``, where ``t`` is
the non-spatial context value (quarter index 0-3, playstyle cluster 0-6, or 0
when unused) and positions are in feet.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, replace

import numpy as np

from .validation import check_position, check_ratios, check_seed

_SAMPLE_KEYS = {"game_id", "quarter", "t", "player", "bh", "basket", "defenders", "label"}

SYNERGY_N_PLAYTYPES = 11
SYNERGY_N_FEATURES = 2 * SYNERGY_N_PLAYTYPES + 1  # frequencies, PPP, volume

SYNERGY_HEADER = (
    ["player"]
    + [f"freq_{i}" for i in range(1, SYNERGY_N_PLAYTYPES + 1)]
    + [f"ppp_{i}" for i in range(1, SYNERGY_N_PLAYTYPES + 1)]
    + ["volume"]
)


@dataclass(frozen=True)
class TrackingFrame:
    """One raw tracking frame with the ball-handler and nearby defenders."""

    game_id: str
    quarter: int
    timestamp_s: float
    ballhandler_id: int
    bh_pos: tuple[float, float]
    basket_pos: tuple[float, float]
    defenders: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.quarter not in (1, 2, 3, 4):
            raise ValueError(f"quarter must be 1-4, got {self.quarter}")
        if not math.isfinite(self.timestamp_s) or self.timestamp_s < 0:
            raise ValueError(f"timestamp_s must be finite and >= 0, got {self.timestamp_s}")


@dataclass(frozen=True)
class LabeledSample:
    """One frame cast as a training sample: positions plus the binary
    shoots-within-horizon label and the non-spatial context value."""

    game_id: str
    quarter: int
    player: int
    context: int
    bh_pos: tuple[float, float]
    basket_pos: tuple[float, float]
    defenders: tuple[tuple[float, float], ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.context < 0:
            raise ValueError(f"context must be >= 0, got {self.context}")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[LabeledSample, ...]
    validation: tuple[LabeledSample, ...]
    test: tuple[LabeledSample, ...]
    seed: int

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


@dataclass(frozen=True)
class SynergyRow:
    """One player's 23 synergy features: 11 play-type frequencies, 11
    points-per-possession values, and total volume."""

    player: int
    frequencies: tuple[float, ...]
    points_per_possession: tuple[float, ...]
    total_volume: float

    def features(self) -> np.ndarray:
        return np.array(
            list(self.frequencies) + list(self.points_per_possession) + [self.total_volume]
        )


def _parse_record(obj: dict, lineno: int) -> LabeledSample:
    if not isinstance(obj, dict):
        raise ValueError(f"line {lineno}: expected a JSON object")
    unknown = set(obj) - _SAMPLE_KEYS
    if unknown:
        raise ValueError(f"line {lineno}: unknown field(s) {sorted(unknown)}")
    missing = _SAMPLE_KEYS - set(obj)
    if missing:
        raise ValueError(f"line {lineno}: missing field(s) {sorted(missing)}")
    try:
        return LabeledSample(
            game_id=str(obj["game_id"]),
            quarter=int(obj["quarter"]),
            player=int(obj["player"]),
            context=int(obj["t"]),
            bh_pos=check_position(obj["bh"], "bh"),
            basket_pos=check_position(obj["basket"], "basket"),
            defenders=tuple(check_position(d, "defender") for d in obj["defenders"]),
            label=int(obj["label"]),
        )
    except (TypeError, ValueError) as exc:
        raise ValueError(f"line {lineno}: {exc}") from exc


def densify_players(samples) -> tuple[list[LabeledSample], dict[int, int]]:
    """Remap player ids to a dense 0..I-1 range (sorted original-id order).

    Returns the remapped samples and the original-id -> dense-index mapping.
    """
    mapping = {pid: idx for idx, pid in enumerate(sorted({s.player for s in samples}))}
    return [replace(s, player=mapping[s.player]) for s in samples], mapping


def parse_samples(path) -> tuple[list[LabeledSample], dict[int, int]]:
    """Parse a canonical JSONL sample file.

    Returns samples in file order with player ids densified, plus the
    original-id -> dense-index mapping. Malformed lines and unknown fields
    raise with the offending line number.
    """
    samples: list[LabeledSample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            samples.append(_parse_record(obj, lineno))
    return densify_players(samples)


def serialize_samples(samples, path, id_map: dict[int, int] | None = None) -> None:
    """Write samples as canonical JSONL; ``id_map`` (dense -> original) restores
    original player ids when given."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            player = id_map[s.player] if id_map is not None else s.player
            fh.write(
                json.dumps(
                    {
                        "game_id": s.game_id,
                        "quarter": s.quarter,
                        "t": s.context,
                        "player": player,
                        "bh": list(s.bh_pos),
                        "basket": list(s.basket_pos),
                        "defenders": [list(d) for d in s.defenders],
                        "label": s.label,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def _check_sorted(keys, what: str) -> None:
    for a, b in zip(keys, keys[1:]):
        if b < a:
            raise ValueError(f"{what} not sorted by (game_id, quarter, timestamp)")


def label_frames(frames, shots, horizon_s: float = 1.0) -> list[LabeledSample]:
    """Label each frame 1 iff its ball-handler shoots within the horizon.

    ``shots`` are (player, game_id, quarter, timestamp_s) tuples. A frame at
    time t is positive iff a shot by the same player in the same game and
    quarter lands in the half-open window (t, t + horizon_s]. Both inputs
    must be sorted by (game_id, quarter, timestamp); player ids are kept as
    given (densify separately).
    """
    if horizon_s <= 0:
        raise ValueError(f"horizon_s must be > 0, got {horizon_s}")
    _check_sorted([(f.game_id, f.quarter, f.timestamp_s) for f in frames], "frames")
    _check_sorted([(s[1], s[2], s[3]) for s in shots], "shots")
    shot_times: dict[tuple, list[float]] = {}
    for player, game_id, quarter, ts in shots:
        shot_times.setdefault((game_id, quarter, player), []).append(float(ts))
    labeled = []
    for f in frames:
        times = shot_times.get((f.game_id, f.quarter, f.ballhandler_id), ())
        lo = bisect_right(times, f.timestamp_s)
        hi = bisect_right(times, f.timestamp_s + horizon_s)
        labeled.append(
            LabeledSample(
                game_id=f.game_id,
                quarter=f.quarter,
                player=f.ballhandler_id,
                context=f.quarter - 1,
                bh_pos=f.bh_pos,
                basket_pos=f.basket_pos,
                defenders=f.defenders,
                label=int(hi > lo),
            )
        )
    return labeled


def split_dataset(samples, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    """Shuffle uniformly (seeded) and split into train/validation/test.

    Cut points are the rounded cumulative ratios, so sizes match the request
    within one sample; the three parts partition the input.
    """
    r = check_ratios(ratios)
    seed = check_seed(seed)
    samples = list(samples)
    n = len(samples)
    perm = np.random.default_rng(seed).permutation(n)
    cut1 = round(n * r[0])
    cut2 = round(n * (r[0] + r[1]))
    parts = (perm[:cut1], perm[cut1:cut2], perm[cut2:])
    train, val, test = (tuple(samples[i] for i in part) for part in parts)
    return DatasetSplit(train=train, validation=val, test=test, seed=seed)


def parse_synergy_table(path) -> list[SynergyRow]:
    """Parse the synergy play-type CSV (header ``player,freq_1..freq_11,
    ppp_1..ppp_11,volume``) into one row per player."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty synergy table") from None
        if [h.strip() for h in header] != SYNERGY_HEADER:
            raise ValueError(
                f"{path}: bad header; expected {','.join(SYNERGY_HEADER)}"
            )
        rows = []
        for record in reader:
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            player = int(record[0])
            values = record[1:]
            if len(values) != SYNERGY_N_FEATURES:
                raise ValueError(
                    f"{path}: player {player} has {len(values)} features, "
                    f"expected {SYNERGY_N_FEATURES}"
                )
            feats = [float(v) for v in values]
            rows.append(
                SynergyRow(
                    player=player,
                    frequencies=tuple(feats[:SYNERGY_N_PLAYTYPES]),
                    points_per_possession=tuple(
                        feats[SYNERGY_N_PLAYTYPES : 2 * SYNERGY_N_PLAYTYPES]
                    ),
                    total_volume=feats[-1],
                )
            )
    return rows


def synergy_matrix(rows) -> tuple[list[int], np.ndarray]:
    """Stack synergy rows into (player ids, n x 23 feature matrix)."""
    ids = [r.player for r in rows]
    X = np.array([r.features() for r in rows]) if rows else np.empty((0, SYNERGY_N_FEATURES))
    return ids, X
