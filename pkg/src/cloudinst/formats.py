"""Text file formats: scene (.sc1), offsets (.off1), predictions (.pred1), PLY export.

All writers are byte-stable: the same object always serializes to the same
bytes, and every numeric field round-trips exactly (floats are written with
enough significant digits for their storage precision).
"""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .core import (
    FormatError,
    InstancePrediction,
    OffsetField,
    Scene,
    SceneError,
)

_F32 = "%.9g"  # round-trips float32
_F64 = "%.17g"  # round-trips float64


def _read_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="ascii")
    lines = text.split("\n")
    # a single trailing newline is the normal write shape
    while lines and lines[-1] == "":
        lines.pop()
    return lines


def _parse_int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise FormatError(f"line {lineno}: {what} is not an integer: {tok!r}") from None


def _parse_float(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"line {lineno}: {what} is not a number: {tok!r}") from None


def save_scene(scene: Scene, path) -> None:
    """Write a scene in format v1 (.sc1). See load_scene for the layout."""
    has_scores = scene.sem_scores is not None
    stuff = sorted(scene.stuff_classes)
    lines = [
        f"SC1 {scene.n_points} {scene.n_classes}",
        "STUFF " + " ".join([str(len(stuff))] + [str(c) for c in stuff]),
        f"SCORES {1 if has_scores else 0}",
    ]
    coords = scene.coords
    colors = scene.colors
    labels = scene.sem_labels
    insts = scene.inst_ids
    scores = scene.sem_scores
    for i in range(scene.n_points):
        parts = [
            _F32 % coords[i, 0],
            _F32 % coords[i, 1],
            _F32 % coords[i, 2],
            str(int(colors[i, 0])),
            str(int(colors[i, 1])),
            str(int(colors[i, 2])),
            str(int(labels[i])),
            str(int(insts[i])),
        ]
        if has_scores:
            parts.extend(_F32 % v for v in scores[i])
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def load_scene(path) -> Scene:
    """Parse a format v1 scene file.

    Layout: line 1 ``SC1 <n_points> <n_classes>``; line 2
    ``STUFF <k> <c_1> ... <c_k>``; line 3 ``SCORES <0|1>``; then one line per
    point: ``x y z r g b sem inst [p_0 ... p_{n_classes-1}]``.

    Any invariant violation is an error naming the offending line, never a
    silent fix.
    """
    lines = _read_lines(path)
    if len(lines) < 3:
        raise FormatError("line 1: truncated file, expected SC1 header")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "SC1":
        raise FormatError("line 1: malformed header, expected 'SC1 <n_points> <n_classes>'")
    n_points = _parse_int(head[1], 1, "n_points")
    n_classes = _parse_int(head[2], 1, "n_classes")
    if n_points < 0 or n_classes < 1:
        raise FormatError("line 1: n_points must be >= 0 and n_classes >= 1")

    stuff_toks = lines[1].split()
    if len(stuff_toks) < 2 or stuff_toks[0] != "STUFF":
        raise FormatError("line 2: malformed stuff header, expected 'STUFF <k> <ids...>'")
    k = _parse_int(stuff_toks[1], 2, "stuff count")
    if len(stuff_toks) != 2 + k:
        raise FormatError(f"line 2: expected {k} stuff class ids, got {len(stuff_toks) - 2}")
    stuff = frozenset(_parse_int(t, 2, "stuff class id") for t in stuff_toks[2:])

    score_toks = lines[2].split()
    if len(score_toks) != 2 or score_toks[0] != "SCORES" or score_toks[1] not in ("0", "1"):
        raise FormatError("line 3: malformed scores header, expected 'SCORES <0|1>'")
    has_scores = score_toks[1] == "1"

    n_fields = 8 + (n_classes if has_scores else 0)
    if len(lines) != 3 + n_points:
        raise FormatError(
            f"line {min(len(lines), 3 + n_points) + 1}: expected {n_points} point lines, "
            f"found {len(lines) - 3}"
        )

    coords = np.empty((n_points, 3), dtype=np.float32)
    colors = np.empty((n_points, 3), dtype=np.int64)
    labels = np.empty(n_points, dtype=np.int32)
    insts = np.empty(n_points, dtype=np.int32)
    scores = np.empty((n_points, n_classes), dtype=np.float32) if has_scores else None

    for i in range(n_points):
        lineno = 4 + i
        toks = lines[3 + i].split()
        if len(toks) != n_fields:
            raise FormatError(
                f"line {lineno}: expected {n_fields} fields, got {len(toks)}"
            )
        coords[i, 0] = _parse_float(toks[0], lineno, "x")
        coords[i, 1] = _parse_float(toks[1], lineno, "y")
        coords[i, 2] = _parse_float(toks[2], lineno, "z")
        colors[i, 0] = _parse_int(toks[3], lineno, "r")
        colors[i, 1] = _parse_int(toks[4], lineno, "g")
        colors[i, 2] = _parse_int(toks[5], lineno, "b")
        labels[i] = _parse_int(toks[6], lineno, "sem label")
        insts[i] = _parse_int(toks[7], lineno, "instance id")
        if has_scores:
            scores[i] = [_parse_float(t, lineno, "score") for t in toks[8:]]

    try:
        return Scene(
            n_classes=n_classes,
            coords=coords,
            colors=colors,
            sem_labels=labels,
            inst_ids=insts,
            stuff_classes=stuff,
            sem_scores=scores,
        )
    except SceneError as err:
        if err.point_index is not None:
            raise FormatError(f"line {4 + err.point_index}: {err}") from err
        raise FormatError(str(err)) from err


def save_offsets(offsets: OffsetField, path) -> None:
    lines = [f"OFF1 {offsets.n_points}"]
    off = offsets.offsets
    for i in range(offsets.n_points):
        lines.append(f"{_F64 % off[i, 0]} {_F64 % off[i, 1]} {_F64 % off[i, 2]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def load_offsets(path) -> OffsetField:
    """Parse a format v1 offset file: ``OFF1 <n>`` then n ``dx dy dz`` lines."""
    lines = _read_lines(path)
    if not lines:
        raise FormatError("line 1: empty file, expected OFF1 header")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "OFF1":
        raise FormatError("line 1: malformed header, expected 'OFF1 <n_points>'")
    n = _parse_int(head[1], 1, "n_points")
    if n < 0:
        raise FormatError("line 1: n_points must be >= 0")
    if len(lines) != 1 + n:
        raise FormatError(
            f"line {min(len(lines), 1 + n) + 1}: expected {n} offset lines, "
            f"found {len(lines) - 1}"
        )
    out = np.empty((n, 3), dtype=np.float64)
    for i in range(n):
        lineno = 2 + i
        toks = lines[1 + i].split()
        if len(toks) != 3:
            raise FormatError(f"line {lineno}: expected 3 fields, got {len(toks)}")
        out[i] = [_parse_float(t, lineno, "offset") for t in toks]
    try:
        return OffsetField(out)
    except SceneError as err:
        if err.point_index is not None:
            raise FormatError(f"line {2 + err.point_index}: {err}") from err
        raise FormatError(str(err)) from err


def predictions_text(preds: list[InstancePrediction]) -> str:
    lines = [f"PRED1 {len(preds)}"]
    for p in preds:
        lines.append(f"{p.class_id} {_F64 % p.score} {p.size}")
        lines.append(" ".join(str(int(i)) for i in p.point_idx))
    return "\n".join(lines) + "\n"


def save_predictions(preds: list[InstancePrediction], path) -> None:
    Path(path).write_text(predictions_text(preds), encoding="ascii", newline="\n")


def load_predictions(path) -> list[InstancePrediction]:
    """Parse a format v1 prediction file.

    Layout: ``PRED1 <m>`` then per prediction two lines,
    ``<class> <score> <n>`` and n space-separated point indices.  Index order
    in the file is free; duplicates are rejected.
    """
    lines = _read_lines(path)
    if not lines:
        raise FormatError("line 1: empty file, expected PRED1 header")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "PRED1":
        raise FormatError("line 1: malformed header, expected 'PRED1 <m>'")
    m = _parse_int(head[1], 1, "prediction count")
    if m < 0:
        raise FormatError("line 1: prediction count must be >= 0")
    if len(lines) != 1 + 2 * m:
        raise FormatError(
            f"line {len(lines) + 1}: expected {2 * m} prediction lines, "
            f"found {len(lines) - 1}"
        )
    preds = []
    for k in range(m):
        lineno = 2 + 2 * k
        toks = lines[lineno - 1].split()
        if len(toks) != 3:
            raise FormatError(f"line {lineno}: expected '<class> <score> <n>'")
        class_id = _parse_int(toks[0], lineno, "class")
        score = _parse_float(toks[1], lineno, "score")
        n = _parse_int(toks[2], lineno, "point count")
        idx_toks = lines[lineno].split()
        if len(idx_toks) != n:
            raise FormatError(
                f"line {lineno + 1}: expected {n} point indices, got {len(idx_toks)}"
            )
        idx = np.array(
            [_parse_int(t, lineno + 1, "point index") for t in idx_toks],
            dtype=np.int64,
        )
        uniq = np.unique(idx)
        if uniq.size != idx.size:
            raise FormatError(f"line {lineno + 1}: duplicate point index")
        try:
            preds.append(InstancePrediction(point_idx=uniq, class_id=class_id, score=score))
        except SceneError as err:
            raise FormatError(f"line {lineno}: {err}") from err
    return preds


def prediction_color(index: int) -> tuple[int, int, int]:
    """Deterministic palette keyed by prediction index (golden-angle hue)."""
    hue = (index * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.72, 0.95)
    return (int(r * 255), int(g * 255), int(b * 255))


def export_ply(scene: Scene, preds: list[InstancePrediction], path) -> None:
    """Write an ASCII PLY with one vertex per point.

    Points are colored by the first prediction that contains them (palette
    keyed by prediction index); points in no prediction are gray.
    """
    n = scene.n_points
    colors = np.full((n, 3), 128, dtype=np.int64)
    painted = np.zeros(n, dtype=bool)
    for k, p in enumerate(preds):
        if p.point_idx[-1] >= n:
            raise SceneError(
                f"prediction {k} references point {int(p.point_idx[-1])} "
                f"but the scene has {n} points"
            )
        fresh = p.point_idx[~painted[p.point_idx]]
        colors[fresh] = prediction_color(k)
        painted[fresh] = True
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    coords = scene.coords
    for i in range(n):
        lines.append(
            f"{_F32 % coords[i, 0]} {_F32 % coords[i, 1]} {_F32 % coords[i, 2]} "
            f"{colors[i, 0]} {colors[i, 1]} {colors[i, 2]}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")
