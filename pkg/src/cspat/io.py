"""Plain-text and image formats: sinogram/image CSV, 8-bit PGM, matrix text."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .expander import MeasurementMatrix


def write_csv(path, values) -> None:
    """One row per line, comma separated, ``repr``-exact floats, ``\\n`` line ends."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", newline="\n") as fh:
        for row in values:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_pgm(path, values, sidecar: bool = True) -> tuple[float, float]:
    """Binary PGM (P5) after min-max scaling to 0..255.

    Returns ``(vmin, vmax)``; with ``sidecar`` they are also written next to the
    image as ``<name>.scale.txt`` so the raw values can be recovered as
    ``vmin + pixel / 255 * (vmax - vmin)``.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin
    scaled = np.zeros(values.shape) if span == 0 else (values - vmin) / span
    pixels = np.round(scaled * 255).astype(np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    if sidecar:
        scale_path = Path(path).with_suffix(".scale.txt")
        scale_path.write_text(f"vmin {vmin!r}\nvmax {vmax!r}\n")
    return vmin, vmax


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise ValueError(f"not a binary PGM: {tokens[0]!r}")
    cols, rows, maxval = map(int, tokens[1:])
    if maxval > 255:
        raise ValueError("only 8-bit PGM is supported")
    pos += 1
    return np.frombuffer(data[pos:pos + rows * cols], dtype=np.uint8).reshape(rows, cols)


def write_matrix(path, A: MeasurementMatrix) -> None:
    """First line ``m N d seed``, then the 1-based sorted columns of each row."""
    seed = -1 if A.seed is None else A.seed
    lines = [f"{A.m} {A.N} {A.d} {seed}"]
    lines += [" ".join(str(j + 1) for j in sorted(row)) for row in A.row_sets]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> MeasurementMatrix:
    lines = Path(path).read_text().split("\n")
    try:
        m, N, d, seed = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad matrix header {lines[0]!r}") from exc
    rows = lines[1:1 + m]
    if len(rows) < m:
        raise ValueError(f"expected {m} row lines, found {len(rows)}")
    cols = [[] for _ in range(N)]
    for i, line in enumerate(rows):
        for tok in line.split():
            j = int(tok) - 1
            if not 0 <= j < N:
                raise ValueError(f"row {i + 1} references column {j + 1} outside 1..{N}")
            cols[j].append(i)
    return MeasurementMatrix(m, N, d, tuple(cols), None if seed < 0 else seed)


def write_json(path, obj) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
