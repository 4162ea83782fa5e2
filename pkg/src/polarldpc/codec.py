"""File formats, GF(2) encoding and result serialization.

All text output is ASCII with LF line endings.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import TannerGraph

log = logging.getLogger(__name__)


class FormatError(ValueError):
    """Malformed input file."""


# --------------------------------------------------------------------------
# alist
# --------------------------------------------------------------------------

def format_alist(g: TannerGraph) -> str:
    """Render ``g`` as alist text (1-based indices, zero-padded rows)."""
    max_dv = int(g.var_degree.max()) if g.n_var else 0
    max_dc = int(g.check_degree.max()) if g.n_check else 0
    lines = [f"{g.n_var} {g.n_check}", f"{max_dv} {max_dc}",
             " ".join(map(str, g.var_degree.tolist())),
             " ".join(map(str, g.check_degree.tolist()))]
    # a node list is never written as an empty line: at least one 0 pad
    for v in range(g.n_var):
        nb = (g.var_neighbors(v) + 1).tolist()
        lines.append(" ".join(map(str, nb + [0] * max(max_dv - len(nb), 1 - len(nb)))))
    for c in range(g.n_check):
        nb = (g.check_neighbors(c) + 1).tolist()
        lines.append(" ".join(map(str, nb + [0] * max(max_dc - len(nb), 1 - len(nb)))))
    return "\n".join(lines) + "\n"


def write_alist(g: TannerGraph, path: str | Path) -> None:
    Path(path).write_bytes(format_alist(g).encode("ascii"))


def parse_alist(text: str) -> TannerGraph:
    """Parse alist text; raises :class:`FormatError` naming the line at fault."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rows.append((lineno, [int(tok) for tok in raw.split()]))
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer token") from None
    pos = 0

    def take(section: str):
        nonlocal pos
        if pos >= len(rows):
            raise FormatError(f"truncated alist: missing {section}")
        item = rows[pos]
        pos += 1
        return item

    lineno, header = take("header line 'n_var n_check'")
    if len(header) != 2 or min(header) <= 0:
        raise FormatError(f"line {lineno}: expected two positive counts 'n_var n_check'")
    n_var, n_check = header
    lineno, maxes = take("max degree line")
    if len(maxes) != 2 or min(maxes) < 0:
        raise FormatError(f"line {lineno}: expected 'max_var_degree max_check_degree'")
    lineno, vdeg = take("variable degree list")
    if len(vdeg) != n_var:
        raise FormatError(f"line {lineno}: expected {n_var} variable degrees, got {len(vdeg)}")
    lineno, cdeg = take("check degree list")
    if len(cdeg) != n_check:
        raise FormatError(f"line {lineno}: expected {n_check} check degrees, got {len(cdeg)}")
    if max(vdeg) > maxes[0] or max(cdeg) > maxes[1] or min(vdeg) < 0 or min(cdeg) < 0:
        raise FormatError(f"line {lineno}: degrees inconsistent with declared maxima {maxes}")

    def neighbor_lists(count, degrees, limit, side):
        out = []
        for k in range(count):
            lineno, entries = take(f"{side} neighbor list {k + 1} of {count}")
            d = degrees[k]
            head, tail = entries[:d], entries[d:]
            if len(head) < d:
                raise FormatError(f"line {lineno}: {side} {k + 1} lists {len(head)} neighbors, degree is {d}")
            bad = [x for x in head if not 1 <= x <= limit]
            if bad:
                raise FormatError(f"line {lineno}: index {bad[0]} out of range 1..{limit} (alist is 1-based)")
            if any(x != 0 for x in tail):
                raise FormatError(f"line {lineno}: {side} {k + 1} has more than {d} neighbors")
            if len(set(head)) != len(head):
                raise FormatError(f"line {lineno}: parallel edge in {side} {k + 1}")
            out.append([x - 1 for x in head])
        return out

    var_lists = neighbor_lists(n_var, vdeg, n_check, "variable")
    check_lists = neighbor_lists(n_check, cdeg, n_var, "check")
    if pos != len(rows):
        raise FormatError(f"line {rows[pos][0]}: unexpected trailing data")
    from_vars = {(v, c) for v, cs in enumerate(var_lists) for c in cs}
    from_checks = {(v, c) for c, vs in enumerate(check_lists) for v in vs}
    if from_vars != from_checks:
        v, c = sorted(from_vars ^ from_checks)[0]
        raise FormatError(f"variable and check views disagree on edge ({v + 1}, {c + 1})")
    return TannerGraph(n_var, n_check, sorted(from_vars))


def read_alist(path: str | Path, layers: str | Path | None = None) -> TannerGraph:
    """Read an alist file, attaching layer labels from a sidecar JSON when given."""
    try:
        text = Path(path).read_bytes().decode("ascii")
    except UnicodeDecodeError:
        raise FormatError(f"{path}: not an ASCII alist file") from None
    g = parse_alist(text)
    if layers is not None:
        var_layer, check_layer = read_layers(layers)
        if len(var_layer) != g.n_var or len(check_layer) != g.n_check:
            raise FormatError(f"{layers}: layer sidecar sizes do not match the graph")
        g = g.with_layers(var_layer, check_layer)
    return g


# --------------------------------------------------------------------------
# layer sidecar
# --------------------------------------------------------------------------

def format_layers(g: TannerGraph) -> str:
    data = {"var_layer": g.var_layer.tolist(), "check_layer": g.check_layer.tolist()}
    return json.dumps(data, separators=(", ", ": ")) + "\n"


def write_layers(g: TannerGraph, path: str | Path) -> None:
    Path(path).write_bytes(format_layers(g).encode("ascii"))


def read_layers(path: str | Path) -> tuple[list[int], list[int]]:
    try:
        data = json.loads(Path(path).read_text(encoding="ascii"))
        return [int(x) for x in data["var_layer"]], [int(x) for x in data["check_layer"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad layer sidecar ({exc})") from None


def layers_path_for(alist_path: str | Path) -> Path:
    """Default sidecar location: ``code.alist`` -> ``code.layers.json``."""
    p = Path(alist_path)
    return p.with_name(p.stem + ".layers.json")


# --------------------------------------------------------------------------
# GF(2) systematic encoding
# --------------------------------------------------------------------------

def gf2_rank(H) -> int:
    """Rank of a binary matrix over GF(2)."""
    A = np.array(H, dtype=np.uint8) & 1
    rank = 0
    rows, cols = A.shape
    for col in range(cols):
        if rank == rows:
            break
        pivots = np.nonzero(A[rank:, col])[0]
        if pivots.size == 0:
            continue
        p = rank + pivots[0]
        if p != rank:
            A[[rank, p]] = A[[p, rank]]
        hits = np.nonzero(A[:, col])[0]
        hits = hits[hits != rank]
        A[hits] ^= A[rank]
        rank += 1
    return rank


class SystematicEncoder:
    """Encoder from GF(2) elimination of H with column pivoting.

    After elimination ``H[:, perm]`` row-reduces to ``[I_r | P]``; a message
    fills the last ``k = n - r`` permuted positions and the parity positions are
    ``P @ m``.  ``perm`` maps permuted positions back to graph variables, so
    codewords come out in graph coordinates.
    """

    def __init__(self, g: TannerGraph):
        A = g.to_dense().astype(np.uint8)
        m, n = A.shape
        pivots = []
        rank = 0
        for col in range(n):
            if rank == m:
                break
            nz = np.nonzero(A[rank:, col])[0]
            if nz.size == 0:
                continue
            p = rank + nz[0]
            if p != rank:
                A[[rank, p]] = A[[p, rank]]
            hits = np.nonzero(A[:, col])[0]
            hits = hits[hits != rank]
            A[hits] ^= A[rank]
            pivots.append(col)
            rank += 1
        free = np.setdiff1d(np.arange(n), pivots)
        self.n = n
        self.rank = rank
        self.k = n - rank
        self.perm = np.concatenate([np.array(pivots, dtype=np.int64), free]).astype(np.int64)
        self.parity = A[:rank][:, free].copy()
        if rank < m:
            log.warning("H has rank %d < %d rows; effective rate %.6f", rank, m, self.rate)

    @property
    def rate(self) -> float:
        return self.k / self.n if self.n else 0.0

    def encode(self, message) -> np.ndarray:
        msg = np.asarray(message, dtype=np.uint8) & 1
        if msg.shape != (self.k,):
            raise ValueError(f"message must have {self.k} bits")
        permuted = np.empty(self.n, dtype=np.uint8)
        permuted[self.rank:] = msg
        permuted[:self.rank] = (self.parity.astype(np.int64) @ msg) & 1
        word = np.empty(self.n, dtype=np.uint8)
        word[self.perm] = permuted
        return word

    __call__ = encode


def systematic_encoder(g: TannerGraph) -> SystematicEncoder:
    return SystematicEncoder(g)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def fmt_float(x: float) -> str:
    return format(float(x), ".10g")


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_float(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).write_bytes(format_csv(header, rows).encode("ascii"))
