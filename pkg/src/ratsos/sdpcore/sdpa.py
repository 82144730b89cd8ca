"""SDPA sparse format (``.dat-s``) export and import.

Layout::

    m
    nblocks
    size_1 size_2 ...          (negative size marks a diagonal block)
    c_1 c_2 ... c_m
    matno blkno i j value      (1-based, i <= j, matno 0 is F_0)

Equalities ``A y = b`` have no native encoding. They are written as a
trailing diagonal block holding the pairs ``A_r y - b_r >= 0`` and
``b_r - A_r y >= 0``, announced by a leading comment line
``* equalities: <count>`` so that import can restore them exactly. Files
without that comment are read as plain block problems.
"""

from __future__ import annotations

import re

import numpy as np
import scipy.sparse as sp

from .problem import Block, SDPProblem

_EQ_MARK = re.compile(r"^[*\"]\s*equalities:\s*(\d+)\s*$")


class SDPAFormatError(ValueError):
    """Malformed SDPA text; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _num(v: float) -> str:
    s = format(float(v), ".17g")
    return "0" if s == "-0" else s


def export_sdpa(p: SDPProblem) -> str:
    """Serialize ``p``; output is byte-deterministic for equal problems."""
    blocks = list(p.blocks)
    neq = p.n_eq
    lines = []
    if neq:
        lines.append(f"* equalities: {neq}")
        eq = Block(2 * neq, diagonal=True)
        A = p.A.tocsr()
        for r in range(neq):
            row = A.getrow(r)
            for v, a in zip(row.indices, row.data):
                eq.add(int(v), 2 * r, 2 * r, a)
                eq.add(int(v), 2 * r + 1, 2 * r + 1, -a)
            eq.add(-1, 2 * r, 2 * r, p.b[r])
            eq.add(-1, 2 * r + 1, 2 * r + 1, -p.b[r])
        blocks.append(eq)
    c = np.zeros(p.n_vars) if p.c is None else p.c
    lines.append(str(p.n_vars))
    lines.append(str(len(blocks)))
    lines.append(" ".join(str(-b.dim if b.diagonal else b.dim) for b in blocks))
    lines.append(" ".join(_num(x) for x in c))
    entries = []
    for k, blk in enumerate(blocks):
        for v, i, j, val in blk.canonical_entries():
            entries.append((v + 1, k + 1, i + 1, j + 1, val))
    entries.sort(key=lambda e: e[:4])
    for mat, blk, i, j, val in entries:
        lines.append(f"{mat} {blk} {i} {j} {_num(val)}")
    return "\n".join(lines) + "\n"


def _tokens(text: str):
    """Yield ``(token, line)`` pairs, skipping comments and punctuation."""
    neq = None
    out = []
    started = False
    for ln, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not started and (s.startswith("*") or s.startswith('"')):
            m = _EQ_MARK.match(s)
            if m:
                neq = int(m.group(1))
            continue
        if s:
            started = True
        for tok in re.split(r"[\s,{}()]+", s):
            if tok:
                out.append((tok, ln))
    return out, neq


def import_sdpa(text: str) -> SDPProblem:
    """Parse SDPA sparse text back into an :class:`SDPProblem`."""
    toks, neq = _tokens(text)
    pos = 0
    last_line = max(1, len(text.splitlines()))

    def take(kind, what):
        nonlocal pos
        if pos >= len(toks):
            raise SDPAFormatError(f"unexpected end of file, expected {what}", last_line)
        tok, ln = toks[pos]
        pos += 1
        try:
            if kind is int:
                f = float(tok)
                if f != int(f):
                    raise ValueError
                return int(f), ln
            return float(tok), ln
        except ValueError:
            raise SDPAFormatError(f"expected {what}, got {tok!r}", ln) from None

    m, _ = take(int, "number of variables")
    nb, ln = take(int, "number of blocks")
    if m < 0 or nb < 0:
        raise SDPAFormatError("counts must be non-negative", ln)
    sizes = [take(int, "block size")[0] for _ in range(nb)]
    if any(s == 0 for s in sizes):
        raise SDPAFormatError("block size 0", ln)
    c = np.array([take(float, "objective coefficient")[0] for _ in range(m)])
    blocks = [Block(abs(s), diagonal=s < 0) for s in sizes]
    while pos < len(toks):
        mat, ln = take(int, "matrix number")
        blk, _ = take(int, "block number")
        i, _ = take(int, "row index")
        j, _ = take(int, "column index")
        val, _ = take(float, "value")
        if not (0 <= mat <= m):
            raise SDPAFormatError(f"matrix number {mat} out of range", ln)
        if not (1 <= blk <= nb):
            raise SDPAFormatError(f"block number {blk} out of range", ln)
        try:
            blocks[blk - 1].add(mat - 1, i - 1, j - 1, val)
        except ValueError as exc:
            raise SDPAFormatError(str(exc), ln) from None

    A, b = None, None
    if neq:
        if not blocks or not blocks[-1].diagonal or blocks[-1].dim != 2 * neq:
            raise SDPAFormatError("equality marker does not match the final block", 1)
        eq = blocks.pop()
        A = sp.lil_matrix((neq, m))
        b = np.zeros(neq)
        for v, i, _, val in eq.canonical_entries():
            r, second = divmod(i, 2)
            if second:
                continue
            if v < 0:
                b[r] = val
            else:
                A[r, v] = val
        A = A.tocsr()
    cvec = c if np.any(c != 0) else None
    return SDPProblem(m, blocks, A=A, b=b, c=cvec)


def write_sdpa(p: SDPProblem, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(export_sdpa(p))


def read_sdpa(path) -> SDPProblem:
    with open(path) as fh:
        return import_sdpa(fh.read())
