# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""SDPA sparse problem files and SDPA-style solution files.

SDPA reads  minimize c . x  subject to  X = sum_i F_i x_i - F_0  PSD,
so a block C + sum y_i F_i is written with F_0 = -C. Equalities a . y = b
become the pair a . y - b >= 0, -a . y + b >= 0 in one trailing LP block
(negative size in the block-structure line).
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .poly import DimensionError
from .sdp import LmiBlock, LmiStandardForm

_COMMENT_PREFIXES = ("*", '"', "#")
_PUNCTUATION = re.compile(r"[{}(),]")


class SdpaFormatError(ValueError):
    """Malformed SDPA text; the message carries the offending line number."""

    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


def _fmt(value: float) -> str:
    return repr(float(value))


def export_sdpa(form: LmiStandardForm, title: str = "") -> str:
    m = form.num_vars
    p = form.A.shape[0]
    sizes = [block.size for block in form.blocks]
    if p:
        sizes.append(-2 * p)

    lines = [f"* momentvv moment relaxation{': ' + title if title else ''}"]
    lines.append(str(m))
    lines.append(str(len(sizes)))
    lines.append(" ".join(str(s) for s in sizes) if sizes else "0")
    lines.append(" ".join(_fmt(v) for v in form.c))

    lp_block = len(form.blocks) + 1
    dense = [block.dense(m) for block in form.blocks]

    # F_0 = -C, and b_r / -b_r on the LP diagonal.
    for k, block in enumerate(form.blocks, start=1):
        for i, j in zip(*np.triu_indices(block.size)):
            value = -block.const[i, j]
            if value != 0.0:
                lines.append(f"0 {k} {i + 1} {j + 1} {_fmt(value)}")
    for r in range(p):
        if form.b[r] != 0.0:
            lines.append(f"0 {lp_block} {2 * r + 1} {2 * r + 1} {_fmt(form.b[r])}")
            lines.append(f"0 {lp_block} {2 * r + 2} {2 * r + 2} {_fmt(-form.b[r])}")

    for var in range(m):
        for k, (block, mats) in enumerate(zip(form.blocks, dense), start=1):
            F = mats[var]
            for i, j in zip(*np.triu_indices(block.size)):
                if F[i, j] != 0.0:
                    lines.append(f"{var + 1} {k} {i + 1} {j + 1} {_fmt(F[i, j])}")
        for r in range(p):
            a = form.A[r, var]
            if a != 0.0:
                lines.append(f"{var + 1} {lp_block} {2 * r + 1} {2 * r + 1} {_fmt(a)}")
                lines.append(f"{var + 1} {lp_block} {2 * r + 2} {2 * r + 2} {_fmt(-a)}")
    return "\n".join(lines) + "\n"


def write_sdpa(form: LmiStandardForm, path: Path, title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(export_sdpa(form, title))
    return path


def _content_lines(text: str) -> List[Tuple[int, str]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(_COMMENT_PREFIXES):
            continue
        out.append((lineno, _PUNCTUATION.sub(" ", line).strip()))
    return out


def _numbers(lineno: int, line: str, kind=float) -> List:
    try:
        return [kind(tok) for tok in line.split()]
    except ValueError as exc:
        raise SdpaFormatError(lineno, f"not a number list: {line!r}") from exc


def parse_sdpa(text: str) -> LmiStandardForm:
    """Inverse of `export_sdpa`: LP pairs are recombined into equality rows."""
    lines = _content_lines(text)
    if len(lines) < 3:
        last = lines[-1][0] if lines else 0
        raise SdpaFormatError(last + 1, "file ends before the problem header is complete")
    (l_m, s_m), (l_nb, s_nb), (l_st, s_st) = lines[:3]
    m_vals = _numbers(l_m, s_m, int)
    nb_vals = _numbers(l_nb, s_nb, int)
    if len(m_vals) != 1 or len(nb_vals) != 1:
        raise SdpaFormatError(l_m if len(m_vals) != 1 else l_nb, "expected a single integer")
    m, nblocks = m_vals[0], nb_vals[0]
    sizes = _numbers(l_st, s_st, int) if nblocks else []
    if len(sizes) != nblocks:
        raise SdpaFormatError(l_st, f"{len(sizes)} block sizes for {nblocks} blocks")

    rest = lines[3:]
    c_vals: List[float] = []
    cursor = 0
    while len(c_vals) < m:
        if cursor >= len(rest):
            raise SdpaFormatError(
                (rest[-1][0] if rest else l_st) + 1, f"objective has {len(c_vals)} of {m} entries"
            )
        lineno, line = rest[cursor]
        c_vals.extend(_numbers(lineno, line))
        cursor += 1
    if len(c_vals) != m:
        raise SdpaFormatError(rest[cursor - 1][0], f"objective has {len(c_vals)} entries, expected {m}")

    sdp_sizes = [s for s in sizes if s > 0]
    lp_positions = [k for k, s in enumerate(sizes) if s < 0]
    if len(lp_positions) > 1 or (lp_positions and lp_positions[0] != nblocks - 1):
        raise SdpaFormatError(l_st, "only one trailing LP block of equality pairs is supported")
    lp_size = -sizes[-1] if lp_positions else 0
    if lp_size % 2:
        raise SdpaFormatError(l_st, "LP block size must be even (equality pairs)")
    p = lp_size // 2

    consts = [np.zeros((n, n)) for n in sdp_sizes]
    mats = [np.zeros((m, n, n)) for n in sdp_sizes]
    lp_const = np.zeros(lp_size)
    lp_coeffs = np.zeros((m, lp_size))

    for lineno, line in rest[cursor:]:
        fields = line.split()
        if len(fields) != 5:
            raise SdpaFormatError(lineno, f"expected 'matno block i j value', got {line!r}")
        try:
            matno, blk, i, j = (int(tok) for tok in fields[:4])
            value = float(fields[4])
        except ValueError as exc:
            raise SdpaFormatError(lineno, f"bad entry {line!r}") from exc
        if not 0 <= matno <= m or not 1 <= blk <= nblocks:
            raise SdpaFormatError(lineno, f"entry outside the problem dimensions: {line!r}")
        size = abs(sizes[blk - 1])
        if not (1 <= i <= size and 1 <= j <= size):
            raise SdpaFormatError(lineno, f"index outside block {blk} of size {size}")
        i, j = min(i, j) - 1, max(i, j) - 1
        if sizes[blk - 1] < 0:
            if i != j:
                raise SdpaFormatError(lineno, "LP block entries must be diagonal")
            if matno == 0:
                lp_const[i] = value
            else:
                lp_coeffs[matno - 1, i] = value
            continue
        # F_0 = -C
        target = consts[blk - 1] if matno == 0 else mats[blk - 1][matno - 1]
        sign = -1.0 if matno == 0 else 1.0
        target[i, j] = sign * value
        target[j, i] = sign * value

    A = np.zeros((p, m))
    b = np.zeros(p)
    for r in range(p):
        first, second = 2 * r, 2 * r + 1
        if not (
            np.array_equal(lp_coeffs[:, first], -lp_coeffs[:, second])
            and lp_const[first] == -lp_const[second]
        ):
            raise SdpaFormatError(l_st, f"LP rows {first + 1} and {second + 1} are not an equality pair")
        A[r] = lp_coeffs[:, first]
        b[r] = lp_const[first]

    blocks = []
    for k, (n, const, dense) in enumerate(zip(sdp_sizes, consts, mats)):
        used = np.flatnonzero(np.any(dense.reshape(m, -1) != 0.0, axis=1))
        blocks.append(LmiBlock(f"block{k + 1}", n, const, used, dense[used]))
    return LmiStandardForm(np.asarray(c_vals, dtype=float), A, b, tuple(blocks))


def read_sdpa(path: Path) -> LmiStandardForm:
    return parse_sdpa(Path(path).read_text())


def import_sdpa_solution(text: str, num_vars: Optional[int] = None) -> np.ndarray:
    """Read y from an SDPA result (the ``xVec`` block) or from a bare list of numbers."""
    values: List[float] = []
    lines = text.splitlines()
    start = 0
    for lineno, raw in enumerate(lines, start=1):
        if raw.strip().startswith("xVec"):
            start = lineno
            break

    if start:
        opened: Optional[int] = None
        collected: List[Tuple[int, str]] = []
        tail = lines[start - 1].split("=", 1)[1] if "=" in lines[start - 1] else ""
        pending: List[Tuple[int, str]] = [(start, tail)] + [
            (n, line) for n, line in enumerate(lines[start:], start=start + 1)
        ]
        closed = False
        for lineno, line in pending:
            if opened is None:
                if "{" not in line:
                    if line.strip():
                        raise SdpaFormatError(lineno, "expected '{' to open xVec")
                    continue
                opened = lineno
                line = line.split("{", 1)[1]
            if "}" in line:
                collected.append((lineno, line.split("}", 1)[0]))
                closed = True
                break
            collected.append((lineno, line))
        if opened is None:
            raise SdpaFormatError(start, "xVec has no values")
        if not closed:
            raise SdpaFormatError(opened, "xVec block is not terminated with '}'")
        for lineno, chunk in collected:
            values.extend(_numbers(lineno, _PUNCTUATION.sub(" ", chunk)))
    else:
        for lineno, line in _content_lines(text):
            values.extend(_numbers(lineno, line))

    y = np.asarray(values, dtype=float)
    if num_vars is not None and y.shape[0] != num_vars:
        raise DimensionError(f"Solution has {y.shape[0]} entries, problem has {num_vars} variables")
    return y


def solution_summary(text: str) -> Dict[str, str]:
    """Key lines of an SDPA result file (phase.value, objValPrimal, objValDual) when present."""
    summary: Dict[str, str] = {}
    for raw in text.splitlines():
        if "=" not in raw:
            continue
        key, value = (part.strip() for part in raw.split("=", 1))
        if key in {"phase.value", "objValPrimal", "objValDual"}:
            summary[key] = value
    return summary
