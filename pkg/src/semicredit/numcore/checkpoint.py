"""Flat text parameter files that round-trip float64 values bit-exactly.

Layout: a magic/version header line, then for each array a name line
(``<name> <ndim> <dims...>``) followed by one line of C99 hex floats in
row-major order. Hex floats make the round trip exact and keep the file
diffable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ContractError

MAGIC = "semicredit-params"
VERSION = 1


def save_params(path: str | Path, named: dict[str, np.ndarray]) -> None:
    lines = [f"{MAGIC} {VERSION}"]
    for name, arr in named.items():
        if " " in name or "\n" in name:
            raise ContractError(f"parameter name {name!r} contains whitespace")
        arr = np.asarray(arr, dtype=np.float64)
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"{name} {arr.ndim} {dims}".rstrip())
        lines.append(" ".join(float(x).hex() for x in arr.ravel(order="C")))
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    text = Path(path).read_text().splitlines()
    if not text:
        raise ContractError(f"{path}: empty parameter file")
    header = text[0].split()
    if len(header) != 2 or header[0] != MAGIC:
        raise ContractError(f"{path}: not a {MAGIC} file")
    if int(header[1]) != VERSION:
        raise ContractError(f"{path}: unsupported version {header[1]}")
    named: dict[str, np.ndarray] = {}
    row = 1
    while row < len(text):
        if not text[row].strip():
            row += 1
            continue
        head = text[row].split()
        name, ndim = head[0], int(head[1])
        shape = tuple(int(d) for d in head[2 : 2 + ndim])
        if len(shape) != ndim:
            raise ContractError(f"{path}: malformed shape line for {name!r}")
        values = np.array([float.fromhex(tok) for tok in text[row + 1].split()], dtype=np.float64)
        expected = int(np.prod(shape)) if shape else 1
        if values.size != expected:
            raise ContractError(f"{path}: {name!r} expects {expected} values, found {values.size}")
        named[name] = values.reshape(shape)
        row += 2
    return named
