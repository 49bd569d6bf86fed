"""Problem file format: a UTF-8 JSON document, row-major arrays.

Floats are serialized as shortest exact decimal representations, so a
write/read round trip reproduces every coefficient bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from .blockalg import BlockOperator, BlockStructure
from .model import ProblemSpec, ProxFriendlyFunction, SmoothConvexFunction

__all__ = ["ParseError", "write_problem", "read_problem", "to_dict", "from_dict"]


class ParseError(ValueError):
    """A problem file is malformed; the message names the field at fault."""


def _prox_to_dict(fn: ProxFriendlyFunction) -> dict:
    if fn.kind == "zero":
        return {"kind": "zero", "dim": fn.dim}
    if fn.kind == "l1":
        return {"kind": "l1", "dim": fn.dim, "lam": fn.lam}
    return {"kind": "box", "lo": fn.lo.tolist(), "hi": fn.hi.tolist()}


def _smooth_to_dict(fn: SmoothConvexFunction) -> dict:
    return {
        "Q": fn.Q.matrix.reshape(-1).tolist(),
        "l": fn.lin.tolist(),
        "const": fn.const,
        "sigma_hat_mode": fn.majorizer_mode,
        "sigma_low_mode": fn.minorizer_mode,
    }


def to_dict(spec: ProblemSpec) -> dict:
    return {
        "x_blocks": list(spec.x_structure.block_dims),
        "y_blocks": list(spec.y_structure.block_dims),
        "z_dim": spec.z_dim,
        "A": spec.A.matrix.reshape(-1).tolist(),
        "B": spec.B.matrix.reshape(-1).tolist(),
        "c": spec.c.tolist(),
        "f": _smooth_to_dict(spec.f),
        "g": _smooth_to_dict(spec.g),
        "p1": _prox_to_dict(spec.p1),
        "q1": _prox_to_dict(spec.q1),
    }


def write_problem(spec: ProblemSpec, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(spec), fh, indent=1)
        fh.write("\n")


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"missing field '{key}' in {where}")
    return obj[key]


def _parse_prox(obj: dict, where: str, dim: int) -> ProxFriendlyFunction:
    kind = _need(obj, "kind", where)
    try:
        if kind == "zero":
            return ProxFriendlyFunction.zero(dim)
        if kind == "l1":
            return ProxFriendlyFunction.l1(dim, float(_need(obj, "lam", where)))
        if kind == "box":
            lo = np.asarray(_need(obj, "lo", where), dtype=float)
            hi = np.asarray(_need(obj, "hi", where), dtype=float)
            if lo.size != dim or hi.size != dim:
                raise ParseError(f"field 'lo'/'hi' in {where} must have length {dim}")
            return ProxFriendlyFunction.box(lo, hi)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"bad value in {where}: {exc}") from exc
    raise ParseError(f"unknown kind {kind!r} in {where}")


def _parse_smooth(obj: dict, where: str, structure: BlockStructure) -> SmoothConvexFunction:
    n = structure.total_dim
    q_flat = np.asarray(_need(obj, "Q", where), dtype=float)
    if q_flat.size != n * n:
        raise ParseError(f"field 'Q' in {where} must have {n * n} entries, got {q_flat.size}")
    lin = np.asarray(_need(obj, "l", where), dtype=float)
    if lin.size != n:
        raise ParseError(f"field 'l' in {where} must have {n} entries, got {lin.size}")
    try:
        return SmoothConvexFunction(
            Q=BlockOperator(structure, structure, q_flat.reshape(n, n), self_adjoint=True),
            lin=lin,
            const=float(obj.get("const", 0.0)),
            majorizer_mode=obj.get("sigma_hat_mode", "tight"),
            minorizer_mode=obj.get("sigma_low_mode", "zero"),
        )
    except ValueError as exc:
        raise ParseError(f"bad smooth function in {where}: {exc}") from exc


def from_dict(doc: dict) -> ProblemSpec:
    if not isinstance(doc, dict):
        raise ParseError("problem document must be a JSON object")
    xs = BlockStructure(tuple(int(d) for d in _need(doc, "x_blocks", "top level")))
    ys = BlockStructure(tuple(int(d) for d in _need(doc, "y_blocks", "top level")))
    z = int(_need(doc, "z_dim", "top level"))
    zs = BlockStructure.single(z)

    def _matrix(key: str, rows: int) -> np.ndarray:
        flat = np.asarray(_need(doc, key, "top level"), dtype=float)
        if flat.size != rows * z:
            raise ParseError(f"field '{key}' must have {rows * z} entries, got {flat.size}")
        return flat.reshape(rows, z)

    A = _matrix("A", xs.total_dim)
    B = _matrix("B", ys.total_dim)
    c = np.asarray(_need(doc, "c", "top level"), dtype=float)
    if c.size != z:
        raise ParseError(f"field 'c' must have {z} entries, got {c.size}")
    try:
        return ProblemSpec(
            x_structure=xs, y_structure=ys, z_dim=z,
            p1=_parse_prox(_need(doc, "p1", "top level"), "p1", xs.block_dims[0]),
            q1=_parse_prox(_need(doc, "q1", "top level"), "q1", ys.block_dims[0]),
            f=_parse_smooth(_need(doc, "f", "top level"), "f", xs),
            g=_parse_smooth(_need(doc, "g", "top level"), "g", ys),
            A=BlockOperator(xs, zs, A), B=BlockOperator(ys, zs, B), c=c)
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(f"inconsistent problem data: {exc}") from exc


def read_problem(path) -> ProblemSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_dict(doc)
