"""Plain-text, versioned serialization of solver artifacts.

Every artifact is a line-oriented text file: a version tag, a kind, one
single-line JSON metadata header, then one record per line.  Floats are
written with repr so a reload round-trips bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import SchemaMismatch
from .solver_infinite import StationaryPolicy, ValueTable

FORMAT_TAG = "meterguard-artifact v1"


def _write_header(fh, kind: str, meta: dict):
    fh.write(f"# {FORMAT_TAG}\n")
    fh.write(f"# kind={kind}\n")
    fh.write("# meta=" + json.dumps(meta, sort_keys=True) + "\n")


def _read_header(fh, expected_kind: str) -> dict:
    tag = fh.readline().strip()
    if tag != f"# {FORMAT_TAG}":
        raise SchemaMismatch(f"unsupported artifact header {tag!r}")
    kind = fh.readline().strip()
    if kind != f"# kind={expected_kind}":
        raise SchemaMismatch(f"expected kind={expected_kind}, found {kind!r}")
    meta_line = fh.readline().strip()
    if not meta_line.startswith("# meta="):
        raise SchemaMismatch("missing metadata header")
    return json.loads(meta_line[len("# meta=") :])


def save_value_table(table: ValueTable, path, extra_meta: dict | None = None):
    meta = {
        "lambda": table.lam,
        "ref_id": table.ref_id,
        "iterations": table.iterations,
        "span": table.span,
        "converged": table.converged,
        "eps_q": table.eps_q,
        "n_points": len(table.values),
    }
    meta.update(extra_meta or {})
    with open(path, "w") as fh:
        _write_header(fh, "value_table", meta)
        for i, v in enumerate(table.values):
            fh.write(f"{i} {float(v)!r}\n")


def load_value_table(path) -> ValueTable:
    with open(path) as fh:
        meta = _read_header(fh, "value_table")
        values = np.empty(meta["n_points"])
        for line in fh:
            idx, val = line.split()
            values[int(idx)] = float(val)
    return ValueTable(
        values=values,
        lam=meta["lambda"],
        ref_id=meta["ref_id"],
        iterations=meta["iterations"],
        span=meta["span"],
        converged=meta["converged"],
        eps_q=meta["eps_q"],
    )


def save_policy(policy: StationaryPolicy, path, extra_meta: dict | None = None):
    n, n_s, n_e, n_y = policy.tables.shape
    meta = {"n_points": n, "n_states": n_s, "n_renewables": n_e, "n_purchases": n_y}
    meta.update(extra_meta or {})
    with open(path, "w") as fh:
        _write_header(fh, "stationary_policy", meta)
        for i in range(n):
            flat = " ".join(repr(float(v)) for v in policy.tables[i].ravel())
            fh.write(f"{i} {flat}\n")


def load_policy(path) -> StationaryPolicy:
    with open(path) as fh:
        meta = _read_header(fh, "stationary_policy")
        shape = (meta["n_states"], meta["n_renewables"], meta["n_purchases"])
        tables = np.empty((meta["n_points"],) + shape)
        for line in fh:
            parts = line.split()
            tables[int(parts[0])] = np.array([float(v) for v in parts[1:]]).reshape(shape)
    return StationaryPolicy(tables)


def save_stage_rules(stage_tables: list, path, extra_meta: dict | None = None):
    """Persist per-stage no-renewable rules [stage][N, S, Y] of a finite solution."""
    horizon = len(stage_tables)
    n, n_s, n_y = stage_tables[0].shape
    meta = {"horizon": horizon, "n_points": n, "n_states": n_s, "n_purchases": n_y}
    meta.update(extra_meta or {})
    with open(path, "w") as fh:
        _write_header(fh, "finite_solution", meta)
        for t, tables in enumerate(stage_tables, start=1):
            for i in range(n):
                flat = " ".join(repr(float(v)) for v in tables[i].ravel())
                fh.write(f"{t} {i} {flat}\n")


def load_stage_rules(path) -> list:
    with open(path) as fh:
        meta = _read_header(fh, "finite_solution")
        shape = (meta["n_states"], meta["n_purchases"])
        out = [np.empty((meta["n_points"],) + shape) for _ in range(meta["horizon"])]
        for line in fh:
            parts = line.split()
            t, i = int(parts[0]), int(parts[1])
            out[t - 1][i] = np.array([float(v) for v in parts[2:]]).reshape(shape)
    return out
