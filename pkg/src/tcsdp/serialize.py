"""JSON schemas (version 1) for problems, certificates, and scenarios.

Problem files carry blocks, trace groups, the quadratic form in sparse
triplet form, the linear rows, and free-variable names; certificate
files carry the multipliers and the right-hand side they pair with;
scenario files carry the task data plus noise metadata and the RNG seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .blocks import CompiledRows, PsdBlockSpec, TraceGroup
from .certify import DualCertificate
from .errors import InvalidInput
from .problem import TcsdpProblem, assemble_problem
from . import robots as rb

SCHEMA_VERSION = 1


def _triplets(mat: sp.spmatrix) -> dict:
    coo = sp.coo_matrix(mat)
    return {
        "shape": list(coo.shape),
        "rows": coo.row.tolist(),
        "cols": coo.col.tolist(),
        "vals": coo.data.tolist(),
    }


def _from_triplets(data: dict) -> sp.csr_matrix:
    return sp.csr_matrix(
        (data["vals"], (data["rows"], data["cols"])), shape=tuple(data["shape"])
    )


def _rows_payload(rows: CompiledRows) -> dict:
    return {
        "matrix": _triplets(rows.matrix),
        "rhs": rows.rhs.tolist(),
        "labels": list(rows.labels),
    }


def problem_to_json(problem: TcsdpProblem) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "blocks": [
            {"block_id": b.block_id, "dim": b.dim, "trace_group": b.trace_group}
            for b in problem.blocks
        ],
        "trace_groups": [
            {"group_id": g.group_id, "trace_value": g.trace_value, "members": list(g.members)}
            for g in problem.trace_groups
        ],
        "free_names": list(problem.free_names),
        "Q": _triplets(problem.Q),
        "c": problem.c.tolist(),
        "equalities": _rows_payload(problem.eq_rows),
        "inequalities": _rows_payload(problem.ineq_rows),
        "meta": dict(problem.meta),
    }


def problem_from_json(data: dict) -> TcsdpProblem:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInput(f"unsupported schema version {data.get('schema_version')}")
    blocks = [PsdBlockSpec(b["block_id"], b["dim"], b.get("trace_group")) for b in data["blocks"]]
    groups = [
        TraceGroup(g["group_id"], g["trace_value"], tuple(g["members"]))
        for g in data["trace_groups"]
    ]
    from .blocks import BlockLayout

    layout = BlockLayout(blocks, list(data["free_names"]))
    problem = TcsdpProblem(
        blocks=blocks,
        trace_groups=groups,
        free_names=list(data["free_names"]),
        Q=_from_triplets(data["Q"]),
        c=np.asarray(data["c"], dtype=float),
        eq_rows=CompiledRows(
            _from_triplets(data["equalities"]["matrix"]),
            np.asarray(data["equalities"]["rhs"], dtype=float),
            list(data["equalities"]["labels"]),
        ),
        ineq_rows=CompiledRows(
            _from_triplets(data["inequalities"]["matrix"]),
            np.asarray(data["inequalities"]["rhs"], dtype=float),
            list(data["inequalities"]["labels"]),
        ),
        layout=layout,
        meta=dict(data.get("meta", {})),
    )
    return problem


def certificate_to_json(cert: DualCertificate) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "rho": cert.rho.tolist(),
        "S": {k: v.tolist() for k, v in cert.S.items()},
        "Z": cert.Z.tolist(),
        "b": cert.b.tolist(),
        "row_labels": list(cert.row_labels),
    }


def certificate_from_json(data: dict) -> DualCertificate:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInput(f"unsupported schema version {data.get('schema_version')}")
    return DualCertificate(
        rho=np.asarray(data["rho"], dtype=float),
        S={k: np.asarray(v, dtype=float) for k, v in data["S"].items()},
        Z=np.asarray(data["Z"], dtype=float),
        b=np.asarray(data["b"], dtype=float),
        row_labels=list(data.get("row_labels", [])),
    )


def _opt(arr) -> list | None:
    return None if arr is None else np.asarray(arr, dtype=float).tolist()


def scenario_to_json(scenario) -> dict:
    if isinstance(scenario, rb.PnpScenario):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "pnp",
            "points": scenario.points.tolist(),
            "pixels": scenario.pixels.tolist(),
            "f_cam": scenario.f_cam,
            "truth_rotation": _opt(scenario.truth_rotation),
            "truth_translation": _opt(scenario.truth_translation),
            "noise_px": scenario.noise_px,
            "seed": scenario.seed,
        }
    if isinstance(scenario, rb.HandEyeScenario):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "handeye",
            "ee_poses": scenario.ee_poses.tolist(),
            "features_body": scenario.features_body.tolist(),
            "pixels": scenario.pixels.tolist(),
            "f_cam": scenario.f_cam,
            "truth_x": _opt(scenario.truth_x),
            "truth_target": _opt(scenario.truth_target),
            "truth_cameras": _opt(scenario.truth_cameras),
            "noise_px": scenario.noise_px,
            "seed": scenario.seed,
        }
    if isinstance(scenario, rb.DualCalScenario):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "dualcal",
            "A": scenario.A.tolist(),
            "B": scenario.B.tolist(),
            "C": scenario.C.tolist(),
            "truth_x": _opt(scenario.truth_x),
            "truth_y": _opt(scenario.truth_y),
            "truth_z": _opt(scenario.truth_z),
            "noise_rot_deg": scenario.noise_rot_deg,
            "noise_trans": scenario.noise_trans,
            "seed": scenario.seed,
        }
    raise InvalidInput(f"unknown scenario type {type(scenario).__name__}")


def _arr(data, key):
    value = data.get(key)
    return None if value is None else np.asarray(value, dtype=float)


def scenario_from_json(data: dict):
    if data.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInput(f"unsupported schema version {data.get('schema_version')}")
    kind = data.get("kind")
    if kind == "pnp":
        return rb.PnpScenario(
            points=np.asarray(data["points"], dtype=float),
            pixels=np.asarray(data["pixels"], dtype=float),
            f_cam=float(data["f_cam"]),
            truth_rotation=_arr(data, "truth_rotation"),
            truth_translation=_arr(data, "truth_translation"),
            noise_px=float(data.get("noise_px", 0.0)),
            seed=data.get("seed"),
        )
    if kind == "handeye":
        return rb.HandEyeScenario(
            ee_poses=np.asarray(data["ee_poses"], dtype=float),
            features_body=np.asarray(data["features_body"], dtype=float),
            pixels=np.asarray(data["pixels"], dtype=float),
            f_cam=float(data["f_cam"]),
            truth_x=_arr(data, "truth_x"),
            truth_target=_arr(data, "truth_target"),
            truth_cameras=_arr(data, "truth_cameras"),
            noise_px=float(data.get("noise_px", 0.0)),
            seed=data.get("seed"),
        )
    if kind == "dualcal":
        return rb.DualCalScenario(
            A=np.asarray(data["A"], dtype=float),
            B=np.asarray(data["B"], dtype=float),
            C=np.asarray(data["C"], dtype=float),
            truth_x=_arr(data, "truth_x"),
            truth_y=_arr(data, "truth_y"),
            truth_z=_arr(data, "truth_z"),
            noise_rot_deg=float(data.get("noise_rot_deg", 0.0)),
            noise_trans=float(data.get("noise_trans", 0.0)),
            seed=data.get("seed"),
        )
    raise InvalidInput(f"unknown scenario kind {kind!r}")


def save_json(payload: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_json(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)
