"""Scenario generation, metrics, and batch execution.

Scenarios are generated with a counter-based RNG (numpy Philox) keyed on
the seed, so identical configs reproduce bit-identical scenarios.  Noise
levels follow the benchmark convention: pixel displacements bounded by
e_p for the camera tasks (none/low/high = 0/2/5 px, medium = 3 px), and
(rotation angle, translation bound) pairs for the transform measurements
of the dual-robot task (low/medium/high = (0.1 deg, 1e-4) /
(0.3 deg, 3e-4) / (0.8 deg, 8e-4)).
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .backend import SolverSettings
from .errors import ExtractionFailed, InvalidInput, NotRankOne, NumericalFailure, TcsdpError
from .refine import RefineOptions, refine_solve
from . import robots as rb

PNP_NOISE_PX = {"none": 0.0, "low": 2.0, "medium": 3.0, "high": 5.0}
DUALCAL_NOISE = {
    "none": (0.0, 0.0),
    "low": (0.1, 1e-4),
    "medium": (0.3, 3e-4),
    "high": (0.8, 8e-4),
}


def rng_for_seed(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) so scenarios reproduce exactly."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def _look_at(position: np.ndarray, center: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Rotation whose third column (camera forward) points at `center`."""
    z = center - position
    z = z / np.linalg.norm(z)
    while True:
        up = rng.normal(size=3)
        up -= (up @ z) * z
        if np.linalg.norm(up) > 1e-3:
            up /= np.linalg.norm(up)
            break
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def _project(R: np.ndarray, t: np.ndarray, q: np.ndarray, f_cam: float) -> tuple[np.ndarray, float]:
    x_c = R.T @ (q - t)
    return np.array([f_cam * x_c[0] / x_c[2], f_cam * x_c[1] / x_c[2]]), float(x_c[2])


# ---------------------------------------------------------------------------
# scenario generators


def gen_pnp_scenario(n: int, noise_px: float, seed: int, f_cam: float = 500.0) -> rb.PnpScenario:
    """Random pose observing n points; pixels perturbed per-axis uniformly in
    [-noise_px, noise_px].  Points rejected (resampled) if behind the camera."""
    if n < 4:
        raise InvalidInput(f"need at least 4 points, got {n}")
    rng = rng_for_seed(seed)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t = direction * rng.uniform(4.0, 6.0)
    R = _look_at(t, np.zeros(3), rng)
    points = np.empty((n, 3))
    pixels = np.empty((n, 2))
    for i in range(n):
        while True:
            q = rng.uniform(-1.0, 1.0, size=3)
            p, depth = _project(R, t, q, f_cam)
            if depth > 0.5:
                points[i] = q
                pixels[i] = p
                break
    if noise_px > 0:
        pixels = pixels + rng.uniform(-noise_px, noise_px, size=pixels.shape)
    return rb.PnpScenario(
        points=points, pixels=pixels, f_cam=f_cam,
        truth_rotation=R, truth_translation=t, noise_px=noise_px, seed=seed,
    )


def _feature_grid(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-scale tag grid with depth jitter (keeps features off a single plane)."""
    side = math.ceil(math.sqrt(n))
    coords = []
    for k in range(n):
        gx, gy = k % side, k // side
        coords.append(
            [
                (gx - (side - 1) / 2.0) * 0.5,
                (gy - (side - 1) / 2.0) * 0.5,
                rng.uniform(-0.35, 0.35),
            ]
        )
    return np.array(coords)


def gen_handeye_scenario(
    m: int, n: int, noise_px: float, seed: int, f_cam: float = 500.0
) -> rb.HandEyeScenario:
    """Random hand-eye mount X and m camera stations observing a feature
    target; end-effector poses derived via the mount, pixels as in PnP.

    Stations sit close to the target (distance 1.2 - 2.2 target scales)
    with pairwise view-direction separation >= 40 degrees and jittered
    aim points: small desk-scale batches stay well conditioned (the mount
    is weakly observable from distant, fixating, near-parallel views).
    """
    if m < 2:
        raise InvalidInput(f"need at least 2 configurations, got {m}")
    rng = rng_for_seed(seed)
    features = _feature_grid(n, rng)
    R_f = random_rotation(rng)
    t_f = rng.uniform(-0.3, 0.3, size=3)
    T_f = rb.make_transform(R_f, t_f)
    world_feats = (R_f @ features.T).T + t_f

    t_x = rng.uniform(-0.15, 0.15, size=3)
    while np.linalg.norm(t_x) < 0.05:
        t_x = rng.uniform(-0.15, 0.15, size=3)
    X = rb.make_transform(random_rotation(rng), t_x)

    min_cos = math.cos(math.radians(40.0))
    view_dirs: list[np.ndarray] = []
    ee, cams, pixels = [], [], np.empty((m, n, 2))
    for i in range(m):
        while True:
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            if any(direction @ prev > min_cos for prev in view_dirs):
                continue
            t_c = t_f + direction * rng.uniform(1.2, 2.2)
            aim = t_f + rng.uniform(-0.25, 0.25, size=3)
            R_c = _look_at(t_c, aim, rng)
            projected = [_project(R_c, t_c, q, f_cam) for q in world_feats]
            if all(depth > 0.3 for _, depth in projected):
                break
        view_dirs.append(direction)
        cams.append(rb.make_transform(R_c, t_c))
        ee.append(cams[-1] @ rb.transform_inverse(X))
        pixels[i] = np.stack([p for p, _ in projected])
    if noise_px > 0:
        pixels = pixels + rng.uniform(-noise_px, noise_px, size=pixels.shape)
    return rb.HandEyeScenario(
        ee_poses=np.stack(ee), features_body=features, pixels=pixels, f_cam=f_cam,
        truth_x=X, truth_target=T_f, truth_cameras=np.stack(cams),
        noise_px=noise_px, seed=seed,
    )


def _perturb_transform(T: np.ndarray, theta_deg: float, bound: float, rng) -> np.ndarray:
    out = T.copy()
    if theta_deg > 0:
        axis = rng.normal(size=3)
        angle = rng.uniform(0.0, math.radians(theta_deg))
        out[:3, :3] = T[:3, :3] @ axis_angle(axis, angle)
    if bound > 0:
        out[:3, 3] = T[:3, 3] + rng.uniform(-bound, bound, size=3)
    return out


def gen_dualcal_scenario(m: int, noise: tuple[float, float], seed: int) -> rb.DualCalScenario:
    """Random ground-truth (X, Y, Z) and m measurement triples with
    B_i = (A_i X)^-1 Y C_i Z; noise rotates each measured transform about a
    random axis by an angle in [0, theta] and shifts its translation
    per-axis within [-l, l]."""
    if m < 2:
        raise InvalidInput(f"need at least 2 measurements, got {m}")
    theta_deg, bound = noise
    rng = rng_for_seed(seed)

    def small_offset(lo, hi):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        return d * rng.uniform(lo, hi)

    X = rb.make_transform(random_rotation(rng), small_offset(0.1, 0.25))
    Z = rb.make_transform(random_rotation(rng), small_offset(0.1, 0.25))
    Y = rb.make_transform(random_rotation(rng), small_offset(1.0, 2.0))
    A = np.empty((m, 4, 4))
    B = np.empty((m, 4, 4))
    C = np.empty((m, 4, 4))
    for i in range(m):
        A[i] = rb.make_transform(random_rotation(rng), rng.uniform(-1.0, 1.0, size=3))
        C[i] = rb.make_transform(random_rotation(rng), small_offset(0.4, 1.0))
        B[i] = rb.transform_inverse(A[i] @ X) @ (Y @ C[i] @ Z)
    for i in range(m):
        A[i] = _perturb_transform(A[i], theta_deg, bound, rng)
        B[i] = _perturb_transform(B[i], theta_deg, bound, rng)
        C[i] = _perturb_transform(C[i], theta_deg, bound, rng)
    return rb.DualCalScenario(
        A=A, B=B, C=C, truth_x=X, truth_y=Y, truth_z=Z,
        noise_rot_deg=theta_deg, noise_trans=bound, seed=seed,
    )


# ---------------------------------------------------------------------------
# metrics


def pose_errors(
    estimates: list[np.ndarray], truths: list[np.ndarray]
) -> tuple[list[float], list[float]]:
    """Per-unknown errors: Frobenius norm of (R_hat R' - I) and Euclidean
    distance of the translations, over matching lists of 4x4 transforms."""
    if len(estimates) != len(truths):
        raise InvalidInput("estimate/truth lists differ in length")
    rot_errors, tra_errors = [], []
    for est, tru in zip(estimates, truths):
        rot_errors.append(float(np.linalg.norm(est[:3, :3] @ tru[:3, :3].T - np.eye(3))))
        tra_errors.append(float(np.linalg.norm(est[:3, 3] - tru[:3, 3])))
    return rot_errors, tra_errors


SUCCESS_ROT_LIMIT = 0.1


# ---------------------------------------------------------------------------
# batch execution


@dataclass
class ScenarioConfig:
    kind: str  # pnp | handeye | dualcal
    seed: int
    n: int = 0  # points (pnp) / features (handeye)
    m: int = 0  # configurations / measurements
    noise: str = "none"
    gamma: float = 0.98
    gamma_c: float = 1.0
    sched_limit: int = 1000
    channel_limit: int = 200
    repeat: int = 1
    rank_tol: float = 1e-5
    cost_tol: float = 1e-6
    gamma_w: float = 1.0
    extract_rank_tol: float = 1e-3
    extract_defect_limit: float = 1e-2
    sched_midpoint: float | None = None  # None: kind-dependent default
    sched_rate: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("pnp", "handeye", "dualcal"):
            raise InvalidInput(f"unknown problem kind {self.kind!r}")
        # calibration problems carry many more blocks; a gentler schedule
        # anneal commits to better rank-1 vertices there
        if self.sched_midpoint is None:
            self.sched_midpoint = 25.0 if self.kind == "pnp" else 50.0
        if self.sched_rate is None:
            self.sched_rate = 5.0 if self.kind == "pnp" else 10.0
        if self.kind == "pnp" and self.n < 4:
            raise InvalidInput("pnp config needs n >= 4")
        if self.kind == "handeye" and (self.m < 2 or self.n < 4):
            raise InvalidInput("handeye config needs m >= 2 and n >= 4")
        if self.kind == "dualcal" and self.m < 2:
            raise InvalidInput("dualcal config needs m >= 2")
        if self.kind != "dualcal" and self.noise not in PNP_NOISE_PX:
            raise InvalidInput(f"unknown noise level {self.noise!r}")
        if self.kind == "dualcal" and self.noise not in DUALCAL_NOISE:
            raise InvalidInput(f"unknown noise level {self.noise!r}")

    def refine_options(self) -> RefineOptions:
        return RefineOptions(
            gamma=self.gamma,
            gamma_c=self.gamma_c,
            sched_limit=self.sched_limit,
            channel_limit=self.channel_limit,
            max_repeats=self.repeat,
            rank_tol=self.rank_tol,
            cost_tol=self.cost_tol,
            sched_midpoint=self.sched_midpoint,
            sched_rate=self.sched_rate,
        )


@dataclass
class SolveReport:
    kind: str
    seed: int
    m: int
    n: int
    noise: str
    rotation_errors: list[float]
    translation_errors: list[float]
    eg: float
    dg: float
    cost: float
    iterations: dict[str, int]
    total_iterations: int
    wall_time: float
    success: bool
    converged: bool
    certified: bool
    solver_status: str
    extras: dict = field(default_factory=dict)

    @property
    def max_rotation_error(self) -> float:
        return max(self.rotation_errors) if self.rotation_errors else float("inf")

    def to_row(self) -> dict:
        return {
            "kind": self.kind,
            "m": self.m,
            "n": self.n,
            "noise": self.noise,
            "seed": self.seed,
            "rot_err": float(np.mean(self.rotation_errors)) if self.rotation_errors else float("inf"),
            "trans_err": float(np.mean(self.translation_errors)) if self.translation_errors else float("inf"),
            "eg": self.eg,
            "dg": self.dg,
            "cost": self.cost,
            "time": self.wall_time,
            "iterations": self.total_iterations,
            "success": int(self.success),
        }


def _generate(config: ScenarioConfig):
    if config.kind == "pnp":
        return gen_pnp_scenario(config.n, PNP_NOISE_PX[config.noise], config.seed)
    if config.kind == "handeye":
        return gen_handeye_scenario(config.m, config.n, PNP_NOISE_PX[config.noise], config.seed)
    return gen_dualcal_scenario(config.m, DUALCAL_NOISE[config.noise], config.seed)


def _build(config: ScenarioConfig, scenario):
    if config.kind == "pnp":
        return rb.build_pnp(scenario)
    if config.kind == "handeye":
        return rb.build_handeye(scenario)
    return rb.build_dualcal(scenario, gamma_w=config.gamma_w)


def _truth_pairs(config: ScenarioConfig, scenario, solution):
    if config.kind == "pnp":
        est = [rb.make_transform(solution.rotation, solution.translation)]
        tru = [rb.make_transform(scenario.truth_rotation, scenario.truth_translation)]
        return est, tru
    if config.kind == "handeye":
        return [solution.x], [scenario.truth_x]
    return (
        [solution.x, solution.y, solution.z],
        [scenario.truth_x, scenario.truth_y, scenario.truth_z],
    )


def _relation_residual(config: ScenarioConfig, scenario, solution) -> float:
    """Task-level consistency: max ||A X - X B|| (hand-eye, over consecutive
    configuration pairs) or max ||A_i X B_i - Y C_i Z|| (dual-cal)."""
    if config.kind == "handeye":
        worst = 0.0
        cams = scenario.truth_cameras
        ee = scenario.ee_poses
        for i in range(1, scenario.m):
            A = rb.transform_inverse(ee[i]) @ ee[0]
            B = rb.transform_inverse(cams[i]) @ cams[0]
            worst = max(worst, float(np.linalg.norm(A @ solution.x - solution.x @ B)))
        return worst
    if config.kind == "dualcal":
        worst = 0.0
        for i in range(scenario.m):
            lhs = scenario.A[i] @ solution.x @ scenario.B[i]
            rhs = solution.y @ scenario.C[i] @ solution.z
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
        return worst
    return float("nan")


def run_scenario(
    config: ScenarioConfig,
    backend=None,
    settings: SolverSettings | None = None,
    progress=None,
) -> SolveReport:
    """Generate, build, refine, extract, and score one scenario."""
    t0 = time.perf_counter()
    scenario = _generate(config)
    problem, index = _build(config, scenario)
    result = refine_solve(
        problem, config.refine_options(), backend=backend, settings=settings, progress=progress
    )
    extras: dict = {"relaxed_cost": result.relaxed_cost, "dual_value": result.dual_value}
    rotation_errors: list[float] = [float("inf")]
    translation_errors: list[float] = [float("inf")]
    try:
        solution = rb.extract_solution(
            problem, result.blocks, result.frees, index,
            rank_tol=config.extract_rank_tol, defect_limit=config.extract_defect_limit,
        )
        est, tru = _truth_pairs(config, scenario, solution)
        rotation_errors, translation_errors = pose_errors(est, tru)
        extras["relation_residual"] = _relation_residual(config, scenario, solution)
        if config.kind == "handeye":
            extras["x_spread"] = solution.x_spread
        if config.kind == "dualcal":
            extras["spread"] = solution.spread
    except (NotRankOne, ExtractionFailed, TcsdpError) as exc:
        extras["extraction_error"] = f"{type(exc).__name__}: {exc}"
    success = bool(max(rotation_errors) < SUCCESS_ROT_LIMIT)
    return SolveReport(
        kind=config.kind,
        seed=config.seed,
        m=config.m,
        n=config.n,
        noise=config.noise,
        rotation_errors=rotation_errors,
        translation_errors=translation_errors,
        eg=result.eg,
        dg=result.dg,
        cost=result.cost,
        iterations=result.iterations,
        total_iterations=result.total_iterations,
        wall_time=time.perf_counter() - t0,
        success=success,
        converged=result.converged,
        certified=result.certified,
        solver_status=result.solver_status,
        extras=extras,
    )


def _run_worker(config: ScenarioConfig) -> SolveReport:
    return run_scenario(config)


def aggregate(reports: list[SolveReport]) -> dict:
    if not reports:
        return {"runs": 0}
    finite_rot = [np.mean(r.rotation_errors) for r in reports if np.isfinite(np.mean(r.rotation_errors))]
    finite_tra = [np.mean(r.translation_errors) for r in reports if np.isfinite(np.mean(r.translation_errors))]
    return {
        "runs": len(reports),
        "successes": sum(r.success for r in reports),
        "mean_rot_err": float(np.mean(finite_rot)) if finite_rot else float("inf"),
        "mean_trans_err": float(np.mean(finite_tra)) if finite_tra else float("inf"),
        "mean_eg": float(np.mean([r.eg for r in reports])),
        "mean_dg": float(np.mean([r.dg for r in reports])),
        "mean_cost": float(np.mean([r.cost for r in reports])),
        "mean_time": float(np.mean([r.wall_time for r in reports])),
        "mean_iterations": float(np.mean([r.total_iterations for r in reports])),
    }


def run_batch(
    configs: list[ScenarioConfig],
    parallelism: int = 1,
    out_dir: str | Path | None = None,
    progress: bool = False,
) -> tuple[list[SolveReport], dict]:
    """Run every config (optionally in parallel processes), aggregate, and
    write results.csv / results.json (plus per-seed progress streams when
    requested).  Individual failures are recorded and the batch continues."""
    reports: list[SolveReport] = []
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    def run_one(cfg: ScenarioConfig) -> SolveReport:
        stream = None
        handle = None
        if progress and out_path is not None:
            pdir = out_path / "progress"
            pdir.mkdir(exist_ok=True)
            handle = open(pdir / f"{cfg.kind}_{cfg.seed}.ndjson", "w")

            def stream(rec):
                handle.write(json.dumps(rec) + "\n")

        try:
            return run_scenario(cfg, progress=stream)
        finally:
            if handle is not None:
                handle.close()

    if parallelism > 1 and not progress:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(_run_worker, cfg) for cfg in configs]
            for cfg, fut in zip(configs, futures):
                try:
                    reports.append(fut.result())
                except (NumericalFailure, TcsdpError) as exc:
                    reports.append(_failure_report(cfg, exc))
    else:
        for cfg in configs:
            try:
                reports.append(run_one(cfg))
            except (NumericalFailure, TcsdpError) as exc:
                reports.append(_failure_report(cfg, exc))

    summary = aggregate(reports)
    if out_path is not None:
        write_results(reports, summary, out_path)
    return reports, summary


def _failure_report(config: ScenarioConfig, exc: Exception) -> SolveReport:
    return SolveReport(
        kind=config.kind, seed=config.seed, m=config.m, n=config.n, noise=config.noise,
        rotation_errors=[float("inf")], translation_errors=[float("inf")],
        eg=float("nan"), dg=float("nan"), cost=float("nan"),
        iterations={}, total_iterations=0, wall_time=0.0,
        success=False, converged=False, certified=False,
        solver_status="error", extras={"error": f"{type(exc).__name__}: {exc}"},
    )


CSV_COLUMNS = [
    "kind", "m", "n", "noise", "seed", "rot_err", "trans_err",
    "eg", "dg", "cost", "time", "iterations", "success",
]


def write_results(reports: list[SolveReport], summary: dict, out_dir: Path) -> None:
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for r in reports:
            writer.writerow(r.to_row())
    payload = {
        "schema_version": 1,
        "summary": summary,
        "runs": [
            {**asdict(r)} for r in reports
        ],
    }
    with open(out_dir / "results.json", "w") as fh:
        json.dump(payload, fh, indent=2, default=float)
