# Outer loop: DP waypoints, lifting, trajectory optimization and grid adaptation
import time
from pathlib import Path
from typing import Optional

import numpy as np
from loguru import logger

from idnp.models.config import (
    DpConfig,
    MappingConfig,
    PenaltySetting,
    SchemeConfig,
    SchemeMode,
    SolverOptions,
)
from idnp.models.records import CellBox, FlaggedPoint, IterationRecord, Outcome, OutcomeStatus
from idnp.models.scenario import ScenarioFile
from idnp.services.dp import (
    WaypointSequence,
    backward_sweep,
    extract_waypoints,
    infeasibility_check,
    nearest_vertex,
)
from idnp.services.geometry import CollisionSpec
from idnp.services.grid import (
    AdaptiveGrid,
    bracket_index,
    build_control_grid,
    build_uniform,
    refine,
)
from idnp.services.mapping import lift_sequence, project_collisions
from idnp.services.nlp import (
    Trajectory,
    check_collisions,
    collision_penetration,
    solve_transcription,
    transcribe,
    transcribe_full,
)
from idnp.services.penalty import PenaltyField, distribute_marks, evaluate_penalty, mark_vertex
from idnp.services.problem import ProblemModel, build_collision_spec, build_problem
from idnp.services.solver import SolverStatus
from idnp.services.verify import verify_trajectory
from idnp.types.exceptions import NumericFailureError, PenaltyEvaluationError
from idnp.ui.svg import render_snapshot

__all__ = (
    "build_scheme_config",
    "run_scheme",
    "run_adaptive",
    "run_fixed_baseline",
    "run_full_nlp",
)

Flag = tuple[float, np.ndarray, str]


def _broadcast(values: list[int], dim: int) -> list[int]:
    return list(values) * dim if len(values) == 1 else list(values)


def build_scheme_config(
    scenario: ScenarioFile,
    problem: Optional[ProblemModel] = None,
    mode: Optional[SchemeMode] = None,
    max_iters: Optional[int] = None,
    svg_dir: Optional[str] = None,
) -> SchemeConfig:
    """Collect the scenario parameters into a SchemeConfig, arguments overriding the file."""
    problem = problem or build_problem(scenario)
    params = scenario.parameters
    control_grid = build_control_grid(
        problem.lowdim_control_bounds,
        problem.time_bounds,
        params.num_steps,
        _broadcast(params.control_points, problem.n_v),
        params.step_points,
    )
    return SchemeConfig(
        max_outer_iters=max_iters or params.max_iters,
        mode=mode or SchemeMode.ADAPTIVE,
        dp=DpConfig(
            num_steps=params.num_steps,
            objective_variant=params.objective_variant,
            control_grid=control_grid,
        ),
        mapping=MappingConfig(varrho1=params.varrho1, varrho2=params.varrho2),
        penalty=PenaltySetting(rho=params.rho, mark_value=params.mark_value),
        num_intervals=params.num_intervals,
        divisions=_broadcast(params.divisions, problem.n_w),
        nlp_tol=params.nlp_tol,
        infeasibility_threshold=params.infeasibility_threshold,
        mark_on_failure=params.mark_on_failure,
        full_nlp_budget=params.full_nlp_budget,
        svg_dir=svg_dir,
    )


class _OuterLoop:
    """State of one grid-based run: grids, penalty field, records and the best attempt."""

    def __init__(self, scenario: ScenarioFile, cfg: SchemeConfig) -> None:
        self.scenario = scenario
        self.cfg = cfg
        self.model = build_problem(scenario)
        self.spec: CollisionSpec = build_collision_spec(scenario)
        self.options = SolverOptions()
        self.grids: list[AdaptiveGrid] = [
            build_uniform(self.model.lowdim_state_bounds, cfg.divisions, j)
            for j in range(cfg.dp.num_steps + 1)
        ]
        self.penalty = PenaltyField(
            rho=cfg.penalty.rho,
            mark_value=cfg.penalty.effective_mark_value,
            evaluator=lambda w: evaluate_penalty(self.model, self.spec, w, options=self.options),
        )
        self.threshold = (
            cfg.infeasibility_threshold
            if cfg.infeasibility_threshold is not None
            else self.model.goal_scale * self.model.lowdim_diameter
        )
        self.records: list[IterationRecord] = []
        self.best: Optional[tuple[int, float, Trajectory]] = None

    def _keep_best(self, traj: Trajectory, colliding: int, penetration: float) -> None:
        if self.best is None or (colliding, penetration) < self.best[:2]:
            self.best = (colliding, penetration, traj)

    def _snapshot(self, record: IterationRecord) -> None:
        record.vertex_counts = [g.vertex_count for g in self.grids]
        record.leaf_counts = [g.leaf_count for g in self.grids]
        if self.cfg.svg_dir is None or self.model.n_w != 2:
            return
        path = Path(self.cfg.svg_dir) / f"iter_{record.iteration}.svg"
        render_snapshot(path, self.grids, self.model, self.spec, record)
        record.svg_path = str(path)

    def _adapt(self, flags: list[Flag], times: np.ndarray, record: IterationRecord) -> None:
        record.flagged = [FlaggedPoint(tau=t, w=w.tolist(), source=s) for t, w, s in flags]
        record.vertices_added = [0] * len(self.grids)
        record.split_cells = [[] for _ in self.grids]

        if self.cfg.mode == SchemeMode.FIXED_GRID:
            for tau, w, _ in flags:
                j = bracket_index(times, tau)
                for g in (j - 1, j):
                    if g >= 0:
                        distribute_marks(self.grids[g], w, self.penalty)
        else:
            result = refine(self.grids, [(tau, w) for tau, w, _ in flags], times)
            for new in result.new_vertices:
                self.penalty.invalidate(new)
            record.vertices_added = result.added
            record.split_cells = [
                [CellBox(lower=c.lower.tolist(), upper=c.upper.tolist()) for c in cells]
                for cells in result.split_cells
            ]
            record.refinement_limit_hits = len(result.limit_hits)

    def _nlp_flags(
        self, traj: Trajectory, seq: WaypointSequence, colliding: list[int]
    ) -> list[Flag]:
        """Projected colliding states, or violated waypoints when nothing collides."""
        if colliding:
            return [
                (tau, w, "collision")
                for tau, w in project_collisions(self.model, traj, colliding, seq.final_time)
            ]
        flags = []
        for j, node in sorted(traj.waypoint_rows.items()):
            if j == 0:
                continue
            residual = np.linalg.norm(self.model.forward_map(traj.states[node]) - seq.points[j])
            if residual > self.cfg.nlp_tol:
                flags.append((float(seq.times[j]), seq.points[j].copy(), "waypoint"))
        return flags

    def iterate(self, k: int) -> Optional[Outcome]:
        cfg, model = self.cfg, self.model
        logger.info(f"🔄 Iteration {k}/{cfg.max_outer_iters} ({cfg.mode.value})")
        for grid in self.grids:
            grid.current_iteration = k
        record = IterationRecord(iteration=k, mode=cfg.mode.value)
        self.records.append(record)

        started = time.monotonic()
        try:
            sweep = backward_sweep(self.grids, model, self.penalty, cfg.dp)
            seq = extract_waypoints(
                self.grids, model, self.penalty, cfg.dp, model.initial_state, sweep
            )
        except PenaltyEvaluationError as e:
            raise NumericFailureError(e.message, self.records) from e
        record.timings["dp"] = time.monotonic() - started
        record.dp_value = seq.value
        record.times = seq.times.tolist()
        record.waypoints = seq.points.tolist()
        self._snapshot(record)

        if infeasibility_check(seq, self.threshold):
            logger.info(f"❌ DP value {seq.value:.6g} exceeds threshold {self.threshold:.6g}")
            return Outcome(
                status=OutcomeStatus.INFEASIBLE,
                message=f"DP value {seq.value:.6g} is at or above {self.threshold:.6g}",
            )

        started = time.monotonic()
        lift = lift_sequence(model, self.spec, seq, model.initial_state, cfg.mapping, self.options)
        record.timings["lift"] = time.monotonic() - started
        record.failed_lifts = len(lift.failed)

        if not lift.ok:
            if cfg.mark_on_failure:
                for failure in lift.failed:
                    grid = self.grids[failure.index]
                    mark_vertex(grid, nearest_vertex(grid, failure.w), self.penalty)
            flags = [(f.tau, f.w, "lift") for f in lift.failed]
        else:
            started = time.monotonic()
            problem, tr = transcribe(model, seq, cfg.num_intervals, lifted=lift.states)
            traj = solve_transcription(problem, tr, cfg.nlp_tol, cfg.nlp_max_iter, self.options)
            record.timings["nlp"] = time.monotonic() - started
            record.nlp_status = traj.status.value
            record.final_time = traj.final_time
            record.objective = traj.objective_value
            if traj.status == SolverStatus.NUMERIC_FAILURE:
                raise NumericFailureError(
                    f"trajectory solver failed in iteration {k} (kkt {traj.kkt_residual:.2e})",
                    self.records,
                )

            colliding = check_collisions(model, self.spec, traj)
            record.colliding_points = len(colliding)
            record.penetration = collision_penetration(model, self.spec, traj)
            self._keep_best(traj, len(colliding), record.penetration)

            if traj.status == SolverStatus.OPTIMAL and not colliding:
                report = verify_trajectory(model, self.spec, traj, seq, cfg.nlp_tol)
                if report.ok:
                    record.vertices_added = [0] * len(self.grids)
                    record.marks_total = float(sum(g.marks.sum() for g in self.grids))
                    logger.info(
                        f"✅ Feasible trajectory in iteration {k}, T = {traj.final_time:.4g}"
                    )
                    return Outcome(status=OutcomeStatus.FEASIBLE, trajectory=traj)
                colliding = report.colliding_nodes
            flags = self._nlp_flags(traj, seq, colliding)

        if not flags:
            logger.warning(f"❌ Iteration {k} produced nothing to refine, stopping")
            return Outcome(
                status=OutcomeStatus.ITER_LIMIT,
                trajectory=self.best[2] if self.best else None,
                message=f"no refinement target in iteration {k}",
            )

        started = time.monotonic()
        self._adapt(flags, seq.times, record)
        record.timings["adapt"] = time.monotonic() - started
        record.marks_total = float(sum(g.marks.sum() for g in self.grids))
        return None

    def run(self) -> Outcome:
        started = time.monotonic()
        outcome = None
        try:
            for k in range(1, self.cfg.max_outer_iters + 1):
                outcome = self.iterate(k)
                if outcome is not None:
                    break
        finally:
            self.penalty.release()

        if outcome is None:
            logger.info(f"❌ No feasible trajectory after {self.cfg.max_outer_iters} iterations")
            outcome = Outcome(
                status=OutcomeStatus.ITER_LIMIT,
                trajectory=self.best[2] if self.best else None,
                message=f"iteration cap {self.cfg.max_outer_iters} reached",
            )
        outcome.iterations = self.records
        outcome.wall_time = time.monotonic() - started
        return outcome


def run_adaptive(scenario: ScenarioFile, cfg: Optional[SchemeConfig] = None) -> Outcome:
    """Alternate DP and trajectory optimization, refining the grids around flagged points.

    Args:
        scenario: The planning scenario.
        cfg: Scheme configuration, built from the scenario when omitted.

    Returns:
        Outcome: Feasible with the verified trajectory, Infeasible when the DP
        value crosses the threshold, IterLimit with the best attempt otherwise.

    Raises:
        NumericFailureError: A solver failed numerically; the records so far are attached.
    """
    cfg = cfg or build_scheme_config(scenario)
    return _OuterLoop(scenario, cfg.model_copy(update={"mode": SchemeMode.ADAPTIVE})).run()


def run_fixed_baseline(scenario: ScenarioFile, cfg: Optional[SchemeConfig] = None) -> Outcome:
    """Same loop as run_adaptive with flagged points turned into marks on fixed grids."""
    cfg = cfg or build_scheme_config(scenario)
    return _OuterLoop(scenario, cfg.model_copy(update={"mode": SchemeMode.FIXED_GRID})).run()


def run_full_nlp(scenario: ScenarioFile, cfg: Optional[SchemeConfig] = None) -> Outcome:
    """Solve one zero-objective transcription with every collision row, under a time budget."""
    cfg = cfg or build_scheme_config(scenario, mode=SchemeMode.FULL_NLP)
    started = time.monotonic()
    record = IterationRecord(iteration=1, mode=SchemeMode.FULL_NLP.value)
    outcome = Outcome(status=OutcomeStatus.ITER_LIMIT, iterations=[record])

    if cfg.full_nlp_budget <= 0:
        outcome.message = "time budget is zero"
        return outcome

    model = build_problem(scenario)
    spec = build_collision_spec(scenario)
    options = SolverOptions(deadline=started + cfg.full_nlp_budget)
    problem, tr = transcribe_full(model, spec, cfg.num_intervals)
    traj = solve_transcription(problem, tr, cfg.nlp_tol, cfg.nlp_max_iter, options)

    record.timings["nlp"] = time.monotonic() - started
    record.nlp_status = traj.status.value
    record.final_time = traj.final_time
    record.objective = traj.objective_value
    if traj.status == SolverStatus.NUMERIC_FAILURE:
        raise NumericFailureError("full transcription failed numerically", [record])

    colliding = check_collisions(model, spec, traj)
    record.colliding_points = len(colliding)
    record.penetration = collision_penetration(model, spec, traj)
    outcome.trajectory = traj
    outcome.wall_time = time.monotonic() - started

    if traj.status == SolverStatus.OPTIMAL and not colliding:
        if verify_trajectory(model, spec, traj, None, cfg.nlp_tol).ok:
            outcome.status = OutcomeStatus.FEASIBLE
            logger.info(f"✅ Full transcription solved, T = {traj.final_time:.4g}")
            return outcome
    if traj.status == SolverStatus.INFEASIBLE:
        outcome.status = OutcomeStatus.INFEASIBLE
    outcome.message = f"solver returned {traj.status.value}"
    logger.info(f"❌ Full transcription: {outcome.message}")
    return outcome


RUNNERS = {
    SchemeMode.ADAPTIVE: run_adaptive,
    SchemeMode.FIXED_GRID: run_fixed_baseline,
    SchemeMode.FULL_NLP: run_full_nlp,
}


def run_scheme(scenario: ScenarioFile, cfg: Optional[SchemeConfig] = None) -> Outcome:
    cfg = cfg or build_scheme_config(scenario)
    return RUNNERS[cfg.mode](scenario, cfg)
