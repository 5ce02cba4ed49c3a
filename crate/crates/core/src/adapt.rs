//! Turning an estimator field into a refinement plan, applying it, and the
//! one-shot adaptation cycle.

use std::collections::HashMap;
use std::time::Instant;

use crate::config::{CaseKind, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, IqReport};
use crate::io::{BudgetMeans, PlanRecord};
use crate::mesh::{CellId, Mesh, MeshDelta, Topology};
use crate::pipeline::{self, Case};
use crate::report::{self, BandScore, Report, StageTiming};
use crate::solver::{Discretization, FlowState, Snapshot};
use crate::stats::{broadcast, RunningStats};

/// Leaves selected for refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptPlan {
    /// Sorted leaf ids.
    pub flagged: Vec<CellId>,
    pub fraction: f64,
    pub estimator: EstimatorId,
    pub leaf_count: usize,
}

impl AdaptPlan {
    pub fn record(&self) -> PlanRecord {
        PlanRecord {
            estimator: self.estimator,
            fraction: self.fraction,
            leaf_count: self.leaf_count as u64,
            flagged: self.flagged.clone(),
        }
    }

    pub fn from_record(r: PlanRecord) -> Self {
        AdaptPlan {
            flagged: r.flagged,
            fraction: r.fraction,
            estimator: r.estimator,
            leaf_count: r.leaf_count as usize,
        }
    }
}

/// Number of cells `round(fraction * n)` a plan selects.
pub fn flag_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Flag the `round(fraction * N)` leaves with the lowest `iq`; ties go to the
/// lowest cell id. `iq[i]` belongs to `leaves[i]`.
pub fn flag_worst(iq: &[f64], leaves: &[CellId], fraction: f64, estimator: EstimatorId) -> Result<AdaptPlan> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("refinement fraction must lie in (0, 1], got {fraction}")));
    }
    if iq.len() != leaves.len() {
        return Err(Error::Config(format!(
            "estimator field has {} values for {} leaves",
            iq.len(),
            leaves.len()
        )));
    }
    let mut order: Vec<usize> = (0..iq.len()).collect();
    order.sort_by(|a, b| iq[*a].total_cmp(&iq[*b]).then(leaves[*a].cmp(&leaves[*b])));
    let mut flagged: Vec<CellId> = order[..flag_count(fraction, iq.len())].iter().map(|i| leaves[*i]).collect();
    flagged.sort_unstable();
    Ok(AdaptPlan {
        flagged,
        fraction,
        estimator,
        leaf_count: leaves.len(),
    })
}

/// Refine the flagged leaves (plus balance closure) and copy each parent's
/// state into its children.
pub fn apply_plan(plan: &AdaptPlan, mesh: &Mesh, state: &FlowState) -> Result<(Mesh, FlowState, MeshDelta)> {
    let old_leaves = mesh.leaves();
    if plan.leaf_count != old_leaves.len() || state.len() != old_leaves.len() {
        return Err(Error::Tree(format!(
            "plan for {} leaves and state of {} applied to a mesh with {}",
            plan.leaf_count,
            state.len(),
            old_leaves.len()
        )));
    }
    let mut out = mesh.clone();
    if plan.flagged.is_empty() {
        return Ok((out, state.clone(), MeshDelta::default()));
    }
    let delta = out.refine(&plan.flagged)?;
    let slot: HashMap<CellId, usize> = old_leaves.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let new_leaves = out.leaves();
    let mut next = FlowState::zeros(new_leaves.len());
    next.time = state.time;
    for (k, id) in new_leaves.iter().enumerate() {
        let mut cur = *id;
        let i = loop {
            if let Some(i) = slot.get(&cur) {
                break *i;
            }
            cur = out.cell(cur).parent.expect("new leaves descend from old leaves");
        };
        next.w[k] = state.w[i];
        next.nu_t[k] = state.nu_t[i];
    }
    Ok((out, next, delta))
}

/// Fraction of flagged leaves whose centroid lies in `y_min <= y <= y_max`.
pub fn band_fraction(plan: &AdaptPlan, mesh: &Mesh, band: [f64; 2]) -> f64 {
    if plan.flagged.is_empty() {
        return 0.0;
    }
    let inside = plan
        .flagged
        .iter()
        .filter(|id| {
            let y = mesh.cell(**id).centroid[1];
            y >= band[0] && y <= band[1]
        })
        .count();
    inside as f64 / plan.flagged.len() as f64
}

/// Fraction of all leaves whose centroid lies in the band: what a uniformly
/// random plan would score.
pub fn band_share(mesh: &Mesh, band: [f64; 2]) -> f64 {
    let leaves = mesh.leaves();
    let inside = leaves
        .iter()
        .filter(|id| {
            let y = mesh.cell(**id).centroid[1];
            y >= band[0] && y <= band[1]
        })
        .count();
    inside as f64 / leaves.len().max(1) as f64
}

/// Everything the adaptation cycle produced.
#[derive(Debug, Clone)]
pub struct CycleOutcome {
    pub report: Report,
    pub plan: AdaptPlan,
    pub delta: MeshDelta,
    pub before: Assessment,
    pub after: Option<Assessment>,
    pub mesh: Mesh,
    pub state: FlowState,
}

/// Statistics, budgets and estimators of one run.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub mesh: Mesh,
    pub disc: Discretization,
    pub stats: RunningStats,
    pub ke: BudgetMeans,
    pub tke: BudgetMeans,
    pub columns: crate::estimators::ColumnInputs,
    pub iq: IqReport,
}

struct Clock {
    stages: Vec<StageTiming>,
}

impl Clock {
    fn time<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| e.in_stage(name))?;
        self.stages.push(StageTiming {
            name,
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

fn assess(clock: &mut Clock, cfg: &RunConfig, mesh: Mesh, disc: Discretization, snaps: &[Snapshot]) -> Result<Assessment> {
    let stats = clock.time("stats", || pipeline::gather_stats(&disc, snaps))?;
    let ke = clock.time("budget_ke", || pipeline::ke_means(&disc, snaps))?;
    let tke = clock.time("budget_tke", || pipeline::tke_means(&disc, snaps, &stats))?;
    let (columns, iq) = clock.time("estimate", || {
        pipeline::estimate_columns(cfg, &mesh, &disc, &stats, Some(&ke), Some(&tke))
    })?;
    Ok(Assessment {
        mesh,
        disc,
        stats,
        ke,
        tke,
        columns,
        iq,
    })
}

/// run, stats, budgets, estimate, flag, refine, rerun and report. The cycle
/// count is capped at one unless the experimental override is set.
pub fn adaptation_cycle(cfg: &RunConfig) -> Result<CycleOutcome> {
    cfg.validate()?;
    let mut clock = Clock { stages: Vec::new() };
    let Case { mesh, disc, state } = clock.time("build", || pipeline::build_case(cfg))?;
    let (sim, snaps) = clock.time("run", || pipeline::run_sampled(cfg, disc.clone(), state, cfg.run.steps))?;
    let first = assess(&mut clock, cfg, mesh, disc, &snaps)?;
    continue_cycle(cfg, first, sim.state, clock)
}

/// The cycle from flagging on, starting from an existing assessment and the
/// final state of the run it came from.
pub fn adapt_from(cfg: &RunConfig, first: Assessment, state: FlowState) -> Result<CycleOutcome> {
    cfg.validate()?;
    if state.len() != first.disc.n_leaves() {
        return Err(Error::Config(format!(
            "state has {} cells, mesh has {} leaves",
            state.len(),
            first.disc.n_leaves()
        )));
    }
    continue_cycle(cfg, first, state, Clock { stages: Vec::new() })
}

fn continue_cycle(cfg: &RunConfig, first: Assessment, mut state: FlowState, mut clock: Clock) -> Result<CycleOutcome> {
    let mut current = first.clone();
    let mut last_plan = None;
    for cycle in 0..cfg.adapt.cycles {
        let field = current.iq.field(cfg.estimator.id).ok_or_else(|| {
            Error::Config(format!("estimator {} is not available", cfg.estimator.id)).in_stage("flag")
        })?;
        let topo: &Topology = &current.disc.topo;
        let plan = clock.time("flag", || {
            flag_worst(&broadcast(&field.iq, topo), &topo.leaves, cfg.adapt.fraction, cfg.estimator.id)
        })?;
        let (mesh, next, delta) = clock.time("refine", || apply_plan(&plan, &current.mesh, &state))?;
        let disc = clock.time("discretize", || pipeline::discretize(cfg, &mesh))?;
        let steps = cfg.rerun_steps();
        let (sim, snaps) = clock.time("rerun", || pipeline::run_sampled(cfg, disc.clone(), next, steps))?;
        state = sim.state;
        let band_frac = (cfg.case.kind == CaseKind::BumpChannel).then(|| {
            let b = cfg.case.channel.band;
            BandScore {
                band: b,
                fraction: band_fraction(&plan, &current.mesh, b),
                share: band_share(&current.mesh, b),
            }
        });
        last_plan = Some((plan, delta, band_frac));
        let more = cycle + 1 < cfg.adapt.cycles;
        if more || cfg.adapt.reassess {
            current = assess(&mut clock, cfg, mesh, disc, &snaps)?;
        } else {
            current.mesh = mesh;
            current.disc = disc;
        }
    }
    let (plan, delta, band_frac) = last_plan.expect("at least one cycle");
    let after = cfg.adapt.reassess.then(|| current.clone());
    let report = report::build(
        cfg,
        &clock.stages,
        &first,
        after.as_ref(),
        &plan,
        &delta,
        band_frac,
        current.mesh.leaf_count(),
    );
    Ok(CycleOutcome {
        report,
        plan,
        delta,
        before: first,
        after,
        mesh: current.mesh,
        state,
    })
}
