//! Stages shared by the CLI subcommands and the adaptation cycle: case
//! setup, the sampled run, statistics, budget replay and estimation.

use crate::budget::{ke_budget, strain_dissipation_denominator, tke_budget, DissipationMean, MeanDissipation};
use crate::config::{CaseKind, RunConfig, SgsChoice};
use crate::error::{Error, Result};
use crate::estimators::{estimate, ColumnInputs, IqReport};
use crate::io::{self, BudgetMeans, BudgetMode};
use crate::mesh::{BumpParams, GridConfig, Mapping, Mesh, Topology};
use crate::solver::cases::{channel, taylor_green_2d, taylor_green_3d, uniform};
use crate::solver::{
    Boundaries, Discretization, FlowState, Forcing, Physics, SchemeParams, SgsModel, Simulation, Snapshot,
};
use crate::stats::RunningStats;

/// Mesh, discretization and initial state of a configured case.
#[derive(Debug, Clone)]
pub struct Case {
    pub mesh: Mesh,
    pub disc: Discretization,
    pub state: FlowState,
}

pub fn grid_config(cfg: &RunConfig) -> Option<GridConfig> {
    let tau = 2.0 * std::f64::consts::PI;
    let dims = cfg.dims();
    let ch = &cfg.case.channel;
    match cfg.case.kind {
        CaseKind::Tgv2d => Some(GridConfig::cartesian(dims, [tau, tau, 1.0], [true, true, false])),
        CaseKind::Tgv3d => Some(GridConfig::cartesian(dims, [tau; 3], [true; 3])),
        CaseKind::BumpChannel => Some(GridConfig {
            dims,
            origin: [0.0; 3],
            extent: [ch.length, ch.height, ch.span],
            mapping: Mapping::BumpChannel(BumpParams {
                height: ch.bump_height,
                center: ch.bump_center,
                width: ch.bump_width,
                stretch: ch.stretch,
            }),
            periodic: [true, false, dims[2] > 1],
        }),
        CaseKind::CustomGridFile => None,
    }
}

pub fn physics(cfg: &RunConfig) -> Physics {
    let s = &cfg.scheme;
    Physics {
        rho: s.rho,
        nu: cfg.nu(),
        ac_speed: s.ac_speed,
        sgs: match s.sgs {
            SgsChoice::None => SgsModel::None,
            SgsChoice::Wale => SgsModel::Wale { c_w: s.c_w },
        },
    }
}

pub fn scheme(cfg: &RunConfig, mesh: &Mesh) -> SchemeParams {
    let s = &cfg.scheme;
    let driven = matches!(cfg.case.kind, CaseKind::BumpChannel | CaseKind::CustomGridFile) && mesh.base().periodic[0];
    SchemeParams {
        kappa2: s.kappa2,
        kappa4: s.kappa4,
        cfl: s.cfl,
        rk_alpha: s.rk_alpha,
        forcing: driven.then_some(Forcing {
            target_bulk_velocity: cfg.case.channel.u_bulk,
            relaxation: cfg.case.channel.relaxation,
        }),
    }
}

pub fn discretize(cfg: &RunConfig, mesh: &Mesh) -> Result<Discretization> {
    Discretization::new(mesh, Boundaries::default(), physics(cfg), scheme(cfg, mesh))
}

pub fn base_mesh(cfg: &RunConfig) -> Result<Mesh> {
    match grid_config(cfg) {
        Some(g) => Mesh::from_config(&g, cfg.scheme.c_filter),
        None => {
            let path = cfg.case.grid_file.as_ref().expect("validated");
            io::decode_grid(&io::read_file(path)?)
        }
    }
}

pub fn build_case(cfg: &RunConfig) -> Result<Case> {
    let mesh = base_mesh(cfg)?;
    let disc = discretize(cfg, &mesh)?;
    let ch = &cfg.case.channel;
    let state = match (cfg.case.kind, grid_config(cfg)) {
        (CaseKind::Tgv2d, _) => taylor_green_2d(&disc.topo, cfg.scheme.rho),
        (CaseKind::Tgv3d, _) => taylor_green_3d(&disc.topo, cfg.scheme.rho),
        (CaseKind::BumpChannel, Some(g)) => channel(&disc.topo, &g, ch.u_bulk, ch.noise, cfg.case.seed),
        _ => uniform(&disc.topo, 0.0, [ch.u_bulk, 0.0, 0.0]),
    };
    Ok(Case { mesh, disc, state })
}

/// Root steps at which snapshots are stored: the trailing window, every
/// `sample_every` steps, ending on the last step.
pub fn sample_steps(steps: usize, window_fraction: f64, every: usize) -> Vec<usize> {
    let window = ((window_fraction * steps as f64).ceil() as usize).clamp(1, steps);
    let start = steps - window;
    (start..=steps).rev().step_by(every).collect::<Vec<_>>().into_iter().rev().collect()
}

/// Run `steps` root steps, storing snapshots over the statistics window.
pub fn run_sampled(cfg: &RunConfig, disc: Discretization, state: FlowState, steps: usize) -> Result<(Simulation, Vec<Snapshot>)> {
    let mut sim = Simulation::new(disc, state, cfg.run.dt)?;
    sim.divergence_factor = cfg.run.divergence_factor;
    let when = sample_steps(steps, cfg.stats.window_fraction, cfg.run.sample_every);
    let mut snaps = Vec::with_capacity(when.len());
    let mut next = when.iter().peekable();
    for s in 0..=steps {
        if s > 0 {
            sim.step()?;
        }
        if next.peek() == Some(&&s) {
            next.next();
            let mut state = sim.state.clone();
            sim.disc.update_nu_t(&mut state);
            snaps.push(Snapshot {
                state,
                forcing: sim.last_forcing,
            });
        }
    }
    Ok((sim, snaps))
}

pub fn gather_stats(disc: &Discretization, snaps: &[Snapshot]) -> Result<RunningStats> {
    let mut stats = RunningStats::new(disc.n_leaves());
    for s in snaps {
        stats.accumulate(s, &disc.strain_work(&s.state))?;
    }
    Ok(stats)
}

fn need_triplet(snaps: &[Snapshot]) -> Result<()> {
    if snaps.len() < 3 {
        return Err(Error::Budget(format!(
            "budgets need at least 3 snapshots, have {}",
            snaps.len()
        )));
    }
    Ok(())
}

/// Time-mean KE budget over every interior snapshot.
pub fn ke_means(disc: &Discretization, snaps: &[Snapshot]) -> Result<BudgetMeans> {
    need_triplet(snaps)?;
    let mut m = BudgetMeans::new(BudgetMode::Ke, disc.n_leaves());
    for w in snaps.windows(3) {
        m.push_ke(&ke_budget(&w[0], &w[1], &w[2], disc)?);
    }
    Ok(m)
}

/// Second pass: TKE budget about the frozen means.
pub fn tke_means(disc: &Discretization, snaps: &[Snapshot], stats: &RunningStats) -> Result<BudgetMeans> {
    need_triplet(snaps)?;
    let mut m = BudgetMeans::new(BudgetMode::Tke, disc.n_leaves());
    for w in snaps.windows(3) {
        m.push_tke(&tke_budget(&w[0], &w[1], &w[2], stats, disc)?);
    }
    Ok(m)
}

pub fn mean_dissipation_of(b: &BudgetMeans, topo: &Topology) -> Result<MeanDissipation> {
    if b.eps_n().len() != topo.n_leaves() {
        return Err(Error::Budget(format!(
            "{} budget has {} leaves, mesh has {}",
            b.mode.name(),
            b.eps_n().len(),
            topo.n_leaves()
        )));
    }
    DissipationMean {
        mean: b.eps_n().to_vec(),
        n_samples: b.n_samples,
    }
    .finish(topo)
}

/// All estimators the given budgets support.
pub fn estimate_columns(
    cfg: &RunConfig,
    mesh: &Mesh,
    disc: &Discretization,
    stats: &RunningStats,
    ke: Option<&BudgetMeans>,
    tke: Option<&BudgetMeans>,
) -> Result<(ColumnInputs, IqReport)> {
    let topo = &disc.topo;
    let cols = ColumnInputs::from_stats(stats, topo, mesh.c_filter(), disc.physics.nu, disc.physics.rho)?;
    let den = strain_dissipation_denominator(stats, topo, crate::budget::DENOMINATOR_FLOOR);
    let ke_mean = ke.map(|b| mean_dissipation_of(b, topo)).transpose()?;
    let tke_mean = tke.map(|b| mean_dissipation_of(b, topo)).transpose()?;
    let report = estimate(
        &cols,
        ke_mean.as_ref().map(|m| (m, &den)),
        tke_mean.as_ref(),
        &cfg.estimator.constants,
    )?;
    Ok((cols, report))
}
