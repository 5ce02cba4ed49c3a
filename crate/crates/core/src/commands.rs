//! The CLI subcommands as library calls. Each reads and writes artifacts in
//! the configured output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::adapt::{self, Assessment};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, IqReport};
use crate::io::csv::{self, Column};
use crate::io::vtk::{self, Field};
use crate::io::{self, BudgetMeans, BudgetMode};
use crate::mesh::Mesh;
use crate::pipeline;
use crate::report::{self, Histogram};
use crate::solver::{Discretization, Snapshot};
use crate::stats::{resolved_tke, spanwise_average, RunningStats};

/// File layout of an output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(cfg: &RunConfig) -> Self {
        Artifacts {
            dir: cfg.output.dir.clone(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn snapshot_dir(&self) -> PathBuf {
        self.dir.join("snapshots")
    }

    pub fn snapshot(&self, i: usize) -> PathBuf {
        self.snapshot_dir().join(format!("snap_{i:06}.bin"))
    }

    pub fn budget(&self, mode: BudgetMode) -> PathBuf {
        self.path(&format!("budget_{}.bin", mode.name()))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    io::write_file(path, text.as_bytes())
}

fn load_mesh(a: &Artifacts) -> Result<Mesh> {
    io::decode_grid(&io::read_file(&a.path("grid.bin"))?)
}

fn load_stats(a: &Artifacts, disc: &Discretization) -> Result<RunningStats> {
    let stats = io::decode_stats(&io::read_file(&a.path("stats.bin"))?)?;
    if stats.len() != disc.n_leaves() {
        return Err(Error::Format(format!(
            "stats hold {} cells, grid has {} leaves",
            stats.len(),
            disc.n_leaves()
        )));
    }
    Ok(stats)
}

fn load_snapshots(a: &Artifacts, disc: &Discretization) -> Result<Vec<Snapshot>> {
    let dir = a.snapshot_dir();
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(&dir, e))?.path();
        if p.extension().is_some_and(|x| x == "bin") {
            paths.push(p);
        }
    }
    paths.sort();
    let mut snaps = Vec::with_capacity(paths.len());
    for p in &paths {
        let s = io::decode_snapshot(&io::read_file(p)?)?;
        if s.state.len() != disc.n_leaves() {
            return Err(Error::Format(format!(
                "{} holds {} cells, grid has {} leaves",
                p.display(),
                s.state.len(),
                disc.n_leaves()
            )));
        }
        snaps.push(s);
    }
    Ok(snaps)
}

fn load_budget(a: &Artifacts, mode: BudgetMode, n: usize) -> Result<Option<BudgetMeans>> {
    let path = a.budget(mode);
    if !path.exists() {
        return Ok(None);
    }
    let b = io::decode_budget(&io::read_file(&path)?)?;
    if b.mode != mode || b.eps_n().len() != n {
        return Err(Error::Format(format!("{} does not match the grid", path.display())));
    }
    Ok(Some(b))
}

/// Mesh and discretization stored by `run`.
fn load_case(cfg: &RunConfig, a: &Artifacts) -> Result<(Mesh, Discretization)> {
    let mesh = load_mesh(a)?;
    let disc = pipeline::discretize(cfg, &mesh)?;
    Ok((mesh, disc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub snapshots: usize,
    pub time: f64,
    pub dt: f64,
}

/// Advance the configured case (or a restart snapshot on the stored grid)
/// and write the grid, window snapshots, final state and statistics.
pub fn run(cfg: &RunConfig, restart: Option<&Path>) -> Result<RunSummary> {
    let a = Artifacts::new(cfg);
    let (mesh, disc, state) = match restart {
        Some(p) => {
            let mesh = load_mesh(&a)?;
            let disc = pipeline::discretize(cfg, &mesh)?;
            let snap = io::decode_snapshot(&io::read_file(p)?)?;
            if snap.state.len() != disc.n_leaves() {
                return Err(Error::Format(format!(
                    "restart state has {} cells, grid has {} leaves",
                    snap.state.len(),
                    disc.n_leaves()
                )));
            }
            (mesh, disc, snap.state)
        }
        None => {
            let c = pipeline::build_case(cfg)?;
            (c.mesh, c.disc, c.state)
        }
    };
    let (sim, snaps) = pipeline::run_sampled(cfg, disc.clone(), state, cfg.run.steps).map_err(|e| e.in_stage("run"))?;
    let stats = pipeline::gather_stats(&disc, &snaps).map_err(|e| e.in_stage("stats"))?;

    write_text(&a.path("config.toml"), &cfg.echo())?;
    io::write_file(&a.path("grid.bin"), &io::encode_grid(&mesh))?;
    let sd = a.snapshot_dir();
    if sd.exists() {
        std::fs::remove_dir_all(&sd).map_err(|e| Error::io(&sd, e))?;
    }
    for (i, s) in snaps.iter().enumerate() {
        io::write_file(&a.snapshot(i), &io::encode_snapshot(s))?;
    }
    let last = Snapshot {
        state: sim.state.clone(),
        forcing: sim.last_forcing,
    };
    io::write_file(&a.path("state.bin"), &io::encode_snapshot(&last))?;
    io::write_file(&a.path("stats.bin"), &io::encode_stats(&stats))?;
    if cfg.output.vtk {
        let k_res = resolved_tke(&stats)?;
        let comp = |d: usize| stats.mean_u.iter().map(|u| u[d]).collect::<Vec<f64>>();
        let (u, v, w) = (comp(0), comp(1), comp(2));
        let fields = [
            Field { name: "mean_u", values: &u },
            Field { name: "mean_v", values: &v },
            Field { name: "mean_w", values: &w },
            Field { name: "mean_p", values: &stats.mean_p },
            Field { name: "mean_nu_t", values: &stats.mean_nu_t },
            Field { name: "k_res", values: &k_res },
        ];
        vtk::export_vtk(&mesh, &disc.topo, &fields, &a.path("stats.vtk"))?;
    }
    Ok(RunSummary {
        steps: cfg.run.steps,
        snapshots: snaps.len(),
        time: sim.state.time,
        dt: sim.step_size(),
    })
}

/// Replay the stored window and write the time-mean budget, its spanwise
/// profiles and, if enabled, the cell fields.
pub fn budget(cfg: &RunConfig, mode: BudgetMode) -> Result<BudgetMeans> {
    let a = Artifacts::new(cfg);
    let (mesh, disc) = load_case(cfg, &a)?;
    let snaps = load_snapshots(&a, &disc)?;
    let means = match mode {
        BudgetMode::Ke => pipeline::ke_means(&disc, &snaps)?,
        BudgetMode::Tke => pipeline::tke_means(&disc, &snaps, &load_stats(&a, &disc)?)?,
    };
    io::write_file(&a.budget(mode), &io::encode_budget(&means))?;

    let topo = &disc.topo;
    let centroids = topo.column_centroids();
    let x: Vec<f64> = centroids.iter().map(|c| c[0]).collect();
    let y: Vec<f64> = centroids.iter().map(|c| c[1]).collect();
    let profiles: Vec<Vec<f64>> = means.terms.iter().map(|t| spanwise_average(t, topo)).collect();
    let mut columns = vec![Column { name: "x", values: Some(&x) }, Column { name: "y", values: Some(&y) }];
    for (name, p) in mode.term_names().iter().zip(&profiles) {
        columns.push(Column { name, values: Some(p) });
    }
    csv::write_csv(&columns, &a.path(&format!("budget_{}.csv", mode.name())))?;
    if cfg.output.vtk {
        let fields: Vec<Field> = mode
            .term_names()
            .iter()
            .zip(&means.terms)
            .map(|(name, t)| Field { name, values: t })
            .collect();
        vtk::export_vtk(&mesh, topo, &fields, &a.path(&format!("budget_{}.vtk", mode.name())))?;
    }
    Ok(means)
}

/// Evaluate every estimator the stored budgets support.
pub fn estimate(cfg: &RunConfig) -> Result<IqReport> {
    let a = Artifacts::new(cfg);
    let (mesh, disc) = load_case(cfg, &a)?;
    let stats = load_stats(&a, &disc)?;
    let n = disc.n_leaves();
    let ke = load_budget(&a, BudgetMode::Ke, n)?;
    let tke = load_budget(&a, BudgetMode::Tke, n)?;
    let (cols, iq) = pipeline::estimate_columns(cfg, &mesh, &disc, &stats, ke.as_ref(), tke.as_ref())?;
    let table = report::estimate_table(&disc.topo, &cols, &iq, ke.as_ref(), tke.as_ref())?;
    write_text(&a.path("estimate.csv"), &table)?;
    if cfg.output.vtk {
        let names: Vec<String> = iq.fields.iter().map(|f| f.id.to_string()).collect();
        let knames: Vec<String> = iq.numerical.iter().map(|m| format!("k_num_{}", m.method.name())).collect();
        let mut fields: Vec<Field> = iq
            .fields
            .iter()
            .zip(&names)
            .map(|(f, name)| Field { name, values: &f.iq })
            .collect();
        fields.extend(iq.numerical.iter().zip(&knames).map(|(m, name)| Field { name, values: &m.k_num }));
        fields.push(Field { name: "k_res", values: &cols.k_res });
        vtk::export_vtk(&mesh, &disc.topo, &fields, &a.path("estimate.vtk"))?;
    }
    Ok(iq)
}

/// Flag, refine, rerun on the adapted grid and write the plan, the adapted
/// grid and state, and the cycle summary. Needs both budgets.
pub fn adapt(cfg: &RunConfig) -> Result<adapt::CycleOutcome> {
    let a = Artifacts::new(cfg);
    let (mesh, disc) = load_case(cfg, &a)?;
    let stats = load_stats(&a, &disc)?;
    let n = disc.n_leaves();
    let missing = |mode: BudgetMode| {
        Error::Config(format!(
            "{} is missing; run `budget --mode {}` first",
            a.budget(mode).display(),
            mode.name()
        ))
    };
    let ke = load_budget(&a, BudgetMode::Ke, n)?.ok_or_else(|| missing(BudgetMode::Ke))?;
    let tke = load_budget(&a, BudgetMode::Tke, n)?.ok_or_else(|| missing(BudgetMode::Tke))?;
    let state = io::decode_snapshot(&io::read_file(&a.path("state.bin"))?)?.state;
    let (columns, iq) = pipeline::estimate_columns(cfg, &mesh, &disc, &stats, Some(&ke), Some(&tke))?;
    let first = Assessment {
        mesh,
        disc,
        stats,
        ke,
        tke,
        columns,
        iq,
    };
    let out = adapt::adapt_from(cfg, first, state)?;
    io::write_file(&a.path("plan.bin"), &io::encode_plan(&out.plan.record()))?;
    io::write_file(&a.path("grid_adapted.bin"), &io::encode_grid(&out.mesh))?;
    let snap = Snapshot {
        state: out.state.clone(),
        forcing: 0.0,
    };
    io::write_file(&a.path("state_adapted.bin"), &io::encode_snapshot(&snap))?;
    write_text(&a.path("adapt.txt"), &report::render_summary(&out.report))?;
    Ok(out)
}

fn histogram_lines(out: &mut String, iq: &IqReport) {
    for id in EstimatorId::all() {
        match iq.field(id) {
            Some(f) => {
                let h = Histogram::of(&f.iq);
                let counts: Vec<String> = h.counts.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(out, "  {:<11} {}", id.to_string(), counts.join(" "));
            }
            None => {
                let _ = writeln!(out, "  {:<11} absent", id.to_string());
            }
        }
    }
}

/// Summary text and per-column table from whatever artifacts exist.
pub fn report(cfg: &RunConfig) -> Result<String> {
    let a = Artifacts::new(cfg);
    let (mesh, disc) = load_case(cfg, &a)?;
    let stats = load_stats(&a, &disc)?;
    let n = disc.n_leaves();
    let ke = load_budget(&a, BudgetMode::Ke, n)?;
    let tke = load_budget(&a, BudgetMode::Tke, n)?;
    let (cols, iq) = pipeline::estimate_columns(cfg, &mesh, &disc, &stats, ke.as_ref(), tke.as_ref())?;
    write_text(
        &a.path("report.csv"),
        &report::estimate_table(&disc.topo, &cols, &iq, ke.as_ref(), tke.as_ref())?,
    )?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "run summary\n\nleaves {}, statistics samples {} over t in [{:.6}, {:.6}]",
        n, stats.n_samples, stats.t_start, stats.t_end
    );
    for (mode, b) in [(BudgetMode::Ke, &ke), (BudgetMode::Tke, &tke)] {
        match b {
            Some(b) => {
                let _ = writeln!(out, "{} budget: {} samples", mode.name(), b.n_samples);
            }
            None => {
                let _ = writeln!(out, "{} budget: absent", mode.name());
            }
        }
    }
    out.push_str("\nnumerical TKE per method (desk-scale case values):\n");
    for m in report::method_summaries(&iq) {
        let _ = writeln!(
            out,
            "  {:<4} k_num min {:.4e} max {:.4e}  negative-dissipation columns {}  invalid columns {}",
            m.method.name(),
            m.k_num_min,
            m.k_num_max,
            m.negative_columns,
            m.invalid_columns
        );
    }
    out.push_str("\nIQ histograms (10 bins on [0,1], counts of columns):\n");
    histogram_lines(&mut out, &iq);
    let plan_path = a.path("plan.bin");
    if plan_path.exists() {
        let plan = adapt::AdaptPlan::from_record(io::decode_plan(&io::read_file(&plan_path)?)?);
        let _ = writeln!(
            out,
            "\nplan: estimator {} fraction {} flagged {} of {} leaves ({:.2}%)",
            plan.estimator,
            plan.fraction,
            plan.flagged.len(),
            plan.leaf_count,
            100.0 * plan.flagged.len() as f64 / plan.leaf_count.max(1) as f64
        );
        if plan.leaf_count == n && cfg.case.kind == crate::config::CaseKind::BumpChannel {
            let b = cfg.case.channel.band;
            let _ = writeln!(
                out,
                "flags with y in [{}, {}]: {:.1}% (leaves in band: {:.1}%)",
                b[0],
                b[1],
                100.0 * adapt::band_fraction(&plan, &mesh, b),
                100.0 * adapt::band_share(&mesh, b)
            );
        }
    } else {
        out.push_str("\nplan: absent\n");
    }
    out.push_str("\nresolved configuration:\n");
    out.push_str(&cfg.echo());
    write_text(&a.path("report.txt"), &out)?;
    Ok(out)
}
