//! Human-readable summaries and per-column tables of pipeline artifacts.
//!
//! k_num extrema printed here come from the configured desk-scale case, not
//! from any published simulation.

use std::fmt::Write as _;

use crate::adapt::{AdaptPlan, Assessment};
use crate::config::RunConfig;
use crate::error::Result;
use crate::estimators::{ColumnInputs, EstimatorId, IqReport, Method};
use crate::io::csv::{self, Column};
use crate::mesh::{MeshDelta, Topology};
use crate::pipeline::mean_dissipation_of;
use crate::io::BudgetMeans;

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub name: &'static str,
    pub seconds: f64,
}

pub const BINS: usize = 10;

/// Counts of values in ten equal bins over [0, 1].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: [u64; BINS],
}

impl Histogram {
    pub fn of(values: &[f64]) -> Self {
        let mut counts = [0; BINS];
        for v in values {
            let b = ((v.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1);
            counts[b] += 1;
        }
        Histogram { counts }
    }
}

/// Where a plan's flags fall relative to the configured band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandScore {
    pub band: [f64; 2],
    pub fraction: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub k_num_min: f64,
    pub k_num_max: f64,
    /// Columns whose mean dissipation was negative and got clipped.
    pub negative_columns: usize,
    pub invalid_columns: usize,
}

pub fn method_summaries(iq: &IqReport) -> Vec<MethodSummary> {
    iq.numerical
        .iter()
        .map(|n| MethodSummary {
            method: n.method,
            k_num_min: n.k_num.iter().copied().fold(f64::INFINITY, f64::min),
            k_num_max: n.k_num.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            negative_columns: n.n_negative(),
            invalid_columns: n.n_invalid(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config_echo: String,
    pub stages: Vec<StageTiming>,
    pub estimator: EstimatorId,
    pub fraction: f64,
    pub leaves_before: usize,
    pub leaves_after: usize,
    pub flagged: usize,
    pub closure: usize,
    pub band: Option<BandScore>,
    pub before: Vec<(EstimatorId, Histogram)>,
    pub after: Vec<(EstimatorId, Histogram)>,
    pub methods: Vec<MethodSummary>,
}

#[allow(clippy::too_many_arguments)]
pub fn build(
    cfg: &RunConfig,
    stages: &[StageTiming],
    before: &Assessment,
    after: Option<&Assessment>,
    plan: &AdaptPlan,
    delta: &MeshDelta,
    band: Option<BandScore>,
    leaves_after: usize,
) -> Report {
    let hist = |iq: &IqReport| iq.fields.iter().map(|f| (f.id, Histogram::of(&f.iq))).collect();
    Report {
        config_echo: cfg.echo(),
        stages: stages.to_vec(),
        estimator: plan.estimator,
        fraction: plan.fraction,
        leaves_before: plan.leaf_count,
        leaves_after,
        flagged: plan.flagged.len(),
        closure: delta.closure.len(),
        band,
        before: hist(&before.iq),
        after: after.map(|a| hist(&a.iq)).unwrap_or_default(),
        methods: method_summaries(&before.iq),
    }
}

fn hist_line(out: &mut String, id: &EstimatorId, h: &Histogram) {
    let counts: Vec<String> = h.counts.iter().map(|c| c.to_string()).collect();
    let _ = writeln!(out, "  {:<11} {}", id.to_string(), counts.join(" "));
}

pub fn render_summary(r: &Report) -> String {
    let mut out = String::new();
    out.push_str("adaptation cycle\n\nstages (wall seconds):\n");
    for s in &r.stages {
        let _ = writeln!(out, "  {:<11} {:.3}", s.name, s.seconds);
    }
    let _ = writeln!(out, "\nestimator {} fraction {}", r.estimator, r.fraction);
    let _ = writeln!(
        out,
        "leaves {} -> {}, flagged {}, balance closure {}",
        r.leaves_before, r.leaves_after, r.flagged, r.closure
    );
    if let Some(b) = &r.band {
        let _ = writeln!(
            out,
            "flags with y in [{}, {}]: {:.1}% (leaves in band: {:.1}%)",
            b.band[0],
            b.band[1],
            100.0 * b.fraction,
            100.0 * b.share
        );
    }
    out.push_str("\nnumerical TKE per method (desk-scale case values):\n");
    for m in &r.methods {
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
    out.push_str("\nIQ histograms before adaptation (10 bins on [0,1], counts of columns):\n");
    r.before.iter().for_each(|(id, h)| hist_line(&mut out, id, h));
    if r.after.is_empty() {
        out.push_str("\nno reassessment on the adapted grid\n");
    } else {
        out.push_str("\nIQ histograms after adaptation:\n");
        r.after.iter().for_each(|(id, h)| hist_line(&mut out, id, h));
    }
    out.push_str("\nresolved configuration:\n");
    out.push_str(&r.config_echo);
    out
}

/// Per-column table of dissipation, numerical TKE and every estimator.
/// Columns whose budget is missing are written empty.
pub fn estimate_table(
    topo: &Topology,
    cols: &ColumnInputs,
    iq: &IqReport,
    ke: Option<&BudgetMeans>,
    tke: Option<&BudgetMeans>,
) -> Result<String> {
    let centroids = topo.column_centroids();
    let x: Vec<f64> = centroids.iter().map(|c| c[0]).collect();
    let y: Vec<f64> = centroids.iter().map(|c| c[1]).collect();
    let eps_ke = ke.map(|b| mean_dissipation_of(b, topo)).transpose()?;
    let eps_tke = tke.map(|b| mean_dissipation_of(b, topo)).transpose()?;
    let k_num = |m| iq.numerical(m).map(|n| n.k_num.as_slice());
    let mut columns = vec![
        Column { name: "x", values: Some(&x) },
        Column { name: "y", values: Some(&y) },
        Column { name: "eps_n_ke", values: eps_ke.as_ref().map(|e| e.eps_bar.as_slice()) },
        Column { name: "eps_n_tke", values: eps_tke.as_ref().map(|e| e.eps_bar.as_slice()) },
        Column { name: "k_res", values: Some(&cols.k_res) },
        Column { name: "k_sgs", values: Some(&iq.k_sgs) },
        Column { name: "k_num_emp", values: k_num(Method::Emp) },
        Column { name: "k_num_ke", values: k_num(Method::Ke) },
        Column { name: "k_num_tke", values: k_num(Method::Tke) },
    ];
    let names: Vec<(EstimatorId, String)> = EstimatorId::all().map(|id| (id, id.to_string())).collect();
    for (id, name) in &names {
        columns.push(Column {
            name,
            values: iq.field(*id).map(|f| f.iq.as_slice()),
        });
    }
    csv::render(&columns)
}
