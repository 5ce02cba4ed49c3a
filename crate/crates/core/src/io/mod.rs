//! Versioned binary artifacts plus VTK and CSV export.
//!
//! Every binary file starts with an 8-byte magic and a little-endian `u32`
//! version. Readers check every length against the remaining input before
//! allocating, so truncated or hostile files fail with a format error.

pub mod csv;
pub mod vtk;

use std::path::Path;

use crate::budget::{KeBudget, TkeBudget};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, Family, Method};
use crate::mesh::{BaseGrid, CellId, Mesh, MappingId};
use crate::solver::{FlowState, Snapshot, NVAR};
use crate::stats::RunningStats;

pub const VERSION: u32 = 1;

pub const GRID_MAGIC: &[u8; 8] = b"IQLESGRD";
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"IQLESSNP";
pub const STATS_MAGIC: &[u8; 8] = b"IQLESSTA";
pub const PLAN_MAGIC: &[u8; 8] = b"IQLESPLN";
pub const BUDGET_MAGIC: &[u8; 8] = b"IQLESBDG";

/// Largest base grid a file may describe.
const MAX_BASE_CELLS: usize = 1 << 26;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        let mut buf = magic.to_vec();
        buf.extend_from_slice(&VERSION.to_le_bytes());
        Writer { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 8], what: &'static str) -> Result<Self> {
        let mut r = Reader { buf, pos: 0, what };
        if r.take(8)? != magic {
            return Err(Error::Format(format!("not a {what} file (bad magic)")));
        }
        let v = r.u32()?;
        if v != VERSION {
            return Err(Error::Format(format!(
                "unsupported {what} file version {v} (this build reads version {VERSION})"
            )));
        }
        Ok(r)
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Format(format!("{} file at byte {}: {msg}", self.what, self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated, needed {n} more bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A count of items of `item_size` bytes each that must fit in the rest
    /// of the input.
    fn count(&mut self, item_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let left = (self.buf.len() - self.pos) as u64;
        if n.checked_mul(item_size as u64).is_none_or(|b| b > left) {
            return Err(self.err(format!("count {n} exceeds the remaining input")));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn f64s_exact(&mut self, n: usize) -> Result<Vec<f64>> {
        let v = self.f64s()?;
        if v.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err("string is not UTF-8"))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.err(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_grid(mesh: &Mesh) -> Vec<u8> {
    let mut w = Writer::new(GRID_MAGIC);
    let b = mesh.base();
    b.dims.iter().for_each(|d| w.u64(*d as u64));
    w.u8(b.mapping.code());
    w.u8(b.periodic.iter().enumerate().map(|(a, p)| (*p as u8) << a).sum());
    w.f64(mesh.c_filter());
    w.u64(b.vertices.len() as u64);
    b.vertices.iter().flatten().for_each(|x| w.f64(*x));
    let splits: Vec<(CellId, CellId)> = mesh
        .cells()
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.first_child.map(|f| (i as CellId, f)))
        .collect();
    w.u64(splits.len() as u64);
    let mut sorted = splits;
    sorted.sort_by_key(|s| s.1);
    for (p, f) in sorted {
        w.u32(p);
        w.u32(f);
    }
    w.buf
}

/// Rebuild a mesh by replaying the recorded splits on the base grid.
pub fn decode_grid(bytes: &[u8]) -> Result<Mesh> {
    let mut r = Reader::new(bytes, GRID_MAGIC, "grid")?;
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let v = r.u64()?;
        if v == 0 || v > MAX_BASE_CELLS as u64 {
            return Err(r.err(format!("dimension {v} out of range")));
        }
        *d = v as usize;
    }
    if dims.iter().try_fold(1usize, |a, d| a.checked_mul(*d)).is_none_or(|n| n > MAX_BASE_CELLS) {
        return Err(r.err(format!("grid {dims:?} is too large")));
    }
    let mapping = MappingId::from_code(r.u8()?).ok_or_else(|| r.err("unknown mapping id"))?;
    let pbits = r.u8()?;
    if pbits > 7 {
        return Err(r.err("bad periodic flags"));
    }
    let periodic = [pbits & 1 != 0, pbits & 2 != 0, pbits & 4 != 0];
    let c_filter = r.f64()?;
    let nv = r.count(24)?;
    let expect = (dims[0] + 1) * (dims[1] + 1) * (dims[2] + 1);
    if nv != expect {
        return Err(r.err(format!("{nv} vertices for dims {dims:?}, expected {expect}")));
    }
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        vertices.push([r.f64()?, r.f64()?, r.f64()?]);
    }
    let ns = r.count(8)?;
    let mut splits = Vec::with_capacity(ns);
    for _ in 0..ns {
        splits.push((r.u32()?, r.u32()?));
    }
    r.finish()?;
    let base = BaseGrid { dims, vertices, mapping, periodic };
    let mut mesh = Mesh::new(base, c_filter).map_err(as_format)?;
    for (p, f) in splits {
        mesh.replay_split(p, f).map_err(as_format)?;
    }
    mesh.finish_replay();
    if !mesh.is_balanced() {
        return Err(Error::Format("grid file describes an unbalanced tree".into()));
    }
    Ok(mesh)
}

fn as_format(e: Error) -> Error {
    match e {
        Error::Format(_) => e,
        other => Error::Format(format!("invalid grid: {other}")),
    }
}

pub fn encode_snapshot(s: &Snapshot) -> Vec<u8> {
    let mut w = Writer::new(SNAPSHOT_MAGIC);
    w.f64(s.state.time);
    w.f64(s.forcing);
    w.u64(s.state.len() as u64);
    for (x, nt) in s.state.w.iter().zip(&s.state.nu_t) {
        x.iter().for_each(|v| w.f64(*v));
        w.f64(*nt);
    }
    w.buf
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader::new(bytes, SNAPSHOT_MAGIC, "snapshot")?;
    let time = r.f64()?;
    let forcing = r.f64()?;
    let n = r.count(8 * (NVAR + 1))?;
    let mut state = FlowState::zeros(n);
    state.time = time;
    for i in 0..n {
        for v in state.w[i].iter_mut() {
            *v = r.f64()?;
        }
        state.nu_t[i] = r.f64()?;
    }
    r.finish()?;
    Ok(Snapshot { state, forcing })
}

pub fn encode_stats(s: &RunningStats) -> Vec<u8> {
    let mut w = Writer::new(STATS_MAGIC);
    w.u64(s.n_samples);
    w.f64(s.t_start);
    w.f64(s.t_end);
    w.f64(s.mean_forcing);
    w.u64(s.len() as u64);
    for i in 0..s.len() {
        s.mean_u[i].iter().for_each(|v| w.f64(*v));
        s.comoment[i].iter().for_each(|v| w.f64(*v));
        w.f64(s.mean_p[i]);
        w.f64(s.mean_nu_t[i]);
        w.f64(s.mean_strain_work[i]);
    }
    w.buf
}

pub fn decode_stats(bytes: &[u8]) -> Result<RunningStats> {
    let mut r = Reader::new(bytes, STATS_MAGIC, "stats")?;
    let n_samples = r.u64()?;
    let t_start = r.f64()?;
    let t_end = r.f64()?;
    let mean_forcing = r.f64()?;
    let n = r.count(8 * 12)?;
    let mut s = RunningStats::new(n);
    s.n_samples = n_samples;
    s.t_start = t_start;
    s.t_end = t_end;
    s.mean_forcing = mean_forcing;
    for i in 0..n {
        for v in s.mean_u[i].iter_mut() {
            *v = r.f64()?;
        }
        for v in s.comoment[i].iter_mut() {
            *v = r.f64()?;
        }
        s.mean_p[i] = r.f64()?;
        s.mean_nu_t[i] = r.f64()?;
        s.mean_strain_work[i] = r.f64()?;
    }
    r.finish()?;
    Ok(s)
}

/// Flagged leaves of one adaptation step, with what selected them.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRecord {
    pub estimator: EstimatorId,
    pub fraction: f64,
    pub leaf_count: u64,
    pub flagged: Vec<CellId>,
}

pub fn encode_plan(p: &PlanRecord) -> Vec<u8> {
    let mut w = Writer::new(PLAN_MAGIC);
    w.u8(p.estimator.family.code());
    w.u8(p.estimator.method.code());
    w.f64(p.fraction);
    w.u64(p.leaf_count);
    w.u64(p.flagged.len() as u64);
    p.flagged.iter().for_each(|id| w.u32(*id));
    w.buf
}

pub fn decode_plan(bytes: &[u8]) -> Result<PlanRecord> {
    let mut r = Reader::new(bytes, PLAN_MAGIC, "plan")?;
    let family = Family::from_code(r.u8()?).ok_or_else(|| r.err("unknown estimator family"))?;
    let method = Method::from_code(r.u8()?).ok_or_else(|| r.err("unknown estimator method"))?;
    let fraction = r.f64()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(r.err(format!("fraction {fraction} outside (0, 1]")));
    }
    let leaf_count = r.u64()?;
    let n = r.count(4)?;
    let flagged: Vec<CellId> = (0..n).map(|_| r.u32()).collect::<Result<_>>()?;
    if flagged.windows(2).any(|w| w[0] >= w[1]) {
        return Err(r.err("flagged ids must be strictly increasing"));
    }
    if n as u64 > leaf_count {
        return Err(r.err("more flagged cells than leaves"));
    }
    r.finish()?;
    Ok(PlanRecord {
        estimator: EstimatorId { family, method },
        fraction,
        leaf_count,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMode {
    Ke,
    Tke,
}

impl BudgetMode {
    pub fn name(self) -> &'static str {
        match self {
            BudgetMode::Ke => "ke",
            BudgetMode::Tke => "tke",
        }
    }

    pub fn term_names(self) -> &'static [&'static str] {
        match self {
            BudgetMode::Ke => &["e_kin_t", "f_ekin", "f_ac", "f_nu", "eps_nu", "eps_n"],
            BudgetMode::Tke => &["k_t", "f_k", "f_ac", "f_nu", "production", "eps_nu", "eps_inter", "eps_n"],
        }
    }
}

/// Time means of every budget term over a replayed window; the last term is
/// always `eps_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetMeans {
    pub mode: BudgetMode,
    pub n_samples: u64,
    pub terms: Vec<Vec<f64>>,
}

impl BudgetMeans {
    pub fn new(mode: BudgetMode, n: usize) -> Self {
        BudgetMeans {
            mode,
            n_samples: 0,
            terms: vec![vec![0.0; n]; mode.term_names().len()],
        }
    }

    pub fn eps_n(&self) -> &[f64] {
        self.terms.last().expect("budgets have terms")
    }

    fn push_terms(&mut self, terms: [&[f64]; 8], k: usize) {
        self.n_samples += 1;
        let n = self.n_samples as f64;
        for (acc, t) in self.terms.iter_mut().zip(&terms[..k]) {
            for (m, x) in acc.iter_mut().zip(t.iter()) {
                *m += (x - *m) / n;
            }
        }
    }

    pub fn push_ke(&mut self, b: &KeBudget) {
        let e: &[f64] = &[];
        self.push_terms([&b.e_kin_t, &b.f_ekin, &b.f_ac, &b.f_nu, &b.eps_nu, &b.eps_n, e, e], 6);
    }

    pub fn push_tke(&mut self, b: &TkeBudget) {
        self.push_terms(
            [&b.k_t, &b.f_k, &b.f_ac, &b.f_nu, &b.production, &b.eps_nu, &b.eps_inter, &b.eps_n],
            8,
        );
    }
}

pub fn encode_budget(b: &BudgetMeans) -> Vec<u8> {
    let mut w = Writer::new(BUDGET_MAGIC);
    w.u8(b.mode as u8);
    w.u64(b.n_samples);
    w.u32(b.terms.len() as u32);
    for (name, t) in b.mode.term_names().iter().zip(&b.terms) {
        w.str(name);
        w.f64s(t);
    }
    w.buf
}

pub fn decode_budget(bytes: &[u8]) -> Result<BudgetMeans> {
    let mut r = Reader::new(bytes, BUDGET_MAGIC, "budget")?;
    let mode = match r.u8()? {
        0 => BudgetMode::Ke,
        1 => BudgetMode::Tke,
        m => return Err(r.err(format!("unknown budget mode {m}"))),
    };
    let n_samples = r.u64()?;
    let names = mode.term_names();
    if r.u32()? as usize != names.len() {
        return Err(r.err(format!("{} budget must have {} terms", mode.name(), names.len())));
    }
    let mut terms: Vec<Vec<f64>> = Vec::with_capacity(names.len());
    for name in names {
        let got = r.str()?;
        if got != *name {
            return Err(r.err(format!("expected term `{name}`, found `{got}`")));
        }
        let t = match terms.first() {
            Some(f) => r.f64s_exact(f.len())?,
            None => r.f64s()?,
        };
        terms.push(t);
    }
    r.finish()?;
    Ok(BudgetMeans { mode, n_samples, terms })
}
