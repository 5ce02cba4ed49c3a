//! Five-stage Runge-Kutta and octree subcycling.
//!
//! Level `l` leaves advance with `2^(l_max - l)` times the finest step. A
//! coarse step runs two steps of the next finer level first, then its own:
//! `O(l) = O(l+1) O(l+1) A(l)`. Fluxes through coarse-fine faces are
//! accumulated over the fine substeps and handed to the coarse cell, so the
//! scheme stays exactly conservative.

use super::{apply_forcing, gather, Cons, Discretization, FlowState, IU, NVAR};
use crate::error::{Error, Result};
use crate::mesh::topology::FaceRef;
use crate::vec3::{norm, Mat3};

/// Low-storage stage coefficients: `w_k = w_0 - alpha_k dt R(w_{k-1})`.
pub const JAMESON_RK5: [f64; 5] = [0.25, 1.0 / 6.0, 0.375, 0.5, 1.0];

/// One RK step for a generic ODE `dw/dt = f(w)`.
pub fn rk5(w0: &[f64], dt: f64, alpha: &[f64; 5], mut rhs: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut w = w0.to_vec();
    for a in alpha {
        let f = rhs(&w);
        for (k, x) in w.iter_mut().enumerate() {
            *x = w0[k] + a * dt * f[k];
        }
    }
    w
}

/// Step size of level `level` when the finest level uses `dt_root`.
pub fn dt_at_level(dt_root: f64, level: u8, max_level: u8) -> Result<f64> {
    if level > max_level {
        return Err(Error::Config(format!(
            "level {level} exceeds the maximum level {max_level}"
        )));
    }
    Ok(dt_root * (1u64 << (max_level - level)) as f64)
}

/// Run the recursive advancement `O(level)`, calling `advance(l)` for each
/// `A(l)` in execution order.
pub fn subcycle(level: u8, max_level: u8, advance: &mut impl FnMut(u8) -> Result<()>) -> Result<()> {
    if level < max_level {
        subcycle(level + 1, max_level, advance)?;
        subcycle(level + 1, max_level, advance)?;
    }
    advance(level)
}

/// Single global RK step of every leaf with a common `dt`.
pub fn rk5_step(disc: &Discretization, state: &FlowState, dt: f64) -> Result<FlowState> {
    let mut s = state.clone();
    for a in disc.scheme.rk_alpha {
        let r = disc.compute_residual(&s)?;
        for (i, w) in s.w.iter_mut().enumerate() {
            let k = a * dt / disc.topo.volume[i];
            for v in 0..NVAR {
                w[v] = state.w[i][v] - k * r[i][v];
            }
        }
    }
    s.time = state.time + dt;
    s.check_finite()?;
    Ok(s)
}

#[derive(Debug, Clone, Default)]
struct LevelPlan {
    leaves: Vec<u32>,
    interior: Vec<u32>,
    boundary: Vec<u32>,
    /// Leaves whose gradients feed the viscous fluxes of this level.
    grad_cells: Vec<u32>,
    /// Interior faces of this level with a coarser cell on one side, and that
    /// cell's orientation sign.
    to_coarse: Vec<(u32, u32, f64)>,
}

fn build_plans(disc: &Discretization) -> Vec<LevelPlan> {
    let t = &disc.topo;
    let nl = t.max_level as usize + 1;
    let mut plans = vec![LevelPlan::default(); nl];
    for (i, l) in t.level.iter().enumerate() {
        plans[*l as usize].leaves.push(i as u32);
    }
    let mut mark = vec![usize::MAX; t.n_leaves()];
    for (k, f) in t.interior.iter().enumerate() {
        let l = f.level as usize;
        plans[l].interior.push(k as u32);
        for (c, sign) in [(f.left, 1.0), (f.right, -1.0)] {
            if t.level[c as usize] < f.level {
                plans[l].to_coarse.push((k as u32, c, sign));
            }
        }
    }
    for (k, b) in t.boundary.iter().enumerate() {
        plans[b.level as usize].boundary.push(k as u32);
    }
    for (l, plan) in plans.iter_mut().enumerate() {
        let mut cells = Vec::new();
        let mut add = |c: u32| {
            if mark[c as usize] != l {
                mark[c as usize] = l;
                cells.push(c);
            }
        };
        for k in &plan.interior {
            let f = &t.interior[*k as usize];
            add(f.left);
            add(f.right);
        }
        for k in &plan.boundary {
            add(t.boundary[*k as usize].cell);
        }
        cells.sort_unstable();
        plan.grad_cells = cells;
    }
    plans
}

/// Largest stable finest-level step for the given state.
pub fn stable_dt(disc: &Discretization, state: &FlowState) -> f64 {
    let t = &disc.topo;
    let c = disc.physics.ac_speed;
    let dims = if t.is_2d { 2.0 } else { 3.0 };
    let mut dt = f64::INFINITY;
    for i in 0..t.n_leaves() {
        let h = disc.width[i];
        let u = norm(state.velocity(i));
        let nu = disc.physics.nu + state.nu_t[i];
        let rate = (u + (u * u + c * c).sqrt()) / h + 2.0 * dims * nu / (h * h);
        let factor = (1u64 << (t.max_level - t.level[i])) as f64;
        dt = dt.min(disc.scheme.cfl / (rate * factor));
    }
    dt
}

/// Time integration driver owning the state.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub disc: Discretization,
    pub state: FlowState,
    dt_fine: f64,
    plans: Vec<LevelPlan>,
    register: Vec<Cons>,
    level_time: Vec<f64>,
    ref_speed: f64,
    /// Divergence is declared when max |u| exceeds this multiple of the
    /// reference speed.
    pub divergence_factor: f64,
    /// Force applied after the most recent step.
    pub last_forcing: f64,
    pub steps: u64,
    grads: Vec<Mat3>,
    flux_i: Vec<Cons>,
    flux_b: Vec<Cons>,
    w0: Vec<Cons>,
}

impl Simulation {
    /// `dt_fine` is the finest-level step; computed from the CFL limit of the
    /// initial state when absent.
    pub fn new(disc: Discretization, mut state: FlowState, dt_fine: Option<f64>) -> Result<Self> {
        if state.len() != disc.n_leaves() {
            return Err(Error::Solver(format!(
                "state has {} leaves, mesh has {}",
                state.len(),
                disc.n_leaves()
            )));
        }
        state.check_finite()?;
        disc.update_nu_t(&mut state);
        let dt_fine = match dt_fine {
            Some(dt) if dt > 0.0 => dt,
            Some(dt) => return Err(Error::Config(format!("time step must be positive, got {dt}"))),
            None => stable_dt(&disc, &state),
        };
        let mut ref_speed = state.max_speed();
        if let Some(f) = disc.scheme.forcing {
            ref_speed = ref_speed.max(f.target_bulk_velocity.abs());
        }
        let plans = build_plans(&disc);
        let n = disc.n_leaves();
        Ok(Simulation {
            level_time: vec![state.time; plans.len()],
            register: vec![[0.0; NVAR]; n],
            grads: vec![[[0.0; 3]; 3]; n],
            flux_i: vec![[0.0; NVAR]; disc.topo.interior.len()],
            flux_b: vec![[0.0; NVAR]; disc.topo.boundary.len()],
            w0: vec![[0.0; NVAR]; n],
            ref_speed: ref_speed.max(1e-12),
            divergence_factor: 10.0,
            last_forcing: 0.0,
            steps: 0,
            plans,
            dt_fine,
            disc,
            state,
        })
    }

    pub fn dt_fine(&self) -> f64 {
        self.dt_fine
    }

    /// Time advanced by one call to [`Simulation::step`].
    pub fn step_size(&self) -> f64 {
        self.dt_fine * (1u64 << self.disc.topo.max_level) as f64
    }

    pub fn max_level(&self) -> u8 {
        self.disc.topo.max_level
    }

    /// Advance all levels by one coarse step, then apply forcing.
    pub fn step(&mut self) -> Result<()> {
        let lmax = self.max_level();
        let t0 = self.state.time;
        let dt0 = self.step_size();
        self.disc.update_nu_t(&mut self.state);
        let mut this = std::mem::take(&mut self.plans);
        let res = subcycle(0, lmax, &mut |l| self.advance_level(&this, l));
        std::mem::swap(&mut self.plans, &mut this);
        res?;
        let target = t0 + dt0;
        for (l, t) in self.level_time.iter().enumerate() {
            if (t - target).abs() > 1e-12 * dt0 {
                return Err(Error::Integrator(format!(
                    "level {l} at t = {t}, expected {target}"
                )));
            }
        }
        self.level_time.iter_mut().for_each(|t| *t = target);
        self.state.time = target;
        self.last_forcing = apply_forcing(&self.disc, &mut self.state, dt0);
        self.steps += 1;
        self.check_divergence()
    }

    pub fn run(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    fn check_divergence(&self) -> Result<()> {
        self.state.check_finite()?;
        let m = self.state.max_speed();
        if m > self.divergence_factor * self.ref_speed {
            return Err(Error::Divergence(format!(
                "max |u| = {m:.3e} exceeds {}x the reference {:.3e} at t = {}",
                self.divergence_factor, self.ref_speed, self.state.time
            )));
        }
        Ok(())
    }

    fn advance_level(&mut self, plans: &[LevelPlan], l: u8) -> Result<()> {
        let plan = &plans[l as usize];
        let lmax = self.max_level();
        let dt = dt_at_level(self.dt_fine, l, lmax)?;
        self.level_time[l as usize] += dt;
        if plan.leaves.is_empty() {
            return Ok(());
        }
        for &c in &plan.leaves {
            self.w0[c as usize] = self.state.w[c as usize];
        }
        let disc = &self.disc;
        let viscous = disc.needs_gradients(&self.state);
        let alpha = disc.scheme.rk_alpha;
        for (stage, a) in alpha.iter().enumerate() {
            if viscous {
                let u = &self.state;
                for &c in &plan.grad_cells {
                    self.grads[c as usize] = leaf_gradient(disc, u, c as usize);
                }
            }
            let sensor = disc.pressure_sensor(&self.state);
            for &k in &plan.interior {
                self.flux_i[k as usize] = disc.interior_flux(&self.state, &self.grads, &sensor, k as usize);
            }
            for &k in &plan.boundary {
                self.flux_b[k as usize] = disc.boundary_flux(&self.state, &self.grads, k as usize);
            }
            if stage + 1 == alpha.len() {
                for &(k, c, sign) in &plan.to_coarse {
                    let f = &self.flux_i[k as usize];
                    let reg = &mut self.register[c as usize];
                    for v in 0..NVAR {
                        reg[v] += sign * f[v] * dt;
                    }
                }
            }
            let topo = &disc.topo;
            for &c in &plan.leaves {
                let i = c as usize;
                let mut r = gather(topo.faces_of(i), &self.flux_i, &self.flux_b, |fr| match *fr {
                    FaceRef::Interior { face, .. } => topo.interior[face as usize].level == l,
                    FaceRef::Boundary(_) => true,
                });
                let reg = &self.register[i];
                for v in 0..NVAR {
                    r[v] += reg[v] / dt;
                }
                let k = a * dt / topo.volume[i];
                let w = &mut self.state.w[i];
                for v in 0..NVAR {
                    w[v] = self.w0[i][v] - k * r[v];
                }
            }
        }
        for &c in &plan.leaves {
            self.register[c as usize] = [0.0; NVAR];
        }
        Ok(())
    }

    /// Total momentum `sum V u` (for conservation checks).
    pub fn total_momentum(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (i, w) in self.state.w.iter().enumerate() {
            for a in 0..3 {
                m[a] += self.disc.topo.volume[i] * w[IU + a];
            }
        }
        m
    }
}

/// Green-Gauss velocity gradient read straight from the conserved layout.
fn leaf_gradient(disc: &Discretization, state: &FlowState, i: usize) -> Mat3 {
    let u: &[Cons] = &state.w;
    let mut g = [[0.0; 3]; 3];
    let t = &disc.topo;
    for fr in t.faces_of(i) {
        let (v, s) = match *fr {
            FaceRef::Interior { face, sign } => {
                let f = &t.interior[face as usize];
                let (l, r) = (&u[f.left as usize], &u[f.right as usize]);
                let v: [f64; 3] = std::array::from_fn(|a| super::ops::face_value(f, l[IU + a], r[IU + a]));
                (v, crate::vec3::scale(f.area, sign))
            }
            FaceRef::Boundary(k) => {
                let b = &t.boundary[k as usize];
                (disc.bcs.face_velocity(b, super::velocity(&u[i])), b.area)
            }
        };
        for a in 0..3 {
            for bb in 0..3 {
                g[a][bb] += v[a] * s[bb];
            }
        }
    }
    let inv = 1.0 / t.volume[i];
    g.iter_mut().for_each(|row| row.iter_mut().for_each(|x| *x *= inv));
    g
}
