//! Cell-centered finite-volume solver for the filtered incompressible
//! equations in artificial-compressibility form.
//!
//! Each leaf carries `[p, u1, u2, u3, e]` plus the SGS viscosity. Fluxes are
//! central with blended second/fourth-difference dissipation; viscous fluxes
//! use corrected face gradients of the Green-Gauss cell gradients.

pub mod cases;
pub mod ops;
pub mod time;

use crate::error::{Error, Result};
use crate::mesh::topology::{BoundaryFace, FaceRef, InteriorFace};
use crate::mesh::{Mesh, Topology};
use crate::sgs;
use crate::vec3::{dot, norm, Mat3, Vec3};
use ops::FaceCoeffs;

pub use time::{dt_at_level, rk5, rk5_step, subcycle, Simulation, JAMESON_RK5};

pub const NVAR: usize = 5;
pub const IP: usize = 0;
pub const IU: usize = 1;
pub const IE: usize = 4;

pub type Cons = [f64; NVAR];

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub time: f64,
    pub w: Vec<Cons>,
    pub nu_t: Vec<f64>,
}

impl FlowState {
    pub fn zeros(n: usize) -> Self {
        FlowState {
            time: 0.0,
            w: vec![[0.0; NVAR]; n],
            nu_t: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    #[inline]
    pub fn velocity(&self, i: usize) -> Vec3 {
        velocity(&self.w[i])
    }

    pub fn velocities(&self) -> Vec<Vec3> {
        self.w.iter().map(velocity).collect()
    }

    pub fn pressures(&self) -> Vec<f64> {
        self.w.iter().map(|w| w[IP]).collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.w.iter().map(|w| norm(velocity(w))).fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, w) in self.w.iter().enumerate() {
            if w.iter().any(|x| !x.is_finite()) || !self.nu_t[i].is_finite() {
                return Err(Error::Solver(format!(
                    "non-finite state in leaf {i} at t = {}",
                    self.time
                )));
            }
        }
        Ok(())
    }
}

/// Flow state recorded for post-processing, with the body force in effect.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: FlowState,
    pub forcing: f64,
}

#[inline]
pub fn velocity(w: &Cons) -> Vec3 {
    [w[1], w[2], w[3]]
}

/// Condition applied on a non-periodic side of the domain.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryKind {
    /// No-slip, adiabatic wall.
    Wall,
    /// Fixed external state.
    Farfield(Cons),
}

/// Boundary kind per domain side `2*axis + side`. Periodic sides never
/// produce boundary faces, so their entry is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundaries {
    pub sides: [BoundaryKind; 6],
}

impl Default for Boundaries {
    fn default() -> Self {
        Boundaries {
            sides: std::array::from_fn(|_| BoundaryKind::Wall),
        }
    }
}

impl Boundaries {
    pub fn ghost(&self, b: &BoundaryFace, wc: &Cons) -> Cons {
        match &self.sides[b.side as usize] {
            BoundaryKind::Wall => [wc[0], -wc[1], -wc[2], -wc[3], wc[4]],
            BoundaryKind::Farfield(w) => *w,
        }
    }

    pub fn ghost_velocity(&self, b: &BoundaryFace, uc: Vec3) -> Vec3 {
        match &self.sides[b.side as usize] {
            BoundaryKind::Wall => [-uc[0], -uc[1], -uc[2]],
            BoundaryKind::Farfield(w) => velocity(w),
        }
    }

    pub fn ghost_nu_t(&self, b: &BoundaryFace, nt: f64) -> f64 {
        match &self.sides[b.side as usize] {
            BoundaryKind::Wall => 0.0,
            BoundaryKind::Farfield(_) => nt,
        }
    }

    pub fn face_velocity(&self, b: &BoundaryFace, uc: Vec3) -> Vec3 {
        let g = self.ghost_velocity(b, uc);
        [0.5 * (uc[0] + g[0]), 0.5 * (uc[1] + g[1]), 0.5 * (uc[2] + g[2])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SgsModel {
    None,
    Wale { c_w: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Physics {
    pub rho: f64,
    pub nu: f64,
    /// Artificial sound speed of the pressure equation.
    pub ac_speed: f64,
    pub sgs: SgsModel,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            rho: 1.0,
            nu: 0.0,
            ac_speed: 5.0,
            sgs: SgsModel::Wale { c_w: sgs::C_W },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forcing {
    pub target_bulk_velocity: f64,
    pub relaxation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    pub kappa2: f64,
    pub kappa4: f64,
    pub cfl: f64,
    pub rk_alpha: [f64; 5],
    pub forcing: Option<Forcing>,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            kappa2: 0.0,
            kappa4: 1.0 / 64.0,
            cfl: 1.5,
            rk_alpha: JAMESON_RK5,
            forcing: None,
        }
    }
}

/// Mesh topology plus everything needed to evaluate fluxes on it.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub topo: Topology,
    pub bcs: Boundaries,
    pub physics: Physics,
    pub scheme: SchemeParams,
    /// Smallest `V / |S|` over the faces of each leaf.
    pub width: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: &Mesh, bcs: Boundaries, physics: Physics, scheme: SchemeParams) -> Result<Self> {
        if !(physics.rho > 0.0) || !(physics.nu >= 0.0) || !(physics.ac_speed > 0.0) {
            return Err(Error::Config(
                "density and sound speed must be positive, viscosity non-negative".into(),
            ));
        }
        if !(scheme.kappa2 >= 0.0) || !(scheme.kappa4 >= 0.0) || !(scheme.cfl > 0.0) {
            return Err(Error::Config("kappa2, kappa4 >= 0 and cfl > 0 required".into()));
        }
        if let Some(f) = scheme.forcing {
            if !mesh.base().periodic[0] {
                return Err(Error::Config("forcing needs a periodic streamwise direction".into()));
            }
            if !(f.relaxation > 0.0) {
                return Err(Error::Config("forcing relaxation must be positive".into()));
            }
        }
        let topo = Topology::build(mesh);
        let mut width = vec![f64::INFINITY; topo.n_leaves()];
        for f in &topo.interior {
            let a = norm(f.area);
            for c in [f.left as usize, f.right as usize] {
                width[c] = width[c].min(topo.volume[c] / a);
            }
        }
        for b in &topo.boundary {
            let c = b.cell as usize;
            width[c] = width[c].min(topo.volume[c] / norm(b.area));
        }
        Ok(Discretization {
            topo,
            bcs,
            physics,
            scheme,
            width,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.topo.n_leaves()
    }

    /// Green-Gauss velocity gradients of every leaf, `g[a][b] = du_a/dx_b`.
    pub fn velocity_gradients(&self, state: &FlowState) -> Vec<Mat3> {
        let u = state.velocities();
        ops::gradient_vector(&self.topo, &u, |b, _, uc| self.bcs.ghost_velocity(b, uc))
    }

    /// `tau_ij du_i/dx_j` with `tau = grad u + grad u^T`, per leaf.
    pub fn strain_work(&self, state: &FlowState) -> Vec<f64> {
        self.velocity_gradients(state).iter().map(strain_work).collect()
    }

    /// Refresh the SGS viscosity from the current velocity gradients.
    pub fn update_nu_t(&self, state: &mut FlowState) {
        match self.physics.sgs {
            SgsModel::None => state.nu_t.iter_mut().for_each(|x| *x = 0.0),
            SgsModel::Wale { c_w } => {
                let g = self.velocity_gradients(state);
                for (i, gi) in g.iter().enumerate() {
                    state.nu_t[i] = sgs::wale_nu_t(gi, self.topo.volume[i].cbrt(), c_w);
                }
            }
        }
    }

    /// Pressure switch of each leaf along each axis; empty when `kappa2 = 0`.
    pub fn pressure_sensor(&self, state: &FlowState) -> Vec<Vec3> {
        if self.scheme.kappa2 == 0.0 {
            return Vec::new();
        }
        let n = self.n_leaves();
        let mut lo = vec![[0.0f64; 3]; n];
        let mut hi = vec![[0.0f64; 3]; n];
        let mut wlo = vec![[0.0f64; 3]; n];
        let mut whi = vec![[0.0f64; 3]; n];
        for f in &self.topo.interior {
            let (l, r, a) = (f.left as usize, f.right as usize, f.axis as usize);
            let s = norm(f.area);
            hi[l][a] += s * state.w[r][IP];
            whi[l][a] += s;
            lo[r][a] += s * state.w[l][IP];
            wlo[r][a] += s;
        }
        (0..n)
            .map(|i| {
                let p = state.w[i][IP];
                let mut out = [0.0; 3];
                for a in 0..3 {
                    let pm = if wlo[i][a] > 0.0 { lo[i][a] / wlo[i][a] } else { p };
                    let pp = if whi[i][a] > 0.0 { hi[i][a] / whi[i][a] } else { p };
                    out[a] = (pp - 2.0 * p + pm).abs() / (pp.abs() + 2.0 * p.abs() + pm.abs() + 1e-300);
                }
                out
            })
            .collect()
    }

    /// Transport coefficients of interior face `k`.
    #[inline]
    pub fn face_coeffs(&self, state: &FlowState, sensor: &[Vec3], k: usize) -> FaceCoeffs {
        let f = &self.topo.interior[k];
        let (l, r) = (f.left as usize, f.right as usize);
        let uf = ops::face_value3(f, state.velocity(l), state.velocity(r));
        let un = dot(uf, f.area);
        let c = self.physics.ac_speed;
        let lam = un.abs() + (un * un + c * c * dot(f.area, f.area)).sqrt();
        let eps2 = if sensor.is_empty() {
            0.0
        } else {
            let a = f.axis as usize;
            self.scheme.kappa2 * sensor[l][a].max(sensor[r][a])
        };
        FaceCoeffs {
            un,
            lam,
            eps2,
            eps4: (self.scheme.kappa4 - eps2).max(0.0),
        }
    }

    pub fn all_face_coeffs(&self, state: &FlowState) -> Vec<FaceCoeffs> {
        let sensor = self.pressure_sensor(state);
        (0..self.topo.interior.len())
            .map(|k| self.face_coeffs(state, &sensor, k))
            .collect()
    }

    /// Normal velocity times area at boundary face `k`.
    #[inline]
    pub fn boundary_un(&self, state: &FlowState, k: usize) -> f64 {
        let b = &self.topo.boundary[k];
        dot(self.bcs.face_velocity(b, state.velocity(b.cell as usize)), b.area)
    }

    /// Full flux through interior face `k`, oriented left to right.
    pub fn interior_flux(
        &self,
        state: &FlowState,
        grads: &[Mat3],
        sensor: &[Vec3],
        k: usize,
    ) -> Cons {
        let f = &self.topo.interior[k];
        let c = self.face_coeffs(state, sensor, k);
        let (l, r) = (f.left as usize, f.right as usize);
        let (wl, wr) = (&state.w[l], &state.w[r]);
        let wf: Cons = std::array::from_fn(|v| ops::face_value(f, wl[v], wr[v]));
        let (gf, nu_f) = self.interior_viscous(state, grads, k);
        let mut flux = self.central_flux(&wf, c.un, f.area, &gf, nu_f);
        let diss = dissipation_cons(f, &c, &state.w);
        for v in 0..NVAR {
            flux[v] -= diss[v];
        }
        flux
    }

    /// Effective viscosity `nu + nu_t` at interior face `k`.
    #[inline]
    pub fn interior_nu(&self, state: &FlowState, k: usize) -> f64 {
        let f = &self.topo.interior[k];
        self.physics.nu + ops::face_value(f, state.nu_t[f.left as usize], state.nu_t[f.right as usize])
    }

    #[inline]
    pub fn boundary_nu(&self, state: &FlowState, k: usize) -> f64 {
        let b = &self.topo.boundary[k];
        let nt = state.nu_t[b.cell as usize];
        self.physics.nu + 0.5 * (nt + self.bcs.ghost_nu_t(b, nt))
    }

    /// Face velocity gradient and effective viscosity of interior face `k`.
    /// The gradient is only evaluated when the viscosity is non-zero.
    pub fn interior_viscous(&self, state: &FlowState, grads: &[Mat3], k: usize) -> (Mat3, f64) {
        let f = &self.topo.interior[k];
        let (l, r) = (f.left as usize, f.right as usize);
        let nu_f = self.interior_nu(state, k);
        if nu_f == 0.0 {
            return ([[0.0; 3]; 3], 0.0);
        }
        let (wl, wr) = (&state.w[l], &state.w[r]);
        let g = std::array::from_fn(|a| ops::face_gradient(f, grads[l][a], grads[r][a], wl[IU + a], wr[IU + a]));
        (g, nu_f)
    }

    pub fn boundary_viscous(&self, state: &FlowState, grads: &[Mat3], k: usize) -> (Mat3, f64) {
        let b = &self.topo.boundary[k];
        let i = b.cell as usize;
        let nu_f = self.boundary_nu(state, k);
        if nu_f == 0.0 {
            return ([[0.0; 3]; 3], 0.0);
        }
        let wc = &state.w[i];
        let g = self.bcs.ghost(b, wc);
        let gf = std::array::from_fn(|a| ops::boundary_face_gradient(b, grads[i][a], wc[IU + a], g[IU + a]));
        (gf, nu_f)
    }

    /// Average of the owning cell and its ghost at boundary face `k`.
    pub fn boundary_face_state(&self, state: &FlowState, k: usize) -> Cons {
        let b = &self.topo.boundary[k];
        let wc = &state.w[b.cell as usize];
        let g = self.bcs.ghost(b, wc);
        std::array::from_fn(|v| 0.5 * (wc[v] + g[v]))
    }

    /// Full outward flux through boundary face `k` (no artificial dissipation).
    pub fn boundary_flux(&self, state: &FlowState, grads: &[Mat3], k: usize) -> Cons {
        let b = &self.topo.boundary[k];
        let wf = self.boundary_face_state(state, k);
        let un = dot(velocity(&wf), b.area);
        let (gf, nu_f) = self.boundary_viscous(state, grads, k);
        self.central_flux(&wf, un, b.area, &gf, nu_f)
    }

    #[inline]
    fn central_flux(&self, wf: &Cons, un: f64, s: Vec3, gf: &Mat3, nu_f: f64) -> Cons {
        let rho = self.physics.rho;
        let c = self.physics.ac_speed;
        let p = wf[IP];
        let u = velocity(wf);
        let mut flux = [0.0; NVAR];
        flux[IP] = rho * c * c * un;
        for a in 0..3 {
            flux[IU + a] = u[a] * un + p / rho * s[a];
        }
        flux[IE] = (wf[IE] + p / rho) * un;
        if nu_f != 0.0 {
            let ts = tau_dot(gf, s);
            for a in 0..3 {
                flux[IU + a] -= nu_f * ts[a];
            }
            flux[IE] -= nu_f * dot(u, ts);
        }
        flux
    }

    /// Face-flux sum of every leaf (flux-integral units; `dw/dt = -R/V`).
    pub fn compute_residual(&self, state: &FlowState) -> Result<Vec<Cons>> {
        state.check_finite()?;
        let grads = if self.needs_gradients(state) {
            self.velocity_gradients(state)
        } else {
            vec![[[0.0; 3]; 3]; self.n_leaves()]
        };
        let sensor = self.pressure_sensor(state);
        let fi: Vec<Cons> = (0..self.topo.interior.len())
            .map(|k| self.interior_flux(state, &grads, &sensor, k))
            .collect();
        let fb: Vec<Cons> = (0..self.topo.boundary.len())
            .map(|k| self.boundary_flux(state, &grads, k))
            .collect();
        Ok((0..self.n_leaves())
            .map(|i| gather(self.topo.faces_of(i), &fi, &fb, |_| true))
            .collect())
    }

    pub(crate) fn needs_gradients(&self, state: &FlowState) -> bool {
        self.physics.nu != 0.0 || state.nu_t.iter().any(|x| *x != 0.0)
    }
}

/// `(g_ij + g_ji) g_ij` for `g_ij = du_i/dx_j`.
#[inline]
pub fn strain_work(g: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += (g[i][j] + g[j][i]) * g[i][j];
        }
    }
    s
}

#[inline]
pub(crate) fn gather(
    refs: &[FaceRef],
    fi: &[Cons],
    fb: &[Cons],
    mut keep: impl FnMut(&FaceRef) -> bool,
) -> Cons {
    let mut r = [0.0; NVAR];
    for fr in refs {
        if !keep(fr) {
            continue;
        }
        match *fr {
            FaceRef::Interior { face, sign } => {
                let f = &fi[face as usize];
                for v in 0..NVAR {
                    r[v] += sign * f[v];
                }
            }
            FaceRef::Boundary(k) => {
                let f = &fb[k as usize];
                for v in 0..NVAR {
                    r[v] += f[v];
                }
            }
        }
    }
    r
}

/// `tau . s` with `tau = g + g^T`.
#[inline]
pub fn tau_dot(g: &Mat3, s: Vec3) -> Vec3 {
    std::array::from_fn(|a| (0..3).map(|b| (g[a][b] + g[b][a]) * s[b]).sum())
}

fn dissipation_cons(f: &InteriorFace, c: &FaceCoeffs, w: &[Cons]) -> Cons {
    let mut d = [0.0; NVAR];
    if c.lam == 0.0 {
        return d;
    }
    let l = &w[f.left as usize];
    let r = &w[f.right as usize];
    if c.eps2 != 0.0 {
        for v in 0..NVAR {
            d[v] += c.eps2 * (r[v] - l[v]);
        }
    }
    if c.eps4 != 0.0 {
        let mut ll = [0.0; NVAR];
        let mut rr = [0.0; NVAR];
        f.far_left.apply(w, |x, wt| (0..NVAR).for_each(|v| ll[v] += wt * x[v]));
        f.far_right.apply(w, |x, wt| (0..NVAR).for_each(|v| rr[v] += wt * x[v]));
        for v in 0..NVAR {
            d[v] -= c.eps4 * (rr[v] - 3.0 * r[v] + 3.0 * l[v] - ll[v]);
        }
    }
    for x in d.iter_mut() {
        *x *= c.lam;
    }
    d
}

/// Volume-averaged streamwise velocity.
pub fn bulk_velocity(topo: &Topology, state: &FlowState) -> f64 {
    let mut s = 0.0;
    for (i, w) in state.w.iter().enumerate() {
        s += w[IU] * topo.volume[i];
    }
    s / topo.total_volume()
}

/// Body force that drives the bulk velocity back to the target in one step.
pub fn forcing_magnitude(u_bulk: f64, forcing: &Forcing, dt: f64) -> f64 {
    forcing.relaxation * (forcing.target_bulk_velocity - u_bulk) / dt
}

/// Uniform streamwise body force applied as a fractional step; the energy
/// equation receives the matching work `f u`. Returns the force used.
pub fn apply_forcing(disc: &Discretization, state: &mut FlowState, dt: f64) -> f64 {
    let Some(forcing) = disc.scheme.forcing else {
        return 0.0;
    };
    let f = forcing_magnitude(bulk_velocity(&disc.topo, state), &forcing, dt);
    for w in state.w.iter_mut() {
        let u0 = w[IU];
        w[IU] += f * dt;
        w[IE] += f * dt * (u0 + 0.5 * f * dt);
    }
    f
}
