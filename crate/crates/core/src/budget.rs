//! Kinetic-energy and turbulent-kinetic-energy budgets evaluated with the
//! solver's own face kernels; the numerical dissipation is whatever the
//! discrete terms fail to balance.
//!
//! KE terms are per unit volume (`e_kin = rho |u|^2 / 2`), TKE terms per unit
//! mass (`k = |u'|^2 / 2`).

use crate::error::{Error, Result};
use crate::mesh::topology::BoundaryFace;
use crate::mesh::Topology;
use crate::solver::ops::{self, divergence, face_value, face_value3};
use crate::solver::{strain_work, tau_dot, velocity, Cons, Discretization, FlowState, Snapshot, IP, IU};
use crate::stats::{spanwise_average, RunningStats};
use crate::vec3::{dot, sub, Mat3, Vec3};

/// Denominator values below this are flagged as unusable.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeBudget {
    pub e_kin_t: Vec<f64>,
    pub f_ekin: Vec<f64>,
    pub f_ac: Vec<f64>,
    pub f_nu: Vec<f64>,
    pub eps_nu: Vec<f64>,
    pub eps_n: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TkeBudget {
    pub k_t: Vec<f64>,
    pub f_k: Vec<f64>,
    pub f_ac: Vec<f64>,
    pub f_nu: Vec<f64>,
    pub production: Vec<f64>,
    pub eps_nu: Vec<f64>,
    pub eps_inter: Vec<f64>,
    pub eps_n: Vec<f64>,
}

#[inline]
pub fn ke_closure(e_kin_t: f64, f_ekin: f64, f_ac: f64, f_nu: f64, eps_nu: f64) -> f64 {
    -(e_kin_t + f_ekin + f_ac + f_nu + eps_nu)
}

#[inline]
#[allow(clippy::too_many_arguments)]
pub fn tke_closure(k_t: f64, f_k: f64, f_ac: f64, f_nu: f64, p: f64, eps_nu: f64, eps_inter: f64) -> f64 {
    -(k_t + f_k + f_ac + f_nu + p + eps_nu + eps_inter)
}

impl KeBudget {
    pub fn close(&mut self) {
        self.eps_n = (0..self.e_kin_t.len())
            .map(|i| ke_closure(self.e_kin_t[i], self.f_ekin[i], self.f_ac[i], self.f_nu[i], self.eps_nu[i]))
            .collect();
    }
}

impl TkeBudget {
    pub fn close(&mut self) {
        self.eps_n = (0..self.k_t.len())
            .map(|i| {
                tke_closure(
                    self.k_t[i],
                    self.f_k[i],
                    self.f_ac[i],
                    self.f_nu[i],
                    self.production[i],
                    self.eps_nu[i],
                    self.eps_inter[i],
                )
            })
            .collect();
    }
}

/// Spacing of a snapshot triplet, which must be uniform.
pub fn snapshot_spacing(prev: &Snapshot, cur: &Snapshot, next: &Snapshot) -> Result<f64> {
    let d0 = cur.state.time - prev.state.time;
    let d1 = next.state.time - cur.state.time;
    if !(d0 > 0.0) || !(d1 > 0.0) || (d1 - d0).abs() > 1e-9 * d0.max(d1) {
        return Err(Error::Budget(format!(
            "snapshot spacing must be uniform and positive, got {d0} and {d1}"
        )));
    }
    Ok(0.5 * (d0 + d1))
}

fn check_sizes(disc: &Discretization, snaps: [&Snapshot; 3]) -> Result<()> {
    for s in snaps {
        if s.state.len() != disc.n_leaves() {
            return Err(Error::Budget(format!(
                "snapshot has {} leaves, mesh has {}",
                s.state.len(),
                disc.n_leaves()
            )));
        }
    }
    Ok(())
}

fn kinetic(state: &FlowState, rho: f64) -> Vec<f64> {
    state
        .w
        .iter()
        .map(|w| {
            let u = velocity(w);
            0.5 * rho * dot(u, u)
        })
        .collect()
}

/// KE budget at the middle snapshot of a uniformly spaced triplet.
pub fn ke_budget(prev: &Snapshot, cur: &Snapshot, next: &Snapshot, disc: &Discretization) -> Result<KeBudget> {
    check_sizes(disc, [prev, cur, next])?;
    let dt = snapshot_spacing(prev, cur, next)?;
    let topo = &disc.topo;
    let rho = disc.physics.rho;
    let s = &cur.state;
    let e0 = kinetic(&prev.state, rho);
    let e1 = kinetic(s, rho);
    let e2 = kinetic(&next.state, rho);
    let coeffs = disc.all_face_coeffs(s);
    let grads = disc.velocity_gradients(s);

    let ni = topo.interior.len();
    let (mut fe, mut fac, mut fnu) = (vec![0.0; ni], vec![0.0; ni], vec![0.0; ni]);
    for (k, f) in topo.interior.iter().enumerate() {
        let c = &coeffs[k];
        let (l, r) = (f.left as usize, f.right as usize);
        fe[k] = ops::transport_flux(f, c, &e1);
        fac[k] = face_value(f, s.w[l][IP], s.w[r][IP]) * c.un;
        let (gf, nu_f) = disc.interior_viscous(s, &grads, k);
        if nu_f != 0.0 {
            let uf = face_value3(f, s.velocity(l), s.velocity(r));
            fnu[k] = -rho * nu_f * dot(uf, tau_dot(&gf, f.area));
        }
    }
    let nb = topo.boundary.len();
    let (mut be, mut bac, mut bnu) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
    for (k, b) in topo.boundary.iter().enumerate() {
        let wf = disc.boundary_face_state(s, k);
        let uf = velocity(&wf);
        let un = dot(uf, b.area);
        be[k] = 0.5 * rho * dot(uf, uf) * un;
        bac[k] = wf[IP] * un;
        let (gf, nu_f) = disc.boundary_viscous(s, &grads, k);
        if nu_f != 0.0 {
            bnu[k] = -rho * nu_f * dot(uf, tau_dot(&gf, b.area));
        }
    }
    let mut out = KeBudget {
        e_kin_t: (0..e1.len()).map(|i| (e2[i] - e0[i]) / (2.0 * dt)).collect(),
        f_ekin: divergence(topo, &fe, &be),
        f_ac: divergence(topo, &fac, &bac),
        f_nu: divergence(topo, &fnu, &bnu),
        eps_nu: grads
            .iter()
            .enumerate()
            .map(|(i, g)| rho * (disc.physics.nu + s.nu_t[i]) * strain_work(g))
            .collect(),
        eps_n: Vec::new(),
    };
    // the driving body force acts like a mean pressure gradient
    for (i, x) in out.f_ac.iter_mut().enumerate() {
        *x -= rho * cur.forcing * s.w[i][IU];
    }
    out.close();
    Ok(out)
}

fn mean_state(stats: &RunningStats, i: usize) -> Cons {
    let m = stats.mean_u[i];
    [stats.mean_p[i], m[0], m[1], m[2], 0.0]
}

/// TKE budget at the middle snapshot of a triplet, with fluctuations taken
/// about the frozen means in `stats`.
pub fn tke_budget(
    prev: &Snapshot,
    cur: &Snapshot,
    next: &Snapshot,
    stats: &RunningStats,
    disc: &Discretization,
) -> Result<TkeBudget> {
    check_sizes(disc, [prev, cur, next])?;
    if stats.n_samples == 0 {
        return Err(Error::Budget("statistics window is empty".into()));
    }
    if stats.len() != disc.n_leaves() {
        return Err(Error::Budget("statistics and mesh disagree on the leaf count".into()));
    }
    let dt = snapshot_spacing(prev, cur, next)?;
    let topo = &disc.topo;
    let bcs = &disc.bcs;
    let rho = disc.physics.rho;
    let s = &cur.state;
    let n = disc.n_leaves();
    let mean_u = &stats.mean_u;
    let fluct = |st: &FlowState| -> Vec<Vec3> { (0..n).map(|i| sub(st.velocity(i), mean_u[i])).collect() };
    let tke = |up: &[Vec3]| -> Vec<f64> { up.iter().map(|u| 0.5 * dot(*u, *u)).collect() };
    let k0 = tke(&fluct(&prev.state));
    let k2 = tke(&fluct(&next.state));
    let up = fluct(s);
    let k1 = tke(&up);
    let pp: Vec<f64> = (0..n).map(|i| s.w[i][IP] - stats.mean_p[i]).collect();

    let coeffs = disc.all_face_coeffs(s);
    let grads = disc.velocity_gradients(s);
    let gmean: Vec<Mat3> = ops::gradient_vector(topo, mean_u, |b, _, u| bcs.ghost_velocity(b, u));

    // fluctuation values on boundary faces
    let bfluct: Vec<(Vec3, f64)> = topo
        .boundary
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let i = b.cell as usize;
            let wf = disc.boundary_face_state(s, k);
            let mc = mean_state(stats, i);
            let mg = bcs.ghost(b, &mc);
            let mf: Cons = std::array::from_fn(|v| 0.5 * (mc[v] + mg[v]));
            (sub(velocity(&wf), velocity(&mf)), wf[IP] - mf[IP])
        })
        .collect();
    let k_ghost = |b: &BoundaryFace, i: usize, kc: f64| -> f64 {
        let uf = sub(bcs.face_velocity(b, s.velocity(i)), bcs.face_velocity(b, mean_u[i]));
        dot(uf, uf) - kc
    };
    let gk = ops::gradient_scalar(topo, &k1, k_ghost);

    let ni = topo.interior.len();
    let (mut fk, mut fac, mut fnu) = (vec![0.0; ni], vec![0.0; ni], vec![0.0; ni]);
    for (k, f) in topo.interior.iter().enumerate() {
        let c = &coeffs[k];
        let (l, r) = (f.left as usize, f.right as usize);
        fk[k] = ops::transport_flux(f, c, &k1);
        let uf = face_value3(f, up[l], up[r]);
        fac[k] = face_value(f, pp[l], pp[r]) * dot(uf, f.area) / rho;
        let nu_f = disc.interior_nu(s, k);
        fnu[k] = -nu_f * dot(ops::face_gradient(f, gk[l], gk[r], k1[l], k1[r]), f.area);
    }
    let nb = topo.boundary.len();
    let (mut bk, mut bac, mut bnu) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
    for (k, b) in topo.boundary.iter().enumerate() {
        let i = b.cell as usize;
        let un = dot(velocity(&disc.boundary_face_state(s, k)), b.area);
        let (uf, pf) = bfluct[k];
        let kf = 0.5 * dot(uf, uf);
        bk[k] = kf * un;
        bac[k] = pf * dot(uf, b.area) / rho;
        let nu_f = disc.boundary_nu(s, k);
        let g = ops::boundary_face_gradient(b, gk[i], k1[i], 2.0 * kf - k1[i]);
        bnu[k] = -nu_f * dot(g, b.area);
    }

    let lap: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            let comp: Vec<f64> = mean_u.iter().map(|u| u[a]).collect();
            ops::laplacian(topo, &comp, |b, i, _| bcs.ghost_velocity(b, mean_u[i])[a])
        })
        .collect();
    let df = cur.forcing - stats.mean_forcing;
    let mut out = TkeBudget {
        k_t: (0..n).map(|i| (k2[i] - k0[i]) / (2.0 * dt)).collect(),
        f_k: divergence(topo, &fk, &bk),
        f_ac: divergence(topo, &fac, &bac),
        f_nu: divergence(topo, &fnu, &bnu),
        production: Vec::with_capacity(n),
        eps_nu: Vec::with_capacity(n),
        eps_inter: Vec::with_capacity(n),
        eps_n: Vec::new(),
    };
    for i in 0..n {
        let u = up[i];
        let gm = &gmean[i];
        let mut prod = 0.0;
        let mut gg = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                prod += u[a] * u[b] * gm[a][b];
                let d = grads[i][a][b] - gm[a][b];
                gg += d * d;
            }
        }
        out.production.push(prod);
        out.eps_nu.push((disc.physics.nu + s.nu_t[i]) * gg);
        let nu_tp = s.nu_t[i] - stats.mean_nu_t[i];
        out.eps_inter
            .push(-nu_tp * (u[0] * lap[0][i] + u[1] * lap[1][i] + u[2] * lap[2][i]));
        out.f_ac[i] -= df * u[0];
    }
    out.close();
    Ok(out)
}

/// Time- then column-averaged numerical dissipation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanDissipation {
    pub eps_bar: Vec<f64>,
    pub eps_bar_pos: Vec<f64>,
}

/// Running time mean of per-leaf dissipation samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationMean {
    pub mean: Vec<f64>,
    pub n_samples: u64,
}

impl DissipationMean {
    pub fn new(n: usize) -> Self {
        DissipationMean {
            mean: vec![0.0; n],
            n_samples: 0,
        }
    }

    pub fn push(&mut self, eps_n: &[f64]) -> Result<()> {
        if eps_n.len() != self.mean.len() {
            return Err(Error::Budget(format!(
                "sample has {} leaves, expected {}",
                eps_n.len(),
                self.mean.len()
            )));
        }
        self.n_samples += 1;
        let n = self.n_samples as f64;
        for (m, x) in self.mean.iter_mut().zip(eps_n) {
            *m += (x - *m) / n;
        }
        Ok(())
    }

    pub fn finish(&self, topo: &Topology) -> Result<MeanDissipation> {
        if self.n_samples == 0 {
            return Err(Error::Budget("no dissipation samples".into()));
        }
        let eps_bar = spanwise_average(&self.mean, topo);
        let eps_bar_pos = eps_bar.iter().map(|x| x.max(0.0)).collect();
        Ok(MeanDissipation { eps_bar, eps_bar_pos })
    }
}

pub fn mean_dissipation(series: &[Vec<f64>], topo: &Topology) -> Result<MeanDissipation> {
    let mut acc = DissipationMean::new(topo.n_leaves());
    for s in series {
        acc.push(s)?;
    }
    acc.finish(topo)
}

/// Column mean of `tau_ij du_i/dx_j` with columns below the floor flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct Denominator {
    pub value: Vec<f64>,
    pub flagged: Vec<bool>,
}

pub fn strain_dissipation_denominator(stats: &RunningStats, topo: &Topology, floor: f64) -> Denominator {
    let value: Vec<f64> = spanwise_average(&stats.mean_strain_work, topo)
        .into_iter()
        .map(|x| x.max(0.0))
        .collect();
    let flagged = value.iter().map(|v| *v < floor).collect();
    Denominator { value, flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{GridConfig, Mesh};
    use crate::solver::{Boundaries, Physics, SchemeParams, SgsModel};

    fn disc(dims: [usize; 3], periodic: [bool; 3], nu: f64) -> Discretization {
        let m = Mesh::from_config(&GridConfig::cartesian(dims, [1.0; 3], periodic), 1.0).unwrap();
        let physics = Physics {
            nu,
            sgs: SgsModel::None,
            ..Physics::default()
        };
        Discretization::new(&m, Boundaries::default(), physics, SchemeParams::default()).unwrap()
    }

    fn snap(state: &FlowState, t: f64) -> Snapshot {
        let mut s = state.clone();
        s.time = t;
        Snapshot { state: s, forcing: 0.0 }
    }

    #[test]
    fn uniform_flow_has_an_empty_budget() {
        let d = disc([4, 4, 4], [true; 3], 0.01);
        let s = crate::solver::cases::uniform(&d.topo, 0.2, [1.0, -0.5, 0.3]);
        let b = ke_budget(&snap(&s, 0.0), &snap(&s, 0.1), &snap(&s, 0.2), &d).unwrap();
        for v in [&b.e_kin_t, &b.f_ekin, &b.f_ac, &b.f_nu, &b.eps_nu, &b.eps_n] {
            assert!(v.iter().all(|x| x.abs() < 1e-13));
        }
    }

    #[test]
    fn shear_dissipation_is_nu_s_squared() {
        let nu = 0.02;
        let shear = 3.0;
        let d = disc([4, 8, 4], [true, false, true], nu);
        let mut s = FlowState::zeros(d.n_leaves());
        for (i, w) in s.w.iter_mut().enumerate() {
            w[IU] = shear * d.topo.centroid[i][1];
        }
        let b = ke_budget(&snap(&s, 0.0), &snap(&s, 0.1), &snap(&s, 0.2), &d).unwrap();
        let mut stats = RunningStats::new(d.n_leaves());
        stats
            .accumulate(&snap(&s, 0.0), &d.strain_work(&s))
            .unwrap();
        let den = strain_dissipation_denominator(&stats, &d.topo, DENOMINATOR_FLOOR);
        let cols = spanwise_average(&d.topo.centroid.iter().map(|c| c[1]).collect::<Vec<_>>(), &d.topo);
        for i in 0..d.n_leaves() {
            let y = d.topo.centroid[i][1];
            if y > 0.125 && y < 0.875 {
                assert!((b.eps_nu[i] - nu * shear * shear).abs() < 1e-12);
            }
        }
        for (c, y) in cols.iter().enumerate() {
            if *y > 0.125 && *y < 0.875 {
                assert!((den.value[c] - shear * shear).abs() < 1e-12);
                assert!(!den.flagged[c]);
            }
        }
    }

    #[test]
    fn quiescent_denominator_is_flagged() {
        let d = disc([2, 2, 2], [true; 3], 0.0);
        let mut stats = RunningStats::new(d.n_leaves());
        let s = crate::solver::cases::uniform(&d.topo, 0.0, [2.0, 0.0, 0.0]);
        stats.accumulate(&snap(&s, 0.0), &d.strain_work(&s)).unwrap();
        let den = strain_dissipation_denominator(&stats, &d.topo, DENOMINATOR_FLOOR);
        assert!(den.value.iter().all(|v| *v == 0.0));
        assert!(den.flagged.iter().all(|f| *f));
    }

    #[test]
    fn uneven_spacing_is_rejected() {
        let d = disc([2, 2, 2], [true; 3], 0.0);
        let s = FlowState::zeros(d.n_leaves());
        let r = ke_budget(&snap(&s, 0.0), &snap(&s, 0.1), &snap(&s, 0.25), &d);
        assert!(matches!(r, Err(Error::Budget(_))));
    }

    #[test]
    fn mean_dissipation_examples() {
        let d = disc([2, 2, 2], [true; 3], 0.0);
        let n = d.n_leaves();
        let m = mean_dissipation(&[vec![-0.1; n], vec![-0.1; n]], &d.topo).unwrap();
        assert!(m.eps_bar.iter().all(|x| (x + 0.1).abs() < 1e-15));
        assert!(m.eps_bar_pos.iter().all(|x| *x == 0.0));
        let m = mean_dissipation(&[vec![0.3; n], vec![-0.3; n]], &d.topo).unwrap();
        assert!(m.eps_bar.iter().all(|x| x.abs() < 1e-15));
        assert!(m.eps_bar_pos.iter().all(|x| *x == 0.0 || x.abs() < 1e-15));
        let m = mean_dissipation(&[vec![0.1; n], vec![0.3; n]], &d.topo).unwrap();
        for (a, b) in m.eps_bar.iter().zip(&m.eps_bar_pos) {
            assert!((a - 0.2).abs() < 1e-15);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn no_fluctuations_give_an_empty_tke_budget() {
        let d = disc([4, 4, 4], [true, false, true], 0.01);
        let mut s = FlowState::zeros(d.n_leaves());
        for (i, w) in s.w.iter_mut().enumerate() {
            let c = d.topo.centroid[i];
            *w = [c[0], c[1] * (1.0 - c[1]), 0.1 * c[2], 0.0, 0.0];
        }
        let mut stats = RunningStats::new(d.n_leaves());
        for t in [0.0, 0.1, 0.2] {
            stats.accumulate(&snap(&s, t), &d.strain_work(&s)).unwrap();
        }
        let b = tke_budget(&snap(&s, 0.0), &snap(&s, 0.1), &snap(&s, 0.2), &stats, &d).unwrap();
        for v in [&b.k_t, &b.f_k, &b.f_ac, &b.f_nu, &b.production, &b.eps_nu, &b.eps_inter, &b.eps_n] {
            assert!(v.iter().all(|x| x.abs() < 1e-13), "{v:?}");
        }
    }

    #[test]
    fn empty_statistics_are_rejected() {
        let d = disc([2, 2, 2], [true; 3], 0.0);
        let s = FlowState::zeros(d.n_leaves());
        let stats = RunningStats::new(d.n_leaves());
        let r = tke_budget(&snap(&s, 0.0), &snap(&s, 0.1), &snap(&s, 0.2), &stats, &d);
        assert!(matches!(r, Err(Error::Budget(_))));
    }
}
