//! Initial conditions.

use super::{Cons, FlowState};
use crate::mesh::{GridConfig, Mapping, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn with_energy(p: f64, u: [f64; 3]) -> Cons {
    [p, u[0], u[1], u[2], 0.5 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2])]
}

/// Two-dimensional Taylor-Green vortex on `[0, 2 pi]^2`, evaluated at
/// centroids.
pub fn taylor_green_2d(topo: &Topology, rho: f64) -> FlowState {
    let mut s = FlowState::zeros(topo.n_leaves());
    for (w, c) in s.w.iter_mut().zip(&topo.centroid) {
        let (x, y) = (c[0], c[1]);
        let u = [x.sin() * y.cos(), -x.cos() * y.sin(), 0.0];
        let p = 0.25 * rho * ((2.0 * x).cos() + (2.0 * y).cos());
        *w = with_energy(p, u);
    }
    s
}

/// Exact decaying 2D Taylor-Green velocity at time `t`.
pub fn taylor_green_2d_exact(x: f64, y: f64, nu: f64, t: f64) -> [f64; 2] {
    let d = (-2.0 * nu * t).exp();
    [x.sin() * y.cos() * d, -x.cos() * y.sin() * d]
}

/// Three-dimensional Taylor-Green vortex on `[0, 2 pi]^3`.
pub fn taylor_green_3d(topo: &Topology, rho: f64) -> FlowState {
    let mut s = FlowState::zeros(topo.n_leaves());
    for (w, c) in s.w.iter_mut().zip(&topo.centroid) {
        let (x, y, z) = (c[0], c[1], c[2]);
        let u = [x.sin() * y.cos() * z.cos(), -x.cos() * y.sin() * z.cos(), 0.0];
        let p = rho / 16.0 * ((2.0 * x).cos() + (2.0 * y).cos()) * ((2.0 * z).cos() + 2.0);
        *w = with_energy(p, u);
    }
    s
}

/// Uniform state everywhere.
pub fn uniform(topo: &Topology, p: f64, u: [f64; 3]) -> FlowState {
    let mut s = FlowState::zeros(topo.n_leaves());
    s.w.iter_mut().for_each(|w| *w = with_energy(p, u));
    s
}

/// Channel between the lower (possibly bumped) wall and the flat upper wall:
/// parabolic profile with bulk velocity `u_bulk` plus seeded random
/// perturbations of relative amplitude `noise`.
pub fn channel(topo: &Topology, grid: &GridConfig, u_bulk: f64, noise: f64, seed: u64) -> FlowState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = FlowState::zeros(topo.n_leaves());
    let y0 = grid.origin[1];
    let ly = grid.extent[1];
    for (w, c) in s.w.iter_mut().zip(&topo.centroid) {
        let yl = match &grid.mapping {
            Mapping::BumpChannel(b) => b.wall_height(c[0] - grid.origin[0]),
            Mapping::Cartesian => 0.0,
        };
        let eta = ((c[1] - y0 - yl) / (ly - yl)).clamp(0.0, 1.0);
        let shape = 4.0 * eta * (1.0 - eta);
        let mut u = [1.5 * u_bulk * shape, 0.0, 0.0];
        for x in u.iter_mut() {
            *x += noise * u_bulk * shape * rng.gen_range(-1.0..1.0);
        }
        *w = with_energy(0.0, u);
    }
    s
}
