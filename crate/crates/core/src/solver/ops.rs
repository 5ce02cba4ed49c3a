//! Discrete operators shared by the flow solver and the budget evaluation.
//!
//! Everything that turns cell values into face fluxes lives here so that the
//! budget terms go through exactly the kernels the solver integrates with.

use crate::mesh::topology::{BoundaryFace, FaceRef, InteriorFace};
use crate::mesh::Topology;
use crate::vec3::{add, dot, scale, Mat3, Vec3};

/// Transport coefficients of one interior face, derived from the flow state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FaceCoeffs {
    /// Face normal velocity times area, `u_f . S`.
    pub un: f64,
    /// Spectral radius times area.
    pub lam: f64,
    pub eps2: f64,
    pub eps4: f64,
}

/// Interpolated face value.
#[inline]
pub fn face_value(f: &InteriorFace, l: f64, r: f64) -> f64 {
    f.w_left * l + (1.0 - f.w_left) * r
}

#[inline]
pub fn face_value3(f: &InteriorFace, l: Vec3, r: Vec3) -> Vec3 {
    add(scale(l, f.w_left), scale(r, 1.0 - f.w_left))
}

/// Blended second/fourth-difference dissipation flux for one scalar.
#[inline]
pub fn dissipation(f: &InteriorFace, c: &FaceCoeffs, phi: &[f64]) -> f64 {
    let l = phi[f.left as usize];
    let r = phi[f.right as usize];
    let mut d = 0.0;
    if c.eps2 != 0.0 {
        d += c.eps2 * (r - l);
    }
    if c.eps4 != 0.0 {
        let ll = f.far_left.eval(phi);
        let rr = f.far_right.eval(phi);
        d -= c.eps4 * (rr - 3.0 * r + 3.0 * l - ll);
    }
    c.lam * d
}

/// Convective face flux of a transported scalar: central value times the
/// normal velocity, minus artificial dissipation.
#[inline]
pub fn transport_flux(f: &InteriorFace, c: &FaceCoeffs, phi: &[f64]) -> f64 {
    face_value(f, phi[f.left as usize], phi[f.right as usize]) * c.un - dissipation(f, c, phi)
}

/// Face gradient: interpolated cell gradients with the normal component
/// replaced by the compact two-point difference.
#[inline]
pub fn face_gradient(f: &InteriorFace, gl: Vec3, gr: Vec3, l: f64, r: f64) -> Vec3 {
    let g = face_value3(f, gl, gr);
    corrected(g, f.delta, r - l)
}

#[inline]
pub fn boundary_face_gradient(b: &BoundaryFace, gc: Vec3, c: f64, ghost: f64) -> Vec3 {
    corrected(gc, b.delta, ghost - c)
}

#[inline]
fn corrected(g: Vec3, d: Vec3, jump: f64) -> Vec3 {
    let dd = dot(d, d);
    if dd == 0.0 {
        return g;
    }
    let len = dd.sqrt();
    let e = scale(d, 1.0 / len);
    let fix = jump / len - dot(g, e);
    add(g, scale(e, fix))
}

/// Green-Gauss cell gradient of a scalar. `ghost` returns the ghost value
/// behind a boundary face given the owning cell's value.
pub fn gradient_scalar(
    topo: &Topology,
    phi: &[f64],
    ghost: impl Fn(&BoundaryFace, usize, f64) -> f64,
) -> Vec<Vec3> {
    (0..topo.n_leaves())
        .map(|i| gradient_scalar_at(topo, phi, &ghost, i))
        .collect()
}

#[inline]
pub fn gradient_scalar_at(
    topo: &Topology,
    phi: &[f64],
    ghost: &impl Fn(&BoundaryFace, usize, f64) -> f64,
    i: usize,
) -> Vec3 {
    let mut g = [0.0; 3];
    for r in topo.faces_of(i) {
        match *r {
            FaceRef::Interior { face, sign } => {
                let f = &topo.interior[face as usize];
                let v = face_value(f, phi[f.left as usize], phi[f.right as usize]) * sign;
                g = add(g, scale(f.area, v));
            }
            FaceRef::Boundary(k) => {
                let b = &topo.boundary[k as usize];
                let v = 0.5 * (phi[i] + ghost(b, i, phi[i]));
                g = add(g, scale(b.area, v));
            }
        }
    }
    scale(g, 1.0 / topo.volume[i])
}

/// Green-Gauss gradient of a vector field, `g[i][a][b] = d u_a / d x_b`.
pub fn gradient_vector_at(
    topo: &Topology,
    u: &[Vec3],
    ghost: &impl Fn(&BoundaryFace, usize, Vec3) -> Vec3,
    i: usize,
) -> Mat3 {
    let mut g = [[0.0; 3]; 3];
    let mut acc = |v: Vec3, s: Vec3| {
        for a in 0..3 {
            for b in 0..3 {
                g[a][b] += v[a] * s[b];
            }
        }
    };
    for r in topo.faces_of(i) {
        match *r {
            FaceRef::Interior { face, sign } => {
                let f = &topo.interior[face as usize];
                let v = face_value3(f, u[f.left as usize], u[f.right as usize]);
                acc(v, scale(f.area, sign));
            }
            FaceRef::Boundary(k) => {
                let b = &topo.boundary[k as usize];
                let v = scale(add(u[i], ghost(b, i, u[i])), 0.5);
                acc(v, b.area);
            }
        }
    }
    let inv = 1.0 / topo.volume[i];
    for row in g.iter_mut() {
        for x in row.iter_mut() {
            *x *= inv;
        }
    }
    g
}

pub fn gradient_vector(
    topo: &Topology,
    u: &[Vec3],
    ghost: impl Fn(&BoundaryFace, usize, Vec3) -> Vec3,
) -> Vec<Mat3> {
    (0..topo.n_leaves())
        .map(|i| gradient_vector_at(topo, u, &ghost, i))
        .collect()
}

/// Divergence `(1/V) sum_f F_f` of per-face fluxes, with interior fluxes
/// oriented left to right and boundary fluxes outward.
pub fn divergence(topo: &Topology, interior: &[f64], boundary: &[f64]) -> Vec<f64> {
    (0..topo.n_leaves())
        .map(|i| {
            let mut s = 0.0;
            for r in topo.faces_of(i) {
                match *r {
                    FaceRef::Interior { face, sign } => s += sign * interior[face as usize],
                    FaceRef::Boundary(k) => s += boundary[k as usize],
                }
            }
            s / topo.volume[i]
        })
        .collect()
}

/// Laplacian through the viscous face-gradient stencil.
pub fn laplacian(
    topo: &Topology,
    phi: &[f64],
    ghost: impl Fn(&BoundaryFace, usize, f64) -> f64,
) -> Vec<f64> {
    let grad = gradient_scalar(topo, phi, &ghost);
    let fi: Vec<f64> = topo
        .interior
        .iter()
        .map(|f| {
            let (l, r) = (f.left as usize, f.right as usize);
            dot(face_gradient(f, grad[l], grad[r], phi[l], phi[r]), f.area)
        })
        .collect();
    let fb: Vec<f64> = topo
        .boundary
        .iter()
        .map(|b| {
            let c = b.cell as usize;
            let g = ghost(b, c, phi[c]);
            dot(boundary_face_gradient(b, grad[c], phi[c], g), b.area)
        })
        .collect();
    divergence(topo, &fi, &fb)
}
