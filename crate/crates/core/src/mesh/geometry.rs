//! Hexahedron geometry. Vertices are indexed by octant `o = bx + 2*by + 4*bz`.

use crate::vec3::{add, cross, dot, scale, sub, Vec3};

pub type Hex = [Vec3; 8];

#[inline]
fn corner(axis: usize, side: usize, b1: usize, b2: usize) -> usize {
    let a1 = (axis + 1) % 3;
    let a2 = (axis + 2) % 3;
    (side << axis) | (b1 << a1) | (b2 << a2)
}

/// Area vector and center of face `face = 2*axis + side`. The area vector
/// points out of the cell.
pub fn face_area(hex: &Hex, face: usize) -> (Vec3, Vec3) {
    let axis = face / 2;
    let side = face % 2;
    let p00 = hex[corner(axis, side, 0, 0)];
    let p10 = hex[corner(axis, side, 1, 0)];
    let p11 = hex[corner(axis, side, 1, 1)];
    let p01 = hex[corner(axis, side, 0, 1)];
    let mut s = scale(cross(sub(p11, p00), sub(p01, p10)), 0.5);
    if side == 0 {
        s = scale(s, -1.0);
    }
    let c = scale(add(add(p00, p10), add(p11, p01)), 0.25);
    (s, c)
}

/// Volume from the divergence theorem over the six (planar) faces.
pub fn volume(hex: &Hex) -> f64 {
    // shift to the first vertex to limit cancellation
    let o = hex[0];
    let mut v = 0.0;
    for f in 0..6 {
        let (s, c) = face_area(hex, f);
        v += dot(sub(c, o), s);
    }
    v / 3.0
}

pub fn centroid(hex: &Hex) -> Vec3 {
    let mut c = [0.0; 3];
    for p in hex {
        c = add(c, *p);
    }
    scale(c, 0.125)
}

/// Trilinear map of reference coordinates in [0,1]^3 onto the hexahedron.
pub fn trilinear(hex: &Hex, r: Vec3) -> Vec3 {
    let mut p = [0.0; 3];
    for (o, v) in hex.iter().enumerate() {
        let mut w = 1.0;
        for (a, ra) in r.iter().enumerate() {
            w *= if (o >> a) & 1 == 1 { *ra } else { 1.0 - *ra };
        }
        p = add(p, scale(*v, w));
    }
    p
}

/// Sub-hexahedron covering the reference box `[lo, hi]`.
pub fn sub_hex(hex: &Hex, lo: Vec3, hi: Vec3) -> Hex {
    let mut out = [[0.0; 3]; 8];
    for (o, slot) in out.iter_mut().enumerate() {
        let r = [
            if o & 1 == 1 { hi[0] } else { lo[0] },
            if o & 2 == 2 { hi[1] } else { lo[1] },
            if o & 4 == 4 { hi[2] } else { lo[2] },
        ];
        *slot = trilinear(hex, r);
    }
    out
}
