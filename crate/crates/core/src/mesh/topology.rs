//! Leaf-level face lists used by the discrete operators.
//!
//! Interior faces are oriented from the minus side (`left`) to the plus side
//! (`right`) of their axis. Where a coarse leaf meets finer ones, one face is
//! created per fine leaf, so the coarse face flux is the sum of the fine-face
//! fluxes.

use crate::mesh::{geometry, CellId, Mesh, Neighbor};
use crate::vec3::{add, norm, scale, sub, Vec3};

/// Weighted combination of up to four leaves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub len: u8,
    pub idx: [u32; 4],
    pub w: [f64; 4],
}

impl Stencil {
    fn single(i: u32) -> Self {
        Stencil {
            len: 1,
            idx: [i, 0, 0, 0],
            w: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Linear extrapolation `2 a - b`.
    fn extrapolate(a: u32, b: u32) -> Self {
        Stencil {
            len: 2,
            idx: [a, b, 0, 0],
            w: [2.0, -1.0, 0.0, 0.0],
        }
    }

    #[inline]
    pub fn apply<T: Copy>(&self, data: &[T], mut f: impl FnMut(T, f64)) {
        for k in 0..self.len as usize {
            f(data[self.idx[k] as usize], self.w[k]);
        }
    }

    #[inline]
    pub fn eval_by(&self, get: impl Fn(usize) -> f64) -> f64 {
        let mut s = 0.0;
        for k in 0..self.len as usize {
            s += self.w[k] * get(self.idx[k] as usize);
        }
        s
    }

    #[inline]
    pub fn eval(&self, data: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.len as usize {
            s += self.w[k] * data[self.idx[k] as usize];
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorFace {
    pub left: u32,
    pub right: u32,
    pub axis: u8,
    /// Area vector pointing from left to right.
    pub area: Vec3,
    pub center: Vec3,
    /// Centroid of right minus centroid of left, periodic shift included.
    pub delta: Vec3,
    /// Interpolation weight of the left cell; the right one gets `1 - w_left`.
    pub w_left: f64,
    /// Minus-side neighbor of `left` along the axis.
    pub far_left: Stencil,
    /// Plus-side neighbor of `right` along the axis.
    pub far_right: Stencil,
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub cell: u32,
    /// Face index `2*axis + side` on the owning cell.
    pub side: u8,
    /// Outward area vector.
    pub area: Vec3,
    pub center: Vec3,
    /// Vector from the cell centroid to its mirror image across the face.
    pub delta: Vec3,
    pub level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceRef {
    /// `sign` is +1 when the cell is the face's left side.
    Interior { face: u32, sign: f64 },
    Boundary(u32),
}

/// Leaf numbering, metrics and faces of one mesh state.
#[derive(Debug, Clone)]
pub struct Topology {
    pub leaves: Vec<CellId>,
    /// Leaf index of each cell id, `u32::MAX` for interior tree nodes.
    pub leaf_of: Vec<u32>,
    pub volume: Vec<f64>,
    pub centroid: Vec<Vec3>,
    pub level: Vec<u8>,
    pub column: Vec<u32>,
    pub n_columns: usize,
    pub interior: Vec<InteriorFace>,
    pub boundary: Vec<BoundaryFace>,
    cell_face_offsets: Vec<u32>,
    cell_face_refs: Vec<FaceRef>,
    pub max_level: u8,
    pub is_2d: bool,
}

impl Topology {
    pub fn build(mesh: &Mesh) -> Self {
        let leaves = mesh.leaves();
        let mut leaf_of = vec![u32::MAX; mesh.cells().len()];
        for (i, &c) in leaves.iter().enumerate() {
            leaf_of[c as usize] = i as u32;
        }
        let li = |c: CellId| leaf_of[c as usize];
        let n = leaves.len();
        let mut volume = Vec::with_capacity(n);
        let mut centroid = Vec::with_capacity(n);
        let mut level = Vec::with_capacity(n);
        let mut column = Vec::with_capacity(n);
        for &c in &leaves {
            let cell = mesh.cell(c);
            volume.push(cell.volume);
            centroid.push(cell.centroid);
            level.push(cell.level);
            column.push(mesh.column_index(c) as u32);
        }

        let far = |cell: CellId, face: usize, me: u32, other: u32| -> Stencil {
            match mesh.leaf_neighbors(cell, face) {
                Neighbor::Same(n) | Neighbor::Coarser(n) => Stencil::single(li(n)),
                Neighbor::Finer(ch) => {
                    let total: f64 = ch.iter().map(|c| mesh.cell(*c).volume).sum();
                    let mut s = Stencil {
                        len: ch.len().min(4) as u8,
                        idx: [0; 4],
                        w: [0.0; 4],
                    };
                    for (k, c) in ch.iter().take(4).enumerate() {
                        s.idx[k] = li(*c);
                        s.w[k] = mesh.cell(*c).volume / total;
                    }
                    s
                }
                Neighbor::Boundary => Stencil::extrapolate(me, other),
            }
        };

        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for &c in &leaves {
            let cell = mesh.cell(c);
            for f in 0..mesh.n_active_faces() {
                let axis = f / 2;
                let plus = f % 2 == 1;
                let (s_out, center) = geometry::face_area(&cell.vertices, f);
                let (left, right, area) = match mesh.leaf_neighbors(c, f) {
                    Neighbor::Boundary => {
                        let d = scale(sub(center, cell.centroid), 2.0);
                        boundary.push(BoundaryFace {
                            cell: li(c),
                            side: f as u8,
                            area: s_out,
                            center,
                            delta: d,
                            level: cell.level,
                        });
                        continue;
                    }
                    Neighbor::Finer(_) => continue,
                    Neighbor::Same(nb) => {
                        if !plus {
                            continue;
                        }
                        (c, nb, s_out)
                    }
                    Neighbor::Coarser(nb) => {
                        if plus {
                            (c, nb, s_out)
                        } else {
                            (nb, c, scale(s_out, -1.0))
                        }
                    }
                };
                let lc = mesh.cell(left);
                let rc = mesh.cell(right);
                let mut delta = sub(rc.centroid, lc.centroid);
                if mesh.crosses_periodic(left, 2 * axis + 1) {
                    delta = add(delta, mesh.base().period(axis));
                }
                let dl = norm(sub(center, lc.centroid));
                let dr = norm(sub(add(lc.centroid, delta), center));
                let w_left = if dl + dr > 0.0 { dr / (dl + dr) } else { 0.5 };
                let (l, r) = (li(left), li(right));
                interior.push(InteriorFace {
                    left: l,
                    right: r,
                    axis: axis as u8,
                    area,
                    center,
                    delta,
                    w_left,
                    far_left: far(left, 2 * axis, l, r),
                    far_right: far(right, 2 * axis + 1, r, l),
                    level: lc.level.max(rc.level),
                });
            }
        }

        let mut per_cell: Vec<Vec<FaceRef>> = vec![Vec::with_capacity(6); n];
        for (k, f) in interior.iter().enumerate() {
            per_cell[f.left as usize].push(FaceRef::Interior {
                face: k as u32,
                sign: 1.0,
            });
            per_cell[f.right as usize].push(FaceRef::Interior {
                face: k as u32,
                sign: -1.0,
            });
        }
        for (k, f) in boundary.iter().enumerate() {
            per_cell[f.cell as usize].push(FaceRef::Boundary(k as u32));
        }
        let mut cell_face_offsets = Vec::with_capacity(n + 1);
        let mut cell_face_refs = Vec::with_capacity(interior.len() * 2 + boundary.len());
        cell_face_offsets.push(0);
        for refs in per_cell {
            cell_face_refs.extend(refs);
            cell_face_offsets.push(cell_face_refs.len() as u32);
        }

        Topology {
            max_level: level.iter().copied().max().unwrap_or(0),
            leaves,
            leaf_of,
            volume,
            centroid,
            level,
            column,
            n_columns: mesh.n_columns(),
            interior,
            boundary,
            cell_face_offsets,
            cell_face_refs,
            is_2d: mesh.is_2d(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Faces touching leaf `i`, in a fixed order.
    #[inline]
    pub fn faces_of(&self, i: usize) -> &[FaceRef] {
        let a = self.cell_face_offsets[i] as usize;
        let b = self.cell_face_offsets[i + 1] as usize;
        &self.cell_face_refs[a..b]
    }

    /// Volume of each base column.
    pub fn column_volumes(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_columns];
        for (i, c) in self.column.iter().enumerate() {
            v[*c as usize] += self.volume[i];
        }
        v
    }

    /// Volume-weighted centroid of each base column.
    pub fn column_centroids(&self) -> Vec<Vec3> {
        let vol = self.column_volumes();
        let mut c = vec![[0.0; 3]; self.n_columns];
        for (i, col) in self.column.iter().enumerate() {
            let k = *col as usize;
            c[k] = add(c[k], scale(self.centroid[i], self.volume[i] / vol[k]));
        }
        c
    }

    pub fn total_volume(&self) -> f64 {
        self.volume.iter().sum()
    }
}
