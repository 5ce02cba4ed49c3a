//! Structured base grid with a cell-based octree overlay.
//!
//! Every base cell is the root of its own tree. Cells at level `l` carry integer
//! coordinates on the level-`l` lattice (`nx * 2^l` cells along x, and so on),
//! which makes neighbor lookup and balance checks exact. Children of a cell are
//! stored contiguously; only the first child id is kept on the parent.
//!
//! With `nz == 1` the mesh runs in 2D mode: refinement splits x and y only and
//! the two z faces carry no flux.

pub mod geometry;
pub mod topology;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;
use geometry::Hex;

pub use topology::{BoundaryFace, InteriorFace, Stencil, Topology};

pub type CellId = u32;

/// Highest refinement level the integer lattice supports.
pub const MAX_LEVEL: u8 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingId {
    Cartesian,
    BumpChannel,
}

impl MappingId {
    pub fn code(self) -> u8 {
        match self {
            MappingId::Cartesian => 0,
            MappingId::BumpChannel => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(MappingId::Cartesian),
            1 => Some(MappingId::BumpChannel),
            _ => None,
        }
    }
}

/// Lower-wall bump `y = height * cos^2(pi (x - center) / width)` for
/// `|x - center| < width / 2`, zero elsewhere. `stretch > 0` clusters cells
/// toward both walls with a tanh law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpParams {
    pub height: f64,
    pub center: f64,
    pub width: f64,
    pub stretch: f64,
}

impl BumpParams {
    pub fn wall_height(&self, x: f64) -> f64 {
        let d = x - self.center;
        if self.width > 0.0 && d.abs() < 0.5 * self.width {
            let c = (std::f64::consts::PI * d / self.width).cos();
            self.height * c * c
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mapping {
    Cartesian,
    BumpChannel(BumpParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub extent: Vec3,
    pub mapping: Mapping,
    pub periodic: [bool; 3],
}

impl GridConfig {
    pub fn cartesian(dims: [usize; 3], extent: Vec3, periodic: [bool; 3]) -> Self {
        GridConfig {
            dims,
            origin: [0.0; 3],
            extent,
            mapping: Mapping::Cartesian,
            periodic,
        }
    }
}

/// Structured vertex grid the octree sits on.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseGrid {
    pub dims: [usize; 3],
    pub vertices: Vec<Vec3>,
    pub mapping: MappingId,
    pub periodic: [bool; 3],
}

/// Build the base grid from a configuration.
pub fn build_grid(config: &GridConfig) -> Result<BaseGrid> {
    let [nx, ny, nz] = config.dims;
    if nx < 2 || ny < 2 || nz < 1 {
        return Err(Error::Config(format!(
            "dims must be at least 2 along x and y and 1 along z, got {:?}",
            config.dims
        )));
    }
    if config.extent.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::Config(format!(
            "extents must be positive, got {:?}",
            config.extent
        )));
    }
    let max_cells = 1usize << 26;
    if nx.saturating_mul(ny).saturating_mul(nz) > max_cells {
        return Err(Error::Config(format!("grid {:?} is too large", config.dims)));
    }
    let [x0, y0, z0] = config.origin;
    let [lx, ly, lz] = config.extent;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    let mapping = match config.mapping {
        Mapping::Cartesian => MappingId::Cartesian,
        Mapping::BumpChannel(_) => MappingId::BumpChannel,
    };
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let x = x0 + lx * i as f64 / nx as f64;
                let xi = j as f64 / ny as f64;
                let z = z0 + lz * k as f64 / nz as f64;
                let y = match &config.mapping {
                    Mapping::Cartesian => y0 + ly * xi,
                    Mapping::BumpChannel(b) => {
                        if b.height < 0.0 || b.height >= ly {
                            return Err(Error::Config(format!(
                                "bump height {} must lie in [0, {ly})",
                                b.height
                            )));
                        }
                        let eta = if b.stretch > 0.0 {
                            0.5 * (1.0 + (b.stretch * (2.0 * xi - 1.0)).tanh() / b.stretch.tanh())
                        } else {
                            xi
                        };
                        let yl = b.wall_height(x - x0);
                        y0 + yl + eta * (ly - yl)
                    }
                };
                vertices.push([x, y, z]);
            }
        }
    }
    let grid = BaseGrid {
        dims: config.dims,
        vertices,
        mapping,
        periodic: config.periodic,
    };
    grid.validate()?;
    Ok(grid)
}

impl BaseGrid {
    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_2d(&self) -> bool {
        self.dims[2] == 1
    }

    fn vertex(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let [nx, ny, _] = self.dims;
        self.vertices[i + (nx + 1) * (j + (ny + 1) * k)]
    }

    pub fn cell_hex(&self, i: usize, j: usize, k: usize) -> Hex {
        let mut h = [[0.0; 3]; 8];
        for (o, p) in h.iter_mut().enumerate() {
            *p = self.vertex(i + (o & 1), j + ((o >> 1) & 1), k + ((o >> 2) & 1));
        }
        h
    }

    /// Translation that maps the min boundary plane of `axis` onto the max one.
    pub fn period(&self, axis: usize) -> Vec3 {
        let [nx, ny, nz] = self.dims;
        let hi = match axis {
            0 => self.vertex(nx, 0, 0),
            1 => self.vertex(0, ny, 0),
            _ => self.vertex(0, 0, nz),
        };
        crate::vec3::sub(hi, self.vertex(0, 0, 0))
    }

    /// Check vertex count, Jacobians and periodic consistency.
    pub fn validate(&self) -> Result<()> {
        let [nx, ny, nz] = self.dims;
        if nx < 2 || ny < 2 || nz < 1 {
            return Err(Error::Mesh(format!("invalid dims {:?}", self.dims)));
        }
        let expect = (nx + 1) * (ny + 1) * (nz + 1);
        if self.vertices.len() != expect {
            return Err(Error::Mesh(format!(
                "vertex array has {} entries, expected {expect}",
                self.vertices.len()
            )));
        }
        if self.vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = geometry::volume(&self.cell_hex(i, j, k));
                    if !(v > 0.0) {
                        return Err(Error::Mesh(format!(
                            "degenerate Jacobian at cell ({i},{j},{k}): volume {v}"
                        )));
                    }
                }
            }
        }
        for axis in 0..3 {
            if !self.periodic[axis] || (axis == 2 && self.is_2d()) {
                continue;
            }
            let t = self.period(axis);
            let n = self.dims;
            let tol = 1e-9 * crate::vec3::norm(t);
            for b in 0..=n[(axis + 1) % 3] {
                for c in 0..=n[(axis + 2) % 3] {
                    let mut lo = [0usize; 3];
                    lo[(axis + 1) % 3] = b;
                    lo[(axis + 2) % 3] = c;
                    let mut hi = lo;
                    hi[axis] = n[axis];
                    let d = crate::vec3::sub(
                        self.vertex(hi[0], hi[1], hi[2]),
                        self.vertex(lo[0], lo[1], lo[2]),
                    );
                    if crate::vec3::norm(crate::vec3::sub(d, t)) > tol {
                        return Err(Error::Mesh(format!(
                            "axis {axis} is periodic but boundary planes are not translates"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One node of the octree.
#[derive(Debug, Clone, PartialEq)]
pub struct OctCell {
    pub level: u8,
    pub parent: Option<CellId>,
    pub first_child: Option<CellId>,
    /// Same-level neighbor, or the coarser leaf covering that side.
    pub neighbors: [Option<CellId>; 6],
    pub volume: f64,
    pub centroid: Vec3,
    /// Position on the level lattice.
    pub coords: [u32; 3],
    pub vertices: Hex,
}

impl OctCell {
    pub fn is_leaf(&self) -> bool {
        self.first_child.is_none()
    }
}

/// Grid length scale `h = V^(1/3)` and implicit filter width `Δ = c_filter * h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScale {
    pub h: f64,
    pub delta: f64,
}

/// What lies across one face of a leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Neighbor {
    Boundary,
    Same(CellId),
    Coarser(CellId),
    Finer(Vec<CellId>),
}

/// Outcome of a refinement request.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MeshDelta {
    pub requested: Vec<CellId>,
    /// Extra cells refined to keep face-adjacent leaves within one level.
    pub closure: Vec<CellId>,
    pub first_new: CellId,
    pub n_new: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    base: BaseGrid,
    cells: Vec<OctCell>,
    c_filter: f64,
    index: HashMap<(u8, [u32; 3]), CellId>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.cells == other.cells && self.c_filter == other.c_filter
    }
}

impl Mesh {
    pub fn new(base: BaseGrid, c_filter: f64) -> Result<Self> {
        if !(c_filter >= 1.0) {
            return Err(Error::Config(format!("c_filter must be >= 1, got {c_filter}")));
        }
        base.validate()?;
        let [nx, ny, nz] = base.dims;
        let mut cells = Vec::with_capacity(nx * ny * nz);
        let mut index = HashMap::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let hex = base.cell_hex(i, j, k);
                    let coords = [i as u32, j as u32, k as u32];
                    index.insert((0, coords), cells.len() as CellId);
                    cells.push(OctCell {
                        level: 0,
                        parent: None,
                        first_child: None,
                        neighbors: [None; 6],
                        volume: geometry::volume(&hex),
                        centroid: geometry::centroid(&hex),
                        coords,
                        vertices: hex,
                    });
                }
            }
        }
        let mut mesh = Mesh {
            base,
            cells,
            c_filter,
            index,
        };
        mesh.rebuild_neighbors();
        Ok(mesh)
    }

    pub fn from_config(config: &GridConfig, c_filter: f64) -> Result<Self> {
        Mesh::new(build_grid(config)?, c_filter)
    }

    pub fn base(&self) -> &BaseGrid {
        &self.base
    }

    pub fn cells(&self) -> &[OctCell] {
        &self.cells
    }

    pub fn cell(&self, id: CellId) -> &OctCell {
        &self.cells[id as usize]
    }

    pub fn c_filter(&self) -> f64 {
        self.c_filter
    }

    pub fn is_2d(&self) -> bool {
        self.base.is_2d()
    }

    pub fn n_children(&self) -> usize {
        if self.is_2d() {
            4
        } else {
            8
        }
    }

    /// Faces that carry flux: 4 in 2D mode, 6 otherwise.
    pub fn n_active_faces(&self) -> usize {
        if self.is_2d() {
            4
        } else {
            6
        }
    }

    fn refines_axis(&self, axis: usize) -> bool {
        axis < 2 || !self.is_2d()
    }

    pub fn extent_at(&self, level: u8, axis: usize) -> u64 {
        let n = self.base.dims[axis] as u64;
        if self.refines_axis(axis) {
            n << level
        } else {
            n
        }
    }

    pub fn leaves(&self) -> Vec<CellId> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_leaf())
            .map(|(i, _)| i as CellId)
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_leaf()).count()
    }

    pub fn max_level(&self) -> u8 {
        self.cells
            .iter()
            .filter(|c| c.is_leaf())
            .map(|c| c.level)
            .max()
            .unwrap_or(0)
    }

    pub fn total_leaf_volume(&self) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.is_leaf())
            .map(|c| c.volume)
            .sum()
    }

    pub fn domain_volume(&self) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.level == 0)
            .map(|c| c.volume)
            .sum()
    }

    /// Base-grid `(i, j)` column holding this cell.
    pub fn base_column(&self, id: CellId) -> (usize, usize) {
        let c = self.cell(id);
        (
            (c.coords[0] >> c.level) as usize,
            (c.coords[1] >> c.level) as usize,
        )
    }

    pub fn n_columns(&self) -> usize {
        self.base.dims[0] * self.base.dims[1]
    }

    pub fn column_index(&self, id: CellId) -> usize {
        let (i, j) = self.base_column(id);
        i + self.base.dims[0] * j
    }

    pub fn cell_length_scale(&self, id: CellId) -> CellScale {
        length_scale(self.cell(id).volume, self.c_filter)
    }

    /// Cell covering lattice position `coords` at `level`, wrapping periodic
    /// axes. Returns the deepest existing cell at or above `level`.
    fn covering(&self, level: u8, coords: [i64; 3]) -> Option<CellId> {
        let mut c = [0u32; 3];
        for axis in 0..3 {
            let ext = self.extent_at(level, axis) as i64;
            let mut v = coords[axis];
            if v < 0 || v >= ext {
                if self.base.periodic[axis] && !(axis == 2 && self.is_2d()) {
                    v = v.rem_euclid(ext);
                } else {
                    return None;
                }
            }
            c[axis] = v as u32;
        }
        let mut l = level;
        loop {
            if let Some(id) = self.index.get(&(l, c)) {
                return Some(*id);
            }
            if l == 0 {
                return None;
            }
            l -= 1;
            for axis in 0..3 {
                if self.refines_axis(axis) {
                    c[axis] >>= 1;
                }
            }
        }
    }

    fn compute_neighbors(&self, id: CellId) -> [Option<CellId>; 6] {
        let cell = self.cell(id);
        let mut out = [None; 6];
        for (f, slot) in out.iter_mut().enumerate().take(self.n_active_faces()) {
            let axis = f / 2;
            let mut c = [
                cell.coords[0] as i64,
                cell.coords[1] as i64,
                cell.coords[2] as i64,
            ];
            c[axis] += if f % 2 == 1 { 1 } else { -1 };
            *slot = self.covering(cell.level, c);
        }
        out
    }

    fn rebuild_neighbors(&mut self) {
        let all: Vec<[Option<CellId>; 6]> = (0..self.cells.len() as CellId)
            .map(|id| self.compute_neighbors(id))
            .collect();
        for (cell, n) in self.cells.iter_mut().zip(all) {
            cell.neighbors = n;
        }
    }

    /// Whether crossing `face` of `id` wraps through a periodic boundary.
    pub fn crosses_periodic(&self, id: CellId, face: usize) -> bool {
        let c = self.cell(id);
        let axis = face / 2;
        if face % 2 == 1 {
            c.coords[axis] as u64 + 1 == self.extent_at(c.level, axis)
        } else {
            c.coords[axis] == 0
        }
    }

    /// Leaves across `face` of leaf `id`.
    pub fn leaf_neighbors(&self, id: CellId, face: usize) -> Neighbor {
        let cell = self.cell(id);
        if face >= self.n_active_faces() {
            return Neighbor::Boundary;
        }
        let Some(n) = cell.neighbors[face] else {
            return Neighbor::Boundary;
        };
        let nb = self.cell(n);
        if nb.level < cell.level {
            Neighbor::Coarser(n)
        } else if nb.is_leaf() {
            Neighbor::Same(n)
        } else {
            let axis = face / 2;
            // children of the neighbor on the side facing this cell
            let bit = if face % 2 == 1 { 0 } else { 1 };
            let mut out = Vec::new();
            self.collect_abutting(n, axis, bit, &mut out);
            Neighbor::Finer(out)
        }
    }

    fn collect_abutting(&self, id: CellId, axis: usize, bit: usize, out: &mut Vec<CellId>) {
        let c = self.cell(id);
        match c.first_child {
            None => out.push(id),
            Some(first) => {
                for o in 0..self.n_children() {
                    if (o >> axis) & 1 == bit {
                        self.collect_abutting(first + o as CellId, axis, bit, out);
                    }
                }
            }
        }
    }

    pub fn children(&self, id: CellId) -> Option<std::ops::Range<CellId>> {
        self.cell(id)
            .first_child
            .map(|f| f..f + self.n_children() as CellId)
    }

    /// Leaf-level ancestor chain length; equals `level` for any cell.
    pub fn depth(&self, id: CellId) -> usize {
        let mut n = 0;
        let mut cur = self.cell(id).parent;
        while let Some(p) = cur {
            n += 1;
            cur = self.cell(p).parent;
        }
        n
    }

    /// Cells that must be refined together with `targets` so that no two
    /// face-adjacent leaves end up more than one level apart.
    pub fn balance_closure(&self, targets: &[CellId]) -> Result<BTreeSet<CellId>> {
        let mut set = BTreeSet::new();
        let mut queue = Vec::new();
        for &t in targets {
            self.check_leaf(t)?;
            if set.insert(t) {
                queue.push(t);
            }
        }
        while let Some(c) = queue.pop() {
            for f in 0..self.n_active_faces() {
                if let Neighbor::Coarser(n) = self.leaf_neighbors(c, f) {
                    if set.insert(n) {
                        queue.push(n);
                    }
                }
            }
        }
        Ok(set)
    }

    fn check_leaf(&self, id: CellId) -> Result<()> {
        let Some(c) = self.cells.get(id as usize) else {
            return Err(Error::Tree(format!("cell {id} does not exist")));
        };
        if !c.is_leaf() {
            return Err(Error::Tree(format!("cell {id} is not a leaf")));
        }
        if c.level >= MAX_LEVEL {
            return Err(Error::Tree(format!("cell {id} is already at the maximum level")));
        }
        Ok(())
    }

    /// Refine the given leaves plus whatever 2:1 balance requires.
    pub fn refine(&mut self, targets: &[CellId]) -> Result<MeshDelta> {
        let set = self.balance_closure(targets)?;
        let requested: BTreeSet<CellId> = targets.iter().copied().collect();
        let first_new = self.cells.len() as CellId;
        for &id in &set {
            self.split(id);
        }
        self.rebuild_neighbors();
        Ok(MeshDelta {
            requested: requested.iter().copied().collect(),
            closure: set.difference(&requested).copied().collect(),
            first_new,
            n_new: self.cells.len() - first_new as usize,
        })
    }

    /// Split one leaf, appending its children. Neighbor pointers are left
    /// stale; callers must rebuild them.
    fn split(&mut self, id: CellId) {
        let first = self.cells.len() as CellId;
        let parent = self.cells[id as usize].clone();
        let two_d = self.is_2d();
        for o in 0..self.n_children() {
            let b = [o & 1, (o >> 1) & 1, (o >> 2) & 1];
            let mut lo = [0.0; 3];
            let mut hi = [1.0; 3];
            let mut coords = parent.coords;
            for axis in 0..3 {
                if axis == 2 && two_d {
                    continue;
                }
                lo[axis] = 0.5 * b[axis] as f64;
                hi[axis] = lo[axis] + 0.5;
                coords[axis] = 2 * parent.coords[axis] + b[axis] as u32;
            }
            let hex = geometry::sub_hex(&parent.vertices, lo, hi);
            let level = parent.level + 1;
            self.index.insert((level, coords), self.cells.len() as CellId);
            self.cells.push(OctCell {
                level,
                parent: Some(id),
                first_child: None,
                neighbors: [None; 6],
                volume: geometry::volume(&hex),
                centroid: geometry::centroid(&hex),
                coords,
                vertices: hex,
            });
        }
        self.cells[id as usize].first_child = Some(first);
    }

    /// Replay a split recorded in a tree table; `expected_first` must match
    /// the next free id.
    pub(crate) fn replay_split(&mut self, id: CellId, expected_first: CellId) -> Result<()> {
        self.check_leaf(id)?;
        if self.cells.len() as CellId != expected_first {
            return Err(Error::Tree(format!(
                "cell {id}: first child {expected_first} is not the next free id {}",
                self.cells.len()
            )));
        }
        self.split(id);
        Ok(())
    }

    pub(crate) fn finish_replay(&mut self) {
        self.rebuild_neighbors();
    }

    /// True when every pair of face-adjacent leaves differs by at most one level.
    pub fn is_balanced(&self) -> bool {
        for id in self.leaves() {
            for f in 0..self.n_active_faces() {
                match self.leaf_neighbors(id, f) {
                    Neighbor::Coarser(n) => {
                        if self.cell(id).level - self.cell(n).level > 1 {
                            return false;
                        }
                    }
                    Neighbor::Finer(ch) => {
                        if ch
                            .iter()
                            .any(|c| self.cell(*c).level > self.cell(id).level + 1)
                        {
                            return false;
                        }
                    }
                    _ => {}
                }
            }
        }
        true
    }
}

pub fn length_scale(volume: f64, c_filter: f64) -> CellScale {
    let h = volume.cbrt();
    CellScale {
        h,
        delta: c_filter * h,
    }
}
