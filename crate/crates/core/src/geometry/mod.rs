//! Tetrahedral meshes, fibre architecture, normalized ventricular
//! coordinates, and body-surface electrode placement.
//!
//! Two generators are provided: a rectangular slab (regular grid, six
//! tetrahedra per cube) for verification work, and an idealized
//! biventricular shape (two truncated thick-walled ellipsoids sharing a
//! septum) for anatomy-like runs. Both attach per-element orthonormal fibre
//! frames and per-node coordinates (apex-to-base `ab`, transmural `tm`,
//! transventricular `tv`, posterior-to-anterior `pa`), each normalized to
//! attain 0 and 1 on the generated mesh.

mod biventricular;
mod electrodes;
mod slab;

pub use biventricular::{generate_biventricular, BivShape};
pub use electrodes::default_electrodes;
pub use slab::generate_slab;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// An edge incident to a node, with the cached offset to the neighbour.
#[derive(Debug, Clone)]
pub struct Neighbour {
    pub node: usize,
    /// Offset from the owning node to `node`, cm.
    pub offset: Vector3<f64>,
    /// Edge length, cm.
    pub length: f64,
}

/// Conforming tetrahedral mesh with cached volumes and adjacency.
#[derive(Debug, Clone)]
pub struct TetMesh {
    nodes: Vec<Point3<f64>>,
    tets: Vec<[usize; 4]>,
    volumes: Vec<f64>,
    adjacency: Vec<Vec<Neighbour>>,
    node_tets: Vec<Vec<u32>>,
}

impl TetMesh {
    /// Builds a mesh from raw arrays, validating element quality and
    /// connectivity bookkeeping.
    pub fn new(nodes: Vec<Point3<f64>>, tets: Vec<[usize; 4]>) -> Result<Self> {
        if nodes.len() < 4 {
            return Err(Error::Mesh(format!("need at least 4 nodes, got {}", nodes.len())));
        }
        if tets.is_empty() {
            return Err(Error::Mesh("mesh has no tetrahedra".into()));
        }
        let mut volumes = Vec::with_capacity(tets.len());
        for (e, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v >= nodes.len() {
                    return Err(Error::Mesh(format!("tet {e} references node {v} out of range")));
                }
            }
            let vol = signed_volume(&nodes, tet);
            if !(vol > 0.0) {
                return Err(Error::Mesh(format!(
                    "tet {e} has non-positive volume {vol:.3e} (inverted or degenerate)"
                )));
            }
            volumes.push(vol);
        }

        let mut node_tets = vec![Vec::new(); nodes.len()];
        for (e, tet) in tets.iter().enumerate() {
            for &v in tet {
                node_tets[v].push(e as u32);
            }
        }
        if let Some(orphan) = node_tets.iter().position(|t| t.is_empty()) {
            return Err(Error::Mesh(format!("node {orphan} belongs to no tetrahedron")));
        }

        // Undirected edge set from element edges, stored symmetrically.
        let mut adjacency: Vec<Vec<Neighbour>> = vec![Vec::new(); nodes.len()];
        let mut seen: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for tet in &tets {
            for i in 0..3 {
                for j in (i + 1)..4 {
                    let (a, b) = (tet[i].min(tet[j]), tet[i].max(tet[j]));
                    if seen[a].contains(&b) {
                        continue;
                    }
                    seen[a].push(b);
                    let offset = nodes[b] - nodes[a];
                    let length = offset.norm();
                    if !(length > 0.0) {
                        return Err(Error::Mesh(format!("zero-length edge between nodes {a} and {b}")));
                    }
                    adjacency[a].push(Neighbour { node: b, offset, length });
                    adjacency[b].push(Neighbour { node: a, offset: -offset, length });
                }
            }
        }
        for nbrs in &mut adjacency {
            nbrs.sort_by_key(|n| n.node);
        }

        Ok(Self { nodes, tets, volumes, adjacency, node_tets })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn nodes(&self) -> &[Point3<f64>] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    /// Element volumes, cm^3.
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Edges incident to `node`, sorted by neighbour index.
    pub fn neighbours(&self, node: usize) -> &[Neighbour] {
        &self.adjacency[node]
    }

    /// Elements incident to `node`.
    pub fn tets_of(&self, node: usize) -> &[u32] {
        &self.node_tets[node]
    }

    pub fn centroid(&self, tet: usize) -> Point3<f64> {
        let [a, b, c, d] = self.tets[tet];
        Point3::from(
            (self.nodes[a].coords + self.nodes[b].coords + self.nodes[c].coords + self.nodes[d].coords)
                / 4.0,
        )
    }

    /// Axis-aligned bounding box (min corner, max corner).
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = self.nodes[0];
        let mut hi = self.nodes[0];
        for p in &self.nodes {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Indices of nodes in the largest connected component (ascending).
    pub fn largest_component(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut comp = vec![usize::MAX; n];
        let mut best: (usize, usize) = (0, 0); // (size, id)
        let mut id = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = id;
            let mut size = 0;
            while let Some(v) = stack.pop() {
                size += 1;
                for nb in &self.adjacency[v] {
                    if comp[nb.node] == usize::MAX {
                        comp[nb.node] = id;
                        stack.push(nb.node);
                    }
                }
            }
            if size > best.0 {
                best = (size, id);
            }
            id += 1;
        }
        (0..n).filter(|&v| comp[v] == best.1).collect()
    }
}

fn signed_volume(nodes: &[Point3<f64>], tet: &[usize; 4]) -> f64 {
    let a = nodes[tet[0]];
    let b = nodes[tet[1]] - a;
    let c = nodes[tet[2]] - a;
    let d = nodes[tet[3]] - a;
    b.cross(&c).dot(&d) / 6.0
}

/// Per-element orthonormal (fibre, sheet, sheet-normal) frames.
#[derive(Debug, Clone)]
pub struct FiberField {
    pub f: Vec<Vector3<f64>>,
    pub s: Vec<Vector3<f64>>,
    pub n: Vec<Vector3<f64>>,
}

impl FiberField {
    pub fn new(f: Vec<Vector3<f64>>, s: Vec<Vector3<f64>>, n: Vec<Vector3<f64>>) -> Result<Self> {
        if f.len() != s.len() || f.len() != n.len() {
            return Err(Error::invalid("fibre/sheet/normal arrays differ in length"));
        }
        let field = Self { f, s, n };
        field.validate_orthonormal()?;
        Ok(field)
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    fn validate_orthonormal(&self) -> Result<()> {
        const TOL: f64 = 1e-6;
        for e in 0..self.f.len() {
            let (f, s, n) = (self.f[e], self.s[e], self.n[e]);
            let ok = (f.norm() - 1.0).abs() < TOL
                && (s.norm() - 1.0).abs() < TOL
                && (n.norm() - 1.0).abs() < TOL
                && f.dot(&s).abs() < TOL
                && f.dot(&n).abs() < TOL
                && s.dot(&n).abs() < TOL;
            if !ok {
                return Err(Error::invalid(format!("element {e}: frame is not orthonormal")));
            }
        }
        Ok(())
    }
}

/// Per-node normalized coordinates, each in [0, 1].
#[derive(Debug, Clone)]
pub struct VentricularCoords {
    pub ab: Vec<f64>,
    pub tm: Vec<f64>,
    pub tv: Vec<f64>,
    pub pa: Vec<f64>,
}

impl VentricularCoords {
    pub fn validate(&self, node_count: usize) -> Result<()> {
        for (name, v) in [("ab", &self.ab), ("tm", &self.tm), ("tv", &self.tv), ("pa", &self.pa)] {
            if v.len() != node_count {
                return Err(Error::invalid(format!(
                    "coordinate {name} has {} entries for {node_count} nodes",
                    v.len()
                )));
            }
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!("coordinate {name} leaves [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Rescales `v` in place so min -> 0 and max -> 1; leaves a constant array at 0.5.
pub(crate) fn min_max_normalize(v: &mut [f64]) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        v.iter_mut().for_each(|x| *x = 0.5);
        return;
    }
    let inv = 1.0 / (hi - lo);
    v.iter_mut().for_each(|x| *x = ((*x - lo) * inv).clamp(0.0, 1.0));
}

/// Standard-lead electrode positions: three limb electrodes and V1-V6.
#[derive(Debug, Clone)]
pub struct ElectrodeSet {
    pub la: Point3<f64>,
    pub ra: Point3<f64>,
    pub ll: Point3<f64>,
    pub v: [Point3<f64>; 6],
}

impl ElectrodeSet {
    /// Electrode potentials are evaluated in this fixed order.
    pub const NAMES: [&'static str; 9] = ["LA", "RA", "LL", "V1", "V2", "V3", "V4", "V5", "V6"];

    pub fn positions(&self) -> [Point3<f64>; 9] {
        [
            self.la, self.ra, self.ll, self.v[0], self.v[1], self.v[2], self.v[3], self.v[4],
            self.v[5],
        ]
    }
}
