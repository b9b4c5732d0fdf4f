//! Idealized biventricular generator.
//!
//! Two truncated thick-walled ellipsoid shells (a thick left ventricle and a
//! thinner right ventricle offset towards +x) are merged into one tissue
//! region; the wall overlap forms the septum. The region is voxelized on a
//! regular lattice at the requested resolution, each kept cube is split into
//! six tetrahedra, and the largest connected component is returned.
//!
//! Coordinates: `ab` tracks z (apex at the bottom, truncation plane at the
//! base), `tm` is the normalized shell parameter of the node's ventricle
//! (0 endocardium, 1 epicardium), `tv` tracks x (towards the right
//! ventricle), `pa` tracks y. Fibres rotate -60 degrees to +60 degrees from
//! endocardium to epicardium within the local tangent plane.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

use super::slab::{is_odd_permutation, CUBE_PATHS};
use super::{min_max_normalize, FiberField, TetMesh, VentricularCoords};

/// Shape parameters for the two-ellipsoid construction. All lengths in cm.
#[derive(Debug, Clone)]
pub struct BivShape {
    pub lv_center: Point3<f64>,
    pub lv_epi_semiaxes: Vector3<f64>,
    /// Endocardial ellipsoid = epicardial semiaxes scaled by this factor.
    pub lv_endo_scale: f64,
    pub rv_center: Point3<f64>,
    pub rv_epi_semiaxes: Vector3<f64>,
    pub rv_endo_scale: f64,
    /// Truncation plane; tissue exists only at z <= base_z.
    pub base_z: f64,
    /// Fibre helix angles at endo/epi, degrees.
    pub fibre_angle_endo_deg: f64,
    pub fibre_angle_epi_deg: f64,
}

impl Default for BivShape {
    fn default() -> Self {
        Self {
            lv_center: Point3::origin(),
            lv_epi_semiaxes: Vector3::new(2.8, 2.8, 5.0),
            lv_endo_scale: 0.65,
            rv_center: Point3::new(1.8, 0.0, 0.0),
            rv_epi_semiaxes: Vector3::new(2.9, 2.4, 4.2),
            rv_endo_scale: 0.82,
            base_z: 0.0,
            fibre_angle_endo_deg: -60.0,
            fibre_angle_epi_deg: 60.0,
        }
    }
}

impl BivShape {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("lv", self.lv_epi_semiaxes), ("rv", self.rv_epi_semiaxes)] {
            if !(v.x > 0.0 && v.y > 0.0 && v.z > 0.0) {
                return Err(Error::invalid(format!("{name} semiaxes must be positive: {v:?}")));
            }
        }
        for (name, s) in [("lv", self.lv_endo_scale), ("rv", self.rv_endo_scale)] {
            if !(0.0 < s && s < 1.0) {
                return Err(Error::invalid(format!("{name}_endo_scale must lie in (0,1), got {s}")));
            }
        }
        Ok(())
    }

    /// Normalized ellipsoidal radius of `p` w.r.t. the LV epicardial family
    /// (1 on the epicardial surface).
    fn lambda_lv(&self, p: &Point3<f64>) -> f64 {
        lambda(p, &self.lv_center, &self.lv_epi_semiaxes)
    }

    fn lambda_rv(&self, p: &Point3<f64>) -> f64 {
        lambda(p, &self.rv_center, &self.rv_epi_semiaxes)
    }

    /// Normalized transmural position in each shell: 0 endo, 1 epi.
    fn shell_params(&self, p: &Point3<f64>) -> (f64, f64) {
        let t_l = (self.lambda_lv(p) - self.lv_endo_scale) / (1.0 - self.lv_endo_scale);
        let t_r = (self.lambda_rv(p) - self.rv_endo_scale) / (1.0 - self.rv_endo_scale);
        (t_l, t_r)
    }

    fn is_tissue(&self, p: &Point3<f64>) -> bool {
        if p.z > self.base_z {
            return false;
        }
        let ll = self.lambda_lv(p);
        if ll < self.lv_endo_scale {
            return false; // LV cavity
        }
        if ll <= 1.0 {
            return true; // LV wall, septum included
        }
        let lr = self.lambda_rv(p);
        lr <= 1.0 && lr >= self.rv_endo_scale // RV free wall
    }

    /// True when the node is attributed to the LV shell (septum counts as LV).
    fn is_lv_region(&self, p: &Point3<f64>) -> bool {
        let (t_l, t_r) = self.shell_params(p);
        band_distance(t_l) <= band_distance(t_r)
    }

    fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (c, s) in [
            (self.lv_center, self.lv_epi_semiaxes),
            (self.rv_center, self.rv_epi_semiaxes),
        ] {
            for k in 0..3 {
                lo[k] = lo[k].min(c[k] - s[k]);
                hi[k] = hi[k].max(c[k] + s[k]);
            }
        }
        hi.z = hi.z.min(self.base_z);
        (lo, hi)
    }
}

fn lambda(p: &Point3<f64>, center: &Point3<f64>, semi: &Vector3<f64>) -> f64 {
    let d = p - center;
    ((d.x / semi.x).powi(2) + (d.y / semi.y).powi(2) + (d.z / semi.z).powi(2)).sqrt()
}

/// Distance of a shell parameter from the wall band [0, 1].
fn band_distance(t: f64) -> f64 {
    (-t).max(t - 1.0).max(0.0)
}

/// Generates the idealized biventricular mesh at `resolution` (cm).
pub fn generate_biventricular(
    resolution: f64,
    shape: &BivShape,
) -> Result<(TetMesh, FiberField, VentricularCoords)> {
    if !(0.05..=0.3).contains(&resolution) {
        return Err(Error::invalid(format!(
            "resolution must lie in [0.05, 0.3] cm, got {resolution}"
        )));
    }
    shape.validate()?;

    let (lo, hi) = shape.bounding_box();
    let ncx = ((hi.x - lo.x) / resolution).ceil() as usize;
    let ncy = ((hi.y - lo.y) / resolution).ceil() as usize;
    let ncz = ((hi.z - lo.z) / resolution).ceil() as usize;
    let (gnx, gny) = (ncx + 1, ncy + 1);
    let grid_id = |i: usize, j: usize, k: usize| i + gnx * (j + gny * k);
    let node_at = |i: usize, j: usize, k: usize| {
        Point3::new(
            lo.x + i as f64 * resolution,
            lo.y + j as f64 * resolution,
            lo.z + k as f64 * resolution,
        )
    };

    // Pass 1: select cubes whose centre is tissue; mark their corner nodes.
    let mut kept_cubes = Vec::new();
    let mut used = vec![false; gnx * gny * (ncz + 1)];
    for k in 0..ncz {
        for j in 0..ncy {
            for i in 0..ncx {
                let centre = Point3::new(
                    lo.x + (i as f64 + 0.5) * resolution,
                    lo.y + (j as f64 + 0.5) * resolution,
                    lo.z + (k as f64 + 0.5) * resolution,
                );
                if !shape.is_tissue(&centre) {
                    continue;
                }
                kept_cubes.push((i, j, k));
                for dk in 0..2 {
                    for dj in 0..2 {
                        for di in 0..2 {
                            used[grid_id(i + di, j + dj, k + dk)] = true;
                        }
                    }
                }
            }
        }
    }
    if kept_cubes.is_empty() {
        return Err(Error::Mesh("no tissue voxels at this resolution".into()));
    }

    // Pass 2: compact node numbering in ascending grid order.
    let mut compact = vec![u32::MAX; used.len()];
    let mut nodes = Vec::new();
    for k in 0..=ncz {
        for j in 0..=ncy {
            for i in 0..=ncx {
                let g = grid_id(i, j, k);
                if used[g] {
                    compact[g] = nodes.len() as u32;
                    nodes.push(node_at(i, j, k));
                }
            }
        }
    }

    let mut tets = Vec::with_capacity(kept_cubes.len() * 6);
    for &(i, j, k) in &kept_cubes {
        for path in CUBE_PATHS {
            let mut steps = [[0usize; 3]; 4];
            for (s, &axis) in path.iter().enumerate() {
                steps[s + 1] = steps[s];
                steps[s + 1][axis] = 1;
            }
            let mut tet = [0usize; 4];
            for (v, d) in steps.iter().enumerate() {
                tet[v] = compact[grid_id(i + d[0], j + d[1], k + d[2])] as usize;
            }
            if is_odd_permutation(path) {
                tet.swap(2, 3);
            }
            tets.push(tet);
        }
    }

    let mesh = TetMesh::new(nodes, tets)?;

    // Keep only the largest connected component (thin walls can shed
    // isolated flaps at coarse resolutions).
    let component = mesh.largest_component();
    let mesh = if component.len() == mesh.node_count() {
        mesh
    } else {
        let mut remap = vec![usize::MAX; mesh.node_count()];
        for (new, &old) in component.iter().enumerate() {
            remap[old] = new;
        }
        let nodes: Vec<_> = component.iter().map(|&v| mesh.nodes()[v]).collect();
        let tets: Vec<[usize; 4]> = mesh
            .tets()
            .iter()
            .filter(|t| t.iter().all(|&v| remap[v] != usize::MAX))
            .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]], remap[t[3]]])
            .collect();
        TetMesh::new(nodes, tets)?
    };

    let fibres = biv_fibres(&mesh, shape)?;
    let coords = biv_coords(&mesh, shape);
    coords.validate(mesh.node_count())?;
    Ok((mesh, fibres, coords))
}

fn biv_coords(mesh: &TetMesh, shape: &BivShape) -> VentricularCoords {
    let n = mesh.node_count();
    let mut ab = Vec::with_capacity(n);
    let mut tv = Vec::with_capacity(n);
    let mut pa = Vec::with_capacity(n);
    let mut tm = vec![0.0; n];
    let mut lv_idx = Vec::new();
    let mut rv_idx = Vec::new();
    for (i, p) in mesh.nodes().iter().enumerate() {
        ab.push(p.z);
        tv.push(p.x);
        pa.push(p.y);
        let (t_l, t_r) = shape.shell_params(p);
        if shape.is_lv_region(p) {
            tm[i] = t_l.clamp(0.0, 1.0);
            lv_idx.push(i);
        } else {
            tm[i] = t_r.clamp(0.0, 1.0);
            rv_idx.push(i);
        }
    }
    min_max_normalize(&mut ab);
    min_max_normalize(&mut tv);
    min_max_normalize(&mut pa);
    // Transmural coordinate spans [0, 1] within each ventricle: 0 on either
    // endocardium, 1 on the epicardium.
    for idx in [&lv_idx, &rv_idx] {
        if idx.is_empty() {
            continue;
        }
        let mut vals: Vec<f64> = idx.iter().map(|&i| tm[i]).collect();
        min_max_normalize(&mut vals);
        for (&i, &v) in idx.iter().zip(&vals) {
            tm[i] = v;
        }
    }
    VentricularCoords { ab, tm, tv, pa }
}

fn biv_fibres(mesh: &TetMesh, shape: &BivShape) -> Result<FiberField> {
    let z_axis = Vector3::new(0.0, 0.0, 1.0);
    let x_axis = Vector3::new(1.0, 0.0, 0.0);
    let mut f = Vec::with_capacity(mesh.tet_count());
    let mut s = Vec::with_capacity(mesh.tet_count());
    let mut n = Vec::with_capacity(mesh.tet_count());
    for e in 0..mesh.tet_count() {
        let c = mesh.centroid(e);
        let (center, semi, t) = if shape.is_lv_region(&c) {
            (shape.lv_center, shape.lv_epi_semiaxes, shape.shell_params(&c).0)
        } else {
            (shape.rv_center, shape.rv_epi_semiaxes, shape.shell_params(&c).1)
        };
        // Transmural (sheet) direction: outward ellipsoid-family gradient.
        let d = c - center;
        let mut sheet = Vector3::new(d.x / (semi.x * semi.x), d.y / (semi.y * semi.y), d.z / (semi.z * semi.z));
        if sheet.norm() < 1e-12 {
            sheet = x_axis; // centroid at the family centre: arbitrary
        }
        let sheet = sheet.normalize();
        // Longitudinal: long-axis projected into the tangent plane.
        let mut long = z_axis - sheet * z_axis.dot(&sheet);
        if long.norm() < 1e-8 {
            long = x_axis - sheet * x_axis.dot(&sheet);
        }
        let long = long.normalize();
        let circ = sheet.cross(&long);
        // Helix angle ramps endo -> epi.
        let tm = t.clamp(0.0, 1.0);
        let alpha = (shape.fibre_angle_endo_deg
            + (shape.fibre_angle_epi_deg - shape.fibre_angle_endo_deg) * tm)
            .to_radians();
        let fibre = circ * alpha.cos() + long * alpha.sin();
        let normal = fibre.cross(&sheet);
        f.push(fibre);
        s.push(sheet);
        n.push(normal);
    }
    FiberField::new(f, s, n)
}
