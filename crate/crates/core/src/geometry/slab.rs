//! Regular slab generator: grid nodes, six tetrahedra per cube.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

use super::{min_max_normalize, FiberField, TetMesh, VentricularCoords};

/// The six axis-insertion orders that tile a cube with tetrahedra sharing
/// the main diagonal (0,0,0)-(1,1,1). Neighbouring cubes decompose
/// identically, so shared faces match.
pub(super) const CUBE_PATHS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Generates a rectangular slab of `nx * ny * nz` nodes with uniform
/// `spacing` (cm) and uniform in-plane fibres rotated by `fibre_angle_deg`
/// from +x towards +y (sheet-normal along +z).
///
/// Coordinates: `ab` tracks z, `tm` tracks y, and `tv`/`pa` both track x,
/// each normalized to [0, 1] over the slab.
pub fn generate_slab(
    nx: usize,
    ny: usize,
    nz: usize,
    spacing: f64,
    fibre_angle_deg: f64,
) -> Result<(TetMesh, FiberField, VentricularCoords)> {
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::invalid(format!(
            "slab needs at least 2 nodes per axis, got ({nx}, {ny}, {nz})"
        )));
    }
    if !(spacing > 0.0) {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
    }

    let index = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut nodes = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                nodes.push(Point3::new(i as f64 * spacing, j as f64 * spacing, k as f64 * spacing));
            }
        }
    }

    let mut tets = Vec::with_capacity(6 * (nx - 1) * (ny - 1) * (nz - 1));
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = [i, j, k];
                for path in CUBE_PATHS {
                    // Walk from the low corner to the high corner, flipping
                    // one axis at a time.
                    let mut steps = [[0usize; 3]; 4];
                    for (s, &axis) in path.iter().enumerate() {
                        steps[s + 1] = steps[s];
                        steps[s + 1][axis] = 1;
                    }
                    let mut tet = [0usize; 4];
                    for (v, d) in steps.iter().enumerate() {
                        tet[v] = index(corner[0] + d[0], corner[1] + d[1], corner[2] + d[2]);
                    }
                    // Odd axis permutations invert orientation; swap to fix.
                    let perm_odd = is_odd_permutation(path);
                    if perm_odd {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    let mesh = TetMesh::new(nodes, tets)?;

    let angle = fibre_angle_deg.to_radians();
    let f = Vector3::new(angle.cos(), angle.sin(), 0.0);
    let s = Vector3::new(-angle.sin(), angle.cos(), 0.0);
    let n = Vector3::new(0.0, 0.0, 1.0);
    let count = mesh.tet_count();
    let fibres = FiberField::new(vec![f; count], vec![s; count], vec![n; count])?;

    let mut ab = Vec::with_capacity(mesh.node_count());
    let mut tm = Vec::with_capacity(mesh.node_count());
    let mut tv = Vec::with_capacity(mesh.node_count());
    for p in mesh.nodes() {
        ab.push(p.z);
        tm.push(p.y);
        tv.push(p.x);
    }
    min_max_normalize(&mut ab);
    min_max_normalize(&mut tm);
    min_max_normalize(&mut tv);
    let pa = tv.clone();
    let coords = VentricularCoords { ab, tm, tv, pa };
    coords.validate(mesh.node_count())?;

    Ok((mesh, fibres, coords))
}

pub(super) fn is_odd_permutation(p: [usize; 3]) -> bool {
    // Count inversions of a 3-permutation.
    let mut inv = 0;
    for i in 0..3 {
        for j in (i + 1)..3 {
            if p[i] > p[j] {
                inv += 1;
            }
        }
    }
    inv % 2 == 1
}
