//! Virtual-torso electrode placement.
//!
//! Electrodes sit on a box 2.5x the mesh bounding box, centred on the mesh:
//! limb electrodes at corners of the anterior (+y) face, the six precordial
//! electrodes along an arc across that face. The construction is purely
//! relative to the bounding box, so translating the mesh translates every
//! electrode identically.

use nalgebra::Point3;

use crate::error::{Error, Result};

use super::{ElectrodeSet, TetMesh};

/// Expansion factor of the torso box relative to the mesh bounding box.
const TORSO_SCALE: f64 = 2.5;

/// Precordial positions on the anterior face as (x, z) offsets in units of
/// the face's width and height, measured from the face centre. +x is the
/// anatomical right; V1 starts right of the midline and the arc sweeps left
/// and slightly down.
const PRECORDIAL_OFFSETS: [(f64, f64); 6] = [
    (0.08, 0.10),
    (-0.02, 0.10),
    (-0.12, 0.02),
    (-0.22, -0.05),
    (-0.34, -0.07),
    (-0.46, -0.08),
];

/// Places the standard 9 electrodes on a virtual torso box around `mesh`.
pub fn default_electrodes(mesh: &TetMesh) -> Result<ElectrodeSet> {
    let (lo, hi) = mesh.bounding_box();
    let extent = hi - lo;
    if !(extent.x > 0.0 && extent.y > 0.0 && extent.z > 0.0) {
        return Err(Error::invalid("mesh bounding box is degenerate (flat along an axis)"));
    }
    let centre = Point3::from((lo.coords + hi.coords) / 2.0);
    let half = extent * (TORSO_SCALE / 2.0);
    let (bx0, bx1) = (centre.x - half.x, centre.x + half.x);
    let by1 = centre.y + half.y; // anterior face
    let (bz0, bz1) = (centre.z - half.z, centre.z + half.z);

    // +x is the anatomical right: right arm on the +x corner.
    let ra = Point3::new(bx1, by1, bz1);
    let la = Point3::new(bx0, by1, bz1);
    let ll = Point3::new(bx0, by1, bz0);

    let width = bx1 - bx0;
    let height = bz1 - bz0;
    let v = PRECORDIAL_OFFSETS
        .map(|(fx, fz)| Point3::new(centre.x + fx * width, by1, centre.z + fz * height));

    Ok(ElectrodeSet { la, ra, ll, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_slab;
    use nalgebra::Vector3;

    #[test]
    fn electrodes_lie_outside_the_mesh() {
        let (mesh, _, _) = generate_slab(5, 5, 5, 0.1, 0.0).unwrap();
        let set = default_electrodes(&mesh).unwrap();
        let (lo, hi) = mesh.bounding_box();
        for p in set.positions() {
            let inside = (lo.x..=hi.x).contains(&p.x)
                && (lo.y..=hi.y).contains(&p.y)
                && (lo.z..=hi.z).contains(&p.z);
            assert!(!inside, "electrode {p:?} inside the mesh box");
        }
    }

    #[test]
    fn translation_equivariance() {
        let (mesh, _, _) = generate_slab(4, 4, 4, 0.1, 0.0).unwrap();
        let shift = Vector3::new(1.5, -2.0, 0.75);
        let moved = TetMesh::new(
            mesh.nodes().iter().map(|p| p + shift).collect(),
            mesh.tets().to_vec(),
        )
        .unwrap();
        let a = default_electrodes(&mesh).unwrap();
        let b = default_electrodes(&moved).unwrap();
        for (pa, pb) in a.positions().iter().zip(b.positions()) {
            assert!((pb - pa - shift).norm() < 1e-12);
        }
    }

    #[test]
    fn names_and_order_are_stable() {
        assert_eq!(ElectrodeSet::NAMES.len(), 9);
        assert_eq!(ElectrodeSet::NAMES[0], "LA");
        assert_eq!(ElectrodeSet::NAMES[3], "V1");
        assert_eq!(ElectrodeSet::NAMES[8], "V6");
    }
}
