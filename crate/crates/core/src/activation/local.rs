//! Per-element local solver: earliest arrival at one vertex of a
//! tetrahedron given the other three vertices' tentative times, under an
//! anisotropic slowness metric (Fermat principle over the opposite face).

use nalgebra::{Matrix2, Matrix3, Point3, Vector2, Vector3};

/// Metric norm sqrt(z' M z).
fn norm_m(m: &Matrix3<f64>, z: Vector3<f64>) -> f64 {
    z.dot(&(m * z)).max(0.0).sqrt()
}

/// Earliest-arrival candidate at `x_d` through a single element whose
/// other vertices are `verts` (position, tentative time). Non-finite
/// vertex times exclude the configurations that involve them. Returns
/// infinity when no configuration applies.
pub(super) fn local_update(
    m: &Matrix3<f64>,
    x_d: Point3<f64>,
    verts: &[(Point3<f64>, f64); 3],
) -> f64 {
    let mut best = f64::INFINITY;

    // Arrival straight from one vertex.
    for &(p, t) in verts.iter() {
        if t.is_finite() {
            let c = t + norm_m(m, x_d - p);
            if c < best {
                best = c;
            }
        }
    }

    // Arrival through an edge: the wave leaves a point interpolated
    // between two vertices.
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let (pa, ta) = verts[a];
        let (pb, tb) = verts[b];
        if ta.is_finite() && tb.is_finite() {
            let c = edge_candidate(m, x_d, pa, ta, pb, tb);
            if c < best {
                best = c;
            }
        }
    }

    // Arrival through the interior of the opposite face.
    if verts.iter().all(|v| v.1.is_finite()) {
        if let Some(c) = face_candidate(m, x_d, verts) {
            if c < best {
                best = c;
            }
        }
    }

    best
}

/// Minimizes (1-s) t_a + s t_b + ||x_d - ((1-s) p_a + s p_b)||_M over
/// s in [0, 1].
fn edge_candidate(
    m: &Matrix3<f64>,
    x_d: Point3<f64>,
    pa: Point3<f64>,
    ta: f64,
    pb: Point3<f64>,
    tb: f64,
) -> f64 {
    let w = x_d - pa;
    let e = pb - pa;
    let dt = tb - ta;
    let alpha = e.dot(&(m * e));
    let beta = e.dot(&(m * w));
    let gamma = w.dot(&(m * w));

    let g = |s: f64| ta + s * dt + (gamma - 2.0 * beta * s + alpha * s * s).max(0.0).sqrt();

    let mut best = g(0.0).min(g(1.0));
    // Interior stationary points: squaring the optimality condition
    // dt * L(s) = beta - alpha s gives a quadratic in s.
    let a2 = alpha * (alpha - dt * dt);
    let b2 = -2.0 * beta * (alpha - dt * dt);
    let c2 = beta * beta - dt * dt * gamma;
    let mut consider = |s: f64| {
        if s.is_finite() && s > 0.0 && s < 1.0 {
            let v = g(s);
            if v < best {
                best = v;
            }
        }
    };
    if a2.abs() > 1e-300 {
        let disc = b2 * b2 - 4.0 * a2 * c2;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            consider((-b2 + sq) / (2.0 * a2));
            consider((-b2 - sq) / (2.0 * a2));
        }
    } else if b2.abs() > 1e-300 {
        consider(-c2 / b2);
    }
    best
}

/// Stationary point of t_3 + lambda . u + ||z0 - P lambda||_M over the
/// face's interior barycentric coordinates; None when the stationary
/// point falls outside the face or the face is degenerate (the edge and
/// vertex candidates then cover the boundary minimum).
fn face_candidate(
    m: &Matrix3<f64>,
    x_d: Point3<f64>,
    verts: &[(Point3<f64>, f64); 3],
) -> Option<f64> {
    let (p3, t3) = verts[2];
    let u = Vector2::new(verts[0].1 - t3, verts[1].1 - t3);
    let p0 = verts[0].0 - p3;
    let p1 = verts[1].0 - p3;
    let z0 = x_d - p3;

    let a = Matrix2::new(
        p0.dot(&(m * p0)),
        p0.dot(&(m * p1)),
        p1.dot(&(m * p0)),
        p1.dot(&(m * p1)),
    );
    let b = Vector2::new(p0.dot(&(m * z0)), p1.dot(&(m * z0)));
    let gamma0 = z0.dot(&(m * z0));

    let a_inv = a.try_inverse()?;
    let num = (gamma0 - b.dot(&(a_inv * b))).max(0.0);
    let den = 1.0 - u.dot(&(a_inv * u));
    if den <= 1e-14 {
        return None;
    }
    let l = (num / den).sqrt();
    let lambda = a_inv * (b - u * l);
    let eps = 1e-12;
    if lambda.x < -eps || lambda.y < -eps || lambda.x + lambda.y > 1.0 + eps {
        return None;
    }
    Some(t3 + lambda.dot(&u) + l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// Brute-force minimum over a dense barycentric grid of the exact
    /// objective the local solver minimizes in closed form.
    fn brute_force(m: &Matrix3<f64>, x_d: Point3<f64>, verts: &[(Point3<f64>, f64); 3]) -> f64 {
        let (p3, t3) = verts[2];
        let n = 600;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let l0 = i as f64 / n as f64;
                let l1 = j as f64 / n as f64;
                let src = p3 + (verts[0].0 - p3) * l0 + (verts[1].0 - p3) * l1;
                let t_src = t3 + (verts[0].1 - t3) * l0 + (verts[1].1 - t3) * l1;
                let z = x_d - src;
                let v = t_src + z.dot(&(m * z)).max(0.0).sqrt();
                if v < best {
                    best = v;
                }
            }
        }
        best
    }

    fn rvec(rng: &mut impl Rng) -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
    }

    fn random_metric(rng: &mut impl Rng) -> Matrix3<f64> {
        // Random orthonormal frame via Gram-Schmidt on random vectors.
        let f = rvec(rng).normalize();
        let mut s = rvec(rng);
        s -= f * f.dot(&s);
        let s = s.normalize();
        let n = f.cross(&s);
        let speeds = [
            rng.gen_range(0.03..0.09),
            rng.gen_range(0.03..0.09),
            rng.gen_range(0.03..0.09),
        ];
        f * f.transpose() / (speeds[0] * speeds[0])
            + s * s.transpose() / (speeds[1] * speeds[1])
            + n * n.transpose() / (speeds[2] * speeds[2])
    }

    #[test]
    fn closed_form_matches_brute_force_on_random_elements() {
        let mut rng = stream(20260816, &[1]);
        for case in 0..60 {
            let m = random_metric(&mut rng);
            let pts: Vec<Point3<f64>> =
                (0..4).map(|_| Point3::origin() + rvec(&mut rng)).collect();
            let times: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..30.0)).collect();
            let x_d = pts[3];
            let verts = [
                (pts[0], times[0]),
                (pts[1], times[1]),
                (pts[2], times[2]),
            ];
            // Skip degenerate triangles (nearly collinear).
            let area2 = (verts[1].0 - verts[0].0).cross(&(verts[2].0 - verts[0].0)).norm();
            if area2 < 1e-2 {
                continue;
            }
            let exact = local_update(&m, x_d, &verts);
            let brute = brute_force(&m, x_d, &verts);
            // The grid only underestimates distance-to-grid-point, so
            // allow a one-sided tolerance scaled to the value.
            let tol = 1e-3 * brute.abs().max(1.0);
            assert!(
                exact <= brute + tol && exact >= brute - tol,
                "case {case}: closed form {exact} vs brute {brute}"
            );
        }
    }

    #[test]
    fn unknown_neighbours_limit_configurations() {
        let m = Matrix3::identity();
        let x_d = Point3::new(0.0, 0.0, 1.0);
        let verts = [
            (Point3::new(0.0, 0.0, 0.0), 2.0),
            (Point3::new(1.0, 0.0, 0.0), f64::INFINITY),
            (Point3::new(0.0, 1.0, 0.0), f64::INFINITY),
        ];
        // Only the single-vertex route is available.
        assert!((local_update(&m, x_d, &verts) - 3.0).abs() < 1e-12);

        let none = [
            (Point3::new(0.0, 0.0, 0.0), f64::INFINITY),
            (Point3::new(1.0, 0.0, 0.0), f64::INFINITY),
            (Point3::new(0.0, 1.0, 0.0), f64::INFINITY),
        ];
        assert!(local_update(&m, x_d, &none).is_infinite());
    }

    #[test]
    fn planar_wave_through_face_is_exact() {
        // Face on the unit triangle in z=0, all times consistent with a
        // planar wave travelling in +z at unit speed: arrival at height 1
        // is t0 + 1.
        let m = Matrix3::identity();
        let x_d = Point3::new(0.25, 0.25, 1.0);
        let verts = [
            (Point3::new(0.0, 0.0, 0.0), 5.0),
            (Point3::new(1.0, 0.0, 0.0), 5.0),
            (Point3::new(0.0, 1.0, 0.0), 5.0),
        ];
        assert!((local_update(&m, x_d, &verts) - 6.0).abs() < 1e-12);
    }
}
