//! Independent reference implementations used to cross-check the engine.
//!
//! Everything here is deliberately written from scratch against the
//! mathematical definitions, sharing no code with the library: different
//! integrators, different data layouts, different algorithms. Tests
//! compare the two routes within pinned tolerances.

#![allow(dead_code)] // each integration-test target uses a subset

/// Reference single-cell integrator: classic fixed-step RK4 at a 10x
/// finer step than the library's forward Euler.
pub mod cell {
    /// Two-current model constants mirrored as plain values.
    #[derive(Debug, Clone, Copy)]
    pub struct Params {
        pub tau_in: f64,
        pub tau_out: f64,
        pub tau_open: f64,
        pub tau_close: f64,
        pub v_gate: f64,
        pub u_rest: f64,
        pub u_peak: f64,
    }

    impl Params {
        pub fn default_with_tau_close(tau_close: f64) -> Self {
            Self {
                tau_in: 0.3,
                tau_out: 6.0,
                tau_open: 120.0,
                tau_close,
                v_gate: 0.13,
                u_rest: -85.0,
                u_peak: 30.0,
            }
        }
    }

    #[derive(Debug, Clone, Copy)]
    pub struct Stimulus {
        pub a1: f64,
        pub a2: f64,
        pub mu1: f64,
        pub mu2: f64,
        pub s1: f64,
        pub s2: f64,
        pub amplitude: f64,
    }

    impl Stimulus {
        pub fn default_with_amplitude(amplitude: f64) -> Self {
            Self { a1: 13.8, a2: 14.4, mu1: 14.1, mu2: 15.3, s1: 1.9, s2: 1.8, amplitude }
        }

        fn raw(&self, t: f64) -> f64 {
            let g1 = (-((t - self.mu1).powi(2)) / (2.0 * self.s1 * self.s1)).exp();
            let g2 = (-((t - self.mu2).powi(2)) / (2.0 * self.s2 * self.s2)).exp();
            self.a1 * g1 - self.a2 * g2
        }

        /// Peak found by brute-force scan at 1e-5 ms resolution.
        fn peak(&self) -> f64 {
            let mut best = f64::NEG_INFINITY;
            let mut i = 0u64;
            loop {
                let t = i as f64 * 1e-5;
                if t > 40.0 {
                    break;
                }
                let v = self.raw(t);
                if v > best {
                    best = v;
                }
                i += 1;
            }
            best
        }
    }

    /// Paces `beats` beats of `cycle_ms` and returns the last beat on the
    /// 1-ms grid (mV), integrating with RK4 at `dt` (must divide 1 ms).
    pub fn reference_ap(
        p: &Params,
        stim: &Stimulus,
        cycle_ms: usize,
        beats: usize,
        dt: f64,
    ) -> Vec<f64> {
        let scale = stim.amplitude / stim.peak();
        let span = p.u_peak - p.u_rest;
        let rhs = |t: f64, v: f64, h: f64| -> (f64, f64) {
            let i = stim.raw(t) * scale / span;
            let dv = h * v * v * (1.0 - v) / p.tau_in - v / p.tau_out + i;
            let dh = if v < p.v_gate { (1.0 - h) / p.tau_open } else { -h / p.tau_close };
            (dv, dh)
        };
        let steps_per_ms = (1.0 / dt).round() as usize;
        assert!((steps_per_ms as f64 * dt - 1.0).abs() < 1e-9, "dt must divide 1 ms");
        let (mut v, mut h) = (0.0_f64, 1.0_f64);
        let mut out = vec![0.0; cycle_ms];
        for beat in 0..beats {
            let last = beat + 1 == beats;
            for ms in 0..cycle_ms {
                if last {
                    out[ms] = p.u_rest + span * v;
                }
                for sub in 0..steps_per_ms {
                    let t = ms as f64 + sub as f64 * dt;
                    let (k1v, k1h) = rhs(t, v, h);
                    let (k2v, k2h) = rhs(t + 0.5 * dt, v + 0.5 * dt * k1v, h + 0.5 * dt * k1h);
                    let (k3v, k3h) = rhs(t + 0.5 * dt, v + 0.5 * dt * k2v, h + 0.5 * dt * k2h);
                    let (k4v, k4h) = rhs(t + dt, v + dt * k3v, h + dt * k3h);
                    v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                    h += dt / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h);
                }
            }
        }
        out
    }

    /// APD90 of a 1-ms trace: peak to first fall below 90% repolarisation,
    /// linearly interpolated.
    pub fn reference_apd90(trace: &[f64]) -> f64 {
        let mut peak_idx = 0;
        for (i, &v) in trace.iter().enumerate() {
            if v > trace[peak_idx] {
                peak_idx = i;
            }
        }
        let v_peak = trace[peak_idx];
        let v_min = trace.iter().cloned().fold(f64::INFINITY, f64::min);
        let thr = v_peak - 0.9 * (v_peak - v_min);
        for i in peak_idx..trace.len() - 1 {
            if trace[i] >= thr && trace[i + 1] < thr {
                return i as f64 + (trace[i] - thr) / (trace[i] - trace[i + 1])
                    - peak_idx as f64;
            }
        }
        f64::NAN
    }
}

/// Reference arrival times: Dijkstra on the mesh edge graph under the
/// anisotropic slowness metric. Graph shortest paths can only overestimate
/// the continuous solution, so this upper-bounds the solver's result.
pub mod eikonal {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    use twin_core::geometry::{FiberField, TetMesh};

    /// 3x3 slowness metric for one element frame: sum of d d^T / v_d^2
    /// over the three frame directions. Plain arrays, no linear-algebra
    /// crate. Fibre fields are stored per element.
    fn element_metric(fibres: &FiberField, elem: usize, v: (f64, f64, f64)) -> [[f64; 3]; 3] {
        let dirs = [
            (fibres.f[elem], v.0),
            (fibres.s[elem], v.1),
            (fibres.n[elem], v.2),
        ];
        let mut m = [[0.0; 3]; 3];
        for (d, speed) in dirs {
            let d = [d.x, d.y, d.z];
            for (i, mi) in m.iter_mut().enumerate() {
                for (j, mij) in mi.iter_mut().enumerate() {
                    *mij += d[i] * d[j] / (speed * speed);
                }
            }
        }
        m
    }

    fn quad(m: &[[f64; 3]; 3], p: [f64; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += p[i] * m[i][j] * p[j];
            }
        }
        s
    }

    /// Orders f64 keys for the binary heap.
    #[derive(PartialEq)]
    struct Key(f64);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Key {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }

    /// Shortest arrival time per node along mesh edges, with each edge
    /// weighted by the metric averaged over the tets sharing that edge.
    pub fn dijkstra_activation(
        mesh: &TetMesh,
        fibres: &FiberField,
        v: (f64, f64, f64),
        roots: &[(usize, f64)],
    ) -> Vec<f64> {
        let n = mesh.node_count();
        // Edge -> averaged metric over adjacent tets.
        use std::collections::HashMap;
        let mut edge_acc: HashMap<(usize, usize), ([[f64; 3]; 3], usize)> = HashMap::new();
        for (elem, tet) in mesh.tets().iter().enumerate() {
            let m = element_metric(fibres, elem, v);
            for a in 0..4 {
                for b in a + 1..4 {
                    let key = (tet[a].min(tet[b]), tet[a].max(tet[b]));
                    let entry = edge_acc.entry(key).or_insert(([[0.0; 3]; 3], 0));
                    for i in 0..3 {
                        for j in 0..3 {
                            entry.0[i][j] += m[i][j];
                        }
                    }
                    entry.1 += 1;
                }
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(a, b), &(msum, count)) in &edge_acc {
            let pa = mesh.nodes()[a];
            let pb = mesh.nodes()[b];
            let p = [pb.x - pa.x, pb.y - pa.y, pb.z - pa.z];
            let mut m = msum;
            for row in m.iter_mut() {
                for x in row.iter_mut() {
                    *x /= count as f64;
                }
            }
            let w = quad(&m, p).sqrt();
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for neigh in adj.iter_mut() {
            neigh.sort_by_key(|&(n, _)| n);
        }

        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        for &(node, t0) in roots {
            if t0 < dist[node] {
                dist[node] = t0;
                heap.push(Reverse((Key(t0), node)));
            }
        }
        while let Some(Reverse((Key(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(w, len) in &adj[u] {
                let cand = d + len;
                if cand < dist[w] {
                    dist[w] = cand;
                    heap.push(Reverse((Key(cand), w)));
                }
            }
        }
        dist
    }
}

/// Brute-force pseudo-ECG by direct summation: per sample, per element,
/// per electrode, with element gradients recomputed from a 3x3 solve
/// rather than assembled per-node shape-gradient weights.
pub mod ecg {
    use nalgebra::{Matrix3, Point3, Vector3};

    /// Optional per-element frame with per-axis weights applied to the
    /// field gradient before projection (unit weights reproduce the
    /// identity tensor regardless of frame).
    pub type Frames<'a> = Option<(&'a [Vector3<f64>], &'a [Vector3<f64>], &'a [Vector3<f64>], [f64; 3])>;

    fn element_gradient(
        x: [&Point3<f64>; 4],
        u: [f64; 4],
    ) -> (Vector3<f64>, f64, Point3<f64>) {
        let j = Matrix3::from_columns(&[x[0] - x[3], x[1] - x[3], x[2] - x[3]]);
        let volume = j.determinant().abs() / 6.0;
        let rhs = Vector3::new(u[0] - u[3], u[1] - u[3], u[2] - u[3]);
        // grad u = J^{-T} [u0-u3, u1-u3, u2-u3]
        let grad = j
            .transpose()
            .lu()
            .solve(&rhs)
            .expect("degenerate element in oracle");
        let centroid = Point3::from(
            (x[0].coords + x[1].coords + x[2].coords + x[3].coords) / 4.0,
        );
        (grad, volume, centroid)
    }

    /// Direct-summation electrode potentials: one row of nine potentials
    /// per time sample.
    pub fn electrode_rows(
        nodes: &[Point3<f64>],
        tets: &[[usize; 4]],
        frames: Frames<'_>,
        electrodes: &[Point3<f64>; 9],
        samples: &[&[f64]],
    ) -> Vec<[f64; 9]> {
        let volumes: Vec<f64> = tets
            .iter()
            .map(|t| {
                let j = Matrix3::from_columns(&[
                    nodes[t[0]] - nodes[t[3]],
                    nodes[t[1]] - nodes[t[3]],
                    nodes[t[2]] - nodes[t[3]],
                ]);
                j.determinant().abs() / 6.0
            })
            .collect();
        let mean_volume = volumes.iter().sum::<f64>() / volumes.len() as f64;

        let mut rows = Vec::with_capacity(samples.len());
        for column in samples {
            let mut row = [0.0f64; 9];
            for (elem, tet) in tets.iter().enumerate() {
                let x = [
                    &nodes[tet[0]],
                    &nodes[tet[1]],
                    &nodes[tet[2]],
                    &nodes[tet[3]],
                ];
                let u = [
                    column[tet[0]],
                    column[tet[1]],
                    column[tet[2]],
                    column[tet[3]],
                ];
                let (grad, volume, centroid) = element_gradient(x, u);
                let flux = match frames {
                    None => grad,
                    Some((f, s, n, w)) => {
                        let axes = [f[elem], s[elem], n[elem]];
                        let mut out = Vector3::zeros();
                        for (axis, weight) in axes.iter().zip(w) {
                            out += axis * (weight * grad.dot(axis));
                        }
                        out
                    }
                };
                let b = volume / mean_volume;
                for (e, electrode) in electrodes.iter().enumerate() {
                    let r = electrode - centroid;
                    let dist = r.norm();
                    row[e] += b * flux.dot(&r) / (dist * dist * dist);
                }
            }
            rows.push(row);
        }
        rows
    }

    /// Standard lead set from nine electrode potentials:
    /// I, II, V1..V6 with Wilson central terminal references.
    pub fn leads(rows: &[[f64; 9]]) -> [Vec<f64>; 8] {
        let mut out: [Vec<f64>; 8] = std::array::from_fn(|_| Vec::with_capacity(rows.len()));
        for row in rows {
            let (la, ra, ll) = (row[0], row[1], row[2]);
            let wct = (la + ra + ll) / 3.0;
            out[0].push(la - ra);
            out[1].push(ll - ra);
            for v in 0..6 {
                out[2 + v].push(row[3 + v] - wct);
            }
        }
        out
    }
}
