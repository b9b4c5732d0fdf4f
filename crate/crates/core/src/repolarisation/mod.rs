//! Repolarisation fields: APD maps from ventricular-coordinate gradients,
//! membrane-potential assembly from activation times and trace tables, and
//! orthotropic diffusion-like smoothing of the assembled field.
//!
//! The membrane field is the bridge between the activation solver and the
//! torso-signal stage: each node plays back a pre-computed action-potential
//! row starting at its activation time, and the smoothing pass couples
//! neighbouring traces with anisotropy-aware edge weights so propagation-like
//! spatial blurring emerges without a diffusion solve.

use crate::activation::{ActivationMap, ConductionVelocities};
use crate::cellular::TraceRows;
use crate::error::{Error, Result};
use crate::geometry::{FiberField, TetMesh, VentricularCoords};
use nalgebra::Vector3;
use rayon::prelude::*;

/// Default self-coupling weight for smoothing, 1/cm.
pub const DEFAULT_SELF_WEIGHT: f64 = 20.0;

/// Gradient weights and APD bounds defining an APD field over the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApdGradientParams {
    pub g_ab: f64,
    pub g_tm: f64,
    pub g_pa: f64,
    pub g_tv: f64,
    /// Shortest APD in the map, ms.
    pub apd_min: f64,
    /// Longest APD in the map, ms.
    pub apd_max: f64,
}

impl ApdGradientParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.g_ab,
            self.g_tm,
            self.g_pa,
            self.g_tv,
            self.apd_min,
            self.apd_max,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("gradient parameters must be finite"));
        }
        if self.apd_min >= self.apd_max {
            return Err(Error::invalid(format!(
                "apd_min must be below apd_max, got [{}, {}]",
                self.apd_min, self.apd_max
            )));
        }
        Ok(())
    }

    /// Parameter vector in canonical order.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.g_ab,
            self.g_tm,
            self.g_pa,
            self.g_tv,
            self.apd_min,
            self.apd_max,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            g_ab: a[0],
            g_tm: a[1],
            g_pa: a[2],
            g_tv: a[3],
            apd_min: a[4],
            apd_max: a[5],
        }
    }
}

/// Per-node action-potential duration, ms.
#[derive(Debug, Clone)]
pub struct ApdMap {
    values: Vec<f64>,
}

impl ApdMap {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weighted sum of the four ventricular coordinates, min-max normalized and
/// mapped onto `[apd_min, apd_max]`.
///
/// A flat weighted sum (spread below 1e-9) maps every node to the interval
/// midpoint so the parameter space stays continuous at zero gradients.
pub fn compute_apd_map(coords: &VentricularCoords, p: &ApdGradientParams) -> Result<ApdMap> {
    p.validate()?;
    let n = coords.ab.len();
    coords.validate(n)?;
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        q.push(
            p.g_ab * coords.ab[i]
                + p.g_tm * coords.tm[i]
                + p.g_pa * coords.pa[i]
                + p.g_tv * coords.tv[i],
        );
    }
    let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let q_max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if q_max - q_min < 1e-9 {
        vec![0.5 * (p.apd_min + p.apd_max); n]
    } else {
        let scale = (p.apd_max - p.apd_min) / (q_max - q_min);
        q.iter().map(|&v| p.apd_min + (v - q_min) * scale).collect()
    };
    Ok(ApdMap { values })
}

/// Node-by-time membrane potential matrix at 1-ms sampling, mV.
///
/// Stored time-major: the slice for one sample time holds every node's
/// potential, so per-time operators (smoothing, torso projection) work on
/// contiguous memory.
#[derive(Debug, Clone)]
pub struct MembraneField {
    data: Vec<f64>,
    node_count: usize,
    u_rest: f64,
}

impl MembraneField {
    /// Rebuilds a field from time-major storage (sample 0's node values
    /// first), e.g. when loading a previously written field.
    pub fn from_raw(data: Vec<f64>, node_count: usize, u_rest: f64) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("field needs at least one node"));
        }
        if data.is_empty() || data.len() % node_count != 0 {
            return Err(Error::invalid(format!(
                "field storage of {} values is not a whole number of {node_count}-node samples",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite potential at node {} of sample {}",
                i % node_count,
                i / node_count
            )));
        }
        if !u_rest.is_finite() {
            return Err(Error::invalid(format!("resting potential must be finite, got {u_rest}")));
        }
        Ok(Self { data, node_count, u_rest })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of 1-ms samples.
    pub fn sample_count(&self) -> usize {
        self.data.len() / self.node_count
    }

    /// Resting potential the field relaxes to, mV.
    pub fn u_rest(&self) -> f64 {
        self.u_rest
    }

    /// All node potentials at sample time `t` ms.
    pub fn sample(&self, t: usize) -> &[f64] {
        &self.data[t * self.node_count..(t + 1) * self.node_count]
    }

    /// Potential of `node` at sample time `t` ms.
    pub fn value(&self, node: usize, t: usize) -> f64 {
        self.data[t * self.node_count + node]
    }

    /// One node's potential across all sample times.
    pub fn trace(&self, node: usize) -> Vec<f64> {
        (0..self.sample_count()).map(|t| self.value(node, t)).collect()
    }

    /// Raw time-major storage.
    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}

/// Plays back one table row per node, offset by its activation time.
///
/// Before a node's activation time the potential is the resting value;
/// afterwards it follows the trace row whose label is the node's APD rounded
/// to the nearest integer, with the playback clamped at the row's final
/// sample once the trace is exhausted.
pub fn assemble_membrane_field<T: TraceRows + Sync + ?Sized>(
    atmap: &ActivationMap,
    apd: &ApdMap,
    table: &T,
    duration_ms: usize,
) -> Result<MembraneField> {
    let n = atmap.times().len();
    if apd.len() != n {
        return Err(Error::invalid(format!(
            "APD map covers {} nodes, activation map {n}",
            apd.len()
        )));
    }
    if duration_ms == 0 {
        return Err(Error::invalid("field duration must be positive"));
    }
    let (lo, hi) = table.key_range();
    let u_rest = table.u_rest();

    // Resolve each node's row once.
    let mut rows: Vec<&[f64]> = Vec::with_capacity(n);
    for (i, &apd_ms) in apd.values().iter().enumerate() {
        let key = apd_ms.round() as i32;
        match table.row(key) {
            Some(row) => rows.push(row),
            None => {
                return Err(Error::invalid(format!(
                    "node {i}: APD {apd_ms:.3} ms (row {key}) outside table range [{lo}, {hi}]"
                )))
            }
        }
    }

    let mut data = vec![0.0; n * duration_ms];
    data.par_chunks_exact_mut(n)
        .enumerate()
        .for_each(|(t, column)| {
            let t = t as f64;
            for i in 0..n {
                let rel = t - atmap.times()[i];
                column[i] = if rel < 0.0 {
                    u_rest
                } else {
                    let row = rows[i];
                    row[(rel.round() as usize).min(row.len() - 1)]
                };
            }
        });
    Ok(MembraneField {
        data,
        node_count: n,
        u_rest,
    })
}

/// Row-stochastic neighbour weights for the smoothing operator, stored CSR.
#[derive(Debug, Clone)]
pub struct SmoothingWeights {
    offsets: Vec<usize>,
    neighbours: Vec<u32>,
    /// Normalized neighbour weights, one per CSR entry.
    weights: Vec<f64>,
    /// Normalized self weight, one per node.
    self_weights: Vec<f64>,
    /// Unnormalized edge factors k_m (1/cm), one per CSR entry.
    raw: Vec<f64>,
}

impl SmoothingWeights {
    pub fn node_count(&self) -> usize {
        self.self_weights.len()
    }

    /// Neighbour indices and normalized weights for `node`.
    pub fn row(&self, node: usize) -> (&[u32], &[f64]) {
        let range = self.offsets[node]..self.offsets[node + 1];
        (&self.neighbours[range.clone()], &self.weights[range])
    }

    pub fn self_weight(&self, node: usize) -> f64 {
        self.self_weights[node]
    }

    /// Unnormalized edge factors for `node`, 1/cm.
    pub fn raw_row(&self, node: usize) -> &[f64] {
        &self.raw[self.offsets[node]..self.offsets[node + 1]]
    }
}

/// Orthonormal fibre frame averaged over the elements sharing an edge.
///
/// Element axes are sign-aligned against the running sums before averaging
/// (each axis is only defined up to sign), then re-orthonormalized with the
/// fibre direction taking precedence.
fn edge_frame(fibres: &FiberField, elems: &[u32]) -> [Vector3<f64>; 3] {
    let mut sum_f = Vector3::zeros();
    let mut sum_s = Vector3::zeros();
    for &e in elems {
        let (f, s) = (fibres.f[e as usize], fibres.s[e as usize]);
        sum_f += if f.dot(&sum_f) < 0.0 { -f } else { f };
        sum_s += if s.dot(&sum_s) < 0.0 { -s } else { s };
    }
    let ef = sum_f
        .try_normalize(1e-12)
        .unwrap_or_else(|| Vector3::x());
    let mut es = sum_s - ef * sum_s.dot(&ef);
    es = es.try_normalize(1e-12).unwrap_or_else(|| {
        // Degenerate sheet sum: complete with any direction orthogonal to ef.
        let pick = if ef.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        (pick - ef * pick.dot(&ef)).normalize()
    });
    [ef, es, ef.cross(&es)]
}

/// Edge weights k_m = 1/sqrt(sum_d ((v_max / v_d) * (p . d))^2) over the
/// edge's averaged fibre frame, plus the given self weight, normalized per
/// node to sum to one.
///
/// Scaling each projection by v_max / v_d >= 1 shortens the effective reach
/// across slow directions, so smoothing spreads anisotropically like the
/// wavefront does. For every edge the factor is bounded between
/// (v_min / v_max) / |p| and 1 / |p|.
pub fn compute_smoothing_weights(
    mesh: &TetMesh,
    fibres: &FiberField,
    cv: &ConductionVelocities,
    k_self: f64,
) -> Result<SmoothingWeights> {
    cv.validate()?;
    if fibres.f.len() != mesh.tet_count() {
        return Err(Error::invalid(format!(
            "fibre field covers {} elements, mesh has {}",
            fibres.f.len(),
            mesh.tet_count()
        )));
    }
    if !(k_self.is_finite() && k_self > 0.0) {
        return Err(Error::invalid(format!(
            "self weight must be positive, got {k_self}"
        )));
    }
    let n = mesh.node_count();
    let v_max = cv.v_f.max(cv.v_s).max(cv.v_n);
    let ratios = [v_max / cv.v_f, v_max / cv.v_s, v_max / cv.v_n];

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0usize);
    let mut neighbours = Vec::new();
    let mut raw = Vec::new();
    for a in 0..n {
        for nb in mesh.neighbours(a) {
            let b = nb.node;
            // Elements sharing edge (a, b): intersection of the incidence
            // lists (both short and sorted).
            let (ta, tb) = (mesh.tets_of(a), mesh.tets_of(b));
            let mut shared = Vec::with_capacity(8);
            let (mut i, mut j) = (0, 0);
            while i < ta.len() && j < tb.len() {
                match ta[i].cmp(&tb[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        shared.push(ta[i]);
                        i += 1;
                        j += 1;
                    }
                }
            }
            let frame = edge_frame(fibres, &shared);
            let mut sum = 0.0;
            for (axis, ratio) in frame.iter().zip(ratios) {
                let proj = ratio * nb.offset.dot(axis);
                sum += proj * proj;
            }
            neighbours.push(b as u32);
            raw.push(1.0 / sum.sqrt());
        }
        offsets.push(neighbours.len());
    }

    let mut weights = vec![0.0; raw.len()];
    let mut self_weights = vec![0.0; n];
    for a in 0..n {
        let range = offsets[a]..offsets[a + 1];
        let denom: f64 = raw[range.clone()].iter().sum::<f64>() + k_self;
        for k in range {
            weights[k] = raw[k] / denom;
        }
        self_weights[a] = k_self / denom;
    }
    Ok(SmoothingWeights {
        offsets,
        neighbours,
        weights,
        self_weights,
        raw,
    })
}

/// How many weighted-average repetitions to apply at each sample time.
///
/// The count ramps linearly from one repetition at t = 0 to `max_rounds` at
/// `ramp_ms`, then stays at the peak: later in the beat the field represents
/// repolarisation, whose spatial dispersion the smoothing is meant to shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingSchedule {
    pub ramp_ms: f64,
    pub max_rounds: u32,
}

impl Default for SmoothingSchedule {
    fn default() -> Self {
        Self {
            ramp_ms: 400.0,
            max_rounds: 40,
        }
    }
}

impl SmoothingSchedule {
    /// Fixed repetition count at every sample time.
    pub fn constant(rounds: u32) -> Self {
        Self {
            ramp_ms: 0.0,
            max_rounds: rounds,
        }
    }

    /// Repetitions applied at sample time `t` ms.
    pub fn rounds(&self, t: f64) -> u32 {
        if self.max_rounds == 0 {
            return 0;
        }
        if self.ramp_ms <= 0.0 || t >= self.ramp_ms {
            return self.max_rounds;
        }
        let ramped = 1 + ((self.max_rounds - 1) as f64 * t.max(0.0) / self.ramp_ms) as u32;
        ramped.min(self.max_rounds)
    }
}

/// Applies the row-stochastic averaging operator `schedule.rounds(t)` times
/// at each sample time. Columns are independent; within a column every node
/// reads the previous iterate, so the result does not depend on traversal
/// or thread order.
pub fn smooth_field(
    field: &MembraneField,
    weights: &SmoothingWeights,
    schedule: &SmoothingSchedule,
) -> Result<MembraneField> {
    let n = field.node_count();
    if weights.node_count() != n {
        return Err(Error::invalid(format!(
            "weights cover {} nodes, field has {n}",
            weights.node_count()
        )));
    }
    let mut data = vec![0.0; field.raw().len()];
    data.par_chunks_exact_mut(n)
        .enumerate()
        .for_each(|(t, column)| {
            column.copy_from_slice(field.sample(t));
            let rounds = schedule.rounds(t as f64);
            let mut scratch = vec![0.0; n];
            for _ in 0..rounds {
                for a in 0..n {
                    let (nbrs, w) = weights.row(a);
                    let mut acc = weights.self_weight(a) * column[a];
                    for (&b, &wb) in nbrs.iter().zip(w) {
                        acc += wb * column[b as usize];
                    }
                    scratch[a] = acc;
                }
                column.copy_from_slice(&scratch);
            }
        });
    Ok(MembraneField {
        data,
        node_count: n,
        u_rest: field.u_rest(),
    })
}

/// Per-node repolarisation times extracted from a membrane field.
#[derive(Debug, Clone)]
pub struct RepolarisationMap {
    times: Vec<Option<f64>>,
}

impl RepolarisationMap {
    /// Repolarisation time per node, ms; `None` where the node never
    /// repolarises within the field duration.
    pub fn times(&self) -> &[Option<f64>] {
        &self.times
    }

    /// Indices of nodes that never repolarise within the field duration.
    pub fn unrepolarised(&self) -> Vec<usize> {
        self.times
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.is_none().then_some(i))
            .collect()
    }
}

/// Last time each node's potential crosses below 10% of its local amplitude
/// on the downstroke, linearly interpolated between samples.
pub fn repolarisation_map(field: &MembraneField) -> RepolarisationMap {
    let n = field.node_count();
    let steps = field.sample_count();
    let u_rest = field.u_rest();
    let times = (0..n)
        .into_par_iter()
        .map(|node| {
            let mut peak = f64::NEG_INFINITY;
            for t in 0..steps {
                peak = peak.max(field.value(node, t));
            }
            let threshold = u_rest + 0.1 * (peak - u_rest);
            let mut rt = None;
            for t in 1..steps {
                let (prev, cur) = (field.value(node, t - 1), field.value(node, t));
                if prev > threshold && cur <= threshold {
                    let frac = (prev - threshold) / (prev - cur);
                    rt = Some((t - 1) as f64 + frac);
                }
            }
            rt
        })
        .collect();
    RepolarisationMap { times }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{solve_eikonal, RootNodeSet};
    use crate::cellular::{
        build_lookup_table, DiffusiveCurrentParams, LookupTable, MsCellModel, TableSpec,
    };
    use crate::geometry::generate_slab;
    use std::sync::OnceLock;

    fn params(g: [f64; 4], lo: f64, hi: f64) -> ApdGradientParams {
        ApdGradientParams {
            g_ab: g[0],
            g_tm: g[1],
            g_pa: g[2],
            g_tv: g[3],
            apd_min: lo,
            apd_max: hi,
        }
    }

    fn shared_table() -> &'static LookupTable {
        static TABLE: OnceLock<LookupTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let spec = TableSpec {
                apd_lo: 248,
                apd_hi: 252,
                ..TableSpec::default()
            };
            build_lookup_table(
                &MsCellModel::default(),
                &DiffusiveCurrentParams::default(),
                &spec,
            )
            .unwrap()
            .table
        })
    }

    #[test]
    fn apd_map_is_affine_in_a_single_coordinate() {
        let (_, _, coords) = generate_slab(5, 3, 3, 0.1, 0.0).unwrap();
        let map = compute_apd_map(&coords, &params([0.0, 0.0, 0.0, 1.0], 200.0, 300.0)).unwrap();
        // tv tracks x over [0, 1]; spacing 0.1 with 5 nodes spans 0.4 cm, so
        // normalized tv hits 0, 0.25, 0.5, 0.75, 1 along each grid line.
        for (i, &tv) in coords.tv.iter().enumerate() {
            let expect = 200.0 + 100.0 * tv;
            assert!(
                (map.values()[i] - expect).abs() < 1e-9,
                "node {i}: {} vs {expect}",
                map.values()[i]
            );
        }
        let mid = coords.tv.iter().position(|&v| (v - 0.5).abs() < 1e-12).unwrap();
        assert!((map.values()[mid] - 250.0).abs() < 1e-9);
    }

    #[test]
    fn zero_gradients_give_uniform_midpoint() {
        let (_, _, coords) = generate_slab(4, 4, 4, 0.1, 0.0).unwrap();
        let map = compute_apd_map(&coords, &params([0.0; 4], 200.0, 300.0)).unwrap();
        assert!(map.values().iter().all(|&v| (v - 250.0).abs() < 1e-12));
    }

    #[test]
    fn non_degenerate_map_attains_both_bounds() {
        let (_, _, coords) = generate_slab(7, 7, 7, 0.1, 0.0).unwrap();
        let map =
            compute_apd_map(&coords, &params([1.0, 0.1, -1.0, 0.3], 216.0, 294.0)).unwrap();
        let min = map.values().iter().copied().fold(f64::INFINITY, f64::min);
        let max = map.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((min - 216.0).abs() < 1e-9, "min {min}");
        assert!((max - 294.0).abs() < 1e-9, "max {max}");
        assert!(map.values().iter().all(|&v| (216.0..=294.0).contains(&v)));
    }

    #[test]
    fn apd_map_invariant_under_joint_weight_rescale() {
        let (_, _, coords) = generate_slab(6, 5, 4, 0.1, 30.0).unwrap();
        let base =
            compute_apd_map(&coords, &params([0.7, -0.2, 0.4, 0.1], 210.0, 280.0)).unwrap();
        for c in [3.0, 0.125] {
            let scaled = compute_apd_map(
                &coords,
                &params([0.7 * c, -0.2 * c, 0.4 * c, 0.1 * c], 210.0, 280.0),
            )
            .unwrap();
            for (a, b) in base.values().iter().zip(scaled.values()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn invalid_gradient_params_rejected() {
        let (_, _, coords) = generate_slab(3, 3, 3, 0.1, 0.0).unwrap();
        assert!(compute_apd_map(&coords, &params([0.0; 4], 300.0, 200.0)).is_err());
        assert!(compute_apd_map(&coords, &params([f64::NAN, 0.0, 0.0, 0.0], 200.0, 300.0))
            .is_err());
    }

    fn uniform_field(
        table: &LookupTable,
        n_nodes: usize,
        t_a: f64,
        apd: f64,
        duration: usize,
    ) -> MembraneField {
        let atmap = ActivationMap::from_times(vec![t_a; n_nodes]).unwrap();
        let apd_map = ApdMap {
            values: vec![apd; n_nodes],
        };
        assemble_membrane_field(&atmap, &apd_map, table, duration).unwrap()
    }

    #[test]
    fn field_rests_before_activation_and_plays_back_row() {
        let table = shared_table();
        let field = uniform_field(table, 4, 10.0, 250.0, 400);
        let row = table.row(250).unwrap();
        for t in 0..10 {
            assert_eq!(field.value(0, t), table.u_rest());
        }
        for t in 10..400 {
            assert_eq!(field.value(2, t), row[t - 10], "t = {t}");
        }
        assert!(field.raw().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn playback_clamps_at_final_row_sample() {
        let table = shared_table();
        let row = table.row(250).unwrap();
        let field = uniform_field(table, 2, 5.0, 250.0, 700);
        assert_eq!(field.value(0, 650), *row.last().unwrap());
    }

    #[test]
    fn apd_outside_table_range_names_node_and_value() {
        let table = shared_table();
        let atmap = ActivationMap::from_times(vec![0.0; 3]).unwrap();
        let apd_map = ApdMap {
            values: vec![250.0, 250.0, 400.0],
        };
        let err = assemble_membrane_field(&atmap, &apd_map, table, 100).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("node 2") && msg.contains("400"), "{msg}");
    }

    #[test]
    fn isotropic_edge_factors_are_inverse_distance() {
        let (mesh, fibres, _) = generate_slab(4, 4, 4, 0.1, 0.0).unwrap();
        let cv = ConductionVelocities::isotropic(0.05);
        let w = compute_smoothing_weights(&mesh, &fibres, &cv, DEFAULT_SELF_WEIGHT).unwrap();
        for a in 0..mesh.node_count() {
            for (nb, &k) in mesh.neighbours(a).iter().zip(w.raw_row(a)) {
                assert!(
                    (k - 1.0 / nb.length).abs() < 1e-12 / nb.length,
                    "edge {a}->{}: {k} vs {}",
                    nb.node,
                    1.0 / nb.length
                );
            }
        }
    }

    #[test]
    fn edge_factor_bound_holds_on_generated_meshes() {
        use crate::geometry::{generate_biventricular, BivShape};
        let cv = ConductionVelocities::default();
        let ratio = cv.v_s.min(cv.v_n).min(cv.v_f) / cv.v_f.max(cv.v_s).max(cv.v_n);
        let meshes = [
            generate_slab(5, 5, 5, 0.1, 25.0).unwrap(),
            generate_biventricular(0.3, &BivShape::default()).unwrap(),
        ];
        for (mesh, fibres, _) in &meshes {
            let w = compute_smoothing_weights(mesh, fibres, &cv, DEFAULT_SELF_WEIGHT).unwrap();
            for a in 0..mesh.node_count() {
                for (nb, &k) in mesh.neighbours(a).iter().zip(w.raw_row(a)) {
                    let upper = 1.0 / nb.length;
                    let lower = ratio / nb.length;
                    assert!(
                        k <= upper * (1.0 + 1e-12) && k >= lower * (1.0 - 1e-12),
                        "edge {a}->{}: {k} outside [{lower}, {upper}]",
                        nb.node
                    );
                }
            }
        }
    }

    #[test]
    fn weights_are_stochastic() {
        let (mesh, fibres, _) = generate_slab(4, 4, 3, 0.1, 40.0).unwrap();
        let cv = ConductionVelocities::default();
        let w = compute_smoothing_weights(&mesh, &fibres, &cv, DEFAULT_SELF_WEIGHT).unwrap();
        for a in 0..mesh.node_count() {
            let (_, ws) = w.row(a);
            let total: f64 = ws.iter().sum::<f64>() + w.self_weight(a);
            assert!((total - 1.0).abs() < 1e-12, "node {a}: sum {total}");
            assert!(ws.iter().all(|&x| x >= 0.0) && w.self_weight(a) > 0.0);
        }
    }

    #[test]
    fn schedule_matches_contract_points() {
        let s = SmoothingSchedule::default();
        assert_eq!(s.rounds(0.0), 1);
        assert_eq!(s.rounds(400.0), 40);
        assert_eq!(s.rounds(500.0), 40);
        // Linear ramp with floor rounding.
        assert_eq!(s.rounds(10.0), 1);
        assert_eq!(s.rounds(10.3), 2);
        assert_eq!(s.rounds(200.0), 20);
        assert_eq!(SmoothingSchedule::constant(7).rounds(123.0), 7);
    }

    #[test]
    fn uniform_field_is_a_fixed_point_of_smoothing() {
        let table = shared_table();
        let (mesh, fibres, _) = generate_slab(4, 4, 4, 0.1, 0.0).unwrap();
        let field = uniform_field(table, mesh.node_count(), 0.0, 250.0, 350);
        let w = compute_smoothing_weights(
            &mesh,
            &fibres,
            &ConductionVelocities::default(),
            DEFAULT_SELF_WEIGHT,
        )
        .unwrap();
        let smoothed = smooth_field(&field, &w, &SmoothingSchedule::default()).unwrap();
        for (a, b) in field.raw().iter().zip(smoothed.raw()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn smoothing_never_widens_per_time_bounds() {
        let table = shared_table();
        let (mesh, fibres, coords) = generate_slab(6, 5, 4, 0.1, 0.0).unwrap();
        let cv = ConductionVelocities::default();
        let roots = RootNodeSet::simultaneous([0], mesh.node_count()).unwrap();
        let atmap = solve_eikonal(&mesh, &fibres, &cv, &roots).unwrap();
        let apd =
            compute_apd_map(&coords, &params([1.0, 0.0, -0.5, 0.2], 248.0, 252.0)).unwrap();
        let field = assemble_membrane_field(&atmap, &apd, table, 400).unwrap();
        let w = compute_smoothing_weights(&mesh, &fibres, &cv, DEFAULT_SELF_WEIGHT).unwrap();
        let smoothed = smooth_field(&field, &w, &SmoothingSchedule::default()).unwrap();
        for t in 0..field.sample_count() {
            let (before, after) = (field.sample(t), smoothed.sample(t));
            let min0 = before.iter().copied().fold(f64::INFINITY, f64::min);
            let max0 = before.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min1 = after.iter().copied().fold(f64::INFINITY, f64::min);
            let max1 = after.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(
                min1 >= min0 - 1e-9 && max1 <= max0 + 1e-9,
                "t = {t}: [{min0}, {max0}] -> [{min1}, {max1}]"
            );
        }
    }

    #[test]
    fn repeated_smoothing_contracts_toward_a_constant() {
        let (mesh, fibres, _) = generate_slab(4, 4, 4, 0.12, 0.0).unwrap();
        let n = mesh.node_count();
        let w = compute_smoothing_weights(
            &mesh,
            &fibres,
            &ConductionVelocities::default(),
            DEFAULT_SELF_WEIGHT,
        )
        .unwrap();
        // One synthetic sample with a full-range spike pattern.
        let values: Vec<f64> = (0..n).map(|i| if i % 7 == 0 { 30.0 } else { -85.0 }).collect();
        let field = MembraneField {
            data: values,
            node_count: n,
            u_rest: -85.0,
        };
        let initial_range = 115.0;
        let smoothed = smooth_field(&field, &w, &SmoothingSchedule::constant(10_000)).unwrap();
        let min = smoothed.raw().iter().copied().fold(f64::INFINITY, f64::min);
        let max = smoothed.raw().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            max - min < 0.01 * initial_range,
            "residual range {} after 10000 rounds",
            max - min
        );
    }

    #[test]
    fn repolarisation_time_is_activation_plus_apd() {
        let table = shared_table();
        let field = uniform_field(table, 3, 10.0, 250.0, 400);
        let rt = repolarisation_map(&field);
        for t in rt.times() {
            let t = t.expect("node repolarises");
            assert!((t - 260.0).abs() <= 1.0, "RT {t}");
        }
        assert!(rt.unrepolarised().is_empty());
    }

    #[test]
    fn repolarisation_never_precedes_activation_plus_minimum_apd() {
        let table = shared_table();
        let (mesh, fibres, coords) = generate_slab(5, 5, 5, 0.1, 0.0).unwrap();
        let cv = ConductionVelocities::default();
        let roots = RootNodeSet::simultaneous([0], mesh.node_count()).unwrap();
        let atmap = solve_eikonal(&mesh, &fibres, &cv, &roots).unwrap();
        let apd =
            compute_apd_map(&coords, &params([0.4, 0.3, -1.0, 0.0], 248.0, 252.0)).unwrap();
        let field = assemble_membrane_field(&atmap, &apd, table, 450).unwrap();
        let rt = repolarisation_map(&field);
        for (i, t) in rt.times().iter().enumerate() {
            let t = t.expect("node repolarises");
            assert!(
                t >= atmap.times()[i] + 248.0 - 1.0,
                "node {i}: RT {t} vs t_a {}",
                atmap.times()[i]
            );
        }
    }

    #[test]
    fn truncated_field_flags_unrepolarised_nodes() {
        let table = shared_table();
        let field = uniform_field(table, 2, 50.0, 250.0, 120);
        let rt = repolarisation_map(&field);
        assert_eq!(rt.unrepolarised(), vec![0, 1]);
    }

    #[test]
    fn smoothing_narrows_repolarisation_spread_across_a_step() {
        let table = shared_table();
        let (mesh, fibres, coords) = generate_slab(7, 4, 4, 0.1, 0.0).unwrap();
        let cv = ConductionVelocities::default();
        let n = mesh.node_count();
        let atmap = ActivationMap::from_times(vec![5.0; n]).unwrap();
        // Two-region APD step along x (tv tracks x).
        let values: Vec<f64> = coords
            .tv
            .iter()
            .map(|&tv| if tv < 0.5 { 248.0 } else { 252.0 })
            .collect();
        let apd = ApdMap { values };
        let field = assemble_membrane_field(&atmap, &apd, table, 420).unwrap();
        let w = compute_smoothing_weights(&mesh, &fibres, &cv, DEFAULT_SELF_WEIGHT).unwrap();
        let smoothed = smooth_field(&field, &w, &SmoothingSchedule::default()).unwrap();

        let spread = |f: &MembraneField| -> f64 {
            let rts = repolarisation_map(f);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for t in rts.times() {
                let t = t.expect("node repolarises");
                lo = lo.min(t);
                hi = hi.max(t);
            }
            hi - lo
        };
        let raw = spread(&field);
        let blurred = spread(&smoothed);
        assert!(
            blurred < raw,
            "smoothing should narrow the RT spread: {raw} -> {blurred}"
        );
    }
}
