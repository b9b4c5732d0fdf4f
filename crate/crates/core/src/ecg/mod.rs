//! Body-surface potentials from membrane fields.
//!
//! Each tetrahedron acts as a current source proportional to the local
//! potential gradient; electrodes sum those sources weighted by inverse
//! squared distance. Because the mapping from nodal potentials to electrode
//! potentials is linear, it collapses into one lead vector per electrode,
//! and repeated evaluations (inference, sensitivity sweeps) reduce to dot
//! products per time sample.

mod forward;
mod leadfield;

pub use forward::EcgForward;
pub use leadfield::LeadFieldOperator;

use crate::activation::ConductionVelocities;
use crate::error::{Error, Result};
use crate::geometry::{ElectrodeSet, FiberField, TetMesh};
use crate::repolarisation::MembraneField;
use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;

/// Lead order used throughout: limb leads first, then precordials.
pub const LEAD_NAMES: [&str; 8] = ["I", "II", "V1", "V2", "V3", "V4", "V5", "V6"];

/// Index of lead V3 in [`LEAD_NAMES`].
pub const LEAD_V3: usize = 4;
/// Index of lead V5 in [`LEAD_NAMES`].
pub const LEAD_V5: usize = 6;

/// Default start of the T-wave search window after QRS onset, ms.
pub const DEFAULT_STT_START_MS: f64 = 150.0;

/// Default time shift for the unipolar electrogram approximation, ms.
pub const DEFAULT_ELECTROGRAM_SHIFT_MS: usize = 20;

/// Eight-lead signal at 1-ms sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgSignal {
    leads: [Vec<f64>; 8],
}

impl EcgSignal {
    pub fn from_leads(leads: [Vec<f64>; 8]) -> Result<Self> {
        let len = leads[0].len();
        if len == 0 {
            return Err(Error::invalid("ECG leads must be non-empty"));
        }
        for (name, lead) in LEAD_NAMES.iter().zip(&leads) {
            if lead.len() != len {
                return Err(Error::invalid(format!(
                    "lead {name} has {} samples, lead I has {len}",
                    lead.len()
                )));
            }
            if lead.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("lead {name} contains non-finite samples")));
            }
        }
        Ok(Self { leads })
    }

    /// Samples of one lead, indexed per [`LEAD_NAMES`].
    pub fn lead(&self, idx: usize) -> &[f64] {
        &self.leads[idx]
    }

    pub fn leads(&self) -> &[Vec<f64>; 8] {
        &self.leads
    }

    /// Samples per lead.
    pub fn len(&self) -> usize {
        self.leads[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.leads[0].is_empty()
    }

    /// Largest absolute amplitude across all leads and times.
    pub fn max_abs(&self) -> f64 {
        self.leads
            .iter()
            .flat_map(|l| l.iter())
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }
}

/// Source-term diffusivity applied to element gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diffusivity {
    /// Gradients enter the sum unchanged (the default for table-playback
    /// fields, which already encode conduction anisotropy in their timing).
    Identity,
    /// Weight gradients by the orthotropic tensor built from the fibre frame
    /// with per-axis weights (v_d / v_max)^2, mirroring how conductivity
    /// ratios follow squared velocity ratios in a diffusive tissue model.
    Orthotropic(ConductionVelocities),
}

/// Raw electrode potentials over time, one series per electrode in
/// [`ElectrodeSet::NAMES`] order.
#[derive(Debug, Clone)]
pub struct ElectrodePotentials {
    pub phi: [Vec<f64>; 9],
}

impl ElectrodePotentials {
    /// Assembles the 8 leads: I = LA−RA, II = LL−RA, and each precordial
    /// lead referenced to the mean of the three limb potentials.
    pub fn leads(&self) -> Result<EcgSignal> {
        let len = self.phi[0].len();
        let rows: Vec<[f64; 9]> = (0..len)
            .map(|t| std::array::from_fn(|e| self.phi[e][t]))
            .collect();
        ecg_from_electrode_rows(&rows)
    }
}

/// Lead assembly from per-time rows of the 9 electrode potentials.
pub(crate) fn ecg_from_electrode_rows(rows: &[[f64; 9]]) -> Result<EcgSignal> {
    let mut leads: [Vec<f64>; 8] = std::array::from_fn(|_| Vec::with_capacity(rows.len()));
    for row in rows {
        let (la, ra, ll) = (row[0], row[1], row[2]);
        let wct = (la + ra + ll) / 3.0;
        leads[0].push(la - ra);
        leads[1].push(ll - ra);
        for v in 0..6 {
            leads[2 + v].push(row[3 + v] - wct);
        }
    }
    EcgSignal::from_leads(leads)
}

/// P1 shape-function gradients for one tetrahedron, one vector per vertex.
fn shape_gradients(x: [&Point3<f64>; 4]) -> Option<[Vector3<f64>; 4]> {
    // Rows of J are the edge vectors from vertex 3; gradients of the first
    // three barycentric coordinates are the rows of J^-T.
    let j = Matrix3::from_columns(&[x[0] - x[3], x[1] - x[3], x[2] - x[3]]);
    let jinv = j.try_inverse()?;
    let g0 = Vector3::new(jinv[(0, 0)], jinv[(0, 1)], jinv[(0, 2)]);
    let g1 = Vector3::new(jinv[(1, 0)], jinv[(1, 1)], jinv[(1, 2)]);
    let g2 = Vector3::new(jinv[(2, 0)], jinv[(2, 1)], jinv[(2, 2)]);
    Some([g0, g1, g2, -(g0 + g1 + g2)])
}

fn apply_diffusivity(
    diffusivity: &Diffusivity,
    fibres: &FiberField,
    elem: usize,
    g: Vector3<f64>,
) -> Vector3<f64> {
    match diffusivity {
        Diffusivity::Identity => g,
        Diffusivity::Orthotropic(cv) => {
            let v_max = cv.v_f.max(cv.v_s).max(cv.v_n);
            let axes = [fibres.f[elem], fibres.s[elem], fibres.n[elem]];
            let speeds = [cv.v_f, cv.v_s, cv.v_n];
            let mut out = Vector3::zeros();
            for (axis, v) in axes.iter().zip(speeds) {
                let w = (v / v_max) * (v / v_max);
                out += axis * (w * g.dot(axis));
            }
            out
        }
    }
}

fn barycentric_inside(x: [&Point3<f64>; 4], p: &Point3<f64>) -> bool {
    let j = Matrix3::from_columns(&[x[0] - x[3], x[1] - x[3], x[2] - x[3]]);
    let Some(jinv) = j.try_inverse() else {
        return false;
    };
    let lam = jinv * (p - x[3]);
    let l3 = 1.0 - lam.sum();
    let eps = -1e-12;
    lam.iter().all(|&l| l >= eps) && l3 >= eps
}

/// Per-node lead vectors: electrode potential = lead vector . nodal values.
///
/// Entry (e, i) accumulates, over the elements containing node i, the
/// element's volume weight times the diffusivity-adjusted shape gradient
/// projected onto the unit vector from element centroid to electrode,
/// divided by squared distance.
pub(crate) fn electrode_lead_vectors(
    mesh: &TetMesh,
    fibres: &FiberField,
    electrodes: &ElectrodeSet,
    diffusivity: &Diffusivity,
) -> Result<[Vec<f64>; 9]> {
    if fibres.f.len() != mesh.tet_count() {
        return Err(Error::invalid(format!(
            "fibre field covers {} elements, mesh has {}",
            fibres.f.len(),
            mesh.tet_count()
        )));
    }
    let positions = electrodes.positions();
    // Electrodes must sit strictly outside the tissue.
    for (name, p) in ElectrodeSet::NAMES.iter().zip(&positions) {
        for tet in mesh.tets() {
            let x = [
                &mesh.nodes()[tet[0]],
                &mesh.nodes()[tet[1]],
                &mesh.nodes()[tet[2]],
                &mesh.nodes()[tet[3]],
            ];
            if barycentric_inside(x, p) {
                return Err(Error::invalid(format!(
                    "electrode {name} lies inside the mesh"
                )));
            }
        }
    }

    let n = mesh.node_count();
    let mean_volume = mesh.volumes().iter().sum::<f64>() / mesh.tet_count() as f64;
    let mut vectors: [Vec<f64>; 9] = std::array::from_fn(|_| vec![0.0; n]);
    for (elem, tet) in mesh.tets().iter().enumerate() {
        let x = [
            &mesh.nodes()[tet[0]],
            &mesh.nodes()[tet[1]],
            &mesh.nodes()[tet[2]],
            &mesh.nodes()[tet[3]],
        ];
        let Some(grads) = shape_gradients(x) else {
            return Err(Error::invalid(format!("element {elem} is degenerate")));
        };
        let b = mesh.volumes()[elem] / mean_volume;
        let centroid = mesh.centroid(elem);
        for (e, electrode) in positions.iter().enumerate() {
            let rvec = electrode - centroid;
            let r2 = rvec.norm_squared();
            let dir = rvec / (r2 * r2.sqrt()); // r_hat / r^2
            for (local, &node) in tet.iter().enumerate() {
                let dg = apply_diffusivity(diffusivity, fibres, elem, grads[local]);
                vectors[e][node] += b * dg.dot(&dir);
            }
        }
    }
    Ok(vectors)
}

/// Electrode potentials for every sample of `field`.
pub fn electrode_potentials(
    field: &MembraneField,
    mesh: &TetMesh,
    fibres: &FiberField,
    electrodes: &ElectrodeSet,
    diffusivity: &Diffusivity,
) -> Result<ElectrodePotentials> {
    if field.node_count() != mesh.node_count() {
        return Err(Error::invalid(format!(
            "field covers {} nodes, mesh has {}",
            field.node_count(),
            mesh.node_count()
        )));
    }
    let vectors = electrode_lead_vectors(mesh, fibres, electrodes, diffusivity)?;
    let steps = field.sample_count();
    let per_time: Vec<[f64; 9]> = (0..steps)
        .into_par_iter()
        .map(|t| {
            let column = field.sample(t);
            std::array::from_fn(|e| {
                vectors[e]
                    .iter()
                    .zip(column)
                    .map(|(a, u)| a * u)
                    .sum::<f64>()
            })
        })
        .collect();
    let mut phi: [Vec<f64>; 9] = std::array::from_fn(|_| Vec::with_capacity(steps));
    for row in per_time {
        for (e, v) in row.into_iter().enumerate() {
            phi[e].push(v);
        }
    }
    Ok(ElectrodePotentials { phi })
}

/// Unnormalized 8-lead signal for `field`.
pub fn pseudo_ecg(
    field: &MembraneField,
    mesh: &TetMesh,
    fibres: &FiberField,
    electrodes: &ElectrodeSet,
    diffusivity: &Diffusivity,
) -> Result<EcgSignal> {
    electrode_potentials(field, mesh, fibres, electrodes, diffusivity)?.leads()
}

/// Divides all leads by the single largest absolute amplitude, preserving
/// inter-lead ratios.
pub fn normalize_ecg(signal: &EcgSignal) -> Result<EcgSignal> {
    let max = signal.max_abs();
    if max == 0.0 {
        return Err(Error::invalid("cannot normalize an all-zero ECG"));
    }
    let leads = std::array::from_fn(|i| signal.lead(i).iter().map(|v| v / max).collect());
    EcgSignal::from_leads(leads)
}

/// Search window for T-wave biomarkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TWaveOptions {
    /// Start of the ST-T search window, ms after QRS onset.
    pub stt_start_ms: f64,
}

impl Default for TWaveOptions {
    fn default() -> Self {
        Self {
            stt_start_ms: DEFAULT_STT_START_MS,
        }
    }
}

/// Aggregated T-wave biomarkers over the 8 leads.
#[derive(Debug, Clone, PartialEq)]
pub struct TWaveBiomarkers {
    /// Mean over usable leads of (T end − QRS onset), ms.
    pub qt_ms: f64,
    /// Mean over usable leads of (T end − T peak), ms.
    pub tpe_ms: f64,
    /// Mean absolute T-peak amplitude, normalized units.
    pub t_amplitude: f64,
    /// Sign of the T peak per lead; 0 marks an excluded lead.
    pub t_polarity: [i8; 8],
    /// |T peak time V3 − T peak time V5|; `None` if either lead is excluded.
    pub tpeak_dispersion_v3_v5_ms: Option<f64>,
    /// Leads excluded because no T extremum or T end was found.
    pub excluded_leads: Vec<usize>,
}

impl TWaveBiomarkers {
    /// Mean of the per-lead polarity signs over usable leads.
    pub fn polarity_mean(&self) -> f64 {
        let usable: Vec<f64> = self
            .t_polarity
            .iter()
            .filter(|&&p| p != 0)
            .map(|&p| p as f64)
            .collect();
        usable.iter().sum::<f64>() / usable.len() as f64
    }
}

struct LeadTWave {
    peak_time_ms: f64,
    peak_amplitude: f64,
    end_time_ms: f64,
}

fn lead_t_wave(samples: &[f64], window_start: usize) -> Option<LeadTWave> {
    if window_start >= samples.len() {
        return None;
    }
    let mut peak_idx = window_start;
    let mut peak_abs = 0.0_f64;
    for (t, &v) in samples.iter().enumerate().skip(window_start) {
        if v.abs() > peak_abs {
            peak_abs = v.abs();
            peak_idx = t;
        }
    }
    if peak_abs == 0.0 {
        return None;
    }
    let threshold = 0.05 * peak_abs;
    for t in peak_idx + 1..samples.len() {
        let (prev, cur) = (samples[t - 1].abs(), samples[t].abs());
        if cur < threshold {
            // Linear interpolation on |amplitude| for sub-sample precision.
            let frac = if prev > cur { (prev - threshold) / (prev - cur) } else { 1.0 };
            let frac = frac.clamp(0.0, 1.0);
            return Some(LeadTWave {
                peak_time_ms: peak_idx as f64,
                peak_amplitude: samples[peak_idx],
                end_time_ms: (t - 1) as f64 + frac,
            });
        }
    }
    None
}

/// Per-lead T-peak/T-end detection and lead-averaged interval biomarkers.
///
/// A lead with no T extremum (flat window) or no 5% decay before the signal
/// ends is excluded from the means and reported in `excluded_leads`.
pub fn compute_t_biomarkers(
    signal: &EcgSignal,
    qrs_onset_ms: f64,
    options: &TWaveOptions,
) -> Result<TWaveBiomarkers> {
    if !(qrs_onset_ms.is_finite() && qrs_onset_ms >= 0.0) {
        return Err(Error::invalid(format!(
            "QRS onset must be non-negative, got {qrs_onset_ms}"
        )));
    }
    if !(options.stt_start_ms.is_finite() && options.stt_start_ms >= 0.0) {
        return Err(Error::invalid(format!(
            "ST-T window start must be non-negative, got {}",
            options.stt_start_ms
        )));
    }
    let window_start = (qrs_onset_ms + options.stt_start_ms).ceil() as usize;
    let mut per_lead: [Option<LeadTWave>; 8] = std::array::from_fn(|_| None);
    for (i, lead) in signal.leads().iter().enumerate() {
        per_lead[i] = lead_t_wave(lead, window_start);
    }
    let excluded_leads: Vec<usize> = per_lead
        .iter()
        .enumerate()
        .filter_map(|(i, w)| w.is_none().then_some(i))
        .collect();
    if excluded_leads.len() == 8 {
        return Err(Error::invalid("no lead contains a detectable T wave"));
    }
    let usable = || per_lead.iter().flatten();
    let count = (8 - excluded_leads.len()) as f64;
    let qt_ms = usable().map(|w| w.end_time_ms - qrs_onset_ms).sum::<f64>() / count;
    let tpe_ms = usable().map(|w| w.end_time_ms - w.peak_time_ms).sum::<f64>() / count;
    let t_amplitude = usable().map(|w| w.peak_amplitude.abs()).sum::<f64>() / count;
    let t_polarity =
        std::array::from_fn(|i| per_lead[i].as_ref().map_or(0, |w| w.peak_amplitude.signum() as i8));
    let tpeak_dispersion_v3_v5_ms = match (&per_lead[LEAD_V3], &per_lead[LEAD_V5]) {
        (Some(a), Some(b)) => Some((a.peak_time_ms - b.peak_time_ms).abs()),
        _ => None,
    };
    Ok(TWaveBiomarkers {
        qt_ms,
        tpe_ms,
        t_amplitude,
        t_polarity,
        tpeak_dispersion_v3_v5_ms,
        excluded_leads,
    })
}

/// Per-lead detail of a discrepancy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    /// Combined score: 100·mean((1−PCC)²) + 2·mean(RMSE)/max|target|.
    pub epsilon: f64,
    /// First (correlation) term.
    pub correlation_term: f64,
    /// Second (magnitude) term.
    pub magnitude_term: f64,
    pub pcc: [f64; 8],
    pub rmse: [f64; 8],
    /// Leads where a zero-variance series forced PCC to 0.
    pub zero_variance_leads: Vec<usize>,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (
        a.iter().sum::<f64>() / n,
        b.iter().sum::<f64>() / n,
    );
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Scores how far `sim` sits from `target`: a correlation term punishing
/// shape mismatch plus a magnitude term punishing amplitude mismatch.
pub fn discrepancy(sim: &EcgSignal, target: &EcgSignal) -> Result<Discrepancy> {
    if sim.len() != target.len() {
        return Err(Error::invalid(format!(
            "signals differ in duration: {} vs {} samples",
            sim.len(),
            target.len()
        )));
    }
    let mut pcc = [0.0; 8];
    let mut rmse = [0.0; 8];
    let mut zero_variance_leads = Vec::new();
    for i in 0..8 {
        let (s, t) = (sim.lead(i), target.lead(i));
        pcc[i] = match pearson(s, t) {
            Some(r) => r,
            None => {
                zero_variance_leads.push(i);
                0.0
            }
        };
        let sq = s
            .iter()
            .zip(t)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / s.len() as f64;
        rmse[i] = sq.sqrt();
    }
    let correlation_term =
        100.0 * pcc.iter().map(|r| (1.0 - r) * (1.0 - r)).sum::<f64>() / 8.0;
    let max_target = target.max_abs();
    if max_target == 0.0 {
        return Err(Error::invalid("target ECG is identically zero"));
    }
    let magnitude_term = 2.0 * (rmse.iter().sum::<f64>() / 8.0) / max_target;
    Ok(Discrepancy {
        epsilon: correlation_term + magnitude_term,
        correlation_term,
        magnitude_term,
        pcc,
        rmse,
        zero_variance_leads,
    })
}

/// e(t) = u(t) − u(t − shift), with the trace's first sample standing in for
/// pre-recording history so a resting or constant trace maps to zero.
pub fn unipolar_electrogram(trace: &[f64], shift_ms: usize) -> Vec<f64> {
    trace
        .iter()
        .enumerate()
        .map(|(t, &u)| u - trace[t.saturating_sub(shift_ms)])
        .collect()
}

/// Counts local maxima that rise at least `min_prominence` above the deepest
/// valley separating them from the previous counted maximum.
///
/// The scan keeps one candidate maximum at a time; a new maximum is counted
/// only after the series has dropped by `min_prominence` below the candidate
/// (hysteresis), so sample-level jitter on a single hump counts once.
pub fn count_prominent_maxima(series: &[f64], min_prominence: f64) -> usize {
    assert!(min_prominence >= 0.0, "prominence must be non-negative");
    let mut count = 0usize;
    let mut candidate: Option<f64> = None; // current rising maximum
    let mut valley = f64::INFINITY; // deepest point since last counted max
    for &v in series {
        valley = valley.min(v);
        match candidate {
            None => {
                // Candidate must rise out of the valley by the hysteresis gap.
                if v >= valley + min_prominence {
                    candidate = Some(v);
                }
            }
            Some(peak) => {
                if v > peak {
                    candidate = Some(v);
                } else if v <= peak - min_prominence {
                    // Dropped far enough: the candidate was a real maximum.
                    count += 1;
                    candidate = None;
                    valley = v;
                }
            }
        }
    }
    count
}
