//! APD-labelled action-potential lookup table and its calibration builder.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{
    compute_cell_biomarkers, integrate_ap, voltage_filter, ApTrace, DiffusiveCurrentParams,
    IntegrationSpec, MsCellModel,
};

/// Number of 1-ms samples in every table row.
pub const TRACE_SAMPLES: usize = 600;

/// Maximum |measured APD90 - row label| for a table to be accepted.
const LABEL_TOLERANCE_MS: f64 = 1.0;

/// Maximum |final sample - resting potential| for a row tail.
const TAIL_TOLERANCE_MV: f64 = 1.0;

/// Read access to APD-labelled voltage rows; implemented both by the
/// baseline table and by drug-modified variants.
pub trait TraceRows {
    /// Row for an integer APD label, if present.
    fn row(&self, apd: i32) -> Option<&[f64]>;
    /// Smallest and largest label.
    fn key_range(&self) -> (i32, i32);
    /// Resting potential shared by all rows (mV).
    fn u_rest(&self) -> f64;
}

/// Table of action-potential rows keyed by integer APD90 label (ms).
///
/// Each row holds `TRACE_SAMPLES` voltages at 1-ms spacing with the AP
/// peak at sample 0, so a node activated at `t_a` repolarises (90%) at
/// `t_a + label`.
#[derive(Debug, Clone)]
pub struct LookupTable {
    keys: Vec<i32>,
    rows: Vec<Vec<f64>>,
    u_rest: f64,
}

impl LookupTable {
    /// Validates and assembles a table. Requirements: strictly increasing
    /// keys; rows of exactly `TRACE_SAMPLES` finite samples with the peak
    /// at sample 0; tails settled to rest; re-measured APD90 within
    /// 1 ms of the label.
    pub fn new(keys: Vec<i32>, rows: Vec<Vec<f64>>, u_rest: f64) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::invalid("lookup table must have at least one row"));
        }
        if keys.len() != rows.len() {
            return Err(Error::invalid(format!(
                "{} keys but {} rows",
                keys.len(),
                rows.len()
            )));
        }
        if !u_rest.is_finite() {
            return Err(Error::invalid("u_rest must be finite"));
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("lookup keys must be strictly increasing"));
        }
        for (&key, row) in keys.iter().zip(&rows) {
            if row.len() != TRACE_SAMPLES {
                return Err(Error::invalid(format!(
                    "row {key}: {} samples, expected {TRACE_SAMPLES}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {key}: non-finite sample")));
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if row[0] < max {
                return Err(Error::invalid(format!(
                    "row {key}: peak must sit at sample 0 (sample 0 = {}, max = {max})",
                    row[0]
                )));
            }
            let tail = *row.last().expect("row nonempty");
            if (tail - u_rest).abs() > TAIL_TOLERANCE_MV {
                return Err(Error::invalid(format!(
                    "row {key}: tail {tail:.3} mV not settled to rest {u_rest} mV"
                )));
            }
            let measured = compute_cell_biomarkers(row)?.apd90;
            if (measured - key as f64).abs() > LABEL_TOLERANCE_MS {
                return Err(Error::invalid(format!(
                    "row {key}: measured APD90 {measured:.3} deviates more than \
                     {LABEL_TOLERANCE_MS} ms from label"
                )));
            }
        }
        Ok(Self { keys, rows, u_rest })
    }

    pub fn keys(&self) -> &[i32] {
        &self.keys
    }

    pub fn rows(&self) -> impl Iterator<Item = (i32, &[f64])> {
        self.keys.iter().copied().zip(self.rows.iter().map(Vec::as_slice))
    }
}

impl TraceRows for LookupTable {
    fn row(&self, apd: i32) -> Option<&[f64]> {
        self.keys
            .binary_search(&apd)
            .ok()
            .map(|i| self.rows[i].as_slice())
    }

    fn key_range(&self) -> (i32, i32) {
        (*self.keys.first().expect("nonempty"), *self.keys.last().expect("nonempty"))
    }

    fn u_rest(&self) -> f64 {
        self.u_rest
    }
}

/// One calibrated cell: the gate-closure time constant found to produce
/// the labelled APD90.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedCell {
    pub apd: i32,
    pub tau_close: f64,
}

/// A built table together with the per-row calibration, retained so the
/// same cells can be re-integrated under modified membrane parameters.
#[derive(Debug, Clone)]
pub struct TableBuild {
    pub table: LookupTable,
    pub cells: Vec<CalibratedCell>,
}

/// Build recipe for a lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub apd_lo: i32,
    pub apd_hi: i32,
    pub integration: IntegrationSpec,
    /// Bracketing sweep over the gate-closure constant (ms).
    pub tau_close_lo: f64,
    pub tau_close_hi: f64,
    pub sweep_points: usize,
    /// Bisection stops when |measured APD90 - target| <= tolerance (ms).
    pub tolerance_ms: f64,
}

impl Default for TableSpec {
    fn default() -> Self {
        Self {
            apd_lo: 180,
            apd_hi: 300,
            integration: IntegrationSpec::default(),
            tau_close_lo: 40.0,
            tau_close_hi: 400.0,
            sweep_points: 25,
            tolerance_ms: 0.5,
        }
    }
}

impl TableSpec {
    fn validate(&self) -> Result<()> {
        if self.apd_lo > self.apd_hi {
            return Err(Error::invalid(format!(
                "apd_lo {} exceeds apd_hi {}",
                self.apd_lo, self.apd_hi
            )));
        }
        if self.apd_lo <= 0 {
            return Err(Error::invalid("APD labels must be positive"));
        }
        if !(self.tau_close_lo > 0.0 && self.tau_close_hi > self.tau_close_lo) {
            return Err(Error::invalid("need 0 < tau_close_lo < tau_close_hi"));
        }
        if self.sweep_points < 2 {
            return Err(Error::invalid("sweep needs at least 2 points"));
        }
        if !(self.tolerance_ms > 0.0 && self.tolerance_ms <= LABEL_TOLERANCE_MS) {
            return Err(Error::invalid(format!(
                "tolerance_ms must lie in (0, {LABEL_TOLERANCE_MS}]"
            )));
        }
        self.integration.validate()
    }
}

/// Extracts the peak-aligned `TRACE_SAMPLES`-long row from a paced trace
/// and returns it with the trace's measured APD90.
pub fn peak_aligned_row(trace: &ApTrace) -> Result<(Vec<f64>, f64)> {
    let b = compute_cell_biomarkers(&trace.samples_mv)?;
    let peak = trace
        .samples_mv
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    let end = peak + TRACE_SAMPLES;
    if end > trace.samples_mv.len() {
        return Err(Error::invalid(format!(
            "cycle too short to cut a {TRACE_SAMPLES}-sample row after the peak at {peak} ms"
        )));
    }
    Ok((trace.samples_mv[peak..end].to_vec(), b.apd90))
}

fn apd90_for_tau(
    model: &MsCellModel,
    stim: &DiffusiveCurrentParams,
    spec: &IntegrationSpec,
    tau_close: f64,
) -> Result<(ApTrace, f64)> {
    let trace = integrate_ap(&model.with_tau_close(tau_close), stim, spec)?;
    let apd90 = compute_cell_biomarkers(&trace.samples_mv)?.apd90;
    Ok((trace, apd90))
}

/// Calibrates one row per integer APD label in `[apd_lo, apd_hi]`.
///
/// A geometric sweep over the gate-closure constant brackets each target;
/// bisection then tunes it to `tolerance_ms`. Every accepted trace must
/// pass the voltage plausibility filter.
pub fn build_lookup_table(
    model: &MsCellModel,
    stim: &DiffusiveCurrentParams,
    spec: &TableSpec,
) -> Result<TableBuild> {
    spec.validate()?;
    model.validate()?;

    // Sweep: APD90 as a function of tau_close, geometrically spaced.
    // Points where the beat fails to repolarise within the cycle are
    // unusable for bracketing and drop out.
    let ratio = spec.tau_close_hi / spec.tau_close_lo;
    let taus: Vec<f64> = (0..spec.sweep_points)
        .map(|i| spec.tau_close_lo * ratio.powf(i as f64 / (spec.sweep_points - 1) as f64))
        .collect();
    let sweep: Vec<Option<f64>> = taus
        .par_iter()
        .map(|&tau| apd90_for_tau(model, stim, &spec.integration, tau).ok().map(|(_, a)| a))
        .collect();
    let usable: Vec<(f64, f64)> = taus
        .iter()
        .zip(&sweep)
        .filter_map(|(&t, a)| a.map(|a| (t, a)))
        .collect();
    if usable.len() < 2 {
        return Err(Error::invalid(
            "tau_close sweep produced fewer than two measurable action potentials",
        ));
    }
    if usable.windows(2).any(|w| w[0].1 >= w[1].1) {
        return Err(Error::invalid(
            "APD90 is not strictly increasing over the tau_close sweep",
        ));
    }

    let targets: Vec<i32> = (spec.apd_lo..=spec.apd_hi).collect();
    let calibrated: Result<Vec<(CalibratedCell, Vec<f64>)>> = targets
        .par_iter()
        .map(|&target| {
            let goal = target as f64;
            let i = usable
                .iter()
                .position(|&(_, apd)| apd >= goal)
                .ok_or(Error::Unbracketable {
                    apd: target,
                    lo: spec.tau_close_lo,
                    hi: spec.tau_close_hi,
                })?;
            if i == 0 {
                return Err(Error::Unbracketable {
                    apd: target,
                    lo: spec.tau_close_lo,
                    hi: spec.tau_close_hi,
                });
            }
            let (mut t_lo, mut t_hi) = (usable[i - 1].0, usable[i].0);
            let mut found: Option<(f64, ApTrace)> = None;
            for _ in 0..80 {
                let mid = 0.5 * (t_lo + t_hi);
                let (trace, apd) = apd90_for_tau(model, stim, &spec.integration, mid)?;
                if (apd - goal).abs() <= spec.tolerance_ms {
                    found = Some((mid, trace));
                    break;
                }
                if apd < goal {
                    t_lo = mid;
                } else {
                    t_hi = mid;
                }
            }
            let (tau_close, trace) = found.ok_or_else(|| {
                Error::invalid(format!("bisection failed to reach APD target {target}"))
            })?;
            let biomarkers = trace.biomarkers()?;
            voltage_filter(&biomarkers).map_err(|e| match e {
                Error::Calibration { which, value, lo, hi, .. } => {
                    Error::Calibration { apd: Some(target), which, value, lo, hi }
                }
                other => other,
            })?;
            let (row, _) = peak_aligned_row(&trace)?;
            Ok((CalibratedCell { apd: target, tau_close }, row))
        })
        .collect();
    let calibrated = calibrated?;

    let cells: Vec<CalibratedCell> = calibrated.iter().map(|(c, _)| *c).collect();
    if cells.windows(2).any(|w| w[0].tau_close >= w[1].tau_close) {
        return Err(Error::invalid(
            "calibrated tau_close is not strictly increasing with the APD label",
        ));
    }
    let rows: Vec<Vec<f64>> = calibrated.into_iter().map(|(_, r)| r).collect();
    let table = LookupTable::new(cells.iter().map(|c| c.apd).collect(), rows, model.u_rest)?;
    Ok(TableBuild { table, cells })
}

/// Smallest multiple of `granularity` (up to `max_amplitude`) that excites
/// every model in `family` on every beat of the pacing protocol.
/// Excitation of a beat = its peak crosses the gate threshold. Evaluating
/// under the same protocol as the table build matters: an amplitude that
/// fires a primed cell once can still lose 2:1 capture under pacing.
pub fn minimum_exciting_amplitude(
    family: &[MsCellModel],
    stim: &DiffusiveCurrentParams,
    spec: &IntegrationSpec,
    granularity: f64,
    max_amplitude: f64,
) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::invalid("empty model family"));
    }
    if !(granularity > 0.0) || max_amplitude < granularity {
        return Err(Error::invalid("need 0 < granularity <= max_amplitude"));
    }
    let mut k = 1u32;
    loop {
        let amp = granularity * k as f64;
        if amp > max_amplitude + 1e-12 {
            return Err(Error::FailedExcitation(format!(
                "no amplitude up to {max_amplitude} uA/uF excites the whole family"
            )));
        }
        let all_fire = family
            .par_iter()
            .map(|model| {
                let trace = integrate_ap(model, &stim.with_amplitude(amp), spec)?;
                let u_gate = model.u_rest + model.v_gate * model.span();
                Ok::<bool, Error>(trace.beat_peaks_mv.iter().all(|&p| p > u_gate))
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .all(|b| b);
        if all_fire {
            return Ok(amp);
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellular::DEFAULT_STIM_AMPLITUDE;
    use std::sync::OnceLock;

    fn small_build() -> &'static TableBuild {
        static BUILD: OnceLock<TableBuild> = OnceLock::new();
        BUILD.get_or_init(|| {
            build_lookup_table(
                &MsCellModel::default(),
                &DiffusiveCurrentParams::default(),
                &TableSpec { apd_lo: 200, apd_hi: 210, ..Default::default() },
            )
            .unwrap()
        })
    }

    #[test]
    fn built_rows_match_labels_within_tolerance() {
        let build = small_build();
        assert_eq!(build.table.keys().len(), 11);
        for (key, row) in build.table.rows() {
            assert_eq!(row.len(), TRACE_SAMPLES);
            let measured = compute_cell_biomarkers(row).unwrap().apd90;
            assert!(
                (measured - key as f64).abs() <= 1.0,
                "row {key}: measured {measured}"
            );
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(row[0], max, "row {key} not peak-aligned");
            assert!((row[TRACE_SAMPLES - 1] - (-85.0)).abs() < 1.0);
        }
    }

    #[test]
    fn calibration_constant_increases_with_label() {
        let cells = &small_build().cells;
        assert!(cells.windows(2).all(|w| w[0].tau_close < w[1].tau_close));
        // Anchors from an independent fine-step integration of the same
        // dynamics: APD90 200 ms needs tau_close near 105, 210 ms near 111.
        assert!((90.0..120.0).contains(&cells[0].tau_close), "{}", cells[0].tau_close);
    }

    #[test]
    fn row_lookup_by_label() {
        let table = &small_build().table;
        assert!(table.row(200).is_some());
        assert!(table.row(205).is_some());
        assert!(table.row(199).is_none());
        assert!(table.row(211).is_none());
        assert_eq!(table.key_range(), (200, 210));
        assert_eq!(table.u_rest(), -85.0);
    }

    #[test]
    fn unbracketable_targets_are_reported() {
        let err = build_lookup_table(
            &MsCellModel::default(),
            &DiffusiveCurrentParams::default(),
            &TableSpec { apd_lo: 60, apd_hi: 60, ..Default::default() },
        )
        .unwrap_err();
        match err {
            Error::Unbracketable { apd: 60, .. } => {}
            other => panic!("expected unbracketable, got {other:?}"),
        }
        let err = build_lookup_table(
            &MsCellModel::default(),
            &DiffusiveCurrentParams::default(),
            &TableSpec { apd_lo: 700, apd_hi: 700, ..Default::default() },
        )
        .unwrap_err();
        match err {
            Error::Unbracketable { apd: 700, .. } => {}
            other => panic!("expected unbracketable, got {other:?}"),
        }
    }

    #[test]
    fn implausible_target_fails_the_filter() {
        // APD90 of 450 ms is reachable by the dynamics but outside the
        // plausibility range, so the build must refuse it.
        let err = build_lookup_table(
            &MsCellModel::default(),
            &DiffusiveCurrentParams::default(),
            &TableSpec { apd_lo: 450, apd_hi: 450, ..Default::default() },
        )
        .unwrap_err();
        match err {
            Error::Calibration { apd: Some(450), which: "apd90", .. } => {}
            other => panic!("expected calibration rejection, got {other:?}"),
        }
    }

    #[test]
    fn structural_validation_rejects_malformed_tables() {
        let build = small_build();
        let (keys, rows): (Vec<i32>, Vec<Vec<f64>>) =
            build.table.rows().map(|(k, r)| (k, r.to_vec())).unzip();

        // Key/row count mismatch.
        assert!(LookupTable::new(keys[..1].to_vec(), rows.clone(), -85.0).is_err());
        // Non-increasing keys.
        let mut bad_keys = keys.clone();
        bad_keys.swap(0, 1);
        assert!(LookupTable::new(bad_keys, rows.clone(), -85.0).is_err());
        // Wrong row length.
        let mut bad = rows.clone();
        bad[0].pop();
        assert!(LookupTable::new(keys.clone(), bad, -85.0).is_err());
        // Peak not at sample 0.
        let mut bad = rows.clone();
        bad[0][10] = bad[0][0] + 5.0;
        assert!(LookupTable::new(keys.clone(), bad, -85.0).is_err());
        // Tail pulled off rest.
        let mut bad = rows.clone();
        *bad[0].last_mut().unwrap() = -70.0;
        assert!(LookupTable::new(keys.clone(), bad, -85.0).is_err());
        // Label inconsistent with the row's measured APD90.
        let shifted: Vec<i32> = keys.iter().map(|k| k + 5).collect();
        assert!(LookupTable::new(shifted, rows.clone(), -85.0).is_err());
        // The untouched inputs stay valid.
        assert!(LookupTable::new(keys, rows, -85.0).is_ok());
    }

    #[test]
    fn minimum_amplitude_matches_frozen_value() {
        let family: Vec<MsCellModel> = [94.0, 110.0, 130.0, 150.0, 165.0]
            .iter()
            .map(|&t| MsCellModel::default().with_tau_close(t))
            .collect();
        let amp = minimum_exciting_amplitude(
            &family,
            &DiffusiveCurrentParams::default(),
            &IntegrationSpec::default(),
            0.5,
            20.0,
        )
        .unwrap();
        assert_eq!(amp, DEFAULT_STIM_AMPLITUDE);
    }

    #[test]
    fn single_beat_threshold_underestimates_paced_capture() {
        // The family fires a primed single beat at 3.5 uA/uF, but paced
        // capture needs 4.0: the last beat of the default protocol stays
        // subthreshold at 3.5 for slowly-repolarising cells.
        let slow = [MsCellModel::default().with_tau_close(165.0)];
        let stim = DiffusiveCurrentParams::default();
        let one_beat = IntegrationSpec { beats: 1, ..Default::default() };
        let amp1 =
            minimum_exciting_amplitude(&slow, &stim, &one_beat, 0.5, 20.0).unwrap();
        let amp4 = minimum_exciting_amplitude(
            &slow,
            &stim,
            &IntegrationSpec::default(),
            0.5,
            20.0,
        )
        .unwrap();
        assert_eq!(amp1, 3.5);
        assert_eq!(amp4, 4.0);
        assert!(amp4 > amp1);
    }
}
