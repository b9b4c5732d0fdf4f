//! Action-potential biomarkers and plausibility screening.

use crate::error::{Error, Result};

use super::ApTrace;

/// Inclusive plausibility range for one biomarker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiomarkerRange {
    pub lo: f64,
    pub hi: f64,
}

impl BiomarkerRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

pub const APD40_RANGE: BiomarkerRange = BiomarkerRange::new(85.0, 320.0);
pub const APD50_RANGE: BiomarkerRange = BiomarkerRange::new(110.0, 350.0);
pub const APD90_RANGE: BiomarkerRange = BiomarkerRange::new(180.0, 440.0);
pub const TRIANGULATION_RANGE: BiomarkerRange = BiomarkerRange::new(50.0, 150.0);
pub const DVDT_MAX_RANGE: BiomarkerRange = BiomarkerRange::new(100.0, 1000.0);
pub const VPEAK_RANGE: BiomarkerRange = BiomarkerRange::new(10.0, 55.0);
pub const RMP_RANGE: BiomarkerRange = BiomarkerRange::new(-95.0, -80.0);
pub const CTD50_RANGE: BiomarkerRange = BiomarkerRange::new(120.0, 420.0);
pub const CTD90_RANGE: BiomarkerRange = BiomarkerRange::new(220.0, 785.0);

/// Scalar summaries of a single action potential (times in ms, mV).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBiomarkers {
    pub apd40: f64,
    pub apd50: f64,
    pub apd90: f64,
    /// apd90 - apd40: late-repolarisation shape index.
    pub triangulation: f64,
    /// From 1-ms samples unless overridden by the integrator's raw grid.
    pub dvdt_max: f64,
    pub v_peak: f64,
    pub rmp: f64,
}

/// Minimum peak-to-rest excursion for a trace to count as an excitation.
const MIN_AP_AMPLITUDE_MV: f64 = 40.0;

/// Measures biomarkers on a 1-ms-sampled voltage trace.
///
/// APDx runs from the AP peak to the time voltage first falls below
/// x% repolarisation between peak and minimum, sub-ms by linear
/// interpolation. Fails if the trace never fires or never repolarises.
pub fn compute_cell_biomarkers(samples_mv: &[f64]) -> Result<CellBiomarkers> {
    if samples_mv.len() < 3 {
        return Err(Error::invalid("trace too short for biomarkers"));
    }
    if samples_mv.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("trace contains non-finite samples"));
    }
    let (peak_idx, v_peak) = samples_mv
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let rmp = samples_mv.iter().cloned().fold(f64::INFINITY, f64::min);
    if v_peak - rmp < MIN_AP_AMPLITUDE_MV {
        return Err(Error::FailedExcitation(format!(
            "peak-to-rest excursion {:.2} mV below {MIN_AP_AMPLITUDE_MV} mV",
            v_peak - rmp
        )));
    }

    let apd = |fraction: f64| -> Result<f64> {
        let threshold = v_peak - fraction * (v_peak - rmp);
        for i in peak_idx..samples_mv.len() - 1 {
            let (a, b) = (samples_mv[i], samples_mv[i + 1]);
            if a >= threshold && b < threshold {
                let t = i as f64 + (a - threshold) / (a - b);
                return Ok(t - peak_idx as f64);
            }
        }
        Err(Error::NotRepolarised(format!(
            "trace never crosses {:.0}% repolarisation",
            fraction * 100.0
        )))
    };

    let apd40 = apd(0.40)?;
    let apd50 = apd(0.50)?;
    let apd90 = apd(0.90)?;

    let dvdt_max = samples_mv
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(CellBiomarkers {
        apd40,
        apd50,
        apd90,
        triangulation: apd90 - apd40,
        dvdt_max,
        v_peak,
        rmp,
    })
}

impl ApTrace {
    /// Biomarkers with the upstroke velocity taken from the integration
    /// grid rather than the 1-ms resampling.
    pub fn biomarkers(&self) -> Result<CellBiomarkers> {
        let mut b = compute_cell_biomarkers(&self.samples_mv)?;
        b.dvdt_max = self.dvdt_max;
        Ok(b)
    }
}

/// Plausibility screen on the biomarkers a two-current surrogate can
/// express: APD90, peak voltage, and resting potential. Upstroke velocity
/// and late-repolarisation shape are intrinsic to the surrogate's reduced
/// dynamics, so screening them would reject every parameterisation.
pub fn voltage_filter(b: &CellBiomarkers) -> Result<()> {
    for (which, value, range) in [
        ("apd90", b.apd90, APD90_RANGE),
        ("v_peak", b.v_peak, VPEAK_RANGE),
        ("rmp", b.rmp, RMP_RANGE),
    ] {
        if !range.contains(value) {
            return Err(Error::Calibration {
                apd: None,
                which,
                value,
                lo: range.lo,
                hi: range.hi,
            });
        }
    }
    Ok(())
}
