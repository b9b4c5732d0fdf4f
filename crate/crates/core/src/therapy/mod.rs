//! Dose-dependent channel block and population-level dose-response curves.
//!
//! A compound is described by a schedule of (concentration, block fraction)
//! pairs. Block scales the outward-current time constant of the cell model,
//! prolonging repolarisation; the APD-labelled lookup table is re-integrated
//! under each blocked model and the ECG pipeline re-run on a deterministic
//! subsample of an inferred parameter population.

use rand::Rng;
use rayon::prelude::*;

use crate::cellular::{
    integrate_ap, peak_aligned_row, DiffusiveCurrentParams, IntegrationSpec, MsCellModel,
    TableBuild, TraceRows,
};
use crate::ecg::TWaveBiomarkers;
use crate::error::{Error, Result};
use crate::repolarisation::ApdGradientParams;
use crate::rng;

/// Fraction of the population evaluated per dose by default.
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.05;

/// Share of the cell's lumped repolarising current carried by the blocked
/// channel class.
///
/// The two-current model folds every repolarising channel into its single
/// outward current, so a compound blocking one channel class by fraction
/// `f` weakens that lump by only a share of `f`. The share also keeps the
/// blocked cell inside its stable regime: weakening the entire lump by the
/// upper schedule fractions (tau_out beyond ~16 ms for the default cell)
/// removes the reachable resting state — after each beat the recovering
/// gate re-arms the inward current faster than the weakened outward
/// current can pull the voltage down, and the cell re-excites without a
/// stimulus. Mapping channel block 1:1 onto the lump would therefore push
/// every cell in the table out of its physiological regime at high dose,
/// which no pacing protocol can mask.
pub const BLOCKED_CURRENT_SHARE: f64 = 0.5;

/// Maximum |final sample - resting potential| for a rebuilt row tail (mV).
const TAIL_TOLERANCE_MV: f64 = 1.0;

/// Stream tag for the population subsample draw.
const SAMPLE_STREAM: u64 = 0xD05E;

/// One dose level: concentration in nM and the channel-block fraction it
/// produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseEntry {
    pub dose_nm: f64,
    pub block: f64,
}

/// Concentration-to-block schedule for one compound.
///
/// Concentrations must be strictly increasing and block fractions
/// non-decreasing in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseTable {
    entries: Vec<DoseEntry>,
}

impl DoseTable {
    pub fn new(entries: Vec<DoseEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("dose table must contain at least one entry"));
        }
        for e in &entries {
            if !(e.dose_nm.is_finite() && e.dose_nm > 0.0) {
                return Err(Error::invalid(format!(
                    "dose must be a positive concentration, got {} nM",
                    e.dose_nm
                )));
            }
            if !(e.block >= 0.0 && e.block < 1.0) {
                return Err(Error::invalid(format!(
                    "block fraction must lie in [0, 1), got {}",
                    e.block
                )));
            }
        }
        if entries.windows(2).any(|w| w[0].dose_nm >= w[1].dose_nm) {
            return Err(Error::invalid("doses must be strictly increasing"));
        }
        if entries.windows(2).any(|w| w[0].block > w[1].block) {
            return Err(Error::invalid(
                "block fraction must be non-decreasing with dose",
            ));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[DoseEntry] {
        &self.entries
    }
}

/// Dofetilide concentration-to-block schedule.
pub fn dofetilide_table() -> DoseTable {
    let pairs = [
        (0.05, 0.40),
        (1.0, 0.50),
        (2.0, 0.60),
        (3.0, 0.66),
        (4.0, 0.70),
        (5.0, 0.73),
        (6.0, 0.75),
    ];
    DoseTable::new(
        pairs
            .iter()
            .map(|&(dose_nm, block)| DoseEntry { dose_nm, block })
            .collect(),
    )
    .expect("static schedule is valid")
}

/// Applies a fractional block of the outward current:
/// `tau_out' = tau_out / (1 - block)`.
///
/// Zero block returns the model unchanged; `block >= 1` (total block) is
/// rejected since the cell could no longer repolarise at all.
pub fn apply_block(model: &MsCellModel, block: f64) -> Result<MsCellModel> {
    if !(block >= 0.0 && block < 1.0) {
        return Err(Error::invalid(format!(
            "block fraction must lie in [0, 1), got {block}"
        )));
    }
    Ok(MsCellModel {
        tau_out: model.tau_out / (1.0 - block),
        ..model.clone()
    })
}

/// Lookup table re-integrated under a channel block.
///
/// Row identity (the integer key) is inherited from the baseline table —
/// each key still names the same calibrated cell — while the stored traces
/// and measured APD90s reflect the blocked dynamics. A node assigned key
/// `k` at baseline therefore keeps its cell, now with prolonged
/// repolarisation.
#[derive(Debug, Clone)]
pub struct BlockedTable {
    block: f64,
    keys: Vec<i32>,
    rows: Vec<Vec<f64>>,
    measured_apd90: Vec<f64>,
    u_rest: f64,
}

impl BlockedTable {
    pub fn block(&self) -> f64 {
        self.block
    }

    pub fn keys(&self) -> &[i32] {
        &self.keys
    }

    /// APD90 measured from the re-integrated trace for a baseline key.
    pub fn measured_apd90(&self, key: i32) -> Option<f64> {
        self.keys
            .binary_search(&key)
            .ok()
            .map(|i| self.measured_apd90[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = (i32, &[f64])> {
        self.keys
            .iter()
            .copied()
            .zip(self.rows.iter().map(Vec::as_slice))
    }
}

impl TraceRows for BlockedTable {
    fn row(&self, apd: i32) -> Option<&[f64]> {
        self.keys
            .binary_search(&apd)
            .ok()
            .map(|i| self.rows[i].as_slice())
    }

    fn key_range(&self) -> (i32, i32) {
        (
            *self.keys.first().expect("nonempty"),
            *self.keys.last().expect("nonempty"),
        )
    }

    fn u_rest(&self) -> f64 {
        self.u_rest
    }
}

/// Re-integrates every calibrated cell of `build` with its outward current
/// weakened by the lumped fraction `block`, keeping key identity.
///
/// `stim` and `integration` must be the protocol the baseline table was
/// built with; at zero block the result then reproduces the baseline rows
/// bit-exactly. Fails when any blocked beat no longer yields a measurable,
/// rest-settled action potential — the signature of an unphysiologically
/// strong block.
pub fn rebuild_blocked_table(
    model: &MsCellModel,
    stim: &DiffusiveCurrentParams,
    integration: &IntegrationSpec,
    build: &TableBuild,
    block: f64,
) -> Result<BlockedTable> {
    let blocked = apply_block(model, block)?;
    let u_rest = model.u_rest;
    let rebuilt: Result<Vec<(Vec<f64>, f64)>> = build
        .cells
        .par_iter()
        .map(|cell| {
            let trace = integrate_ap(&blocked.with_tau_close(cell.tau_close), stim, integration)?;
            let (row, apd90) = peak_aligned_row(&trace)?;
            let tail = *row.last().expect("row nonempty");
            if (tail - u_rest).abs() > TAIL_TOLERANCE_MV {
                return Err(Error::invalid(format!(
                    "cell {} under block {block}: tail {tail:.2} mV not settled to rest",
                    cell.apd
                )));
            }
            Ok((row, apd90))
        })
        .collect();
    let rebuilt = rebuilt?;
    let (rows, measured_apd90) = rebuilt.into_iter().unzip();
    Ok(BlockedTable {
        block,
        keys: build.cells.iter().map(|c| c.apd).collect(),
        rows,
        measured_apd90,
        u_rest,
    })
}

/// Deterministically samples `ceil(fraction * n)` distinct indices from
/// `0..n`, returned ascending. The draw depends only on `(n, fraction,
/// seed)`, never on thread count.
pub fn sample_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("population is empty"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "sample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let k = ((fraction * n as f64).ceil() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, &[SAMPLE_STREAM]);
    // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut chosen: Vec<usize> = idx[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Outcome at one dose over the sampled models.
#[derive(Debug, Clone)]
pub struct DoseOutcome {
    pub dose_nm: f64,
    pub block: f64,
    /// Per-model biomarkers in `sampled_indices` order; `None` when the
    /// blocked-table rebuild failed at this dose.
    pub biomarkers: Option<Vec<TWaveBiomarkers>>,
    /// Why the rebuild failed, when it did.
    pub rebuild_error: Option<String>,
}

/// Dose-response evaluation over a sampled subset of a parameter population.
#[derive(Debug, Clone)]
pub struct DoseResponse {
    /// Indices into the input population, ascending.
    pub sampled_indices: Vec<usize>,
    /// Drug-free biomarkers per sampled model.
    pub baseline: Vec<TWaveBiomarkers>,
    pub doses: Vec<DoseOutcome>,
}

/// Summary statistics for one row of the dose-response table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseRow {
    pub dose_nm: f64,
    pub block: f64,
    pub qt_mean: f64,
    pub qt_sd: f64,
    pub tpe_mean: f64,
    pub tpe_sd: f64,
    /// Number of models summarized; 0 marks a dose whose rebuild failed.
    pub n: usize,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn stats_row(dose_nm: f64, block: f64, biomarkers: Option<&[TWaveBiomarkers]>) -> DoseRow {
    match biomarkers {
        Some(bm) if !bm.is_empty() => {
            let qt: Vec<f64> = bm.iter().map(|b| b.qt_ms).collect();
            let tpe: Vec<f64> = bm.iter().map(|b| b.tpe_ms).collect();
            let (qt_mean, qt_sd) = mean_sd(&qt);
            let (tpe_mean, tpe_sd) = mean_sd(&tpe);
            DoseRow {
                dose_nm,
                block,
                qt_mean,
                qt_sd,
                tpe_mean,
                tpe_sd,
                n: bm.len(),
            }
        }
        _ => DoseRow {
            dose_nm,
            block,
            qt_mean: f64::NAN,
            qt_sd: f64::NAN,
            tpe_mean: f64::NAN,
            tpe_sd: f64::NAN,
            n: 0,
        },
    }
}

impl DoseResponse {
    /// Drug-free row (dose 0) followed by one row per dose, in schedule
    /// order. A failed dose keeps its place with `n = 0` and NaN statistics.
    pub fn summary(&self) -> Vec<DoseRow> {
        let mut out = vec![stats_row(0.0, 0.0, Some(&self.baseline))];
        out.extend(
            self.doses
                .iter()
                .map(|d| stats_row(d.dose_nm, d.block, d.biomarkers.as_deref())),
        );
        out
    }
}

/// Evaluates a dose-response curve over a deterministic subsample of a
/// parameter population.
///
/// Each schedule entry's channel-block fraction is translated to a lumped
/// outward-current block via [`BLOCKED_CURRENT_SHARE`], and one blocked
/// table is rebuilt per dose (a rebuild failure flags that dose; the others
/// proceed). `pipeline` maps each sampled parameter set, evaluated against
/// a given table, to T-wave biomarkers. The drug-free row uses the baseline
/// table through the same pipeline, so a zero-block dose reproduces it
/// bit-exactly. The (model, dose) grid evaluates in parallel with
/// deterministic ordering.
#[allow(clippy::too_many_arguments)]
pub fn run_dose_response<F>(
    population: &[ApdGradientParams],
    sample_fraction: f64,
    doses: &DoseTable,
    model: &MsCellModel,
    stim: &DiffusiveCurrentParams,
    integration: &IntegrationSpec,
    build: &TableBuild,
    pipeline: F,
    seed: u64,
) -> Result<DoseResponse>
where
    F: Fn(&ApdGradientParams, &(dyn TraceRows + Sync)) -> Result<TWaveBiomarkers> + Sync,
{
    let sampled_indices = sample_indices(population.len(), sample_fraction, seed)?;
    let thetas: Vec<&ApdGradientParams> =
        sampled_indices.iter().map(|&i| &population[i]).collect();

    let tables: Vec<std::result::Result<BlockedTable, Error>> = doses
        .entries()
        .iter()
        .map(|e| {
            rebuild_blocked_table(
                model,
                stim,
                integration,
                build,
                BLOCKED_CURRENT_SHARE * e.block,
            )
        })
        .collect();

    let baseline = thetas
        .par_iter()
        .map(|theta| pipeline(theta, &build.table))
        .collect::<Result<Vec<_>>>()?;

    let evaluated: Vec<Result<Option<Vec<TWaveBiomarkers>>>> = tables
        .par_iter()
        .map(|table| match table {
            Err(_) => Ok(None),
            Ok(t) => thetas
                .par_iter()
                .map(|theta| pipeline(theta, t))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        })
        .collect();

    let mut out = Vec::with_capacity(doses.entries().len());
    for ((entry, table), biomarkers) in doses.entries().iter().zip(&tables).zip(evaluated) {
        out.push(DoseOutcome {
            dose_nm: entry.dose_nm,
            block: entry.block,
            biomarkers: biomarkers?,
            rebuild_error: table.as_ref().err().map(|e| e.to_string()),
        });
    }
    Ok(DoseResponse {
        sampled_indices,
        baseline,
        doses: out,
    })
}
