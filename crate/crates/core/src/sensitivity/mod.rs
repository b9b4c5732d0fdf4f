//! Variance-based global sensitivity analysis of T-wave biomarkers.
//!
//! Parameter space is explored with a Saltelli design built on an
//! Owen-scrambled Sobol' sequence: a 2d-dimensional low-discrepancy stream
//! supplies two independent d-dimensional matrices A and B, plus the 2d
//! column-swapped hybrids ABᵢ/BAᵢ. First-order indices average the two
//! classic covariance estimators; total-order indices average the two
//! Jansen difference estimators. Confidence half-widths come from a
//! bootstrap over the base sample families.

use crate::ecg::TWaveBiomarkers;
use crate::error::{Error, Result};
use crate::inference::ThetaBounds;
use crate::repolarisation::ApdGradientParams;
use crate::rng;
use rand::Rng;
use rayon::prelude::*;

/// Bootstrap resamples behind every confidence half-width.
pub const BOOTSTRAP_RESAMPLES: usize = 100;

/// Half-width multiplier: normal 95% interval.
const CI_SIGMA: f64 = 1.96;

/// Relative floor below which output variance counts as zero.
const DEGENERATE_VARIANCE_FLOOR: f64 = 1e-20;

/// Outputs analysed by [`run_sensitivity`], in report order.
pub const BIOMARKER_NAMES: [&str; 5] = [
    "qt_ms",
    "tpe_ms",
    "t_amplitude",
    "polarity_mean",
    "tpeak_dispersion_v3_v5_ms",
];

/// Saltelli design: `(2d + 2) * base_n` parameter rows.
///
/// Row layout by block: A (base_n rows), B, then AB_0..AB_{d-1} (A with
/// column i replaced from B), then BA_0..BA_{d-1} (the reverse swap).
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliSample {
    d: usize,
    base_n: usize,
    rows: Vec<Vec<f64>>,
}

impl SaltelliSample {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn base_n(&self) -> usize {
        self.base_n
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Flat row index for (block, family): blocks 0 = A, 1 = B,
    /// 2+i = AB_i, 2+d+i = BA_i.
    fn index(&self, block: usize, family: usize) -> usize {
        block * self.base_n + family
    }
}

fn fold_seed(seed: u64) -> u32 {
    (seed ^ (seed >> 32)) as u32
}

/// Builds the Saltelli design for uniform priors over `bounds`.
pub fn saltelli_sample(
    bounds: &[(f64, f64)],
    base_n: usize,
    seed: u64,
) -> Result<SaltelliSample> {
    let d = bounds.len();
    if d == 0 {
        return Err(Error::invalid("need at least one parameter"));
    }
    if 2 * d > sobol_burley::NUM_DIMENSIONS as usize {
        return Err(Error::invalid(format!(
            "dimension {d} exceeds the low-discrepancy budget"
        )));
    }
    if base_n < 2 || !base_n.is_power_of_two() || base_n > (1 << 16) {
        return Err(Error::invalid(format!(
            "base_n must be a power of two in [2, 65536], got {base_n}"
        )));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::invalid(format!(
                "bounds for parameter {i} must be finite with lo <= hi, got [{lo}, {hi}]"
            )));
        }
    }

    let seed32 = fold_seed(seed);
    let point = |family: usize, offset: usize, dim: usize| -> f64 {
        let u = sobol_burley::sample(family as u32, (offset + dim) as u32, seed32) as f64;
        bounds[dim].0 + u * (bounds[dim].1 - bounds[dim].0)
    };

    let mut rows = vec![vec![0.0; d]; (2 * d + 2) * base_n];
    for family in 0..base_n {
        let a: Vec<f64> = (0..d).map(|k| point(family, 0, k)).collect();
        let b: Vec<f64> = (0..d).map(|k| point(family, d, k)).collect();
        for i in 0..d {
            let mut ab = a.clone();
            ab[i] = b[i];
            let mut ba = b.clone();
            ba[i] = a[i];
            rows[(2 + i) * base_n + family] = ab;
            rows[(2 + d + i) * base_n + family] = ba;
        }
        rows[family] = a;
        rows[base_n + family] = b;
    }
    Ok(SaltelliSample { d, base_n, rows })
}

/// First-order and total-order estimates for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexEstimate {
    pub s1: f64,
    pub s1_ci: f64,
    pub st: f64,
    pub st_ci: f64,
}

/// Sobol indices for one output.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolResult {
    /// Per parameter, in sample-column order.
    pub estimates: Vec<IndexEstimate>,
    /// True when the output variance over the design was (numerically)
    /// zero; all estimates are reported as 0 in that case.
    pub degenerate: bool,
    /// Sample families that survived pairwise exclusion.
    pub used_base_points: usize,
}

/// Per-family output values, gathered once for estimator and bootstrap use.
struct FamilyOutputs {
    a: Vec<f64>,
    b: Vec<f64>,
    ab: Vec<Vec<f64>>,
    ba: Vec<Vec<f64>>,
}

impl FamilyOutputs {
    fn gather(sample: &SaltelliSample, outputs: &[Option<f64>]) -> Self {
        let d = sample.d;
        let valid = |family: usize| -> bool {
            (0..2 * d + 2).all(|block| {
                outputs[sample.index(block, family)].is_some_and(f64::is_finite)
            })
        };
        let families: Vec<usize> = (0..sample.base_n).filter(|&f| valid(f)).collect();
        let grab = |block: usize| -> Vec<f64> {
            families
                .iter()
                .map(|&f| outputs[sample.index(block, f)].unwrap())
                .collect()
        };
        FamilyOutputs {
            a: grab(0),
            b: grab(1),
            ab: (0..d).map(|i| grab(2 + i)).collect(),
            ba: (0..d).map(|i| grab(2 + d + i)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.a.len()
    }

    /// Point estimates over the families selected by `pick` (identity for
    /// the main estimate, a resample for bootstrap): (s1, st) per
    /// parameter, or `None` when the selected outputs are degenerate.
    fn estimate(&self, pick: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = pick.len() as f64;
        let mut mean = 0.0;
        for &j in pick {
            mean += self.a[j] + self.b[j];
        }
        mean /= 2.0 * n;
        let mut variance = 0.0;
        for &j in pick {
            variance += (self.a[j] - mean).powi(2) + (self.b[j] - mean).powi(2);
        }
        variance /= 2.0 * n;
        if variance <= DEGENERATE_VARIANCE_FLOOR * (1.0 + mean * mean) {
            return None;
        }

        let d = self.ab.len();
        let mut s1 = vec![0.0; d];
        let mut st = vec![0.0; d];
        for i in 0..d {
            let (mut cov_a, mut cov_b, mut jan_a, mut jan_b) = (0.0, 0.0, 0.0, 0.0);
            for &j in pick {
                // Centering the multiplier makes the estimator exactly
                // shift-invariant; the paired differences already are.
                cov_a += (self.b[j] - mean) * (self.ab[i][j] - self.a[j]);
                cov_b += (self.a[j] - mean) * (self.ba[i][j] - self.b[j]);
                jan_a += (self.a[j] - self.ab[i][j]).powi(2);
                jan_b += (self.b[j] - self.ba[i][j]).powi(2);
            }
            s1[i] = 0.5 * (cov_a + cov_b) / n / variance;
            st[i] = 0.5 * (jan_a / (2.0 * n) + jan_b / (2.0 * n)) / variance;
        }
        Some((s1, st))
    }
}

/// Sobol indices from a Saltelli design and its per-row outputs.
///
/// `outputs[r]` is the model output for `sample.rows()[r]`; `None` marks a
/// failed evaluation, which excludes that row's whole sample family. A
/// (numerically) constant output yields all-zero indices with the
/// `degenerate` flag set.
pub fn sobol_indices(
    sample: &SaltelliSample,
    outputs: &[Option<f64>],
    seed: u64,
) -> Result<SobolResult> {
    if outputs.len() != sample.rows.len() {
        return Err(Error::invalid(format!(
            "{} outputs for {} sample rows",
            outputs.len(),
            sample.rows.len()
        )));
    }
    let fam = FamilyOutputs::gather(sample, outputs);
    let n = fam.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "only {n} of {} sample families produced valid outputs",
            sample.base_n
        )));
    }
    let d = sample.d;

    let all: Vec<usize> = (0..n).collect();
    let Some((s1, st)) = fam.estimate(&all) else {
        return Ok(SobolResult {
            estimates: vec![
                IndexEstimate {
                    s1: 0.0,
                    s1_ci: 0.0,
                    st: 0.0,
                    st_ci: 0.0
                };
                d
            ],
            degenerate: true,
            used_base_points: n,
        });
    };

    // Bootstrap over families for confidence half-widths.
    let mut rng = rng::stream(seed, &[0xB007]);
    let mut s1_samples: Vec<Vec<f64>> = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); d];
    let mut st_samples: Vec<Vec<f64>> = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); d];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let pick: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        if let Some((rs1, rst)) = fam.estimate(&pick) {
            for i in 0..d {
                s1_samples[i].push(rs1[i]);
                st_samples[i].push(rst[i]);
            }
        }
    }
    let halfwidth = |xs: &[f64]| -> f64 {
        if xs.len() < 2 {
            return f64::INFINITY;
        }
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        CI_SIGMA * var.sqrt()
    };

    let estimates = (0..d)
        .map(|i| IndexEstimate {
            s1: s1[i],
            s1_ci: halfwidth(&s1_samples[i]),
            st: st[i],
            st_ci: halfwidth(&st_samples[i]),
        })
        .collect();
    Ok(SobolResult {
        estimates,
        degenerate: false,
        used_base_points: n,
    })
}

/// Sensitivity of one biomarker to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSensitivity {
    pub output: &'static str,
    pub sobol: SobolResult,
    /// Pearson correlation between each parameter column and the output,
    /// over all rows with a valid output (0 when undefined).
    pub pearson: Vec<f64>,
    /// Sample families dropped because some row in them failed.
    pub excluded_base_points: usize,
}

/// Sensitivity report across all biomarkers.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub base_n: usize,
    pub outputs: Vec<OutputSensitivity>,
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

fn extract(biomarkers: &TWaveBiomarkers, output: usize) -> Option<f64> {
    let v = match output {
        0 => biomarkers.qt_ms,
        1 => biomarkers.tpe_ms,
        2 => biomarkers.t_amplitude,
        3 => biomarkers.polarity_mean(),
        4 => biomarkers.tpeak_dispersion_v3_v5_ms?,
        _ => unreachable!("unknown output index"),
    };
    v.is_finite().then_some(v)
}

/// Full Saltelli sweep of a biomarker pipeline over the six repolarisation
/// parameters: Sobol indices plus Pearson correlations per biomarker.
pub fn run_sensitivity<F>(
    pipeline: F,
    bounds: &ThetaBounds,
    base_n: usize,
    seed: u64,
) -> Result<SensitivityReport>
where
    F: Fn(&ApdGradientParams) -> Result<TWaveBiomarkers> + Sync,
{
    let pairs: Vec<(f64, f64)> = (0..6).map(|d| (bounds.lo[d], bounds.hi[d])).collect();
    let sample = saltelli_sample(&pairs, base_n, seed)?;
    let evals: Vec<Option<TWaveBiomarkers>> = sample
        .rows()
        .par_iter()
        .map(|row| {
            let arr: [f64; 6] = row.as_slice().try_into().expect("six columns");
            pipeline(&ApdGradientParams::from_array(arr)).ok()
        })
        .collect();

    let mut outputs = Vec::with_capacity(BIOMARKER_NAMES.len());
    for (o, name) in BIOMARKER_NAMES.iter().enumerate() {
        let values: Vec<Option<f64>> = evals
            .iter()
            .map(|e| e.as_ref().and_then(|b| extract(b, o)))
            .collect();
        // An output that hardly ever evaluates (e.g. dispersion with its
        // leads always excluded) is reported degenerate, not fatal.
        let usable = FamilyOutputs::gather(&sample, &values).len();
        let sobol = if usable < 2 {
            SobolResult {
                estimates: vec![
                    IndexEstimate {
                        s1: 0.0,
                        s1_ci: 0.0,
                        st: 0.0,
                        st_ci: 0.0
                    };
                    6
                ],
                degenerate: true,
                used_base_points: usable,
            }
        } else {
            sobol_indices(&sample, &values, seed)?
        };
        let pearson: Vec<f64> = (0..6)
            .map(|p| {
                let (xs, ys): (Vec<f64>, Vec<f64>) = sample
                    .rows()
                    .iter()
                    .zip(&values)
                    .filter_map(|(row, v)| v.map(|v| (row[p], v)))
                    .unzip();
                pearson(&xs, &ys)
            })
            .collect();
        outputs.push(OutputSensitivity {
            output: name,
            excluded_base_points: base_n - sobol.used_base_points,
            sobol,
            pearson,
        });
    }
    Ok(SensitivityReport { base_n, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds(d: usize) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); d]
    }

    fn apply(sample: &SaltelliSample, f: impl Fn(&[f64]) -> Option<f64>) -> Vec<Option<f64>> {
        sample.rows().iter().map(|r| f(r)).collect()
    }

    #[test]
    fn saltelli_layout_matches_block_structure() {
        let sample = saltelli_sample(&unit_bounds(6), 64, 7).unwrap();
        assert_eq!(sample.rows().len(), 64 * 14);
        assert!(sample
            .rows()
            .iter()
            .all(|r| r.iter().all(|&x| (0.0..=1.0).contains(&x))));
        // AB_i equals A except in column i, where it equals B.
        for family in [0usize, 13, 63] {
            let a = &sample.rows()[sample.index(0, family)];
            let b = &sample.rows()[sample.index(1, family)];
            for i in 0..6 {
                let ab = &sample.rows()[sample.index(2 + i, family)];
                let ba = &sample.rows()[sample.index(2 + 6 + i, family)];
                for k in 0..6 {
                    if k == i {
                        assert_eq!(ab[k], b[k]);
                        assert_eq!(ba[k], a[k]);
                    } else {
                        assert_eq!(ab[k], a[k]);
                        assert_eq!(ba[k], b[k]);
                    }
                }
            }
        }
        // Determinism and seed separation.
        assert_eq!(sample, saltelli_sample(&unit_bounds(6), 64, 7).unwrap());
        assert_ne!(sample, saltelli_sample(&unit_bounds(6), 64, 8).unwrap());
        // Power-of-two precondition.
        assert!(saltelli_sample(&unit_bounds(6), 100, 7).is_err());
        assert!(saltelli_sample(&unit_bounds(6), 0, 7).is_err());
    }

    #[test]
    fn additive_function_gives_equal_indices() {
        let sample = saltelli_sample(&unit_bounds(6), 1024, 11).unwrap();
        let outputs = apply(&sample, |r| Some(r.iter().sum()));
        let result = sobol_indices(&sample, &outputs, 11).unwrap();
        assert!(!result.degenerate);
        assert_eq!(result.used_base_points, 1024);
        let mut s1_sum = 0.0;
        for est in &result.estimates {
            assert!((est.s1 - 1.0 / 6.0).abs() < 0.02, "S1 = {}", est.s1);
            assert!((est.st - 1.0 / 6.0).abs() < 0.02, "ST = {}", est.st);
            assert!(est.s1_ci.is_finite() && est.st_ci.is_finite());
            s1_sum += est.s1;
        }
        assert!((0.95..=1.05).contains(&s1_sum), "sum S1 = {s1_sum}");
    }

    #[test]
    fn ishigami_matches_closed_form_indices() {
        use std::f64::consts::PI;
        let (a, b) = (7.0, 0.1);
        let sample = saltelli_sample(&vec![(-PI, PI); 3], 1024, 3).unwrap();
        let outputs = apply(&sample, |r| {
            Some(r[0].sin() + a * r[1].sin().powi(2) + b * r[2].powi(4) * r[0].sin())
        });
        let result = sobol_indices(&sample, &outputs, 3).unwrap();

        let variance = a * a / 8.0 + b * PI.powi(4) / 5.0 + b * b * PI.powi(8) / 18.0 + 0.5;
        let s1_exact = [
            0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2) / variance,
            (a * a / 8.0) / variance,
            0.0,
        ];
        let st_exact = [
            (0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2) + 8.0 * b * b * PI.powi(8) / 225.0)
                / variance,
            (a * a / 8.0) / variance,
            (8.0 * b * b * PI.powi(8) / 225.0) / variance,
        ];
        for i in 0..3 {
            let est = &result.estimates[i];
            assert!(
                (est.s1 - s1_exact[i]).abs() < 0.03,
                "S1[{i}] = {} vs {}",
                est.s1,
                s1_exact[i]
            );
            assert!(
                (est.st - st_exact[i]).abs() < 0.05,
                "ST[{i}] = {} vs {}",
                est.st,
                st_exact[i]
            );
            assert!(est.st >= est.s1 - est.s1_ci, "ST < S1 beyond CI at {i}");
        }
    }

    #[test]
    fn single_variable_function_has_null_tails() {
        let sample = saltelli_sample(&unit_bounds(6), 512, 5).unwrap();
        let outputs = apply(&sample, |r| Some(r[0] * r[0]));
        let result = sobol_indices(&sample, &outputs, 5).unwrap();
        assert!(result.estimates[0].st > 0.9);
        for est in &result.estimates[1..] {
            assert!(est.st.abs() < 0.02, "null parameter has ST = {}", est.st);
        }
    }

    #[test]
    fn affine_output_rescaling_preserves_indices() {
        let sample = saltelli_sample(&unit_bounds(4), 256, 9).unwrap();
        let f = |r: &[f64]| r[0] + 2.0 * r[1] * r[2];
        let plain = sobol_indices(&sample, &apply(&sample, |r| Some(f(r))), 9).unwrap();
        let scaled =
            sobol_indices(&sample, &apply(&sample, |r| Some(3.0 * f(r) + 5.0)), 9).unwrap();
        for (p, s) in plain.estimates.iter().zip(&scaled.estimates) {
            assert!((p.s1 - s.s1).abs() < 1e-9);
            assert!((p.st - s.st).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_output_is_flagged_degenerate() {
        let sample = saltelli_sample(&unit_bounds(3), 64, 2).unwrap();
        let outputs = apply(&sample, |_| Some(42.0));
        let result = sobol_indices(&sample, &outputs, 2).unwrap();
        assert!(result.degenerate);
        assert!(result
            .estimates
            .iter()
            .all(|e| e.s1 == 0.0 && e.st == 0.0));
    }

    #[test]
    fn failed_rows_exclude_their_whole_family() {
        let sample = saltelli_sample(&unit_bounds(6), 256, 4).unwrap();
        let outputs = apply(&sample, |r| (r[0] <= 0.9).then(|| r.iter().sum()));
        let result = sobol_indices(&sample, &outputs, 4).unwrap();
        // Recount expected survivors directly from the rows.
        let expected = (0..256)
            .filter(|&family| {
                (0..14).all(|block| sample.rows()[sample.index(block, family)][0] <= 0.9)
            })
            .count();
        assert_eq!(result.used_base_points, expected);
        assert!(expected < 256, "the failing region must bite");
        assert!(result.estimates.iter().all(|e| e.s1.is_finite()));
    }

    #[test]
    fn bootstrap_halfwidth_shrinks_with_base_n() {
        let mean_ci = |base_n: usize| -> f64 {
            let sample = saltelli_sample(&unit_bounds(6), base_n, 6).unwrap();
            let outputs = apply(&sample, |r| Some(r.iter().sum()));
            let result = sobol_indices(&sample, &outputs, 6).unwrap();
            result.estimates.iter().map(|e| e.s1_ci).sum::<f64>() / 6.0
        };
        let ratio = mean_ci(1024) / mean_ci(512);
        let expected = 1.0 / 2.0f64.sqrt();
        assert!(
            (ratio - expected).abs() <= 0.3 * expected,
            "CI ratio {ratio} vs {expected}"
        );
    }

    #[test]
    fn synthetic_biomarker_pipeline_ranks_parameters() {
        // qt driven by apd_max, amplitude by g_ab and g_tm, dispersion
        // constant (degenerate), everything else mildly mixed.
        let pipeline = |theta: &ApdGradientParams| -> Result<TWaveBiomarkers> {
            Ok(TWaveBiomarkers {
                qt_ms: 1.2 * theta.apd_max + 0.05 * theta.apd_min + 2.0 * theta.g_pa,
                tpe_ms: 10.0
                    + 3.0 * theta.g_ab
                    + 3.0 * theta.g_tm
                    + 3.0 * theta.g_pa
                    + 3.0 * theta.g_tv,
                t_amplitude: (4.0 * theta.g_ab - 3.0 * theta.g_tm
                    + 0.2 * theta.g_tv
                    + 0.001 * theta.apd_max)
                    .abs(),
                t_polarity: [1; 8],
                tpeak_dispersion_v3_v5_ms: Some(8.0),
                excluded_leads: vec![],
            })
        };
        let report = run_sensitivity(pipeline, &ThetaBounds::default(), 256, 12).unwrap();
        assert_eq!(report.outputs.len(), 5);

        let by_name = |name: &str| {
            report
                .outputs
                .iter()
                .find(|o| o.output == name)
                .expect("output present")
        };
        let qt = by_name("qt_ms");
        let ranked: Vec<usize> = {
            let mut idx: Vec<usize> = (0..6).collect();
            idx.sort_by(|&a, &b| qt.sobol.estimates[b].st.total_cmp(&qt.sobol.estimates[a].st));
            idx
        };
        assert_eq!(ranked[0], 5, "apd_max must dominate qt");
        assert!(qt.pearson[5] > 0.9);

        let amp = by_name("t_amplitude");
        let mut amp_ranked: Vec<usize> = (0..6).collect();
        amp_ranked.sort_by(|&a, &b| {
            amp.sobol.estimates[b]
                .st
                .total_cmp(&amp.sobol.estimates[a].st)
        });
        let top2: Vec<usize> = amp_ranked[..2].to_vec();
        assert!(top2.contains(&0) && top2.contains(&1), "top-2 {top2:?}");

        assert!(by_name("tpeak_dispersion_v3_v5_ms").sobol.degenerate);
        let tpe = by_name("tpe_ms");
        assert!(tpe.sobol.estimates[..4].iter().all(|e| e.st > 0.05));
    }

    #[test]
    fn pipeline_failures_are_counted() {
        let pipeline = |theta: &ApdGradientParams| -> Result<TWaveBiomarkers> {
            if theta.g_ab > 0.8 {
                return Err(Error::invalid("no usable T wave"));
            }
            Ok(TWaveBiomarkers {
                qt_ms: theta.apd_max,
                tpe_ms: 20.0 + theta.g_tm,
                t_amplitude: 0.4 + 0.1 * theta.g_ab,
                t_polarity: [1; 8],
                tpeak_dispersion_v3_v5_ms: None,
                excluded_leads: vec![],
            })
        };
        let report = run_sensitivity(pipeline, &ThetaBounds::default(), 128, 21).unwrap();
        let qt = &report.outputs[0];
        assert!(qt.excluded_base_points > 0);
        assert_eq!(
            qt.sobol.used_base_points + qt.excluded_base_points,
            report.base_n
        );
        // Dispersion is always None here: every family fails for it.
        let disp = &report.outputs[4];
        assert!(disp.sobol.degenerate || disp.sobol.used_base_points < report.base_n);
    }

    #[test]
    fn sobol_indices_are_seed_deterministic() {
        let sample = saltelli_sample(&unit_bounds(5), 128, 31).unwrap();
        let outputs = apply(&sample, |r| Some(r[0] + r[1] * r[2]));
        let a = sobol_indices(&sample, &outputs, 31).unwrap();
        let b = sobol_indices(&sample, &outputs, 31).unwrap();
        assert_eq!(a, b);
    }
}
