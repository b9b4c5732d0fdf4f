//! Sequential Monte Carlo parameter inference against a target ECG.
//!
//! A population of grid-aligned parameter sets is initialized by Latin
//! hypercube sampling, then evolved: each iteration drops the worst
//! `samples_per_iteration` particles, resamples replacements from the
//! survivors, and perturbs each replacement by one grid cell per dimension
//! with probability one half, keeping the move only if its discrepancy
//! stays under the adaptive threshold (the worst surviving discrepancy).
//! The run stops once every particle beats the discrepancy cutoff or the
//! population loses diversity (unique-parameter fraction under the
//! uniqueness threshold).
//!
//! Everything is deterministic under a fixed seed: per-particle random
//! streams are derived from (seed, iteration, slot) rather than shared, and
//! parallel evaluations collect in index order.

use crate::ecg::{discrepancy, EcgSignal};
use crate::error::{Error, Result};
use crate::repolarisation::ApdGradientParams;
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

/// Parameter order used by every 6-vector in this module:
/// `[g_ab, g_tm, g_pa, g_tv, apd_min, apd_max]`.
pub const DIM_NAMES: [&str; 6] = ["g_ab", "g_tm", "g_pa", "g_tv", "apd_min", "apd_max"];

/// Safety stop for runs whose termination criteria never fire; generous
/// compared to realistic convergence (tens of iterations).
pub const MAX_ITERATIONS: usize = 10_000;

/// Per-dimension search box.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBounds {
    pub lo: [f64; 6],
    pub hi: [f64; 6],
}

impl Default for ThetaBounds {
    fn default() -> Self {
        Self {
            lo: [-1.0, -1.0, -1.0, -1.0, 180.0, 270.0],
            hi: [1.0, 1.0, 1.0, 1.0, 230.0, 300.0],
        }
    }
}

impl ThetaBounds {
    pub fn validate(&self) -> Result<()> {
        for d in 0..6 {
            if !(self.lo[d].is_finite() && self.hi[d].is_finite()) || self.lo[d] > self.hi[d] {
                return Err(Error::invalid(format!(
                    "bounds for {} must be finite with lo <= hi, got [{}, {}]",
                    DIM_NAMES[d], self.lo[d], self.hi[d]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64; 6]) -> bool {
        (0..6).all(|d| theta[d] >= self.lo[d] && theta[d] <= self.hi[d])
    }
}

/// Knobs for one inference run.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub population_size: usize,
    pub samples_per_iteration: usize,
    pub discrepancy_cutoff: f64,
    /// Stop once the unique-parameter fraction falls below this.
    pub uniqueness_threshold: f64,
    /// Grid resolution for the two APD limits, ms.
    pub apd_grid_ms: f64,
    /// Grid resolution for the four gradient weights.
    pub gradient_grid: f64,
    pub bounds: ThetaBounds,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            population_size: 256,
            samples_per_iteration: 64,
            discrepancy_cutoff: 0.5,
            uniqueness_threshold: 0.5,
            apd_grid_ms: 2.0,
            gradient_grid: 0.1,
            bounds: ThetaBounds::default(),
            seed: 0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.population_size < 2 {
            return Err(Error::invalid("population_size must be at least 2"));
        }
        if self.samples_per_iteration == 0 || self.samples_per_iteration >= self.population_size {
            return Err(Error::invalid(format!(
                "samples_per_iteration must be in [1, population_size), got {} of {}",
                self.samples_per_iteration, self.population_size
            )));
        }
        if !(self.discrepancy_cutoff > 0.0) {
            return Err(Error::invalid("discrepancy_cutoff must be positive"));
        }
        if !(self.uniqueness_threshold > 0.0 && self.uniqueness_threshold <= 1.0) {
            return Err(Error::invalid("uniqueness_threshold must be in (0, 1]"));
        }
        if !(self.apd_grid_ms > 0.0) || !(self.gradient_grid > 0.0) {
            return Err(Error::invalid("grid resolutions must be positive"));
        }
        Ok(())
    }

    /// Grid step per dimension, in [`DIM_NAMES`] order.
    pub fn steps(&self) -> [f64; 6] {
        let g = self.gradient_grid;
        let a = self.apd_grid_ms;
        [g, g, g, g, a, a]
    }
}

/// Nearest multiple of `step`, ties resolved toward negative infinity.
fn snap(x: f64, step: f64) -> f64 {
    (x / step - 0.5).ceil() * step
}

/// Snaps every dimension to its grid and clamps into bounds.
pub fn discretize_theta(theta: &ApdGradientParams, config: &InferenceConfig) -> ApdGradientParams {
    let arr = theta.to_array();
    let steps = config.steps();
    let mut out = [0.0; 6];
    for d in 0..6 {
        out[d] = snap(arr[d], steps[d])
            .max(config.bounds.lo[d])
            .min(config.bounds.hi[d]);
    }
    ApdGradientParams::from_array(out)
}

/// One parameter set with its evaluated discrepancy.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub theta: ApdGradientParams,
    pub discrepancy: f64,
}

/// Which stopping rule ended the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    /// Every particle's discrepancy fell below the cutoff.
    AllBelowCutoff,
    /// The unique-parameter fraction fell below the uniqueness threshold.
    UniquenessCollapse,
    /// Defensive cap; indicates a run that would not otherwise stop.
    IterationLimit,
}

/// Snapshot of one evolution iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    /// 1-based evolution iteration index.
    pub iteration: usize,
    /// Acceptance threshold used this iteration (worst surviving ε).
    pub threshold: f64,
    /// Best discrepancy after the iteration.
    pub best: f64,
    /// Unique-parameter fraction after the iteration.
    pub uniqueness: f64,
}

/// Final population and the run's history.
#[derive(Debug, Clone)]
pub struct Population {
    pub particles: Vec<Particle>,
    /// Number of evolution iterations performed (0 if the initial
    /// population already satisfied a stopping rule).
    pub iterations: usize,
    pub history: Vec<IterationLog>,
    pub termination: TerminationReason,
}

impl Population {
    /// Particle with the smallest discrepancy (first among ties).
    pub fn best(&self) -> &Particle {
        self.particles
            .iter()
            .min_by(|a, b| a.discrepancy.total_cmp(&b.discrepancy))
            .expect("population is never empty")
    }

    pub fn uniqueness_fraction(&self) -> f64 {
        uniqueness_fraction(&self.particles)
    }
}

/// Fraction of particles whose parameter vector appears nowhere else.
///
/// Grid-aligned values are produced by identical arithmetic, so bit-level
/// equality of the 6-vectors is exact equality of grid points.
pub fn uniqueness_fraction(particles: &[Particle]) -> f64 {
    assert!(!particles.is_empty(), "population is never empty");
    let mut keys: Vec<[u64; 6]> = particles
        .iter()
        .map(|p| p.theta.to_array().map(f64::to_bits))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len() as f64 / particles.len() as f64
}

/// Latin hypercube draw before grid snapping: each dimension is divided
/// into `n` equal strata with exactly one sample in each.
pub fn latin_hypercube_raw(bounds: &ThetaBounds, n: usize, seed: u64) -> Vec<[f64; 6]> {
    assert!(n >= 2, "Latin hypercube needs at least 2 samples");
    let mut samples = vec![[0.0; 6]; n];
    for d in 0..6 {
        let mut rng = rng::stream(seed, &[0, d as u64]);
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let width = (bounds.hi[d] - bounds.lo[d]) / n as f64;
        for (i, sample) in samples.iter_mut().enumerate() {
            let u: f64 = rng.gen();
            sample[d] = bounds.lo[d] + (strata[i] as f64 + u) * width;
        }
    }
    samples
}

/// Grid-snapped Latin hypercube initialization.
pub fn latin_hypercube_init(config: &InferenceConfig) -> Vec<ApdGradientParams> {
    latin_hypercube_raw(&config.bounds, config.population_size, config.seed)
        .into_iter()
        .map(|arr| discretize_theta(&ApdGradientParams::from_array(arr), config))
        .collect()
}

/// One-grid-cell random walk: each dimension moves one step with
/// probability one half (direction uniform), reflecting at the bounds.
/// Returns `None` when the move lands on an invalid parameter set
/// (apd_min >= apd_max), which the caller treats as a rejected move.
fn perturb<R: Rng>(
    theta: &ApdGradientParams,
    config: &InferenceConfig,
    rng: &mut R,
) -> Option<ApdGradientParams> {
    let arr = theta.to_array();
    let steps = config.steps();
    let mut out = [0.0; 6];
    for d in 0..6 {
        let mut x = arr[d];
        if rng.gen::<f64>() < 0.5 {
            let dir = if rng.gen::<f64>() < 0.5 { 1.0 } else { -1.0 };
            x += dir * steps[d];
            if x > config.bounds.hi[d] {
                x = 2.0 * config.bounds.hi[d] - x;
            }
            if x < config.bounds.lo[d] {
                x = 2.0 * config.bounds.lo[d] - x;
            }
        }
        out[d] = x;
    }
    let snapped = discretize_theta(&ApdGradientParams::from_array(out), config);
    if snapped.apd_min >= snapped.apd_max {
        return None;
    }
    Some(snapped)
}

/// Discrepancy of one candidate, with failure semantics split two ways:
/// a failed forward evaluation is a property of that parameter set and
/// becomes ε = +∞; a failed discrepancy (duration mismatch, zero target)
/// is systematic and aborts the run.
fn evaluate<F>(forward: &F, target: &EcgSignal, theta: &ApdGradientParams) -> Result<f64>
where
    F: Fn(&ApdGradientParams) -> Result<EcgSignal> + Sync,
{
    match forward(theta) {
        Ok(sim) => Ok(discrepancy(&sim, target)?.epsilon),
        Err(_) => Ok(f64::INFINITY),
    }
}

/// Runs the full inference loop. See the module docs for the scheme.
pub fn run_inference<F>(
    forward: F,
    target: &EcgSignal,
    config: &InferenceConfig,
) -> Result<Population>
where
    F: Fn(&ApdGradientParams) -> Result<EcgSignal> + Sync,
{
    run_inference_with_progress(forward, target, config, |_| {})
}

/// [`run_inference`] with a per-iteration callback (called serially, after
/// each evolution iteration completes).
pub fn run_inference_with_progress<F, P>(
    forward: F,
    target: &EcgSignal,
    config: &InferenceConfig,
    mut on_iteration: P,
) -> Result<Population>
where
    F: Fn(&ApdGradientParams) -> Result<EcgSignal> + Sync,
    P: FnMut(&IterationLog),
{
    config.validate()?;
    let thetas = latin_hypercube_init(config);
    let mut particles: Vec<Particle> = thetas
        .into_par_iter()
        .map(|theta| {
            let discrepancy = evaluate(&forward, target, &theta)?;
            Ok(Particle { theta, discrepancy })
        })
        .collect::<Result<_>>()?;
    if particles
        .iter()
        .all(|p| !p.discrepancy.is_finite())
    {
        return Err(Error::invalid(
            "every initial parameter set failed forward evaluation",
        ));
    }

    let survivors = config.population_size - config.samples_per_iteration;
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let termination = loop {
        if particles
            .iter()
            .all(|p| p.discrepancy < config.discrepancy_cutoff)
        {
            break TerminationReason::AllBelowCutoff;
        }
        if uniqueness_fraction(&particles) < config.uniqueness_threshold {
            break TerminationReason::UniquenessCollapse;
        }
        if iterations >= MAX_ITERATIONS {
            break TerminationReason::IterationLimit;
        }
        iterations += 1;

        // Drop the worst samples_per_iteration particles; the threshold is
        // the worst surviving discrepancy.
        particles.sort_by(|a, b| a.discrepancy.total_cmp(&b.discrepancy));
        let threshold = particles[survivors - 1].discrepancy;

        let replacements: Vec<Particle> = (0..config.samples_per_iteration)
            .into_par_iter()
            .map(|slot| {
                let mut rng = rng::stream(config.seed, &[iterations as u64, slot as u64]);
                let source = particles[rng.gen_range(0..survivors)].clone();
                let Some(theta) = perturb(&source.theta, config, &mut rng) else {
                    return Ok(source);
                };
                let eps = evaluate(&forward, target, &theta)?;
                if eps.is_finite() && eps <= threshold {
                    Ok(Particle {
                        theta,
                        discrepancy: eps,
                    })
                } else {
                    Ok(source)
                }
            })
            .collect::<Result<_>>()?;
        particles.truncate(survivors);
        particles.extend(replacements);

        let log = IterationLog {
            iteration: iterations,
            threshold,
            best: particles
                .iter()
                .map(|p| p.discrepancy)
                .fold(f64::INFINITY, f64::min),
            uniqueness: uniqueness_fraction(&particles),
        };
        history.push(log);
        on_iteration(&log);
    };

    Ok(Population {
        particles,
        iterations,
        history,
        termination,
    })
}
