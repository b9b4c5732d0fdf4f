//! Precomputed lead-field operator: folds the smoothing rounds into the
//! electrode lead vectors so repeated forward evaluations skip per-field
//! smoothing entirely.
//!
//! The smoothing operator S is linear and identical for every evaluation,
//! and the electrode map is a dot product with a fixed lead vector a_e. The
//! potential of the smoothed field at a sample smoothed r times is
//! a_e . S^r u = (S^T)^r a_e . u, so precomputing w_{e,r} = (S^T)^r a_e for
//! every electrode and round count r turns each forward evaluation into one
//! raw field assembly plus dot products.

use crate::error::{Error, Result};
use crate::geometry::{ElectrodeSet, FiberField, TetMesh};
use crate::repolarisation::{MembraneField, SmoothingSchedule, SmoothingWeights};
use rayon::prelude::*;

use super::{electrode_lead_vectors, Diffusivity, ecg_from_electrode_rows, EcgSignal};

/// Lead vectors premultiplied by every transposed smoothing power that the
/// schedule can request.
pub struct LeadFieldOperator {
    /// weights[r][e] = (S^T)^r a_e; r ranges over 0..=max_rounds.
    weights: Vec<[Vec<f64>; 9]>,
    schedule: SmoothingSchedule,
    node_count: usize,
}

impl LeadFieldOperator {
    /// Builds the operator for a fixed mesh/electrode/smoothing setup.
    pub fn new(
        mesh: &TetMesh,
        fibres: &FiberField,
        electrodes: &ElectrodeSet,
        diffusivity: &Diffusivity,
        smoothing: &SmoothingWeights,
        schedule: SmoothingSchedule,
    ) -> Result<Self> {
        if smoothing.node_count() != mesh.node_count() {
            return Err(Error::invalid(format!(
                "smoothing weights cover {} nodes, mesh has {}",
                smoothing.node_count(),
                mesh.node_count()
            )));
        }
        let base = electrode_lead_vectors(mesh, fibres, electrodes, diffusivity)?;
        let n = mesh.node_count();
        let max_rounds = schedule.max_rounds as usize;
        let mut weights = Vec::with_capacity(max_rounds + 1);
        weights.push(base);
        for r in 1..=max_rounds {
            let prev = &weights[r - 1];
            let next: [Vec<f64>; 9] = std::array::from_fn(|e| {
                // (S^T w)_b = sum_a S_{a,b} w_a: scatter each node's weight
                // onto the nodes it reads from.
                let w = &prev[e];
                let mut out = vec![0.0; n];
                for a in 0..n {
                    let (nbrs, ws) = smoothing.row(a);
                    out[a] += smoothing.self_weight(a) * w[a];
                    for (&b, &wab) in nbrs.iter().zip(ws) {
                        out[b as usize] += wab * w[a];
                    }
                }
                out
            });
            weights.push(next);
        }
        Ok(Self {
            weights,
            schedule,
            node_count: n,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn schedule(&self) -> &SmoothingSchedule {
        &self.schedule
    }

    /// Electrode potentials of the *smoothed* field, computed from the raw
    /// (unsmoothed) field.
    pub fn potentials(&self, raw_field: &MembraneField) -> Result<Vec<[f64; 9]>> {
        if raw_field.node_count() != self.node_count {
            return Err(Error::invalid(format!(
                "field covers {} nodes, operator expects {}",
                raw_field.node_count(),
                self.node_count
            )));
        }
        let steps = raw_field.sample_count();
        Ok((0..steps)
            .into_par_iter()
            .map(|t| {
                let rounds = self.schedule.rounds(t as f64) as usize;
                let column = raw_field.sample(t);
                let vectors = &self.weights[rounds];
                std::array::from_fn(|e| {
                    vectors[e]
                        .iter()
                        .zip(column)
                        .map(|(a, u)| a * u)
                        .sum::<f64>()
                })
            })
            .collect())
    }

    /// Eight-lead signal of the smoothed field, from the raw field.
    pub fn ecg(&self, raw_field: &MembraneField) -> Result<EcgSignal> {
        ecg_from_electrode_rows(&self.potentials(raw_field)?)
    }
}
