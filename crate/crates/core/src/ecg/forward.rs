//! One-call forward evaluation: repolarisation parameters to normalized ECG.
//!
//! Bundles the pieces that stay fixed across repeated evaluations — mesh
//! coordinates, activation map, voltage-trace rows, and the precomputed
//! lead-field operator — so parameter sweeps (inference, sensitivity, dose
//! response) pay only for field assembly and dot products per evaluation.

use crate::activation::ActivationMap;
use crate::cellular::TraceRows;
use crate::ecg::{normalize_ecg, EcgSignal, LeadFieldOperator};
use crate::error::{Error, Result};
use crate::geometry::VentricularCoords;
use crate::repolarisation::{assemble_membrane_field, compute_apd_map, ApdGradientParams};

/// Reusable forward model: θ → normalized 8-lead ECG.
///
/// Generic over the trace source so modified tables (e.g. channel-blocked
/// rebuilds) evaluate through the same machinery.
pub struct EcgForward<'a, T: ?Sized> {
    coords: &'a VentricularCoords,
    atmap: &'a ActivationMap,
    rows: &'a T,
    operator: &'a LeadFieldOperator,
    duration_ms: usize,
}

impl<'a, T: TraceRows + Sync + ?Sized> EcgForward<'a, T> {
    pub fn new(
        coords: &'a VentricularCoords,
        atmap: &'a ActivationMap,
        rows: &'a T,
        operator: &'a LeadFieldOperator,
        duration_ms: usize,
    ) -> Result<Self> {
        let n = operator.node_count();
        coords.validate(n)?;
        if atmap.times().len() != n {
            return Err(Error::invalid(format!(
                "activation map covers {} nodes, lead-field operator {}",
                atmap.times().len(),
                n
            )));
        }
        if duration_ms == 0 {
            return Err(Error::invalid("forward duration must be positive"));
        }
        Ok(Self {
            coords,
            atmap,
            rows,
            operator,
            duration_ms,
        })
    }

    pub fn duration_ms(&self) -> usize {
        self.duration_ms
    }

    /// Normalized ECG for one parameter set.
    pub fn eval(&self, theta: &ApdGradientParams) -> Result<EcgSignal> {
        normalize_ecg(&self.eval_unnormalized(theta)?)
    }

    /// Unnormalized ECG (native amplitudes) for one parameter set.
    pub fn eval_unnormalized(&self, theta: &ApdGradientParams) -> Result<EcgSignal> {
        let apd = compute_apd_map(self.coords, theta)?;
        let field = assemble_membrane_field(self.atmap, &apd, self.rows, self.duration_ms)?;
        self.operator.ecg(&field)
    }
}
