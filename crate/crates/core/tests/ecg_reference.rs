//! Cross-checks the pseudo-ECG against an independent brute-force
//! direct-summation reference.
//!
//! The library assembles per-node lead vectors once and reuses them across
//! samples; the reference recomputes element gradients per sample from a
//! 3x3 solve and sums element contributions directly. Both must agree to
//! floating-point accumulation error on every lead and every sample.

mod oracles;

use twin_core::activation::{ActivationMap, ConductionVelocities};
use twin_core::cellular::{
    build_lookup_table, DiffusiveCurrentParams, LookupTable, MsCellModel, TableSpec,
};
use twin_core::ecg::{pseudo_ecg, Diffusivity, EcgSignal};
use twin_core::geometry::{default_electrodes, generate_slab};
use twin_core::repolarisation::{assemble_membrane_field, compute_apd_map, ApdGradientParams};

const DUAL_ROUTE_RELATIVE_TOLERANCE: f64 = 1e-10;

fn small_table() -> LookupTable {
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
}

fn assert_leads_match(lib: &EcgSignal, reference: &[Vec<f64>; 8]) {
    let scale = lib.max_abs();
    assert!(
        scale > 1e-9,
        "signal must be non-trivial for a meaningful comparison, got max |amplitude| {scale}"
    );
    for lead in 0..8 {
        assert_eq!(lib.lead(lead).len(), reference[lead].len());
        for (t, (a, b)) in lib.lead(lead).iter().zip(&reference[lead]).enumerate() {
            assert!(
                (a - b).abs() <= DUAL_ROUTE_RELATIVE_TOLERANCE * scale,
                "lead {lead} sample {t}: library {a} vs direct summation {b} \
                 (scale {scale})"
            );
        }
    }
}

/// One activated patch spreading across a slab, identity diffusivity.
#[test]
fn slab_single_region_matches_direct_summation() {
    let (mesh, fibres, coords) = generate_slab(6, 5, 4, 0.1, 0.0).unwrap();
    let electrodes = default_electrodes(&mesh).unwrap();
    let n = mesh.node_count();
    let times: Vec<f64> = (0..n).map(|i| 1.0 + 18.0 * coords.tv[i]).collect();
    let atmap = ActivationMap::from_times(times).unwrap();
    let params = ApdGradientParams {
        g_ab: 0.6,
        g_tm: -0.4,
        g_pa: 0.0,
        g_tv: 1.0,
        apd_min: 248.0,
        apd_max: 252.0,
    };
    let apd = compute_apd_map(&coords, &params).unwrap();
    let table = small_table();
    let field = assemble_membrane_field(&atmap, &apd, &table, 350).unwrap();

    let lib = pseudo_ecg(&field, &mesh, &fibres, &electrodes, &Diffusivity::Identity).unwrap();

    let columns: Vec<&[f64]> = (0..field.sample_count()).map(|t| field.sample(t)).collect();
    let rows = oracles::ecg::electrode_rows(
        mesh.nodes(),
        mesh.tets(),
        None,
        &electrodes.positions(),
        &columns,
    );
    let reference = oracles::ecg::leads(&rows);
    assert_leads_match(&lib, &reference);
}

/// Rotated fibres with an orthotropic diffusivity tensor.
#[test]
fn rotated_orthotropic_matches_direct_summation() {
    let (mesh, fibres, coords) = generate_slab(5, 5, 4, 0.12, 30.0).unwrap();
    let electrodes = default_electrodes(&mesh).unwrap();
    let n = mesh.node_count();
    let times: Vec<f64> = (0..n)
        .map(|i| 2.0 + 10.0 * coords.tv[i] + 6.0 * coords.tm[i])
        .collect();
    let atmap = ActivationMap::from_times(times).unwrap();
    let params = ApdGradientParams {
        g_ab: 0.0,
        g_tm: 1.0,
        g_pa: 0.0,
        g_tv: -1.0,
        apd_min: 249.0,
        apd_max: 251.0,
    };
    let apd = compute_apd_map(&coords, &params).unwrap();
    let table = small_table();
    let field = assemble_membrane_field(&atmap, &apd, &table, 340).unwrap();

    let cv = ConductionVelocities::default();
    let lib = pseudo_ecg(
        &field,
        &mesh,
        &fibres,
        &electrodes,
        &Diffusivity::Orthotropic(cv),
    )
    .unwrap();

    let v_max = cv.v_f.max(cv.v_s).max(cv.v_n);
    let weights = [
        (cv.v_f / v_max) * (cv.v_f / v_max),
        (cv.v_s / v_max) * (cv.v_s / v_max),
        (cv.v_n / v_max) * (cv.v_n / v_max),
    ];
    let columns: Vec<&[f64]> = (0..field.sample_count()).map(|t| field.sample(t)).collect();
    let rows = oracles::ecg::electrode_rows(
        mesh.nodes(),
        mesh.tets(),
        Some((&fibres.f, &fibres.s, &fibres.n, weights)),
        &electrodes.positions(),
        &columns,
    );
    let reference = oracles::ecg::leads(&rows);
    assert_leads_match(&lib, &reference);
}
