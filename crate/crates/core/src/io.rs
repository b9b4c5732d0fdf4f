//! On-disk interchange formats.
//!
//! Every artifact the tool chain passes between stages has one reader and
//! one writer here: meshes and electrode/root sets as JSON, tabular data as
//! headered CSV, and the membrane-potential field as a compact binary
//! matrix. Floats in the text formats are printed with the shortest
//! representation that parses back to the identical value, so a
//! write-read cycle reproduces every number bit for bit and repeated runs
//! of a deterministic pipeline produce byte-identical files.
//!
//! Formats:
//! - mesh JSON: object with `nodes` (xyz, cm), `tets` (4 node indices,
//!   0-based), per-element `fibres`/`sheets`/`normals` (unit xyz), and
//!   per-node `coords` (ab, tm, tv, pa).
//! - electrodes JSON: named positions `LA`, `RA`, `LL`, `V1`..`V6` (cm).
//! - roots JSON: `{"roots": [{"node": i, "time_ms": t}, ...]}`.
//! - lookup CSV: header `apd,u_rest,t0,...,t599`; one row per table entry, mV.
//! - activation CSV: header `node_index,t_a_ms`, nodes in order.
//! - repolarisation CSV: header `node_index,rt_ms`; `NaN` marks a node that
//!   never repolarised inside the sampled window.
//! - field binary: two little-endian u64 counts (nodes, samples), then one
//!   row of 32-bit little-endian floats per node across samples, mV.
//! - ECG CSV: header `t_ms,I,II,V1,V2,V3,V4,V5,V6`, one row per 1-ms sample.
//! - biomarkers JSON: the T-wave biomarker bundle of one ECG.
//! - population CSV: header `g_ab,g_tm,g_pa,g_tv,apd_min,apd_max,discrepancy`.
//! - iterations CSV: header `iteration,threshold,best,uniqueness`.
//! - sensitivity CSV: header `output,parameter,S1,S1_ci,ST,ST_ci,pearson`.
//! - dose CSV: header `dose_nM,block,qt_mean,qt_sd,tpe_mean,tpe_sd,n`;
//!   a dose whose table rebuild failed keeps its row with `n = 0` and `NaN`
//!   statistics.
//! - inference config JSON: strict keys, every field optional with the
//!   documented defaults filled in.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationMap, RootNodeSet};
use crate::cellular::{LookupTable, TraceRows, TRACE_SAMPLES};
use crate::ecg::{EcgSignal, TWaveBiomarkers, LEAD_NAMES};
use crate::error::{Error, Result};
use crate::geometry::{ElectrodeSet, FiberField, TetMesh, VentricularCoords};
use crate::inference::{InferenceConfig, IterationLog, Particle, ThetaBounds, DIM_NAMES};
use crate::repolarisation::{ApdGradientParams, MembraneField, RepolarisationMap};
use crate::sensitivity::SensitivityReport;
use crate::therapy::DoseRow;

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path_str(path), e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path_str(path), e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path_str(path), e))
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path_str(path), e)
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path_str(path), reason: reason.into() }
}

/// Lines of a text file, with I/O errors carrying the path.
fn read_lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path_str(path), e))
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    what: &str,
    line_no: usize,
    path: &Path,
) -> Result<T> {
    field.trim().parse().map_err(|_| {
        format_err(path, format!("line {line_no}: cannot parse {what} from {field:?}"))
    })
}

/// Splits a CSV data line into exactly `n` fields.
fn split_exact<'l>(line: &'l str, n: usize, line_no: usize, path: &Path) -> Result<Vec<&'l str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(format_err(
            path,
            format!("line {line_no}: {} fields, expected {n}", fields.len()),
        ));
    }
    Ok(fields)
}

fn expect_header(lines: &[String], header: &str, path: &Path) -> Result<()> {
    match lines.first() {
        Some(first) if first.trim_end() == header => Ok(()),
        Some(first) => Err(format_err(
            path,
            format!("header is {:?}, expected {header:?}", first.trim_end()),
        )),
        None => Err(format_err(path, "file is empty")),
    }
}

// ---------------------------------------------------------------------------
// Mesh JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    nodes: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    fibres: Vec<[f64; 3]>,
    sheets: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
    coords: Vec<[f64; 4]>,
}

fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n").map_err(write_err(path))?;
    finish(w, path)
}

fn to_json_pretty<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(write_err(path))?;
    finish(w, path)
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| Error::io(path_str(path), e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

/// Writes a mesh with its fibre architecture and ventricular coordinates.
pub fn write_mesh(
    path: &Path,
    mesh: &TetMesh,
    fibres: &FiberField,
    coords: &VentricularCoords,
) -> Result<()> {
    let v3 = |v: &Vector3<f64>| [v.x, v.y, v.z];
    let file = MeshFile {
        nodes: mesh.nodes().iter().map(|p| [p.x, p.y, p.z]).collect(),
        tets: mesh.tets().to_vec(),
        fibres: fibres.f.iter().map(v3).collect(),
        sheets: fibres.s.iter().map(v3).collect(),
        normals: fibres.n.iter().map(v3).collect(),
        coords: (0..mesh.node_count())
            .map(|i| [coords.ab[i], coords.tm[i], coords.tv[i], coords.pa[i]])
            .collect(),
    };
    to_json(&file, path)
}

/// Reads a mesh back; geometry, frame orthonormality, and coordinate ranges
/// are re-validated on load.
pub fn read_mesh(path: &Path) -> Result<(TetMesh, FiberField, VentricularCoords)> {
    let file: MeshFile = from_json(path)?;
    let nodes: Vec<Point3<f64>> = file.nodes.iter().map(|&[x, y, z]| Point3::new(x, y, z)).collect();
    let node_count = nodes.len();
    let mesh = TetMesh::new(nodes, file.tets)?;
    let v3 = |a: &[f64; 3]| Vector3::new(a[0], a[1], a[2]);
    let fibres = FiberField::new(
        file.fibres.iter().map(v3).collect(),
        file.sheets.iter().map(v3).collect(),
        file.normals.iter().map(v3).collect(),
    )?;
    if fibres.f.len() != mesh.tet_count() {
        return Err(format_err(
            path,
            format!("{} fibre frames for {} elements", fibres.f.len(), mesh.tet_count()),
        ));
    }
    if file.coords.len() != node_count {
        return Err(format_err(
            path,
            format!("{} coordinate rows for {node_count} nodes", file.coords.len()),
        ));
    }
    let mut coords = VentricularCoords {
        ab: Vec::with_capacity(node_count),
        tm: Vec::with_capacity(node_count),
        tv: Vec::with_capacity(node_count),
        pa: Vec::with_capacity(node_count),
    };
    for &[ab, tm, tv, pa] in &file.coords {
        coords.ab.push(ab);
        coords.tm.push(tm);
        coords.tv.push(tv);
        coords.pa.push(pa);
    }
    coords.validate(node_count)?;
    Ok((mesh, fibres, coords))
}

// ---------------------------------------------------------------------------
// Electrode and root JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "UPPERCASE")]
struct ElectrodesFile {
    la: [f64; 3],
    ra: [f64; 3],
    ll: [f64; 3],
    v1: [f64; 3],
    v2: [f64; 3],
    v3: [f64; 3],
    v4: [f64; 3],
    v5: [f64; 3],
    v6: [f64; 3],
}

pub fn write_electrodes(path: &Path, electrodes: &ElectrodeSet) -> Result<()> {
    let p3 = |p: &Point3<f64>| [p.x, p.y, p.z];
    let file = ElectrodesFile {
        la: p3(&electrodes.la),
        ra: p3(&electrodes.ra),
        ll: p3(&electrodes.ll),
        v1: p3(&electrodes.v[0]),
        v2: p3(&electrodes.v[1]),
        v3: p3(&electrodes.v[2]),
        v4: p3(&electrodes.v[3]),
        v5: p3(&electrodes.v[4]),
        v6: p3(&electrodes.v[5]),
    };
    to_json_pretty(&file, path)
}

pub fn read_electrodes(path: &Path) -> Result<ElectrodeSet> {
    let file: ElectrodesFile = from_json(path)?;
    let p3 = |a: [f64; 3]| Point3::new(a[0], a[1], a[2]);
    let all = [
        file.la, file.ra, file.ll, file.v1, file.v2, file.v3, file.v4, file.v5, file.v6,
    ];
    if let Some(bad) = all.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(format_err(
            path,
            format!("electrode {} has a non-finite coordinate", ElectrodeSet::NAMES[bad]),
        ));
    }
    Ok(ElectrodeSet {
        la: p3(file.la),
        ra: p3(file.ra),
        ll: p3(file.ll),
        v: [
            p3(file.v1),
            p3(file.v2),
            p3(file.v3),
            p3(file.v4),
            p3(file.v5),
            p3(file.v6),
        ],
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RootsFile {
    roots: Vec<RootEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RootEntry {
    node: usize,
    time_ms: f64,
}

pub fn write_roots(path: &Path, roots: &RootNodeSet) -> Result<()> {
    let file = RootsFile {
        roots: roots
            .entries()
            .iter()
            .map(|&(node, time_ms)| RootEntry { node, time_ms })
            .collect(),
    };
    to_json_pretty(&file, path)
}

/// Reads a root set and validates it against a mesh of `node_count` nodes.
pub fn read_roots(path: &Path, node_count: usize) -> Result<RootNodeSet> {
    let file: RootsFile = from_json(path)?;
    RootNodeSet::new(
        file.roots.iter().map(|r| (r.node, r.time_ms)).collect(),
        node_count,
    )
}

// ---------------------------------------------------------------------------
// Lookup-table CSV
// ---------------------------------------------------------------------------

fn lookup_header() -> String {
    let mut h = String::from("apd,u_rest");
    for t in 0..TRACE_SAMPLES {
        h.push_str(",t");
        h.push_str(&t.to_string());
    }
    h
}

pub fn write_lookup_table(path: &Path, table: &LookupTable) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", lookup_header()).map_err(&err)?;
    for (key, row) in table.rows() {
        write!(w, "{key},{}", table.u_rest()).map_err(&err)?;
        for v in row {
            write!(w, ",{v}").map_err(&err)?;
        }
        writeln!(w).map_err(&err)?;
    }
    finish(w, path)
}

pub fn read_lookup_table(path: &Path) -> Result<LookupTable> {
    let lines = read_lines(path)?;
    expect_header(&lines, &lookup_header(), path)?;
    if lines.len() < 2 {
        return Err(format_err(path, "table has no data rows"));
    }
    let mut keys = Vec::with_capacity(lines.len() - 1);
    let mut rows = Vec::with_capacity(lines.len() - 1);
    let mut u_rest = f64::NAN;
    for (no, line) in lines.iter().enumerate().skip(1) {
        let fields = split_exact(line, 2 + TRACE_SAMPLES, no + 1, path)?;
        keys.push(parse_field::<i32>(fields[0], "APD key", no + 1, path)?);
        let rest: f64 = parse_field(fields[1], "resting potential", no + 1, path)?;
        if no == 1 {
            u_rest = rest;
        } else if rest.to_bits() != u_rest.to_bits() {
            return Err(format_err(
                path,
                format!("line {}: resting potential {rest} differs from {u_rest}", no + 1),
            ));
        }
        let row: Vec<f64> = fields[2..]
            .iter()
            .enumerate()
            .map(|(c, f)| parse_field(f, &format!("sample t{c}"), no + 1, path))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    LookupTable::new(keys, rows, u_rest)
}

// ---------------------------------------------------------------------------
// Activation and repolarisation CSV
// ---------------------------------------------------------------------------

const ACTIVATION_HEADER: &str = "node_index,t_a_ms";
const REPOLARISATION_HEADER: &str = "node_index,rt_ms";

pub fn write_activation_map(path: &Path, atmap: &ActivationMap) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{ACTIVATION_HEADER}").map_err(&err)?;
    for (i, t) in atmap.times().iter().enumerate() {
        writeln!(w, "{i},{t}").map_err(&err)?;
    }
    finish(w, path)
}

pub fn read_activation_map(path: &Path) -> Result<ActivationMap> {
    let lines = read_lines(path)?;
    expect_header(&lines, ACTIVATION_HEADER, path)?;
    let mut times = Vec::with_capacity(lines.len() - 1);
    for (no, line) in lines.iter().enumerate().skip(1) {
        let fields = split_exact(line, 2, no + 1, path)?;
        let index: usize = parse_field(fields[0], "node index", no + 1, path)?;
        if index != no - 1 {
            return Err(format_err(
                path,
                format!("line {}: node index {index}, expected {}", no + 1, no - 1),
            ));
        }
        times.push(parse_field(fields[1], "activation time", no + 1, path)?);
    }
    ActivationMap::from_times(times)
}

/// Writes per-node repolarisation times; a node that never crossed the
/// threshold inside the sampled window is written as `NaN`.
pub fn write_repolarisation_map(path: &Path, map: &RepolarisationMap) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{REPOLARISATION_HEADER}").map_err(&err)?;
    for (i, t) in map.times().iter().enumerate() {
        writeln!(w, "{i},{}", t.unwrap_or(f64::NAN)).map_err(&err)?;
    }
    finish(w, path)
}

// ---------------------------------------------------------------------------
// Field binary
// ---------------------------------------------------------------------------

/// Writes the potential matrix: u64 node count, u64 sample count (both
/// little-endian), then each node's full time series as f32 little-endian.
pub fn write_field(path: &Path, field: &MembraneField) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    let (n, steps) = (field.node_count(), field.sample_count());
    w.write_all(&(n as u64).to_le_bytes()).map_err(&err)?;
    w.write_all(&(steps as u64).to_le_bytes()).map_err(&err)?;
    let mut row = Vec::with_capacity(steps * 4);
    for node in 0..n {
        row.clear();
        for t in 0..steps {
            row.extend_from_slice(&(field.value(node, t) as f32).to_le_bytes());
        }
        w.write_all(&row).map_err(&err)?;
    }
    finish(w, path)
}

/// Reads a field binary. The resting level is recovered as the minimum
/// sample (the stored matrix relaxes onto its resting plateau from above).
pub fn read_field(path: &Path) -> Result<MembraneField> {
    let mut r = open(path)?;
    let err = |e| Error::io(path_str(path), e);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| format_err(path, "file too short for the 16-byte header"))?;
    let n = u64::from_le_bytes(header[..8].try_into().unwrap()) as usize;
    let steps = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    if n == 0 || steps == 0 {
        return Err(format_err(path, format!("empty field: {n} nodes x {steps} samples")));
    }
    let expected = n
        .checked_mul(steps)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| format_err(path, format!("field of {n} x {steps} samples overflows")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(err)?;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!("{} payload bytes for {n} nodes x {steps} samples ({expected} expected)", bytes.len()),
        ));
    }
    // File rows are per node; internal storage is per sample.
    let mut data = vec![0.0f64; n * steps];
    for node in 0..n {
        for t in 0..steps {
            let at = (node * steps + t) * 4;
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
            data[t * n + node] = v as f64;
        }
    }
    let u_rest = data.iter().copied().fold(f64::INFINITY, f64::min);
    MembraneField::from_raw(data, n, u_rest)
}

// ---------------------------------------------------------------------------
// ECG CSV
// ---------------------------------------------------------------------------

fn ecg_header() -> String {
    let mut h = String::from("t_ms");
    for name in LEAD_NAMES {
        h.push(',');
        h.push_str(name);
    }
    h
}

pub fn write_ecg(path: &Path, signal: &EcgSignal) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", ecg_header()).map_err(&err)?;
    for t in 0..signal.len() {
        write!(w, "{t}").map_err(&err)?;
        for lead in signal.leads() {
            write!(w, ",{}", lead[t]).map_err(&err)?;
        }
        writeln!(w).map_err(&err)?;
    }
    finish(w, path)
}

pub fn read_ecg(path: &Path) -> Result<EcgSignal> {
    let lines = read_lines(path)?;
    expect_header(&lines, &ecg_header(), path)?;
    let steps = lines.len() - 1;
    let mut leads: [Vec<f64>; 8] = std::array::from_fn(|_| Vec::with_capacity(steps));
    for (no, line) in lines.iter().enumerate().skip(1) {
        let fields = split_exact(line, 9, no + 1, path)?;
        let t: usize = parse_field(fields[0], "sample time", no + 1, path)?;
        if t != no - 1 {
            return Err(format_err(
                path,
                format!("line {}: sample time {t}, expected {}", no + 1, no - 1),
            ));
        }
        for (l, f) in fields[1..].iter().enumerate() {
            leads[l].push(parse_field(f, LEAD_NAMES[l], no + 1, path)?);
        }
    }
    EcgSignal::from_leads(leads)
}

// ---------------------------------------------------------------------------
// Biomarkers JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BiomarkersFile {
    qt_ms: f64,
    tpe_ms: f64,
    t_amplitude: f64,
    t_polarity: [i8; 8],
    tpeak_dispersion_v3_v5_ms: Option<f64>,
    excluded_leads: Vec<usize>,
}

pub fn write_biomarkers(path: &Path, b: &TWaveBiomarkers) -> Result<()> {
    to_json_pretty(
        &BiomarkersFile {
            qt_ms: b.qt_ms,
            tpe_ms: b.tpe_ms,
            t_amplitude: b.t_amplitude,
            t_polarity: b.t_polarity,
            tpeak_dispersion_v3_v5_ms: b.tpeak_dispersion_v3_v5_ms,
            excluded_leads: b.excluded_leads.clone(),
        },
        path,
    )
}

pub fn read_biomarkers(path: &Path) -> Result<TWaveBiomarkers> {
    let file: BiomarkersFile = from_json(path)?;
    Ok(TWaveBiomarkers {
        qt_ms: file.qt_ms,
        tpe_ms: file.tpe_ms,
        t_amplitude: file.t_amplitude,
        t_polarity: file.t_polarity,
        tpeak_dispersion_v3_v5_ms: file.tpeak_dispersion_v3_v5_ms,
        excluded_leads: file.excluded_leads,
    })
}

// ---------------------------------------------------------------------------
// Population and iteration CSV
// ---------------------------------------------------------------------------

fn population_header() -> String {
    let mut h = DIM_NAMES.join(",");
    h.push_str(",discrepancy");
    h
}

pub fn write_population(path: &Path, particles: &[Particle]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{}", population_header()).map_err(&err)?;
    for p in particles {
        for v in p.theta.to_array() {
            write!(w, "{v},").map_err(&err)?;
        }
        writeln!(w, "{}", p.discrepancy).map_err(&err)?;
    }
    finish(w, path)
}

pub fn read_population(path: &Path) -> Result<Vec<Particle>> {
    let lines = read_lines(path)?;
    expect_header(&lines, &population_header(), path)?;
    if lines.len() < 2 {
        return Err(format_err(path, "population has no rows"));
    }
    let mut particles = Vec::with_capacity(lines.len() - 1);
    for (no, line) in lines.iter().enumerate().skip(1) {
        let fields = split_exact(line, 7, no + 1, path)?;
        let mut theta = [0.0; 6];
        for (d, f) in fields[..6].iter().enumerate() {
            theta[d] = parse_field(f, DIM_NAMES[d], no + 1, path)?;
        }
        let theta = ApdGradientParams::from_array(theta);
        theta
            .validate()
            .map_err(|e| format_err(path, format!("line {}: {e}", no + 1)))?;
        particles.push(Particle {
            theta,
            discrepancy: parse_field(fields[6], "discrepancy", no + 1, path)?,
        });
    }
    Ok(particles)
}

const ITERATION_HEADER: &str = "iteration,threshold,best,uniqueness";

pub fn write_iteration_log(path: &Path, history: &[IterationLog]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{ITERATION_HEADER}").map_err(&err)?;
    for it in history {
        writeln!(w, "{},{},{},{}", it.iteration, it.threshold, it.best, it.uniqueness)
            .map_err(&err)?;
    }
    finish(w, path)
}

// ---------------------------------------------------------------------------
// Sensitivity CSV
// ---------------------------------------------------------------------------

const SENSITIVITY_HEADER: &str = "output,parameter,S1,S1_ci,ST,ST_ci,pearson";

pub fn write_sensitivity(path: &Path, report: &SensitivityReport) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{SENSITIVITY_HEADER}").map_err(&err)?;
    for output in &report.outputs {
        for (p, name) in DIM_NAMES.iter().enumerate() {
            let e = &output.sobol.estimates[p];
            writeln!(
                w,
                "{},{name},{},{},{},{},{}",
                output.output, e.s1, e.s1_ci, e.st, e.st_ci, output.pearson[p]
            )
            .map_err(&err)?;
        }
    }
    finish(w, path)
}

// ---------------------------------------------------------------------------
// Dose-response CSV
// ---------------------------------------------------------------------------

const DOSE_HEADER: &str = "dose_nM,block,qt_mean,qt_sd,tpe_mean,tpe_sd,n";

pub fn write_dose_response(path: &Path, rows: &[DoseRow]) -> Result<()> {
    let mut w = create(path)?;
    let err = write_err(path);
    writeln!(w, "{DOSE_HEADER}").map_err(&err)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.dose_nm, r.block, r.qt_mean, r.qt_sd, r.tpe_mean, r.tpe_sd, r.n
        )
        .map_err(&err)?;
    }
    finish(w, path)
}

// ---------------------------------------------------------------------------
// Inference config JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    lo: [f64; 6],
    hi: [f64; 6],
}

impl Default for BoundsFile {
    fn default() -> Self {
        let b = ThetaBounds::default();
        Self { lo: b.lo, hi: b.hi }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct InferenceConfigFile {
    population_size: usize,
    samples_per_iteration: usize,
    discrepancy_cutoff: f64,
    uniqueness_threshold: f64,
    apd_grid_ms: f64,
    gradient_grid: f64,
    seed: u64,
    bounds: BoundsFile,
}

impl Default for InferenceConfigFile {
    fn default() -> Self {
        Self::from(&InferenceConfig::default())
    }
}

impl From<&InferenceConfig> for InferenceConfigFile {
    fn from(c: &InferenceConfig) -> Self {
        Self {
            population_size: c.population_size,
            samples_per_iteration: c.samples_per_iteration,
            discrepancy_cutoff: c.discrepancy_cutoff,
            uniqueness_threshold: c.uniqueness_threshold,
            apd_grid_ms: c.apd_grid_ms,
            gradient_grid: c.gradient_grid,
            seed: c.seed,
            bounds: BoundsFile { lo: c.bounds.lo, hi: c.bounds.hi },
        }
    }
}

impl From<InferenceConfigFile> for InferenceConfig {
    fn from(f: InferenceConfigFile) -> Self {
        Self {
            population_size: f.population_size,
            samples_per_iteration: f.samples_per_iteration,
            discrepancy_cutoff: f.discrepancy_cutoff,
            uniqueness_threshold: f.uniqueness_threshold,
            apd_grid_ms: f.apd_grid_ms,
            gradient_grid: f.gradient_grid,
            bounds: ThetaBounds { lo: f.bounds.lo, hi: f.bounds.hi },
            seed: f.seed,
        }
    }
}

/// Reads an inference configuration. Keys are strict (unknown keys are
/// rejected), every field is optional, and omitted fields take the
/// documented defaults, so `{}` yields the default configuration.
pub fn read_inference_config(path: &Path) -> Result<InferenceConfig> {
    let file: InferenceConfigFile = from_json(path)?;
    let config = InferenceConfig::from(file);
    config.validate()?;
    Ok(config)
}

pub fn write_inference_config(path: &Path, config: &InferenceConfig) -> Result<()> {
    to_json_pretty(&InferenceConfigFile::from(config), path)
}

/// The default configuration as a pretty JSON string (for `--emit-defaults`).
pub fn default_inference_config_json() -> String {
    let mut s = serde_json::to_string_pretty(&InferenceConfigFile::default())
        .expect("default config serializes");
    s.push('\n');
    s
}
