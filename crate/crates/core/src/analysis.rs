//! Parameter sweeps, robustness scans and result tables.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{hyper_cnot_n, ideal_hyper_cnot_n, GateConfig};
use crate::hyperstate::PhotonSpec;
use crate::scattering::{efficiency, BlockCoeffs, CavityParams};

/// Grid over `g/(kappa+kappa_s)` and `kappa_s/kappa` with `kappa = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub g_ratios: Vec<f64>,
    pub ks_ratios: Vec<f64>,
    pub gamma_ratio: f64,
    pub detuning_c: f64,
    pub detuning_x: f64,
    pub n_targets: usize,
}

impl SweepGrid {
    /// Resonant grid with `gamma/kappa = 0.1`, as in the efficiency figure.
    pub fn resonant(g_ratios: Vec<f64>, ks_ratios: Vec<f64>, n_targets: usize) -> Self {
        Self {
            g_ratios,
            ks_ratios,
            gamma_ratio: 0.1,
            detuning_c: 0.0,
            detuning_x: 0.0,
            n_targets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("g_ratio", &self.g_ratios), ("ks_ratio", &self.ks_ratios)] {
            if axis.is_empty() {
                return Err(Error::Validation(format!("{name} axis is empty")));
            }
            if let Some(v) = axis.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Validation(format!(
                    "{name} axis value {v} must be finite and >= 0"
                )));
            }
        }
        if self.n_targets == 0 {
            return Err(Error::Validation("n_targets must be >= 1".into()));
        }
        if !(self.gamma_ratio.is_finite() && self.gamma_ratio >= 0.0) {
            return Err(Error::Validation(format!(
                "gamma ratio {} must be >= 0",
                self.gamma_ratio
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.g_ratios.len() * self.ks_ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One grid point. `fidelity` is reported as 0 when nothing survives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub g_ratio: f64,
    pub ks_ratio: f64,
    #[serde(rename = "abs_T")]
    pub abs_t: f64,
    pub efficiency: f64,
    pub success_prob: f64,
    pub fidelity: f64,
}

pub const CSV_HEADER: &str = "g_ratio,ks_ratio,abs_T,efficiency,success_prob,fidelity";

fn sweep_point(grid: &SweepGrid, g_ratio: f64, ks_ratio: f64) -> Result<SweepRow> {
    let params = CavityParams::from_ratios(
        g_ratio,
        ks_ratio,
        grid.gamma_ratio,
        grid.detuning_c,
        grid.detuning_x,
    );
    let block = BlockCoeffs::from_params(&params)?;
    let control = PhotonSpec::uniform();
    let targets = vec![PhotonSpec::uniform(); grid.n_targets];
    let cfg = GateConfig::new(params, grid.n_targets);
    let (success_prob, fidelity) = match hyper_cnot_n(&control, &targets, &cfg) {
        Ok(out) => {
            let ideal = ideal_hyper_cnot_n(&control, &targets);
            (out.success_prob, out.min_fidelity(&ideal)?)
        }
        Err(Error::AllAmplitudeLost) => (0.0, 0.0),
        Err(e) => return Err(e),
    };
    Ok(SweepRow {
        g_ratio,
        ks_ratio,
        abs_t: block.transmission.norm(),
        efficiency: efficiency(block.transmission, grid.n_targets),
        success_prob,
        fidelity,
    })
}

/// Runs the gate at every grid point on the uniform superposition input.
/// Rows come back g-major, in axis order.
pub fn sweep_efficiency(grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let points: Vec<(f64, f64)> = grid
        .g_ratios
        .iter()
        .flat_map(|&g| grid.ks_ratios.iter().map(move |&k| (g, k)))
        .collect();
    points
        .par_iter()
        .map(|&(g, k)| sweep_point(grid, g, k))
        .collect()
}

/// Mirror transmission used by a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MirrorSetting {
    /// Fixed value regardless of the cavity.
    Absolute(Complex64),
    /// Multiple of each case's block transmission.
    Scaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub n_cases: usize,
    pub seed: u64,
    pub n_targets: usize,
    pub mirror: Option<MirrorSetting>,
}

impl ScanConfig {
    pub fn new(n_cases: usize, seed: u64, n_targets: usize) -> Self {
        Self {
            n_cases,
            seed,
            n_targets,
            mirror: None,
        }
    }
}

/// Worst cases over a robustness scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub n_cases: usize,
    pub min_fidelity: f64,
    pub mean_fidelity: f64,
    /// Largest `|success_prob - |T|^(4(N+1))|`.
    pub max_success_deviation: f64,
    /// Largest `|norm^2 + sinks - 1|`.
    pub max_conservation_error: f64,
    /// Largest spread between a spin outcome's probability and a quarter of
    /// the success probability.
    pub max_outcome_imbalance: f64,
    pub min_abs_t: f64,
}

/// A random normalized complex pair.
pub fn random_pair<R: Rng + ?Sized>(rng: &mut R) -> [Complex64; 2] {
    loop {
        let v = [
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        ];
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if n > 1e-3 {
            return [v[0] / n, v[1] / n];
        }
    }
}

pub fn random_photon<R: Rng + ?Sized>(rng: &mut R) -> PhotonSpec {
    PhotonSpec {
        pol: random_pair(rng),
        spatial: random_pair(rng),
    }
}

/// Cavity parameters drawn from the scan ranges: `g/(kappa+kappa_s)` in
/// [0.2, 5], `kappa_s/kappa` in [0, 1], `gamma/kappa` in [0.05, 0.2] and
/// both detunings in [-kappa, kappa].
pub fn random_params<R: Rng + ?Sized>(rng: &mut R) -> CavityParams {
    let g_ratio = rng.gen_range(0.2..=5.0);
    let ks_ratio = rng.gen_range(0.0..=1.0);
    let gamma_ratio = rng.gen_range(0.05..=0.2);
    let detuning_c = rng.gen_range(-1.0..=1.0);
    let detuning_x = rng.gen_range(-1.0..=1.0);
    CavityParams::from_ratios(g_ratio, ks_ratio, gamma_ratio, detuning_c, detuning_x)
}

struct ScanCase {
    params: CavityParams,
    control: PhotonSpec,
    targets: Vec<PhotonSpec>,
}

struct CaseResult {
    fidelity: f64,
    success_deviation: f64,
    conservation_error: f64,
    outcome_imbalance: f64,
    abs_t: f64,
}

fn run_case(
    case: &ScanCase,
    n_targets: usize,
    mirror: Option<MirrorSetting>,
) -> Result<CaseResult> {
    let block = BlockCoeffs::from_params(&case.params)?;
    let mut cfg = GateConfig::new(case.params, n_targets);
    cfg.mirror_override = mirror.map(|m| match m {
        MirrorSetting::Absolute(t) => t,
        MirrorSetting::Scaled(f) => block.transmission * f,
    });
    let out = hyper_cnot_n(&case.control, &case.targets, &cfg)?;
    let ideal = ideal_hyper_cnot_n(&case.control, &case.targets);
    let total = out.success_prob + out.heralded_failure_prob() + out.absorbed_prob;
    let quarter = out.success_prob / 4.0;
    let outcome_imbalance = if out.branches.len() == 4 {
        out.branches
            .iter()
            .map(|b| (b.probability - quarter).abs())
            .fold(0.0, f64::max)
    } else {
        quarter
    };
    Ok(CaseResult {
        fidelity: out.min_fidelity(&ideal)?,
        success_deviation: (out.success_prob - efficiency(block.transmission, n_targets)).abs(),
        conservation_error: (total - 1.0).abs(),
        outcome_imbalance,
        abs_t: block.transmission.norm(),
    })
}

/// Random inputs against random cavities, compared with the ideal oracle.
pub fn fidelity_scan(cfg: &ScanConfig) -> Result<ScanSummary> {
    if cfg.n_cases == 0 {
        return Err(Error::Validation("n_cases must be >= 1".into()));
    }
    if cfg.n_targets == 0 {
        return Err(Error::Validation("n_targets must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cases: Vec<ScanCase> = (0..cfg.n_cases)
        .map(|_| ScanCase {
            params: random_params(&mut rng),
            control: random_photon(&mut rng),
            targets: (0..cfg.n_targets)
                .map(|_| random_photon(&mut rng))
                .collect(),
        })
        .collect();
    let results = cases
        .par_iter()
        .map(|case| run_case(case, cfg.n_targets, cfg.mirror))
        .collect::<Result<Vec<_>>>()?;

    let n = results.len() as f64;
    Ok(ScanSummary {
        n_cases: results.len(),
        min_fidelity: results
            .iter()
            .map(|r| r.fidelity)
            .fold(f64::INFINITY, f64::min),
        mean_fidelity: results.iter().map(|r| r.fidelity).sum::<f64>() / n,
        max_success_deviation: results
            .iter()
            .map(|r| r.success_deviation)
            .fold(0.0, f64::max),
        max_conservation_error: results
            .iter()
            .map(|r| r.conservation_error)
            .fold(0.0, f64::max),
        max_outcome_imbalance: results
            .iter()
            .map(|r| r.outcome_imbalance)
            .fold(0.0, f64::max),
        min_abs_t: results
            .iter()
            .map(|r| r.abs_t)
            .fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Writes `rows` with the fixed column schema. Floats use shortest
/// round-trip formatting.
pub fn emit_report<W: Write>(
    rows: &[SweepRow],
    format: ReportFormat,
    writer: W,
) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()
        }
        ReportFormat::Json => {
            let mut writer = writer;
            serde_json::to_writer_pretty(&mut writer, rows)?;
            writeln!(writer)
        }
    }
}

/// [`emit_report`] into a file, surfacing I/O failures with the path.
pub fn write_report(rows: &[SweepRow], format: ReportFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    emit_report(rows, format, &mut writer).map_err(io_err)?;
    writer.flush().map_err(io_err)
}

pub fn read_report<R: Read>(format: ReportFormat, reader: R) -> Result<Vec<SweepRow>> {
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(reader);
            let header = r.headers().map_err(|e| Error::parse("CSV report", e))?;
            if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
                return Err(Error::parse(
                    "CSV report",
                    format!("unexpected header {header:?}"),
                ));
            }
            r.deserialize()
                .collect::<std::result::Result<Vec<SweepRow>, _>>()
                .map_err(|e| Error::parse("CSV report", e))
        }
        ReportFormat::Json => {
            serde_json::from_reader(reader).map_err(|e| Error::parse("JSON report", e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<SweepRow> {
        sweep_efficiency(&SweepGrid::resonant(
            vec![0.0, 0.7, 3.0],
            vec![0.0, 0.1, 1.0 / 3.0],
            1,
        ))
        .unwrap()
    }

    #[test]
    fn practical_point() {
        let r = sweep_efficiency(&SweepGrid::resonant(vec![3.0], vec![0.1], 1)).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].efficiency - 0.6513).abs() < 1e-4);
        assert!((r[0].success_prob - r[0].efficiency).abs() < 1e-12);
        assert!((r[0].fidelity - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_coupling_row() {
        let r = sweep_efficiency(&SweepGrid::resonant(vec![0.0], vec![0.0, 0.5], 1)).unwrap();
        for row in r {
            assert_eq!(row.efficiency, 0.0);
            assert_eq!(row.success_prob, 0.0);
            assert_eq!(row.abs_t, 0.0);
        }
    }

    #[test]
    fn lossless_strong_coupling_approaches_one() {
        let g: Vec<f64> = vec![5.0, 10.0, 20.0, 50.0];
        let r = sweep_efficiency(&SweepGrid::resonant(g, vec![0.0], 1)).unwrap();
        for pair in r.windows(2) {
            assert!(pair[1].efficiency > pair[0].efficiency);
        }
        assert!(r.last().unwrap().efficiency > 0.99);
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(sweep_efficiency(&SweepGrid::resonant(vec![], vec![0.1], 1)).is_err());
        assert!(sweep_efficiency(&SweepGrid::resonant(vec![1.0], vec![-0.1], 1)).is_err());
    }

    #[test]
    fn scan_is_clean_and_reproducible() {
        let cfg = ScanConfig::new(20, 11, 1);
        let a = fidelity_scan(&cfg).unwrap();
        assert!((a.min_fidelity - 1.0).abs() < 1e-10);
        assert!(a.max_success_deviation < 1e-12);
        assert!(a.max_conservation_error < 1e-12);
        assert!(a.max_outcome_imbalance < 1e-12);
        assert_eq!(a, fidelity_scan(&cfg).unwrap());
        let one = ScanConfig::new(1, 5, 2);
        assert_eq!(fidelity_scan(&one).unwrap(), fidelity_scan(&one).unwrap());
        assert!(fidelity_scan(&ScanConfig::new(0, 1, 1)).is_err());
    }

    #[test]
    fn imbalanced_mirror_hurts_fidelity() {
        let mut cfg = ScanConfig::new(20, 3, 1);
        cfg.mirror = Some(MirrorSetting::Scaled(0.9));
        let s = fidelity_scan(&cfg).unwrap();
        assert!(s.min_fidelity < 1.0 - 1e-6, "{s:?}");
    }

    #[test]
    fn csv_schema_and_roundtrip() {
        let rows = rows();
        let mut buf = Vec::new();
        emit_report(&rows, ReportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert!(text.lines().skip(1).all(|l| l.split(',').count() == 6));
        assert_eq!(
            read_report(ReportFormat::Csv, buf.as_slice()).unwrap(),
            rows
        );
    }

    #[test]
    fn json_roundtrip() {
        let rows = rows();
        let mut buf = Vec::new();
        emit_report(&rows, ReportFormat::Json, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"abs_T\""));
        assert_eq!(
            read_report(ReportFormat::Json, buf.as_slice()).unwrap(),
            rows
        );
    }

    #[test]
    fn write_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_report(&[], ReportFormat::Csv, &dir.path().join("x.csv")),
            Err(Error::EmptyReport)
        ));
        let bad = dir.path().join("missing").join("x.csv");
        let err = write_report(&rows(), ReportFormat::Csv, &bad).unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }
}
