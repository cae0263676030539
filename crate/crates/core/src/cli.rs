//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 verification failed, 2 validation error,
//! 3 degenerate physics (nothing transmitted), 4 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::json;

use crate::analysis::{
    emit_report, fidelity_scan, sweep_efficiency, MirrorSetting, ReportFormat, ScanConfig,
    SweepGrid, SweepRow,
};
use crate::error::{Error, Result};
use crate::gates::{hyper_cnot_n, ideal_hyper_cnot_n, GateConfig, Mode, Sampler, ShotOutcome};
use crate::hyperstate::{
    format_photon_label, BasisLabel, PhotonSpec, PhotonState, Pol, SinkId, Spatial, Spin,
};
use crate::scattering::{efficiency, BlockCoeffs, CavityParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "hypercnot",
    version,
    about = "Heralded hyperparallel photonic CNOT simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one hyper-CNOT or hyper-CNOT^N.
    Run(RunArgs),
    /// Print the 16-row hyper-basis truth table.
    TruthTable(TableArgs),
    /// Efficiency sweep over g/(kappa+kappa_s) and kappa_s/kappa.
    Sweep(SweepArgs),
    /// Randomized self-error-correction and conservation checks.
    Verify(VerifyArgs),
    /// Monte Carlo shots of one gate.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Cnot,
    Cnotn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Amplitude,
    Sampled,
}

/// Cavity parameters. Defaults: kappa = 1, kappa_s = 0.1, gamma = 0.1,
/// g = 3.3, everything on resonance.
#[derive(Debug, Clone, Default, Args)]
pub struct PhysicsArgs {
    /// JSON run description; command-line flags override its fields.
    #[arg(long)]
    pub params_file: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub g: Option<f64>,
    /// Coupling as g/(kappa+kappa_s); exclusive with --g.
    #[arg(long, conflicts_with = "g", allow_negative_numbers = true)]
    pub g_ratio: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa_s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// omega_c - omega.
    #[arg(long, allow_negative_numbers = true)]
    pub detuning_c: Option<f64>,
    /// omega_x - omega.
    #[arg(long, allow_negative_numbers = true)]
    pub detuning_x: Option<f64>,
    /// Mirror transmission, `0.9` or `(re,im)`; defaults to the block T.
    #[arg(long, allow_negative_numbers = true)]
    pub mirror_override: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, value_enum)]
    pub gate: Option<GateKind>,
    /// Control photon, e.g. `L,a2` or `pol=(1,0),(0,0);spat=+`.
    #[arg(long, allow_hyphen_values = true)]
    pub control: Option<String>,
    /// Target photon; repeat for CNOT^N.
    #[arg(long = "target", allow_hyphen_values = true)]
    pub targets: Vec<String>,
    #[arg(long)]
    pub n_targets: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// `start:stop:step` or a comma list.
    #[arg(long)]
    pub g_ratio: String,
    /// `start:stop:step` or a comma list.
    #[arg(long)]
    pub ks_ratio: String,
    /// gamma/kappa.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub detuning_c: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub detuning_x: f64,
    #[arg(long, default_value_t = 1)]
    pub n_targets: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 2018)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n_cases: usize,
    #[arg(long, default_value_t = 1)]
    pub n_targets: usize,
    /// Fixed mirror transmission for every case, `0.9` or `(re,im)`.
    #[arg(long, allow_negative_numbers = true)]
    pub mirror_override: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value = "+,+", allow_hyphen_values = true)]
    pub control: String,
    #[arg(long = "target", allow_hyphen_values = true)]
    pub targets: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub n_targets: usize,
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// JSON run description accepted by `--params-file`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub gate: Option<GateKind>,
    pub control: Option<PhotonInput>,
    #[serde(default)]
    pub targets: Vec<PhotonInput>,
    pub n_targets: Option<usize>,
    #[serde(default)]
    pub params: ParamsInput,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub mirror_override: Option<ComplexInput>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

/// Raw rates, or the dimensionless `*_ratio` convenience fields.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsInput {
    pub g: Option<f64>,
    pub g_ratio: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_s: Option<f64>,
    pub ks_ratio: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_ratio: Option<f64>,
    pub detuning_c: Option<f64>,
    pub detuning_x: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PhotonInput {
    Text(String),
    Explicit {
        pol: [[f64; 2]; 2],
        spat: [[f64; 2]; 2],
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ComplexInput {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexInput {
    fn value(&self) -> Complex64 {
        match *self {
            ComplexInput::Real(re) => Complex64::new(re, 0.0),
            ComplexInput::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

impl PhotonInput {
    fn resolve(&self, role: &str) -> Result<PhotonSpec> {
        let spec = match self {
            PhotonInput::Text(s) => parse_photon(s),
            PhotonInput::Explicit { pol, spat } => {
                let pair = |p: &[[f64; 2]; 2]| {
                    [
                        Complex64::new(p[0][0], p[0][1]),
                        Complex64::new(p[1][0], p[1][1]),
                    ]
                };
                PhotonSpec::new(pair(pol), pair(spat))
            }
        };
        spec.map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{role}: {m}")),
            Error::Parse { what, detail } => Error::Parse {
                what: format!("{role} {what}"),
                detail,
            },
            other => other,
        })
    }
}

impl ParamsInput {
    fn overlay(&mut self, flags: &PhysicsArgs) {
        if let Some(g) = flags.g {
            self.g = Some(g);
            self.g_ratio = None;
        }
        if let Some(r) = flags.g_ratio {
            self.g_ratio = Some(r);
            self.g = None;
        }
        if let Some(k) = flags.kappa {
            self.kappa = Some(k);
        }
        if let Some(ks) = flags.kappa_s {
            self.kappa_s = Some(ks);
            self.ks_ratio = None;
        }
        if let Some(gamma) = flags.gamma {
            self.gamma = Some(gamma);
            self.gamma_ratio = None;
        }
        if flags.detuning_c.is_some() {
            self.detuning_c = flags.detuning_c;
        }
        if flags.detuning_x.is_some() {
            self.detuning_x = flags.detuning_x;
        }
    }

    fn resolve(&self) -> Result<CavityParams> {
        let exclusive = [
            ("g", self.g.is_some(), "g_ratio", self.g_ratio.is_some()),
            (
                "kappa_s",
                self.kappa_s.is_some(),
                "ks_ratio",
                self.ks_ratio.is_some(),
            ),
            (
                "gamma",
                self.gamma.is_some(),
                "gamma_ratio",
                self.gamma_ratio.is_some(),
            ),
        ];
        for (a, has_a, b, has_b) in exclusive {
            if has_a && has_b {
                return Err(Error::Validation(format!(
                    "give either {a} or {b}, not both"
                )));
            }
        }
        let kappa = self.kappa.unwrap_or(1.0);
        let kappa_s = self
            .kappa_s
            .or(self.ks_ratio.map(|r| r * kappa))
            .unwrap_or(0.1 * kappa);
        let gamma = self
            .gamma
            .or(self.gamma_ratio.map(|r| r * kappa))
            .unwrap_or(0.1 * kappa);
        let g = self
            .g
            .or(self.g_ratio.map(|r| r * (kappa + kappa_s)))
            .unwrap_or(3.0 * (kappa + kappa_s));
        let params = CavityParams {
            g,
            kappa,
            kappa_s,
            gamma,
            omega: 0.0,
            omega_c: self.detuning_c.unwrap_or(0.0),
            omega_x: self.detuning_x.unwrap_or(0.0),
        };
        params.validate()?;
        Ok(params)
    }
}

fn load_run_file(path: Option<&Path>) -> Result<RunFile> {
    let Some(path) = path else {
        return Ok(RunFile::default());
    };
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::parse(format!("run file {}", path.display()), e))
}

fn parse_real(token: &str, what: &str) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| Error::parse(what, format!("`{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(what, format!("`{token}` is not finite")));
    }
    Ok(v)
}

/// `0.9`, `(0.9,0.1)`.
pub fn parse_complex(text: &str) -> Result<Complex64> {
    let t = text.trim();
    if let Some(inner) = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::parse(
                "complex number",
                format!("`{text}` needs (re,im)"),
            ));
        }
        Ok(Complex64::new(
            parse_real(parts[0], "complex number")?,
            parse_real(parts[1], "complex number")?,
        ))
    } else {
        Ok(Complex64::new(parse_real(t, "complex number")?, 0.0))
    }
}

fn parse_coeff_pair(text: &str, name: &str) -> Result<[Complex64; 2]> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let halves: Vec<&str> = compact.split("),(").collect();
    if halves.len() != 2 || !compact.starts_with('(') || !compact.ends_with(')') {
        return Err(Error::parse(
            format!("{name} pair"),
            format!("`{text}` should look like (re,im),(re,im)"),
        ));
    }
    let first = format!("{})", halves[0]);
    let second = format!("({}", halves[1]);
    Ok([parse_complex(&first)?, parse_complex(&second)?])
}

fn shorthand_pair(token: &str, name: &str) -> Result<[Complex64; 2]> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let t = token.trim();
    let pair = match (name, t) {
        (_, "+") => [h, h],
        (_, "-") => [h, -h],
        ("pol", "R" | "r") => [one, zero],
        ("pol", "L" | "l") => [zero, one],
        ("spat", "1" | "a1" | "b1") => [one, zero],
        ("spat", "2" | "a2" | "b2") => [zero, one],
        _ if t.starts_with('(') => return parse_coeff_pair(t, name),
        _ => {
            return Err(Error::parse(
                format!("{name} pair"),
                format!("unknown shorthand `{t}`"),
            ))
        }
    };
    Ok(pair)
}

/// Parses `R,a1`-style shorthand or `pol=(re,im),(re,im);spat=(re,im),(re,im)`.
/// Either side of the long form may also use a shorthand.
pub fn parse_photon(text: &str) -> Result<PhotonSpec> {
    let t = text.trim();
    let (pol, spat) = if t.contains('=') {
        let mut pol = None;
        let mut spat = None;
        for part in t.split(';').filter(|p| !p.trim().is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::parse("photon spec", format!("`{part}` is not key=value")))?;
            match key.trim() {
                "pol" => pol = Some(shorthand_pair(value, "pol")?),
                "spat" => spat = Some(shorthand_pair(value, "spat")?),
                other => {
                    return Err(Error::parse(
                        "photon spec",
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        }
        (
            pol.ok_or_else(|| Error::parse("photon spec", "missing pol=..."))?,
            spat.ok_or_else(|| Error::parse("photon spec", "missing spat=..."))?,
        )
    } else {
        let (p, s) = t
            .split_once(',')
            .ok_or_else(|| Error::parse("photon spec", format!("`{t}` should look like R,a1")))?;
        (shorthand_pair(p, "pol")?, shorthand_pair(s, "spat")?)
    };
    PhotonSpec::new(pol, spat)
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_axis(text: &str) -> Result<Vec<f64>> {
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::Validation("empty axis".into()));
    }
    if t.contains(':') {
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::parse(
                "axis",
                format!("`{t}` should be start:stop:step"),
            ));
        }
        let start = parse_real(parts[0], "axis")?;
        let stop = parse_real(parts[1], "axis")?;
        let step = parse_real(parts[2], "axis")?;
        if step <= 0.0 || stop < start {
            return Err(Error::Validation(format!(
                "axis `{t}` needs step > 0 and stop >= start"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| start + i as f64 * step).collect())
    } else {
        t.split(',').map(|v| parse_real(v, "axis")).collect()
    }
}

/// Fixed-point rendering with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() {
            "0.00000000000".into()
        } else {
            format!("{x}")
        };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn fmt_complex(c: Complex64) -> String {
    format!("({}, {})", fmt_sig(c.re), fmt_sig(c.im))
}

fn spin_name(record: (Spin, Spin)) -> String {
    format!("{},{}", record.0, record.1)
}

/// Amplitudes with non-negligible magnitude, in label order.
fn state_entries(state: &PhotonState) -> Vec<(String, Complex64)> {
    state
        .amplitudes
        .iter()
        .filter(|(_, a)| a.norm() > 1e-14)
        .map(|(&bits, &a)| (format_photon_label(bits, state.n_photons), a))
        .collect()
}

struct CliError {
    code: i32,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::InvalidPhoton { .. }
            | Error::InvalidSpin(_)
            | Error::MirrorTransmission(_)
            | Error::EmptyReport => EXIT_VALIDATION,
            Error::AllAmplitudeLost | Error::Domain(_) => EXIT_DEGENERATE,
            Error::Io { .. } => EXIT_IO,
            Error::ContractViolation(_)
            | Error::DimensionMismatch { .. }
            | Error::NegativeMass(_) => EXIT_VERIFY_FAILED,
        };
        let message = match e {
            Error::AllAmplitudeLost => "block never transmits: all amplitude lost".to_string(),
            other => other.to_string(),
        };
        CliError { code, message }
    }
}

type CliResult = std::result::Result<i32, CliError>;

fn degenerate(block: &BlockCoeffs) -> std::result::Result<(), CliError> {
    if block.transmission.norm() == 0.0 {
        return Err(CliError {
            code: EXIT_DEGENERATE,
            message: "block never transmits (|T| = 0)".into(),
        });
    }
    Ok(())
}

fn deliver(
    text: &str,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> std::result::Result<(), CliError> {
    let result = match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    };
    result.map_err(CliError::from)
}

struct ResolvedRun {
    control: PhotonSpec,
    targets: Vec<PhotonSpec>,
    cfg: GateConfig,
    gate: GateKind,
    format: OutputFormat,
    out: Option<PathBuf>,
}

fn resolve_mirror(flag: Option<&str>, file: Option<&ComplexInput>) -> Result<Option<Complex64>> {
    match (flag, file) {
        (Some(text), _) => Ok(Some(parse_complex(text)?)),
        (None, Some(c)) => Ok(Some(c.value())),
        (None, None) => Ok(None),
    }
}

fn resolve_run(args: &RunArgs) -> Result<ResolvedRun> {
    let file = load_run_file(args.physics.params_file.as_deref())?;
    let mut params = file.params.clone();
    params.overlay(&args.physics);
    let params = params.resolve()?;

    let control = match (&args.control, &file.control) {
        (Some(text), _) => PhotonInput::Text(text.clone()).resolve("control")?,
        (None, Some(input)) => input.resolve("control")?,
        (None, None) => {
            return Err(Error::Validation(
                "missing control photon (--control)".into(),
            ))
        }
    };
    let mut targets = if args.targets.is_empty() {
        file.targets
            .iter()
            .enumerate()
            .map(|(i, t)| t.resolve(&format!("target {}", i + 1)))
            .collect::<Result<Vec<_>>>()?
    } else {
        args.targets
            .iter()
            .enumerate()
            .map(|(i, t)| PhotonInput::Text(t.clone()).resolve(&format!("target {}", i + 1)))
            .collect::<Result<Vec<_>>>()?
    };

    let gate = args.gate.or(file.gate).unwrap_or(GateKind::Cnot);
    let n_targets = args.n_targets.or(file.n_targets);
    match gate {
        GateKind::Cnot => {
            if targets.len() != 1 {
                return Err(Error::Validation(format!(
                    "cnot needs exactly one target photon, got {}",
                    targets.len()
                )));
            }
            if let Some(n) = n_targets.filter(|&n| n != 1) {
                return Err(Error::Validation(format!("cnot has one target, not {n}")));
            }
        }
        GateKind::Cnotn => {
            if targets.is_empty() {
                return Err(Error::Validation(
                    "cnotn needs at least one target photon".into(),
                ));
            }
            if let Some(n) = n_targets {
                if n == 0 {
                    return Err(Error::Validation("n_targets must be >= 1".into()));
                }
                if targets.len() == 1 && n > 1 {
                    targets = vec![targets[0]; n];
                } else if targets.len() != n {
                    return Err(Error::Validation(format!(
                        "--n-targets {n} does not match {} target photon(s)",
                        targets.len()
                    )));
                }
            }
        }
    }

    let mut cfg = GateConfig::new(params, targets.len());
    cfg.mirror_override = resolve_mirror(
        args.physics.mirror_override.as_deref(),
        file.mirror_override.as_ref(),
    )?;
    cfg.mode = match args.mode {
        Some(ModeArg::Sampled) => Mode::Sampled,
        Some(ModeArg::Amplitude) => Mode::Amplitude,
        None => file.mode.unwrap_or_default(),
    };
    cfg.rng_seed = args.seed.or(file.seed);
    cfg.validate()?;

    Ok(ResolvedRun {
        control,
        targets,
        cfg,
        gate,
        format: args
            .output
            .format
            .or(file.format)
            .unwrap_or(OutputFormat::Text),
        out: args.output.out.clone().or(file.out),
    })
}

fn params_json(p: &CavityParams) -> serde_json::Value {
    json!({
        "g": p.g, "kappa": p.kappa, "kappa_s": p.kappa_s, "gamma": p.gamma,
        "detuning_c": p.omega_c - p.omega, "detuning_x": p.omega_x - p.omega,
    })
}

fn complex_json(c: Complex64) -> serde_json::Value {
    json!([c.re, c.im])
}

fn state_json(state: &PhotonState) -> serde_json::Value {
    serde_json::Value::Array(
        state_entries(state)
            .into_iter()
            .map(|(label, a)| json!({ "label": label, "amplitude": complex_json(a) }))
            .collect(),
    )
}

fn params_text(p: &CavityParams) -> String {
    format!(
        "g={} kappa={} kappa_s={} gamma={} detuning_c={} detuning_x={}",
        p.g,
        p.kappa,
        p.kappa_s,
        p.gamma,
        p.omega_c - p.omega,
        p.omega_x - p.omega
    )
}

fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> CliResult {
    let run = resolve_run(args)?;
    let block = BlockCoeffs::from_params(&run.cfg.params)?;
    degenerate(&block)?;
    if run.cfg.mode == Mode::Sampled {
        return cmd_run_sampled(&run, stdout);
    }

    let outcome = hyper_cnot_n(&run.control, &run.targets, &run.cfg)?;
    let ideal = ideal_hyper_cnot_n(&run.control, &run.targets);
    let fid = outcome.min_fidelity(&ideal)?;
    let gate_name = match run.gate {
        GateKind::Cnot => "cnot",
        GateKind::Cnotn => "cnotn",
    };

    let text = match run.format {
        OutputFormat::Json => {
            let doc = json!({
                "gate": gate_name,
                "n_targets": run.targets.len(),
                "params": params_json(&run.cfg.params),
                "block": { "D": complex_json(outcome.block.reflection), "T": complex_json(outcome.block.transmission) },
                "mirror_T": complex_json(outcome.mirror),
                "success_prob": outcome.success_prob,
                "heralded_failure_prob": outcome.heralded_failure_prob(),
                "heralded_b1": outcome.heralded_b1,
                "heralded_b2": outcome.heralded_b2,
                "absorbed_prob": outcome.absorbed_prob,
                "spin_record": spin_name(outcome.spin_record),
                "corrections": outcome.corrections,
                "fidelity": fid,
                "conditional_state": state_json(&outcome.conditional_state),
                "branches": outcome.branches.iter().map(|b| json!({
                    "spin_record": spin_name(b.spin_record),
                    "probability": b.probability,
                    "corrections": b.corrections,
                })).collect::<Vec<_>>(),
                "trace": outcome.trace.records().iter().map(|r| json!({
                    "element": r.element.name(),
                    "photon": r.element.photon(),
                    "branch": r.element.branch().to_string(),
                    "deposited": r.deposited,
                })).collect::<Vec<_>>(),
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("json"))
        }
        OutputFormat::Text | OutputFormat::Csv => {
            let mut s = String::new();
            let _ = writeln!(s, "gate: {gate_name} ({} target(s))", run.targets.len());
            let _ = writeln!(s, "params: {}", params_text(&run.cfg.params));
            let _ = writeln!(
                s,
                "block: D={} T={} |T|={}",
                fmt_complex(outcome.block.reflection),
                fmt_complex(outcome.block.transmission),
                fmt_sig(outcome.block.transmission.norm())
            );
            let _ = writeln!(s, "mirror_T: {}", fmt_complex(outcome.mirror));
            let _ = writeln!(s, "success_prob: {}", fmt_sig(outcome.success_prob));
            let _ = writeln!(
                s,
                "heralded_failure_prob: {} (B1 {}, B2 {})",
                fmt_sig(outcome.heralded_failure_prob()),
                fmt_sig(outcome.heralded_b1),
                fmt_sig(outcome.heralded_b2)
            );
            let _ = writeln!(s, "absorbed_prob: {}", fmt_sig(outcome.absorbed_prob));
            let _ = writeln!(s, "spin_record: {}", spin_name(outcome.spin_record));
            let _ = writeln!(
                s,
                "corrections: pol_phase={} spatial_phase={}",
                outcome.corrections.pol_phase, outcome.corrections.spatial_phase
            );
            let _ = writeln!(s, "fidelity: {}", fmt_sig(fid));
            let _ = writeln!(s, "conditional_state:");
            for (label, a) in state_entries(&outcome.conditional_state) {
                let _ = writeln!(s, "  {label}  {}", fmt_complex(a));
            }
            s
        }
    };
    deliver(&text, run.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

fn shot_json(shot: &ShotOutcome, n_photons: usize) -> serde_json::Value {
    match shot {
        ShotOutcome::Success {
            spin_record,
            corrections,
            state,
        } => json!({
            "result": "success",
            "spin_record": spin_name(*spin_record),
            "corrections": corrections,
            "state": state_json(state),
        }),
        ShotOutcome::Heralded {
            detector,
            photon,
            element,
        } => json!({
            "result": "heralded_failure",
            "detector": detector_name(*detector),
            "photon": crate::hyperstate::photon_name(*photon, n_photons),
            "element": element,
        }),
        ShotOutcome::Lost { photon, element } => json!({
            "result": "lost",
            "photon": crate::hyperstate::photon_name(*photon, n_photons),
            "element": element,
        }),
    }
}

fn detector_name(id: SinkId) -> &'static str {
    match id {
        SinkId::DetectorB1 => "B1",
        SinkId::DetectorB2 => "B2",
        SinkId::Absorbed => "absorbed",
    }
}

fn cmd_run_sampled(run: &ResolvedRun, stdout: &mut dyn Write) -> CliResult {
    let seed = run.cfg.rng_seed.expect("validated");
    let sampler = Sampler::new(&run.control, &run.targets, &run.cfg)?;
    let shot =
        sampler.shot(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed));
    let n = run.targets.len() + 1;
    let doc = shot_json(&shot, n);
    let text = match run.format {
        OutputFormat::Json => format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")),
        _ => {
            let mut s = String::new();
            let _ = writeln!(s, "seed: {seed}");
            match &shot {
                ShotOutcome::Success {
                    spin_record,
                    corrections,
                    state,
                } => {
                    let _ = writeln!(s, "result: success");
                    let _ = writeln!(s, "spin_record: {}", spin_name(*spin_record));
                    let _ = writeln!(
                        s,
                        "corrections: pol_phase={} spatial_phase={}",
                        corrections.pol_phase, corrections.spatial_phase
                    );
                    let _ = writeln!(s, "conditional_state:");
                    for (label, a) in state_entries(state) {
                        let _ = writeln!(s, "  {label}  {}", fmt_complex(a));
                    }
                }
                ShotOutcome::Heralded {
                    detector,
                    photon,
                    element,
                } => {
                    let _ = writeln!(
                        s,
                        "result: heralded_failure (detector {}, photon {}, element {element})",
                        detector_name(*detector),
                        crate::hyperstate::photon_name(*photon, n)
                    );
                }
                ShotOutcome::Lost { photon, element } => {
                    let _ = writeln!(
                        s,
                        "result: lost (photon {}, element {element})",
                        crate::hyperstate::photon_name(*photon, n)
                    );
                }
            }
            s
        }
    };
    deliver(&text, run.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

fn basis_inputs() -> Vec<(Pol, Spatial)> {
    let mut v = Vec::new();
    for spatial in [Spatial::Mode1, Spatial::Mode2] {
        for pol in [Pol::R, Pol::L] {
            v.push((pol, spatial));
        }
    }
    v
}

fn photon_basis_name(pol: Pol, spatial: Spatial, prefix: char) -> String {
    format!("{pol} {prefix}{spatial}")
}

/// One row of the hyper-basis truth table.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub control: (Pol, Spatial),
    pub target: (Pol, Spatial),
    /// Output basis state, or `None` if the output is not a basis state.
    pub output: Option<[(Pol, Spatial); 2]>,
    pub fidelity: f64,
    pub success_prob: f64,
}

/// Runs all 16 hyper-basis inputs through the circuit.
pub fn truth_table(params: &CavityParams, mirror: Option<Complex64>) -> Result<Vec<TruthRow>> {
    let mut rows = Vec::with_capacity(16);
    for control in basis_inputs() {
        for target in basis_inputs() {
            let c = PhotonSpec::basis(control.0, control.1);
            let t = PhotonSpec::basis(target.0, target.1);
            let mut cfg = GateConfig::new(*params, 1);
            cfg.mirror_override = mirror;
            let out = hyper_cnot_n(&c, &[t], &cfg)?;
            let ideal = ideal_hyper_cnot_n(&c, &[t]);
            let support = out.conditional_state.support(1e-9);
            let output = (support.len() == 1).then(|| {
                let label = BasisLabel(support[0].0);
                [
                    (label.pol(0), label.spatial(0)),
                    (label.pol(1), label.spatial(1)),
                ]
            });
            rows.push(TruthRow {
                control,
                target,
                output,
                fidelity: out.min_fidelity(&ideal)?,
                success_prob: out.success_prob,
            });
        }
    }
    Ok(rows)
}

fn truth_output_name(row: &TruthRow) -> String {
    match row.output {
        Some([a, b]) => format!(
            "{} | {}",
            photon_basis_name(a.0, a.1, 'a'),
            photon_basis_name(b.0, b.1, 'b')
        ),
        None => "superposition".into(),
    }
}

fn cmd_truth_table(args: &TableArgs, stdout: &mut dyn Write) -> CliResult {
    let file = load_run_file(args.physics.params_file.as_deref())?;
    let mut params = file.params.clone();
    params.overlay(&args.physics);
    let params = params.resolve()?;
    degenerate(&BlockCoeffs::from_params(&params)?)?;
    let mirror = resolve_mirror(
        args.physics.mirror_override.as_deref(),
        file.mirror_override.as_ref(),
    )?;
    let rows = truth_table(&params, mirror)?;

    let format = args
        .output
        .format
        .or(file.format)
        .unwrap_or(OutputFormat::Text);
    let text = match format {
        OutputFormat::Text => {
            let mut s = String::new();
            for row in &rows {
                let _ = writeln!(
                    s,
                    "{} | {}  ->  {}   fidelity={} success={}",
                    photon_basis_name(row.control.0, row.control.1, 'a'),
                    photon_basis_name(row.target.0, row.target.1, 'b'),
                    truth_output_name(row),
                    fmt_sig(row.fidelity),
                    fmt_sig(row.success_prob)
                );
            }
            s
        }
        OutputFormat::Csv => {
            let mut s = String::from("control,target,output,fidelity,success_prob\n");
            for row in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    photon_basis_name(row.control.0, row.control.1, 'a'),
                    photon_basis_name(row.target.0, row.target.1, 'b'),
                    truth_output_name(row),
                    row.fidelity,
                    row.success_prob
                );
            }
            s
        }
        OutputFormat::Json => {
            let doc: Vec<_> = rows
                .iter()
                .map(|row| {
                    json!({
                        "control": photon_basis_name(row.control.0, row.control.1, 'a'),
                        "target": photon_basis_name(row.target.0, row.target.1, 'b'),
                        "output": truth_output_name(row),
                        "fidelity": row.fidelity,
                        "success_prob": row.success_prob,
                    })
                })
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("json"))
        }
    };
    deliver(
        &text,
        args.output.out.as_deref().or(file.out.as_deref()),
        stdout,
    )?;
    Ok(EXIT_OK)
}

fn sweep_text(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>10} {:>10} {:>16} {:>16} {:>16} {:>16}\n",
        "g_ratio", "ks_ratio", "abs_T", "efficiency", "success_prob", "fidelity"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>10} {:>10} {:>16} {:>16} {:>16} {:>16}",
            r.g_ratio,
            r.ks_ratio,
            fmt_sig(r.abs_t),
            fmt_sig(r.efficiency),
            fmt_sig(r.success_prob),
            fmt_sig(r.fidelity)
        );
    }
    s
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> CliResult {
    let grid = SweepGrid {
        g_ratios: parse_axis(&args.g_ratio)?,
        ks_ratios: parse_axis(&args.ks_ratio)?,
        gamma_ratio: args.gamma,
        detuning_c: args.detuning_c,
        detuning_x: args.detuning_x,
        n_targets: args.n_targets,
    };
    let rows = sweep_efficiency(&grid)?;
    if rows.is_empty() {
        return Err(Error::EmptyReport.into());
    }
    let text = match args.output.format.unwrap_or(OutputFormat::Csv) {
        OutputFormat::Text => sweep_text(&rows),
        fmt => {
            let report = if fmt == OutputFormat::Json {
                ReportFormat::Json
            } else {
                ReportFormat::Csv
            };
            let mut buf = Vec::new();
            emit_report(&rows, report, &mut buf).expect("in-memory write");
            String::from_utf8(buf).expect("utf8")
        }
    };
    deliver(&text, args.output.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

/// Pass/fail threshold for the verification suite.
const VERIFY_TOLERANCE: f64 = 1e-10;
const VERIFY_EXACT: f64 = 1e-12;

fn cmd_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> CliResult {
    if args.n_cases == 0 {
        return Err(Error::Validation("--n-cases must be >= 1".into()).into());
    }
    if args.n_targets == 0 {
        return Err(Error::Validation("--n-targets must be >= 1".into()).into());
    }
    let mirror = args
        .mirror_override
        .as_deref()
        .map(parse_complex)
        .transpose()?;
    if let Some(m) = mirror {
        if m.norm() > 1.0 {
            return Err(Error::MirrorTransmission(m.norm()).into());
        }
    }
    let mut scan = ScanConfig::new(args.n_cases, args.seed, args.n_targets);
    scan.mirror = mirror.map(MirrorSetting::Absolute);
    let summary = fidelity_scan(&scan)?;

    let params = CavityParams::practical();
    let table = truth_table(&params, mirror)?;
    let worst_table = table.iter().map(|r| 1.0 - r.fidelity).fold(0.0, f64::max);
    let block = BlockCoeffs::from_params(&params)?;
    let table_success = table
        .iter()
        .map(|r| (r.success_prob - efficiency(block.transmission, 1)).abs())
        .fold(0.0, f64::max);

    let checks = [
        (
            "self-error-correction: 1 - min fidelity",
            1.0 - summary.min_fidelity,
            VERIFY_TOLERANCE,
        ),
        (
            "success_prob vs |T|^(4(N+1))",
            summary.max_success_deviation,
            VERIFY_EXACT,
        ),
        ("conservation", summary.max_conservation_error, VERIFY_EXACT),
        (
            "spin outcome balance",
            summary.max_outcome_imbalance,
            VERIFY_EXACT,
        ),
        ("truth table: 1 - min fidelity", worst_table, VERIFY_EXACT),
        ("truth table success_prob", table_success, VERIFY_EXACT),
    ];
    let mut s = String::new();
    let _ = writeln!(
        s,
        "verify: {} case(s), seed {}, {} target(s){}",
        summary.n_cases,
        args.seed,
        args.n_targets,
        mirror
            .map(|m| format!(", mirror {}", fmt_complex(m)))
            .unwrap_or_default()
    );
    let _ = writeln!(s, "mean fidelity: {}", fmt_sig(summary.mean_fidelity));
    let mut all_pass = true;
    for (name, worst, tol) in checks {
        let pass = worst <= tol;
        all_pass &= pass;
        let _ = writeln!(
            s,
            "[{}] {name}: worst {worst:.3e} (tolerance {tol:.0e})",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    let _ = writeln!(
        s,
        "{}",
        if all_pass {
            "all checks passed"
        } else {
            "verification FAILED"
        }
    );
    deliver(&s, None, stdout)?;
    Ok(if all_pass {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn cmd_sample(args: &SampleArgs, stdout: &mut dyn Write) -> CliResult {
    let file = load_run_file(args.physics.params_file.as_deref())?;
    let mut params = file.params.clone();
    params.overlay(&args.physics);
    let params = params.resolve()?;
    degenerate(&BlockCoeffs::from_params(&params)?)?;

    let control = PhotonInput::Text(args.control.clone()).resolve("control")?;
    let mut targets = args
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| PhotonInput::Text(t.clone()).resolve(&format!("target {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    if args.n_targets == 0 {
        return Err(Error::Validation("--n-targets must be >= 1".into()).into());
    }
    match targets.len() {
        0 => targets = vec![PhotonSpec::uniform(); args.n_targets],
        1 if args.n_targets > 1 => targets = vec![targets[0]; args.n_targets],
        n if n != args.n_targets => {
            return Err(Error::Validation(format!(
                "--n-targets {} does not match {n} target photon(s)",
                args.n_targets
            ))
            .into())
        }
        _ => {}
    }

    let mut cfg = GateConfig::new(params, targets.len()).sampled(args.seed);
    cfg.mirror_override = resolve_mirror(
        args.physics.mirror_override.as_deref(),
        file.mirror_override.as_ref(),
    )?;
    let sampler = Sampler::new(&control, &targets, &cfg)?;
    let summary = sampler.run(args.shots, args.seed);
    let expected = sampler.outcome().success_prob;
    let freq = summary.success_frequency();
    let sigma = (expected * (1.0 - expected) / args.shots.max(1) as f64).sqrt();
    let z = if sigma > 0.0 {
        (freq - expected) / sigma
    } else {
        0.0
    };

    let text = match args.output.format.unwrap_or(OutputFormat::Text) {
        OutputFormat::Json => {
            let doc = json!({
                "seed": args.seed,
                "summary": summary,
                "success_frequency": freq,
                "expected_success_prob": expected,
                "z_score": z,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("json"))
        }
        OutputFormat::Csv => format!(
            "shots,successes,clicks_b1,clicks_b2,lost,success_frequency,expected_success_prob\n{},{},{},{},{},{},{}\n",
            summary.shots, summary.successes, summary.clicks_b1, summary.clicks_b2, summary.lost, freq, expected
        ),
        OutputFormat::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "shots: {} (seed {})", summary.shots, args.seed);
            let _ = writeln!(s, "successes: {}", summary.successes);
            let _ = writeln!(s, "heralded clicks: B1 {}, B2 {}", summary.clicks_b1, summary.clicks_b2);
            let _ = writeln!(s, "lost: {}", summary.lost);
            let _ = writeln!(
                s,
                "spin outcomes (up,up / down,up / up,down / down,down): {:?}",
                summary.spin_counts
            );
            let _ = writeln!(
                s,
                "success frequency: {} (expected {}, z = {z:.3})",
                fmt_sig(freq),
                fmt_sig(expected)
            );
            s
        }
    };
    deliver(&text, args.output.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

/// Parses `args` and runs the command, writing reports to `stdout` and
/// diagnostics to `stderr`. Returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, stdout),
        Command::TruthTable(a) => cmd_truth_table(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Sample(a) => cmd_sample(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}
