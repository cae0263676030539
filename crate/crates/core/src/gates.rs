//! Heralded hyper-CNOT and hyper-CNOT^N protocols.
//!
//! Photon 0 is the control `a`, photons `1..=N` are the targets. The control
//! crosses both stages once, then both spins get a Hadamard. Each target is
//! wrapped in polarization and spatial Hadamards around the same two
//! stages. After the last target both spins get a second Hadamard and are
//! measured; `down` on QD1 is corrected with `L -> -L` on the control and
//! `down` on QD2 with `a2 -> -a2`.
//!
//! Because the mirrors and the blocks share the transmission `T`, every
//! surviving term carries the same factor `T^(2(N+1))`: losses only shrink
//! the norm and never bias the conditional state.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::circuit::{Element, ElementTrace};
use crate::error::{Error, Result};
use crate::hyperstate::{
    fidelity, HyperState, PhotonSpec, PhotonState, Qd, SinkId, Spin, SpinBranch, SpinInit,
};
use crate::scattering::{BlockCoeffs, CavityParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Deterministic evaluation of every branch.
    #[default]
    Amplitude,
    /// Monte Carlo single shots.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub params: CavityParams,
    pub n_targets: usize,
    /// Mirror transmission; defaults to the block transmission `T`.
    pub mirror_override: Option<Complex64>,
    pub mode: Mode,
    pub rng_seed: Option<u64>,
    pub prune_threshold: f64,
}

impl GateConfig {
    pub fn new(params: CavityParams, n_targets: usize) -> Self {
        Self {
            params,
            n_targets,
            mirror_override: None,
            mode: Mode::Amplitude,
            rng_seed: None,
            prune_threshold: 0.0,
        }
    }

    pub fn sampled(mut self, seed: u64) -> Self {
        self.mode = Mode::Sampled;
        self.rng_seed = Some(seed);
        self
    }

    pub fn with_mirror(mut self, transmission: Complex64) -> Self {
        self.mirror_override = Some(transmission);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_targets == 0 {
            return Err(Error::Validation("n_targets must be >= 1".into()));
        }
        if self.mode == Mode::Sampled && self.rng_seed.is_none() {
            return Err(Error::Validation("sampled mode requires a seed".into()));
        }
        if let Some(m) = self.mirror_override {
            if m.norm().is_nan() || m.norm() > 1.0 {
                return Err(Error::MirrorTransmission(m.norm()));
            }
        }
        Ok(())
    }
}

/// Feed-forward phase flips applied to the control photon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Corrections {
    /// `L -> -L` after QD1 reads `down`.
    pub pol_phase: bool,
    /// `a2 -> -a2` after QD2 reads `down`.
    pub spatial_phase: bool,
}

impl Corrections {
    pub fn for_outcome(outcome: (Spin, Spin)) -> Self {
        Self {
            pol_phase: outcome.0 == Spin::Down,
            spatial_phase: outcome.1 == Spin::Down,
        }
    }
}

/// One spin-measurement outcome after feed-forward.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeBranch {
    pub spin_record: (Spin, Spin),
    /// Absolute probability of reaching this outcome.
    pub probability: f64,
    pub corrections: Corrections,
    pub state: PhotonState,
}

/// Result of an amplitude-mode gate run.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    /// Normalized photon state of the headline branch.
    pub conditional_state: PhotonState,
    /// Coherent norm squared right before the spin measurement.
    pub success_prob: f64,
    pub heralded_b1: f64,
    pub heralded_b2: f64,
    pub absorbed_prob: f64,
    pub spin_record: (Spin, Spin),
    pub corrections: Corrections,
    /// All outcomes in canonical order (up-up, down-up, up-down, down-down).
    pub branches: Vec<OutcomeBranch>,
    pub block: BlockCoeffs,
    pub mirror: Complex64,
    pub trace: ElementTrace,
}

impl GateOutcome {
    pub fn heralded_failure_prob(&self) -> f64 {
        self.heralded_b1 + self.heralded_b2
    }

    /// Smallest fidelity over all spin outcomes.
    pub fn min_fidelity(&self, ideal: &PhotonState) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for b in &self.branches {
            worst = worst.min(fidelity(&b.state, ideal)?);
        }
        Ok(worst)
    }
}

/// Element sequence of a run, grouped by photon.
#[derive(Debug, Clone, PartialEq)]
pub struct GateProgram {
    /// Control photon pass plus the spin Hadamards that follow it.
    pub control: Vec<Element>,
    pub targets: Vec<Vec<Element>>,
    /// Final spin Hadamards before readout.
    pub readout: Vec<Element>,
}

impl GateProgram {
    pub fn new(n_targets: usize, block: BlockCoeffs, mirror: Complex64) -> Self {
        let stages = |photon| {
            [
                Element::StagePolarization {
                    photon,
                    block,
                    mirror,
                },
                Element::StageSpatial {
                    photon,
                    block,
                    mirror,
                },
            ]
        };
        let spin_hadamards = [
            Element::SpinHadamard { qd: Qd::One },
            Element::SpinHadamard { qd: Qd::Two },
        ];

        let mut control = stages(0).to_vec();
        control.extend(spin_hadamards.clone());

        let targets = (1..=n_targets)
            .map(|photon| {
                let wrap = [
                    Element::PolHadamard { photon },
                    Element::SpatialHadamard { photon },
                ];
                let mut seq = wrap.to_vec();
                seq.extend(stages(photon));
                seq.extend(wrap);
                seq
            })
            .collect();

        Self {
            control,
            targets,
            readout: spin_hadamards.to_vec(),
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.control
            .iter()
            .chain(self.targets.iter().flatten())
            .chain(self.readout.iter())
    }
}

/// State right before the spin measurement, with its trace.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub initial: HyperState,
    pub final_state: HyperState,
    pub trace: ElementTrace,
    pub block: BlockCoeffs,
    pub mirror: Complex64,
}

/// Runs the optical part of the gate (everything up to the spin readout).
pub fn evolve(control: &PhotonSpec, targets: &[PhotonSpec], cfg: &GateConfig) -> Result<Evolution> {
    cfg.validate()?;
    if targets.len() != cfg.n_targets {
        return Err(Error::Validation(format!(
            "config expects {} target(s), got {}",
            cfg.n_targets,
            targets.len()
        )));
    }
    let block = BlockCoeffs::from_params(&cfg.params)?;
    let mirror = cfg.mirror_override.unwrap_or(block.transmission);

    let mut photons = Vec::with_capacity(targets.len() + 1);
    photons.push(*control);
    photons.extend_from_slice(targets);
    let initial =
        HyperState::init(&photons, SpinInit::PhiPlus)?.with_prune_threshold(cfg.prune_threshold);

    let program = GateProgram::new(targets.len(), block, mirror);
    let mut state = initial.clone();
    let mut trace = ElementTrace::new();
    for element in program.elements() {
        trace.apply(&mut state, element.clone())?;
    }
    Ok(Evolution {
        initial,
        final_state: state,
        trace,
        block,
        mirror,
    })
}

fn feed_forward(branch: &SpinBranch) -> Result<OutcomeBranch> {
    let corrections = Corrections::for_outcome(branch.outcome);
    let mut state = branch.state.clone();
    if corrections.pol_phase {
        state.apply_pol_phase(0)?;
    }
    if corrections.spatial_phase {
        state.apply_spatial_phase(0)?;
    }
    Ok(OutcomeBranch {
        spin_record: branch.outcome,
        probability: branch.probability,
        corrections,
        state: state.photon_state()?,
    })
}

fn outcome_from(evolution: Evolution) -> Result<GateOutcome> {
    let measured = evolution.final_state.measure_spins()?;
    let branches = measured
        .iter()
        .map(feed_forward)
        .collect::<Result<Vec<_>>>()?;
    // Most probable outcome, first in canonical order on ties.
    let headline = branches
        .iter()
        .fold(None::<&OutcomeBranch>, |best, b| match best {
            Some(x) if x.probability >= b.probability => Some(x),
            _ => Some(b),
        })
        .ok_or(Error::AllAmplitudeLost)?;

    let sinks = evolution.final_state.sinks();
    Ok(GateOutcome {
        conditional_state: headline.state.clone(),
        success_prob: evolution.final_state.norm_sqr(),
        heralded_b1: sinks.detector_b1,
        heralded_b2: sinks.detector_b2,
        absorbed_prob: sinks.absorbed + sinks.pruned,
        spin_record: headline.spin_record,
        corrections: headline.corrections,
        block: evolution.block,
        mirror: evolution.mirror,
        trace: evolution.trace,
        branches,
    })
}

/// Hyper-CNOT on one control and one target photon.
pub fn hyper_cnot(
    control: &PhotonSpec,
    target: &PhotonSpec,
    cfg: &GateConfig,
) -> Result<GateOutcome> {
    if cfg.n_targets != 1 {
        return Err(Error::Validation(format!(
            "hyper_cnot needs n_targets = 1, got {}",
            cfg.n_targets
        )));
    }
    hyper_cnot_n(control, std::slice::from_ref(target), cfg)
}

/// Hyper-CNOT^N: one control, `targets.len()` targets. Always evaluates
/// every branch; see [`sample_run`] for single shots.
pub fn hyper_cnot_n(
    control: &PhotonSpec,
    targets: &[PhotonSpec],
    cfg: &GateConfig,
) -> Result<GateOutcome> {
    outcome_from(evolve(control, targets, cfg)?)
}

/// Target state of a lossless hyper-CNOT^N, built directly from the input
/// coefficients: each target's polarization pair swaps on the control's
/// `L` term and each target's spatial pair swaps on the control's mode-2
/// term.
pub fn ideal_hyper_cnot_n(control: &PhotonSpec, targets: &[PhotonSpec]) -> PhotonState {
    let n_photons = targets.len() + 1;
    let mut amplitudes: BTreeMap<u64, Complex64> = BTreeMap::new();
    for cp in 0..2usize {
        for cs in 0..2usize {
            let head = control.pol[cp] * control.spatial[cs];
            if head == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut terms = vec![((cp as u64) | (cs as u64) << 1, head)];
            for (i, t) in targets.iter().enumerate() {
                let shift = 2 * (i + 1);
                let mut next = Vec::with_capacity(terms.len() * 4);
                for &(bits, amp) in &terms {
                    for tp in 0..2usize {
                        for ts in 0..2usize {
                            let c = t.pol[tp ^ cp] * t.spatial[ts ^ cs];
                            if c == Complex64::new(0.0, 0.0) {
                                continue;
                            }
                            let label = bits | (tp as u64) << shift | (ts as u64) << (shift + 1);
                            next.push((label, amp * c));
                        }
                    }
                }
                terms = next;
            }
            for (bits, amp) in terms {
                *amplitudes.entry(bits).or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
        }
    }
    PhotonState {
        n_photons,
        amplitudes,
    }
}

/// How a single Monte Carlo shot ended.
#[derive(Debug, Clone, PartialEq)]
pub enum ShotOutcome {
    Success {
        spin_record: (Spin, Spin),
        corrections: Corrections,
        state: PhotonState,
    },
    /// A detector inside a basic block clicked while `photon` was in flight.
    Heralded {
        detector: SinkId,
        photon: usize,
        element: usize,
    },
    Lost {
        photon: usize,
        element: usize,
    },
}

/// Precomputed run that can be sampled shot by shot.
///
/// Shots walk the trace in order. At each element the photon is clicked,
/// lost or passed on with the probability that element moved into each
/// sink, conditioned on having survived so far. Survivors pick a spin
/// outcome with the Born weights.
#[derive(Debug, Clone)]
pub struct Sampler {
    outcome: GateOutcome,
    initial_norm: f64,
}

impl Sampler {
    pub fn new(control: &PhotonSpec, targets: &[PhotonSpec], cfg: &GateConfig) -> Result<Self> {
        let evolution = evolve(control, targets, cfg)?;
        let initial_norm = evolution.initial.norm_sqr();
        Ok(Self {
            outcome: outcome_from(evolution)?,
            initial_norm,
        })
    }

    pub fn outcome(&self) -> &GateOutcome {
        &self.outcome
    }

    pub fn shot<R: Rng + ?Sized>(&self, rng: &mut R) -> ShotOutcome {
        let mut remaining = self.initial_norm;
        for (index, record) in self.outcome.trace.records().iter().enumerate() {
            let d = &record.deposited;
            let lost = d.absorbed + d.pruned;
            if d.detector_b1 + d.detector_b2 + lost <= 0.0 {
                continue;
            }
            let photon = record.element.photon().unwrap_or(0);
            let u = rng.gen::<f64>() * remaining;
            if u < d.detector_b1 {
                return ShotOutcome::Heralded {
                    detector: SinkId::DetectorB1,
                    photon,
                    element: index,
                };
            }
            if u < d.detector_b1 + d.detector_b2 {
                return ShotOutcome::Heralded {
                    detector: SinkId::DetectorB2,
                    photon,
                    element: index,
                };
            }
            if u < d.detector_b1 + d.detector_b2 + lost {
                return ShotOutcome::Lost {
                    photon,
                    element: index,
                };
            }
            remaining -= d.detector_b1 + d.detector_b2 + lost;
        }

        let total: f64 = self.outcome.branches.iter().map(|b| b.probability).sum();
        let mut u = rng.gen::<f64>() * total;
        let last = self.outcome.branches.len() - 1;
        for (i, branch) in self.outcome.branches.iter().enumerate() {
            if u < branch.probability || i == last {
                return ShotOutcome::Success {
                    spin_record: branch.spin_record,
                    corrections: branch.corrections,
                    state: branch.state.clone(),
                };
            }
            u -= branch.probability;
        }
        unreachable!("measure_spins never returns an empty branch list")
    }

    pub fn run(&self, shots: u64, seed: u64) -> ShotSummary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut summary = ShotSummary {
            shots,
            ..ShotSummary::default()
        };
        for _ in 0..shots {
            match self.shot(&mut rng) {
                ShotOutcome::Success { spin_record, .. } => {
                    summary.successes += 1;
                    let idx = spin_record.0.bit() as usize + 2 * spin_record.1.bit() as usize;
                    summary.spin_counts[idx] += 1;
                }
                ShotOutcome::Heralded {
                    detector: SinkId::DetectorB1,
                    ..
                } => summary.clicks_b1 += 1,
                ShotOutcome::Heralded { .. } => summary.clicks_b2 += 1,
                ShotOutcome::Lost { .. } => summary.lost += 1,
            }
        }
        summary
    }
}

/// Tally of many shots.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ShotSummary {
    pub shots: u64,
    pub successes: u64,
    pub clicks_b1: u64,
    pub clicks_b2: u64,
    pub lost: u64,
    /// Successes per spin outcome: up-up, down-up, up-down, down-down.
    pub spin_counts: [u64; 4],
}

impl ShotSummary {
    pub fn success_frequency(&self) -> f64 {
        if self.shots == 0 {
            0.0
        } else {
            self.successes as f64 / self.shots as f64
        }
    }
}

fn sampled_seed(cfg: &GateConfig) -> Result<u64> {
    if cfg.mode != Mode::Sampled {
        return Err(Error::Validation("sampling needs mode = sampled".into()));
    }
    cfg.rng_seed
        .ok_or_else(|| Error::Validation("sampled mode requires a seed".into()))
}

/// One seeded Monte Carlo realization of the gate.
pub fn sample_run(
    control: &PhotonSpec,
    targets: &[PhotonSpec],
    cfg: &GateConfig,
) -> Result<ShotOutcome> {
    let seed = sampled_seed(cfg)?;
    let sampler = Sampler::new(control, targets, cfg)?;
    Ok(sampler.shot(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// `shots` seeded realizations drawn from one RNG stream.
pub fn sample_shots(
    control: &PhotonSpec,
    targets: &[PhotonSpec],
    cfg: &GateConfig,
    shots: u64,
) -> Result<ShotSummary> {
    let seed = sampled_seed(cfg)?;
    Ok(Sampler::new(control, targets, cfg)?.run(shots, seed))
}
