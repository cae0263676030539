//! Joint amplitude state of P photons and two quantum-dot spins.
//!
//! Every photon carries two qubits: circular polarization (`R`/`L`) and a
//! spatial mode (1/2). A basis state is packed into a `u64` with the layout
//!
//! ```text
//! bit 2p     photon p polarization  (0 = R,  1 = L)
//! bit 2p+1   photon p spatial mode  (0 = 1,  1 = 2)
//! bit 2P     spin of QD1            (0 = up, 1 = down)
//! bit 2P+1   spin of QD2            (0 = up, 1 = down)
//! ```
//!
//! so photon 0 occupies the least significant bits. This layout is part of
//! the public contract.
//!
//! The state is deliberately not trace preserving. Amplitudes stay
//! unnormalized, and any probability that leaves the coherent state is
//! booked into a sink (detector clicks, absorption). Normalization only
//! happens in [`HyperState::measure_spins`] and [`fidelity`].

use std::collections::BTreeMap;
use std::fmt;
use std::ops::AddAssign;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest photon count whose labels fit into 64 bits alongside two spins.
pub const MAX_PHOTONS: usize = 31;

/// Tolerance on `|c1|^2 + |c2|^2 = 1` for ingested photon specs.
pub const SPEC_NORM_TOLERANCE: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pol {
    R,
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spatial {
    Mode1,
    Mode2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

/// Which of the two quantum dots a spin operation addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Qd {
    One,
    Two,
}

macro_rules! two_valued {
    ($ty:ident, $zero:ident, $one:ident) => {
        impl $ty {
            pub fn from_bit(bit: bool) -> Self {
                if bit {
                    $ty::$one
                } else {
                    $ty::$zero
                }
            }

            pub fn bit(self) -> bool {
                matches!(self, $ty::$one)
            }

            pub fn flipped(self) -> Self {
                Self::from_bit(!self.bit())
            }
        }
    };
}

two_valued!(Pol, R, L);
two_valued!(Spatial, Mode1, Mode2);
two_valued!(Spin, Up, Down);

impl fmt::Display for Pol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pol::R => "R",
            Pol::L => "L",
        })
    }
}

impl fmt::Display for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spatial::Mode1 => "1",
            Spatial::Mode2 => "2",
        })
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Up => "up",
            Spin::Down => "down",
        })
    }
}

impl Qd {
    fn offset(self) -> usize {
        match self {
            Qd::One => 0,
            Qd::Two => 1,
        }
    }
}

impl TryFrom<u8> for Qd {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Qd::One),
            2 => Ok(Qd::Two),
            other => Err(Error::InvalidSpin(other)),
        }
    }
}

/// Packed basis label. See the module docs for the bit layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisLabel(pub u64);

impl BasisLabel {
    pub fn encode(photons: &[(Pol, Spatial)], spins: Option<(Spin, Spin)>) -> Self {
        let mut bits = 0u64;
        for (p, &(pol, spatial)) in photons.iter().enumerate() {
            bits |= (pol.bit() as u64) << pol_shift(p);
            bits |= (spatial.bit() as u64) << spatial_shift(p);
        }
        if let Some((s1, s2)) = spins {
            let n = photons.len();
            bits |= (s1.bit() as u64) << spin_shift(Qd::One, n);
            bits |= (s2.bit() as u64) << spin_shift(Qd::Two, n);
        }
        BasisLabel(bits)
    }

    pub fn pol(self, photon: usize) -> Pol {
        Pol::from_bit(self.0 >> pol_shift(photon) & 1 == 1)
    }

    pub fn spatial(self, photon: usize) -> Spatial {
        Spatial::from_bit(self.0 >> spatial_shift(photon) & 1 == 1)
    }

    pub fn spin(self, qd: Qd, n_photons: usize) -> Spin {
        Spin::from_bit(self.0 >> spin_shift(qd, n_photons) & 1 == 1)
    }

    pub fn photons(self, n_photons: usize) -> Vec<(Pol, Spatial)> {
        (0..n_photons)
            .map(|p| (self.pol(p), self.spatial(p)))
            .collect()
    }

    /// Drops the spin bits, keeping only the photon part.
    pub fn photon_bits(self, n_photons: usize) -> u64 {
        self.0 & photon_mask(n_photons)
    }
}

fn pol_shift(photon: usize) -> usize {
    2 * photon
}

fn spatial_shift(photon: usize) -> usize {
    2 * photon + 1
}

fn spin_shift(qd: Qd, n_photons: usize) -> usize {
    2 * n_photons + qd.offset()
}

fn photon_mask(n_photons: usize) -> u64 {
    if n_photons >= 32 {
        u64::MAX
    } else {
        (1u64 << (2 * n_photons)) - 1
    }
}

/// Human-readable label for photon index `p` in a run with `n` photons:
/// `a` for the control, `b` (single target) or `b1`, `b2`, ... for targets.
pub fn photon_name(p: usize, n: usize) -> String {
    match (p, n) {
        (0, _) => "a".to_string(),
        (_, 2) => "b".to_string(),
        (p, _) => format!("b{p}"),
    }
}

/// Formats the photon part of a label as `a:R,1 b:L,2`.
pub fn format_photon_label(bits: u64, n_photons: usize) -> String {
    let label = BasisLabel(bits);
    (0..n_photons)
        .map(|p| {
            format!(
                "{}:{},{}",
                photon_name(p, n_photons),
                label.pol(p),
                label.spatial(p)
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Input single-photon state: polarization pair `(R, L)` and spatial pair
/// `(mode 1, mode 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonSpec {
    pub pol: [Complex64; 2],
    pub spatial: [Complex64; 2],
}

impl PhotonSpec {
    pub fn new(pol: [Complex64; 2], spatial: [Complex64; 2]) -> Result<Self> {
        let spec = Self { pol, spatial };
        spec.validate()?;
        Ok(spec)
    }

    pub fn basis(pol: Pol, spatial: Spatial) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let pick = |bit: bool| if bit { [ZERO, one] } else { [one, ZERO] };
        Self {
            pol: pick(pol.bit()),
            spatial: pick(spatial.bit()),
        }
    }

    /// `(R + L)/sqrt(2)` in polarization and `(1 + 2)/sqrt(2)` in space.
    pub fn uniform() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            pol: [h, h],
            spatial: [h, h],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, pair) in [("pol", &self.pol), ("spat", &self.spatial)] {
            if pair.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} pair has a non-finite entry"
                )));
            }
            let norm = pair[0].norm_sqr() + pair[1].norm_sqr();
            if (norm - 1.0).abs() > SPEC_NORM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "{name} pair is not normalized (|c1|^2 + |c2|^2 = {norm})"
                )));
            }
        }
        Ok(())
    }

    pub fn pol_amp(&self, pol: Pol) -> Complex64 {
        self.pol[pol.bit() as usize]
    }

    pub fn spatial_amp(&self, spatial: Spatial) -> Complex64 {
        self.spatial[spatial.bit() as usize]
    }
}

/// Initial spin preparation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinInit {
    Basis(Spin, Spin),
    /// Both spins in `(up + down)/sqrt(2)`.
    PhiPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SinkId {
    DetectorB1,
    DetectorB2,
    Absorbed,
}

/// Probability mass that has left the coherent state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sinks {
    pub detector_b1: f64,
    pub detector_b2: f64,
    pub absorbed: f64,
    /// Mass removed by a non-zero prune threshold.
    pub pruned: f64,
}

impl Sinks {
    pub fn get(&self, id: SinkId) -> f64 {
        match id {
            SinkId::DetectorB1 => self.detector_b1,
            SinkId::DetectorB2 => self.detector_b2,
            SinkId::Absorbed => self.absorbed,
        }
    }

    fn slot(&mut self, id: SinkId) -> &mut f64 {
        match id {
            SinkId::DetectorB1 => &mut self.detector_b1,
            SinkId::DetectorB2 => &mut self.detector_b2,
            SinkId::Absorbed => &mut self.absorbed,
        }
    }

    pub fn heralded(&self) -> f64 {
        self.detector_b1 + self.detector_b2
    }

    pub fn total(&self) -> f64 {
        self.detector_b1 + self.detector_b2 + self.absorbed + self.pruned
    }

    /// Component-wise `self - earlier`.
    pub fn since(&self, earlier: &Sinks) -> Sinks {
        Sinks {
            detector_b1: self.detector_b1 - earlier.detector_b1,
            detector_b2: self.detector_b2 - earlier.detector_b2,
            absorbed: self.absorbed - earlier.absorbed,
            pruned: self.pruned - earlier.pruned,
        }
    }
}

impl AddAssign for Sinks {
    fn add_assign(&mut self, rhs: Sinks) {
        self.detector_b1 += rhs.detector_b1;
        self.detector_b2 += rhs.detector_b2;
        self.absorbed += rhs.absorbed;
        self.pruned += rhs.pruned;
    }
}

/// Sparse amplitude map over packed basis labels plus loss accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperState {
    n_photons: usize,
    amplitudes: BTreeMap<u64, Complex64>,
    sinks: Sinks,
    prune_threshold: f64,
}

impl HyperState {
    pub fn init(photons: &[PhotonSpec], spins: SpinInit) -> Result<Self> {
        if photons.is_empty() {
            return Err(Error::Validation("at least one photon is required".into()));
        }
        if photons.len() > MAX_PHOTONS {
            return Err(Error::Validation(format!(
                "at most {MAX_PHOTONS} photons fit in a basis label, got {}",
                photons.len()
            )));
        }
        for (p, spec) in photons.iter().enumerate() {
            spec.validate().map_err(|e| match e {
                Error::Validation(msg) => Error::Validation(format!("photon {p}: {msg}")),
                other => other,
            })?;
        }

        let n = photons.len();
        // Expand the product one photon at a time, skipping zero factors.
        let mut amps: BTreeMap<u64, Complex64> = BTreeMap::new();
        amps.insert(0, Complex64::new(1.0, 0.0));
        for (p, spec) in photons.iter().enumerate() {
            let mut next = BTreeMap::new();
            for (&bits, &amp) in &amps {
                for pol in [Pol::R, Pol::L] {
                    for spatial in [Spatial::Mode1, Spatial::Mode2] {
                        let c = spec.pol_amp(pol) * spec.spatial_amp(spatial);
                        if c == ZERO {
                            continue;
                        }
                        let label = bits
                            | (pol.bit() as u64) << pol_shift(p)
                            | (spatial.bit() as u64) << spatial_shift(p);
                        next.insert(label, amp * c);
                    }
                }
            }
            amps = next;
        }

        let (s1, s2) = match spins {
            SpinInit::Basis(s1, s2) => (s1, s2),
            SpinInit::PhiPlus => (Spin::Up, Spin::Up),
        };
        let spin_bits = (s1.bit() as u64) << spin_shift(Qd::One, n)
            | (s2.bit() as u64) << spin_shift(Qd::Two, n);
        let amplitudes = amps.into_iter().map(|(k, v)| (k | spin_bits, v)).collect();

        let mut state = Self {
            n_photons: n,
            amplitudes,
            sinks: Sinks::default(),
            prune_threshold: 0.0,
        };
        if spins == SpinInit::PhiPlus {
            state.apply_spin_hadamard(Qd::One);
            state.apply_spin_hadamard(Qd::Two);
        }
        Ok(state)
    }

    /// Builds a state directly from labelled amplitudes, with empty sinks.
    pub fn from_amplitudes(n_photons: usize, amplitudes: BTreeMap<u64, Complex64>) -> Self {
        Self {
            n_photons,
            amplitudes,
            sinks: Sinks::default(),
            prune_threshold: 0.0,
        }
    }

    /// Amplitudes with magnitude strictly below `threshold` are removed after
    /// every element and their mass is booked as pruned. Zero disables it.
    pub fn with_prune_threshold(mut self, threshold: f64) -> Self {
        self.prune_threshold = threshold.max(0.0);
        self.prune();
        self
    }

    pub fn n_photons(&self) -> usize {
        self.n_photons
    }

    pub fn amplitudes(&self) -> &BTreeMap<u64, Complex64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, label: BasisLabel) -> Complex64 {
        self.amplitudes.get(&label.0).copied().unwrap_or(ZERO)
    }

    pub fn sinks(&self) -> &Sinks {
        &self.sinks
    }

    /// Squared norm of the coherent part.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Coherent norm plus everything booked in the sinks.
    pub fn total_probability(&self) -> f64 {
        self.norm_sqr() + self.sinks.total()
    }

    pub fn check_photon(&self, photon: usize) -> Result<()> {
        if photon < self.n_photons {
            Ok(())
        } else {
            Err(Error::InvalidPhoton {
                index: photon,
                count: self.n_photons,
            })
        }
    }

    fn prune(&mut self) {
        if self.prune_threshold <= 0.0 {
            return;
        }
        let threshold = self.prune_threshold;
        let mut removed = 0.0;
        self.amplitudes.retain(|_, a| {
            let keep = a.norm() >= threshold;
            if !keep {
                removed += a.norm_sqr();
            }
            keep
        });
        self.sinks.pruned += removed;
    }

    /// Applies a 2x2 matrix to the qubit at `shift`. `m[out][in]`.
    fn apply_single(&mut self, shift: usize, m: [[Complex64; 2]; 2]) {
        let mask = 1u64 << shift;
        let mut next: BTreeMap<u64, Complex64> = BTreeMap::new();
        for (&bits, &amp) in &self.amplitudes {
            let input = (bits & mask != 0) as usize;
            for (out, row) in m.iter().enumerate() {
                let c = row[input];
                if c == ZERO {
                    continue;
                }
                let label = if out == 1 { bits | mask } else { bits & !mask };
                *next.entry(label).or_insert(ZERO) += c * amp;
            }
        }
        self.amplitudes = next;
        self.prune();
    }

    fn hadamard(&mut self, shift: usize) {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        self.apply_single(shift, [[h, h], [h, -h]]);
    }

    fn flip(&mut self, shift: usize) {
        let mask = 1u64 << shift;
        self.amplitudes = self
            .amplitudes
            .iter()
            .map(|(&bits, &amp)| (bits ^ mask, amp))
            .collect();
    }

    fn negate_where_set(&mut self, shift: usize) {
        let mask = 1u64 << shift;
        for (bits, amp) in self.amplitudes.iter_mut() {
            if *bits & mask != 0 {
                *amp = -*amp;
            }
        }
    }

    /// `R -> (R + L)/sqrt(2)`, `L -> (R - L)/sqrt(2)`.
    pub fn apply_pol_hadamard(&mut self, photon: usize) -> Result<()> {
        self.check_photon(photon)?;
        self.hadamard(pol_shift(photon));
        Ok(())
    }

    /// `1 -> (1 + 2)/sqrt(2)`, `2 -> (1 - 2)/sqrt(2)`.
    pub fn apply_spatial_hadamard(&mut self, photon: usize) -> Result<()> {
        self.check_photon(photon)?;
        self.hadamard(spatial_shift(photon));
        Ok(())
    }

    /// Swaps `R` and `L`.
    pub fn apply_pol_flip(&mut self, photon: usize) -> Result<()> {
        self.check_photon(photon)?;
        self.flip(pol_shift(photon));
        Ok(())
    }

    /// `L -> -L`.
    pub fn apply_pol_phase(&mut self, photon: usize) -> Result<()> {
        self.check_photon(photon)?;
        self.negate_where_set(pol_shift(photon));
        Ok(())
    }

    /// Mode 2 -> -(mode 2).
    pub fn apply_spatial_phase(&mut self, photon: usize) -> Result<()> {
        self.check_photon(photon)?;
        self.negate_where_set(spatial_shift(photon));
        Ok(())
    }

    /// `up -> (up + down)/sqrt(2)`, `down -> (up - down)/sqrt(2)`.
    pub fn apply_spin_hadamard(&mut self, qd: Qd) {
        self.hadamard(spin_shift(qd, self.n_photons));
    }

    /// `down -> -down`.
    pub fn apply_spin_z(&mut self, qd: Qd) {
        self.negate_where_set(spin_shift(qd, self.n_photons));
    }

    /// Multiplies every amplitude by `factor`.
    pub fn scale(&mut self, factor: Complex64) {
        for amp in self.amplitudes.values_mut() {
            *amp *= factor;
        }
        self.prune();
    }

    pub fn sink_deposit(&mut self, sink: SinkId, mass: f64) -> Result<()> {
        if mass < 0.0 || mass.is_nan() {
            return Err(Error::NegativeMass(mass));
        }
        *self.sinks.slot(sink) += mass;
        Ok(())
    }

    /// Moves the amplitudes whose photon `photon` satisfies `selector` into a
    /// new state (with empty sinks), leaving the rest in `self`.
    pub fn split(&mut self, photon: usize, selector: BranchSelector) -> Result<HyperState> {
        self.check_photon(photon)?;
        let (selected, rest): (BTreeMap<_, _>, BTreeMap<_, _>) =
            std::mem::take(&mut self.amplitudes)
                .into_iter()
                .partition(|(bits, _)| selector.matches(BasisLabel(*bits), photon));
        self.amplitudes = rest;
        Ok(Self {
            n_photons: self.n_photons,
            amplitudes: selected,
            sinks: Sinks::default(),
            prune_threshold: self.prune_threshold,
        })
    }

    /// Coherent recombination of two paths: amplitudes add, sinks add.
    pub fn merge(&mut self, other: HyperState) -> Result<()> {
        if other.n_photons != self.n_photons {
            return Err(Error::DimensionMismatch {
                left: self.n_photons,
                right: other.n_photons,
            });
        }
        for (bits, amp) in other.amplitudes {
            *self.amplitudes.entry(bits).or_insert(ZERO) += amp;
        }
        self.sinks += other.sinks;
        self.prune();
        Ok(())
    }

    /// Rewrites every amplitude through `f`, which maps a label and amplitude
    /// to a new label and amplitude. Colliding labels add.
    pub(crate) fn remap(&mut self, mut f: impl FnMut(BasisLabel, Complex64) -> (u64, Complex64)) {
        let mut next: BTreeMap<u64, Complex64> = BTreeMap::new();
        for (&bits, &amp) in &self.amplitudes {
            let (label, value) = f(BasisLabel(bits), amp);
            *next.entry(label).or_insert(ZERO) += value;
        }
        self.amplitudes = next;
        self.prune();
    }

    pub(crate) fn spin_mask(&self, qd: Qd) -> u64 {
        1u64 << spin_shift(qd, self.n_photons)
    }

    pub(crate) fn pol_mask(photon: usize) -> u64 {
        1u64 << pol_shift(photon)
    }

    /// Projective measurement of both spins in the up/down basis.
    ///
    /// Returns one branch per outcome with non-zero weight, in canonical
    /// order (up-up, down-up, up-down, down-down). Branch probabilities are
    /// absolute: they sum to the coherent norm squared. Each collapsed state
    /// is renormalized and carries empty sinks.
    pub fn measure_spins(&self) -> Result<Vec<SpinBranch>> {
        let total = self.norm_sqr();
        if total.is_nan() || total <= f64::MIN_POSITIVE {
            return Err(Error::AllAmplitudeLost);
        }
        let n = self.n_photons;
        let mut branches = Vec::new();
        for s2 in [Spin::Up, Spin::Down] {
            for s1 in [Spin::Up, Spin::Down] {
                let amplitudes: BTreeMap<u64, Complex64> = self
                    .amplitudes
                    .iter()
                    .filter(|(&bits, _)| {
                        let label = BasisLabel(bits);
                        label.spin(Qd::One, n) == s1 && label.spin(Qd::Two, n) == s2
                    })
                    .map(|(&k, &v)| (k, v))
                    .collect();
                let probability: f64 = amplitudes.values().map(|a| a.norm_sqr()).sum();
                if probability <= 0.0 {
                    continue;
                }
                let scale = 1.0 / probability.sqrt();
                let collapsed = Self {
                    n_photons: n,
                    amplitudes: amplitudes
                        .into_iter()
                        .map(|(k, v)| (k, v * scale))
                        .collect(),
                    sinks: Sinks::default(),
                    prune_threshold: self.prune_threshold,
                };
                branches.push(SpinBranch {
                    outcome: (s1, s2),
                    probability,
                    state: collapsed,
                });
            }
        }
        Ok(branches)
    }

    /// Photon part of a state whose spins hold a single definite value.
    pub fn photon_state(&self) -> Result<PhotonState> {
        let n = self.n_photons;
        let spin_bits = !photon_mask(n);
        let mut config = None;
        let mut amplitudes = BTreeMap::new();
        for (&bits, &amp) in &self.amplitudes {
            if amp == ZERO {
                continue;
            }
            match config {
                None => config = Some(bits & spin_bits),
                Some(c) if c != bits & spin_bits => {
                    return Err(Error::ContractViolation(
                        "photon part requested while spins are still entangled".into(),
                    ))
                }
                Some(_) => {}
            }
            amplitudes.insert(bits & !spin_bits, amp);
        }
        Ok(PhotonState {
            n_photons: n,
            amplitudes,
        })
    }
}

/// One outcome of [`HyperState::measure_spins`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpinBranch {
    pub outcome: (Spin, Spin),
    pub probability: f64,
    pub state: HyperState,
}

/// Selects the branches of one photon by polarization and/or spatial mode.
/// `None` matches either value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSelector {
    pub pol: Option<Pol>,
    pub spatial: Option<Spatial>,
}

impl BranchSelector {
    pub const ALL: BranchSelector = BranchSelector {
        pol: None,
        spatial: None,
    };

    pub fn pol(pol: Pol) -> Self {
        Self {
            pol: Some(pol),
            spatial: None,
        }
    }

    pub fn spatial(spatial: Spatial) -> Self {
        Self {
            pol: None,
            spatial: Some(spatial),
        }
    }

    pub fn matches(&self, label: BasisLabel, photon: usize) -> bool {
        self.pol.is_none_or(|p| label.pol(photon) == p)
            && self.spatial.is_none_or(|s| label.spatial(photon) == s)
    }
}

impl fmt::Display for BranchSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.pol, self.spatial) {
            (None, None) => f.write_str("all"),
            (Some(p), None) => write!(f, "{p}"),
            (None, Some(s)) => write!(f, "mode{s}"),
            (Some(p), Some(s)) => write!(f, "{p},mode{s}"),
        }
    }
}

/// Amplitudes over the photon bits only (spins measured out).
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonState {
    pub n_photons: usize,
    pub amplitudes: BTreeMap<u64, Complex64>,
}

impl PhotonState {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn amplitude(&self, bits: u64) -> Complex64 {
        self.amplitudes.get(&bits).copied().unwrap_or(ZERO)
    }

    pub fn negate_where(&mut self, mask: u64) {
        for (bits, amp) in self.amplitudes.iter_mut() {
            if *bits & mask != 0 {
                *amp = -*amp;
            }
        }
    }

    /// Labels with non-negligible weight, largest first.
    pub fn support(&self, tolerance: f64) -> Vec<(u64, Complex64)> {
        let mut entries: Vec<_> = self
            .amplitudes
            .iter()
            .filter(|(_, a)| a.norm() > tolerance)
            .map(|(&k, &v)| (k, v))
            .collect();
        entries.sort_by(|a, b| b.1.norm().total_cmp(&a.1.norm()).then(a.0.cmp(&b.0)));
        entries
    }
}

/// `|<a|b>|^2 / (<a|a><b|b>)`, which is `|<a|b>|^2` for normalized inputs.
pub fn fidelity(actual: &PhotonState, ideal: &PhotonState) -> Result<f64> {
    if actual.n_photons != ideal.n_photons {
        return Err(Error::DimensionMismatch {
            left: actual.n_photons,
            right: ideal.n_photons,
        });
    }
    let na = actual.norm_sqr();
    let ni = ideal.norm_sqr();
    if na <= 0.0 || ni <= 0.0 {
        return Err(Error::AllAmplitudeLost);
    }
    let overlap: Complex64 = ideal
        .amplitudes
        .iter()
        .map(|(bits, b)| b.conj() * actual.amplitude(*bits))
        .sum();
    Ok((overlap.norm_sqr() / (na * ni)).min(1.0))
}
