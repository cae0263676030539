//! Optical elements of the gate and the two per-photon routing stages.
//!
//! Each photon visits two stages. The polarization stage sends the `L`
//! wave packet through a bit flip and basic block B1 while the `R` wave
//! packet crosses an attenuating mirror. The spatial stage sends mode 2
//! through basic block B2 (both polarizations, wrapped in bit flips so the
//! polarization comes out unchanged) while mode 1 crosses a mirror. When
//! the mirror transmission equals the block transmission every surviving
//! path carries the same factor `T`.
//!
//! The basic block itself is modelled by its effective map
//! (`R ⊗ s -> D·R ⊗ s + T·L ⊗ Z s`), with the `D` branch going to a
//! heralding detector. [`raw_cavity_pass`] exposes the bare single-pass
//! cavity rules for checking a future reconstruction of the block's
//! internals against that map.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyperstate::{
    BasisLabel, BranchSelector, HyperState, Pol, Qd, SinkId, Sinks, Spatial, Spin,
};
use crate::scattering::{BlockCoeffs, ScatterCoeffs};

/// Propagation direction of a photon relative to the cavity axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    AlongAxis,
    AgainstAxis,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::AlongAxis => Direction::AgainstAxis,
            Direction::AgainstAxis => Direction::AlongAxis,
        }
    }
}

/// Whether a photon couples to the trion transition of a spin.
///
/// `R` along the axis and `L` against it carry `S_z = +1` and drive the
/// transition from spin up; the other two combinations carry `S_z = -1`
/// and drive it from spin down.
pub fn couples(pol: Pol, dir: Direction, spin: Spin) -> bool {
    let plus = (pol == Pol::R) == (dir == Direction::AlongAxis);
    plus == (spin == Spin::Up)
}

/// Effective basic-block map applied to a state whose every amplitude has
/// `photon` in `R`. Transmitted amplitude picks up `T`, flips to `L` and
/// applies Z to the spin of `qd`. The reflected mass goes to `detector`,
/// whatever is left over to the absorption sink.
pub fn block_interact(
    s: &mut HyperState,
    photon: usize,
    qd: Qd,
    bc: &BlockCoeffs,
    detector: SinkId,
) -> Result<()> {
    s.check_photon(photon)?;
    if let Some(bits) = s
        .amplitudes()
        .keys()
        .find(|&&bits| BasisLabel(bits).pol(photon) == Pol::L)
    {
        return Err(Error::ContractViolation(format!(
            "photon {photon} reached basic block {qd:?} in L polarization (label {bits:#b})"
        )));
    }
    let mass = s.norm_sqr();
    let pol_mask = HyperState::pol_mask(photon);
    let spin_mask = s.spin_mask(qd);
    let t = bc.transmission;
    s.remap(|label, amp| {
        let sign = if label.0 & spin_mask != 0 { -1.0 } else { 1.0 };
        (label.0 | pol_mask, amp * t * sign)
    });
    let lost = mass - s.norm_sqr();
    let clicked = bc.reflection.norm_sqr() * mass;
    s.sink_deposit(detector, clicked)?;
    s.sink_deposit(SinkId::Absorbed, (lost - clicked).max(0.0))?;
    Ok(())
}

/// Partially transmitting mirror on the branches of `photon` picked by
/// `selector`. The reflected share counts as absorbed.
pub fn mirror_attenuate(
    s: &mut HyperState,
    photon: usize,
    selector: BranchSelector,
    transmission: Complex64,
) -> Result<()> {
    s.check_photon(photon)?;
    let magnitude = transmission.norm();
    if magnitude > 1.0 || magnitude.is_nan() {
        return Err(Error::MirrorTransmission(magnitude));
    }
    let mut selected = s.split(photon, selector)?;
    let mass = selected.norm_sqr();
    selected.scale(transmission);
    let lost = (mass - selected.norm_sqr()).max(0.0);
    selected.sink_deposit(SinkId::Absorbed, lost)?;
    s.merge(selected)
}

/// One pass of `photon` through the bare cavity of `qd`.
///
/// Returns the transmitted part (same direction, same polarization) and the
/// reflected part (reversed direction, flipped polarization). Coupled
/// combinations scatter with `(r, t)`, uncoupled ones with `(r0, t0)`. Any
/// norm deficit `1 - |r|^2 - |t|^2` is booked as absorption on the
/// transmitted part, which also inherits the input's sinks.
pub fn raw_cavity_pass(
    s: &HyperState,
    photon: usize,
    qd: Qd,
    sc: &ScatterCoeffs,
    dir: Direction,
) -> Result<(HyperState, HyperState)> {
    s.check_photon(photon)?;
    let n = s.n_photons();
    let pol_mask = HyperState::pol_mask(photon);
    let pick = |label: BasisLabel| {
        if couples(label.pol(photon), dir, label.spin(qd, n)) {
            (sc.r, sc.t)
        } else {
            (sc.r0, sc.t0)
        }
    };

    let loss: f64 = s
        .amplitudes()
        .iter()
        .map(|(&bits, amp)| {
            let (r, t) = pick(BasisLabel(bits));
            amp.norm_sqr() * (1.0 - r.norm_sqr() - t.norm_sqr())
        })
        .sum();

    let mut transmitted = s.clone();
    transmitted.remap(|label, amp| (label.0, amp * pick(label).1));
    transmitted.sink_deposit(SinkId::Absorbed, loss.max(0.0))?;

    let mut reflected = s.clone();
    reflected.remap(|label, amp| (label.0 ^ pol_mask, amp * pick(label).0));
    let mut reflected_only = reflected.split(photon, BranchSelector::ALL)?;
    std::mem::swap(&mut reflected, &mut reflected_only);
    Ok((transmitted, reflected))
}

/// Polarization stage: `R` crosses a mirror, `L` is flipped to `R`, enters
/// block B1 (coupled to QD1) and leaves as `L`.
pub fn stage_polarization(
    s: &mut HyperState,
    photon: usize,
    bc: &BlockCoeffs,
    mirror: Complex64,
) -> Result<()> {
    let mut left = s.split(photon, BranchSelector::pol(Pol::L))?;
    mirror_attenuate(s, photon, BranchSelector::pol(Pol::R), mirror)?;
    left.apply_pol_flip(photon)?;
    block_interact(&mut left, photon, Qd::One, bc, SinkId::DetectorB1)?;
    s.merge(left)
}

/// Spatial stage: mode 1 crosses a mirror; in mode 2 the `L` packet goes
/// through a flip and then block B2, the `R` packet through block B2 and
/// then a flip.
pub fn stage_spatial(
    s: &mut HyperState,
    photon: usize,
    bc: &BlockCoeffs,
    mirror: Complex64,
) -> Result<()> {
    let mut mode2 = s.split(photon, BranchSelector::spatial(Spatial::Mode2))?;
    mirror_attenuate(s, photon, BranchSelector::spatial(Spatial::Mode1), mirror)?;

    let mut mode2_left = mode2.split(photon, BranchSelector::pol(Pol::L))?;
    mode2_left.apply_pol_flip(photon)?;
    block_interact(&mut mode2_left, photon, Qd::Two, bc, SinkId::DetectorB2)?;

    block_interact(&mut mode2, photon, Qd::Two, bc, SinkId::DetectorB2)?;
    mode2.apply_pol_flip(photon)?;

    mode2.merge(mode2_left)?;
    s.merge(mode2)
}

/// A replayable circuit element.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Element {
    PolHadamard {
        photon: usize,
    },
    SpatialHadamard {
        photon: usize,
    },
    PolFlip {
        photon: usize,
    },
    PolPhase {
        photon: usize,
    },
    SpatialPhase {
        photon: usize,
    },
    SpinHadamard {
        qd: Qd,
    },
    SpinZ {
        qd: Qd,
    },
    Mirror {
        photon: usize,
        selector: BranchSelector,
        transmission: Complex64,
    },
    Block {
        photon: usize,
        qd: Qd,
        coeffs: BlockCoeffs,
        detector: SinkId,
    },
    StagePolarization {
        photon: usize,
        block: BlockCoeffs,
        mirror: Complex64,
    },
    StageSpatial {
        photon: usize,
        block: BlockCoeffs,
        mirror: Complex64,
    },
}

impl Element {
    pub fn apply(&self, s: &mut HyperState) -> Result<()> {
        match *self {
            Element::PolHadamard { photon } => s.apply_pol_hadamard(photon),
            Element::SpatialHadamard { photon } => s.apply_spatial_hadamard(photon),
            Element::PolFlip { photon } => s.apply_pol_flip(photon),
            Element::PolPhase { photon } => s.apply_pol_phase(photon),
            Element::SpatialPhase { photon } => s.apply_spatial_phase(photon),
            Element::SpinHadamard { qd } => {
                s.apply_spin_hadamard(qd);
                Ok(())
            }
            Element::SpinZ { qd } => {
                s.apply_spin_z(qd);
                Ok(())
            }
            Element::Mirror {
                photon,
                selector,
                transmission,
            } => mirror_attenuate(s, photon, selector, transmission),
            Element::Block {
                photon,
                qd,
                ref coeffs,
                detector,
            } => block_interact(s, photon, qd, coeffs, detector),
            Element::StagePolarization {
                photon,
                ref block,
                mirror,
            } => stage_polarization(s, photon, block, mirror),
            Element::StageSpatial {
                photon,
                ref block,
                mirror,
            } => stage_spatial(s, photon, block, mirror),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Element::PolHadamard { .. } => "pol_hadamard",
            Element::SpatialHadamard { .. } => "spatial_hadamard",
            Element::PolFlip { .. } => "pol_flip",
            Element::PolPhase { .. } => "pol_phase",
            Element::SpatialPhase { .. } => "spatial_phase",
            Element::SpinHadamard { .. } => "spin_hadamard",
            Element::SpinZ { .. } => "spin_z",
            Element::Mirror { .. } => "mirror",
            Element::Block { .. } => "block",
            Element::StagePolarization { .. } => "stage_polarization",
            Element::StageSpatial { .. } => "stage_spatial",
        }
    }

    pub fn photon(&self) -> Option<usize> {
        match *self {
            Element::PolHadamard { photon }
            | Element::SpatialHadamard { photon }
            | Element::PolFlip { photon }
            | Element::PolPhase { photon }
            | Element::SpatialPhase { photon }
            | Element::Mirror { photon, .. }
            | Element::Block { photon, .. }
            | Element::StagePolarization { photon, .. }
            | Element::StageSpatial { photon, .. } => Some(photon),
            Element::SpinHadamard { .. } | Element::SpinZ { .. } => None,
        }
    }

    /// Branch of the photon the element acts on.
    pub fn branch(&self) -> BranchSelector {
        match *self {
            Element::Mirror { selector, .. } => selector,
            Element::Block { .. } => BranchSelector::pol(Pol::R),
            _ => BranchSelector::ALL,
        }
    }
}

/// One applied element and the probability it moved into each sink.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub element: Element,
    pub deposited: Sinks,
}

/// Append-only log of the elements applied during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ElementTrace {
    records: Vec<TraceRecord>,
}

impl ElementTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Applies `element` to `s` and logs it.
    pub fn apply(&mut self, s: &mut HyperState, element: Element) -> Result<()> {
        let before = *s.sinks();
        element.apply(s)?;
        let deposited = s.sinks().since(&before);
        self.records.push(TraceRecord { element, deposited });
        Ok(())
    }

    /// Re-runs every logged element on a copy of `initial`.
    pub fn replay(&self, initial: &HyperState) -> Result<HyperState> {
        let mut s = initial.clone();
        for record in &self.records {
            record.element.apply(&mut s)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperstate::{PhotonSpec, SpinInit};
    use crate::scattering::CavityParams;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn practical_block() -> BlockCoeffs {
        BlockCoeffs::from_params(&CavityParams::practical()).unwrap()
    }

    fn one_photon(pol: Pol, s1: Spin) -> HyperState {
        HyperState::init(
            &[PhotonSpec::basis(pol, Spatial::Mode1)],
            SpinInit::Basis(s1, Spin::Up),
        )
        .unwrap()
    }

    fn label(pol: Pol, s1: Spin) -> BasisLabel {
        BasisLabel::encode(&[(pol, Spatial::Mode1)], Some((s1, Spin::Up)))
    }

    fn phi(sign: f64) -> HyperState {
        // R ⊗ (up + sign·down)/sqrt(2) on QD1.
        let mut s = one_photon(Pol::R, if sign > 0.0 { Spin::Up } else { Spin::Down });
        s.apply_spin_hadamard(Qd::One);
        s
    }

    #[test]
    fn ideal_block_maps_phi_plus_to_l_phi_minus() {
        let mut s = phi(1.0);
        block_interact(
            &mut s,
            0,
            Qd::One,
            &BlockCoeffs::ideal(),
            SinkId::DetectorB1,
        )
        .unwrap();
        let mut expected = phi(-1.0);
        expected.apply_pol_flip(0).unwrap();
        for (k, v) in expected.amplitudes() {
            assert!((s.amplitude(BasisLabel(*k)) - v).norm() < 1e-12);
        }
        assert_eq!(s.sinks().total(), 0.0);
    }

    #[test]
    fn realistic_block_on_phi_minus() {
        let bc = practical_block();
        let mut s = phi(-1.0);
        block_interact(&mut s, 0, Qd::One, &bc, SinkId::DetectorB1).unwrap();
        let mut expected = phi(1.0);
        expected.apply_pol_flip(0).unwrap();
        expected.scale(bc.transmission);
        for (k, v) in expected.amplitudes() {
            assert!((s.amplitude(BasisLabel(*k)) - v).norm() < 1e-12);
        }
        assert!((s.sinks().detector_b1 - bc.reflection.norm_sqr()).abs() < 1e-15);
        assert!((s.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_on_spin_up_leaves_spin() {
        let bc = practical_block();
        let mut s = one_photon(Pol::R, Spin::Up);
        block_interact(&mut s, 0, Qd::One, &bc, SinkId::DetectorB1).unwrap();
        assert!((s.amplitude(label(Pol::L, Spin::Up)) - bc.transmission).norm() < 1e-15);
        let lost = 1.0 - s.norm_sqr();
        let booked = s.sinks().detector_b1 + s.sinks().absorbed;
        assert!((lost - booked).abs() < 1e-15);
        assert!((s.sinks().absorbed - bc.absorption()).abs() < 1e-12);
    }

    #[test]
    fn block_rejects_left_polarization() {
        let mut s = one_photon(Pol::L, Spin::Up);
        let err = block_interact(
            &mut s,
            0,
            Qd::One,
            &BlockCoeffs::ideal(),
            SinkId::DetectorB1,
        );
        assert!(matches!(err, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn mirror_examples() {
        let mut s = one_photon(Pol::R, Spin::Up);
        let before = s.clone();
        mirror_attenuate(&mut s, 0, BranchSelector::ALL, c(1.0, 0.0)).unwrap();
        assert_eq!(s, before);

        mirror_attenuate(&mut s, 0, BranchSelector::ALL, c(0.0, 0.0)).unwrap();
        assert_eq!(s.norm_sqr(), 0.0);
        assert_eq!(s.sinks().absorbed, 1.0);

        let mut s = one_photon(Pol::R, Spin::Up);
        mirror_attenuate(&mut s, 0, BranchSelector::ALL, c(0.9478116126505434, 0.0)).unwrap();
        assert!((s.sinks().absorbed - 0.10165314692477623).abs() < 1e-12);

        let mut s = one_photon(Pol::L, Spin::Up);
        mirror_attenuate(&mut s, 0, BranchSelector::pol(Pol::R), c(0.5, 0.0)).unwrap();
        assert_eq!(s.norm_sqr(), 1.0);

        assert!(matches!(
            mirror_attenuate(&mut s, 0, BranchSelector::ALL, c(1.0, 0.1)),
            Err(Error::MirrorTransmission(_))
        ));
    }

    #[test]
    fn raw_pass_rules() {
        let sc = ScatterCoeffs::from_params(&CavityParams::practical()).unwrap();

        // R along the axis with spin up couples.
        let s = one_photon(Pol::R, Spin::Up);
        let (tr, rf) = raw_cavity_pass(&s, 0, Qd::One, &sc, Direction::AlongAxis).unwrap();
        assert!((tr.amplitude(label(Pol::R, Spin::Up)) - sc.t).norm() < 1e-15);
        assert!((rf.amplitude(label(Pol::L, Spin::Up)) - sc.r).norm() < 1e-15);

        // R against the axis with spin up does not.
        let (tr, rf) = raw_cavity_pass(&s, 0, Qd::One, &sc, Direction::AgainstAxis).unwrap();
        assert!((tr.amplitude(label(Pol::R, Spin::Up)) - sc.t0).norm() < 1e-15);
        assert!((rf.amplitude(label(Pol::L, Spin::Up)) - sc.r0).norm() < 1e-15);

        // L against the axis with spin up couples; R against with spin down couples.
        let l = one_photon(Pol::L, Spin::Up);
        let (tr, rf) = raw_cavity_pass(&l, 0, Qd::One, &sc, Direction::AgainstAxis).unwrap();
        assert!((tr.amplitude(label(Pol::L, Spin::Up)) - sc.t).norm() < 1e-15);
        assert!((rf.amplitude(label(Pol::R, Spin::Up)) - sc.r).norm() < 1e-15);
        let d = one_photon(Pol::R, Spin::Down);
        let (tr, _) = raw_cavity_pass(&d, 0, Qd::One, &sc, Direction::AgainstAxis).unwrap();
        assert!((tr.amplitude(label(Pol::R, Spin::Down)) - sc.t).norm() < 1e-15);
        let (tr, rf) = raw_cavity_pass(&d, 0, Qd::One, &sc, Direction::AlongAxis).unwrap();
        assert!((tr.amplitude(label(Pol::R, Spin::Down)) - sc.t0).norm() < 1e-15);
        assert!((rf.amplitude(label(Pol::L, Spin::Down)) - sc.r0).norm() < 1e-15);

        let total = tr.total_probability() + rf.total_probability();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(rf.sinks().total(), 0.0);
    }

    #[test]
    fn raw_pass_ideal_limit() {
        let s = one_photon(Pol::R, Spin::Up);
        let (tr, rf) = raw_cavity_pass(
            &s,
            0,
            Qd::One,
            &ScatterCoeffs::ideal(),
            Direction::AlongAxis,
        )
        .unwrap();
        assert_eq!(tr.norm_sqr(), 0.0);
        assert!((rf.amplitude(label(Pol::L, Spin::Up)) - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn polarization_stage_pure_r_only_sees_mirror() {
        let bc = practical_block();
        let mut s = HyperState::init(
            &[PhotonSpec::basis(Pol::R, Spatial::Mode1)],
            SpinInit::PhiPlus,
        )
        .unwrap();
        let before = s.clone();
        stage_polarization(&mut s, 0, &bc, bc.transmission).unwrap();
        for (k, v) in before.amplitudes() {
            assert!((s.amplitude(BasisLabel(*k)) - v * bc.transmission).norm() < 1e-15);
        }
        assert_eq!(s.sinks().detector_b1, 0.0);
    }

    #[test]
    fn spatial_stage_keeps_polarization_in_mode2() {
        let bc = practical_block();
        for pol in [Pol::R, Pol::L] {
            let mut s = HyperState::init(
                &[PhotonSpec::basis(pol, Spatial::Mode2)],
                SpinInit::Basis(Spin::Up, Spin::Down),
            )
            .unwrap();
            stage_spatial(&mut s, 0, &bc, bc.transmission).unwrap();
            let expected =
                BasisLabel::encode(&[(pol, Spatial::Mode2)], Some((Spin::Up, Spin::Down)));
            assert!((s.amplitude(expected) + bc.transmission).norm() < 1e-15);
            assert_eq!(s.amplitudes().len(), 1);
            assert!((s.total_probability() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_replay_is_bit_identical() {
        let bc = practical_block();
        let init = HyperState::init(
            &[PhotonSpec::uniform(), PhotonSpec::uniform()],
            SpinInit::PhiPlus,
        )
        .unwrap();
        let mut s = init.clone();
        let mut trace = ElementTrace::new();
        let program = [
            Element::StagePolarization {
                photon: 0,
                block: bc,
                mirror: bc.transmission,
            },
            Element::StageSpatial {
                photon: 0,
                block: bc,
                mirror: bc.transmission,
            },
            Element::SpinHadamard { qd: Qd::One },
            Element::PolHadamard { photon: 1 },
            Element::Mirror {
                photon: 1,
                selector: BranchSelector::pol(Pol::L),
                transmission: c(0.5, 0.5),
            },
        ];
        for e in program {
            trace.apply(&mut s, e).unwrap();
        }
        assert_eq!(trace.len(), 5);
        assert_eq!(trace.records()[0].element.name(), "stage_polarization");
        assert!(trace.records()[0].deposited.detector_b1 > 0.0);
        assert_eq!(trace.replay(&init).unwrap(), s);
    }
}
