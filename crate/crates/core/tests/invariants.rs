//! Property tests for the physical invariants of the simulator.

use std::collections::BTreeMap;

use hypercnot::circuit::{block_interact, raw_cavity_pass, Direction, Element};
use hypercnot::gates::{evolve, hyper_cnot_n, ideal_hyper_cnot_n, GateConfig, GateProgram};
use hypercnot::hyperstate::{
    BasisLabel, HyperState, PhotonSpec, Pol, Qd, SinkId, Spatial, Spin, SpinInit,
};
use hypercnot::scattering::{block_coeffs, BlockCoeffs, CavityParams, ScatterCoeffs};
use hypercnot::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn params() -> impl Strategy<Value = CavityParams> {
    (
        0.0..8.0f64,
        0.1..3.0f64,
        0.0..2.0f64,
        0.0..1.0f64,
        -2.0..2.0f64,
        -2.0..2.0f64,
    )
        .prop_map(|(g, kappa, kappa_s, gamma, dc, dx)| CavityParams {
            g,
            kappa,
            kappa_s,
            gamma: gamma + 1e-3,
            omega: 0.0,
            omega_c: dc,
            omega_x: dx,
        })
}

/// Parameters whose block transmits a usable amount.
fn working_params() -> impl Strategy<Value = CavityParams> {
    (
        0.2..5.0f64,
        0.0..1.0f64,
        0.05..0.2f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
    )
        .prop_map(|(g, ks, gamma, dc, dx)| CavityParams::from_ratios(g, ks, gamma, dc, dx))
}

fn pair() -> impl Strategy<Value = [Complex64; 2]> {
    prop::array::uniform4(-1.0..1.0f64)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            [c(v[0] / n, v[1] / n), c(v[2] / n, v[3] / n)]
        })
}

fn photon() -> impl Strategy<Value = PhotonSpec> {
    (pair(), pair()).prop_map(|(pol, spatial)| PhotonSpec { pol, spatial })
}

/// Arbitrary (entangled, unnormalized) state on `n` photons and both spins.
fn raw_state(n: usize) -> impl Strategy<Value = HyperState> {
    let dim = 1usize << (2 * n + 2);
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim).prop_map(move |v| {
        let amps: BTreeMap<u64, Complex64> = v
            .into_iter()
            .enumerate()
            .map(|(i, (re, im))| (i as u64, c(re, im)))
            .collect();
        HyperState::from_amplitudes(n, amps)
    })
}

fn max_diff(a: &HyperState, b: &HyperState) -> f64 {
    let keys: std::collections::BTreeSet<u64> = a
        .amplitudes()
        .keys()
        .chain(b.amplitudes().keys())
        .copied()
        .collect();
    keys.into_iter()
        .map(|k| (a.amplitude(BasisLabel(k)) - b.amplitude(BasisLabel(k))).norm())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scattering_identities(p in params()) {
        let s = ScatterCoeffs::from_params(&p).unwrap();
        let one = c(1.0, 0.0);
        prop_assert!((s.r - (one + s.t)).norm() < 1e-15);
        prop_assert!((s.r0 - (one + s.t0)).norm() < 1e-15);
        let b = block_coeffs(&s);
        prop_assert!(((b.reflection + b.transmission) - (s.r + s.t)).norm() < 1e-14);
        prop_assert!(((b.reflection - b.transmission) - (s.r0 + s.t0)).norm() < 1e-14);
        prop_assert!(b.reflection.norm_sqr() + b.transmission.norm_sqr() <= 1.0 + 1e-14);
        prop_assert!(b.absorption() >= -1e-14);
    }

    #[test]
    fn hadamards_are_involutions(s in raw_state(2), photon in 0usize..2) {
        let norm = s.norm_sqr();
        let mut t = s.clone();
        t.apply_pol_hadamard(photon).unwrap();
        prop_assert!((t.norm_sqr() - norm).abs() < 1e-12 * norm.max(1.0));
        t.apply_spatial_hadamard(photon).unwrap();
        t.apply_spin_hadamard(Qd::Two);
        prop_assert!((t.norm_sqr() - norm).abs() < 1e-12 * norm.max(1.0));
        t.apply_spin_hadamard(Qd::Two);
        t.apply_spatial_hadamard(photon).unwrap();
        t.apply_pol_hadamard(photon).unwrap();
        prop_assert!(max_diff(&s, &t) < 1e-12);
    }

    #[test]
    fn phases_and_flips_preserve_norm(s in raw_state(1)) {
        let norm = s.norm_sqr();
        let mut t = s.clone();
        t.apply_pol_flip(0).unwrap();
        t.apply_pol_phase(0).unwrap();
        t.apply_spatial_phase(0).unwrap();
        t.apply_spin_z(Qd::One);
        prop_assert!((t.norm_sqr() - norm).abs() < 1e-12 * norm.max(1.0));
        t.apply_spin_z(Qd::One);
        t.apply_spatial_phase(0).unwrap();
        t.apply_pol_phase(0).unwrap();
        t.apply_pol_flip(0).unwrap();
        prop_assert!(max_diff(&s, &t) < 1e-12);
    }

    #[test]
    fn raw_pass_is_linear_and_conserving(
        a in raw_state(1),
        b in raw_state(1),
        k in (-1.0..1.0f64, -1.0..1.0f64),
        p in params(),
        along in any::<bool>(),
    ) {
        let sc = ScatterCoeffs::from_params(&p).unwrap();
        let dir = if along { Direction::AlongAxis } else { Direction::AgainstAxis };
        let k = c(k.0, k.1);
        let mixed: BTreeMap<u64, Complex64> = (0..16u64)
            .map(|i| (i, k * a.amplitude(BasisLabel(i)) + b.amplitude(BasisLabel(i))))
            .collect();
        let mixed = HyperState::from_amplitudes(1, mixed);

        let (ta, ra) = raw_cavity_pass(&a, 0, Qd::One, &sc, dir).unwrap();
        let (tb, rb) = raw_cavity_pass(&b, 0, Qd::One, &sc, dir).unwrap();
        let (tm, rm) = raw_cavity_pass(&mixed, 0, Qd::One, &sc, dir).unwrap();
        for (single_a, single_b, combined) in [(&ta, &tb, &tm), (&ra, &rb, &rm)] {
            for i in 0..16u64 {
                let want = k * single_a.amplitude(BasisLabel(i)) + single_b.amplitude(BasisLabel(i));
                prop_assert!((combined.amplitude(BasisLabel(i)) - want).norm() < 1e-12);
            }
        }
        let out = tm.norm_sqr() + rm.norm_sqr() + tm.sinks().absorbed;
        prop_assert!((out - mixed.norm_sqr()).abs() < 1e-12 * mixed.norm_sqr().max(1.0));
    }

    #[test]
    fn control_stages_factorize(p in working_params(), a in photon(), b in photon()) {
        let block = BlockCoeffs::from_params(&p).unwrap();
        let mut s = HyperState::init(&[a, b], SpinInit::PhiPlus).unwrap();
        for e in &GateProgram::new(1, block, block.transmission).control {
            e.apply(&mut s).unwrap();
        }
        let t2 = block.transmission * block.transmission;
        for (&bits, &amp) in s.amplitudes() {
            let l = BasisLabel(bits);
            let (pa, sa) = (l.pol(0), l.spatial(0));
            let s1 = if pa == Pol::R { Spin::Up } else { Spin::Down };
            let s2 = if sa == Spatial::Mode1 { Spin::Up } else { Spin::Down };
            let want = if l.spin(Qd::One, 2) == s1 && l.spin(Qd::Two, 2) == s2 {
                t2 * a.pol_amp(pa) * a.spatial_amp(sa) * b.pol_amp(l.pol(1)) * b.spatial_amp(l.spatial(1))
            } else {
                c(0.0, 0.0)
            };
            prop_assert!((amp - want).norm() < 1e-12);
        }
    }

    #[test]
    fn gate_conserves_and_corrects(
        p in working_params(),
        control in photon(),
        targets in prop::collection::vec(photon(), 1..=3),
    ) {
        let n = targets.len();
        let out = hyper_cnot_n(&control, &targets, &GateConfig::new(p, n)).unwrap();
        let total = out.success_prob + out.heralded_failure_prob() + out.absorbed_prob;
        prop_assert!((total - 1.0).abs() < 1e-12);
        let ideal = ideal_hyper_cnot_n(&control, &targets);
        prop_assert!((out.min_fidelity(&ideal).unwrap() - 1.0).abs() < 1e-10);
        let quarter = out.success_prob / 4.0;
        for branch in &out.branches {
            prop_assert!((branch.probability - quarter).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_replays_exactly(p in working_params(), control in photon(), target in photon()) {
        let ev = evolve(&control, &[target], &GateConfig::new(p, 1)).unwrap();
        let replayed = ev.trace.replay(&ev.initial).unwrap();
        prop_assert_eq!(replayed, ev.final_state);
    }
}

#[test]
fn block_rejects_left_polarized_input() {
    let mut s = HyperState::init(
        &[PhotonSpec::basis(Pol::L, Spatial::Mode1)],
        SpinInit::PhiPlus,
    )
    .unwrap();
    let err = block_interact(
        &mut s,
        0,
        Qd::One,
        &BlockCoeffs::ideal(),
        SinkId::DetectorB1,
    )
    .unwrap_err();
    assert!(matches!(err, Error::ContractViolation(_)));
}

#[test]
fn ideal_block_is_lossless() {
    let mut s = HyperState::init(
        &[PhotonSpec::uniform(), PhotonSpec::uniform()],
        SpinInit::PhiPlus,
    )
    .unwrap();
    let program = GateProgram::new(1, BlockCoeffs::ideal(), c(1.0, 0.0));
    for e in program.elements() {
        e.apply(&mut s).unwrap();
    }
    assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    assert_eq!(s.sinks().total(), 0.0);
}

#[test]
fn mirror_above_unity_is_rejected() {
    let mut s = HyperState::init(&[PhotonSpec::uniform()], SpinInit::PhiPlus).unwrap();
    let e = Element::StagePolarization {
        photon: 0,
        block: BlockCoeffs::ideal(),
        mirror: c(1.1, 0.0),
    };
    assert!(matches!(e.apply(&mut s), Err(Error::MirrorTransmission(_))));
}
