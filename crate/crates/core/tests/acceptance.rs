//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use hypercnot::analysis::{random_params, random_photon, sweep_efficiency, SweepGrid};
use hypercnot::cli::truth_table;
use hypercnot::gates::{hyper_cnot_n, ideal_hyper_cnot_n, sample_shots, GateConfig, GateProgram};
use hypercnot::hyperstate::{BasisLabel, HyperState, PhotonSpec, Pol, Spatial, Spin, SpinInit};
use hypercnot::scattering::{
    block_coeffs, dephasing_penalty, efficiency, BlockCoeffs, CavityParams, DephasingParams,
    ScatterCoeffs,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn practical_block() -> BlockCoeffs {
    BlockCoeffs::from_params(&CavityParams::practical()).unwrap()
}

fn success_at_practical(n: usize) -> f64 {
    let targets = vec![PhotonSpec::uniform(); n];
    let cfg = GateConfig::new(CavityParams::practical(), n);
    hyper_cnot_n(&PhotonSpec::uniform(), &targets, &cfg)
        .unwrap()
        .success_prob
}

fn efficiency_reproduction() -> Outcome {
    let p = success_at_practical(1);
    let closed = practical_block().transmission.norm_sqr().powi(4);
    check(
        (p - 0.6513).abs() <= 1e-4 && (p - closed).abs() <= 1e-12,
        format!("success_prob {p:.10}, |T|^8 {closed:.10}"),
    )
}

fn cnot_n_efficiencies() -> Outcome {
    let t = practical_block().transmission;
    let mut worst: f64 = 0.0;
    let mut probs = Vec::new();
    for n in 1..=4 {
        let p = success_at_practical(n);
        worst = worst.max((p - efficiency(t, n)).abs());
        probs.push(p);
    }
    check(
        (probs[1] - 0.5256).abs() <= 1e-4 && (probs[2] - 0.4242).abs() <= 1e-4 && worst <= 1e-12,
        format!(
            "N=2 {:.6}, N=3 {:.6}, worst |p - |T|^(4(N+1))| for N<=4: {worst:.2e}",
            probs[1], probs[2]
        ),
    )
}

fn self_error_correction() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    while cases < 240 {
        let params = random_params(&mut rng);
        let n = if cases % 4 == 3 { 2 } else { 1 };
        let control = random_photon(&mut rng);
        let targets: Vec<_> = (0..n).map(|_| random_photon(&mut rng)).collect();
        if BlockCoeffs::from_params(&params)
            .unwrap()
            .transmission
            .norm()
            <= 1e-3
        {
            continue;
        }
        let out = hyper_cnot_n(&control, &targets, &GateConfig::new(params, n)).unwrap();
        let ideal = ideal_hyper_cnot_n(&control, &targets);
        if out.branches.len() != 4 {
            return Err(format!(
                "case {cases}: only {} spin outcomes",
                out.branches.len()
            ));
        }
        worst = worst.max(1.0 - out.min_fidelity(&ideal).unwrap());
        cases += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && elapsed < 10.0,
        format!("{cases} cases, worst 1 - fidelity {worst:.2e}, {elapsed:.2} s"),
    )
}

fn truth_table_check() -> Outcome {
    let rows = truth_table(&CavityParams::practical(), None).unwrap();
    let mut bad = Vec::new();
    for row in &rows {
        let (pa, sa) = row.control;
        let (pb, sb) = row.target;
        let expected_pb = if pa == Pol::L { pb.flipped() } else { pb };
        let expected_sb = if sa == Spatial::Mode2 {
            sb.flipped()
        } else {
            sb
        };
        let expected = Some([(pa, sa), (expected_pb, expected_sb)]);
        if row.output != expected || (1.0 - row.fidelity).abs() > 1e-12 {
            bad.push(format!(
                "{:?}|{:?} -> {:?}",
                row.control, row.target, row.output
            ));
        }
    }
    check(
        rows.len() == 16 && bad.is_empty(),
        format!("{} rows, mismatches: {bad:?}", rows.len()),
    )
}

fn control_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params: Vec<CavityParams> = (0..20).map(|_| random_params(&mut rng)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let block = BlockCoeffs::from_params(&params[i % params.len()]).unwrap();
        let a = random_photon(&mut rng);
        let b = random_photon(&mut rng);
        let mut state = HyperState::init(&[a, b], SpinInit::PhiPlus).unwrap();
        for element in &GateProgram::new(1, block, block.transmission).control {
            element.apply(&mut state).unwrap();
        }
        let t2 = block.transmission * block.transmission;
        for pa in [Pol::R, Pol::L] {
            for sa in [Spatial::Mode1, Spatial::Mode2] {
                for pb in [Pol::R, Pol::L] {
                    for sb in [Spatial::Mode1, Spatial::Mode2] {
                        for s1 in [Spin::Up, Spin::Down] {
                            for s2 in [Spin::Up, Spin::Down] {
                                let label =
                                    BasisLabel::encode(&[(pa, sa), (pb, sb)], Some((s1, s2)));
                                let pol_spin = if pa == Pol::R { Spin::Up } else { Spin::Down };
                                let spat_spin = if sa == Spatial::Mode1 {
                                    Spin::Up
                                } else {
                                    Spin::Down
                                };
                                let expected = if s1 == pol_spin && s2 == spat_spin {
                                    t2 * a.pol_amp(pa)
                                        * a.spatial_amp(sa)
                                        * b.pol_amp(pb)
                                        * b.spatial_amp(sb)
                                } else {
                                    Complex64::new(0.0, 0.0)
                                };
                                worst = worst.max((state.amplitude(label) - expected).norm());
                            }
                        }
                    }
                }
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("100 inputs, worst amplitude error {worst:.2e}"),
    )
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let params = random_params(&mut rng);
        let n = 1 + i % 3;
        let control = random_photon(&mut rng);
        let targets: Vec<_> = (0..n).map(|_| random_photon(&mut rng)).collect();
        let block = BlockCoeffs::from_params(&params).unwrap();
        let mut photons = vec![control];
        photons.extend(&targets);
        let mut state = HyperState::init(&photons, SpinInit::PhiPlus).unwrap();
        for element in GateProgram::new(n, block, block.transmission).elements() {
            element.apply(&mut state).unwrap();
            worst = worst.max((state.total_probability() - 1.0).abs());
        }
        let out = hyper_cnot_n(&control, &targets, &GateConfig::new(params, n)).unwrap();
        let total = out.success_prob + out.heralded_failure_prob() + out.absorbed_prob;
        worst = worst.max((total - 1.0).abs());
    }
    check(
        worst <= 1e-12,
        format!("100 parameter sets, worst |total - 1| {worst:.2e}"),
    )
}

fn scattering_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut worst_bound = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let p = CavityParams {
            g: rng.gen_range(0.0..10.0),
            kappa: rng.gen_range(0.1..5.0),
            kappa_s: rng.gen_range(0.0..5.0),
            gamma: rng.gen_range(0.01..2.0),
            omega: rng.gen_range(-3.0..3.0),
            omega_c: rng.gen_range(-3.0..3.0),
            omega_x: rng.gen_range(-3.0..3.0),
        };
        let s = ScatterCoeffs::from_params(&p).unwrap();
        let b = block_coeffs(&s);
        let one = Complex64::new(1.0, 0.0);
        worst = worst
            .max((s.r - (one + s.t)).norm())
            .max((s.r0 - (one + s.t0)).norm())
            .max(((b.reflection + b.transmission) - (s.t + s.r)).norm())
            .max(((b.reflection - b.transmission) - (s.t0 + s.r0)).norm());
        worst_bound = worst_bound.max(b.reflection.norm_sqr() + b.transmission.norm_sqr() - 1.0);
    }
    check(
        worst <= 1e-14 && worst_bound <= 1e-14,
        format!(
            "10^4 draws, worst identity error {worst:.2e}, max |D|^2+|T|^2-1 {worst_bound:.2e}"
        ),
    )
}

fn dephasing() -> Outcome {
    let d = dephasing_penalty(&DephasingParams {
        tau: 4.5e-9,
        t2: 2.6e-6,
    })
    .unwrap();
    check((0.0015..=0.002).contains(&d), format!("penalty {d:.6}"))
}

fn sampled_consistency() -> Outcome {
    let start = Instant::now();
    let shots = 100_000u64;
    let cfg = GateConfig::new(CavityParams::practical(), 1).sampled(20_181_130);
    let summary = sample_shots(
        &PhotonSpec::uniform(),
        &[PhotonSpec::uniform()],
        &cfg,
        shots,
    )
    .unwrap();
    let freq = summary.success_frequency();
    let p = 0.6513;
    let sigma = (p * (1.0 - p) / shots as f64).sqrt();
    let z = (freq - p) / sigma;
    check(
        z.abs() <= 3.0,
        format!(
            "frequency {freq:.5}, z = {z:.2}, {:.2} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn efficiency_shape() -> Outcome {
    let g = vec![0.5, 1.0, 2.0, 3.0, 5.0];
    let ks = vec![0.0, 0.1, 0.5, 1.0];
    let rows = sweep_efficiency(&SweepGrid::resonant(g.clone(), ks.clone(), 1)).unwrap();
    let at = |i: usize, j: usize| rows[i * ks.len() + j].efficiency;
    let mut violations = Vec::new();
    for i in 0..g.len() {
        for j in 0..ks.len() {
            if i + 1 < g.len() && at(i + 1, j) <= at(i, j) {
                violations.push(format!("g {} -> {} at ks {}", g[i], g[i + 1], ks[j]));
            }
            if j + 1 < ks.len() && at(i, j + 1) >= at(i, j) {
                violations.push(format!("ks {} -> {} at g {}", ks[j], ks[j + 1], g[i]));
            }
        }
    }
    check(
        violations.is_empty(),
        format!("{} grid points, violations: {violations:?}", rows.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("efficiency at the practical point", efficiency_reproduction),
        ("CNOT^N efficiencies", cnot_n_efficiencies),
        (
            "self-error-correction over random cases",
            self_error_correction,
        ),
        ("hyper-basis truth table", truth_table_check),
        ("control-photon entangling structure", control_structure),
        ("probability conservation", conservation),
        ("scattering identities", scattering_identities),
        ("dephasing estimate", dephasing),
        ("sampled-mode consistency", sampled_consistency),
        ("efficiency grid shape", efficiency_shape),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(format!(
                "panicked: {:?}",
                e.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(e.downcast_ref::<&str>().copied())
            ))
        });
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} [{tag}] {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
