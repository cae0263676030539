//! Steady-state scattering of a single photon off a quantum-dot microcavity.
//!
//! All rates and frequencies are taken in one consistent unit. The CLI and
//! the sweeps normalise everything to the cavity decay rate (`kappa = 1`);
//! the library itself accepts raw values.
//!
//! A *hot* cavity has the dipole coupled (`g > 0`), a *cold* cavity does
//! not. The reflection coefficient always equals one plus the transmission
//! coefficient, which is enforced by construction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared magnitude below which a scattering denominator counts as zero.
pub const DENOMINATOR_EPSILON: f64 = 1e-30;

/// Physical parameters of one quantum-dot–microcavity system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Dipole–cavity coupling strength.
    pub g: f64,
    /// Cavity field decay rate into the two input/output ports.
    pub kappa: f64,
    /// Side leakage rate of the cavity.
    pub kappa_s: f64,
    /// Exciton dipole decay rate.
    pub gamma: f64,
    /// Frequency of the incoming photon.
    pub omega: f64,
    /// Cavity mode frequency.
    pub omega_c: f64,
    /// Trion transition frequency.
    pub omega_x: f64,
}

impl CavityParams {
    /// Everything on resonance (`omega = omega_c = omega_x = 0`).
    pub fn resonant(g: f64, kappa: f64, kappa_s: f64, gamma: f64) -> Self {
        Self {
            g,
            kappa,
            kappa_s,
            gamma,
            omega: 0.0,
            omega_c: 0.0,
            omega_x: 0.0,
        }
    }

    /// Dimensionless form used by the efficiency plots: `kappa = 1`,
    /// `kappa_s = ks_ratio`, `g = g_ratio * (kappa + kappa_s)`, and detunings
    /// measured from the photon frequency.
    pub fn from_ratios(
        g_ratio: f64,
        ks_ratio: f64,
        gamma_ratio: f64,
        detuning_c: f64,
        detuning_x: f64,
    ) -> Self {
        Self {
            g: g_ratio * (1.0 + ks_ratio),
            kappa: 1.0,
            kappa_s: ks_ratio,
            gamma: gamma_ratio,
            omega: 0.0,
            omega_c: detuning_c,
            omega_x: detuning_x,
        }
    }

    /// The operating point quoted for practical devices:
    /// `g/(kappa+kappa_s) = 3`, `kappa_s/kappa = 0.1`, `gamma/kappa = 0.1`.
    pub fn practical() -> Self {
        Self::from_ratios(3.0, 0.1, 0.1, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g", self.g),
            ("kappa", self.kappa),
            ("kappa_s", self.kappa_s),
            ("gamma", self.gamma),
            ("omega", self.omega),
            ("omega_c", self.omega_c),
            ("omega_x", self.omega_x),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!("{name} must be finite")));
        }
        if self.kappa <= 0.0 {
            return Err(Error::Validation(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        for (name, value) in [
            ("kappa_s", self.kappa_s),
            ("gamma", self.gamma),
            ("g", self.g),
        ] {
            if value < 0.0 {
                return Err(Error::Validation(format!(
                    "{name} must be >= 0, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// `g / (kappa + kappa_s)`.
    pub fn g_ratio(&self) -> f64 {
        self.g / (self.kappa + self.kappa_s)
    }
}

/// One reflection/transmission pair with `r = 1 + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPair {
    pub r: Complex64,
    pub t: Complex64,
}

impl ScatterPair {
    fn from_transmission(t: Complex64) -> Self {
        Self {
            r: Complex64::new(1.0, 0.0) + t,
            t,
        }
    }
}

/// Hot-cavity (`r`, `t`) and cold-cavity (`r0`, `t0`) coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterCoeffs {
    pub r: Complex64,
    pub t: Complex64,
    pub r0: Complex64,
    pub t0: Complex64,
}

impl ScatterCoeffs {
    pub fn from_params(p: &CavityParams) -> Result<Self> {
        let hot = hot_coeffs(p)?;
        let cold = cold_coeffs(p)?;
        Ok(Self {
            r: hot.r,
            t: hot.t,
            r0: cold.r,
            t0: cold.t,
        })
    }

    /// Coefficients of the lossless, strongly coupled limit.
    pub fn ideal() -> Self {
        Self {
            r: Complex64::new(1.0, 0.0),
            t: Complex64::new(0.0, 0.0),
            r0: Complex64::new(0.0, 0.0),
            t0: Complex64::new(-1.0, 0.0),
        }
    }
}

/// Effective input/output map of the basic block: an incoming `R` photon is
/// reflected unchanged with amplitude `reflection` (and then detected), or
/// transmitted as `L` with amplitude `transmission` while the spin picks up
/// a Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockCoeffs {
    pub reflection: Complex64,
    pub transmission: Complex64,
}

impl BlockCoeffs {
    pub fn ideal() -> Self {
        block_coeffs(&ScatterCoeffs::ideal())
    }

    pub fn from_params(p: &CavityParams) -> Result<Self> {
        Ok(block_coeffs(&ScatterCoeffs::from_params(p)?))
    }

    /// Probability that a photon entering the block is neither transmitted
    /// nor reflected.
    pub fn absorption(&self) -> f64 {
        (1.0 - self.reflection.norm_sqr() - self.transmission.norm_sqr()).max(0.0)
    }
}

/// Electron-spin dephasing inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingParams {
    /// Cavity photon lifetime.
    pub tau: f64,
    /// Spin coherence time, in the same unit as `tau`.
    pub t2: f64,
}

impl DephasingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Validation(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !(self.t2 > 0.0 && self.t2.is_finite()) {
            return Err(Error::Validation(format!(
                "t2 must be > 0, got {}",
                self.t2
            )));
        }
        Ok(())
    }
}

fn checked_div(num: Complex64, den: Complex64, what: &str) -> Result<Complex64> {
    if den.norm_sqr() < DENOMINATOR_EPSILON {
        return Err(Error::Domain(format!("{what} denominator vanishes")));
    }
    Ok(num / den)
}

/// Hot-cavity reflection and transmission in the weak-excitation limit.
pub fn hot_coeffs(p: &CavityParams) -> Result<ScatterPair> {
    p.validate()?;
    let dipole = Complex64::new(p.gamma / 2.0, p.omega_x - p.omega);
    let cavity = Complex64::new(p.kappa + p.kappa_s / 2.0, p.omega_c - p.omega);
    if p.g == 0.0 && dipole.norm() > 0.0 {
        // The dipole factor cancels exactly; skip the rounding.
        return cold_coeffs(p);
    }
    let den = dipole * cavity + p.g * p.g;
    let t = checked_div(-dipole * p.kappa, den, "hot-cavity")?;
    Ok(ScatterPair::from_transmission(t))
}

/// Cold-cavity (uncoupled) reflection and transmission.
pub fn cold_coeffs(p: &CavityParams) -> Result<ScatterPair> {
    p.validate()?;
    let cavity = Complex64::new(p.kappa + p.kappa_s / 2.0, p.omega_c - p.omega);
    let t0 = checked_div(Complex64::new(-p.kappa, 0.0), cavity, "cold-cavity")?;
    Ok(ScatterPair::from_transmission(t0))
}

/// `D = (t + r + t0 + r0)/2`, `T = (t + r - t0 - r0)/2`.
pub fn block_coeffs(s: &ScatterCoeffs) -> BlockCoeffs {
    BlockCoeffs {
        reflection: (s.t + s.r + s.t0 + s.r0) * 0.5,
        transmission: ((s.t - s.t0) + (s.r - s.r0)) * 0.5,
    }
}

/// Fraction of photons that leave a CNOT^N run: `|T|^(4(N+1))`.
pub fn efficiency(transmission: Complex64, n_targets: usize) -> f64 {
    assert!(
        n_targets >= 1,
        "efficiency needs at least one target photon"
    );
    transmission.norm_sqr().powi(2 * (n_targets as i32 + 1))
}

/// Per-QD fidelity penalty from spin dephasing during one photon lifetime.
pub fn dephasing_penalty(d: &DephasingParams) -> Result<f64> {
    d.validate()?;
    Ok(-(-d.tau / d.t2).exp_m1())
}
