//! Physical input parameters and the effective rates derived from them.
//!
//! Everything is stored as angular frequency in rad/us and time in us; the
//! boundary layers convert from ordinary MHz on ingestion so that no 2-pi
//! factor ever appears in the dynamics.

use thiserror::Error;

use crate::scalar::Real;

/// Convert an ordinary frequency in MHz to the internal angular rad/us.
pub fn angular_from_mhz<F: Real>(mhz: F) -> F {
    F::TAU() * mhz
}

/// Convert an internal angular rate back to ordinary MHz.
pub fn mhz_from_angular<F: Real>(rad_per_us: F) -> F {
    rad_per_us / F::TAU()
}

/// Raw physical rates of the driven atom-cavity system, all angular
/// (rad/us). Branch 1 drives ground state 1 -> 2 (photon via upper state 4),
/// branch 2 drives 2 -> 1 (via upper state 3).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RawParams<F> {
    /// Atom-cavity couplings on the two Raman branches.
    pub g1: F,
    pub g2: F,
    /// Peak Rabi frequencies of the two pump fields.
    pub omega1: F,
    pub omega2: F,
    /// One-photon detunings; kept separate even when equal.
    pub delta1: F,
    pub delta2: F,
    /// Cavity field decay rate.
    pub kappa: F,
    /// Partial spontaneous rates feeding optical pumping between the two
    /// ground states (4 -> 2 and 3 -> 1).
    pub gamma_42: F,
    pub gamma_31: F,
    /// Decay rates out of the four-level system.
    pub gamma_4out: F,
    pub gamma_3out: F,
    /// Total upper-state decay; diagnostic only.
    pub gamma_sp: F,
    /// Zeeman splitting of the ground/excited doublets; only enters the
    /// regime validity check.
    pub delta_b: F,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("rate `{0}` must be finite and nonnegative")]
    NegativeRate(&'static str),
    #[error("`{0}` must be strictly positive")]
    NonPositive(&'static str),
}

impl<F: Real> RawParams<F> {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let nonneg: [(&'static str, F); 13] = [
            ("g1", self.g1),
            ("g2", self.g2),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("kappa", self.kappa),
            ("gamma_42", self.gamma_42),
            ("gamma_31", self.gamma_31),
            ("gamma_4out", self.gamma_4out),
            ("gamma_3out", self.gamma_3out),
            ("gamma_sp", self.gamma_sp),
            ("delta_b", self.delta_b),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < F::zero() {
                return Err(ParamsError::NegativeRate(name));
            }
        }
        for (name, v) in [("delta1", self.delta1), ("delta2", self.delta2), ("kappa", self.kappa)]
        {
            if v <= F::zero() {
                return Err(ParamsError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Effective rates after eliminating the upper atomic levels and the cavity
/// mode. All are peak values; the instantaneous rates carry the envelope.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DerivedRates<F> {
    /// Effective Raman couplings `G_i = g_i omega_i / delta_i`.
    pub g1_eff: F,
    pub g2_eff: F,
    /// Peak photon-generation rates `alpha_i = 4 G_i^2 / kappa`.
    pub alpha1: F,
    pub alpha2: F,
    /// Peak optical-pumping (noise) rates `(omega_i/delta_i)^2 gamma_pump`.
    pub gamma_pump1: F,
    pub gamma_pump2: F,
    /// Peak out-of-system loss rates `(omega_i/delta_i)^2 gamma_out`.
    pub gamma_out1: F,
    pub gamma_out2: F,
    /// Signal-to-noise ratios `4 g_i^2 / (kappa gamma_pump)` per branch;
    /// infinite when the pump branch is noise-free.
    pub r_sn1: F,
    pub r_sn2: F,
}

impl<F: Real> DerivedRates<F> {
    /// Headline signal-to-noise ratio: the weaker of the two branches.
    pub fn r_sn(&self) -> F {
        self.r_sn1.min(self.r_sn2)
    }
}

/// Derive the effective rates. Exact algebra, no regime assumptions.
pub fn derive<F: Real>(raw: &RawParams<F>) -> Result<DerivedRates<F>, ParamsError> {
    raw.validate()?;
    let four = F::of(4.0);
    let g1_eff = raw.g1 * raw.omega1 / raw.delta1;
    let g2_eff = raw.g2 * raw.omega2 / raw.delta2;
    let ratio1 = raw.omega1 / raw.delta1;
    let ratio2 = raw.omega2 / raw.delta2;
    let snr = |g: F, gamma: F| {
        if gamma == F::zero() {
            F::infinity()
        } else {
            four * g * g / (raw.kappa * gamma)
        }
    };
    Ok(DerivedRates {
        g1_eff,
        g2_eff,
        alpha1: four * g1_eff * g1_eff / raw.kappa,
        alpha2: four * g2_eff * g2_eff / raw.kappa,
        gamma_pump1: ratio1 * ratio1 * raw.gamma_42,
        gamma_pump2: ratio2 * ratio2 * raw.gamma_31,
        gamma_out1: ratio1 * ratio1 * raw.gamma_4out,
        gamma_out2: ratio2 * ratio2 * raw.gamma_3out,
        r_sn1: snr(raw.g1, raw.gamma_42),
        r_sn2: snr(raw.g2, raw.gamma_31),
    })
}

/// A violated operating-regime condition. Warnings never abort a run; the
/// master-equation oracle quantifies the resulting error instead.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RegimeWarning<F> {
    pub condition: RegimeCondition,
    /// Raman branch (1 or 2) the ratio belongs to.
    pub branch: u8,
    pub ratio: F,
    pub threshold: F,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RegimeCondition {
    /// `delta_i` must dominate `g_i`, `kappa` and `omega_i`.
    FarDetuning,
    /// `G_i` must stay well below `kappa`.
    BadCavity,
    /// `delta_i` must dominate the Zeeman splitting.
    ZeemanSplitting,
}

impl<F: Real> std::fmt::Display for RegimeWarning<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.condition {
            RegimeCondition::FarDetuning => write!(
                f,
                "branch {}: delta/max(g, kappa, omega) = {:.3} < {} (far-detuning condition)",
                self.branch, self.ratio, self.threshold
            ),
            RegimeCondition::BadCavity => write!(
                f,
                "branch {}: G/kappa = {:.3} > {} (bad-cavity condition)",
                self.branch, self.ratio, self.threshold
            ),
            RegimeCondition::ZeemanSplitting => write!(
                f,
                "branch {}: delta/delta_B = {:.3} < {} (Zeeman-splitting condition)",
                self.branch, self.ratio, self.threshold
            ),
        }
    }
}

const FAR_DETUNING_MIN_RATIO: f64 = 5.0;
const BAD_CAVITY_MAX_RATIO: f64 = 0.5;
const ZEEMAN_MIN_RATIO: f64 = 5.0;

/// Check the adiabatic-elimination conditions and return a record for each
/// violated ratio.
pub fn check_regime<F: Real>(
    raw: &RawParams<F>,
    derived: &DerivedRates<F>,
) -> Vec<RegimeWarning<F>> {
    let mut warnings = Vec::new();
    let branches = [
        (1u8, raw.g1, raw.omega1, raw.delta1, derived.g1_eff),
        (2u8, raw.g2, raw.omega2, raw.delta2, derived.g2_eff),
    ];
    for (branch, g, omega, delta, g_eff) in branches {
        let fastest = g.max(raw.kappa).max(omega);
        if fastest > F::zero() {
            let ratio = delta / fastest;
            if ratio < F::of(FAR_DETUNING_MIN_RATIO) {
                warnings.push(RegimeWarning {
                    condition: RegimeCondition::FarDetuning,
                    branch,
                    ratio,
                    threshold: F::of(FAR_DETUNING_MIN_RATIO),
                });
            }
        }
        let ratio = g_eff / raw.kappa;
        if ratio > F::of(BAD_CAVITY_MAX_RATIO) {
            warnings.push(RegimeWarning {
                condition: RegimeCondition::BadCavity,
                branch,
                ratio,
                threshold: F::of(BAD_CAVITY_MAX_RATIO),
            });
        }
        if raw.delta_b > F::zero() {
            let ratio = delta / raw.delta_b;
            if ratio < F::of(ZEEMAN_MIN_RATIO) {
                warnings.push(RegimeWarning {
                    condition: RegimeCondition::ZeemanSplitting,
                    branch,
                    ratio,
                    threshold: F::of(ZEEMAN_MIN_RATIO),
                });
            }
        }
    }
    warnings
}
