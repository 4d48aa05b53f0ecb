//! Reduced atomic dynamics in the far-detuned, bad-cavity regime.
//!
//! After eliminating the upper levels and the cavity mode, the atom is a
//! two-ground-state system driven by envelope-modulated rates: a photon
//! emission rate `alpha_i(t)`, an optical-pumping noise rate and an
//! out-of-system loss rate per branch. The output photon flux is
//! `alpha_1(t) p11 + alpha_2(t) p22`, which for one lossless pulse reduces
//! to the closed form `alpha_1(t) exp(-int alpha_1)`.

use num_complex::Complex;
use thiserror::Error;

use crate::ode::{solve, OdeError, OdeProblem, DEFAULT_ABS_TOL, DEFAULT_REL_TOL};
use crate::params::DerivedRates;
use crate::pulse::PulseTrain;
use crate::scalar::Real;

/// Reduced-model state at one instant: ground-state populations and the
/// (always-decoupled) ground-state coherence.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AtomState<F> {
    pub p11: F,
    pub p22: F,
    pub coh21: Complex<F>,
}

impl<F: Real> AtomState<F> {
    /// Atom prepared in ground state 1, no coherence.
    pub fn ground1() -> Self {
        Self { p11: F::one(), p22: F::zero(), coh21: Complex::new(F::zero(), F::zero()) }
    }

    /// Check the density-matrix constraints up to `tol`.
    pub fn validate(&self, tol: F) -> Result<(), DynamicsError<F>> {
        if !(self.p11.is_finite() && self.p22.is_finite()) {
            return Err(DynamicsError::InvalidState("populations must be finite"));
        }
        if self.p11 < -tol || self.p22 < -tol {
            return Err(DynamicsError::InvalidState("populations must be nonnegative"));
        }
        if self.p11 + self.p22 > F::one() + tol {
            return Err(DynamicsError::InvalidState("total population exceeds one"));
        }
        let bound = (self.p11.max(F::zero()) * self.p22.max(F::zero())).sqrt();
        if self.coh21.norm() > bound + tol {
            return Err(DynamicsError::InvalidState(
                "coherence exceeds sqrt(p11 p22)",
            ));
        }
        Ok(())
    }
}

/// Time series produced by [`simulate`]. The cumulative photon number is
/// accumulated inside the solver, not by post-hoc quadrature.
#[derive(Clone, Debug)]
pub struct Trajectory<F> {
    pub times: Vec<F>,
    pub p11: Vec<F>,
    pub p22: Vec<F>,
    pub pop_total: Vec<F>,
    /// Instantaneous output flux `dn_out/dt` in photons/us.
    pub flux: Vec<F>,
    pub n_out_cum: Vec<F>,
    pub coh21: Vec<Complex<F>>,
}

impl<F: Real> Trajectory<F> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Total photons emitted by the end of the window.
    pub fn total_photons(&self) -> F {
        self.n_out_cum.last().copied().unwrap_or_else(F::zero)
    }

    pub fn state_at(&self, idx: usize) -> AtomState<F> {
        AtomState { p11: self.p11[idx], p22: self.p22[idx], coh21: self.coh21[idx] }
    }

    /// Linear interpolation of the total population at time `t`.
    pub fn pop_total_at(&self, t: F) -> F {
        interp(&self.times, &self.pop_total, t)
    }

    /// Linear interpolation of the cumulative photon number at time `t`.
    pub fn n_out_at(&self, t: F) -> F {
        interp(&self.times, &self.n_out_cum, t)
    }
}

fn interp<F: Real>(xs: &[F], ys: &[F], x: F) -> F {
    match xs.iter().position(|&xi| xi >= x) {
        None => *ys.last().expect("nonempty trajectory"),
        Some(0) => ys[0],
        Some(i) => {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + (ys[i] - ys[i - 1]) * w
        }
    }
}

/// Envelope-modulated rates at one instant.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct InstantRates<F> {
    pub alpha1: F,
    pub alpha2: F,
    pub pump1: F,
    pub pump2: F,
    pub out1: F,
    pub out2: F,
}

/// Peak rates plus the pulse trains that modulate them.
#[derive(Copy, Clone, Debug)]
pub struct Drive<'a, F: Real> {
    pub rates: &'a DerivedRates<F>,
    pub train: &'a PulseTrain<F>,
}

impl<'a, F: Real> Drive<'a, F> {
    pub fn new(rates: &'a DerivedRates<F>, train: &'a PulseTrain<F>) -> Self {
        Self { rates, train }
    }

    pub fn at(&self, t: F) -> InstantRates<F> {
        let f1 = self.train.eval_f1(t);
        let f2 = self.train.eval_f2(t);
        InstantRates {
            alpha1: self.rates.alpha1 * f1,
            alpha2: self.rates.alpha2 * f2,
            pump1: self.rates.gamma_pump1 * f1,
            pump2: self.rates.gamma_pump2 * f2,
            out1: self.rates.gamma_out1 * f1,
            out2: self.rates.gamma_out2 * f2,
        }
    }

    /// Output flux for a given population pair.
    pub fn flux(&self, t: F, p11: F, p22: F) -> F {
        let r = self.at(t);
        r.alpha1 * p11 + r.alpha2 * p22
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SimOptions<F> {
    pub rel_tol: F,
    pub abs_tol: F,
}

impl<F: Real> Default for SimOptions<F> {
    fn default() -> Self {
        Self { rel_tol: F::of(DEFAULT_REL_TOL), abs_tol: F::of(DEFAULT_ABS_TOL) }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError<F: Real> {
    #[error("invalid initial state: {0}")]
    InvalidState(&'static str),
    #[error("invalid grid: {0}")]
    BadGrid(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    #[error(transparent)]
    Ode(#[from] OdeError<F>),
}

/// Integrate the reduced equations over `grid` and sample populations,
/// flux and cumulative photon number at every grid time.
///
/// The equations are block-diagonal: the populations (plus the photon
/// counter) and the coherence never couple. They are integrated as two
/// independent solves so the step-size control of one block cannot leak
/// into the other; perturbing the initial coherence leaves the population
/// output bit-identical.
pub fn simulate<F: Real>(
    rates: &DerivedRates<F>,
    train: &PulseTrain<F>,
    grid: &[F],
    init: &AtomState<F>,
    opts: &SimOptions<F>,
) -> Result<Trajectory<F>, DynamicsError<F>> {
    if grid.len() < 2 {
        return Err(DynamicsError::BadGrid("need at least two output times"));
    }
    init.validate(F::of(1e-9))?;
    let drive = Drive::new(rates, train);
    let t0 = grid[0];
    let t1 = *grid.last().expect("nonempty grid");
    let breakpoints = train.breakpoints();

    // Block 1: populations and the running photon integral.
    let problem = OdeProblem::new(3, (t0, t1), grid)
        .with_breakpoints(&breakpoints)
        .with_tolerances(opts.rel_tol, opts.abs_tol);
    let rhs = |t: F, y: &[F], dy: &mut [F]| {
        let r = drive.at(t);
        dy[0] = -(r.alpha1 + r.pump1 + r.out1) * y[0] + (r.alpha2 + r.pump2) * y[1];
        dy[1] = -(r.alpha2 + r.pump2 + r.out2) * y[1] + (r.alpha1 + r.pump1) * y[0];
        dy[2] = r.alpha1 * y[0] + r.alpha2 * y[1];
    };
    let sol = solve(&problem, rhs, &[init.p11, init.p22, F::zero()])?;

    // Block 2: the coherence decays with a real rate and stays exactly
    // zero from a zero start.
    let coh_problem = OdeProblem::new(2, (t0, t1), grid)
        .with_breakpoints(&breakpoints)
        .with_tolerances(opts.rel_tol, opts.abs_tol);
    let half = F::of(0.5);
    let coh_rhs = |t: F, y: &[F], dy: &mut [F]| {
        let r = drive.at(t);
        let decay = half * (r.alpha1 + r.pump1 + r.alpha2 + r.pump2);
        dy[0] = -decay * y[0];
        dy[1] = -decay * y[1];
    };
    let coh_sol = solve(&coh_problem, coh_rhs, &[init.coh21.re, init.coh21.im])?;

    let n = sol.times.len();
    let mut traj = Trajectory {
        times: Vec::with_capacity(n),
        p11: Vec::with_capacity(n),
        p22: Vec::with_capacity(n),
        pop_total: Vec::with_capacity(n),
        flux: Vec::with_capacity(n),
        n_out_cum: Vec::with_capacity(n),
        coh21: Vec::with_capacity(n),
    };
    for ((t, y), c) in sol.times.iter().zip(&sol.states).zip(&coh_sol.states) {
        traj.times.push(*t);
        traj.p11.push(y[0]);
        traj.p22.push(y[1]);
        traj.pop_total.push(y[0] + y[1]);
        traj.flux.push(drive.flux(*t, y[0], y[1]));
        traj.n_out_cum.push(y[2]);
        traj.coh21.push(Complex::new(c[0], c[1]));
    }
    Ok(traj)
}

/// Closed-form flux of one lossless pulse on branch 1, evaluated through
/// quadrature of the envelope integral. Serves as an independent oracle
/// for [`simulate`].
pub fn analytic_single_pulse_flux<F: Real>(
    rates: &DerivedRates<F>,
    train: &PulseTrain<F>,
    t: F,
) -> Result<F, DynamicsError<F>> {
    if train.n_subpulses != 1 {
        return Err(DynamicsError::Precondition(
            "closed-form flux applies to a single subpulse only",
        ));
    }
    if rates.gamma_pump1 != F::zero() || rates.gamma_out1 != F::zero() {
        return Err(DynamicsError::Precondition(
            "closed-form flux applies to the lossless case only",
        ));
    }
    let dt = t - train.center1(0);
    let envelope = train.shape.eval(dt);
    let area = train.shape.integral_to(dt);
    Ok(rates.alpha1 * envelope * (-rates.alpha1 * area).exp())
}

/// Linearized population after `n_pulses` total pulses in the symmetric
/// strong-pulse regime: `1 - n gamma_out / alpha`, clamped at zero. A
/// consistency check, not the dynamics.
pub fn leakage_prediction<F: Real>(rates: &DerivedRates<F>, n_pulses: usize) -> F {
    let half = F::of(0.5);
    let alpha = half * (rates.alpha1 + rates.alpha2);
    let out = half * (rates.gamma_out1 + rates.gamma_out2);
    if out == F::zero() {
        return F::one();
    }
    (F::one() - F::of(n_pulses as f64) * out / alpha).max(F::zero())
}
