//! Two-time intensity correlation of the emitted train.
//!
//! For every outer time `t` on a trajectory grid, the conditioned moments
//! `Z_i(t, tau)` are propagated in the delay `tau` with the same linear
//! system as the populations (coefficients evaluated at `t + tau`), from
//! the regression initial values; the joint-detection density
//! `G2(t, tau)` is then integrated over `t` with trapezoid weights to give
//! the train-integrated correlation of delay.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{simulate, AtomState, Drive, SimOptions, Trajectory};
use crate::ode::{solve, OdeError, OdeProblem, DEFAULT_ABS_TOL, DEFAULT_REL_TOL};
use crate::params::DerivedRates;
use crate::pulse::PulseTrain;
use crate::scalar::Real;

/// Train-integrated correlation on a delay grid.
#[derive(Clone, Debug)]
pub struct CorrelationResult<F> {
    pub taus: Vec<F>,
    /// `int G2(t, tau) dt` in photons^2/us.
    pub g2_of_tau: Vec<F>,
    /// Outer time grid the integration used.
    pub t_grid_used: Vec<F>,
    /// Most negative conditioned population encountered; a positivity
    /// diagnostic that should sit at solver-tolerance level.
    pub min_conditioned: F,
}

impl<F: Real> CorrelationResult<F> {
    /// Curve rescaled to unit maximum (all zeros stay zero).
    pub fn normalized(&self) -> Vec<F> {
        let max = self.g2_of_tau.iter().cloned().fold(F::zero(), F::max);
        if max == F::zero() {
            return vec![F::zero(); self.g2_of_tau.len()];
        }
        self.g2_of_tau.iter().map(|&v| v / max).collect()
    }

    /// Local maxima `(tau, value)` at least `threshold_frac` of the global
    /// maximum, in increasing delay order.
    pub fn peaks(&self, threshold_frac: F) -> Vec<(F, F)> {
        let g = &self.g2_of_tau;
        let max = g.iter().cloned().fold(F::zero(), F::max);
        let floor = threshold_frac * max;
        let mut out = Vec::new();
        for j in 1..g.len().saturating_sub(1) {
            if g[j] >= floor && g[j] > g[j - 1] && g[j] >= g[j + 1] {
                out.push((self.taus[j], g[j]));
            }
        }
        out
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct G2Options<F> {
    /// Include the out-loss rates in the conditioned propagation (they are
    /// part of the population equations; switch off only for sensitivity
    /// checks).
    pub include_out_loss: bool,
    pub rel_tol: F,
    pub abs_tol: F,
}

impl<F: Real> Default for G2Options<F> {
    fn default() -> Self {
        Self {
            include_out_loss: true,
            rel_tol: F::of(DEFAULT_REL_TOL),
            abs_tol: F::of(DEFAULT_ABS_TOL),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CorrelationError<F: Real> {
    #[error("invalid correlation input: {0}")]
    BadInput(&'static str),
    #[error("conditioned solve failed at outer time {t}: {source}")]
    AtOuterTime { t: F, source: OdeError<F> },
}

fn trapezoid_weights<F: Real>(xs: &[F]) -> Vec<F> {
    let n = xs.len();
    let half = F::of(0.5);
    let mut w = vec![F::zero(); n];
    for i in 0..n.saturating_sub(1) {
        let dx = (xs[i + 1] - xs[i]) * half;
        w[i] = w[i] + dx;
        w[i + 1] = w[i + 1] + dx;
    }
    w
}

/// Train-integrated `G2(tau)` over the trajectory's native grid.
pub fn g2_grid<F: Real>(
    rates: &DerivedRates<F>,
    train: &PulseTrain<F>,
    traj: &Trajectory<F>,
    taus: &[F],
    kappa: F,
    opts: &G2Options<F>,
) -> Result<CorrelationResult<F>, CorrelationError<F>> {
    validate_taus(taus)?;
    if traj.len() < 2 {
        return Err(CorrelationError::BadInput("trajectory too short"));
    }
    let drive = Drive::new(rates, train);
    let breakpoints = train.breakpoints();
    let tau_end = *taus.last().expect("nonempty taus");

    let rows: Vec<Result<Option<(Vec<F>, F)>, CorrelationError<F>>> = traj
        .times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let r = drive.at(t);
            let z1_0 = r.alpha2 * traj.p22[i] / kappa;
            let z2_0 = r.alpha1 * traj.p11[i] / kappa;
            if z1_0 == F::zero() && z2_0 == F::zero() {
                // Linear homogeneous propagation from zero stays zero.
                return Ok(None);
            }
            let (z1, z2) = if tau_end > F::zero() {
                let shifted: Vec<F> = breakpoints.iter().map(|&b| b - t).collect();
                let problem = OdeProblem::new(2, (F::zero(), tau_end), taus)
                    .with_breakpoints(&shifted)
                    .with_tolerances(opts.rel_tol, opts.abs_tol);
                let rhs = |tau: F, z: &[F], dz: &mut [F]| {
                    let r = drive.at(t + tau);
                    let (o1, o2) = if opts.include_out_loss {
                        (r.out1, r.out2)
                    } else {
                        (F::zero(), F::zero())
                    };
                    dz[0] = -(r.alpha1 + r.pump1 + o1) * z[0] + (r.alpha2 + r.pump2) * z[1];
                    dz[1] = -(r.alpha2 + r.pump2 + o2) * z[1] + (r.alpha1 + r.pump1) * z[0];
                };
                let sol = solve(&problem, rhs, &[z1_0, z2_0])
                    .map_err(|source| CorrelationError::AtOuterTime { t, source })?;
                (sol.component(0), sol.component(1))
            } else {
                (vec![z1_0], vec![z2_0])
            };
            let mut row = Vec::with_capacity(taus.len());
            let mut min_z = F::zero();
            for ((&tau, &z1j), &z2j) in taus.iter().zip(&z1).zip(&z2) {
                min_z = min_z.min(z1j).min(z2j);
                let rr = drive.at(t + tau);
                row.push(kappa * (rr.alpha1 * z1j + rr.alpha2 * z2j));
            }
            Ok(Some((row, min_z)))
        })
        .collect();

    let weights = trapezoid_weights(&traj.times);
    let mut g2 = vec![F::zero(); taus.len()];
    let mut min_conditioned = F::zero();
    for (i, row) in rows.into_iter().enumerate() {
        if let Some((row, min_z)) = row? {
            min_conditioned = min_conditioned.min(min_z);
            for (acc, v) in g2.iter_mut().zip(row) {
                *acc = *acc + weights[i] * v;
            }
        }
    }
    Ok(CorrelationResult {
        taus: taus.to_vec(),
        g2_of_tau: g2,
        t_grid_used: traj.times.clone(),
        min_conditioned,
    })
}

/// Brute-force reference for [`g2_grid`]: a photon detected at `t`
/// projects the atom onto the opposite ground state; the joint density is
/// the detection flux times the conditional flux of a fresh simulation
/// restarted from that state. Same outer grid and trapezoid weights.
pub fn two_stage_g2<F: Real>(
    rates: &DerivedRates<F>,
    train: &PulseTrain<F>,
    traj: &Trajectory<F>,
    taus: &[F],
    opts: &SimOptions<F>,
) -> Result<CorrelationResult<F>, CorrelationError<F>> {
    validate_taus(taus)?;
    if traj.len() < 2 || taus.len() < 2 {
        return Err(CorrelationError::BadInput("need at least two grid points"));
    }
    let drive = Drive::new(rates, train);
    let zero = F::zero();

    let rows: Vec<Result<Option<Vec<F>>, CorrelationError<F>>> = traj
        .times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let r = drive.at(t);
            let w1 = r.alpha1 * traj.p11[i];
            let w2 = r.alpha2 * traj.p22[i];
            if w1 == zero && w2 == zero {
                return Ok(None);
            }
            let grid: Vec<F> = taus.iter().map(|&tau| t + tau).collect();
            let mut row = vec![zero; taus.len()];
            for (weight, p11, p22) in [(w1, zero, F::one()), (w2, F::one(), zero)] {
                if weight == zero {
                    continue;
                }
                let init = AtomState { p11, p22, coh21: num_complex::Complex::new(zero, zero) };
                let cond = simulate(rates, train, &grid, &init, opts).map_err(|e| {
                    CorrelationError::AtOuterTime {
                        t,
                        source: match e {
                            crate::dynamics::DynamicsError::Ode(o) => o,
                            _ => OdeError::InvalidProblem("conditional restart failed"),
                        },
                    }
                })?;
                for (acc, f) in row.iter_mut().zip(&cond.flux) {
                    *acc = *acc + weight * *f;
                }
            }
            Ok(Some(row))
        })
        .collect();

    let weights = trapezoid_weights(&traj.times);
    let mut g2 = vec![zero; taus.len()];
    for (i, row) in rows.into_iter().enumerate() {
        if let Some(row) = row? {
            for (acc, v) in g2.iter_mut().zip(row) {
                *acc = *acc + weights[i] * v;
            }
        }
    }
    Ok(CorrelationResult {
        taus: taus.to_vec(),
        g2_of_tau: g2,
        t_grid_used: traj.times.clone(),
        min_conditioned: zero,
    })
}

fn validate_taus<F: Real>(taus: &[F]) -> Result<(), CorrelationError<F>> {
    if taus.is_empty() {
        return Err(CorrelationError::BadInput("empty delay grid"));
    }
    if taus[0] < F::zero() {
        return Err(CorrelationError::BadInput("delays must be nonnegative"));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CorrelationError::BadInput("delay grid must be strictly increasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SimOptions;
    use crate::params::{angular_from_mhz, derive, RawParams};
    use crate::pulse::{ShapeKind, SubpulseShape};
    use approx::assert_relative_eq;

    fn noise_free_raw() -> RawParams<f64> {
        RawParams {
            g1: angular_from_mhz(10.0),
            g2: angular_from_mhz(10.0),
            omega1: angular_from_mhz(10.0),
            omega2: angular_from_mhz(10.0),
            delta1: angular_from_mhz(100.0),
            delta2: angular_from_mhz(100.0),
            kappa: angular_from_mhz(3.0),
            gamma_42: 0.0,
            gamma_31: 0.0,
            gamma_4out: 0.0,
            gamma_3out: 0.0,
            gamma_sp: angular_from_mhz(6.0),
            delta_b: angular_from_mhz(14.0),
        }
    }

    /// Short train whose adjacent supports barely touch (fwhm 0.5, cutoff
    /// radius 2.5, spacing 3): the envelope product is below 1e-21.
    fn separated_train(n: usize) -> PulseTrain<f64> {
        let shape = SubpulseShape::new(ShapeKind::Gaussian, 0.5).unwrap();
        PulseTrain::new(shape, n, 6.0, 3.0, 0.0).unwrap()
    }

    /// Fully disjoint supports (fwhm 0.25, cutoff radius 1.25, spacing 3).
    fn disjoint_train(n: usize) -> PulseTrain<f64> {
        let shape = SubpulseShape::new(ShapeKind::Gaussian, 0.25).unwrap();
        PulseTrain::new(shape, n, 6.0, 3.0, 0.0).unwrap()
    }

    fn grid(t0: f64, t1: f64, step: f64) -> Vec<f64> {
        let n = ((t1 - t0) / step).ceil() as usize;
        (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
    }

    fn run_traj(raw: &RawParams<f64>, train: &PulseTrain<f64>, step: f64) -> Trajectory<f64> {
        let rates = derive(raw).unwrap();
        let g = grid(train.support_start(), train.support_end(), step);
        simulate(&rates, train, &g, &AtomState::ground1(), &SimOptions::default()).unwrap()
    }

    #[test]
    fn zero_delay_vanishes_for_disjoint_supports() {
        let raw = noise_free_raw();

        // Barely-touching supports: the residual tail product keeps the
        // zero-delay value ~1e-20 of the peak.
        let train = separated_train(2);
        let traj = run_traj(&raw, &train, 0.02);
        let rates = derive(&raw).unwrap();
        let taus = grid(0.0, 12.0, 0.02);
        let res =
            g2_grid(&rates, &train, &traj, &taus, raw.kappa, &G2Options::default()).unwrap();
        let max = res.g2_of_tau.iter().cloned().fold(0.0, f64::max);
        assert!(max > 0.0);
        assert!(res.g2_of_tau[0] < 1e-15 * max);
        assert!(res.min_conditioned > -1e-9);

        // Fully disjoint supports: exactly zero.
        let train = disjoint_train(2);
        let traj = run_traj(&raw, &train, 0.01);
        let res =
            g2_grid(&rates, &train, &traj, &taus, raw.kappa, &G2Options::default()).unwrap();
        assert_eq!(res.g2_of_tau[0], 0.0);
    }

    #[test]
    fn peaks_sit_at_delay_multiples_and_decrease() {
        let raw = noise_free_raw();
        let train = separated_train(3);
        let traj = run_traj(&raw, &train, 0.02);
        let rates = derive(&raw).unwrap();
        let taus = grid(0.0, 18.0, 0.02);
        let res =
            g2_grid(&rates, &train, &traj, &taus, raw.kappa, &G2Options::default()).unwrap();
        let peaks = res.peaks(0.05);
        // Lags present in a 3+3 train with period 2 tau_d: multiples of 3.
        assert_eq!(peaks.len(), 5);
        for (k, (tau, _)) in peaks.iter().enumerate() {
            assert_relative_eq!(*tau, 3.0 * (k + 1) as f64, epsilon = 0.1);
        }
        for w in peaks.windows(2) {
            assert!(w[1].1 < w[0].1, "peak amplitudes must decrease, got {peaks:?}");
        }
    }

    #[test]
    fn zero_delay_value_matches_direct_formula() {
        // With overlapping tails the tau = 0 correlation is the quadrature
        // of alpha1(t) alpha2(t) pop(t); evaluate both on the same grid.
        let raw = noise_free_raw();
        let shape = SubpulseShape::new(ShapeKind::Gaussian, 1.0).unwrap();
        let train = PulseTrain::new(shape, 1, 6.0, 3.0, 0.0).unwrap();
        let traj = run_traj(&raw, &train, 0.01);
        let rates = derive(&raw).unwrap();
        let taus = grid(0.0, 6.0, 0.05);
        let res =
            g2_grid(&rates, &train, &traj, &taus, raw.kappa, &G2Options::default()).unwrap();

        let drive = Drive::new(&rates, &train);
        let weights = trapezoid_weights(&traj.times);
        let mut direct = 0.0;
        for (i, &t) in traj.times.iter().enumerate() {
            let r = drive.at(t);
            direct += weights[i] * r.alpha1 * r.alpha2 * traj.pop_total[i];
        }
        assert_relative_eq!(res.g2_of_tau[0], direct, max_relative = 1e-12);
        assert!(direct > 0.0);
    }

    #[test]
    fn regression_matches_two_stage_reference() {
        let raw = noise_free_raw();
        let train = separated_train(1);
        let traj = run_traj(&raw, &train, 0.02);
        let rates = derive(&raw).unwrap();
        let taus = grid(0.0, 6.0, 0.02);
        let reg =
            g2_grid(&rates, &train, &traj, &taus, raw.kappa, &G2Options::default()).unwrap();
        let brute =
            two_stage_g2(&rates, &train, &traj, &taus, &SimOptions::default()).unwrap();
        let peak = reg.g2_of_tau.iter().cloned().fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for (a, b) in reg.g2_of_tau.iter().zip(&brute.g2_of_tau) {
            worst = worst.max((a - b).abs());
        }
        assert!(peak > 0.0);
        assert!(
            worst < 1e-6 * peak,
            "regression vs two-stage deviation {worst:.3e}, peak {peak:.3e}"
        );
    }

    #[test]
    fn out_loss_switch_changes_lossy_results_only() {
        let mut raw = noise_free_raw();
        let rates_free = derive(&raw).unwrap();
        let train = separated_train(2);
        let traj = run_traj(&raw, &train, 0.05);
        let taus = grid(0.0, 9.0, 0.05);
        let with = G2Options { include_out_loss: true, ..Default::default() };
        let without = G2Options { include_out_loss: false, ..Default::default() };
        let a = g2_grid(&rates_free, &train, &traj, &taus, raw.kappa, &with).unwrap();
        let b = g2_grid(&rates_free, &train, &traj, &taus, raw.kappa, &without).unwrap();
        assert_eq!(a.g2_of_tau, b.g2_of_tau);

        raw.gamma_4out = angular_from_mhz(2.0);
        raw.gamma_3out = angular_from_mhz(2.0);
        let rates_lossy = derive(&raw).unwrap();
        let traj = run_traj(&raw, &train, 0.05);
        let a = g2_grid(&rates_lossy, &train, &traj, &taus, raw.kappa, &with).unwrap();
        let b = g2_grid(&rates_lossy, &train, &traj, &taus, raw.kappa, &without).unwrap();
        let pa = a.g2_of_tau.iter().cloned().fold(0.0, f64::max);
        let pb = b.g2_of_tau.iter().cloned().fold(0.0, f64::max);
        assert!(pb > pa, "dropping the loss term must raise the correlation");
    }

    #[test]
    fn normalized_curve_has_unit_peak() {
        let raw = noise_free_raw();
        let train = separated_train(1);
        let traj = run_traj(&raw, &train, 0.05);
        let rates = derive(&raw).unwrap();
        let taus = grid(0.0, 6.0, 0.05);
        let res =
            g2_grid(&rates, &train, &traj, &taus, raw.kappa, &G2Options::default()).unwrap();
        let norm = res.normalized();
        let max = norm.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn rejects_bad_delay_grids() {
        let raw = noise_free_raw();
        let train = separated_train(1);
        let traj = run_traj(&raw, &train, 0.1);
        let rates = derive(&raw).unwrap();
        for taus in [vec![], vec![-1.0, 0.0], vec![0.0, 0.0]] {
            assert!(matches!(
                g2_grid(&rates, &train, &traj, &taus, raw.kappa, &G2Options::default()),
                Err(CorrelationError::BadInput(_))
            ));
        }
    }
}
