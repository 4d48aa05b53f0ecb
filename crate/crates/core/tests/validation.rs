//! Cross-module validation against independent oracles.
//!
//! The reduced dynamics is checked against an integrating-factor
//! quadrature solution (no Runge-Kutta involved), the correlation module
//! against a pulse-outcome enumeration, and the full master equation
//! against the reduced model.

use approx::assert_abs_diff_eq;

use sptrain_core::correlation::{g2_grid, G2Options};
use sptrain_core::dynamics::{simulate, AtomState, SimOptions};
use sptrain_core::lindblad::{build_generators, evolve, DensityMatrix, EvolveOptions};
use sptrain_core::params::{angular_from_mhz, derive};
use sptrain_core::pulse::ShapeKind;
use sptrain_core::{PulseTrain, RawParams, SubpulseShape};

fn noise_free_raw() -> RawParams {
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

fn train(fwhm: f64, n: usize) -> PulseTrain {
    PulseTrain::new(SubpulseShape::new(ShapeKind::Gaussian, fwhm).unwrap(), n, 6.0, 3.0, 0.0)
        .unwrap()
}

fn uniform(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
}

/// Cumulative integral on a uniform grid with an odd point count (an even
/// number of intervals): composite Simpson on interval pairs, 3-point
/// Newton-Cotes for the half steps.
fn cumulative(h: f64, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    assert!(n % 2 == 1, "need an even interval count");
    let mut cum = vec![0.0; n];
    for i in (2..n).step_by(2) {
        cum[i] = cum[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
    }
    for i in (1..n).step_by(2) {
        cum[i] = cum[i - 1] + h / 12.0 * (5.0 * f[i - 1] + 8.0 * f[i] - f[i + 1]);
    }
    cum
}

/// Lossless populations by integrating factor: p1' = b - (a + b) p1 with
/// a = alpha1 f1 and b = alpha2 f2, so
/// p1(t) = e^{-A(t)} [p1(0) + int_0^t b e^{A}] with A = int (a + b).
/// Photons: n_out = int b + int (a - b) p1. Everything is quadrature;
/// no ODE stepping shares code with the implementation under test.
struct QuadOracle {
    times: Vec<f64>,
    p1: Vec<f64>,
    n_out: Vec<f64>,
}

fn quad_oracle(raw: &RawParams, tr: &PulseTrain, t0: f64, t1: f64, steps: usize) -> QuadOracle {
    assert!(steps % 2 == 0);
    let rates = derive(raw).unwrap();
    let times = uniform(t0, t1, steps);
    let h = times[1] - times[0];
    let a: Vec<f64> = times.iter().map(|&t| rates.alpha1 * tr.eval_f1(t)).collect();
    let b: Vec<f64> = times.iter().map(|&t| rates.alpha2 * tr.eval_f2(t)).collect();
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let big_a = cumulative(h, &sum);
    // All terms positive: the 1e30-scale intermediate exponentials cost no
    // cancellation.
    let be_a: Vec<f64> = b.iter().zip(&big_a).map(|(bi, ai)| bi * ai.exp()).collect();
    let int_be_a = cumulative(h, &be_a);
    let p1: Vec<f64> = big_a
        .iter()
        .zip(&int_be_a)
        .map(|(ai, ibe)| (-ai).exp() * (1.0 + ibe))
        .collect();
    let flux_term: Vec<f64> = a
        .iter()
        .zip(&b)
        .zip(&p1)
        .map(|((ai, bi), p)| bi + (ai - bi) * p)
        .collect();
    let n_out = cumulative(h, &flux_term);
    QuadOracle { times, p1, n_out }
}

#[test]
fn reduced_model_matches_quadrature_oracle_on_full_train() {
    let raw = noise_free_raw();
    let tr = train(1.0, 4);
    let t0 = tr.support_start();
    let t1 = tr.support_end() + 1.0;
    let oracle = quad_oracle(&raw, &tr, t0, t1, 64_000);

    let rates = derive(&raw).unwrap();
    let opts = SimOptions { rel_tol: 1e-11, abs_tol: 1e-14 };
    let traj = simulate(&rates, &tr, &oracle.times, &AtomState::ground1(), &opts).unwrap();

    let mut worst_p = 0.0f64;
    let mut worst_n = 0.0f64;
    for i in 0..oracle.times.len() {
        worst_p = worst_p.max((traj.p11[i] - oracle.p1[i]).abs());
        worst_n = worst_n.max((traj.n_out_cum[i] - oracle.n_out[i]).abs());
    }
    assert!(worst_p < 1e-7, "population deviation {worst_p:.3e}");
    assert!(worst_n < 1e-7, "photon-count deviation {worst_n:.3e}");
    // The final count sits just below the pulse number.
    let n_final = *oracle.n_out.last().unwrap();
    assert!(n_final > 7.99 && n_final < 8.0, "final photons {n_final}");
}

/// Joint photon-pair probabilities for fully disjoint pulses by
/// enumerating per-pulse transfer outcomes: in its active state a pulse
/// transfers (and emits) with probability 1 - eps, eps = exp(-alpha I).
fn pair_sum_enumeration(alpha: f64, area: f64, n_pulses: usize) -> f64 {
    let eps = (-alpha * area).exp();
    // (probability, state, photon flags) over branch sequence 1,2,1,2,...
    let mut paths: Vec<(f64, u8, u32)> = vec![(1.0, 1, 0)];
    for pulse in 0..n_pulses {
        let branch = if pulse % 2 == 0 { 1u8 } else { 2u8 };
        let mut next = Vec::with_capacity(paths.len() * 2);
        for &(prob, state, flags) in &paths {
            if state == branch {
                let flipped = 3 - state;
                next.push((prob * (1.0 - eps), flipped, flags | (1 << pulse)));
                next.push((prob * eps, state, flags));
            } else {
                next.push((prob, state, flags));
            }
        }
        paths = next;
    }
    let mut total = 0.0;
    for m in 0..n_pulses {
        for l in (m + 1)..n_pulses {
            for &(prob, _, flags) in &paths {
                if flags & (1 << m) != 0 && flags & (1 << l) != 0 {
                    total += prob;
                }
            }
        }
    }
    total
}

#[test]
fn correlation_sum_rule_against_pair_enumeration() {
    let raw = noise_free_raw();
    let rates = derive(&raw).unwrap();
    for n in [1usize, 2] {
        let tr = train(0.25, n);
        let step = 0.25 / 40.0;
        let t0 = tr.support_start();
        let t1 = tr.support_end();
        let tg = uniform(t0, t1, ((t1 - t0) / step).ceil() as usize);
        let traj =
            simulate(&rates, &tr, &tg, &AtomState::ground1(), &SimOptions::default()).unwrap();
        let tau_max = (n as f64 - 1.0) * 6.0 + 3.0 + 1.5;
        let taus = uniform(0.0, tau_max, (tau_max / step).ceil() as usize);
        let res =
            g2_grid(&rates, &tr, &traj, &taus, raw.kappa, &G2Options::default()).unwrap();

        // Total double-detection probability: trapezoid over the delay.
        let mut total = 0.0;
        for j in 0..taus.len() - 1 {
            total += 0.5 * (res.g2_of_tau[j] + res.g2_of_tau[j + 1]) * (taus[j + 1] - taus[j]);
        }
        let expect = pair_sum_enumeration(rates.alpha1, tr.shape.integral(), 2 * n);
        let rel = (total - expect).abs() / expect;
        assert!(
            rel < 0.01,
            "sum rule off by {rel:.4} for {n}+{n} pulses (got {total:.6}, want {expect:.6})"
        );
    }
}

#[test]
fn correlation_grid_convergence() {
    let raw = noise_free_raw();
    let rates = derive(&raw).unwrap();
    let tr = train(0.5, 2);
    let mut peak_sets: Vec<Vec<(f64, f64)>> = Vec::new();
    for ppf in [40usize, 80] {
        let step = 0.5 / ppf as f64;
        let t0 = tr.support_start();
        let t1 = tr.support_end();
        let tg = uniform(t0, t1, ((t1 - t0) / step).ceil() as usize);
        let traj =
            simulate(&rates, &tr, &tg, &AtomState::ground1(), &SimOptions::default()).unwrap();
        let taus = uniform(0.0, 12.0, (12.0 / step).ceil() as usize);
        let res =
            g2_grid(&rates, &tr, &traj, &taus, raw.kappa, &G2Options::default()).unwrap();
        peak_sets.push(res.peaks(0.05));
    }
    assert_eq!(peak_sets[0].len(), peak_sets[1].len());
    for (coarse, fine) in peak_sets[0].iter().zip(&peak_sets[1]) {
        assert!((coarse.0 - fine.0).abs() < 0.05);
        let change = (coarse.1 - fine.1).abs() / fine.1;
        assert!(change < 5e-3, "peak height changed by {change:.4e} on refinement");
    }
}

#[test]
fn oracle_populations_track_reduced_model() {
    let mut raw = noise_free_raw();
    raw.omega2 = 0.0;
    let rates = derive(&raw).unwrap();
    let tr = train(1.0, 1);
    let grid = uniform(-5.0, 6.5, 500);
    let gens = build_generators(&raw, &rates, 3).unwrap();
    let oracle = evolve(
        &gens,
        &tr,
        &DensityMatrix::ground1_vacuum(3),
        &grid,
        &EvolveOptions::default(),
    )
    .unwrap();
    let traj =
        simulate(&rates, &tr, &grid, &AtomState::ground1(), &SimOptions::default()).unwrap();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        worst = worst.max((oracle.p11[i] - traj.p11[i]).abs());
        worst = worst.max((oracle.p22[i] - traj.p22[i]).abs());
    }
    // Same tolerance class as the flux comparison at G/k = 1/3.
    assert!(worst < 0.10, "population deviation {worst:.3e}");
    assert_abs_diff_eq!(*oracle.trace.last().unwrap(), 1.0, epsilon = 1e-8);
}
