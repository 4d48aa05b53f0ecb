//! Adaptive explicit Runge-Kutta stepping for small first-order systems
//! with time-dependent coefficients.
//!
//! The stepper is a Dormand-Prince 5(4) embedded pair with proportional
//! step control. It lands exactly on every requested output time and on
//! every caller-supplied breakpoint, so steps never straddle an envelope
//! truncation edge.

use thiserror::Error;

use crate::scalar::{Real, StateScalar};

/// Problem description: integration window, output times, breakpoints and
/// error tolerances. The derivative function is passed to [`solve`]
/// separately so one problem can drive several right-hand sides.
#[derive(Clone, Debug)]
pub struct OdeProblem<'a, F: Real> {
    pub dimension: usize,
    pub t_span: (F, F),
    /// Strictly increasing sample times inside `t_span`.
    pub output_grid: &'a [F],
    /// Interior times the stepper must land on exactly.
    pub breakpoints: &'a [F],
    pub rel_tol: F,
    pub abs_tol: F,
    pub max_steps: usize,
}

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_ABS_TOL: f64 = 1e-12;

impl<'a, F: Real> OdeProblem<'a, F> {
    /// Problem with the default tolerances (1e-9 relative, 1e-12 absolute).
    pub fn new(dimension: usize, t_span: (F, F), output_grid: &'a [F]) -> Self {
        Self {
            dimension,
            t_span,
            output_grid,
            breakpoints: &[],
            rel_tol: F::of(DEFAULT_REL_TOL),
            abs_tol: F::of(DEFAULT_ABS_TOL),
            max_steps: 50_000_000,
        }
    }

    pub fn with_breakpoints(mut self, breakpoints: &'a [F]) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: F, abs_tol: F) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }
}

/// States sampled on the requested output grid.
#[derive(Clone, Debug)]
pub struct OdeSolution<F, E> {
    pub times: Vec<F>,
    pub states: Vec<Vec<E>>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl<F, E: Copy> OdeSolution<F, E> {
    /// Samples of one state component across the grid.
    pub fn component(&self, idx: usize) -> Vec<E> {
        self.states.iter().map(|row| row[idx]).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OdeError<F: Real> {
    #[error("invalid problem: {0}")]
    InvalidProblem(&'static str),
    #[error("step size underflow at t = {t} (step {step}); system too stiff for the tolerances")]
    StepSizeUnderflow { t: F, step: F },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: F, max_steps: usize },
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and 4th-order weights.
const E_ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FACTOR_MIN: f64 = 0.2;
const FACTOR_MAX: f64 = 5.0;

/// Integrate `y' = rhs(t, y)` over the problem's span, sampling the state
/// at every output-grid time.
pub fn solve<F, E, R>(
    problem: &OdeProblem<'_, F>,
    mut rhs: R,
    y0: &[E],
) -> Result<OdeSolution<F, E>, OdeError<F>>
where
    F: Real,
    E: StateScalar<F>,
    R: FnMut(F, &[E], &mut [E]),
{
    let (t0, t1) = problem.t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(OdeError::InvalidProblem("t_span must be finite with t1 > t0"));
    }
    if problem.rel_tol <= F::zero() || problem.abs_tol <= F::zero() {
        return Err(OdeError::InvalidProblem("tolerances must be positive"));
    }
    if y0.len() != problem.dimension {
        return Err(OdeError::InvalidProblem("initial state length != dimension"));
    }
    if problem
        .output_grid
        .windows(2)
        .any(|w| !(w[1] > w[0]))
    {
        return Err(OdeError::InvalidProblem("output grid must be strictly increasing"));
    }
    if let (Some(first), Some(last)) = (problem.output_grid.first(), problem.output_grid.last()) {
        if *first < t0 || *last > t1 {
            return Err(OdeError::InvalidProblem("output grid must lie within t_span"));
        }
    }

    // Events: every output time and breakpoint, plus the span end. A time
    // present in both lists is a single event that also records output.
    let mut events: Vec<(F, bool)> = Vec::new();
    for &t in problem.output_grid {
        if t > t0 {
            events.push((t, true));
        }
    }
    for &t in problem.breakpoints {
        if t > t0 && t < t1 {
            events.push((t, false));
        }
    }
    events.push((t1, false));
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite event times"));
    let mut merged: Vec<(F, bool)> = Vec::with_capacity(events.len());
    for (t, rec) in events {
        match merged.last_mut() {
            Some((prev, prev_rec)) if *prev == t => *prev_rec = *prev_rec || rec,
            _ => merged.push((t, rec)),
        }
    }
    let events = merged;

    let dim = problem.dimension;
    let mut y: Vec<E> = y0.to_vec();
    let mut times = Vec::with_capacity(problem.output_grid.len());
    let mut states = Vec::with_capacity(problem.output_grid.len());
    for &t in problem.output_grid.iter().take_while(|&&t| t == t0) {
        times.push(t);
        states.push(y.clone());
    }

    let mut k: Vec<Vec<E>> = (0..7).map(|_| vec![E::zero(); dim]).collect();
    let mut y_stage = vec![E::zero(); dim];
    let mut y_new = vec![E::zero(); dim];

    let (k1, rest) = k.split_first_mut().expect("seven stages");
    rhs(t0, &y, k1);
    let _ = rest;

    let tableau_a: Vec<Vec<F>> = A
        .iter()
        .map(|row| row.iter().map(|&v| F::of(v)).collect())
        .collect();
    let tableau_c: Vec<F> = C.iter().map(|&v| F::of(v)).collect();
    let tableau_e: Vec<F> = E_ERR.iter().map(|&v| F::of(v)).collect();

    let mut t = t0;
    let mut h = initial_step(problem, &mut rhs, &y, &k[0], t0, t1);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut ev_idx = 0usize;

    while t < t1 {
        if accepted + rejected >= problem.max_steps {
            return Err(OdeError::TooManySteps { t, max_steps: problem.max_steps });
        }
        let (target, record) = events[ev_idx];
        let to_event = target - t;
        let clamped = h >= to_event;
        let hstep = if clamped { to_event } else { h };

        // Stages 2..7; stage 7 evaluates at the 5th-order solution (FSAL).
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = tableau_a[s][j];
                    if a != F::zero() {
                        acc = acc + kj[i].scale(a * hstep);
                    }
                }
                y_stage[i] = acc;
            }
            if s == 6 {
                y_new.copy_from_slice(&y_stage);
            }
            let ts = t + tableau_c[s] * hstep;
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            rhs(ts, &y_stage, &mut tail[0]);
        }

        // Scaled RMS of the embedded error estimate.
        let mut err_sq = F::zero();
        for i in 0..dim {
            let mut e = E::zero();
            for (j, kj) in k.iter().enumerate() {
                let w = tableau_e[j];
                if w != F::zero() {
                    e = e + kj[i].scale(w * hstep);
                }
            }
            let scale = problem.abs_tol
                + problem.rel_tol * y[i].magnitude().max(y_new[i].magnitude());
            let r = e.magnitude() / scale;
            err_sq = err_sq + r * r;
        }
        let err = (err_sq / F::of(dim as f64)).sqrt();

        if err.is_finite() && err <= F::one() {
            accepted += 1;
            t = if clamped { target } else { t + hstep };
            std::mem::swap(&mut y, &mut y_new);
            if clamped {
                if record {
                    times.push(t);
                    states.push(y.clone());
                }
                ev_idx += 1;
                // Re-evaluate across the event: the rhs may be
                // discontinuous at a breakpoint.
                if t < t1 {
                    let (k1, _) = k.split_first_mut().expect("seven stages");
                    rhs(t, &y, k1);
                }
            } else {
                k.swap(0, 6);
            }
            let factor = if err == F::zero() {
                F::of(FACTOR_MAX)
            } else {
                (F::of(SAFETY) * err.powf(F::of(-0.2)))
                    .max(F::of(FACTOR_MIN))
                    .min(F::of(FACTOR_MAX))
            };
            h = (hstep * factor).max(min_step(t));
        } else {
            rejected += 1;
            let factor = if err.is_finite() {
                (F::of(SAFETY) * err.powf(F::of(-0.2)))
                    .max(F::of(FACTOR_MIN))
                    .min(F::one())
            } else {
                F::of(FACTOR_MIN)
            };
            h = hstep * factor;
            if h < min_step(t) {
                return Err(OdeError::StepSizeUnderflow { t, step: h });
            }
        }
    }

    Ok(OdeSolution { times, states, steps_accepted: accepted, steps_rejected: rejected })
}

fn min_step<F: Real>(t: F) -> F {
    F::of(16.0) * F::epsilon() * t.abs().max(F::one())
}

/// Standard two-derivative-sample estimate of the starting step.
fn initial_step<F, E, R>(
    problem: &OdeProblem<'_, F>,
    rhs: &mut R,
    y0: &[E],
    f0: &[E],
    t0: F,
    t1: F,
) -> F
where
    F: Real,
    E: StateScalar<F>,
    R: FnMut(F, &[E], &mut [E]),
{
    let dim = problem.dimension.max(1);
    let n = F::of(dim as f64);
    let span = t1 - t0;
    let sc: Vec<F> = y0
        .iter()
        .map(|yi| problem.abs_tol + problem.rel_tol * yi.magnitude())
        .collect();
    let d0 = (y0
        .iter()
        .zip(&sc)
        .map(|(yi, s)| {
            let r = yi.magnitude() / *s;
            r * r
        })
        .fold(F::zero(), |a, b| a + b)
        / n)
        .sqrt();
    let d1 = (f0
        .iter()
        .zip(&sc)
        .map(|(fi, s)| {
            let r = fi.magnitude() / *s;
            r * r
        })
        .fold(F::zero(), |a, b| a + b)
        / n)
        .sqrt();
    let small = F::of(1e-5);
    let mut h0 = if d0 < small || d1 < small {
        F::of(1e-6)
    } else {
        F::of(0.01) * d0 / d1
    };
    h0 = h0.min(span);

    let y1: Vec<E> = y0
        .iter()
        .zip(f0)
        .map(|(yi, fi)| *yi + fi.scale(h0))
        .collect();
    let mut f1 = vec![E::zero(); y0.len()];
    rhs(t0 + h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| {
            let r = (*a - *b).magnitude() / *s;
            r * r
        })
        .fold(F::zero(), |a, b| a + b)
        / n)
        .sqrt()
        / h0;

    let dmax = d1.max(d2);
    let h1 = if dmax <= F::of(1e-15) {
        (h0 * F::of(1e-3)).max(F::of(1e-6))
    } else {
        (F::of(0.01) / dmax).powf(F::of(0.2))
    };
    (F::of(100.0) * h0).min(h1).min(span)
}
