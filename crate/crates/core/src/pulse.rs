//! Dimensionless pump envelopes: two trains of identical subpulses, the
//! second delayed with respect to the first.
//!
//! Each subpulse peaks at exactly 1 so the configured Rabi frequencies are
//! peak values; every rate in the dynamics is modulated by these envelopes.

use thiserror::Error;

use crate::quad::adaptive_simpson;
use crate::scalar::Real;

/// Subpulse profile family.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    /// `exp(-4 ln2 (t/T)^2)`, truncated beyond `|t| > 5 T`.
    Gaussian,
    /// `cos^2(pi t / (2 T))` on `|t| <= T`, zero outside.
    SineSquared,
    /// Rectangle of height 1 on `|t| <= T/2`.
    FlatTop,
}

/// One subpulse envelope. `fwhm` is the full width at half maximum of the
/// envelope itself (the quantity that multiplies all rates), not of its
/// square root.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SubpulseShape<F> {
    pub kind: ShapeKind,
    pub fwhm: F,
}

/// Gaussian envelopes are cut to zero beyond this many widths from center;
/// the discarded tail is below 1e-30.
const GAUSSIAN_CUTOFF_WIDTHS: f64 = 5.0;

impl<F: Real> SubpulseShape<F> {
    pub fn new(kind: ShapeKind, fwhm: F) -> Result<Self, TrainError> {
        if !fwhm.is_finite() || fwhm < F::zero() {
            return Err(TrainError::BadDuration);
        }
        Ok(Self { kind, fwhm })
    }

    /// Envelope value at offset `dt` from the subpulse center.
    pub fn eval(&self, dt: F) -> F {
        let t = self.fwhm;
        if t == F::zero() {
            return F::zero();
        }
        let x = dt / t;
        match self.kind {
            ShapeKind::Gaussian => {
                if x.abs() > F::of(GAUSSIAN_CUTOFF_WIDTHS) {
                    F::zero()
                } else {
                    (-F::of(4.0 * std::f64::consts::LN_2) * x * x).exp()
                }
            }
            ShapeKind::SineSquared => {
                if x.abs() > F::one() {
                    F::zero()
                } else {
                    let c = (F::FRAC_PI_2() * x).cos();
                    c * c
                }
            }
            ShapeKind::FlatTop => {
                if x.abs() > F::of(0.5) {
                    F::zero()
                } else {
                    F::one()
                }
            }
        }
    }

    /// Half-width of the support (beyond which `eval` is exactly zero).
    pub fn support_radius(&self) -> F {
        match self.kind {
            ShapeKind::Gaussian => F::of(GAUSSIAN_CUTOFF_WIDTHS) * self.fwhm,
            ShapeKind::SineSquared => self.fwhm,
            ShapeKind::FlatTop => F::of(0.5) * self.fwhm,
        }
    }

    /// Closed-form area of one subpulse: `T sqrt(pi / (4 ln2))` for the
    /// gaussian, `T` for sine-squared and flat-top.
    pub fn integral(&self) -> F {
        match self.kind {
            ShapeKind::Gaussian => {
                self.fwhm * (F::PI() / F::of(4.0 * std::f64::consts::LN_2)).sqrt()
            }
            ShapeKind::SineSquared | ShapeKind::FlatTop => self.fwhm,
        }
    }

    /// Running integral of the envelope from the left support edge up to
    /// offset `dt`, by adaptive quadrature.
    pub fn integral_to(&self, dt: F) -> F {
        let r = self.support_radius();
        if self.fwhm == F::zero() || dt <= -r {
            return F::zero();
        }
        let hi = dt.min(r);
        let tol = (self.integral() + F::of(1e-30)) * F::of(1e-13);
        adaptive_simpson(&|x| self.eval(x), -r, hi, tol, 48)
    }
}

/// Two pulse trains of `n_subpulses` identical subpulses each: train 1 has
/// centers `t_first + l * period`, train 2 is train 1 delayed by `tau_delay`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PulseTrain<F> {
    pub shape: SubpulseShape<F>,
    pub n_subpulses: usize,
    pub period: F,
    pub tau_delay: F,
    pub t_first: F,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainError {
    #[error("subpulse duration must be finite and nonnegative")]
    BadDuration,
    #[error("train timing must be finite")]
    NonFinite,
    #[error("subpulses overlap: require period > 2 T, tau_delay > T and period - tau_delay > T")]
    Overlapping,
}

impl<F: Real> PulseTrain<F> {
    pub fn new(
        shape: SubpulseShape<F>,
        n_subpulses: usize,
        period: F,
        tau_delay: F,
        t_first: F,
    ) -> Result<Self, TrainError> {
        if !(period.is_finite() && tau_delay.is_finite() && t_first.is_finite()) {
            return Err(TrainError::NonFinite);
        }
        let train = Self { shape, n_subpulses, period, tau_delay, t_first };
        train.check_separation()?;
        Ok(train)
    }

    /// Well-separated condition: alternating subpulses must not collide.
    fn check_separation(&self) -> Result<(), TrainError> {
        if self.n_subpulses == 0 {
            return Ok(());
        }
        let t = self.shape.fwhm;
        let two = F::of(2.0);
        if self.period > two * t && self.tau_delay > t && self.period - self.tau_delay > t {
            Ok(())
        } else {
            Err(TrainError::Overlapping)
        }
    }

    /// Center of train-1 subpulse `l` (0-based).
    pub fn center1(&self, l: usize) -> F {
        self.t_first + F::of(l as f64) * self.period
    }

    /// Center of train-2 subpulse `l` (0-based).
    pub fn center2(&self, l: usize) -> F {
        self.center1(l) + self.tau_delay
    }

    /// Train-1 envelope `f_1(t)`, the sum of all subpulses.
    pub fn eval_f1(&self, t: F) -> F {
        self.eval_train(t, F::zero())
    }

    /// Train-2 envelope `f_2(t)`.
    pub fn eval_f2(&self, t: F) -> F {
        self.eval_train(t, self.tau_delay)
    }

    fn eval_train(&self, t: F, offset: F) -> F {
        let n = self.n_subpulses;
        if n == 0 {
            return F::zero();
        }
        let r = self.shape.support_radius();
        let rel = t - self.t_first - offset;
        // Only subpulses whose support contains t contribute; the spacing is
        // uniform so the index window is direct arithmetic.
        let (lo, hi) = if n == 1 {
            (0usize, 0usize)
        } else {
            let lo = ((rel - r) / self.period).ceil();
            let hi = ((rel + r) / self.period).floor();
            if hi < F::zero() || lo > F::of((n - 1) as f64) {
                return F::zero();
            }
            let lo = lo.max(F::zero()).to_usize().unwrap_or(0);
            let hi = hi.min(F::of((n - 1) as f64)).to_usize().unwrap_or(n - 1);
            (lo, hi)
        };
        let mut acc = F::zero();
        for l in lo..=hi {
            acc = acc + self.shape.eval(rel - F::of(l as f64) * self.period);
        }
        acc
    }

    /// Times where an envelope support starts or ends, sorted ascending.
    /// ODE steps must not straddle these.
    pub fn breakpoints(&self) -> Vec<F> {
        let r = self.shape.support_radius();
        let mut pts = Vec::with_capacity(4 * self.n_subpulses);
        for l in 0..self.n_subpulses {
            for c in [self.center1(l), self.center2(l)] {
                pts.push(c - r);
                pts.push(c + r);
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        pts
    }

    /// Earliest time at which either envelope can be nonzero.
    pub fn support_start(&self) -> F {
        self.t_first - self.shape.support_radius()
    }

    /// Latest time at which either envelope can be nonzero.
    pub fn support_end(&self) -> F {
        if self.n_subpulses == 0 {
            return self.t_first + self.shape.support_radius();
        }
        self.center2(self.n_subpulses - 1) + self.shape.support_radius()
    }
}
