//! Full master-equation oracle on the truncated atom (x) Fock space.
//!
//! No adiabatic elimination of the cavity mode: the two ground states are
//! coupled to the photon ladder by the Raman drives, the cavity leaks at
//! rate kappa, optical pumping acts as Lindblad jumps between the ground
//! states, and the out-of-system decay enters as an anticommutator loss
//! (the trace is not preserved). Used to quantify the reduced model's
//! error and validate the bad-cavity limit.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex;
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::ode::{solve, OdeError, OdeProblem};
use crate::params::{DerivedRates, RawParams};
use crate::pulse::PulseTrain;
use crate::scalar::Real;

type CMat<F> = Array2<Complex<F>>;

/// Operators lifted to the product basis `|s, n>` with `s` one of the two
/// ground states and `n` the cavity photon number up to `n_max`, plus the
/// peak rates that modulate them.
#[derive(Clone, Debug)]
pub struct Generators<F: Real> {
    pub n_max: usize,
    pub dim: usize,
    pub annihilate: CMat<F>,
    pub create: CMat<F>,
    pub photon_number: CMat<F>,
    pub sig11: CMat<F>,
    pub sig22: CMat<F>,
    pub sig12: CMat<F>,
    pub sig21: CMat<F>,
    /// Hermitian drive skeletons `sig21 a^dag + sig12 a` (branch 1) and
    /// `sig12 a^dag + sig21 a` (branch 2).
    pub drive1: CMat<F>,
    pub drive2: CMat<F>,
    pub rates: DerivedRates<F>,
    pub kappa: F,
}

#[derive(Debug, Error, PartialEq)]
pub enum LindbladError<F: Real> {
    #[error("fock cutoff must be at least 1")]
    CutoffTooSmall,
    #[error("invalid density matrix: {0}")]
    InvalidDensity(&'static str),
    #[error("positivity violated at t = {t}: smallest eigenvalue {min_eig}; increase the Fock cutoff or tighten tolerances")]
    PositivityViolation { t: F, min_eig: F },
    #[error(transparent)]
    Ode(#[from] OdeError<F>),
}

fn czero<F: Real>() -> Complex<F> {
    Complex::new(F::zero(), F::zero())
}

fn cre<F: Real>(x: F) -> Complex<F> {
    Complex::new(x, F::zero())
}

/// Build the time-independent operator skeletons for a given Fock cutoff.
pub fn build_generators<F: Real>(
    raw: &RawParams<F>,
    rates: &DerivedRates<F>,
    n_max: usize,
) -> Result<Generators<F>, LindbladError<F>> {
    if n_max < 1 {
        return Err(LindbladError::CutoffTooSmall);
    }
    let levels = n_max + 1;
    let dim = 2 * levels;
    let idx = |s: usize, n: usize| s * levels + n;

    let mut annihilate = CMat::from_elem((dim, dim), czero());
    for s in 0..2 {
        for n in 1..levels {
            annihilate[(idx(s, n - 1), idx(s, n))] = cre(F::of(n as f64).sqrt());
        }
    }
    let create = dagger(&annihilate.view());
    let photon_number = create.dot(&annihilate);

    let mut sig21 = CMat::from_elem((dim, dim), czero());
    for n in 0..levels {
        sig21[(idx(1, n), idx(0, n))] = cre(F::one());
    }
    let sig12 = dagger(&sig21.view());
    let sig11 = sig12.dot(&sig21);
    let sig22 = sig21.dot(&sig12);

    let drive1 = sig21.dot(&create) + sig12.dot(&annihilate);
    let drive2 = sig12.dot(&create) + sig21.dot(&annihilate);

    Ok(Generators {
        n_max,
        dim,
        annihilate,
        create,
        photon_number,
        sig11,
        sig22,
        sig12,
        sig21,
        drive1,
        drive2,
        rates: *rates,
        kappa: raw.kappa,
    })
}

fn dagger<F: Real>(m: &ArrayView2<'_, Complex<F>>) -> CMat<F> {
    let (r, c) = m.dim();
    CMat::from_shape_fn((c, r), |(i, j)| m[(j, i)].conj())
}

/// Density matrix on the truncated product space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<F: Real> {
    pub n_max: usize,
    pub mat: CMat<F>,
}

impl<F: Real> DensityMatrix<F> {
    /// Atom in ground state 1, cavity in vacuum.
    pub fn ground1_vacuum(n_max: usize) -> Self {
        let dim = 2 * (n_max + 1);
        let mut mat = CMat::from_elem((dim, dim), czero());
        mat[(0, 0)] = cre(F::one());
        Self { n_max, mat }
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    pub fn trace(&self) -> F {
        (0..self.mat.nrows()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// Hermiticity within 1e-12, positivity within 1e-10 and trace at most
    /// 1 + 1e-10 (the loss term may shrink it below 1).
    pub fn validate(&self) -> Result<(), LindbladError<F>> {
        if self.mat.nrows() != self.dim() || self.mat.ncols() != self.dim() {
            return Err(LindbladError::InvalidDensity("dimension mismatch"));
        }
        if hermiticity_residual(&self.mat.view()) > F::of(1e-12) {
            return Err(LindbladError::InvalidDensity("not Hermitian"));
        }
        let tr = self.trace();
        if !(tr <= F::one() + F::of(1e-10) && tr >= -F::of(1e-10)) {
            return Err(LindbladError::InvalidDensity("trace out of range"));
        }
        if hermitian_min_eigenvalue(&self.mat.view()) < -F::of(1e-10) {
            return Err(LindbladError::InvalidDensity("not positive semidefinite"));
        }
        Ok(())
    }
}

/// Largest absolute entry of `m - m^dag`.
pub fn hermiticity_residual<F: Real>(m: &ArrayView2<'_, Complex<F>>) -> F {
    let n = m.nrows();
    let mut worst = F::zero();
    for i in 0..n {
        for j in 0..n {
            let d = m[(i, j)] - m[(j, i)].conj();
            worst = worst.max(d.norm());
        }
    }
    worst
}

/// Smallest eigenvalue of a Hermitian matrix, through the real symmetric
/// embedding `[[X, -Y], [Y, X]]` (same spectrum, doubled) and cyclic
/// Jacobi rotations.
pub fn hermitian_min_eigenvalue<F: Real>(m: &ArrayView2<'_, Complex<F>>) -> F {
    let n = m.nrows();
    let mut a = Array2::<F>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            // Symmetrize first so tiny Hermiticity residue cannot feed an
            // asymmetric Jacobi input.
            let h = (m[(i, j)] + m[(j, i)].conj()).scale(F::of(0.5));
            a[(i, j)] = h.re;
            a[(i + n, j + n)] = h.re;
            a[(i, j + n)] = -h.im;
            a[(i + n, j)] = h.im;
        }
    }
    symmetric_eigenvalues(&mut a)
        .into_iter()
        .fold(F::infinity(), F::min)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi. The input is
/// consumed as workspace.
fn symmetric_eigenvalues<F: Real>(a: &mut Array2<F>) -> Vec<F> {
    let n = a.nrows();
    let scale: F = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).fold(F::zero(), F::max))
        .fold(F::zero(), F::max)
        .max(F::one());
    let tol = scale * F::epsilon() * F::of(0.5);
    for _sweep in 0..64 {
        let mut off = F::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (F::of(2.0) * apq);
                let t = {
                    let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                    sign / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

/// Observables of the full model sampled on the output grid.
#[derive(Clone, Debug)]
pub struct OracleOutput<F> {
    pub times: Vec<F>,
    pub mean_photon: Vec<F>,
    /// `kappa <a^dag a>`, photons/us.
    pub flux: Vec<F>,
    pub p11: Vec<F>,
    pub p22: Vec<F>,
    pub trace: Vec<F>,
    /// Photon counter accumulated inside the solver.
    pub n_out_cum: Vec<F>,
    pub diagnostics: OracleDiagnostics<F>,
}

#[derive(Copy, Clone, Debug)]
pub struct OracleDiagnostics<F> {
    pub max_hermiticity_residual: F,
    pub min_eigenvalue: F,
}

impl<F: Real> OracleOutput<F> {
    pub fn total_photons(&self) -> F {
        self.n_out_cum.last().copied().unwrap_or_else(F::zero)
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct EvolveOptions<F> {
    pub rel_tol: F,
    pub abs_tol: F,
    /// Abort when the smallest eigenvalue drops below `-positivity_tol`.
    pub positivity_tol: F,
}

impl<F: Real> Default for EvolveOptions<F> {
    fn default() -> Self {
        Self { rel_tol: F::of(1e-10), abs_tol: F::of(1e-13), positivity_tol: F::of(1e-10) }
    }
}

/// Integrate the master equation over `grid` and record observables at
/// every grid time.
pub fn evolve<F: Real>(
    gens: &Generators<F>,
    train: &PulseTrain<F>,
    rho0: &DensityMatrix<F>,
    grid: &[F],
    opts: &EvolveOptions<F>,
) -> Result<OracleOutput<F>, LindbladError<F>> {
    if rho0.dim() != gens.dim {
        return Err(LindbladError::InvalidDensity("cutoff mismatch with generators"));
    }
    rho0.validate()?;
    let dim = gens.dim;
    let dd = dim * dim;
    let t0 = grid[0];
    let t1 = *grid.last().expect("nonempty grid");
    let breakpoints = train.breakpoints();
    let problem = OdeProblem::new(dd + 1, (t0, t1), grid)
        .with_breakpoints(&breakpoints)
        .with_tolerances(opts.rel_tol, opts.abs_tol);

    let half = F::of(0.5);
    let r = &gens.rates;
    let rhs = |t: F, y: &[Complex<F>], dy: &mut [Complex<F>]| {
        let rho = ArrayView2::from_shape((dim, dim), &y[..dd]).expect("state shape");
        let f1 = train.eval_f1(t);
        let f2 = train.eval_f2(t);

        // K = i H + A with A the full anticommutator half-rate:
        // A = kappa/2 N + (pump+out)/2 f1 sig11 + (pump+out)/2 f2 sig22.
        // Then drho = -(K rho + rho K^dag) + jump terms.
        let g1 = r.g1_eff * f1.sqrt();
        let g2 = r.g2_eff * f2.sqrt();
        let a1 = half * (r.gamma_pump1 + r.gamma_out1) * f1;
        let a2 = half * (r.gamma_pump2 + r.gamma_out2) * f2;
        let hk = half * gens.kappa;
        let mut k_op = CMat::from_elem((dim, dim), czero());
        k_op.zip_mut_with(&gens.drive1, |k, d| *k = *k + Complex::new(F::zero(), g1) * d);
        k_op.zip_mut_with(&gens.drive2, |k, d| *k = *k + Complex::new(F::zero(), g2) * d);
        let mut damp = CMat::from_elem((dim, dim), czero());
        damp.zip_mut_with(&gens.photon_number, |x, n| *x = *x + n.scale(hk));
        damp.zip_mut_with(&gens.sig11, |x, s| *x = *x + s.scale(a1));
        damp.zip_mut_with(&gens.sig22, |x, s| *x = *x + s.scale(a2));
        let k_dag = {
            let mut kd = damp.clone();
            kd.zip_mut_with(&k_op, |d, k| *d = *d - *k);
            kd
        };
        k_op.zip_mut_with(&damp, |k, d| *k = *k + *d);

        let mut drho = -(k_op.dot(&rho) + rho.dot(&k_dag));
        let jump_cavity = gens.annihilate.dot(&rho).dot(&gens.create);
        drho.zip_mut_with(&jump_cavity, |d, j| *d = *d + j.scale(gens.kappa));
        if r.gamma_pump1 != F::zero() && f1 != F::zero() {
            let j1 = gens.sig21.dot(&rho).dot(&gens.sig12);
            drho.zip_mut_with(&j1, |d, j| *d = *d + j.scale(r.gamma_pump1 * f1));
        }
        if r.gamma_pump2 != F::zero() && f2 != F::zero() {
            let j2 = gens.sig12.dot(&rho).dot(&gens.sig21);
            drho.zip_mut_with(&j2, |d, j| *d = *d + j.scale(r.gamma_pump2 * f2));
        }

        dy[..dd].copy_from_slice(drho.as_slice().expect("contiguous"));
        // Photon flux integrates kappa <a^dag a>; N is diagonal.
        let mut mean = F::zero();
        for n in 0..dim {
            mean = mean + gens.photon_number[(n, n)].re * rho[(n, n)].re;
        }
        dy[dd] = cre(gens.kappa * mean);
    };

    let mut y0 = vec![czero::<F>(); dd + 1];
    y0[..dd].copy_from_slice(rho0.mat.as_slice().expect("contiguous"));
    let sol = solve(&problem, rhs, &y0)?;

    let npts = sol.times.len();
    let mut out = OracleOutput {
        times: Vec::with_capacity(npts),
        mean_photon: Vec::with_capacity(npts),
        flux: Vec::with_capacity(npts),
        p11: Vec::with_capacity(npts),
        p22: Vec::with_capacity(npts),
        trace: Vec::with_capacity(npts),
        n_out_cum: Vec::with_capacity(npts),
        diagnostics: OracleDiagnostics {
            max_hermiticity_residual: F::zero(),
            min_eigenvalue: F::infinity(),
        },
    };
    let levels = gens.n_max + 1;
    for (t, y) in sol.times.iter().zip(&sol.states) {
        let rho = ArrayView2::from_shape((dim, dim), &y[..dd]).expect("state shape");
        let mut mean = F::zero();
        let mut p11 = F::zero();
        let mut p22 = F::zero();
        let mut tr = F::zero();
        for i in 0..dim {
            let d = rho[(i, i)].re;
            tr = tr + d;
            mean = mean + gens.photon_number[(i, i)].re * d;
            if i < levels {
                p11 = p11 + d;
            } else {
                p22 = p22 + d;
            }
        }
        let herm = hermiticity_residual(&rho);
        let min_eig = hermitian_min_eigenvalue(&rho);
        if min_eig < -opts.positivity_tol {
            return Err(LindbladError::PositivityViolation { t: *t, min_eig });
        }
        let diag = &mut out.diagnostics;
        diag.max_hermiticity_residual = diag.max_hermiticity_residual.max(herm);
        diag.min_eigenvalue = diag.min_eigenvalue.min(min_eig);
        out.times.push(*t);
        out.mean_photon.push(mean);
        out.flux.push(gens.kappa * mean);
        out.p11.push(p11);
        out.p22.push(p22);
        out.trace.push(tr);
        out.n_out_cum.push(y[dd].re);
    }
    Ok(out)
}

/// Flux-curve agreement between the reduced model and the oracle on a
/// shared grid.
#[derive(Copy, Clone, Debug)]
pub struct FluxComparison<F> {
    /// Max pointwise deviation over the peak flux.
    pub max_rel_dev: F,
    /// L2-norm deviation over the L2 norm of the oracle flux.
    pub l2_rel_dev: F,
    pub photons_adiabatic: F,
    pub photons_oracle: F,
    /// Relative deviation of the photon totals.
    pub photons_rel_dev: F,
}

/// Compare a reduced-model trajectory with an oracle run on the same grid.
pub fn compare_flux<F: Real>(traj: &Trajectory<F>, oracle: &OracleOutput<F>) -> FluxComparison<F> {
    assert_eq!(traj.times.len(), oracle.times.len(), "grids must match");
    let peak = oracle.flux.iter().cloned().fold(F::zero(), F::max);
    let mut worst = F::zero();
    let mut dev_sq = F::zero();
    let mut ref_sq = F::zero();
    for i in 0..traj.times.len() {
        let d = traj.flux[i] - oracle.flux[i];
        worst = worst.max(d.abs());
        let w = trap_weight(&traj.times, i);
        dev_sq = dev_sq + w * d * d;
        ref_sq = ref_sq + w * oracle.flux[i] * oracle.flux[i];
    }
    let na = traj.total_photons();
    let no = oracle.total_photons();
    FluxComparison {
        max_rel_dev: if peak > F::zero() { worst / peak } else { F::zero() },
        l2_rel_dev: if ref_sq > F::zero() { (dev_sq / ref_sq).sqrt() } else { F::zero() },
        photons_adiabatic: na,
        photons_oracle: no,
        photons_rel_dev: if no != F::zero() { ((na - no) / no).abs() } else { na.abs() },
    }
}

fn trap_weight<F: Real>(xs: &[F], i: usize) -> F {
    let half = F::of(0.5);
    let left = if i > 0 { xs[i] - xs[i - 1] } else { F::zero() };
    let right = if i + 1 < xs.len() { xs[i + 1] - xs[i] } else { F::zero() };
    half * (left + right)
}

/// Flux difference between consecutive Fock cutoffs.
#[derive(Clone, Debug)]
pub struct FockConvergence<F> {
    /// `(n_max_low, n_max_high, max abs flux diff, same over peak flux)`.
    pub pairs: Vec<(usize, usize, F, F)>,
}

/// Run the oracle at each cutoff in `n_max_list` (ascending) and report
/// the maximum pairwise flux difference.
pub fn fock_convergence<F: Real>(
    raw: &RawParams<F>,
    rates: &DerivedRates<F>,
    train: &PulseTrain<F>,
    n_max_list: &[usize],
    grid: &[F],
    opts: &EvolveOptions<F>,
) -> Result<FockConvergence<F>, LindbladError<F>> {
    let mut runs: Vec<(usize, Vec<F>)> = Vec::with_capacity(n_max_list.len());
    for &n_max in n_max_list {
        let gens = build_generators(raw, rates, n_max)?;
        let rho0 = DensityMatrix::ground1_vacuum(n_max);
        let out = evolve(&gens, train, &rho0, grid, opts)?;
        runs.push((n_max, out.flux));
    }
    let mut pairs = Vec::new();
    for i in 0..runs.len() {
        for j in (i + 1)..runs.len() {
            let peak = runs[j].1.iter().cloned().fold(F::zero(), F::max);
            let mut worst = F::zero();
            for (a, b) in runs[i].1.iter().zip(&runs[j].1) {
                worst = worst.max((*a - *b).abs());
            }
            let rel = if peak > F::zero() { worst / peak } else { worst };
            pairs.push((runs[i].0, runs[j].0, worst, rel));
        }
    }
    Ok(FockConvergence { pairs })
}

/// Magnitudes of the Stark shifts dropped from the Hamiltonian, for
/// comparison against the cavity linewidth.
#[derive(Copy, Clone, Debug)]
pub struct StarkShiftReport<F> {
    /// Peak `omega_i^2 / delta_i` per branch.
    pub pump_shift1: F,
    pub pump_shift2: F,
    /// `g_i^2 / delta_i` per branch.
    pub cavity_shift1: F,
    pub cavity_shift2: F,
    pub kappa: F,
}

impl<F: Real> StarkShiftReport<F> {
    pub fn worst_ratio(&self) -> F {
        let m = self
            .pump_shift1
            .max(self.pump_shift2)
            .max(self.cavity_shift1)
            .max(self.cavity_shift2);
        m / self.kappa
    }
}

pub fn stark_shift_report<F: Real>(raw: &RawParams<F>) -> StarkShiftReport<F> {
    StarkShiftReport {
        pump_shift1: raw.omega1 * raw.omega1 / raw.delta1,
        pump_shift2: raw.omega2 * raw.omega2 / raw.delta2,
        cavity_shift1: raw.g1 * raw.g1 / raw.delta1,
        cavity_shift2: raw.g2 * raw.g2 / raw.delta2,
        kappa: raw.kappa,
    }
}
