//! Brute-force oracle: truncated Fock-space integration of the Lindblad
//! master equation and phase-space extraction from the density matrix.
//!
//! Everything here is deliberately independent of the grid-evolution path:
//! the Wigner function comes from the position-space integral
//!
//! ```text
//! W(p, q) = (2 pi hbar)^-1  integral ds  exp(-i p s / hbar) <q + s/2| rho |q - s/2>
//! ```
//!
//! with Hermite-function wavefunctions, so agreement with the transform
//! machinery is a genuine cross-check rather than a tautology.

use std::io::{Read, Write};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, OracleError};
use crate::grid::{GridDescriptor, PhaseGrid, SpaceTag};
use crate::hamiltonian::SmoothHamiltonian;
use crate::phase::PhaseVector;
use crate::scalar::{lit, Real, C};
use crate::states::StateSpec;
use crate::system::OpenSystem;
use crate::transform::wigner_to_chord;

/// Default Fock-space truncation.
pub const DEFAULT_TRUNCATION: usize = 80;
/// Occupation allowed in the top ten levels during integration.
pub const TRUNCATION_GUARD: f64 = 1e-8;

/// Dense complex matrix in the Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockMat<T> {
    dim: usize,
    a: Vec<C<T>>,
}

impl<T: Real> FockMat<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, a: vec![C::new(T::zero(), T::zero()); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C::new(T::one(), T::zero());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C<T>] {
        &self.a
    }

    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        for (o, r) in out.a.iter_mut().zip(&rhs.a) {
            *o += *r;
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        for (o, r) in out.a.iter_mut().zip(&rhs.a) {
            *o -= *r;
        }
        out
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut out = self.clone();
        for o in out.a.iter_mut() {
            *o = *o * s;
        }
        out
    }

    pub fn scale_re(&self, s: T) -> Self {
        self.scale(C::new(s, T::zero()))
    }

    /// Parallel row-blocked matrix product.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        out.a.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for k in 0..n {
                let aik = self.a[i * n + k];
                if aik.re == T::zero() && aik.im == T::zero() {
                    continue;
                }
                let brow = &rhs.a[k * n..(k + 1) * n];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += aik * *b;
                }
            }
        });
        out
    }

    pub fn trace(&self) -> C<T> {
        let mut s = C::new(T::zero(), T::zero());
        for i in 0..self.dim {
            s += self[(i, i)];
        }
        s
    }

    pub fn max_abs(&self) -> T {
        self.a.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    pub fn hermiticity_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for FockMat<T> {
    type Output = C<T>;
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.a[i * self.dim + j]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for FockMat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.a[i * self.dim + j]
    }
}

/// Ladder and quadrature operators at truncation `dim`.
///
/// `q = sqrt(hbar/2)(a + a+)`, `p = -i sqrt(hbar/2)(a - a+)`, so that
/// `[q, p] = i hbar` away from the truncation edge and
/// `a = (q + i p)/sqrt(2 hbar)`.
#[derive(Debug, Clone)]
pub struct OperatorSet<T> {
    pub dim: usize,
    pub hbar: T,
    pub a: FockMat<T>,
    pub adag: FockMat<T>,
    pub qop: FockMat<T>,
    pub pop: FockMat<T>,
}

impl<T: Real> OperatorSet<T> {
    pub fn new(dim: usize, hbar: T) -> Self {
        let mut a = FockMat::zeros(dim);
        for n in 1..dim {
            a[(n - 1, n)] = C::new(lit::<T>(n as f64).sqrt(), T::zero());
        }
        let adag = a.dagger();
        let s = (hbar * lit(0.5)).sqrt();
        let qop = a.add(&adag).scale_re(s);
        let pop = a.sub(&adag).scale(C::new(T::zero(), -s));
        Self { dim, hbar, a, adag, qop, pop }
    }

    /// `[q, p] - i hbar` restricted to the interior block, max-abs.
    pub fn commutator_defect(&self) -> T {
        let comm = self.qop.matmul(&self.pop).sub(&self.pop.matmul(&self.qop));
        let mut worst = T::zero();
        for i in 0..self.dim - 1 {
            for j in 0..self.dim - 1 {
                let expect = if i == j {
                    C::new(T::zero(), self.hbar)
                } else {
                    C::new(T::zero(), T::zero())
                };
                worst = worst.max((comm[(i, j)] - expect).norm());
            }
        }
        worst
    }

    /// Linear channel operator `L = (l' + i l'').(p, q)`.
    pub fn channel(&self, lp: &PhaseVector<T>, lpp: &PhaseVector<T>) -> FockMat<T> {
        let cp = C::new(lp.p[0], lpp.p[0]);
        let cq = C::new(lp.q[0], lpp.q[0]);
        self.pop.scale(cp).add(&self.qop.scale(cq))
    }

    /// Weyl-ordered polynomial Hamiltonian operator.
    pub fn hamiltonian(&self, h: &SmoothHamiltonian<T>) -> Result<FockMat<T>, OracleError> {
        match h {
            SmoothHamiltonian::Quadratic { b_matrix, linear } => {
                if b_matrix.dim() != 2 {
                    return Err(OracleError::UnsupportedModes { modes: b_matrix.dim() / 2 });
                }
                let half = lit::<T>(0.5);
                let pp = self.pop.matmul(&self.pop).scale_re(b_matrix[(0, 0)] * half);
                let qq = self.qop.matmul(&self.qop).scale_re(b_matrix[(1, 1)] * half);
                let pq = self
                    .pop
                    .matmul(&self.qop)
                    .add(&self.qop.matmul(&self.pop))
                    .scale_re(b_matrix[(0, 1)] * half);
                let lin = self
                    .pop
                    .scale_re(linear.p[0])
                    .add(&self.qop.scale_re(linear.q[0]));
                Ok(pp.add(&qq).add(&pq).add(&lin))
            }
            SmoothHamiltonian::Quartic { kappa } => {
                let half = lit::<T>(0.5);
                let p2 = self.pop.matmul(&self.pop).scale_re(half);
                let q2 = self.qop.matmul(&self.qop);
                let q4 = q2.matmul(&q2).scale_re(lit(0.25));
                Ok(p2.add(&q4).add(&q2.scale_re(*kappa)))
            }
            SmoothHamiltonian::Pendulum => Err(OracleError::NonPolynomial),
        }
    }
}

/// Truncated Fock-space density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    mat: FockMat<T>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn from_mat(mat: FockMat<T>) -> Self {
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn mat(&self) -> &FockMat<T> {
        &self.mat
    }

    /// Pure state from an amplitude vector (normalized internally).
    pub fn pure(psi: &[C<T>]) -> Self {
        let norm_sq = psi.iter().fold(T::zero(), |s, c| s + c.norm_sqr());
        let dim = psi.len();
        let mut mat = FockMat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                mat[(i, j)] = psi[i] * psi[j].conj() / C::new(norm_sq, T::zero());
            }
        }
        Self { mat }
    }

    /// Coherent-state amplitudes for a phase-space centre.
    fn coherent_amplitudes(centre: &PhaseVector<T>, hbar: T, dim: usize) -> Vec<C<T>> {
        let s = (lit::<T>(2.0) * hbar).sqrt();
        let alpha = C::new(centre.q[0] / s, centre.p[0] / s);
        let mut c = Vec::with_capacity(dim);
        let c0 = (-alpha.norm_sqr() * lit::<T>(0.5)).exp();
        c.push(C::new(c0, T::zero()));
        for n in 1..dim {
            let prev = c[n - 1];
            c.push(prev * alpha / C::new(lit::<T>(n as f64).sqrt(), T::zero()));
        }
        c
    }

    /// Build the oracle state for a state spec (single mode).
    pub fn from_state_spec(spec: &StateSpec<T>, hbar: T, dim: usize) -> Result<Self, OracleError> {
        match spec {
            StateSpec::Coherent { centre } => {
                if centre.modes() != 1 {
                    return Err(OracleError::UnsupportedModes { modes: centre.modes() });
                }
                Ok(Self::pure(&Self::coherent_amplitudes(centre, hbar, dim)))
            }
            StateSpec::Cat { centre_a, centre_b, phase } => {
                if centre_a.modes() != 1 {
                    return Err(OracleError::UnsupportedModes { modes: centre_a.modes() });
                }
                let ca = Self::coherent_amplitudes(centre_a, hbar, dim);
                let cb = Self::coherent_amplitudes(centre_b, hbar, dim);
                let ph = C::from_polar(T::one(), *phase);
                let psi: Vec<C<T>> = ca.iter().zip(&cb).map(|(x, y)| *x + ph * *y).collect();
                Ok(Self::pure(&psi))
            }
            StateSpec::Fock { n } => {
                if *n >= dim {
                    return Err(OracleError::BadDensity(format!(
                        "Fock index {n} at or above truncation {dim}"
                    )));
                }
                let mut psi = vec![C::new(T::zero(), T::zero()); dim];
                psi[*n] = C::new(T::one(), T::zero());
                Ok(Self::pure(&psi))
            }
        }
    }

    pub fn trace(&self) -> C<T> {
        self.mat.trace()
    }

    pub fn purity(&self) -> T {
        self.mat.matmul(&self.mat).trace().re
    }

    /// Population of the top `levels` Fock levels.
    pub fn top_occupation(&self, levels: usize) -> T {
        let d = self.dim();
        let mut s = T::zero();
        for n in d.saturating_sub(levels)..d {
            s += self.mat[(n, n)].re;
        }
        s
    }

    /// First moments `(<p>, <q>)`.
    pub fn centroid(&self, ops: &OperatorSet<T>) -> PhaseVector<T> {
        let p = self.mat.matmul(&ops.pop).trace().re;
        let q = self.mat.matmul(&ops.qop).trace().re;
        PhaseVector::pq(p, q)
    }

    /// Validate hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<(), OracleError> {
        let herm = self.mat.hermiticity_defect().to_f64().unwrap_or(f64::NAN);
        if !(herm <= 1e-12) {
            return Err(OracleError::BadDensity(format!("hermiticity defect {herm:.3e}")));
        }
        let tr = self.trace();
        let tr_dev = (tr - Complex::new(T::one(), T::zero()))
            .norm()
            .to_f64()
            .unwrap_or(f64::NAN);
        if !(tr_dev <= 1e-10) {
            return Err(OracleError::BadDensity(format!("trace deviates by {tr_dev:.3e}")));
        }
        if !self.is_positive_within(lit(1e-8)) {
            return Err(OracleError::BadDensity("negative eigenvalue beyond -1e-8".into()));
        }
        Ok(())
    }

    /// True when `rho + tol I` admits a Cholesky factorization, i.e. all
    /// eigenvalues exceed `-tol`.
    pub fn is_positive_within(&self, tol: T) -> bool {
        let n = self.dim();
        let mut l = vec![C::new(T::zero(), T::zero()); n * n];
        for k in 0..n {
            let mut d = self.mat[(k, k)].re + tol;
            for j in 0..k {
                d -= l[k * n + j].norm_sqr();
            }
            if d < T::zero() {
                return false;
            }
            let dk = d.sqrt();
            l[k * n + k] = C::new(dk, T::zero());
            if dk == T::zero() {
                continue;
            }
            for i in k + 1..n {
                let mut s = self.mat[(i, k)];
                for j in 0..k {
                    s -= l[i * n + j] * l[k * n + j].conj();
                }
                l[i * n + k] = s / C::new(dk, T::zero());
            }
        }
        true
    }
}

/// Prepared operators for repeated right-hand-side evaluation.
pub struct Generator<T> {
    pub ops: OperatorSet<T>,
    h: FockMat<T>,
    channels: Vec<(FockMat<T>, FockMat<T>, FockMat<T>)>, // (L, L+, L+L)
    hbar: T,
}

impl<T: Real> Generator<T> {
    pub fn new(system: &OpenSystem<T>, dim: usize) -> Result<Self, OracleError> {
        if system.modes() != 1 {
            return Err(OracleError::UnsupportedModes { modes: system.modes() });
        }
        let ops = OperatorSet::new(dim, system.hbar);
        let h = ops.hamiltonian(&system.hamiltonian)?;
        let channels = system
            .channels
            .iter()
            .map(|c| {
                let l = ops.channel(&c.lp, &c.lpp);
                let ld = l.dagger();
                let ldl = ld.matmul(&l);
                (l, ld, ldl)
            })
            .collect();
        Ok(Self { ops, h, channels, hbar: system.hbar })
    }

    /// The Lindblad generator applied to `rho`.
    pub fn apply(&self, rho: &FockMat<T>) -> FockMat<T> {
        let half = lit::<T>(0.5);
        let inv_hbar = T::one() / self.hbar;
        // -(i/hbar) [H, rho]
        let comm = self.h.matmul(rho).sub(&rho.matmul(&self.h));
        let mut out = comm.scale(C::new(T::zero(), -inv_hbar));
        for (l, ld, ldl) in &self.channels {
            let sandwich = l.matmul(rho).matmul(ld);
            let anti = ldl.matmul(rho).add(&rho.matmul(ldl)).scale_re(half);
            out = out.add(&sandwich.sub(&anti).scale_re(inv_hbar));
        }
        out
    }
}

/// One application of the Lindblad generator.
pub fn lindblad_rhs<T: Real>(
    system: &OpenSystem<T>,
    rho: &DensityMatrix<T>,
) -> Result<DensityMatrix<T>, OracleError> {
    let gen = Generator::new(system, rho.dim())?;
    Ok(DensityMatrix::from_mat(gen.apply(rho.mat())))
}

/// RK4 integration of the master equation up to `t`, with the truncation
/// guard checked at every step.
pub fn integrate_master<T: Real>(
    system: &OpenSystem<T>,
    rho0: &DensityMatrix<T>,
    t: T,
    dt: T,
) -> Result<DensityMatrix<T>, OracleError> {
    let snaps = integrate_master_path(system, rho0, &[t], dt)?;
    Ok(snaps.into_iter().next().expect("one snapshot requested"))
}

/// Integrate once, capturing snapshots at the given increasing times.
pub fn integrate_master_path<T: Real>(
    system: &OpenSystem<T>,
    rho0: &DensityMatrix<T>,
    times: &[T],
    dt: T,
) -> Result<Vec<DensityMatrix<T>>, OracleError> {
    assert!(dt > T::zero());
    let gen = Generator::new(system, rho0.dim())?;
    let guard = lit::<T>(TRUNCATION_GUARD);
    let half = lit::<T>(0.5);
    let sixth = lit::<T>(1.0 / 6.0);

    let mut out = Vec::with_capacity(times.len());
    let mut rho = rho0.mat().clone();
    let mut t_now = T::zero();
    for &target in times {
        if target < t_now {
            return Err(OracleError::Inconsistent("times must be increasing".into()));
        }
        let span = target - t_now;
        let steps = (span / dt).ceil().to_usize().unwrap_or(0);
        if steps > 0 {
            let h = span / lit(steps as f64);
            for _ in 0..steps {
                let k1 = gen.apply(&rho);
                let k2 = gen.apply(&rho.add(&k1.scale_re(h * half)));
                let k3 = gen.apply(&rho.add(&k2.scale_re(h * half)));
                let k4 = gen.apply(&rho.add(&k3.scale_re(h)));
                let incr = k1
                    .add(&k2.scale_re(lit(2.0)))
                    .add(&k3.scale_re(lit(2.0)))
                    .add(&k4)
                    .scale_re(h * sixth);
                rho = rho.add(&incr);
                t_now += h;
                let occ = DensityMatrix::from_mat(rho.clone()).top_occupation(10);
                if !(occ < guard) {
                    return Err(OracleError::TruncationLeak {
                        occupation: occ.to_f64().unwrap_or(f64::NAN),
                        guard: TRUNCATION_GUARD,
                        t: t_now.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        t_now = target;
        out.push(DensityMatrix::from_mat(rho.clone()));
    }
    Ok(out)
}

/// Normalized Hermite functions `u_n(x)` for `n < dim` at one position,
/// including the `hbar` scaling: `u_0 = (pi hbar)^{-1/4} exp(-x^2 / 2 hbar)`.
fn hermite_functions<T: Real>(x: T, hbar: T, dim: usize, out: &mut [T]) {
    let zeta = x / hbar.sqrt();
    let u0 = (T::PI() * hbar).powf(lit(-0.25)) * (-zeta * zeta * lit::<T>(0.5)).exp();
    out[0] = u0;
    if dim > 1 {
        out[1] = zeta * lit::<T>(2.0).sqrt() * u0;
    }
    for n in 2..dim {
        let nf = lit::<T>(n as f64);
        out[n] = zeta * (lit::<T>(2.0) / nf).sqrt() * out[n - 1]
            - ((nf - T::one()) / nf).sqrt() * out[n - 2];
    }
}

/// Wigner function of a density matrix on a centre grid (N = 1), via the
/// position-space integral over Hermite-function wavefunctions.
pub fn wigner_from_density<T: Real>(
    rho: &DensityMatrix<T>,
    grid: &GridDescriptor<T>,
) -> Result<PhaseGrid<T>, OracleError> {
    if grid.modes() != 1 {
        return Err(OracleError::UnsupportedModes { modes: grid.modes() });
    }
    let dim = rho.dim();
    let hbar = grid.hbar();
    let np = grid.dims()[0];
    let nq = grid.dims()[1];
    let ps = grid.axis_coords(0);
    let qs = grid.axis_coords(1);
    // s-grid: covers twice the q half-width plus an evanescent pad
    let q_half = -grid.axis_coord(1, 0);
    let s_max = lit::<T>(2.0) * q_half + lit::<T>(4.0) * hbar.sqrt();
    let ns = 4 * nq.max(np);
    let ds = s_max * lit::<T>(2.0) / lit(ns as f64);
    let ss: Vec<T> = (0..ns).map(|k| -s_max + ds * lit(k as f64)).collect();

    // psi(q_j, s_k) = u(q + s/2)^T rho u(q - s/2), rows parallel over q
    let mut psi = vec![C::new(T::zero(), T::zero()); nq * ns];
    psi.par_chunks_mut(ns).enumerate().for_each(|(jq, row)| {
        let q = qs[jq];
        let mut u_plus = vec![T::zero(); dim];
        let mut u_minus = vec![T::zero(); dim];
        for (k, s) in ss.iter().enumerate() {
            let half = lit::<T>(0.5);
            hermite_functions(q + *s * half, hbar, dim, &mut u_plus);
            hermite_functions(q - *s * half, hbar, dim, &mut u_minus);
            let mut acc = C::new(T::zero(), T::zero());
            for m in 0..dim {
                if u_plus[m] == T::zero() {
                    continue;
                }
                let mut inner = C::new(T::zero(), T::zero());
                for n in 0..dim {
                    inner += rho.mat()[(m, n)] * C::new(u_minus[n], T::zero());
                }
                acc += C::new(u_plus[m], T::zero()) * inner;
            }
            row[k] = acc;
        }
    });

    // Fourier transform over s for every p, trapezoid with decayed endpoints
    let two_pi_hbar = lit::<T>(2.0) * T::PI() * hbar;
    let desc = grid.clone();
    let mut samples = vec![C::new(T::zero(), T::zero()); np * nq];
    samples.par_chunks_mut(nq).enumerate().for_each(|(ip, row)| {
        let p = ps[ip];
        let phases: Vec<C<T>> = ss
            .iter()
            .map(|s| C::from_polar(T::one(), -p * *s / hbar))
            .collect();
        for (jq, out) in row.iter_mut().enumerate() {
            let mut acc = C::new(T::zero(), T::zero());
            for k in 0..ns {
                acc += psi[jq * ns + k] * phases[k];
            }
            let w = acc * ds / two_pi_hbar;
            // hermitian rho makes this real; store the real part
            *out = C::new(w.re, T::zero());
        }
    });
    PhaseGrid::new(SpaceTag::Centre, desc, samples)
        .map_err(|e| OracleError::Inconsistent(e.to_string()))
}

/// ln(n!) table.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0f64; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// Generalized Laguerre `L_n^{(alpha)}(x)`.
fn laguerre_assoc(n: usize, alpha: f64, x: f64) -> f64 {
    let mut l0 = 1.0;
    if n == 0 {
        return l0;
    }
    let mut l1 = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let l2 = ((2.0 * kf + 1.0 + alpha - x) * l1 - (kf + alpha) * l0) / (kf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Chord value by the direct displaced trace,
/// `chi(xi) = (2 pi hbar)^-1 tr(T_{-xi} rho)`, with the displacement matrix
/// elements in the Fock basis written through associated Laguerre
/// polynomials. This is the independent spot-check route.
pub fn chord_direct_trace<T: Real>(rho: &DensityMatrix<T>, xi: &PhaseVector<T>, hbar: T) -> C<T> {
    let dim = rho.dim();
    let lnf = ln_factorials(dim);
    // T_xi = D(lambda) with lambda = (xi_q + i xi_p)/sqrt(2 hbar); we need D(-lambda)
    let s = (2.0 * hbar.to_f64().unwrap()).sqrt();
    let mu = Complex::new(
        -xi.q[0].to_f64().unwrap() / s,
        -xi.p[0].to_f64().unwrap() / s,
    );
    let x = mu.norm_sqr();
    let envelope = -x / 2.0;
    let mut acc = Complex::new(0.0f64, 0.0);
    for m in 0..dim {
        for n in 0..dim {
            // D(mu)_{mn}: sqrt(n!/m!) mu^{m-n} e^{-|mu|^2/2} L_n^{(m-n)}(|mu|^2) for m >= n
            let d = if m >= n {
                let mag = (0.5 * (lnf[n] - lnf[m]) + envelope).exp();
                mu.powu((m - n) as u32) * mag * laguerre_assoc(n, (m - n) as f64, x)
            } else {
                let mag = (0.5 * (lnf[m] - lnf[n]) + envelope).exp();
                (-mu.conj()).powu((n - m) as u32) * mag * laguerre_assoc(m, (n - m) as f64, x)
            };
            let rho_nm = rho.mat()[(n, m)];
            let rho_nm64 = Complex::new(
                rho_nm.re.to_f64().unwrap(),
                rho_nm.im.to_f64().unwrap(),
            );
            acc += d * rho_nm64;
        }
    }
    let two_pi_hbar = 2.0 * std::f64::consts::PI * hbar.to_f64().unwrap();
    let v = acc / two_pi_hbar;
    C::new(lit(v.re), lit(v.im))
}

/// Chord function of a density matrix, realised as
/// `wigner_to_chord(wigner_from_density(..))` plus a deterministic
/// displaced-trace spot check on ten pseudo-random chords.
pub fn chord_from_density<T: Real>(
    rho: &DensityMatrix<T>,
    grid: &GridDescriptor<T>,
) -> Result<PhaseGrid<T>, OracleError> {
    let w = wigner_from_density(rho, grid)?;
    let chi = wigner_to_chord(&w).map_err(|e| OracleError::Inconsistent(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0c0ffee);
    let desc = chi.descriptor();
    let hbar = grid.hbar();
    let scale = hbar.sqrt().to_f64().unwrap();
    for _ in 0..10 {
        let raw_p = rng.gen_range(-2.0..2.0) * scale;
        let raw_q = rng.gen_range(-2.0..2.0) * scale;
        // snap to the nearest grid point so both routes share an argument
        let ip = ((lit::<T>(raw_p) - desc.axis_coord(0, 0)) / desc.spacing()[0])
            .round()
            .to_usize()
            .unwrap_or(0)
            .min(desc.dims()[0] - 1);
        let iq = ((lit::<T>(raw_q) - desc.axis_coord(1, 0)) / desc.spacing()[1])
            .round()
            .to_usize()
            .unwrap_or(0)
            .min(desc.dims()[1] - 1);
        let snapped = PhaseVector::pq(desc.axis_coord(0, ip), desc.axis_coord(1, iq));
        let via_grid = chi.samples()[desc.ravel(&[ip, iq])];
        let via_trace = chord_direct_trace(rho, &snapped, hbar);
        let diff = (via_grid - via_trace).norm().to_f64().unwrap_or(f64::NAN);
        if !(diff <= 1e-6) {
            return Err(OracleError::Inconsistent(format!(
                "chord spot check failed at ({:.3}, {:.3}): diff {:.3e}",
                snapped.p[0].to_f64().unwrap_or(f64::NAN),
                snapped.q[0].to_f64().unwrap_or(f64::NAN),
                diff
            )));
        }
    }
    Ok(chi)
}

#[derive(Serialize, Deserialize)]
struct DmHeader {
    dim: usize,
    hbar: f64,
}

/// Write a density matrix: JSON header line, then little-endian f64
/// (re, im) pairs row-major. Extension `.dm`.
pub fn write_dm<T: Real, W: Write>(rho: &DensityMatrix<T>, hbar: T, mut out: W) -> Result<(), IoError> {
    let header = DmHeader { dim: rho.dim(), hbar: hbar.to_f64().unwrap() };
    let mut line = serde_json::to_string(&header).map_err(|e| IoError::Format(e.to_string()))?;
    line.push('\n');
    out.write_all(line.as_bytes())?;
    for v in rho.mat().entries() {
        out.write_all(&v.re.to_f64().unwrap().to_le_bytes())?;
        out.write_all(&v.im.to_f64().unwrap().to_le_bytes())?;
    }
    Ok(())
}

/// Read a `.dm` file; returns the matrix and its `hbar`.
pub fn read_dm<T: Real, R: Read>(mut input: R) -> Result<(DensityMatrix<T>, T), IoError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| IoError::Format("missing header line".into()))?;
    let header: DmHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| IoError::Format(e.to_string()))?;
    let body = &bytes[newline + 1..];
    let expect = header.dim * header.dim * 16;
    if body.len() != expect {
        return Err(IoError::Format(format!(
            "payload is {} bytes, expected {expect}",
            body.len()
        )));
    }
    let mut mat = FockMat::zeros(header.dim);
    for (k, chunk) in body.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        mat.a[k] = C::new(lit(re), lit(im));
    }
    Ok((DensityMatrix::from_mat(mat), lit(header.hbar)))
}
