//! Smooth Hamiltonians with analytic gradients and Hessians.

use crate::linalg::SqMat;
use crate::phase::PhaseVector;
use crate::scalar::{lit, Real};

/// Hamiltonian on phase space, `(p, q)` ordering throughout.
///
/// The quadratic kind is `H = x.Bx/2 + b.x` with `B` symmetric; named
/// nonlinear forms are the single-mode anharmonic probes.
#[derive(Debug, Clone)]
pub enum SmoothHamiltonian<T> {
    Quadratic { b_matrix: SqMat<T>, linear: PhaseVector<T> },
    /// `H = p^2/2 + q^4/4 + kappa q^2` (single mode).
    Quartic { kappa: T },
    /// `H = p^2/2 - cos q` (single mode).
    Pendulum,
}

impl<T: Real> SmoothHamiltonian<T> {
    /// Harmonic oscillator `H = (p^2 + q^2)/2` for `modes` modes.
    pub fn harmonic(modes: usize) -> Self {
        SmoothHamiltonian::Quadratic {
            b_matrix: SqMat::identity(2 * modes),
            linear: PhaseVector::zeros(modes),
        }
    }

    /// Zero Hamiltonian.
    pub fn free_of_motion(modes: usize) -> Self {
        SmoothHamiltonian::Quadratic {
            b_matrix: SqMat::zeros(2 * modes),
            linear: PhaseVector::zeros(modes),
        }
    }

    pub fn quadratic(b_matrix: SqMat<T>) -> Self {
        let modes = b_matrix.dim() / 2;
        SmoothHamiltonian::Quadratic { b_matrix, linear: PhaseVector::zeros(modes) }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SmoothHamiltonian::Quadratic { .. } => "quadratic",
            SmoothHamiltonian::Quartic { .. } => "quartic",
            SmoothHamiltonian::Pendulum => "pendulum",
        }
    }

    pub fn modes(&self) -> usize {
        match self {
            SmoothHamiltonian::Quadratic { b_matrix, .. } => b_matrix.dim() / 2,
            _ => 1,
        }
    }

    /// Hessian matrix of the quadratic kind, if this is one.
    pub fn quadratic_form(&self) -> Option<&SqMat<T>> {
        match self {
            SmoothHamiltonian::Quadratic { b_matrix, .. } => Some(b_matrix),
            _ => None,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, SmoothHamiltonian::Quadratic { .. })
    }

    pub fn value(&self, x: &PhaseVector<T>) -> T {
        match self {
            SmoothHamiltonian::Quadratic { b_matrix, linear } => {
                let xf = x.flat();
                let bx = b_matrix.matvec(&xf);
                let mut s = T::zero();
                for (a, b) in xf.iter().zip(&bx) {
                    s += *a * *b;
                }
                s * lit(0.5) + linear.dot(x)
            }
            SmoothHamiltonian::Quartic { kappa } => {
                let p = x.p[0];
                let q = x.q[0];
                p * p * lit(0.5) + q.powi(4) * lit(0.25) + *kappa * q * q
            }
            SmoothHamiltonian::Pendulum => {
                let p = x.p[0];
                let q = x.q[0];
                p * p * lit(0.5) - q.cos()
            }
        }
    }

    pub fn gradient(&self, x: &PhaseVector<T>) -> PhaseVector<T> {
        match self {
            SmoothHamiltonian::Quadratic { b_matrix, linear } => {
                let g = b_matrix.matvec(&x.flat());
                PhaseVector::from_flat(&g).add(linear)
            }
            SmoothHamiltonian::Quartic { kappa } => {
                let p = x.p[0];
                let q = x.q[0];
                PhaseVector::pq(p, q.powi(3) + lit::<T>(2.0) * *kappa * q)
            }
            SmoothHamiltonian::Pendulum => PhaseVector::pq(x.p[0], x.q[0].sin()),
        }
    }

    /// Gradient written into a flat `(p.., q..)` slice; no allocation.
    pub fn gradient_into(&self, x: &[T], out: &mut [T]) {
        match self {
            SmoothHamiltonian::Quadratic { b_matrix, linear } => {
                let d = b_matrix.dim();
                let lin = linear;
                let modes = d / 2;
                for i in 0..d {
                    let mut s = T::zero();
                    for j in 0..d {
                        s += b_matrix[(i, j)] * x[j];
                    }
                    out[i] = s + if i < modes { lin.p[i] } else { lin.q[i - modes] };
                }
            }
            SmoothHamiltonian::Quartic { kappa } => {
                out[0] = x[0];
                out[1] = x[1] * x[1] * x[1] + lit::<T>(2.0) * *kappa * x[1];
            }
            SmoothHamiltonian::Pendulum => {
                out[0] = x[0];
                out[1] = x[1].sin();
            }
        }
    }

    /// Hessian written into a flat row-major `2N x 2N` slice; no allocation.
    pub fn hessian_into(&self, x: &[T], out: &mut [T]) {
        match self {
            SmoothHamiltonian::Quadratic { b_matrix, .. } => {
                let d = b_matrix.dim();
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = b_matrix[(i, j)];
                    }
                }
            }
            SmoothHamiltonian::Quartic { kappa } => {
                out[0] = T::one();
                out[1] = T::zero();
                out[2] = T::zero();
                out[3] = lit::<T>(3.0) * x[1] * x[1] + lit::<T>(2.0) * *kappa;
            }
            SmoothHamiltonian::Pendulum => {
                out[0] = T::one();
                out[1] = T::zero();
                out[2] = T::zero();
                out[3] = x[1].cos();
            }
        }
    }

    pub fn hessian(&self, x: &PhaseVector<T>) -> SqMat<T> {
        match self {
            SmoothHamiltonian::Quadratic { b_matrix, .. } => b_matrix.clone(),
            SmoothHamiltonian::Quartic { kappa } => {
                let q = x.q[0];
                SqMat::from_rows(&[
                    &[T::one(), T::zero()],
                    &[T::zero(), lit::<T>(3.0) * q * q + lit::<T>(2.0) * *kappa],
                ])
            }
            SmoothHamiltonian::Pendulum => SqMat::from_rows(&[
                &[T::one(), T::zero()],
                &[T::zero(), x.q[0].cos()],
            ]),
        }
    }
}
