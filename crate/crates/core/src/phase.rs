//! Phase-space points and the symplectic structure.
//!
//! A point of the `2N`-dimensional phase space is stored in `(p, q)`
//! ordering. The same container holds centres `x`, chords `xi` and the
//! double-phase conjugate momentum `y = J xi`.

use crate::linalg::SqMat;
use crate::scalar::Real;

/// Point of single phase space `R^{2N}`, components ordered `(p, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector<T> {
    /// Momentum components (length N).
    pub p: Vec<T>,
    /// Position components (length N).
    pub q: Vec<T>,
}

impl<T: Real> PhaseVector<T> {
    pub fn new(p: Vec<T>, q: Vec<T>) -> Self {
        assert_eq!(p.len(), q.len(), "p and q must have the same mode count");
        assert!(!p.is_empty(), "phase space needs at least one mode");
        Self { p, q }
    }

    /// Single-mode convenience constructor.
    pub fn pq(p: T, q: T) -> Self {
        Self { p: vec![p], q: vec![q] }
    }

    pub fn zeros(modes: usize) -> Self {
        Self { p: vec![T::zero(); modes], q: vec![T::zero(); modes] }
    }

    /// Number of modes `N`.
    pub fn modes(&self) -> usize {
        self.p.len()
    }

    /// Full dimension `2N`.
    pub fn dim(&self) -> usize {
        2 * self.p.len()
    }

    /// Flat `(p_1..p_N, q_1..q_N)` layout used by the matrix routines.
    pub fn flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.p);
        v.extend_from_slice(&self.q);
        v
    }

    pub fn from_flat(v: &[T]) -> Self {
        assert!(v.len() % 2 == 0 && !v.is_empty());
        let n = v.len() / 2;
        Self { p: v[..n].to_vec(), q: v[n..].to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.q.iter()).all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.modes(), other.modes());
        let mut s = T::zero();
        for n in 0..self.modes() {
            s += self.p[n] * other.p[n] + self.q[n] * other.q[n];
        }
        s
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.modes(), other.modes());
        Self {
            p: self.p.iter().zip(&other.p).map(|(a, b)| *a + *b).collect(),
            q: self.q.iter().zip(&other.q).map(|(a, b)| *a + *b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.modes(), other.modes());
        Self {
            p: self.p.iter().zip(&other.p).map(|(a, b)| *a - *b).collect(),
            q: self.q.iter().zip(&other.q).map(|(a, b)| *a - *b).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            p: self.p.iter().map(|a| *a * s).collect(),
            q: self.q.iter().map(|a| *a * s).collect(),
        }
    }
}

/// Skew product `x ^ x' = sum_n (p_n q'_n - q_n p'_n) = Jx . x'`.
///
/// Panics on dimension mismatch.
pub fn skew_product<T: Real>(x: &PhaseVector<T>, x2: &PhaseVector<T>) -> T {
    assert_eq!(x.modes(), x2.modes(), "skew product needs equal dimensions");
    let mut s = T::zero();
    for n in 0..x.modes() {
        s += x.p[n] * x2.q[n] - x.q[n] * x2.p[n];
    }
    s
}

/// The symplectic matrix applied to a point: `(Jx)_p = -q`, `(Jx)_q = p`.
///
/// Defined so that `skew_product(x, x2) == j_apply(x).dot(x2)` and
/// `j_apply(j_apply(x)) == -x`.
pub fn j_apply<T: Real>(x: &PhaseVector<T>) -> PhaseVector<T> {
    PhaseVector {
        p: x.q.iter().map(|v| -*v).collect(),
        q: x.p.clone(),
    }
}

/// The `2N x 2N` symplectic matrix in the flat `(p, q)` layout.
pub fn j_matrix<T: Real>(modes: usize) -> SqMat<T> {
    let mut j = SqMat::zeros(2 * modes);
    for n in 0..modes {
        j[(n, modes + n)] = -T::one();
        j[(modes + n, n)] = T::one();
    }
    j
}

/// Point of double phase space: centre `x` with conjugate momentum `y = J xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublePhasePoint<T> {
    pub x: PhaseVector<T>,
    pub y: PhaseVector<T>,
}

impl<T: Real> DoublePhasePoint<T> {
    pub fn new(x: PhaseVector<T>, y: PhaseVector<T>) -> Self {
        assert_eq!(x.modes(), y.modes());
        Self { x, y }
    }

    /// Build from a centre and a chord, `y = J xi`.
    pub fn from_centre_chord(x: PhaseVector<T>, xi: &PhaseVector<T>) -> Self {
        let y = j_apply(xi);
        Self::new(x, y)
    }

    /// The chord `xi = -J y`.
    pub fn chord(&self) -> PhaseVector<T> {
        j_apply(&self.y).scale(-T::one())
    }

    /// Chord tips `x_plus = x - Jy/2`, `x_minus = x + Jy/2`.
    pub fn tips(&self) -> (PhaseVector<T>, PhaseVector<T>) {
        let half = crate::scalar::lit::<T>(0.5);
        let jy = j_apply(&self.y).scale(half);
        (self.x.sub(&jy), self.x.add(&jy))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn skew_product_unit_vectors() {
        let ep = PhaseVector::pq(1.0, 0.0);
        let eq = PhaseVector::pq(0.0, 1.0);
        assert_relative_eq!(skew_product(&ep, &eq), 1.0);
    }

    #[test]
    fn skew_product_self_is_zero() {
        let x = PhaseVector::pq(1.7, -0.3);
        assert_relative_eq!(skew_product(&x, &x), 0.0);
    }

    #[test]
    fn skew_product_direct_value() {
        let x = PhaseVector::pq(2.0, 3.0);
        let y = PhaseVector::pq(5.0, 7.0);
        assert_relative_eq!(skew_product(&x, &y), 2.0 * 7.0 - 3.0 * 5.0);
    }

    #[test]
    fn j_apply_matches_skew_product() {
        let x = PhaseVector::pq(0.3, -1.2);
        let y = PhaseVector::pq(2.0, 0.7);
        assert_relative_eq!(skew_product(&x, &y), j_apply(&x).dot(&y), epsilon = 1e-15);
        // forced values
        assert_eq!(j_apply(&PhaseVector::pq(1.0, 0.0)), PhaseVector::pq(0.0, 1.0));
        assert_eq!(j_apply(&PhaseVector::pq(0.0, 1.0)), PhaseVector::pq(-1.0, 0.0));
    }

    #[test]
    fn j_squared_is_minus_identity() {
        let x = PhaseVector::new(vec![0.1, -0.4], vec![2.0, 1.5]);
        let jj = j_apply(&j_apply(&x));
        for (a, b) in jj.flat().iter().zip(x.flat()) {
            assert_relative_eq!(*a, -b, epsilon = 1e-15);
        }
    }

    #[test]
    fn j_matrix_agrees_with_j_apply_two_modes() {
        let x = PhaseVector::new(vec![1.0, 2.0], vec![3.0, 4.0]);
        let jm = j_matrix::<f64>(2);
        let via_matrix = jm.matvec(&x.flat());
        assert_eq!(via_matrix, j_apply(&x).flat());
    }

    #[test]
    fn double_phase_chord_roundtrip() {
        let xi = PhaseVector::pq(0.8, -0.2);
        let pt = DoublePhasePoint::from_centre_chord(PhaseVector::pq(1.0, 1.0), &xi);
        let back = pt.chord();
        assert_relative_eq!(back.p[0], xi.p[0], epsilon = 1e-15);
        assert_relative_eq!(back.q[0], xi.q[0], epsilon = 1e-15);
        // tips differ by the chord
        let (plus, minus) = pt.tips();
        let diff = plus.sub(&minus);
        assert_relative_eq!(diff.p[0], xi.p[0], epsilon = 1e-15);
        assert_relative_eq!(diff.q[0], xi.q[0], epsilon = 1e-15);
    }

    #[test]
    fn skew_antisymmetry_f32() {
        let x = PhaseVector::<f32>::pq(0.5, 2.0);
        let y = PhaseVector::<f32>::pq(-1.0, 0.25);
        assert_eq!(skew_product(&x, &y), -skew_product(&y, &x));
    }
}
