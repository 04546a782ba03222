//! Small dense matrices for phase-space work.
//!
//! Everything here operates on `2N x 2N` matrices with `N` the number of
//! modes, so dimensions are tiny (2 or 4 in practice). The routines favour
//! robustness over asymptotics: Gauss elimination with partial pivoting,
//! cyclic Jacobi for symmetric eigenvalues, and a scaled Taylor matrix
//! exponential.

use crate::scalar::{lit, Real};

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SqMat<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> SqMat<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[&[T]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "row length must match dimension");
            m.a[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Outer product `v v^T` scaled by `w`.
    pub fn outer(v: &[T], w: T) -> Self {
        let n = v.len();
        Self::from_fn(n, |i, j| w * v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut s = T::zero();
                for j in 0..self.n {
                    s += self[(i, j)] * v[j];
                }
                s
            })
            .collect()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let mut out = self.clone();
        for (o, r) in out.a.iter_mut().zip(rhs.a.iter()) {
            *o += *r;
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let mut out = self.clone();
        for (o, r) in out.a.iter_mut().zip(rhs.a.iter()) {
            *o -= *r;
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        for o in out.a.iter_mut() {
            *o *= s;
        }
        out
    }

    /// Symmetric part `(A + A^T)/2`; used to clean up accumulated quadrature.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.n, |i, j| (self[(i, j)] + self[(j, i)]) * lit(0.5))
    }

    pub fn norm_inf(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.n {
            let mut row = T::zero();
            for j in 0..self.n {
                row += self[(i, j)].abs();
            }
            m = m.max(row);
        }
        m
    }

    pub fn max_abs(&self) -> T {
        self.a.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Matrix exponential by scaling-and-squaring with a Taylor core.
    ///
    /// The argument is scaled so its infinity norm is below 1/4; sixteen
    /// Taylor terms then reach machine precision for both `f32` and `f64`.
    pub fn expm(&self) -> Self {
        let norm = self.norm_inf();
        let mut s = 0u32;
        let quarter = lit::<T>(0.25);
        let mut scaled_norm = norm;
        while scaled_norm > quarter && s < 64 {
            scaled_norm = scaled_norm * lit(0.5);
            s += 1;
        }
        let b = self.scale(T::one() / lit::<T>(2.0).powi(s as i32));
        let mut result = Self::identity(self.n);
        let mut term = Self::identity(self.n);
        for k in 1..=16 {
            term = term.matmul(&b).scale(T::one() / lit(k as f64));
            result = result.add(&term);
        }
        for _ in 0..s {
            result = result.matmul(&result);
        }
        result
    }

    /// LU decomposition with partial pivoting; returns (LU, perm, sign) or
    /// `None` when singular to working precision.
    fn lu(&self) -> Option<(Self, Vec<usize>, T)> {
        let n = self.n;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        for col in 0..n {
            let mut pivot = col;
            let mut best = lu[(col, col)].abs();
            for r in col + 1..n {
                let v = lu[(r, col)].abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best == T::zero() {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = lu[(col, j)];
                    lu[(col, j)] = lu[(pivot, j)];
                    lu[(pivot, j)] = tmp;
                }
                perm.swap(col, pivot);
                sign = -sign;
            }
            let d = lu[(col, col)];
            for r in col + 1..n {
                let f = lu[(r, col)] / d;
                lu[(r, col)] = f;
                for j in col + 1..n {
                    let sub = f * lu[(col, j)];
                    lu[(r, j)] -= sub;
                }
            }
        }
        Some((lu, perm, sign))
    }

    pub fn det(&self) -> T {
        match self.lu() {
            None => T::zero(),
            Some((lu, _, sign)) => {
                let mut d = sign;
                for i in 0..self.n {
                    d *= lu[(i, i)];
                }
                d
            }
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let n = self.n;
        let (lu, perm, _) = self.lu()?;
        let mut inv = Self::zeros(n);
        let mut col = vec![T::zero(); n];
        for e in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = if perm[i] == e { T::one() } else { T::zero() };
            }
            // forward substitution (unit lower triangle)
            for i in 0..n {
                for j in 0..i {
                    let sub = lu[(i, j)] * col[j];
                    col[i] -= sub;
                }
            }
            // back substitution
            for i in (0..n).rev() {
                for j in i + 1..n {
                    let sub = lu[(i, j)] * col[j];
                    col[i] -= sub;
                }
                col[i] = col[i] / lu[(i, i)];
            }
            for i in 0..n {
                inv[(i, e)] = col[i];
            }
        }
        Some(inv)
    }

    /// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
    pub fn sym_eigenvalues(&self) -> Vec<T> {
        let n = self.n;
        let mut a = self.symmetrized();
        for _sweep in 0..64 {
            let mut off = T::zero();
            for i in 0..n {
                for j in i + 1..n {
                    off += a[(i, j)].abs();
                }
            }
            if off < lit(1e-30) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() < lit(1e-300) {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (lit::<T>(2.0) * apq);
                    let t = {
                        let s = if theta >= T::zero() { T::one() } else { -T::one() };
                        s / (theta.abs() + (theta * theta + T::one()).sqrt())
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
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

    pub fn min_eigenvalue_sym(&self) -> T {
        self.sym_eigenvalues()
            .into_iter()
            .fold(T::infinity(), |m, x| m.min(x))
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for SqMat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.a[i * self.n + j]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for SqMat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.a[i * self.n + j]
    }
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
///
/// Nodes are found by Newton iteration on the Legendre polynomial recurrence;
/// accuracy is machine precision for the orders used here (< 1024).
pub fn gauss_legendre<T: Real>(order: usize, a: T, b: T) -> Vec<(T, T)> {
    assert!(order >= 1);
    let n = order;
    let mut out = Vec::with_capacity(n);
    let half = lit::<T>(0.5);
    let mid = (a + b) * half;
    let span = (b - a) * half;
    for i in 0..(n + 1) / 2 {
        // Tricomi-style initial guess
        let theta = T::PI() * (lit::<T>(i as f64) + lit(0.75)) / (lit::<T>(n as f64) + half);
        let mut x = theta.cos();
        let mut pp = T::zero();
        for _ in 0..100 {
            // evaluate P_n and P_n' by recurrence
            let mut p0 = T::one();
            let mut p1 = x;
            for k in 2..=n {
                let kf = lit::<T>(k as f64);
                let p2 = ((lit::<T>(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            pp = lit::<T>(n as f64) * (x * p1 - p0) / (x * x - T::one());
            let dx = p1 / pp;
            x = x - dx;
            if dx.abs() < lit(1e-30) {
                break;
            }
        }
        let w = lit::<T>(2.0) / ((T::one() - x * x) * pp * pp);
        out.push((mid - span * x, span * w));
        if i != n - 1 - i {
            out.push((mid + span * x, span * w));
        }
    }
    out.sort_by(|l, r| l.0.partial_cmp(&r.0).unwrap());
    out
}
