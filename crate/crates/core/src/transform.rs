//! Symplectic Fourier transforms between Wigner and chord grids.
//!
//! The transform pair is
//!
//! ```text
//! chi(xi) = (2 pi hbar)^-N  integral dx  W(x)  exp( i x^xi / hbar)
//! W(x)    = (2 pi hbar)^-N  integral dxi chi(xi) exp( i xi^x / hbar)
//! ```
//!
//! With `x^xi = (Jx).xi = -x.(J xi)` both directions reduce to an ordinary
//! Fourier transform `F(k) = integral f(u) exp(-i k.u) du` evaluated at
//! `k = J(conjugate point)/hbar`. On centred grids this becomes a standard
//! FFT after premultiplying by the alternating sign `(-1)^(sum of indices)`,
//! postmultiplying by the same sign, and scaling by the cell volume; the
//! `J` mapping then permutes axes (p <-> q) and mirrors one index.
//!
//! The composition of the two directions is the exact discrete identity, and
//! `(2 pi hbar)^N chi(0)` equals the plain quadrature of `W` by construction.

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::GridError;
use crate::grid::{GridDescriptor, PhaseGrid, SpaceTag};
use crate::phase::{j_apply, PhaseVector};
use crate::scalar::{lit, Real, C};

/// Forward FFT along every axis of a row-major array.
fn fft_all_axes<T: Real>(data: &mut [C<T>], dims: &[usize]) {
    let mut planner = FftPlanner::<T>::new();
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    for (axis, &n) in dims.iter().enumerate() {
        let fft = planner.plan_fft_forward(n);
        // stride between consecutive elements along `axis`
        let stride: usize = dims[axis + 1..].iter().product();
        let block = stride * n;
        let nblocks = total / block;
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for b in 0..nblocks {
            let base = b * block;
            for lane in 0..stride {
                for k in 0..n {
                    buf[k] = data[base + lane + k * stride];
                }
                fft.process(&mut buf);
                for k in 0..n {
                    data[base + lane + k * stride] = buf[k];
                }
            }
        }
    }
}

/// Centred continuous-convention Fourier transform on a grid:
/// `F[m] = cell_volume * sum_j f[j] exp(-i k_m . u_j)` with
/// `u_j = (j - n/2) d`, `k_m = (m - n/2) dk`, `dk d = 2 pi / n`.
///
/// Realised per axis as `d * (-1)^(n/2) * (-1)^m FFT[(-1)^j f][m]`.
fn centered_ft<T: Real>(samples: &[C<T>], dims: &[usize], spacing: &[T]) -> Vec<C<T>> {
    let total: usize = dims.iter().product();
    let mut data = vec![Complex::new(T::zero(), T::zero()); total];
    // global scale: product of spacings and the per-axis (-1)^(n/2) signs
    let mut scale = spacing.iter().fold(T::one(), |a, s| a * *s);
    for &n in dims {
        if (n / 2) % 2 == 1 {
            scale = -scale;
        }
    }
    // premultiply by (-1)^(sum of indices)
    for (idx, v) in samples.iter().enumerate() {
        let parity = index_parity(idx, dims);
        data[idx] = if parity { -*v } else { *v };
    }
    fft_all_axes(&mut data, dims);
    // postmultiply by (-1)^(sum of indices) and the scale
    for (idx, v) in data.iter_mut().enumerate() {
        let parity = index_parity(idx, dims);
        let s = if parity { -scale } else { scale };
        *v = *v * s;
    }
    data
}

/// Parity of the sum of the multi-index of a linear index.
fn index_parity(mut idx: usize, dims: &[usize]) -> bool {
    let mut parity = false;
    for &n in dims.iter().rev() {
        parity ^= (idx % n) % 2 == 1;
        idx /= n;
    }
    parity
}

fn require_zero_origin<T: Real>(g: &PhaseGrid<T>) -> Result<(), GridError> {
    if !g.descriptor().has_zero_origin() {
        return Err(GridError::Invalid(
            "transforms require grids centred on the phase-space origin".into(),
        ));
    }
    Ok(())
}

/// Reindex the centred FT output onto the conjugate grid through the
/// symplectic matrix: the value at conjugate point `v` is `F[J v / hbar]`.
///
/// In index space the `p_i` slot of `F` (conjugate to `u_{p_i}`) carries
/// `-v_{q_i}` and the `q_i` slot carries `+v_{p_i}`, so the output index
/// `(a, b)` (for `v_p`, `v_q`) reads `F[(n - b) mod n, a]`.
fn reindex_symplectic<T: Real>(
    ft: &[C<T>],
    src: &GridDescriptor<T>,
    dst: &GridDescriptor<T>,
) -> Vec<C<T>> {
    let n_modes = src.modes();
    let src_dims = src.dims();
    let total = dst.len();
    let mut out = vec![Complex::new(T::zero(), T::zero()); total];
    for (idx, o) in out.iter_mut().enumerate() {
        let multi = dst.unravel(idx);
        let mut src_multi = vec![0usize; 2 * n_modes];
        for m in 0..n_modes {
            let a = multi[m]; // v_p index
            let b = multi[n_modes + m]; // v_q index
            let np = src_dims[m];
            src_multi[m] = (np - b) % np;
            src_multi[n_modes + m] = a;
        }
        *o = ft[src.ravel(&src_multi)];
    }
    out
}

/// Chord function from a Wigner grid: the symplectic Fourier transform with
/// kernel `exp(i x^xi / hbar)` and prefactor `(2 pi hbar)^-N`.
pub fn wigner_to_chord<T: Real>(w: &PhaseGrid<T>) -> Result<PhaseGrid<T>, GridError> {
    w.expect_tag(SpaceTag::Centre)?;
    require_zero_origin(w)?;
    let src = w.descriptor();
    let dst = src.conjugate();
    let ft = centered_ft(w.samples(), src.dims(), src.spacing());
    let mut vals = reindex_symplectic(&ft, src, &dst);
    let norm = two_pi_hbar_pow(src.hbar(), src.modes());
    for v in vals.iter_mut() {
        *v = *v / norm;
    }
    PhaseGrid::new(SpaceTag::Chord, dst, vals)
}

/// Wigner function from a chord grid: same kernel with the roles of the
/// spaces exchanged.
///
/// Rejects degenerate non-decaying chord input (e.g. a constant grid),
/// whose transform cannot be represented on a finite grid.
pub fn chord_to_wigner<T: Real>(chi: &PhaseGrid<T>) -> Result<PhaseGrid<T>, GridError> {
    chi.expect_tag(SpaceTag::Chord)?;
    require_zero_origin(chi)?;
    let bmax = chi.boundary_max_abs();
    let gmax = chi.max_abs();
    if gmax > T::zero() && bmax > lit::<T>(0.9) * gmax {
        return Err(GridError::DegenerateChord {
            boundary: bmax.to_f64().unwrap_or(f64::NAN),
            max: gmax.to_f64().unwrap_or(f64::NAN),
        });
    }
    let src = chi.descriptor();
    let dst = src.conjugate();
    let ft = centered_ft(chi.samples(), src.dims(), src.spacing());
    let mut vals = reindex_symplectic(&ft, src, &dst);
    let norm = two_pi_hbar_pow(src.hbar(), src.modes());
    for v in vals.iter_mut() {
        *v = *v / norm;
    }
    PhaseGrid::new(SpaceTag::Centre, dst, vals)
}

fn two_pi_hbar_pow<T: Real>(hbar: T, modes: usize) -> T {
    (lit::<T>(2.0) * T::PI() * hbar).powi(modes as i32)
}

/// Evaluator of the trigonometric interpolant a grid defines, at arbitrary
/// phase-space points.
///
/// A grid in one space is exactly the discrete symplectic transform of its
/// conjugate grid, so its band-limited interpolant can be evaluated off-grid
/// as `f(v) = (2 pi hbar)^-N sum_j dV g_j exp(i u_j ^ v / hbar)` over the
/// conjugate samples `g`. This is spectrally accurate for states that decay
/// inside the box, unlike low-order polynomial interpolation which visibly
/// damages oscillatory chord functions at the default resolution.
pub struct SpectralEvaluator<T> {
    conj: PhaseGrid<T>,
    axis_coords: Vec<Vec<T>>,
    norm: T,
}

impl<T: Real> SpectralEvaluator<T> {
    pub fn new(g: &PhaseGrid<T>) -> Result<Self, GridError> {
        require_zero_origin(g)?;
        let conj = match g.tag() {
            SpaceTag::Centre => wigner_to_chord(g)?,
            SpaceTag::Chord => chord_to_wigner(g)?,
        };
        let axis_coords = (0..conj.descriptor().rank())
            .map(|a| conj.descriptor().axis_coords(a))
            .collect();
        let norm = two_pi_hbar_pow(g.hbar(), g.descriptor().modes());
        Ok(Self { conj, axis_coords, norm })
    }

    /// Evaluate at one point.
    pub fn eval(&self, v: &PhaseVector<T>) -> C<T> {
        let desc = self.conj.descriptor();
        let n_modes = desc.modes();
        assert_eq!(v.modes(), n_modes);
        // exp(i u ^ v / hbar) = exp(-i u . (J v) / hbar): per-axis phase vectors
        let jv = j_apply(v).flat();
        let hbar = desc.hbar();
        let mut phases: Vec<Vec<C<T>>> = Vec::with_capacity(2 * n_modes);
        for axis in 0..2 * n_modes {
            let k = -jv[axis] / hbar;
            phases.push(
                self.axis_coords[axis]
                    .iter()
                    .map(|&u| C::from_polar(T::one(), k * u))
                    .collect(),
            );
        }
        // contract the sample tensor against the phase vectors, last axis first
        let dims = desc.dims();
        let mut cur: Vec<C<T>> = self.conj.samples().to_vec();
        for axis in (0..dims.len()).rev() {
            let n = dims[axis];
            let blocks = cur.len() / n;
            let ph = &phases[axis];
            let mut next = Vec::with_capacity(blocks);
            for b in 0..blocks {
                let mut s = C::new(T::zero(), T::zero());
                for k in 0..n {
                    s += cur[b * n + k] * ph[k];
                }
                next.push(s);
            }
            cur = next;
        }
        cur[0] * (desc.cell_volume() / self.norm)
    }

    /// Evaluate at many points in parallel (deterministic per-point results).
    pub fn eval_many(&self, points: &[PhaseVector<T>]) -> Vec<C<T>> {
        points.par_iter().map(|v| self.eval(v)).collect()
    }
}

/// Bilinear interpolation on a grid, periodic-free: points outside the box
/// return `None`. Retained as a cheap alternative to spectral evaluation.
pub fn bilinear_eval<T: Real>(g: &PhaseGrid<T>, v: &PhaseVector<T>) -> Option<C<T>> {
    let desc = g.descriptor();
    let flat = v.flat();
    let rank = desc.rank();
    // locate the base cell and fractional offsets
    let mut base = vec![0usize; rank];
    let mut frac = vec![T::zero(); rank];
    for axis in 0..rank {
        let n = desc.dims()[axis];
        let x0 = desc.axis_coord(axis, 0);
        let t = (flat[axis] - x0) / desc.spacing()[axis];
        if t < T::zero() || t > lit(n as f64 - 1.0) {
            return None;
        }
        let k = t.floor();
        let kk = k.to_usize().unwrap_or(0).min(n - 2);
        base[axis] = kk;
        frac[axis] = t - lit(kk as f64);
    }
    // accumulate over the 2^rank cell corners
    let mut acc = C::new(T::zero(), T::zero());
    for corner in 0..(1usize << rank) {
        let mut w = T::one();
        let mut multi = vec![0usize; rank];
        for axis in 0..rank {
            if corner >> axis & 1 == 1 {
                w *= frac[axis];
                multi[axis] = base[axis] + 1;
            } else {
                w *= T::one() - frac[axis];
                multi[axis] = base[axis];
            }
        }
        acc += g.samples()[desc.ravel(&multi)] * w;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDescriptor;
    use approx::assert_relative_eq;

    fn gaussian_wigner(n: usize, half_width: f64, hbar: f64) -> PhaseGrid<f64> {
        let desc = GridDescriptor::square(1, n, half_width, hbar).unwrap();
        let mut g = PhaseGrid::zeros(SpaceTag::Centre, desc.clone());
        for (idx, v) in g.samples_mut().iter_mut().enumerate() {
            let pt = desc.point(idx);
            let r2 = pt.p[0] * pt.p[0] + pt.q[0] * pt.q[0];
            *v = Complex::new((-r2 / hbar).exp() / (std::f64::consts::PI * hbar), 0.0);
        }
        g
    }

    #[test]
    fn vacuum_chord_is_gaussian() {
        // W = (pi hbar)^-1 exp(-|x|^2/hbar)  ->  chi = (2 pi hbar)^-1 exp(-|xi|^2 / 4 hbar)
        let hbar = 1.0;
        let w = gaussian_wigner(128, 8.0, hbar);
        let chi = wigner_to_chord(&w).unwrap();
        let desc = chi.descriptor().clone();
        for idx in [desc.ravel(&[64, 64]), desc.ravel(&[70, 64]), desc.ravel(&[60, 55])] {
            let pt = desc.point(idx);
            let r2 = pt.p[0] * pt.p[0] + pt.q[0] * pt.q[0];
            let expect = (-r2 / (4.0 * hbar)).exp() / (2.0 * std::f64::consts::PI * hbar);
            let got = chi.samples()[idx];
            assert_relative_eq!(got.re, expect, epsilon = 1e-10, max_relative = 1e-8);
            assert!(got.im.abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_identity_is_exact() {
        let w = gaussian_wigner(64, 6.0, 0.7);
        let chi = wigner_to_chord(&w).unwrap();
        let two_pi_hbar = 2.0 * std::f64::consts::PI * 0.7;
        // (2 pi hbar)^N chi(0) equals the plain quadrature of W (same sum)
        assert_relative_eq!(two_pi_hbar * chi.at_origin().re, w.mass(), epsilon = 1e-13);
    }

    #[test]
    fn roundtrip_is_identity() {
        let w = gaussian_wigner(64, 6.0, 1.0);
        let chi = wigner_to_chord(&w).unwrap();
        let back = chord_to_wigner(&chi).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in back.samples().iter().zip(w.samples()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-12, "roundtrip defect {worst}");
    }

    #[test]
    fn real_wigner_gives_hermitian_chord() {
        let desc = GridDescriptor::square(1, 32, 5.0, 1.0).unwrap();
        let mut w = PhaseGrid::<f64>::zeros(SpaceTag::Centre, desc.clone());
        for (idx, v) in w.samples_mut().iter_mut().enumerate() {
            let pt = desc.point(idx);
            // real but asymmetric data
            *v = Complex::new(
                (-(pt.p[0] - 0.5).powi(2) - (pt.q[0] + 0.3).powi(2)).exp(),
                0.0,
            );
        }
        let chi = wigner_to_chord(&w).unwrap();
        assert!(chi.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn constant_chord_rejected_as_degenerate() {
        let desc = GridDescriptor::square(1, 16, 4.0, 1.0).unwrap();
        let mut chi = PhaseGrid::zeros(SpaceTag::Chord, desc);
        for v in chi.samples_mut() {
            *v = Complex::new(1.0 / (2.0 * std::f64::consts::PI), 0.0);
        }
        assert!(matches!(chord_to_wigner(&chi), Err(GridError::DegenerateChord { .. })));
    }

    #[test]
    fn wrong_tag_rejected() {
        let desc = GridDescriptor::square(1, 16, 4.0, 1.0).unwrap();
        let w = PhaseGrid::zeros(SpaceTag::Centre, desc);
        assert!(chord_to_wigner(&w).is_err());
    }

    #[test]
    fn spectral_evaluator_matches_grid_and_offgrid_gaussian() {
        let hbar = 1.0;
        let w = gaussian_wigner(64, 8.0, hbar);
        let chi = wigner_to_chord(&w).unwrap();
        let ev = SpectralEvaluator::new(&chi).unwrap();
        // on-grid point reproduces the sample
        let idx = chi.descriptor().ravel(&[36, 30]);
        let pt = chi.descriptor().point(idx);
        let got = ev.eval(&pt);
        assert_relative_eq!(got.re, chi.samples()[idx].re, epsilon = 1e-11);
        // off-grid point matches the analytic Gaussian
        let v = PhaseVector::pq(0.37, -1.21);
        let expect = (-(v.p[0] * v.p[0] + v.q[0] * v.q[0]) / (4.0 * hbar)).exp()
            / (2.0 * std::f64::consts::PI * hbar);
        let got = ev.eval(&v);
        assert_relative_eq!(got.re, expect, epsilon = 1e-9);
        assert!(got.im.abs() < 1e-10);
    }

    #[test]
    fn bilinear_eval_basic() {
        let desc = GridDescriptor::square(1, 16, 4.0, 1.0).unwrap();
        let mut g = PhaseGrid::zeros(SpaceTag::Centre, desc.clone());
        for (idx, v) in g.samples_mut().iter_mut().enumerate() {
            let pt = desc.point(idx);
            *v = Complex::new(1.0 + 0.5 * pt.p[0] - 0.25 * pt.q[0], 0.0);
        }
        // bilinear is exact on affine data
        let v = PhaseVector::pq(0.3, -1.7);
        let got = bilinear_eval(&g, &v).unwrap();
        assert_relative_eq!(got.re, 1.0 + 0.5 * 0.3 - 0.25 * (-1.7), epsilon = 1e-12);
        assert!(bilinear_eval(&g, &PhaseVector::pq(9.0, 0.0)).is_none());
    }

    #[test]
    fn two_mode_roundtrip() {
        let desc = GridDescriptor::square(2, 16, 5.0, 1.0).unwrap();
        let mut w = PhaseGrid::zeros(SpaceTag::Centre, desc.clone());
        for (idx, v) in w.samples_mut().iter_mut().enumerate() {
            let pt = desc.point(idx);
            let r2: f64 = pt.flat().iter().map(|x| x * x).sum();
            *v = Complex::new((-r2).exp(), 0.0);
        }
        let chi = wigner_to_chord(&w).unwrap();
        let back = chord_to_wigner(&chi).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in back.samples().iter().zip(w.samples()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-12, "two-mode roundtrip defect {worst}");
    }
}
