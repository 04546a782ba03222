//! Uniform phase-space grids for Wigner and chord functions.
//!
//! Grids are centred on their origin and symmetric per axis: with an even
//! sample count `n` and spacing `d`, axis coordinates run through
//! `(k - n/2) d` for `k = 0..n`, so the origin itself is always a sample.
//! Axes are ordered `(p_1..p_N, q_1..q_N)` and samples are stored row-major
//! in that axis order.



use crate::error::GridError;
use crate::phase::PhaseVector;
use crate::scalar::{lit, Real, C};

/// Which phase space a grid lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    /// Centre (Weyl) space: the grid holds a Wigner function.
    Centre,
    /// Chord space: the grid holds a chord (characteristic) function.
    Chord,
}

impl SpaceTag {
    pub fn name(self) -> &'static str {
        match self {
            SpaceTag::Centre => "centre",
            SpaceTag::Chord => "chord",
        }
    }
}

/// Geometry of a grid: sample counts, spacings, origin and `hbar`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDescriptor<T> {
    dims: Vec<usize>,
    spacing: Vec<T>,
    origin: PhaseVector<T>,
    hbar: T,
}

impl<T: Real> GridDescriptor<T> {
    pub fn new(dims: Vec<usize>, spacing: Vec<T>, origin: PhaseVector<T>, hbar: T) -> Result<Self, GridError> {
        if dims.is_empty() || dims.len() % 2 != 0 {
            return Err(GridError::Invalid(format!("need 2N axes, got {}", dims.len())));
        }
        if dims.len() != spacing.len() || origin.dim() != dims.len() {
            return Err(GridError::Invalid("dims, spacing and origin must agree".into()));
        }
        if dims.iter().any(|&n| n < 4 || n % 2 != 0) {
            return Err(GridError::Invalid("axis counts must be even and at least 4".into()));
        }
        if spacing.iter().any(|s| !(*s > T::zero())) {
            return Err(GridError::Invalid("spacing must be positive".into()));
        }
        if !(hbar > T::zero()) {
            return Err(GridError::Invalid("hbar must be positive".into()));
        }
        Ok(Self { dims, spacing, origin, hbar })
    }

    /// Square single- or multi-mode grid: `n` samples per axis covering
    /// `[-half_width, half_width)`, centred on the origin.
    pub fn square(modes: usize, n: usize, half_width: T, hbar: T) -> Result<Self, GridError> {
        let d = half_width * lit::<T>(2.0) / lit(n as f64);
        Self::new(
            vec![n; 2 * modes],
            vec![d; 2 * modes],
            PhaseVector::zeros(modes),
            hbar,
        )
    }

    /// Default desk-scale grid: 128 x 128 per mode pair, half-width
    /// `8 sqrt(hbar)`.
    pub fn default_desk(hbar: T) -> Self {
        Self::square(1, 128, lit::<T>(8.0) * hbar.sqrt(), hbar).expect("desk grid is valid")
    }

    pub fn modes(&self) -> usize {
        self.dims.len() / 2
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn origin(&self) -> &PhaseVector<T> {
        &self.origin
    }

    pub fn hbar(&self) -> T {
        self.hbar
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Product of the axis spacings: the quadrature cell volume.
    pub fn cell_volume(&self) -> T {
        self.spacing.iter().fold(T::one(), |a, s| a * *s)
    }

    pub fn has_zero_origin(&self) -> bool {
        self.origin.flat().iter().all(|x| *x == T::zero())
    }

    /// Coordinate of sample `k` along `axis` (origin offset included).
    pub fn axis_coord(&self, axis: usize, k: usize) -> T {
        let n = self.dims[axis] as isize;
        let off = lit::<T>((k as isize - n / 2) as f64);
        self.origin.flat()[axis] + off * self.spacing[axis]
    }

    /// All coordinates along one axis.
    pub fn axis_coords(&self, axis: usize) -> Vec<T> {
        (0..self.dims[axis]).map(|k| self.axis_coord(axis, k)).collect()
    }

    /// Unravel a linear index into per-axis indices.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.rank()];
        for axis in (0..self.rank()).rev() {
            out[axis] = idx % self.dims[axis];
            idx /= self.dims[axis];
        }
        out
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        let mut idx = 0usize;
        for (axis, &k) in multi.iter().enumerate() {
            idx = idx * self.dims[axis] + k;
        }
        idx
    }

    /// Phase-space point of one linear index.
    pub fn point(&self, idx: usize) -> PhaseVector<T> {
        let multi = self.unravel(idx);
        let n = self.modes();
        let mut p = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for m in 0..n {
            p.push(self.axis_coord(m, multi[m]));
            q.push(self.axis_coord(n + m, multi[n + m]));
        }
        PhaseVector::new(p, q)
    }

    /// Descriptor of the conjugate grid under the symplectic Fourier
    /// transform. Axis pairs swap roles: the conjugate of centre axis
    /// `p_i` is the chord axis `xi_q_i` with spacing `2 pi hbar / (n d)`,
    /// and vice versa.
    pub fn conjugate(&self) -> Self {
        let n = self.modes();
        let two_pi_hbar = lit::<T>(2.0) * T::PI() * self.hbar;
        let mut dims = vec![0usize; 2 * n];
        let mut spacing = vec![T::zero(); 2 * n];
        for m in 0..n {
            // conjugate p-axis (slot m) pairs with source q-axis (slot n+m)
            dims[m] = self.dims[n + m];
            spacing[m] = two_pi_hbar / (lit::<T>(self.dims[n + m] as f64) * self.spacing[n + m]);
            // conjugate q-axis pairs with source p-axis
            dims[n + m] = self.dims[m];
            spacing[n + m] = two_pi_hbar / (lit::<T>(self.dims[m] as f64) * self.spacing[m]);
        }
        Self { dims, spacing, origin: PhaseVector::zeros(n), hbar: self.hbar }
    }

    /// True when `other` is the conjugate geometry of `self`.
    pub fn is_conjugate_of(&self, other: &Self) -> bool {
        let conj = other.conjugate();
        if conj.dims != self.dims {
            return false;
        }
        let tol = lit::<T>(1e-9);
        conj.spacing
            .iter()
            .zip(&self.spacing)
            .all(|(a, b)| (*a - *b).abs() <= tol * b.abs())
    }
}

/// A sampled Wigner or chord function.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid<T> {
    tag: SpaceTag,
    desc: GridDescriptor<T>,
    samples: Vec<C<T>>,
}

impl<T: Real> PhaseGrid<T> {
    pub fn new(tag: SpaceTag, desc: GridDescriptor<T>, samples: Vec<C<T>>) -> Result<Self, GridError> {
        if samples.len() != desc.len() {
            return Err(GridError::Invalid(format!(
                "sample count {} does not match grid size {}",
                samples.len(),
                desc.len()
            )));
        }
        Ok(Self { tag, desc, samples })
    }

    pub fn zeros(tag: SpaceTag, desc: GridDescriptor<T>) -> Self {
        let n = desc.len();
        Self { tag, desc, samples: vec![C::new(T::zero(), T::zero()); n] }
    }

    pub fn tag(&self) -> SpaceTag {
        self.tag
    }

    pub fn descriptor(&self) -> &GridDescriptor<T> {
        &self.desc
    }

    pub fn hbar(&self) -> T {
        self.desc.hbar
    }

    pub fn samples(&self) -> &[C<T>] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [C<T>] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<C<T>> {
        self.samples
    }

    pub fn expect_tag(&self, tag: SpaceTag) -> Result<(), GridError> {
        if self.tag != tag {
            return Err(GridError::WrongSpace { expected: tag.name(), got: self.tag.name() });
        }
        Ok(())
    }

    /// Value at the grid origin (always a sample).
    pub fn at_origin(&self) -> C<T> {
        let multi: Vec<usize> = self.desc.dims.iter().map(|&n| n / 2).collect();
        self.samples[self.desc.ravel(&multi)]
    }

    /// Uniform quadrature of the samples: `sum f * cell_volume`.
    pub fn quadrature(&self) -> C<T> {
        let mut s = C::new(T::zero(), T::zero());
        for v in &self.samples {
            s += *v;
        }
        s * self.desc.cell_volume()
    }

    /// Total mass of a centre grid (real part of the quadrature).
    pub fn mass(&self) -> T {
        self.quadrature().re
    }

    pub fn max_abs(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    pub fn max_imag_abs(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, v| m.max(v.im.abs()))
    }

    pub fn min_real(&self) -> T {
        self.samples.iter().fold(T::infinity(), |m, v| m.min(v.re))
    }

    /// Largest absolute value on the outermost shell of cells.
    pub fn boundary_max_abs(&self) -> T {
        let mut m = T::zero();
        for (idx, v) in self.samples.iter().enumerate() {
            let multi = self.desc.unravel(idx);
            let on_edge = multi
                .iter()
                .zip(self.desc.dims())
                .any(|(&k, &n)| k == 0 || k == n - 1);
            if on_edge {
                m = m.max(v.norm());
            }
        }
        m
    }

    /// Mass sitting on the outermost shell of cells, `sum |f| dV`.
    pub fn boundary_mass(&self) -> T {
        let mut s = T::zero();
        for (idx, v) in self.samples.iter().enumerate() {
            let multi = self.desc.unravel(idx);
            let on_edge = multi
                .iter()
                .zip(self.desc.dims())
                .any(|(&k, &n)| k == 0 || k == n - 1);
            if on_edge {
                s += v.norm();
            }
        }
        s * self.desc.cell_volume()
    }

    /// Deviation from chord hermiticity `chi(-xi) = chi(xi)*`, measured as
    /// the max-abs difference over mirrored index pairs. Index 0 along an
    /// axis is its own mirror image under the periodic alias.
    pub fn hermiticity_defect(&self) -> T {
        let mut worst = T::zero();
        for (idx, v) in self.samples.iter().enumerate() {
            let multi = self.desc.unravel(idx);
            let mirrored: Vec<usize> = multi
                .iter()
                .zip(self.desc.dims())
                .map(|(&k, &n)| if k == 0 { 0 } else { n - k })
                .collect();
            let w = self.samples[self.desc.ravel(&mirrored)];
            let d = (*v - w.conj()).norm();
            worst = worst.max(d);
        }
        worst
    }

    /// Purity `tr rho^2 = (2 pi hbar)^N sum |f|^2 dV`, valid on either grid.
    pub fn purity(&self) -> T {
        let two_pi_hbar = lit::<T>(2.0) * T::PI() * self.desc.hbar();
        let norm = two_pi_hbar.powi(self.desc.modes() as i32);
        let mut s = T::zero();
        for v in &self.samples {
            s += v.norm_sqr();
        }
        s * self.desc.cell_volume() * norm
    }
}

/// Purity of a state grid; see [`PhaseGrid::purity`].
pub fn purity<T: Real>(state: &PhaseGrid<T>) -> T {
    state.purity()
}
