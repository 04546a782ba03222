//! Small-chord propagator for general smooth Hamiltonians.
//!
//! Along each dissipative centre trajectory `x(t)` the transverse chord
//! motion is linearized: a propagation matrix `G_t(x)` accumulates per-step
//! exponentials of `J H''(x) + gamma I` with the Hessian sampled at step
//! midpoints, and a decoherence matrix `M_t(x)` accumulates
//! `integral G^T Lambda G` with each step integral evaluated in closed form
//! (augmented-exponential block), so the quadratic case reproduces the exact
//! kernel to machine precision.
//!
//! The mixed centre-to-chord propagator quenches with the backward form
//! `Mb_t = G_t^-T M_t G_t^-1`: the quench accumulates along the orbit that
//! ends at the evaluated chord, which is what reduces to the exact quadratic
//! evolution. The Wigner-side Gaussian window uses the forward `M_t`
//! directly through `M'_t = -J M_t^-1 J`, together with the flow Jacobian
//! factor `e^{2 N gamma t}` that keeps total mass conserved.

use std::collections::HashMap;
use std::io::Write as IoWrite;
use std::sync::Mutex;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{EvolveError, FlowError};
use crate::flow::centre_flow;
use crate::grid::{PhaseGrid, SpaceTag};
use crate::linalg::SqMat;
use crate::phase::{j_apply, j_matrix, PhaseVector};
use crate::scalar::{lit, Real, C};
use crate::system::OpenSystem;
use crate::transform::{wigner_to_chord, SpectralEvaluator};

/// Default bundle integration step.
pub const DEFAULT_BUNDLE_DT: f64 = 1e-3;

/// Step policy for single-shot validity and iterated evolution.
#[derive(Debug, Clone)]
pub struct IterationPolicy {
    /// Hard cap on one propagation step.
    pub max_step: f64,
    /// Allowed overshoot of the local decoherence time for one step; only
    /// enforced when the system dissipates (`gamma != 0`).
    pub tdec_slack: f64,
}

impl Default for IterationPolicy {
    fn default() -> Self {
        Self { max_step: 0.5, tdec_slack: 1.0 }
    }
}

/// Options shared by the small-chord grid operations.
#[derive(Debug, Clone)]
pub struct SmallChordOpts {
    pub dt: f64,
    pub policy: IterationPolicy,
}

impl Default for SmallChordOpts {
    fn default() -> Self {
        Self { dt: DEFAULT_BUNDLE_DT, policy: IterationPolicy::default() }
    }
}

/// Trajectory, propagation matrices and decoherence matrices of one centre
/// point, sampled on a shared time ladder.
#[derive(Debug, Clone)]
pub struct PropagationBundle<T> {
    pub times: Vec<T>,
    pub x_traj: Vec<PhaseVector<T>>,
    pub g_of_t: Vec<SqMat<T>>,
    pub m_of_t: Vec<SqMat<T>>,
    /// First time `det M` reaches the coherent-state volume `4^-N`, if any.
    pub t_dec: Option<T>,
    modes: usize,
}

impl<T: Real> PropagationBundle<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_max(&self) -> T {
        *self.times.last().expect("bundle is never empty")
    }

    /// Index of the node nearest to `t`, if `t` lies in the bundle range.
    fn node_index(&self, t: T) -> Option<usize> {
        if t < -lit::<T>(1e-12) || t > self.t_max() + lit(1e-12) {
            return None;
        }
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, ti) in self.times.iter().enumerate() {
            let d = (*ti - t).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Some(best)
    }
}

/// Final-time summary used by the grid evolutions.
#[derive(Debug, Clone)]
struct BundleSummary<T> {
    x_t: PhaseVector<T>,
    m_fwd: SqMat<T>,
    m_back: SqMat<T>,
    t_dec: Option<T>,
    det_g: T,
}

/// Per-step pieces of the accumulation: the step propagator and the closed
/// form of `integral_0^h exp(s A)^T Lambda exp(s A) ds` from the augmented
/// exponential `exp(h [[-A^T, Lambda], [0, A]])`.
fn step_blocks<T: Real>(a: &SqMat<T>, lambda: &SqMat<T>, h: T) -> (Flat<T>, Flat<T>) {
    let dim = a.dim();
    let mut aug = SqMat::zeros(2 * dim);
    for i in 0..dim {
        for j in 0..dim {
            aug[(i, j)] = -a[(j, i)];
            aug[(i, dim + j)] = lambda[(i, j)];
            aug[(dim + i, dim + j)] = a[(i, j)];
        }
    }
    let e = aug.scale(h).expm();
    let mut g_step = SqMat::zeros(dim);
    let mut top_right = SqMat::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            g_step[(i, j)] = e[(dim + i, dim + j)];
            top_right[(i, j)] = e[(i, dim + j)];
        }
    }
    // integral = exp(h A)^T * top-right block
    let integral = g_step.transpose().matmul(&top_right).symmetrized();
    (flat_from(&g_step), flat_from(&integral))
}

/// Stack-allocated square matrix, dimension at most [`MAX_DIM`].
const MAX_DIM: usize = 4;
type Flat<T> = [T; MAX_DIM * MAX_DIM];

fn flat_from<T: Real>(m: &SqMat<T>) -> Flat<T> {
    let d = m.dim();
    let mut out = [T::zero(); MAX_DIM * MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = m[(i, j)];
        }
    }
    out
}

fn flat_to_sqmat<T: Real>(a: &Flat<T>, d: usize) -> SqMat<T> {
    SqMat::from_fn(d, |i, j| a[i * d + j])
}

fn flat_identity<T: Real>(d: usize) -> Flat<T> {
    let mut out = [T::zero(); MAX_DIM * MAX_DIM];
    for i in 0..d {
        out[i * d + i] = T::one();
    }
    out
}

fn flat_mul<T: Real>(d: usize, a: &Flat<T>, b: &Flat<T>, out: &mut Flat<T>) {
    for i in 0..d {
        for j in 0..d {
            let mut s = T::zero();
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

/// `out = a^T b`.
fn flat_tmul<T: Real>(d: usize, a: &Flat<T>, b: &Flat<T>, out: &mut Flat<T>) {
    for i in 0..d {
        for j in 0..d {
            let mut s = T::zero();
            for k in 0..d {
                s += a[k * d + i] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

fn flat_det<T: Real>(d: usize, a: &Flat<T>) -> T {
    match d {
        2 => a[0] * a[3] - a[1] * a[2],
        4 => {
            // cofactor expansion over the first row
            let m = |i: usize, j: usize| a[i * 4 + j];
            let det3 = |r: [usize; 3], c: [usize; 3]| {
                m(r[0], c[0]) * (m(r[1], c[1]) * m(r[2], c[2]) - m(r[1], c[2]) * m(r[2], c[1]))
                    - m(r[0], c[1]) * (m(r[1], c[0]) * m(r[2], c[2]) - m(r[1], c[2]) * m(r[2], c[0]))
                    + m(r[0], c[2]) * (m(r[1], c[0]) * m(r[2], c[1]) - m(r[1], c[1]) * m(r[2], c[0]))
            };
            m(0, 0) * det3([1, 2, 3], [1, 2, 3]) - m(0, 1) * det3([1, 2, 3], [0, 2, 3])
                + m(0, 2) * det3([1, 2, 3], [0, 1, 3])
                - m(0, 3) * det3([1, 2, 3], [0, 1, 2])
        }
        _ => flat_to_sqmat(a, d).det(),
    }
}

struct Accumulator<T> {
    d: usize,
    g: Flat<T>,
    m: Flat<T>,
    det_prev: T,
    t_prev: T,
    t_dec: Option<T>,
    threshold: T,
}

impl<T: Real> Accumulator<T> {
    fn new(dim: usize, modes: usize) -> Self {
        Self {
            d: dim,
            g: flat_identity(dim),
            m: [T::zero(); MAX_DIM * MAX_DIM],
            det_prev: T::zero(),
            t_prev: T::zero(),
            t_dec: None,
            threshold: lit::<T>(4.0).powi(-(modes as i32)),
        }
    }

    /// Advance one step: `M <- M + G^T I_step G`, then `G <- G_step G`.
    fn push(&mut self, g_step: &Flat<T>, step_integral: &Flat<T>, t_new: T) {
        let d = self.d;
        let mut tmp = [T::zero(); MAX_DIM * MAX_DIM];
        let mut inc = [T::zero(); MAX_DIM * MAX_DIM];
        flat_tmul(d, &self.g, step_integral, &mut tmp);
        flat_mul(d, &tmp, &self.g, &mut inc);
        for i in 0..d {
            for j in 0..d {
                let half = lit::<T>(0.5);
                let sym = (inc[i * d + j] + inc[j * d + i]) * half;
                self.m[i * d + j] += sym;
            }
        }
        flat_mul(d, g_step, &self.g, &mut tmp);
        self.g = tmp;
        let det = flat_det(d, &self.m);
        if self.t_dec.is_none() && det >= self.threshold {
            // linear interpolation of the crossing inside the step
            let frac = if det > self.det_prev {
                ((self.threshold - self.det_prev) / (det - self.det_prev)).max(T::zero())
            } else {
                T::one()
            };
            self.t_dec = Some(self.t_prev + (t_new - self.t_prev) * frac);
        }
        self.det_prev = det;
        self.t_prev = t_new;
    }

    fn g_mat(&self) -> SqMat<T> {
        flat_to_sqmat(&self.g, self.d)
    }

    fn m_mat(&self) -> SqMat<T> {
        flat_to_sqmat(&self.m, self.d)
    }
}

/// Non-allocating RK4 integrator for the dissipative centre field on flat
/// `(p.., q..)` coordinates.
struct FastFlow<'a, T: Real> {
    system: &'a OpenSystem<T>,
    dim: usize,
}

impl<'a, T: Real> FastFlow<'a, T> {
    fn new(system: &'a OpenSystem<T>) -> Self {
        let dim = 2 * system.modes();
        assert!(dim <= MAX_DIM, "fast flow supports at most two modes");
        Self { system, dim }
    }

    /// `out = J grad H(x) - gamma x`.
    fn field(&self, x: &[T], out: &mut [T]) {
        let modes = self.dim / 2;
        let gamma = self.system.gamma();
        let mut grad = [T::zero(); MAX_DIM];
        self.system.hamiltonian.gradient_into(&x[..self.dim], &mut grad[..self.dim]);
        for i in 0..modes {
            out[i] = -grad[modes + i] - gamma * x[i];
            out[modes + i] = grad[i] - gamma * x[modes + i];
        }
    }

    fn rk4_step(&self, x: &mut [T; MAX_DIM], h: T) {
        let d = self.dim;
        let half = lit::<T>(0.5);
        let sixth = lit::<T>(1.0 / 6.0);
        let two = lit::<T>(2.0);
        let mut k1 = [T::zero(); MAX_DIM];
        let mut k2 = [T::zero(); MAX_DIM];
        let mut k3 = [T::zero(); MAX_DIM];
        let mut k4 = [T::zero(); MAX_DIM];
        let mut tmp = [T::zero(); MAX_DIM];
        self.field(&x[..], &mut k1);
        for i in 0..d {
            tmp[i] = x[i] + h * half * k1[i];
        }
        self.field(&tmp, &mut k2);
        for i in 0..d {
            tmp[i] = x[i] + h * half * k2[i];
        }
        self.field(&tmp, &mut k3);
        for i in 0..d {
            tmp[i] = x[i] + h * k3[i];
        }
        self.field(&tmp, &mut k4);
        for i in 0..d {
            x[i] += h * sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
        }
    }

    /// Endpoint of `steps` uniform RK4 steps of size `h`.
    fn endpoint(&self, x0: &[T], h: T, steps: usize) -> Result<[T; MAX_DIM], FlowError> {
        let mut x = [T::zero(); MAX_DIM];
        x[..self.dim].copy_from_slice(&x0[..self.dim]);
        for k in 0..steps {
            self.rk4_step(&mut x, h);
            if !x[..self.dim].iter().all(|v| v.is_finite()) {
                return Err(FlowError::Diverged {
                    t: (h * lit::<T>(k as f64 + 1.0)).to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(x)
    }
}

/// Node and midpoint positions of the step ladder, from one centre-flow
/// integration at half steps.
fn centre_ladder<T: Real>(
    system: &OpenSystem<T>,
    x0: &PhaseVector<T>,
    t: T,
    steps: usize,
) -> Result<(Vec<PhaseVector<T>>, Vec<PhaseVector<T>>), FlowError> {
    if t == T::zero() {
        return Ok((vec![x0.clone()], Vec::new()));
    }
    let h_half = t / lit(2.0 * steps as f64);
    let fine = centre_flow(system, x0, t, h_half)?;
    let nodes = fine.points.iter().step_by(2).cloned().collect::<Vec<_>>();
    let mids = fine.points.iter().skip(1).step_by(2).cloned().collect::<Vec<_>>();
    Ok((nodes, mids))
}

/// Chord-side linearized generator `J H''(x) + gamma I`.
fn chord_side_generator<T: Real>(system: &OpenSystem<T>, x: &PhaseVector<T>) -> SqMat<T> {
    chord_side_generator_flat(system, &x.flat())
}

fn chord_side_generator_flat<T: Real>(system: &OpenSystem<T>, x: &[T]) -> SqMat<T> {
    let dim = 2 * system.modes();
    let mut hess = [T::zero(); MAX_DIM * MAX_DIM];
    system.hamiltonian.hessian_into(x, &mut hess[..dim * dim]);
    let j = j_matrix::<T>(system.modes());
    let mut a = j.matmul(&SqMat::from_fn(dim, |i, jx| hess[i * dim + jx]));
    for i in 0..dim {
        a[(i, i)] += system.gamma();
    }
    a
}

fn step_count<T: Real>(t: T, dt: T) -> usize {
    if t == T::zero() {
        0
    } else {
        (t / dt).ceil().to_usize().unwrap_or(1).max(1)
    }
}

/// Build the full bundle for one centre point.
pub fn local_bundle<T: Real>(
    system: &OpenSystem<T>,
    x0: &PhaseVector<T>,
    t: T,
    dt: T,
) -> Result<PropagationBundle<T>, FlowError> {
    assert!(dt > T::zero());
    assert!(t >= T::zero(), "bundles run forward");
    let modes = system.modes();
    let dim = 2 * modes;
    let steps = step_count(t, dt);
    let (nodes, mids) = centre_ladder(system, x0, t, steps.max(1))?;
    let lambda = system.channel_form();
    let h = if steps == 0 { T::zero() } else { t / lit(steps as f64) };

    let mut acc = Accumulator::new(dim, modes);
    let mut times = Vec::with_capacity(steps + 1);
    let mut g_of_t = Vec::with_capacity(steps + 1);
    let mut m_of_t = Vec::with_capacity(steps + 1);
    times.push(T::zero());
    g_of_t.push(acc.g_mat());
    m_of_t.push(acc.m_mat());

    // constant generator collapses the time-ordered product: one step block
    let frozen = if system.hamiltonian.is_quadratic() && steps > 0 {
        Some(step_blocks(&chord_side_generator(system, x0), &lambda, h))
    } else {
        None
    };
    for n in 0..steps {
        let (g_step, integral) = match &frozen {
            Some(pair) => *pair,
            None => step_blocks(&chord_side_generator(system, &mids[n]), &lambda, h),
        };
        let t_new = h * lit(n as f64 + 1.0);
        acc.push(&g_step, &integral, t_new);
        times.push(t_new);
        g_of_t.push(acc.g_mat());
        m_of_t.push(acc.m_mat());
    }
    Ok(PropagationBundle { times, x_traj: nodes, g_of_t, m_of_t, t_dec: acc.t_dec, modes })
}

/// Final-time summary (no stored sequences); same stepping as
/// [`local_bundle`].
fn bundle_summary<T: Real>(
    system: &OpenSystem<T>,
    x0: &PhaseVector<T>,
    t: T,
    dt: T,
    frozen: Option<&(Flat<T>, Flat<T>)>,
) -> Result<BundleSummary<T>, FlowError> {
    let modes = system.modes();
    let dim = 2 * modes;
    let steps = step_count(t, dt);
    let lambda = system.channel_form();
    let h = if steps == 0 { T::zero() } else { t / lit(steps as f64) };
    let hh = h * lit(0.5);
    let flow = FastFlow::new(system);
    let mut x = [T::zero(); MAX_DIM];
    x[..dim].copy_from_slice(&x0.flat());
    let mut acc = Accumulator::new(dim, modes);
    for n in 0..steps {
        // advance to the step midpoint, sample the generator, advance again
        flow.rk4_step(&mut x, hh);
        if !x[..dim].iter().all(|v| v.is_finite()) {
            return Err(FlowError::Diverged { t: (h * lit::<T>(n as f64)).to_f64().unwrap_or(f64::NAN) });
        }
        let (g_step, integral) = match frozen {
            Some(pair) => *pair,
            None => step_blocks(&chord_side_generator_flat(system, &x[..dim]), &lambda, h),
        };
        flow.rk4_step(&mut x, hh);
        acc.push(&g_step, &integral, h * lit(n as f64 + 1.0));
    }
    if !x[..dim].iter().all(|v| v.is_finite()) {
        return Err(FlowError::Diverged { t: t.to_f64().unwrap_or(f64::NAN) });
    }
    let g = acc.g_mat();
    let m_fwd = acc.m_mat();
    let g_inv = g
        .inverse()
        .ok_or(FlowError::Diverged { t: t.to_f64().unwrap_or(f64::NAN) })?;
    let m_back = g_inv.transpose().matmul(&m_fwd).matmul(&g_inv).symmetrized();
    Ok(BundleSummary {
        x_t: PhaseVector::from_flat(&x[..dim]),
        det_g: g.det(),
        m_fwd,
        m_back,
        t_dec: acc.t_dec,
    })
}

/// Precomputed step blocks for quadratic systems (position-independent).
fn frozen_blocks<T: Real>(system: &OpenSystem<T>, t: T, dt: T) -> Option<(Flat<T>, Flat<T>)> {
    if !system.hamiltonian.is_quadratic() || t == T::zero() {
        return None;
    }
    let steps = step_count(t, dt);
    let h = t / lit(steps as f64);
    Some(step_blocks(
        &chord_side_generator(system, &PhaseVector::zeros(system.modes())),
        &system.channel_form(),
        h,
    ))
}

/// Mixed centre-to-chord propagator
/// `R(xi, t) = 2^-N exp(i x(t)^xi / hbar) exp(-xi . Mb_t xi / 2 hbar)`.
pub fn mixed_propagator<T: Real>(
    system: &OpenSystem<T>,
    bundle: &PropagationBundle<T>,
    xi: &PhaseVector<T>,
    t: T,
) -> Result<C<T>, EvolveError> {
    let idx = bundle.node_index(t).ok_or(EvolveError::OutsideBundle {
        t: t.to_f64().unwrap_or(f64::NAN),
        t_max: bundle.t_max().to_f64().unwrap_or(f64::NAN),
    })?;
    let hbar = system.hbar;
    let g = &bundle.g_of_t[idx];
    let g_inv = g
        .inverse()
        .ok_or_else(|| EvolveError::Accuracy("propagation matrix is singular".into()))?;
    let m_back = g_inv
        .transpose()
        .matmul(&bundle.m_of_t[idx])
        .matmul(&g_inv)
        .symmetrized();
    let x_t = &bundle.x_traj[idx];
    let phase = crate::phase::skew_product(x_t, xi) / hbar;
    let quad = quadratic_form(&m_back, &xi.flat());
    let amp = lit::<T>(2.0).powi(-(bundle.modes as i32)) * (-quad / (lit::<T>(2.0) * hbar)).exp();
    Ok(C::from_polar(amp, phase))
}

fn quadratic_form<T: Real>(m: &SqMat<T>, v: &[T]) -> T {
    let n = m.dim();
    let mut s = T::zero();
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        s += v[i] * row;
    }
    s
}

/// Concurrent insert-or-get cache of bundle summaries, keyed by the centre
/// point bits and the quantized evolution time.
pub struct BundleCache<T> {
    map: Mutex<HashMap<(Vec<u64>, u64), BundleSummary<T>>>,
}

impl<T: Real> BundleCache<T> {
    pub fn new() -> Self {
        Self { map: Mutex::new(HashMap::new()) }
    }

    fn key(x0: &PhaseVector<T>, t: T) -> (Vec<u64>, u64) {
        let xs = x0
            .flat()
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN).to_bits())
            .collect();
        (xs, t.to_f64().unwrap_or(f64::NAN).to_bits())
    }

    fn get_or_compute(
        &self,
        system: &OpenSystem<T>,
        x0: &PhaseVector<T>,
        t: T,
        dt: T,
        frozen: Option<&(Flat<T>, Flat<T>)>,
    ) -> Result<BundleSummary<T>, FlowError> {
        let key = Self::key(x0, t);
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let summary = bundle_summary(system, x0, t, dt, frozen)?;
        self.map
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| summary.clone());
        Ok(summary)
    }
}

impl<T: Real> Default for BundleCache<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Coherent-state purity fraction beyond `|xi| = 3 sqrt(hbar)`; baseline for
/// the long-chord guard.
fn coherent_tail_baseline() -> f64 {
    (-4.5f64).exp()
}

/// Warn when the input still carries long-chord content: chord-side purity
/// fraction beyond `3 sqrt(hbar)` above the minimal-uncertainty baseline.
fn warn_on_long_chords<T: Real>(chi0: &PhaseGrid<T>) {
    let desc = chi0.descriptor();
    let r2_cut = lit::<T>(9.0) * desc.hbar();
    let mut tail = T::zero();
    let mut total = T::zero();
    for (idx, v) in chi0.samples().iter().enumerate() {
        let xi = desc.point(idx);
        let w = v.norm_sqr();
        total += w;
        if xi.dot(&xi) > r2_cut {
            tail += w;
        }
    }
    if total > T::zero() {
        let frac = (tail / total).to_f64().unwrap_or(0.0);
        if frac > coherent_tail_baseline() + 1e-3 {
            log::warn!(
                "small-chord input carries long-chord content: tail fraction {frac:.3e} beyond 3 sqrt(hbar)"
            );
        }
    }
}

/// Guard shared by the single-shot small-chord evolutions: fail when `t`
/// overshoots the local decoherence time of the populated region.
fn check_tdec_guard<T: Real>(
    system: &OpenSystem<T>,
    summaries: &[BundleSummary<T>],
    t: T,
    policy: &IterationPolicy,
) -> Result<(), EvolveError> {
    if system.gamma() == T::zero() {
        // non-dissipative extrapolation: the step bound is policy-only
        return Ok(());
    }
    let mut t_dec_min = T::infinity();
    for s in summaries {
        if let Some(td) = s.t_dec {
            t_dec_min = t_dec_min.min(td);
        }
    }
    let bound = t_dec_min * lit(policy.tdec_slack);
    if t > bound {
        return Err(EvolveError::Accuracy(format!(
            "requested time {} exceeds the local decoherence bound {}",
            t.to_f64().unwrap_or(f64::NAN),
            bound.to_f64().unwrap_or(f64::NAN),
        )));
    }
    Ok(())
}

/// Grid samples below this fraction of the max are skipped as sources.
const SOURCE_FLOOR: f64 = 1e-14;
/// Quench exponents above this contribute below double precision.
const EXP_CUTOFF: f64 = 46.0;

fn populated_sources<T: Real>(w0: &PhaseGrid<T>) -> Vec<usize> {
    let floor = w0.max_abs() * lit(SOURCE_FLOOR);
    (0..w0.descriptor().len())
        .filter(|&i| w0.samples()[i].norm() > floor)
        .collect()
}

fn collect_summaries<T: Real>(
    system: &OpenSystem<T>,
    w0: &PhaseGrid<T>,
    sources: &[usize],
    t: T,
    dt: T,
) -> Result<Vec<BundleSummary<T>>, EvolveError> {
    let frozen = frozen_blocks(system, t, dt);
    let desc = w0.descriptor();
    let results: Vec<Result<BundleSummary<T>, FlowError>> = sources
        .par_iter()
        .map(|&i| bundle_summary(system, &desc.point(i), t, dt, frozen.as_ref()))
        .collect();
    results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(EvolveError::Flow)
}

/// Small-chord chord-function evolution:
/// `chi(xi, t) = (2 pi hbar)^-N sum_x dV W0(x) exp(i x(t)^xi / hbar) exp(-xi.Mb_t(x) xi / 2 hbar)`.
pub fn evolve_chord_smallchord<T: Real>(
    system: &OpenSystem<T>,
    w0: &PhaseGrid<T>,
    t: T,
    opts: &SmallChordOpts,
) -> Result<PhaseGrid<T>, EvolveError> {
    w0.expect_tag(SpaceTag::Centre)?;
    if t < T::zero() {
        return Err(EvolveError::Flow(FlowError::NegativeTime { t: t.to_f64().unwrap() }));
    }
    let chi0 = wigner_to_chord(w0)?;
    if !system.hamiltonian.is_quadratic() {
        warn_on_long_chords(&chi0);
    }
    let desc = w0.descriptor().clone();
    let chord_desc = chi0.descriptor().clone();
    let hbar = desc.hbar();
    let dt = lit::<T>(opts.dt);
    let cell = desc.cell_volume();
    let sources = populated_sources(w0);
    let summaries = collect_summaries(system, w0, &sources, t, dt)?;
    check_tdec_guard(system, &summaries, t, &opts.policy)?;

    struct Source<T> {
        weight: T, // W0(x) dV
        jx_t: Vec<T>,
        m_back: SqMat<T>,
    }
    let prepared: Vec<Source<T>> = sources
        .iter()
        .zip(&summaries)
        .map(|(&i, s)| Source {
            weight: w0.samples()[i].re * cell,
            jx_t: j_apply(&s.x_t).flat(),
            m_back: s.m_back.clone(),
        })
        .collect();

    let norm = (lit::<T>(2.0) * T::PI() * hbar).powi(desc.modes() as i32);
    let two_hbar = lit::<T>(2.0) * hbar;
    let mut out = PhaseGrid::zeros(SpaceTag::Chord, chord_desc.clone());
    let points: Vec<Vec<T>> = (0..chord_desc.len())
        .map(|i| chord_desc.point(i).flat())
        .collect();
    out.samples_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(j, val)| {
            let xi = &points[j];
            let mut acc = Complex::new(T::zero(), T::zero());
            for src in &prepared {
                let quench = quadratic_form(&src.m_back, xi) / two_hbar;
                if quench > lit(EXP_CUTOFF) {
                    continue;
                }
                // x(t)^xi = (J x(t)) . xi
                let mut phase = T::zero();
                for (a, b) in src.jx_t.iter().zip(xi) {
                    phase += *a * *b;
                }
                acc += C::from_polar(src.weight * (-quench).exp(), phase / hbar);
            }
            *val = acc / norm;
        });
    Ok(out)
}

/// Small-chord Wigner evolution: Gaussian-window transport
/// `W(x', t) = e^{2 N gamma t} sum_x dV W0(x) N(x - x'(-t); hbar M'_t(x)^-1)`
/// with `M' = -J M^-1 J` from the forward decoherence matrix and `x'(-t)`
/// the backward dissipative flow of the evaluation point.
pub fn evolve_wigner_smallchord<T: Real>(
    system: &OpenSystem<T>,
    w0: &PhaseGrid<T>,
    t: T,
    opts: &SmallChordOpts,
) -> Result<PhaseGrid<T>, EvolveError> {
    w0.expect_tag(SpaceTag::Centre)?;
    if t < T::zero() {
        return Err(EvolveError::Flow(FlowError::NegativeTime { t: t.to_f64().unwrap() }));
    }
    {
        let chi0 = wigner_to_chord(w0)?;
        if !system.hamiltonian.is_quadratic() {
            warn_on_long_chords(&chi0);
        }
    }
    let desc = w0.descriptor().clone();
    let hbar = desc.hbar();
    let dt = lit::<T>(opts.dt);
    let modes = desc.modes();
    let gamma = system.gamma();
    let jacobian = (lit::<T>(2.0) * lit::<T>(modes as f64) * gamma * t).exp();

    // pure-transport limit when there is nothing to decohere with
    if system.channels.is_empty() {
        return transport_only(system, w0, t, dt, jacobian);
    }

    let cell = desc.cell_volume();
    let sources = populated_sources(w0);
    let summaries = collect_summaries(system, w0, &sources, t, dt)?;
    check_tdec_guard(system, &summaries, t, &opts.policy)?;

    struct Source<T> {
        x0: Vec<T>,
        x_t: Vec<T>,
        weight: T,        // includes the Gaussian normalization when regular
        window: SqMat<T>, // M' = -J M^-1 J
        degenerate: bool,
    }
    let j = j_matrix::<T>(modes);
    let norm = (lit::<T>(2.0) * T::PI() * hbar).powi(modes as i32);
    let prepared: Vec<Source<T>> = sources
        .iter()
        .zip(&summaries)
        .map(|(&i, s)| {
            let det = s.m_fwd.det();
            let degenerate = !(det > lit(1e-24)) || s.m_fwd.min_eigenvalue_sym() < lit(1e-13);
            let (window, weight) = if degenerate {
                (SqMat::zeros(2 * modes), w0.samples()[i].re * cell)
            } else {
                let inv = s.m_fwd.inverse().expect("non-degenerate");
                let window = j.matmul(&inv).matmul(&j).scale(-T::one()).symmetrized();
                (window, w0.samples()[i].re * cell / (norm * det.sqrt()))
            };
            Source { x0: desc.point(i).flat(), x_t: s.x_t.flat(), weight, window, degenerate }
        })
        .collect();

    // backward flow of every evaluation point
    let back_steps = step_count(t, dt);
    let back_h = if back_steps == 0 { T::zero() } else { -t / lit(back_steps as f64) };
    let back_points: Vec<Result<Vec<T>, FlowError>> = (0..desc.len())
        .into_par_iter()
        .map(|i| {
            let flow = FastFlow::new(system);
            flow.endpoint(&desc.point(i).flat(), back_h, back_steps)
                .map(|x| x[..2 * modes].to_vec())
        })
        .collect();
    let back_points: Vec<Vec<T>> = back_points
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(EvolveError::Flow)?;

    let two_hbar = lit::<T>(2.0) * hbar;
    let dim = 2 * modes;
    let mut out = PhaseGrid::zeros(SpaceTag::Centre, desc.clone());
    out.samples_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, val)| {
            let back = &back_points[i];
            let mut acc = T::zero();
            let mut v = vec![T::zero(); dim];
            for src in &prepared {
                if src.degenerate {
                    continue;
                }
                for k in 0..dim {
                    v[k] = src.x0[k] - back[k];
                }
                let e = quadratic_form(&src.window, &v) / two_hbar;
                if e > lit(EXP_CUTOFF) {
                    continue;
                }
                acc += src.weight * (-e).exp();
            }
            *val = Complex::new(acc * jacobian, T::zero());
        });
    // degenerate sources keep a delta window: deposit at x(t)
    let mut splat = vec![T::zero(); desc.len()];
    for src in prepared.iter().filter(|s| s.degenerate) {
        deposit_bilinear(&desc, &src.x_t, src.weight * jacobian / cell, &mut splat);
    }
    if splat.iter().any(|s| *s != T::zero()) {
        for (o, s) in out.samples_mut().iter_mut().zip(&splat) {
            *o += Complex::new(*s * cell, T::zero());
        }
    }
    Ok(out)
}

/// Classical transport `W(x', t) = e^{2 N gamma t} W0(x'(-t))` via spectral
/// evaluation of the input grid.
fn transport_only<T: Real>(
    system: &OpenSystem<T>,
    w0: &PhaseGrid<T>,
    t: T,
    dt: T,
    jacobian: T,
) -> Result<PhaseGrid<T>, EvolveError> {
    let desc = w0.descriptor().clone();
    let ev = SpectralEvaluator::new(w0).map_err(EvolveError::Grid)?;
    let half_widths: Vec<T> = (0..desc.rank()).map(|a| -desc.axis_coord(a, 0)).collect();
    let dim = desc.rank();
    let steps = step_count(t, dt);
    let h = if steps == 0 { T::zero() } else { -t / lit(steps as f64) };
    let values: Result<Vec<C<T>>, EvolveError> = (0..desc.len())
        .into_par_iter()
        .map(|i| {
            let flow = FastFlow::new(system);
            let back = flow
                .endpoint(&desc.point(i).flat(), h, steps)
                .map_err(EvolveError::Flow)?;
            let inside = back[..dim]
                .iter()
                .zip(&half_widths)
                .all(|(v, hw)| v.abs() <= *hw);
            if inside {
                let v = ev.eval(&PhaseVector::from_flat(&back[..dim]));
                Ok(Complex::new(v.re * jacobian, T::zero()))
            } else {
                Ok(Complex::new(T::zero(), T::zero()))
            }
        })
        .collect();
    PhaseGrid::new(SpaceTag::Centre, desc, values?).map_err(EvolveError::Grid)
}

/// Bilinear deposition of a point mass onto the grid.
fn deposit_bilinear<T: Real>(
    desc: &crate::grid::GridDescriptor<T>,
    x: &[T],
    weight: T,
    out: &mut [T],
) {
    let rank = desc.rank();
    let mut base = vec![0usize; rank];
    let mut frac = vec![T::zero(); rank];
    for axis in 0..rank {
        let n = desc.dims()[axis];
        let s = (x[axis] - desc.axis_coord(axis, 0)) / desc.spacing()[axis];
        if s < T::zero() || s > lit(n as f64 - 1.0) {
            return; // flowed off the grid; shows up in the mass diagnostic
        }
        let k = s.floor().to_usize().unwrap_or(0).min(n - 2);
        base[axis] = k;
        frac[axis] = s - lit(k as f64);
    }
    for corner in 0..(1usize << rank) {
        let mut w = weight;
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
        out[desc.ravel(&multi)] += w;
    }
}

/// Local decoherence-time report at one centre point.
#[derive(Debug, Clone)]
pub struct DecoherenceReport<T> {
    pub x: PhaseVector<T>,
    /// First crossing of `det M_t = 4^-N`, or `+inf` when never reached.
    pub t_dec: T,
    pub det_m_curve: Vec<(T, T)>,
}

impl<T: Real> DecoherenceReport<T> {
    /// CSV with columns `t, det_m`.
    pub fn write_csv<W: IoWrite>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,det_m")?;
        for (t, d) in &self.det_m_curve {
            writeln!(out, "{t:e},{d:e}")?;
        }
        Ok(())
    }
}

/// Local decoherence time: first `t` with `det M_t(x) >= 4^-N`.
pub fn decoherence_time<T: Real>(
    system: &OpenSystem<T>,
    x: &PhaseVector<T>,
    t_max: T,
    dt: T,
) -> Result<DecoherenceReport<T>, FlowError> {
    assert!(t_max > T::zero());
    let bundle = local_bundle(system, x, t_max, dt)?;
    let det_m_curve: Vec<(T, T)> = bundle
        .times
        .iter()
        .zip(&bundle.m_of_t)
        .map(|(t, m)| (*t, m.det()))
        .collect();
    Ok(DecoherenceReport {
        x: x.clone(),
        t_dec: bundle.t_dec.unwrap_or_else(T::infinity),
        det_m_curve,
    })
}

/// Iterated long-time evolution: splits `[0, t_total]` into steps bounded by
/// the policy cap and, when dissipative, the local decoherence time at the
/// mass centroid, applying the small-chord Wigner propagator per step.
pub fn evolve_iterated<T: Real>(
    system: &OpenSystem<T>,
    w0: &PhaseGrid<T>,
    t_total: T,
    opts: &SmallChordOpts,
) -> Result<PhaseGrid<T>, EvolveError> {
    w0.expect_tag(SpaceTag::Centre)?;
    let dt = lit::<T>(opts.dt);
    let mut current = w0.clone();
    let mut remaining = t_total;
    let max_step = lit::<T>(opts.policy.max_step);
    // steps never collapse below this fraction of the cap
    let min_step = max_step * lit(1.0 / 16.0);
    while remaining > lit(1e-12) {
        let mut step = max_step.min(remaining);
        if system.gamma() != T::zero() {
            let centroid = abs_mass_centroid(&current);
            let report = decoherence_time(system, &centroid, step.max(min_step), dt)
                .map_err(EvolveError::Flow)?;
            if report.t_dec.is_finite() {
                step = step.min(report.t_dec.max(min_step));
            }
        }
        step = step.min(remaining);
        current = evolve_wigner_smallchord(system, &current, step, opts)?;
        remaining -= step;
    }
    Ok(current)
}

/// Centroid of `|W|` over the grid.
fn abs_mass_centroid<T: Real>(w: &PhaseGrid<T>) -> PhaseVector<T> {
    let desc = w.descriptor();
    let modes = desc.modes();
    let mut total = T::zero();
    let mut acc = vec![T::zero(); 2 * modes];
    for (idx, v) in w.samples().iter().enumerate() {
        let a = v.norm();
        if a == T::zero() {
            continue;
        }
        total += a;
        for (k, c) in desc.point(idx).flat().iter().enumerate() {
            acc[k] += *c * a;
        }
    }
    if total > T::zero() {
        for c in acc.iter_mut() {
            *c = *c / total;
        }
    }
    PhaseVector::from_flat(&acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDescriptor;
    use crate::hamiltonian::SmoothHamiltonian;
    use crate::quadratic::{decoherence_matrix, propagation_matrix, Direction};
    use crate::states::{build_state, StateSpec};
    use crate::system::LindbladChannel;
    use approx::assert_relative_eq;

    fn damped_oscillator(a: f64) -> OpenSystem<f64> {
        OpenSystem::new(
            SmoothHamiltonian::harmonic(1),
            vec![LindbladChannel::annihilation(a)],
            1.0,
        )
    }

    #[test]
    fn quadratic_bundle_matches_exact_kernel() {
        let sys = damped_oscillator(0.2);
        let t = 1.3;
        let bundle = local_bundle(&sys, &PhaseVector::pq(0.7, -0.4), t, 1e-3).unwrap();
        let g_exact = propagation_matrix(&sys, t).unwrap();
        let m_exact = decoherence_matrix(&sys, t, Direction::Forward).unwrap();
        let g = bundle.g_of_t.last().unwrap();
        let m = bundle.m_of_t.last().unwrap();
        assert!(g.sub(&g_exact).max_abs() < 1e-10, "G mismatch {}", g.sub(&g_exact).max_abs());
        assert!(m.sub(&m_exact).max_abs() < 1e-10, "M mismatch {}", m.sub(&m_exact).max_abs());
        // independence from the starting point for quadratic systems
        let other = local_bundle(&sys, &PhaseVector::pq(0.0, 2.0), t, 1e-3).unwrap();
        assert!(other.g_of_t.last().unwrap().sub(g).max_abs() < 1e-12);
    }

    #[test]
    fn free_bundle_is_linear_in_time() {
        let sys: OpenSystem<f64> = OpenSystem::new(
            SmoothHamiltonian::free_of_motion(1),
            vec![
                LindbladChannel::self_adjoint(PhaseVector::pq(1.0, 0.0)),
                LindbladChannel::self_adjoint(PhaseVector::pq(0.0, 1.0)),
            ],
            1.0,
        );
        let t = 0.8;
        let bundle = local_bundle(&sys, &PhaseVector::pq(0.0, 0.0), t, 1e-3).unwrap();
        let g = bundle.g_of_t.last().unwrap();
        let m = bundle.m_of_t.last().unwrap();
        assert!(g.sub(&SqMat::identity(2)).max_abs() < 1e-14);
        assert_relative_eq!(m[(0, 0)], t, epsilon = 1e-12);
        assert_relative_eq!(m[(1, 1)], t, epsilon = 1e-12);
        // invariants: G(0) = I, M(0) = 0, M monotone PSD-increasing
        assert!(bundle.g_of_t[0].sub(&SqMat::identity(2)).max_abs() == 0.0);
        assert!(bundle.m_of_t[0].max_abs() == 0.0);
        for w in bundle.m_of_t.windows(200) {
            let diff = w[w.len() - 1].sub(&w[0]);
            assert!(diff.min_eigenvalue_sym() >= -1e-12);
        }
    }

    #[test]
    fn quartic_bundle_step_halving() {
        let sys = OpenSystem::new(
            SmoothHamiltonian::Quartic { kappa: 0.0 },
            vec![LindbladChannel::annihilation(0.2)],
            1.0,
        );
        let x0 = PhaseVector::pq(0.0, 1.0);
        let coarse = local_bundle(&sys, &x0, 1.0, 1e-3).unwrap();
        let fine = local_bundle(&sys, &x0, 1.0, 5e-4).unwrap();
        let dg = coarse.g_of_t.last().unwrap().sub(fine.g_of_t.last().unwrap()).max_abs();
        let dm = coarse.m_of_t.last().unwrap().sub(fine.m_of_t.last().unwrap()).max_abs();
        assert!(dg < 1e-6, "G self-consistency {dg}");
        assert!(dm < 1e-6, "M self-consistency {dm}");
    }

    #[test]
    fn bundle_determinant_tracks_dissipation() {
        // det G_t = e^{2 N gamma t} for quadratic and quartic alike
        for sys in [
            damped_oscillator(0.2),
            OpenSystem::new(
                SmoothHamiltonian::Quartic { kappa: 0.0 },
                vec![LindbladChannel::annihilation(0.2)],
                1.0,
            ),
        ] {
            let bundle = local_bundle(&sys, &PhaseVector::pq(0.0, 1.0), 5.0, 1e-3).unwrap();
            let det = bundle.g_of_t.last().unwrap().det();
            let expect = (2.0 * 0.1 * 5.0f64).exp();
            assert!(
                (det - expect).abs() <= 1e-6 * expect,
                "det {det} vs {expect} for {}",
                sys.hamiltonian.kind_name()
            );
        }
    }

    #[test]
    fn mixed_propagator_pins() {
        let sys = damped_oscillator(0.2);
        let x0 = PhaseVector::pq(0.3, 1.1);
        let bundle = local_bundle(&sys, &x0, 1.0, 1e-3).unwrap();
        // xi = 0: exactly 2^-N for all times
        for t in [0.0, 0.4, 1.0] {
            let v = mixed_propagator(&sys, &bundle, &PhaseVector::pq(0.0, 0.0), t).unwrap();
            assert_relative_eq!(v.re, 0.5, epsilon = 1e-14);
            assert_relative_eq!(v.im, 0.0, epsilon = 1e-14);
        }
        // t = 0: static reflection symbol 2^-N exp(i x ^ xi / hbar)
        let xi = PhaseVector::pq(0.5, -0.8);
        let v = mixed_propagator(&sys, &bundle, &xi, 0.0).unwrap();
        let phase = crate::phase::skew_product(&x0, &xi);
        assert_relative_eq!(v.re, 0.5 * phase.cos(), epsilon = 1e-12);
        assert_relative_eq!(v.im, 0.5 * phase.sin(), epsilon = 1e-12);
        // modulus bound
        assert!(2.0 * mixed_propagator(&sys, &bundle, &xi, 1.0).unwrap().norm() <= 1.0 + 1e-12);
        // closed quadratic system: pure phase of modulus 2^-N
        let closed = OpenSystem::closed(SmoothHamiltonian::harmonic(1), 1.0);
        let b2 = local_bundle(&closed, &x0, 1.0, 1e-3).unwrap();
        let v = mixed_propagator(&closed, &b2, &xi, 1.0).unwrap();
        assert_relative_eq!(v.norm(), 0.5, epsilon = 1e-12);
        // outside the bundle range
        assert!(mixed_propagator(&sys, &bundle, &xi, 2.0).is_err());
    }

    #[test]
    fn chord_smallchord_at_zero_time_is_transform() {
        let sys = damped_oscillator(0.2);
        let desc = GridDescriptor::square(1, 64, 8.0, 1.0).unwrap();
        let w0 = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 1.0) }, &desc).unwrap();
        let direct = wigner_to_chord(&w0).unwrap();
        let via = evolve_chord_smallchord(&sys, &w0, 0.0, &SmallChordOpts::default()).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in via.samples().iter().zip(direct.samples()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-9, "zero-time defect {worst}");
    }

    #[test]
    fn chord_smallchord_matches_exact_for_quadratic() {
        let sys = damped_oscillator(0.2);
        let desc = GridDescriptor::square(1, 64, 8.0, 1.0).unwrap();
        let w0 = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 2.0) }, &desc).unwrap();
        let t = 1.0;
        let chi0 = wigner_to_chord(&w0).unwrap();
        let exact = crate::quadratic::evolve_chord_exact(&sys, &chi0, t).unwrap();
        let small = evolve_chord_smallchord(&sys, &w0, t, &SmallChordOpts::default()).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in small.samples().iter().zip(exact.samples()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-8, "smallchord vs exact chord defect {worst}");
        // normalization invariant
        let z = small.at_origin();
        assert_relative_eq!(2.0 * std::f64::consts::PI * z.re, 1.0, epsilon = 1e-9);
        assert!(z.im.abs() < 1e-12);
        // hermiticity carries over
        assert!(small.hermiticity_defect() < 1e-9);
    }

    #[test]
    fn wigner_smallchord_matches_exact_for_quadratic() {
        let sys = damped_oscillator(0.2);
        let desc = GridDescriptor::square(1, 64, 8.0, 1.0).unwrap();
        let w0 = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 2.0) }, &desc).unwrap();
        let t = 1.0;
        let exact = crate::quadratic::evolve_wigner_exact(&sys, &w0, t).unwrap();
        let small = evolve_wigner_smallchord(&sys, &w0, t, &SmallChordOpts::default()).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in small.samples().iter().zip(exact.samples()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-6, "smallchord vs exact wigner defect {worst}");
        assert_relative_eq!(small.mass(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn wigner_smallchord_transport_limit() {
        // no channels: classical transport of the Wigner function
        let sys = OpenSystem::closed(SmoothHamiltonian::harmonic(1), 1.0);
        let desc = GridDescriptor::square(1, 64, 8.0, 1.0).unwrap();
        let w0 = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 2.0) }, &desc).unwrap();
        let t = std::f64::consts::FRAC_PI_2;
        let moved = evolve_wigner_smallchord(&sys, &w0, t, &SmallChordOpts::default()).unwrap();
        let expect = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(-2.0, 0.0) }, &desc).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in moved.samples().iter().zip(expect.samples()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-8, "transport defect {worst}");
    }

    #[test]
    fn decoherence_time_pins() {
        // H = 0, gamma = 0, channels {(1,0)}, {(0,1)}: det M = t^2, t_dec = 1/2
        let sys: OpenSystem<f64> = OpenSystem::new(
            SmoothHamiltonian::free_of_motion(1),
            vec![
                LindbladChannel::self_adjoint(PhaseVector::pq(1.0, 0.0)),
                LindbladChannel::self_adjoint(PhaseVector::pq(0.0, 1.0)),
            ],
            1.0,
        );
        let report = decoherence_time(&sys, &PhaseVector::pq(0.0, 0.0), 2.0, 1e-3).unwrap();
        assert_relative_eq!(report.t_dec, 0.5, epsilon = 1e-6);
        for w in report.det_m_curve.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-15, "det curve must be non-decreasing");
        }

        // no channels: sentinel infinity
        let closed: OpenSystem<f64> = OpenSystem::closed(SmoothHamiltonian::harmonic(1), 1.0);
        let report = decoherence_time(&closed, &PhaseVector::pq(0.0, 0.0), 2.0, 1e-3).unwrap();
        assert!(report.t_dec.is_infinite());

        // conserved channel: L = p with H = p^2/2 keeps rank one forever
        let b = SqMat::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let cons: OpenSystem<f64> = OpenSystem::new(
            SmoothHamiltonian::quadratic(b),
            vec![LindbladChannel::self_adjoint(PhaseVector::pq(1.0, 0.0))],
            1.0,
        );
        let report = decoherence_time(&cons, &PhaseVector::pq(0.3, 0.2), 10.0, 1e-3).unwrap();
        assert!(report.t_dec.is_infinite());
        assert!(report.det_m_curve.last().unwrap().1.abs() < 1e-10);
    }

    #[test]
    fn decoherence_report_csv() {
        let sys = damped_oscillator(0.2);
        let report = decoherence_time(&sys, &PhaseVector::pq(0.0, 0.0), 0.01, 1e-3).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,det_m\n"));
    }

    #[test]
    fn iterated_matches_single_shot_exact() {
        let sys = damped_oscillator(0.2);
        let desc = GridDescriptor::square(1, 64, 8.0, 1.0).unwrap();
        let w0 = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 2.0) }, &desc).unwrap();
        let t_total = 3.0;
        let opts = SmallChordOpts::default();
        let iterated = evolve_iterated(&sys, &w0, t_total, &opts).unwrap();
        let exact = crate::quadratic::evolve_wigner_exact(&sys, &w0, t_total).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in iterated.samples().iter().zip(exact.samples()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-5, "iterated defect {worst}");
        assert_relative_eq!(iterated.mass(), 1.0, epsilon = 1e-5);
        assert!(iterated.max_imag_abs() < 1e-12);
    }

    #[test]
    fn tdec_guard_blocks_overshoot() {
        // strong decoherence crosses 4^-N early; a long single shot must
        // fail with an accuracy error for nonquadratic dissipative dynamics
        let sys = OpenSystem::new(
            SmoothHamiltonian::Quartic { kappa: 0.0 },
            vec![
                LindbladChannel::annihilation(2.0),
                LindbladChannel::self_adjoint(PhaseVector::pq(0.0, 2.0)),
            ],
            1.0,
        );
        let desc = GridDescriptor::square(1, 32, 6.0, 1.0).unwrap();
        let w0 = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 1.0) }, &desc).unwrap();
        match evolve_wigner_smallchord(&sys, &w0, 4.0, &SmallChordOpts::default()) {
            Err(EvolveError::Accuracy(_)) => {}
            other => panic!("expected accuracy error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn bundle_cache_is_consistent() {
        let sys = damped_oscillator(0.2);
        let cache = BundleCache::new();
        let x = PhaseVector::pq(0.2, 0.4);
        let a = cache.get_or_compute(&sys, &x, 0.7, 1e-3, None).unwrap();
        let b = cache.get_or_compute(&sys, &x, 0.7, 1e-3, None).unwrap();
        assert!(a.m_fwd.sub(&b.m_fwd).max_abs() == 0.0);
        let direct = bundle_summary(&sys, &x, 0.7, 1e-3, None).unwrap();
        assert!(a.m_fwd.sub(&direct.m_fwd).max_abs() == 0.0);
        assert!(a.det_g > 0.0);
    }
}
