//! Initial state construction on phase-space grids.
//!
//! States are assembled analytically in the chord representation, where
//! coherent superpositions reduce to displacement-operator overlaps, and
//! then transformed to the requested Wigner grid. Building chord-side keeps
//! normalization exact: `(2 pi hbar)^N chi(0) = 1` holds sample-for-sample.



use crate::error::GridError;
use crate::grid::{GridDescriptor, PhaseGrid, SpaceTag};
use crate::phase::PhaseVector;
use crate::scalar::{lit, Real, C};
use crate::transform::chord_to_wigner;

/// Initial state specification.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec<T> {
    /// Coherent state displaced to `centre`.
    Coherent { centre: PhaseVector<T> },
    /// Superposition of two coherent states with a relative phase.
    Cat { centre_a: PhaseVector<T>, centre_b: PhaseVector<T>, phase: T },
    /// Fock state `|n>` (single mode).
    Fock { n: usize },
}

/// Mass allowed on the outermost cell shell of a freshly built state.
pub const BOUNDARY_MASS_THRESHOLD: f64 = 1e-6;

/// Complex mode amplitudes `alpha_n = (q_n + i p_n) / sqrt(2 hbar)`.
fn alphas<T: Real>(x: &PhaseVector<T>, hbar: T) -> Vec<C<T>> {
    let s = (lit::<T>(2.0) * hbar).sqrt();
    (0..x.modes())
        .map(|n| C::new(x.q[n] / s, x.p[n] / s))
        .collect()
}

/// Chord-argument eigenvalue of the translation operator:
/// `T_xi = D(lambda)` with `lambda = i (xi_p - i xi_q) / sqrt(2 hbar)` per mode.
fn lambda_of_chord<T: Real>(xi: &PhaseVector<T>, hbar: T) -> Vec<C<T>> {
    let s = (lit::<T>(2.0) * hbar).sqrt();
    (0..xi.modes())
        .map(|n| C::new(xi.q[n] / s, xi.p[n] / s))
        .collect()
}

/// `<beta| D(mu) |alpha>` for single-mode coherent states.
///
/// `D(mu)|alpha> = exp((mu alpha* - mu* alpha)/2) |alpha + mu>` and
/// `<beta|gamma> = exp(-|beta|^2/2 - |gamma|^2/2 + beta* gamma)`.
fn displaced_overlap<T: Real>(beta: C<T>, mu: C<T>, alpha: C<T>) -> C<T> {
    let half = lit::<T>(0.5);
    let shifted = alpha + mu;
    let phase = (mu * alpha.conj() - mu.conj() * alpha) * half;
    let overlap = beta.conj() * shifted
        - C::new(beta.norm_sqr() * half + shifted.norm_sqr() * half, T::zero());
    (phase + overlap).exp()
}

/// Chord function of the dyad `|alpha><beta|` evaluated at chord `xi`
/// (all quantities per-mode products), without the `(2 pi hbar)^-N` prefactor:
/// `tr(T_{-xi} |alpha><beta|) = <beta| D(-lambda(xi)) |alpha>`.
fn dyad_chord<T: Real>(alpha: &[C<T>], beta: &[C<T>], lambda: &[C<T>]) -> C<T> {
    let mut acc = C::new(T::one(), T::zero());
    for ((a, b), l) in alpha.iter().zip(beta).zip(lambda) {
        acc = acc * displaced_overlap(*b, -*l, *a);
    }
    acc
}

/// Laguerre polynomial `L_n(x)` by the three-term recurrence.
fn laguerre<T: Real>(n: usize, x: T) -> T {
    let mut l0 = T::one();
    if n == 0 {
        return l0;
    }
    let mut l1 = T::one() - x;
    for k in 1..n {
        let kf = lit::<T>(k as f64);
        let l2 = ((lit::<T>(2.0) * kf + T::one() - x) * l1 - kf * l0) / (kf + T::one());
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Analytic chord function of a state spec, evaluated pointwise.
fn chord_value<T: Real>(spec: &StateSpec<T>, xi: &PhaseVector<T>, hbar: T) -> C<T> {
    let lambda = lambda_of_chord(xi, hbar);
    match spec {
        StateSpec::Coherent { centre } => {
            let a = alphas(centre, hbar);
            dyad_chord(&a, &a, &lambda)
        }
        StateSpec::Cat { centre_a, centre_b, phase } => {
            let a = alphas(centre_a, hbar);
            let b = alphas(centre_b, hbar);
            let ph = C::from_polar(T::one(), *phase);
            // overlap <a|b> over modes
            let mut ovl = C::new(T::one(), T::zero());
            for (aa, bb) in a.iter().zip(&b) {
                let half = lit::<T>(0.5);
                ovl = ovl
                    * (aa.conj() * *bb
                        - C::new(aa.norm_sqr() * half + bb.norm_sqr() * half, T::zero()))
                    .exp();
            }
            // |psi> = N (|a> + e^{i phase} |b>), rho = |psi><psi|
            let norm = lit::<T>(2.0) + lit::<T>(2.0) * (ph * ovl).re;
            let sum = dyad_chord(&a, &a, &lambda)
                + dyad_chord(&b, &b, &lambda)
                + dyad_chord(&a, &b, &lambda) * ph.conj()
                + dyad_chord(&b, &a, &lambda) * ph;
            sum / norm
        }
        StateSpec::Fock { n } => {
            // chi_n = exp(-|xi|^2 / 4 hbar) L_n(|xi|^2 / 2 hbar), single mode
            let r2 = xi.dot(xi);
            let arg = r2 / (lit::<T>(2.0) * hbar);
            let val = (-arg * lit::<T>(0.5)).exp() * laguerre(*n, arg);
            C::new(val, T::zero())
        }
    }
}

impl<T: Real> StateSpec<T> {
    fn validate(&self, grid: &GridDescriptor<T>) -> Result<(), GridError> {
        match self {
            StateSpec::Coherent { centre } => {
                if centre.modes() != grid.modes() {
                    return Err(GridError::BadState("state and grid mode counts differ".into()));
                }
            }
            StateSpec::Cat { centre_a, centre_b, .. } => {
                if centre_a.modes() != grid.modes() || centre_b.modes() != grid.modes() {
                    return Err(GridError::BadState("state and grid mode counts differ".into()));
                }
                if centre_a == centre_b {
                    return Err(GridError::BadState("cat requires two distinct centres".into()));
                }
            }
            StateSpec::Fock { .. } => {
                if grid.modes() != 1 {
                    return Err(GridError::BadState("Fock states are single-mode".into()));
                }
            }
        }
        Ok(())
    }

    /// Suggested half-width for a grid holding this state:
    /// `|displacement| + 5 sqrt(hbar/2)`.
    pub fn suggested_half_width(&self, hbar: T) -> T {
        let pad = lit::<T>(5.0) * (hbar * lit::<T>(0.5)).sqrt();
        let disp = match self {
            StateSpec::Coherent { centre } => centre.norm(),
            StateSpec::Cat { centre_a, centre_b, .. } => centre_a.norm().max(centre_b.norm()),
            StateSpec::Fock { n } => (lit::<T>(2.0) * hbar * lit::<T>(*n as f64 + 1.0)).sqrt(),
        };
        disp + pad
    }
}

/// Build a normalized Wigner grid for a state.
///
/// Errors when the grid cannot hold the state: boundary mass above
/// [`BOUNDARY_MASS_THRESHOLD`].
pub fn build_state<T: Real>(
    spec: &StateSpec<T>,
    grid: &GridDescriptor<T>,
) -> Result<PhaseGrid<T>, GridError> {
    spec.validate(grid)?;
    let chord_desc = grid.conjugate();
    let hbar = grid.hbar();
    let prefactor = (lit::<T>(2.0) * T::PI() * hbar).powi(-(grid.modes() as i32));
    let mut chi = PhaseGrid::zeros(SpaceTag::Chord, chord_desc.clone());
    for idx in 0..chord_desc.len() {
        let xi = chord_desc.point(idx);
        chi.samples_mut()[idx] = chord_value(spec, &xi, hbar) * prefactor;
    }
    let w = chord_to_wigner(&chi)?;
    let boundary = w.boundary_mass().to_f64().unwrap_or(f64::NAN);
    if !(boundary <= BOUNDARY_MASS_THRESHOLD) {
        return Err(GridError::TooSmall { mass: boundary, threshold: BOUNDARY_MASS_THRESHOLD });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::purity;
    use approx::assert_relative_eq;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn coherent_at_origin_is_vacuum_gaussian() {
        let hbar = 1.0;
        let desc = GridDescriptor::square(1, 128, 8.0, hbar).unwrap();
        let w = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 0.0) }, &desc).unwrap();
        assert_relative_eq!(w.mass(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.at_origin().re, 1.0 / (PI * hbar), epsilon = 1e-9);
        // spot value: W(x) = (pi hbar)^-1 exp(-|x|^2 / hbar)
        let idx = desc.ravel(&[70, 60]);
        let pt = desc.point(idx);
        let expect = (-(pt.p[0].powi(2) + pt.q[0].powi(2)) / hbar).exp() / (PI * hbar);
        assert_relative_eq!(w.samples()[idx].re, expect, epsilon = 1e-10);
        assert_relative_eq!(purity(&w), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn displaced_coherent_peaks_at_centre() {
        let desc = GridDescriptor::square(1, 128, 8.0, 1.0).unwrap();
        let w = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 2.0) }, &desc).unwrap();
        // peak sits at (p, q) = (0, 2): q index 64 + 2/0.125 = 80
        let idx = desc.ravel(&[64, 80]);
        assert_relative_eq!(w.samples()[idx].re, 1.0 / PI, epsilon = 1e-9);
        assert_relative_eq!(w.mass(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(purity(&w), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn fock_zero_equals_coherent_origin() {
        let desc = GridDescriptor::square(1, 64, 8.0, 1.0).unwrap();
        let a = build_state(&StateSpec::Fock { n: 0 }, &desc).unwrap();
        let b = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 0.0) }, &desc).unwrap();
        let mut worst = 0.0f64;
        for (x, y) in a.samples().iter().zip(b.samples()) {
            worst = worst.max((x - y).norm());
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn fock_one_is_negative_at_origin() {
        let hbar = 1.0;
        let desc = GridDescriptor::square(1, 128, 8.0, hbar).unwrap();
        let w = build_state(&StateSpec::Fock { n: 1 }, &desc).unwrap();
        assert_relative_eq!(w.at_origin().re, -1.0 / (PI * hbar), epsilon = 1e-9);
        assert_relative_eq!(w.mass(), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn cat_interference_fringes_at_midpoint() {
        let desc = GridDescriptor::square(1, 128, 8.0, 1.0).unwrap();
        let spec = StateSpec::Cat {
            centre_a: PhaseVector::pq(0.0, 2.0),
            centre_b: PhaseVector::pq(0.0, -2.0),
            phase: 0.0,
        };
        let w = build_state(&spec, &desc).unwrap();
        assert_relative_eq!(w.mass(), 1.0, epsilon = 1e-11);
        assert_relative_eq!(purity(&w), 1.0, epsilon = 1e-4);
        // scan the p-axis through the origin: fringes must dip negative
        let mut min_on_axis = f64::INFINITY;
        for ip in 0..128 {
            let idx = desc.ravel(&[ip, 64]);
            min_on_axis = min_on_axis.min(w.samples()[idx].re);
        }
        assert!(min_on_axis < -0.05, "no interference fringes: min {min_on_axis}");
    }

    #[test]
    fn cat_needs_distinct_centres() {
        let desc = GridDescriptor::square(1, 64, 8.0, 1.0).unwrap();
        let spec = StateSpec::Cat {
            centre_a: PhaseVector::pq(0.0, 2.0),
            centre_b: PhaseVector::pq(0.0, 2.0),
            phase: 0.0,
        };
        assert!(build_state(&spec, &desc).is_err());
    }

    #[test]
    fn too_small_grid_rejected() {
        let desc = GridDescriptor::square(1, 32, 2.0, 1.0).unwrap();
        let spec = StateSpec::Coherent { centre: PhaseVector::pq(0.0, 2.0) };
        assert!(matches!(build_state(&spec, &desc), Err(GridError::TooSmall { .. })));
    }

    #[test]
    fn mixture_purity_is_half() {
        let desc = GridDescriptor::square(1, 128, 8.0, 1.0).unwrap();
        let a = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 3.0) }, &desc).unwrap();
        let b = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, -3.0) }, &desc).unwrap();
        let mut mix = a.clone();
        for (m, (x, y)) in mix.samples_mut().iter_mut().zip(a.samples().iter().zip(b.samples())) {
            *m = (x + y) * 0.5;
        }
        assert_relative_eq!(purity(&mix), 0.5, epsilon = 1e-3);
    }

    #[test]
    fn vacuum_chord_closed_form() {
        // wigner_to_chord of the built vacuum gives (2 pi hbar)^-1 exp(-|xi|^2/4hbar)
        let hbar: f64 = 0.8;
        let desc = GridDescriptor::square(1, 128, 8.0 * hbar.sqrt(), hbar).unwrap();
        let w = build_state(&StateSpec::Coherent { centre: PhaseVector::pq(0.0, 0.0) }, &desc).unwrap();
        let chi = crate::transform::wigner_to_chord(&w).unwrap();
        let cd = chi.descriptor().clone();
        let idx = cd.ravel(&[70, 61]);
        let xi = cd.point(idx);
        let expect = (-(xi.p[0].powi(2) + xi.q[0].powi(2)) / (4.0 * hbar)).exp() / (2.0 * PI * hbar);
        assert_relative_eq!(chi.samples()[idx].re, expect, epsilon = 1e-10);
    }
}
