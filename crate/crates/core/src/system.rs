//! Open systems: Hamiltonian plus linear Lindblad channels.

use crate::hamiltonian::SmoothHamiltonian;
use crate::linalg::SqMat;
use crate::phase::{skew_product, PhaseVector};
use crate::scalar::{lit, Real};

/// Linear Lindblad channel `L(x) = l.x` with `l = l' + i l''`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladChannel<T> {
    /// Real part `l'`.
    pub lp: PhaseVector<T>,
    /// Imaginary part `l''`.
    pub lpp: PhaseVector<T>,
}

impl<T: Real> LindbladChannel<T> {
    pub fn new(lp: PhaseVector<T>, lpp: PhaseVector<T>) -> Self {
        assert_eq!(lp.modes(), lpp.modes());
        Self { lp, lpp }
    }

    /// Self-adjoint channel, `l'' = 0`.
    pub fn self_adjoint(lp: PhaseVector<T>) -> Self {
        let modes = lp.modes();
        Self { lp, lpp: PhaseVector::zeros(modes) }
    }

    /// Channel proportional to the annihilation operator of one mode:
    /// `sqrt(strength) * (q + i p)/sqrt(2)` as a phase-space function.
    pub fn annihilation(strength: T) -> Self {
        let s = (strength * lit(0.5)).sqrt();
        Self { lp: PhaseVector::pq(T::zero(), s), lpp: PhaseVector::pq(s, T::zero()) }
    }

    /// Channel proportional to the creation operator:
    /// `sqrt(strength) * (q - i p)/sqrt(2)`.
    pub fn creation(strength: T) -> Self {
        let s = (strength * lit(0.5)).sqrt();
        Self { lp: PhaseVector::pq(T::zero(), s), lpp: PhaseVector::pq(-s, T::zero()) }
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.lpp.flat().iter().all(|x| *x == T::zero())
    }
}

/// Dissipation coefficient `gamma = sum_k l''_k ^ l'_k`.
///
/// The wedge order is fixed so that the annihilation channel contracts the
/// centre flow (`gamma > 0`); self-adjoint channels contribute nothing.
pub fn dissipation_coefficient<T: Real>(channels: &[LindbladChannel<T>]) -> T {
    channels
        .iter()
        .fold(T::zero(), |g, c| g + skew_product(&c.lpp, &c.lp))
}

/// Hamiltonian, channels and `hbar`, with the derived dissipation
/// coefficient cached at construction.
#[derive(Debug, Clone)]
pub struct OpenSystem<T> {
    pub hamiltonian: SmoothHamiltonian<T>,
    pub channels: Vec<LindbladChannel<T>>,
    pub hbar: T,
    gamma: T,
}

impl<T: Real> OpenSystem<T> {
    pub fn new(hamiltonian: SmoothHamiltonian<T>, channels: Vec<LindbladChannel<T>>, hbar: T) -> Self {
        assert!(hbar > T::zero(), "hbar must be positive");
        let gamma = dissipation_coefficient(&channels);
        Self { hamiltonian, channels, hbar, gamma }
    }

    /// Closed system: no channels.
    pub fn closed(hamiltonian: SmoothHamiltonian<T>, hbar: T) -> Self {
        Self::new(hamiltonian, Vec::new(), hbar)
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn modes(&self) -> usize {
        self.hamiltonian.modes()
    }

    /// Channel quadratic form `Lambda = sum_k (l' l'^T + l'' l''^T)`.
    pub fn channel_form(&self) -> SqMat<T> {
        let dim = 2 * self.modes();
        let mut m = SqMat::zeros(dim);
        for c in &self.channels {
            m = m.add(&SqMat::outer(&c.lp.flat(), T::one()));
            m = m.add(&SqMat::outer(&c.lpp.flat(), T::one()));
        }
        m
    }

    /// `sum_k |L_k(x+) - L_k(x-)|^2` for linear channels equals
    /// `sum_k (l'_k.xi)^2 + (l''_k.xi)^2` with `xi = x+ - x-`.
    pub fn channel_quench_rate(&self, xi: &PhaseVector<T>) -> T {
        self.channels.iter().fold(T::zero(), |acc, c| {
            let a = c.lp.dot(xi);
            let b = c.lpp.dot(xi);
            acc + a * a + b * b
        })
    }
}
