//! Phase-space simulation of Markovian open quantum systems.
//!
//! The library evolves density operators represented on uniform phase-space
//! grids, either as Wigner functions (centre representation) or as chord
//! functions (their symplectic Fourier transform). Quadratic Hamiltonians
//! with linear Lindblad channels evolve in closed form; generic smooth
//! Hamiltonians use a small-chord propagator built from local propagation
//! and decoherence matrices along dissipative classical trajectories. A
//! truncated Fock-space integrator of the master equation serves as the
//! brute-force oracle for validation.
//!
//! All numerics are generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`); the `*64` aliases below are the tested configuration.

pub mod error;
pub mod linalg;
pub mod phase;
pub mod scalar;

pub mod grid;
pub mod states;
pub mod transform;

pub mod flow;
pub mod hamiltonian;
pub mod system;

pub mod quadratic;
pub mod smallchord;

pub mod fock;

pub mod psg;

pub use phase::{j_apply, skew_product};

/// Concrete `f64` aliases; the tested precision.
pub type C64 = num_complex::Complex<f64>;
pub type PhaseVector64 = phase::PhaseVector<f64>;
pub type DoublePhasePoint64 = phase::DoublePhasePoint<f64>;
pub type SqMat64 = linalg::SqMat<f64>;
pub type GridDescriptor64 = grid::GridDescriptor<f64>;
pub type PhaseGrid64 = grid::PhaseGrid<f64>;
pub type StateSpec64 = states::StateSpec<f64>;
pub type SmoothHamiltonian64 = hamiltonian::SmoothHamiltonian<f64>;
pub type LindbladChannel64 = system::LindbladChannel<f64>;
pub type OpenSystem64 = system::OpenSystem<f64>;
pub type Trajectory64 = flow::Trajectory<f64>;
pub type GaussianKernel64 = quadratic::GaussianKernel<f64>;
pub type PropagationBundle64 = smallchord::PropagationBundle<f64>;
pub type DecoherenceReport64 = smallchord::DecoherenceReport<f64>;
pub type DensityMatrix64 = fock::DensityMatrix<f64>;
