//! Classical flows: dissipative centre flow, quadratic chord flow, the full
//! double-phase-space flow, and the decoherence functional along
//! trajectories.
//!
//! All integration is fixed-step RK4; `t` may be negative for backward flow.

use std::io::Write;

use crate::error::FlowError;
use crate::phase::{j_apply, DoublePhasePoint, PhaseVector};
use crate::scalar::{lit, Real};
use crate::system::OpenSystem;

/// Default integrator step in natural units.
pub const DEFAULT_DT: f64 = 1e-3;

/// Time-stamped samples of a flow.
#[derive(Debug, Clone)]
pub struct Trajectory<T, P = PhaseVector<T>> {
    pub times: Vec<T>,
    pub points: Vec<P>,
}

impl<T: Real, P> Trajectory<T, P> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &P {
        self.points.last().expect("trajectory is never empty")
    }
}

impl<T: Real> Trajectory<T, PhaseVector<T>> {
    /// CSV with columns `t, p..., q...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let modes = self.points.first().map(|p| p.modes()).unwrap_or(0);
        write!(out, "t")?;
        for m in 0..modes {
            write!(out, ",p{m}")?;
        }
        for m in 0..modes {
            write!(out, ",q{m}")?;
        }
        writeln!(out)?;
        for (t, pt) in self.times.iter().zip(&self.points) {
            write!(out, "{t:e}")?;
            for v in pt.p.iter().chain(pt.q.iter()) {
                write!(out, ",{v:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

impl<T: Real> Trajectory<T, DoublePhasePoint<T>> {
    /// CSV with columns `t, p..., q..., yp..., yq...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let modes = self.points.first().map(|p| p.x.modes()).unwrap_or(0);
        write!(out, "t")?;
        for m in 0..modes {
            write!(out, ",p{m}")?;
        }
        for m in 0..modes {
            write!(out, ",q{m}")?;
        }
        for m in 0..modes {
            write!(out, ",yp{m}")?;
        }
        for m in 0..modes {
            write!(out, ",yq{m}")?;
        }
        writeln!(out)?;
        for (t, pt) in self.times.iter().zip(&self.points) {
            write!(out, "{t:e}")?;
            for v in pt.x.p.iter().chain(pt.x.q.iter()).chain(pt.y.p.iter()).chain(pt.y.q.iter()) {
                write!(out, ",{v:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// One RK4 step of an autonomous field.
fn rk4_step<T: Real, S: Clone>(
    state: &S,
    h: T,
    field: &impl Fn(&S) -> S,
    axpy: &impl Fn(&S, T, &S) -> S, // state + h * delta
) -> S {
    let k1 = field(state);
    let k2 = field(&axpy(state, h * lit(0.5), &k1));
    let k3 = field(&axpy(state, h * lit(0.5), &k2));
    let k4 = field(&axpy(state, h, &k3));
    let sixth = h / lit(6.0);
    let mut out = axpy(state, sixth, &k1);
    out = axpy(&out, sixth * lit(2.0), &k2);
    out = axpy(&out, sixth * lit(2.0), &k3);
    axpy(&out, sixth, &k4)
}

fn step_count<T: Real>(t: T, dt: T) -> usize {
    let steps = (t.abs() / dt).ceil().to_usize().unwrap_or(1);
    steps.max(1)
}

/// Dissipative centre flow `dx/dt = J grad H(x) - gamma x`.
pub fn centre_flow<T: Real>(
    system: &OpenSystem<T>,
    x0: &PhaseVector<T>,
    t: T,
    dt: T,
) -> Result<Trajectory<T>, FlowError> {
    assert!(dt > T::zero(), "dt must be positive");
    let gamma = system.gamma();
    let field = |x: &PhaseVector<T>| -> PhaseVector<T> {
        j_apply(&system.hamiltonian.gradient(x)).sub(&x.scale(gamma))
    };
    let axpy = |x: &PhaseVector<T>, h: T, d: &PhaseVector<T>| x.add(&d.scale(h));
    let steps = step_count(t, dt);
    let h = t / lit(steps as f64);
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    times.push(T::zero());
    points.push(x0.clone());
    let mut x = x0.clone();
    for k in 1..=steps {
        x = rk4_step(&x, h, &field, &axpy);
        let tk = h * lit(k as f64);
        if !x.is_finite() {
            return Err(FlowError::Diverged { t: tk.to_f64().unwrap_or(f64::NAN) });
        }
        times.push(tk);
        points.push(x.clone());
    }
    Ok(Trajectory { times, points })
}

/// Quadratic chord flow `xi(t) = exp[t (JB + gamma I)] xi0`.
pub fn chord_flow_quadratic<T: Real>(
    system: &OpenSystem<T>,
    xi0: &PhaseVector<T>,
    t: T,
) -> Result<PhaseVector<T>, FlowError> {
    let g = crate::quadratic::propagation_matrix(system, t)?;
    Ok(PhaseVector::from_flat(&g.matvec(&xi0.flat())))
}

/// Full double-phase-space flow of `IH(X) = H(x - Jy/2) - H(x + Jy/2) - gamma x.y`.
pub fn double_flow<T: Real>(
    system: &OpenSystem<T>,
    x0: &DoublePhasePoint<T>,
    t: T,
    dt: T,
) -> Result<Trajectory<T, DoublePhasePoint<T>>, FlowError> {
    assert!(dt > T::zero(), "dt must be positive");
    let gamma = system.gamma();
    let half = lit::<T>(0.5);
    let field = |s: &DoublePhasePoint<T>| -> DoublePhasePoint<T> {
        let (plus, minus) = s.tips();
        let gp = system.hamiltonian.gradient(&plus);
        let gm = system.hamiltonian.gradient(&minus);
        // dx/dt = (J/2)(grad H(x+) + grad H(x-)) - gamma x
        let dx = j_apply(&gp.add(&gm)).scale(half).sub(&s.x.scale(gamma));
        // dy/dt = -(grad H(x+) - grad H(x-)) + gamma y
        let dy = gm.sub(&gp).add(&s.y.scale(gamma));
        DoublePhasePoint { x: dx, y: dy }
    };
    let axpy = |s: &DoublePhasePoint<T>, h: T, d: &DoublePhasePoint<T>| DoublePhasePoint {
        x: s.x.add(&d.x.scale(h)),
        y: s.y.add(&d.y.scale(h)),
    };
    let steps = step_count(t, dt);
    let h = t / lit(steps as f64);
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    times.push(T::zero());
    points.push(x0.clone());
    let mut s = x0.clone();
    for k in 1..=steps {
        s = rk4_step(&s, h, &field, &axpy);
        let tk = h * lit(k as f64);
        if !s.is_finite() {
            return Err(FlowError::Diverged { t: tk.to_f64().unwrap_or(f64::NAN) });
        }
        times.push(tk);
        points.push(s.clone());
    }
    Ok(Trajectory { times, points })
}

/// Value of the double Hamiltonian at a point (diagnostic).
pub fn double_hamiltonian<T: Real>(system: &OpenSystem<T>, s: &DoublePhasePoint<T>) -> T {
    let (plus, minus) = s.tips();
    system.hamiltonian.value(&plus) - system.hamiltonian.value(&minus)
        - system.gamma() * s.x.dot(&s.y)
}

/// Decoherence functional along a double-phase trajectory: cumulative
/// trapezoid quadrature of `sum_k |L_k(x+) - L_k(x-)|^2`, returned at every
/// trajectory time stamp. Non-decreasing by construction.
pub fn decoherence_functional<T: Real>(
    system: &OpenSystem<T>,
    traj: &Trajectory<T, DoublePhasePoint<T>>,
) -> Vec<T> {
    let rates: Vec<T> = traj
        .points
        .iter()
        .map(|s| system.channel_quench_rate(&s.chord()))
        .collect();
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = T::zero();
    out.push(T::zero());
    for i in 1..traj.len() {
        let dt = traj.times[i] - traj.times[i - 1];
        acc += (rates[i - 1] + rates[i]) * dt * lit(0.5);
        out.push(acc);
    }
    out
}
