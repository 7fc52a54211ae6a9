use nalgebra::{DMatrix, DVector};

use super::linalg::{solve_symmetric, EquilibratedCholesky};
use super::modal::modes_of;
use super::statics::{axial_fixed_point, FixedPoint};
use super::{LoadSet, SolveOptions};
use crate::beam::{axial_force, BeamConfig, BeamState, SystemMatrices};
use crate::error::{Error, Result};

/// Operators of the integrated coordinates: free DOFs for the full system,
/// modal amplitudes for the reduced one.
#[derive(Debug, Clone)]
struct Operators {
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    geometric: DMatrix<f64>,
}

#[derive(Debug, Clone)]
enum Coordinates {
    Full,
    Modal {
        /// `Φ`, free DOFs × modes.
        shapes: DMatrix<f64>,
        /// `Φᵀ M_ff`, projects free-DOF vectors onto modal amplitudes.
        projector: DMatrix<f64>,
    },
}

#[derive(Debug, Clone)]
enum Factor {
    Cholesky(EquilibratedCholesky),
    Dense(DMatrix<f64>),
}

impl Factor {
    fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Factor::Cholesky(c) => Ok(c.solve(b)),
            Factor::Dense(a) => solve_symmetric(a, b),
        }
    }
}

/// Newmark-β integrator for one beam, owning its factorizations.
///
/// The effective stiffness is refactorized only when the membrane force
/// changes, so the cantilever (which never carries membrane force)
/// factorizes once.
#[derive(Debug, Clone)]
pub struct TransientSolver {
    config: BeamConfig,
    system: SystemMatrices,
    options: SolveOptions,
    coordinates: Coordinates,
    operators: Operators,
    mass_factor: Option<EquilibratedCholesky>,
    /// Free × prescribed blocks of `K_L` and `K_NL`.
    stiffness_coupling: DMatrix<f64>,
    geometric_coupling: DMatrix<f64>,
    prescribed: DVector<f64>,
    cached: Option<(u64, Factor)>,
}

impl TransientSolver {
    pub fn new(config: &BeamConfig, options: &SolveOptions) -> Result<Self> {
        config.validate()?;
        Self::with_system(config, SystemMatrices::assemble(config), options)
    }

    /// Integrator over pre-assembled (possibly contact-constrained) matrices.
    pub fn with_system(config: &BeamConfig, system: SystemMatrices, options: &SolveOptions) -> Result<Self> {
        options.validate()?;
        let dofs = &system.dofs;
        let n_free = dofs.free().len();
        if n_free == 0 {
            return Err(Error::FullyConstrained);
        }
        let m_ff = dofs.free_block(&system.mass);
        let k_ff = dofs.free_block(&system.stiffness);
        let g_ff = dofs.free_block(&system.geometric);

        let (coordinates, operators, mass_factor) = match options.modal_truncation {
            Some(m) if m > n_free => {
                return Err(Error::InvalidArgument(format!(
                    "modal truncation {m} exceeds {n_free} free DOFs"
                )))
            }
            Some(m) => {
                let basis = modes_of(&system, &system.stiffness, m)?;
                let shapes = basis.shapes;
                let projector = shapes.transpose() * &m_ff;
                let stiffness = DMatrix::from_diagonal(&DVector::from_iterator(m, basis.omega.iter().map(|w| w * w)));
                let geometric = shapes.transpose() * &g_ff * &shapes;
                (
                    Coordinates::Modal { shapes, projector },
                    Operators {
                        mass: DMatrix::identity(m, m),
                        stiffness,
                        geometric: (&geometric + geometric.transpose()) * 0.5,
                    },
                    None,
                )
            }
            None => {
                let mass_factor = EquilibratedCholesky::new(&m_ff)?;
                (
                    Coordinates::Full,
                    Operators {
                        mass: m_ff,
                        stiffness: k_ff,
                        geometric: g_ff,
                    },
                    Some(mass_factor),
                )
            }
        };

        Ok(Self {
            config: *config,
            stiffness_coupling: dofs.coupling_block(&system.stiffness),
            geometric_coupling: dofs.coupling_block(&system.geometric),
            prescribed: dofs.prescribed_values(),
            system,
            options: *options,
            coordinates,
            operators,
            mass_factor,
            cached: None,
        })
    }

    pub fn config(&self) -> &BeamConfig {
        &self.config
    }

    pub fn system(&self) -> &SystemMatrices {
        &self.system
    }

    pub fn options(&self) -> &SolveOptions {
        &self.options
    }

    /// Number of integrated coordinates.
    pub fn dimension(&self) -> usize {
        self.operators.mass.nrows()
    }

    /// Mode shapes over the free DOFs when integrating modal amplitudes.
    pub fn modal_shapes(&self) -> Option<&DMatrix<f64>> {
        match &self.coordinates {
            Coordinates::Full => None,
            Coordinates::Modal { shapes, .. } => Some(shapes),
        }
    }

    fn to_coordinates(&self, full: &DVector<f64>) -> DVector<f64> {
        let free = self.system.dofs.restrict(full);
        match &self.coordinates {
            Coordinates::Full => free,
            Coordinates::Modal { projector, .. } => projector * free,
        }
    }

    fn expand(&self, x: &DVector<f64>, with_prescribed: bool) -> DVector<f64> {
        let free = match &self.coordinates {
            Coordinates::Full => x.clone(),
            Coordinates::Modal { shapes, .. } => shapes * x,
        };
        self.system.dofs.expand(&free, with_prescribed)
    }

    fn generalized_force(&self, load: &DVector<f64>, axial: f64) -> DVector<f64> {
        let mut free = self.system.dofs.restrict(load);
        if !self.prescribed.is_empty() {
            let coupling = if axial == 0.0 {
                self.stiffness_coupling.clone()
            } else {
                &self.stiffness_coupling - &self.geometric_coupling * (axial / self.system.length)
            };
            free -= coupling * &self.prescribed;
        }
        match &self.coordinates {
            Coordinates::Full => free,
            Coordinates::Modal { shapes, .. } => shapes.transpose() * free,
        }
    }

    fn stiffness_at(&self, axial: f64) -> DMatrix<f64> {
        if axial == 0.0 {
            self.operators.stiffness.clone()
        } else {
            &self.operators.stiffness - &self.operators.geometric * (axial / self.system.length)
        }
    }

    fn damping(&self) -> DMatrix<f64> {
        let d = self.options.damping;
        &self.operators.mass * d.alpha + &self.operators.stiffness * d.beta
    }

    fn effective_factor(&mut self, axial: f64) -> Result<&Factor> {
        let key = axial.to_bits();
        if self.cached.as_ref().map(|(k, _)| *k) != Some(key) {
            let dt = self.options.dt;
            let nm = self.options.newmark;
            let a0 = 1.0 / (nm.beta * dt * dt);
            let a1 = nm.gamma / (nm.beta * dt);
            let k_hat = self.stiffness_at(axial) + &self.operators.mass * a0 + self.damping() * a1;
            let factor = match EquilibratedCholesky::new(&k_hat) {
                Ok(c) => Factor::Cholesky(c),
                Err(_) => Factor::Dense(k_hat),
            };
            self.cached = Some((key, factor));
        }
        Ok(&self.cached.as_ref().expect("factor cached above").1)
    }

    /// Acceleration satisfying the equation of motion for `state` under the
    /// nodal load vector `load`.
    pub fn consistent_acceleration(&self, state: &BeamState, load: &DVector<f64>) -> Result<BeamState> {
        let axial = axial_force(state, &self.config);
        let x = self.to_coordinates(&state.q);
        let v = self.to_coordinates(&state.q_dot);
        let rhs = self.generalized_force(load, axial) - self.damping() * v - self.stiffness_at(axial) * x;
        let a = match &self.mass_factor {
            Some(factor) => factor.solve(&rhs),
            None => rhs,
        };
        let mut out = state.clone();
        out.q_ddot = self.expand(&a, false);
        Ok(out)
    }

    /// One time step under `loads`.
    pub fn step(&mut self, state: &BeamState, loads: &LoadSet) -> Result<BeamState> {
        let load = loads.load_vector(&self.config)?;
        self.step_with_load(state, &load)
    }

    /// One time step under a full nodal load vector.
    pub fn step_with_load(&mut self, state: &BeamState, load: &DVector<f64>) -> Result<BeamState> {
        if state.n_dofs() != self.system.n_dofs() || load.len() != self.system.n_dofs() {
            return Err(Error::InvalidArgument(format!(
                "state/load sized for {}/{} DOFs, solver has {}",
                state.n_dofs(),
                load.len(),
                self.system.n_dofs()
            )));
        }
        let dt = self.options.dt;
        let nm = self.options.newmark;
        let (gamma, beta) = (nm.gamma, nm.beta);
        let a0 = 1.0 / (beta * dt * dt);
        let a1 = gamma / (beta * dt);
        let a2 = 1.0 / (beta * dt);
        let a3 = 1.0 / (2.0 * beta) - 1.0;
        let a4 = gamma / beta - 1.0;
        let a5 = dt * (gamma / (2.0 * beta) - 1.0);

        let x = self.to_coordinates(&state.q);
        let v = self.to_coordinates(&state.q_dot);
        let a = self.to_coordinates(&state.q_ddot);
        let advance =
            |this: &mut Self, axial: f64, a: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
                let inertial = &x * a0 + &v * a2 + a * a3;
                let damped = &x * a1 + &v * a4 + a * a5;
                let rhs =
                    this.generalized_force(load, axial) + &this.operators.mass * inertial + this.damping() * damped;
                let x_next = this.effective_factor(axial)?.solve(&rhs)?;
                let a_next = (&x_next - &x) * a0 - &v * a2 - a * a3;
                let v_next = &v + (a * (1.0 - gamma) + &a_next * gamma) * dt;
                Ok((x_next, v_next, a_next))
            };

        if !self.config.boundary.restrains_axial_motion() {
            let (x_next, v_next, a_next) = advance(self, 0.0, &a)?;
            return self.finish(state, &x_next, &v_next, &a_next);
        }

        // The membrane force enters at the mean of its start and end values,
        // a discrete gradient of the membrane energy, so the step conserves
        // energy like the linear average-acceleration rule. The stored
        // acceleration is consistent with the start value; shifting it to
        // the mean keeps the scheme in Newmark form.
        let axial_start = axial_force(state, &self.config);
        let g_start = self.geometric_action(&x);
        let outcome = axial_fixed_point(axial_start, &self.options.clone(), |mean| {
            let shift = self.solve_mass(&g_start * ((mean - axial_start) / self.system.length));
            let (x_next, v_next, _) = advance(self, mean, &(&a + shift))?;
            let end = axial_force(&BeamState::at_rest(self.expand(&x_next, true)), &self.config);
            if !end.is_finite() {
                return Err(Error::Divergence { time: state.time + dt });
            }
            Ok((0.5 * (axial_start + end), (x_next, v_next)))
        })?;
        let (x_next, v_next) = match outcome {
            FixedPoint::Converged(step) => step,
            FixedPoint::Exhausted { residual, last } => {
                return Err(Error::Convergence {
                    iterations: self.options.max_iterations,
                    residual,
                    last: Box::new(BeamState {
                        q: self.expand(&last.0, true),
                        q_dot: self.expand(&last.1, false),
                        q_ddot: DVector::zeros(state.n_dofs()),
                        time: state.time + dt,
                    }),
                })
            }
        };
        let mut next = BeamState {
            q: self.expand(&x_next, true),
            q_dot: self.expand(&v_next, false),
            q_ddot: DVector::zeros(state.n_dofs()),
            time: state.time + dt,
        };
        if !next.is_finite() {
            return Err(Error::Divergence { time: next.time });
        }
        next.q_ddot = self.consistent_acceleration(&next, load)?.q_ddot;
        Ok(next)
    }

    fn finish(&self, state: &BeamState, x: &DVector<f64>, v: &DVector<f64>, a: &DVector<f64>) -> Result<BeamState> {
        let next = BeamState {
            q: self.expand(x, true),
            q_dot: self.expand(v, false),
            q_ddot: self.expand(a, false),
            time: state.time + self.options.dt,
        };
        if !next.is_finite() {
            return Err(Error::Divergence { time: next.time });
        }
        Ok(next)
    }

    /// `K_NL x` in integrated coordinates, including the prescribed DOFs.
    fn geometric_action(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.operators.geometric * x;
        if !self.prescribed.is_empty() {
            let coupled = &self.geometric_coupling * &self.prescribed;
            out += match &self.coordinates {
                Coordinates::Full => coupled,
                Coordinates::Modal { shapes, .. } => shapes.transpose() * coupled,
            };
        }
        out
    }

    fn solve_mass(&self, b: DVector<f64>) -> DVector<f64> {
        match &self.mass_factor {
            Some(factor) => factor.solve(&b),
            None => b,
        }
    }
}

/// Terms of the energy functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `½ q̇ᵀ M q̇`
    pub kinetic: f64,
    /// `½ qᵀ K_L q`
    pub strain: f64,
    /// Membrane strain energy `N² L / (2 EA)`.
    pub membrane: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.kinetic + self.strain + self.membrane
    }
}

/// Total energy (J) of `state`: kinetic, bending and membrane terms.
pub fn energy(state: &BeamState, config: &BeamConfig) -> f64 {
    energy_with(state, config, &SystemMatrices::assemble(config)).total()
}

pub fn energy_with(state: &BeamState, config: &BeamConfig, system: &SystemMatrices) -> EnergyBreakdown {
    let axial = axial_force(state, config);
    let q = &state.q;
    EnergyBreakdown {
        kinetic: 0.5 * state.q_dot.dot(&(&system.mass * &state.q_dot)),
        strain: 0.5 * q.dot(&(&system.stiffness * q)),
        membrane: 0.5 * axial * axial * config.length / config.axial_rigidity(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::BoundaryCondition;
    use crate::solver::{modal_reduce, static_solve, LoadPosition};
    use std::f64::consts::PI;

    #[test]
    fn zero_state_stays_zero() {
        let config = BeamConfig::reference_cantilever(8);
        let mut solver = TransientSolver::new(&config, &SolveOptions::default()).unwrap();
        let mut state = BeamState::zeros(config.n_dofs());
        for _ in 0..50 {
            state = solver.step(&state, &LoadSet::new()).unwrap();
        }
        assert!(state.q.iter().all(|&v| v == 0.0));
        assert!((state.time - 50e-3).abs() < 1e-12);
    }

    #[test]
    fn steps_are_bit_reproducible() {
        let config = BeamConfig::reference_cantilever(8).with_boundary(BoundaryCondition::ClampedClamped);
        let options = SolveOptions::default().with_dt(1e-6);
        let loads = LoadSet::point(LoadPosition::Arc(0.4 * config.length), 5e-4);
        let run = || {
            let mut solver = TransientSolver::new(&config, &options).unwrap();
            let mut state = BeamState::zeros(config.n_dofs());
            for _ in 0..200 {
                state = solver.step(&state, &loads).unwrap();
            }
            state
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.q.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.q.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn undamped_free_vibration_conserves_energy() {
        let config = BeamConfig::reference_cantilever(16);
        let loads = LoadSet::point(LoadPosition::Node(16), 1e-6);
        let initial = static_solve(&config, &loads, &SolveOptions::default()).unwrap();
        let options = SolveOptions::default().with_dt(1e-6);
        let mut solver = TransientSolver::new(&config, &options).unwrap();
        let free = DVector::zeros(config.n_dofs());
        let mut state = solver.consistent_acceleration(&initial, &free).unwrap();
        let e0 = energy(&state, &config);
        for _ in 0..1000 {
            state = solver.step_with_load(&state, &free).unwrap();
        }
        let drift = (energy(&state, &config) / e0 - 1.0).abs();
        assert!(drift < 1e-3, "drift {drift:e}");
        // the tip actually moved
        assert!((state.deflection(16) - initial.deflection(16)).abs() > 1e-3 * initial.deflection(16));
    }

    #[test]
    fn bridge_membrane_vibration_is_stable() {
        // released from about a thickness, where the membrane term is no
        // longer small; a frozen membrane force blows up here
        let config = BeamConfig::reference_cantilever(16).with_boundary(BoundaryCondition::ClampedClamped);
        let loads = LoadSet::point(LoadPosition::Node(8), 5e-5);
        let initial = static_solve(&config, &loads, &SolveOptions::default()).unwrap();
        for (dt, modes) in [(1e-6, None), (1e-3, None), (1e-6, Some(6)), (1e-3, Some(6))] {
            let options = SolveOptions::default().with_dt(dt).with_modes(modes);
            let mut solver = TransientSolver::new(&config, &options).unwrap();
            let free = DVector::zeros(config.n_dofs());
            let state = solver.consistent_acceleration(&initial, &free).unwrap();
            // the first step projects onto the retained modes
            let mut state = solver.step_with_load(&state, &free).unwrap();
            let e0 = energy(&state, &config);
            for _ in 0..500 {
                state = solver.step_with_load(&state, &free).unwrap();
                let drift = (energy(&state, &config) / e0 - 1.0).abs();
                assert!(drift < 1e-3, "dt {dt:e}, modes {modes:?}: drift {drift:e}");
            }
        }
    }

    #[test]
    fn damped_response_settles_to_static() {
        let config = BeamConfig::reference_cantilever(16);
        let loads = LoadSet::point(LoadPosition::Node(16), 1e-6);
        let target = static_solve(&config, &loads, &SolveOptions::default())
            .unwrap()
            .deflection(16);
        let (f, _) = crate::solver::natural_frequencies(&config, 1).unwrap();
        let omega1 = 2.0 * PI * f[0];
        let options = SolveOptions::default()
            .with_dt(1e-6)
            .with_damping(2.0 * 0.3 * omega1, 0.0);
        let mut solver = TransientSolver::new(&config, &options).unwrap();
        let mut state = BeamState::zeros(config.n_dofs());
        for _ in 0..3000 {
            state = solver.step(&state, &loads).unwrap();
        }
        assert!((state.deflection(16) / target - 1.0).abs() < 5e-3);
    }

    #[test]
    fn single_mode_oscillates_at_first_frequency() {
        let config = BeamConfig::reference_cantilever(16);
        let reduced = modal_reduce(&config, 1).unwrap();
        let period = 2.0 * PI / reduced.basis.omega[0];
        let dt = period / 200.0;
        let options = SolveOptions::default().with_dt(dt).with_modes(Some(1));
        let mut solver = TransientSolver::new(&config, &options).unwrap();
        let mut state = BeamState::at_rest(reduced.basis.full_shape(0) * 1e-7);
        state = solver
            .consistent_acceleration(&state, &DVector::zeros(config.n_dofs()))
            .unwrap();
        let free = DVector::zeros(config.n_dofs());
        let mut crossings = Vec::new();
        let mut previous = state.deflection(16);
        for k in 1..=1000 {
            state = solver.step_with_load(&state, &free).unwrap();
            let tip = state.deflection(16);
            if previous > 0.0 && tip <= 0.0 {
                crossings.push(k as f64 * dt - dt * tip / (tip - previous));
            }
            previous = tip;
        }
        let measured: f64 = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        assert!((measured / period - 1.0).abs() < 0.01, "{measured} vs {period}");
    }

    #[test]
    fn oversized_truncation_rejected() {
        let config = BeamConfig::reference_cantilever(2);
        let options = SolveOptions::default().with_modes(Some(5));
        assert!(TransientSolver::new(&config, &options).is_err());
    }

    #[test]
    fn energy_of_static_state_is_potential_only() {
        let config = BeamConfig::reference_cantilever(8).with_boundary(BoundaryCondition::ClampedClamped);
        let loads = LoadSet::point(LoadPosition::Node(4), 1e-3);
        let state = static_solve(&config, &loads, &SolveOptions::default()).unwrap();
        let system = SystemMatrices::assemble(&config);
        let axial = axial_force(&state, &config);
        let e = energy_with(&state, &config, &system);
        assert_eq!(e.kinetic, 0.0);
        assert!((e.strain / (0.5 * state.q.dot(&(&system.stiffness * &state.q))) - 1.0).abs() < 1e-12);
        // for small slopes the membrane energy is half the geometric work
        let work = -0.5 * axial / config.length * state.q.dot(&(&system.geometric * &state.q));
        assert!(e.membrane > 0.0 && (e.membrane / (0.5 * work) - 1.0).abs() < 1e-3);
        assert_eq!(energy(&BeamState::zeros(config.n_dofs()), &config), 0.0);
    }
}
