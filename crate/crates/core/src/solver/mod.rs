//! Static, transient and eigen solutions of
//!
//! ```text
//! M q̈ + C q̇ + (K_L − (N/L) K_NL) q = f,    N = EA (L − L′)/L
//! ```
//!
//! with `N` positive in compression.

mod linalg;
mod modal;
mod statics;
mod transient;

pub use linalg::{inverse_generalized_eigen, solve_symmetric, EquilibratedCholesky};
pub use modal::{
    buckling_load, modal_reduce, natural_frequencies, natural_frequencies_under_axial_force,
    natural_frequencies_with_series, ModalBasis, ReducedModel,
};
pub use statics::{static_solve, static_solve_with};
pub use transient::{energy, energy_with, EnergyBreakdown, TransientSolver};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::beam::{shape_vector, BeamConfig, ShapeFunctionBasis, DOF_PER_NODE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadPosition {
    Node(usize),
    /// Arc-length position `s` along the centroid line (m).
    Arc(f64),
}

/// Transverse point force (N) and optional moment (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    pub position: LoadPosition,
    pub force: f64,
    #[serde(default)]
    pub moment: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadSet {
    pub loads: Vec<PointLoad>,
}

impl LoadSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn point(position: LoadPosition, force: f64) -> Self {
        Self::new().with(position, force, 0.0)
    }

    pub fn with(mut self, position: LoadPosition, force: f64, moment: f64) -> Self {
        self.loads.push(PointLoad {
            position,
            force,
            moment,
        });
        self
    }

    pub fn push(&mut self, load: PointLoad) {
        self.loads.push(load);
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    /// Sum of absolute point-force magnitudes.
    pub fn total_force(&self) -> f64 {
        self.loads.iter().map(|l| l.force.abs()).sum()
    }

    pub fn validate(&self, config: &BeamConfig) -> Result<()> {
        for load in &self.loads {
            if !load.force.is_finite() || !load.moment.is_finite() {
                return Err(Error::InvalidArgument("load magnitudes must be finite".into()));
            }
            match load.position {
                LoadPosition::Node(node) if node >= config.n_nodes() => {
                    return Err(Error::InvalidArgument(format!(
                        "load node {node} outside mesh of {} nodes",
                        config.n_nodes()
                    )))
                }
                LoadPosition::Arc(s) if !(0.0..=config.length).contains(&s) => {
                    return Err(Error::InvalidArgument(format!(
                        "load position {s} m outside [0, {}] m",
                        config.length
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Consistent nodal load vector (virtual work of each point load through
    /// the element shape functions).
    pub fn load_vector(&self, config: &BeamConfig) -> Result<DVector<f64>> {
        self.validate(config)?;
        let mut f = DVector::zeros(config.n_dofs());
        for load in &self.loads {
            match load.position {
                LoadPosition::Node(node) => {
                    f[DOF_PER_NODE * node] += load.force;
                    f[DOF_PER_NODE * node + 1] += load.moment;
                }
                LoadPosition::Arc(s) => {
                    if load.force != 0.0 {
                        f += shape_vector(config, s) * load.force;
                    }
                    if load.moment != 0.0 {
                        let (element, xi) = config.locate(s);
                        let h = config.element_length();
                        let slopes = ShapeFunctionBasis::cubic_slopes(xi);
                        let base = DOF_PER_NODE * element;
                        f[base] += load.moment * slopes[0] / h;
                        f[base + 1] += load.moment * slopes[1];
                        f[base + 2] += load.moment * slopes[2] / h;
                        f[base + 3] += load.moment * slopes[3];
                    }
                }
            }
        }
        Ok(f)
    }
}

/// Rayleigh damping `C = α M + β K_L`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RayleighDamping {
    pub alpha: f64,
    pub beta: f64,
}

/// Newmark-β parameters; the default is the average-acceleration rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewmarkParameters {
    pub gamma: f64,
    pub beta: f64,
}

impl Default for NewmarkParameters {
    fn default() -> Self {
        Self { gamma: 0.5, beta: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Relative change in `N` that ends the static fixed-point iteration.
    pub axial_coupling_tolerance: f64,
    /// Time step (s).
    pub dt: f64,
    pub damping: RayleighDamping,
    pub newmark: NewmarkParameters,
    /// Number of retained modes for the transient solver; `None` integrates
    /// the full system.
    pub modal_truncation: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            axial_coupling_tolerance: 1e-8,
            dt: 1e-3,
            damping: RayleighDamping::default(),
            newmark: NewmarkParameters::default(),
            modal_truncation: None,
        }
    }
}

impl SolveOptions {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_damping(mut self, alpha: f64, beta: f64) -> Self {
        self.damping = RayleighDamping { alpha, beta };
        self
    }

    pub fn with_modes(mut self, modes: Option<usize>) -> Self {
        self.modal_truncation = modes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt_s", format!("must be positive (got {})", self.dt)));
        }
        if !(self.axial_coupling_tolerance > 0.0) {
            return Err(Error::config("axial_coupling_tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations", "must be at least 1"));
        }
        for (field, value) in [
            ("damping_alpha", self.damping.alpha),
            ("damping_beta", self.damping.beta),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::config(field, format!("must be non-negative (got {value})")));
            }
        }
        let NewmarkParameters { gamma, beta } = self.newmark;
        if !(gamma >= 0.5 && beta >= 0.25 * (gamma + 0.5).powi(2) - 1e-15) {
            return Err(Error::config(
                "newmark",
                format!("γ = {gamma}, β = {beta} is not unconditionally stable"),
            ));
        }
        if self.modal_truncation == Some(0) {
            return Err(Error::config("modal_modes", "must be at least 1 when set"));
        }
        Ok(())
    }
}
