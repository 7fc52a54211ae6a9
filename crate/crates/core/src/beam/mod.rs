//! Planar Cosserat microbeam: geometry, material, discretization and the
//! matrices of the quadratic energy functional.
//!
//! Each node carries two generalized coordinates, the transverse deflection
//! `w` (m) and the slope `dw/dx` (rad), stored interleaved:
//!
//! ```text
//! q = [w0, θ0, w1, θ1, ..., wn, θn]
//! ```
//!
//! Axial displacement is not a degree of freedom; axial effects enter only
//! through the membrane force `N` and the geometric stiffness.

mod assembly;
mod kinematics;
mod shape;

pub use assembly::{
    assemble_mass, assemble_stiffness_geometric, assemble_stiffness_linear, element_geometric, element_mass,
    element_stiffness, DofMap, ElementMatrices, SystemMatrices,
};
pub use kinematics::{
    axial_force, directors_from_state, frame_at, interpolate, measure_displacement_reference, reinterpolate,
    shape_vector, DirectorFrame, Interpolated,
};
pub use shape::{shape_basis, Polynomial, ShapeFunctionBasis, MAX_SERIES_ORDER};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degrees of freedom per node (deflection, slope).
pub const DOF_PER_NODE: usize = 2;

fn check_positive(field: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::config(field, format!("must be finite (got {value})")));
    }
    if value <= 0.0 {
        return Err(Error::config(field, format!("must be positive (got {value})")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialProperties {
    /// Young's modulus (Pa).
    pub youngs_modulus: f64,
    /// Mass density (kg/m³).
    pub density: f64,
}

impl MaterialProperties {
    pub fn new(youngs_modulus: f64, density: f64) -> Result<Self> {
        let material = Self {
            youngs_modulus,
            density,
        };
        material.validate()?;
        Ok(material)
    }

    /// Single-crystal silicon, the usual structural MEMS material.
    pub fn silicon() -> Self {
        Self {
            youngs_modulus: 169e9,
            density: 2330.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("youngs_modulus_pa", self.youngs_modulus)?;
        check_positive("density_kgm3", self.density)
    }
}

/// Rectangular cross-section; bending happens across the thickness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub width: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionProperties {
    /// Area (m²).
    pub area: f64,
    /// Second moment of area about the bending axis (m⁴).
    pub second_moment: f64,
}

impl CrossSection {
    pub fn new(width: f64, thickness: f64) -> Result<Self> {
        section_properties(width, thickness)?;
        Ok(Self { width, thickness })
    }

    pub fn area(&self) -> f64 {
        self.width * self.thickness
    }

    pub fn second_moment(&self) -> f64 {
        self.width * self.thickness.powi(3) / 12.0
    }

    pub fn validate(&self) -> Result<()> {
        section_properties(self.width, self.thickness).map(|_| ())
    }
}

/// Area and second moment of a `width × thickness` rectangle.
pub fn section_properties(width: f64, thickness: f64) -> Result<SectionProperties> {
    section_properties_above(width, thickness, 0.0)
}

/// Like [`section_properties`], but also rejects any dimension at or below
/// `min_dimension`, for callers that want to flag near-degenerate sections.
pub fn section_properties_above(width: f64, thickness: f64, min_dimension: f64) -> Result<SectionProperties> {
    check_positive("width_m", width)?;
    check_positive("thickness_m", thickness)?;
    for (field, value) in [("width_m", width), ("thickness_m", thickness)] {
        if value <= min_dimension {
            return Err(Error::config(
                field,
                format!("{value} m is below the minimum dimension {min_dimension} m"),
            ));
        }
    }
    Ok(SectionProperties {
        area: width * thickness,
        second_moment: width * thickness.powi(3) / 12.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Cantilever: deflection and slope fixed at `s = 0`.
    ClampedFree,
    /// Microbridge: both ends clamped.
    ClampedClamped,
    FreeFree,
}

impl BoundaryCondition {
    /// Constrained global DOF indices for a mesh with `n_nodes` nodes.
    pub fn constrained_dofs(self, n_nodes: usize) -> Vec<usize> {
        let last = n_nodes - 1;
        match self {
            BoundaryCondition::ClampedFree => vec![0, 1],
            BoundaryCondition::ClampedClamped => {
                vec![0, 1, DOF_PER_NODE * last, DOF_PER_NODE * last + 1]
            }
            BoundaryCondition::FreeFree => Vec::new(),
        }
    }

    /// True when both ends are held axially, so bending stretches the
    /// centroid line and produces a membrane force.
    pub fn restrains_axial_motion(self) -> bool {
        matches!(self, BoundaryCondition::ClampedClamped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Undeformed length `L` (m).
    pub length: f64,
    pub material: MaterialProperties,
    pub section: CrossSection,
    pub n_elements: usize,
    pub boundary: BoundaryCondition,
}

impl BeamConfig {
    pub fn new(
        length: f64,
        material: MaterialProperties,
        section: CrossSection,
        n_elements: usize,
        boundary: BoundaryCondition,
    ) -> Result<Self> {
        let config = Self {
            length,
            material,
            section,
            n_elements,
            boundary,
        };
        config.validate()?;
        Ok(config)
    }

    /// The 300 µm × 20 µm × 2 µm silicon cantilever used throughout the
    /// tests and as the default session structure.
    pub fn reference_cantilever(n_elements: usize) -> Self {
        Self {
            length: 300e-6,
            material: MaterialProperties::silicon(),
            section: CrossSection {
                width: 20e-6,
                thickness: 2e-6,
            },
            n_elements,
            boundary: BoundaryCondition::ClampedFree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("length_m", self.length)?;
        self.material.validate()?;
        self.section.validate()?;
        if self.n_elements == 0 {
            return Err(Error::config("n_elements", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_boundary(mut self, boundary: BoundaryCondition) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_elements(mut self, n_elements: usize) -> Self {
        self.n_elements = n_elements;
        self
    }

    pub fn element_length(&self) -> f64 {
        self.length / self.n_elements as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    pub fn n_dofs(&self) -> usize {
        DOF_PER_NODE * self.n_nodes()
    }

    pub fn node_position(&self, node: usize) -> f64 {
        if node == self.n_elements {
            self.length
        } else {
            node as f64 * self.element_length()
        }
    }

    /// Bending rigidity `EI` (N·m²).
    pub fn bending_rigidity(&self) -> f64 {
        self.material.youngs_modulus * self.section.second_moment()
    }

    /// Axial rigidity `EA` (N).
    pub fn axial_rigidity(&self) -> f64 {
        self.material.youngs_modulus * self.section.area()
    }

    /// Mass per unit length `ρA` (kg/m).
    pub fn mass_per_length(&self) -> f64 {
        self.material.density * self.section.area()
    }

    /// Element index and local coordinate `ξ ∈ [0, 1]` of arc position `s`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        if s >= self.length {
            return (self.n_elements - 1, 1.0);
        }
        let u = (s / self.length * self.n_elements as f64).max(0.0);
        let e = (u.floor() as usize).min(self.n_elements - 1);
        (e, (u - e as f64).clamp(0.0, 1.0))
    }
}

/// Generalized coordinates of the discretized beam and their rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamState {
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
    pub q_ddot: DVector<f64>,
    /// Simulation time (s).
    pub time: f64,
}

impl BeamState {
    pub fn zeros(n_dofs: usize) -> Self {
        Self {
            q: DVector::zeros(n_dofs),
            q_dot: DVector::zeros(n_dofs),
            q_ddot: DVector::zeros(n_dofs),
            time: 0.0,
        }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            q_dot: DVector::zeros(n),
            q_ddot: DVector::zeros(n),
            time: 0.0,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.q.len()
    }

    pub fn deflection(&self, node: usize) -> f64 {
        self.q[DOF_PER_NODE * node]
    }

    pub fn slope(&self, node: usize) -> f64 {
        self.q[DOF_PER_NODE * node + 1]
    }

    pub fn deflections(&self) -> Vec<f64> {
        self.q.iter().step_by(DOF_PER_NODE).copied().collect()
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.q.iter().skip(1).step_by(DOF_PER_NODE).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|v| v.is_finite())
            && self.q_dot.iter().all(|v| v.is_finite())
            && self.q_ddot.iter().all(|v| v.is_finite())
    }
}
