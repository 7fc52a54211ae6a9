use nalgebra::{DVector, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::shape::ShapeFunctionBasis;
use super::{BeamConfig, BeamState, DOF_PER_NODE};
use crate::error::{Error, Result};

// 5-point Gauss-Legendre rule mapped to [0, 1].
const GAUSS_POINTS: [f64; 5] = [
    0.046_910_077_030_668_0,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

/// Deflection and slope of the centroid line at one arc position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub deflection: f64,
    pub slope: f64,
}

fn element_dofs(q: &DVector<f64>, element: usize) -> [f64; 4] {
    let base = DOF_PER_NODE * element;
    [q[base], q[base + 1], q[base + 2], q[base + 3]]
}

fn interpolate_element(config: &BeamConfig, q: &DVector<f64>, element: usize, xi: f64) -> Interpolated {
    let h = config.element_length();
    let dofs = element_dofs(q, element);
    let values = ShapeFunctionBasis::cubic_values(xi);
    let slopes = ShapeFunctionBasis::cubic_slopes(xi);
    let deflection = values[0] * dofs[0] + h * values[1] * dofs[1] + values[2] * dofs[2] + h * values[3] * dofs[3];
    let slope = (slopes[0] * dofs[0] + slopes[2] * dofs[2]) / h + slopes[1] * dofs[1] + slopes[3] * dofs[3];
    Interpolated { deflection, slope }
}

/// Cubic interpolation of `q` at arc position `s` (clamped to `[0, L]`).
pub fn interpolate(config: &BeamConfig, q: &DVector<f64>, s: f64) -> Interpolated {
    let (element, xi) = config.locate(s);
    interpolate_element(config, q, element, xi)
}

/// Global vector `n` with `w(s) = n · q`; also the consistent nodal load
/// of a unit transverse point force at `s`.
pub fn shape_vector(config: &BeamConfig, s: f64) -> DVector<f64> {
    let (element, xi) = config.locate(s);
    let h = config.element_length();
    let values = ShapeFunctionBasis::cubic_values(xi);
    let mut n = DVector::zeros(config.n_dofs());
    let base = DOF_PER_NODE * element;
    n[base] = values[0];
    n[base + 1] = h * values[1];
    n[base + 2] = values[2];
    n[base + 3] = h * values[3];
    n
}

/// Reference-frame displacement of the centroid at arc position `s`.
pub fn measure_displacement_reference(state: &BeamState, config: &BeamConfig, s: f64) -> Result<Vector3<f64>> {
    if !(0.0..=config.length).contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "attach position {s} m outside [0, {}] m",
            config.length
        )));
    }
    Ok(Vector3::new(0.0, interpolate(config, &state.q, s).deflection, 0.0))
}

/// Membrane force `N = EA (L − L′)/L` from the deflected arc length `L′`.
///
/// Positive `N` is compression. Only beams held axially at both ends can
/// carry a membrane force; otherwise the centroid line is free to slide and
/// `N = 0`.
pub fn axial_force(state: &BeamState, config: &BeamConfig) -> f64 {
    if !config.boundary.restrains_axial_motion() {
        return 0.0;
    }
    let h = config.element_length();
    // L' − L = ∫ (√(1 + w'²) − 1) dx, written to avoid cancellation.
    let mut extension = 0.0;
    for e in 0..config.n_elements {
        for (&xi, &weight) in GAUSS_POINTS.iter().zip(&GAUSS_WEIGHTS) {
            let slope = interpolate_element(config, &state.q, e, xi).slope;
            let slope2 = slope * slope;
            extension += weight * h * slope2 / ((1.0 + slope2).sqrt() + 1.0);
        }
    }
    -config.axial_rigidity() * extension / config.length
}

/// Orthonormal director triad attached to a cross-section.
///
/// `d3` is the unit tangent of the centroid line, `d2` the in-plane normal
/// and `d1` points along `−z`, so that `d3 = d1 × d2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectorFrame {
    pub origin: Vector3<f64>,
    pub d1: Vector3<f64>,
    pub d2: Vector3<f64>,
    pub d3: Vector3<f64>,
}

impl DirectorFrame {
    /// `d_k = e_k` at the origin.
    pub fn identity() -> Self {
        Self {
            origin: Vector3::zeros(),
            d1: Vector3::x(),
            d2: Vector3::y(),
            d3: Vector3::z(),
        }
    }

    /// Frame whose first two directors are the rotated `e1`, `e2`.
    pub fn from_rotation(origin: Vector3<f64>, rotation: &Rotation3<f64>) -> Self {
        let d1 = rotation * Vector3::x();
        let d2 = rotation * Vector3::y();
        let d3 = d1.cross(&d2);
        Self { origin, d1, d2, d3 }
    }

    /// Frame of a planar centroid line with slope `dw/dx` at `origin`.
    pub fn from_slope(origin: Vector3<f64>, slope: f64) -> Self {
        let norm = (1.0 + slope * slope).sqrt();
        let (tx, ty) = (1.0 / norm, slope / norm);
        let d1 = Vector3::new(0.0, 0.0, -1.0);
        let d2 = Vector3::new(-ty, tx, 0.0);
        let d3 = d1.cross(&d2);
        Self { origin, d1, d2, d3 }
    }

    /// Components `(v·d1, v·d2, v·d3)`.
    pub fn to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(v.dot(&self.d1), v.dot(&self.d2), v.dot(&self.d3))
    }

    pub fn to_reference(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.d1 * local.x + self.d2 * local.y + self.d3 * local.z
    }

    /// Largest deviation from orthonormality and from `d3 = d1 × d2`.
    pub fn residual(&self) -> f64 {
        let norms = [self.d1.norm(), self.d2.norm(), self.d3.norm()]
            .iter()
            .map(|n| (n - 1.0).abs())
            .fold(0.0, f64::max);
        let dots = [self.d1.dot(&self.d2), self.d2.dot(&self.d3), self.d1.dot(&self.d3)]
            .iter()
            .map(|d| d.abs())
            .fold(0.0, f64::max);
        let cross = (self.d1.cross(&self.d2) - self.d3).amax();
        let handed = (self.d1.dot(&self.d2.cross(&self.d3)) - 1.0).abs();
        norms.max(dots).max(cross).max(handed)
    }
}

/// One director frame per node.
pub fn directors_from_state(state: &BeamState, config: &BeamConfig) -> Vec<DirectorFrame> {
    (0..config.n_nodes())
        .map(|node| {
            let origin = Vector3::new(config.node_position(node), state.deflection(node), 0.0);
            DirectorFrame::from_slope(origin, state.slope(node))
        })
        .collect()
}

/// Director frame at an arbitrary arc position.
pub fn frame_at(state: &BeamState, config: &BeamConfig, s: f64) -> DirectorFrame {
    let point = interpolate(config, &state.q, s);
    DirectorFrame::from_slope(Vector3::new(s, point.deflection, 0.0), point.slope)
}

/// Carries a state onto another mesh or length by sampling the cubic
/// interpolant at the same relative arc positions. Slopes and their rates
/// are rescaled by `L_from / L_to`; DOFs clamped by `to` are zeroed.
pub fn reinterpolate(state: &BeamState, from: &BeamConfig, to: &BeamConfig) -> BeamState {
    let ratio = from.length / to.length;
    let remap = |v: &DVector<f64>| {
        let mut out = DVector::zeros(to.n_dofs());
        for node in 0..to.n_nodes() {
            let s = (to.node_position(node) * ratio).min(from.length);
            let p = interpolate(from, v, s);
            out[DOF_PER_NODE * node] = p.deflection;
            out[DOF_PER_NODE * node + 1] = p.slope * ratio;
        }
        for dof in to.boundary.constrained_dofs(to.n_nodes()) {
            out[dof] = 0.0;
        }
        out
    };
    BeamState {
        q: remap(&state.q),
        q_dot: remap(&state.q_dot),
        q_ddot: remap(&state.q_ddot),
        time: state.time,
    }
}
