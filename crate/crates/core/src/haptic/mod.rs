//! The per-tick force pipeline between the stylus and the beam, and the
//! dual-rate loop that drives it.
//!
//! Per tick: scale the stylus force into the micro-world, measure the
//! attach-point displacement, sum the forces acting there in the local
//! director frame, rotate the sum back to the reference frame and scale it
//! out to the device as feedback.

mod scheduler;
mod trace;

pub use scheduler::{run_dual_rate, LoopStats, Pacing, PhysicsLoop, SchedulerOptions};
pub use trace::StylusTrace;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::beam::{frame_at, shape_vector, BeamConfig, BeamState, DirectorFrame, SystemMatrices, DOF_PER_NODE};
use crate::contact::{evaluate_gaps, surface_forces, StictionStatus, SubstrateConfig, SurfaceForceModel};
use crate::error::{Error, Result};
use crate::solver::{LoadPosition, LoadSet};

/// Device-to-micro unit conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    /// Device metres per micro metre.
    pub length_scale: f64,
    /// Device newtons per micro newton.
    pub force_scale: f64,
    /// Feedback magnitude clamp (N).
    pub device_force_max: f64,
}

impl Default for ScaleMap {
    fn default() -> Self {
        Self {
            length_scale: 1e3,
            force_scale: 1e6,
            device_force_max: 3.3,
        }
    }
}

impl ScaleMap {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("length_scale", self.length_scale),
            ("force_scale", self.force_scale),
            ("device_force_max", self.device_force_max),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(
                    field,
                    format!("must be positive and finite (got {value})"),
                ));
            }
        }
        Ok(())
    }
}

/// Device force → micro force.
pub fn scale_load_to_micro(device_force: &Vector3<f64>, map: &ScaleMap) -> Vector3<f64> {
    device_force / map.force_scale
}

/// Micro force → device feedback, clamped in magnitude with its direction kept.
pub fn compute_feedback(total: &Vector3<f64>, map: &ScaleMap) -> Vector3<f64> {
    let device = total * map.force_scale;
    let magnitude = device.norm();
    if magnitude > map.device_force_max {
        device * (map.device_force_max / magnitude)
    } else {
        device
    }
}

pub fn transform_to_moving_frame(v: &Vector3<f64>, frame: &DirectorFrame) -> Vector3<f64> {
    frame.to_local(v)
}

pub fn transform_to_reference(local: &Vector3<f64>, frame: &DirectorFrame) -> Vector3<f64> {
    frame.to_reference(local)
}

/// One stylus reading in device space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylusSample {
    /// Device position (m), origin at the clamp of the undeformed beam.
    pub position: [f64; 3],
    /// Button held: the stylus pushes on the beam.
    pub applied: bool,
    /// Seconds since session start.
    pub timestamp: f64,
}

impl StylusSample {
    pub fn released(timestamp: f64) -> Self {
        Self {
            position: [0.0; 3],
            applied: false,
            timestamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|v| v.is_finite()) || !self.timestamp.is_finite() {
            return Err(Error::InvalidArgument("stylus sample must be finite".into()));
        }
        Ok(())
    }
}

/// How a held stylus turns into a device force.
///
/// The stylus acts as a spring pulling the beam line toward its tip: the
/// device force is `stiffness · y` along the in-plane normal. The attach
/// point is the beam point under the stylus; a stylus beyond either end by
/// more than `capture_margin · L` (device-scaled) grabs nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylusCoupling {
    /// N per device metre.
    pub stiffness: f64,
    /// Capture margin as a fraction of the beam length.
    pub capture_margin: f64,
}

impl Default for StylusCoupling {
    fn default() -> Self {
        Self {
            stiffness: 250.0,
            capture_margin: 0.1,
        }
    }
}

/// Stylus contact resolved onto the beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylusContact {
    /// Arc position of the attach point (m).
    pub attach: f64,
    /// Device-space force (N).
    pub device_force: Vector3<f64>,
}

/// Attach point and device force of a stylus sample, `None` when released
/// or out of reach.
pub fn stylus_contact(
    sample: &StylusSample,
    config: &BeamConfig,
    map: &ScaleMap,
    coupling: &StylusCoupling,
) -> Option<StylusContact> {
    if !sample.applied {
        return None;
    }
    let x = sample.position[0] / map.length_scale;
    let margin = coupling.capture_margin * config.length;
    if x < -margin || x > config.length + margin {
        return None;
    }
    Some(StylusContact {
        attach: x.clamp(0.0, config.length),
        device_force: Vector3::new(0.0, coupling.stiffness * sample.position[1], 0.0),
    })
}

/// Micro load set of a resolved stylus contact.
pub fn stylus_loads(contact: Option<&StylusContact>, map: &ScaleMap) -> LoadSet {
    match contact {
        Some(c) => {
            let micro = scale_load_to_micro(&c.device_force, map);
            LoadSet::point(LoadPosition::Arc(c.attach), micro.y)
        }
        None => LoadSet::new(),
    }
}

/// Force balance at the attach point, in its moving frame.
///
/// Sums the external micro force (reference frame), the elastic restoring
/// force `−K_eff q` and the surface-model nodal forces. The nodal terms are
/// reduced to an equivalent point force at `attach` by projecting onto the
/// consistent load vector of that point over the free DOFs of `system`.
#[allow(clippy::too_many_arguments)]
pub fn compute_total_force(
    state: &BeamState,
    config: &BeamConfig,
    system: &SystemMatrices,
    axial: f64,
    external: &Vector3<f64>,
    attach: f64,
    surface: &dyn SurfaceForceModel,
    substrate: &SubstrateConfig,
) -> Result<Vector3<f64>> {
    compute_total_force_in(state, config, system, None, axial, external, attach, surface, substrate)
}

/// [`compute_total_force`] with the nodal reduction done in the span of
/// `modes` (free DOFs × modes), for a modally reduced beam. Projecting
/// there keeps the balance exact at the reduced model's own equilibrium,
/// which a point load outside the modal span would otherwise spoil.
#[allow(clippy::too_many_arguments)]
pub fn compute_total_force_in(
    state: &BeamState,
    config: &BeamConfig,
    system: &SystemMatrices,
    modes: Option<&DMatrix<f64>>,
    axial: f64,
    external: &Vector3<f64>,
    attach: f64,
    surface: &dyn SurfaceForceModel,
    substrate: &SubstrateConfig,
) -> Result<Vector3<f64>> {
    if !(0.0..=config.length).contains(&attach) {
        return Err(Error::InvalidArgument(format!(
            "attach position {attach} m outside [0, {}] m",
            config.length
        )));
    }
    let mut nodal: DVector<f64> = -(&system.stiffness * &state.q);
    if axial != 0.0 {
        nodal += (axial / system.length) * (&system.geometric * &state.q);
    }
    let gaps = evaluate_gaps(state, config, substrate);
    for (node, f) in surface_forces(surface, &gaps)?.into_iter().enumerate() {
        nodal[DOF_PER_NODE * node] += f;
    }
    let mut n = system.dofs.restrict(&shape_vector(config, attach));
    let mut nodal = system.dofs.restrict(&nodal);
    if let Some(modes) = modes {
        n = modes.tr_mul(&n);
        nodal = modes.tr_mul(&nodal);
    }
    let (num, den) = (n.dot(&nodal), n.dot(&n));
    // attach point sits on a clamp: nothing there can move
    let reaction = if den > 0.0 { num / den } else { 0.0 };
    let total = external + Vector3::new(0.0, reaction, 0.0);
    Ok(transform_to_moving_frame(&total, &frame_at(state, config, attach)))
}

/// Everything the pipeline produced in one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HapticFrame {
    pub tick: u64,
    pub load: LoadSet,
    /// Reference-frame displacement of the attach point (m).
    pub displacement: Vector3<f64>,
    /// Force sum in the attach frame (N).
    pub total_force: Vector3<f64>,
    /// Device-space feedback (N).
    pub feedback: Vector3<f64>,
    pub status: StictionStatus,
}
