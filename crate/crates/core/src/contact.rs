//! Substrate contact and stiction failure.
//!
//! Each node's gap to the substrate is tracked. Closing below a warning
//! fraction of the initial gap raises a near-contact warning; touching the
//! substrate sticks the node permanently, pinning its deflection at the
//! substrate level until the session is reset.

use std::collections::BTreeSet;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::beam::{BeamConfig, BeamState, SystemMatrices, DOF_PER_NODE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstrateConfig {
    /// Gap between the undeflected beam and the substrate (m).
    pub initial_gap: f64,
    /// Warn when a gap falls below `warn_fraction · initial_gap`.
    pub warn_fraction: f64,
}

impl Default for SubstrateConfig {
    fn default() -> Self {
        Self {
            initial_gap: 2e-6,
            warn_fraction: 0.1,
        }
    }
}

impl SubstrateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_gap > 0.0 && self.initial_gap.is_finite()) {
            return Err(Error::config(
                "gap_m",
                format!("must be positive (got {})", self.initial_gap),
            ));
        }
        if !(self.warn_fraction > 0.0 && self.warn_fraction < 1.0) {
            return Err(Error::config(
                "warn_fraction",
                format!("must lie in (0, 1) (got {})", self.warn_fraction),
            ));
        }
        Ok(())
    }

    /// Deflection at which a node touches the substrate.
    pub fn contact_deflection(&self) -> f64 {
        -self.initial_gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGap {
    /// Non-negative gap (m); penetration is reported as zero.
    pub gap: f64,
    pub contact: bool,
}

/// Gap of every node, `g0 + w_i`, clamped at contact.
pub fn evaluate_gaps(state: &BeamState, config: &BeamConfig, substrate: &SubstrateConfig) -> Vec<NodeGap> {
    (0..config.n_nodes())
        .map(|node| {
            let raw = substrate.initial_gap + state.deflection(node);
            NodeGap {
                gap: raw.max(0.0),
                contact: raw <= 0.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StictionStatus {
    #[default]
    Free,
    NearContact {
        nodes: Vec<usize>,
    },
    Stuck {
        /// Sorted, non-empty.
        nodes: Vec<usize>,
        /// Simulation time of the first contact (s).
        stick_time: f64,
    },
}

impl StictionStatus {
    /// Free < NearContact < Stuck.
    pub fn severity(&self) -> u8 {
        match self {
            StictionStatus::Free => 0,
            StictionStatus::NearContact { .. } => 1,
            StictionStatus::Stuck { .. } => 2,
        }
    }

    pub fn is_stuck(&self) -> bool {
        matches!(self, StictionStatus::Stuck { .. })
    }

    pub fn stuck_nodes(&self) -> &[usize] {
        match self {
            StictionStatus::Stuck { nodes, .. } => nodes,
            _ => &[],
        }
    }
}

/// Next stiction status. `Stuck` is absorbing: it only grows its node set.
pub fn update_stiction(
    status: &StictionStatus,
    gaps: &[NodeGap],
    substrate: &SubstrateConfig,
    time: f64,
) -> StictionStatus {
    let touching: Vec<usize> = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| g.contact)
        .map(|(i, _)| i)
        .collect();

    if let StictionStatus::Stuck { nodes, stick_time } = status {
        let mut all: BTreeSet<usize> = nodes.iter().copied().collect();
        all.extend(touching);
        return StictionStatus::Stuck {
            nodes: all.into_iter().collect(),
            stick_time: *stick_time,
        };
    }
    if !touching.is_empty() {
        return StictionStatus::Stuck {
            nodes: touching,
            stick_time: time,
        };
    }
    let threshold = substrate.warn_fraction * substrate.initial_gap;
    let close: Vec<usize> = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| g.gap < threshold)
        .map(|(i, _)| i)
        .collect();
    if close.is_empty() {
        StictionStatus::Free
    } else {
        StictionStatus::NearContact { nodes: close }
    }
}

/// Pins the deflection of every stuck node at the substrate (`w = −g0`).
/// Rotations stay free; already-clamped DOFs are left untouched.
pub fn apply_stuck_constraints(
    system: &SystemMatrices,
    stuck: &[usize],
    substrate: &SubstrateConfig,
) -> Result<SystemMatrices> {
    if stuck.is_empty() {
        return Ok(system.clone());
    }
    let n_nodes = system.n_dofs() / DOF_PER_NODE;
    if let Some(&bad) = stuck.iter().find(|&&n| n >= n_nodes) {
        return Err(Error::InvalidArgument(format!("stuck node {bad} outside mesh")));
    }
    let dofs = system.dofs.with_prescribed(
        stuck
            .iter()
            .map(|&node| (DOF_PER_NODE * node, substrate.contact_deflection())),
    );
    let any_free_deflection = dofs.free().iter().any(|dof| dof % DOF_PER_NODE == 0);
    if !any_free_deflection {
        return Err(Error::FullyConstrained);
    }
    system.clone().with_dofs(dofs)
}

/// Attractive surface force acting on a node as a function of its gap.
///
/// Forces are transverse (N), negative toward the substrate.
pub trait SurfaceForceModel: Debug + Send + Sync {
    fn force(&self, node: usize, gap: f64) -> f64;

    fn name(&self) -> &'static str;
}

/// No surface force; stiction is modeled purely kinematically.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NullForce;

impl SurfaceForceModel for NullForce {
    fn force(&self, _node: usize, _gap: f64) -> f64 {
        0.0
    }

    fn name(&self) -> &'static str {
        "null"
    }
}

/// Per-node surface forces, rejecting repulsive or non-finite values.
pub fn surface_forces(model: &dyn SurfaceForceModel, gaps: &[NodeGap]) -> Result<Vec<f64>> {
    gaps.iter()
        .enumerate()
        .map(|(node, g)| {
            let f = model.force(node, g.gap);
            if f.is_finite() && f <= 0.0 {
                Ok(f)
            } else {
                Err(Error::Model(format!(
                    "surface model `{}` returned {f} N at node {node}; forces must be finite and attractive",
                    model.name()
                )))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{static_solve_with, LoadSet, SolveOptions};
    use proptest::prelude::*;

    fn gaps_of(values: &[f64]) -> Vec<NodeGap> {
        values
            .iter()
            .map(|&g| NodeGap {
                gap: g.max(0.0),
                contact: g <= 0.0,
            })
            .collect()
    }

    #[test]
    fn gaps_of_rest_and_deflected_states() {
        let config = BeamConfig::reference_cantilever(4);
        let substrate = SubstrateConfig::default();
        let mut state = BeamState::zeros(config.n_dofs());
        assert!(evaluate_gaps(&state, &config, &substrate)
            .iter()
            .all(|g| g.gap == 2e-6 && !g.contact));

        state.q[8] = -2e-6;
        let tip = evaluate_gaps(&state, &config, &substrate)[4];
        assert_eq!(
            tip,
            NodeGap {
                gap: 0.0,
                contact: true
            }
        );

        state.q[8] = -3e-6;
        let tip = evaluate_gaps(&state, &config, &substrate)[4];
        assert_eq!(
            tip,
            NodeGap {
                gap: 0.0,
                contact: true
            }
        );
    }

    #[test]
    fn status_transitions() {
        let substrate = SubstrateConfig::default();
        let g0 = substrate.initial_gap;
        let free = update_stiction(&StictionStatus::Free, &gaps_of(&[g0, g0]), &substrate, 0.0);
        assert_eq!(free, StictionStatus::Free);

        let near = update_stiction(&free, &gaps_of(&[g0, 0.05 * g0]), &substrate, 0.0);
        assert_eq!(near, StictionStatus::NearContact { nodes: vec![1] });

        let stuck = update_stiction(&near, &gaps_of(&[g0, 0.0]), &substrate, 0.25);
        assert_eq!(
            stuck,
            StictionStatus::Stuck {
                nodes: vec![1],
                stick_time: 0.25
            }
        );

        let still = update_stiction(&stuck, &gaps_of(&[g0, g0]), &substrate, 0.5);
        assert_eq!(still, stuck);

        let back = update_stiction(&near, &gaps_of(&[g0, g0]), &substrate, 0.0);
        assert_eq!(back, StictionStatus::Free);
    }

    #[test]
    fn stuck_tip_stays_on_substrate_after_unloading() {
        let config = BeamConfig::reference_cantilever(8);
        let substrate = SubstrateConfig::default();
        let system = SystemMatrices::assemble(&config);
        let pinned = apply_stuck_constraints(&system, &[8], &substrate).unwrap();
        let state = static_solve_with(&config, &pinned, &LoadSet::new(), &SolveOptions::default()).unwrap();
        assert_eq!(state.deflection(8), -substrate.initial_gap);
        // Oracle: a clamped beam with its tip displaced by δ and free tip
        // rotation (propped cantilever) deflects as δ·x²(3L − x)/(2L³).
        let l = config.length;
        for node in 1..8 {
            let x = config.node_position(node);
            let expected = -substrate.initial_gap * x * x * (3.0 * l - x) / (2.0 * l.powi(3));
            assert!((state.deflection(node) / expected - 1.0).abs() < 1e-9, "node {node}");
        }
    }

    #[test]
    fn constraint_edge_cases() {
        let config = BeamConfig::reference_cantilever(2);
        let substrate = SubstrateConfig::default();
        let system = SystemMatrices::assemble(&config);
        assert_eq!(apply_stuck_constraints(&system, &[], &substrate).unwrap(), system);
        assert_eq!(apply_stuck_constraints(&system, &[0], &substrate).unwrap(), system);
        assert!(matches!(
            apply_stuck_constraints(&system, &[1, 2], &substrate),
            Err(Error::FullyConstrained)
        ));
    }

    #[test]
    fn null_force_is_zero() {
        let forces = surface_forces(&NullForce, &gaps_of(&[1e-6, 0.0])).unwrap();
        assert_eq!(forces, vec![0.0, 0.0]);
    }

    #[derive(Debug)]
    struct Repulsive;
    impl SurfaceForceModel for Repulsive {
        fn force(&self, _: usize, _: f64) -> f64 {
            1.0
        }
        fn name(&self) -> &'static str {
            "repulsive"
        }
    }

    #[test]
    fn repulsive_models_rejected() {
        assert!(surface_forces(&Repulsive, &gaps_of(&[1e-6])).is_err());
    }

    proptest! {
        #[test]
        fn stuck_is_absorbing(seq in prop::collection::vec(prop::collection::vec(-1.0f64..2.0, 5), 1..30)) {
            let substrate = SubstrateConfig { initial_gap: 1.0, warn_fraction: 0.1 };
            let mut status = StictionStatus::Free;
            let mut stuck_nodes: Vec<usize> = Vec::new();
            for (t, gaps) in seq.iter().enumerate() {
                let next = update_stiction(&status, &gaps_of(gaps), &substrate, t as f64);
                if status.is_stuck() {
                    prop_assert!(next.is_stuck());
                    prop_assert!(stuck_nodes.iter().all(|n| next.stuck_nodes().contains(n)));
                }
                stuck_nodes = next.stuck_nodes().to_vec();
                status = next;
            }
        }

        #[test]
        fn severity_is_monotone_in_gaps(
            gaps in prop::collection::vec(0.0f64..2.0, 6),
            shrink in prop::collection::vec(0.0f64..1.5, 6),
        ) {
            let substrate = SubstrateConfig { initial_gap: 1.0, warn_fraction: 0.1 };
            let closer: Vec<f64> = gaps.iter().zip(&shrink).map(|(g, s)| g - s).collect();
            let a = update_stiction(&StictionStatus::Free, &gaps_of(&gaps), &substrate, 0.0);
            let b = update_stiction(&StictionStatus::Free, &gaps_of(&closer), &substrate, 0.0);
            prop_assert!(b.severity() >= a.severity());
        }
    }
}
