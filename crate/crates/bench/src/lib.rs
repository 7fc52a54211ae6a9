//! Fixtures shared by the benchmarks.

use mems_haptics::beam::{BeamConfig, BeamState, BoundaryCondition};
use mems_haptics::haptic::StylusSample;
use mems_haptics::service::{parse_config, Command, Envelope, Session};
use mems_haptics::solver::{static_solve, LoadPosition, LoadSet, SolveOptions, TransientSolver};

pub fn beam(n: usize, boundary: BoundaryCondition) -> BeamConfig {
    BeamConfig::reference_cantilever(n).with_boundary(boundary)
}

/// Integrator and a deflected starting state under a tip (or midspan) load.
pub fn loaded_solver(config: &BeamConfig, modes: Option<usize>) -> (TransientSolver, BeamState, LoadSet) {
    let node = match config.boundary {
        BoundaryCondition::ClampedClamped => config.n_elements / 2,
        _ => config.n_elements,
    };
    let loads = LoadSet::point(LoadPosition::Node(node), 1e-6);
    let options = SolveOptions::default().with_modes(modes).with_damping(0.0, 1e-5);
    let state = static_solve(config, &loads, &options).expect("static solve");
    (TransientSolver::new(config, &options).expect("solver"), state, loads)
}

/// A live session with the stylus pressing near the tip.
pub fn pressed_session(n: usize, modes: usize) -> Session {
    let config =
        parse_config(&format!("n_elements = {n}\nmodal_modes = {modes}\ndamping_beta = 1e-5")).expect("config");
    let x = 0.9 * config.beam.length * config.scale.length_scale;
    let mut session = Session::new(config).expect("session");
    let press = Command::ApplyStylus {
        sample: StylusSample {
            position: [x, -1.0e-3, 0.0],
            applied: true,
            timestamp: 0.0,
        },
    };
    session.tick(&[Envelope::scripted(0, press)]).expect("tick");
    for _ in 0..200 {
        session.tick(&[]).expect("tick");
    }
    session
}
