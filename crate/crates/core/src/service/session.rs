use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::{Parameters, SessionConfig, Structure, MAX_ELEMENTS};
use crate::beam::{
    axial_force, directors_from_state, frame_at, measure_displacement_reference, reinterpolate, BeamState,
    DirectorFrame, SystemMatrices, DOF_PER_NODE,
};
use crate::contact::{
    apply_stuck_constraints, evaluate_gaps, update_stiction, NodeGap, NullForce, StictionStatus, SurfaceForceModel,
};
use crate::error::{Error, Result};
use crate::haptic::{
    compute_feedback, compute_total_force_in, scale_load_to_micro, stylus_contact, stylus_loads,
    transform_to_reference, HapticFrame, LoopStats, StylusCoupling, StylusSample,
};
use crate::solver::{LoadSet, SolveOptions, TransientSolver};

/// Parameters adjustable mid-session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterName {
    YoungsModulus,
    Density,
    NElements,
    Length,
    Width,
    Thickness,
    Gap,
}

impl ParameterName {
    /// Changes node positions, so the state has to be carried over.
    fn moves_nodes(self) -> bool {
        matches!(self, ParameterName::NElements | ParameterName::Length)
    }

    /// Ambiguous once nodes are stuck to the substrate.
    fn blocked_while_stuck(self) -> bool {
        self.moves_nodes() || self == ParameterName::Gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    ApplyStylus { sample: StylusSample },
    SetParameter { name: ParameterName, value: f64 },
    SelectStructure { structure: Structure },
    ResetFailure,
    Pause,
    Resume,
}

/// A command plus where it came from, so its outcome can be routed back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// Sender-chosen id, echoed in the outcome.
    pub id: u64,
    /// Connection the command arrived on; 0 for scripted input.
    #[serde(default)]
    pub origin: u64,
    pub command: Command,
}

impl Envelope {
    pub fn scripted(id: u64, command: Command) -> Self {
        Self { id, origin: 0, command }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub id: u64,
    pub origin: u64,
    /// Tick at whose start the command was applied.
    pub tick: u64,
    pub result: std::result::Result<(), String>,
}

/// What clients see of the session at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    /// Simulation time (s).
    pub time: f64,
    pub deflections: Vec<f64>,
    /// Nodal slopes `dw/dx`.
    pub rotations: Vec<f64>,
    pub directors: Vec<DirectorFrame>,
    /// Device-space feedback force (N).
    pub feedback: [f64; 3],
    pub status: StictionStatus,
    pub gaps: Vec<f64>,
    pub parameters: Parameters,
    pub paused: bool,
    /// Timing so far; absent in recordings and replays.
    #[serde(default)]
    pub stats: Option<LoopStats>,
}

impl Snapshot {
    /// The snapshot with timing stripped, for trajectory comparisons.
    pub fn physics(&self) -> Snapshot {
        Snapshot {
            stats: None,
            ..self.clone()
        }
    }
}

/// Mutable simulation state of one session. Owned by a single physics
/// loop; everything else sees it through snapshots.
#[derive(Debug)]
pub struct Session {
    config: SessionConfig,
    coupling: StylusCoupling,
    surface: Box<dyn SurfaceForceModel>,
    /// Assembled without contact constraints.
    base: SystemMatrices,
    /// `base` plus the stuck-node constraints.
    system: SystemMatrices,
    /// `None` while contact pins every deflection DOF.
    solver: Option<TransientSolver>,
    state: BeamState,
    status: StictionStatus,
    gaps: Vec<NodeGap>,
    stylus: Option<StylusSample>,
    last_stylus_time: f64,
    tick: u64,
    paused: bool,
    frame: HapticFrame,
}

fn solve_options(config: &SessionConfig, system: &SystemMatrices) -> SolveOptions {
    let free = system.dofs.free().len();
    SolveOptions {
        modal_truncation: config.solve.modal_truncation.map(|m| m.min(free)),
        ..config.solve
    }
}

fn build_solver(config: &SessionConfig, system: &SystemMatrices) -> Result<Option<TransientSolver>> {
    TransientSolver::with_system(&config.beam, system.clone(), &solve_options(config, system)).map(Some)
}

fn empty_frame(tick: u64) -> HapticFrame {
    HapticFrame {
        tick,
        load: LoadSet::new(),
        displacement: Vector3::zeros(),
        total_force: Vector3::zeros(),
        feedback: Vector3::zeros(),
        status: StictionStatus::Free,
    }
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        Self::with_surface_model(config, Box::new(NullForce))
    }

    pub fn with_surface_model(config: SessionConfig, surface: Box<dyn SurfaceForceModel>) -> Result<Self> {
        let base = SystemMatrices::assemble(&config.beam);
        let solver = build_solver(&config, &base)?;
        let state = BeamState::zeros(config.beam.n_dofs());
        let gaps = evaluate_gaps(&state, &config.beam, &config.substrate);
        Ok(Self {
            config,
            coupling: StylusCoupling::default(),
            surface,
            system: base.clone(),
            base,
            solver,
            state,
            status: StictionStatus::Free,
            gaps,
            stylus: None,
            last_stylus_time: f64::NEG_INFINITY,
            tick: 0,
            paused: false,
            frame: empty_frame(0),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &BeamState {
        &self.state
    }

    pub fn status(&self) -> &StictionStatus {
        &self.status
    }

    pub fn gaps(&self) -> &[NodeGap] {
        &self.gaps
    }

    /// Matrices in use, including stuck-node constraints.
    pub fn system(&self) -> &SystemMatrices {
        &self.system
    }

    /// Number of completed ticks.
    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn last_frame(&self) -> &HapticFrame {
        &self.frame
    }

    pub fn coupling(&self) -> &StylusCoupling {
        &self.coupling
    }

    /// Integrated coordinates (modal amplitudes or free DOFs); 0 while frozen.
    pub fn dimension(&self) -> usize {
        self.solver.as_ref().map_or(0, |s| s.dimension())
    }

    /// Applies `commands` in order, then advances one step unless paused.
    /// A rejected command leaves the session untouched.
    pub fn tick(&mut self, commands: &[Envelope]) -> Result<Vec<CommandOutcome>> {
        let outcomes = commands
            .iter()
            .map(|envelope| CommandOutcome {
                id: envelope.id,
                origin: envelope.origin,
                tick: self.tick,
                result: self.apply(&envelope.command).map_err(|e| e.to_string()),
            })
            .collect();
        if !self.paused {
            self.advance()?;
        }
        self.tick += 1;
        Ok(outcomes)
    }

    pub fn apply(&mut self, command: &Command) -> Result<()> {
        match command {
            Command::ApplyStylus { sample } => {
                sample.validate()?;
                if sample.timestamp < self.last_stylus_time {
                    return Err(Error::Rejected(format!(
                        "stylus time {} s precedes previous sample at {} s",
                        sample.timestamp, self.last_stylus_time
                    )));
                }
                self.last_stylus_time = sample.timestamp;
                self.stylus = Some(*sample);
                Ok(())
            }
            Command::SetParameter { name, value } => self.set_parameter(*name, *value),
            Command::SelectStructure { structure } => {
                let params = Parameters {
                    structure: *structure,
                    ..self.config.parameters()
                };
                let config = SessionConfig::from_parameters(&params)?;
                self.restart(config)
            }
            Command::ResetFailure => self.reset_failure(),
            Command::Pause => {
                self.paused = true;
                Ok(())
            }
            Command::Resume => {
                self.paused = false;
                Ok(())
            }
        }
    }

    fn set_parameter(&mut self, name: ParameterName, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Rejected(format!("{name:?} value must be finite")));
        }
        if self.status.is_stuck() && name.blocked_while_stuck() {
            return Err(Error::Rejected(format!(
                "{name:?} cannot change while the beam is stuck; reset the failure first"
            )));
        }
        let mut params = self.config.parameters();
        match name {
            ParameterName::YoungsModulus => params.youngs_modulus_pa = value,
            ParameterName::Density => params.density_kgm3 = value,
            ParameterName::Length => params.length_m = value,
            ParameterName::Width => params.width_m = value,
            ParameterName::Thickness => params.thickness_m = value,
            ParameterName::Gap => params.gap_m = value,
            ParameterName::NElements => {
                if value.fract() != 0.0 || value < 1.0 || value > MAX_ELEMENTS as f64 {
                    return Err(Error::config(
                        "n_elements",
                        format!("must be an integer in [1, {MAX_ELEMENTS}] (got {value})"),
                    ));
                }
                params.n_elements = value as usize;
            }
        }
        let config = SessionConfig::from_parameters(&params)?;
        self.reconfigure(config, name.moves_nodes())
    }

    /// Swaps in a new configuration keeping the motion, all-or-nothing.
    fn reconfigure(&mut self, config: SessionConfig, remap: bool) -> Result<()> {
        let base = SystemMatrices::assemble(&config.beam);
        let system = apply_stuck_constraints(&base, self.status.stuck_nodes(), &config.substrate)?;
        let solver = build_solver(&config, &system)?;
        let mut state = if remap {
            reinterpolate(&self.state, &self.config.beam, &config.beam)
        } else {
            self.state.clone()
        };
        if let Some(solver) = &solver {
            let contact = self
                .stylus
                .and_then(|s| stylus_contact(&s, &config.beam, &config.scale, &self.coupling));
            let load = stylus_loads(contact.as_ref(), &config.scale).load_vector(&config.beam)?;
            state = solver.consistent_acceleration(&state, &load)?;
        }
        let gaps = evaluate_gaps(&state, &config.beam, &config.substrate);

        self.config = config;
        self.base = base;
        self.system = system;
        self.solver = solver;
        self.state = state;
        self.gaps = gaps;
        Ok(())
    }

    /// Fresh physics under `config`: straight beam at rest, Free status,
    /// stylus released. The tick counter and clock keep running.
    fn restart(&mut self, config: SessionConfig) -> Result<()> {
        let base = SystemMatrices::assemble(&config.beam);
        let solver = build_solver(&config, &base)?;
        let mut state = BeamState::zeros(config.beam.n_dofs());
        state.time = self.state.time;
        self.gaps = evaluate_gaps(&state, &config.beam, &config.substrate);
        self.config = config;
        self.system = base.clone();
        self.base = base;
        self.solver = solver;
        self.state = state;
        self.status = StictionStatus::Free;
        self.stylus = None;
        self.frame = empty_frame(self.tick);
        Ok(())
    }

    /// Puts the beam back to its original straight position and clears any
    /// stiction. Idempotent.
    pub fn reset_failure(&mut self) -> Result<()> {
        self.restart(self.config)
    }

    /// Pins newly stuck nodes at the substrate.
    fn stick(&mut self, nodes: &[usize], loads: &LoadSet) -> Result<()> {
        let contact = self.config.substrate.contact_deflection();
        for &node in nodes {
            let dof = DOF_PER_NODE * node;
            self.state.q[dof] = contact;
            self.state.q_dot[dof] = 0.0;
            self.state.q_ddot[dof] = 0.0;
        }
        self.system = match apply_stuck_constraints(&self.base, nodes, &self.config.substrate) {
            Ok(system) => system,
            Err(Error::FullyConstrained) => {
                self.solver = None;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let solver = build_solver(&self.config, &self.system)?.expect("solver");
        // the sudden constraint changes the free-DOF balance
        self.state = solver.consistent_acceleration(&self.state, &loads.load_vector(&self.config.beam)?)?;
        self.solver = Some(solver);
        Ok(())
    }

    /// Stages 1 to 4, the time step, the stiction update and stage 5.
    fn advance(&mut self) -> Result<()> {
        let beam = self.config.beam;
        let scale = self.config.scale;

        let contact = self
            .stylus
            .and_then(|s| stylus_contact(&s, &beam, &scale, &self.coupling));
        let loads = stylus_loads(contact.as_ref(), &scale);
        let (displacement, total_local, total) = match &contact {
            Some(c) => {
                let external = scale_load_to_micro(&c.device_force, &scale);
                let displacement = measure_displacement_reference(&self.state, &beam, c.attach)?;
                let local = compute_total_force_in(
                    &self.state,
                    &beam,
                    &self.system,
                    self.solver.as_ref().and_then(|s| s.modal_shapes()),
                    axial_force(&self.state, &beam),
                    &external,
                    c.attach,
                    self.surface.as_ref(),
                    &self.config.substrate,
                )?;
                let reference = transform_to_reference(&local, &frame_at(&self.state, &beam, c.attach));
                (displacement, local, reference)
            }
            None => (Vector3::zeros(), Vector3::zeros(), Vector3::zeros()),
        };

        match &mut self.solver {
            Some(solver) => self.state = solver.step(&self.state, &loads)?,
            None => self.state.time += self.config.solve.dt,
        }

        let gaps = evaluate_gaps(&self.state, &beam, &self.config.substrate);
        let status = update_stiction(&self.status, &gaps, &self.config.substrate, self.state.time);
        if status.stuck_nodes() != self.status.stuck_nodes() {
            self.stick(status.stuck_nodes(), &loads)?;
            self.gaps = evaluate_gaps(&self.state, &beam, &self.config.substrate);
        } else {
            self.gaps = gaps;
        }
        self.status = status;

        self.frame = HapticFrame {
            tick: self.tick,
            load: loads,
            displacement,
            total_force: total_local,
            feedback: compute_feedback(&total, &scale),
            status: self.status.clone(),
        };
        Ok(())
    }

    pub fn snapshot(&self, stats: Option<&LoopStats>) -> Snapshot {
        let feedback = self.frame.feedback;
        Snapshot {
            tick: self.tick,
            time: self.state.time,
            deflections: self.state.deflections(),
            rotations: self.state.slopes(),
            directors: directors_from_state(&self.state, &self.config.beam),
            feedback: [feedback.x, feedback.y, feedback.z],
            status: self.status.clone(),
            gaps: self.gaps.iter().map(|g| g.gap).collect(),
            parameters: self.config.parameters(),
            paused: self.paused,
            stats: stats.cloned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::config::parse_config;

    fn damped(text: &str) -> SessionConfig {
        parse_config(&format!("damping_beta = 1e-5\n{text}")).unwrap()
    }

    fn press(y_device: f64, x_fraction: f64, session: &Session, t: f64) -> Command {
        let p = session.config().parameters();
        Command::ApplyStylus {
            sample: StylusSample {
                position: [x_fraction * p.length_m * p.length_scale, y_device, 0.0],
                applied: true,
                timestamp: t,
            },
        }
    }

    fn run(session: &mut Session, ticks: usize, commands: &[Command]) -> Vec<CommandOutcome> {
        let envelopes: Vec<Envelope> = commands
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, c)| Envelope::scripted(i as u64, c))
            .collect();
        let outcomes = session.tick(&envelopes).unwrap();
        for _ in 1..ticks {
            session.tick(&[]).unwrap();
        }
        outcomes
    }

    fn tip(session: &Session) -> f64 {
        *session.state().deflections().last().unwrap()
    }

    #[test]
    fn settled_stylus_load_matches_static_deflection() {
        for (text, tolerance) in [("modal_modes = 0", 1e-4), ("modal_modes = 8", 3e-3)] {
            let mut session = Session::new(damped(text)).unwrap();
            let cmd = press(-1e-3, 1.0, &session, 0.0);
            run(&mut session, 600, &[cmd]);
            let beam = session.config().beam;
            let force = -250.0 * 1e-3 / 1e6;
            let expected = force * beam.length.powi(3) / (3.0 * beam.bending_rigidity());
            assert!(
                (tip(&session) / expected - 1.0).abs() < tolerance,
                "{text}: {} vs {expected}",
                tip(&session)
            );
            assert!(matches!(session.status(), StictionStatus::Free));
            // at rest the force balance at the stylus vanishes
            let feedback = session.last_frame().feedback.norm();
            assert!(feedback < 1e-3 * 0.25, "{text}: {feedback}");
        }
    }

    #[test]
    fn doubling_youngs_modulus_halves_deflection() {
        let mut a = Session::new(damped("")).unwrap();
        let mut b = Session::new(damped("")).unwrap();
        let e = a.config().beam.material.youngs_modulus;
        run(
            &mut b,
            1,
            &[Command::SetParameter {
                name: ParameterName::YoungsModulus,
                value: 2.0 * e,
            }],
        );
        run(&mut a, 1, &[]);
        for s in [&mut a, &mut b] {
            let cmd = press(-8e-4, 0.7, s, 0.0);
            run(s, 300, &[cmd]);
        }
        assert!((tip(&b) / tip(&a) - 0.5).abs() < 1e-3, "{} {}", tip(&a), tip(&b));
    }

    #[test]
    fn pressing_through_the_gap_sticks_and_reset_restores() {
        let mut session = Session::new(damped("")).unwrap();
        let warn = press(-1.85e-3, 1.0, &session, 0.0);
        run(&mut session, 300, &[warn]);
        assert!(
            matches!(session.status(), StictionStatus::NearContact { .. }),
            "{:?}",
            session.status()
        );

        let push = press(-3e-3, 1.0, &session, 0.3);
        run(&mut session, 300, &[push]);
        let stuck_at = session.status().clone();
        assert!(stuck_at.is_stuck());
        let tip_node = session.config().beam.n_elements;
        assert!(stuck_at.stuck_nodes().contains(&tip_node));
        assert_eq!(tip(&session), -session.config().substrate.initial_gap);

        // releasing does not free it
        let release = Command::ApplyStylus {
            sample: StylusSample::released(0.6),
        };
        run(&mut session, 200, &[release]);
        assert!(session.status().is_stuck());
        assert_eq!(tip(&session), -session.config().substrate.initial_gap);
        assert_eq!(session.gaps()[tip_node].gap, 0.0);

        // mesh and gap changes are refused while stuck
        for name in [ParameterName::NElements, ParameterName::Length, ParameterName::Gap] {
            let outcome = run(&mut session, 1, &[Command::SetParameter { name, value: 40.0 }]);
            assert!(outcome[0].result.is_err());
        }
        assert_eq!(session.config().beam.n_elements, 32);

        run(&mut session, 1, &[Command::ResetFailure]);
        assert_eq!(session.status(), &StictionStatus::Free);
        assert!(session.state().q.iter().all(|&v| v == 0.0));
        let snap = session.snapshot(None);
        assert!(snap.deflections.iter().all(|&w| w == 0.0));
        assert_eq!(snap.status, StictionStatus::Free);
    }

    fn physics_equal(a: &Session, b: &Session) -> bool {
        a.state().q == b.state().q
            && a.state().q_dot == b.state().q_dot
            && a.state().q_ddot == b.state().q_ddot
            && a.status() == b.status()
            && a.gaps() == b.gaps()
            && a.system().dofs == b.system().dofs
            && a.system().stiffness == b.system().stiffness
            && a.config() == b.config()
    }

    #[test]
    fn reset_is_bit_exact_and_idempotent() {
        let config = damped("");
        let fresh = Session::new(config).unwrap();
        let mut session = Session::new(config).unwrap();
        let push = press(-5e-3, 0.9, &session, 0.0);
        run(&mut session, 150, &[push]);
        assert!(session.status().is_stuck());
        session.reset_failure().unwrap();
        assert!(physics_equal(&session, &fresh));
        session.reset_failure().unwrap();
        assert!(physics_equal(&session, &fresh));
        // and it keeps evolving exactly like a new session
        let mut again = Session::new(config).unwrap();
        let cmd = press(-1e-3, 0.5, &session, 1.0);
        run(&mut session, 20, std::slice::from_ref(&cmd));
        run(&mut again, 20, &[cmd]);
        assert_eq!(session.state().q, again.state().q);
    }

    #[test]
    fn invalid_commands_are_rejected_without_side_effects() {
        let mut session = Session::new(damped("")).unwrap();
        let cmd = press(-1e-3, 1.0, &session, 0.5);
        run(&mut session, 10, &[cmd]);
        let before = session.config().parameters();
        let bad = [
            Command::SetParameter {
                name: ParameterName::YoungsModulus,
                value: -1.0,
            },
            Command::SetParameter {
                name: ParameterName::NElements,
                value: 2.5,
            },
            Command::SetParameter {
                name: ParameterName::Thickness,
                value: f64::NAN,
            },
            Command::ApplyStylus {
                sample: StylusSample {
                    position: [0.0, f64::INFINITY, 0.0],
                    applied: true,
                    timestamp: 1.0,
                },
            },
            // earlier than the last accepted sample
            Command::ApplyStylus {
                sample: StylusSample::released(0.1),
            },
        ];
        let outcomes = run(&mut session, 1, &bad);
        assert!(outcomes.iter().all(|o| o.result.is_err()), "{outcomes:?}");
        assert!(outcomes[0].result.as_ref().unwrap_err().contains("youngs_modulus_pa"));
        assert_eq!(session.config().parameters(), before);
        assert!(session.state().is_finite());
        assert_eq!(outcomes.iter().map(|o| o.id).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
    }

    #[test]
    fn mesh_refinement_carries_the_deflection_over() {
        let mut session = Session::new(damped("")).unwrap();
        let cmd = press(-1e-3, 1.0, &session, 0.0);
        run(&mut session, 300, &[cmd]);
        let before = tip(&session);
        run(
            &mut session,
            1,
            &[Command::SetParameter {
                name: ParameterName::NElements,
                value: 48.0,
            }],
        );
        assert_eq!(session.state().deflections().len(), 49);
        assert_eq!(session.snapshot(None).directors.len(), 49);
        assert!((tip(&session) / before - 1.0).abs() < 1e-3);
        run(&mut session, 100, &[]);
        assert!((tip(&session) / before - 1.0).abs() < 1e-3);
    }

    #[test]
    fn pause_freezes_time_and_modal_size_is_clamped() {
        let mut session = Session::new(parse_config("n_elements = 2\nmodal_modes = 8").unwrap()).unwrap();
        assert_eq!(session.dimension(), 4);
        run(&mut session, 3, &[]);
        let t = session.state().time;
        run(&mut session, 5, &[Command::Pause]);
        assert!(session.is_paused());
        assert_eq!(session.state().time, t);
        assert_eq!(session.tick_count(), 8);
        run(&mut session, 1, &[Command::Resume]);
        assert!(session.state().time > t);
    }

    #[test]
    fn structure_switch_restarts_physics() {
        let mut session = Session::new(damped("")).unwrap();
        let cmd = press(-1e-3, 0.5, &session, 0.0);
        run(&mut session, 10, &[cmd]);
        run(
            &mut session,
            1,
            &[Command::SelectStructure {
                structure: Structure::Microbridge,
            }],
        );
        assert_eq!(session.config().structure, Structure::Microbridge);
        assert!(session.state().q.iter().all(|&v| v == 0.0));
        let snap = session.snapshot(None);
        assert_eq!(snap.parameters.structure, Structure::Microbridge);
        assert_eq!(snap.deflections.len(), snap.parameters.n_elements + 1);
    }
}
