use serde::{Deserialize, Serialize};

use super::config::SessionConfig;
use crate::beam::{BeamConfig, BoundaryCondition};
use crate::error::Result;
use crate::solver::{buckling_load, natural_frequencies, static_solve, LoadPosition, LoadSet, SolveOptions};

/// One solver result against its closed-form value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn relative_error(&self) -> f64 {
        ((self.computed - self.expected) / self.expected).abs()
    }

    pub fn passed(&self) -> bool {
        self.relative_error() <= self.tolerance
    }
}

/// Roots `βL` of the clamped-free frequency equation `cos βL cosh βL = −1`.
const CANTILEVER_BETA_L: [f64; 3] = [1.875_104_07, 4.694_091_13, 7.854_757_44];
/// First root of the clamped-clamped equation `cos βL cosh βL = 1`.
const BRIDGE_BETA_L: f64 = 4.730_040_74;

fn frequency(beam: &BeamConfig, beta_l: f64) -> f64 {
    let l = beam.length;
    beta_l * beta_l / (2.0 * std::f64::consts::PI * l * l) * (beam.bending_rigidity() / beam.mass_per_length()).sqrt()
}

/// Static, modal and buckling checks on the configured beam geometry and
/// material. Meshes are refined to at least 16 elements for statics and 32
/// for modes, the sizes at which the element is expected to be converged.
pub fn run_oracle_suite(config: &SessionConfig) -> Result<Vec<OracleCheck>> {
    let options = SolveOptions::default();
    let base = config.beam;
    let ei = base.bending_rigidity();
    let l = base.length;
    let mut checks = Vec::new();

    let n_static = base.n_elements.max(16);
    let cantilever = base
        .with_elements(n_static)
        .with_boundary(BoundaryCondition::ClampedFree);
    // a tip deflection of 1% of the thickness keeps both cases linear
    let target = 0.01 * base.section.thickness;
    let force = 3.0 * ei * target / l.powi(3);
    let state = static_solve(
        &cantilever,
        &LoadSet::point(LoadPosition::Node(n_static), force),
        &options,
    )?;
    checks.push(OracleCheck {
        name: "cantilever tip deflection FL^3/(3EI)".into(),
        computed: state.deflection(n_static),
        expected: force * l.powi(3) / (3.0 * ei),
        tolerance: 0.01,
    });

    let n_bridge = n_static + n_static % 2;
    let bridge = base
        .with_elements(n_bridge)
        .with_boundary(BoundaryCondition::ClampedClamped);
    let force = 192.0 * ei * target / l.powi(3);
    let state = static_solve(
        &bridge,
        &LoadSet::point(LoadPosition::Node(n_bridge / 2), force),
        &options,
    )?;
    checks.push(OracleCheck {
        name: "microbridge midspan deflection FL^3/(192EI)".into(),
        computed: state.deflection(n_bridge / 2),
        expected: force * l.powi(3) / (192.0 * ei),
        tolerance: 0.01,
    });

    let n_modal = base.n_elements.max(32);
    let cantilever = base
        .with_elements(n_modal)
        .with_boundary(BoundaryCondition::ClampedFree);
    let (freqs, _) = natural_frequencies(&cantilever, 3)?;
    for (i, (&computed, &beta_l)) in freqs.iter().zip(&CANTILEVER_BETA_L).enumerate() {
        checks.push(OracleCheck {
            name: format!("cantilever mode {} frequency", i + 1),
            computed,
            expected: frequency(&cantilever, beta_l),
            tolerance: 0.005,
        });
    }
    let bridge = cantilever.with_boundary(BoundaryCondition::ClampedClamped);
    let (freqs, _) = natural_frequencies(&bridge, 1)?;
    checks.push(OracleCheck {
        name: "microbridge mode 1 frequency".into(),
        computed: freqs[0],
        expected: frequency(&bridge, BRIDGE_BETA_L),
        tolerance: 0.005,
    });

    let pi2 = std::f64::consts::PI.powi(2);
    checks.push(OracleCheck {
        name: "microbridge buckling load 4pi^2 EI/L^2".into(),
        computed: buckling_load(&bridge)?,
        expected: 4.0 * pi2 * ei / (l * l),
        tolerance: 0.02,
    });
    checks.push(OracleCheck {
        name: "cantilever buckling load pi^2 EI/(4L^2)".into(),
        computed: buckling_load(&cantilever)?,
        expected: pi2 * ei / (4.0 * l * l),
        tolerance: 0.02,
    });
    Ok(checks)
}

/// Fixed-width pass/fail table.
pub fn format_table(checks: &[OracleCheck]) -> String {
    let mut out = format!(
        "{:<46} {:>14} {:>14} {:>10} {:>8}  result\n",
        "check", "computed", "expected", "rel.err", "tol"
    );
    for c in checks {
        out.push_str(&format!(
            "{:<46} {:>14.6e} {:>14.6e} {:>10.2e} {:>8.1e}  {}\n",
            c.name,
            c.computed,
            c.expected,
            c.relative_error(),
            c.tolerance,
            if c.passed() { "PASS" } else { "FAIL" }
        ));
    }
    out
}
