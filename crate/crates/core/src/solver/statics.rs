use super::linalg::EquilibratedCholesky;
use super::{LoadSet, SolveOptions};
use crate::beam::{axial_force, BeamConfig, BeamState, SystemMatrices};
use crate::error::{Error, Result};

// Below this squared pivot ratio the equilibrated stiffness is treated as
// singular (unrestrained rigid-body motion).
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Static equilibrium of the beam under `loads`, iterating the membrane
/// force to a fixed point.
pub fn static_solve(config: &BeamConfig, loads: &LoadSet, options: &SolveOptions) -> Result<BeamState> {
    config.validate()?;
    let system = SystemMatrices::assemble(config);
    static_solve_with(config, &system, loads, options)
}

/// [`static_solve`] on pre-assembled matrices, honouring any prescribed
/// DOFs in `system.dofs` (boundary clamps and stuck contact nodes).
pub fn static_solve_with(
    config: &BeamConfig,
    system: &SystemMatrices,
    loads: &LoadSet,
    options: &SolveOptions,
) -> Result<BeamState> {
    options.validate()?;
    let dofs = &system.dofs;
    let f = loads.load_vector(config)?;
    let f_free = dofs.restrict(&f);
    let prescribed = dofs.prescribed_values();
    if dofs.free().is_empty() {
        return Ok(BeamState::at_rest(dofs.expand(&f_free, true)));
    }

    let solve_at = |axial: f64| -> Result<BeamState> {
        let k_eff = system.effective_stiffness(axial);
        let k_ff = dofs.free_block(&k_eff);
        let rhs = &f_free - dofs.coupling_block(&k_eff) * &prescribed;
        let factor = EquilibratedCholesky::new(&k_ff)?;
        if factor.pivot_ratio() < SINGULAR_PIVOT_RATIO {
            return Err(Error::SingularSystem(
                "stiffness is singular; boundary conditions leave rigid-body motion free".into(),
            ));
        }
        Ok(BeamState::at_rest(dofs.expand(&factor.solve(&rhs), true)))
    };

    match axial_fixed_point(0.0, options, |axial| {
        let state = solve_at(axial)?;
        Ok((axial_force(&state, config), state))
    })? {
        FixedPoint::Converged(state) => Ok(state),
        FixedPoint::Exhausted { residual, last } => Err(Error::Convergence {
            iterations: options.max_iterations,
            residual,
            last: Box::new(last),
        }),
    }
}

pub(crate) enum FixedPoint<T> {
    Converged(T),
    Exhausted { residual: f64, last: T },
}

/// Solves `N = g(N)` where `eval(N)` returns `g(N)` and the iterate it came
/// from. The residual `g(N) − N` is monotone, so once two iterates straddle
/// the root the update switches from plain substitution to Illinois regula
/// falsi.
pub(crate) fn axial_fixed_point<T>(
    start: f64,
    options: &SolveOptions,
    mut eval: impl FnMut(f64) -> Result<(f64, T)>,
) -> Result<FixedPoint<T>> {
    let mut axial = start;
    let mut residual = f64::INFINITY;
    let mut last = None;
    let mut previous: Option<(f64, f64)> = None;
    let mut bracket: Option<((f64, f64), (f64, f64))> = None;
    for _ in 0..options.max_iterations {
        let (updated, iterate) = eval(axial)?;
        let h = updated - axial;
        residual = h.abs();
        if residual <= options.axial_coupling_tolerance * updated.abs().max(axial.abs()) {
            return Ok(FixedPoint::Converged(iterate));
        }
        last = Some(iterate);

        bracket = match (bracket, previous) {
            (Some((lo, hi)), _) => {
                // keep the end whose residual sign differs from h
                if h.signum() == lo.1.signum() {
                    Some(((axial, h), (hi.0, hi.1 * 0.5)))
                } else {
                    Some(((lo.0, lo.1 * 0.5), (axial, h)))
                }
            }
            (None, Some(p)) if p.1.signum() != h.signum() => Some((p, (axial, h))),
            (None, _) => None,
        };
        previous = Some((axial, h));
        axial = match bracket {
            Some(((a, ha), (b, hb))) => {
                let candidate = b - hb * (b - a) / (hb - ha);
                if candidate.is_finite() && candidate > a.min(b) && candidate < a.max(b) {
                    candidate
                } else {
                    0.5 * (a + b)
                }
            }
            None => updated,
        };
    }
    Ok(FixedPoint::Exhausted {
        residual,
        last: last.expect("at least one iteration"),
    })
}
