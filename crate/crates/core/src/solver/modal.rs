use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::linalg::inverse_generalized_eigen;
use super::LoadSet;
use crate::beam::{shape_basis, BeamConfig, BeamState, BoundaryCondition, DofMap, SystemMatrices};
use crate::error::{Error, Result};

/// Mass-orthonormal vibration modes on the free DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    /// Free-DOF rows, one column per mode, `ΦᵀMΦ = I`.
    pub shapes: DMatrix<f64>,
    /// Natural angular frequencies (rad/s), ascending.
    pub omega: Vec<f64>,
    pub dofs: DofMap,
}

impl ModalBasis {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w / (2.0 * PI)).collect()
    }

    /// Mode `i` on all DOFs (zero at constrained DOFs).
    pub fn full_shape(&self, i: usize) -> DVector<f64> {
        self.dofs.expand(&self.shapes.column(i).into_owned(), false)
    }
}

/// First `count` modes of `stiffness φ = ω² M φ` on the free DOFs of
/// `system`. Unconstrained structures are handled with a spectral shift.
pub(crate) fn modes_of(system: &SystemMatrices, stiffness: &DMatrix<f64>, count: usize) -> Result<ModalBasis> {
    let dofs = &system.dofs;
    let n_free = dofs.free().len();
    if count == 0 || count > n_free {
        return Err(Error::InvalidArgument(format!(
            "requested {count} modes, system has {n_free} free DOFs"
        )));
    }
    let k_ff = dofs.free_block(stiffness);
    let m_ff = dofs.free_block(&system.mass);
    let shift = 1e-6 * k_ff.trace().abs() / m_ff.trace();
    let (mu, vectors) = inverse_generalized_eigen(&(&k_ff + &m_ff * shift), &m_ff)?;

    let mut shapes = DMatrix::zeros(n_free, count);
    let mut omega = Vec::with_capacity(count);
    for (i, &m) in mu.iter().take(count).enumerate() {
        if !(m > 0.0) {
            return Err(Error::Model(format!("non-positive inverse eigenvalue {m:e}")));
        }
        let lambda = 1.0 / m - shift;
        omega.push(lambda.max(0.0).sqrt());
        let phi = vectors.column(i);
        let norm = phi.dot(&(&m_ff * phi)).sqrt();
        shapes.set_column(i, &(phi / norm));
    }
    Ok(ModalBasis {
        shapes,
        omega,
        dofs: dofs.clone(),
    })
}

/// First `k` natural frequencies (Hz) and their modes.
pub fn natural_frequencies(config: &BeamConfig, k: usize) -> Result<(Vec<f64>, ModalBasis)> {
    natural_frequencies_under_axial_force(config, 0.0, k)
}

/// Natural frequencies with a prescribed membrane force (positive in
/// compression) held in the geometric stiffness.
pub fn natural_frequencies_under_axial_force(
    config: &BeamConfig,
    axial_force: f64,
    k: usize,
) -> Result<(Vec<f64>, ModalBasis)> {
    config.validate()?;
    let system = SystemMatrices::assemble(config);
    let basis = modes_of(&system, &system.effective_stiffness(axial_force), k)?;
    Ok((basis.frequencies_hz(), basis))
}

/// Natural frequencies (Hz) computed with the frequency-corrected series
/// shape functions of the given order.
///
/// Element matrices depend on the frequency through `λ = ω²ρA h⁴/EI`, so
/// each mode is found by iterating `ω` to a fixed point of the
/// frequency-dependent eigenproblem.
pub fn natural_frequencies_with_series(config: &BeamConfig, k: usize, order: usize) -> Result<Vec<f64>> {
    config.validate()?;
    let basis = shape_basis(order)?;
    let (baseline, _) = natural_frequencies(config, k)?;
    if order == 0 {
        return Ok(baseline);
    }
    let h = config.element_length();
    let lambda_per_omega2 = config.mass_per_length() * h.powi(4) / config.bending_rigidity();
    let mut out = Vec::with_capacity(k);
    for (mode, &f0) in baseline.iter().enumerate() {
        let mut omega = 2.0 * PI * f0;
        for _ in 0..100 {
            let system = SystemMatrices::assemble_with_basis(config, &basis, omega * omega * lambda_per_omega2);
            let next = modes_of(&system, &system.stiffness, mode + 1)?.omega[mode];
            let converged = (next - omega).abs() <= 1e-13 * next;
            omega = next;
            if converged {
                break;
            }
        }
        out.push(omega / (2.0 * PI));
    }
    Ok(out)
}

/// Critical compressive load `P_cr` (N): smallest positive `λ` with
/// `K_L φ = λ (1/L) K_NL φ`.
pub fn buckling_load(config: &BeamConfig) -> Result<f64> {
    config.validate()?;
    if config.boundary == BoundaryCondition::FreeFree {
        return Err(Error::InvalidArgument(
            "buckling requires a clamped boundary condition".into(),
        ));
    }
    let system = SystemMatrices::assemble(config);
    let dofs = &system.dofs;
    let k_ff = dofs.free_block(&system.stiffness);
    let g_ff = dofs.free_block(&system.geometric) / system.length;
    let (mu, _) = inverse_generalized_eigen(&k_ff, &g_ff)?;
    match mu.first() {
        Some(&largest) if largest > 0.0 => Ok(1.0 / largest),
        _ => Err(Error::Model(
            "no positive buckling eigenvalue; geometric stiffness has the wrong sign".into(),
        )),
    }
}

/// Projection of the beam onto its first `m` modes: `M_r = I`,
/// `K_r = diag(ω²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub basis: ModalBasis,
    /// Diagonal of `K_r`, `ω_i²`.
    pub stiffness: Vec<f64>,
    /// `Φᵀ` restricted to free DOFs; maps a full load vector to modal forces
    /// via [`ReducedModel::project_load`].
    pub load_projector: DMatrix<f64>,
}

impl ReducedModel {
    pub fn modes(&self) -> usize {
        self.stiffness.len()
    }

    pub fn project_load(&self, full_load: &DVector<f64>) -> DVector<f64> {
        &self.load_projector * self.basis.dofs.restrict(full_load)
    }

    pub fn expand(&self, modal: &DVector<f64>) -> DVector<f64> {
        self.basis.dofs.expand(&(&self.basis.shapes * modal), true)
    }

    /// Linear static response within the retained modes.
    pub fn static_solve(&self, config: &BeamConfig, loads: &LoadSet) -> Result<BeamState> {
        let forces = self.project_load(&loads.load_vector(config)?);
        let modal = DVector::from_iterator(self.modes(), forces.iter().zip(&self.stiffness).map(|(f, k)| f / k));
        Ok(BeamState::at_rest(self.expand(&modal)))
    }
}

pub fn modal_reduce(config: &BeamConfig, m: usize) -> Result<ReducedModel> {
    if m == 0 {
        return Err(Error::InvalidArgument("modal reduction needs at least one mode".into()));
    }
    let (_, basis) = natural_frequencies(config, m)?;
    let stiffness = basis.omega.iter().map(|w| w * w).collect();
    let load_projector = basis.shapes.transpose();
    Ok(ReducedModel {
        basis,
        stiffness,
        load_projector,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{static_solve, LoadPosition, SolveOptions};

    fn analytic_frequency(config: &BeamConfig, beta_l: f64) -> f64 {
        beta_l * beta_l / (2.0 * PI) * (config.bending_rigidity() / config.mass_per_length()).sqrt()
            / config.length.powi(2)
    }

    #[test]
    fn modes_are_mass_orthonormal_with_small_residuals() {
        let config = BeamConfig::reference_cantilever(32);
        let system = SystemMatrices::assemble(&config);
        let (_, basis) = natural_frequencies(&config, 6).unwrap();
        let m_ff = system.dofs.free_block(&system.mass);
        let k_ff = system.dofs.free_block(&system.stiffness);
        let gram = basis.shapes.transpose() * &m_ff * &basis.shapes;
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-10);
        let kr = basis.shapes.transpose() * &k_ff * &basis.shapes;
        for i in 0..6 {
            let w2 = basis.omega[i].powi(2);
            for j in 0..6 {
                let expected = if i == j { w2 } else { 0.0 };
                assert!((kr[(i, j)] - expected).abs() <= 1e-8 * w2, "({i},{j})");
            }
            let phi = basis.shapes.column(i);
            let k_phi = &k_ff * phi;
            let residual = (&k_phi - &m_ff * phi * w2).norm();
            assert!(residual <= 1e-8 * k_phi.norm(), "mode {i}: {residual:e}");
        }
    }

    #[test]
    fn density_scaling() {
        let config = BeamConfig::reference_cantilever(8);
        let mut heavy = config;
        heavy.material.density *= 2.0;
        let (f, _) = natural_frequencies(&config, 3).unwrap();
        let (g, _) = natural_frequencies(&heavy, 3).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert!((a / b - 2f64.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn too_many_modes_rejected() {
        let config = BeamConfig::reference_cantilever(2);
        assert!(matches!(
            natural_frequencies(&config, 5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(modal_reduce(&config, 0).is_err());
    }

    #[test]
    fn free_free_has_two_rigid_modes() {
        let config = BeamConfig::reference_cantilever(16).with_boundary(BoundaryCondition::FreeFree);
        let (f, _) = natural_frequencies(&config, 3).unwrap();
        let first_elastic = analytic_frequency(&config, 4.73004);
        assert!(f[0] < 1e-3 * first_elastic && f[1] < 1e-3 * first_elastic);
        assert!((f[2] / first_elastic - 1.0).abs() < 5e-3);
    }

    #[test]
    fn series_basis_agrees_with_cubic_and_improves_it() {
        let config = BeamConfig::reference_cantilever(16);
        let cubic = natural_frequencies_with_series(&config, 3, 0).unwrap();
        let series = natural_frequencies_with_series(&config, 3, 1).unwrap();
        assert!((series[0] / cubic[0] - 1.0).abs() < 0.01);
        for (i, beta_l) in [1.87510407, 4.69409113, 7.85475744].iter().enumerate() {
            let exact = analytic_frequency(&config, *beta_l);
            assert!((series[i] - exact).abs() <= (cubic[i] - exact).abs(), "mode {i}");
        }
    }

    #[test]
    fn buckling_scales_with_rigidity() {
        let config = BeamConfig::reference_cantilever(16).with_boundary(BoundaryCondition::ClampedClamped);
        let mut stiff = config;
        stiff.material.youngs_modulus *= 2.0;
        let ratio = buckling_load(&stiff).unwrap() / buckling_load(&config).unwrap();
        assert!((ratio - 2.0).abs() < 1e-10);
        assert!(buckling_load(&config.with_boundary(BoundaryCondition::FreeFree)).is_err());
    }

    #[test]
    fn compression_softens_first_mode() {
        let config = BeamConfig::reference_cantilever(16).with_boundary(BoundaryCondition::ClampedClamped);
        let p_cr = buckling_load(&config).unwrap();
        let (free, _) = natural_frequencies_under_axial_force(&config, 0.0, 1).unwrap();
        let (loaded, _) = natural_frequencies_under_axial_force(&config, 0.5 * p_cr, 1).unwrap();
        let (tensioned, _) = natural_frequencies_under_axial_force(&config, -0.5 * p_cr, 1).unwrap();
        assert!(loaded[0] < free[0] && free[0] < tensioned[0]);
    }

    #[test]
    fn complete_modal_basis_reproduces_full_solution() {
        let config = BeamConfig::reference_cantilever(8);
        let loads = LoadSet::point(LoadPosition::Arc(0.7 * config.length), 1e-6);
        let full = static_solve(&config, &loads, &SolveOptions::default()).unwrap();
        let n_free = config.n_dofs() - 2;
        let reduced = modal_reduce(&config, n_free)
            .unwrap()
            .static_solve(&config, &loads)
            .unwrap();
        let err = (&reduced.q - &full.q).amax() / full.q.amax();
        assert!(err < 1e-10, "{err:e}");
    }

    #[test]
    fn modal_error_decreases_with_modes() {
        let config = BeamConfig::reference_cantilever(32);
        let loads = LoadSet::point(LoadPosition::Node(32), 1e-6);
        let full = static_solve(&config, &loads, &SolveOptions::default())
            .unwrap()
            .deflection(32);
        let mut previous = f64::INFINITY;
        for m in 1..=8 {
            let tip = modal_reduce(&config, m)
                .unwrap()
                .static_solve(&config, &loads)
                .unwrap()
                .deflection(32);
            let err = (tip / full - 1.0).abs();
            assert!(err <= previous + 1e-14, "m = {m}: {err} > {previous}");
            if m >= 4 {
                assert!(err < 0.01);
            }
            previous = err;
        }
    }
}
