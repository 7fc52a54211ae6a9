use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use super::shape::{Polynomial, ShapeFunctionBasis};
use super::{BeamConfig, DOF_PER_NODE};
use crate::error::{Error, Result};

/// Consistent mass block `ρA ∫ NᵀN dx` of the cubic basis.
#[rustfmt::skip]
pub fn element_mass(mass_per_length: f64, h: f64) -> Matrix4<f64> {
    let c = mass_per_length * h / 420.0;
    let h2 = h * h;
    Matrix4::new(
        156.0, 22.0 * h, 54.0, -13.0 * h,
        22.0 * h, 4.0 * h2, 13.0 * h, -3.0 * h2,
        54.0, 13.0 * h, 156.0, -22.0 * h,
        -13.0 * h, -3.0 * h2, -22.0 * h, 4.0 * h2,
    ) * c
}

/// Bending stiffness block `EI ∫ N''ᵀN'' dx` of the cubic basis.
#[rustfmt::skip]
pub fn element_stiffness(bending_rigidity: f64, h: f64) -> Matrix4<f64> {
    let c = bending_rigidity / (h * h * h);
    let h2 = h * h;
    Matrix4::new(
        12.0, 6.0 * h, -12.0, 6.0 * h,
        6.0 * h, 4.0 * h2, -6.0 * h, 2.0 * h2,
        -12.0, -6.0 * h, 12.0, -6.0 * h,
        6.0 * h, 2.0 * h2, -6.0 * h, 4.0 * h2,
    ) * c
}

/// Geometric stiffness block per unit axial force, `∫ N'ᵀN' dx`.
#[rustfmt::skip]
pub fn element_geometric(h: f64) -> Matrix4<f64> {
    let c = 1.0 / (30.0 * h);
    let h2 = h * h;
    Matrix4::new(
        36.0, 3.0 * h, -36.0, 3.0 * h,
        3.0 * h, 4.0 * h2, -3.0 * h, -h2,
        -36.0, -3.0 * h, 36.0, -3.0 * h,
        3.0 * h, -h2, -3.0 * h, 4.0 * h2,
    ) * c
}

/// Element blocks integrated exactly from an arbitrary shape basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrices {
    pub mass: Matrix4<f64>,
    pub stiffness: Matrix4<f64>,
    /// `∫ N'ᵀN' dx`, not yet scaled by the beam length.
    pub geometric: Matrix4<f64>,
}

impl ElementMatrices {
    pub fn integrate(
        basis: &ShapeFunctionBasis,
        lambda: f64,
        bending_rigidity: f64,
        mass_per_length: f64,
        h: f64,
    ) -> Self {
        let shapes = basis.at(lambda);
        let slopes: Vec<Polynomial> = shapes.iter().map(Polynomial::derivative).collect();
        let curvatures: Vec<Polynomial> = slopes.iter().map(Polynomial::derivative).collect();
        let dof_scale = [1.0, h, 1.0, h];

        let mut mass = Matrix4::zeros();
        let mut stiffness = Matrix4::zeros();
        let mut geometric = Matrix4::zeros();
        for i in 0..4 {
            for j in i..4 {
                let s = dof_scale[i] * dof_scale[j];
                let m = mass_per_length * h * s * shapes[i].mul(&shapes[j]).integrate_unit();
                let k = bending_rigidity / h.powi(3) * s * curvatures[i].mul(&curvatures[j]).integrate_unit();
                let g = s / h * slopes[i].mul(&slopes[j]).integrate_unit();
                mass[(i, j)] = m;
                mass[(j, i)] = m;
                stiffness[(i, j)] = k;
                stiffness[(j, i)] = k;
                geometric[(i, j)] = g;
                geometric[(j, i)] = g;
            }
        }
        Self {
            mass,
            stiffness,
            geometric,
        }
    }
}

fn scatter(global: &mut DMatrix<f64>, element: usize, block: &Matrix4<f64>) {
    let base = DOF_PER_NODE * element;
    for i in 0..4 {
        for j in 0..4 {
            global[(base + i, base + j)] += block[(i, j)];
        }
    }
}

fn assemble_with(config: &BeamConfig, block: impl Fn(usize) -> Matrix4<f64>) -> DMatrix<f64> {
    let n = config.n_dofs();
    let mut global = DMatrix::zeros(n, n);
    for e in 0..config.n_elements {
        scatter(&mut global, e, &block(e));
    }
    global
}

/// Global consistent mass matrix (all DOFs, constraints not yet removed).
pub fn assemble_mass(config: &BeamConfig) -> DMatrix<f64> {
    let block = element_mass(config.mass_per_length(), config.element_length());
    assemble_with(config, |_| block)
}

/// Global bending stiffness matrix `K_L`.
pub fn assemble_stiffness_linear(config: &BeamConfig) -> DMatrix<f64> {
    let block = element_stiffness(config.bending_rigidity(), config.element_length());
    assemble_with(config, |_| block)
}

/// Global geometric stiffness `K_NL = L ∫ N'ᵀN' dx`.
///
/// The factor `L` makes `(N/L)·K_NL` the physical geometric stiffness of an
/// axial force `N`, so `½ (N/L) qᵀ K_NL q = ½ N ∫ w'² dx`.
pub fn assemble_stiffness_geometric(config: &BeamConfig) -> DMatrix<f64> {
    let block = element_geometric(config.element_length()) * config.length;
    assemble_with(config, |_| block)
}

/// Partition of the global DOFs into free and prescribed sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofMap {
    n_dofs: usize,
    free: Vec<usize>,
    /// Sorted `(dof, prescribed value)`.
    prescribed: Vec<(usize, f64)>,
}

impl DofMap {
    pub fn new(n_dofs: usize, prescribed: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut prescribed: Vec<(usize, f64)> = prescribed.into_iter().collect();
        prescribed.sort_by_key(|&(dof, _)| dof);
        prescribed.dedup_by_key(|&mut (dof, _)| dof);
        let free = (0..n_dofs)
            .filter(|dof| prescribed.binary_search_by_key(dof, |&(d, _)| d).is_err())
            .collect();
        Self {
            n_dofs,
            free,
            prescribed,
        }
    }

    pub fn for_config(config: &BeamConfig) -> Self {
        Self::new(
            config.n_dofs(),
            config
                .boundary
                .constrained_dofs(config.n_nodes())
                .into_iter()
                .map(|dof| (dof, 0.0)),
        )
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn prescribed(&self) -> &[(usize, f64)] {
        &self.prescribed
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.prescribed.binary_search_by_key(&dof, |&(d, _)| d).is_ok()
    }

    /// Returns a copy with extra prescribed DOFs; DOFs already constrained
    /// keep their existing value.
    pub fn with_prescribed(&self, extra: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut all = self.prescribed.clone();
        for (dof, value) in extra {
            if !self.is_constrained(dof) && !all.iter().any(|&(d, _)| d == dof) {
                all.push((dof, value));
            }
        }
        Self::new(self.n_dofs, all)
    }

    pub fn free_block(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        full.select_rows(&self.free).select_columns(&self.free)
    }

    /// Rows of free DOFs, columns of prescribed DOFs.
    pub fn coupling_block(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<usize> = self.prescribed.iter().map(|&(d, _)| d).collect();
        full.select_rows(&self.free).select_columns(&cols)
    }

    pub fn prescribed_values(&self) -> DVector<f64> {
        DVector::from_iterator(self.prescribed.len(), self.prescribed.iter().map(|&(_, v)| v))
    }

    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        full.select_rows(&self.free)
    }

    /// Full vector from free values, filling prescribed DOFs with
    /// `prescribed_fill` (their prescribed values for positions, zero for
    /// rates).
    pub fn expand(&self, free_values: &DVector<f64>, with_prescribed: bool) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_dofs);
        for (k, &dof) in self.free.iter().enumerate() {
            full[dof] = free_values[k];
        }
        if with_prescribed {
            for &(dof, value) in &self.prescribed {
                full[dof] = value;
            }
        }
        full
    }
}

/// Mass, bending stiffness and geometric stiffness of one beam, with the
/// DOF partition that applies boundary and contact constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub geometric: DMatrix<f64>,
    pub dofs: DofMap,
    /// Beam length `L`, the divisor of the axial-force scaling.
    pub length: f64,
}

impl SystemMatrices {
    pub fn assemble(config: &BeamConfig) -> Self {
        Self {
            mass: assemble_mass(config),
            stiffness: assemble_stiffness_linear(config),
            geometric: assemble_stiffness_geometric(config),
            dofs: DofMap::for_config(config),
            length: config.length,
        }
    }

    /// Matrices from a series shape basis evaluated at the per-element
    /// frequency parameter `lambda`.
    pub fn assemble_with_basis(config: &BeamConfig, basis: &ShapeFunctionBasis, lambda: f64) -> Self {
        let blocks = ElementMatrices::integrate(
            basis,
            lambda,
            config.bending_rigidity(),
            config.mass_per_length(),
            config.element_length(),
        );
        let geometric = blocks.geometric * config.length;
        Self {
            mass: assemble_with(config, |_| blocks.mass),
            stiffness: assemble_with(config, |_| blocks.stiffness),
            geometric: assemble_with(config, |_| geometric),
            dofs: DofMap::for_config(config),
            length: config.length,
        }
    }

    pub fn with_dofs(mut self, dofs: DofMap) -> Result<Self> {
        if dofs.n_dofs() != self.mass.nrows() {
            return Err(Error::InvalidArgument(format!(
                "DOF map covers {} DOFs, matrices have {}",
                dofs.n_dofs(),
                self.mass.nrows()
            )));
        }
        self.dofs = dofs;
        Ok(self)
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.nrows()
    }

    /// `K_L − (N/L) K_NL`: compressive `N > 0` softens, tensile `N < 0`
    /// stiffens.
    pub fn effective_stiffness(&self, axial_force: f64) -> DMatrix<f64> {
        if axial_force == 0.0 {
            self.stiffness.clone()
        } else {
            &self.stiffness - &self.geometric * (axial_force / self.length)
        }
    }
}
