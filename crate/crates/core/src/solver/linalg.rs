//! Dense symmetric solves with diagonal equilibration.
//!
//! MEMS-scale matrices mix entries spanning many decades (`I ~ 1e-23 m⁴`,
//! rotations vs. deflections), so every factorization works on `D A D` with
//! `D = diag(1/√a_ii)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

fn equilibration(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let mut scale = DVector::zeros(a.nrows());
    for i in 0..a.nrows() {
        let d = a[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SingularSystem(format!(
                "non-positive diagonal entry {d:e} at row {i}"
            )));
        }
        scale[i] = 1.0 / d.sqrt();
    }
    Ok(scale)
}

fn scaled(a: &DMatrix<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| scale[i] * a[(i, j)] * scale[j])
}

/// Cholesky factor of an equilibrated symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct EquilibratedCholesky {
    scale: DVector<f64>,
    factor: Cholesky<f64, Dyn>,
}

impl EquilibratedCholesky {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let scale = equilibration(a)?;
        let factor = Cholesky::new(scaled(a, &scale))
            .ok_or_else(|| Error::SingularSystem("matrix is not positive definite".into()))?;
        Ok(Self { scale, factor })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let rhs = b.component_mul(&self.scale);
        self.factor.solve(&rhs).component_mul(&self.scale)
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// `min(l_ii)² / max(l_ii)²` of the equilibrated factor; a cheap
    /// conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        let l = self.factor.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for i in 0..self.dim() {
            let p = l[(i, i)] * l[(i, i)];
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }
}

/// Eigenpairs of `b φ = μ a φ` with `a` symmetric positive definite and `b`
/// symmetric, sorted by descending `μ`. Columns of the returned matrix are
/// `a`-orthonormal.
///
/// Posing stiffness problems in this inverse form puts the lowest modes at
/// the top of the spectrum, where a symmetric eigensolver is most accurate.
pub fn inverse_generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let scale = equilibration(a)?;
    let a_tilde = scaled(a, &scale);
    let b_tilde = scaled(b, &scale);
    let chol = Cholesky::new(a_tilde).ok_or_else(|| Error::SingularSystem("matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ B̃ L⁻ᵀ
    let l_inv_b = l
        .solve_lower_triangular(&b_tilde)
        .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&l_inv_b.transpose())
        .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..eigen.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eigen.eigenvalues[j].total_cmp(&eigen.eigenvalues[i]));

    let lt = l.transpose();
    let n = a.nrows();
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        values.push(eigen.eigenvalues[i]);
        let y = eigen.eigenvectors.column(i).into_owned();
        let psi = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
        vectors.set_column(k, &psi.component_mul(&scale));
    }
    Ok((values, vectors))
}

/// Solves the small dense system `a x = b` for symmetric `a` that may be
/// indefinite (reduced modal operators under compression).
pub fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Ok(chol) = EquilibratedCholesky::new(a) {
        return Ok(chol.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularSystem("matrix is singular".into()))
}
