//! Element shape functions in the local coordinate `ξ = x/h ∈ [0, 1]`.
//!
//! The baseline (order 0) basis is the Hermite cubic set. Higher orders add
//! frequency corrections from a power series in the dimensionless frequency
//! parameter `λ = ω²ρA h⁴ / EI`:
//!
//! ```text
//! N(ξ; λ) = P0(ξ) + λ P1(ξ) + λ² P2(ξ) + ...
//! d⁴P_r/dξ⁴ = P_{r-1},   P_r = P_r' = 0 at ξ = 0 and ξ = 1   (r ≥ 1)
//! ```
//!
//! so each partial sum satisfies `N'''' = λ N` up to the truncated term and
//! keeps the nodal interpolation property of the cubic basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest series order supported by [`shape_basis`].
pub const MAX_SERIES_ORDER: usize = 3;

/// Dense polynomial with coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn zero() -> Self {
        Self::new(Vec::new())
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Self {
        let mut coefficients = Vec::with_capacity(self.coefficients.len() + 1);
        coefficients.push(0.0);
        coefficients.extend(self.coefficients.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64));
        Self::new(coefficients)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coefficients.is_empty() || other.coefficients.is_empty() {
            return Self::zero();
        }
        let mut out = vec![0.0; self.coefficients.len() + other.coefficients.len() - 1];
        for (i, &a) in self.coefficients.iter().enumerate() {
            for (j, &b) in other.coefficients.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        let n = self.coefficients.len().max(other.coefficients.len());
        let mut out = vec![0.0; n];
        for (k, &c) in self.coefficients.iter().enumerate() {
            out[k] += c;
        }
        for (k, &c) in other.coefficients.iter().enumerate() {
            out[k] += scale * c;
        }
        Self::new(out)
    }

    /// Exact integral over `[0, 1]`.
    pub fn integrate_unit(&self) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, &c)| c / (k + 1) as f64)
            .sum()
    }
}

/// Shape functions for one two-node element, DOF order
/// `[w_a, θ_a, w_b, θ_b]`.
///
/// The rotation shapes are normalized to unit slope in `ξ`; multiply them by
/// the element length to obtain the physical shape in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunctionBasis {
    /// `terms[r][i]` is the `λ^r` coefficient polynomial of shape `i`.
    pub terms: Vec<[Polynomial; 4]>,
}

impl ShapeFunctionBasis {
    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    /// Shape polynomials summed at frequency parameter `λ`.
    pub fn at(&self, lambda: f64) -> [Polynomial; 4] {
        let mut shapes = self.terms[0].clone();
        let mut power = 1.0;
        for term in &self.terms[1..] {
            power *= lambda;
            for (shape, correction) in shapes.iter_mut().zip(term) {
                *shape = shape.add_scaled(correction, power);
            }
        }
        shapes
    }

    /// Values of the order-0 shapes at `ξ` (rotation shapes unscaled).
    pub fn cubic_values(xi: f64) -> [f64; 4] {
        let xi2 = xi * xi;
        let xi3 = xi2 * xi;
        [
            1.0 - 3.0 * xi2 + 2.0 * xi3,
            xi - 2.0 * xi2 + xi3,
            3.0 * xi2 - 2.0 * xi3,
            -xi2 + xi3,
        ]
    }

    /// `d/dξ` of the order-0 shapes at `ξ`.
    pub fn cubic_slopes(xi: f64) -> [f64; 4] {
        let xi2 = xi * xi;
        [
            -6.0 * xi + 6.0 * xi2,
            1.0 - 4.0 * xi + 3.0 * xi2,
            6.0 * xi - 6.0 * xi2,
            -2.0 * xi + 3.0 * xi2,
        ]
    }
}

fn hermite_cubics() -> [Polynomial; 4] {
    [
        Polynomial::new(vec![1.0, 0.0, -3.0, 2.0]),
        Polynomial::new(vec![0.0, 1.0, -2.0, 1.0]),
        Polynomial::new(vec![0.0, 0.0, 3.0, -2.0]),
        Polynomial::new(vec![0.0, 0.0, -1.0, 1.0]),
    ]
}

/// Solves `P'''' = source` with clamped homogeneous conditions at both ends.
fn series_correction(source: &Polynomial) -> Polynomial {
    let particular = source
        .antiderivative()
        .antiderivative()
        .antiderivative()
        .antiderivative();
    let value = particular.eval(1.0);
    let slope = particular.derivative().eval(1.0);
    // particular already vanishes with its slope at ξ = 0; fix ξ = 1 with
    // c2 ξ² + c3 ξ³.
    let c3 = 2.0 * value - slope;
    let c2 = slope - 3.0 * value;
    particular.add_scaled(&Polynomial::new(vec![0.0, 0.0, c2, c3]), 1.0)
}

pub fn shape_basis(order: usize) -> Result<ShapeFunctionBasis> {
    if order > MAX_SERIES_ORDER {
        return Err(Error::UnsupportedOrder {
            requested: order,
            max: MAX_SERIES_ORDER,
        });
    }
    let mut terms = vec![hermite_cubics()];
    for r in 1..=order {
        let previous = &terms[r - 1];
        let next = [
            series_correction(&previous[0]),
            series_correction(&previous[1]),
            series_correction(&previous[2]),
            series_correction(&previous[3]),
        ];
        terms.push(next);
    }
    Ok(ShapeFunctionBasis { terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_nodal_values() {
        for order in 0..=MAX_SERIES_ORDER {
            let basis = shape_basis(order).unwrap();
            let shapes = basis.at(0.7);
            for (i, shape) in shapes.iter().enumerate() {
                let slope = shape.derivative();
                let expected = [
                    (i == 0) as u8 as f64,
                    (i == 1) as u8 as f64,
                    (i == 2) as u8 as f64,
                    (i == 3) as u8 as f64,
                ];
                let got = [shape.eval(0.0), slope.eval(0.0), shape.eval(1.0), slope.eval(1.0)];
                for (g, e) in got.iter().zip(expected) {
                    assert!((g - e).abs() < 1e-13, "order {order} shape {i}: {got:?}");
                }
            }
        }
    }

    #[test]
    fn cubic_partition_of_unity() {
        let shapes = shape_basis(0).unwrap().at(0.0);
        for k in 0..=20 {
            let xi = k as f64 / 20.0;
            let sum = shapes[0].eval(xi) + shapes[2].eval(xi);
            assert!((sum - 1.0).abs() < 1e-15);
            let direct = ShapeFunctionBasis::cubic_values(xi);
            for (s, d) in shapes.iter().zip(direct) {
                assert!((s.eval(xi) - d).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn series_terms_satisfy_recurrence() {
        let basis = shape_basis(2).unwrap();
        for r in 1..=2 {
            for i in 0..4 {
                let fourth = basis.terms[r][i].derivative().derivative().derivative().derivative();
                for k in 0..=10 {
                    let xi = k as f64 / 10.0;
                    let lhs = fourth.eval(xi);
                    let rhs = basis.terms[r - 1][i].eval(xi);
                    assert!((lhs - rhs).abs() < 1e-12, "r={r} i={i} xi={xi}");
                }
            }
        }
    }

    #[test]
    fn order_above_truncation_rejected() {
        assert!(matches!(
            shape_basis(MAX_SERIES_ORDER + 1),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn polynomial_arithmetic() {
        let p = Polynomial::new(vec![1.0, 2.0]);
        let q = Polynomial::new(vec![0.0, 0.0, 3.0]);
        let pq = p.mul(&q);
        assert_eq!(pq.coefficients, vec![0.0, 0.0, 3.0, 6.0]);
        assert_eq!(pq.degree(), 3);
        assert!((pq.integrate_unit() - 2.5).abs() < 1e-15);
        assert_eq!(pq.antiderivative().derivative().coefficients, pq.coefficients);
    }
}
