//! Model data: confinement potentials `G`, control shape functions `α`, and
//! the invariant weight `μ ∝ exp(−β(v²/2 + G(x)))` sampled on a grid.
//!
//! All gradients are analytic (never finite-differenced): the control
//! gradients feed directly into stabilizability inner products where
//! differencing noise would be indistinguishable from a genuine failure.

use crate::error::{KfpError, Result};
use crate::grid::PhaseGrid;

/// Confinement potential `G` with analytic derivative. Polynomial
/// coefficients are ascending (`coeffs[k]` multiplies `x^k`).
#[derive(Debug, Clone, PartialEq)]
pub enum ConfinementPotential {
    TripleWell,
    Quadratic,
    Polynomial { coeffs: Vec<f64> },
}

impl ConfinementPotential {
    /// Validating constructor for the polynomial kind: confinement requires
    /// an even-degree leading term with positive coefficient (degree 0 is
    /// allowed — constant potentials are bounded below on any domain).
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(KfpError::Model("polynomial potential needs coefficients".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(KfpError::Model("polynomial coefficients must be finite".into()));
        }
        let deg = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        let lead = coeffs[deg];
        if deg % 2 != 0 || lead <= 0.0 {
            return Err(KfpError::Model(format!(
                "polynomial potential must have even leading degree with positive \
                 leading coefficient (got degree {deg} with coefficient {lead})"
            )));
        }
        Ok(Self::Polynomial { coeffs })
    }

    /// `(G(x), G′(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match self {
            Self::TripleWell => triple_well(x),
            Self::Quadratic => (0.5 * x * x, x),
            Self::Polynomial { coeffs } => {
                let mut g = 0.0;
                let mut gp = 0.0;
                // Horner for the value and derivative simultaneously.
                for &c in coeffs.iter().rev() {
                    gp = gp * x + g;
                    g = g * x + c;
                }
                (g, gp)
            }
        }
    }
}

/// Triple-well confinement potential and its derivative:
/// `G(x) = (((x²/2 − 15)x² + 119)x² + 28x + 50)/200`,
/// `G′(x) = (3x⁵ − 60x³ + 238x + 28)/200`.
pub fn triple_well(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let g = (((0.5 * x2 - 15.0) * x2 + 119.0) * x2 + 28.0 * x + 50.0) / 200.0;
    let gp = (((3.0 * x2 - 60.0) * x2 + 238.0) * x + 28.0) / 200.0;
    (g, gp)
}

/// Control shape `α` with analytic derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlShape {
    /// `α(x) = 1/(1 + exp(−(x − center)))`.
    Logistic { center: f64 },
    /// Node-sampled values; both columns must match the assembly grid.
    Tabulated { alpha: Vec<f64>, alpha_prime: Vec<f64> },
}

impl ControlShape {
    /// `(α(x), α′(x))`. Tabulated shapes cannot be evaluated pointwise.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match self {
            Self::Logistic { center } => logistic(x - center),
            Self::Tabulated { .. } => {
                panic!("tabulated shapes are sampled per grid, not pointwise")
            }
        }
    }

    /// Samples `(α, α′)` on the position nodes of `grid`.
    pub fn sample(&self, grid: &PhaseGrid) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Logistic { .. } => {
                let (a, ap): (Vec<f64>, Vec<f64>) =
                    grid.xs().iter().map(|&x| self.eval(x)).unzip();
                Ok((a, ap))
            }
            Self::Tabulated { alpha, alpha_prime } => {
                if alpha.len() != grid.points_x() || alpha_prime.len() != grid.points_x() {
                    return Err(KfpError::Model(format!(
                        "tabulated shape has {} values but the grid has {} position nodes",
                        alpha.len(),
                        grid.points_x()
                    )));
                }
                if alpha.iter().chain(alpha_prime).any(|v| !v.is_finite()) {
                    return Err(KfpError::Model("tabulated shape values must be finite".into()));
                }
                Ok((alpha.clone(), alpha_prime.clone()))
            }
        }
    }
}

/// Logistic `σ(z) = 1/(1 + e^{−z})` and `σ′ = σ(1−σ)`, with the evaluation
/// branch split on the sign of `z` so neither branch exponentiates a large
/// positive argument (no overflow at domain edges).
fn logistic(z: f64) -> (f64, f64) {
    let a = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    (a, a * (1.0 - a))
}

/// The four standard logistic shapes: `α_i(x) = 1/(1 + exp(−(x + 2i − 5)))`
/// for `i = 1..4`, i.e. centers `+3, +1, −1, −3`.
pub fn default_logistic_shapes() -> Vec<ControlShape> {
    (1..=4)
        .map(|i| ControlShape::Logistic { center: 5.0 - 2.0 * i as f64 })
        .collect()
}

/// Shape `i ∈ {1..4}` of the standard bank, evaluated at `x`.
pub fn logistic_shape(i: usize, x: f64) -> (f64, f64) {
    assert!((1..=4).contains(&i), "shape index must be 1..4, got {i}");
    logistic(x - (5.0 - 2.0 * i as f64))
}

/// Invariant weight sampled on a grid: unnormalized values
/// `μ_ij = exp(−β(v_j²/2 + G(x_i)))` plus the normalizer
/// `Z = h_x h_v Σ μ_ij`, so the nodal masses `h_x h_v μ_ij / Z` sum to one.
#[derive(Debug, Clone)]
pub struct InvariantWeight {
    /// Unnormalized `exp(−βH)` per node, x-major.
    pub mu: Vec<f64>,
    /// Normalizer `Z = h_x h_v Σ μ`.
    pub z: f64,
    /// Quadrature weight `h_x · h_v`.
    pub hxhv: f64,
}

impl InvariantWeight {
    /// Diagonal of the symmetrizing map `T = diag(√(h_x h_v μ/Z))`; squares
    /// are the nodal masses, so `‖T𝟙‖ = 1` up to summation roundoff.
    pub fn t_diag(&self) -> Vec<f64> {
        let c = self.hxhv / self.z;
        self.mu.iter().map(|&m| (c * m).sqrt()).collect()
    }
}

pub fn invariant_weight(
    pot: &ConfinementPotential,
    grid: &PhaseGrid,
    beta: f64,
) -> Result<InvariantWeight> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(KfpError::Model(format!("β must be positive and finite, got {beta}")));
    }
    let g: Vec<f64> = grid.xs().iter().map(|&x| pot.eval(x).0).collect();
    let mut mu = vec![0.0; grid.n()];
    for (i, &gi) in g.iter().enumerate() {
        for (j, &v) in grid.vs().iter().enumerate() {
            mu[grid.idx(i, j)] = (-beta * (0.5 * v * v + gi)).exp();
        }
    }
    let maxval = mu.iter().cloned().fold(0.0f64, f64::max);
    if maxval < 1e-300 {
        return Err(KfpError::Model(
            "invariant weight underflowed at every node; the domain is truncated \
             too far out for this potential and β"
                .into(),
        ));
    }
    let hxhv = grid.hx() * grid.hv();
    let z = hxhv * mu.iter().sum::<f64>();
    Ok(InvariantWeight { mu, z, hxhv })
}
