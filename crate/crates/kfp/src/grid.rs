//! Tensor phase-space grid (position × velocity), uniform per axis with an
//! odd point count so the axis midpoint is a node. States are stored x-major:
//! entry `i·points_v + j` holds the value at `(x_i, v_j)`.

use crate::error::{KfpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    x_min: f64,
    x_max: f64,
    v_min: f64,
    v_max: f64,
    points_x: usize,
    points_v: usize,
}

impl PhaseGrid {
    pub fn new(
        x_min: f64,
        x_max: f64,
        points_x: usize,
        v_min: f64,
        v_max: f64,
        points_v: usize,
    ) -> Result<Self> {
        for (name, n) in [("points_x", points_x), ("points_v", points_v)] {
            if n < 3 || n % 2 == 0 {
                return Err(KfpError::Grid(format!(
                    "{name} must be odd and at least 3, got {n}"
                )));
            }
        }
        for (name, lo, hi) in [("x", x_min, x_max), ("v", v_min, v_max)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(KfpError::Grid(format!(
                    "{name} bounds must be finite with min < max, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { x_min, x_max, v_min, v_max, points_x, points_v })
    }

    /// Square default used by the desk-scale studies: `(−5,5)²`, 41×41.
    pub fn default_square() -> Self {
        Self::new(-5.0, 5.0, 41, -5.0, 5.0, 41).expect("static bounds are valid")
    }

    pub fn points_x(&self) -> usize {
        self.points_x
    }

    pub fn points_v(&self) -> usize {
        self.points_v
    }

    /// Total state dimension `points_x · points_v`.
    pub fn n(&self) -> usize {
        self.points_x * self.points_v
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points_x - 1) as f64
    }

    pub fn hv(&self) -> f64 {
        (self.v_max - self.v_min) / (self.points_v - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + self.hx() * i as f64
    }

    pub fn v(&self, j: usize) -> f64 {
        self.v_min + self.hv() * j as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.points_x).map(|i| self.x(i)).collect()
    }

    pub fn vs(&self) -> Vec<f64> {
        (0..self.points_v).map(|j| self.v(j)).collect()
    }

    pub fn x_bounds(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    pub fn v_bounds(&self) -> (f64, f64) {
        (self.v_min, self.v_max)
    }

    /// Flat index of grid node `(i, j)` (x-major layout).
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.points_v + j
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_uniform_and_centered() {
        let g = PhaseGrid::new(-5.0, 5.0, 41, -4.0, 4.0, 21).unwrap();
        assert_eq!(g.n(), 41 * 21);
        assert!((g.hx() - 0.25).abs() < 1e-15);
        assert!((g.hv() - 0.4).abs() < 1e-15);
        // Odd counts put zero exactly at the middle node of a symmetric axis.
        assert_eq!(g.x(20), 0.0);
        assert_eq!(g.v(10), 0.0);
        assert_eq!(g.x(0), -5.0);
        assert_eq!(g.x(40), 5.0);
        assert_eq!(g.idx(2, 3), 2 * 21 + 3);
    }

    #[test]
    fn rejects_even_counts_and_bad_bounds() {
        assert!(PhaseGrid::new(-5.0, 5.0, 40, -5.0, 5.0, 41).is_err());
        assert!(PhaseGrid::new(-5.0, 5.0, 41, -5.0, 5.0, 1).is_err());
        assert!(PhaseGrid::new(5.0, -5.0, 41, -5.0, 5.0, 41).is_err());
        assert!(PhaseGrid::new(-5.0, f64::INFINITY, 41, -5.0, 5.0, 41).is_err());
    }
}
