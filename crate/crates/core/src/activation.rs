//! Continuous piecewise-linear activation functions.
//!
//! An activation with `T` breakpoints `xi_1 < ... < xi_T` is linear on each of
//! the `T + 1` pieces `(-inf, xi_1], [xi_1, xi_2], ..., [xi_T, inf)`; piece `j`
//! computes `slopes[j] * t + intercepts[j]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to validate continuity at the breakpoints.
const CONTINUITY_TOL: f64 = 1e-12;

/// Tolerance for deciding that a value sits on a breakpoint:
/// `|t - xi| <= BOUNDARY_TOL * (1 + |t|)`.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearActivation {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
}

/// Piece lookup result for a single scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceLookup {
    Interior(usize),
    /// The value sits on breakpoint `breakpoint` (0-based index into the
    /// breakpoint list), i.e. between pieces `breakpoint` and `breakpoint + 1`.
    OnBreakpoint(usize),
}

impl PiecewiseLinearActivation {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64>) -> Result<Self> {
        let t = breakpoints.len();
        if slopes.len() != t + 1 || intercepts.len() != t + 1 {
            return Err(Error::InvalidActivation(format!(
                "{} breakpoints need {} slopes and intercepts, got {} and {}",
                t,
                t + 1,
                slopes.len(),
                intercepts.len()
            )));
        }
        if t > u8::MAX as usize - 1 {
            return Err(Error::InvalidActivation("too many breakpoints".into()));
        }
        let all = breakpoints.iter().chain(&slopes).chain(&intercepts);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidActivation("non-finite parameter".into()));
        }
        for w in breakpoints.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidActivation(
                    "breakpoints must be strictly increasing".into(),
                ));
            }
        }
        for j in 0..t {
            if slopes[j] == slopes[j + 1] {
                return Err(Error::InvalidActivation(format!(
                    "adjacent slopes {} and {} are equal",
                    j,
                    j + 1
                )));
            }
            let xi = breakpoints[j];
            let left = slopes[j] * xi + intercepts[j];
            let right = slopes[j + 1] * xi + intercepts[j + 1];
            let scale = 1.0 + left.abs().max(right.abs());
            if (left - right).abs() > CONTINUITY_TOL * scale {
                return Err(Error::InvalidActivation(format!(
                    "discontinuous at breakpoint {xi}: {left} vs {right}"
                )));
            }
        }
        Ok(Self {
            breakpoints,
            slopes,
            intercepts,
        })
    }

    pub fn relu() -> Self {
        Self::new(vec![0.0], vec![0.0, 1.0], vec![0.0, 0.0]).expect("relu is valid")
    }

    /// Clamp to `[-1, 1]`.
    pub fn hard_tanh() -> Self {
        Self::new(vec![-1.0, 1.0], vec![0.0, 1.0, 0.0], vec![-1.0, 0.0, 1.0])
            .expect("hard tanh is valid")
    }

    pub fn leaky_relu(negative_slope: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![negative_slope, 1.0], vec![0.0, 0.0])
    }

    /// Number of breakpoints `T`.
    pub fn num_breakpoints(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn num_pieces(&self) -> usize {
        self.slopes.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn slope(&self, piece: usize) -> f64 {
        self.slopes[piece]
    }

    pub fn intercept(&self, piece: usize) -> f64 {
        self.intercepts[piece]
    }

    pub fn has_zero_slope(&self) -> bool {
        self.slopes.contains(&0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let j = self.piece_right_closed(t);
        self.slopes[j] * t + self.intercepts[j]
    }

    /// Piece containing `t`, ties on a breakpoint resolved to the right piece.
    pub fn piece_right_closed(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&xi| xi <= t)
    }

    /// Piece containing `t`, reporting values within tolerance of a breakpoint.
    pub fn lookup(&self, t: f64) -> PieceLookup {
        let tol = BOUNDARY_TOL * (1.0 + t.abs());
        for (i, &xi) in self.breakpoints.iter().enumerate() {
            if (t - xi).abs() <= tol {
                return PieceLookup::OnBreakpoint(i);
            }
        }
        PieceLookup::Interior(self.piece_right_closed(t))
    }

    /// Slope used for backpropagation at `t` (right piece at a breakpoint).
    pub fn derivative(&self, t: f64) -> f64 {
        self.slopes[self.piece_right_closed(t)]
    }

    /// Short name when the activation matches a built-in.
    pub fn name(&self) -> Option<&'static str> {
        if *self == Self::relu() {
            Some("relu")
        } else if *self == Self::hard_tanh() {
            Some("hard_tanh")
        } else {
            None
        }
    }
}
