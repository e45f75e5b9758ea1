//! Scalar base losses and the linear-core surrogates built on them.
//!
//! A linear-core surrogate keeps slope `-1` on the core `[-tau, tau]` and
//! continues outside it with the base loss, rescaled by `1 / base'(0)` so the
//! derivative is continuous at both knots:
//!
//! ```text
//! core        -u + tau + base(0)/base'(0)         |u| <= tau
//! right tail  base(tau - u) / base'(0)            u > tau
//! left tail   base(-tau - u) / base'(0) + 2 tau   u < -tau   (symmetric only)
//! ```
//!
//! The one-sided variant keeps the core formula for every `u <= tau`.
//! With `tau = 1` the symmetric and one-sided forms are the standard
//! surrogates; other values of `tau` give the generalized family.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Largest |u| accepted for exponential evaluations.
pub const EXP_INPUT_LIMIT: f64 = 700.0;

/// Smallest accepted core half-width.
pub const MIN_TAU: f64 = 1e-12;

/// Convex differentiable base loss with a positive slope at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    /// `log(1 + e^u)`.
    Logistic,
    /// `e^u`.
    Exponential,
    /// `slope * u + u^4 / 12 + offset`. The offset only shifts values.
    QuarticLinear { slope: f64, offset: f64 },
}

impl BaseLoss {
    /// Quartic-linear base with the default `slope = 1, offset = 0`.
    pub const QUARTIC: BaseLoss = BaseLoss::QuarticLinear {
        slope: 1.0,
        offset: 0.0,
    };

    pub fn quartic_linear(slope: f64, offset: f64) -> Result<Self> {
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::Domain(format!(
                "quartic-linear slope must be positive, got {slope}"
            )));
        }
        ensure_finite(offset, "quartic-linear offset")?;
        Ok(BaseLoss::QuarticLinear { slope, offset })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseLoss::Logistic => "logistic",
            BaseLoss::Exponential => "exponential",
            BaseLoss::QuarticLinear { .. } => "quartic",
        }
    }

    fn check_input(&self, u: f64, what: &'static str) -> Result<()> {
        ensure_finite(u, "loss argument")?;
        if matches!(self, BaseLoss::Exponential) && u > EXP_INPUT_LIMIT {
            return Err(Error::Overflow { what, at: u });
        }
        Ok(())
    }

    pub fn value(&self, u: f64) -> Result<f64> {
        self.check_input(u, "exponential base value")?;
        Ok(match *self {
            BaseLoss::Logistic => softplus(u),
            BaseLoss::Exponential => u.exp(),
            BaseLoss::QuarticLinear { slope, offset } => slope * u + u.powi(4) / 12.0 + offset,
        })
    }

    pub fn derivative(&self, u: f64) -> Result<f64> {
        self.check_input(u, "exponential base derivative")?;
        Ok(match *self {
            BaseLoss::Logistic => sigmoid(u),
            BaseLoss::Exponential => u.exp(),
            BaseLoss::QuarticLinear { slope, .. } => slope + u.powi(3) / 3.0,
        })
    }

    pub fn second_derivative(&self, u: f64) -> Result<f64> {
        self.check_input(u, "exponential base second derivative")?;
        Ok(match *self {
            BaseLoss::Logistic => {
                let s = sigmoid(u);
                s * (1.0 - s)
            }
            BaseLoss::Exponential => u.exp(),
            BaseLoss::QuarticLinear { .. } => u * u,
        })
    }

    /// `base(0)`.
    pub fn value_at_zero(&self) -> f64 {
        match *self {
            BaseLoss::Logistic => std::f64::consts::LN_2,
            BaseLoss::Exponential => 1.0,
            BaseLoss::QuarticLinear { offset, .. } => offset,
        }
    }

    /// `base'(0)`, always positive.
    pub fn slope_at_zero(&self) -> f64 {
        match *self {
            BaseLoss::Logistic => 0.5,
            BaseLoss::Exponential => 1.0,
            BaseLoss::QuarticLinear { slope, .. } => slope,
        }
    }

    /// `base''(0)`.
    pub fn curvature_at_zero(&self) -> f64 {
        match *self {
            BaseLoss::Logistic => 0.25,
            BaseLoss::Exponential => 1.0,
            BaseLoss::QuarticLinear { .. } => 0.0,
        }
    }

    /// The constant `base(0) / base'(0)` added to the core.
    pub fn core_offset(&self) -> f64 {
        self.value_at_zero() / self.slope_at_zero()
    }
}

/// `log(1 + e^u)` without overflow.
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Which outer branches are smoothed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Symmetric,
    /// Only the right tail is smoothed; the core extends to `-inf`.
    OneSided,
}

/// Direction from which a one-sided limit is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideLimit {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    LeftTail,
    Core,
    RightTail,
}

/// A concrete linear-core surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCoreSpec {
    base: BaseLoss,
    side: Side,
    tau: f64,
}

impl LinearCoreSpec {
    pub fn new(base: BaseLoss, side: Side, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau >= MIN_TAU) {
            return Err(Error::Domain(format!(
                "core half-width must be finite and >= {MIN_TAU:e}, got {tau}"
            )));
        }
        if let BaseLoss::QuarticLinear { slope, offset } = base {
            BaseLoss::quartic_linear(slope, offset)?;
        }
        Ok(Self { base, side, tau })
    }

    /// Symmetric surrogate with unit core.
    pub fn symmetric(base: BaseLoss) -> Self {
        Self {
            base,
            side: Side::Symmetric,
            tau: 1.0,
        }
    }

    /// One-sided surrogate with unit core.
    pub fn one_sided(base: BaseLoss) -> Self {
        Self {
            base,
            side: Side::OneSided,
            tau: 1.0,
        }
    }

    pub fn base(&self) -> BaseLoss {
        self.base
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn name(&self) -> String {
        let prefix = match self.side {
            Side::Symmetric => "lc",
            Side::OneSided => "lc1",
        };
        if self.tau == 1.0 {
            format!("{prefix}_{}", self.base.name())
        } else {
            format!("{prefix}_{}_tau{}", self.base.name(), self.tau)
        }
    }

    fn branch(&self, u: f64, limit: Option<SideLimit>) -> Branch {
        let tau = self.tau;
        if u > tau || (u == tau && limit == Some(SideLimit::Right)) {
            return Branch::RightTail;
        }
        if self.side == Side::Symmetric
            && (u < -tau || (u == -tau && limit == Some(SideLimit::Left)))
        {
            return Branch::LeftTail;
        }
        Branch::Core
    }

    fn check_input(&self, u: f64) -> Result<()> {
        ensure_finite(u, "surrogate argument")?;
        if matches!(self.base, BaseLoss::Exponential) && u.abs() > EXP_INPUT_LIMIT {
            return Err(Error::Overflow {
                what: "exponential linear-core surrogate",
                at: u,
            });
        }
        Ok(())
    }

    /// Surrogate value. Knots are evaluated on the core.
    pub fn value(&self, u: f64) -> Result<f64> {
        self.check_input(u)?;
        let scale = self.base.slope_at_zero();
        Ok(match self.branch(u, None) {
            Branch::Core => -u + self.tau + self.base.core_offset(),
            Branch::RightTail => self.base.value(self.tau - u)? / scale,
            Branch::LeftTail => self.base.value(-self.tau - u)? / scale + 2.0 * self.tau,
        })
    }

    /// First derivative; continuous everywhere, equal to `-1` on the core.
    pub fn derivative(&self, u: f64) -> Result<f64> {
        self.check_input(u)?;
        let scale = self.base.slope_at_zero();
        Ok(match self.branch(u, None) {
            Branch::Core => -1.0,
            Branch::RightTail => -self.base.derivative(self.tau - u)? / scale,
            Branch::LeftTail => -self.base.derivative(-self.tau - u)? / scale,
        })
    }

    /// Second derivative of the branch reached from `limit`. Away from the
    /// knots both limits agree.
    pub fn branch_second_derivative(&self, u: f64, limit: SideLimit) -> Result<f64> {
        self.check_input(u)?;
        let scale = self.base.slope_at_zero();
        Ok(match self.branch(u, Some(limit)) {
            Branch::Core => 0.0,
            Branch::RightTail => self.base.second_derivative(self.tau - u)? / scale,
            Branch::LeftTail => self.base.second_derivative(-self.tau - u)? / scale,
        })
    }
}
