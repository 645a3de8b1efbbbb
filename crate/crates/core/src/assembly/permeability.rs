//! Permeability laws `y ↦ k(y)` of the solid dilation, clamped to `[k1, k2]`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PermeabilityLaw {
    Constant { k0: f64 },
    /// `scale · y³ / (1 - y)²`.
    CarmanKozeny { scale: f64 },
    /// `a + b y + c y²` (capillary-bed law).
    Quadratic { a: f64, b: f64, c: f64 },
}

/// A permeability law together with its uniform bounds `0 < k1 ≤ k ≤ k2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermeabilityModel {
    law: PermeabilityLaw,
    k1: f64,
    k2: f64,
}

impl PermeabilityModel {
    pub fn new(law: PermeabilityLaw, k1: f64, k2: f64) -> Result<Self> {
        if !(k1.is_finite() && k2.is_finite() && k1 > 0.0 && k1 <= k2) {
            return Err(Error::InvalidArgument(format!("permeability bounds need 0 < k1 <= k2, got [{k1}, {k2}]")));
        }
        match law {
            PermeabilityLaw::Constant { k0 } if !(k0.is_finite() && k0 > 0.0) => {
                return Err(Error::InvalidArgument(format!("constant permeability must be positive, got {k0}")));
            }
            PermeabilityLaw::CarmanKozeny { scale } if !(scale.is_finite() && scale > 0.0) => {
                return Err(Error::InvalidArgument(format!("Carman-Kozeny scale must be positive, got {scale}")));
            }
            PermeabilityLaw::Quadratic { a, b, c } if ![a, b, c].iter().all(|v| v.is_finite()) => {
                return Err(Error::InvalidArgument("quadratic permeability coefficients must be finite".into()));
            }
            _ => {}
        }
        Ok(Self { law, k1, k2 })
    }

    pub fn constant(k0: f64) -> Result<Self> {
        Self::new(PermeabilityLaw::Constant { k0 }, k0, k0)
    }

    pub fn law(&self) -> PermeabilityLaw {
        self.law
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    /// True when `k` does not depend on its argument.
    pub fn is_constant(&self) -> bool {
        matches!(self.law, PermeabilityLaw::Constant { .. })
    }

    /// Evaluates `k(y)`, always inside `[k1, k2]`.
    pub fn eval(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("permeability argument {y}")));
        }
        Ok(self.eval_finite(y))
    }

    pub(crate) fn eval_finite(&self, y: f64) -> f64 {
        let raw = match self.law {
            PermeabilityLaw::Constant { k0 } => k0,
            PermeabilityLaw::CarmanKozeny { scale } => {
                let gap = 1.0 - y;
                if gap == 0.0 {
                    return self.k2;
                }
                scale * y * y * y / (gap * gap)
            }
            PermeabilityLaw::Quadratic { a, b, c } => a + y * (b + c * y),
        };
        if raw.is_nan() {
            // overflow of y³ against (1 - y)²: both blow up, the ratio is large
            return self.k2;
        }
        raw.clamp(self.k1, self.k2)
    }
}
