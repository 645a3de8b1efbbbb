//! Named registry of analytic data sets: body force `F`, fluid source `S`,
//! initial dilation `d0` and, for manufactured cases, the exact solution.
//!
//! Manufactured sources are closed forms worked out by hand from the strong
//! form `-μΔu - (λ+μ)∇(∇·u) + α∇p = F`, `∂t(α∇·u + c0 p) - k Δp = S`.

use std::f64::consts::PI;

use crate::assembly::permeability::{PermeabilityLaw, PermeabilityModel};
use crate::error::{Error, Result};

/// Material parameters of the Biot system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    pub lambda: f64,
    pub mu: f64,
    /// Constrained storage coefficient, `0` for incompressible constituents.
    pub c0: f64,
    /// Biot-Willis coefficient.
    pub alpha: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { lambda: 1.0, mu: 1.0, c0: 0.0, alpha: 1.0 }
    }
}

impl Physics {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidArgument(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.c0.is_finite() && self.c0 >= 0.0) {
            return Err(Error::InvalidArgument(format!("c0 must be >= 0, got {}", self.c0)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Volume data entering the loads.
pub trait SourceTerms {
    fn body_force(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    fn fluid_source(&self, x: f64, y: f64, t: f64) -> f64;
}

/// Closed-form solution of a manufactured case.
pub trait ExactSolution {
    fn displacement(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    /// `[[∂x u1, ∂y u1], [∂x u2, ∂y u2]]`.
    fn displacement_gradient(&self, x: f64, y: f64, t: f64) -> [[f64; 2]; 2];
    fn pressure(&self, x: f64, y: f64, t: f64) -> f64;
    fn pressure_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    fn dilation(&self, x: f64, y: f64, t: f64) -> f64 {
        let g = self.displacement_gradient(x, y, t);
        g[0][0] + g[1][1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    /// All data zero.
    Zero,
    /// `F = 0`, zero-mean `S = cos(πx)cos(πy)(1 + sin(πt))`, `d0 = 0`.
    SourceOnly,
    /// Smooth `F` and zero-mean `S` of amplitude 0.12 plus an initial dilation of amplitude 0.05.
    SmoothForcing,
    /// `F = S = 0` with a nonzero initial dilation; the pure relaxation problem.
    Relaxation,
    /// `S ≡ 1`: incompatible with the pure Neumann layout.
    UnitSource,
    /// Manufactured solution `u = eᵗ sin(πx)sin(πy)(1, 1)`, `p = eᵗ sin(πx)sin(πy)`,
    /// constant permeability, homogeneous pressure Dirichlet data.
    Mms1,
}

impl CaseKind {
    pub const ALL: [CaseKind; 6] = [
        CaseKind::Zero,
        CaseKind::SourceOnly,
        CaseKind::SmoothForcing,
        CaseKind::Relaxation,
        CaseKind::UnitSource,
        CaseKind::Mms1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseKind::Zero => "zero",
            CaseKind::SourceOnly => "source_only",
            CaseKind::SmoothForcing => "smooth_forcing",
            CaseKind::Relaxation => "relaxation",
            CaseKind::UnitSource => "unit_source",
            CaseKind::Mms1 => "mms1",
        }
    }
}

/// A registry entry bound to concrete material parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case {
    kind: CaseKind,
    physics: Physics,
    /// Permeability of the manufactured case (constant law only).
    k0: f64,
}

impl Case {
    pub fn from_name(name: &str, physics: Physics, model: &PermeabilityModel) -> Result<Self> {
        let kind = CaseKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::UnknownCase(name.to_string()))?;
        Self::new(kind, physics, model)
    }

    pub fn new(kind: CaseKind, physics: Physics, model: &PermeabilityModel) -> Result<Self> {
        physics.validate()?;
        let k0 = match (kind, model.law()) {
            (CaseKind::Mms1, PermeabilityLaw::Constant { .. }) => model.eval_finite(0.0),
            (CaseKind::Mms1, _) => {
                return Err(Error::InvalidArgument("case mms1 needs the constant permeability law".into()))
            }
            _ => model.eval_finite(0.0),
        };
        Ok(Self { kind, physics, k0 })
    }

    pub fn kind(&self) -> CaseKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn physics(&self) -> Physics {
        self.physics
    }

    /// Initial dilation `d0(x, y)`. Each case is zero-mean on the unit square.
    pub fn initial_dilation(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            CaseKind::Zero | CaseKind::SourceOnly | CaseKind::UnitSource => 0.0,
            CaseKind::SmoothForcing => 0.05 * (PI * x).cos() * (PI * y).cos(),
            CaseKind::Relaxation => 0.2 * (PI * x).cos() * (2.0 * PI * y).cos(),
            CaseKind::Mms1 => Mms1 { physics: self.physics, k0: self.k0 }.dilation(x, y, 0.0),
        }
    }

    pub fn exact(&self) -> Option<Mms1> {
        (self.kind == CaseKind::Mms1).then_some(Mms1 { physics: self.physics, k0: self.k0 })
    }
}

impl SourceTerms for Case {
    fn body_force(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        match self.kind {
            CaseKind::Zero | CaseKind::SourceOnly | CaseKind::UnitSource | CaseKind::Relaxation => [0.0, 0.0],
            CaseKind::SmoothForcing => {
                let a = 0.12 * (1.0 + t);
                [
                    a * (2.0 * PI * x).sin() * (PI * y).sin(),
                    a * (PI * x).sin() * (2.0 * PI * y).sin(),
                ]
            }
            CaseKind::Mms1 => Mms1 { physics: self.physics, k0: self.k0 }.body_force(x, y, t),
        }
    }

    fn fluid_source(&self, x: f64, y: f64, t: f64) -> f64 {
        match self.kind {
            CaseKind::Zero | CaseKind::Relaxation => 0.0,
            CaseKind::SourceOnly => (PI * x).cos() * (PI * y).cos() * (1.0 + (PI * t).sin()),
            CaseKind::SmoothForcing => 0.12 * (2.0 * PI * x).cos() * (PI * y).cos() * (1.0 + t),
            CaseKind::UnitSource => 1.0,
            CaseKind::Mms1 => Mms1 { physics: self.physics, k0: self.k0 }.fluid_source(x, y, t),
        }
    }
}

/// Manufactured solution of case `mms1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mms1 {
    physics: Physics,
    k0: f64,
}

impl Mms1 {
    fn parts(x: f64, y: f64) -> (f64, f64, f64, f64) {
        ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos())
    }
}

impl ExactSolution for Mms1 {
    fn displacement(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (sx, _, sy, _) = Self::parts(x, y);
        let v = t.exp() * sx * sy;
        [v, v]
    }

    fn displacement_gradient(&self, x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
        let (sx, cx, sy, cy) = Self::parts(x, y);
        let g = t.exp() * PI;
        let row = [g * cx * sy, g * sx * cy];
        [row, row]
    }

    fn pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        let (sx, _, sy, _) = Self::parts(x, y);
        t.exp() * sx * sy
    }

    fn pressure_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (sx, cx, sy, cy) = Self::parts(x, y);
        [t.exp() * PI * cx * sy, t.exp() * PI * sx * cy]
    }
}

impl SourceTerms for Mms1 {
    fn body_force(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let Physics { lambda, mu, alpha, .. } = self.physics;
        let (sx, cx, sy, cy) = Self::parts(x, y);
        let g = t.exp();
        let elastic = g * PI * PI * (2.0 * mu * sx * sy - (lambda + mu) * (cx * cy - sx * sy));
        [elastic + alpha * g * PI * cx * sy, elastic + alpha * g * PI * sx * cy]
    }

    fn fluid_source(&self, x: f64, y: f64, t: f64) -> f64 {
        let Physics { c0, alpha, .. } = self.physics;
        let (sx, cx, sy, cy) = Self::parts(x, y);
        let g = t.exp();
        // g' = g for g = eᵗ
        alpha * g * PI * (cx * sy + sx * cy) + c0 * g * sx * sy + 2.0 * self.k0 * PI * PI * g * sx * sy
    }
}
