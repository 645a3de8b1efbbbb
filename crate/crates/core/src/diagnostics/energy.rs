//! Energy ledger of a trajectory against the a priori bound
//!
//! ```text
//! ‖u(T)‖²_E + 2 Σ Δt (k∇pⁿ, ∇pⁿ)
//!   ≤ 2 (‖F(0)‖² + 2‖F(T)‖² + 2 I₀ + k₁⁻¹ Σ Δt ‖Sⁿ‖² + Σ Δt ‖δFⁿ‖²) e^{2T}
//! ```
//!
//! with dual norms taken through [`Riesz`] solves, `δFⁿ` the backward
//! difference quotient of the sampled loads and `I₀` the initial term. The
//! sums run over the steps `n = 1..N` up to the row's time.

use crate::error::{Error, Result};
use crate::operators::Riesz;
use crate::solver::{lift_initial_dilation, BiotProblem, Trajectory};

/// Initial term `I₀` standing in for `‖u₀‖²_E`, which is not part of the
/// data when only `d0` is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundVariant {
    /// `‖u¹‖²_E + ‖d0‖²_{L²}`.
    #[default]
    FirstStepPlusD0,
    /// `‖u₀‖²_E` for the minimal-energy `u₀` with `α G u₀ = M d0`.
    LiftedD0,
}

impl BoundVariant {
    pub fn name(self) -> &'static str {
        match self {
            BoundVariant::FirstStepPlusD0 => "first-step+d0",
            BoundVariant::LiftedD0 => "lifted-d0",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [BoundVariant::FirstStepPlusD0, BoundVariant::LiftedD0].into_iter().find(|v| v.name() == s)
    }
}

/// One ledger line, bound evaluated with `T = tⁿ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub step: usize,
    pub time: f64,
    /// `‖uⁿ‖²_E`.
    pub u_energy: f64,
    /// `Σ_{m≤n} Δt (k(zᵐ)∇pᵐ, ∇pᵐ)`.
    pub dissipation_cum: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<EnergyRow>,
    pub variant: BoundVariant,
    /// `‖F(0)‖²`.
    pub f0_sq: f64,
    /// `‖F(T)‖²`.
    pub ft_sq: f64,
    /// `Σ Δt ‖δFⁿ‖²`.
    pub df_sq: f64,
    /// `k₁⁻¹ Σ Δt ‖Sⁿ‖²`.
    pub source_sq: f64,
    /// `I₀`.
    pub initial_term: f64,
    /// `‖d0‖²_{L²}`, recorded for every variant.
    pub d0_sq: f64,
    /// `e^{2T}`.
    pub growth: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Relative slack of the inequality check.
pub const ENERGY_SLACK: f64 = 1e-9;

/// [`energy_audit_with`] using the default bound variant.
pub fn energy_audit(problem: &BiotProblem, traj: &Trajectory) -> Result<(EnergyLedger, bool)> {
    energy_audit_with(problem, traj, BoundVariant::default())
}

/// Builds the ledger and reports whether `LHS(T) ≤ RHS(T)(1 + 1e-9)`.
pub fn energy_audit_with(problem: &BiotProblem, traj: &Trajectory, variant: BoundVariant) -> Result<(EnergyLedger, bool)> {
    check_match(problem, traj)?;
    let disc = problem.disc();
    let dt = problem.dt();
    let k1 = problem.model().k1();
    let e = disc.elasticity();

    let d0_sq = disc.mass().quad_form(&problem.initial_dilation().coefficients);
    let initial_term = match variant {
        BoundVariant::FirstStepPlusD0 => {
            let u1 = traj.steps.first().map_or(0.0, |s| e.quad_form(&s.u.coefficients));
            u1 + d0_sq
        }
        BoundVariant::LiftedD0 => e.quad_form(&lift_initial_dilation(problem)?.coefficients),
    };
    let f_norm_sq = |n: usize| -> Result<f64> {
        let v = disc.dual_norm(&problem.loads(n).displacement, Riesz::ElasticEnergy)?;
        Ok(v * v)
    };
    let f0_sq = f_norm_sq(0)?;

    let mut rows = Vec::with_capacity(traj.len());
    let (mut dissipation, mut df_sq, mut source_sq) = (0.0, 0.0, 0.0);
    let mut ft_sq = f0_sq;
    for (i, s) in traj.steps.iter().enumerate() {
        let n = i + 1;
        let k = disc.diffusion(&problem.permeability(&s.z)?)?;
        dissipation += dt * k.quad_form(&s.p.coefficients);
        let quotient: Vec<f64> = problem
            .loads(n)
            .displacement
            .iter()
            .zip(&problem.loads(n - 1).displacement)
            .map(|(a, b)| (a - b) / dt)
            .collect();
        let dq = disc.dual_norm(&quotient, Riesz::ElasticEnergy)?;
        df_sq += dt * dq * dq;
        let sn = source_norm(problem, n)?;
        source_sq += dt * sn * sn / k1;
        ft_sq = f_norm_sq(n)?;

        let u_energy = e.quad_form(&s.u.coefficients);
        let lhs = u_energy + 2.0 * dissipation;
        let growth = (2.0 * traj.times[n]).exp();
        let rhs = 2.0 * (f0_sq + 2.0 * ft_sq + 2.0 * initial_term + source_sq + df_sq) * growth;
        rows.push(EnergyRow { step: n, time: traj.times[n], u_energy, dissipation_cum: dissipation, lhs, rhs, margin: rhs - lhs });
    }
    let (lhs, rhs) = rows.last().map_or((0.0, 0.0), |r| (r.lhs, r.rhs));
    for v in [lhs, rhs] {
        if !v.is_finite() {
            return Err(Error::NonFinite("energy ledger".into()));
        }
    }
    let ledger = EnergyLedger {
        rows,
        variant,
        f0_sq,
        ft_sq,
        df_sq,
        source_sq,
        initial_term,
        d0_sq,
        growth: (2.0 * problem.t_end()).exp(),
        lhs,
        rhs,
        margin: rhs - lhs,
    };
    let holds = lhs <= rhs + ENERGY_SLACK * rhs;
    Ok((ledger, holds))
}

/// `‖Sⁿ‖_{V′}`; zero when the pressure space has no free dofs.
fn source_norm(problem: &BiotProblem, n: usize) -> Result<f64> {
    match problem.disc().dual_norm(&problem.loads(n).pressure, Riesz::H1Pressure) {
        Err(Error::EmptySpace(_)) => Ok(0.0),
        other => other,
    }
}

pub(crate) fn check_match(problem: &BiotProblem, traj: &Trajectory) -> Result<()> {
    if traj.len() != problem.steps() || traj.dt != problem.dt() {
        return Err(Error::Mismatch(format!(
            "trajectory has {} steps of {}, problem {} steps of {}",
            traj.len(),
            traj.dt,
            problem.steps(),
            problem.dt()
        )));
    }
    if traj.initial_dilation != *problem.initial_dilation() {
        return Err(Error::Mismatch("trajectory starts from a different initial dilation".into()));
    }
    let np = problem.disc().spaces().pressure.n_dofs();
    if traj.steps.iter().any(|s| s.p.len() != np) {
        return Err(Error::Mismatch("trajectory lives on a different mesh".into()));
    }
    Ok(())
}
