//! Operator spectra, the reduced-versus-monolithic oracle, mean drift in
//! the pure Neumann layout and a discrete exactness check.

use std::f64::consts::PI;

use crate::assembly::Loads;
use crate::assembly::permeability::PermeabilityModel;
use crate::cases::Physics;
use crate::error::{Error, Result};
use crate::mesh::{BcLayout, TriMesh};
use crate::operators::{reduced_solve, DenseBRealization, Discretization};
use crate::solver::{picard_solve, solve_linear_biot, space_time_norm, step_linear, BiotProblem, PicardOptions, Trajectory};
use crate::spaces::{interpolate_scalar, zero_mean_project, Field};

use super::energy::check_match;

/// Spectral facts about `B_d` on one mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorAuditRow {
    pub n: usize,
    pub layout: BcLayout,
    pub dim: usize,
    pub zero_count: usize,
    pub min_eigenvalue: f64,
    pub smallest_nonzero: f64,
    pub largest: f64,
    pub symmetry_residual: f64,
    pub kernel_residual: f64,
    /// `|θ_n − θ_prev| / θ_prev` for the smallest nonzero eigenvalue.
    pub drift: Option<f64>,
}

/// Builds `B_d` on every level and records its spectrum.
pub fn operator_audit(levels: &[usize], layout: BcLayout, physics: Physics, cap: usize) -> Result<Vec<OperatorAuditRow>> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no levels given".into()));
    }
    let mut rows: Vec<OperatorAuditRow> = Vec::with_capacity(levels.len());
    for &n in levels {
        let disc = Discretization::new(TriMesh::unit_square(n, layout)?, physics)?;
        let dense = DenseBRealization::build(&disc, cap)?;
        let spectrum = dense.spectrum()?;
        let smallest_nonzero = spectrum.smallest_nonzero().unwrap_or(f64::NAN);
        let drift = rows.last().map(|prev| (smallest_nonzero - prev.smallest_nonzero).abs() / prev.smallest_nonzero);
        rows.push(OperatorAuditRow {
            n,
            layout,
            dim: dense.dim(),
            zero_count: spectrum.zero_count(),
            min_eigenvalue: spectrum.min(),
            smallest_nonzero,
            largest: spectrum.max(),
            symmetry_residual: dense.symmetry_residual(),
            kernel_residual: dense.kernel_residual(),
            drift,
        });
    }
    Ok(rows)
}

/// Pressure discrepancy between the reduced march and the monolithic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    /// `‖p_red − p_mono‖_{L²(L²)} / ‖p_mono‖_{L²(L²)}`, `0` when both vanish.
    pub relative_l2l2: f64,
    /// `max_i |p_red − p_mono|` per step.
    pub per_step_max: Vec<f64>,
}

/// Runs both formulations with permeability frozen at `z`.
pub fn oracle_compare(problem: &BiotProblem, z: &[Field], cap: usize) -> Result<OracleRecord> {
    let reduced = reduced_solve(problem, z, cap)?;
    let full = solve_linear_biot(problem, z)?;
    let mass = problem.disc().mass();
    let (mut num, mut den) = (0.0, 0.0);
    let mut per_step_max = Vec::with_capacity(reduced.len());
    for (r, s) in reduced.iter().zip(&full.steps) {
        let diff: Vec<f64> = r.coefficients.iter().zip(&s.p.coefficients).map(|(a, b)| a - b).collect();
        num += problem.dt() * mass.quad_form(&diff);
        den += problem.dt() * mass.quad_form(&s.p.coefficients);
        per_step_max.push(diff.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let relative_l2l2 = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(OracleRecord { relative_l2l2, per_step_max })
}

/// Means of `ζⁿ` and `pⁿ` per step in the pure Neumann layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityRecord {
    pub zeta_means: Vec<f64>,
    pub pressure_means: Vec<f64>,
    pub max_drift: f64,
}

pub fn compatibility_check(problem: &BiotProblem, traj: &Trajectory) -> Result<CompatibilityRecord> {
    let disc = problem.disc();
    if disc.layout() != BcLayout::AllNeumann {
        return Err(Error::WrongLayout(format!("mean drift is defined for the neumann layout, got {}", disc.layout())));
    }
    check_match(problem, traj)?;
    let area: f64 = disc.mass_row_sums().iter().sum();
    let zeta_means: Vec<f64> = traj.steps.iter().map(|s| disc.integral(&s.zeta) / area).collect();
    let pressure_means: Vec<f64> = traj.steps.iter().map(|s| disc.integral(&s.p) / area).collect();
    let max_drift = zeta_means.iter().chain(&pressure_means).fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(CompatibilityRecord { zeta_means, pressure_means, max_drift })
}

/// Loads built from a random discrete pair `(w, q)` (clamped quadratic `w`,
/// linear `q` in the layout's pressure space) so that one step from the
/// initial dilation `d0 = 0` must return `(w, q)`. Returns the largest
/// relative nodal error of the computed step.
///
/// This replaces a polynomial exact solution: a componentwise quadratic
/// displacement cannot vanish on the whole boundary of the square unless it
/// is zero.
pub fn discrete_exactness_check(n: usize, layout: BcLayout, physics: Physics, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let disc = Discretization::new(TriMesh::unit_square(n, layout)?, physics)?;
    let spaces = disc.spaces();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..spaces.displacement.n_dofs())
        .map(|i| if spaces.displacement.is_constrained(i) { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect();
    let mut q = Field::pressure(
        (0..spaces.pressure.n_dofs())
            .map(|i| if spaces.pressure.is_constrained(i) { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect(),
    );
    if spaces.is_zero_mean() {
        q = zero_mean_project(&q, disc.mesh());
    }
    let dt = 0.1;
    let k = 0.7;
    let model = PermeabilityModel::constant(k)?;
    let Physics { alpha, c0, .. } = physics;
    // E w − α Gᵀ q = F;  α G w + c0 M q + Δt K q = Δt S (history M d0 = 0)
    let ew = disc.elasticity().mul_vec(&w);
    let gtq = disc.coupling().tr_mul_vec(&q.coefficients);
    let mut loads = Loads::zeros(spaces);
    for i in spaces.displacement.free_dofs() {
        loads.displacement[*i] = ew[*i] - alpha * gtq[*i];
    }
    let gw = disc.coupling().mul_vec(&w);
    let mq = disc.mass().mul_vec(&q.coefficients);
    let kq = disc.unit_stiffness().mul_vec(&q.coefficients);
    for i in 0..spaces.pressure.n_dofs() {
        if spaces.is_zero_mean() || !spaces.pressure.is_constrained(i) {
            loads.pressure[i] = (alpha * gw[i] + c0 * mq[i] + dt * k * kq[i]) / dt;
        }
    }
    let d0 = Field::pressure(vec![0.0; spaces.pressure.n_dofs()]);
    let problem = BiotProblem::with_loads(disc, model, vec![loads.clone(), loads], d0.clone(), dt)?;
    let s = step_linear(&problem, None, &d0, 1)?;
    let scale_u = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale_p = q.coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eu = s.u.coefficients.iter().zip(&w).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale_u;
    let ep = s.p.coefficients.iter().zip(&q.coefficients).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale_p;
    Ok(eu.max(ep))
}

/// Relative `L²(L²)` gap between the Picard limits started from `z₀ = 0`
/// and from the interpolant of `0.1 sin(πx) sin(πy)`.
///
/// Uniqueness of the nonlinear solution is not known, so this is reported,
/// not asserted.
pub fn initial_guess_sensitivity(problem: &BiotProblem, opts: &PicardOptions) -> Result<f64> {
    let bump = interpolate_scalar(|x, y| 0.1 * (PI * x).sin() * (PI * y).sin(), problem.disc().spaces())?;
    let a = picard_solve(problem, &problem.zero_dilation_guess(), opts)?.into_result()?;
    let b = picard_solve(problem, &problem.constant_dilation_guess(&bump), opts)?.into_result()?;
    let diff: Vec<Field> = a
        .trajectory
        .steps
        .iter()
        .zip(&b.trajectory.steps)
        .map(|(x, y)| Field::pressure(x.zeta.coefficients.iter().zip(&y.zeta.coefficients).map(|(p, q)| p - q).collect()))
        .collect();
    let base = space_time_norm(problem, &a.trajectory.dilation_trace());
    let gap = space_time_norm(problem, &diff);
    Ok(if base > 0.0 { gap / base } else { gap })
}
