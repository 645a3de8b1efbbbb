//! Manufactured-solution convergence studies.

use crate::assembly::for_each_quad_point;
use crate::assembly::permeability::{PermeabilityLaw, PermeabilityModel};
use crate::assembly::IncompatibleSourceMode;
use crate::cases::{Case, ExactSolution, Physics};
use crate::error::{Error, Result};
use crate::mesh::{BcLayout, TriMesh};
use crate::operators::Discretization;
use crate::solver::{solve_linear_biot, BiotProblem, Trajectory};
use crate::spaces::{interpolate_vector, zero_mean_project, Field, Spaces};

/// Final time of the spatial study.
pub const SPATIAL_T_END: f64 = 0.1;

/// How the time step follows the mesh in a spatial study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtRule {
    /// `Δt ≤ 0.8 h²`, rounded down to divide [`SPATIAL_T_END`].
    DtProportionalH2,
    /// `Δt = 1e-3` on every level.
    DtFixedTiny,
}

impl DtRule {
    pub fn name(self) -> &'static str {
        match self {
            DtRule::DtProportionalH2 => "h2",
            DtRule::DtFixedTiny => "tiny",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [DtRule::DtProportionalH2, DtRule::DtFixedTiny].into_iter().find(|r| r.name() == s)
    }

    /// Number of steps on level `n` over [`SPATIAL_T_END`].
    pub fn steps(self, n: usize) -> usize {
        let target = match self {
            DtRule::DtProportionalH2 => 0.8 / (n * n) as f64,
            DtRule::DtFixedTiny => 1e-3,
        };
        ((SPATIAL_T_END / target) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Errors of a discrete state against the exact fields at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    /// Full `H¹` norm.
    pub u_h1: f64,
    pub p_l2: f64,
    pub p_h1semi: f64,
    pub zeta_l2: f64,
}

/// Quadrature errors of `(u, p, ζ)` against `exact` at time `t`.
pub fn field_errors(
    mesh: &TriMesh,
    spaces: &Spaces,
    u: &Field,
    p: &Field,
    zeta: &Field,
    exact: &dyn ExactSolution,
    t: f64,
) -> FieldErrors {
    let (mut u_l2, mut u_semi, mut p_l2, mut p_semi, mut z_l2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for_each_quad_point(mesh, |qp| {
        let [x, y] = qp.x;
        let tri = mesh.triangles()[qp.element];
        let nodes = spaces.element_nodes(mesh, qp.element);
        let ue = exact.displacement(x, y, t);
        let ge = exact.displacement_gradient(x, y, t);
        for c in 0..2 {
            let (mut v, mut g) = (0.0, [0.0; 2]);
            for a in 0..6 {
                let coef = u.coefficients[2 * nodes[a] + c];
                v += coef * qp.p2[a];
                g[0] += coef * qp.grad_p2[a][0];
                g[1] += coef * qp.grad_p2[a][1];
            }
            u_l2 += qp.weight * (v - ue[c]).powi(2);
            u_semi += qp.weight * ((g[0] - ge[c][0]).powi(2) + (g[1] - ge[c][1]).powi(2));
        }
        let (mut pv, mut pg, mut zv) = (0.0, [0.0; 2], 0.0);
        for a in 0..3 {
            pv += p.coefficients[tri[a]] * qp.p1[a];
            pg[0] += p.coefficients[tri[a]] * qp.grad_p1[a][0];
            pg[1] += p.coefficients[tri[a]] * qp.grad_p1[a][1];
            zv += zeta.coefficients[tri[a]] * qp.p1[a];
        }
        let pe = exact.pressure_gradient(x, y, t);
        p_l2 += qp.weight * (pv - exact.pressure(x, y, t)).powi(2);
        p_semi += qp.weight * ((pg[0] - pe[0]).powi(2) + (pg[1] - pe[1]).powi(2));
        z_l2 += qp.weight * (zv - exact.dilation(x, y, t)).powi(2);
    });
    FieldErrors { u_h1: (u_l2 + u_semi).sqrt(), p_l2: p_l2.sqrt(), p_h1semi: p_semi.sqrt(), zeta_l2: z_l2.sqrt() }
}

/// One refinement level of a spatial study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatesRow {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub errors: FieldErrors,
    /// `log₂` ratios against the previous level; `None` on the first.
    pub order_u: Option<f64>,
    pub order_p: Option<f64>,
    pub order_p_h1semi: Option<f64>,
    pub order_zeta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesTable {
    pub case: String,
    pub rule: DtRule,
    pub rows: Vec<RatesRow>,
}

impl RatesTable {
    pub fn last(&self) -> Option<&RatesRow> {
        self.rows.last()
    }
}

fn observed_order(coarse: f64, fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (coarse / fine).ln() / (h_coarse / h_fine).ln()
}

/// Manufactured case bound to the constant permeability of unit size.
fn manufactured(case_name: &str) -> Result<(Case, PermeabilityModel)> {
    let model = PermeabilityModel::new(PermeabilityLaw::Constant { k0: 1.0 }, 1.0, 1.0)?;
    let case = Case::from_name(case_name, Physics::default(), &model)?;
    if case.exact().is_none() {
        return Err(Error::InvalidArgument(format!("case `{case_name}` has no exact solution")));
    }
    Ok((case, model))
}

/// Runs a manufactured case from the discrete dilation `M⁻¹ G I_h u*(0)` of
/// the interpolated exact displacement. The nodal interpolant of `∇·u*(0)`
/// differs from it by `O(h²)`, and that mismatch, absorbed on the first
/// step, leaves a pressure layer of size `O(h²/Δt)` which swamps the
/// temporal error on a fixed mesh.
fn manufactured_run(case: &Case, model: PermeabilityModel, n: usize, dt: f64, t_end: f64) -> Result<(BiotProblem, Trajectory)> {
    let exact = case.exact().ok_or_else(|| Error::InvalidArgument(format!("case `{}` has no exact solution", case.name())))?;
    let disc = Discretization::new(TriMesh::unit_square(n, BcLayout::AllDirichlet)?, case.physics())?;
    let u0 = interpolate_vector(|x, y| exact.displacement(x, y, 0.0), disc.spaces())?;
    let d0 = zero_mean_project(&disc.evaluate_dilation(&u0)?, disc.mesh());
    let problem = BiotProblem::new(disc, model, case, d0, dt, t_end, IncompatibleSourceMode::Strict)?;
    let traj = solve_linear_biot(&problem, &problem.zero_dilation_guess())?;
    Ok((problem, traj))
}

/// Errors at the final time on each level, pressure Dirichlet on the whole
/// boundary, and observed orders between consecutive levels.
pub fn mms_convergence(case_name: &str, levels: &[usize], rule: DtRule) -> Result<RatesTable> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("levels must be non-empty and strictly increasing".into()));
    }
    let (case, model) = manufactured(case_name)?;
    let exact = case.exact().expect("checked above");
    let mut rows: Vec<RatesRow> = Vec::with_capacity(levels.len());
    for (level, &n) in levels.iter().enumerate() {
        let steps = rule.steps(n);
        let dt = SPATIAL_T_END / steps as f64;
        let (problem, traj) = manufactured_run(&case, model, n, dt, dt * steps as f64)?;
        let last = traj.final_state().ok_or_else(|| Error::EmptySpace("no time steps".into()))?;
        let t = traj.times[steps];
        let disc = problem.disc();
        let errors = field_errors(disc.mesh(), disc.spaces(), &last.u, &last.p, &last.zeta, &exact, t);
        let h = 1.0 / n as f64;
        let orders = rows.last().map(|prev| {
            let o = |a: f64, b: f64| observed_order(a, b, prev.h, h);
            (
                o(prev.errors.u_h1, errors.u_h1),
                o(prev.errors.p_l2, errors.p_l2),
                o(prev.errors.p_h1semi, errors.p_h1semi),
                o(prev.errors.zeta_l2, errors.zeta_l2),
            )
        });
        rows.push(RatesRow {
            level,
            n,
            h,
            dt,
            errors,
            order_u: orders.map(|o| o.0),
            order_p: orders.map(|o| o.1),
            order_p_h1semi: orders.map(|o| o.2),
            order_zeta: orders.map(|o| o.3),
        });
    }
    Ok(RatesTable { case: case_name.to_string(), rule, rows })
}

/// Time-only refinement on a fixed mesh.
///
/// On a fixed mesh the spatial error does not shrink with `Δt` and soon
/// dominates the error against the exact solution, so the order is taken
/// from successive differences: `gᵢ = ‖p_{Δtᵢ} − p_{Δtᵢ₊₁}‖_{L²(L²)}` on
/// the coarser grid, where the spatial parts cancel.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalStudy {
    pub n: usize,
    pub t_end: f64,
    pub dts: Vec<f64>,
    /// `‖p − p*‖_{L²(0,T;L²)}` over the step grid, for reference.
    pub pressure_errors: Vec<f64>,
    /// `gᵢ`, one fewer than `dts`.
    pub gaps: Vec<f64>,
    /// `log(gᵢ / gᵢ₊₁) / log(Δtᵢ / Δtᵢ₊₁)`.
    pub orders: Vec<f64>,
}

/// Temporal study on level `n`. Consecutive steps must divide each other.
pub fn temporal_convergence(case_name: &str, n: usize, t_end: f64, dts: &[f64]) -> Result<TemporalStudy> {
    if dts.len() < 3 || dts.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidArgument("need at least three strictly decreasing time steps".into()));
    }
    let ratios: Vec<usize> = dts
        .windows(2)
        .map(|w| {
            let r = w[0] / w[1];
            if (r - r.round()).abs() > 1e-9 * r {
                Err(Error::InvalidArgument(format!("time step {} does not divide {}", w[1], w[0])))
            } else {
                Ok(r.round() as usize)
            }
        })
        .collect::<Result<_>>()?;
    let (case, model) = manufactured(case_name)?;
    let exact = case.exact().expect("checked above");
    let mut pressure_errors = Vec::with_capacity(dts.len());
    let mut runs = Vec::with_capacity(dts.len());
    for &dt in dts {
        let (problem, traj) = manufactured_run(&case, model, n, dt, t_end)?;
        let disc = problem.disc();
        let mut sum = 0.0;
        for (i, s) in traj.steps.iter().enumerate() {
            let e = field_errors(disc.mesh(), disc.spaces(), &s.u, &s.p, &s.zeta, &exact, traj.times[i + 1]);
            sum += dt * e.p_l2 * e.p_l2;
        }
        pressure_errors.push(sum.sqrt());
        runs.push((problem, traj));
    }
    let gaps: Vec<f64> = (0..dts.len() - 1)
        .map(|i| {
            let (problem, coarse) = &runs[i];
            let fine = &runs[i + 1].1;
            let mass = problem.disc().mass();
            let sum: f64 = coarse
                .steps
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let f = &fine.steps[(j + 1) * ratios[i] - 1];
                    let d: Vec<f64> = s.p.coefficients.iter().zip(&f.p.coefficients).map(|(a, b)| a - b).collect();
                    dts[i] * mass.quad_form(&d)
                })
                .sum();
            sum.sqrt()
        })
        .collect();
    let orders = (1..gaps.len()).map(|i| observed_order(gaps[i - 1], gaps[i], dts[i - 1], dts[i])).collect();
    Ok(TemporalStudy { n, t_end, dts: dts.to_vec(), pressure_errors, gaps, orders })
}
