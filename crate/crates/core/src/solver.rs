//! Backward-Euler time stepping of the linear Biot system with frozen
//! permeability, and the Picard iteration for the nonlinear one.
//!
//! Step `n` solves the symmetric block system
//!
//! ```text
//! [ E     -αGᵀ          ] [uⁿ]   [ Fⁿ                      ]
//! [ -αG   -(c0 M + Δt K)] [pⁿ] = [ -(Δt Sⁿ + α G uⁿ⁻¹ + c0 M pⁿ⁻¹) ]
//! ```
//!
//! where on the first step the history term is the initial fluid content
//! `(d0, q)`. No initial displacement is ever needed.
//!
//! ```
//! use biot_core::assembly::IncompatibleSourceMode;
//! use biot_core::assembly::permeability::PermeabilityModel;
//! use biot_core::cases::{Case, CaseKind, Physics};
//! use biot_core::mesh::{BcLayout, TriMesh};
//! use biot_core::operators::Discretization;
//! use biot_core::solver::{picard_solve, BiotProblem, PicardMode, PicardOptions};
//!
//! let mesh = TriMesh::unit_square(4, BcLayout::AllNeumann).unwrap();
//! let disc = Discretization::new(mesh, Physics::default()).unwrap();
//! let model = PermeabilityModel::constant(1.0).unwrap();
//! let case = Case::new(CaseKind::Relaxation, Physics::default(), &model).unwrap();
//! let problem = BiotProblem::from_case(disc, model, &case, 0.1, 0.5, IncompatibleSourceMode::Correct).unwrap();
//! let z0 = problem.zero_dilation_guess();
//! let out = picard_solve(&problem, &z0, &PicardOptions { tol: 1e-8, max_iter: 5, mode: PicardMode::Global }).unwrap();
//! assert!(out.report.converged);
//! assert_eq!(out.report.residuals[1], 0.0);
//! ```

use crate::assembly::permeability::PermeabilityModel;
use crate::assembly::sparse::{dot, norm2, CsrMatrix, TripletBuilder};
use crate::assembly::{assemble_loads, enforce_compatibility, CompatibilityWarning, IncompatibleSourceMode, KField, Loads};
use crate::cases::{Case, SourceTerms};
use crate::error::{Error, Result};
use crate::linalg::BandLu;
use crate::operators::Discretization;
use crate::spaces::{interpolate_scalar, zero_mean_project, Field, SpaceKind};

/// Relative slack accepted when checking that `T` is a multiple of `Δt`.
const GRID_TOL: f64 = 1e-9;

/// Data of one linear or nonlinear Biot run on a fixed discretization.
#[derive(Debug, Clone)]
pub struct BiotProblem {
    disc: Discretization,
    model: PermeabilityModel,
    d0: Field,
    dt: f64,
    steps: usize,
    /// Loads at `t_n = n Δt` for `n = 0..=steps`.
    loads: Vec<Loads>,
    warnings: Vec<CompatibilityWarning>,
}

impl BiotProblem {
    /// Samples the sources on the step grid. In the pure Neumann layout the
    /// fluid source is corrected or rejected according to `mode`.
    pub fn new(
        disc: Discretization,
        model: PermeabilityModel,
        sources: &dyn SourceTerms,
        d0: Field,
        dt: f64,
        t_end: f64,
        mode: IncompatibleSourceMode,
    ) -> Result<Self> {
        let steps = step_count(dt, t_end)?;
        let mut loads = Vec::with_capacity(steps + 1);
        let mut warnings = Vec::new();
        for n in 0..=steps {
            let t = n as f64 * dt;
            let mut l = assemble_loads(disc.spaces(), disc.mesh(), sources, t)?;
            if let Some(w) = enforce_compatibility(&mut l, disc.spaces(), disc.mass_row_sums(), t, mode)? {
                warnings.push(w);
            }
            loads.push(l);
        }
        let mut p = Self::with_loads(disc, model, loads, d0, dt)?;
        p.warnings = warnings;
        Ok(p)
    }

    /// Uses a registry case; `d0` is the mean-free interpolant of its initial dilation.
    pub fn from_case(
        disc: Discretization,
        model: PermeabilityModel,
        case: &Case,
        dt: f64,
        t_end: f64,
        mode: IncompatibleSourceMode,
    ) -> Result<Self> {
        let d0 = interpolate_scalar(|x, y| case.initial_dilation(x, y), disc.spaces())?;
        let d0 = zero_mean_project(&d0, disc.mesh());
        Self::new(disc, model, case, d0, dt, t_end, mode)
    }

    /// Takes load vectors directly: `loads[n]` belongs to `t_n = n Δt`.
    pub fn with_loads(
        disc: Discretization,
        model: PermeabilityModel,
        loads: Vec<Loads>,
        d0: Field,
        dt: f64,
    ) -> Result<Self> {
        if loads.len() < 2 {
            return Err(Error::InvalidArgument("need loads for at least one step".into()));
        }
        let steps = loads.len() - 1;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        disc.spaces().check_field(&d0, SpaceKind::Pressure)?;
        if d0.coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial dilation".into()));
        }
        let mean = disc.integral(&d0);
        if mean.abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("initial dilation must have zero mean, got {mean:e}")));
        }
        let (nu, np) = (disc.spaces().displacement.n_dofs(), disc.spaces().pressure.n_dofs());
        for l in &loads {
            if l.displacement.len() != nu || l.pressure.len() != np {
                return Err(Error::Mismatch("load vector sizes differ from the spaces".into()));
            }
            if l.displacement.iter().chain(&l.pressure).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("load vector".into()));
            }
        }
        Ok(Self { disc, model, d0, dt, steps, loads, warnings: Vec::new() })
    }

    pub fn disc(&self) -> &Discretization {
        &self.disc
    }

    pub fn model(&self) -> &PermeabilityModel {
        &self.model
    }

    pub fn initial_dilation(&self) -> &Field {
        &self.d0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Loads at `t_n`, `n = 0..=steps`.
    pub fn loads(&self, n: usize) -> &Loads {
        &self.loads[n]
    }

    /// Mean corrections applied to the fluid source.
    pub fn warnings(&self) -> &[CompatibilityWarning] {
        &self.warnings
    }

    /// Same problem with another permeability model.
    pub fn with_model(&self, model: PermeabilityModel) -> Self {
        Self { model, ..self.clone() }
    }

    /// `z ≡ 0` on every step.
    pub fn zero_dilation_guess(&self) -> Vec<Field> {
        vec![Field::zeros(self.disc.spaces(), SpaceKind::Pressure); self.steps]
    }

    /// The same field on every step.
    pub fn constant_dilation_guess(&self, z: &Field) -> Vec<Field> {
        vec![z.clone(); self.steps]
    }

    /// `k(z)` at the quadrature points.
    pub fn permeability(&self, z: &Field) -> Result<KField> {
        KField::from_model(&self.model, self.disc.mesh(), z)
    }
}

/// Number of steps of size `dt` in `[0, T]`; `T` must be a multiple of `dt`.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("final time must be positive, got {t_end}")));
    }
    if dt > t_end * (1.0 + GRID_TOL) {
        return Err(Error::InvalidArgument(format!("time step {dt} exceeds the final time {t_end}")));
    }
    let ratio = t_end / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > GRID_TOL * ratio {
        return Err(Error::InvalidArgument(format!("final time {t_end} is not a multiple of the time step {dt}")));
    }
    Ok(steps as usize)
}

/// State after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub u: Field,
    pub p: Field,
    /// `M⁻¹ G u`.
    pub zeta: Field,
    /// Dilation the permeability was evaluated at.
    pub z: Field,
    /// Zero-mean multiplier (pure Neumann layout), `0` otherwise.
    pub multiplier: f64,
}

/// Discrete weak solution on the grid `t_n = n Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    /// `t_0, …, t_N`.
    pub times: Vec<f64>,
    pub initial_dilation: Field,
    /// States at `t_1, …, t_N`.
    pub steps: Vec<StepState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn dilation_trace(&self) -> Vec<Field> {
        self.steps.iter().map(|s| s.zeta.clone()).collect()
    }

    pub fn final_state(&self) -> Option<&StepState> {
        self.steps.last()
    }
}

/// Factorized monolithic step operator.
///
/// Unknowns are the free displacement dofs followed by the selected pressure
/// dofs: the free ones for `V_D`, all but one pinned vertex in the pure
/// Neumann layout when the pressure block annihilates constants, and all of
/// them otherwise. The zero-mean multiplier is resolved outside the banded
/// factorization so that the band stays narrow.
#[derive(Debug, Clone)]
pub(crate) struct SaddleSystem {
    lu: BandLu,
    nu: usize,
    p_index: Vec<Option<usize>>,
    p_dofs: Vec<usize>,
    neumann: Neumann,
}

#[derive(Debug, Clone)]
enum Neumann {
    No,
    /// Constants span the kernel; one vertex pinned.
    Pinned,
    /// Regular pressure block; the multiplier needs one extra solve.
    Bordered { border_u: Vec<f64>, border_p: Vec<f64>, border_product: f64 },
}

impl SaddleSystem {
    /// `pressure_block` is `C = c0 M + Δt K`; `regular` says whether `C`
    /// is positive definite on the whole linear space.
    pub(crate) fn new(disc: &Discretization, pressure_block: &CsrMatrix, regular: bool) -> Result<Self> {
        let spaces = disc.spaces();
        let alpha = disc.physics().alpha;
        let umap = &spaces.displacement;
        let nu = umap.n_free();
        let np_all = spaces.pressure.n_dofs();
        let zero_mean = spaces.is_zero_mean();
        let p_dofs: Vec<usize> = if !zero_mean {
            spaces.pressure.free_dofs().to_vec()
        } else if regular {
            (0..np_all).collect()
        } else {
            (1..np_all).collect()
        };
        let mut p_index = vec![None; np_all];
        for (k, &d) in p_dofs.iter().enumerate() {
            p_index[d] = Some(k);
        }
        let n = nu + p_dofs.len();
        let mut b = TripletBuilder::with_capacity(n, n, disc.elasticity().nnz() + 2 * disc.coupling().nnz() + pressure_block.nnz());
        for r in 0..disc.elasticity().nrows() {
            if let Some(rr) = umap.free_index(r) {
                for (c, v) in disc.elasticity().row(r) {
                    if let Some(cc) = umap.free_index(c) {
                        b.push(rr, cc, v);
                    }
                }
            }
        }
        for r in 0..np_all {
            if let Some(pr) = p_index[r] {
                for (c, v) in disc.coupling().row(r) {
                    if let Some(uc) = umap.free_index(c) {
                        b.push(nu + pr, uc, -alpha * v);
                        b.push(uc, nu + pr, -alpha * v);
                    }
                }
                for (c, v) in pressure_block.row(r) {
                    if let Some(pc) = p_index[c] {
                        b.push(nu + pr, nu + pc, -v);
                    }
                }
            }
        }
        let matrix = b.build();
        let lu = BandLu::factor(&matrix).map_err(|e| match e {
            Error::Singular { context } => Error::Singular {
                context: format!("step system on the {} layout: {context}", disc.layout()),
            },
            other => other,
        })?;
        let mut sys = Self { lu, nu, p_index, p_dofs, neumann: Neumann::No };
        if zero_mean {
            sys.neumann = if regular {
                let w = disc.mass_row_sums();
                let (border_u, border_p) = sys.solve_raw(disc, &vec![0.0; umap.n_dofs()], w);
                let border_product = dot(w, &border_p);
                Neumann::Bordered { border_u, border_p, border_product }
            } else {
                Neumann::Pinned
            };
        }
        Ok(sys)
    }

    /// Solves `E u − αGᵀp = f`, `αG u + C p = r + λ M𝟙` with `∫p = 0` in the
    /// pure Neumann layout (λ is returned) and `λ = 0` otherwise.
    pub(crate) fn solve(&self, disc: &Discretization, f: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let w = disc.mass_row_sums();
        match &self.neumann {
            Neumann::No => {
                let (u, p) = self.solve_raw(disc, f, r);
                (u, p, 0.0)
            }
            Neumann::Pinned => {
                let area: f64 = w.iter().sum();
                let lambda = -r.iter().sum::<f64>() / area;
                let shifted: Vec<f64> = r.iter().zip(w).map(|(a, b)| a + lambda * b).collect();
                let (u, mut p) = self.solve_raw(disc, f, &shifted);
                let mean = dot(w, &p) / area;
                for v in &mut p {
                    *v -= mean;
                }
                (u, p, lambda)
            }
            Neumann::Bordered { border_u, border_p, border_product } => {
                let (mut u, mut p) = self.solve_raw(disc, f, r);
                let lambda = -dot(w, &p) / border_product;
                for (a, b) in p.iter_mut().zip(border_p) {
                    *a += lambda * b;
                }
                for (a, b) in u.iter_mut().zip(border_u) {
                    *a += lambda * b;
                }
                (u, p, lambda)
            }
        }
    }

    fn solve_raw(&self, disc: &Discretization, f: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let umap = &disc.spaces().displacement;
        let mut rhs = Vec::with_capacity(self.nu + self.p_dofs.len());
        rhs.extend(umap.restrict(f));
        rhs.extend(self.p_dofs.iter().map(|&d| -r[d]));
        let x = self.lu.solve(&rhs);
        let u = umap.extend(&x[..self.nu]);
        let mut p = vec![0.0; self.p_index.len()];
        for (k, &d) in self.p_dofs.iter().enumerate() {
            p[d] = x[self.nu + k];
        }
        (u, p)
    }
}

/// `c0 M + Δt K`.
fn pressure_block(disc: &Discretization, k: &CsrMatrix, dt: f64) -> CsrMatrix {
    let c0 = disc.physics().c0;
    let n = disc.spaces().pressure.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, k.nnz() + disc.mass().nnz());
    k.push_into(&mut b, 0, 0, dt);
    if c0 > 0.0 {
        disc.mass().push_into(&mut b, 0, 0, c0);
    }
    b.build()
}

/// History term of step `n` (1-based): `(d0, q)` on the first step, then
/// `α G uⁿ⁻¹ + c0 M pⁿ⁻¹`.
fn history(problem: &BiotProblem, prev: Option<&StepState>) -> Vec<f64> {
    let disc = problem.disc();
    match prev {
        None => disc.mass().mul_vec(&problem.d0.coefficients),
        Some(s) => {
            let alpha = disc.physics().alpha;
            let c0 = disc.physics().c0;
            let gu = disc.coupling().mul_vec(&s.u.coefficients);
            let mp = disc.mass().mul_vec(&s.p.coefficients);
            gu.iter().zip(&mp).map(|(g, m)| alpha * g + c0 * m).collect()
        }
    }
}

/// Step operator for one permeability sample, reused while the samples
/// stay bit-identical.
struct StepCache {
    k: Option<KField>,
    diffusion: Option<CsrMatrix>,
    system: Option<SaddleSystem>,
}

impl StepCache {
    fn new() -> Self {
        Self { k: None, diffusion: None, system: None }
    }

    fn get(&mut self, problem: &BiotProblem, k: &KField) -> Result<(&SaddleSystem, &CsrMatrix)> {
        if self.k.as_ref() != Some(k) {
            let disc = problem.disc();
            let diffusion = disc.diffusion(k)?;
            let block = pressure_block(disc, &diffusion, problem.dt);
            self.system = Some(SaddleSystem::new(disc, &block, disc.physics().c0 > 0.0)?);
            self.diffusion = Some(diffusion);
            self.k = Some(k.clone());
        }
        Ok((self.system.as_ref().expect("set above"), self.diffusion.as_ref().expect("set above")))
    }
}

fn advance(
    problem: &BiotProblem,
    cache: &mut StepCache,
    prev: Option<&StepState>,
    z: &Field,
    n: usize,
) -> Result<StepState> {
    let disc = problem.disc();
    let k = problem.permeability(z)?;
    let (system, _) = cache.get(problem, &k)?;
    let loads = problem.loads(n);
    let hist = history(problem, prev);
    let r: Vec<f64> = loads.pressure.iter().zip(&hist).map(|(s, h)| problem.dt * s + h).collect();
    let (u, p, multiplier) = system.solve(disc, &loads.displacement, &r);
    let u = Field::displacement(u);
    let zeta = disc.evaluate_dilation(&u)?;
    Ok(StepState { u, p: Field::pressure(p), zeta, z: z.clone(), multiplier })
}

/// One backward-Euler step `n ≥ 1` from `prev` (`None` on the first step)
/// with permeability sampled from `z`.
pub fn step_linear(problem: &BiotProblem, prev: Option<&StepState>, z: &Field, n: usize) -> Result<StepState> {
    if n == 0 || n > problem.steps {
        return Err(Error::InvalidArgument(format!("step index {n} outside 1..={}", problem.steps)));
    }
    if (n == 1) != prev.is_none() {
        return Err(Error::InvalidArgument("only the first step starts without a previous state".into()));
    }
    problem.disc().spaces().check_field(z, SpaceKind::Pressure)?;
    advance(problem, &mut StepCache::new(), prev, z, n)
}

/// Marches all steps with permeability frozen at `z[n-1]` on step `n`.
pub fn solve_linear_biot(problem: &BiotProblem, z: &[Field]) -> Result<Trajectory> {
    if z.len() != problem.steps {
        return Err(Error::Mismatch(format!("{} dilation fields for {} steps", z.len(), problem.steps)));
    }
    for f in z {
        problem.disc().spaces().check_field(f, SpaceKind::Pressure)?;
    }
    let mut cache = StepCache::new();
    let mut steps: Vec<StepState> = Vec::with_capacity(problem.steps);
    for n in 1..=problem.steps {
        let s = advance(problem, &mut cache, steps.last(), &z[n - 1], n)?;
        steps.push(s);
    }
    Ok(Trajectory { dt: problem.dt, times: times(problem), initial_dilation: problem.d0.clone(), steps })
}

fn times(problem: &BiotProblem) -> Vec<f64> {
    (0..=problem.steps).map(|n| n as f64 * problem.dt).collect()
}

/// The fixed-point map: dilation trace of the linear solve at frozen `z`.
pub fn fixed_point_map(problem: &BiotProblem, z: &[Field]) -> Result<Vec<Field>> {
    Ok(solve_linear_biot(problem, z)?.dilation_trace())
}

/// `(Σ Δt ‖zⁿ‖²_{L²})^{1/2}`.
pub fn space_time_norm(problem: &BiotProblem, z: &[Field]) -> f64 {
    let m = problem.disc().mass();
    z.iter().map(|f| problem.dt * m.quad_form(&f.coefficients)).sum::<f64>().max(0.0).sqrt()
}

fn difference(a: &Field, b: &Field) -> Vec<f64> {
    a.coefficients.iter().zip(&b.coefficients).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PicardMode {
    /// Iterate the map on whole trajectories.
    #[default]
    Global,
    /// Iterate inside each time step before advancing.
    PerStep,
}

impl PicardMode {
    pub fn name(self) -> &'static str {
        match self {
            PicardMode::Global => "global",
            PicardMode::PerStep => "per_step",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "global" => Some(PicardMode::Global),
            "per_step" => Some(PicardMode::PerStep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mode: PicardMode,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50, mode: PicardMode::Global }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    pub mode: PicardMode,
    /// Global mode: `‖z_{m+1} − z_m‖` per iteration in the space-time norm.
    /// Per-step mode: every inner residual, step after step.
    pub residuals: Vec<f64>,
    /// Per-step mode: inner residuals of each step.
    pub step_residuals: Vec<Vec<f64>>,
    pub converged: bool,
    /// Global iterations, or the largest inner count in per-step mode.
    pub iterations: usize,
}

/// Result of [`picard_solve`]; holds the last iterate even without convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub trajectory: Trajectory,
    pub report: PicardReport,
}

impl PicardOutcome {
    /// `Err(NonConvergence)` unless the iteration converged.
    pub fn into_result(self) -> Result<Self> {
        if self.report.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.report.iterations,
                residual: self.report.residuals.last().copied().unwrap_or(f64::NAN),
            })
        }
    }
}

/// Fixed-point iteration for the dilation-dependent permeability, started
/// from the guess `z0` (one field per step).
///
/// Stops once `‖z_{m+1} − z_m‖ ≤ tol · max(1, ‖z_{m+1}‖)`.
pub fn picard_solve(problem: &BiotProblem, z0: &[Field], opts: &PicardOptions) -> Result<PicardOutcome> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("Picard tolerance must be positive, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("Picard needs max_iter >= 1".into()));
    }
    match opts.mode {
        PicardMode::Global => picard_global(problem, z0, opts),
        PicardMode::PerStep => picard_per_step(problem, z0, opts),
    }
}

fn picard_global(problem: &BiotProblem, z0: &[Field], opts: &PicardOptions) -> Result<PicardOutcome> {
    let mut z = z0.to_vec();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut trajectory = None;
    for _ in 0..opts.max_iter {
        let traj = solve_linear_biot(problem, &z)?;
        let next = traj.dilation_trace();
        let diff: Vec<Field> = next.iter().zip(&z).map(|(a, b)| Field::pressure(difference(a, b))).collect();
        let r = space_time_norm(problem, &diff);
        residuals.push(r);
        log::debug!("global picard iteration {}: residual {r:e}", residuals.len());
        let scale = space_time_norm(problem, &next).max(1.0);
        trajectory = Some(traj);
        z = next;
        if r <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    let iterations = residuals.len();
    Ok(PicardOutcome {
        trajectory: trajectory.expect("max_iter >= 1"),
        report: PicardReport { mode: PicardMode::Global, residuals, step_residuals: Vec::new(), converged, iterations },
    })
}

fn picard_per_step(problem: &BiotProblem, z0: &[Field], opts: &PicardOptions) -> Result<PicardOutcome> {
    if z0.len() != problem.steps {
        return Err(Error::Mismatch(format!("{} dilation fields for {} steps", z0.len(), problem.steps)));
    }
    let m = problem.disc().mass();
    let mut cache = StepCache::new();
    let mut steps: Vec<StepState> = Vec::with_capacity(problem.steps);
    let mut step_residuals = Vec::with_capacity(problem.steps);
    let mut converged = true;
    for n in 1..=problem.steps {
        let mut z = z0[n - 1].clone();
        problem.disc().spaces().check_field(&z, SpaceKind::Pressure)?;
        let mut res = Vec::new();
        let mut state = None;
        let mut step_ok = false;
        for _ in 0..opts.max_iter {
            let s = advance(problem, &mut cache, steps.last(), &z, n)?;
            let r = m.quad_form(&difference(&s.zeta, &z)).max(0.0).sqrt();
            let scale = m.quad_form(&s.zeta.coefficients).max(0.0).sqrt().max(1.0);
            res.push(r);
            z = s.zeta.clone();
            state = Some(s);
            if r <= opts.tol * scale {
                step_ok = true;
                break;
            }
        }
        if !step_ok {
            log::debug!("per-step picard did not settle on step {n}");
        }
        converged &= step_ok;
        steps.push(state.expect("max_iter >= 1"));
        step_residuals.push(res);
    }
    let iterations = step_residuals.iter().map(Vec::len).max().unwrap_or(0);
    let residuals = step_residuals.iter().flatten().copied().collect();
    Ok(PicardOutcome {
        trajectory: Trajectory { dt: problem.dt, times: times(problem), initial_dilation: problem.d0.clone(), steps },
        report: PicardReport { mode: PicardMode::PerStep, residuals, step_residuals, converged, iterations },
    })
}

/// Which dilation the permeability is evaluated at when checking a
/// trajectory against the weak form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermeabilityArgument {
    /// `k(ζⁿ)`: the nonlinear problem.
    OwnDilation,
    /// `k(zⁿ)`: the frozen field the trajectory was computed with.
    Frozen,
}

/// Largest relative residual of the two weak-form equations over all steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakFormResidual {
    pub momentum: f64,
    pub mass: f64,
}

impl WeakFormResidual {
    pub fn max(&self) -> f64 {
        self.momentum.max(self.mass)
    }
}

fn relative(sum: &[f64], terms: &[&[f64]]) -> f64 {
    let scale: f64 = terms.iter().map(|t| norm2(t)).sum();
    let r = norm2(sum);
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

/// Residual of the discrete weak form, tested with every free basis
/// function and normalized by the sum of the term norms.
pub fn weak_form_residual(
    problem: &BiotProblem,
    traj: &Trajectory,
    argument: PermeabilityArgument,
) -> Result<WeakFormResidual> {
    if traj.len() != problem.steps {
        return Err(Error::Mismatch(format!("trajectory has {} steps, problem {}", traj.len(), problem.steps)));
    }
    let disc = problem.disc();
    let umap = &disc.spaces().displacement;
    let pmap = &disc.spaces().pressure;
    let alpha = disc.physics().alpha;
    let c0 = disc.physics().c0;
    let dt = problem.dt;
    let mut out = WeakFormResidual { momentum: 0.0, mass: 0.0 };
    for (i, s) in traj.steps.iter().enumerate() {
        let loads = problem.loads(i + 1);
        let eu = umap.restrict(&disc.elasticity().mul_vec(&s.u.coefficients));
        let gtp = umap.restrict(&disc.coupling().tr_mul_vec(&s.p.coefficients));
        let gtp: Vec<f64> = gtp.iter().map(|v| -alpha * v).collect();
        let f: Vec<f64> = umap.restrict(&loads.displacement).iter().map(|v| -v).collect();
        let sum: Vec<f64> = (0..eu.len()).map(|k| eu[k] + gtp[k] + f[k]).collect();
        out.momentum = out.momentum.max(relative(&sum, &[&eu, &gtp, &f]));

        let arg = match argument {
            PermeabilityArgument::OwnDilation => &s.zeta,
            PermeabilityArgument::Frozen => &s.z,
        };
        let k = disc.diffusion(&problem.permeability(arg)?)?;
        let restrict_p = |v: Vec<f64>| -> Vec<f64> {
            if disc.spaces().is_zero_mean() {
                v
            } else {
                pmap.restrict(&v)
            }
        };
        let gu = restrict_p(disc.coupling().mul_vec(&s.u.coefficients).iter().map(|v| alpha * v).collect());
        let hist = restrict_p(match i {
            0 => disc.mass().mul_vec(&traj.initial_dilation.coefficients).iter().map(|v| -v).collect(),
            _ => {
                let prev = &traj.steps[i - 1];
                let g = disc.coupling().mul_vec(&prev.u.coefficients);
                let m = disc.mass().mul_vec(&prev.p.coefficients);
                g.iter().zip(&m).map(|(a, b)| -(alpha * a + c0 * b)).collect()
            }
        });
        let cp = restrict_p(disc.mass().mul_vec(&s.p.coefficients).iter().map(|v| c0 * v).collect());
        let kp = restrict_p(k.mul_vec(&s.p.coefficients).iter().map(|v| dt * v).collect());
        let src = restrict_p(loads.pressure.iter().map(|v| -dt * v).collect());
        let mult = restrict_p(disc.mass_row_sums().iter().map(|w| -s.multiplier * w).collect());
        let sum: Vec<f64> = (0..gu.len()).map(|k| gu[k] + hist[k] + cp[k] + kp[k] + src[k] + mult[k]).collect();
        out.mass = out.mass.max(relative(&sum, &[&gu, &hist, &cp, &kp, &src, &mult]));
    }
    Ok(out)
}

/// Minimal-energy displacement whose dilation tested against the pressure
/// space is the initial fluid content: `α G u = M d0`.
pub fn lift_initial_dilation(problem: &BiotProblem) -> Result<Field> {
    let disc = problem.disc();
    let n = disc.spaces().pressure.n_dofs();
    let zero = TripletBuilder::new(n, n).build();
    let system = SaddleSystem::new(disc, &zero, false)?;
    let r = disc.mass().mul_vec(&problem.d0.coefficients);
    let (u, _, _) = system.solve(disc, &vec![0.0; disc.spaces().displacement.n_dofs()], &r);
    Ok(Field::displacement(u))
}
