//! Elasticity solver, the pressure-to-dilation map `B`, the β-form and the
//! discrete dual norms.
//!
//! `B p = ∇·u` where `u` solves `e(u, v) = (p, ∇·v)` for every clamped `v`.
//! Discretely `B_d = M⁻¹ G E⁻¹ Gᵀ`, so `M B_d = G E⁻¹ Gᵀ` is symmetric
//! positive semidefinite and its kernel is spanned by the constants.
//!
//! ```
//! use biot_core::cases::Physics;
//! use biot_core::mesh::{BcLayout, TriMesh};
//! use biot_core::operators::Discretization;
//! use biot_core::spaces::interpolate_scalar;
//!
//! let mesh = TriMesh::unit_square(4, BcLayout::AllNeumann).unwrap();
//! let disc = Discretization::new(mesh, Physics::default()).unwrap();
//! let p = interpolate_scalar(|x, y| x - y, disc.spaces()).unwrap();
//! let zeta = disc.apply_b(&p).unwrap();
//! let shifted = interpolate_scalar(|x, y| x - y + 5.0, disc.spaces()).unwrap();
//! let zeta_shifted = disc.apply_b(&shifted).unwrap();
//! for (a, b) in zeta.coefficients.iter().zip(&zeta_shifted.coefficients) {
//!     assert!((a - b).abs() < 1e-12);
//! }
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::assembly::sparse::{dot, CsrMatrix};
use crate::assembly::{
    assemble_diffusion, assemble_divergence_coupling, assemble_elasticity, assemble_pressure_mass, KField,
};
use crate::cases::Physics;
use crate::error::{Error, Result};
use crate::linalg::BandCholesky;
use crate::mesh::{BcLayout, TriMesh};
use crate::solver::BiotProblem;
use crate::spaces::{DofMap, Field, SpaceKind, Spaces};

/// Largest pressure dof count for which dense operators are formed.
pub const DEFAULT_DENSE_CAP: usize = 2000;

/// Eigenvalues with `|θ|` at or below this count as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

/// Factorized elasticity operator on the free displacement dofs.
#[derive(Debug, Clone)]
pub struct ElasticitySolver {
    factor: BandCholesky,
    map: DofMap,
}

impl ElasticitySolver {
    pub fn new(elasticity: &CsrMatrix, map: &DofMap) -> Result<Self> {
        let ef = elasticity.submatrix(|i| map.free_index(i), map.n_free(), |j| map.free_index(j), map.n_free());
        let factor = BandCholesky::factor(&ef).map_err(|e| match e {
            Error::Singular { context } => Error::Singular { context: format!("elasticity operator: {context}") },
            other => other,
        })?;
        Ok(Self { factor, map: map.clone() })
    }

    /// Solves `E u = load` over the free dofs. `load` is a full-length
    /// displacement vector; its constrained entries are ignored.
    pub fn solve(&self, load: &[f64]) -> Result<Field> {
        if load.len() != self.map.n_dofs() {
            return Err(Error::Mismatch(format!("load has {} entries, displacement space has {}", load.len(), self.map.n_dofs())));
        }
        let x = self.factor.solve(&self.map.restrict(load));
        Ok(Field::displacement(self.map.extend(&x)))
    }
}

/// Riesz map of the gradient inner product `(∇p, ∇q)` on the pressure space.
#[derive(Debug, Clone)]
enum PressureRiesz {
    Empty,
    Free { factor: BandCholesky, map: DofMap },
    /// Pure Neumann: one vertex pinned, the functional made mean free first.
    Pinned { factor: BandCholesky, pin: usize },
}

/// Every operator assembled once on a mesh, with the factorizations the
/// solvers and audits share.
#[derive(Debug, Clone)]
pub struct Discretization {
    mesh: TriMesh,
    spaces: Spaces,
    physics: Physics,
    elasticity: CsrMatrix,
    coupling: CsrMatrix,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    mass_row_sums: Vec<f64>,
    elastic_solver: ElasticitySolver,
    mass_solver: BandCholesky,
    riesz: PressureRiesz,
}

impl Discretization {
    pub fn new(mesh: TriMesh, physics: Physics) -> Result<Self> {
        physics.validate()?;
        mesh.validate()?;
        let spaces = Spaces::build(&mesh);
        let elasticity = assemble_elasticity(&spaces, &mesh, physics.lambda, physics.mu)?;
        let coupling = assemble_divergence_coupling(&spaces, &mesh);
        let mass = assemble_pressure_mass(&spaces, &mesh);
        let stiffness = assemble_diffusion(&spaces, &mesh, &KField::uniform(&mesh, 1.0))?;
        let mass_row_sums = mass.mul_vec(&vec![1.0; spaces.pressure.n_dofs()]);
        let elastic_solver = ElasticitySolver::new(&elasticity, &spaces.displacement)?;
        let mass_solver = BandCholesky::factor(&mass)?;
        let riesz = if spaces.is_zero_mean() {
            let n = spaces.pressure.n_dofs();
            let keep = |i: usize| (i != 0).then(|| i - 1);
            let k = stiffness.submatrix(keep, n - 1, keep, n - 1);
            if n == 1 {
                PressureRiesz::Empty
            } else {
                PressureRiesz::Pinned { factor: BandCholesky::factor(&k)?, pin: 0 }
            }
        } else if spaces.pressure.n_free() == 0 {
            PressureRiesz::Empty
        } else {
            let map = spaces.pressure.clone();
            let k = stiffness.submatrix(|i| map.free_index(i), map.n_free(), |j| map.free_index(j), map.n_free());
            PressureRiesz::Free { factor: BandCholesky::factor(&k)?, map }
        };
        Ok(Self {
            mesh,
            spaces,
            physics,
            elasticity,
            coupling,
            mass,
            stiffness,
            mass_row_sums,
            elastic_solver,
            mass_solver,
            riesz,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn physics(&self) -> Physics {
        self.physics
    }

    pub fn layout(&self) -> BcLayout {
        self.mesh.layout()
    }

    /// `E` over the full displacement dofs.
    pub fn elasticity(&self) -> &CsrMatrix {
        &self.elasticity
    }

    /// `G`, pressure rows by displacement columns.
    pub fn coupling(&self) -> &CsrMatrix {
        &self.coupling
    }

    /// Pressure mass matrix `M`.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Diffusion operator with `k ≡ 1`.
    pub fn unit_stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// `M 𝟙`, the integrals of the pressure basis functions.
    pub fn mass_row_sums(&self) -> &[f64] {
        &self.mass_row_sums
    }

    pub fn elasticity_solver(&self) -> &ElasticitySolver {
        &self.elastic_solver
    }

    /// Diffusion operator for sampled permeability.
    pub fn diffusion(&self, k: &KField) -> Result<CsrMatrix> {
        assemble_diffusion(&self.spaces, &self.mesh, k)
    }

    /// `∫ f` for a pressure field.
    pub fn integral(&self, f: &Field) -> f64 {
        dot(&self.mass_row_sums, &f.coefficients)
    }

    /// Solves `E u = load`.
    pub fn solve_elasticity(&self, load: &[f64]) -> Result<Field> {
        self.elastic_solver.solve(load)
    }

    /// `M⁻¹ r` for a pressure-space functional `r`.
    pub fn solve_mass(&self, r: &[f64]) -> Result<Field> {
        if r.len() != self.spaces.pressure.n_dofs() {
            return Err(Error::Mismatch("functional length differs from the pressure space".into()));
        }
        Ok(Field::pressure(self.mass_solver.solve(r)))
    }

    /// `ζ = M⁻¹ G u`, the L² projection of `∇·u` onto the linear space.
    pub fn evaluate_dilation(&self, u: &Field) -> Result<Field> {
        self.spaces.check_field(u, SpaceKind::Displacement)?;
        self.solve_mass(&self.coupling.mul_vec(&u.coefficients))
    }

    /// Displacement induced by a pressure: `E u = Gᵀ p`.
    pub fn pressure_displacement(&self, p: &Field) -> Result<Field> {
        self.spaces.check_field(p, SpaceKind::Pressure)?;
        self.solve_elasticity(&self.coupling.tr_mul_vec(&p.coefficients))
    }

    /// `B p`.
    pub fn apply_b(&self, p: &Field) -> Result<Field> {
        let u = self.pressure_displacement(p)?;
        self.evaluate_dilation(&u)
    }

    /// `β(p, q) = (B p, q)`.
    pub fn beta_form(&self, p: &Field, q: &Field) -> Result<f64> {
        self.spaces.check_field(q, SpaceKind::Pressure)?;
        let bp = self.apply_b(p)?;
        Ok(self.mass.quad_form_pair(&bp.coefficients, &q.coefficients))
    }

    /// Discrete dual norm of a load functional.
    pub fn dual_norm(&self, load: &[f64], riesz: Riesz) -> Result<f64> {
        match riesz {
            Riesz::ElasticEnergy => {
                if self.spaces.displacement.n_free() == 0 {
                    return Err(Error::EmptySpace("no free displacement dofs".into()));
                }
                let x = self.solve_elasticity(load)?;
                let map = &self.spaces.displacement;
                let v: f64 = map.free_dofs().iter().map(|&d| load[d] * x.coefficients[d]).sum();
                Ok(v.max(0.0).sqrt())
            }
            Riesz::H1Pressure => {
                if load.len() != self.spaces.pressure.n_dofs() {
                    return Err(Error::Mismatch("load length differs from the pressure space".into()));
                }
                match &self.riesz {
                    PressureRiesz::Empty => Err(Error::EmptySpace("no free pressure dofs".into())),
                    PressureRiesz::Free { factor, map } => {
                        let f = map.restrict(load);
                        let x = factor.solve(&f);
                        Ok(dot(&f, &x).max(0.0).sqrt())
                    }
                    PressureRiesz::Pinned { factor, pin } => {
                        let total: f64 = load.iter().sum();
                        let area: f64 = self.mass_row_sums.iter().sum();
                        let s: Vec<f64> =
                            load.iter().zip(&self.mass_row_sums).map(|(l, w)| l - total / area * w).collect();
                        let f: Vec<f64> =
                            s.iter().enumerate().filter(|(i, _)| i != pin).map(|(_, v)| *v).collect();
                        let x = factor.solve(&f);
                        Ok(dot(&f, &x).max(0.0).sqrt())
                    }
                }
            }
        }
    }
}

/// Inner product defining a dual norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Riesz {
    /// `√(fᵀ E⁻¹ f)` on displacement loads.
    ElasticEnergy,
    /// `√(fᵀ K⁻¹ f)` on pressure loads, `K` the unit-permeability diffusion.
    H1Pressure,
}

/// Dense `B_d`, built column by column from [`Discretization::apply_b`].
#[derive(Debug, Clone)]
pub struct DenseBRealization {
    /// `B_d`.
    pub b: DMatrix<f64>,
    /// `M`.
    pub mass: DMatrix<f64>,
    /// `M B_d`.
    pub mb: DMatrix<f64>,
    pub layout: BcLayout,
    /// Pressure dofs fixed by the layout.
    constrained: Vec<bool>,
}

/// Sorted generalized eigenvalues of `M B_d x = θ M x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BSpectrum {
    pub eigenvalues: Vec<f64>,
}

impl BSpectrum {
    pub fn zero_count(&self) -> usize {
        self.eigenvalues.iter().filter(|t| t.abs() <= ZERO_EIGENVALUE_TOL).count()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    /// Smallest eigenvalue above the zero threshold.
    pub fn smallest_nonzero(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|t| *t > ZERO_EIGENVALUE_TOL)
    }
}

impl DenseBRealization {
    pub fn build(disc: &Discretization, cap: usize) -> Result<Self> {
        let n = disc.spaces.pressure.n_dofs();
        if n > cap {
            return Err(Error::CapExceeded { dofs: n, cap });
        }
        let mut b = DMatrix::zeros(n, n);
        let mut e = Field::pressure(vec![0.0; n]);
        for j in 0..n {
            e.coefficients[j] = 1.0;
            let col = disc.apply_b(&e)?;
            b.column_mut(j).copy_from_slice(&col.coefficients);
            e.coefficients[j] = 0.0;
        }
        let mass = disc.mass.to_dense();
        let mb = &mass * &b;
        let constrained = (0..n).map(|i| disc.spaces.pressure.is_constrained(i)).collect();
        Ok(Self { b, mass, mb, layout: disc.layout(), constrained })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// `max |B_d 𝟙|`.
    pub fn kernel_residual(&self) -> f64 {
        (&self.b * DVector::from_element(self.dim(), 1.0)).amax()
    }

    /// `max |M B_d − (M B_d)ᵀ| / max |M B_d|`.
    pub fn symmetry_residual(&self) -> f64 {
        let scale = self.mb.amax();
        if scale == 0.0 {
            return 0.0;
        }
        (&self.mb - self.mb.transpose()).amax() / scale
    }

    /// `(B_d p)ᵀ M q`.
    pub fn beta(&self, p: &[f64], q: &[f64]) -> f64 {
        let p = DVector::from_column_slice(p);
        let q = DVector::from_column_slice(q);
        (&self.mb * p).dot(&q)
    }

    /// Generalized eigenvalues on the pressure space of the layout with the
    /// constants added: the full linear space for the pure Neumann layout,
    /// and the free vertices plus the indicator of the constrained ones
    /// otherwise. Constants are always in the subspace, so the kernel is
    /// probed on every layout.
    pub fn spectrum(&self) -> Result<BSpectrum> {
        let n = self.dim();
        let free: Vec<usize> = (0..n).filter(|&i| !self.constrained[i]).collect();
        let has_constrained = free.len() < n;
        let r = free.len() + usize::from(has_constrained);
        let mut p = DMatrix::zeros(n, r);
        for (k, &i) in free.iter().enumerate() {
            p[(i, k)] = 1.0;
        }
        if has_constrained {
            for i in 0..n {
                if self.constrained[i] {
                    p[(i, r - 1)] = 1.0;
                }
            }
        }
        let sym = (&self.mb + self.mb.transpose()) * 0.5;
        let s = p.transpose() * sym * &p;
        let m = p.transpose() * &self.mass * &p;
        let chol = m.cholesky().ok_or_else(|| Error::Eigen("mass matrix is not positive definite".into()))?;
        let l = chol.l();
        let x = l
            .solve_lower_triangular(&s)
            .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
        let c = l
            .solve_lower_triangular(&x.transpose())
            .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(c, 1e-15, 10_000)
            .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        Ok(BSpectrum { eigenvalues })
    }
}

/// Pressures of the reduced problem `[B p]ₜ − ∇·(k(z)∇p) = S`, marched with
/// backward Euler on dense operators.
///
/// Eliminating the displacement from the monolithic step gives
/// `(α² M B_d + c0 M + Δt K(kⁿ)) pⁿ = Δt Sⁿ + hⁿ − α G E⁻¹ Fⁿ` with
/// `h¹ = M d0` and `hⁿ = α² M B_d pⁿ⁻¹ + α G E⁻¹ Fⁿ⁻¹ + c0 M pⁿ⁻¹`.
/// In the pure Neumann layout the zero-mean condition is appended as a
/// bordered row. Permeability on step `n` is sampled from `z[n-1]`.
pub fn reduced_solve(problem: &BiotProblem, z: &[Field], cap: usize) -> Result<Vec<Field>> {
    let disc = problem.disc();
    if z.len() != problem.steps() {
        return Err(Error::Mismatch(format!("{} dilation fields for {} steps", z.len(), problem.steps())));
    }
    let dense = DenseBRealization::build(disc, cap)?;
    let n = dense.dim();
    let Physics { alpha, c0, .. } = disc.physics();
    let dt = problem.dt();
    let zero_mean = disc.spaces.is_zero_mean();
    let rows: Vec<usize> = if zero_mean { (0..n).collect() } else { disc.spaces.pressure.free_dofs().to_vec() };
    let m = rows.len();
    if m == 0 {
        return Ok(vec![Field::pressure(vec![0.0; n]); problem.steps()]);
    }
    let base = &dense.mb * (alpha * alpha) + &dense.mass * c0;
    let w = DVector::from_column_slice(&disc.mass_row_sums);
    let coupled_force = |k: usize| -> Result<DVector<f64>> {
        let u = disc.solve_elasticity(&problem.loads(k).displacement)?;
        Ok(DVector::from_vec(disc.coupling.mul_vec(&u.coefficients)) * alpha)
    };

    let mut out = Vec::with_capacity(problem.steps());
    let mut hist = DVector::from_vec(disc.mass.mul_vec(&problem.initial_dilation().coefficients));
    let mut factor: Option<(KField, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)> = None;
    for step in 1..=problem.steps() {
        let k = problem.permeability(&z[step - 1])?;
        if factor.as_ref().map(|(kk, _)| kk) != Some(&k) {
            let a = &base + disc.diffusion(&k)?.to_dense() * dt;
            let dim = m + usize::from(zero_mean);
            let mut sys = DMatrix::zeros(dim, dim);
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in rows.iter().enumerate() {
                    sys[(i, j)] = a[(r, c)];
                }
            }
            if zero_mean {
                for i in 0..m {
                    sys[(i, m)] = -w[i];
                    sys[(m, i)] = w[i];
                }
            }
            factor = Some((k, sys.lu()));
        }
        let (_, lu) = factor.as_ref().expect("set above");
        let gf = coupled_force(step)?;
        let source = DVector::from_column_slice(&problem.loads(step).pressure);
        let rhs_full = source * dt + &hist - &gf;
        let mut rhs = DVector::zeros(m + usize::from(zero_mean));
        for (i, &r) in rows.iter().enumerate() {
            rhs[i] = rhs_full[r];
        }
        let x = lu.solve(&rhs).ok_or_else(|| Error::Singular {
            context: format!("reduced step matrix on the {} layout", disc.layout()),
        })?;
        let mut p = DVector::zeros(n);
        for (i, &r) in rows.iter().enumerate() {
            p[r] = x[i];
        }
        hist = &dense.mb * &p * (alpha * alpha) + gf + &dense.mass * &p * c0;
        out.push(Field::pressure(p.iter().copied().collect()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::permeability::{PermeabilityLaw, PermeabilityModel};
    use crate::spaces::{interpolate_scalar, interpolate_vector, zero_mean_project};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disc(n: usize, layout: BcLayout) -> Discretization {
        Discretization::new(TriMesh::unit_square(n, layout).unwrap(), Physics::default()).unwrap()
    }

    fn random_pressure(n: usize, rng: &mut ChaCha8Rng) -> Field {
        Field::pressure((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn elasticity_solve_examples() {
        let d = disc(4, BcLayout::AllDirichlet);
        let zero = d.solve_elasticity(&vec![0.0; d.spaces().displacement.n_dofs()]).unwrap();
        assert!(zero.coefficients.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let free: Vec<f64> = (0..d.spaces().displacement.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = d.spaces().displacement.extend(&free);
        let load = d.elasticity().mul_vec(&w);
        let u = d.solve_elasticity(&load).unwrap();
        let err = u.coefficients.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10 * w.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        // bit-identical repeat
        assert_eq!(d.solve_elasticity(&load).unwrap(), u);
        assert!(d.solve_elasticity(&[1.0]).is_err());
    }

    #[test]
    fn elasticity_residual_is_small() {
        let d = disc(5, BcLayout::MixedLeftDirichlet);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f: Vec<f64> = (0..d.spaces().displacement.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = d.spaces().displacement.extend(&d.spaces().displacement.restrict(&f));
        let u = d.solve_elasticity(&f).unwrap();
        let r: Vec<f64> = d.elasticity().mul_vec(&u.coefficients).iter().zip(&f).map(|(a, b)| a - b).collect();
        let r = d.spaces().displacement.restrict(&r);
        assert!(crate::assembly::sparse::norm2(&r) <= 1e-10 * crate::assembly::sparse::norm2(&f));
    }

    #[test]
    fn constants_are_in_the_kernel() {
        for layout in BcLayout::ALL {
            let d = disc(4, layout);
            let ones = Field::pressure(vec![1.0; d.spaces().pressure.n_dofs()]);
            let z = d.apply_b(&ones).unwrap();
            assert!(z.coefficients.iter().all(|v| v.abs() < 1e-12), "{layout}");
        }
    }

    #[test]
    fn dilation_examples() {
        let d = disc(6, BcLayout::AllNeumann);
        let z = d.evaluate_dilation(&Field::zeros(d.spaces(), SpaceKind::Displacement)).unwrap();
        assert!(z.coefficients.iter().all(|&v| v == 0.0));
        let u = interpolate_vector(|x, y| [x * (1.0 - x) * y * (1.0 - y), 0.0], d.spaces()).unwrap();
        let z = d.evaluate_dilation(&u).unwrap();
        assert!(d.integral(&z).abs() < 1e-11);
    }

    #[test]
    fn dilation_matches_a_dense_projection() {
        let d = disc(3, BcLayout::AllNeumann);
        let u = interpolate_vector(|x, y| {
            let b = x * (1.0 - x) * y * (1.0 - y);
            [b * (1.0 + x), b * (2.0 - y)]
        }, d.spaces())
        .unwrap();
        let z = d.evaluate_dilation(&u).unwrap();
        let m = d.mass().to_dense();
        let rhs = DVector::from_vec(d.coupling().mul_vec(&u.coefficients));
        let want = m.lu().solve(&rhs).unwrap();
        for (a, b) in z.coefficients.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn b_examples_on_neumann() {
        let d = disc(4, BcLayout::AllNeumann);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = d.spaces().pressure.n_dofs();
        for _ in 0..5 {
            let p = zero_mean_project(&random_pressure(n, &mut rng), d.mesh());
            let bp = d.apply_b(&p).unwrap();
            assert!(d.integral(&bp).abs() < 1e-11);
            assert!(d.beta_form(&p, &p).unwrap() > 0.0);
        }
    }

    #[test]
    fn dense_realization_examples() {
        let d = disc(4, BcLayout::AllNeumann);
        let real = DenseBRealization::build(&d, DEFAULT_DENSE_CAP).unwrap();
        assert!(real.kernel_residual() <= 1e-10);
        assert!(real.symmetry_residual() <= 1e-10);
        let mut e = Field::pressure(vec![0.0; real.dim()]);
        e.coefficients[7] = 1.0;
        let col = d.apply_b(&e).unwrap();
        for i in 0..real.dim() {
            assert_eq!(real.b[(i, 7)], col.coefficients[i]);
        }
        let eig = real.spectrum().unwrap();
        assert!(eig.min() >= -1e-11);
        assert_eq!(eig.zero_count(), 1);
        assert!(matches!(DenseBRealization::build(&d, 10), Err(Error::CapExceeded { dofs: 25, cap: 10 })));
    }

    #[test]
    fn spectrum_against_an_independent_dense_schur_complement() {
        // G E⁻¹ Gᵀ formed from dense factorizations only
        let d = disc(3, BcLayout::AllNeumann);
        let map = &d.spaces().displacement;
        let e = d.elasticity().submatrix(|i| map.free_index(i), map.n_free(), |j| map.free_index(j), map.n_free()).to_dense();
        let g = d.coupling().submatrix(Some, d.spaces().pressure.n_dofs(), |j| map.free_index(j), map.n_free()).to_dense();
        let schur = &g * e.cholesky().unwrap().solve(&g.transpose());
        let real = DenseBRealization::build(&d, DEFAULT_DENSE_CAP).unwrap();
        assert!((&schur - &real.mb).amax() <= 1e-12 * schur.amax());
        let m = d.mass().to_dense();
        let l = m.clone().cholesky().unwrap().l();
        let linv = l.clone().try_inverse().unwrap();
        let c = &linv * &schur * linv.transpose();
        let mut want: Vec<f64> = SymmetricEigen::new((&c + c.transpose()) * 0.5).eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        let got = real.spectrum().unwrap().eigenvalues;
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn kernel_is_one_dimensional_on_every_layout() {
        for layout in BcLayout::ALL {
            for n in [2, 4] {
                let d = disc(n, layout);
                let eig = DenseBRealization::build(&d, DEFAULT_DENSE_CAP).unwrap().spectrum().unwrap();
                assert_eq!(eig.zero_count(), 1, "{layout} n={n}: {:?}", &eig.eigenvalues[..3]);
                assert!(eig.min() >= -1e-11);
            }
        }
    }

    #[test]
    fn beta_examples() {
        let d = disc(4, BcLayout::MixedLeftDirichlet);
        let n = d.spaces().pressure.n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ones = Field::pressure(vec![1.0; n]);
        for _ in 0..4 {
            let p = random_pressure(n, &mut rng);
            let q = random_pressure(n, &mut rng);
            assert!(d.beta_form(&ones, &q).unwrap().abs() < 1e-12);
            let (pq, qp) = (d.beta_form(&p, &q).unwrap(), d.beta_form(&q, &p).unwrap());
            assert!((pq - qp).abs() <= 1e-10 * pq.abs().max(qp.abs()).max(1e-300));
            assert!(d.beta_form(&p, &p).unwrap() >= -1e-11);
        }
    }

    #[test]
    fn dual_norm_examples() {
        for layout in BcLayout::ALL {
            let d = disc(4, layout);
            let nu = d.spaces().displacement.n_dofs();
            let np = d.spaces().pressure.n_dofs();
            assert_eq!(d.dual_norm(&vec![0.0; nu], Riesz::ElasticEnergy).unwrap(), 0.0);
            assert_eq!(d.dual_norm(&vec![0.0; np], Riesz::H1Pressure).unwrap(), 0.0);

            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let free: Vec<f64> = (0..d.spaces().displacement.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = d.spaces().displacement.extend(&free);
            let f = d.elasticity().mul_vec(&w);
            let got = d.dual_norm(&f, Riesz::ElasticEnergy).unwrap();
            let want = d.elasticity().quad_form(&w).sqrt();
            assert!((got - want).abs() <= 1e-10 * want);
        }
    }

    #[test]
    fn pressure_dual_norm_matches_a_dense_sup() {
        // dense oracle: sup over the layout's pressure space of s(q)/|∇q|
        for layout in BcLayout::ALL {
            let d = disc(3, layout);
            let np = d.spaces().pressure.n_dofs();
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let mut s: Vec<f64> = (0..np).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..np {
                if d.spaces().pressure.is_constrained(i) {
                    s[i] = 0.0;
                }
            }
            let k = d.unit_stiffness().to_dense();
            let want = if d.spaces().is_zero_mean() {
                // restrict to the zero-mean subspace with an explicit basis
                let w = DVector::from_column_slice(d.mass_row_sums());
                let mut basis = DMatrix::zeros(np, np - 1);
                for j in 0..np - 1 {
                    basis[(j, j)] = 1.0;
                    basis[(np - 1, j)] = -w[j] / w[np - 1];
                }
                let kr = basis.transpose() * &k * &basis;
                let sr = basis.transpose() * DVector::from_column_slice(&s);
                sr.dot(&kr.cholesky().unwrap().solve(&sr)).sqrt()
            } else {
                let map = &d.spaces().pressure;
                let kr = DMatrix::from_fn(map.n_free(), map.n_free(), |i, j| k[(map.free_dofs()[i], map.free_dofs()[j])]);
                let sr = DVector::from_vec(map.restrict(&s));
                sr.dot(&kr.cholesky().unwrap().solve(&sr)).sqrt()
            };
            let got = d.dual_norm(&s, Riesz::H1Pressure).unwrap();
            assert!((got - want).abs() <= 1e-10 * want, "{layout}: {got} vs {want}");
        }
    }

    #[test]
    fn empty_pressure_space_is_reported() {
        let d = disc(1, BcLayout::AllDirichlet);
        assert!(matches!(d.dual_norm(&[0.0; 4], Riesz::H1Pressure), Err(Error::EmptySpace(_))));
    }

    #[test]
    fn interpolated_pressure_b_is_smooth_dilation() {
        let d = disc(4, BcLayout::AllNeumann);
        let p = interpolate_scalar(|x, y| (std::f64::consts::PI * x).cos() * y, d.spaces()).unwrap();
        let bp = d.apply_b(&p).unwrap();
        assert!(bp.coefficients.iter().all(|v| v.is_finite()));
        assert!(d.beta_form(&p, &p).unwrap() > 0.0);
    }

    fn reduced_problem(n: usize, layout: BcLayout, physics: Physics, seed: u64) -> BiotProblem {
        use crate::assembly::Loads;
        let d = Discretization::new(TriMesh::unit_square(n, layout).unwrap(), physics).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = zero_mean_project(&random_pressure(d.spaces().pressure.n_dofs(), &mut rng), d.mesh());
        let loads: Vec<Loads> = (0..=3)
            .map(|t| {
                let mut l = Loads::zeros(d.spaces());
                for (i, v) in l.displacement.iter_mut().enumerate() {
                    if !d.spaces().displacement.is_constrained(i) {
                        *v = rng.random_range(-1.0..1.0) * (1.0 + t as f64);
                    }
                }
                for (i, v) in l.pressure.iter_mut().enumerate() {
                    if !d.spaces().pressure.is_constrained(i) {
                        *v = rng.random_range(-1.0..1.0);
                    }
                }
                l
            })
            .collect();
        BiotProblem::with_loads(d, PermeabilityModel::new(PermeabilityLaw::CarmanKozeny { scale: 1.0 }, 0.05, 2.0).unwrap(), loads, d0, 0.1)
            .unwrap()
    }

    fn relative_gap(a: &[Field], b: &[Field], mass: &CsrMatrix) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            let diff: Vec<f64> = x.coefficients.iter().zip(&y.coefficients).map(|(p, q)| p - q).collect();
            num += mass.quad_form(&diff);
            den += mass.quad_form(&y.coefficients);
        }
        (num / den).sqrt()
    }

    #[test]
    fn reduced_march_matches_the_monolithic_solve() {
        for layout in BcLayout::ALL {
            for c0 in [0.0, 0.3] {
                let physics = Physics { c0, alpha: 0.7, ..Physics::default() };
                let p = reduced_problem(4, layout, physics, 7);
                let mut rng = ChaCha8Rng::seed_from_u64(8);
                // time-varying frozen dilation, wide enough to move k across its bounds
                let z: Vec<Field> = (0..3)
                    .map(|_| Field::pressure((0..p.disc().spaces().pressure.n_dofs()).map(|_| rng.random_range(-0.2..0.9)).collect()))
                    .collect();
                let reduced = reduced_solve(&p, &z, DEFAULT_DENSE_CAP).unwrap();
                let full = crate::solver::solve_linear_biot(&p, &z).unwrap();
                let pressures: Vec<Field> = full.steps.iter().map(|s| s.p.clone()).collect();
                let gap = relative_gap(&reduced, &pressures, p.disc().mass());
                assert!(gap <= 1e-8, "{layout} c0={c0}: {gap}");
            }
        }
    }

    #[test]
    fn reduced_zero_data_is_zero() {
        use crate::assembly::Loads;
        let d = disc(3, BcLayout::AllNeumann);
        let zero = Field::pressure(vec![0.0; d.spaces().pressure.n_dofs()]);
        let loads = vec![Loads::zeros(d.spaces()); 3];
        let p = BiotProblem::with_loads(d, PermeabilityModel::constant(1.0).unwrap(), loads, zero.clone(), 0.5).unwrap();
        for f in reduced_solve(&p, &[zero.clone(), zero], DEFAULT_DENSE_CAP).unwrap() {
            assert!(f.coefficients.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn reduced_neumann_dilation_stays_mean_free() {
        let p = reduced_problem(4, BcLayout::AllNeumann, Physics::default(), 11);
        let mut loads: Vec<_> = (0..=3).map(|n| p.loads(n).clone()).collect();
        let w = p.disc().mass_row_sums().to_vec();
        let area: f64 = w.iter().sum();
        for l in &mut loads {
            let mean = l.pressure.iter().sum::<f64>() / area;
            l.pressure.iter_mut().zip(&w).for_each(|(v, wi)| *v -= mean * wi);
        }
        let p = BiotProblem::with_loads(p.disc().clone(), *p.model(), loads, p.initial_dilation().clone(), 0.1).unwrap();
        let z = p.zero_dilation_guess();
        for pn in reduced_solve(&p, &z, DEFAULT_DENSE_CAP).unwrap() {
            assert!(p.disc().integral(&p.disc().apply_b(&pn).unwrap()).abs() <= 1e-10);
            assert!(p.disc().integral(&pn).abs() <= 1e-10);
        }
    }

    #[test]
    fn reduced_solve_respects_the_cap() {
        let p = reduced_problem(3, BcLayout::AllDirichlet, Physics::default(), 1);
        let z = p.zero_dilation_guess();
        assert!(matches!(reduced_solve(&p, &z, 4), Err(Error::CapExceeded { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn b_ignores_the_mean(seed in any::<u64>(), shift in -10.0f64..10.0) {
            let d = disc(3, BcLayout::AllNeumann);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_pressure(d.spaces().pressure.n_dofs(), &mut rng);
            let projected = zero_mean_project(&p, d.mesh());
            let shifted = Field::pressure(p.coefficients.iter().map(|v| v + shift).collect());
            let a = d.apply_b(&p).unwrap();
            for other in [d.apply_b(&projected).unwrap(), d.apply_b(&shifted).unwrap()] {
                for (x, y) in a.coefficients.iter().zip(&other.coefficients) {
                    prop_assert!((x - y).abs() <= 1e-11);
                }
            }
        }

        #[test]
        fn beta_is_symmetric_and_monotone(seed in any::<u64>()) {
            let d = disc(3, BcLayout::MixedLeftDirichlet);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = d.spaces().pressure.n_dofs();
            let p = random_pressure(n, &mut rng);
            let q = random_pressure(n, &mut rng);
            let (pq, qp) = (d.beta_form(&p, &q).unwrap(), d.beta_form(&q, &p).unwrap());
            prop_assert!((pq - qp).abs() <= 1e-10 * (pq.abs() + qp.abs()).max(1e-14));
            prop_assert!(d.beta_form(&p, &p).unwrap() >= -1e-11);
        }
    }
}
