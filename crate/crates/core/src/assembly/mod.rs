//! Quadrature and assembly of the bilinear forms and load functionals of the
//! weak Biot system.
//!
//! All operators are assembled over the *full* dof maps. Solvers restrict to
//! free dofs themselves. Element contributions are pushed in a fixed element
//! order and summed in insertion order, so repeated assemblies are
//! bit-identical.
//!
//! | operator | entries |
//! |---|---|
//! | `E` | `e(φ_j, φ_i) = λ(∇·φ_j)(∇·φ_i) + 2μ ε(φ_j):ε(φ_i)` |
//! | `G` | `G_ij = ∫ (∇·φ_j) ψ_i` (pressure rows, displacement columns) |
//! | `K(k)` | `∫ k ∇ψ_j·∇ψ_i` |
//! | `M` | `∫ ψ_j ψ_i` |

pub mod permeability;
pub mod quadrature;
pub mod sparse;

use crate::cases::SourceTerms;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::spaces::{Field, SpaceKind, Spaces, LOCAL_EDGES};
use permeability::PermeabilityModel;
use quadrature::{QuadratureRule, POINTS_PER_ELEMENT};
use sparse::{CsrMatrix, TripletBuilder};

/// Basis data at one quadrature point of one element.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub element: usize,
    /// Index of the point within its element.
    pub local: usize,
    pub x: [f64; 2],
    /// Physical weight (reference weight times `2·area`).
    pub weight: f64,
    /// Linear basis values (= barycentric coordinates).
    pub p1: [f64; 3],
    pub grad_p1: [[f64; 2]; 3],
    pub p2: [f64; 6],
    pub grad_p2: [[f64; 2]; 6],
}

/// Visits every quadrature point of the degree-4 rule, element by element.
pub fn for_each_quad_point(mesh: &TriMesh, mut f: impl FnMut(&QuadPoint)) {
    let rule = QuadratureRule::degree4();
    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle_points(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let g1 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
        let g2 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
        let grad_p1 = [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2];
        for q in 0..rule.len() {
            let l = rule.barycentric(q);
            let x = [
                l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
                l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
            ];
            let mut p2 = [0.0; 6];
            let mut grad_p2 = [[0.0; 2]; 6];
            for i in 0..3 {
                p2[i] = l[i] * (2.0 * l[i] - 1.0);
                let s = 4.0 * l[i] - 1.0;
                grad_p2[i] = [s * grad_p1[i][0], s * grad_p1[i][1]];
            }
            for (k, [i, j]) in LOCAL_EDGES.iter().copied().enumerate() {
                p2[3 + k] = 4.0 * l[i] * l[j];
                for d in 0..2 {
                    grad_p2[3 + k][d] = 4.0 * (l[j] * grad_p1[i][d] + l[i] * grad_p1[j][d]);
                }
            }
            f(&QuadPoint { element: t, local: q, x, weight: rule.weights[q] * det, p1: l, grad_p1, p2, grad_p2 });
        }
    }
}

/// Linear-field value at a quadrature point.
pub fn p1_value(field: &[f64], tri: [usize; 3], qp: &QuadPoint) -> f64 {
    (0..3).map(|i| field[tri[i]] * qp.p1[i]).sum()
}

/// `e(·,·)` with Lamé parameters `lambda ≥ 0`, `mu > 0`.
pub fn assemble_elasticity(spaces: &Spaces, mesh: &TriMesh, lambda: f64, mu: f64) -> Result<CsrMatrix> {
    if !(lambda.is_finite() && lambda >= 0.0 && mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidArgument(format!("Lamé parameters need λ ≥ 0, μ > 0, got λ={lambda}, μ={mu}")));
    }
    let n = spaces.displacement.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, mesh.triangles().len() * 144);
    let mut local = [[0.0f64; 12]; 12];
    let mut current = usize::MAX;
    let flush = |t: usize, local: &mut [[f64; 12]; 12], b: &mut TripletBuilder| {
        let dofs = spaces.element_displacement_dofs(mesh, t);
        for i in 0..12 {
            for j in 0..12 {
                b.push(dofs[i], dofs[j], local[i][j]);
            }
        }
        *local = [[0.0; 12]; 12];
    };
    for_each_quad_point(mesh, |qp| {
        if qp.element != current {
            if current != usize::MAX {
                flush(current, &mut local, &mut b);
            }
            current = qp.element;
        }
        let g = &qp.grad_p2;
        for a in 0..6 {
            for c in 0..2 {
                for bb in 0..6 {
                    for d in 0..2 {
                        let delta = if c == d { g[a][0] * g[bb][0] + g[a][1] * g[bb][1] } else { 0.0 };
                        let v = lambda * g[bb][c] * g[a][d] + mu * (delta + g[bb][d] * g[a][c]);
                        local[2 * bb + c][2 * a + d] += qp.weight * v;
                    }
                }
            }
        }
    });
    if current != usize::MAX {
        flush(current, &mut local, &mut b);
    }
    Ok(b.build())
}

/// `G_ij = ∫ (∇·φ_j) ψ_i`.
pub fn assemble_divergence_coupling(spaces: &Spaces, mesh: &TriMesh) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(spaces.pressure.n_dofs(), spaces.displacement.n_dofs(), mesh.triangles().len() * 36 * POINTS_PER_ELEMENT);
    for_each_quad_point(mesh, |qp| {
        let tri = mesh.triangles()[qp.element];
        let dofs = spaces.element_displacement_dofs(mesh, qp.element);
        for i in 0..3 {
            for a in 0..6 {
                for c in 0..2 {
                    b.push(tri[i], dofs[2 * a + c], qp.weight * qp.grad_p2[a][c] * qp.p1[i]);
                }
            }
        }
    });
    b.build()
}

/// Permeability sampled at every quadrature point, tagged with the bounds
/// the samples must respect.
#[derive(Debug, Clone, PartialEq)]
pub struct KField {
    values: Vec<f64>,
    k_min: f64,
    k_max: f64,
}

impl KField {
    /// Wraps raw samples (`POINTS_PER_ELEMENT` per triangle, element-major).
    pub fn new(values: Vec<f64>, k_min: f64, k_max: f64) -> Self {
        Self { values, k_min, k_max }
    }

    pub fn uniform(mesh: &TriMesh, k: f64) -> Self {
        Self { values: vec![k; mesh.triangles().len() * POINTS_PER_ELEMENT], k_min: k, k_max: k }
    }

    /// `k(z)` with `z` interpolated at the quadrature points from its linear field.
    pub fn from_model(model: &PermeabilityModel, mesh: &TriMesh, z: &Field) -> Result<Self> {
        if z.kind != SpaceKind::Pressure || z.len() != mesh.vertices().len() {
            return Err(Error::Mismatch("permeability argument must be a pressure-space field".into()));
        }
        let mut values = Vec::with_capacity(mesh.triangles().len() * POINTS_PER_ELEMENT);
        if model.is_constant() {
            values.resize(mesh.triangles().len() * POINTS_PER_ELEMENT, model.eval_finite(0.0));
        } else {
            let mut err = None;
            for_each_quad_point(mesh, |qp| {
                let y = p1_value(&z.coefficients, mesh.triangles()[qp.element], qp);
                match model.eval(y) {
                    Ok(k) => values.push(k),
                    Err(e) => {
                        err.get_or_insert(e);
                        values.push(f64::NAN);
                    }
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
        Ok(Self { values, k_min: model.k1(), k_max: model.k2() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.k_min, self.k_max)
    }
}

/// `K_ij = ∫ k ∇ψ_j·∇ψ_i`. Rejects samples outside the declared bounds.
pub fn assemble_diffusion(spaces: &Spaces, mesh: &TriMesh, k: &KField) -> Result<CsrMatrix> {
    let expected = mesh.triangles().len() * POINTS_PER_ELEMENT;
    if k.values.len() != expected {
        return Err(Error::Mismatch(format!("{} permeability samples for {expected} quadrature points", k.values.len())));
    }
    for (index, &value) in k.values.iter().enumerate() {
        if !(value.is_finite() && value > 0.0 && value >= k.k_min && value <= k.k_max) {
            return Err(Error::PermeabilityOutOfBounds { index, value, k_min: k.k_min, k_max: k.k_max });
        }
    }
    let n = spaces.pressure.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, mesh.triangles().len() * 9 * POINTS_PER_ELEMENT);
    for_each_quad_point(mesh, |qp| {
        let tri = mesh.triangles()[qp.element];
        let kw = qp.weight * k.values[qp.element * POINTS_PER_ELEMENT + qp.local];
        for i in 0..3 {
            for j in 0..3 {
                let g = qp.grad_p1[i][0] * qp.grad_p1[j][0] + qp.grad_p1[i][1] * qp.grad_p1[j][1];
                b.push(tri[i], tri[j], kw * g);
            }
        }
    });
    Ok(b.build())
}

/// `M_ij = ∫ ψ_j ψ_i`.
pub fn assemble_pressure_mass(spaces: &Spaces, mesh: &TriMesh) -> CsrMatrix {
    let n = spaces.pressure.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, mesh.triangles().len() * 9 * POINTS_PER_ELEMENT);
    for_each_quad_point(mesh, |qp| {
        let tri = mesh.triangles()[qp.element];
        for i in 0..3 {
            for j in 0..3 {
                b.push(tri[i], tri[j], qp.weight * qp.p1[i] * qp.p1[j]);
            }
        }
    });
    b.build()
}

/// Consistent load vectors over the full dof maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    /// `⟨F, φ_i⟩`, zero on constrained displacement dofs.
    pub displacement: Vec<f64>,
    /// `⟨S, ψ_i⟩`, zero on pressure-Dirichlet vertices.
    pub pressure: Vec<f64>,
}

impl Loads {
    pub fn zeros(spaces: &Spaces) -> Self {
        Self { displacement: vec![0.0; spaces.displacement.n_dofs()], pressure: vec![0.0; spaces.pressure.n_dofs()] }
    }
}

/// Assembles `⟨F(t), v⟩` and `⟨S(t), q⟩`.
pub fn assemble_loads(spaces: &Spaces, mesh: &TriMesh, sources: &dyn SourceTerms, t: f64) -> Result<Loads> {
    let mut loads = Loads::zeros(spaces);
    let mut bad = None;
    for_each_quad_point(mesh, |qp| {
        let f = sources.body_force(qp.x[0], qp.x[1], t);
        let s = sources.fluid_source(qp.x[0], qp.x[1], t);
        if !(f[0].is_finite() && f[1].is_finite() && s.is_finite()) {
            bad.get_or_insert(qp.x);
            return;
        }
        let dofs = spaces.element_displacement_dofs(mesh, qp.element);
        for a in 0..6 {
            for c in 0..2 {
                loads.displacement[dofs[2 * a + c]] += qp.weight * f[c] * qp.p2[a];
            }
        }
        let tri = mesh.triangles()[qp.element];
        for i in 0..3 {
            loads.pressure[tri[i]] += qp.weight * s * qp.p1[i];
        }
    });
    if let Some(x) = bad {
        return Err(Error::NonFinite(format!("source value at ({}, {}), t = {t}", x[0], x[1])));
    }
    for d in 0..loads.displacement.len() {
        if spaces.displacement.is_constrained(d) {
            loads.displacement[d] = 0.0;
        }
    }
    for d in 0..loads.pressure.len() {
        if spaces.pressure.is_constrained(d) {
            loads.pressure[d] = 0.0;
        }
    }
    Ok(loads)
}

/// What to do with a fluid source whose integral is nonzero in the pure
/// Neumann layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IncompatibleSourceMode {
    /// Subtract the mean of `S` and record a warning.
    #[default]
    Correct,
    /// Reject the data.
    Strict,
}

/// Record of a mean correction applied to an incompatible source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityWarning {
    pub time: f64,
    /// `∫ S` before the correction.
    pub integral: f64,
}

/// Makes the pressure load compatible with the pure Neumann layout
/// (`∫ S = 0`). A no-op when the layout has a Dirichlet part.
///
/// `mass_row_sums` are the integrals `∫ ψ_i` (the row sums of `M`).
pub fn enforce_compatibility(
    loads: &mut Loads,
    spaces: &Spaces,
    mass_row_sums: &[f64],
    t: f64,
    mode: IncompatibleSourceMode,
) -> Result<Option<CompatibilityWarning>> {
    if !spaces.is_zero_mean() {
        return Ok(None);
    }
    let integral: f64 = loads.pressure.iter().sum();
    let scale: f64 = loads.pressure.iter().map(|v| v.abs()).sum();
    if integral.abs() <= 1e-12 * scale.max(1e-300) || integral == 0.0 {
        return Ok(None);
    }
    match mode {
        IncompatibleSourceMode::Strict => Err(Error::IncompatibleSource { integral, time: t }),
        IncompatibleSourceMode::Correct => {
            let area: f64 = mass_row_sums.iter().sum();
            let mean = integral / area;
            for (s, w) in loads.pressure.iter_mut().zip(mass_row_sums) {
                *s -= mean * w;
            }
            Ok(Some(CompatibilityWarning { time: t, integral }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{Case, CaseKind, Physics};
    use crate::mesh::BcLayout;
    use crate::spaces::{interpolate_scalar, interpolate_vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(n: usize, layout: BcLayout) -> (TriMesh, Spaces) {
        let m = TriMesh::unit_square(n, layout).unwrap();
        let s = Spaces::build(&m);
        (m, s)
    }

    fn random_clamped(spaces: &Spaces, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let free: Vec<f64> = (0..spaces.displacement.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
        spaces.displacement.extend(&free)
    }

    /// Integrand of `e(u, u)` evaluated directly from the field, independent
    /// of the element-matrix code path.
    fn energy_by_quadrature(spaces: &Spaces, mesh: &TriMesh, u: &[f64], lambda: f64, mu: f64) -> f64 {
        let mut total = 0.0;
        for_each_quad_point(mesh, |qp| {
            let dofs = spaces.element_displacement_dofs(mesh, qp.element);
            let mut grad = [[0.0; 2]; 2];
            for a in 0..6 {
                for c in 0..2 {
                    for d in 0..2 {
                        grad[c][d] += u[dofs[2 * a + c]] * qp.grad_p2[a][d];
                    }
                }
            }
            let div = grad[0][0] + grad[1][1];
            let mut eps2 = 0.0;
            for c in 0..2 {
                for d in 0..2 {
                    let e = 0.5 * (grad[c][d] + grad[d][c]);
                    eps2 += e * e;
                }
            }
            total += qp.weight * (lambda * div * div + 2.0 * mu * eps2);
        });
        total
    }

    #[test]
    fn elasticity_matches_its_definition_and_is_symmetric() {
        let (m, s) = setup(3, BcLayout::AllNeumann);
        let e = assemble_elasticity(&s, &m, 1.3, 0.7).unwrap();
        assert!(e.symmetry_residual() <= 1e-14 * e.max_abs());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let u = random_clamped(&s, &mut rng);
            let want = energy_by_quadrature(&s, &m, &u, 1.3, 0.7);
            assert!((e.quad_form(&u) - want).abs() <= 1e-12 * want.abs());
        }
        assert!(assemble_elasticity(&s, &m, -1.0, 1.0).is_err());
        assert!(assemble_elasticity(&s, &m, 1.0, 0.0).is_err());
    }

    #[test]
    fn elasticity_positive_definite_on_free_dofs() {
        let (m, s) = setup(2, BcLayout::AllNeumann);
        let e = assemble_elasticity(&s, &m, 1.0, 1.0).unwrap();
        let map = &s.displacement;
        let ef = e.submatrix(|i| map.free_index(i), map.n_free(), |j| map.free_index(j), map.n_free());
        let eig = nalgebra::SymmetricEigen::new(ef.to_dense()).eigenvalues;
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn divergence_coupling_converges_to_the_exact_divergence() {
        let err_at = |n| {
            let (m, s) = setup(n, BcLayout::AllNeumann);
            let g = assemble_divergence_coupling(&s, &m);
            let u = interpolate_vector(|x, y| [(PI * x).sin() * (PI * y).sin(), 0.0], &s).unwrap();
            let mut want = vec![0.0; s.pressure.n_dofs()];
            for_each_quad_point(&m, |qp| {
                let div = PI * (PI * qp.x[0]).cos() * (PI * qp.x[1]).sin();
                for (i, v) in m.triangles()[qp.element].iter().enumerate() {
                    want[*v] += qp.weight * div * qp.p1[i];
                }
            });
            let got = g.mul_vec(&u.coefficients);
            got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (e4, e8) = (err_at(4), err_at(8));
        // entries scale like h² · O(h²)
        assert!(e8 < 0.1 * e4, "{e4} -> {e8}");
    }

    #[test]
    fn clamped_fields_have_no_net_divergence() {
        let (m, s) = setup(5, BcLayout::AllNeumann);
        let g = assemble_divergence_coupling(&s, &m);
        let ones = vec![1.0; s.pressure.n_dofs()];
        let gt1 = g.tr_mul_vec(&ones);
        for d in s.displacement.free_dofs() {
            assert!(gt1[*d].abs() < 1e-14);
        }
    }

    #[test]
    fn constants_see_zero_total_divergence() {
        let (m, s) = setup(4, BcLayout::AllDirichlet);
        let g = assemble_divergence_coupling(&s, &m);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ones = vec![1.0; s.pressure.n_dofs()];
        for _ in 0..5 {
            let u = random_clamped(&s, &mut rng);
            assert!(sparse::dot(&ones, &g.mul_vec(&u)).abs() < 1e-12);
        }
    }

    #[test]
    fn total_divergence_by_independent_quadrature() {
        // ∫ ∇·u_h recomputed element by element from the field itself
        let (m, s) = setup(3, BcLayout::MixedLeftDirichlet);
        let g = assemble_divergence_coupling(&s, &m);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let u = random_clamped(&s, &mut rng);
        let mut direct = 0.0;
        for_each_quad_point(&m, |qp| {
            let dofs = s.element_displacement_dofs(&m, qp.element);
            let div: f64 = (0..6).map(|a| u[dofs[2 * a]] * qp.grad_p2[a][0] + u[dofs[2 * a + 1]] * qp.grad_p2[a][1]).sum();
            direct += qp.weight * div;
        });
        let ones = vec![1.0; s.pressure.n_dofs()];
        let via_g = sparse::dot(&ones, &g.mul_vec(&u));
        assert!((via_g - direct).abs() < 1e-13);
        assert!(direct.abs() < 1e-13);
    }

    #[test]
    fn diffusion_examples() {
        let (m, s) = setup(4, BcLayout::AllNeumann);
        let k1 = assemble_diffusion(&s, &m, &KField::uniform(&m, 1.0)).unwrap();
        for r in 0..k1.nrows() {
            let sum: f64 = k1.row(r).map(|(_, v)| v).sum();
            assert!(sum.abs() < 1e-13);
        }
        let x = interpolate_scalar(|x, _| x, &s).unwrap();
        let k2 = assemble_diffusion(&s, &m, &KField::uniform(&m, 2.0)).unwrap();
        assert!((k2.quad_form(&x.coefficients) - 2.0).abs() < 1e-12);
        let d = k2.to_dense() - k1.to_dense() * 2.0;
        assert!(d.amax() <= 1e-13);
        assert!(k2.symmetry_residual() <= 1e-13 * k2.max_abs());
    }

    #[test]
    fn diffusion_rejects_out_of_bounds_samples() {
        let (m, s) = setup(2, BcLayout::AllNeumann);
        let mut vals = vec![1.0; m.triangles().len() * POINTS_PER_ELEMENT];
        vals[7] = 5.0;
        let k = KField::new(vals, 0.5, 2.0);
        assert!(matches!(assemble_diffusion(&s, &m, &k), Err(Error::PermeabilityOutOfBounds { index: 7, .. })));
    }

    #[test]
    fn diffusion_monotone_in_k() {
        let (m, s) = setup(4, BcLayout::AllNeumann);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let npts = m.triangles().len() * POINTS_PER_ELEMENT;
        for _ in 0..10 {
            let lo: Vec<f64> = (0..npts).map(|_| rng.random_range(0.1..2.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
            let a = assemble_diffusion(&s, &m, &KField::new(lo, 0.1, 3.0)).unwrap();
            let b = assemble_diffusion(&s, &m, &KField::new(hi, 0.1, 3.0)).unwrap();
            let p: Vec<f64> = (0..s.pressure.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(b.quad_form(&p) - a.quad_form(&p) >= -1e-12);
        }
    }

    #[test]
    fn mass_examples() {
        let (m, s) = setup(4, BcLayout::AllDirichlet);
        let mass = assemble_pressure_mass(&s, &m);
        let ones = vec![1.0; s.pressure.n_dofs()];
        assert!((mass.quad_form(&ones) - 1.0).abs() < 1e-12);
        assert!(mass.symmetry_residual() <= 1e-14);
        // ∫ (I_h x)² with an independent per-element formula: for a linear
        // function with vertex values a, b, c: area/6 (a²+b²+c²+ab+bc+ca)
        let x = interpolate_scalar(|x, _| x, &s).unwrap();
        let mut want = 0.0;
        for (t, tri) in m.triangles().iter().enumerate() {
            let [a, b, c] = tri.map(|v| x.coefficients[v]);
            want += m.signed_area(t) / 6.0 * (a * a + b * b + c * c + a * b + b * c + c * a);
        }
        assert!((mass.quad_form(&x.coefficients) - want).abs() < 1e-14);
        assert!((want - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn load_examples() {
        let model = PermeabilityModel::constant(1.0).unwrap();
        let (m, s) = setup(8, BcLayout::AllNeumann);
        let zero = Case::new(CaseKind::Zero, Physics::default(), &model).unwrap();
        let l = assemble_loads(&s, &m, &zero, 0.3).unwrap();
        assert!(l.displacement.iter().chain(&l.pressure).all(|&v| v == 0.0));

        struct SinSin;
        impl SourceTerms for SinSin {
            fn body_force(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
                [0.0, 0.0]
            }
            fn fluid_source(&self, x: f64, y: f64, _: f64) -> f64 {
                (PI * x).sin() * (PI * y).sin()
            }
        }
        let (m16, s16) = setup(16, BcLayout::AllNeumann);
        let l = assemble_loads(&s16, &m16, &SinSin, 0.0).unwrap();
        let total: f64 = l.pressure.iter().sum();
        assert!((total - 4.0 / (PI * PI)).abs() < 1e-6, "{total}");

        let unit = Case::new(CaseKind::UnitSource, Physics::default(), &model).unwrap();
        let mass = assemble_pressure_mass(&s, &m);
        let row_sums = mass.mul_vec(&vec![1.0; s.pressure.n_dofs()]);
        let mut l = assemble_loads(&s, &m, &unit, 0.0).unwrap();
        assert!(matches!(
            enforce_compatibility(&mut l.clone(), &s, &row_sums, 0.0, IncompatibleSourceMode::Strict),
            Err(Error::IncompatibleSource { .. })
        ));
        let w = enforce_compatibility(&mut l, &s, &row_sums, 0.0, IncompatibleSourceMode::Correct).unwrap().unwrap();
        assert!((w.integral - 1.0).abs() < 1e-12);
        assert!(l.pressure.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn loads_are_linear_in_the_source() {
        struct Scaled(f64);
        impl SourceTerms for Scaled {
            fn body_force(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
                [self.0 * (x * y + t), self.0 * (x - y * y)]
            }
            fn fluid_source(&self, x: f64, y: f64, t: f64) -> f64 {
                self.0 * (x * x - y + t)
            }
        }
        let (m, s) = setup(3, BcLayout::MixedLeftDirichlet);
        let a = assemble_loads(&s, &m, &Scaled(1.0), 0.5).unwrap();
        let b = assemble_loads(&s, &m, &Scaled(-2.5), 0.5).unwrap();
        for (x, y) in a.displacement.iter().chain(&a.pressure).zip(b.displacement.iter().chain(&b.pressure)) {
            assert!((-2.5 * x - y).abs() < 1e-14);
        }
        // constrained entries are zeroed
        for d in 0..s.pressure.n_dofs() {
            if s.pressure.is_constrained(d) {
                assert_eq!(a.pressure[d], 0.0);
            }
        }
    }
}
