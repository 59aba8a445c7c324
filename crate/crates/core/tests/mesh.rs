mod common;

use common::*;
use proptest::prelude::*;
use twophase::cvfe::mesh::{p1_gradients, stiffness_coeffs, PAIRS};
use twophase::cvfe::{CvfeMesh, CvfeScheme, TriangleSplit};
use twophase::ddfv::{DdfvMesh, DdfvScheme};
use twophase::geometry::{Point, Tensor};
use twophase::medium::{Medium, Rock};
use twophase::meshio::{BoundaryKind, DirichletSides, PolygonSoup};
use twophase::verify::estimate_norm_constant;
use twophase::SchemeBackend;

fn unit() -> Medium {
    Medium::homogeneous(Rock::isotropic(0.2, 1.0)).unwrap()
}

fn tensor() -> impl Strategy<Value = Tensor> {
    (0.2..3.0f64, 0.2..3.0f64, -0.9..0.9f64).prop_map(|(a, b, r)| {
        let off = r * (a * b).sqrt();
        Tensor::new(a, off, off, b)
    })
}

fn shoelace(p: &[Point]) -> f64 {
    0.5 * (0..p.len()).map(|i| p[i].x * p[(i + 1) % p.len()].y - p[(i + 1) % p.len()].x * p[i].y).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ddfv_gradient_is_exact_on_affine_fields(
        nx in 2usize..7, ny in 2usize..7, distortion in 0.0..0.4f64,
        a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64,
    ) {
        prop_assert!(ddfv_affine_gradient_error(nx, ny, distortion, a, b, c) <= 1e-10);
    }

    #[test]
    fn ddfv_diamonds_tile_the_domain(nx in 2usize..8, ny in 2usize..8, distortion in 0.0..0.4f64, k in tensor()) {
        let medium = Medium::homogeneous(Rock { porosity: 0.3, permeability: k }).unwrap();
        let m = DdfvMesh::build_structured(nx, ny, distortion, &DirichletSides::left_only(), &medium).unwrap();
        let s = m.stats();
        prop_assert!((s.total_primal_measure - 1.0).abs() <= 1e-10);
        prop_assert!((s.total_dual_measure - 1.0).abs() <= 1e-10);
        prop_assert!((m.diamonds().iter().map(|d| d.m_d).sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert_eq!(m.diamonds().len(), nx * (ny + 1) + ny * (nx + 1));
        let (lo, hi) = k.symmetric_eigenvalues().iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
        for d in m.diamonds() {
            let f = 0.5 * d.m_sigma * d.m_sigma_star * d.sin_alpha;
            prop_assert!((d.m_d - f).abs() <= 1e-12 * f);
            prop_assert!(d.tau_kl > 0.0 && d.tau_ks_ls > 0.0);
            prop_assert!(d.lambda == d.lambda.transpose());
            for e in d.lambda.symmetric_eigenvalues().iter() {
                prop_assert!(*e >= lo * (1.0 - 1e-12) && *e <= hi * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn ddfv_primal_areas_match_shoelace(nx in 2usize..8, ny in 2usize..8, distortion in 0.0..0.4f64) {
        let soup = twophase::ddfv::mesh::structured_quads(nx, ny, distortion).unwrap().with_sides(&DirichletSides::all());
        let m = DdfvMesh::from_soup(&soup, &unit()).unwrap();
        for (i, cell) in soup.cells.iter().enumerate() {
            let poly: Vec<Point> = cell.iter().map(|&v| soup.vertices[v]).collect();
            prop_assert!((m.nodes()[i].measure - shoelace(&poly).abs()).abs() <= 1e-14);
        }
    }

    #[test]
    fn tau_norm_is_definite_on_dirichlet_fields(nx in 2usize..6, ny in 2usize..6, distortion in 0.0..0.4f64) {
        let m = DdfvMesh::build_structured(nx, ny, distortion, &DirichletSides::left_only(), &unit()).unwrap();
        prop_assert!(m.tau_gram().cholesky().is_some());
    }

    #[test]
    fn capillary_flux_pairing_is_the_tau_norm(seed in 0u64..1000, distortion in 0.0..0.4f64) {
        let mesh = DdfvMesh::build_structured(4, 3, distortion, &DirichletSides::left_only(), &unit()).unwrap();
        let scheme = DdfvScheme::new(mesh, corey(), 0.1).unwrap();
        let state = random_state(scheme.fluid(), scheme.dof_count(), &mut rng(seed));
        let pc = scheme.mesh().expand(&state.capillary());
        let mut pairing = 0.0;
        for (i, d) in scheme.mesh().diamonds().iter().enumerate() {
            let (a, b) = scheme.capillary_flux_at(i, &state);
            pairing += a * d.delta_primal(&pc) + b * d.delta_dual(&pc);
        }
        let norm = scheme.mesh().tau_norm(&pc).powi(2);
        prop_assert!((pairing - norm).abs() <= 1e-12 * norm.max(1.0));
    }

    #[test]
    fn stiffness_matches_independent_p1_oracle(
        x in prop::array::uniform6(-2.0..2.0f64), k in tensor(),
    ) {
        let p = [Point::new(x[0], x[1]), Point::new(x[2], x[3]), Point::new(x[4], x[5])];
        let area = shoelace(&p).abs();
        prop_assume!(area > 1e-2);
        let c = stiffness_coeffs(&p[0], &p[1], &p[2], &k).unwrap();
        let oracle = p1_stiffness(p, k);
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (&(i, j), &v) in PAIRS.iter().zip(&c) {
            prop_assert!((v - oracle[i][j]).abs() <= 1e-12 * scale);
            prop_assert!((oracle[i][j] - oracle[j][i]).abs() <= 1e-13 * scale);
        }
        // rows of the element matrix sum to zero
        let g = p1_gradients(&p[0], &p[1], &p[2]);
        for i in 0..3 {
            let off: f64 = PAIRS.iter().zip(&c).filter(|(&(a, b), _)| a == i || b == i).map(|(_, v)| v).sum();
            let diag = area * (k * g[i]).dot(&g[i]);
            prop_assert!((off - diag).abs() <= 1e-11 * diag.max(1.0));
        }
    }

    #[test]
    fn stiffness_is_invariant_under_vertex_order(x in prop::array::uniform6(-2.0..2.0f64), k in tensor()) {
        let p = [Point::new(x[0], x[1]), Point::new(x[2], x[3]), Point::new(x[4], x[5])];
        prop_assume!(shoelace(&p).abs() > 1e-2);
        let c = stiffness_coeffs(&p[0], &p[1], &p[2], &k).unwrap();
        let r = stiffness_coeffs(&p[1], &p[0], &p[2], &k).unwrap();
        // pair (0,1) keeps its coefficient; (1,2) and (2,0) swap
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!((c[0] - r[0]).abs() <= 1e-13 * scale);
        prop_assert!((c[1] - r[2]).abs() <= 1e-13 * scale);
        prop_assert!((c[2] - r[1]).abs() <= 1e-13 * scale);
    }

    #[test]
    fn cvfe_dual_volumes_tile_the_domain(nx in 2usize..8, ny in 2usize..8, acute in any::<bool>()) {
        let split = if acute { TriangleSplit::Acute } else { TriangleSplit::Diagonal };
        let m = CvfeMesh::build_triangulation(nx, ny, split, &DirichletSides::all(), &unit()).unwrap();
        prop_assert!((m.stats().total_dual_measure - 1.0).abs() <= 1e-10);
        for v in 0..m.vertices().len() {
            let third: f64 = m.vertex_triangles(v).iter().map(|&t| m.triangles()[t].area / 3.0).sum();
            prop_assert!((m.measure(v) - third).abs() <= 1e-14);
        }
    }
}

#[test]
fn unit_right_triangle_coefficients_are_exact() {
    let (a, b, c) = (Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0));
    let k = stiffness_coeffs(&a, &b, &c, &Tensor::identity()).unwrap();
    // pairs (0,1), (1,2), (2,0)
    let expected = [0.5, 0.0, 0.5];
    for (v, e) in k.iter().zip(expected) {
        assert!((v - e).abs() <= 1e-14);
    }
}

#[test]
fn unit_right_triangle_control_volumes() {
    let mut soup = PolygonSoup { vertices: vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)], cells: vec![vec![0, 1, 2]], ..Default::default() };
    for (a, b) in [(0, 1), (1, 2), (2, 0)] {
        soup.mark(a, b, BoundaryKind::Neumann);
    }
    let m = CvfeMesh::from_soup(&soup, &unit()).unwrap();
    let total: f64 = (0..3).map(|v| m.measure(v)).sum();
    assert!((total - 0.5).abs() < 1e-15);
    for v in 0..3 {
        assert!((m.measure(v) - 1.0 / 6.0).abs() < 1e-15);
    }
}

#[test]
fn obtuse_and_anisotropic_triangles_have_negative_coefficients() {
    let k = stiffness_coeffs(&Point::new(0.0, 0.0), &Point::new(4.0, 0.0), &Point::new(3.9, 0.3), &Tensor::identity()).unwrap();
    assert!(k.iter().any(|&c| c < 0.0));
    let m = CvfeMesh::build_triangulation(3, 3, TriangleSplit::Diagonal, &DirichletSides::left_only(), &Medium::homogeneous(Rock { porosity: 0.2, permeability: anisotropic() }).unwrap()).unwrap();
    let scheme = CvfeScheme::new(m, corey(), 0.1).unwrap();
    assert!(scheme.upwind_branch_counts().negative > 0);
    assert!(scheme.mesh().stats().negative_coefficients > 0);
}

#[test]
fn structured_ddfv_examples() {
    let m = DdfvMesh::build_structured(8, 8, 0.3, &DirichletSides::all(), &unit()).unwrap();
    assert!((m.stats().total_primal_measure - 1.0).abs() < 1e-10);
    let iso = DdfvMesh::build_structured(4, 4, 0.0, &DirichletSides::all(), &unit()).unwrap();
    assert!(iso.diamonds().iter().all(|d| d.eta_d.abs() < 1e-15));
    let u = iso.field_from_fn(|_| 0.0);
    assert_eq!(iso.norms(&u), (0.0, 0.0, 0.0));
}

fn norm_equivalence_holds(backend: &dyn SchemeBackend, seed: u64) {
    let c = estimate_norm_constant(backend, 1000, seed).unwrap();
    assert!(c.estimate <= c.upper_bound * (1.0 + 1e-9));
    let mut r = rng(seed + 1);
    for _ in 0..1000 {
        let u = random_state(backend.fluid(), backend.dof_count(), &mut r);
        let v = u.p_g();
        let ratio = backend.l1_norm(v) / backend.grad_norm(v);
        assert!(ratio <= c.estimate * (1.0 + 1e-6), "{ratio} > {}", c.estimate);
    }
}

#[test]
fn sampled_norm_constants_bound_fresh_fields() {
    let medium = unit();
    for distortion in [0.0, 0.3] {
        let m = DdfvMesh::build_structured(4, 4, distortion, &DirichletSides::left_only(), &medium).unwrap();
        norm_equivalence_holds(&DdfvScheme::new(m, corey(), 0.1).unwrap(), 5);
    }
    for split in [TriangleSplit::Diagonal, TriangleSplit::Acute] {
        let m = CvfeMesh::build_triangulation(4, 4, split, &DirichletSides::left_only(), &medium).unwrap();
        norm_equivalence_holds(&CvfeScheme::new(m, corey(), 0.1).unwrap(), 6);
    }
}

#[test]
fn ddfv_tau_and_gradient_norms_are_equivalent() {
    let m = DdfvMesh::build_structured(4, 4, 0.2, &DirichletSides::left_only(), &unit()).unwrap();
    let mut r = rng(9);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..1000 {
        let s = random_state(&corey(), m.dof_count(), &mut r);
        let (_, tau, grad) = m.norms(&m.field_from_dofs(s.p_g()));
        lo = lo.min(tau / grad);
        hi = hi.max(tau / grad);
    }
    assert!(lo > 0.0 && hi.is_finite() && lo <= hi);
    // the sampled ratios stay inside the generalized eigenvalue range
    let a = m.tau_gram();
    let n = m.dof_count();
    let mut b = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = m.field_from_dofs(&e);
        for i in 0..n {
            let mut f = vec![0.0; n];
            f[i] = 1.0;
            let row = m.field_from_dofs(&f);
            let gi = m.discrete_gradient(&row);
            let gj = m.discrete_gradient(&col);
            b[(i, j)] = m.diamonds().iter().zip(gi.iter().zip(&gj)).map(|(d, (x, y))| d.m_d * x.dot(y)).sum();
        }
    }
    let l: nalgebra::DMatrix<f64> = b.cholesky().unwrap().l();
    let li: nalgebra::DMatrix<f64> = l.try_inverse().unwrap();
    let eig = (&li * a * li.transpose()).symmetric_eigenvalues();
    let (emin, emax) = eig.iter().fold((f64::INFINITY, 0.0f64), |(x, y), &e| (x.min(e), y.max(e)));
    assert!(lo * lo >= emin * (1.0 - 1e-9) && hi * hi <= emax * (1.0 + 1e-9));
}
