use gl_lab::estimates::{covariant_gradient_modulus, evaluate, EstimateNorms, Regime, IDS};
use gl_lab::gl::{energy, residuals, GLState};
use gl_lab::grid::{CellField, ComplexField, EdgeField, Grid, NodeField};
use gl_lab::identity::ibp_sides;
use gl_lab::io::{read_snapshot, write_snapshot};
use gl_lab::norms::{norm, NormSpec};
use gl_lab::operators::{curl, div, gauge_transform, grad};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(seed: u64, n: usize) -> GLState {
    let g = Grid::square(n, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = (0..g.num_nodes())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let ax = (0..g.num_xedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ay = (0..g.num_yedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GLState::new(
        ComplexField::from_vec(g, psi).unwrap(),
        EdgeField::from_vecs(g, ax, ay).unwrap(),
        rng.gen_range(0.5..4.0),
        rng.gen_range(0.5..4.0),
    )
    .unwrap()
}

fn random_chi(seed: u64, g: Grid) -> NodeField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let v = (0..g.num_nodes()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    NodeField::from_vec(g, v).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_and_curl_are_gauge_invariant(seed in any::<u64>(), n in 4usize..12) {
        let s = random_state(seed, n);
        let chi = random_chi(seed, *s.grid());
        let (psi, a) = gauge_transform(&s.psi, &s.a, s.b(), &chi).unwrap();
        let t = GLState::new(psi, a, s.kappa, s.h).unwrap();
        prop_assert!(close(energy(&s), energy(&t), 1e-11));
        let (c0, c1) = (curl(&s.a), curl(&t.a));
        for (u, v) in c0.as_slice().iter().zip(c1.as_slice()) {
            prop_assert!((u - v).abs() <= 1e-10 * (n as f64));
        }
        let m0 = covariant_gradient_modulus(&s.psi, &s.a, s.b()).unwrap();
        let m1 = covariant_gradient_modulus(&t.psi, &t.a, t.b()).unwrap();
        for (u, v) in m0.iter().zip(&m1) {
            prop_assert!(close(*u, *v, 1e-10));
        }
        let (l0, r0) = ibp_sides(&s.psi, &s.a, s.b()).unwrap();
        let (l1, r1) = ibp_sides(&t.psi, &t.a, t.b()).unwrap();
        prop_assert!(close(l0, l1, 1e-10) && close(r0, r1, 1e-10));
    }

    #[test]
    fn estimate_report_ignores_global_phase(seed in any::<u64>(), theta in 0.0f64..6.283) {
        let s = random_state(seed, 8);
        let mut t = s.clone();
        t.psi = s.psi.scale(Complex64::cis(theta));
        let (rs, rt) = (residuals(&s), residuals(&t));
        let norms = EstimateNorms::default();
        let a = evaluate(&s, Some(&rs), &norms, &Regime::default()).unwrap();
        let b = evaluate(&t, Some(&rt), &norms, &Regime::default()).unwrap();
        for id in IDS {
            let (x, y) = (a.get(id).unwrap(), b.get(id).unwrap());
            prop_assert!(close(x.lhs, y.lhs, 1e-9), "{id}: {} vs {}", x.lhs, y.lhs);
            prop_assert!(close(x.rhs, y.rhs, 1e-9), "{id}: {} vs {}", x.rhs, y.rhs);
        }
    }

    #[test]
    fn norms_are_absolutely_homogeneous(seed in any::<u64>(), c in -5.0f64..5.0) {
        let g = Grid::square(10, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = NodeField::from_vec(g, (0..g.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let cu = NodeField::from_vec(g, u.as_slice().iter().map(|x| c * x).collect()).unwrap();
        for spec in [
            NormSpec::lp(2.0),
            NormSpec::lp(4.0),
            NormSpec::sup(),
            NormSpec::w1p(3.0),
            NormSpec::c1(),
            NormSpec::holder(0, 0.5),
            NormSpec::holder(1, 0.25),
        ] {
            let (a, b) = (norm(&u, &spec).unwrap(), norm(&cu, &spec).unwrap());
            prop_assert!(close(b, c.abs() * a, 1e-12), "{spec:?}: {b} vs {}", c.abs() * a);
        }
    }

    #[test]
    fn lp_triangle_inequality(seed in any::<u64>(), p in 1.0f64..8.0) {
        let g = Grid::new(9, 7, 1.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || CellField::from_vec(g, (0..g.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (u, v) = (draw(), draw());
        let w = CellField::from_vec(g, u.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a + b).collect()).unwrap();
        let spec = NormSpec::lp(p);
        let (nu, nv, nw) = (norm(&u, &spec).unwrap(), norm(&v, &spec).unwrap(), norm(&w, &spec).unwrap());
        prop_assert!(nw <= nu + nv + 1e-12);
    }

    #[test]
    fn curl_of_gradient_vanishes(seed in any::<u64>(), n in 4usize..16) {
        let g = Grid::square(n, 1.0).unwrap();
        let c = curl(&grad(&random_chi(seed, g)));
        prop_assert!(c.max_abs() <= 1e-10 * (n * n) as f64);
    }

    #[test]
    fn div_is_minus_adjoint_of_grad(seed in any::<u64>(), n in 4usize..12) {
        // Σ area·f·div A = −Σ edge area·grad f·A on the dual-cell discretisation.
        let s = random_state(seed, n);
        let g = *s.grid();
        let f = random_chi(seed, g);
        let (d, gf) = (div(&s.a), grad(&f));
        let lhs: f64 = g.nodes().map(|(i, j)| g.node_area(i, j) * f.at(i, j) * d.at(i, j)).sum();
        let mut rhs = 0.0;
        for j in 0..=g.ny() {
            for i in 0..g.nx() {
                let k = g.xedge(i, j);
                rhs -= g.xedge_area(i, j) * gf.xs()[k] * s.a.xs()[k];
            }
        }
        for j in 0..g.ny() {
            for i in 0..=g.nx() {
                let k = g.yedge(i, j);
                rhs -= g.yedge_area(i, j) * gf.ys()[k] * s.a.ys()[k];
            }
        }
        prop_assert!(close(lhs, rhs, 1e-10), "{lhs} vs {rhs}");
    }

    #[test]
    fn snapshot_round_trip_is_bitwise(seed in any::<u64>(), nx in 4usize..10, ny in 4usize..10) {
        let g = Grid::new(nx, ny, 1.0 + nx as f64, 0.5).unwrap().with_origin(-0.25, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = ComplexField::from_vec(g, (0..g.num_nodes()).map(|_| Complex64::new(rng.gen(), rng.gen())).collect()).unwrap();
        let a = EdgeField::from_vecs(
            g,
            (0..g.num_xedges()).map(|_| rng.gen()).collect(),
            (0..g.num_yedges()).map(|_| rng.gen()).collect(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let meta = serde_json::json!({ "seed": seed });
        write_snapshot(&path, &psi, &a, &meta).unwrap();
        let (p2, a2, m2) = read_snapshot(&path).unwrap();
        prop_assert_eq!(m2, meta);
        prop_assert!(p2.grid().same_shape(&g));
        for (x, y) in psi.as_slice().iter().zip(p2.as_slice()) {
            prop_assert!(x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits());
        }
        for (x, y) in a.xs().iter().chain(a.ys()).zip(a2.xs().iter().chain(a2.ys())) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn normal_state_has_vanishing_estimate_lhs() {
    let s = GLState::normal(Grid::square(32, 1.0).unwrap(), 3.0, 2.0).unwrap();
    let r = residuals(&s);
    let rep = evaluate(&s, Some(&r), &EstimateNorms::default(), &Regime::default()).unwrap();
    assert!(rep.degenerate);
    for id in ["infini", "cine", "ineqimproved", "dd1", "caf1", "caf2", "first", "second", "third"] {
        let e = rep.get(id).unwrap();
        assert!(e.lhs.abs() <= 1e-6, "{id}: {}", e.lhs);
    }
}
