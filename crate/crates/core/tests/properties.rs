use hierpoly::eval::{degree_capture_check, pearson};
use hierpoly::hermite::{h_all, h_eval, hermite_tensor, hermite_tensor_apply, hermite_to_monomial, monomial_to_hermite, AdditionTable};
use hierpoly::network::{ActivationSpec, BiasDistribution, Network};
use hierpoly::polyalg::{
    hermite_basis_elem, inner_product, project_degree, project_degree_by_basis, project_leq, HermiteExpansion,
    HermiteIndex, SparsePoly,
};
use hierpoly::target::{FeatureSpec, LinkSpec, TargetSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Gauss-Hermite nodes and weights for the standard Gaussian (Golub-Welsch).
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let j = DMatrix::from_fn(n, n, |i, k| {
        if i + 1 == k || k + 1 == i {
            (i.max(k) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = j.symmetric_eigen();
    (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect()
}

/// `E[f g]` by tensor Gauss-Hermite quadrature, evaluating both polynomials pointwise.
fn quad_inner(f: &SparsePoly, g: &SparsePoly, nodes: &[(f64, f64)]) -> f64 {
    let d = f.dim();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| nodes[i].0).collect();
        let w: f64 = idx.iter().map(|&i| nodes[i].1).product();
        total += w * f.eval(&x) * g.eval(&x);
        let mut p = 0;
        while p < d {
            idx[p] += 1;
            if idx[p] < nodes.len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
        if p == d {
            return total;
        }
    }
}

fn poly_strategy(d: usize, max_deg: u32, max_terms: usize) -> impl Strategy<Value = SparsePoly> {
    prop::collection::vec((prop::collection::vec(0..=max_deg, d), -2.0f64..2.0), 1..=max_terms).prop_map(
        move |terms| {
            let terms = terms.into_iter().map(|(mut e, c)| {
                while e.iter().sum::<u32>() > max_deg {
                    let i = e.iter().position(|&x| x > 0).unwrap();
                    e[i] -= 1;
                }
                (e, c)
            });
            SparsePoly::from_terms(d, terms).unwrap()
        },
    )
}

fn index_strategy(d: usize, max_deg: u32) -> impl Strategy<Value = HermiteIndex> {
    prop::collection::vec(0..=max_deg, d).prop_map(move |mut e| {
        while e.iter().sum::<u32>() > max_deg {
            let i = e.iter().position(|&x| x > 0).unwrap();
            e[i] -= 1;
        }
        HermiteIndex::new(e)
    })
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn univariate_hermite_orthonormal_under_quadrature() {
    let nodes = gauss_hermite(40);
    for i in 0..=12 {
        for j in 0..=12 {
            let v: f64 = nodes.iter().map(|&(z, w)| w * h_eval(i, z) * h_eval(j, z)).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-9, "<h{i}, h{j}> = {v}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inner_product_matches_quadrature(f in poly_strategy(2, 5, 5), g in poly_strategy(2, 5, 5)) {
        let nodes = gauss_hermite(12);
        let exact = inner_product(&f, &g).unwrap();
        let quad = quad_inner(&f, &g, &nodes);
        prop_assert!((exact - quad).abs() <= 1e-9 * (1.0 + quad.abs()), "{exact} vs {quad}");
    }

    #[test]
    fn basis_elements_orthonormal(a in index_strategy(3, 6), b in index_strategy(3, 6)) {
        let ha = hermite_basis_elem(&a, 3);
        let hb = hermite_basis_elem(&b, 3);
        let v = inner_product(&ha, &hb).unwrap();
        let want = if a == b { 1.0 } else { 0.0 };
        prop_assert!((v - want).abs() <= 1e-9);
    }

    #[test]
    fn parseval(f in poly_strategy(3, 6, 8)) {
        let direct = inner_product(&f, &f).unwrap();
        let spectral = HermiteExpansion::of(&f).norm_sq();
        prop_assert!((direct - spectral).abs() <= 1e-9 * direct.max(1e-300));
    }

    #[test]
    fn projections_are_idempotent_and_sum_to_identity(f in poly_strategy(3, 5, 6), k in 0u32..=5) {
        let pk = project_degree(&f, k);
        prop_assert!(project_degree(&pk, k).max_coeff_diff(&pk) <= 1e-10);
        prop_assert!(project_degree_by_basis(&f, k).max_coeff_diff(&pk) <= 1e-9);
        let mut total = SparsePoly::zero(3);
        for j in 0..=f.degree() {
            total = total.add(&project_degree(&f, j)).unwrap();
        }
        prop_assert!(total.max_coeff_diff(&f) <= 1e-9);
        let rest = f.sub(&project_leq(&f, k)).unwrap();
        prop_assert!(inner_product(&rest, &project_leq(&f, k)).unwrap().abs() <= 1e-8);
    }

    #[test]
    fn basis_round_trip(c in prop::collection::vec(-3.0f64..3.0, 1..10)) {
        let back = hermite_to_monomial(&monomial_to_hermite(&c));
        for (a, b) in c.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn expansion_round_trip(f in poly_strategy(2, 6, 6)) {
        let back = HermiteExpansion::of(&f).to_poly();
        prop_assert!(back.max_coeff_diff(&f) <= 1e-9);
    }

    #[test]
    fn hypercontractivity_1d(c in prop::collection::vec(-2.0f64..2.0, 1..=4)) {
        let f = SparsePoly::from_terms(1, c.iter().enumerate().map(|(i, &v)| (vec![i as u32], v))).unwrap();
        let l = f.degree() as i32;
        let e2 = f.pow(2).mean();
        let e4 = f.pow(4).mean();
        prop_assert!(e4.sqrt() <= 3f64.powi(l) * e2 * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn product_lemma(k1 in 0u32..=3, k2 in 0u32..=3) {
        let a = hermite_basis_elem(&HermiteIndex::new(vec![k1, 0]), 2);
        let b = hermite_basis_elem(&HermiteIndex::new(vec![0, k2]), 2);
        let prod = a.mul(&b).unwrap();
        prop_assert!(project_degree(&prod, k1 + k2).max_coeff_diff(&prod) <= 1e-10);
        for j in 0..k1 + k2 {
            prop_assert!(project_degree(&prod, j).max_coeff_diff(&SparsePoly::zero(2)) <= 1e-10);
        }
    }

    #[test]
    fn addition_formula(i in 0usize..=6, z in -3.0f64..3.0, s in -3.0f64..3.0) {
        let lhs = h_eval(i, (z + s) / std::f64::consts::SQRT_2);
        let rhs = AdditionTable::new(i).eval(z, s);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn tensor_contraction(d in 2usize..=4, k in 1usize..=3, x in prop::collection::vec(-2.5f64..2.5, 4), u in prop::collection::vec(-1.0f64..1.0, 4)) {
        let x = &x[..d];
        let u = unit(u[..d].to_vec());
        let z: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
        let want = h_eval(k, z);
        let fast = hermite_tensor_apply(k, x, &u).unwrap();
        prop_assert!((fast - want).abs() <= 1e-8 * (1.0 + want.abs()));
        let dense = hermite_tensor(k, x).unwrap();
        let mut contracted = 0.0;
        for (flat, t) in dense.iter().enumerate() {
            let mut r = flat;
            let mut w = 1.0;
            for _ in 0..k {
                w *= u[r % d];
                r /= d;
            }
            contracted += t * w;
        }
        prop_assert!((contracted - want).abs() <= 1e-8 * (1.0 + want.abs()));
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), d in 1usize..5, m1 in 1usize..6, m2 in 1usize..6) {
        let mut net = Network::init(d, m1, m2, seed, ActivationSpec::power(2), BiasDistribution::default()).unwrap();
        net.u.iter_mut().enumerate().for_each(|(i, u)| *u = (i as f64 + 0.1).sin() / 3.0);
        net.c.iter_mut().enumerate().for_each(|(i, c)| *c = (i as f64 * 1.7).cos() * 1e-7);
        let back = Network::from_checkpoint(&net.to_checkpoint()).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn bottleneck_is_linear_in_u(seed in any::<u64>(), s in -3.0f64..3.0, x in prop::collection::vec(-2.0f64..2.0, 3)) {
        let mut net = Network::init(3, 5, 2, seed, ActivationSpec::power(2), BiasDistribution::default()).unwrap();
        let u1: Vec<f64> = (0..5).map(|i| (i as f64 + seed as f64 % 7.0).sin()).collect();
        let u2: Vec<f64> = (0..5).map(|i| (i as f64 * 0.3).cos()).collect();
        net.u = u1.iter().zip(&u2).map(|(a, b)| a + s * b).collect();
        let combined = net.forward_mid(&x);
        net.u = u1;
        let g1 = net.forward_mid(&x);
        net.u = u2;
        let g2 = net.forward_mid(&x);
        prop_assert!((combined - g1 - s * g2).abs() <= 1e-10 * (1.0 + combined.abs()));
    }

    #[test]
    fn correlation_is_affine_invariant(
        a in prop::collection::vec(-5.0f64..5.0, 3..40),
        scale in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        shift in -5.0f64..5.0,
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * x + (i as f64).sin()).collect();
        let base = pearson(&a, &b);
        prop_assume!(base.defined);
        let moved: Vec<f64> = b.iter().map(|y| scale * y + shift).collect();
        let c = pearson(&a, &moved);
        prop_assert!((c.value - scale.signum() * base.value).abs() <= 1e-9);
    }

    #[test]
    fn degree_capture_split(seed in any::<u64>(), m1 in 1usize..=4) {
        let f = FeatureSpec::ortho_decomp(3, 2, &[1.0, 1.0], Some(seed % 1000)).unwrap();
        let t = TargetSpec::new(f, LinkSpec::new(&[0.0, 1.0, 0.3]).unwrap()).unwrap();
        let mut net = Network::init(3, m1, 2, seed, ActivationSpec::power(2), BiasDistribution::default()).unwrap();
        net.u = (0..m1).map(|i| ((seed % 97) as f64 + i as f64).sin()).collect();
        let r = degree_capture_check(&net, &t).unwrap();
        prop_assert!(r.rel_err <= 1e-8, "{r:?}");
    }

    #[test]
    fn normalized_hermite_values_match_evaluator(z in -4.0f64..4.0) {
        let all = h_all(7, z);
        for (k, v) in all.iter().enumerate() {
            prop_assert!((h_eval(k, z) - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}
