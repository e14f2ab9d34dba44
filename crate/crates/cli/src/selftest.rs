//! Identity checks for the Hermite and polynomial engines.

use hierpoly::hermite::{h_eval, hermite_tensor_apply, hermite_to_monomial, monomial_to_hermite, AdditionTable};
use hierpoly::polyalg::{
    gaussian_moment_1d, hermite_basis_elem, inner_product, multi_indices, project_degree, HermiteExpansion,
    HermiteIndex, SparsePoly,
};
use hierpoly::rng::{rng_from_seed, Rng};
use hierpoly::Result;
use rand::Rng as _;

pub struct Check {
    pub name: &'static str,
    pub run: fn(&Hooks) -> Result<f64>,
    pub tol: f64,
}

/// Test hooks for fault injection.
#[derive(Default)]
pub struct Hooks {
    /// Perturbs one coefficient of a Hermite basis polynomial.
    pub flip_hermite: bool,
}

pub const CHECKS: &[Check] = &[
    Check { name: "orthonormality", run: orthonormality, tol: 1e-9 },
    Check { name: "parseval", run: parseval, tol: 1e-9 },
    Check { name: "addition", run: addition, tol: 1e-9 },
    Check { name: "tensor", run: tensor, tol: 1e-8 },
    Check { name: "hypercontractivity", run: hypercontractivity, tol: 0.0 },
    Check { name: "product", run: product, tol: 1e-10 },
    Check { name: "projection", run: projection, tol: 1e-9 },
    Check { name: "basis", run: basis, tol: 1e-9 },
    Check { name: "wick", run: wick, tol: 0.0 },
];

fn random_poly(rng: &mut Rng, d: usize, max_deg: u32, terms: usize) -> SparsePoly {
    let t = (0..terms).map(|_| {
        let mut e = vec![0u32; d];
        for _ in 0..rng.random_range(0..=max_deg) {
            e[rng.random_range(0..d)] += 1;
        }
        (e, rng.random_range(-2.0..2.0))
    });
    SparsePoly::from_terms(d, t).expect("valid terms")
}

fn orthonormality(h: &Hooks) -> Result<f64> {
    let mut worst = 0.0f64;
    for d in 1..=3 {
        let mut basis: Vec<SparsePoly> = (0..=8)
            .flat_map(|k| multi_indices(d, k))
            .map(|a| hermite_basis_elem(&a, d))
            .collect();
        if h.flip_hermite {
            let mut e = vec![0u32; d];
            e[0] = 2;
            let he2 = hermite_basis_elem(&HermiteIndex::new(e.clone()), d);
            let c = he2.coeff(&e);
            let bump = SparsePoly::from_terms(d, [(e, -2.0 * c)])?;
            let pos = basis.iter().position(|b| *b == he2).expect("He_2 in basis");
            basis[pos] = he2.add(&bump)?;
        }
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate().skip(i) {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((inner_product(a, b)? - want).abs());
            }
        }
    }
    Ok(worst)
}

fn parseval(_: &Hooks) -> Result<f64> {
    let mut rng = rng_from_seed(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let d = rng.random_range(1..=4);
        let f = random_poly(&mut rng, d, 6, 8);
        let direct = inner_product(&f, &f)?;
        if direct > 0.0 {
            worst = worst.max((direct - HermiteExpansion::of(&f).norm_sq()).abs() / direct);
        }
    }
    Ok(worst)
}

fn addition(_: &Hooks) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..=6 {
        let t = AdditionTable::new(i);
        for a in 0..=20 {
            for b in 0..=20 {
                let (z, s) = (-3.0 + 0.3 * a as f64, -3.0 + 0.3 * b as f64);
                worst = worst.max((h_eval(i, (z + s) / std::f64::consts::SQRT_2) - t.eval(z, s)).abs());
            }
        }
    }
    Ok(worst)
}

fn tensor(_: &Hooks) -> Result<f64> {
    let mut rng = rng_from_seed(2);
    let mut worst = 0.0f64;
    for d in 2..=4 {
        for k in 1..=3 {
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.5..2.5)).collect();
                let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let u: Vec<f64> = u.iter().map(|v| v / n).collect();
                let z: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
                worst = worst.max((hermite_tensor_apply(k, &x, &u)? - h_eval(k, z)).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest `(E f^4)^{1/2} - 3^l E f^2` over random univariate `f`; must be <= 0.
fn hypercontractivity(_: &Hooks) -> Result<f64> {
    let mut rng = rng_from_seed(3);
    let mut worst = f64::NEG_INFINITY;
    for l in 0..=3u32 {
        for _ in 0..100 {
            let mut c: Vec<(Vec<u32>, f64)> = (0..=l).map(|i| (vec![i], rng.random_range(-2.0..2.0))).collect();
            c[l as usize].1 += 1.0;
            let f = SparsePoly::from_terms(1, c)?;
            let e2 = f.pow(2).mean();
            let gap = f.pow(4).mean().sqrt() - 3f64.powi(f.degree() as i32) * e2 * (1.0 + 1e-12);
            worst = worst.max(gap);
        }
    }
    Ok(worst.max(0.0))
}

fn product(_: &Hooks) -> Result<f64> {
    let mut worst = 0.0f64;
    for k1 in 0..=3u32 {
        for k2 in 0..=3u32 {
            let a = hermite_basis_elem(&HermiteIndex::new(vec![k1, 0]), 2);
            let b = hermite_basis_elem(&HermiteIndex::new(vec![0, k2]), 2);
            let p = a.mul(&b)?;
            worst = worst.max(project_degree(&p, k1 + k2).max_coeff_diff(&p));
            for j in 0..k1 + k2 {
                worst = worst.max(project_degree(&p, j).max_coeff_diff(&SparsePoly::zero(2)));
            }
        }
    }
    Ok(worst)
}

fn projection(_: &Hooks) -> Result<f64> {
    let mut rng = rng_from_seed(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let f = random_poly(&mut rng, 3, 5, 6);
        let mut total = SparsePoly::zero(3);
        for k in 0..=f.degree() {
            let pk = project_degree(&f, k);
            worst = worst.max(project_degree(&pk, k).max_coeff_diff(&pk));
            total = total.add(&pk)?;
        }
        worst = worst.max(total.max_coeff_diff(&f));
    }
    Ok(worst)
}

fn basis(_: &Hooks) -> Result<f64> {
    let mut rng = rng_from_seed(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c: Vec<f64> = (0..rng.random_range(1..12)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let back = hermite_to_monomial(&monomial_to_hermite(&c));
        for (a, b) in c.iter().zip(&back) {
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
    }
    Ok(worst)
}

/// Mismatches between `E[z^n]` and `(n-1)!!` for `n <= 20`.
fn wick(_: &Hooks) -> Result<f64> {
    let mut bad = 0.0;
    for n in 0..=20u32 {
        let want = if n % 2 == 1 {
            0.0
        } else {
            (1..n).step_by(2).map(f64::from).product::<f64>()
        };
        if gaussian_moment_1d(n) != want {
            bad += 1.0;
        }
    }
    Ok(bad)
}
