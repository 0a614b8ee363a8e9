mod common;

use common::*;
use mcflow::gen::{random_pd_block, rng};
use mcflow::kvec::*;
use proptest::prelude::*;
use rand::Rng;

fn flow1(k: usize, block: &[f64]) -> MultiFlow {
    MultiFlow::from_vec(k, block.to_vec()).unwrap()
}

#[test]
fn unit_flow_has_unit_energy() {
    let p = EnergyMatrices::scaled_identity(2, &[1.0]).unwrap();
    assert_eq!(energy(&p, &flow1(2, &[1.0, 0.0])).unwrap(), 1.0);
    assert_eq!(energy(&p, &MultiFlow::zeros(1, 2)).unwrap(), 0.0);
}

#[test]
fn split_flow_saturation_versus_congestion() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let p = EnergyMatrices::scaled_identity(2, &[1.0]).unwrap();
    let f = flow1(2, &[h, h]);
    assert!((saturation(&p, 0, &f).unwrap() - 1.0).abs() < 1e-15);
    assert!((congestion_l1(&f, 0, 1.0) - 2f64.sqrt()).abs() < 1e-15);

    let mut avg = f.clone();
    avg.add_assign(&flow1(2, &[h, -h]));
    avg.scale(0.5);
    assert!((congestion_l1(&avg, 0, 1.0) - h).abs() < 1e-15);
    assert_eq!(congestion_l1(&MultiFlow::zeros(1, 2), 0, 1.0), 0.0);
}

#[test]
fn scaled_block_saturation() {
    let p = EnergyMatrices::scaled_identity(2, &[2.0]).unwrap();
    assert!((saturation(&p, 0, &flow1(2, &[1.0, 0.0])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn diagonal_energy_matches_loop() {
    let mut r = rng(3);
    let (m, k) = (7, 3);
    let diags: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| r.gen_range(0.1..5.0)).collect()).collect();
    let p = EnergyMatrices::new(k, diags.iter().map(|d| KMatrix::diag(d)).collect()).unwrap();
    let f = MultiFlow::from_vec(k, random_vec(&mut r, m * k)).unwrap();
    let mut want = 0.0;
    for e in 0..m {
        for i in 0..k {
            want += diags[e][i] * f.edge(e)[i] * f.edge(e)[i];
        }
    }
    assert!((energy(&p, &f).unwrap() - want).abs() < 1e-12);
}

#[test]
fn quadratic_form_matches_dense() {
    let mut r = rng(4);
    for _ in 0..20 {
        let b = random_pd_block(&mut r, 3, 10.0);
        let x = random_vec(&mut r, 3);
        let dense = nalgebra::Matrix3::from_fn(|i, j| b.get(i, j));
        let v = nalgebra::Vector3::from_column_slice(&x);
        assert!((b.quad_form(&x) - v.dot(&(dense * v))).abs() < 1e-12);
    }
}

#[test]
fn eigen_examples() {
    let id = sym_eig_k(&KMatrix::identity(3)).unwrap();
    assert!(id.values.iter().all(|&l| (l - 1.0).abs() < 1e-15));

    let e = sym_eig_k(&KMatrix::diag(&[3.0, 1.0])).unwrap();
    assert!((e.values[0] - 1.0).abs() < 1e-15 && (e.values[1] - 3.0).abs() < 1e-15);
    // eigenvector for 1 is ±e_2
    let v0 = [e.vectors.get(0, 0), e.vectors.get(1, 0)];
    assert!(v0[0].abs() < 1e-15 && (v0[1].abs() - 1.0).abs() < 1e-15);
}

#[test]
fn exponential_examples() {
    let z = matrix_exp_sym(&KMatrix::zeros(2)).unwrap();
    assert_eq!(z.data(), KMatrix::identity(2).data());
    let d = matrix_exp_sym(&KMatrix::diag(&[-1.0, -2.0])).unwrap();
    assert!((d.get(0, 0) - (-1f64).exp()).abs() < 1e-15);
    assert!((d.get(1, 1) - (-2f64).exp()).abs() < 1e-15);
    assert!(d.get(0, 1).abs() < 1e-15);
}

fn taylor_exp(a: &KMatrix, terms: usize) -> KMatrix {
    let mut sum = KMatrix::identity(a.k());
    let mut term = KMatrix::identity(a.k());
    for n in 1..terms {
        term = term.matmul(a).scaled(1.0 / n as f64);
        sum.add_scaled(&term, 1.0);
    }
    sum
}

fn random_sym(r: &mut rand_chacha::ChaCha8Rng, k: usize, scale: f64) -> KMatrix {
    let mut a = KMatrix::zeros(k);
    for i in 0..k {
        for j in i..k {
            let v = r.gen_range(-scale..scale);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

#[test]
fn exponential_matches_taylor_series() {
    let mut r = rng(5);
    for _ in 0..50 {
        let a = random_sym(&mut r, 3, 1.0);
        let got = matrix_exp_sym(&a).unwrap();
        let want = taylor_exp(&a, 30);
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn condition_examples() {
    let p = EnergyMatrices::scaled_identity(3, &[1.0, 2.0]).unwrap();
    assert!((block_condition_bound(&p) - 1.0).abs() < 1e-15);
    let q = EnergyMatrices::new(2, vec![KMatrix::diag(&[1.0, 4.0])]).unwrap();
    assert!((block_condition_bound(&q) - 4.0).abs() < 1e-12);
}

#[test]
fn rejects_bad_blocks() {
    let asym = KMatrix::from_row_major(2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
    assert!(EnergyMatrices::new(2, vec![asym]).is_err());
    assert!(EnergyMatrices::new(2, vec![KMatrix::diag(&[1.0, -1.0])]).is_err());
}

proptest! {
    #[test]
    fn reconstruction(seed in 0u64..10_000, k in 1usize..7) {
        let mut r = rng(seed);
        let a = random_sym(&mut r, k, 3.0);
        let e = sym_eig_k(&a).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let back = e.reconstruct();
        let scale = a.max_abs().max(1e-300);
        for (x, y) in back.data().iter().zip(a.data()) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn energy_is_sum_of_squared_saturations(seed in 0u64..10_000, m in 1usize..10, k in 1usize..5) {
        let mut r = rng(seed);
        let p = mcflow::gen::random_energy(&mut r, m, k, 20.0).unwrap();
        let f = MultiFlow::from_vec(k, random_vec(&mut r, m * k)).unwrap();
        let total: f64 = saturations(&p, &f).unwrap().iter().map(|s| s * s).sum();
        prop_assert!((energy(&p, &f).unwrap() - total).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn saturation_is_a_norm(seed in 0u64..10_000, k in 1usize..5) {
        let mut r = rng(seed);
        let p = mcflow::gen::random_energy(&mut r, 1, k, 20.0).unwrap();
        let a = flow1(k, &random_vec(&mut r, k));
        let b = flow1(k, &random_vec(&mut r, k));
        let mut sum = a.clone();
        sum.add_assign(&b);
        let s = |f: &MultiFlow| saturation(&p, 0, f).unwrap();
        prop_assert!(s(&sum) <= s(&a) + s(&b) + 1e-12);
        prop_assert!((s(&a.scaled(-2.5)) - 2.5 * s(&a)).abs() < 1e-12);
    }

    #[test]
    fn exponential_of_commuting_sum(seed in 0u64..10_000, k in 1usize..5) {
        // A and 2A - I commute, so exp(A) exp(2A - I) = exp(3A - I)
        let mut r = rng(seed);
        let a = random_sym(&mut r, k, 0.5);
        let mut b = a.scaled(2.0);
        b.add_scaled(&KMatrix::identity(k), -1.0);
        let mut c = a.scaled(3.0);
        c.add_scaled(&KMatrix::identity(k), -1.0);
        let lhs = matrix_exp_sym(&a).unwrap().matmul(&matrix_exp_sym(&b).unwrap());
        let rhs = matrix_exp_sym(&c).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((x - y).abs() < 1e-10 * y.abs().max(1.0));
        }
    }

    #[test]
    fn identity_saturation_and_congestion(seed in 0u64..10_000, k in 1usize..8) {
        // with P = I/u², ‖f‖₂/u ≤ ‖f‖₁/u ≤ √k ‖f‖₂/u
        let mut r = rng(seed);
        let u: f64 = r.gen_range(0.5..4.0);
        let p = EnergyMatrices::scaled_identity(k, &[1.0 / (u * u)]).unwrap();
        let f = flow1(k, &random_vec(&mut r, k));
        let sat = saturation(&p, 0, &f).unwrap();
        let cong = congestion_l1(&f, 0, u);
        prop_assert!(sat <= cong + 1e-12);
        prop_assert!(cong <= (k as f64).sqrt() * sat + 1e-12);
    }
}
