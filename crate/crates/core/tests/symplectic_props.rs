use nalgebra::{DMatrix, DVector};
use phasespace::flows::{
    classical_trajectory, quadratic_flow, taylor_quadratic, variational_flow, GeneralHamiltonian, NamedHamiltonian,
    QuadraticHamiltonian,
};
use phasespace::symplectic::{
    is_symplectic, matrix_exponential, random_hamiltonian_generator, random_symplectic, standard_symplectic_form,
    symplectic_eigenvalues, PhasePoint,
};
use proptest::prelude::*;

fn j(n: usize) -> DMatrix<f64> {
    standard_symplectic_form(n).unwrap().into_matrix()
}

/// Plain Taylor series with scaling and squaring; shares nothing with the
/// Padé implementation under test.
fn taylor_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.iter().map(|v| v.abs()).sum::<f64>();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a / 2f64.powi(s);
    let d = a.nrows();
    let mut term = DMatrix::<f64>::identity(d, d);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `λ_j` from the imaginary parts of the spectrum of `J M`.
fn eigen_oracle(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() / 2;
    let mut im: Vec<f64> = (j(n) * m)
        .complex_eigenvalues()
        .iter()
        .map(|c| c.im)
        .filter(|v| *v > 0.0)
        .collect();
    im.sort_by(|a, b| a.partial_cmp(b).unwrap());
    im
}

fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let g = random_hamiltonian_generator(n, seed);
    g.transpose() * &g + DMatrix::identity(2 * n, 2 * n) * 0.5
}

fn rel_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

#[test]
fn j_squares_to_minus_identity_exactly() {
    for n in 1..=4 {
        let j = j(n);
        assert_eq!(&j * &j, -DMatrix::<f64>::identity(2 * n, 2 * n));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exponential_of_hamiltonian_matrix_is_symplectic(n in 1usize..=3, seed in any::<u64>(), t in -3.0f64..3.0) {
        let m = random_hamiltonian_generator(n, seed);
        let s = matrix_exponential(&(j(n) * &m * t)).unwrap();
        prop_assert!(is_symplectic(&s, 1e-9).unwrap());
    }

    #[test]
    fn exponential_matches_taylor_oracle(n in 1usize..=3, seed in any::<u64>(), t in -4.0f64..4.0) {
        let a = j(n) * random_hamiltonian_generator(n, seed) * t;
        let got = matrix_exponential(&a).unwrap();
        prop_assert!(rel_max(&got, &taylor_exp(&a)) < 1e-10);
    }

    #[test]
    fn flow_composition(n in 1usize..=3, seed in any::<u64>(), t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let a = j(n) * random_hamiltonian_generator(n, seed);
        let lhs = matrix_exponential(&(&a * t1)).unwrap() * matrix_exponential(&(&a * t2)).unwrap();
        let rhs = matrix_exponential(&(&a * (t1 + t2))).unwrap();
        prop_assert!(rel_max(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn symplectic_eigenvalues_match_spectrum_of_jm(n in 1usize..=3, seed in any::<u64>()) {
        let m = random_spd(n, seed);
        let got = symplectic_eigenvalues(&m).unwrap();
        let want = eigen_oracle(&m);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * w);
        }
    }

    #[test]
    fn symplectic_eigenvalues_are_congruence_invariant(n in 1usize..=3, seed in any::<u64>(), s_seed in any::<u64>()) {
        let m = random_spd(n, seed);
        let s = random_symplectic(n, s_seed).unwrap();
        let moved = s.matrix().transpose() * &m * s.matrix();
        let before = symplectic_eigenvalues(&m).unwrap();
        let after = symplectic_eigenvalues(&moved).unwrap();
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn quadratic_flow_group_law(n in 1usize..=2, seed in any::<u64>(), t1 in -1.5f64..1.5, t2 in -1.5f64..1.5) {
        let m = random_hamiltonian_generator(n, seed);
        let u = DVector::from_iterator(2 * n, random_hamiltonian_generator(n, seed ^ 1).column(0).iter().copied());
        let h = QuadraticHamiltonian::new(m, u, 0.3).unwrap();
        let composed = quadratic_flow(&h, t1).compose(&quadratic_flow(&h, t2));
        let direct = quadratic_flow(&h, t1 + t2);
        prop_assert!(rel_max(composed.linear.matrix(), direct.linear.matrix()) < 1e-9);
        prop_assert!((&composed.translation - &direct.translation).amax() < 1e-9 * direct.translation.amax().max(1.0));
    }

    #[test]
    fn taylor_quadratic_reproduces_local_jet(x in -2.0f64..2.0, p in -2.0f64..2.0) {
        let h = NamedHamiltonian::Pendulum { m: 1.3, k: 0.7 };
        let zc = PhasePoint::one(x, p);
        let q = taylor_quadratic(&h, &zc, 0.0);
        let z = zc.to_vector();
        prop_assert!((q.value(&z, 0.0) - h.value(&z, 0.0)).abs() < 1e-12);
        prop_assert!((q.gradient(&z, 0.0) - h.gradient(&z, 0.0)).amax() < 1e-12);
        prop_assert!((q.hessian(&z, 0.0) - h.hessian(&z, 0.0)).amax() < 1e-12);
    }
}

#[test]
fn pendulum_energy_drift_is_fourth_order() {
    let h = NamedHamiltonian::Pendulum { m: 1.0, k: 1.0 };
    let z0 = PhasePoint::one(1.0, 0.3);
    let coarse = classical_trajectory(&h, &z0, 10.0, 0.1).unwrap().energy_drift.unwrap();
    let fine = classical_trajectory(&h, &z0, 10.0, 0.05).unwrap().energy_drift.unwrap();
    assert!(coarse / fine >= 12.0, "drift ratio {}", coarse / fine);
}

#[test]
fn variational_flow_stays_symplectic() {
    for h in [
        NamedHamiltonian::Pendulum { m: 1.0, k: 1.0 },
        NamedHamiltonian::Quartic { m: 1.0, g: 0.1 },
    ] {
        let samples = variational_flow(&h, &PhasePoint::one(0.8, -0.2), 5.0, 1e-3).unwrap();
        let worst = samples.iter().map(|s| s.linear.defect()).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{} defect {worst}", h.name());
    }
    let hh = NamedHamiltonian::HenonHeiles { lambda: 1.0 };
    let z0 = PhasePoint::new(vec![0.1, -0.1], vec![0.2, 0.1]).unwrap();
    let samples = variational_flow(&hh, &z0, 5.0, 1e-3).unwrap();
    assert!(samples.iter().all(|s| s.linear.defect() <= 1e-6));
}

#[test]
fn variational_flow_of_quadratic_is_exact_flow() {
    let h = QuadraticHamiltonian::oscillator(2.0, 0.7);
    let z0 = PhasePoint::one(0.4, 1.1);
    let last = variational_flow(&h, &z0, 3.0, 1e-3).unwrap().pop().unwrap();
    let exact = quadratic_flow(&h, 3.0);
    assert!(rel_max(last.linear.matrix(), exact.linear.matrix()) < 1e-10);
}
