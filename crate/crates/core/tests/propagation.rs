use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use phasespace::flows::{quadratic_flow, NamedHamiltonian, QuadraticHamiltonian};
use phasespace::grid::GridWavefunction;
use phasespace::metaplectic::{
    ehrenfest_means, gaussian_propagate, heisenberg_translate, kernel_propagate, nearby_orbit_propagate,
    GaussianWavepacket, KernelSpec,
};
use phasespace::reference::{l2_distance, phase_aligned_distance, split_step_evolve, PotentialSpec, SplitStepper};
use phasespace::symplectic::{random_hamiltonian_generator, PhasePoint};
use proptest::prelude::*;

fn standard_gaussian() -> GaussianWavepacket {
    GaussianWavepacket::coherent(&PhasePoint::one(0.0, 0.0), 1.0, 1.0).unwrap()
}

/// Free evolution of a centered Gaussian of width σ, written out by hand.
fn free_closed_form(sigma: f64, t: f64) -> GridWavefunction {
    let s = Complex64::new(1.0, t / (2.0 * sigma * sigma));
    let pref = (2.0 * PI * sigma * sigma).powf(-0.25) / s.sqrt();
    GridWavefunction::from_fn(-20.0, 20.0, 2048, 1.0, |x| pref * (-(x * x) / (4.0 * sigma * sigma * s)).exp()).unwrap()
}

fn sample(wp: &GaussianWavepacket) -> GridWavefunction {
    wp.sample_on_grid(-20.0, 20.0, 2048).unwrap()
}

#[test]
fn gaussian_and_kernel_match_free_closed_form() {
    let g0 = sample(&standard_gaussian());
    for t in [0.5, 1.0, 3.0] {
        let exact = free_closed_form(1.0, t);
        let k = kernel_propagate(&g0, &KernelSpec::free(1.0, t, 1.0)).unwrap();
        let g = gaussian_propagate(&standard_gaussian(), &QuadraticHamiltonian::free(1.0), t).unwrap();
        assert!(l2_distance(&k, &exact).unwrap() < 1e-6);
        assert!(l2_distance(&sample(&g), &exact).unwrap() < 1e-6);
    }
}

#[test]
fn oscillator_ground_state_picks_up_half_frequency_phase() {
    let ground = GaussianWavepacket::coherent(&PhasePoint::one(0.0, 0.0), (0.5f64).sqrt(), 1.0).unwrap();
    let psi0 = sample(&ground);
    for t in [0.7, 2.0, 4.5] {
        let out = kernel_propagate(&psi0, &KernelSpec::oscillator(1.0, 1.0, t, 1.0)).unwrap();
        let (d, theta) = phase_aligned_distance(&out, &psi0).unwrap();
        let wrapped = (theta + t / 2.0 + PI).rem_euclid(2.0 * PI) - PI;
        assert!(d < 1e-6 && wrapped.abs() < 1e-4, "t={t} d={d} theta={theta}");
    }
}

#[test]
fn quadratic_propagators_agree_with_split_step() {
    let wp = GaussianWavepacket::coherent(&PhasePoint::one(1.0, 0.5), 0.8, 1.0).unwrap();
    let g0 = sample(&wp);
    let cases = [
        (KernelSpec::free(1.0, 1.0, 1.0), PotentialSpec::Zero),
        (KernelSpec::oscillator(1.0, 1.0, 1.0, 1.0), PotentialSpec::Harmonic { m: 1.0, omega: 1.0 }),
    ];
    for (spec, pot) in cases {
        let k = kernel_propagate(&g0, &spec).unwrap();
        let g = sample(&gaussian_propagate(&wp, &spec.hamiltonian(), spec.t).unwrap());
        let s = split_step_evolve(&g0, &pot, 1.0, 1e-3, 1000).unwrap();
        assert!(phase_aligned_distance(&k, &s).unwrap().0 < 1e-4);
        assert!(phase_aligned_distance(&g, &s).unwrap().0 < 1e-4);
        assert!(l2_distance(&k, &g).unwrap() < 1e-8);
    }
}

fn random_quadratic(n: usize, seed: u64) -> QuadraticHamiltonian {
    let m = random_hamiltonian_generator(n, seed);
    let u = random_hamiltonian_generator(n, seed.wrapping_add(1)).column(0).into_owned();
    QuadraticHamiltonian::new(m, u, 0.2).unwrap()
}

fn random_packet(n: usize, seed: u64) -> GaussianWavepacket {
    let g = random_hamiltonian_generator(n, seed.wrapping_add(2));
    let x: Vec<f64> = (0..n).map(|k| g[(k, 0)]).collect();
    let p: Vec<f64> = (0..n).map(|k| g[(k + n, 1)]).collect();
    let re = g.view((0, 0), (n, n)).into_owned();
    let im = DMatrix::identity(n, n) + g.view((n, n), (n, n)).transpose() * g.view((n, n), (n, n)) * 0.3;
    let width = DMatrix::from_fn(n, n, |r, c| Complex64::new(0.5 * (re[(r, c)] + re[(c, r)]), im[(r, c)]));
    GaussianWavepacket::new(x, p, width, 0.1, 0.7).unwrap()
}

fn packet_gap(a: &GaussianWavepacket, b: &GaussianWavepacket) -> f64 {
    let dc = (a.center_x() - b.center_x()).amax().max((a.center_p() - b.center_p()).amax());
    let dw = (a.width() - b.width()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    dc.max(dw).max((a.phase() - b.phase()).abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn metaplectic_group_law(n in 1usize..=2, seed in any::<u64>(), t1 in -1.0f64..1.0, t2 in -1.0f64..1.0) {
        let h = random_quadratic(n, seed);
        let wp = random_packet(n, seed);
        let two_steps = gaussian_propagate(&gaussian_propagate(&wp, &h, t1).unwrap(), &h, t2).unwrap();
        let one_step = gaussian_propagate(&wp, &h, t1 + t2).unwrap();
        prop_assert!(packet_gap(&two_steps, &one_step) < 1e-9, "gap {}", packet_gap(&two_steps, &one_step));
    }

    #[test]
    fn gaussian_center_follows_classical_flow(n in 1usize..=2, seed in any::<u64>(), t in -1.5f64..1.5) {
        let h = random_quadratic(n, seed);
        let wp = random_packet(n, seed);
        let moved = gaussian_propagate(&wp, &h, t).unwrap();
        let want = quadratic_flow(&h, t).apply(&wp.center().to_vector());
        prop_assert!((moved.center().to_vector() - want).amax() < 1e-10);
    }

    #[test]
    fn heisenberg_composition_law(a0 in -2.0f64..2.0, b0 in -2.0f64..2.0, a1 in -2.0f64..2.0, b1 in -2.0f64..2.0) {
        let hbar = 0.7;
        let wp = random_packet(1, 5);
        let twice = heisenberg_translate(&heisenberg_translate(&wp, &[a1], &[b1], hbar).unwrap(), &[a0], &[b0], hbar).unwrap();
        let once = heisenberg_translate(&wp, &[a0 + a1], &[b0 + b1], hbar).unwrap();
        // T(z0) T(z1) = exp[(i/2ħ)(p0 x1 - x0 p1)] T(z0 + z1)
        let phase_gap = twice.phase() - once.phase() - 0.5 * (b0 * a1 - a0 * b1);
        prop_assert!(phase_gap.abs() < 1e-12);
        prop_assert!((twice.center().to_vector() - once.center().to_vector()).amax() < 1e-12);
    }
}

#[test]
fn grid_translation_agrees_with_packet_translation() {
    let wp = GaussianWavepacket::coherent(&PhasePoint::one(-1.0, 0.2), 0.9, 1.0).unwrap();
    let dx = 40.0 / 2048.0;
    let (a, b) = (64.0 * dx, 0.75);
    let grid = heisenberg_translate(&sample(&wp), &[a], &[b], 1.0).unwrap();
    let packet = sample(&heisenberg_translate(&wp, &[a], &[b], 1.0).unwrap());
    assert!(l2_distance(&grid, &packet).unwrap() < 1e-10);
    let m = ehrenfest_means(&grid).unwrap();
    assert!((m.mean_x - (-1.0 + a)).abs() < 1e-8 && (m.mean_p - (0.2 + b)).abs() < 1e-8);
}

#[test]
fn propagation_conserves_norm() {
    let wp = GaussianWavepacket::coherent(&PhasePoint::one(2.0, -1.0), 0.6, 1.0).unwrap();
    let g0 = sample(&wp);
    for spec in [KernelSpec::free(1.0, 1.3, 1.0), KernelSpec::oscillator(1.0, 1.0, 2.2, 1.0)] {
        let out = kernel_propagate(&g0, &spec).unwrap();
        assert!((out.norm2() - g0.norm2()).abs() < 1e-6);
        let packet = gaussian_propagate(&wp, &spec.hamiltonian(), spec.t).unwrap();
        assert!((sample(&packet).norm2() - 1.0).abs() < 1e-6);
    }
    let out = split_step_evolve(&g0, &PotentialSpec::Pendulum { k: 1.0 }, 1.0, 1e-3, 3000).unwrap();
    assert!((out.norm2() - g0.norm2()).abs() < 1e-6);
}

#[test]
fn split_step_norm_drift_over_many_steps() {
    let g0 = GaussianWavepacket::coherent(&PhasePoint::one(0.5, 0.0), 1.0, 1.0)
        .unwrap()
        .sample_on_grid(-16.0, 16.0, 256)
        .unwrap();
    let mut stepper = SplitStepper::new(&g0, &PotentialSpec::Quartic { g: 0.1 }, 1.0, 1e-3).unwrap();
    stepper.advance(100_000);
    assert!((stepper.current().norm2() - g0.norm2()).abs() <= 1e-9);
}

#[test]
fn split_step_is_second_order() {
    let g0 = GaussianWavepacket::coherent(&PhasePoint::one(1.0, 0.0), 0.7, 1.0)
        .unwrap()
        .sample_on_grid(-10.0, 10.0, 512)
        .unwrap();
    let pot = PotentialSpec::Quartic { g: 0.1 };
    let run = |dt: f64| split_step_evolve(&g0, &pot, 1.0, dt, (1.0 / dt).round() as usize).unwrap();
    let (a, b, c) = (run(0.02), run(0.01), run(0.005));
    let ratio = l2_distance(&a, &b).unwrap() / l2_distance(&b, &c).unwrap();
    assert!(ratio >= 3.5, "Richardson ratio {ratio}");
}

#[test]
fn harmonic_revival() {
    let wp = GaussianWavepacket::coherent(&PhasePoint::one(1.5, 0.0), 0.8, 1.0).unwrap();
    let g0 = sample(&wp);
    let steps = (2.0 * PI / 1e-4).round() as usize;
    let dt = 2.0 * PI / steps as f64;
    let out = split_step_evolve(&g0, &PotentialSpec::Harmonic { m: 1.0, omega: 1.0 }, 1.0, dt, steps).unwrap();
    assert!(phase_aligned_distance(&out, &g0).unwrap().0 <= 1e-6);
}

#[test]
fn nearby_orbit_error_grows_with_horizon() {
    let hbar = 0.05;
    let h = NamedHamiltonian::Quartic { m: 1.0, g: 0.1 };
    let wp = GaussianWavepacket::coherent(&PhasePoint::one(1.0, 0.0), (hbar / 2.0f64).sqrt(), hbar).unwrap();
    let g0 = wp.sample_on_grid(-4.0, 4.0, 2048).unwrap();
    let pot = PotentialSpec::Quartic { g: 0.1 };
    let mut stepper = SplitStepper::new(&g0, &pot, 1.0, 1e-4).unwrap();
    let mut errors = Vec::new();
    for k in 1..=8 {
        let t = 0.25 * k as f64;
        stepper.advance(2500);
        let approx = nearby_orbit_propagate(&h, &wp, t, 1e-3).unwrap().sample_on_grid(-4.0, 4.0, 2048).unwrap();
        errors.push(phase_aligned_distance(&approx, &stepper.current()).unwrap().0);
    }
    assert!(errors.windows(2).all(|w| w[1] > w[0]), "{errors:?}");
}

#[test]
fn quadratic_means_follow_classical_orbit() {
    let wp = GaussianWavepacket::coherent(&PhasePoint::one(1.0, 0.0), 1.0, 1.0).unwrap();
    let g0 = sample(&wp);
    let out = kernel_propagate(&g0, &KernelSpec::oscillator(1.0, 1.0, PI / 2.0, 1.0)).unwrap();
    let m = ehrenfest_means(&out).unwrap();
    assert!(m.mean_x.abs() < 1e-8 && (m.mean_p + 1.0).abs() < 1e-8);
    let h = QuadraticHamiltonian::oscillator(1.0, 1.0);
    let c = quadratic_flow(&h, PI / 2.0).apply(&DVector::from_vec(vec![1.0, 0.0]));
    assert!((c[0] - m.mean_x).abs() < 1e-8 && (c[1] - m.mean_p).abs() < 1e-8);
}
