use nalgebra::{DMatrix, DVector};
use polariton_lab::dispersion::perturbative_coefficients;
use polariton_lab::grid::{Grid1D, PulseSpec, Spectral};
use polariton_lab::linalg::{eig, Mat5, Vec5, C64};
use polariton_lab::model::{build_h, dark_polariton_vector, mode_matrix, ModelParams};
use polariton_lab::ms::{assemble_bipartite, morris_shore, CouplingMatrix};
use polariton_lab::propagator::{
    dark_modes, evolve_effective, evolve_full, init_on_dark_branch, max_step, mode_exponential,
    non_dark_fraction, FieldState, Representation,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coupling() -> impl Strategy<Value = CouplingMatrix> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(n_a, n_b)| {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n_a * n_b).prop_map(move |v| {
            let m = DMatrix::from_iterator(n_a, n_b, v.into_iter().map(|(a, b)| C64::new(a, b)));
            CouplingMatrix::new(m).unwrap()
        })
    })
}

fn params() -> impl Strategy<Value = ModelParams> {
    (
        0.5f64..10.0,
        (0.1f64..3.0, -3.0f64..3.0),
        (0.0f64..3.0, -3.0f64..3.0),
        (-2.0f64..2.0, -2.0f64..2.0),
        (0.0f64..2.0, 0.0f64..2.0),
    )
        .prop_map(|(g, (ap, pp), (am, pm), (dp, dm), (gp, gm))| ModelParams {
            g_sqrt_n: g,
            omega_plus: C64::from_polar(ap, pp),
            omega_minus: C64::from_polar(am, pm),
            delta_plus: dp,
            delta_minus: dm,
            gamma_plus: gp,
            gamma_minus: gm,
            c: 1.0,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ms_transform_is_unitary_and_block_diagonal(v in coupling()) {
        let d = morris_shore(&v);
        let h = assemble_bipartite(&v);
        let scale = d.pair_couplings[0].max(1e-300);
        prop_assert!(d.unitarity_residual() < 1e-12);
        prop_assert!(d.block_residual(&h) < 1e-10 * scale);
        for x in &d.dark_vectors {
            prop_assert!((&h * x).norm() < 1e-10 * scale);
        }
        prop_assert!(d.n_dark >= v.n_a().abs_diff(v.n_b()));
    }

    #[test]
    fn dark_vector_is_annihilated_at_k0(p in params()) {
        let h = build_h(&p, 0.0);
        let y = dark_polariton_vector(&p).unwrap();
        prop_assert!((h * y).norm() <= 1e-10 * h.norm());
        prop_assert!((y.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn evolution_is_linear(seed in 0u64..1000, a in (-1.0f64..1.0, -1.0f64..1.0)) {
        let p = ModelParams::symmetric(2.0, 1.0, 0.4, 0.3, 0.5);
        let grid = Grid1D::new(32, -10.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = || {
            let mut s = FieldState::zeros(grid, Representation::Position);
            for x in s.amplitudes.iter_mut() {
                *x = Vec5::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
            s
        };
        let (x, y) = (random(), random());
        let alpha = C64::new(a.0, a.1);
        let mut sum = x.clone();
        for (s, b) in sum.amplitudes.iter_mut().zip(&y.amplitudes) {
            *s = *s * alpha + b;
        }
        let dt = max_step(&p, &grid);
        let (ex, ey, es) = (
            evolve_full(&x, &p, 1.3, dt).unwrap(),
            evolve_full(&y, &p, 1.3, dt).unwrap(),
            evolve_full(&sum, &p, 1.3, dt).unwrap(),
        );
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for ((s, a), b) in es.amplitudes.iter().zip(&ex.amplitudes).zip(&ey.amplitudes) {
            err = err.max((s - (a * alpha + b)).norm());
            scale = scale.max(s.norm());
        }
        prop_assert!(err <= 1e-10 * scale);
    }
}

/// `exp(A)` by Taylor series with scaling and squaring.
fn taylor_expm(a: &Mat5) -> Mat5 {
    let norm = a.norm();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a / C64::new(2f64.powi(s), 0.0);
    let mut term = Mat5::identity();
    let mut sum = Mat5::identity();
    for n in 1..40 {
        term = term * b / C64::new(n as f64, 0.0);
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

/// `exp(A)` from the eigen-decomposition `A = V D V⁻¹`.
fn eigen_expm(a: &Mat5) -> Mat5 {
    let d = DMatrix::from_iterator(5, 5, a.iter().copied());
    let e = eig(&d).unwrap();
    let v = e.vectors.clone();
    let vinv = v.clone().try_inverse().unwrap();
    let exp_d = DMatrix::from_diagonal(&DVector::from_iterator(5, e.values.iter().map(|l| l.exp())));
    let m = v * exp_d * vinv;
    Mat5::from_iterator(m.iter().copied())
}

#[test]
fn mode_exponential_matches_two_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let p = ModelParams {
            g_sqrt_n: rng.random_range(0.0..5.0),
            omega_plus: C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
            omega_minus: C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
            delta_plus: rng.random_range(-2.0..2.0),
            delta_minus: rng.random_range(-2.0..2.0),
            gamma_plus: rng.random_range(0.0..2.0),
            gamma_minus: rng.random_range(0.0..2.0),
            c: 1.0,
        };
        let h = mode_matrix(&p, rng.random_range(-3.0..3.0));
        let t = rng.random_range(0.0..2.0);
        let u = mode_exponential(&h, t);
        let a = h * C64::new(0.0, -t);
        let scale = u.norm();
        assert!((u - taylor_expm(&a)).norm() <= 1e-8 * scale);
        assert!((u - eigen_expm(&a)).norm() <= 1e-8 * scale);
    }
}

#[test]
fn free_fields_translate_at_c() {
    // no atoms and no controls: E+ and E- move rigidly at +c and -c
    let p = ModelParams::symmetric(0.0, 0.0, 0.0, 0.0, 0.0);
    let grid = Grid1D::new(256, -32.0, 32.0).unwrap();
    let pulse = PulseSpec::gaussian(0.0, 2.0);
    let mut s = FieldState::zeros(grid, Representation::Position);
    for (j, a) in s.amplitudes.iter_mut().enumerate() {
        a[0] = pulse.value(grid.z(j));
        a[1] = pulse.value(grid.z(j));
    }
    let t = 8.0; // an integer number of grid cells
    let out = evolve_full(&s, &p, t, max_step(&p, &grid)).unwrap();
    let cells = (t / grid.dz()).round() as usize;
    let n = grid.n_points;
    for j in 0..n {
        let fwd = s.amplitudes[(j + n - cells) % n][0];
        let bwd = s.amplitudes[(j + cells) % n][1];
        assert!((out.amplitudes[j][0] - fwd).norm() < 1e-10);
        assert!((out.amplitudes[j][1] - bwd).norm() < 1e-10);
    }
}

#[test]
fn lossless_evolution_conserves_norm() {
    let p = ModelParams::symmetric(3.0, 1.2, 0.7, 0.0, 0.0);
    let grid = Grid1D::new(128, -40.0, 40.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = FieldState::zeros(grid, Representation::Position);
    for x in s.amplitudes.iter_mut() {
        *x = Vec5::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    }
    let out = evolve_full(&s, &p, 25.0, max_step(&p, &grid)).unwrap();
    assert!((out.norm() / s.norm() - 1.0).abs() < 1e-8);
}

#[test]
fn dark_initialized_state_stays_dark() {
    let p = ModelParams::symmetric(5.0, 1.0, 0.5, 0.2, 1.0);
    let grid = Grid1D::new(512, -100.0, 100.0).unwrap();
    let (s, report) = init_on_dark_branch(&p, &PulseSpec::gaussian(0.0, 8.0), &grid).unwrap();
    assert!(report.passes(), "{report:?}");
    let modes = dark_modes(&p, &grid).unwrap();
    let dt = max_step(&p, &grid);
    let mut state = s;
    for _ in 0..5 {
        state = evolve_full(&state, &p, 4.0, dt).unwrap();
        assert!(non_dark_fraction(&state, &modes) <= 0.01);
    }
}

#[test]
fn effective_solution_composes() {
    let p = ModelParams::symmetric(4.0, 1.0, 0.3, 0.5, 1.0);
    let c = perturbative_coefficients(&p).unwrap();
    let grid = Grid1D::new(256, -50.0, 50.0).unwrap();
    let psi = PulseSpec::gaussian(-5.0, 4.0).sample(&grid);
    let whole = evolve_effective(&psi, &grid, &c, 6.0);
    let halves = evolve_effective(&evolve_effective(&psi, &grid, &c, 3.0), &grid, &c, 3.0);
    let scale = whole.iter().map(|x| x.norm()).fold(0.0, f64::max);
    for (a, b) in whole.iter().zip(&halves) {
        assert!((a - b).norm() <= 1e-12 * scale);
    }
    // spectral round trip as a sanity guard on the transform pair
    let fft = Spectral::new(grid.n_points);
    let mut x = psi.clone();
    fft.forward(&mut x);
    fft.inverse(&mut x);
    for (a, b) in x.iter().zip(&psi) {
        assert!((a - b).norm() < 1e-12);
    }
}
