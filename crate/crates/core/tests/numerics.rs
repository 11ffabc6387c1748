use fracdyn::field::FieldSpec;
use fracdyn::fraccalc::{caputo_derivative_all, rl_integral, SampledFunction};
use fracdyn::mesh::Mesh;
use fracdyn::mlf::{ml_matrix_real, ml_real};
use fracdyn::solver::{residual_check, solve_ivp, solve_linear, CaputoIvp, SolverConfig, StartCorrection};
use fracdyn::special::gamma;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn diagonal_matrix_function_matches_scalar() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-0.5, -2.0, 1.5]));
    let e = ml_matrix_real(0.7, 1.0, &a, 1e-12).unwrap();
    for i in 0..3 {
        let s = ml_real(0.7, 1.0, a[(i, i)], 1e-14).unwrap();
        assert!((e[(i, i)] - s).abs() < 1e-11 * s.abs().max(1.0));
    }
}

#[test]
fn solver_agrees_with_matrix_solution() {
    let alpha = 0.6;
    let f = FieldSpec::new("linear_diag").param("a1", -1.0).param("a2", -3.0).build().unwrap();
    let p = CaputoIvp::new(alpha, f, vec![1.0, -0.5], 2.0).unwrap();
    let cfg = SolverConfig::uniform(2000).with_start_correction(StartCorrection::PowerSeries);
    let tr = solve_ivp(&p, &cfg).unwrap();
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -3.0]));
    let exact = solve_linear(alpha, &a, &[1.0, -0.5], tr.samples.mesh()).unwrap();
    for j in 0..tr.len() {
        for i in 0..2 {
            assert!((tr.state(j)[i] - exact.state(j)[i]).abs() < 1e-5);
        }
    }
    assert!(residual_check(&tr, &p).unwrap().max < 1e-5);
}

#[test]
fn caputo_derivative_inverts_integral_of_smooth_data() {
    let alpha = 0.4;
    let mesh = Mesh::uniform(1.0, 1000).unwrap();
    let f = SampledFunction::from_fn(mesh, |t| t);
    let i = rl_integral(&f, alpha).unwrap();
    let exact = |t: f64| t.powf(1.0 + alpha) / gamma(2.0 + alpha);
    for (j, &t) in i.times().iter().enumerate() {
        assert!((i.state(j)[0] - exact(t)).abs() < 1e-13);
    }
    let d = caputo_derivative_all(&f, alpha).unwrap();
    let exact = |t: f64| t.powf(1.0 - alpha) / gamma(2.0 - alpha);
    for (j, &t) in d.times().iter().enumerate().skip(1) {
        assert!((d.state(j)[0] - exact(t)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn relaxation_stays_between_zero_and_initial_value(alpha in 0.2f64..0.95, x0 in 0.1f64..5.0) {
        let f = FieldSpec::new("linear_diag").param("a1", -1.0).build().unwrap();
        let p = CaputoIvp::new(alpha, f, vec![x0], 20.0).unwrap();
        let tr = solve_ivp(&p, &SolverConfig::graded(400, 1.0 / alpha)).unwrap();
        let x = tr.samples.component(0);
        prop_assert!(x.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }
}
