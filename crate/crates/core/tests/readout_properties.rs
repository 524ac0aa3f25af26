//! Block-system and readout identities on small knock-out systems.

mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use qfdm::berry::{self, BerryParams, SolveMethod};
use qfdm::gridding::Grid;
use qfdm::model::{FacePair, MarketModel, PayoffSpec, ProductSpec};
use qfdm::operator::FdmSystem;
use qfdm::pricer::{
    choose_gamma, closed_form_solution, price_readout, tolerance_plan, ReadoutModes, ToleranceInputs, Tolerances,
};
use qfdm::qae::QaeMode;
use qfdm::stateprep::{build_p_vector, GaussianSpec, ProbabilityVector};

#[derive(Debug)]
struct Case {
    fdm: FdmSystem,
    pvec: ProbabilityVector,
    tau: f64,
    r: f64,
    maturity: f64,
}

fn case(sigma: f64, lo: f64, hi: f64, call: bool, n_gr: usize, t_ter: f64) -> Case {
    let r = 0.01;
    let maturity = 1.0;
    let strike = 100.0;
    let product = ProductSpec {
        maturity,
        lower: vec![lo],
        upper: vec![hi],
        spot: vec![100.0],
        payoff: if call { PayoffSpec::call(vec![1.0], strike) } else { PayoffSpec::put(vec![1.0], strike) },
        boundaries: vec![FacePair::knock_out()],
        payoff_bound: if call { vec![0.0, 1.0] } else { vec![strike, 0.0] },
        allow_discounted_linear: false,
    };
    let model = MarketModel::single(r, sigma);
    let grid = Grid::for_product(&product, n_gr).unwrap();
    let spec = GaussianSpec::at_time(&model, &product.spot, t_ter).unwrap();
    let pvec = build_p_vector(&grid, &spec).unwrap();
    let fdm = FdmSystem::build(grid, &model, &product).unwrap();
    Case { fdm, pvec, tau: maturity - t_ter, r, maturity }
}

fn case_strategy() -> impl Strategy<Value = Case> {
    (0.15f64..0.35, 60.0f64..85.0, 120.0f64..160.0, any::<bool>(), 0.3f64..0.8)
        .prop_map(|(sigma, lo, hi, call, t_ter)| case(sigma, lo, hi, call, 16, t_ter))
}

fn params_for(c: &Case, k: usize) -> BerryParams {
    let p = berry::p_from_norm(c.tau, c.fdm.norm_bound);
    BerryParams::new(p, k, p, c.tau).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn z_squared_is_the_full_solution_norm(c in case_strategy(), k in 2usize..6) {
        let params = params_for(&c, k);
        let gamma = choose_gamma(&c.fdm.f_pay).unwrap_or(1.0);
        let sol = berry::solve(&c.fdm, &params, Some(gamma), SolveMethod::Direct, usize::MAX).unwrap();
        let total: f64 = sol.blocks.as_ref().unwrap().iter().flatten().map(|v| v * v).sum();
        prop_assert!((sol.z_squared() - total).abs() <= 1e-10 * total);
    }

    #[test]
    fn streamed_and_direct_solves_agree(c in case_strategy(), k in 2usize..7) {
        let params = params_for(&c, k);
        let direct = berry::solve(&c.fdm, &params, Some(1.0), SolveMethod::Direct, usize::MAX).unwrap();
        let streamed = berry::solve_structured(&c.fdm, &params, Some(1.0), true).unwrap();
        let scale = direct.x_m.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in direct.x_m.iter().zip(&streamed.x_m) {
            prop_assert!((a - b).abs() <= 1e-11 * scale);
        }
        prop_assert!(direct.repetition_gap <= berry::REPETITION_TOL);
        prop_assert_eq!(direct.gamma_gap, 0.0);
        prop_assert!((direct.z_squared() - streamed.z_squared()).abs() <= 1e-10 * direct.z_squared());
    }

    #[test]
    fn block_solution_converges_to_exponential(c in case_strategy()) {
        let exact = closed_form_solution(&c.fdm, c.tau).unwrap();
        let scale = dot(&exact, &exact).sqrt();
        let gap = |k: usize| {
            let sol = berry::solve_structured(&c.fdm, &params_for(&c, k), None, false).unwrap();
            let d: Vec<f64> = sol.x_m.iter().zip(&exact).map(|(a, b)| a - b).collect();
            dot(&d, &d).sqrt() / scale
        };
        let gaps: Vec<f64> = [2, 4, 6, 8].into_iter().map(gap).collect();
        prop_assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        prop_assert!(gaps[3] < 1e-6, "{gaps:?}");
    }

    #[test]
    fn exact_readout_recovers_the_inner_product(c in case_strategy(), eps1 in 1e-4f64..1e-2, eps2 in 1e-4f64..1e-2) {
        let params = params_for(&c, 6);
        let gamma = choose_gamma(&closed_form_solution(&c.fdm, c.tau).unwrap()).unwrap();
        let sol = berry::solve_structured(&c.fdm, &params, Some(gamma), false).unwrap();
        let tol = Tolerances::new(eps1, eps2).unwrap();
        let out = price_readout(&sol, &c.pvec, c.r, c.maturity, &tol, ReadoutModes::uniform(QaeMode::Exact)).unwrap();
        let expected = (-c.r * c.maturity).exp() * dot(&c.pvec.p, &sol.x_m);
        prop_assert!((out.omega - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
        prop_assert_eq!(tol.eps_psi, eps1.max(eps2));
        prop_assert_eq!(out.queries, ((1.0 / eps1).ceil() + (1.0 / eps2).ceil()) as u64);
    }

    #[test]
    fn biased_readout_stays_within_bound(c in case_strategy(), eps1 in 1e-5f64..1e-2, eps2 in 1e-5f64..1e-2, seed in any::<u64>()) {
        let params = params_for(&c, 6);
        let gamma = choose_gamma(&closed_form_solution(&c.fdm, c.tau).unwrap()).unwrap();
        let sol = berry::solve_structured(&c.fdm, &params, Some(gamma), false).unwrap();
        let tol = Tolerances::new(eps1, eps2).unwrap();
        let disc = (-c.r * c.maturity).exp();
        let px = dot(&c.pvec.p, &sol.x_m);
        let truth = disc * px;
        for modes in [
            ReadoutModes::adverse(px >= 0.0),
            ReadoutModes::uniform(QaeMode::BiasPlus),
            ReadoutModes::uniform(QaeMode::BiasMinus),
            ReadoutModes::uniform(QaeMode::Sampled { seed }),
        ] {
            let out = price_readout(&sol, &c.pvec, c.r, c.maturity, &tol, modes).unwrap();
            let bound = common::readout_bound(disc, out.p_norm, out.z, params.p, gamma, sol.n, px, eps1, eps2);
            prop_assert!((out.error_bound - bound).abs() <= 1e-12 * bound);
            prop_assert!((out.omega - truth).abs() <= bound);
        }
    }

    #[test]
    fn adverse_error_grows_with_tolerance(c in case_strategy(), eps in 1e-5f64..1e-3) {
        let params = params_for(&c, 6);
        let gamma = choose_gamma(&closed_form_solution(&c.fdm, c.tau).unwrap()).unwrap();
        let sol = berry::solve_structured(&c.fdm, &params, Some(gamma), false).unwrap();
        let truth = (-c.r * c.maturity).exp() * dot(&c.pvec.p, &sol.x_m);
        let err = |e: f64| {
            let tol = Tolerances::new(e, e).unwrap();
            let out = price_readout(&sol, &c.pvec, c.r, c.maturity, &tol, ReadoutModes::adverse(truth >= 0.0)).unwrap();
            (out.omega - truth).abs()
        };
        prop_assert!(err(eps) < err(2.0 * eps));
        prop_assert!(err(2.0 * eps) < err(4.0 * eps));
    }

    #[test]
    fn rms_gamma_lies_within_a_factor_of_two(values in prop::collection::vec(-50.0f64..50.0, 1..64)) {
        prop_assume!(values.iter().any(|v| *v != 0.0));
        let n = values.len() as f64;
        let y_bar = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let g = choose_gamma(&values).unwrap();
        prop_assert!(g > 0.5 * y_bar && g < 2.0 * y_bar);
    }
}

#[test]
fn tolerance_plan_scales_inversely_with_growth() {
    let base = ToleranceInputs {
        eps: 0.02,
        g: 1.0,
        dim: 2,
        rho_det: 0.75,
        delta_product: 120.0,
        v0_scale: 5.0,
        vbar_scale: 3.0,
        c1: 1.0,
        c2: 1.0,
    };
    let a = tolerance_plan(&base).unwrap();
    let b = tolerance_plan(&ToleranceInputs { g: 4.0, ..base }).unwrap();
    assert_relative_eq!(a.eps1 / b.eps1, 4.0, max_relative = 1e-14);
    assert_relative_eq!(a.eps2 / b.eps2, 4.0, max_relative = 1e-14);
    let two_pi = 2.0 * std::f64::consts::PI;
    assert_relative_eq!(a.eps1, two_pi * 0.75f64.sqrt() * 0.02 / (120.0 * 3.0), max_relative = 1e-14);
    assert_relative_eq!(a.eps2, 0.02 / 5.0, max_relative = 1e-14);
    assert_eq!(a.eps_psi, a.eps1.max(a.eps2));
}

#[test]
fn readout_without_padding_is_rejected() {
    let c = case(0.2, 70.0, 140.0, true, 16, 0.5);
    let sol = berry::solve_structured(&c.fdm, &params_for(&c, 4), None, false).unwrap();
    let tol = Tolerances::new(1e-3, 1e-3).unwrap();
    assert!(price_readout(&sol, &c.pvec, c.r, c.maturity, &tol, ReadoutModes::uniform(QaeMode::Exact)).is_err());
}
