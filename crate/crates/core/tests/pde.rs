use nlmarkov::coefficients::RegistryParams;
use nlmarkov::pde::{
    barenblatt, check_domination_default, cole_hopf_burgers, dominated_perturbation, solve_linearized_fpke,
    solve_nlfpke, uniform_times, Barenblatt, SolverConfig,
};
use nlmarkov::verify::test_flow_property_pde;
use nlmarkov::{CoefficientSet, Grid, GridDensity};
use proptest::prelude::*;

fn pme(m: f64) -> CoefficientSet {
    CoefficientSet::from_registry("pme", &RegistryParams::pme(m)).unwrap()
}

fn burgers() -> CoefficientSet {
    CoefficientSet::from_registry("burgers", &RegistryParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mass_and_sign_are_preserved(m in 1.0f64..3.0, mean in -1.0f64..1.0, var in 0.05f64..0.5, t in 0.05f64..0.4) {
        let g = Grid::symmetric(0.0, 8.0, 256).unwrap();
        let zeta = GridDensity::gaussian(g, mean, var, 0.0).unwrap();
        let flow = solve_nlfpke(&pme(m), &zeta, &uniform_times(0.0, t, 4), &SolverConfig::default()).unwrap();
        for d in flow.densities() {
            prop_assert!((d.mass() - 1.0).abs() <= 1e-8);
            prop_assert!(d.values().iter().all(|v| *v >= -1e-12));
        }
    }

    #[test]
    fn burgers_stays_between_zero_and_the_initial_sup(a in -1.0f64..0.5, w in 0.5f64..2.0) {
        let g = Grid::symmetric(0.0, 12.0, 512).unwrap();
        let zeta = GridDensity::uniform(g, a, a + w, 0.0).unwrap();
        let sup = zeta.sup();
        let flow = solve_nlfpke(&burgers(), &zeta, &uniform_times(0.0, 0.5, 5), &SolverConfig::default()).unwrap();
        for d in flow.densities() {
            prop_assert!(d.values().iter().all(|v| *v >= 0.0 && *v <= sup * (1.0 + 1e-9)));
        }
    }

    #[test]
    fn restart_invariance(m in 1.0f64..3.0, r in 0.05f64..0.45) {
        let g = Grid::symmetric(0.0, 6.0, 256).unwrap();
        let zeta = barenblatt(2.0, 1, -0.1, 0.0, 0.0, g).unwrap();
        let rep = test_flow_property_pde(&pme(m), &zeta, 0.0, r, 0.5, 1e-3, &SolverConfig::default()).unwrap();
        prop_assert!(rep.pass, "L1 {}", rep.distance);
    }

    #[test]
    fn barenblatt_is_self_similar(m in 1.2f64..4.0, d in 1usize..4, tau in 0.05f64..3.0, lambda in 0.2f64..5.0, x in 0.0f64..3.0) {
        let b = Barenblatt::new(m, d).unwrap();
        let lhs = lambda.powf(b.alpha()) * b.value(lambda.powf(b.spread_exponent()) * x, tau);
        let rhs = b.value(x, tau / lambda);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn porous_medium_tracks_the_self_similar_solution() {
    let g = Grid::symmetric(0.0, 8.0, 1024).unwrap();
    let zeta = barenblatt(2.0, 1, -0.1, 0.0, 0.0, g).unwrap();
    let u = solve_nlfpke(&pme(2.0), &zeta, &[0.0, 1.0], &SolverConfig::default()).unwrap();
    let exact = barenblatt(2.0, 1, -0.1, 0.0, 1.0, g).unwrap();
    assert!(u.last().l1_distance(&exact).unwrap() <= 1e-2);
}

#[test]
fn burgers_error_halves_with_the_cell_width() {
    let err = |n: usize| {
        let g = Grid::symmetric(0.0, 12.0, n).unwrap();
        let zeta = GridDensity::uniform(g, -0.5, 0.5, 0.0).unwrap();
        let u = solve_nlfpke(&burgers(), &zeta, &[0.0, 0.5], &SolverConfig::default()).unwrap();
        let exact = cole_hopf_burgers(&zeta, 0.0, 0.5, g).unwrap();
        u.last().l1_distance(&exact).unwrap()
    };
    let (coarse, fine) = (err(1024), err(2048));
    let ratio = fine / coarse;
    assert!((0.35..=0.65).contains(&ratio), "{coarse} -> {fine}");
}

#[test]
fn perturbed_linearization_stays_dominated() {
    let c = pme(2.0);
    let g = Grid::symmetric(0.0, 8.0, 512).unwrap();
    let zeta = barenblatt(2.0, 1, -0.1, 0.0, 0.0, g).unwrap();
    let times = uniform_times(0.0, 1.0, 1000);
    let cfg = SolverConfig::default();
    let mu = solve_nlfpke(&c, &zeta, &times, &cfg).unwrap();
    let pert = dominated_perturbation(&zeta, 0.5, 2.0, 0.2).unwrap();
    let nu = solve_linearized_fpke(&c, &mu, &pert.density, &times, &cfg).unwrap();
    let rep = check_domination_default(&nu, &mu).unwrap();
    assert!(rep.c_star >= 1.0 && rep.c_star <= 2.0 * 1.05, "{}", rep.c_star);
}
