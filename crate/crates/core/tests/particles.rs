use nlmarkov::coefficients::RegistryParams;
use nlmarkov::particles::{resample_from_marginal, simulate_ddsde, simulate_linearized_sde, InitialLaw, SimulationConfig};
use nlmarkov::pde::{
    barenblatt, cole_hopf_burgers, dominated_perturbation, solve_linearized_fpke, solve_nlfpke, uniform_times, Barenblatt,
    SolverConfig,
};
use nlmarkov::verify::distance::{ks_statistic, w1_samples_grid, w1_samples_samples};
use nlmarkov::{CoefficientSet, Grid, GridDensity, KdeSpec};

fn pme(m: f64) -> CoefficientSet {
    CoefficientSet::from_registry("pme", &RegistryParams::pme(m)).unwrap()
}

fn burgers() -> CoefficientSet {
    CoefficientSet::from_registry("burgers", &RegistryParams::default()).unwrap()
}

fn sim(n: usize, seed: u64) -> SimulationConfig {
    SimulationConfig::new(n, 1e-3, KdeSpec::gaussian_silverman(Grid::symmetric(0.0, 8.0, 1024).unwrap()), seed)
}

#[test]
fn seeds_are_exchangeable() {
    let marginal = |seed| simulate_ddsde(&pme(2.0), &InitialLaw::Dirac(0.0), &[0.0, 0.5], &sim(20_000, seed)).unwrap().column(1);
    for pair in 0..5u64 {
        let (a, b) = (marginal(2 * pair + 1), marginal(2 * pair + 2));
        assert!(w1_samples_samples(&a, &b) <= 2.0 * 0.05);
    }
}

#[test]
fn porous_medium_particles_stay_near_the_support() {
    let paths = simulate_ddsde(&pme(2.0), &InitialLaw::Dirac(0.0), &[0.0, 1.0], &sim(20_000, 3)).unwrap();
    let radius = Barenblatt::new(2.0, 1).unwrap().support_radius(1.0);
    let x = paths.column(1);
    let inside = x.iter().filter(|v| v.abs() <= 1.1 * radius).count();
    assert!(inside as f64 >= 0.999 * x.len() as f64, "{inside} of {}", x.len());
}

#[test]
fn burgers_drift_respects_the_density_bound_and_matches_cole_hopf() {
    let g = Grid::symmetric(0.0, 12.0, 2048).unwrap();
    let zeta = GridDensity::uniform(g, -0.5, 0.5, 0.0).unwrap();
    let paths = simulate_ddsde(&burgers(), &InitialLaw::Uniform(-0.5, 0.5), &[0.0, 0.5], &sim(100_000, 5)).unwrap();
    let half_sup = zeta.sup() / 2.0;
    assert!(paths.scheme.drift_min >= 0.0);
    assert!(paths.scheme.drift_max <= 1.1 * half_sup, "{}", paths.scheme.drift_max);
    let exact = cole_hopf_burgers(&zeta, 0.0, 0.5, g).unwrap();
    assert!(w1_samples_grid(&paths.column(1), &exact) <= 0.05);
}

#[test]
fn linearized_particles_follow_the_frozen_flow_and_its_perturbation() {
    let c = pme(2.0);
    let g = Grid::symmetric(0.0, 8.0, 1024).unwrap();
    let zeta = barenblatt(2.0, 1, -0.1, 0.0, 0.0, g).unwrap();
    let times = uniform_times(0.0, 0.5, 500);
    let cfg = SolverConfig::default();
    let mu = solve_nlfpke(&c, &zeta, &times, &cfg).unwrap();
    let pert = dominated_perturbation(&zeta, 0.5, 2.0, 0.2).unwrap();
    let nu = solve_linearized_fpke(&c, &mu, &pert.density, &times, &cfg).unwrap();
    for (start, target) in [(&zeta, &mu), (&pert.density, &nu)] {
        let law = InitialLaw::Density(start.clone());
        let paths = simulate_linearized_sde(&c, &mu, &law, &[0.0, 0.25, 0.5], &sim(50_000, 9)).unwrap();
        for (k, t) in [0.25, 0.5].iter().enumerate() {
            let w1 = w1_samples_grid(&paths.column(k + 1), &target.at(*t).unwrap());
            assert!(w1 <= 0.05, "t = {t}: {w1}");
        }
    }
}

#[test]
fn resampling_meets_ks_and_clt_bounds() {
    // at the 99% level a handful of the 40 draws may exceed either bound
    let g = Grid::symmetric(0.0, 6.0, 600).unwrap();
    let n = 4000;
    let (mut ks_over, mut mean_over) = (0, 0);
    for seed in 0..40u64 {
        let mean = -1.0 + 0.05 * seed as f64;
        let u = GridDensity::gaussian(g, mean, 0.3 + 0.02 * seed as f64, 0.0).unwrap();
        let e = resample_from_marginal(&u, n, seed).unwrap();
        if ks_statistic(e.positions(), &u) > 1.63 / (n as f64).sqrt() {
            ks_over += 1;
        }
        if (e.mean() - u.mean()).abs() > 3.0 * (u.variance() / n as f64).sqrt() {
            mean_over += 1;
        }
    }
    assert!(ks_over <= 3 && mean_over <= 3, "{ks_over} {mean_over}");
}
