use nlmarkov::coefficients::RegistryParams;
use nlmarkov::{CoefficientSet, Grid, GridDensity};
use proptest::prelude::*;

fn named(name: &str, params: &RegistryParams) -> CoefficientSet {
    CoefficientSet::from_registry(name, params).unwrap()
}

fn grid() -> Grid {
    Grid::symmetric(0.0, 6.0, 240).unwrap()
}

/// Two bumps of mass `w` and `1 - w`; cells outside both are zero.
fn two_bumps(a: (f64, f64), b: (f64, f64), w: f64) -> GridDensity {
    let g = grid();
    let ua = GridDensity::uniform(g, a.0, a.1, 0.0).unwrap();
    let ub = GridDensity::uniform(g, b.0, b.1, 0.0).unwrap();
    let v = ua.values().iter().zip(ub.values()).map(|(x, y)| w * x + (1.0 - w) * y).collect();
    GridDensity::new(g, v, 0.0).unwrap()
}

proptest! {
    #[test]
    fn heat_diffusion_is_root_two_everywhere(mean in -2.0f64..2.0, var in 0.05f64..1.0, x in -5.0f64..5.0) {
        let heat = named("heat", &RegistryParams::default());
        let u = GridDensity::gaussian(grid(), mean, var, 0.0).unwrap();
        prop_assert!((heat.diffusion_at(&u, x).unwrap() - 2f64.sqrt()).abs() <= 1e-12);
        prop_assert_eq!(heat.drift_at(&u, x).unwrap(), 0.0);
    }

    #[test]
    fn nemytskii_coefficients_only_see_the_local_density(shift in 1.0f64..2.5, m in 1.0f64..3.0) {
        // both laws agree on [-1.5, -0.5] and differ only far to the right
        let a = two_bumps((-1.5, -0.5), (1.0, 2.0), 0.5);
        let b = two_bumps((-1.5, -0.5), (1.0 + shift, 2.0 + shift), 0.5);
        let x = -1.0;
        for c in [named("burgers", &RegistryParams::default()), named("pme", &RegistryParams::pme(m))] {
            prop_assert_eq!(c.drift_at(&a, x).unwrap(), c.drift_at(&b, x).unwrap());
            prop_assert_eq!(c.diffusion_at(&a, x).unwrap(), c.diffusion_at(&b, x).unwrap());
        }
    }

    #[test]
    fn mean_field_drift_is_linear_in_the_law(w in 0.0f64..1.0, ca in -3.0f64..0.0, cb in 0.0f64..3.0, x in -5.0f64..5.0) {
        let p = RegistryParams { sigma: 0.5, bump_half_width: 1.5, ..RegistryParams::default() };
        let c = named("meanfield", &p);
        let a = two_bumps((ca - 0.4, ca + 0.4), (ca - 0.4, ca + 0.4), 1.0);
        let b = two_bumps((cb - 0.4, cb + 0.4), (cb - 0.4, cb + 0.4), 1.0);
        let mix = two_bumps((ca - 0.4, ca + 0.4), (cb - 0.4, cb + 0.4), w);
        let lhs = c.drift_at(&mix, x).unwrap();
        let rhs = w * c.drift_at(&a, x).unwrap() + (1.0 - w) * c.drift_at(&b, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
        prop_assert_eq!(c.diffusion_at(&mix, x).unwrap(), 0.5);
    }

    #[test]
    fn porous_medium_beta_is_monotone_and_vanishes_at_zero(m in 1.0f64..5.0, z in 0.0f64..10.0, dz in 0.0f64..1.0) {
        let c = named("pme", &RegistryParams::pme(m));
        let n = c.as_nemytskii().unwrap();
        prop_assert_eq!(n.beta.eval(0.0), 0.0);
        prop_assert!(n.beta.eval(z + dz) >= n.beta.eval(z));
        prop_assert!(c.assumption_violations(10.0).is_empty());
    }
}
