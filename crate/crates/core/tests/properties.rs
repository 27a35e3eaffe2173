use proptest::prelude::*;
use qcavity::laplace::{
    closed_form_fixed_point, fixed_point_residual, fourier_fixed_point, g0_laplace, orbit, real_multiplier,
    KernelShape,
};
use qcavity::rs::{population_step, variance_gain_forms, Population};
use qcavity::tree_bp::{sweep_messages, TreeGraph};
use qcavity::ModelParams;

fn params() -> impl Strategy<Value = ModelParams> {
    (2usize..=8, 0.5f64..20.0, 0.01f64..5.0, 0.2f64..3.0)
        .prop_filter_map("positivity", |(n, w0, c, m)| ModelParams::new(n, w0, c, m).ok())
}

/// Parameters with real band edges.
fn banded() -> impl Strategy<Value = ModelParams> {
    params().prop_filter("band", |p| p.band().is_ok())
}

fn lambda() -> impl Strategy<Value = f64> {
    (-2.0f64..2.5).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fixed_point_solves_quadratic(p in params(), l in lambda()) {
        if let Ok(k) = closed_form_fixed_point(&p, l) {
            prop_assert!(fixed_point_residual(&p, l, k) <= 1e-12);
        }
    }

    #[test]
    fn fixed_point_bounds(p in params(), l in lambda()) {
        if let Ok(k) = closed_form_fixed_point(&p, l) {
            let g0 = g0_laplace(&p, l);
            let a = p.branches() * p.coupling * p.coupling / 2.0;
            prop_assert!(k >= a * g0 * (1.0 - 1e-12));
            prop_assert!(k <= (1.0 + 1e-12) / (2.0 * g0));
        }
    }

    #[test]
    fn iteration_from_zero_is_monotone(p in params(), l in lambda()) {
        prop_assume!(p.fixed_point_exists(l));
        let k = closed_form_fixed_point(&p, l).unwrap();
        let o = orbit(&p, l, 0.0, 300, 1e-15);
        for w in o.values.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-14 * k);
            prop_assert!(w[1] <= k * (1.0 + 1e-12));
        }
    }

    #[test]
    fn existence_matches_threshold(p in params(), l in lambda()) {
        let exists = closed_form_fixed_point(&p, l).is_ok();
        prop_assert_eq!(exists, p.fixed_point_exists(l));
        match p.lambda_star() {
            None => prop_assert!(exists),
            Some(ls) => {
                prop_assume!((l - ls).abs() > 1e-9 * ls.max(1.0));
                prop_assert_eq!(exists, l > ls);
            }
        }
    }

    #[test]
    fn fourier_kernel_is_hermitian(p in banded(), nu in 0.0f64..50.0) {
        let a = fourier_fixed_point(&p, nu);
        let b = fourier_fixed_point(&p, -nu);
        let scale = a.norm().max(1e-300);
        prop_assert!((a - b.conj()).norm() <= 1e-13 * scale);
    }

    #[test]
    fn multiplier_bounded_by_two(p in banded(), nu in 0.0f64..50.0) {
        let a = real_multiplier(&p, nu);
        prop_assert!(a <= 2.0 + 1e-12, "A = {}", a);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn band_amplitude_linear_in_coupling(p in params(), f in 0.1f64..3.0) {
        let q = p.with_coupling(f * p.coupling);
        prop_assume!(q.is_ok());
        let (a1, a2) = (p.a_sq.unwrap(), q.unwrap().a_sq.unwrap());
        prop_assert!((a2 - f * a1).abs() <= 1e-13 * a2.abs());
    }

    #[test]
    fn variance_gain_forms_agree(p in params(), l in lambda()) {
        if let Ok(g) = variance_gain_forms(&p, l) {
            prop_assert!((g.propagated - g.closed).abs() <= 1e-10 * g.closed);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bp_ignores_child_order(
        p in params(),
        l in lambda(),
        picks in prop::collection::vec(0.0f64..1.0, 1..60),
        seed in any::<u64>(),
    ) {
        let parents: Vec<Option<usize>> = std::iter::once(None)
            .chain(picks.iter().enumerate().map(|(i, u)| Some((u * (i + 1) as f64) as usize)))
            .collect();
        let tree = TreeGraph::from_parents(&parents).unwrap();
        let shuffled = tree.with_child_order(|v, kids| {
            let len = kids.len().max(1);
            kids.rotate_left((seed as usize ^ v) % len);
            kids.reverse();
        });
        let shape = KernelShape::laplace(vec![l]).unwrap();
        let a = sweep_messages(&tree, &p, &shape).unwrap().root_emitted(&tree);
        let b = sweep_messages(&shuffled, &p, &shape).unwrap().root_emitted(&shuffled);
        let (a, b) = (a.real_values().unwrap()[0], b.real_values().unwrap()[0]);
        prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300) || (a.is_nan() && b.is_nan()));
    }

    #[test]
    fn population_is_deterministic(p in params(), seed in any::<u64>()) {
        let l = 10.0 * p.omega();
        prop_assume!(p.fixed_point_exists(l));
        let run = || {
            let mut pop = Population::perturbed(&p, l, 1000, seed, 0.05).unwrap();
            for _ in 0..3 {
                population_step(&mut pop).unwrap();
            }
            pop.samples
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn delta_pool_is_invariant(p in params(), l in lambda(), seed in any::<u64>()) {
        prop_assume!(p.fixed_point_exists(l));
        let target = closed_form_fixed_point(&p, l).unwrap() / p.branches();
        let mut pop = Population::at_fixed_point(&p, l, 1000, seed).unwrap();
        population_step(&mut pop).unwrap();
        for s in &pop.samples {
            prop_assert!((s - target).abs() <= 1e-12 * target);
        }
    }
}
