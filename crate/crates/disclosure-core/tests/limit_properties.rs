use disclosure_core::limit::solve_limit;
use disclosure_core::{validate_game, MassModel, OutcomeModel, PiecewiseDensity, RawGame, StateSpace};
use proptest::prelude::*;

fn normalise(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn limit_invariants(
        j in 2usize..=3,
        rows in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 3),
        prior in prop::collection::vec(0.1f64..1.0, 3),
        center in 0.3f64..0.7,
        width in 0.2f64..0.6,
    ) {
        let values: Vec<f64> = (0..j).map(|i| i as f64 / (j - 1) as f64).collect();
        let game = validate_game(RawGame {
            states: StateSpace { values, prior: normalise(&prior[..j]) },
            outcomes: OutcomeModel { dist: rows[..j].iter().map(|r| normalise(r)).collect() },
            mass: MassModel::Density(PiecewiseDensity::centered_triangle(center, width).unwrap()),
        })
        .unwrap();
        let sol = solve_limit(&game).unwrap();
        prop_assert!((sol.expected_payoff() - game.prior_mean()).abs() < 1e-4);
        let top = game.theta(j - 1);
        for s in 0..j {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=400 {
                let mu = i as f64 / 400.0;
                let u = sol.type_payoff(s, mu);
                prop_assert!(u >= prev - 1e-9 && u <= top + 1e-12, "state {s} mu {mu}: {u} after {prev}");
                prop_assert!(sol.message_value(s, mu) <= game.theta(s) + 1e-12);
                prev = u;
            }
        }
    }
}
