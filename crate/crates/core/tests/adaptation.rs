use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcbf::adapt::{adapt_gamma, adapt_with, mesh_axis, sample_perturbations, sigma_hat, AdaptationConfig};
use rcbf::field::{build_field, GridField};
use rcbf::pipeline::SafePipeline;
use rcbf::qp::RobustnessParams;
use rcbf::scenario::{Scenario, SearchMode};

fn paper() -> &'static (Scenario, GridField) {
    static CELL: OnceLock<(Scenario, GridField)> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = Scenario::paper();
        let f = build_field(&s).unwrap().0;
        (s, f)
    })
}

const STATES: [(f64, [f64; 3]); 4] = [
    (0.0, [0.0, -0.35, 0.0]),
    (6.0, [1.2, -0.9, -0.4]),
    (12.0, [2.6, 0.8, 0.3]),
    (20.0, [4.4, -1.2, 0.9]),
];

fn objective(sigma: f64, g: RobustnessParams) -> f64 {
    let excess = if sigma > g.gamma1 { sigma - g.gamma1 } else { 0.0 };
    excess / (2.0 * g.gamma2)
}

#[test]
fn full_search_beats_random_admissible_mesh_points() {
    let (s, f) = paper();
    let mut config = AdaptationConfig::from_scenario(s);
    config.search = SearchMode::Full;
    config.n1 = 60;
    config.n2 = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (t, x_hat) in STATES {
        let samples = sample_perturbations(x_hat, s.error_box, config.n_samples, &mut rng);
        let pipeline = SafePipeline::new(f, s, x_hat[2]);
        let res = adapt_with(t, x_hat, &samples, &pipeline, &config).unwrap();

        let own = sigma_hat(t, x_hat, &samples, res.gamma, &pipeline).unwrap();
        assert_eq!(own.value, res.sigma_hat_at_opt);
        assert!((objective(own.value, res.gamma) - res.objective).abs() <= 1e-12);

        let center = pipeline.prepare_state(t, x_hat).unwrap();
        let axis = mesh_axis(config.gamma_lo, config.gamma_hi, config.n1, config.spacing);
        for _ in 0..100 {
            let g = RobustnessParams::new(axis[rng.gen_range(0..axis.len())], axis[rng.gen_range(0..axis.len())]);
            if !pipeline.filter(&center, g).feasible {
                continue;
            }
            assert!(res.admissible);
            let sigma = sigma_hat(t, x_hat, &samples, g, &pipeline).unwrap().value;
            assert!(res.objective <= objective(sigma, g) + 1e-12, "{g:?} at {x_hat:?}");
        }
    }
}

#[test]
fn adapt_gamma_is_deterministic() {
    let (s, f) = paper();
    let (t, x) = STATES[2];
    assert_eq!(adapt_gamma(t, x, s, f).unwrap(), adapt_gamma(t, x, s, f).unwrap());
}

#[test]
fn zero_error_box_gives_the_floor() {
    let (s, f) = paper();
    let mut s = s.clone();
    s.error_box = [0.0; 3];
    for (t, x) in STATES {
        let res = adapt_gamma(t, x, &s, f).unwrap();
        assert_eq!(res.gamma, RobustnessParams::new(s.gamma_bounds[0], s.gamma_bounds[0]));
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.sigma_hat_at_opt, 0.0);
    }
}

#[test]
fn sigma_hat_grows_with_the_error_box() {
    let (s, f) = paper();
    let g = RobustnessParams::new(0.05, 0.05);
    for (t, x_hat) in STATES {
        let pipeline = SafePipeline::new(f, s, x_hat[2]);
        let mut prev = 0.0;
        for scale in [0.25, 0.5, 1.0] {
            let b = s.error_box.map(|w| w * scale);
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let samples = sample_perturbations(x_hat, b, 100, &mut rng);
            let sigma = sigma_hat(t, x_hat, &samples, g, &pipeline).unwrap().value;
            assert!(sigma >= prev, "{sigma} < {prev} at {x_hat:?}");
            prev = sigma;
        }
    }
}

#[test]
fn returned_objective_is_zero_when_a_large_gamma1_exists() {
    let (s, f) = paper();
    for (t, x) in STATES {
        let res = adapt_gamma(t, x, s, f).unwrap();
        assert!(res.objective >= 0.0);
        if res.sigma_hat_at_opt < s.gamma_bounds[1] && res.admissible {
            assert_eq!(res.objective, 0.0, "{res:?}");
        }
    }
}
