use gmfilter::benes::BenesParams;
use gmfilter::branching::BranchingAlgorithm;
use gmfilter::filter::{FilterConfig, OffspringMeanDraw, ParticleSystem};
use gmfilter::model::InitialLaw;
use gmfilter::rng::CounterRng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn population_invariants_hold_through_branching(
        n in 1usize..60,
        alpha in 0.0f64..=1.0,
        beta in 0.05f64..3.0,
        substeps in 1usize..6,
        multinomial in any::<bool>(),
        per_offspring in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let model = BenesParams::default().model();
        let delta = 0.25;
        let dt = delta / substeps as f64;
        let cfg = FilterConfig::new(n, delta, substeps)
            .with_alpha(alpha)
            .with_beta(beta)
            .with_branching(if multinomial { BranchingAlgorithm::Multinomial } else { BranchingAlgorithm::Tbba })
            .with_offspring_mean_draw(if per_offspring { OffspringMeanDraw::PerOffspring } else { OffspringMeanDraw::PerParent })
            .with_seed(seed);
        let floor = alpha * beta;
        let mut sys = ParticleSystem::init(cfg, &InitialLaw::Normal { mean: 0.0, std_dev: 1.0 }).unwrap();
        let mut obs_rng = CounterRng::new(seed ^ 0x5eed);

        for _interval in 0..4 {
            let mut prev_omega: Vec<f64> = sys.particles().iter().map(|p| p.omega).collect();
            for _ in 0..substeps {
                let dy = 0.3 * dt + dt.sqrt() * obs_rng.sample::<f64, _>(StandardNormal);
                sys.evolve_substep(&model, dy, dt).unwrap();
                prop_assert_eq!(sys.particles().len(), n);
                for (p, prev) in sys.particles().iter().zip(&prev_omega) {
                    prop_assert!(p.omega >= floor);
                    prop_assert!(p.omega >= *prev);
                    prop_assert!(p.a > 0.0);
                }
                prev_omega = sys.particles().iter().map(|p| p.omega).collect();
                let post = sys.posterior().unwrap();
                prop_assert!((post.total_weight() - 1.0).abs() <= 1e-12);
                prop_assert!(sys.xi() > 0.0);
            }
            let xi_before = sys.xi();
            let alloc = sys.branch().unwrap();
            prop_assert_eq!(alloc.total(), n);
            prop_assert_eq!(sys.particles().len(), n);
            prop_assert!(sys.particles().iter().all(|p| p.a == 1.0 && p.omega == floor));
            prop_assert_eq!(sys.xi(), xi_before);
            let post = sys.posterior().unwrap();
            prop_assert!(post.components().iter().all(|c| c.weight == 1.0 / n as f64 && c.variance == floor));
        }
    }
}
