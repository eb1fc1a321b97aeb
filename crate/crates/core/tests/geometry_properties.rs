use ballastplan::geometry::{monte_carlo_success, within_window, PoseError, StageChain};
use proptest::prelude::*;

proptest! {
    #[test]
    fn windows_are_symmetric(dx in -0.2..0.2f64, dy in -0.2..0.2f64) {
        for stage in StageChain::default().stages() {
            let w = &stage.window;
            let base = within_window(PoseError::new(dx, dy).unwrap(), w);
            prop_assert_eq!(base, within_window(PoseError::new(-dx, -dy).unwrap(), w));
            prop_assert_eq!(base, within_window(PoseError::new(dx, -dy).unwrap(), w));
        }
    }
}

#[test]
fn success_is_monotone_in_sigma() {
    let chain = StageChain::default();
    let mut prev = 1.0;
    for k in 0..=20 {
        let sigma = k as f64 * 0.005;
        let rate = monte_carlo_success(&chain, sigma, 20_000, 5).unwrap();
        assert!(rate <= prev, "sigma {sigma}: {rate} > {prev}");
        prev = rate;
    }
}

#[test]
fn chain_is_no_better_than_its_weakest_stage() {
    let chain = StageChain::default();
    for sigma in [0.01, 0.02, 0.04] {
        let whole = monte_carlo_success(&chain, sigma, 20_000, 9).unwrap();
        for s in chain.stages() {
            let alone = monte_carlo_success(&chain.single(&s.name).unwrap(), sigma, 20_000, 9).unwrap();
            assert!(whole <= alone, "{}: {whole} > {alone}", s.name);
        }
    }
}

#[test]
fn independent_seeds_agree_within_sampling_error() {
    let chain = StageChain::default();
    let n = 100_000;
    let a = monte_carlo_success(&chain, 0.02, n, 1).unwrap();
    let b = monte_carlo_success(&chain, 0.02, n, 2).unwrap();
    let se = (2.0 * a * (1.0 - a) / n as f64).sqrt();
    assert!((a - b).abs() <= 3.0 * se, "{a} vs {b}");
}
