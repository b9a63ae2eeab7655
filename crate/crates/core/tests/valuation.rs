mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vtransfer::transfer::OptimizerSettings;
use vtransfer::valuation::{
    discounted_reward, dp_evaluate, td_evaluate, IndexedBuffer, ValueTable,
};

fn buffer(seed: u64, n: usize, horizon: usize, count: usize) -> IndexedBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    IndexedBuffer::new(
        common::random_tuples(&mut rng, n, horizon, count),
        horizon,
        n,
    )
    .unwrap()
}

#[test]
fn backward_induction_matches_the_recursive_expectation() {
    for seed in 0..10 {
        let buf = buffer(seed, 4, 10, 60);
        let table = dp_evaluate(&buf, 0.9, None).unwrap();
        let oracle = common::recursive_values(buf.tuples(), 4, 10, 0.9);
        for (t, row) in oracle.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert!((table.get(t, c) - v).abs() < 1e-9, "seed {seed} ({t},{c})");
            }
        }
        assert!(table.row(10).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn unvisited_states_keep_their_warm_start() {
    let buf = buffer(3, 6, 8, 10);
    let init = ValueTable::from_rows(6, 0.9, &vec![vec![7.5; 6]; 8]).unwrap();
    let table = dp_evaluate(&buf, 0.9, Some(&init)).unwrap();
    for t in 0..8 {
        for c in 0..6 {
            if buf.index().by_state(t, c).is_empty() {
                assert_eq!(table.get(t, c), 7.5);
            }
        }
    }
}

#[test]
fn installments_sum_to_the_closed_form() {
    // R/dt * (1 - g^dt) / (1 - g), and R itself when g = 1
    for (r, dt, g) in [
        (10.0, 1u32, 0.9f64),
        (6.0, 3, 0.5),
        (4.0, 4, 0.95),
        (12.0, 5, 1.0),
    ] {
        let expected = if g == 1.0 {
            r
        } else {
            r / dt as f64 * (1.0 - g.powi(dt as i32)) / (1.0 - g)
        };
        assert!((discounted_reward(r, dt, g).unwrap() - expected).abs() < 1e-12);
    }
    assert!(discounted_reward(1.0, 0, 0.9).is_err());
    assert!(discounted_reward(1.0, 2, 1.5).is_err());
}

#[test]
fn csv_and_binary_round_trip_exactly() {
    let table = dp_evaluate(&buffer(8, 5, 6, 40), 0.95, None).unwrap();
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    assert_eq!(ValueTable::read_csv(&csv[..], 0.95).unwrap(), table);
    let mut bin = Vec::new();
    table.write_binary(&mut bin).unwrap();
    assert_eq!(ValueTable::read_binary(&bin[..]).unwrap(), table);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(48) })]

    #[test]
    fn least_squares_td_agrees_with_backward_induction(
        seed in any::<u64>(),
        n in 1usize..8,
        horizon in 1usize..12,
        count in 0usize..80,
        gamma in 0.5f64..=1.0,
    ) {
        let buf = buffer(seed, n, horizon, count);
        let dp = dp_evaluate(&buf, gamma, None).unwrap();
        let td = td_evaluate(&buf, gamma, &OptimizerSettings::default(), None).unwrap();
        prop_assert!(dp.sup_distance(&td).unwrap() < 1e-9);
    }

    #[test]
    fn scaling_rewards_scales_values(seed in any::<u64>(), c in 0.01f64..100.0) {
        let buf = buffer(seed, 5, 8, 50);
        let scaled: Vec<_> = buf.tuples().iter().map(|tp| {
            let mut tp = *tp;
            tp.reward *= c;
            tp
        }).collect();
        let base = dp_evaluate(&buf, 0.9, None).unwrap();
        let big = dp_evaluate(&IndexedBuffer::new(scaled, 8, 5).unwrap(), 0.9, None).unwrap();
        for (a, b) in base.values().iter().zip(big.values()) {
            prop_assert!((a * c - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn installment_sum_is_monotone_in_gamma(r in 0.0f64..100.0, dt in 1u32..20, g in 0.1f64..0.99) {
        let lo = discounted_reward(r, dt, g).unwrap();
        let hi = discounted_reward(r, dt, (g + 0.01).min(1.0)).unwrap();
        prop_assert!(lo <= hi + 1e-12 && hi <= r + 1e-9);
        prop_assert!(lo >= r * g.powi(dt as i32 - 1) - 1e-9);
    }
}
