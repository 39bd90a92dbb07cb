mod common;

use projtrack::assignment::{gate_costs, solve};
use projtrack::rng::SplitMix64;
use proptest::prelude::*;

proptest! {
    #[test]
    fn matches_exhaustive_search(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let cost = common::random_gated_costs(&mut rng, 5, false);
        let m = solve(&cost);
        let (count, best) = common::brute_force_matching(&cost);
        prop_assert_eq!(m.pairs.len(), count);
        prop_assert!((m.total_cost(&cost) - best).abs() <= 1e-9 * best.max(1.0));
        let rows = cost.len();
        let cols = cost.first().map_or(0, Vec::len);
        prop_assert_eq!(m.pairs.len() + m.unmatched_rows.len(), rows);
        prop_assert_eq!(m.pairs.len() + m.unmatched_cols.len(), cols);
        for &(r, c) in &m.pairs {
            prop_assert!(cost[r][c].is_some());
        }
    }
}

#[test]
fn three_by_three_permutations() {
    let cost = gate_costs(
        &[
            vec![7.0, 3.0, 9.0],
            vec![2.0, 8.0, 4.0],
            vec![6.0, 5.0, 1.0],
        ],
        8.0,
    );
    let m = solve(&cost);
    assert_eq!(m.pairs, vec![(0, 1), (1, 0), (2, 2)]);
    assert_eq!(m.total_cost(&cost), 6.0);
    assert_eq!(common::brute_force_matching(&cost), (3, 6.0));
}
