mod common;

use common::{all_simple_paths, greedy_diverse, jaccard, random_instance};
use pim_core::sampling::{diversified_top_k, yen_k_shortest, DiversityConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn yen_matches_brute_force(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let oracle = all_simple_paths(&inst.graph, inst.s, inst.d);
        let got = yen_k_shortest(&inst.graph, inst.s, inst.d, inst.k).unwrap();
        let want: Vec<_> = oracle.iter().take(inst.k).collect();
        prop_assert_eq!(got.len(), want.len());
        for ((p, l), (q, m)) in got.iter().zip(want) {
            prop_assert_eq!(p.nodes(), q.as_slice());
            prop_assert_eq!(*l, *m);
        }
    }

    #[test]
    fn diversified_paths_respect_threshold(seed in any::<u64>(), tau in 0.0..0.95f64) {
        let inst = random_instance(seed);
        let cfg = DiversityConfig::new(inst.k, tau);
        let got = diversified_top_k(&inst.graph, inst.s, inst.d, &cfg).unwrap();
        for (i, a) in got.paths.iter().enumerate() {
            for b in &got.paths[i + 1..] {
                prop_assert!(jaccard(a.nodes(), b.nodes(), inst.s, inst.d) <= tau);
            }
        }
        let oracle = all_simple_paths(&inst.graph, inst.s, inst.d);
        let want = greedy_diverse(&oracle, inst.s, inst.d, inst.k, tau, cfg.max_candidates);
        let got: Vec<Vec<usize>> = got.paths.iter().map(|p| p.nodes().to_vec()).collect();
        prop_assert_eq!(got.len() < inst.k, want.len() < inst.k);
        prop_assert_eq!(got, want);
    }
}
