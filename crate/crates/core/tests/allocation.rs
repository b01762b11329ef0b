use ancosa::allocation::*;
use ancosa::oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(s: &str) -> Probability {
    s.parse().unwrap()
}

fn random_parts(rng: &mut ChaCha8Rng, centers: u32, max_part: u32) -> Vec<u32> {
    (0..centers).map(|_| rng.random_range(1..=max_part)).collect()
}

#[test]
fn dp_enumeration_matches_recursion_up_to_40() {
    for n in 1..=40 {
        for centers in 1..=n {
            let dp: Vec<Vec<u32>> = enumerate_allocations(n, centers)
                .unwrap()
                .into_iter()
                .map(|a| a.parts().to_vec())
                .collect();
            assert_eq!(dp, oracle::partitions(n, centers), "P({n}, {centers})");
            assert_eq!(partition_count(n, centers), dp.len() as u128);
        }
    }
}

#[test]
fn streamed_enumeration_matches_table() {
    for (n, centers) in [(30, 7), (45, 9), (24, 24), (12, 1)] {
        let streamed: Vec<_> = PartitionStream::new(n, centers).unwrap().collect();
        assert_eq!(streamed, enumerate_allocations(n, centers).unwrap());
    }
    assert_eq!(
        enumerate_allocations_capped(45, 9, 10),
        Err(AllocationError::TooManyAllocations { count: partition_count(45, 9), cap: 10 })
    );
}

#[test]
fn subset_counts_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let centers = rng.random_range(1..=10);
        let parts = random_parts(&mut rng, centers, 6);
        let table = SumCountTable::build(&Allocation::new(parts.clone()).unwrap());
        let total: u64 = parts.iter().map(|&x| x as u64).sum();
        for l in 0..=centers as usize {
            for v in 0..=total {
                let expected = oracle::subset_count(&parts, l, v);
                assert_eq!(table.count(l, v), expected.to_biguint().unwrap(), "{parts:?} l={l} v={v}");
            }
        }
    }
}

#[test]
fn probabilities_match_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..200 {
        let centers = rng.random_range(1..=12);
        let parts = random_parts(&mut rng, centers, 5);
        let alloc = Allocation::new(parts.clone()).unwrap();
        let n = alloc.n();
        let k = rng.random_range(1..=n);
        let prob = Probability::exact(rng.random_range(0..=1000), 1000).unwrap();
        let params = StorageParams::new(n, k, centers, prob.clone()).unwrap();
        assert_eq!(
            failure_probability(&alloc, &params).unwrap(),
            oracle::failure_probability(alloc.parts(), n, k, &prob)
        );
    }
}

#[test]
fn float_probabilities_match_within_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    for _ in 0..100 {
        let centers = rng.random_range(1..=14);
        let alloc = Allocation::new(random_parts(&mut rng, centers, 7)).unwrap();
        let n = alloc.n();
        let k = rng.random_range(1..=n);
        let prob = Probability::float(rng.random::<f64>()).unwrap();
        let params = StorageParams::new(n, k, centers, prob.clone()).unwrap();
        let fast = failure_probability(&alloc, &params).unwrap().to_f64();
        let slow = oracle::failure_probability(alloc.parts(), n, k, &prob).to_f64();
        assert!((fast - slow).abs() <= 1e-12, "{alloc}: {fast} vs {slow}");
    }
}

#[test]
fn optimum_matches_exhaustive_search() {
    let params = StorageParams::new(12, 5, 4, p("0.1")).unwrap();
    let (alloc, prob) = optimal_allocation(&params).unwrap();
    let (brute, brute_prob) = oracle::optimal_allocation(&params).unwrap();
    assert_eq!((alloc, prob), (brute, brute_prob));

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..40 {
        let n = rng.random_range(2..=20);
        let centers = rng.random_range(1..=n.min(8));
        let k = rng.random_range(1..=n);
        let params = StorageParams::new(n, k, centers, Probability::exact(rng.random_range(1..100), 100).unwrap()).unwrap();
        assert_eq!(optimal_allocation(&params).unwrap(), oracle::optimal_allocation(&params).unwrap());
    }
}

#[test]
fn even_allocation_never_beats_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..200 {
        let n = rng.random_range(1..=24);
        let centers = rng.random_range(1..=n.min(8));
        let k = rng.random_range(1..=n);
        let params = StorageParams::new(n, k, centers, Probability::exact(rng.random_range(0..=50), 100).unwrap()).unwrap();
        let even = failure_probability(&even_allocation(n, centers).unwrap(), &params).unwrap();
        let (_, best) = optimal_allocation(&params).unwrap();
        assert!(best <= even);
    }
}

#[test]
fn optimum_is_monotone_in_k() {
    for (n, centers) in [(20, 5), (16, 4), (24, 6)] {
        let mut last = Probability::exact(0, 1).unwrap();
        for k in 1..=n {
            let params = StorageParams::new(n, k, centers, p("0.2")).unwrap();
            let (_, prob) = optimal_allocation(&params).unwrap();
            assert!(prob >= last, "n={n} N={centers} k={k}");
            last = prob;
        }
    }
}

#[test]
fn merge_work_grows_like_n_times_n_squared() {
    // the counted work per allocation stays below a constant times n·N²
    let mut worst: f64 = 0.0;
    for n in (20..=200).step_by(20) {
        for centers in (4..=20).step_by(4) {
            let alloc = even_allocation(n, centers).unwrap();
            let work = SumCountTable::build(&alloc).work() as f64;
            worst = worst.max(work / (n as f64 * (centers * centers) as f64));
        }
    }
    assert!(worst <= 2.0, "work / (n N^2) reached {worst}");
}

#[test]
fn counts_exceed_64_bits_without_overflow() {
    let alloc = Allocation::new(vec![1; 70]).unwrap();
    let table = SumCountTable::build(&alloc);
    assert!(table.count(35, 35) > num_bigint::BigUint::from(u64::MAX));
    assert_eq!(table.nonempty_subsets(), (num_bigint::BigUint::from(1u8) << 70usize) - 1u8);
}

proptest! {
    #[test]
    fn probabilities_are_in_unit_interval(parts in prop::collection::vec(1u32..6, 1..9), k_frac in 0.0f64..1.0, q in 0u32..=100) {
        let alloc = Allocation::new(parts).unwrap();
        let n = alloc.n();
        let k = ((n as f64 * k_frac) as u32).clamp(1, n);
        let params = StorageParams::new(n, k, alloc.centers(), Probability::exact(q as i64, 100).unwrap()).unwrap();
        let prob = failure_probability(&alloc, &params).unwrap();
        prop_assert!(prob >= Probability::exact(0, 1).unwrap());
        prop_assert!(prob <= Probability::exact(1, 1).unwrap());
    }
}
