//! Brute-force reference implementations.
//!
//! Deliberately naive and independent of the table-driven code in
//! [`crate::allocation`]: partitions come from plain recursion and failure
//! probabilities from walking all 2^N failure patterns. Used by the test
//! suites and by the CLI's `--oracle` mode.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::allocation::{Allocation, AllocationError, Probability, StorageParams};

/// Partitions of `n` into exactly `centers` parts, each non-descending, in
/// lexicographic order.
pub fn partitions(n: u32, centers: u32) -> Vec<Vec<u32>> {
    fn go(remaining: u32, slots: u32, min_part: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 0 {
            if remaining == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        if slots == 1 {
            if remaining >= min_part {
                prefix.push(remaining);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        let mut part = min_part;
        while part * slots <= remaining {
            prefix.push(part);
            go(remaining - part, slots - 1, part, prefix, out);
            prefix.pop();
            part += 1;
        }
    }
    let mut out = Vec::new();
    if centers > 0 {
        go(n, centers, 1, &mut Vec::new(), &mut out);
    }
    out
}

/// Failure probability by enumerating every subset of failed centers.
/// Limited to N <= 24.
pub fn failure_probability(parts: &[u32], n: u32, k: u32, p: &Probability) -> Probability {
    let centers = parts.len();
    assert!(centers <= 24, "brute force limited to 24 centers");
    let tolerance = (n - k) as u64;
    // losing patterns, by number of failed centers
    let mut losing = vec![0u64; centers + 1];
    for mask in 0u32..(1 << centers) {
        let (failed, lost) = pattern(parts, mask);
        if lost > tolerance {
            losing[failed] += 1;
        }
    }
    match p {
        Probability::Exact(p) => {
            let q = BigRational::one() - p;
            let mut total = BigRational::zero();
            for (failed, &count) in losing.iter().enumerate() {
                if count > 0 {
                    let w = num_traits::pow(p.clone(), failed)
                        * num_traits::pow(q.clone(), centers - failed);
                    total += w * BigRational::from_integer(BigInt::from(count));
                }
            }
            Probability::Exact(total)
        }
        Probability::Float(p) => Probability::Float(
            losing
                .iter()
                .enumerate()
                .map(|(failed, &count)| {
                    count as f64 * p.powi(failed as i32) * (1.0 - p).powi((centers - failed) as i32)
                })
                .sum(),
        ),
    }
}

fn pattern(parts: &[u32], mask: u32) -> (usize, u64) {
    let mut failed = 0;
    let mut lost = 0u64;
    for (i, &x) in parts.iter().enumerate() {
        if mask >> i & 1 == 1 {
            failed += 1;
            lost += x as u64;
        }
    }
    (failed, lost)
}

/// Number of `l`-element subsets of `parts` summing to `value`, by
/// enumeration.
pub fn subset_count(parts: &[u32], l: usize, value: u64) -> BigInt {
    let mut c = 0u64;
    for mask in 0u32..(1 << parts.len()) {
        let (size, sum) = pattern(parts, mask);
        if size == l && sum == value {
            c += 1;
        }
    }
    BigInt::from(c)
}

/// Exhaustive optimum: recursive partitions times brute-force evaluation,
/// first minimum in lexicographic order.
pub fn optimal_allocation(params: &StorageParams) -> Result<(Allocation, Probability), AllocationError> {
    let mut best: Option<(Vec<u32>, Probability)> = None;
    for parts in partitions(params.n, params.centers) {
        let prob = failure_probability(&parts, params.n, params.k, &params.p);
        let replace = match &best {
            None => true,
            Some((_, b)) => prob < *b,
        };
        if replace {
            best = Some((parts, prob));
        }
    }
    let (parts, prob) = best.ok_or(AllocationError::NoValidAllocation {
        n: params.n,
        centers: params.centers,
    })?;
    Ok((Allocation::new(parts)?, prob))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_partitions() {
        assert_eq!(
            partitions(7, 3),
            vec![vec![1, 1, 5], vec![1, 2, 4], vec![1, 3, 3], vec![2, 2, 3]]
        );
        assert!(partitions(2, 3).is_empty());
        // p(n) for n = 10 summed over N
        assert_eq!((1..=10).map(|c| partitions(10, c).len()).sum::<usize>(), 42);
    }

    #[test]
    fn brute_force_example() {
        let p: Probability = "0.01".parse().unwrap();
        assert_eq!(
            failure_probability(&[3, 1], 4, 2, &p),
            Probability::exact(1, 100).unwrap()
        );
        assert_eq!(
            failure_probability(&[2, 2], 4, 2, &p),
            Probability::exact(1, 10_000).unwrap()
        );
        assert_eq!(subset_count(&[1, 2, 2], 2, 3), BigInt::from(2));
    }
}
