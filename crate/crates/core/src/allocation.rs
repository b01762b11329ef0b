//! Optimal storage allocation for regenerating-coded data.
//!
//! `n` coded parts are spread over `N` data centers, each failing
//! independently with probability `p`. Data survives as long as the surviving
//! centers still hold at least `k` parts, so an allocation fails exactly when
//! the parts held by failed centers sum to more than `n - k`.
//!
//! The solver runs in two stages:
//!
//! 1. [`PartitionTable`] enumerates every valid allocation (partition of `n`
//!    into `N` positive parts) bottom-up from
//!    `P(i, j) = P(i-1, j-1) + P(i-j, j)`: partitions that contain a 1, and
//!    partitions whose parts are all at least 2 (a smaller partition with
//!    every part bumped by one).
//! 2. [`SumCountTable`] merges sorted subset-sum lists one element at a time,
//!    counting for every distinct sum how many `l`-element subsets reach it.
//!    The failure probability is then a sum over those counts instead of over
//!    all 2^N failure patterns.
//!
//! Probabilities are exact rationals whenever `p` is (any decimal literal
//! parses as one), and `f64` otherwise.
//!
//! The strict `>` in the failure condition matters: with n = 4, k = 2 and
//! allocation {2, 2}, losing one center leaves 2 = k parts and the data is
//! still recoverable.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Largest P(n, N) that [`enumerate_allocations`] will materialize.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocationError {
    #[error("no valid allocation: {centers} centers for {n} parts")]
    NoValidAllocation { n: u32, centers: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{count} allocations exceed the enumeration cap of {cap}")]
    TooManyAllocations { count: u128, cap: u128 },
}

/// A probability, exact when it came from a decimal or fractional literal.
#[derive(Debug, Clone, PartialEq)]
pub enum Probability {
    Exact(BigRational),
    Float(f64),
}

impl Probability {
    pub fn exact(numer: i64, denom: i64) -> Result<Self, AllocationError> {
        if denom == 0 {
            return Err(AllocationError::Config("zero denominator".into()));
        }
        Probability::Exact(BigRational::new(numer.into(), denom.into())).validated()
    }

    pub fn float(p: f64) -> Result<Self, AllocationError> {
        Probability::Float(p).validated()
    }

    fn validated(self) -> Result<Self, AllocationError> {
        let ok = match &self {
            Probability::Exact(r) => *r >= BigRational::zero() && *r <= BigRational::one(),
            Probability::Float(x) => (0.0..=1.0).contains(x),
        };
        if ok {
            Ok(self)
        } else {
            Err(AllocationError::Config(format!(
                "probability {} outside [0, 1]",
                self.to_f64()
            )))
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Probability::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Probability::Float(x) => *x,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Probability::Exact(_))
    }

    /// Weight of one failure pattern with `l` of `centers` centers down:
    /// p^l (1-p)^(centers-l), for l = 0..=centers.
    fn pattern_weights(&self, centers: usize) -> Weights {
        match self {
            Probability::Exact(p) => {
                let q = BigRational::one() - p;
                Weights::Exact(
                    (0..=centers)
                        .map(|l| pow(p, l) * pow(&q, centers - l))
                        .collect(),
                )
            }
            Probability::Float(p) => Weights::Float(
                (0..=centers)
                    .map(|l| p.powi(l as i32) * (1.0 - p).powi((centers - l) as i32))
                    .collect(),
            ),
        }
    }
}

fn pow(x: &BigRational, e: usize) -> BigRational {
    num_traits::pow(x.clone(), e)
}

impl PartialOrd for Probability {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Probability::Exact(a), Probability::Exact(b)) => Some(a.cmp(b)),
            _ => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl FromStr for Probability {
    type Err = AllocationError;

    /// Accepts `a/b`, plain decimals (`0.01`) and scientific notation
    /// (`1e-2`), all parsed exactly.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AllocationError::Config(format!("cannot parse probability {s:?}"));
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let a: BigInt = a.trim().parse().map_err(|_| bad())?;
            let b: BigInt = b.trim().parse().map_err(|_| bad())?;
            if b.is_zero() {
                return Err(bad());
            }
            return Probability::Exact(BigRational::new(a, b)).validated();
        }
        let (mantissa, exp) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        if digits.is_empty() || !digits.trim_start_matches(['-', '+']).chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let numer: BigInt = digits.parse().map_err(|_| bad())?;
        let scale = exp - frac_part.len() as i32;
        let ten = BigInt::from(10u8);
        let value = if scale >= 0 {
            BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
        } else {
            BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
        };
        Probability::Exact(value).validated()
    }
}

enum Weights {
    Exact(Vec<BigRational>),
    Float(Vec<f64>),
}

/// A valid allocation: `N` positive part counts summing to `n`, kept sorted
/// non-descending.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Allocation {
    parts: Vec<u32>,
}

impl Allocation {
    pub fn new(mut parts: Vec<u32>) -> Result<Self, AllocationError> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(AllocationError::Config(
                "an allocation needs at least one center and every center at least one part"
                    .into(),
            ));
        }
        parts.sort_unstable();
        Ok(Allocation { parts })
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn n(&self) -> u32 {
        self.parts.iter().sum()
    }

    pub fn centers(&self) -> u32 {
        self.parts.len() as u32
    }

    fn with_one(&self) -> Allocation {
        let mut parts = Vec::with_capacity(self.parts.len() + 1);
        parts.push(1);
        parts.extend_from_slice(&self.parts);
        Allocation { parts }
    }

    fn plus_one(&self) -> Allocation {
        Allocation {
            parts: self.parts.iter().map(|x| x + 1).collect(),
        }
    }
}

impl fmt::Display for Allocation {
    /// Parts joined by `+`, e.g. `2+2+3`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageParams {
    pub n: u32,
    pub k: u32,
    pub centers: u32,
    pub p: Probability,
}

impl StorageParams {
    pub fn new(n: u32, k: u32, centers: u32, p: Probability) -> Result<Self, AllocationError> {
        if n == 0 || k == 0 || centers == 0 {
            return Err(AllocationError::Config("n, k and N must be positive".into()));
        }
        if k > n {
            return Err(AllocationError::Config(format!("k = {k} exceeds n = {n}")));
        }
        if centers > n {
            return Err(AllocationError::NoValidAllocation { n, centers });
        }
        Ok(StorageParams { n, k, centers, p })
    }

    /// Largest failed-part total the data survives.
    pub fn tolerance(&self) -> u32 {
        self.n - self.k
    }
}

fn check_shape(n: u32, centers: u32) -> Result<(), AllocationError> {
    if n == 0 || centers == 0 {
        return Err(AllocationError::Config("n and N must be positive".into()));
    }
    if centers > n {
        return Err(AllocationError::NoValidAllocation { n, centers });
    }
    Ok(())
}

/// Number of partitions of `n` into exactly `centers` parts, saturating.
pub fn partition_count(n: u32, centers: u32) -> u128 {
    let (n, m) = (n as usize, centers as usize);
    if m == 0 || m > n {
        return 0;
    }
    // counts[i][j] for i <= n, j <= m
    let mut counts = vec![vec![0u128; m + 1]; n + 1];
    counts[0][0] = 1;
    for i in 1..=n {
        for j in 1..=m.min(i) {
            counts[i][j] = counts[i - 1][j - 1].saturating_add(counts[i - j][j]);
        }
    }
    counts[n][m]
}

/// Bottom-up table of all partitions S(i, j, ·) for i <= n, j <= N.
pub struct PartitionTable {
    max_n: usize,
    max_centers: usize,
    // cells[i][j], 1-based in both; index 0 unused
    cells: Vec<Vec<Vec<Allocation>>>,
}

impl PartitionTable {
    pub fn build(n: u32, centers: u32) -> Result<Self, AllocationError> {
        if n == 0 || centers == 0 {
            return Err(AllocationError::Config("n and N must be positive".into()));
        }
        let (n, m) = (n as usize, centers as usize);
        let mut cells: Vec<Vec<Vec<Allocation>>> = vec![vec![Vec::new(); m + 1]; n + 1];
        for i in 1..=n {
            cells[i][1] = vec![Allocation {
                parts: vec![i as u32],
            }];
            for j in 2..=m {
                if i < j {
                    continue;
                }
                // partitions with at least one part equal to 1
                let mut here: Vec<Allocation> =
                    cells[i - 1][j - 1].iter().map(Allocation::with_one).collect();
                if i - j >= j {
                    // partitions whose parts are all >= 2
                    here.extend(cells[i - j][j].iter().map(Allocation::plus_one));
                }
                cells[i][j] = here;
            }
        }
        Ok(PartitionTable {
            max_n: n,
            max_centers: m,
            cells,
        })
    }

    /// S(i, j, ·) in construction order, or `None` outside the table.
    pub fn get(&self, i: u32, j: u32) -> Option<&[Allocation]> {
        let (i, j) = (i as usize, j as usize);
        if (1..=self.max_n).contains(&i) && (1..=self.max_centers).contains(&j) {
            Some(&self.cells[i][j])
        } else {
            None
        }
    }
}

/// Every valid allocation of `n` parts over `centers` centers, in
/// lexicographic order. Errors if P(n, N) exceeds `cap`.
pub fn enumerate_allocations_capped(
    n: u32,
    centers: u32,
    cap: u128,
) -> Result<Vec<Allocation>, AllocationError> {
    check_shape(n, centers)?;
    let count = partition_count(n, centers);
    if count > cap {
        return Err(AllocationError::TooManyAllocations { count, cap });
    }
    let table = PartitionTable::build(n, centers)?;
    let mut out = table.get(n, centers).unwrap_or_default().to_vec();
    out.sort_unstable();
    Ok(out)
}

pub fn enumerate_allocations(n: u32, centers: u32) -> Result<Vec<Allocation>, AllocationError> {
    enumerate_allocations_capped(n, centers, DEFAULT_ENUMERATION_CAP)
}

/// Lazy lexicographic stream of the partitions of `n` into `centers` parts,
/// for instances too large to materialize.
pub struct PartitionStream {
    current: Option<Vec<u32>>,
}

impl PartitionStream {
    pub fn new(n: u32, centers: u32) -> Result<Self, AllocationError> {
        check_shape(n, centers)?;
        let mut first = vec![1; centers as usize];
        *first.last_mut().unwrap() = n - (centers - 1);
        Ok(PartitionStream {
            current: Some(first),
        })
    }
}

impl Iterator for PartitionStream {
    type Item = Allocation;

    fn next(&mut self) -> Option<Allocation> {
        let cur = self.current.take()?;
        let out = Allocation { parts: cur.clone() };
        // Advance: find the rightmost position i < last that can be bumped
        // while keeping the tail non-descending.
        let m = cur.len();
        let total: u32 = cur.iter().sum();
        let mut prefix = total - cur[m - 1];
        for i in (0..m.saturating_sub(1)).rev() {
            prefix -= cur[i];
            let v = cur[i] + 1;
            let rest = total - prefix;
            // positions i..m-1 all at least v
            if v as u64 * (m - i) as u64 <= rest as u64 {
                let mut next = cur[..i].to_vec();
                next.extend(std::iter::repeat_n(v, m - i - 1));
                next.push(rest - v * (m - i - 1) as u32);
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// Distinct subset sums of an allocation with per-cardinality counts.
///
/// Entry `j` has value `V(j)`; `count(l, j)` is the number of `l`-element
/// subsets summing to `V(j)`. The empty subset is kept as a sentinel at
/// value 0 (it is the only subset with that sum since parts are positive)
/// and is hidden from [`SumCountTable::values`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumCountTable {
    values: Vec<u64>,
    // counts[j][l], l = 0..=N
    counts: Vec<Vec<BigUint>>,
    centers: usize,
    work: u64,
}

impl SumCountTable {
    /// Builds the table by merging, for each part `x` in non-descending
    /// order, the current list `L` with its shifted copy `R = L + x`.
    pub fn build(alloc: &Allocation) -> SumCountTable {
        let parts = alloc.parts();
        let total = parts.len();
        let mut values: Vec<u64> = vec![0];
        let mut counts: Vec<Vec<BigUint>> = vec![vec![BigUint::one()]];
        let mut work = 0u64;

        for (round, &x) in parts.iter().enumerate() {
            let width = round + 2; // cardinalities 0..=round+1
            // R = L + x with every cardinality shifted up by one
            let shifted_values: Vec<u64> = values.iter().map(|v| v + x as u64).collect();
            let shifted_counts: Vec<Vec<BigUint>> = counts
                .iter()
                .map(|c| {
                    let mut s = vec![BigUint::zero(); width];
                    for (l, v) in c.iter().enumerate() {
                        s[l + 1].clone_from(v);
                    }
                    s
                })
                .collect();
            work += (counts.len() * width) as u64;

            let mut merged_values = Vec::with_capacity(values.len() + shifted_values.len());
            let mut merged_counts = Vec::with_capacity(values.len() + shifted_values.len());
            let (mut li, mut ri) = (0, 0);
            let widen = |c: &Vec<BigUint>| {
                let mut w = c.clone();
                w.resize(width, BigUint::zero());
                w
            };
            while li < values.len() {
                match values[li].cmp(&shifted_values[ri]) {
                    Ordering::Equal => {
                        let mut c = widen(&counts[li]);
                        for (a, b) in c.iter_mut().zip(&shifted_counts[ri]) {
                            *a += b;
                        }
                        merged_values.push(values[li]);
                        merged_counts.push(c);
                        li += 1;
                        ri += 1;
                    }
                    Ordering::Less => {
                        merged_values.push(values[li]);
                        merged_counts.push(widen(&counts[li]));
                        li += 1;
                    }
                    Ordering::Greater => {
                        merged_values.push(shifted_values[ri]);
                        merged_counts.push(shifted_counts[ri].clone());
                        ri += 1;
                    }
                }
                work += width as u64;
            }
            // L is exhausted; the rest of R is larger than anything in L.
            for j in ri..shifted_values.len() {
                merged_values.push(shifted_values[j]);
                merged_counts.push(shifted_counts[j].clone());
                work += width as u64;
            }
            values = merged_values;
            counts = merged_counts;
        }

        SumCountTable {
            values,
            counts,
            centers: total,
            work,
        }
    }

    /// Distinct sums of nonempty subsets, ascending.
    pub fn values(&self) -> &[u64] {
        &self.values[1..]
    }

    pub fn centers(&self) -> usize {
        self.centers
    }

    /// Number of `l`-element subsets summing to `value`.
    pub fn count(&self, l: usize, value: u64) -> BigUint {
        self.values
            .binary_search(&value)
            .ok()
            .and_then(|j| self.counts[j].get(l).cloned())
            .unwrap_or_default()
    }

    /// Number of `l`-element subsets whose sum exceeds `threshold`.
    pub fn count_above(&self, l: usize, threshold: u64) -> BigUint {
        let start = self.values.partition_point(|&v| v <= threshold);
        self.counts[start..]
            .iter()
            .filter_map(|c| c.get(l))
            .sum()
    }

    /// Total number of nonempty subsets counted, 2^N - 1 when correct.
    pub fn nonempty_subsets(&self) -> BigUint {
        self.counts
            .iter()
            .flat_map(|c| c.iter().skip(1))
            .sum()
    }

    /// Counter updates performed while building; used to check scaling.
    pub fn work(&self) -> u64 {
        self.work
    }

    fn weighted_sum_above(&self, threshold: u64, weights: &Weights) -> Probability {
        let per_card: Vec<BigUint> = (0..=self.centers)
            .map(|l| self.count_above(l, threshold))
            .collect();
        match weights {
            Weights::Exact(w) => Probability::Exact(
                per_card
                    .iter()
                    .zip(w)
                    .filter(|(c, _)| !c.is_zero())
                    .map(|(c, w)| BigRational::from_integer(BigInt::from(c.clone())) * w)
                    .fold(BigRational::zero(), |a, b| a + b),
            ),
            Weights::Float(w) => Probability::Float(
                per_card
                    .iter()
                    .zip(w)
                    .map(|(c, w)| c.to_f64().unwrap_or(f64::INFINITY) * w)
                    .sum(),
            ),
        }
    }
}

/// Probability that the failed centers hold more than n - k parts.
pub fn failure_probability(
    alloc: &Allocation,
    params: &StorageParams,
) -> Result<Probability, AllocationError> {
    if alloc.n() != params.n || alloc.centers() != params.centers {
        return Err(AllocationError::Config(format!(
            "allocation {alloc} does not match n = {}, N = {}",
            params.n, params.centers
        )));
    }
    let weights = params.p.pattern_weights(params.centers as usize);
    Ok(SumCountTable::build(alloc).weighted_sum_above(params.tolerance() as u64, &weights))
}

/// The allocation minimizing the failure probability, with that probability.
/// Ties go to the lexicographically smallest sorted parts.
pub fn optimal_allocation(
    params: &StorageParams,
) -> Result<(Allocation, Probability), AllocationError> {
    optimal_allocation_capped(params, DEFAULT_ENUMERATION_CAP)
}

/// As [`optimal_allocation`], streaming the candidates instead of
/// materializing them when P(n, N) exceeds `cap`.
pub fn optimal_allocation_capped(
    params: &StorageParams,
    cap: u128,
) -> Result<(Allocation, Probability), AllocationError> {
    let weights = params.p.pattern_weights(params.centers as usize);
    let threshold = params.tolerance() as u64;
    let eval = |a: Allocation| {
        let p = SumCountTable::build(&a).weighted_sum_above(threshold, &weights);
        (a, p)
    };
    let better = |x: (Allocation, Probability), y: (Allocation, Probability)| {
        match x.1.partial_cmp(&y.1) {
            Some(Ordering::Less) => x,
            Some(Ordering::Greater) => y,
            _ => {
                if x.0 <= y.0 {
                    x
                } else {
                    y
                }
            }
        }
    };
    let best = match enumerate_allocations_capped(params.n, params.centers, cap) {
        Ok(all) => all.into_par_iter().map(eval).reduce_with(better),
        Err(AllocationError::TooManyAllocations { .. }) => {
            PartitionStream::new(params.n, params.centers)?
                .par_bridge()
                .map(eval)
                .reduce_with(better)
        }
        Err(e) => return Err(e),
    };
    best.ok_or(AllocationError::NoValidAllocation {
        n: params.n,
        centers: params.centers,
    })
}

/// ⌊n/N⌋ + 1 parts on the first n mod N centers, ⌊n/N⌋ on the rest.
pub fn even_allocation(n: u32, centers: u32) -> Result<Allocation, AllocationError> {
    check_shape(n, centers)?;
    let (q, r) = (n / centers, n % centers);
    Allocation::new(
        (0..centers)
            .map(|i| if i < r { q + 1 } else { q })
            .collect(),
    )
}

pub type Rational = Ratio<u128>;

/// Storage per node and repair bandwidth of a regenerating code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegenPoint {
    pub alpha: Rational,
    pub gamma: Rational,
}

/// Minimum-storage and minimum-bandwidth points of the storage/repair
/// tradeoff for file size `b`, `k` nodes to reconstruct and `d` helpers.
pub fn regen_points(b: u64, k: u64, d: u64) -> Result<(RegenPoint, RegenPoint), AllocationError> {
    if b == 0 || k == 0 || d == 0 {
        return Err(AllocationError::Config("B, k and d must be positive".into()));
    }
    if k > d {
        return Err(AllocationError::Config(format!("k = {k} exceeds d = {d}")));
    }
    let (b, k, d) = (b as u128, k as u128, d as u128);
    let msr = RegenPoint {
        alpha: Rational::new(b, k),
        gamma: Rational::new(b * d, k * (d - k + 1)),
    };
    let mbr_value = Rational::new(2 * b * d, 2 * k * d - k * k + k);
    let mbr = RegenPoint {
        alpha: mbr_value,
        gamma: mbr_value,
    };
    Ok((msr, mbr))
}

/// Σ_{i=0}^{k-1} min(α, (d - i)·β), the most data a (k, d, α, β) code can
/// protect.
pub fn cutset_bound(k: u64, d: u64, alpha: Rational, beta: Rational) -> Rational {
    (0..k)
        .map(|i| {
            let helpers = Rational::from_integer(d.saturating_sub(i) as u128);
            alpha.min(helpers * beta)
        })
        .fold(Rational::zero(), |a, b| a + b)
}

/// Whether file size `b` fits under the cut-set bound.
pub fn cutset_bound_ok(b: u64, k: u64, d: u64, alpha: Rational, beta: Rational) -> bool {
    Rational::from_integer(b as u128) <= cutset_bound(k, d, alpha, beta)
}

/// Cartesian grid of allocation instances.
#[derive(Debug, Clone)]
pub struct ReliabilityGrid {
    pub n: Vec<u32>,
    pub k: Vec<u32>,
    pub centers: Vec<u32>,
    pub p: Vec<Probability>,
}

impl ReliabilityGrid {
    fn cells(&self) -> Vec<(u32, u32, u32, Probability)> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &k in &self.k {
                for &c in &self.centers {
                    for p in &self.p {
                        out.push((n, k, c, p.clone()));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityRow {
    pub n: u32,
    pub k: u32,
    pub centers: u32,
    pub p: Probability,
    pub p_even: Probability,
    pub p_osa: Probability,
    pub osa_allocation: Allocation,
}

/// Outcome of one grid cell; failures are kept so the sweep never aborts.
pub type ReliabilityCell = Result<ReliabilityRow, ((u32, u32, u32, Probability), AllocationError)>;

pub fn sweep_reliability(grid: &ReliabilityGrid) -> Result<Vec<ReliabilityCell>, AllocationError> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(AllocationError::Config("empty grid".into()));
    }
    Ok(cells
        .into_par_iter()
        .map(|(n, k, c, p)| {
            let run = || {
                let params = StorageParams::new(n, k, c, p.clone())?;
                let even = even_allocation(n, c)?;
                let p_even = failure_probability(&even, &params)?;
                let (osa_allocation, p_osa) = optimal_allocation(&params)?;
                Ok(ReliabilityRow {
                    n,
                    k,
                    centers: c,
                    p: p.clone(),
                    p_even,
                    p_osa,
                    osa_allocation,
                })
            };
            run().map_err(|e| ((n, k, c, p.clone()), e))
        })
        .collect())
}

/// CSV header for [`sweep_reliability`] rows.
pub const RELIABILITY_CSV_HEADER: &str = "n,k,N,p,P_even,P_osa,allocation";

/// Formats a probability with twelve digits after the decimal point in
/// scientific notation, e.g. `1.000000000000e-4`.
pub fn format_probability(p: &Probability) -> String {
    format!("{:.12e}", p.to_f64())
}

impl ReliabilityRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n,
            self.k,
            self.centers,
            self.p,
            format_probability(&self.p_even),
            format_probability(&self.p_osa),
            self.osa_allocation
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alloc(parts: &[u32]) -> Allocation {
        Allocation::new(parts.to_vec()).unwrap()
    }

    fn p(s: &str) -> Probability {
        s.parse().unwrap()
    }

    #[test]
    fn probability_parsing() {
        assert_eq!(p("0.01"), Probability::exact(1, 100).unwrap());
        assert_eq!(p("1/100"), Probability::exact(1, 100).unwrap());
        assert_eq!(p("1e-2"), Probability::exact(1, 100).unwrap());
        assert_eq!(p("1"), Probability::exact(1, 1).unwrap());
        assert_eq!(p(".5"), Probability::exact(1, 2).unwrap());
        assert!("1.5".parse::<Probability>().is_err());
        assert!("-0.1".parse::<Probability>().is_err());
        assert!("abc".parse::<Probability>().is_err());
        assert!("1/0".parse::<Probability>().is_err());
        assert!(Probability::float(1.2).is_err());
    }

    #[test]
    fn worked_example() {
        let params = StorageParams::new(4, 2, 2, p("0.01")).unwrap();
        let a = failure_probability(&alloc(&[3, 1]), &params).unwrap();
        let b = failure_probability(&alloc(&[2, 2]), &params).unwrap();
        assert_eq!(a, Probability::exact(1, 100).unwrap());
        assert_eq!(b, Probability::exact(1, 10_000).unwrap());
        let (best, prob) = optimal_allocation(&params).unwrap();
        assert_eq!(best, alloc(&[2, 2]));
        assert_eq!(prob, b);
    }

    #[test]
    fn degenerate_probabilities() {
        let a = alloc(&[1, 2, 4]);
        let zero = StorageParams::new(7, 3, 3, p("0")).unwrap();
        assert_eq!(failure_probability(&a, &zero).unwrap().to_f64(), 0.0);
        let one = StorageParams::new(7, 3, 3, p("1")).unwrap();
        assert_eq!(failure_probability(&a, &one).unwrap().to_f64(), 1.0);
    }

    #[test]
    fn mismatched_allocation() {
        let params = StorageParams::new(4, 2, 2, p("0.01")).unwrap();
        assert!(matches!(
            failure_probability(&alloc(&[1, 1, 2]), &params),
            Err(AllocationError::Config(_))
        ));
    }

    #[test]
    fn seven_into_three() {
        let got = enumerate_allocations(7, 3).unwrap();
        let want: Vec<_> = [[1, 1, 5], [1, 2, 4], [1, 3, 3], [2, 2, 3]]
            .iter()
            .map(|x| alloc(x))
            .collect();
        assert_eq!(got, want);
        assert_eq!(partition_count(7, 3), 4);
        assert_eq!(enumerate_allocations(9, 1).unwrap(), vec![alloc(&[9])]);
        assert_eq!(enumerate_allocations(3, 3).unwrap(), vec![alloc(&[1, 1, 1])]);
    }

    #[test]
    fn enumeration_errors() {
        assert_eq!(
            enumerate_allocations(3, 4),
            Err(AllocationError::NoValidAllocation { n: 3, centers: 4 })
        );
        assert!(matches!(enumerate_allocations(0, 1), Err(AllocationError::Config(_))));
        assert!(matches!(enumerate_allocations(5, 0), Err(AllocationError::Config(_))));
        assert_eq!(
            enumerate_allocations_capped(20, 4, 10),
            Err(AllocationError::TooManyAllocations { count: 64, cap: 10 })
        );
    }

    #[test]
    fn stream_matches_table() {
        for n in 1..=25 {
            for c in 1..=n {
                let streamed: Vec<_> = PartitionStream::new(n, c).unwrap().collect();
                assert_eq!(streamed, enumerate_allocations(n, c).unwrap(), "({n},{c})");
            }
        }
    }

    #[test]
    fn capped_optimum_streams() {
        let params = StorageParams::new(20, 9, 4, p("0.1")).unwrap();
        assert_eq!(
            optimal_allocation_capped(&params, 1).unwrap(),
            optimal_allocation(&params).unwrap()
        );
    }

    #[test]
    fn sum_count_trace() {
        let t = SumCountTable::build(&alloc(&[1, 2, 2]));
        assert_eq!(t.values(), &[1, 2, 3, 4, 5]);
        assert_eq!(t.count(2, 3), BigUint::from(2u8));
        assert_eq!(t.count(1, 2), BigUint::from(2u8));
        assert_eq!(t.count(3, 5), BigUint::from(1u8));
        assert_eq!(t.nonempty_subsets(), BigUint::from(7u8));

        let single = SumCountTable::build(&alloc(&[6]));
        assert_eq!(single.values(), &[6]);
        assert_eq!(single.count(1, 6), BigUint::one());
    }

    #[test]
    fn counts_exceed_64_bits() {
        let a = Allocation::new(vec![1; 70]).unwrap();
        let t = SumCountTable::build(&a);
        assert_eq!(t.count(35, 35), num_integer::binomial(BigUint::from(70u8), BigUint::from(35u8)));
        assert_eq!(t.nonempty_subsets(), (BigUint::one() << 70usize) - 1u8);
    }

    #[test]
    fn total_probability_is_one() {
        let a = alloc(&[1, 3, 3, 4, 7]);
        let t = SumCountTable::build(&a);
        let w = p("3/17").pattern_weights(5);
        let everything = t.weighted_sum_above(0, &w);
        let empty = Probability::Exact(num_traits::pow(BigRational::new(14.into(), 17.into()), 5));
        match (everything, empty) {
            (Probability::Exact(a), Probability::Exact(b)) => assert_eq!(a + b, BigRational::one()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn even_baseline() {
        assert_eq!(even_allocation(45, 9).unwrap(), alloc(&[5; 9]));
        assert_eq!(even_allocation(7, 3).unwrap(), alloc(&[3, 2, 2]));
        assert_eq!(
            even_allocation(3, 5),
            Err(AllocationError::NoValidAllocation { n: 3, centers: 5 })
        );
    }

    #[test]
    fn forced_all_ones() {
        // n = N: only {1,...,1}; loss iff at least n-k+1 of N centers fail
        let params = StorageParams::new(5, 3, 5, p("1/2")).unwrap();
        let (a, prob) = optimal_allocation(&params).unwrap();
        assert_eq!(a, alloc(&[1; 5]));
        // C(5,3)+C(5,4)+C(5,5) = 16 patterns of 32
        assert_eq!(prob, Probability::exact(1, 2).unwrap());
    }

    #[test]
    fn regen_formulas() {
        let (msr, mbr) = regen_points(4, 2, 3).unwrap();
        assert_eq!(msr.alpha, Rational::from_integer(2));
        assert_eq!(msr.gamma, Rational::from_integer(3));
        assert_eq!(mbr.alpha, Rational::new(12, 5));
        assert_eq!(mbr.alpha, mbr.gamma);
        let (msr, _) = regen_points(1, 1, 1).unwrap();
        assert_eq!((msr.alpha, msr.gamma), (Rational::one(), Rational::one()));
        // with B = k = d the repair download is k, one symbol from each helper
        let (msr, _) = regen_points(5, 5, 5).unwrap();
        assert_eq!((msr.alpha, msr.gamma), (Rational::one(), Rational::from_integer(5)));
        assert!(matches!(regen_points(4, 3, 2), Err(AllocationError::Config(_))));
    }

    #[test]
    fn cutset_examples() {
        let two = Rational::from_integer(2);
        let one = Rational::one();
        assert_eq!(cutset_bound(2, 3, two, one), Rational::from_integer(4));
        assert!(cutset_bound_ok(4, 2, 3, two, one));
        assert!(!cutset_bound_ok(5, 2, 3, two, one));
        let huge = Rational::from_integer(1 << 40);
        assert!(cutset_bound_ok(1_000_000, 4, 6, huge, huge));
    }

    #[test]
    fn single_cell_sweep() {
        let grid = ReliabilityGrid {
            n: vec![12],
            k: vec![5],
            centers: vec![4],
            p: vec![p("0.1")],
        };
        let rows = sweep_reliability(&grid).unwrap();
        assert_eq!(rows.len(), 1);
        let row = rows[0].as_ref().unwrap();
        assert!(row.p_osa <= row.p_even);
        assert!(row.csv_line().starts_with("12,5,4,0.1,"));

        let bad = ReliabilityGrid {
            n: vec![3],
            k: vec![2],
            centers: vec![4, 3],
            p: vec![p("0.1")],
        };
        let rows = sweep_reliability(&bad).unwrap();
        assert!(rows[0].is_err());
        assert!(rows[1].is_ok());
        assert!(sweep_reliability(&ReliabilityGrid { n: vec![], ..grid }).is_err());
    }

    #[test]
    fn formatting() {
        assert_eq!(format_probability(&p("0.0001")), "1.000000000000e-4");
        assert_eq!(alloc(&[3, 2, 2]).to_string(), "2+2+3");
    }
}
