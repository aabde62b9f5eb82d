//! Dynamical Phenomena Indicator.
//!
//! For a network of `N` oscillators split into synchronized groups,
//!
//! ```text
//! DPI = (N_sync / N_groups) / (N_unsync + N (N - 1) / 2)
//! ```
//!
//! where `N_sync` counts synchronized pairs, `N_groups` the groups and
//! `N_unsync` the oscillators that belong to no group. The indicator is 0 for
//! a fully incoherent network and 1 for complete synchronization.
//!
//! `N_unsync` is an oscillator count, not a pair count: only that reading
//! reproduces the tabulated indicator values.

use std::fmt;

use crate::error::{Error, Result};
use crate::tdle::{pair_count, pairs, PairStatus, Simulation};
use crate::model::NodeModel;

/// The `(N_sync, N_unsync, N_groups)` summary of a configuration for an `N`-node network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SyncTriplet {
    pub n: usize,
    pub n_sync: usize,
    pub n_unsync: usize,
    pub n_groups: usize,
}

impl SyncTriplet {
    pub fn new(n: usize, n_sync: usize, n_unsync: usize, n_groups: usize) -> Self {
        SyncTriplet {
            n,
            n_sync,
            n_unsync,
            n_groups,
        }
    }

    /// Whether some multiset of group sizes (each ≥ 2) produces this triplet.
    pub fn is_feasible(&self) -> bool {
        if self.n_unsync > self.n {
            return false;
        }
        let synced = self.n - self.n_unsync;
        if self.n_groups == 0 {
            return synced == 0 && self.n_sync == 0;
        }
        partitions(synced, synced, 2)
            .into_iter()
            .any(|p| p.len() == self.n_groups && group_pairs(&p) == self.n_sync)
    }
}

impl fmt::Display for SyncTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.n_sync, self.n_unsync, self.n_groups)
    }
}

/// Synchronized groups of a network, as a multiset of group sizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SyncConfiguration {
    n: usize,
    /// Sorted descending.
    group_sizes: Vec<usize>,
}

impl SyncConfiguration {
    pub fn new(n: usize, mut group_sizes: Vec<usize>) -> Result<Self> {
        if let Some(&s) = group_sizes.iter().find(|&&s| s < 2) {
            return Err(Error::invalid("group_sizes", format!("group of size {s} (< 2)")));
        }
        let total: usize = group_sizes.iter().sum();
        if total > n {
            return Err(Error::invalid(
                "group_sizes",
                format!("groups hold {total} oscillators but the network has {n}"),
            ));
        }
        group_sizes.sort_unstable_by(|a, b| b.cmp(a));
        Ok(SyncConfiguration { n, group_sizes })
    }

    pub fn incoherent(n: usize) -> Self {
        SyncConfiguration {
            n,
            group_sizes: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn n_sync(&self) -> usize {
        group_pairs(&self.group_sizes)
    }

    pub fn n_unsync(&self) -> usize {
        self.n - self.group_sizes.iter().sum::<usize>()
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn triplet(&self) -> SyncTriplet {
        SyncTriplet::new(self.n, self.n_sync(), self.n_unsync(), self.n_groups())
    }

    pub fn dpi(&self) -> DpiValue {
        dpi(&self.triplet())
    }
}

fn group_pairs(sizes: &[usize]) -> usize {
    sizes.iter().map(|&s| s * (s - 1) / 2).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpiSource {
    Measured,
    AnalyticEqualGroups,
    AnalyticTwoGroups,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpiValue {
    pub value: f64,
    pub source: DpiSource,
}

/// Indicator of a configuration triplet; 0 when there are no groups.
pub fn dpi(t: &SyncTriplet) -> DpiValue {
    let value = if t.n_groups == 0 {
        0.0
    } else {
        let n_aver = t.n_sync as f64 / t.n_groups as f64;
        n_aver / (t.n_unsync as f64 + pair_count(t.n) as f64)
    };
    DpiValue {
        value,
        source: DpiSource::Measured,
    }
}

/// Closed-form indicator for `N_sync` pairs spread over equal groups of `group_size` oscillators.
///
/// The group count `2 N_sync / (N_G (N_G - 1))` may be fractional, which turns
/// the discrete configurations into a continuous surface.
pub fn dpi_equal_groups(n: usize, group_size: f64, n_sync: f64) -> Result<DpiValue> {
    let (nf, ng) = (n as f64, group_size);
    if !(ng >= 2.0) || !ng.is_finite() {
        return Err(Error::invalid("group_size", format!("{ng} must be >= 2")));
    }
    if ng > nf {
        return Err(Error::invalid("group_size", format!("{ng} exceeds network size {n}")));
    }
    if !(n_sync >= 0.0) || !n_sync.is_finite() {
        return Err(Error::invalid("n_sync", format!("{n_sync} must be >= 0")));
    }
    let engaged = 2.0 * n_sync / (ng - 1.0);
    if engaged > nf * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "n_sync",
            format!("{n_sync} pairs in groups of {ng} need more than {n} oscillators"),
        ));
    }
    let value = (ng - 1.0) * ng / (2.0 * (nf - engaged + (nf - 1.0) * nf / 2.0));
    Ok(DpiValue {
        value,
        source: DpiSource::AnalyticEqualGroups,
    })
}

/// Sizes of the packed two-size family: `groups1` groups of `size1`, then as
/// many groups of `size1 + 1` as the remaining oscillators allow.
pub fn two_group_sizes(n: usize, size1: usize, groups1: usize) -> Result<Vec<usize>> {
    if size1 < 2 {
        return Err(Error::invalid("size1", format!("{size1} must be >= 2")));
    }
    if groups1 < 1 {
        return Err(Error::invalid("groups1", "at least one first-type group"));
    }
    let used = groups1
        .checked_mul(size1)
        .filter(|&u| u <= n)
        .ok_or_else(|| {
            Error::invalid(
                "groups1",
                format!("{groups1} groups of {size1} exceed {n} oscillators"),
            )
        })?;
    let groups2 = (n - used) / (size1 + 1);
    let mut sizes = vec![size1; groups1];
    sizes.extend(std::iter::repeat_n(size1 + 1, groups2));
    Ok(sizes)
}

/// Closed-form indicator of the packed two-size family for an `n`-node network.
///
/// The constant term of the denominator is `n + n (n - 1) / 2` (5050 for 100 nodes).
pub fn dpi_two_groups(n: usize, size1: usize, groups1: usize) -> Result<DpiValue> {
    let sizes = two_group_sizes(n, size1, groups1)?;
    let g1 = groups1 as f64;
    let s1 = size1 as f64;
    let q = (sizes.len() - groups1) as f64;
    let total = n as f64 + pair_count(n) as f64;
    let num = g1 * (s1 - 1.0) * s1 + q * s1 * (s1 + 1.0);
    let den = 2.0 * (g1 + q) * (-g1 * s1 - q * (s1 + 1.0) + total);
    Ok(DpiValue {
        value: num / den,
        source: DpiSource::AnalyticTwoGroups,
    })
}

// Partitions of `total` into parts in [min_part, max_part], parts descending.
fn partitions(total: usize, max_part: usize, min_part: usize) -> Vec<Vec<usize>> {
    if total == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in (min_part..=max_part.min(total)).rev() {
        for mut rest in partitions(total - p, p, min_part) {
            rest.insert(0, p);
            out.push(rest);
        }
    }
    out
}

/// Largest network size accepted by [`enumerate_configurations`].
pub const MAX_ENUMERATION_N: usize = 12;

/// Every non-empty multiset of group sizes ≥ 2 with total ≤ `n`, sorted by DPI descending.
pub fn enumerate_configurations(n: usize) -> Result<Vec<SyncConfiguration>> {
    if n > MAX_ENUMERATION_N {
        return Err(Error::invalid(
            "n",
            format!("{n} exceeds the enumeration limit {MAX_ENUMERATION_N}"),
        ));
    }
    let mut out: Vec<SyncConfiguration> = (2..=n)
        .flat_map(|s| partitions(s, s, 2))
        .map(|group_sizes| SyncConfiguration { n, group_sizes })
        .collect();
    out.sort_by(|a, b| {
        b.dpi()
            .value
            .total_cmp(&a.dpi().value)
            .then_with(|| a.group_sizes.cmp(&b.group_sizes))
    });
    Ok(out)
}

/// Disjoint-set forest over node indices.
#[derive(Debug, Clone)]
struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// Groups nodes into connected components of the synchronized-pair graph.
///
/// `synced[k]` refers to the k-th pair in [`pairs`] order. Every pair inside
/// a component counts as synchronized; singletons are unsynchronized.
pub fn sync_groups(n: usize, synced: &[bool]) -> Result<SyncConfiguration> {
    if synced.len() != pair_count(n) {
        return Err(Error::DimensionMismatch {
            expected: pair_count(n),
            got: synced.len(),
        });
    }
    let mut uf = UnionFind::new(n);
    for ((i, j), &s) in pairs(n).zip(synced) {
        if s {
            uf.union(i, j);
        }
    }
    let mut sizes = vec![0usize; n];
    for i in 0..n {
        let r = uf.find(i);
        sizes[r] += 1;
    }
    SyncConfiguration::new(n, sizes.into_iter().filter(|&s| s >= 2).collect())
}

/// Per-pair synchronization flags of a simulation, in [`pairs`] order.
///
/// A pair is synchronized when it is frozen, or when its norm has stayed
/// below the simulation's settle tolerance for at least `sustain` time units.
pub fn synchronized_pairs<M: NodeModel>(sim: &Simulation<'_, M>, sustain: f64) -> Vec<bool> {
    sim.spectrum()
        .pairs()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            p.status == PairStatus::Frozen || sim.settled_for(k).is_some_and(|d| d >= sustain)
        })
        .collect()
}

/// Final synchronization pattern of a simulation; see [`synchronized_pairs`].
pub fn classify<M: NodeModel>(sim: &Simulation<'_, M>, sustain: f64) -> Result<SyncConfiguration> {
    sync_groups(sim.spec().n, &synchronized_pairs(sim, sustain))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(n: usize, synced_pairs: &[(usize, usize)]) -> Vec<bool> {
        pairs(n).map(|p| synced_pairs.contains(&p)).collect()
    }

    #[test]
    fn components_from_pairs() {
        // {1,2,3} and {4,5} in 1-based labels
        let f = flags(8, &[(0, 1), (1, 2), (3, 4)]);
        let c = sync_groups(8, &f).unwrap();
        assert_eq!(c.group_sizes(), &[3, 2]);
        assert_eq!(c.triplet(), SyncTriplet::new(8, 4, 3, 2));
        assert!((c.dpi().value - 2.0 / 31.0).abs() < 1e-15);
        assert_eq!(format!("{:.3}", c.dpi().value), "0.065");
    }

    #[test]
    fn complete_and_incoherent() {
        let c = sync_groups(8, &[true; 28]).unwrap();
        assert_eq!(c.triplet(), SyncTriplet::new(8, 28, 0, 1));
        assert_eq!(c.dpi().value, 1.0);
        let c = sync_groups(8, &[false; 28]).unwrap();
        assert_eq!(c.triplet(), SyncTriplet::new(8, 0, 8, 0));
        assert_eq!(c.dpi().value, 0.0);
        assert_eq!(c, SyncConfiguration::incoherent(8));
    }

    #[test]
    fn dpi_examples() {
        let v = |a, b, c| dpi(&SyncTriplet::new(8, a, b, c)).value;
        assert_eq!(v(28, 0, 1), 1.0);
        assert!((v(21, 1, 1) - 21.0 / 29.0).abs() < 1e-15);
        assert!((v(2, 4, 2) - 1.0 / 32.0).abs() < 1e-15);
        assert!((dpi(&SyncTriplet::new(4, 3, 1, 1)).value - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn equal_group_examples() {
        assert!((dpi_equal_groups(8, 8.0, 28.0).unwrap().value - 1.0).abs() < 1e-15);
        assert!((dpi_equal_groups(8, 2.0, 1.0).unwrap().value - 1.0 / 34.0).abs() < 1e-15);
        assert!(dpi_equal_groups(8, 1.0, 0.0).is_err());
        assert!(dpi_equal_groups(8, 2.0, 5.0).is_err());
    }

    #[test]
    fn two_group_examples() {
        let full = dpi_two_groups(100, 100, 1).unwrap();
        assert!((full.value - 1.0).abs() < 1e-15);
        let pairs_only = dpi_two_groups(100, 2, 50).unwrap();
        assert_eq!(two_group_sizes(100, 2, 50).unwrap(), vec![2; 50]);
        assert!((pairs_only.value - 1.0 / 4950.0).abs() < 1e-18);
        assert!(dpi_two_groups(100, 2, 51).is_err());
        assert!(dpi_two_groups(100, 1, 3).is_err());
    }

    #[test]
    fn enumeration_counts() {
        let four = enumerate_configurations(4).unwrap();
        let triplets: Vec<_> = four.iter().map(|c| c.triplet()).collect();
        assert_eq!(
            triplets,
            vec![
                SyncTriplet::new(4, 6, 0, 1),
                SyncTriplet::new(4, 3, 1, 1),
                SyncTriplet::new(4, 2, 0, 2),
                SyncTriplet::new(4, 1, 2, 1),
            ]
        );
        let two = enumerate_configurations(2).unwrap();
        assert_eq!(two.len(), 1);
        assert_eq!(two[0].triplet(), SyncTriplet::new(2, 1, 0, 1));
        assert_eq!(two[0].dpi().value, 1.0);
        assert_eq!(enumerate_configurations(8).unwrap().len(), 21);
        assert!(enumerate_configurations(13).is_err());
    }

    #[test]
    fn feasibility() {
        assert!(SyncTriplet::new(8, 7, 2, 2).is_feasible());
        assert!(SyncTriplet::new(8, 8, 0, 3).is_feasible());
        assert!(!SyncTriplet::new(8, 8, 0, 2).is_feasible());
        assert!(!SyncTriplet::new(5, 10, 1, 1).is_feasible());
        assert!(SyncTriplet::new(6, 0, 6, 0).is_feasible());
    }

    #[test]
    fn invalid_configurations() {
        assert!(SyncConfiguration::new(5, vec![3, 1]).is_err());
        assert!(SyncConfiguration::new(5, vec![3, 3]).is_err());
        assert!(sync_groups(4, &[true; 5]).is_err());
    }
}
