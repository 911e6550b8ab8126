use serde::{Deserialize, Serialize};

use crate::matkit::DiagMatrix;

/// Assignment of eigenvector indices to eigenvalue clusters.
///
/// Cluster ids are numbered in ascending order of their eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMap {
    assign: Vec<usize>,
    sizes: Vec<usize>,
    delta1: f64,
}

impl ClusterMap {
    /// Builds a map from explicit ids. Ids must cover `0..m` without gaps.
    pub fn from_assignment(assign: Vec<usize>, delta1: f64) -> Option<Self> {
        let m = assign.iter().copied().max().map_or(0, |v| v + 1);
        let mut sizes = vec![0; m];
        for &c in &assign {
            sizes[c] += 1;
        }
        if sizes.contains(&0) {
            return None;
        }
        Some(Self {
            assign,
            sizes,
            delta1,
        })
    }

    /// Every index in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self {
            assign: (0..n).collect(),
            sizes: vec![1; n],
            delta1: 0.0,
        }
    }

    /// Contiguous clusters of the given sizes.
    pub fn contiguous(sizes: &[usize], delta1: f64) -> Self {
        let assign = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        Self {
            assign,
            sizes: sizes.to_vec(),
            delta1,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.assign.len()
    }

    #[inline]
    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn cluster_of(&self, i: usize) -> usize {
        self.assign[i]
    }

    #[inline]
    pub fn same(&self, i: usize, j: usize) -> bool {
        self.assign[i] == self.assign[j]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assign
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    /// Indices belonging to cluster `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assign[i] == k).collect()
    }

    /// True when both maps induce the same partition, regardless of ids.
    pub fn same_partition(&self, other: &ClusterMap) -> bool {
        self.n() == other.n()
            && (0..self.n()).all(|i| (0..self.n()).all(|j| self.same(i, j) == other.same(i, j)))
    }

    pub fn is_all_singletons(&self) -> bool {
        self.sizes.iter().all(|&s| s == 1)
    }
}

/// Partitions approximate eigenvalues by gaps on the sorted line.
///
/// A new cluster starts wherever two consecutive sorted values differ by at
/// least `delta1`, so a gap equal to `delta1` splits.
pub fn detect_clusters(d: &DiagMatrix, delta1: f64) -> ClusterMap {
    let vals = d.values();
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(i.cmp(&j)));

    let mut assign = vec![0; n];
    let mut sizes = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        if pos == 0 || vals[idx] - vals[order[pos - 1]] >= delta1 {
            sizes.push(0);
        }
        assign[idx] = sizes.len() - 1;
        *sizes.last_mut().unwrap() += 1;
    }
    ClusterMap {
        assign,
        sizes,
        delta1,
    }
}
