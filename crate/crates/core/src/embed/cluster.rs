use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::embed::cosine_similarity;
use crate::error::{ElsaError, Result};
use crate::numcore::Scalar;

/// One agglomeration step. Leaves are ids `0..n`; the cluster created by
/// merge `k` gets id `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTree {
    pub names: Vec<String>,
    pub merges: Vec<Merge>,
}

impl MergeTree {
    /// Leaf indices under cluster `id`, ascending.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let n = self.names.len();
        if id < n {
            return vec![id];
        }
        let m = &self.merges[id - n];
        let mut out = self.members(m.left);
        out.extend(self.members(m.right));
        out.sort_unstable();
        out
    }
}

/// Pairwise `1 − cos` distances.
pub fn cosine_distance_matrix<T: Scalar>(vectors: &[&[T]]) -> Result<Vec<Vec<f64>>> {
    let n = vectors.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let x = 1.0 - cosine_similarity(vectors[i], vectors[j])?;
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    Ok(d)
}

struct Active {
    id: usize,
    min_leaf: usize,
    size: usize,
}

/// Agglomerative clustering with average linkage on cosine distance.
///
/// Cluster distances are maintained with the Lance–Williams update. Among
/// equally close pairs the one whose smallest leaf indices come first
/// (lexicographically) is merged.
pub fn hierarchical_cluster<T: Scalar>(items: &[(String, Vec<T>)]) -> Result<MergeTree> {
    if items.len() < 2 {
        return Err(ElsaError::Size(format!(
            "clustering needs at least 2 items, got {}",
            items.len()
        )));
    }
    let mut seen = HashSet::new();
    for (name, _) in items {
        if !seen.insert(name.as_str()) {
            return Err(ElsaError::DuplicateKey(name.clone()));
        }
    }
    let n = items.len();
    let vectors: Vec<&[T]> = items.iter().map(|(_, v)| v.as_slice()).collect();
    // dist[a][b] between active slots a, b (slot = position in `active`).
    let mut dist = cosine_distance_matrix(&vectors)?;
    let mut active: Vec<Active> = (0..n)
        .map(|i| Active {
            id: i,
            min_leaf: i,
            size: 1,
        })
        .collect();
    let mut merges = Vec::with_capacity(n - 1);

    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        // Slots stay sorted by min_leaf, so scan order is the tiebreak order.
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                let d = dist[a][b];
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (height, a, b) = best.expect("at least two active clusters");
        let (na, nb) = (active[a].size as f64, active[b].size as f64);
        let merged_size = active[a].size + active[b].size;
        merges.push(Merge {
            left: active[a].id,
            right: active[b].id,
            height,
            size: merged_size,
        });
        // Slot a becomes the merged cluster; slot b is removed.
        for k in 0..active.len() {
            if k == a || k == b {
                continue;
            }
            let x = (na * dist[k][a] + nb * dist[k][b]) / (na + nb);
            dist[k][a] = x;
            dist[a][k] = x;
        }
        active[a] = Active {
            id: n + merges.len() - 1,
            min_leaf: active[a].min_leaf.min(active[b].min_leaf),
            size: merged_size,
        };
        active.remove(b);
        dist.remove(b);
        for row in dist.iter_mut() {
            row.remove(b);
        }
    }

    Ok(MergeTree {
        names: items.iter().map(|(n, _)| n.clone()).collect(),
        merges,
    })
}
