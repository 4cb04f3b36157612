use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::DnnNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneKind {
    Magnitude,
    Random,
}

/// Whether the retained budget is spread over a whole side or per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneScope {
    #[default]
    Global,
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStrategy {
    pub kind: PruneKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scope: PruneScope,
}

impl PruneStrategy {
    pub fn magnitude() -> Self {
        PruneStrategy {
            kind: PruneKind::Magnitude,
            seed: 0,
            scope: PruneScope::Global,
        }
    }

    pub fn random(seed: u64) -> Self {
        PruneStrategy {
            kind: PruneKind::Random,
            seed,
            scope: PruneScope::Global,
        }
    }
}

/// Number of entries kept out of `count` at ratio `rho` (round half up).
pub fn retained_count(rho: f64, count: usize) -> usize {
    ((rho.clamp(0.0, 1.0) * count as f64 + 0.5).floor() as usize).min(count)
}

/// Indices (into `values`) that are zeroed.
fn pruned_indices(values: &[f64], keep: usize, strat: &PruneStrategy, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = values.len();
    let drop = n - keep;
    if drop == 0 {
        return Vec::new();
    }
    match strat.kind {
        PruneKind::Magnitude => {
            // ascending (|w|, index): the smallest magnitudes go first, lower
            // flat index first among ties
            let mut keys: Vec<(f64, usize)> = values.iter().map(|v| v.abs()).zip(0..n).collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if drop < n {
                keys.select_nth_unstable_by(drop - 1, cmp);
            }
            keys.truncate(drop);
            keys.into_iter().map(|(_, i)| i).collect()
        }
        PruneKind::Random => {
            let mut kept = vec![false; n];
            for i in rand::seq::index::sample(rng, n, keep) {
                kept[i] = true;
            }
            (0..n).filter(|&i| !kept[i]).collect()
        }
    }
}

/// Zeroes `(1 - rho)` of the device-side weights and `(1 - rho_server)` of
/// the server-side weights.
pub fn prune(net: &DnnNetwork, rho_device: f64, rho_server: f64, strat: &PruneStrategy) -> DnnNetwork {
    let mut out = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(strat.seed);
    let split = net.split_index;
    let sides = [(0..split, rho_device), (split..net.num_layers(), rho_server)];
    for (range, rho) in sides {
        let groups: Vec<Vec<usize>> = match strat.scope {
            PruneScope::Global => vec![range.collect()],
            PruneScope::PerLayer => range.map(|l| vec![l]).collect(),
        };
        for group in groups {
            // row-major flat view over the group's layers
            let mut values = Vec::new();
            let mut origin = Vec::new();
            for &l in &group {
                let m = &net.layers[l];
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        values.push(m[(r, c)]);
                        origin.push((l, r, c));
                    }
                }
            }
            let keep = retained_count(rho, values.len());
            for i in pruned_indices(&values, keep, strat, &mut rng) {
                let (l, r, c) = origin[i];
                out.layers[l][(r, c)] = 0.0;
            }
        }
    }
    out
}
