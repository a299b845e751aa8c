//! Watts–Strogatz and Barabási–Albert generators.

use std::collections::BTreeSet;

use super::UGraph;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Attempts at drawing a connected Watts–Strogatz graph before giving up.
const MAX_ATTEMPTS: usize = 1000;

/// Connected Watts–Strogatz graph: a ring lattice where each node joins its
/// `k` nearest neighbours, then each lattice edge `(u, u+j)` is rewired with
/// probability `p` to a uniformly chosen node that is neither `u` nor
/// already adjacent to it. Disconnected draws are discarded and redrawn from
/// a fresh sub-stream.
pub fn ws_generate(n: usize, k: usize, p: f64, rng: &mut Rng) -> Result<UGraph> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::domain(format!("Watts–Strogatz k must be even and ≥ 2, got {k}")));
    }
    if n <= k {
        return Err(Error::domain(format!("Watts–Strogatz needs n > k, got n={n}, k={k}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("rewiring probability {p} outside [0, 1]")));
    }
    for _ in 0..MAX_ATTEMPTS {
        let g = ws_attempt(n, k, p, &mut rng.fork());
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::domain(format!(
        "no connected Watts–Strogatz graph (n={n}, k={k}, p={p}) in {MAX_ATTEMPTS} attempts"
    )))
}

fn ws_attempt(n: usize, k: usize, p: f64, rng: &mut Rng) -> UGraph {
    let mut g = UGraph::empty(n);
    for j in 1..=k / 2 {
        for u in 0..n {
            g.add_edge(u, (u + j) % n);
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            if rng.unit() >= p {
                continue;
            }
            if g.degree(u) >= n - 1 {
                continue;
            }
            let v = (u + j) % n;
            let w = loop {
                let w = rng.below(n);
                if w != u && !g.has_edge(u, w) {
                    break w;
                }
            };
            g.remove_edge(u, v);
            g.add_edge(u, w);
        }
    }
    g
}

/// Size of the Barabási–Albert seed component for attachment count `m`.
pub fn ba_seed_nodes(m: usize) -> usize {
    m + 1
}

/// Barabási–Albert graph grown from a path on `m + 1` seed nodes. Each new
/// node attaches to `m` distinct existing nodes, each drawn with probability
/// proportional to its current degree.
pub fn ba_generate(n: usize, m: usize, rng: &mut Rng) -> Result<UGraph> {
    if m < 1 {
        return Err(Error::domain("Barabási–Albert m must be ≥ 1"));
    }
    let n0 = ba_seed_nodes(m);
    if n <= n0 {
        return Err(Error::domain(format!(
            "Barabási–Albert needs n > {n0} seed nodes, got n={n}"
        )));
    }
    let mut g = UGraph::empty(n);
    // each node appears once per incident edge
    let mut ends: Vec<usize> = Vec::with_capacity(2 * m * n);
    for u in 0..n0 - 1 {
        g.add_edge(u, u + 1);
        ends.extend([u, u + 1]);
    }
    for v in n0..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(ends[rng.below(ends.len())]);
        }
        for &t in &targets {
            g.add_edge(v, t);
            ends.extend([v, t]);
        }
    }
    Ok(g)
}
