//! Exact minimum clique cover by exhaustive branch and bound.

use crate::error::{Error, Result};

use super::graph::{greedy_clique_cover, SideInfoGraph};
use super::Schedule;

pub const DEFAULT_VERTEX_BUDGET: usize = 14;

struct Search {
    n: usize,
    neighbors: Vec<u64>,
    /// Members of each open clique.
    cliques: Vec<u64>,
    /// Vertices adjacent to every member of each open clique.
    common: Vec<u64>,
    best: usize,
    best_cliques: Option<Vec<u64>>,
}

impl Search {
    fn run(&mut self, v: usize) {
        if self.cliques.len() >= self.best {
            return;
        }
        if v == self.n {
            self.best = self.cliques.len();
            self.best_cliques = Some(self.cliques.clone());
            return;
        }
        let bit = 1u64 << v;
        for c in 0..self.cliques.len() {
            if self.common[c] & bit != 0 {
                let saved = self.common[c];
                self.cliques[c] |= bit;
                self.common[c] &= self.neighbors[v];
                self.run(v + 1);
                self.cliques[c] &= !bit;
                self.common[c] = saved;
            }
        }
        if self.cliques.len() + 1 < self.best {
            self.cliques.push(bit);
            self.common.push(self.neighbors[v]);
            self.run(v + 1);
            self.cliques.pop();
            self.common.pop();
        }
    }
}

/// Minimum-cardinality partition of the vertices into cliques, one packet per
/// clique. Refuses graphs with more than `vertex_budget` vertices.
pub fn exact_min_clique_cover(graph: &SideInfoGraph, vertex_budget: usize) -> Result<Schedule> {
    let n = graph.len();
    if n > vertex_budget || n > 64 {
        return Err(Error::BudgetExceeded {
            vertices: n,
            budget: vertex_budget.min(64),
        });
    }
    let greedy = greedy_clique_cover(graph);
    if greedy.len() <= 1 {
        return Ok(greedy);
    }
    let neighbors = (0..n)
        .map(|v| (0..n).filter(|&w| graph.adjacent(v, w)).fold(0u64, |m, w| m | 1 << w))
        .collect();
    let mut search = Search {
        n,
        neighbors,
        cliques: Vec::new(),
        common: Vec::new(),
        best: greedy.len(),
        best_cliques: None,
    };
    search.run(0);
    let Some(cliques) = search.best_cliques else {
        return Ok(greedy);
    };
    let packets = cliques
        .into_iter()
        .map(|mask| {
            let members: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
            graph.packet_for(&members)
        })
        .collect();
    Ok(Schedule { packets })
}
