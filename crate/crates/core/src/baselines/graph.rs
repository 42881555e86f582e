use crate::model::{BitId, CacheMatrix, CodedPacket, DeliveryProblem, RequestMatrix};

use super::Schedule;

/// An outstanding (user, bit) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vertex {
    pub user: usize,
    pub bit: BitId,
}

/// Index-coding side-information graph over the outstanding pairs.
///
/// `(i, b) ~ (j, b')` for `i != j` iff `b == b'` or user i knows `b'` and
/// user j knows `b`. A clique can share one XOR packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfoGraph {
    vertices: Vec<Vertex>,
    adjacency: Vec<Vec<bool>>,
}

impl SideInfoGraph {
    /// Vertices sorted by (user, bit); edges use the initial caches only.
    pub fn build(cache: &CacheMatrix, requests: &RequestMatrix) -> Self {
        let m = requests.matrix();
        let mut vertices = Vec::new();
        for user in 0..m.cols() {
            for b in 0..m.rows() {
                if m.get(b, user) {
                    vertices.push(Vertex { user, bit: BitId(b) });
                }
            }
        }
        let n = vertices.len();
        let mut adjacency = vec![vec![false; n]; n];
        for x in 0..n {
            for y in x + 1..n {
                let (u, v) = (vertices[x], vertices[y]);
                let edge = u.user != v.user
                    && (u.bit == v.bit || (cache.contains(v.bit, u.user) && cache.contains(u.bit, v.user)));
                adjacency[x][y] = edge;
                adjacency[y][x] = edge;
            }
        }
        Self { vertices, adjacency }
    }

    /// Graph from an explicit edge list; used to exercise the cover
    /// algorithms on arbitrary graphs.
    pub fn from_edges(vertices: Vec<Vertex>, edges: &[(usize, usize)]) -> Self {
        let n = vertices.len();
        let mut adjacency = vec![vec![false; n]; n];
        for &(a, b) in edges {
            assert!(a != b, "self-loop {a}");
            adjacency[a][b] = true;
            adjacency[b][a] = true;
        }
        Self { vertices, adjacency }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    #[inline]
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency
            .iter()
            .map(|row| row.iter().filter(|&&e| e).count())
            .sum::<usize>()
            / 2
    }

    /// Packet XOR-ing the distinct bits of a vertex set.
    pub fn packet_for(&self, clique: &[usize]) -> CodedPacket {
        CodedPacket::new(clique.iter().map(|&v| self.vertices[v].bit))
    }

    pub fn is_clique(&self, set: &[usize]) -> bool {
        set.iter()
            .enumerate()
            .all(|(i, &a)| set[i + 1..].iter().all(|&b| self.adjacent(a, b)))
    }
}

pub fn build_side_info_graph(problem: &DeliveryProblem) -> SideInfoGraph {
    SideInfoGraph::build(&problem.cache, &problem.requests())
}

/// Greedy cover by maximal cliques.
///
/// Each clique starts at the lowest uncovered vertex and grows by the
/// candidate with the most uncovered neighbours (ties to the lower index).
pub fn greedy_clique_cover(graph: &SideInfoGraph) -> Schedule {
    let n = graph.len();
    let mut covered = vec![false; n];
    let mut packets = Vec::new();
    while let Some(start) = covered.iter().position(|&c| !c) {
        let mut clique = vec![start];
        covered[start] = true;
        let mut candidates: Vec<usize> = (0..n).filter(|&v| !covered[v] && graph.adjacent(start, v)).collect();
        while !candidates.is_empty() {
            let score = |v: usize| (0..n).filter(|&w| !covered[w] && graph.adjacent(v, w)).count();
            let mut best = candidates[0];
            let mut best_score = score(best);
            for &c in &candidates[1..] {
                let s = score(c);
                if s > best_score {
                    best = c;
                    best_score = s;
                }
            }
            clique.push(best);
            covered[best] = true;
            candidates.retain(|&v| v != best && graph.adjacent(best, v));
        }
        packets.push(graph.packet_for(&clique));
    }
    Schedule { packets }
}
