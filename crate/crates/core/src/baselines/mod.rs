//! Non-learning delivery algorithms.
//!
//! All of them plan the full broadcast sequence up front from the initial
//! caches. [`replay_schedule`] checks a plan against the same decoding rule
//! the environment uses.

mod graph;
mod oracle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::broadcast;
use crate::model::{BitId, BitMatrix, CodedPacket, DeliveryProblem};

pub use graph::{build_side_info_graph, greedy_clique_cover, SideInfoGraph, Vertex};
pub use oracle::{exact_min_clique_cover, DEFAULT_VERTEX_BUDGET};

/// A planned broadcast sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub packets: Vec<CodedPacket>,
}

impl Schedule {
    pub fn new(packets: Vec<CodedPacket>) -> Self {
        Self { packets }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Normalized delay `T / F`.
    pub fn delay(&self, file_bits: usize) -> f64 {
        schedule_delay(self, file_bits)
    }
}

pub fn schedule_delay(schedule: &Schedule, file_bits: usize) -> f64 {
    schedule.len() as f64 / file_bits as f64
}

/// Baseline algorithms by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Baseline {
    Uncoded,
    Gcm,
    Greedy,
    Oracle,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::Uncoded, Baseline::Gcm, Baseline::Greedy, Baseline::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Uncoded => "uncoded",
            Baseline::Gcm => "gcm",
            Baseline::Greedy => "greedy",
            Baseline::Oracle => "oracle",
        }
    }

    /// Plans a schedule. Only the oracle can fail (vertex budget).
    pub fn plan(self, problem: &DeliveryProblem, vertex_budget: usize) -> crate::Result<Schedule> {
        Ok(match self {
            Baseline::Uncoded => uncoded_delivery(problem),
            Baseline::Gcm => gcm_delivery(problem),
            Baseline::Greedy => greedy_clique_cover(&build_side_info_graph(problem)),
            Baseline::Oracle => exact_min_clique_cover(&build_side_info_graph(problem), vertex_budget)?,
        })
    }
}

/// Every outstanding bit sent alone, in ascending bit order.
pub fn uncoded_delivery(problem: &DeliveryProblem) -> Schedule {
    let packets = problem
        .requests()
        .outstanding_rows()
        .into_iter()
        .map(|b| CodedPacket::new([b]))
        .collect();
    Schedule { packets }
}

/// Greedy coded multicast for arbitrary placements.
///
/// An outstanding bit of user k that is cached by exactly the other users T
/// belongs to group `S = T + {k}`. Each group sends `max_k |V_{k,S-k}|`
/// packets; packet p XORs the p-th bit of every user's list that still has
/// one. Larger groups go first.
pub fn gcm_delivery(problem: &DeliveryProblem) -> Schedule {
    let inst = problem.instance;
    let users = inst.num_users();
    assert!(users <= 64, "gcm supports at most 64 users");
    let requests = problem.requests();

    // group mask -> user -> bits
    let mut groups: BTreeMap<u64, BTreeMap<usize, Vec<BitId>>> = BTreeMap::new();
    for b in 0..inst.library_bits() {
        let bit = BitId(b);
        for k in 0..users {
            if !requests.needs(bit, k) {
                continue;
            }
            let mut mask = 1u64 << k;
            for j in (0..users).filter(|&j| j != k) {
                if problem.cache.contains(bit, j) {
                    mask |= 1 << j;
                }
            }
            groups.entry(mask).or_default().entry(k).or_default().push(bit);
        }
    }

    let mut order: Vec<u64> = groups.keys().copied().collect();
    order.sort_by_key(|&m| (std::cmp::Reverse(m.count_ones()), m));

    let mut packets = Vec::new();
    for mask in order {
        let lists = &groups[&mask];
        let longest = lists.values().map(Vec::len).max().unwrap_or(0);
        for pos in 0..longest {
            packets.push(CodedPacket::new(lists.values().filter_map(|v| v.get(pos).copied())));
        }
    }
    Schedule { packets }
}

/// Outcome of replaying a schedule against the decoding rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayReport {
    /// Every outstanding (bit, user) pair was delivered.
    pub valid: bool,
    pub delivered: usize,
}

/// Feeds the packets in order through the users' decoders; knowledge
/// accumulates across packets.
pub fn replay_schedule(problem: &DeliveryProblem, schedule: &Schedule) -> ReplayReport {
    replay_with(problem, schedule, |_, _| {})
}

/// Replay that reports the deliveries of each packet to `on_packet`.
pub fn replay_with(
    problem: &DeliveryProblem,
    schedule: &Schedule,
    mut on_packet: impl FnMut(usize, &[(usize, BitId)]),
) -> ReplayReport {
    let inst = problem.instance;
    let mut requests = problem.requests();
    let mut delivered = BitMatrix::zeros(inst.library_bits(), inst.num_users());
    let mut count = 0;
    for (t, packet) in schedule.packets.iter().enumerate() {
        if packet.bits().iter().any(|b| b.0 >= inst.library_bits()) {
            return ReplayReport {
                valid: false,
                delivered: count,
            };
        }
        let out = broadcast(packet, problem.cache.matrix(), &mut delivered, &mut requests);
        count += out.len();
        on_packet(t, &out);
    }
    ReplayReport {
        valid: requests.is_empty(),
        delivered: count,
    }
}
