//! Episodic delivery phase: the server broadcasts one XOR-coded bit per step
//! and every user decodes what it can from its cache plus the bits it has
//! already received.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{decode_with, BitId, BitMatrix, CodedPacket, DeliveryProblem, RequestMatrix};

pub const DEFAULT_EPISODE_CAP: usize = 100;

/// Selected library bits; equivalent to an `NF`-length binary vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Action {
    selected: Vec<BitId>,
}

impl Action {
    pub fn new(selected: impl IntoIterator<Item = BitId>) -> Self {
        let mut selected: Vec<BitId> = selected.into_iter().collect();
        selected.sort_unstable();
        selected.dedup();
        Self { selected }
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self {
            selected: mask
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(b, _)| BitId(b))
                .collect(),
        }
    }

    pub fn selected(&self) -> &[BitId] {
        &self.selected
    }

    pub fn to_mask(&self, len: usize) -> Vec<bool> {
        let mut mask = vec![false; len];
        for b in &self.selected {
            mask[b.0] = true;
        }
        mask
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// (user, bit) pairs decoded this step.
    pub deliveries: Vec<(usize, BitId)>,
    pub reward: f64,
    pub done: bool,
    pub packet: CodedPacket,
}

impl StepOutcome {
    /// Number of (user, bit) deliveries, `B`.
    pub fn delivered(&self) -> usize {
        self.deliveries.len()
    }
}

/// The broadcast sequence `U_1, ..., U_T`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransmissionLog {
    pub packets: Vec<CodedPacket>,
}

/// Normalized delivery delay `T / F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delay {
    pub value: f64,
    /// The episode hit its step cap and the remainder was charged as uncoded.
    pub capped: bool,
}

/// Broadcasts `packet` and applies every successful decode.
///
/// Users know their cache plus everything delivered to them so far. Returns
/// the (user, bit) deliveries in ascending user order.
pub fn broadcast(
    packet: &CodedPacket,
    cache: &BitMatrix,
    delivered: &mut BitMatrix,
    requests: &mut RequestMatrix,
) -> Vec<(usize, BitId)> {
    let users = cache.cols();
    let mut out = Vec::new();
    if packet.is_empty() {
        return out;
    }
    for user in 0..users {
        let known = |b: BitId| cache.get(b.0, user) || delivered.get(b.0, user);
        let wanted = |b: BitId| requests.needs(b, user);
        if let Some(bit) = decode_with(packet, known, wanted) {
            out.push((user, bit));
        }
    }
    for &(user, bit) in &out {
        requests.clear(bit, user);
        delivered.set(bit.0, user, true);
    }
    out
}

/// One delivery episode.
#[derive(Debug, Clone)]
pub struct DeliveryEnv {
    problem: DeliveryProblem,
    requests: RequestMatrix,
    delivered: BitMatrix,
    next_bit: Option<BitId>,
    steps: usize,
    episode_cap: usize,
    initial_pairs: usize,
    log: TransmissionLog,
}

impl DeliveryEnv {
    /// Starts an episode on a pruned problem (`N = K`, distinct demands).
    pub fn reset<R: Rng + ?Sized>(problem: DeliveryProblem, episode_cap: usize, rng: &mut R) -> Result<Self> {
        let inst = problem.instance;
        if inst.num_files() != inst.num_users() {
            return Err(Error::Precondition(format!(
                "environment expects a pruned instance with N = K, got {inst}"
            )));
        }
        if !problem.demands.is_distinct() {
            return Err(Error::Precondition("environment expects distinct demands".into()));
        }
        if episode_cap == 0 {
            return Err(Error::Config("episode cap must be positive".into()));
        }
        let requests = problem.requests();
        let delivered = BitMatrix::zeros(inst.library_bits(), inst.num_users());
        let initial_pairs = requests.outstanding_pairs();
        let mut env = Self {
            problem,
            requests,
            delivered,
            next_bit: None,
            steps: 0,
            episode_cap,
            initial_pairs,
            log: TransmissionLog::default(),
        };
        env.next_bit = env.select_next_bit(rng);
        Ok(env)
    }

    pub fn problem(&self) -> &DeliveryProblem {
        &self.problem
    }

    pub fn requests(&self) -> &RequestMatrix {
        &self.requests
    }

    pub fn delivered(&self) -> &BitMatrix {
        &self.delivered
    }

    pub fn next_bit(&self) -> Option<BitId> {
        self.next_bit
    }

    /// Steps taken so far, `t`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    pub fn initial_pairs(&self) -> usize {
        self.initial_pairs
    }

    pub fn log(&self) -> &TransmissionLog {
        &self.log
    }

    pub fn is_complete(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn is_done(&self) -> bool {
        self.is_complete() || self.steps >= self.episode_cap
    }

    /// Uniform over the bits some user still needs.
    pub fn select_next_bit<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<BitId> {
        let rows = self.requests.outstanding_rows();
        if rows.is_empty() {
            None
        } else {
            Some(rows[rng.gen_range(0..rows.len())])
        }
    }

    /// Cache, requests and next-bit matrices, each flattened row-major
    /// (bit-major, user-minor), concatenated in that order.
    pub fn observe(&self) -> Result<Vec<u8>> {
        if self.is_done() {
            return Err(Error::Usage("observe called on a finished episode".into()));
        }
        let mut out = vec![0u8; self.problem.instance.observation_len()];
        self.observe_into(&mut out);
        Ok(out)
    }

    /// Writes the observation into `out` (length `3 N K F`).
    pub fn observe_into<T: From<u8> + Copy>(&self, out: &mut [T]) {
        let cache = self.problem.cache.matrix().as_slice();
        let req = self.requests.matrix().as_slice();
        let block = cache.len();
        assert_eq!(out.len(), 3 * block, "observation buffer has wrong length");
        for (o, &c) in out[..block].iter_mut().zip(cache) {
            *o = T::from(c as u8);
        }
        for (o, &r) in out[block..2 * block].iter_mut().zip(req) {
            *o = T::from(r as u8);
        }
        let zero = T::from(0);
        out[2 * block..].fill(zero);
        if let Some(bit) = self.next_bit {
            let users = self.problem.instance.num_users();
            let row = bit.0 * users;
            for u in 0..users {
                out[2 * block + row + u] = T::from(req[row + u] as u8);
            }
        }
    }

    /// Broadcasts the XOR of the selected bits.
    ///
    /// Reward is `log2 B` when the current next bit reached a user that
    /// needed it, `-1` otherwise.
    pub fn step<R: Rng + ?Sized>(&mut self, action: &Action, rng: &mut R) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        let nf = self.problem.instance.library_bits();
        if let Some(b) = action.selected().iter().find(|b| b.0 >= nf) {
            return Err(Error::Dimension(format!(
                "action selects bit {b} outside library of {nf} bits"
            )));
        }
        let packet = CodedPacket::new(action.selected().iter().copied());
        let deliveries = broadcast(
            &packet,
            self.problem.cache.matrix(),
            &mut self.delivered,
            &mut self.requests,
        );
        let hit = self.next_bit.is_some_and(|nb| deliveries.iter().any(|&(_, b)| b == nb));
        let reward = if hit { (deliveries.len() as f64).log2() } else { -1.0 };

        self.steps += 1;
        self.log.packets.push(packet.clone());
        self.next_bit = self.select_next_bit(rng);
        Ok(StepOutcome {
            deliveries,
            reward,
            done: self.is_done(),
            packet,
        })
    }

    /// `T / F` for a finished episode. Capped episodes are completed by
    /// sending each remaining (bit, user) pair uncoded.
    pub fn normalized_delay(&self) -> Result<Delay> {
        if !self.is_done() {
            return Err(Error::Usage(
                "normalized_delay called before the episode finished".into(),
            ));
        }
        let f = self.problem.instance.file_bits() as f64;
        let remaining = self.requests.outstanding_pairs();
        Ok(Delay {
            value: (self.steps + remaining) as f64 / f,
            capped: remaining > 0,
        })
    }
}
