//! Line-delimited JSON episode traces, one record per broadcast.
//!
//! ```text
//! {"t":1,"packet":[1,2],"deliveries":[[0,1],[1,2]],"b":2,"reward":1.0}
//! ```
//!
//! `t` counts from 1. `reward` is `null` for schedules planned by the
//! baselines, which have no next-bit target.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::baselines::{replay_with, Schedule};
use crate::env::StepOutcome;
use crate::error::{Error, Result};
use crate::model::{BitId, CodedPacket, DeliveryProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub packet: Vec<usize>,
    /// (user, bit) pairs decoded by this broadcast.
    pub deliveries: Vec<(usize, usize)>,
    pub b: usize,
    pub reward: Option<f64>,
}

impl TraceRecord {
    pub fn from_outcome(t: usize, outcome: &StepOutcome) -> Self {
        Self {
            t,
            packet: outcome.packet.bits().iter().map(|b| b.index()).collect(),
            deliveries: outcome.deliveries.iter().map(|&(u, b)| (u, b.index())).collect(),
            b: outcome.delivered(),
            reward: Some(outcome.reward),
        }
    }

    pub fn packet(&self) -> CodedPacket {
        CodedPacket::new(self.packet.iter().map(|&b| BitId(b)))
    }
}

/// Records for a planned schedule, replayed against the decoding rule.
pub fn schedule_trace(problem: &DeliveryProblem, schedule: &Schedule) -> Vec<TraceRecord> {
    let mut records = Vec::with_capacity(schedule.len());
    replay_with(problem, schedule, |t, deliveries| {
        records.push(TraceRecord {
            t: t + 1,
            packet: schedule.packets[t].bits().iter().map(|b| b.index()).collect(),
            deliveries: deliveries.iter().map(|&(u, b)| (u, b.index())).collect(),
            b: deliveries.len(),
            reward: None,
        });
    });
    records
}

pub fn write_trace(records: &[TraceRecord], out: &mut impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r).map_err(|e| Error::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(input: impl BufRead) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Usage(format!("trace line {}: {e}", n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// The broadcast sequence of a trace.
pub fn trace_schedule(records: &[TraceRecord]) -> Schedule {
    Schedule::new(records.iter().map(TraceRecord::packet).collect())
}
