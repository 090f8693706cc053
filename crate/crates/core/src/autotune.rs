//! Runtime selection among interchangeable kernels by timing real
//! executions, keyed by operand shapes.
//!
//! Each (shapes, alternatives) key is tuned independently. While measuring,
//! alternatives execute round-robin and their wall-clock cost accumulates;
//! once every alternative has been measured `budget` times the fastest one
//! is committed and runs exclusively from then on. The clock is injectable
//! so the whole mechanism is testable without real timers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Measured traversals per alternative before committing.
pub const DEFAULT_BUDGET: u32 = 100;

/// Monotonic time source. Production code uses [`SystemClock`]; tests inject
/// a manually advanced clock.
pub trait Clock: Send {
    fn now(&self) -> Duration;
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Digest of (operand shapes, alternative ids). Equal inputs give equal
/// keys across runs; the digest is a framed FNV-1a so any differing extent
/// or id changes the key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct TuneKey(u64);

impl TuneKey {
    pub fn digest(self) -> u64 {
        self.0
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_bytes(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn fnv_u64(h: u64, v: u64) -> u64 {
    fnv_bytes(h, &v.to_le_bytes())
}

/// Hash operand shapes and alternative ids into a tuning key.
pub fn tune_key(shapes: &[Shape], alt_ids: &[&str]) -> Result<TuneKey> {
    if alt_ids.is_empty() {
        return Err(Error::Parameter("tune_key needs at least one alternative".into()));
    }
    let mut h = FNV_OFFSET;
    h = fnv_u64(h, shapes.len() as u64);
    for s in shapes {
        h = fnv_u64(h, s.rank() as u64);
        for &d in s.dims() {
            h = fnv_u64(h, d as u64);
        }
    }
    h = fnv_u64(h, alt_ids.len() as u64);
    for id in alt_ids {
        h = fnv_u64(h, id.len() as u64);
        h = fnv_bytes(h, id.as_bytes());
    }
    Ok(TuneKey(h))
}

/// Accumulated cost of one alternative at one key.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub alt_id: String,
    pub total: Duration,
    pub count: u32,
}

struct Entry {
    measurements: Vec<Measurement>,
    chosen: Option<usize>,
}

/// Per-key timing ledger plus the committed choice once measuring is done.
pub struct TunerState {
    table: HashMap<TuneKey, Entry>,
    clock: Box<dyn Clock>,
    budget: u32,
    force: Option<String>,
}

impl TunerState {
    pub fn new() -> Self {
        Self::with_clock(Box::new(SystemClock::new()))
    }

    pub fn with_clock(clock: Box<dyn Clock>) -> Self {
        TunerState {
            table: HashMap::new(),
            clock,
            budget: DEFAULT_BUDGET,
            force: None,
        }
    }

    /// Override the per-alternative measurement budget (default 100).
    pub fn set_budget(&mut self, budget: u32) -> Result<()> {
        if budget == 0 {
            return Err(Error::Parameter("budget must be at least 1".into()));
        }
        self.budget = budget;
        Ok(())
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    /// Bypass tuning entirely and always run the named alternative.
    pub fn set_force(&mut self, alt_id: Option<String>) {
        self.force = alt_id;
    }

    /// The committed alternative id for a key, if measuring has finished.
    pub fn chosen(&self, key: TuneKey) -> Option<&str> {
        let e = self.table.get(&key)?;
        let idx = e.chosen?;
        Some(&e.measurements[idx].alt_id)
    }

    pub fn measurements(&self, key: TuneKey) -> Option<&[Measurement]> {
        self.table.get(&key).map(|e| e.measurements.as_slice())
    }

    /// Execute one of the alternatives for this key and return its result.
    ///
    /// `run(i)` must execute alternative `alt_ids[i]`; all alternatives are
    /// assumed to compute the same mathematical function. While measuring,
    /// the least-measured alternative runs (ties to the lowest index, which
    /// yields round-robin order) and its wall time is recorded. If the
    /// alternative fails, its measurement for that traversal is discarded
    /// and the error propagates. Once every alternative has `budget`
    /// measurements the one with the smallest accumulated time is committed
    /// and executes untimed from then on.
    pub fn tuned_execute<T>(
        &mut self,
        key: TuneKey,
        alt_ids: &[&str],
        mut run: impl FnMut(usize) -> Result<T>,
    ) -> Result<T> {
        if alt_ids.is_empty() {
            return Err(Error::Parameter("tuned_execute needs at least one alternative".into()));
        }
        if let Some(forced) = &self.force {
            let idx = alt_ids
                .iter()
                .position(|id| id == forced)
                .ok_or_else(|| Error::Parameter(format!("forced alternative {forced:?} is not offered here")))?;
            return run(idx);
        }
        let budget = self.budget;
        let entry = self.table.entry(key).or_insert_with(|| Entry {
            measurements: alt_ids
                .iter()
                .map(|id| Measurement {
                    alt_id: (*id).to_string(),
                    total: Duration::ZERO,
                    count: 0,
                })
                .collect(),
            chosen: None,
        });
        if entry.measurements.len() != alt_ids.len()
            || entry.measurements.iter().zip(alt_ids).any(|(m, id)| m.alt_id != *id)
        {
            return Err(Error::Parameter("alternative list does not match this key's ledger".into()));
        }
        if let Some(idx) = entry.chosen {
            return run(idx);
        }
        let idx = entry
            .measurements
            .iter()
            .enumerate()
            .min_by_key(|(i, m)| (m.count, *i))
            .map(|(i, _)| i)
            .expect("non-empty");
        let start = self.clock.now();
        let out = run(idx)?;
        let elapsed = self.clock.now().saturating_sub(start);
        let entry = self.table.get_mut(&key).expect("inserted above");
        entry.measurements[idx].total += elapsed;
        entry.measurements[idx].count += 1;
        if entry.measurements.iter().all(|m| m.count >= budget) {
            let best = entry
                .measurements
                .iter()
                .enumerate()
                .min_by_key(|(i, m)| (m.total, *i))
                .map(|(i, _)| i)
                .expect("non-empty");
            entry.chosen = Some(best);
        }
        Ok(out)
    }

    /// Render the ledger as text, one `key alt_id total_ms count chosen?`
    /// line per (key, alternative), sorted for stable output.
    pub fn dump(&self) -> String {
        let mut keys: Vec<_> = self.table.keys().copied().collect();
        keys.sort();
        let mut out = String::new();
        for key in keys {
            let entry = &self.table[&key];
            for (i, m) in entry.measurements.iter().enumerate() {
                let marker = if entry.chosen == Some(i) { "chosen" } else { "-" };
                let _ = writeln!(
                    out,
                    "{:016x} {} {:.3} {} {}",
                    key.digest(),
                    m.alt_id,
                    m.total.as_secs_f64() * 1000.0,
                    m.count,
                    marker
                );
            }
        }
        out
    }
}

impl Default for TunerState {
    fn default() -> Self {
        Self::new()
    }
}
