//! Event log: one event per line, `round kind block_id`, with the block id
//! as 16 lowercase hex digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ghast_core::oracle::EventKind;
use ghast_core::BlockId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub round: u64,
    pub kind: EventKind,
    pub block: BlockId,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EventLogError {
    #[error("event log line {line}: {msg}")]
    Parse { line: usize, msg: &'static str },
    #[error("event {index} ({block}): {msg}")]
    Illegal { index: usize, block: BlockId, msg: &'static str },
}

pub fn format_log(events: &[Event]) -> String {
    let mut s = String::with_capacity(events.len() * 28);
    for e in events {
        let _ = writeln!(s, "{} {} {}", e.round, e.kind.as_str(), e.block);
    }
    s
}

pub fn parse_log(text: &str) -> Result<Vec<Event>, EventLogError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg| EventLogError::Parse { line: i + 1, msg };
        let mut it = line.split_whitespace();
        let round = it.next().and_then(|r| r.parse().ok()).ok_or_else(|| bad("bad round"))?;
        let kind = it.next().and_then(EventKind::parse).ok_or_else(|| bad("bad event kind"))?;
        let block = it.next().and_then(BlockId::parse_hex).ok_or_else(|| bad("bad block id"))?;
        if it.next().is_some() {
            return Err(bad("trailing fields"));
        }
        out.push(Event { round, kind, block });
    }
    Ok(out)
}

/// Legality of a complete log for arrival delay `arrival`: rounds never
/// decrease, each block has exactly one of `hGenRls`/`mGen` first, `mRls`
/// follows `mGen` at most once, and `Arvl` comes exactly `arrival` rounds
/// after the first honest exposure. Blocks still in flight at the end of
/// the log may lack their `Arvl`.
pub fn check_legality(events: &[Event], arrival: u64) -> Result<(), EventLogError> {
    #[derive(Default)]
    struct State {
        gen: Option<EventKind>,
        exposed: Option<u64>,
        arrived: bool,
    }
    let mut st: BTreeMap<BlockId, State> = BTreeMap::new();
    let mut last_round = 0;
    for (index, e) in events.iter().enumerate() {
        let fail = |msg| Err(EventLogError::Illegal { index, block: e.block, msg });
        if e.round < last_round {
            return fail("round went backwards");
        }
        last_round = e.round;
        let s = st.entry(e.block).or_default();
        match e.kind {
            EventKind::HGenRls | EventKind::MGen => {
                if s.gen.is_some() {
                    return fail("block generated twice");
                }
                s.gen = Some(e.kind);
                if e.kind == EventKind::HGenRls {
                    s.exposed = Some(e.round);
                }
            }
            EventKind::MRls => {
                if s.gen != Some(EventKind::MGen) {
                    return fail("mRls without an earlier mGen");
                }
                if s.exposed.is_some() {
                    return fail("block released twice");
                }
                s.exposed = Some(e.round);
            }
            EventKind::Arvl => {
                let Some(r) = s.exposed else { return fail("arrival before exposure") };
                if s.arrived {
                    return fail("block arrived twice");
                }
                if e.round != r + arrival {
                    return fail("arrival not exactly one delay after exposure");
                }
                s.arrived = true;
            }
        }
    }
    for (block, s) in &st {
        if let Some(r) = s.exposed {
            if !s.arrived && r + arrival <= last_round {
                return Err(EventLogError::Illegal { index: events.len(), block: *block, msg: "missing arrival" });
            }
        }
    }
    Ok(())
}
