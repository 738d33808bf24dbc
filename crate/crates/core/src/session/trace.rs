//! JSON-lines session traces: a header, then every applied event in order,
//! with periodic state checksums. Replaying a trace re-executes the events
//! and compares checksums.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_work, Decision, Session, SessionConfig, SessionError, SessionEvent};
use crate::actions::ActionRecord;
use crate::hashing::digest_json;
use crate::predictor::ScorerWeights;
use crate::scenesim::SceneDescription;

pub const TRACE_FORMAT: &str = "teleassist-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub scene: SceneDescription,
    pub scene_digest: String,
    pub config: SessionConfig,
    pub weights_digest: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(Box<TraceHeader>),
    Event {
        seq: u64,
        timestamp: f64,
        event: SessionEvent,
    },
    Checkpoint {
        seq: u64,
        tick: u64,
        checksum: String,
    },
    /// Derived annotation: an action the operator started.
    Decision(Decision),
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace does not start with a header")]
    MissingHeader,
    #[error("unsupported trace format `{format}` version {version}")]
    Format { format: String, version: u32 },
    #[error("scorer weights do not match the trace")]
    WeightsMismatch,
    #[error("event sequence jumps from {after} to {got}")]
    Sequence { after: u64, got: u64 },
    #[error("checksum diverged at event {seq} (tick {tick}): expected {expected}, replay gave {actual}")]
    ChecksumDivergence { seq: u64, tick: u64, expected: String, actual: String },
    #[error(transparent)]
    Session(#[from] SessionError),
}

fn write_record(out: &mut impl Write, record: &TraceRecord) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

/// Streams a session's applied events to a trace.
pub struct TraceWriter<W: Write> {
    out: W,
    seq: u64,
    decisions: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, session: &Session) -> io::Result<Self> {
        let header = TraceHeader {
            format: TRACE_FORMAT.to_string(),
            version: TRACE_VERSION,
            scene: session.scene().clone(),
            scene_digest: session.scene().digest(),
            config: session.config().clone(),
            weights_digest: session.weights().map(|w| digest_json(w.as_ref())),
        };
        write_record(&mut out, &TraceRecord::Header(Box::new(header)))?;
        Ok(Self { out, seq: 0, decisions: session.decisions().len() })
    }

    /// Appends events already applied to `session`, then any new decisions,
    /// then a checkpoint when a tick lands on the checkpoint period.
    pub fn record(&mut self, events: &[SessionEvent], session: &Session) -> io::Result<()> {
        let mut ticked = false;
        for event in events {
            ticked |= matches!(event, SessionEvent::Tick);
            self.seq += 1;
            let record = TraceRecord::Event { seq: self.seq, timestamp: session.time(), event: event.clone() };
            write_record(&mut self.out, &record)?;
        }
        for d in &session.decisions()[self.decisions..] {
            write_record(&mut self.out, &TraceRecord::Decision(d.clone()))?;
        }
        self.decisions = session.decisions().len();
        if ticked && session.tick().is_multiple_of(session.config().checkpoint_every) {
            self.checkpoint(session)?;
        }
        Ok(())
    }

    pub fn checkpoint(&mut self, session: &Session) -> io::Result<()> {
        let record = TraceRecord::Checkpoint { seq: self.seq, tick: session.tick(), checksum: session.checksum() };
        write_record(&mut self.out, &record)
    }

    /// Writes a closing checkpoint and returns the sink.
    pub fn finish(mut self, session: &Session) -> io::Result<W> {
        self.checkpoint(session)?;
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    /// The last line was cut off.
    pub truncated: bool,
}

impl Trace {
    pub fn decisions(&self) -> Vec<Decision> {
        self.records
            .iter()
            .filter_map(|r| match r {
                TraceRecord::Decision(d) => Some(d.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Parses a trace. An unparsable final line is taken as truncation.
pub fn read_trace(input: impl BufRead) -> Result<Trace, TraceError> {
    let lines: Vec<String> = input.lines().collect::<Result<_, _>>()?;
    let mut records = Vec::new();
    let mut truncated = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TraceRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == lines.len() && i > 0 => truncated = true,
            Err(e) => return Err(TraceError::Parse { line: i + 1, message: e.to_string() }),
        }
    }
    let header = match records.first() {
        Some(TraceRecord::Header(h)) => (**h).clone(),
        _ => return Err(TraceError::MissingHeader),
    };
    if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
        return Err(TraceError::Format { format: header.format, version: header.version });
    }
    records.remove(0);
    Ok(Trace { header, records, truncated })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifiedCheckpoint {
    pub seq: u64,
    pub tick: u64,
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayReport {
    pub events: u64,
    pub checkpoints: Vec<VerifiedCheckpoint>,
    pub truncated: bool,
    pub final_tick: u64,
    pub final_checksum: String,
    pub last_action: Option<ActionRecord>,
    pub task_complete: bool,
}

/// Re-executes a trace against `scene`. Work results are recomputed, so
/// the replay must reproduce every checkpoint; a different scene shows up
/// as a divergence at the first checkpoint it affects. The session is
/// finished at the end, which cancels an action left running by a cut-off
/// trace.
pub fn replay(
    trace: &Trace,
    scene: SceneDescription,
    weights: Option<Arc<ScorerWeights>>,
    seed: Option<u64>,
) -> Result<(Session, ReplayReport), TraceError> {
    if weights.as_ref().map(|w| digest_json(w.as_ref())) != trace.header.weights_digest {
        return Err(TraceError::WeightsMismatch);
    }
    let mut config = trace.header.config.clone();
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let mut session = Session::new(scene, config, weights)?;
    let ctx = session.work_context();
    let mut resolve = |_: u64, r: &super::WorkRequest| run_work(&ctx, r, None);
    let (mut events, mut last_seq) = (0, 0);
    let mut checkpoints = Vec::new();
    for record in &trace.records {
        match record {
            TraceRecord::Event { seq, event, .. } => {
                if *seq != last_seq + 1 {
                    return Err(TraceError::Sequence { after: last_seq, got: *seq });
                }
                last_seq = *seq;
                session.handle(event, &mut resolve)?;
                events += 1;
            }
            TraceRecord::Checkpoint { seq, tick, checksum } => {
                let actual = session.checksum();
                if *checksum != actual || *tick != session.tick() {
                    return Err(TraceError::ChecksumDivergence {
                        seq: *seq,
                        tick: *tick,
                        expected: checksum.clone(),
                        actual,
                    });
                }
                checkpoints.push(VerifiedCheckpoint { seq: *seq, tick: *tick, checksum: actual });
            }
            TraceRecord::Header(_) | TraceRecord::Decision(_) => {}
        }
    }
    session.finish();
    let report = ReplayReport {
        events,
        checkpoints,
        truncated: trace.truncated,
        final_tick: session.tick(),
        final_checksum: session.checksum(),
        last_action: session.actions().last().cloned(),
        task_complete: session.task_complete(),
    };
    Ok((session, report))
}
