//! JSON Lines trace files.
//!
//! Line order: one `header`, then per trial a `trial_start`, its records
//! (`frame`, `phase`, `teleport`, `redirect`) and a `trial_end`, then one
//! `footer`. Records belong to the nearest preceding `trial_start`.

use std::io::{BufRead, Write};

use avocc_core::agent::{FrameRecord, PhaseEvent, RedirectEvent, Strategy, TeleportEvent, TraceRecord, TrialTrace};
use avocc_core::mapping::WorldMapping;
use avocc_core::metrics::PointingSample;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const TRACE_FORMAT: &str = "avocc-trace";
/// Bumped on any change to the line shapes below.
pub const TRACE_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: String,
    pub config: RunConfig,
    pub tree_count: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStart {
    pub trial: usize,
    pub target_tree: usize,
    pub strategy: Strategy,
    pub start_mapping: WorldMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEnd {
    pub trial: usize,
    pub end_mapping: WorldMapping,
    pub travel_time: f64,
    pub survey_time: f64,
    pub pointing: Option<PointingSample>,
    pub applied_rotation_total: f64,
    pub teleport_rotation_total: f64,
    pub redirect_rotation_total: f64,
    pub occluded_at_travel_end: bool,
    pub occluded_after_commit: bool,
    pub occluded_at_survey_end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub n_trials: usize,
    pub final_mapping: WorldMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header(Box<Header>),
    TrialStart(TrialStart),
    Frame(FrameRecord),
    Phase(PhaseEvent),
    Teleport(TeleportEvent),
    Redirect(RedirectEvent),
    TrialEnd(TrialEnd),
    Footer(Footer),
}

impl From<&TraceRecord> for TraceLine {
    fn from(r: &TraceRecord) -> Self {
        match r {
            TraceRecord::Frame(f) => TraceLine::Frame(*f),
            TraceRecord::Phase(p) => TraceLine::Phase(*p),
            TraceRecord::Teleport(t) => TraceLine::Teleport(t.clone()),
            TraceRecord::Redirect(e) => TraceLine::Redirect(*e),
        }
    }
}

fn line<W: Write + ?Sized>(out: &mut W, l: &TraceLine) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, l)?;
    out.write_all(b"\n")
}

/// Streams a whole experiment as trace lines.
pub fn write_trace<W: Write + ?Sized>(out: &mut W, header: &Header, traces: &[TrialTrace]) -> std::io::Result<()> {
    line(out, &TraceLine::Header(Box::new(header.clone())))?;
    for t in traces {
        line(
            out,
            &TraceLine::TrialStart(TrialStart {
                trial: t.trial,
                target_tree: t.target_tree,
                strategy: t.strategy,
                start_mapping: t.start_mapping,
            }),
        )?;
        for r in &t.records {
            line(out, &TraceLine::from(r))?;
        }
        line(
            out,
            &TraceLine::TrialEnd(TrialEnd {
                trial: t.trial,
                end_mapping: t.end_mapping,
                travel_time: t.travel_time,
                survey_time: t.survey_time,
                pointing: t.pointing,
                applied_rotation_total: t.applied_rotation_total,
                teleport_rotation_total: t.teleport_rotation_total,
                redirect_rotation_total: t.redirect_rotation_total,
                occluded_at_travel_end: t.occluded_at_travel_end,
                occluded_after_commit: t.occluded_after_commit,
                occluded_at_survey_end: t.occluded_at_survey_end,
            }),
        )?;
    }
    let final_mapping = traces.last().map(|t| t.end_mapping).unwrap_or(WorldMapping::IDENTITY);
    line(
        out,
        &TraceLine::Footer(Footer {
            n_trials: traces.len(),
            final_mapping,
        }),
    )
}

/// A trace file read back into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub header: Header,
    pub trials: Vec<TrialTrace>,
    pub footer: Footer,
}

impl ParsedTrace {
    pub fn strategy(&self) -> Strategy {
        self.header.config.strategy
    }

    /// Replays every trial's records from the first start mapping, carrying
    /// the mapping across trials, and returns the final mapping.
    pub fn replay(&self) -> WorldMapping {
        match self.trials.first() {
            None => WorldMapping::IDENTITY,
            Some(first) => self.trials.iter().fold(first.start_mapping, |m, t| {
                avocc_core::agent::replay_records(m, &t.records)
            }),
        }
    }
}

fn bad(n: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("trace line {n}: {msg}"))
}

pub fn read_trace<R: BufRead>(input: R) -> Result<ParsedTrace, CliError> {
    let mut header = None;
    let mut footer = None;
    let mut trials: Vec<TrialTrace> = Vec::new();
    let mut open: Option<TrialTrace> = None;
    for (idx, text) in input.lines().enumerate() {
        let n = idx + 1;
        let text = text.map_err(|e| bad(n, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&text).map_err(|e| bad(n, e))?;
        if footer.is_some() {
            return Err(bad(n, "content after footer"));
        }
        match parsed {
            TraceLine::Header(h) => {
                if header.is_some() || n != 1 {
                    return Err(bad(n, "header must be the first line"));
                }
                if h.format != TRACE_FORMAT {
                    return Err(bad(n, format!("unknown format {:?}", h.format)));
                }
                if h.version.split('.').next() != TRACE_VERSION.split('.').next() {
                    return Err(bad(n, format!("unsupported trace version {}", h.version)));
                }
                header = Some(*h);
                continue;
            }
            _ if header.is_none() => return Err(bad(n, "missing header")),
            TraceLine::TrialStart(s) => {
                if open.is_some() {
                    return Err(bad(n, "trial_start inside an open trial"));
                }
                open = Some(TrialTrace {
                    trial: s.trial,
                    target_tree: s.target_tree,
                    strategy: s.strategy,
                    start_mapping: s.start_mapping,
                    end_mapping: s.start_mapping,
                    records: Vec::new(),
                    travel_time: 0.0,
                    survey_time: 0.0,
                    pointing: None,
                    applied_rotation_total: 0.0,
                    teleport_rotation_total: 0.0,
                    redirect_rotation_total: 0.0,
                    occluded_at_travel_end: false,
                    occluded_after_commit: false,
                    occluded_at_survey_end: false,
                });
            }
            TraceLine::TrialEnd(e) => {
                let mut t = open.take().ok_or_else(|| bad(n, "trial_end without trial_start"))?;
                if t.trial != e.trial {
                    return Err(bad(n, format!("trial_end {} closes trial {}", e.trial, t.trial)));
                }
                t.end_mapping = e.end_mapping;
                t.travel_time = e.travel_time;
                t.survey_time = e.survey_time;
                t.pointing = e.pointing;
                t.applied_rotation_total = e.applied_rotation_total;
                t.teleport_rotation_total = e.teleport_rotation_total;
                t.redirect_rotation_total = e.redirect_rotation_total;
                t.occluded_at_travel_end = e.occluded_at_travel_end;
                t.occluded_after_commit = e.occluded_after_commit;
                t.occluded_at_survey_end = e.occluded_at_survey_end;
                trials.push(t);
            }
            TraceLine::Footer(f) => {
                if open.is_some() {
                    return Err(bad(n, "footer inside an open trial"));
                }
                footer = Some(f);
            }
            record => {
                let t = open.as_mut().ok_or_else(|| bad(n, "record outside a trial"))?;
                t.records.push(match record {
                    TraceLine::Frame(f) => TraceRecord::Frame(f),
                    TraceLine::Phase(p) => TraceRecord::Phase(p),
                    TraceLine::Teleport(e) => TraceRecord::Teleport(e),
                    TraceLine::Redirect(e) => TraceRecord::Redirect(e),
                    _ => unreachable!(),
                });
            }
        }
    }
    let header = header.ok_or_else(|| CliError::Usage("empty trace".into()))?;
    let footer = footer.ok_or_else(|| CliError::Usage("trace has no footer (truncated?)".into()))?;
    if footer.n_trials != trials.len() {
        return Err(CliError::Usage(format!(
            "footer announces {} trials, found {}",
            footer.n_trials,
            trials.len()
        )));
    }
    if let Some(t) = trials.iter().find(|t| t.strategy != header.config.strategy) {
        return Err(CliError::Usage(format!(
            "trial {} strategy {} differs from header strategy {}",
            t.trial, t.strategy, header.config.strategy
        )));
    }
    Ok(ParsedTrace { header, trials, footer })
}
