//! Per-trial summary rows and their aggregate reports.

use std::io::Write;

use avocc_core::agent::{Strategy, TrialTrace};
use avocc_core::metrics::{
    efficacy_from_outcomes, filter_skips, orientation_report, EfficacyReport, MetricsError, OrientationReport,
    TrialOutcome,
};
use serde::{Deserialize, Serialize};

/// Rounds to 9 significant digits. Every number written to a summary goes
/// through this, so CSV and JSON carry the same values.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub target_tree: usize,
    pub travel_time: f64,
    pub survey_time: f64,
    pub occluded_at_travel_end: bool,
    pub occluded_after_commit: bool,
    pub occluded_at_survey_end: bool,
    pub teleport_adjustment_deg: f64,
    pub redirect_rotation_deg: f64,
    pub applied_rotation_deg: f64,
    pub pointing_error_deg: Option<f64>,
}

impl TrialRow {
    pub fn from_trace(t: &TrialTrace) -> Self {
        TrialRow {
            trial: t.trial,
            target_tree: t.target_tree,
            travel_time: sig9(t.travel_time),
            survey_time: sig9(t.survey_time),
            occluded_at_travel_end: t.occluded_at_travel_end,
            occluded_after_commit: t.occluded_after_commit,
            occluded_at_survey_end: t.occluded_at_survey_end,
            teleport_adjustment_deg: sig9(t.teleport_rotation_total),
            redirect_rotation_deg: sig9(t.redirect_rotation_total),
            applied_rotation_deg: sig9(t.applied_rotation_total),
            pointing_error_deg: t.pointing_error().map(sig9),
        }
    }

    pub fn outcome(&self) -> TrialOutcome {
        TrialOutcome {
            occluded_at_travel_end: self.occluded_at_travel_end,
            occluded_after_commit: self.occluded_after_commit,
            occluded_at_survey_end: self.occluded_at_survey_end,
        }
    }

    /// Named numeric column, for clustering. `None` when the trial has no
    /// value there (no pointing on the first trial).
    pub fn column(&self, name: &str) -> Result<Option<f64>, String> {
        Ok(match name {
            "travel_time" => Some(self.travel_time),
            "survey_time" => Some(self.survey_time),
            "teleport_adjustment_deg" => Some(self.teleport_adjustment_deg),
            "redirect_rotation_deg" => Some(self.redirect_rotation_deg),
            "applied_rotation_deg" => Some(self.applied_rotation_deg),
            "pointing_error_deg" => self.pointing_error_deg,
            "abs_pointing_error_deg" => self.pointing_error_deg.map(f64::abs),
            other => {
                return Err(format!(
                    "unknown column {other:?}; expected one of {}",
                    COLUMNS.join(", ")
                ))
            }
        })
    }
}

pub const COLUMNS: [&str; 7] = [
    "travel_time",
    "survey_time",
    "teleport_adjustment_deg",
    "redirect_rotation_deg",
    "applied_rotation_deg",
    "pointing_error_deg",
    "abs_pointing_error_deg",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub seed: u64,
    pub n_trials: usize,
    /// `None` when no trial started occluded.
    pub efficacy: Option<EfficacyReport>,
    /// `None` when no trial pointed.
    pub orientation: Option<OrientationReport>,
    pub rows: Vec<TrialRow>,
}

pub fn efficacy_of(rows: &[TrialRow], strategy: Strategy) -> Option<EfficacyReport> {
    let outcomes: Vec<TrialOutcome> = rows.iter().map(TrialRow::outcome).collect();
    match efficacy_from_outcomes(&outcomes, strategy) {
        Ok(r) => Some(EfficacyReport {
            occlusion_incidence: sig9(r.occlusion_incidence),
            resolved_fraction: sig9(r.resolved_fraction),
            n_trials: r.n_trials,
        }),
        Err(MetricsError::NoOcclusionObserved | MetricsError::EmptyData) => None,
        Err(e) => unreachable!("efficacy cannot fail with {e}"),
    }
}

pub fn orientation_of(rows: &[TrialRow], skip_threshold: Option<f64>) -> Option<OrientationReport> {
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.pointing_error_deg).collect();
    let kept = filter_skips(&errors, skip_threshold);
    orientation_report(&kept).ok().map(|r| OrientationReport {
        signed_error: sig9(r.signed_error),
        absolute_error: sig9(r.absolute_error),
        configuration_error: sig9(r.configuration_error),
        ego_orientation_error: sig9(r.ego_orientation_error),
        n: r.n,
    })
}

impl RunSummary {
    pub fn new(strategy: Strategy, seed: u64, traces: &[TrialTrace]) -> Self {
        let rows: Vec<TrialRow> = traces.iter().map(TrialRow::from_trace).collect();
        RunSummary {
            strategy,
            seed,
            n_trials: rows.len(),
            efficacy: efficacy_of(&rows, strategy),
            orientation: orientation_of(&rows, None),
            rows,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows_csv(out, &self.rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Header row from the struct field names; an absent pointing error is an
/// empty cell.
pub fn write_rows_csv<W: Write>(out: W, rows: &[TrialRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "trial",
            "target_tree",
            "travel_time",
            "survey_time",
            "occluded_at_travel_end",
            "occluded_after_commit",
            "occluded_at_survey_end",
            "teleport_adjustment_deg",
            "redirect_rotation_deg",
            "applied_rotation_deg",
            "pointing_error_deg",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<TrialRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
