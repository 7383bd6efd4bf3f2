//! Run summary with stage counts and consistency checks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::displacement::ExtractionReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub lines_read: usize,
    pub records_parsed: usize,
    pub lines_rejected: usize,
    pub duplicates_removed: usize,
    pub users_in: usize,
    pub users_retained: usize,
    pub users_dropped: usize,
    pub records_in_retained_users: usize,
    pub records_in_dropped_users: usize,
    pub records_removed_speed: usize,
    pub records_after_speed: usize,
    pub displacements_total: usize,
    pub displacements_inter_zone: usize,
    pub displacements_intra_zone: usize,
    pub displacements_touching_external: usize,
    pub travelers: usize,
    pub average_displacements_per_traveler: f64,
}

/// Wall-clock milliseconds per stage. Kept apart from [`RunReport`] so the
/// report itself is reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stages: Vec<(String, f64)>,
}

impl StageTimings {
    pub fn record(&mut self, stage: &str, elapsed: std::time::Duration) {
        self.stages.push((stage.to_string(), elapsed.as_secs_f64() * 1e3));
    }
}

/// Displacements per traveler, 0 when nobody traveled.
pub fn average_per_traveler(total: usize, travelers: usize) -> f64 {
    if travelers == 0 {
        0.0
    } else {
        total as f64 / travelers as f64
    }
}

impl RunReport {
    pub fn new(
        lines_read: usize,
        records_parsed: usize,
        lines_rejected: usize,
        duplicates_removed: usize,
        x: &ExtractionReport,
    ) -> Self {
        RunReport {
            lines_read,
            records_parsed,
            lines_rejected,
            duplicates_removed,
            users_in: x.users_in,
            users_retained: x.users_retained,
            users_dropped: x.users_dropped,
            records_in_retained_users: x.records_in_retained_users,
            records_in_dropped_users: x.records_in_dropped_users,
            records_removed_speed: x.records_removed_speed,
            records_after_speed: x.records_after_speed,
            displacements_total: x.displacements_total,
            displacements_inter_zone: x.displacements_inter_zone,
            displacements_intra_zone: x.displacements_intra_zone,
            displacements_touching_external: x.displacements_touching_external,
            travelers: x.travelers,
            average_displacements_per_traveler: average_per_traveler(x.displacements_total, x.travelers),
        }
    }

    /// Average rounded to one decimal, as printed in summaries.
    pub fn display_average(&self) -> String {
        format!("{:.1}", self.average_displacements_per_traveler)
    }

    /// Returns every violated arithmetic identity.
    pub fn check(&self) -> Result<(), Vec<String>> {
        let mut bad = Vec::new();
        let mut expect = |ok: bool, what: &str| {
            if !ok {
                bad.push(what.to_string());
            }
        };
        expect(
            self.lines_read == self.records_parsed + self.lines_rejected,
            "lines_read != records_parsed + lines_rejected",
        );
        expect(
            self.records_parsed >= self.duplicates_removed
                && self.records_parsed - self.duplicates_removed
                    == self.records_in_retained_users + self.records_in_dropped_users,
            "records_parsed - duplicates_removed != records in retained + dropped users",
        );
        expect(
            self.users_in == self.users_retained + self.users_dropped,
            "users_in != users_retained + users_dropped",
        );
        expect(
            self.records_in_retained_users >= self.records_removed_speed
                && self.records_in_retained_users - self.records_removed_speed == self.records_after_speed,
            "records_in_retained_users - records_removed_speed != records_after_speed",
        );
        expect(
            self.displacements_total == self.displacements_inter_zone + self.displacements_intra_zone,
            "displacements_total != inter_zone + intra_zone",
        );
        expect(
            self.displacements_touching_external <= self.displacements_total,
            "external-touching displacements exceed total",
        );
        expect(
            self.travelers <= self.users_retained && (self.travelers == 0) == (self.displacements_total == 0),
            "travelers inconsistent with displacements",
        );
        expect(
            self.displacements_total + self.users_retained <= self.records_after_speed || self.users_retained == 0,
            "more displacements than consecutive record pairs",
        );
        expect(
            self.average_displacements_per_traveler == average_per_traveler(self.displacements_total, self.travelers),
            "average != total / travelers",
        );
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }

    /// Human-readable summary table.
    pub fn to_table(&self, timings: Option<&StageTimings>) -> String {
        let rows: [(&str, String); 17] = [
            ("lines read", self.lines_read.to_string()),
            ("records parsed", self.records_parsed.to_string()),
            ("lines rejected", self.lines_rejected.to_string()),
            ("duplicates removed", self.duplicates_removed.to_string()),
            ("users", self.users_in.to_string()),
            ("users retained", self.users_retained.to_string()),
            ("users dropped", self.users_dropped.to_string()),
            ("records of retained users", self.records_in_retained_users.to_string()),
            ("records of dropped users", self.records_in_dropped_users.to_string()),
            ("removed by speed filter", self.records_removed_speed.to_string()),
            ("records after speed filter", self.records_after_speed.to_string()),
            ("displacements", self.displacements_total.to_string()),
            ("  inter-zone", self.displacements_inter_zone.to_string()),
            ("  intra-zone", self.displacements_intra_zone.to_string()),
            ("  touching EXTERNAL", self.displacements_touching_external.to_string()),
            ("travelers", self.travelers.to_string()),
            ("avg displacements / traveler", self.display_average()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<30} {v:>12}");
        }
        if let Some(t) = timings {
            for (stage, ms) in &t.stages {
                let _ = writeln!(out, "{:<30} {:>9.1} ms", format!("time: {stage}"), ms);
            }
        }
        out
    }
}
