//! Per-epoch metrics and the CSV contract.
//!
//! CSV columns: `epoch,slice_id,usage_pct,violation_pct,mean_cost,lambda,
//! switch_rate,coord_rounds`, one row per slice per epoch plus an `all`
//! aggregate row. Numbers are fixed six-decimal, so identical runs produce
//! byte-identical files.

use netslice_core::domain::Episode;
use std::fmt::Write as _;

pub const CSV_HEADER: &str =
    "epoch,slice_id,usage_pct,violation_pct,mean_cost,lambda,switch_rate,coord_rounds";

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Slice index as a string, or `all` for the aggregate.
    pub slice_id: String,
    /// Mean counted resource usage, percent of the six-resource total.
    pub usage_pct: f64,
    /// Percent of episodes whose mean per-slot cost exceeds the threshold.
    pub violation_pct: f64,
    pub mean_cost: f64,
    pub lambda: f64,
    /// Percent of episodes in which the guard handed over to the baseline.
    pub switch_rate: f64,
    /// Mean coordination rounds per slot.
    pub coord_rounds: f64,
    /// Mean per-episode excess of mean cost over the threshold (alternative
    /// violation view; not part of the CSV contract).
    pub excess_cost: f64,
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.epoch,
            self.slice_id,
            self.usage_pct,
            self.violation_pct,
            self.mean_cost,
            self.lambda,
            self.switch_rate,
            self.coord_rounds
        )
    }

    pub fn validate(&self) {
        assert!((0.0..=100.0).contains(&self.usage_pct), "usage out of range");
        assert!(
            (0.0..=100.0).contains(&self.violation_pct),
            "violation out of range"
        );
        assert!((0.0..=100.0).contains(&self.switch_rate));
    }
}

/// Computes one epoch's records from per-slice episode lists. `episodes[i]`
/// holds slice `i`'s episodes; `sla_thresholds[i]` its violation bar;
/// `lambdas[i]` the agent multiplier to report. `coord_rounds` is the mean
/// negotiation rounds per slot across the epoch (identical for every row).
pub fn compute_metrics(
    epoch: usize,
    episodes: &[Vec<Episode>],
    sla_thresholds: &[f64],
    lambdas: &[f64],
    coord_rounds: f64,
) -> Vec<MetricsRecord> {
    assert!(!episodes.is_empty());
    assert!(episodes.iter().all(|e| !e.is_empty()), "episodes required");
    assert_eq!(episodes.len(), sla_thresholds.len());
    assert_eq!(episodes.len(), lambdas.len());
    let mut rows = Vec::with_capacity(episodes.len() + 1);
    for (i, eps) in episodes.iter().enumerate() {
        let n = eps.len() as f64;
        let usage_pct = 100.0 * eps.iter().map(|e| e.mean_usage()).sum::<f64>() / n;
        let violation_pct = 100.0
            * eps
                .iter()
                .filter(|e| e.violated(sla_thresholds[i]))
                .count() as f64
            / n;
        let mean_cost = eps.iter().map(|e| e.mean_cost()).sum::<f64>() / n;
        let switch_rate =
            100.0 * eps.iter().filter(|e| e.truncation_slot.is_some()).count() as f64 / n;
        let excess_cost = eps
            .iter()
            .map(|e| (e.mean_cost() - sla_thresholds[i]).max(0.0))
            .sum::<f64>()
            / n;
        rows.push(MetricsRecord {
            epoch,
            slice_id: i.to_string(),
            usage_pct,
            violation_pct,
            mean_cost,
            lambda: lambdas[i],
            switch_rate,
            coord_rounds,
            excess_cost,
        });
    }
    let k = episodes.len() as f64;
    let agg = |f: &dyn Fn(&MetricsRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
    rows.push(MetricsRecord {
        epoch,
        slice_id: "all".to_string(),
        usage_pct: agg(&|r| r.usage_pct),
        violation_pct: agg(&|r| r.violation_pct),
        mean_cost: agg(&|r| r.mean_cost),
        lambda: agg(&|r| r.lambda),
        switch_rate: agg(&|r| r.switch_rate),
        coord_rounds,
        excess_cost: agg(&|r| r.excess_cost),
    });
    for r in &rows {
        r.validate();
    }
    rows
}

/// Renders records to the full CSV document (header included).
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 64 + CSV_HEADER.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.to_csv_row());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use netslice_core::domain::{Action, PolicySource, State, Transition};

    fn episode(cost: f64, usage_each: f64, truncated: Option<usize>) -> Episode {
        let mk = |source| Transition {
            state: State::initial(0.05),
            action: Action::uniform(usage_each),
            reward: -6.0 * usage_each,
            cost,
            source,
            perf_raw: 0.0,
        };
        Episode {
            transitions: match truncated {
                None => vec![mk(PolicySource::Learned); 4],
                Some(_) => vec![
                    mk(PolicySource::Learned),
                    mk(PolicySource::Baseline),
                    mk(PolicySource::Baseline),
                    mk(PolicySource::Baseline),
                ],
            },
            truncation_slot: truncated,
        }
    }

    #[test]
    fn zero_cost_zero_usage_rows() {
        let eps = vec![vec![episode(0.0, 0.0, None); 3]];
        let rows = compute_metrics(0, &eps, &[0.05], &[0.0], 1.0);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].violation_pct, 0.0);
        assert_eq!(rows[0].usage_pct, 0.0);
        assert_eq!(rows[1].slice_id, "all");
    }

    #[test]
    fn one_in_four_violations_is_25_pct() {
        let eps = vec![vec![
            episode(0.0, 0.1, None),
            episode(0.0, 0.1, None),
            episode(0.0, 0.1, None),
            episode(0.2, 0.1, Some(1)),
        ]];
        let rows = compute_metrics(3, &eps, &[0.05], &[1.5], 2.0);
        assert_eq!(rows[0].violation_pct, 25.0);
        assert_eq!(rows[0].switch_rate, 25.0);
        assert!((rows[0].usage_pct - 10.0).abs() < 1e-9);
        assert!((rows[0].excess_cost - 0.15 / 4.0).abs() < 1e-12);
        assert_eq!(rows[0].lambda, 1.5);
    }

    #[test]
    fn csv_layout_is_stable() {
        let eps = vec![vec![episode(0.02, 0.25, None); 2]; 2];
        let rows = compute_metrics(1, &eps, &[0.05, 0.05], &[0.5, 1.0], 1.25);
        let csv = to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[1],
            "1,0,25.000000,0.000000,0.020000,0.500000,0.000000,1.250000"
        );
        assert!(lines[3].starts_with("1,all,"));
        // Byte-identical on recompute.
        let again = to_csv(&compute_metrics(1, &eps, &[0.05, 0.05], &[0.5, 1.0], 1.25));
        assert_eq!(csv, again);
    }
}
