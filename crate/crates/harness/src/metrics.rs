//! Aggregate metrics over run records.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::RunRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SummaryError {
    #[error("no records to summarize")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: u32,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_k_max: f64,
    pub mean_llm_calls: f64,
}

/// Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub self_reported_rate: f64,
    /// Self-reported minus gold success; positive when the agent overrates itself.
    pub heuristic_gap: f64,
    pub mean_llm_calls: f64,
    pub mean_executor_calls: f64,
    pub mean_planner_calls: f64,
    pub mean_k_max: f64,
    pub over_budget: usize,
    pub per_depth: Vec<DepthRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn percent(records: &[&RunRecord], pick: impl Fn(&RunRecord) -> bool) -> f64 {
    100.0 * mean(records.iter().map(|r| if pick(r) { 1.0 } else { 0.0 }))
}

pub fn summarize(records: &[RunRecord]) -> Result<MetricsSummary, SummaryError> {
    if records.is_empty() {
        return Err(SummaryError::EmptyInput);
    }
    let all: Vec<&RunRecord> = records.iter().collect();
    let success_rate = percent(&all, |r| r.gold_reward);
    let self_reported_rate = percent(&all, |r| r.self_reported_success);

    let mut by_depth: BTreeMap<u32, Vec<&RunRecord>> = BTreeMap::new();
    for record in records {
        by_depth.entry(record.depth).or_default().push(record);
    }
    let per_depth = by_depth
        .into_iter()
        .map(|(depth, group)| DepthRow {
            depth,
            episodes: group.len(),
            success_rate: percent(&group, |r| r.gold_reward),
            mean_k_max: mean(group.iter().map(|r| r.k_max as f64)),
            mean_llm_calls: mean(group.iter().map(|r| r.total_calls as f64)),
        })
        .collect();

    Ok(MetricsSummary {
        episodes: records.len(),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        success_rate,
        self_reported_rate,
        heuristic_gap: self_reported_rate - success_rate,
        mean_llm_calls: mean(records.iter().map(|r| r.total_calls as f64)),
        mean_executor_calls: mean(records.iter().map(|r| r.executor_calls as f64)),
        mean_planner_calls: mean(records.iter().map(|r| r.planner_calls as f64)),
        mean_k_max: mean(records.iter().map(|r| r.k_max as f64)),
        over_budget: records.iter().filter(|r| !r.within_budget()).count(),
        per_depth,
    })
}

impl fmt::Display for MetricsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes            {:>8}", self.episodes)?;
        writeln!(f, "errors              {:>8}", self.errors)?;
        writeln!(f, "success rate        {:>7.1}%", self.success_rate)?;
        writeln!(f, "self-reported rate  {:>7.1}%", self.self_reported_rate)?;
        writeln!(f, "heuristic gap       {:>+8.1}", self.heuristic_gap)?;
        writeln!(
            f,
            "mean LLM calls      {:>8.2}  (executor {:.2}, planner {:.2})",
            self.mean_llm_calls, self.mean_executor_calls, self.mean_planner_calls
        )?;
        writeln!(f, "mean k_max          {:>8.2}", self.mean_k_max)?;
        if self.over_budget > 0 {
            writeln!(f, "over call ceiling   {:>8}", self.over_budget)?;
        }
        writeln!(f)?;
        writeln!(f, "depth  episodes  success%  mean k_max  mean calls")?;
        for row in &self.per_depth {
            writeln!(
                f,
                "{:>5}  {:>8}  {:>8.1}  {:>10.2}  {:>10.2}",
                row.depth, row.episodes, row.success_rate, row.mean_k_max, row.mean_llm_calls
            )?;
        }
        Ok(())
    }
}
