use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backends::UsageRecord;

/// Output tokens are weighted this much more than context tokens.
pub const OUTPUT_TOKEN_WEIGHT: u64 = 3;

pub fn matched_cost(context_tokens: u64, output_tokens: u64) -> u64 {
    context_tokens + OUTPUT_TOKEN_WEIGHT * output_tokens
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceReport {
    pub calls: u64,
    pub context_tokens: u64,
    pub output_tokens: u64,
    pub wall_time: Duration,
}

impl ResourceReport {
    pub fn new(calls: u64, context_tokens: u64, output_tokens: u64) -> Self {
        ResourceReport {
            calls,
            context_tokens,
            output_tokens,
            wall_time: Duration::ZERO,
        }
    }

    pub fn from_usage<'a>(records: impl IntoIterator<Item = &'a UsageRecord>) -> Self {
        let mut r = ResourceReport::default();
        for u in records {
            r.add_usage(u);
        }
        r
    }

    pub fn add_usage(&mut self, u: &UsageRecord) {
        self.calls += u64::from(u.call_count);
        self.context_tokens += u.context_tokens;
        self.output_tokens += u.output_tokens;
        self.wall_time += u.latency;
    }

    pub fn add(&mut self, other: &ResourceReport) {
        self.calls += other.calls;
        self.context_tokens += other.context_tokens;
        self.output_tokens += other.output_tokens;
        self.wall_time += other.wall_time;
    }

    pub fn matched_cost(&self) -> u64 {
        matched_cost(self.context_tokens, self.output_tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeMatch {
    /// RDD cost over baseline cost.
    pub ratio: f64,
    /// Smallest sample count whose projected baseline cost covers the RDD cost.
    pub k_recommendation: u64,
}

/// `baseline` is the usage of a single sample (one reasoning chain).
pub fn match_compute(baseline: &ResourceReport, rdd: &ResourceReport) -> ComputeMatch {
    let base = baseline.matched_cost();
    let cost = rdd.matched_cost();
    ComputeMatch {
        ratio: if base == 0 { f64::INFINITY } else { cost as f64 / base as f64 },
        k_recommendation: if base == 0 { 0 } else { cost.div_ceil(base).max(1) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_formula() {
        assert_eq!(matched_cost(100, 50), 250);
        let r = ResourceReport::new(1, 100, 50);
        assert_eq!(match_compute(&r, &r), ComputeMatch { ratio: 1.0, k_recommendation: 1 });
    }

    #[test]
    fn k_rounds_up() {
        let m = match_compute(&ResourceReport::new(1, 300, 0), &ResourceReport::new(9, 1400, 0));
        assert_eq!(m.k_recommendation, 5);
    }
}
