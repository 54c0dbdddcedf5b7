//! Published measurements for the letter concatenation benchmark, and the
//! baseline accuracy series used to locate transition points.

use super::resources::ResourceReport;
use super::transition::Series;

pub const LETTER_CONCAT_GRID: [u64; 6] = [5, 10, 20, 50, 70, 90];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsageRow {
    pub n0: u64,
    pub method: &'static str,
    pub hours: f64,
    pub calls: u64,
    pub context_tokens: u64,
    pub output_tokens: u64,
}

impl UsageRow {
    pub fn report(&self) -> ResourceReport {
        ResourceReport::new(self.calls, self.context_tokens, self.output_tokens)
    }
}

const fn row(n0: u64, method: &'static str, hours: f64, calls: u64, context_tokens: u64, output_tokens: u64) -> UsageRow {
    UsageRow { n0, method, hours, calls, context_tokens, output_tokens }
}

/// Letter concatenation, task-specific examples.
pub const LETTER_CONCAT_SPECIFIC_USAGE: [UsageRow; 18] = [
    row(5, "CoT+SC", 2.75, 2_500, 1_249_529, 84_656),
    row(5, "LtM+SC", 3.78, 1_100, 1_141_800, 122_996),
    row(5, "RDD+LtM", 0.53, 506, 466_812, 14_572),
    row(10, "CoT+SC", 3.80, 2_500, 1_332_860, 120_837),
    row(10, "LtM+SC", 8.87, 1_100, 1_373_365, 295_972),
    row(10, "RDD+LtM", 1.20, 880, 817_621, 35_440),
    row(20, "CoT+SC", 5.82, 2_500, 1_497_807, 188_666),
    row(20, "LtM+SC", 11.15, 500, 889_367, 378_866),
    row(20, "RDD+LtM", 2.50, 1_541, 1_416_940, 75_390),
    row(50, "CoT+SC", 13.18, 2_700, 2_166_008, 437_959),
    row(50, "LtM+SC", 17.78, 700, 1_893_349, 899_997),
    row(50, "RDD+LtM", 4.85, 2_022, 2_712_931, 250_710),
    row(70, "CoT+SC", 12.18, 2_700, 2_527_744, 653_758),
    row(70, "LtM+SC", 66.94, 509, 754_192, 3_098_360),
    row(70, "RDD+LtM", 7.10, 924, 1_289_806, 389_013),
    row(90, "CoT+SC", 25.57, 2_700, 3_536_975, 1_372_692),
    row(90, "LtM+SC", 310.12, 421, 686_331, 3_121_383),
    row(90, "RDD+LtM", 10.53, 974, 1_396_950, 570_232),
];

/// Step accuracies per difficulty: (n0, φ_d, φ_m, φ_u, φ_RDD).
pub type StepRow = (u64, f64, f64, f64, f64);

pub const LETTER_CONCAT_SPECIFIC_STEPS: [StepRow; 6] = [
    (5, 1.00, 0.99, 0.99, 0.98),
    (10, 1.00, 0.98, 0.97, 0.91),
    (20, 1.00, 0.97, 0.98, 0.85),
    (50, 1.00, 0.97, 0.98, 0.80),
    (70, 1.00, 0.96, 0.98, 0.84),
    (90, 0.94, 0.94, 0.87, 0.45),
];

pub const LETTER_CONCAT_GENERIC_STEPS: [StepRow; 6] = [
    (5, 1.00, 0.96, 0.97, 0.93),
    (10, 1.00, 0.99, 0.93, 0.85),
    (20, 1.00, 0.96, 0.92, 0.71),
    (50, 1.00, 0.93, 0.92, 0.42),
    (70, 1.00, 0.85, 0.93, 0.28),
    (90, 1.00, 0.81, 0.90, 0.11),
];

pub fn rdd_series(label: &str, rows: &[StepRow]) -> Series {
    Series {
        label: label.to_string(),
        points: rows.iter().map(|r| (r.0, r.4)).collect(),
    }
}

/// Baseline accuracy curves read off the accuracy plots; only their
/// crossing pattern against the RDD series matters.
pub fn letter_concat_specific_baseline() -> Series {
    Series::new("LtM+SC", &LETTER_CONCAT_GRID, &[1.00, 0.96, 0.90, 0.52, 0.33, 0.20])
}

pub fn letter_concat_generic_baseline() -> Series {
    Series::new("CoT+SC", &LETTER_CONCAT_GRID, &[0.99, 0.92, 0.62, 0.24, 0.12, 0.04])
}
