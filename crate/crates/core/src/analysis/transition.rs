use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Accuracy per evaluated difficulty level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<(u64, f64)>,
}

impl Series {
    pub fn new(label: &str, grid: &[u64], values: &[f64]) -> Self {
        Series {
            label: label.to_string(),
            points: grid.iter().copied().zip(values.iter().copied()).collect(),
        }
    }

    pub fn grid(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPoint {
    pub task: String,
    /// Last level where RDD trails, first level from which it never does.
    pub bracket: (u64, u64),
}

/// The consecutive grid pair around which RDD first catches up with the
/// baseline and stays at or above it. `None` if it never catches up, or if
/// it is ahead from the first level on (no crossing to bracket).
pub fn find_transition_point(rdd: &Series, baseline: &Series) -> Result<Option<TransitionPoint>, AnalysisError> {
    if rdd.grid() != baseline.grid() {
        return Err(AnalysisError::GridMismatch {
            rdd: rdd.grid(),
            baseline: baseline.grid(),
        });
    }
    let ahead: Vec<bool> = rdd
        .points
        .iter()
        .zip(&baseline.points)
        .map(|(r, b)| r.1 >= b.1)
        .collect();
    let Some(k) = (0..ahead.len()).find(|&k| ahead[k..].iter().all(|&a| a)) else {
        return Ok(None);
    };
    if k == 0 {
        return Ok(None);
    }
    Ok(Some(TransitionPoint {
        task: rdd.label.clone(),
        bracket: (rdd.points[k - 1].0, rdd.points[k].0),
    }))
}
