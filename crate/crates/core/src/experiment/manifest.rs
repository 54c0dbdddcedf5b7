use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, LevelSummary, Method, RunConfig};
use crate::analysis::ResourceReport;
use crate::backends::ReplayTurn;
use crate::benchmarks::BenchmarkInstance;
use crate::graph::{DecompositionGraph, ProblemId};
use crate::scheduler::{Diagnostic, Step, TraceEvent, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub asset_version: String,
    pub tool_version: String,
    pub backend: String,
    pub config: RunConfig,
    pub started_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub root: Verdict,
    pub nodes: BTreeMap<ProblemId, Verdict>,
    pub recovery: bool,
    pub propagation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub n0: usize,
    pub ordinal: usize,
    pub method: Method,
    pub instance: BenchmarkInstance,
    pub answer: Option<String>,
    pub score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trace: Vec<TraceEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<DecompositionGraph>,
    pub resources: ResourceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<RunOutcome>,
}

/// One line of a manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ManifestRecord {
    Header(ManifestHeader),
    Instance(Box<InstanceRecord>),
    Footer {
        finished_at: u64,
        summaries: Vec<LevelSummary>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub instances: Vec<InstanceRecord>,
    /// Missing when the run was interrupted.
    pub summaries: Option<Vec<LevelSummary>>,
    pub finished_at: Option<u64>,
}

impl Manifest {
    pub fn instance(&self, id: &str) -> Option<&InstanceRecord> {
        self.instances.iter().find(|r| r.id == id)
    }

    pub fn write_to(&self, w: &mut dyn Write) -> Result<(), ExperimentError> {
        write_record(w, &ManifestRecord::Header(self.header.clone()))?;
        for r in &self.instances {
            write_record(w, &ManifestRecord::Instance(Box::new(r.clone())))?;
        }
        if let (Some(finished_at), Some(summaries)) = (self.finished_at, &self.summaries) {
            write_record(
                w,
                &ManifestRecord::Footer {
                    finished_at,
                    summaries: summaries.clone(),
                },
            )?;
        }
        Ok(())
    }
}

pub(super) fn write_record(w: &mut dyn Write, record: &ManifestRecord) -> Result<(), ExperimentError> {
    let line = serde_json::to_string(record).map_err(|e| ExperimentError::Io(e.to_string()))?;
    writeln!(w, "{line}")?;
    w.flush()?;
    Ok(())
}

/// Parses a manifest. A torn final line (an interrupted write) is dropped;
/// malformed lines elsewhere are errors.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Manifest, ExperimentError> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut header = None;
    let mut instances = Vec::new();
    let mut footer = None;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) if Some(i) == last && header.is_some() => break,
            Err(e) => {
                return Err(ExperimentError::Manifest {
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        };
        match record {
            ManifestRecord::Header(h) if header.is_none() => header = Some(h),
            ManifestRecord::Header(_) => {
                return Err(ExperimentError::Manifest {
                    line: i + 1,
                    reason: "second header".into(),
                })
            }
            ManifestRecord::Instance(r) => instances.push(*r),
            ManifestRecord::Footer { finished_at, summaries } => footer = Some((finished_at, summaries)),
        }
    }
    let header = header.ok_or(ExperimentError::Manifest {
        line: 1,
        reason: "missing header".into(),
    })?;
    let (finished_at, summaries) = footer.map_or((None, None), |(f, s)| (Some(f), Some(s)));
    Ok(Manifest {
        header,
        instances,
        summaries,
        finished_at,
    })
}

/// Every recorded model call, in order. Substitutions are local and skipped.
pub fn replay_turns(manifest: &Manifest) -> Vec<ReplayTurn> {
    manifest
        .instances
        .iter()
        .flat_map(|r| &r.trace)
        .filter(|e| e.step != Step::Substitute)
        .map(|e| ReplayTurn::recorded(e.prompt.clone(), e.completion.clone(), e.usage))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::OracleBackend;
    use crate::experiment::run_experiment;

    fn sample() -> (Manifest, Vec<u8>) {
        let config = RunConfig {
            levels: vec![7],
            count: 2,
            ..RunConfig::default()
        };
        let mut buf = Vec::new();
        let m = run_experiment(&config, &OracleBackend::default(), Some(&mut buf)).unwrap();
        (m, buf)
    }

    #[test]
    fn streamed_file_round_trips() {
        let (m, buf) = sample();
        assert_eq!(read_manifest(&buf[..]).unwrap(), m);
        let mut again = Vec::new();
        m.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn interrupted_file_keeps_finished_instances() {
        let (m, buf) = sample();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // header, first instance, and half of the second
        let torn = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..lines[2].len() / 2]);
        let read = read_manifest(torn.as_bytes()).unwrap();
        assert_eq!(read.instances, m.instances[..1]);
        assert_eq!(read.summaries, None);
    }
}
