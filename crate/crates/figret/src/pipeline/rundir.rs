//! Run-directory layout and stage-atomic persistence.
//!
//! Layout: `config.json`, `pool.jsonl`, `triplets.jsonl`, `model.ckpt`,
//! `model_initial.ckpt`, `exemplars.jsonl`, `metrics.jsonl`, `state.json`.
//! Artifacts are written via temp-file + rename, and `state.json` is written
//! last, so a killed run resumes from the previous stage boundary with prior
//! artifacts intact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{read_jsonl_records, write_jsonl_records, QueryId};
use crate::encoder::GuidanceTriplet;
use crate::error::{Error, Result};
use crate::scoring::SamplePoolEntry;
use crate::teacher::{Exemplar, ExemplarStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Collect,
    Score,
    Construct,
    Train,
    Assess,
    Done,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Collect => "collect",
            Stage::Score => "score",
            Stage::Construct => "construct",
            Stage::Train => "train",
            Stage::Assess => "assess",
            Stage::Done => "done",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a run currently stands: the next stage to execute and the state
/// carried between stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub iteration: usize,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Queries whose NDCG regressed last assessment; they re-enter guidance
    /// construction in the next iteration regardless of the threshold.
    #[serde(default)]
    pub carryover_regressed: Vec<QueryId>,
}

impl RunState {
    pub fn fresh() -> Self {
        RunState {
            iteration: 1,
            stage: Stage::Collect,
            threshold: None,
            carryover_regressed: Vec::new(),
        }
    }
}

/// One metrics event. `timestamp` is a logical sequence number so identical
/// runs produce byte-identical logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEvent {
    pub stage: String,
    pub iteration: usize,
    pub key: String,
    pub value: Value,
    pub timestamp: u64,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let dir = RunDir::new(root);
        fs::create_dir_all(&dir.root)?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn state_path(&self) -> PathBuf {
        self.root.join("state.json")
    }

    pub fn pool_path(&self) -> PathBuf {
        self.root.join("pool.jsonl")
    }

    pub fn triplets_path(&self) -> PathBuf {
        self.root.join("triplets.jsonl")
    }

    pub fn model_path(&self) -> PathBuf {
        self.root.join("model.ckpt")
    }

    pub fn model_initial_path(&self) -> PathBuf {
        self.root.join("model_initial.ckpt")
    }

    pub fn exemplars_path(&self) -> PathBuf {
        self.root.join("exemplars.jsonl")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn is_initialized(&self) -> bool {
        self.state_path().exists()
    }

    pub fn write_json_atomic<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut file = fs::File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut file, value)?;
            file.write_all(b"\n")?;
            file.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_json<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<T> {
        let data = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Ok(serde_json::from_str(&data)?)
    }

    pub fn save_state(&self, state: &RunState) -> Result<()> {
        self.write_json_atomic(&self.state_path(), state)
    }

    pub fn load_state(&self) -> Result<RunState> {
        self.load_json(&self.state_path())
    }

    pub fn save_pool(&self, pool: &[SamplePoolEntry]) -> Result<()> {
        write_jsonl_records(&self.pool_path(), pool)
    }

    pub fn load_pool(&self) -> Result<Vec<SamplePoolEntry>> {
        read_jsonl_records(&self.pool_path())
    }

    pub fn save_triplets(&self, triplets: &[GuidanceTriplet]) -> Result<()> {
        write_jsonl_records(&self.triplets_path(), triplets)
    }

    pub fn load_triplets(&self) -> Result<Vec<GuidanceTriplet>> {
        read_jsonl_records(&self.triplets_path())
    }

    pub fn save_exemplars(&self, store: &ExemplarStore) -> Result<()> {
        write_jsonl_records(&self.exemplars_path(), &store.exemplars)
    }

    pub fn load_exemplars(&self) -> Result<ExemplarStore> {
        if !self.exemplars_path().exists() {
            return Ok(ExemplarStore::default());
        }
        let exemplars: Vec<Exemplar> = read_jsonl_records(&self.exemplars_path())?;
        Ok(ExemplarStore { exemplars })
    }

    pub fn read_metrics(&self) -> Result<Vec<MetricEvent>> {
        if !self.metrics_path().exists() {
            return Ok(Vec::new());
        }
        read_jsonl_records(&self.metrics_path())
    }

    /// Append one stage's metrics. Any previous events for the same
    /// (stage, iteration) are dropped first, so a stage that re-runs after a
    /// crash does not duplicate its events; timestamps are renumbered as the
    /// event's position in the file.
    pub fn append_stage_metrics(
        &self,
        stage: &str,
        iteration: usize,
        entries: Vec<(String, Value)>,
    ) -> Result<()> {
        let mut events: Vec<MetricEvent> = self
            .read_metrics()?
            .into_iter()
            .filter(|e| !(e.stage == stage && e.iteration == iteration))
            .collect();
        for (key, value) in entries {
            events.push(MetricEvent {
                stage: stage.to_string(),
                iteration,
                key,
                value,
                timestamp: 0,
            });
        }
        for (i, event) in events.iter_mut().enumerate() {
            event.timestamp = i as u64;
        }
        write_jsonl_records(&self.metrics_path(), &events)
    }
}
