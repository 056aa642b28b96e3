use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::{TrainConfig, TrainError};
use crate::federation::RoundAudit;
use crate::nn::{write_checkpoint, ParameterSet};

pub const METRICS_HEADER: &str =
    "env_step,train_step,eval_return_mean,eval_success_rate,td_loss,epsilon,agg_round,agg_weights";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const AUDIT_FILE: &str = "aggregation.log";
pub const MIXER_CHECKPOINT: &str = "mixer.ckpt";

pub fn agent_checkpoint_name(agent: usize) -> String {
    format!("agent_{agent}.ckpt")
}

/// One evaluation row of the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub env_step: u64,
    pub train_step: u64,
    pub eval_return_mean: f64,
    pub eval_success_rate: f64,
    /// Mean training loss since the previous row, if any training happened.
    pub td_loss: Option<f64>,
    pub epsilon: f64,
    pub agg_round: u64,
    /// Weights of the latest aggregation round, `;`-joined.
    pub agg_weights: String,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.env_step,
            self.train_step,
            self.eval_return_mean,
            self.eval_success_rate,
            self.td_loss.map_or(String::new(), |l| l.to_string()),
            self.epsilon,
            self.agg_round,
            self.agg_weights
        )
    }
}

/// Resolved configuration plus run metadata, stored as `manifest.txt`.
///
/// Metadata lines start with `#`; the rest is the flat `key=value` config, so
/// the file can be passed back as a config to repeat the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub version: String,
    pub layout_seed: u64,
    pub personalized_cutoff: usize,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# version={}\n", self.version));
        s.push_str(&format!("# master_seed={}\n", self.config.seed));
        s.push_str(&format!("# layout_seed={}\n", self.layout_seed));
        s.push_str(&format!(
            "# effective_personalized_layers={}\n",
            self.personalized_cutoff
        ));
        s.push_str(&format!("# started_unix={}\n", self.started_unix));
        match self.finished_unix {
            Some(t) => s.push_str(&format!("# finished_unix={t}\n")),
            None => s.push_str("# finished_unix=\n"),
        }
        s.push_str(&format!("# artifacts={}\n", self.artifacts.join(",")));
        for (k, v) in self.config.entries() {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn io_err(path: &Path, e: std::io::Error) -> TrainError {
    TrainError::Io(format!("{}: {e}", path.display()))
}

/// Files of one run directory.
pub(crate) struct RunOutput {
    dir: PathBuf,
    metrics: BufWriter<File>,
    audit: BufWriter<File>,
}

impl RunOutput {
    pub(crate) fn create(dir: &Path, manifest: &RunManifest) -> Result<Self, TrainError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut out = Self {
            dir: dir.to_path_buf(),
            metrics: create(&dir.join(METRICS_FILE))?,
            audit: create(&dir.join(AUDIT_FILE))?,
        };
        out.write_manifest(manifest)?;
        writeln!(out.metrics, "{METRICS_HEADER}").map_err(|e| io_err(dir, e))?;
        out.metrics.flush().map_err(|e| io_err(dir, e))?;
        out.audit.flush().map_err(|e| io_err(dir, e))?;
        Ok(out)
    }

    pub(crate) fn write_manifest(&self, manifest: &RunManifest) -> Result<(), TrainError> {
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, manifest.render()).map_err(|e| io_err(&path, e))
    }

    pub(crate) fn row(&mut self, row: &MetricsRow) -> Result<(), TrainError> {
        writeln!(self.metrics, "{}", row.to_csv())
            .and_then(|_| self.metrics.flush())
            .map_err(|e| io_err(&self.dir, e))
    }

    pub(crate) fn audit(&mut self, audit: &RoundAudit) -> Result<(), TrainError> {
        writeln!(self.audit, "{audit}")
            .and_then(|_| self.audit.flush())
            .map_err(|e| io_err(&self.dir, e))
    }

    pub(crate) fn checkpoints<'a>(
        &self,
        agents: impl Iterator<Item = &'a ParameterSet>,
        mixer: &ParameterSet,
    ) -> Result<(), TrainError> {
        for (i, p) in agents.enumerate() {
            write_params(&self.dir.join(agent_checkpoint_name(i)), p)?;
        }
        write_params(&self.dir.join(MIXER_CHECKPOINT), mixer)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, TrainError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_params(path: &Path, params: &ParameterSet) -> Result<(), TrainError> {
    let mut w = create(path)?;
    write_checkpoint(params, &mut w)?;
    w.flush().map_err(|e| io_err(path, e))
}
