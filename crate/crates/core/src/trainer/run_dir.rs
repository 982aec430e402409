use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::policy::PolicyModel;

/// Output directory of a training run:
///
/// ```text
/// config.json
/// metrics.jsonl
/// checkpoints/iter-{k}.model.json
/// model.json
/// ```
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Create the directory and truncate any previous metrics file.
    pub fn create(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("checkpoints"))?;
        File::create(root.join("metrics.jsonl"))?;
        Ok(RunDir { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_config<T: Serialize>(&self, config: &T) -> std::io::Result<()> {
        write_json(&self.root.join("config.json"), config)
    }

    /// Append one record with keys in sorted order.
    pub fn append_metrics<T: Serialize>(&self, record: &T) -> std::io::Result<()> {
        let value = serde_json::to_value(record).map_err(std::io::Error::other)?;
        let mut f = OpenOptions::new()
            .append(true)
            .create(true)
            .open(self.root.join("metrics.jsonl"))?;
        writeln!(f, "{}", serde_json::to_string(&value).map_err(std::io::Error::other)?)
    }

    pub fn checkpoint_path(&self, iteration: usize) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("iter-{iteration}.model.json"))
    }

    pub fn write_checkpoint(&self, iteration: usize, model: &PolicyModel) -> std::io::Result<()> {
        model.save(&self.checkpoint_path(iteration))
    }

    pub fn model_path(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn write_model(&self, model: &PolicyModel) -> std::io::Result<()> {
        model.save(&self.model_path())
    }
}

/// Pretty JSON with sorted keys.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let value = serde_json::to_value(value).map_err(std::io::Error::other)?;
    let mut text = serde_json::to_string_pretty(&value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path().join("run")).unwrap();
        run.write_config(&serde_json::json!({"b": 1, "a": 2})).unwrap();
        run.append_metrics(&serde_json::json!({"z": 1, "k": 0.5})).unwrap();
        run.append_metrics(&serde_json::json!({"z": 2})).unwrap();
        let metrics = fs::read_to_string(run.path().join("metrics.jsonl")).unwrap();
        assert_eq!(metrics, "{\"k\":0.5,\"z\":1}\n{\"z\":2}\n");
        let config = fs::read_to_string(run.path().join("config.json")).unwrap();
        assert!(config.find("\"a\"").unwrap() < config.find("\"b\"").unwrap());
        assert!(run.checkpoint_path(3).ends_with("checkpoints/iter-3.model.json"));
    }
}
