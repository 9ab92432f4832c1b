use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{CharacterizationTable, EvalSummary, PipelineConfig};
use crate::error::{Error, Result};

/// `<dataset>_<layer>_<reduction><dim>_<way>w<shot>s`
pub fn run_stem(dataset: &str, config: &PipelineConfig) -> String {
    format!(
        "{}_{}_{}_{}w{}s",
        dataset,
        config.layer_id,
        config.reduction.tag(),
        config.sampler.way,
        config.sampler.shot
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the per-episode CSV and the JSON summary; returns their paths.
pub fn write_eval_outputs(summary: &EvalSummary, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let stem = run_stem(&summary.dataset, &summary.config);
    let dir = dir.as_ref();
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let mut csv = String::from("episode_index,correct,total,accuracy\n");
    for r in &summary.per_episode {
        writeln!(csv, "{},{},{},{}", r.episode_index, r.correct, r.total, r.accuracy).unwrap();
    }
    write_text(&csv_path, &csv)?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_text(&json_path, &(json + "\n"))?;
    Ok((csv_path, json_path))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<EvalSummary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

/// Writes `<dataset>_characterization.json` and `<dataset>_layers.csv`.
pub fn write_characterization(table: &CharacterizationTable, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let json_path = dir.join(format!("{}_characterization.json", table.dataset));
    let csv_path = dir.join(format!("{}_layers.csv", table.dataset));
    let json = serde_json::to_string_pretty(table).expect("table serializes");
    write_text(&json_path, &(json + "\n"))?;
    let mut csv = String::from("layer,correct,total,accuracy\n");
    for l in &table.layers {
        writeln!(csv, "{},{},{},{}", l.layer_id, l.correct, l.total, l.accuracy).unwrap();
    }
    write_text(&csv_path, &csv)?;
    Ok((json_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::SamplerConfig;
    use crate::harness::{EpisodeResult, Reduction};

    #[test]
    fn stem_follows_naming_scheme() {
        let mut c = PipelineConfig::new(21, SamplerConfig::new(5, 5, 7));
        c.reduction = Reduction::Pca(512);
        assert_eq!(run_stem("mini", &c), "mini_21_pca512_5w5s");
        c.reduction = Reduction::Raw;
        assert_eq!(run_stem("cifarfs", &c), "cifarfs_21_raw_5w5s");
    }

    #[test]
    fn summary_round_trips_through_json() {
        let c = PipelineConfig::new(2, SamplerConfig::new(5, 1, 3));
        let per = vec![
            EpisodeResult {
                episode_index: 0,
                correct: 70,
                total: 75,
                accuracy: 70.0 / 75.0,
            },
            EpisodeResult {
                episode_index: 1,
                correct: 75,
                total: 75,
                accuracy: 1.0,
            },
        ];
        let s = EvalSummary::from_results(&c, per, 0.5).unwrap().with_dataset("toy");
        let dir = tempfile::tempdir().unwrap();
        let (csv, json) = write_eval_outputs(&s, dir.path()).unwrap();
        let text = fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_summary(json).unwrap(), s);
    }
}
