//! Pipeline execution: simulate → analyze → write artifacts plus a manifest
//! with the config hash and per-file checksums. Re-running a scenario with
//! the same configuration and seed reproduces every file byte for byte.

use crate::config::Config;
use anyhow::Context;
use rydsim_core::counting::{
    antibunching_estimator, autocorrelation_estimator, conditional_retrieval, cross_correlation,
    singles_rate, write_estimates_csv, CorrelationEstimate, EstimateRecord,
};
use rydsim_core::detection_sim::{run_trials, Detector, HbtArm, Scenario, TimeTagStream};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

/// Checksummed record of one written artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_trials: u64,
    pub files: Vec<FileRecord>,
}

pub fn generator_id() -> String {
    format!("rydsim {}", env!("CARGO_PKG_VERSION"))
}

/// Collects artifacts under one output directory and checksums them as
/// they are written.
pub struct ArtifactWriter {
    root: PathBuf,
    files: Vec<FileRecord>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(ArtifactWriter {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel_path: &str, contents: &str) -> anyhow::Result<()> {
        let full = self.root.join(rel_path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&full, contents).with_context(|| format!("writing {}", full.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(contents.as_bytes());
        self.files.push(FileRecord {
            path: rel_path.to_string(),
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    pub fn finish(mut self, config_hash: &str, seed: u64, n_trials: u64) -> anyhow::Result<Manifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            generator: generator_id(),
            config_hash: config_hash.to_string(),
            seed,
            n_trials,
            files: self.files.clone(),
        };
        let text = toml::to_string_pretty(&manifest)?;
        fs::write(self.root.join("manifest.toml"), text)?;
        Ok(manifest)
    }
}

/// Estimator battery appropriate for the scenario wiring.
pub fn analyze_stream(
    scenario: &Scenario,
    stream: &TimeTagStream,
) -> rydsim_core::Result<Vec<EstimateRecord>> {
    let w = scenario.windows();
    let id = &scenario.id;
    let record = |quantity: &str, estimate: CorrelationEstimate| EstimateRecord {
        quantity: quantity.into(),
        estimate,
        scenario: id.clone(),
    };
    let mut records = Vec::new();
    match scenario.hbt {
        HbtArm::None => {
            records.push(record(
                "p_w",
                singles_rate(stream, Detector::D1, w.write_lo(), w.write_hi())?,
            ));
            records.push(record(
                "p_r",
                singles_rate(stream, Detector::D2, w.read_lo(), w.read_hi())?,
            ));
            records.push(record(
                "p_r_given_w",
                conditional_retrieval(stream, &w, Detector::D1, Detector::D2)?,
            ));
            records.push(record(
                "g2_wr",
                cross_correlation(stream, &w, Detector::D1, Detector::D2)?,
            ));
        }
        HbtArm::ReadArm => {
            records.push(record(
                "p_w",
                singles_rate(stream, Detector::D1, w.write_lo(), w.write_hi())?,
            ));
            records.push(record("alpha", antibunching_estimator(stream, &w)?));
            records.push(record(
                "g2_rr",
                autocorrelation_estimator(
                    stream,
                    (Detector::D3, Detector::D4),
                    w.read_center_us,
                    w.read_width_us,
                    w.n_accidental_peaks,
                )?,
            ));
        }
        HbtArm::WriteArm => {
            records.push(record(
                "p_r",
                singles_rate(stream, Detector::D2, w.read_lo(), w.read_hi())?,
            ));
            records.push(record(
                "g2_ww",
                autocorrelation_estimator(
                    stream,
                    (Detector::D3, Detector::D4),
                    w.write_center_us,
                    w.write_width_us,
                    w.n_accidental_peaks,
                )?,
            ));
        }
    }
    Ok(records)
}

/// Simulate one resolved configuration and write `stream.csv`,
/// `stream.meta.toml` and `estimates.csv` under `prefix` inside the writer.
fn run_point(
    writer: &mut ArtifactWriter,
    config: &Config,
    prefix: &str,
) -> anyhow::Result<Vec<EstimateRecord>> {
    let scenario = config.to_scenario()?;
    let stream = run_trials(&scenario, config.run.n_trials, config.run.seed)?;
    writer.write(&format!("{prefix}stream.csv"), &stream.to_csv_string())?;
    let meta = stream.meta(&config.hash()?);
    writer.write(
        &format!("{prefix}stream.meta.toml"),
        &toml::to_string_pretty(&meta)?,
    )?;
    let records = analyze_stream(&scenario, &stream)?;
    let mut buf = Vec::new();
    write_estimates_csv(&records, &mut buf)?;
    writer.write(&format!("{prefix}estimates.csv"), &String::from_utf8(buf)?)?;
    Ok(records)
}

/// Execute a full scenario (with optional sweep): simulate, analyze, write
/// all artifacts plus the manifest. Returns the manifest.
pub fn run_scenario(config: &Config, out_dir: &Path) -> anyhow::Result<Manifest> {
    config.validate()?;
    let config_hash = config.hash()?;
    let mut writer = ArtifactWriter::new(out_dir)?;
    writer.write("config.toml", &config.to_toml()?)?;

    match &config.sweep {
        None => {
            run_point(&mut writer, config, "")?;
        }
        Some(sweep) => {
            let mut combined = String::from("sweep_value,quantity,value,sigma,n_coinc,scenario\n");
            for (i, &value) in sweep.values.iter().enumerate() {
                let mut point = config.clone();
                point.sweep = None;
                point.set_variable(&sweep.variable, value)?;
                point.scenario.id = format!("{}_{i:03}", config.scenario.id);
                // decorrelate sweep points while keeping determinism
                point.run.seed = config.run.seed.wrapping_add(i as u64);
                let records = run_point(&mut writer, &point, &format!("point_{i:03}/"))?;
                for r in &records {
                    combined.push_str(&format!(
                        "{:.9e},{},{:.9e},{:.9e},{},{}\n",
                        value, r.quantity, r.estimate.value, r.estimate.sigma, r.estimate.n_coinc, r.scenario
                    ));
                }
            }
            writer.write("sweep.csv", &combined)?;
        }
    }
    writer.finish(&config_hash, config.run.seed, config.run.n_trials)
}

/// Re-read a stream (CSV + sidecar) and run the estimator battery for the
/// provided configuration.
pub fn analyze_files(
    config: &Config,
    stream_csv: &Path,
    out_dir: &Path,
) -> anyhow::Result<Manifest> {
    config.validate()?;
    let scenario = config.to_scenario()?;
    let meta_path = stream_meta_path(stream_csv);
    let meta: rydsim_core::detection_sim::StreamMeta = toml::from_str(
        &fs::read_to_string(&meta_path)
            .with_context(|| format!("reading sidecar {}", meta_path.display()))?,
    )?;
    let file = fs::File::open(stream_csv)
        .with_context(|| format!("opening stream {}", stream_csv.display()))?;
    let stream = TimeTagStream::read_csv(std::io::BufReader::new(file), &meta)?;
    let records = analyze_stream(&scenario, &stream)?;
    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut buf = Vec::new();
    write_estimates_csv(&records, &mut buf)?;
    writer.write("estimates.csv", &String::from_utf8(buf)?)?;
    writer.finish(&config.hash()?, meta.seed, meta.trial_count)
}

pub fn stream_meta_path(stream_csv: &Path) -> PathBuf {
    let mut name = stream_csv
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stream.csv".into());
    if let Some(stripped) = name.strip_suffix(".csv") {
        name = stripped.to_string();
    }
    stream_csv.with_file_name(format!("{name}.meta.toml"))
}

/// Verify that every file listed in a manifest is present with the recorded
/// checksum. Used by the determinism checks.
pub fn verify_manifest(out_dir: &Path) -> anyhow::Result<()> {
    let manifest: Manifest = toml::from_str(&fs::read_to_string(out_dir.join("manifest.toml"))?)?;
    for file in &manifest.files {
        let contents = fs::read(out_dir.join(&file.path))
            .with_context(|| format!("manifest file {}", file.path))?;
        let mut hasher = Sha256::new();
        hasher.update(&contents);
        let hash = format!("{:x}", hasher.finalize());
        if hash != file.sha256 {
            anyhow::bail!("checksum mismatch for {}", file.path);
        }
    }
    Ok(())
}
