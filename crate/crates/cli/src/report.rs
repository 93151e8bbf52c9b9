use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Everything that determines a run, embedded verbatim in its report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub case: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub decision: Option<PathBuf>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub nu: Option<usize>,
    pub bound: Option<String>,
    pub gamma_b: Option<f64>,
    pub gamma_l: Option<f64>,
    pub l_prob: Option<Vec<usize>>,
    pub train_seed: Option<u64>,
    pub validate_seed: Option<u64>,
    pub samples: Option<usize>,
    pub method: Option<String>,
    pub demand: Option<f64>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub feas_tol: Option<f64>,
    pub gap_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub pf_tol: Option<f64>,
    pub limit_tol: Option<f64>,
    pub rank_tol: Option<f64>,
}

impl RunConfig {
    pub fn check(&self) -> anyhow::Result<()> {
        for (name, v) in [("eps", self.eps), ("beta", self.beta), ("eta", self.eta)] {
            if let Some(v) = v {
                anyhow::ensure!(v > 0.0 && v < 1.0, "{name} = {v} must lie in (0, 1)");
            }
        }
        if let (Some(t), Some(v)) = (self.train_seed, self.validate_seed) {
            anyhow::ensure!(
                t != v,
                "validation seed {v} equals the training seed; draw fresh samples"
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub path: PathBuf,
    pub sha256: String,
}

/// Input files read by a run, with their digests.
#[derive(Debug, Default)]
pub struct Inputs(Vec<InputDigest>);

impl Inputs {
    /// Reads a file and records its digest.
    pub fn read(&mut self, role: &'static str, path: &Path) -> anyhow::Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.0.push(InputDigest {
            role,
            path: path.to_path_buf(),
            sha256: hex(&Sha256::digest(&bytes)),
        });
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    fn combined(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.0 {
            h.update(d.role.as_bytes());
            h.update(d.sha256.as_bytes());
        }
        hex(&h.finalize())
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    tool: &'static str,
    version: &'static str,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    timestamp: u64,
    config: &'a RunConfig,
    inputs: &'a [InputDigest],
    input_hash: String,
    result: &'a T,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `<out_dir>/<subcommand>.json` and returns its path.
pub fn write<T: Serialize>(
    cfg: &RunConfig,
    inputs: &Inputs,
    result: &T,
) -> anyhow::Result<PathBuf> {
    let env = Envelope {
        tool: "ccopf",
        version: env!("CARGO_PKG_VERSION"),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: cfg,
        inputs: &inputs.0,
        input_hash: inputs.combined(),
        result,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    write_extra(cfg, &format!("{}.json", cfg.subcommand), &text)
}

/// Writes a side file (such as a CSV extract) into the output directory.
pub fn write_extra(cfg: &RunConfig, name: &str, text: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
