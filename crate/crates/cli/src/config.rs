//! Flat TOML run configurations, one struct per subcommand. Every run
//! writes its resolved config back into the run directory so results are
//! reproducible from that directory alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use iphs::error::{Error, Result};

pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.span().map(|s| s.start).unwrap_or(0),
        message: e.message().to_string(),
    })
}

pub fn write_resolved<T: Serialize>(out_dir: &Path, config: &T) -> Result<()> {
    let text = toml::to_string_pretty(config).map_err(|e| Error::Config(e.to_string()))?;
    let path = out_dir.join("config.resolved.toml");
    std::fs::write(&path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn ensure_out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse a 1-based edge list like `"1-2,2-3"` into 0-based pairs.
pub fn parse_edges(s: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (a, b) = part
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("bad edge {part:?}, expected like 1-2")))?;
        let a: usize = a
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad zone number in edge {part:?}")))?;
        let b: usize = b
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad zone number in edge {part:?}")))?;
        if a == 0 || b == 0 {
            return Err(Error::Config("zones are numbered from 1".into()));
        }
        edges.push((a - 1, b - 1));
    }
    Ok(edges)
}

fn default_seed() -> u64 {
    0
}

fn default_out() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateGasConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Number of state rows in the emitted dataset.
    #[serde(default = "GenerateGasConfig::default_samples")]
    pub samples: usize,
    #[serde(default = "GenerateGasConfig::default_h")]
    pub h: f64,
    /// Internal integrator substeps per emitted sample.
    #[serde(default = "GenerateGasConfig::default_substeps")]
    pub substeps: usize,
    #[serde(default = "GenerateGasConfig::default_forcing_amplitude")]
    pub forcing_amplitude: f64,
    #[serde(default = "GenerateGasConfig::default_forcing_freq_hz")]
    pub forcing_freq_hz: f64,
    #[serde(default = "GenerateGasConfig::default_noise_factor")]
    pub noise_factor: f64,
    #[serde(default = "GenerateGasConfig::default_p0")]
    pub p0: f64,
    #[serde(default = "GenerateGasConfig::default_t0")]
    pub t0: f64,
    #[serde(default = "GenerateGasConfig::default_v0")]
    pub v0: f64,
}

impl GenerateGasConfig {
    fn default_samples() -> usize {
        10_000
    }
    fn default_h() -> f64 {
        0.01
    }
    fn default_substeps() -> usize {
        100
    }
    fn default_forcing_amplitude() -> f64 {
        2.0
    }
    fn default_forcing_freq_hz() -> f64 {
        0.2
    }
    fn default_noise_factor() -> f64 {
        0.2
    }
    fn default_p0() -> f64 {
        101_325.0
    }
    fn default_t0() -> f64 {
        290.0
    }
    fn default_v0() -> f64 {
        0.001
    }
}

impl Default for GenerateGasConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateBuildingConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "GenerateBuildingConfig::default_days")]
    pub days: usize,
    #[serde(default = "GenerateBuildingConfig::default_h")]
    pub h: f64,
    #[serde(default = "GenerateBuildingConfig::default_substeps")]
    pub substeps: usize,
    #[serde(default = "GenerateBuildingConfig::default_noise_factor")]
    pub noise_factor: f64,
    #[serde(default = "GenerateBuildingConfig::default_zones")]
    pub zones: usize,
    /// 1-based edge list; two bedrooms flanking a living room by default.
    #[serde(default = "GenerateBuildingConfig::default_edges")]
    pub edges: String,
    #[serde(default = "GenerateBuildingConfig::default_heat_capacity")]
    pub heat_capacity: f64,
    #[serde(default = "GenerateBuildingConfig::default_lambda_edge")]
    pub lambda_edge: Vec<f64>,
    #[serde(default = "GenerateBuildingConfig::default_lambda_ext")]
    pub lambda_ext: Vec<f64>,
    #[serde(default = "GenerateBuildingConfig::default_gain_s")]
    pub b_s: Vec<f64>,
    #[serde(default = "GenerateBuildingConfig::default_gain_h")]
    pub b_h: Vec<f64>,
    #[serde(default = "GenerateBuildingConfig::default_gain_c")]
    pub b_c: Vec<f64>,
    #[serde(default = "GenerateBuildingConfig::default_t_init")]
    pub t_init: Vec<f64>,
}

impl GenerateBuildingConfig {
    fn default_days() -> usize {
        300
    }
    fn default_h() -> f64 {
        900.0
    }
    fn default_substeps() -> usize {
        10
    }
    fn default_noise_factor() -> f64 {
        0.2
    }
    fn default_zones() -> usize {
        3
    }
    fn default_edges() -> String {
        "1-2,2-3".into()
    }
    fn default_heat_capacity() -> f64 {
        1e6
    }
    fn default_lambda_edge() -> Vec<f64> {
        vec![55.0, 80.0]
    }
    fn default_lambda_ext() -> Vec<f64> {
        vec![45.0, 38.0, 52.0]
    }
    fn default_gain_s() -> Vec<f64> {
        vec![2.7e-3, 2.2e-3, 3.1e-3]
    }
    fn default_gain_h() -> Vec<f64> {
        vec![3.4e-3, 3.3e-3, 3.5e-3]
    }
    fn default_gain_c() -> Vec<f64> {
        vec![3.0e-3, 2.8e-3, 3.2e-3]
    }
    fn default_t_init() -> Vec<f64> {
        vec![292.0, 291.0, 290.0]
    }
}

impl Default for GenerateBuildingConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub dataset: PathBuf,
    /// building | gas-iphs | vanilla-node
    pub model: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "TrainFileConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default = "TrainFileConfig::default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub l1_weight: f64,
    /// 0 disables clipping.
    #[serde(default)]
    pub gradient_clip: f64,
    #[serde(default = "TrainFileConfig::default_chunk_len")]
    pub chunk_len: usize,
    #[serde(default = "TrainFileConfig::default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub normalize: Option<bool>,
    /// building only: state | temperature
    #[serde(default)]
    pub loss_space: Option<String>,
    #[serde(default = "TrainFileConfig::default_n_h")]
    pub n_h: usize,
    #[serde(default = "TrainFileConfig::default_gamma_scale")]
    pub gamma_scale: f64,
    #[serde(default = "TrainFileConfig::default_hidden")]
    pub hidden: usize,
    #[serde(default = "GenerateBuildingConfig::default_heat_capacity")]
    pub heat_capacity: f64,
    #[serde(default = "GenerateBuildingConfig::default_edges")]
    pub edges: String,
}

impl TrainFileConfig {
    fn default_epochs() -> usize {
        200
    }
    fn default_batch_size() -> usize {
        8
    }
    fn default_chunk_len() -> usize {
        250
    }
    fn default_val_fraction() -> f64 {
        0.2
    }
    fn default_n_h() -> usize {
        16
    }
    fn default_gamma_scale() -> f64 {
        10.0
    }
    fn default_hidden() -> usize {
        32
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Optional second metrics file; its curve is merged into the output and
    /// the summary reports the improvement against it.
    #[serde(default)]
    pub compare_metrics: Option<PathBuf>,
    /// Series label in the tidy curve file; defaults to the model kind.
    #[serde(default)]
    pub series: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckPhysicsConfig {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "CheckPhysicsConfig::default_draws")]
    pub draws: usize,
}

impl CheckPhysicsConfig {
    fn default_draws() -> usize {
        1000
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineArxConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "BaselineArxConfig::default_lags")]
    pub lags: usize,
    #[serde(default = "TrainFileConfig::default_chunk_len")]
    pub chunk_len: usize,
    #[serde(default = "TrainFileConfig::default_val_fraction")]
    pub val_fraction: f64,
}

impl BaselineArxConfig {
    fn default_lags() -> usize {
        12
    }
}
