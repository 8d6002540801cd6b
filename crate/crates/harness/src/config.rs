//! Experiment configuration: TOML with four fixed sections.
//!
//! Every table rejects unknown keys, so a typo fails loudly instead of being
//! silently replaced by a default. See `CONFIG.md` for the grammar.

use std::path::{Path, PathBuf};

use miniamp_core::denoisers::{ChannelSpec, PriorSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, HarnessError, Result};

/// Noise level used by inference when the data are noiseless.
pub const NOISELESS_DELTA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GlmStream,
    GlmOffline,
    SeSweep,
    Landscape,
    PhaseDiagram,
    ClusterStream,
    TmaxStudy,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GlmStream => "glm_stream",
            Self::GlmOffline => "glm_offline",
            Self::SeSweep => "se_sweep",
            Self::Landscape => "landscape",
            Self::PhaseDiagram => "phase_diagram",
            Self::ClusterStream => "cluster_stream",
            Self::TmaxStudy => "tmax_study",
        }
    }

    fn is_clustering(&self) -> bool {
        matches!(self, Self::ClusterStream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    GaussBernoulli,
    Rademacher,
    Gaussian,
    TruncatedNonnegGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Gaussian,
    Probit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    MiniAmp,
    Vb,
    Adf,
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMode {
    Ansatz,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Csv,
    RawF64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_prior")]
    pub prior: PriorKind,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Prior variance (`sigma^2`) for the Gaussian and truncated priors.
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "default_channel")]
    pub channel: ChannelKind,
    /// Noise variance assumed by inference.
    #[serde(default)]
    pub delta: f64,
    /// Noise variance used to generate data; defaults to `delta`.
    #[serde(default)]
    pub delta0: Option<f64>,
    /// Number of clusters.
    #[serde(default = "default_rank")]
    pub rank: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            prior: default_prior(),
            rho: default_rho(),
            sigma2: 1.0,
            mean: 0.0,
            channel: default_channel(),
            delta: 0.0,
            delta0: None,
            rank: default_rank(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Dimension; 2000 for GLMs and 1000 for clustering when omitted.
    pub n: Option<usize>,
    #[serde(default)]
    pub alpha_b: Vec<f64>,
    pub num_batches: Option<usize>,
    /// Total samples per dimension presented to a stream.
    pub alpha_max: Option<f64>,
    /// Grid of sample ratios for offline runs.
    #[serde(default)]
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// Iterations per batch; 200 for GLMs and 50 for clustering when omitted.
    #[serde(default)]
    pub t_max: Option<usize>,
    /// Stopping threshold on the mean absolute change of the estimate;
    /// 1e-13 for GLMs and 1e-7 for clustering when omitted.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub damping: f64,
    #[serde(default)]
    pub learn_noise: bool,
    #[serde(default = "default_init_batches")]
    pub init_batches: usize,
    #[serde(default = "default_engines")]
    pub engines: Vec<Engine>,
    /// Iteration budgets for `tmax_study`; `0` means run to convergence.
    #[serde(default)]
    pub t_max_list: Vec<usize>,
    /// Also write offline and fully online theory curves.
    #[serde(default = "yes")]
    pub reference_curves: bool,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_se_mode")]
    pub se_mode: SeMode,
    /// Overlap added to the low-rank state evolution at the first batch.
    #[serde(default)]
    pub initial_overlap: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            t_max: None,
            tol: None,
            damping: 0.0,
            learn_noise: false,
            init_batches: default_init_batches(),
            engines: default_engines(),
            t_max_list: Vec::new(),
            reference_curves: true,
            grid_points: default_grid_points(),
            se_mode: default_se_mode(),
            initial_overlap: 0.0,
        }
    }
}

/// A user-supplied data matrix, one record per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub format: MatrixFormat,
    /// Records per mini-batch.
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub data: Option<DataConfig>,
}

fn default_prior() -> PriorKind {
    PriorKind::GaussBernoulli
}
fn default_rho() -> f64 {
    0.3
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_channel() -> ChannelKind {
    ChannelKind::Gaussian
}
fn default_rank() -> usize {
    5
}
fn default_init_batches() -> usize {
    5
}
fn default_engines() -> Vec<Engine> {
    vec![Engine::MiniAmp]
}
fn default_grid_points() -> usize {
    400
}
fn default_se_mode() -> SeMode {
    SeMode::Ansatz
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical config, output
    /// path excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = None;
        let json = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn n(&self) -> usize {
        self.geometry.n.unwrap_or(if self.kind.is_clustering() { 1000 } else { 2000 })
    }

    pub fn t_max(&self) -> usize {
        self.algorithm.t_max.unwrap_or(if self.kind.is_clustering() { 50 } else { 200 })
    }

    pub fn tol(&self) -> f64 {
        self.algorithm.tol.unwrap_or(if self.kind.is_clustering() { 1e-7 } else { 1e-13 })
    }

    /// Shifts the seed list so that it starts at `first`, keeping its length.
    pub fn with_first_seed(mut self, first: u64) -> Self {
        let count = self.seeds.len() as u64;
        self.seeds = (first..first + count).collect();
        self
    }

    pub fn prior(&self) -> Result<PriorSpec> {
        let m = &self.model;
        let p = match m.prior {
            PriorKind::GaussBernoulli => PriorSpec::gauss_bernoulli(m.rho),
            PriorKind::Rademacher => Ok(PriorSpec::Rademacher),
            PriorKind::Gaussian => PriorSpec::gaussian(m.mean, m.sigma2),
            PriorKind::TruncatedNonnegGaussian => PriorSpec::truncated_nonneg_gaussian(m.sigma2),
        };
        p.map_err(|e| config_err(format!("model: {e}")))
    }

    /// Channel as seen by inference, with the generating noise attached.
    /// Noiseless data are fitted with [`NOISELESS_DELTA`].
    pub fn channel(&self) -> Result<ChannelSpec> {
        let m = &self.model;
        let delta0 = m.delta0.unwrap_or(m.delta);
        let ch = match m.channel {
            ChannelKind::Gaussian => ChannelSpec::gaussian(m.delta.max(NOISELESS_DELTA)),
            ChannelKind::Probit => ChannelSpec::probit(m.delta.max(NOISELESS_DELTA)),
        };
        ch.and_then(|c| c.with_true_noise(delta0)).map_err(|e| config_err(format!("model: {e}")))
    }

    /// Channel for the theory: the exact noise level, matched model.
    pub fn theory_channel(&self) -> Result<ChannelSpec> {
        let m = &self.model;
        let ch = match m.channel {
            ChannelKind::Gaussian => ChannelSpec::gaussian(m.delta),
            ChannelKind::Probit => ChannelSpec::probit(m.delta),
        };
        let delta0 = m.delta0.unwrap_or(m.delta);
        ch.and_then(|c| c.with_true_noise(delta0)).map_err(|e| config_err(format!("model: {e}")))
    }

    /// Number of batches for a stream with batch ratio `alpha_b`.
    pub fn batches_for(&self, alpha_b: f64) -> Result<usize> {
        let g = &self.geometry;
        match (g.num_batches, g.alpha_max) {
            (Some(b), None) => Ok(b),
            (None, Some(a)) => Ok(((a / alpha_b) + 1e-9).floor() as usize),
            (Some(b), Some(a)) => {
                let n = self.n() as f64;
                let mb = (alpha_b * n).round();
                let m = (a * n).round();
                if mb * b as f64 > m {
                    Err(config_err(format!(
                        "geometry: {b} batches of {mb} samples exceed the {m} samples allowed by alpha_max = {a}"
                    )))
                } else {
                    Ok(b)
                }
            }
            (None, None) => Err(config_err("geometry: set num_batches or alpha_max")),
        }
    }

    /// Samples per batch, `round(alpha_b N)`.
    pub fn batch_rows(&self, alpha_b: f64) -> usize {
        (alpha_b * self.n() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        let bad = |msg: String| Err(config_err(msg));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name must be non-empty without path separators, got {:?}", self.name));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let m = &self.model;
        if !(m.delta >= 0.0 && m.delta.is_finite()) {
            return bad(format!("model.delta must be >= 0, got {}", m.delta));
        }
        if let Some(d0) = m.delta0 {
            if !(d0 >= 0.0 && d0.is_finite()) {
                return bad(format!("model.delta0 must be >= 0, got {d0}"));
            }
        }
        if m.rank == 0 {
            return bad("model.rank must be at least 1".into());
        }
        self.prior()?;
        self.channel()?;
        let g = &self.geometry;
        if g.n == Some(0) {
            return bad("geometry.n must be at least 1".into());
        }
        if let Some(a) = g.alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return bad(format!("geometry.alpha entries must be positive, got {a}"));
        }
        if let Some(a) = g.alpha_b.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return bad(format!("geometry.alpha_b entries must be positive, got {a}"));
        }
        if let Some(a) = g.alpha_max {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("geometry.alpha_max must be positive, got {a}"));
            }
        }
        let a = &self.algorithm;
        if a.t_max == Some(0) {
            return bad("algorithm.t_max must be at least 1".into());
        }
        if !(self.tol() >= 0.0) {
            return bad("algorithm.tol must be >= 0".into());
        }
        if !(0.0..1.0).contains(&a.damping) {
            return bad(format!("algorithm.damping must lie in [0, 1), got {}", a.damping));
        }
        if !(a.initial_overlap >= 0.0 && a.initial_overlap.is_finite()) {
            return bad("algorithm.initial_overlap must be >= 0".into());
        }
        if a.grid_points < 3 {
            return bad("algorithm.grid_points must be at least 3".into());
        }
        let gaussian_delta = m.channel == ChannelKind::Gaussian && m.delta > 0.0;
        let needs_stream = matches!(self.kind, GlmStream | SeSweep | Landscape | PhaseDiagram | ClusterStream | TmaxStudy);
        let has_data = self.data.is_some();
        if needs_stream && !(self.kind == SeSweep && g.alpha_b.is_empty()) && !has_data {
            if g.alpha_b.is_empty() {
                return bad(format!("{} needs geometry.alpha_b", self.kind.as_str()));
            }
            for &ab in &g.alpha_b {
                let b = self.batches_for(ab)?;
                if b == 0 {
                    return bad(format!("alpha_b = {ab} gives no complete batch"));
                }
                if !matches!(self.kind, SeSweep | Landscape | PhaseDiagram) && self.batch_rows(ab) == 0 {
                    return bad(format!("alpha_b = {ab} gives empty batches at n = {}", self.n()));
                }
            }
        }
        match self.kind {
            GlmOffline if g.alpha.is_empty() => bad("glm_offline needs geometry.alpha".into()),
            SeSweep if g.alpha.is_empty() && g.alpha_b.is_empty() => {
                bad("se_sweep needs geometry.alpha or geometry.alpha_b".into())
            }
            Landscape | PhaseDiagram if !gaussian_delta => {
                bad(format!("{} needs a gaussian channel with delta > 0", self.kind.as_str()))
            }
            Landscape | PhaseDiagram if m.delta0.is_some_and(|d| d != m.delta) => {
                bad("the landscape assumes a matched model (delta0 = delta)".into())
            }
            PhaseDiagram if g.num_batches.is_none() => bad("phase_diagram needs geometry.num_batches".into()),
            TmaxStudy if a.t_max_list.is_empty() => bad("tmax_study needs algorithm.t_max_list".into()),
            TmaxStudy if m.channel != ChannelKind::Gaussian => bad("tmax_study uses the gaussian channel".into()),
            ClusterStream => {
                if !matches!(m.prior, PriorKind::Gaussian | PriorKind::TruncatedNonnegGaussian) {
                    return bad("cluster_stream needs prior = gaussian or truncated_nonneg_gaussian".into());
                }
                if !(m.delta > 0.0) {
                    return bad("cluster_stream needs model.delta > 0".into());
                }
                if a.engines.iter().any(|e| !matches!(e, Engine::MiniAmp | Engine::Kmeans)) {
                    return bad("cluster_stream engines are mini_amp and kmeans".into());
                }
                if let Some(d) = &self.data {
                    if d.batch_size == 0 {
                        return bad("data.batch_size must be at least 1".into());
                    }
                }
                Ok(())
            }
            _ if has_data => bad("only cluster_stream reads a data matrix".into()),
            GlmStream => {
                if a.engines.is_empty() || a.engines.contains(&Engine::Kmeans) {
                    return bad("glm_stream engines are mini_amp, vb and adf".into());
                }
                if a.engines.contains(&Engine::Vb) && m.channel != ChannelKind::Gaussian {
                    return bad("vb needs the gaussian channel".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
kind = "glm_stream"
[geometry]
alpha_b = [0.5]
num_batches = 2
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.n(), 2000);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.algorithm.engines, vec![Engine::MiniAmp]);
        assert_eq!(c.channel().unwrap().delta, NOISELESS_DELTA);
        assert_eq!(c.channel().unwrap().delta0, 0.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("num_batches", "num_batchez");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("num_batchez"), "{err}");
    }

    #[test]
    fn too_many_batches_for_alpha_max() {
        let text = format!("{MINIMAL}alpha_max = 0.9\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("exceed"), "{err}");
    }

    #[test]
    fn batches_from_alpha_max() {
        let text = MINIMAL.replace("num_batches = 2", "alpha_max = 3.0");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(c.batches_for(0.35).unwrap(), 8);
        assert_eq!(c.batches_for(0.1).unwrap(), 30);
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output = Some("x.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![1];
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn toml_round_trip() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml(&a.to_toml()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_shift_keeps_count() {
        let mut a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        a.seeds = vec![0, 1, 2];
        assert_eq!(a.with_first_seed(10).seeds, vec![10, 11, 12]);
    }

    #[test]
    fn kind_specific_checks() {
        let t = "name = \"x\"\nkind = \"landscape\"\n[geometry]\nalpha_b = [0.35]\nnum_batches = 3\n";
        assert!(ExperimentConfig::from_toml(t).is_err());
        let t = format!("{t}[model]\ndelta = 1e-8\n");
        assert!(ExperimentConfig::from_toml(&t).is_ok());
        let t = "name = \"x\"\nkind = \"cluster_stream\"\n[model]\ndelta = 0.1\n[geometry]\nalpha_b = [0.3]\nnum_batches = 3\n";
        assert!(ExperimentConfig::from_toml(t).is_err());
        let t = t.replace("delta = 0.1", "delta = 0.1\nprior = \"gaussian\"");
        assert!(ExperimentConfig::from_toml(&t).is_ok());
    }
}
