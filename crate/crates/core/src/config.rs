//! Run configuration: one TOML file per run, every field defaulted.
//!
//! `RunConfig::default()` serialised with [`RunConfig::to_toml`] is exactly
//! what `--dump-defaults` prints, so a dumped file is a complete, editable
//! starting point.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{FrameBank, FrameCodec, SynthConfig, DEFAULT_HOP, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::model::{PairSource, TrainConfig};
use crate::oracle::{GaussianWorld, TwoArcs};
use crate::paths::{PairedBatch, PathSpec};
use crate::sampler::{BridgeStd, InferenceConfig, InferenceMode, LossKind};

/// Stream id for evaluation data, kept apart from the training stream so a
/// held-out set never overlaps training draws for the same seed.
const EVAL_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub path: PathSpec,
    pub train: TrainConfig,
    pub inference: InferenceSection,
    pub data: DataConfig,
    pub audio: AudioSection,
    pub enhance: EnhanceSection,
    pub sweep: SweepSection,
    pub oracle: OracleSection,
    pub gradcheck: GradcheckSection,
    pub schedule: ScheduleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            path: PathSpec::icfm(0.1).expect("valid default path"),
            train: TrainConfig::default(),
            inference: InferenceSection::default(),
            data: DataConfig::default(),
            audio: AudioSection::default(),
            enhance: EnhanceSection::default(),
            sweep: SweepSection::default(),
            oracle: OracleSection::default(),
            gradcheck: GradcheckSection::default(),
            schedule: ScheduleSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub mode: InferenceMode,
    pub n_steps: usize,
    pub bridge_std: BridgeStd,
    /// Start the reverse grid below `t = 1` (bridge paths only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            mode: InferenceMode::Ode,
            n_steps: 50,
            bridge_std: BridgeStd::default(),
            t_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    #[default]
    GaussianWorld,
    TwoArcs,
    Audio,
}

/// Isotropic Gaussian world `x0 ~ N(0, x0_var I)`, `y = x0 + n`,
/// `n ~ N(0, noise_var I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSection {
    pub dim: usize,
    pub x0_var: f64,
    pub noise_var: f64,
}

impl Default for GaussianSection {
    fn default() -> Self {
        GaussianSection {
            dim: 1,
            x0_var: 1.0,
            noise_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub generator: Generator,
    /// Size of the held-out evaluation set (pairs, or clips for audio).
    pub n_eval: usize,
    pub gaussian: GaussianSection,
    pub two_arcs: TwoArcs,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            generator: Generator::GaussianWorld,
            n_eval: 1000,
            gaussian: GaussianSection::default(),
            two_arcs: TwoArcs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioSection {
    pub window: usize,
    pub hop: usize,
    /// Number of synthetic clips whose frames form the training bank.
    pub train_clips: usize,
    pub synth: SynthConfig,
}

impl Default for AudioSection {
    fn default() -> Self {
        AudioSection {
            window: DEFAULT_WINDOW,
            hop: DEFAULT_HOP,
            train_clips: 32,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceSection {
    /// Checkpoint to load; `<out_dir>/checkpoint.json` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// CSV (`x0` then `y` columns, or `y` only) or WAV input. When unset a
    /// held-out set is drawn from `[data]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Clean reference for a WAV input, enabling SI-SDR.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepPredictor {
    /// The trained checkpoint.
    #[default]
    Checkpoint,
    /// A predictor that returns the true clean rows.
    Exact,
    /// The Gaussian-world posterior mean (gaussian-world data only).
    PosteriorMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_steps: Vec<usize>,
    pub predictor: SweepPredictor,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            n_steps: vec![1, 2, 5, 10, 20, 30, 50],
            predictor: SweepPredictor::Checkpoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Monte-Carlo sample count for the statistical checks.
    pub n_samples: usize,
    /// Relative slack for the statistical checks.
    pub slack: f64,
    /// Test hook: added to the `b` coefficient of every sampler step in the
    /// transport check. Any nonzero value must make the suite fail.
    pub corrupt_coefficient: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            n_samples: 10_000,
            slack: 0.05,
            corrupt_coefficient: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub h: f64,
    pub n_params: usize,
    pub batch_size: usize,
    pub tolerance: f64,
    /// Report errors without failing (for exploring large `h`).
    pub diagnostic: bool,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            h: 1e-6,
            n_params: 100,
            batch_size: 8,
            tolerance: 1e-4,
            diagnostic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub n_points: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { n_points: 1001 }
    }
}

/// A training/evaluation data source built from `[data]` and `[audio]`.
#[derive(Debug, Clone)]
pub enum Dataset {
    Gaussian(Box<GaussianWorld>),
    TwoArcs(TwoArcs),
    Audio(FrameBank),
}

impl PairSource for Dataset {
    fn dim(&self) -> usize {
        match self {
            Dataset::Gaussian(w) => w.dim(),
            Dataset::TwoArcs(a) => a.dim(),
            Dataset::Audio(b) => b.dim(),
        }
    }

    fn sample_pairs(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<PairedBatch> {
        match self {
            Dataset::Gaussian(w) => w.sample_pairs(n, rng),
            Dataset::TwoArcs(a) => a.sample_pairs(n, rng),
            Dataset::Audio(b) => b.sample_pairs(n, rng),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.audio.synth.validate()?;
        FrameCodec::new(self.audio.window, self.audio.hop).map_err(|e| Error::Config(e.to_string()))?;
        self.inference_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.data.n_eval == 0 {
            return Err(Error::Config("data.n_eval must be at least 1".into()));
        }
        if self.sweep.n_steps.is_empty() || self.sweep.n_steps.contains(&0) {
            return Err(Error::Config(
                "sweep.n_steps must be a non-empty list of positive counts".into(),
            ));
        }
        if self.schedule.n_points < 2 {
            return Err(Error::Config("schedule.n_points must be at least 2".into()));
        }
        if !(self.gradcheck.h > 0.0 && self.gradcheck.tolerance > 0.0) || self.gradcheck.batch_size == 0 {
            return Err(Error::Config(
                "gradcheck needs h > 0, tolerance > 0 and batch_size >= 1".into(),
            ));
        }
        if self.oracle.n_samples == 0 || !(self.oracle.slack >= 0.0) || !self.oracle.corrupt_coefficient.is_finite() {
            return Err(Error::Config(
                "oracle needs n_samples >= 1, slack >= 0 and a finite corruption".into(),
            ));
        }
        let g = &self.data.gaussian;
        if g.dim == 0 || !(g.x0_var > 0.0) || !(g.noise_var >= 0.0) {
            return Err(Error::Config(
                "gaussian world needs dim >= 1, x0_var > 0, noise_var >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Sampler settings, with the loss kind taken from `[train]`.
    pub fn inference_config(&self) -> InferenceConfig {
        self.inference_config_for(self.train.loss_kind)
    }

    pub fn inference_config_for(&self, loss_kind: LossKind) -> InferenceConfig {
        InferenceConfig {
            path: self.path,
            loss_kind,
            n_steps: self.inference.n_steps,
            mode: self.inference.mode,
            bridge_std: self.inference.bridge_std,
            t_max: self.inference.t_max,
        }
    }

    pub fn frame_codec(&self) -> Result<FrameCodec> {
        FrameCodec::new(self.audio.window, self.audio.hop)
    }

    pub fn gaussian_world(&self) -> Result<GaussianWorld> {
        let g = &self.data.gaussian;
        GaussianWorld::isotropic(g.dim, g.x0_var, g.noise_var)
    }

    /// The training source; the audio bank is synthesised from `seed`.
    pub fn dataset(&self) -> Result<Dataset> {
        Ok(match self.data.generator {
            Generator::GaussianWorld => Dataset::Gaussian(Box::new(self.gaussian_world()?)),
            Generator::TwoArcs => Dataset::TwoArcs(self.data.two_arcs),
            Generator::Audio => Dataset::Audio(FrameBank::synthesize(
                &self.frame_codec()?,
                &self.audio.synth,
                self.audio.train_clips,
                self.seed,
            )?),
        })
    }

    /// Generator for held-out evaluation draws.
    pub fn eval_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(EVAL_STREAM);
        rng
    }

    /// Where the checkpoint is read from by `enhance` and `sweep-steps`.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.enhance
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("checkpoint.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn reference_paths_round_trip() {
        for path in PathSpec::reference_configs() {
            let cfg = RunConfig {
                path,
                ..RunConfig::default()
            };
            let back = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
            assert_eq!(back.path, path);
        }
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = RunConfig::from_toml_str("seed = 7\n[path]\nfamily = \"sb-ve\"\nk = 2.6\nc = 0.4\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.path, PathSpec::sb_ve(2.6, 0.4).unwrap());
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::from_toml_str("sede = 1\n"), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_toml_str("[sweep]\nn_steps = []\n"),
            Err(Error::Config(_))
        ));
        // flow matching on a bridge path
        let text = "[path]\nfamily = \"sb-sv\"\nk = 2.6\nc = 0.15\n[train]\nloss_kind = \"fm\"\n";
        assert!(matches!(RunConfig::from_toml_str(text), Err(Error::Config(_))));
    }

    #[test]
    fn eval_stream_differs_from_training_stream() {
        use rand::Rng;
        let cfg = RunConfig::default();
        let a: u64 = cfg.eval_rng().random();
        let b: u64 = ChaCha8Rng::seed_from_u64(cfg.seed).random();
        assert_ne!(a, b);
    }
}
