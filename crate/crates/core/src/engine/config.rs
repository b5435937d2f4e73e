use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::corpus::{DatasetKind, Style};
use crate::provider::{
    Backend, HttpProvider, HttpSettings, Provider, ProviderRequest, RateLimiter, RecordingProvider, ReplayProvider,
    RetryPolicy, SafetyMode, TranscriptStore,
};
use crate::textmetrics::LengthUnit;

/// Stopping rule of the inner summary loop: stop once similarity exceeds
/// `s_min`, readability exceeds `r_min` and compression is below `c_max`
/// (all strict), or after `k_max` attempts.
///
/// The defaults are engine parameters chosen so typical long-document
/// summaries can stop early; they are not published values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopThresholds {
    pub s_min: f64,
    pub r_min: f64,
    pub c_max: f64,
    pub k_max: u32,
}

impl Default for StopThresholds {
    fn default() -> Self {
        Self { s_min: 0.30, r_min: 30.0, c_max: 0.25, k_max: 3 }
    }
}

impl StopThresholds {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(0.0..=1.0).contains(&self.s_min) {
            return Err(EngineError::Config(format!("s_min must be in [0, 1], got {}", self.s_min)));
        }
        if self.c_max.is_nan() || self.c_max <= 0.0 {
            return Err(EngineError::Config(format!("c_max must be positive, got {}", self.c_max)));
        }
        if !self.r_min.is_finite() {
            return Err(EngineError::Config("r_min must be finite".into()));
        }
        if self.k_max < 1 {
            return Err(EngineError::Config("k_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn met(&self, s: f64, r: f64, c: f64) -> bool {
        s > self.s_min && r > self.r_min && c < self.c_max
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Train,
    TestSummarization,
    TestQa,
    Baseline,
}

/// Which experience slot, if any, is blanked in test prompts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoSumExp,
    NoQaExp,
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_sum_exp" => Ok(Ablation::NoSumExp),
            "no_qa_exp" => Ok(Ablation::NoQaExp),
            other => Err(format!("unknown ablation {other:?} (full, no_sum_exp, no_qa_exp)")),
        }
    }
}

/// IDF source for the similarity score in the stopping rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfSource {
    /// Computed over the training texts of the current run.
    #[default]
    Corpus,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub backend: Backend,
    /// When replaying, the backend the transcript was recorded against.
    pub recorded_backend: Option<Backend>,
    pub model: String,
    pub endpoint: Option<String>,
    /// Overrides the backend's default credential variable.
    pub api_key_env: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub safety_mode: SafetyMode,
    pub requests_per_minute: u32,
    pub burst: u32,
    pub max_attempts: u32,
    pub timeout_secs: u64,
    pub transcript: Option<PathBuf>,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            backend: Backend::Replay,
            recorded_backend: None,
            model: "gpt-4o".into(),
            endpoint: None,
            api_key_env: None,
            temperature: None,
            max_output_tokens: None,
            safety_mode: SafetyMode::Default,
            requests_per_minute: 60,
            burst: 1,
            max_attempts: 3,
            timeout_secs: 300,
            transcript: None,
        }
    }
}

impl ProviderSettings {
    /// Backend named in requests (and therefore in request hashes).
    pub fn wire_backend(&self) -> Backend {
        match self.backend {
            Backend::Replay => self.recorded_backend.unwrap_or(Backend::Replay),
            live => live,
        }
    }

    pub fn request(&self, prompt: String) -> ProviderRequest {
        let backend = self.wire_backend();
        ProviderRequest {
            backend,
            model: self.model.clone(),
            prompt,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            safety_mode: if backend == Backend::Gemini { self.safety_mode } else { SafetyMode::Default },
        }
    }

    /// Builds the configured provider. With `record`, a live backend is
    /// wrapped so every exchange lands in the transcript.
    pub fn build(&self, record: bool) -> Result<Arc<dyn Provider>, EngineError> {
        if self.backend == Backend::Replay {
            if record {
                return Err(EngineError::Config("cannot record while the replay backend is selected".into()));
            }
            let path = self
                .transcript
                .as_ref()
                .ok_or_else(|| EngineError::Config("replay backend needs provider.transcript".into()))?;
            let store = TranscriptStore::open_existing(path)?;
            return Ok(Arc::new(ReplayProvider::new(Arc::new(store))));
        }
        let mut http = HttpSettings::from_env(self.backend, self.api_key_env.as_deref())?;
        if self.endpoint.is_some() {
            http.endpoint = self.endpoint.clone();
        }
        http.timeout = Duration::from_secs(self.timeout_secs);
        http.retry = RetryPolicy { max_attempts: self.max_attempts.max(1), ..RetryPolicy::default() };
        let limiter = Arc::new(RateLimiter::new(self.requests_per_minute, self.burst));
        let live: Arc<dyn Provider> = Arc::new(HttpProvider::new(http, limiter)?);
        if !record {
            return Ok(live);
        }
        let path = self
            .transcript
            .as_ref()
            .ok_or_else(|| EngineError::Config("recording needs provider.transcript".into()))?;
        let store = TranscriptStore::open(path)?;
        Ok(Arc::new(RecordingProvider::new(live, Arc::new(store))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    pub kind: DatasetKind,
    pub style: Style,
    /// Optional JSON field map for non-canonical sources.
    #[serde(default)]
    pub adapter: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    /// QA-labeled training source.
    pub train: Option<DatasetSpec>,
    /// Evaluation source. When it names the same file as `train`, the
    /// documents left over after the training split are used.
    pub test: Option<DatasetSpec>,
    pub n_train: usize,
    pub min_words: usize,
    /// Seeded subset size for the test set; all documents when unset.
    pub sample: Option<usize>,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self { train: None, test: None, n_train: 10, min_words: 1000, sample: None }
    }
}

/// Whether a comparison row is starred when all of its p-values, or any one,
/// fall below alpha.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarRule {
    #[default]
    AllMetrics,
    AnyMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub style: Style,
    pub mode: Option<Mode>,
    pub ablation: Ablation,
    pub thresholds: StopThresholds,
    pub provider: ProviderSettings,
    pub data: DataSettings,
    /// Worker threads for test, baseline and judge fan-out.
    pub parallelism: usize,
    /// Fraction of failed documents above which a stage aborts.
    pub failure_threshold: f64,
    pub length_unit: LengthUnit,
    pub similarity_idf: IdfSource,
    pub factscore: bool,
    pub alpha: f64,
    pub star_rule: StarRule,
    pub templates_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            style: Style::News,
            mode: None,
            ablation: Ablation::Full,
            thresholds: StopThresholds::default(),
            provider: ProviderSettings::default(),
            data: DataSettings::default(),
            parallelism: 4,
            failure_threshold: 0.10,
            length_unit: LengthUnit::Words,
            similarity_idf: IdfSource::Corpus,
            factscore: false,
            alpha: 0.05,
            star_rule: StarRule::AllMetrics,
            templates_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(raw: &str) -> Result<Self, EngineError> {
        let cfg: Self = toml::from_str(raw).map_err(|e| EngineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.thresholds.validate()?;
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(EngineError::Config(format!("invalid run_id {:?}", self.run_id)));
        }
        if !(0.0..=1.0).contains(&self.failure_threshold) {
            return Err(EngineError::Config("failure_threshold must be in [0, 1]".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(EngineError::Config("alpha must be in (0, 1)".into()));
        }
        if self.parallelism == 0 {
            return Err(EngineError::Config("parallelism must be at least 1".into()));
        }
        if let (Some(Mode::TestQa), Some(test)) = (self.mode, &self.data.test) {
            if test.kind != DatasetKind::Qa {
                return Err(EngineError::Config("mode test_qa requires a qa test dataset".into()));
            }
        }
        if let (Some(Mode::Train), Some(train)) = (self.mode, &self.data.train) {
            if train.kind != DatasetKind::Qa {
                return Err(EngineError::Config("training requires a qa dataset".into()));
            }
        }
        Ok(())
    }

    /// Test mode implied by the test dataset kind unless set explicitly.
    pub fn test_mode(&self) -> Mode {
        match self.mode {
            Some(m @ (Mode::TestQa | Mode::TestSummarization)) => m,
            _ => match self.data.test.as_ref().map(|t| t.kind) {
                Some(DatasetKind::Qa) => Mode::TestQa,
                _ => Mode::TestSummarization,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_inequalities() {
        let t = StopThresholds { s_min: 0.3, r_min: 30.0, c_max: 0.25, k_max: 3 };
        assert!(t.met(0.31, 30.1, 0.24));
        assert!(!t.met(0.3, 30.1, 0.24));
        assert!(!t.met(0.31, 30.0, 0.24));
        assert!(!t.met(0.31, 30.1, 0.25));
    }

    #[test]
    fn threshold_validation() {
        assert!(StopThresholds::default().validate().is_ok());
        assert!(StopThresholds { s_min: 1.5, ..Default::default() }.validate().is_err());
        assert!(StopThresholds { c_max: 0.0, ..Default::default() }.validate().is_err());
        assert!(StopThresholds { k_max: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        let parsed = RunConfig::from_toml("run_id = \"x\"\n[thresholds]\ns_min = 0.5\nr_min = 10.0\nc_max = 0.2\nk_max = 5\n").unwrap();
        assert_eq!(parsed.thresholds.k_max, 5);
    }

    #[test]
    fn test_qa_needs_qa_dataset() {
        let mut cfg = RunConfig { mode: Some(Mode::TestQa), ..Default::default() };
        cfg.data.test = Some(DatasetSpec {
            name: "bbc".into(),
            path: "bbc.jsonl".into(),
            kind: DatasetKind::Summarization,
            style: Style::News,
            adapter: None,
        });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn replay_requests_carry_recorded_backend() {
        let mut p = ProviderSettings::default();
        assert_eq!(p.request("x".into()).backend, Backend::Replay);
        p.recorded_backend = Some(Backend::Gemini);
        p.safety_mode = SafetyMode::BlockNone;
        let req = p.request("x".into());
        assert_eq!(req.backend, Backend::Gemini);
        assert_eq!(req.safety_mode, SafetyMode::BlockNone);
    }

    #[test]
    fn record_with_replay_is_contradictory() {
        let p = ProviderSettings { transcript: Some("t.jsonl".into()), ..Default::default() };
        assert!(matches!(p.build(true), Err(EngineError::Config(_))));
    }
}
