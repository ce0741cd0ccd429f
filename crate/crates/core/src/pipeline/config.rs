use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deviation::DEFAULT_SIGNIFICANCE;
use crate::error::{Error, Result};
use crate::ingest::FilterConfig;
use crate::model::{Factor, FactorSpec, FitOptions, DEFAULT_EPSILON_CLAMP, DEFAULT_MIN_BIN_SIZE};
use crate::synth::{GeneratorConfig, InjectedEvent};

/// Inclusive range of local calendar dates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn days(&self) -> u32 {
        (self.end - self.start).num_days() as u32 + 1
    }

    fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    #[serde(default = "default_languages")]
    pub languages: Vec<String>,
    #[serde(default = "default_follower_threshold")]
    pub follower_threshold: u64,
    /// UTC bounds for accepted timestamps. Defaults to the day before
    /// training through two days after the test window, which covers
    /// every local date at any offset.
    #[serde(default)]
    pub study_window: Option<(String, String)>,
}

fn default_languages() -> Vec<String> {
    vec!["en".to_string()]
}

fn default_follower_threshold() -> u64 {
    300_000
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            languages: default_languages(),
            follower_threshold: default_follower_threshold(),
            study_window: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazetteerSettings {
    /// Live HTTP endpoint.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Recorded responses (JSON object from query to response body),
    /// used instead of the endpoint when present.
    #[serde(default)]
    pub recorded: Option<PathBuf>,
    #[serde(default = "default_user_agent")]
    pub user_agent: String,
    #[serde(default = "default_rps")]
    pub max_requests_per_sec: f64,
}

fn default_user_agent() -> String {
    concat!("moodbase/", env!("CARGO_PKG_VERSION")).to_string()
}

fn default_rps() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub events: Vec<InjectedEvent>,
    /// Ground-truth manifest; defaults to `manifest.json` in the output dir.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub registry: PathBuf,
    /// Defaults to the built-in lexicon.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub weather: Option<PathBuf>,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    pub train: DateRange,
    pub test: DateRange,
    #[serde(default)]
    pub filter: FilterSettings,
    /// Factors of the detection model.
    #[serde(default = "default_factors")]
    pub factors: Vec<String>,
    #[serde(default = "default_min_bin_size")]
    pub min_bin_size: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon_clamp: f64,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Cities with a timeline export; all cities with test data if absent.
    #[serde(default)]
    pub timeline_cities: Option<Vec<String>>,
    /// Share difference that flags a country in the bias report.
    #[serde(default = "default_bias_margin")]
    pub bias_margin: f64,
    #[serde(default)]
    pub gazetteer: Option<GazetteerSettings>,
    #[serde(default)]
    pub synth: Option<SynthSettings>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_factors() -> Vec<String> {
    ["city", "hour", "day", "weather", "social"].map(String::from).to_vec()
}

fn default_min_bin_size() -> u64 {
    DEFAULT_MIN_BIN_SIZE
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON_CLAMP
}

fn default_significance() -> f64 {
    DEFAULT_SIGNIFICANCE
}

fn default_top_k() -> usize {
    20
}

fn default_bias_margin() -> f64 {
    0.1
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("config field `{field}`: {msg}"))
}

/// A config together with the directory its relative paths hang off.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig = serde_json::from_str(&text).map_err(|e| {
            Error::parse(path.display().to_string(), e.line(), e.to_string())
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { config, base_dir };
        loaded.config.validate()?;
        Ok(loaded)
    }

    pub fn from_config(config: PipelineConfig, base_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            base_dir: base_dir.into(),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.out_dir)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    pub fn required(&self, field: &str, p: &Option<PathBuf>) -> Result<PathBuf> {
        p.as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| field_err(field, "required for this command"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.config
            .synth
            .as_ref()
            .and_then(|s| s.manifest.as_deref())
            .map(|p| self.resolve(p))
            .unwrap_or_else(|| self.out("manifest.json"))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("train", &self.train), ("test", &self.test)] {
            if r.end < r.start {
                return Err(field_err(name, "end precedes start"));
            }
        }
        if self.train.overlaps(&self.test) {
            return Err(field_err("test", "training and test windows overlap"));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(field_err("significance", "must lie in (0, 1)"));
        }
        if !(self.epsilon_clamp > 0.0 && self.epsilon_clamp < 0.5) {
            return Err(field_err("epsilon_clamp", "must lie in (0, 0.5)"));
        }
        if self.top_k == 0 {
            return Err(field_err("top_k", "must be at least 1"));
        }
        if !(self.bias_margin >= 0.0) {
            return Err(field_err("bias_margin", "must be non-negative"));
        }
        if self.filter.languages.is_empty() {
            return Err(field_err("filter.languages", "allow-list is empty"));
        }
        if let Some(g) = &self.gazetteer {
            if g.endpoint.is_none() && g.recorded.is_none() {
                return Err(field_err("gazetteer", "needs an endpoint or a recorded file"));
            }
            if !(g.max_requests_per_sec > 0.0) {
                return Err(field_err("gazetteer.max_requests_per_sec", "must be positive"));
            }
        }
        self.factor_spec()?;
        self.filter_config()?;
        Ok(())
    }

    pub fn factor_spec(&self) -> Result<FactorSpec> {
        let mut spec = FactorSpec::new(false, false, false, false, false);
        for f in &self.factors {
            match f.as_str() {
                "social" => spec.include_social = true,
                other => {
                    let factor = Factor::ALL
                        .into_iter()
                        .find(|x| x.as_str() == other)
                        .ok_or_else(|| field_err("factors", format!("unknown factor {other:?}")))?;
                    match factor {
                        Factor::City => spec.include_city = true,
                        Factor::Hour => spec.include_hour = true,
                        Factor::Day => spec.include_day = true,
                        Factor::Weather => spec.include_weather = true,
                    }
                }
            }
        }
        Ok(spec)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            min_bin_size: self.min_bin_size,
            epsilon_clamp: self.epsilon_clamp,
        }
    }

    /// Observation days for recurrence intervals.
    pub fn observation_days(&self) -> f64 {
        self.test.days() as f64
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let window = match &self.filter.study_window {
            Some((a, b)) => {
                let start = crate::ingest::parse_utc(a).map_err(|e| field_err("filter.study_window", e))?;
                let end = crate::ingest::parse_utc(b).map_err(|e| field_err("filter.study_window", e))?;
                if end <= start {
                    return Err(field_err("filter.study_window", "end must follow start"));
                }
                (start, end)
            }
            None => {
                let first = self.train.start.min(self.test.start) - chrono::Days::new(1);
                let last = self.train.end.max(self.test.end) + chrono::Days::new(2);
                let epoch = |d: NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
                (epoch(first), epoch(last))
            }
        };
        Ok(FilterConfig {
            languages: self.filter.languages.clone(),
            follower_threshold: self.filter.follower_threshold,
            window: Some(window),
        })
    }

    /// SHA-256 of the canonical JSON form. The output directory is left
    /// out since it never changes what gets written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serialization");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "registry": "registry.csv",
        "train": {"start": "2017-09-01", "end": "2017-09-30"},
        "test": {"start": "2017-10-01", "end": "2017-11-29"}
    }"#;

    fn minimal() -> PipelineConfig {
        serde_json::from_str(MINIMAL).unwrap()
    }

    #[test]
    fn defaults() {
        let c = minimal();
        c.validate().unwrap();
        assert_eq!(c.observation_days(), 60.0);
        assert_eq!(c.top_k, 20);
        assert_eq!(c.significance, 0.05);
        assert_eq!(c.factor_spec().unwrap(), FactorSpec::all());
        let f = c.filter_config().unwrap();
        assert_eq!(f.follower_threshold, 300_000);
        let (a, b) = f.window.unwrap();
        assert_eq!(crate::ingest::format_utc(a), "2017-08-31T00:00:00Z");
        assert_eq!(crate::ingest::format_utc(b), "2017-12-01T00:00:00Z");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = minimal();
        c.test.start = NaiveDate::from_ymd_opt(2017, 9, 30).unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("`test`"), "{msg}");
        let mut c = minimal();
        c.significance = 1.5;
        assert!(c.validate().unwrap_err().to_string().contains("`significance`"));
        let mut c = minimal();
        c.factors = vec!["city".into(), "moon".into()];
        assert!(c.validate().unwrap_err().to_string().contains("`factors`"));
        assert!(serde_json::from_str::<PipelineConfig>(&MINIMAL.replace("\"registry\"", "\"registy\"")).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = minimal();
        let mut b = minimal();
        assert_eq!(a.hash(), b.hash());
        b.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.top_k = 10;
        assert_ne!(a.hash(), b.hash());
    }
}
