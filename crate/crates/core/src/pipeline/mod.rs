//! File-based orchestration of the full pipeline.
//!
//! Each command reads the artifacts of the previous one from the output
//! directory, so commands can be rerun individually. Writes are atomic and
//! outputs contain nothing run-specific; the run manifest holds the config
//! hash and input digests.

mod config;
mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{DateRange, FilterSettings, GazetteerSettings, LoadedConfig, PipelineConfig, SynthSettings};
pub use report::{
    comparison_csv, event_proportions, event_report_csv, ranked_csv, render_percentages, render_when_where,
    timeline_csv,
};

use crate::aggregate::{bin_stream, bins_from_csv, bins_to_csv, finalize_bins, BinInput, CityHourBin, WeatherTable};
use crate::deviation::{
    deviations_to_csv, events_to_csv, merge_events, rank_deviations, score_bins, DeviationScore, MergedEvent,
};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::geo::{
    localize_timestamp, CityRegistry, GazetteerSource, RecordedGazetteer, Resolution, ResolutionCache, Resolver,
    DEFAULT_NEGATIVE_TTL_SECS,
};
use crate::ingest::{classify_interaction, ingest_lines, IngestReport};
use crate::model::{
    fit_models, significance_from, test_correlation, FactorSpec, FittedModel, ModelSummary,
};
use crate::polarity::Polarity;
use crate::sentiment::{polarity_labels, score_text, Lexicon, DEFAULT_LEXICON};
use crate::synth::{bias_report, evaluate_detection, generate, Manifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Fit,
    Detect,
    Report,
    Synth,
    Eval,
    All,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Ingest,
        Command::Fit,
        Command::Detect,
        Command::Report,
        Command::Synth,
        Command::Eval,
        Command::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Fit => "fit",
            Command::Detect => "detect",
            Command::Report => "report",
            Command::Synth => "synth",
            Command::Eval => "eval",
            Command::All => "all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown command {s:?}")))
    }
}

pub const BINS: &str = "bins.csv";
pub const INGEST_REPORT: &str = "ingest_report.txt";
pub const MODEL_POSITIVE: &str = "model_positive.json";
pub const MODEL_NEGATIVE: &str = "model_negative.json";
pub const MODEL_COMPARISON: &str = "model_comparison.csv";
pub const DEVIATIONS: &str = "deviations.csv";
pub const EVENTS: &str = "events.csv";
pub const RANKED_POSITIVE: &str = "ranked_positive.csv";
pub const RANKED_NEGATIVE: &str = "ranked_negative.csv";
pub const EVENT_REPORT: &str = "event_report.csv";
pub const TIMELINE_DIR: &str = "timeline";
pub const DETECTION_REPORT: &str = "detection_report.csv";
pub const BIAS_REPORT: &str = "bias_report.csv";
pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(data).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let perms = std::fs::Permissions::from_mode(0o644);
        std::fs::set_permissions(tmp.path(), perms).map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_hash: String,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
}

/// Bookkeeping for one command: what was read and written.
pub struct Run<'a> {
    pub lc: &'a LoadedConfig,
    pub exec: Exec,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    pub fn new(lc: &'a LoadedConfig, exec: Exec) -> Self {
        Self {
            lc,
            exec,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Path as recorded in the run manifest: relative to the output
    /// directory, else to the config directory.
    fn label(&self, path: &Path) -> String {
        let out = self.lc.out_dir();
        path.strip_prefix(&out)
            .or_else(|_| path.strip_prefix(&self.lc.base_dir))
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let key = self.label(path);
        self.inputs.insert(key, format!("{:x}", Sha256::digest(&data)));
        Ok(data)
    }

    fn read_text(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.read(path)?)
            .map_err(|_| Error::parse(path.display().to_string(), 0, "not valid UTF-8"))
    }

    fn write(&mut self, path: &Path, data: &str) -> Result<()> {
        write_atomic(path, data.as_bytes())?;
        let label = self.label(path);
        if !self.outputs.contains(&label) {
            self.outputs.push(label);
        }
        Ok(())
    }

    fn write_out(&mut self, name: &str, data: &str) -> Result<()> {
        let path = self.lc.out(name);
        self.write(&path, data)
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    fn finish(&mut self, command: Command) -> Result<()> {
        let manifest = RunManifest {
            command: command.as_str(),
            config_hash: self.lc.config.hash(),
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
        text.push('\n');
        write_atomic(&self.lc.out(RUN_MANIFEST), text.as_bytes())
    }

    fn registry(&mut self) -> Result<CityRegistry> {
        let path = self.lc.resolve(&self.lc.config.registry);
        let data = self.read(&path)?;
        CityRegistry::from_csv_reader(data.as_slice())
    }

    fn lexicon(&mut self) -> Result<Lexicon> {
        match self.lc.config.lexicon.clone() {
            Some(p) => {
                let path = self.lc.resolve(&p);
                Lexicon::parse(&self.read_text(&path)?)
            }
            None => Lexicon::parse(DEFAULT_LEXICON),
        }
    }

    fn bins(&mut self) -> Result<Vec<CityHourBin>> {
        let path = self.lc.out(BINS);
        let data = self.read(&path)?;
        bins_from_csv(data.as_slice())
    }

    fn models(&mut self) -> Result<(FittedModel, FittedModel)> {
        let spec = self.lc.config.factor_spec()?;
        let mut load = |name: &str, outcome: Polarity| -> Result<FittedModel> {
            let path = self.lc.out(name);
            let m = FittedModel::from_json(&self.read_text(&path)?)?;
            if m.outcome != outcome || !same_factors(&m.spec, &spec) {
                return Err(Error::Validation(format!(
                    "{} does not match the configured {outcome} model; rerun fit",
                    path.display()
                )));
            }
            Ok(m)
        };
        Ok((load(MODEL_POSITIVE, Polarity::Positive)?, load(MODEL_NEGATIVE, Polarity::Negative)?))
    }
}

fn same_factors(a: &FactorSpec, b: &FactorSpec) -> bool {
    (a.include_city, a.include_hour, a.include_day, a.include_weather, a.include_social)
        == (b.include_city, b.include_hour, b.include_day, b.include_weather, b.include_social)
}

fn now_epoch() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Parses, filters, resolves, scores and bins the input records.
pub fn ingest(run: &mut Run) -> Result<(Vec<CityHourBin>, IngestReport)> {
    let cfg = &run.lc.config;
    let input = run.lc.required("input", &cfg.input)?;
    let registry = run.registry()?;
    let lexicon = run.lexicon()?;
    let weather = match cfg.weather.clone() {
        Some(p) => {
            let path = run.lc.resolve(&p);
            WeatherTable::from_csv_reader(run.read(&path)?.as_slice())?
        }
        None => WeatherTable::new(),
    };
    let cache_path = cfg.cache.as_deref().map(|p| run.lc.resolve(p));
    let cache = match &cache_path {
        Some(p) => ResolutionCache::load(p, DEFAULT_NEGATIVE_TTL_SECS)?,
        None => ResolutionCache::new(DEFAULT_NEGATIVE_TTL_SECS),
    };
    let gazetteer: Option<Box<dyn GazetteerSource>> = match cfg.gazetteer.clone() {
        None => None,
        Some(g) => match (&g.recorded, &g.endpoint) {
            (Some(p), _) => {
                let path = run.lc.resolve(p);
                Some(Box::new(RecordedGazetteer::from_json(&run.read_text(&path)?)?))
            }
            #[cfg(feature = "http")]
            (None, Some(url)) => Some(Box::new(crate::geo::HttpGazetteer::new(
                url,
                &g.user_agent,
                g.max_requests_per_sec,
            )?)),
            #[cfg(not(feature = "http"))]
            (None, Some(_)) => {
                return Err(Error::Validation(
                    "config field `gazetteer.endpoint`: built without HTTP support".into(),
                ))
            }
            (None, None) => None,
        },
    };

    let text = run.read_text(&input)?;
    let lines: Vec<&str> = text.lines().collect();
    let filter = cfg.filter_config()?;
    let (records, mut report) = ingest_lines(run.exec, &lines, &filter);

    let resolver = Resolver::new(&registry, gazetteer.as_deref(), &cache);
    let now = now_epoch();
    let mut memo: HashMap<&str, Resolution> = HashMap::new();
    let mut resolved = Vec::with_capacity(records.len());
    for rec in &records {
        let raw = rec.user_location_raw.as_str();
        let r = memo.entry(raw).or_insert_with(|| resolver.resolve(raw, now));
        match r {
            Resolution::City(id) => {
                report.resolved += 1;
                resolved.push((rec, registry.get(id).expect("resolver returns known cities")));
            }
            Resolution::Unresolved { gazetteer_unmatched } => {
                report.unresolved_location += 1;
                if *gazetteer_unmatched {
                    report.gazetteer_unmatched += 1;
                }
            }
            Resolution::Transient => report.unresolved_transient += 1,
        }
    }

    let inputs: Vec<BinInput> = exec::map(run.exec, &resolved, |(rec, city)| BinInput {
        city_id: city.city_id.clone(),
        local: localize_timestamp(rec.created_at_utc, city),
        interaction: classify_interaction(rec),
        labels: polarity_labels(score_text(&rec.text, &lexicon)),
    });
    let bins = finalize_bins(bin_stream(run.exec, &inputs), &weather);

    run.write_out(BINS, &bins_to_csv(&bins))?;
    run.write_out(INGEST_REPORT, &report.to_string())?;
    if let Some(p) = &cache_path {
        if gazetteer.is_some() {
            write_atomic(p, cache.to_csv().as_bytes())?;
        }
    }
    Ok((bins, report))
}

fn split(bins: &[CityHourBin], range: &DateRange) -> Vec<CityHourBin> {
    bins.iter().filter(|b| range.contains(b.local_date)).cloned().collect()
}

fn summarize(exec: Exec, name: &str, m: &FittedModel, test: &[CityHourBin]) -> ModelSummary {
    ModelSummary {
        name: name.to_string(),
        outcome: m.outcome,
        n_coefficients: m.beta.len(),
        n_significant: significance_from(&m.beta, &m.stderr).n_significant,
        r_squared: m.r_squared,
        test: test_correlation(exec, m, test).ok(),
    }
}

/// Fits the detection models and the comparison table.
pub fn fit(run: &mut Run, bins: &[CityHourBin]) -> Result<(FittedModel, FittedModel)> {
    let cfg = &run.lc.config;
    let train = split(bins, &cfg.train);
    let test = split(bins, &cfg.test);
    if train.is_empty() {
        return Err(Error::Validation("config field `train`: no bins fall in the training window".into()));
    }
    let spec = cfg.factor_spec()?;
    let opts = cfg.fit_options();
    let (pos, neg) = fit_models(run.exec, &train, &spec, opts)?;

    let mut rows = Vec::new();
    for (name, s) in FactorSpec::comparison_set() {
        match fit_models(run.exec, &train, &s, opts) {
            Ok((p, n)) => {
                for m in [&n, &p] {
                    rows.push((name.to_string(), Ok(summarize(run.exec, name, m, &test))));
                }
            }
            Err(e) if e.is_user_error() => rows.push((name.to_string(), Err(e.to_string()))),
            Err(e) => return Err(e),
        }
    }
    run.write_out(MODEL_POSITIVE, &pos.to_json())?;
    run.write_out(MODEL_NEGATIVE, &neg.to_json())?;
    run.write_out(MODEL_COMPARISON, &comparison_csv(&rows))?;
    Ok((pos, neg))
}

/// Scores, ranking and merged events for one pair of models.
pub struct Detection {
    pub scores: Vec<DeviationScore>,
    pub events: Vec<MergedEvent>,
}

/// Scores every test bin under both models and merges significant ones.
pub fn detect_with(
    exec: Exec,
    test: &[CityHourBin],
    pos: &FittedModel,
    neg: &FittedModel,
    registry: &CityRegistry,
    alpha: f64,
    observation_days: f64,
) -> Result<Detection> {
    let sp = score_bins(exec, test, pos);
    let sn = score_bins(exec, test, neg);
    let mut scores = Vec::with_capacity(sp.len() * 2);
    for (a, b) in sp.into_iter().zip(sn) {
        scores.push(a);
        scores.push(b);
    }
    let significant: Vec<DeviationScore> = scores.iter().filter(|s| s.is_significant(alpha)).cloned().collect();
    let events = merge_events(&significant, registry, observation_days)?;
    let members: usize = events.iter().map(|e| e.members.len()).sum();
    if members != significant.len() {
        return Err(Error::Invariant(format!(
            "merging placed {members} of {} significant scores",
            significant.len()
        )));
    }
    Ok(Detection { scores, events })
}

fn detection(run: &mut Run, bins: &[CityHourBin], models: &(FittedModel, FittedModel)) -> Result<(CityRegistry, Vec<CityHourBin>, Detection)> {
    let registry = run.registry()?;
    let cfg = &run.lc.config;
    let test = split(bins, &cfg.test);
    let d = detect_with(run.exec, &test, &models.0, &models.1, &registry, cfg.significance, cfg.observation_days())?;
    Ok((registry, test, d))
}

pub fn detect(run: &mut Run, bins: &[CityHourBin], models: &(FittedModel, FittedModel)) -> Result<Detection> {
    let (_, _, d) = detection(run, bins, models)?;
    let alpha = run.lc.config.significance;
    run.write_out(DEVIATIONS, &deviations_to_csv(&d.scores))?;
    run.write_out(EVENTS, &events_to_csv(&d.events))?;
    run.write_out(RANKED_POSITIVE, &ranked_csv(&rank_deviations(&d.scores, Polarity::Positive), alpha))?;
    run.write_out(RANKED_NEGATIVE, &ranked_csv(&rank_deviations(&d.scores, Polarity::Negative), alpha))?;
    Ok(d)
}

pub fn report(run: &mut Run, bins: &[CityHourBin], models: &(FittedModel, FittedModel)) -> Result<()> {
    let (registry, test, d) = detection(run, bins, models)?;
    let manifest = match std::fs::read_to_string(run.lc.manifest_path()) {
        Ok(text) => serde_json::from_str::<Manifest>(&text).ok(),
        Err(_) => None,
    };
    let label = |e: &MergedEvent| -> String {
        let Some(m) = &manifest else { return String::new() };
        let det = evaluate_detection(&m.events, std::slice::from_ref(e), usize::MAX);
        det.rows
            .iter()
            .filter(|r| r.rank.is_some())
            .map(|r| r.label.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    };
    run.write_out(EVENT_REPORT, &event_report_csv(&d.events, &registry, &label))?;
    let cities: Vec<String> = match &run.lc.config.timeline_cities {
        Some(c) => c.clone(),
        None => {
            let mut c: Vec<String> = test.iter().map(|b| b.city_id.clone()).collect();
            c.dedup();
            c
        }
    };
    for city in cities {
        if registry.get(&city).is_none() {
            return Err(Error::Validation(format!(
                "config field `timeline_cities`: unknown city {city:?}"
            )));
        }
        let text = timeline_csv(&city, &test, &models.0, &models.1)?;
        run.write_out(&format!("{TIMELINE_DIR}/{city}.csv"), &text)?;
    }
    Ok(())
}

/// Generates the synthetic corpus configured under `synth`.
pub fn synth(run: &mut Run) -> Result<Manifest> {
    let cfg = &run.lc.config;
    let s = cfg
        .synth
        .clone()
        .ok_or_else(|| Error::Validation("config field `synth`: required for this command".into()))?;
    let input = run.lc.required("input", &cfg.input)?;
    let weather = run.lc.required("weather", &cfg.weather)?;
    let manifest_path = run.lc.manifest_path();
    let registry = run.registry()?;
    let lexicon = run.lexicon()?;
    let corpus = generate(run.exec, &s.generator, &s.events, &registry, &lexicon, true)?;
    run.write(&input, &corpus.to_ndjson())?;
    run.write(&weather, &corpus.weather.to_csv())?;
    run.write(&manifest_path, &corpus.manifest.to_json())?;
    Ok(corpus.manifest)
}

/// Detection quality against the manifest, plus the bias comparison of
/// the configured model against the no-city and intercept-only models.
pub fn eval(run: &mut Run, bins: &[CityHourBin], models: &(FittedModel, FittedModel)) -> Result<()> {
    let path = run.lc.manifest_path();
    let manifest: Manifest = serde_json::from_str(&run.read_text(&path)?)
        .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))?;
    let (registry, test, full) = detection(run, bins, models)?;
    let cfg = &run.lc.config;
    let k = cfg.top_k;
    let det = evaluate_detection(&manifest.events, &full.events, k);
    run.write_out(DETECTION_REPORT, &det.to_csv())?;

    let train = split(bins, &cfg.train);
    let mut no_city = cfg.factor_spec()?;
    no_city.include_city = false;
    let alt = |spec: &FactorSpec| -> Result<Vec<MergedEvent>> {
        let (p, n) = fit_models(run.exec, &train, spec, cfg.fit_options())?;
        Ok(detect_with(run.exec, &test, &p, &n, &registry, cfg.significance, cfg.observation_days())?.events)
    };
    let nc = alt(&no_city)?;
    let null = alt(&FactorSpec::new(false, false, false, false, false))?;
    let bias = bias_report(
        &[("configured", &full.events), ("no_city", &nc), ("intercept_only", &null)],
        &registry,
        k,
        cfg.bias_margin,
    );
    run.write_out(BIAS_REPORT, &bias.to_csv())?;
    Ok(())
}

/// Runs one command and writes the run manifest.
pub fn run_command(command: Command, lc: &LoadedConfig, exec: Exec) -> Result<Vec<String>> {
    let mut run = Run::new(lc, exec);
    match command {
        Command::Ingest => {
            ingest(&mut run)?;
        }
        Command::Fit => {
            let bins = run.bins()?;
            fit(&mut run, &bins)?;
        }
        Command::Detect => {
            let bins = run.bins()?;
            let models = run.models()?;
            detect(&mut run, &bins, &models)?;
        }
        Command::Report => {
            let bins = run.bins()?;
            let models = run.models()?;
            report(&mut run, &bins, &models)?;
        }
        Command::Synth => {
            synth(&mut run)?;
        }
        Command::Eval => {
            let bins = run.bins()?;
            let models = run.models()?;
            eval(&mut run, &bins, &models)?;
        }
        Command::All => {
            let (bins, _) = ingest(&mut run)?;
            let models = fit(&mut run, &bins)?;
            detect(&mut run, &bins, &models)?;
            report(&mut run, &bins, &models)?;
            if lc.manifest_path().exists() {
                eval(&mut run, &bins, &models)?;
            }
        }
    }
    run.finish(command)?;
    Ok(run.outputs().to_vec())
}
