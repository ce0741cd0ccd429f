use chrono::{Datelike, NaiveDate, TimeZone};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::{GeneratorConfig, InjectedEvent, SynthCity};
use crate::aggregate::{BinKey, CityHourBin, WeatherCategory, WeatherTable};
use crate::error::Result;
use crate::exec::{self, Exec};
use crate::geo::{localize_timestamp, CityEntry, CityRegistry, ZoneRule};
use crate::ingest::TweetRecord;
use crate::polarity::Polarity;
use crate::sentiment::Lexicon;

/// Words that carry no sentiment in the shipped lexicon.
pub const NEUTRAL_FILLER: [&str; 16] = [
    "today", "coffee", "the", "train", "city", "lunch", "weekend", "morning", "office", "music",
    "game", "news", "walk", "park", "dinner", "bus",
];

const STREAM_WEATHER: u64 = 0;
const STREAM_LABELS: u64 = 1;
const STREAM_TEXT: u64 = 2;

fn stream(seed: u64, city_index: usize, which: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(city_index as u64 * 4 + which);
    rng
}

/// Ground-truth manifest written next to a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: GeneratorConfig,
    pub events: Vec<InjectedEvent>,
    pub n_records: u64,
    pub n_bins: usize,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialization");
        s.push('\n');
        s
    }
}

pub struct Corpus {
    /// Realized aggregates, sorted by key. Hours without tweets are absent.
    pub bins: Vec<CityHourBin>,
    pub weather: WeatherTable,
    /// Empty unless records were requested.
    pub records: Vec<TweetRecord>,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }
}

/// UTC epoch of the start of a local hour, or `None` when the hour does
/// not map cleanly (skipped by a clock change). Repeated hours use their
/// first occurrence.
pub fn local_hour_to_utc(entry: &CityEntry, date: NaiveDate, hour: u8) -> Option<i64> {
    let naive = date.and_hms_opt(hour as u32, 0, 0)?;
    let utc = match entry.zone() {
        ZoneRule::Iana(tz) => tz.from_local_datetime(&naive).earliest()?.timestamp(),
        ZoneRule::Fixed(minutes) => naive.and_utc().timestamp() - minutes as i64 * 60,
    };
    let back = |t: i64| {
        let l = localize_timestamp(t, entry);
        (l.date, l.hour) == (date, hour)
    };
    (back(utc) && back(utc + 3599)).then_some(utc)
}

/// Text whose score carries exactly the requested labels.
pub fn synthetic_text<R: Rng>(rng: &mut R, pos_terms: &[&str], neg_terms: &[&str], positive: bool, negative: bool) -> String {
    let filler = |rng: &mut R| NEUTRAL_FILLER[rng.random_range(0..NEUTRAL_FILLER.len())];
    let mut clauses: Vec<String> = Vec::with_capacity(3);
    clauses.push(format!("{} {}", filler(rng), filler(rng)));
    for (on, terms) in [(positive, pos_terms), (negative, neg_terms)] {
        if on {
            let t = terms[rng.random_range(0..terms.len())];
            clauses.push(format!("{} {} {}", filler(rng), t, filler(rng)));
        }
    }
    if clauses.len() == 3 && rng.random_bool(0.5) {
        clauses.swap(1, 2);
    }
    clauses.join(". ")
}

struct CityOut {
    bins: Vec<CityHourBin>,
    weather: Vec<(NaiveDate, u8, WeatherCategory)>,
    records: Vec<TweetRecord>,
}

struct Shared<'a> {
    cfg: &'a GeneratorConfig,
    events: &'a [InjectedEvent],
    weights: WeightedIndex<f64>,
    pos_terms: Vec<&'a str>,
    neg_terms: Vec<&'a str>,
    with_records: bool,
}

fn city_stream(sh: &Shared, index: usize, city: &SynthCity, entry: &CityEntry) -> CityOut {
    let cfg = sh.cfg;
    let mut w_rng = stream(cfg.seed, index, STREAM_WEATHER);
    let mut l_rng = stream(cfg.seed, index, STREAM_LABELS);
    let mut t_rng = stream(cfg.seed, index, STREAM_TEXT);
    let mean = city.tweets_per_hour.unwrap_or(cfg.tweets_per_hour);
    let poisson = (mean > 0.0).then(|| Poisson::new(mean).expect("validated mean"));
    let events: Vec<&InjectedEvent> = sh.events.iter().filter(|e| e.city_id == city.city_id).collect();

    let mut out = CityOut {
        bins: Vec::new(),
        weather: Vec::new(),
        records: Vec::new(),
    };
    let mut current = WeatherCategory::ALL[sh.weights.sample(&mut w_rng)];
    let mut seq = 0u64;
    for d in 0..cfg.days {
        let date = cfg.start_date + chrono::Days::new(d as u64);
        let dow = date.weekday().num_days_from_monday() as u8;
        for hour in 0..24u8 {
            if !w_rng.random_bool(cfg.weather_persistence) {
                current = WeatherCategory::ALL[sh.weights.sample(&mut w_rng)];
            }
            out.weather.push((date, hour, current));
            let Some(utc) = local_hour_to_utc(entry, date, hour) else {
                continue;
            };
            let n = poisson.as_ref().map_or(0, |p| p.sample(&mut l_rng) as u64);
            if n == 0 {
                continue;
            }
            let shift = |p: Polarity| -> f64 {
                events
                    .iter()
                    .filter(|e| e.polarity == p && e.covers(date, hour))
                    .map(|e| e.delta)
                    .sum()
            };
            let p_pos = city.base_pos + shift(Polarity::Positive);
            let p_neg = city.base_neg + shift(Polarity::Negative);
            let (mut n_pos, mut n_neg, mut n_social) = (0, 0, 0);
            for _ in 0..n {
                let social = l_rng.random_bool(cfg.social_rate);
                let pos = l_rng.random_bool(p_pos + cfg.positive.offset(hour, dow, current, social));
                let neg = l_rng.random_bool(p_neg + cfg.negative.offset(hour, dow, current, social));
                n_social += social as u64;
                n_pos += pos as u64;
                n_neg += neg as u64;
                if sh.with_records {
                    out.records.push(make_record(sh, &mut t_rng, entry, utc, seq, social, pos, neg));
                }
                seq += 1;
            }
            out.bins.push(CityHourBin::from_counts(
                BinKey {
                    city_id: city.city_id.clone(),
                    date,
                    hour,
                },
                dow,
                (n, n_pos, n_neg, n_social),
                Some(current),
            ));
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn make_record(sh: &Shared, rng: &mut ChaCha8Rng, entry: &CityEntry, hour_utc: i64, seq: u64, social: bool, pos: bool, neg: bool) -> TweetRecord {
    let mut text = synthetic_text(rng, &sh.pos_terms, &sh.neg_terms, pos, neg);
    let (mut is_reply, mut is_retweet, mut is_quote, mut mentions) = (false, false, false, 0);
    if social {
        if rng.random_bool(0.5) {
            is_reply = true;
        }
        mentions = rng.random_range(if is_reply { 0 } else { 1 }..3u32);
    } else {
        match rng.random_range(0..10) {
            0 => {
                is_retweet = true;
                mentions = 1;
            }
            1 => is_quote = true,
            _ => {}
        }
    }
    for i in 0..mentions {
        text = format!("@friend{i} {text}");
    }
    let alias = &entry.aliases[rng.random_range(0..entry.aliases.len())];
    let location = if rng.random_bool(0.3) { alias.to_uppercase() } else { alias.clone() };
    TweetRecord {
        id: format!("{}-{:08}", entry.city_id, seq),
        created_at_utc: hour_utc + rng.random_range(0..3600),
        text,
        lang: "en".to_string(),
        user_location_raw: location,
        follower_count: rng.random_range(0..20_000),
        is_reply,
        is_retweet,
        is_quote,
        mention_count: mentions,
    }
}

/// Draws a corpus. Bins always come back; tweet records only when
/// `with_records` is set, and they aggregate to exactly those bins.
pub fn generate(
    exec: Exec,
    cfg: &GeneratorConfig,
    events: &[InjectedEvent],
    registry: &CityRegistry,
    lexicon: &Lexicon,
    with_records: bool,
) -> Result<Corpus> {
    cfg.validate(registry, events)?;
    let weights: Vec<f64> = WeatherCategory::ALL
        .iter()
        .map(|w| cfg.weather_weights.get(w).copied().unwrap_or(1.0))
        .collect();
    let pos_terms = lexicon.terms_with_sign(true);
    let neg_terms = lexicon.terms_with_sign(false);
    if with_records && (pos_terms.is_empty() || neg_terms.is_empty()) {
        return Err(crate::Error::Validation(
            "lexicon needs positive and negative terms to build text".into(),
        ));
    }
    let shared = Shared {
        cfg,
        events,
        weights: WeightedIndex::new(&weights).expect("validated weights"),
        pos_terms,
        neg_terms,
        with_records,
    };
    let indexed: Vec<(usize, &SynthCity)> = cfg.cities.iter().enumerate().collect();
    let outs = exec::map(exec, &indexed, |&(i, c)| {
        let entry = registry.get(&c.city_id).expect("validated city");
        city_stream(&shared, i, c, entry)
    });

    let mut bins = Vec::new();
    let mut weather = WeatherTable::new();
    let mut records = Vec::new();
    for (o, c) in outs.into_iter().zip(&cfg.cities) {
        bins.extend(o.bins);
        for (d, h, w) in o.weather {
            weather.insert(&c.city_id, d, h, w)?;
        }
        records.extend(o.records);
    }
    bins.sort_by_key(|b| b.key());
    records.sort_by(|a, b| (a.created_at_utc, &a.id).cmp(&(b.created_at_utc, &b.id)));
    let n_records = bins.iter().map(|b| b.n_total).sum();
    let manifest = Manifest {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        events: events.to_vec(),
        n_records,
        n_bins: bins.len(),
    };
    Ok(Corpus {
        bins,
        weather,
        records,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{bin_stream, finalize_bins, BinInput};
    use crate::ingest::{classify_interaction, parse_record, InteractionType};
    use crate::sentiment::{polarity_labels, score_text, DEFAULT_LEXICON};
    use crate::synth::synthetic_registry;

    fn lexicon() -> Lexicon {
        Lexicon::parse(DEFAULT_LEXICON).unwrap()
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 10, 30).unwrap()
    }

    #[test]
    fn filler_is_neutral() {
        let lex = lexicon();
        for w in NEUTRAL_FILLER {
            assert_eq!(lex.role_of(w), None, "{w}");
        }
    }

    #[test]
    fn text_reproduces_labels() {
        let lex = lexicon();
        let (p, n) = (lex.terms_with_sign(true), lex.terms_with_sign(false));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..4000 {
            let (pos, neg) = (i % 2 == 0, i % 3 == 0);
            let text = synthetic_text(&mut rng, &p, &n, pos, neg);
            let l = polarity_labels(score_text(&text, &lex));
            assert_eq!((l.is_positive, l.is_negative), (pos, neg), "{text}");
        }
    }

    #[test]
    fn dst_gap_and_repeat() {
        let reg = synthetic_registry(&[("US", 1)]).unwrap();
        let nyc = reg.get("us_00").unwrap();
        let spring = NaiveDate::from_ymd_opt(2018, 3, 11).unwrap();
        assert_eq!(local_hour_to_utc(nyc, spring, 2), None);
        assert!(local_hour_to_utc(nyc, spring, 3).is_some());
        let fall = NaiveDate::from_ymd_opt(2017, 11, 5).unwrap();
        let one = local_hour_to_utc(nyc, fall, 1).unwrap();
        // first occurrence, still daylight time
        assert_eq!(one, crate::ingest::parse_utc("2017-11-05T05:00:00Z").unwrap());
    }

    #[test]
    fn records_aggregate_to_bins() {
        let reg = synthetic_registry(&[("US", 2), ("GB", 1)]).unwrap();
        let lex = lexicon();
        let mut cfg = GeneratorConfig::flat(&reg, 11, 0.35, 0.22, 6.0, date(), 9);
        cfg.negative.social_slope = 0.05;
        let ev = InjectedEvent::city_day("us_01", date() + chrono::Days::new(2), Polarity::Negative, 0.3, "e");
        let corpus = generate(Exec::Parallel, &cfg, &[ev], &reg, &lex, true).unwrap();
        assert_eq!(corpus.records.len() as u64, corpus.manifest.n_records);

        let text = corpus.to_ndjson();
        let inputs: Vec<BinInput> = text
            .lines()
            .map(|line| {
                let rec = parse_record(line).unwrap();
                let entry = reg.lookup_alias(&crate::geo::normalize_location(&rec.user_location_raw)).unwrap();
                BinInput {
                    city_id: entry.city_id.clone(),
                    local: localize_timestamp(rec.created_at_utc, entry),
                    interaction: classify_interaction(&rec),
                    labels: polarity_labels(score_text(&rec.text, &lex)),
                }
            })
            .collect();
        let social = inputs.iter().filter(|b| b.interaction == InteractionType::Social).count() as u64;
        assert_eq!(social, corpus.bins.iter().map(|b| b.n_social).sum::<u64>());
        let rebuilt = finalize_bins(bin_stream(Exec::Parallel, &inputs), &corpus.weather);
        assert_eq!(rebuilt, corpus.bins);
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let reg = synthetic_registry(&[("US", 3)]).unwrap();
        let lex = lexicon();
        let cfg = GeneratorConfig::flat(&reg, 5, 0.3, 0.2, 3.0, date(), 4);
        let a = generate(Exec::Parallel, &cfg, &[], &reg, &lex, true).unwrap();
        let b = generate(Exec::Sequential, &cfg, &[], &reg, &lex, true).unwrap();
        assert_eq!(a.to_ndjson(), b.to_ndjson());
        assert_eq!(a.manifest.to_json(), b.manifest.to_json());
        let c = generate(Exec::Parallel, &cfg, &[], &reg, &lex, false).unwrap();
        assert_eq!(c.bins, a.bins);
        assert!(c.records.is_empty());
        let other = GeneratorConfig { seed: 6, ..cfg };
        let d = generate(Exec::Parallel, &other, &[], &reg, &lex, false).unwrap();
        assert_ne!(d.bins, a.bins);
    }

    #[test]
    fn flat_rate_concentrates() {
        let reg = synthetic_registry(&[("US", 4)]).unwrap();
        let cfg = GeneratorConfig::flat(&reg, 21, 0.4, 0.2, 50.0, date(), 21);
        let corpus = generate(Exec::Parallel, &cfg, &[], &reg, &lexicon(), false).unwrap();
        let n: u64 = corpus.bins.iter().map(|b| b.n_total).sum();
        let pos: u64 = corpus.bins.iter().map(|b| b.n_pos).sum();
        assert!(n > 100_000, "{n}");
        assert!((pos as f64 / n as f64 - 0.4).abs() < 0.005);
    }

    #[test]
    fn event_shift_realized() {
        let reg = synthetic_registry(&[("PH", 2)]).unwrap();
        let mut cfg = GeneratorConfig::flat(&reg, 8, 0.3, 0.2, 20.0, date(), 5);
        cfg.cities[0].tweets_per_hour = Some(450.0);
        let day = date() + chrono::Days::new(3);
        let ev = InjectedEvent::city_day("ph_00", day, Polarity::Negative, 0.3, "e");
        let corpus = generate(Exec::Parallel, &cfg, &[ev], &reg, &lexicon(), false).unwrap();
        let (mut n, mut k) = (0u64, 0u64);
        for b in corpus.bins.iter().filter(|b| b.city_id == "ph_00" && b.local_date == day) {
            n += b.n_total;
            k += b.n_neg;
        }
        assert!(n >= 10_000);
        assert!((k as f64 / n as f64 - 0.5).abs() < 0.02);
    }
}
