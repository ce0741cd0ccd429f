//! Synthetic corpora with known baselines and injected events.
//!
//! Generation uses the same linear-probability structure the baseline
//! model fits, so a correctly working pipeline recovers the configured
//! effects and finds the injected events.

mod evaluate;
mod generate;

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use evaluate::{bias_report, evaluate_detection, BiasReport, BiasRow, DetectionReport, DetectionRow};
pub use generate::{generate, local_hour_to_utc, synthetic_text, Corpus, Manifest, NEUTRAL_FILLER};

use crate::aggregate::WeatherCategory;
use crate::error::{Error, Result};
use crate::geo::{CityEntry, CityRegistry};
use crate::model::{DesignLayout, Factor, INTERCEPT, SOCIAL};
use crate::polarity::Polarity;

/// Additive effects on one label's probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorEffects {
    #[serde(default = "zeros24")]
    pub hour: Vec<f64>,
    #[serde(default = "zeros7")]
    pub day: Vec<f64>,
    /// Missing categories contribute nothing.
    #[serde(default)]
    pub weather: BTreeMap<WeatherCategory, f64>,
    /// Added when the tweet is social.
    #[serde(default)]
    pub social_slope: f64,
}

fn zeros24() -> Vec<f64> {
    vec![0.0; 24]
}

fn zeros7() -> Vec<f64> {
    vec![0.0; 7]
}

impl Default for FactorEffects {
    fn default() -> Self {
        Self {
            hour: zeros24(),
            day: zeros7(),
            weather: BTreeMap::new(),
            social_slope: 0.0,
        }
    }
}

impl FactorEffects {
    fn weather_effect(&self, w: WeatherCategory) -> f64 {
        self.weather.get(&w).copied().unwrap_or(0.0)
    }

    /// Probability contribution of everything except the city base rate.
    pub fn offset(&self, hour: u8, day: u8, w: WeatherCategory, social: bool) -> f64 {
        self.hour[hour as usize]
            + self.day[day as usize]
            + self.weather_effect(w)
            + if social { self.social_slope } else { 0.0 }
    }

    fn extremes(&self) -> (f64, f64) {
        let span = |v: &mut dyn Iterator<Item = f64>| {
            v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        };
        let (hl, hh) = span(&mut self.hour.iter().copied());
        let (dl, dh) = span(&mut self.day.iter().copied());
        let (wl, wh) = span(&mut WeatherCategory::ALL.iter().map(|&w| self.weather_effect(w)));
        let (sl, sh) = (self.social_slope.min(0.0), self.social_slope.max(0.0));
        (hl + dl + wl + sl, hh + dh + wh + sh)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthCity {
    pub city_id: String,
    pub base_pos: f64,
    pub base_neg: f64,
    /// Overrides the corpus-wide mean volume for this city.
    #[serde(default)]
    pub tweets_per_hour: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub cities: Vec<SynthCity>,
    #[serde(default)]
    pub positive: FactorEffects,
    #[serde(default)]
    pub negative: FactorEffects,
    /// Chance that a tweet is social.
    #[serde(default = "default_social_rate")]
    pub social_rate: f64,
    /// Mean of the Poisson tweet count per city-hour.
    pub tweets_per_hour: f64,
    /// First local date generated.
    pub start_date: NaiveDate,
    pub days: u32,
    /// Relative frequency of each weather category; missing means 1.
    #[serde(default)]
    pub weather_weights: BTreeMap<WeatherCategory, f64>,
    /// Chance the weather carries over to the next hour.
    #[serde(default = "default_persistence")]
    pub weather_persistence: f64,
}

fn default_social_rate() -> f64 {
    0.3
}

fn default_persistence() -> f64 {
    0.7
}

impl GeneratorConfig {
    /// A zero-effect config over every city in `registry`.
    pub fn flat(registry: &CityRegistry, seed: u64, base_pos: f64, base_neg: f64, tweets_per_hour: f64, start_date: NaiveDate, days: u32) -> Self {
        Self {
            seed,
            cities: registry
                .entries()
                .iter()
                .map(|e| SynthCity {
                    city_id: e.city_id.clone(),
                    base_pos,
                    base_neg,
                    tweets_per_hour: None,
                })
                .collect(),
            positive: FactorEffects::default(),
            negative: FactorEffects::default(),
            social_rate: default_social_rate(),
            tweets_per_hour,
            start_date,
            days,
            weather_weights: BTreeMap::new(),
            weather_persistence: default_persistence(),
        }
    }

    pub fn effects(&self, p: Polarity) -> &FactorEffects {
        match p {
            Polarity::Positive => &self.positive,
            Polarity::Negative => &self.negative,
        }
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + chrono::Days::new(self.days as u64)
    }

    pub fn city(&self, city_id: &str) -> Option<&SynthCity> {
        self.cities.iter().find(|c| c.city_id == city_id)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    /// Checks shapes and that every implied probability lies in (0, 1).
    pub fn validate(&self, registry: &CityRegistry, events: &[InjectedEvent]) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.cities.is_empty() {
            return bad("generator config lists no cities".into());
        }
        if self.days == 0 {
            return bad("generator window is empty".into());
        }
        if !(self.tweets_per_hour >= 0.0 && self.tweets_per_hour.is_finite()) {
            return bad(format!("tweets_per_hour must be non-negative, got {}", self.tweets_per_hour));
        }
        if !(0.0..=1.0).contains(&self.social_rate) {
            return bad(format!("social_rate {} outside [0, 1]", self.social_rate));
        }
        if !(0.0..1.0).contains(&self.weather_persistence) {
            return bad(format!("weather_persistence {} outside [0, 1)", self.weather_persistence));
        }
        if self.weather_weights.values().any(|&w| !(w >= 0.0))
            || WeatherCategory::ALL.iter().all(|w| self.weather_weights.get(w) == Some(&0.0))
        {
            return bad("weather weights must be non-negative and not all zero".into());
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.cities {
            if registry.get(&c.city_id).is_none() {
                return bad(format!("generator city {:?} is not in the registry", c.city_id));
            }
            if !seen.insert(c.city_id.as_str()) {
                return bad(format!("generator city {:?} listed twice", c.city_id));
            }
            if let Some(v) = c.tweets_per_hour {
                if !(v >= 0.0 && v.is_finite()) {
                    return bad(format!("tweets_per_hour for {} must be non-negative", c.city_id));
                }
            }
        }
        for p in Polarity::BOTH {
            let fx = self.effects(p);
            if fx.hour.len() != 24 || fx.day.len() != 7 {
                return bad(format!("{p} effects need 24 hour and 7 day values"));
            }
            let (lo, hi) = fx.extremes();
            for c in &self.cities {
                let base = match p {
                    Polarity::Positive => c.base_pos,
                    Polarity::Negative => c.base_neg,
                };
                let (mut dlo, mut dhi) = (0.0f64, 0.0f64);
                for e in events.iter().filter(|e| e.city_id == c.city_id && e.polarity == p) {
                    dlo = dlo.min(e.delta);
                    dhi = dhi.max(e.delta);
                }
                if !(base + lo + dlo > 0.0 && base + hi + dhi < 1.0) {
                    return bad(format!(
                        "{p} probability for {} can reach [{:.4}, {:.4}], outside (0, 1)",
                        c.city_id,
                        base + lo + dlo,
                        base + hi + dhi
                    ));
                }
            }
        }
        for e in events {
            if self.city(&e.city_id).is_none() {
                return bad(format!("event {:?} targets unknown city {:?}", e.label, e.city_id));
            }
            if e.end < e.start {
                return bad(format!("event {:?} ends before it starts", e.label));
            }
        }
        Ok(())
    }

    /// Ground-truth value of each column of `layout` for one polarity.
    ///
    /// Only meaningful for a layout with every factor and the social term.
    pub fn true_coefficients(&self, layout: &DesignLayout, p: Polarity) -> Result<Vec<f64>> {
        let fx = self.effects(p);
        let spec = layout
            .spec
            .as_ref()
            .ok_or_else(|| Error::Validation("layout has no spec".into()))?;
        let base = |city: &str| -> Result<f64> {
            let c = self
                .city(city)
                .ok_or_else(|| Error::Validation(format!("no generator city {city:?}")))?;
            Ok(match p {
                Polarity::Positive => c.base_pos,
                Polarity::Negative => c.base_neg,
            })
        };
        let level_effect = |f: Factor, level: &str| -> Result<f64> {
            let parse_err = || Error::Validation(format!("bad {f} level {level:?}"));
            Ok(match f {
                Factor::City => base(level)?,
                Factor::Hour => fx.hour[level.parse::<usize>().map_err(|_| parse_err())?],
                Factor::Day => fx.day[level.parse::<usize>().map_err(|_| parse_err())?],
                Factor::Weather => fx.weather_effect(level.parse()?),
            })
        };
        let mut out = Vec::with_capacity(layout.column_names.len());
        for name in &layout.column_names {
            let v = if name == INTERCEPT {
                let mut v = 0.0;
                for (f, r) in &spec.reference_levels {
                    v += level_effect(*f, r)?;
                }
                v
            } else if name == SOCIAL {
                fx.social_slope
            } else {
                let (fname, level) = name
                    .split_once('=')
                    .ok_or_else(|| Error::Validation(format!("unexpected column {name:?}")))?;
                let f = Factor::ALL
                    .into_iter()
                    .find(|f| f.as_str() == fname)
                    .ok_or_else(|| Error::Validation(format!("unexpected column {name:?}")))?;
                level_effect(f, level)? - level_effect(f, &spec.reference_levels[&f])?
            };
            out.push(v);
        }
        Ok(out)
    }
}

/// A shift in one label's probability over a local time window of a city.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedEvent {
    pub city_id: String,
    /// Inclusive local bounds; an hour is affected when it overlaps them.
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub polarity: Polarity,
    pub delta: f64,
    pub label: String,
}

impl InjectedEvent {
    /// A whole local day.
    pub fn city_day(city_id: &str, date: NaiveDate, polarity: Polarity, delta: f64, label: &str) -> Self {
        Self {
            city_id: city_id.to_string(),
            start: date.and_hms_opt(0, 0, 0).expect("midnight"),
            end: date.and_hms_opt(23, 59, 59).expect("end of day"),
            polarity,
            delta,
            label: label.to_string(),
        }
    }

    pub fn covers(&self, date: NaiveDate, hour: u8) -> bool {
        let h0 = date.and_hms_opt(hour as u32, 0, 0).expect("hour < 24");
        let h1 = h0 + chrono::Duration::hours(1);
        h0 <= self.end && h1 > self.start
    }
}

/// Time zones used when building synthetic registries, by country.
const ZONES: [(&str, &[&str]); 6] = [
    ("US", &["America/New_York", "America/Chicago", "America/Denver", "America/Los_Angeles"]),
    ("GB", &["Europe/London"]),
    ("PH", &["Asia/Manila"]),
    ("IN", &["Asia/Kolkata"]),
    ("CA", &["America/Toronto", "America/Vancouver"]),
    ("AU", &["Australia/Sydney", "Australia/Perth"]),
];

/// A registry with the requested number of cities per country.
///
/// City ids look like `us_03`; countries without a known zone get a fixed
/// UTC offset.
pub fn synthetic_registry(countries: &[(&str, usize)]) -> Result<CityRegistry> {
    let mut entries = Vec::new();
    for &(cc, n) in countries {
        let zones = ZONES.iter().find(|(c, _)| *c == cc).map(|(_, z)| *z);
        for i in 0..n {
            let id = format!("{}_{:02}", cc.to_lowercase(), i);
            let tz = zones.map(|z| z[i % z.len()].to_string()).unwrap_or_default();
            entries.push(CityEntry {
                display_name: format!("{} City {:02}", cc, i),
                aliases: vec![id.replace('_', " "), format!("{} city {:02}", cc.to_lowercase(), i)],
                city_id: id,
                country: cc.to_string(),
                tz,
                fallback_offset_minutes: 0,
            });
        }
    }
    CityRegistry::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::CityHourBin;
    use crate::model::FactorSpec;

    fn registry() -> CityRegistry {
        synthetic_registry(&[("US", 3), ("GB", 1)]).unwrap()
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 10, 2).unwrap()
    }

    #[test]
    fn synthetic_registry_shape() {
        let reg = registry();
        assert_eq!(reg.len(), 4);
        assert_eq!(reg.country_of("us_02"), Some("US"));
        assert_eq!(reg.get("gb_00").unwrap().tz, "Europe/London");
        assert_eq!(reg.lookup_alias("us 01").unwrap().city_id, "us_01");
        let other = synthetic_registry(&[("ZZ", 1)]).unwrap();
        assert_eq!(other.get("zz_00").unwrap().tz, "");
    }

    #[test]
    fn validation_catches_out_of_range() {
        let reg = registry();
        let mut cfg = GeneratorConfig::flat(&reg, 1, 0.4, 0.2, 5.0, date(), 3);
        assert!(cfg.validate(&reg, &[]).is_ok());
        cfg.negative.hour[5] = -0.25;
        assert!(cfg.validate(&reg, &[]).is_err());
        cfg.negative.hour[5] = 0.0;
        let ev = InjectedEvent::city_day("us_00", date(), Polarity::Positive, 0.65, "x");
        assert!(cfg.validate(&reg, std::slice::from_ref(&ev)).is_err());
        let ev = InjectedEvent { delta: 0.3, ..ev };
        assert!(cfg.validate(&reg, &[ev]).is_ok());
        cfg.cities[0].city_id = "nowhere".into();
        assert!(cfg.validate(&reg, &[]).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let reg = registry();
        let mut cfg = GeneratorConfig::flat(&reg, 9, 0.4, 0.2, 5.0, date(), 3);
        cfg.positive.weather.insert(WeatherCategory::Rain, -0.03);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: GeneratorConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let minimal: GeneratorConfig = serde_json::from_str(
            r#"{"seed":1,"cities":[{"city_id":"us_00","base_pos":0.3,"base_neg":0.2}],"tweets_per_hour":4,"start_date":"2017-10-02","days":2}"#,
        )
        .unwrap();
        assert_eq!(minimal.positive.hour.len(), 24);
        assert!(minimal.validate(&reg, &[]).is_ok());
    }

    #[test]
    fn event_window_overlap() {
        let ev = InjectedEvent {
            city_id: "us_00".into(),
            start: date().and_hms_opt(14, 30, 0).unwrap(),
            end: date().and_hms_opt(16, 0, 0).unwrap(),
            polarity: Polarity::Negative,
            delta: 0.1,
            label: "x".into(),
        };
        let hours: Vec<u8> = (0..24).filter(|&h| ev.covers(date(), h)).collect();
        assert_eq!(hours, [14, 15, 16]);
        let day = InjectedEvent::city_day("us_00", date(), Polarity::Negative, 0.1, "d");
        assert_eq!((0..24).filter(|&h| day.covers(date(), h)).count(), 24);
        assert!(!day.covers(date().succ_opt().unwrap(), 0));
    }

    #[test]
    fn true_coefficients_follow_reference_levels() {
        let reg = registry();
        let mut cfg = GeneratorConfig::flat(&reg, 1, 0.4, 0.2, 5.0, date(), 7);
        cfg.cities[1].base_pos = 0.45;
        cfg.positive.hour[0] = 0.01;
        cfg.positive.hour[3] = 0.05;
        cfg.positive.weather.insert(WeatherCategory::Rain, -0.04);
        cfg.positive.social_slope = 0.07;
        let mut bins = Vec::new();
        for (c, city) in ["us_00", "us_01"].iter().enumerate() {
            for d in 0..7u64 {
                for h in 0..24u8 {
                    let w = WeatherCategory::ALL[(c + d as usize + h as usize) % 7];
                    bins.push(CityHourBin::from_counts(
                        crate::aggregate::BinKey { city_id: city.to_string(), date: date() + chrono::Days::new(d), hour: h },
                        d as u8,
                        (10, 5, 2, (h % 3) as u64),
                        Some(w),
                    ));
                }
            }
        }
        let layout = DesignLayout::from_bins(&bins, &FactorSpec::all()).unwrap();
        let truth = cfg.true_coefficients(&layout, Polarity::Positive).unwrap();
        let get = |n: &str| truth[layout.column_names.iter().position(|c| c == n).unwrap()];
        assert!((get(INTERCEPT) - 0.41).abs() < 1e-12);
        assert!((get("city=us_01") - 0.05).abs() < 1e-12);
        assert!((get("hour=3") - 0.04).abs() < 1e-12);
        assert!((get("weather=rain") + 0.04).abs() < 1e-12);
        assert!((get(SOCIAL) - 0.07).abs() < 1e-12);
    }
}
