//! Dummy-coded design matrices over city, hour, day, weather and the
//! per-bin social proportion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ols::Matrix;
use crate::aggregate::{CityHourBin, WeatherCategory};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    City,
    Hour,
    Day,
    Weather,
}

impl Factor {
    pub const ALL: [Factor; 4] = [Factor::City, Factor::Hour, Factor::Day, Factor::Weather];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::City => "city",
            Factor::Hour => "hour",
            Factor::Day => "day",
            Factor::Weather => "weather",
        }
    }

    fn parse(s: &str) -> Option<Factor> {
        Factor::ALL.into_iter().find(|f| f.as_str() == s)
    }

    fn default_reference(self) -> Option<&'static str> {
        match self {
            Factor::City => None,
            Factor::Hour | Factor::Day => Some("0"),
            Factor::Weather => Some(WeatherCategory::Clear.as_str()),
        }
    }

    /// Level label of `bin` for this factor. Missing weather maps to the
    /// reference level.
    fn level_of<'a>(self, bin: &'a CityHourBin, reference: &'a str) -> LevelRef<'a> {
        match self {
            Factor::City => LevelRef::Str(&bin.city_id),
            Factor::Hour => LevelRef::Num(bin.hour),
            Factor::Day => LevelRef::Num(bin.day_of_week),
            Factor::Weather => match bin.weather {
                Some(w) => LevelRef::Str(w.as_str()),
                None => LevelRef::Str(reference),
            },
        }
    }

    fn sort_key(self, level: &str) -> (u32, String) {
        match self {
            Factor::Hour | Factor::Day => (level.parse().unwrap_or(u32::MAX), String::new()),
            Factor::Weather => (
                level
                    .parse::<WeatherCategory>()
                    .map(|w| w as u32)
                    .unwrap_or(u32::MAX),
                level.to_string(),
            ),
            Factor::City => (0, level.to_string()),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

enum LevelRef<'a> {
    Str(&'a str),
    Num(u8),
}

impl LevelRef<'_> {
    fn to_owned_string(&self) -> String {
        match self {
            LevelRef::Str(s) => s.to_string(),
            LevelRef::Num(n) => n.to_string(),
        }
    }
}

/// Which factors enter a model, and their reference levels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub include_city: bool,
    pub include_hour: bool,
    pub include_day: bool,
    pub include_weather: bool,
    pub include_social: bool,
    /// Overrides; unspecified factors use the first city id, hour 0,
    /// day 0 (Monday) and clear weather.
    #[serde(default)]
    pub reference_levels: BTreeMap<Factor, String>,
}

impl FactorSpec {
    pub fn new(city: bool, hour: bool, day: bool, weather: bool, social: bool) -> Self {
        Self {
            include_city: city,
            include_hour: hour,
            include_day: day,
            include_weather: weather,
            include_social: social,
            reference_levels: BTreeMap::new(),
        }
    }

    pub fn all() -> Self {
        Self::new(true, true, true, true, true)
    }

    pub fn includes(&self, f: Factor) -> bool {
        match f {
            Factor::City => self.include_city,
            Factor::Hour => self.include_hour,
            Factor::Day => self.include_day,
            Factor::Weather => self.include_weather,
        }
    }

    pub fn categorical(&self) -> impl Iterator<Item = Factor> + '_ {
        Factor::ALL.into_iter().filter(|&f| self.includes(f))
    }

    pub fn is_empty(&self) -> bool {
        self.categorical().next().is_none() && !self.include_social
    }

    pub fn with_reference(mut self, f: Factor, level: &str) -> Self {
        self.reference_levels.insert(f, level.to_string());
        self
    }

    /// Short human-readable label ("social, city, hour, day").
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.include_social {
            parts.push("social");
        }
        parts.extend(self.categorical().map(Factor::as_str));
        if parts.is_empty() {
            return "intercept only".to_string();
        }
        parts.join(", ")
    }

    /// The nine factor combinations of the standard comparison tables.
    pub fn comparison_set() -> Vec<(&'static str, FactorSpec)> {
        vec![
            ("all factors", FactorSpec::all()),
            ("social, city, hour, day", FactorSpec::new(true, true, true, false, true)),
            ("social, city", FactorSpec::new(true, false, false, false, true)),
            ("hour, day", FactorSpec::new(false, true, true, false, false)),
            ("city", FactorSpec::new(true, false, false, false, false)),
            ("hour of day", FactorSpec::new(false, true, false, false, false)),
            ("day of week", FactorSpec::new(false, false, true, false, false)),
            ("weather", FactorSpec::new(false, false, false, true, false)),
            ("social proportion", FactorSpec::new(false, false, false, false, true)),
        ]
    }

    /// Every non-empty subset of the five factors (31 specs).
    pub fn all_subsets() -> Vec<FactorSpec> {
        (1u8..32)
            .map(|m| FactorSpec::new(m & 1 != 0, m & 2 != 0, m & 4 != 0, m & 8 != 0, m & 16 != 0))
            .collect()
    }
}

/// Column layout derived from a spec and the levels observed in training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DesignLayout {
    /// Spec with every included factor's reference level filled in.
    pub spec: Option<FactorSpec>,
    pub column_names: Vec<String>,
    level_index: HashMap<(Factor, String), usize>,
    social_column: Option<usize>,
}

pub const INTERCEPT: &str = "(intercept)";
pub const SOCIAL: &str = "social";

impl DesignLayout {
    pub fn from_bins(bins: &[CityHourBin], spec: &FactorSpec) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Validation("no bins to build a design from".into()));
        }
        let mut resolved = spec.clone();
        let mut column_names = vec![INTERCEPT.to_string()];
        for f in spec.categorical() {
            let wanted = spec
                .reference_levels
                .get(&f)
                .cloned()
                .or_else(|| f.default_reference().map(str::to_string));
            let placeholder = wanted.clone().unwrap_or_default();
            let observed: BTreeSet<String> = bins
                .iter()
                .map(|b| f.level_of(b, &placeholder).to_owned_string())
                .collect();
            let mut levels: Vec<String> = observed.into_iter().collect();
            levels.sort_by_key(|l| f.sort_key(l));
            if levels.len() < 2 {
                return Err(Error::RankDeficient {
                    columns: vec![format!(
                        "{f} (only level {:?} observed)",
                        levels.first().cloned().unwrap_or_default()
                    )],
                });
            }
            let reference = wanted.unwrap_or_else(|| levels[0].clone());
            if !levels.contains(&reference) {
                return Err(Error::Validation(format!(
                    "reference level {reference:?} for {f} is not among the observed levels"
                )));
            }
            for level in levels.iter().filter(|l| **l != reference) {
                column_names.push(format!("{f}={level}"));
            }
            resolved.reference_levels.insert(f, reference);
        }
        if spec.include_social {
            column_names.push(SOCIAL.to_string());
        }
        let mut layout = Self::from_columns(resolved, column_names)?;
        layout.spec.as_mut().expect("set").reference_levels.retain(|f, _| spec.includes(*f));
        Ok(layout)
    }

    /// Rebuilds a layout from stored column names.
    pub fn from_columns(spec: FactorSpec, column_names: Vec<String>) -> Result<Self> {
        if column_names.first().map(String::as_str) != Some(INTERCEPT) {
            return Err(Error::Validation("first column must be the intercept".into()));
        }
        let mut level_index = HashMap::new();
        let mut social_column = None;
        for (j, name) in column_names.iter().enumerate().skip(1) {
            if name == SOCIAL {
                social_column = Some(j);
                continue;
            }
            let (f, level) = name
                .split_once('=')
                .and_then(|(f, l)| Factor::parse(f).map(|f| (f, l)))
                .ok_or_else(|| Error::Validation(format!("unrecognized column {name:?}")))?;
            level_index.insert((f, level.to_string()), j);
        }
        for f in spec.categorical() {
            if !spec.reference_levels.contains_key(&f) {
                return Err(Error::Validation(format!("no reference level recorded for {f}")));
            }
        }
        Ok(Self {
            spec: Some(spec),
            column_names,
            level_index,
            social_column,
        })
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_of(&self, f: Factor, level: &str) -> Option<usize> {
        self.level_index.get(&(f, level.to_string())).copied()
    }

    /// Writes the design row for `bin` into `out` (length = width). Returns
    /// true when some level was never seen in training and was treated as
    /// the reference.
    pub fn fill_row(&self, bin: &CityHourBin, out: &mut [f64]) -> bool {
        let spec = self.spec.as_ref().expect("layout has a spec");
        out.fill(0.0);
        out[0] = 1.0;
        let mut unseen = false;
        for f in spec.categorical() {
            let reference = &spec.reference_levels[&f];
            let level = f.level_of(bin, reference).to_owned_string();
            if &level == reference {
                continue;
            }
            match self.level_index.get(&(f, level)) {
                Some(&j) => out[j] = 1.0,
                None => unseen = true,
            }
        }
        if let Some(j) = self.social_column {
            out[j] = bin.p_social;
        }
        unseen
    }
}

/// Design matrix plus both responses.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    pub layout: DesignLayout,
    pub x: Matrix,
    pub y_pos: Vec<f64>,
    pub y_neg: Vec<f64>,
}

impl DesignMatrix {
    pub fn column_names(&self) -> &[String] {
        &self.layout.column_names
    }
}

pub fn build_design_matrix(exec: Exec, bins: &[CityHourBin], spec: &FactorSpec) -> Result<DesignMatrix> {
    let layout = DesignLayout::from_bins(bins, spec)?;
    let k = layout.width();
    let blocks = exec::map_chunks(exec, bins, 4096, |chunk| {
        let mut data = vec![0.0; chunk.len() * k];
        for (b, row) in chunk.iter().zip(data.chunks_exact_mut(k)) {
            layout.fill_row(b, row);
        }
        data
    });
    let x = Matrix::new(bins.len(), k, blocks.concat());
    Ok(DesignMatrix {
        layout,
        x,
        y_pos: bins.iter().map(|b| b.p_pos).collect(),
        y_neg: bins.iter().map(|b| b.p_neg).collect(),
    })
}
