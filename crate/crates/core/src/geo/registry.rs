use std::collections::HashMap;
use std::path::Path;

use chrono_tz::Tz;
use serde::Deserialize;

use super::resolve::normalize_location;
use crate::error::{Error, Result};

/// How a city's wall clock relates to UTC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZoneRule {
    Iana(Tz),
    /// Fixed offset in minutes east of UTC.
    Fixed(i32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CityEntry {
    pub city_id: String,
    pub display_name: String,
    pub country: String,
    pub tz: String,
    pub fallback_offset_minutes: i32,
    pub aliases: Vec<String>,
}

impl CityEntry {
    /// IANA rules when a zone id is configured, otherwise the fixed fallback.
    pub fn zone(&self) -> ZoneRule {
        match self.tz.parse::<Tz>() {
            Ok(tz) if !self.tz.is_empty() => ZoneRule::Iana(tz),
            _ => ZoneRule::Fixed(self.fallback_offset_minutes),
        }
    }
}

/// Immutable set of study cities with a global alias index.
#[derive(Clone, Debug, Default)]
pub struct CityRegistry {
    entries: Vec<CityEntry>,
    by_id: HashMap<String, usize>,
    by_alias: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct Row {
    city_id: String,
    display_name: String,
    country: String,
    tz: String,
    fallback_offset_minutes: i32,
    aliases: String,
}

impl CityRegistry {
    pub fn new(entries: Vec<CityEntry>) -> Result<Self> {
        let mut by_id = HashMap::new();
        let mut by_alias: HashMap<String, usize> = HashMap::new();
        let mut entries = entries;
        for (idx, entry) in entries.iter_mut().enumerate() {
            if entry.city_id.is_empty() {
                return Err(Error::Validation(format!("registry row {}: empty city_id", idx + 1)));
            }
            if !entry.tz.is_empty() && entry.tz.parse::<Tz>().is_err() {
                return Err(Error::Validation(format!(
                    "registry row {} ({}): unknown timezone {:?}",
                    idx + 1,
                    entry.city_id,
                    entry.tz
                )));
            }
            if let Some(prev) = by_id.insert(entry.city_id.clone(), idx) {
                return Err(Error::Validation(format!(
                    "registry rows {} and {}: duplicate city_id {:?}",
                    prev + 1,
                    idx + 1,
                    entry.city_id
                )));
            }
            let mut aliases: Vec<String> = entry
                .aliases
                .iter()
                .map(|a| normalize_location(a))
                .filter(|a| !a.is_empty())
                .collect();
            aliases.dedup();
            entry.aliases = aliases;
        }
        for (idx, entry) in entries.iter().enumerate() {
            for alias in &entry.aliases {
                if let Some(&other) = by_alias.get(alias) {
                    if other != idx {
                        return Err(Error::Validation(format!(
                            "alias {alias:?} is claimed by both {:?} and {:?}",
                            entries[other].city_id, entry.city_id
                        )));
                    }
                }
                by_alias.insert(alias.clone(), idx);
            }
        }
        Ok(Self {
            entries,
            by_id,
            by_alias,
        })
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::parse("registry", i + 2, e.to_string()))?;
            entries.push(CityEntry {
                city_id: row.city_id,
                display_name: row.display_name,
                country: row.country.to_ascii_uppercase(),
                tz: row.tz,
                fallback_offset_minutes: row.fallback_offset_minutes,
                aliases: row.aliases.split(';').map(str::to_string).collect(),
            });
        }
        Self::new(entries)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["city_id", "display_name", "country", "tz", "fallback_offset_minutes", "aliases"])
            .expect("in-memory write");
        for e in &self.entries {
            w.write_record([
                e.city_id.as_str(),
                e.display_name.as_str(),
                e.country.as_str(),
                e.tz.as_str(),
                &e.fallback_offset_minutes.to_string(),
                &e.aliases.join(";"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn entries(&self) -> &[CityEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, city_id: &str) -> Option<&CityEntry> {
        self.by_id.get(city_id).map(|&i| &self.entries[i])
    }

    pub fn index_of(&self, city_id: &str) -> Option<usize> {
        self.by_id.get(city_id).copied()
    }

    /// Looks up an already-normalized alias.
    pub fn lookup_alias(&self, normalized: &str) -> Option<&CityEntry> {
        self.by_alias.get(normalized).map(|&i| &self.entries[i])
    }

    pub fn alias_count(&self) -> usize {
        self.by_alias.len()
    }

    pub fn country_of(&self, city_id: &str) -> Option<&str> {
        self.get(city_id).map(|e| e.country.as_str())
    }
}

pub fn load_city_registry(path: impl AsRef<Path>) -> Result<CityRegistry> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    CityRegistry::from_csv_reader(file)
}
