use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherCategory {
    Clear,
    Clouds,
    Fog,
    Haze,
    Rain,
    Snow,
    Storm,
}

impl WeatherCategory {
    pub const ALL: [WeatherCategory; 7] = [
        WeatherCategory::Clear,
        WeatherCategory::Clouds,
        WeatherCategory::Fog,
        WeatherCategory::Haze,
        WeatherCategory::Rain,
        WeatherCategory::Snow,
        WeatherCategory::Storm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeatherCategory::Clear => "clear",
            WeatherCategory::Clouds => "clouds",
            WeatherCategory::Fog => "fog",
            WeatherCategory::Haze => "haze",
            WeatherCategory::Rain => "rain",
            WeatherCategory::Snow => "snow",
            WeatherCategory::Storm => "storm",
        }
    }
}

impl fmt::Display for WeatherCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeatherCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeatherCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown weather category {s:?}")))
    }
}

/// Provider description → category table, `description,category` per row.
pub const DEFAULT_WEATHER_MAP: &str = include_str!("../../data/weather_map.csv");

fn weather_map() -> &'static HashMap<String, WeatherCategory> {
    static MAP: std::sync::OnceLock<HashMap<String, WeatherCategory>> = std::sync::OnceLock::new();
    MAP.get_or_init(|| {
        DEFAULT_WEATHER_MAP
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let (desc, cat) = l.rsplit_once(',').expect("weather map row has two fields");
                (desc.trim().to_lowercase(), cat.parse().expect("weather map category"))
            })
            .collect()
    })
}

/// Maps a provider description ("light rain", "scattered clouds") to one of
/// the seven categories. Unlisted descriptions fall back to their first word
/// when that word is itself a listed condition group.
pub fn map_weather_condition(raw_description: &str) -> Result<WeatherCategory> {
    let desc = raw_description
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    let map = weather_map();
    if let Some(&c) = map.get(&desc) {
        return Ok(c);
    }
    desc.split(' ')
        .next()
        .and_then(|first| map.get(first))
        .copied()
        .ok_or_else(|| {
            Error::Validation(format!(
                "unmappable weather description {raw_description:?}; extend the weather map"
            ))
        })
}

/// Hourly weather keyed by (city, local date, local hour).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeatherTable {
    by_city: HashMap<String, HashMap<(NaiveDate, u8), WeatherCategory>>,
}

impl WeatherTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        city_id: &str,
        date: NaiveDate,
        hour: u8,
        category: WeatherCategory,
    ) -> Result<()> {
        let slot = self.by_city.entry(city_id.to_string()).or_default();
        if slot.insert((date, hour), category).is_some() {
            return Err(Error::Validation(format!(
                "duplicate weather row for {city_id} {date} hour {hour}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, city_id: &str, date: NaiveDate, hour: u8) -> Option<WeatherCategory> {
        self.by_city.get(city_id)?.get(&(date, hour)).copied()
    }

    pub fn len(&self) -> usize {
        self.by_city.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            city_id: String,
            local_date: NaiveDate,
            hour: u8,
            category: String,
        }
        let mut table = WeatherTable::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::parse("weather", line, e.to_string()))?;
            if row.hour > 23 {
                return Err(Error::parse("weather", line, format!("hour {} out of range", row.hour)));
            }
            let cat: WeatherCategory = row
                .category
                .parse()
                .map_err(|e: Error| Error::parse("weather", line, e.to_string()))?;
            table
                .insert(&row.city_id, row.local_date, row.hour, cat)
                .map_err(|e| Error::parse("weather", line, e.to_string()))?;
        }
        Ok(table)
    }

    /// CSV sorted by key, header `city_id,local_date,hour,category`.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(&str, NaiveDate, u8, WeatherCategory)> = self
            .by_city
            .iter()
            .flat_map(|(c, m)| m.iter().map(move |(&(d, h), &w)| (c.as_str(), d, h, w)))
            .collect();
        rows.sort();
        let mut out = String::from("city_id,local_date,hour,category\n");
        for (c, d, h, w) in rows {
            out.push_str(&format!("{c},{d},{h},{w}\n"));
        }
        out
    }
}

pub fn load_weather_table(path: impl AsRef<Path>) -> Result<WeatherTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    WeatherTable::from_csv_reader(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_rows() {
        let t = WeatherTable::from_csv_reader("city_id,local_date,hour,category\nnyc,2017-10-01,10,rain\n".as_bytes())
            .unwrap();
        let d = NaiveDate::from_ymd_opt(2017, 10, 1).unwrap();
        assert_eq!(t.get("nyc", d, 10), Some(WeatherCategory::Rain));
        assert_eq!(t.get("nyc", d, 11), None);
    }

    #[test]
    fn rejects_unknown_category_and_duplicates() {
        let err = WeatherTable::from_csv_reader(
            "city_id,local_date,hour,category\nnyc,2017-10-01,10,drizzle\n".as_bytes(),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("line 2") && err.contains("drizzle"), "{err}");
        assert!(WeatherTable::from_csv_reader(
            "city_id,local_date,hour,category\nnyc,2017-10-01,10,rain\nnyc,2017-10-01,10,snow\n".as_bytes()
        )
        .is_err());
    }

    #[test]
    fn description_mapping() {
        assert_eq!(map_weather_condition("light rain").unwrap(), WeatherCategory::Rain);
        assert_eq!(map_weather_condition("clear sky").unwrap(), WeatherCategory::Clear);
        assert_eq!(map_weather_condition("Scattered  Clouds").unwrap(), WeatherCategory::Clouds);
        // first-word fallback onto a listed group
        assert_eq!(map_weather_condition("rain and hail").unwrap(), WeatherCategory::Rain);
        assert!(map_weather_condition("volcanic ash").is_err());
    }

    #[test]
    fn shipped_map_covers_every_category() {
        let cats: std::collections::HashSet<_> = weather_map().values().copied().collect();
        assert_eq!(cats.len(), 7);
    }
}
