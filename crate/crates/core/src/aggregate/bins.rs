use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::weather::{WeatherCategory, WeatherTable};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::geo::LocalTime;
use crate::ingest::InteractionType;
use crate::sentiment::PolarityLabels;

/// Aggregation key: city and local clock hour.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinKey {
    pub city_id: String,
    pub date: NaiveDate,
    pub hour: u8,
}

/// Un-normalized counts for one key. Merging is fieldwise addition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialBin {
    pub key: BinKey,
    pub day_of_week: u8,
    pub n_total: u64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub n_social: u64,
}

impl PartialBin {
    pub fn empty(key: BinKey, day_of_week: u8) -> Self {
        Self {
            key,
            day_of_week,
            n_total: 0,
            n_pos: 0,
            n_neg: 0,
            n_social: 0,
        }
    }

    fn absorb(&mut self, other: &PartialBin) {
        self.n_total += other.n_total;
        self.n_pos += other.n_pos;
        self.n_neg += other.n_neg;
        self.n_social += other.n_social;
    }
}

pub fn merge_partial_bins(a: &PartialBin, b: &PartialBin) -> Result<PartialBin> {
    if a.key != b.key {
        return Err(Error::Validation(format!(
            "cannot merge bins with different keys ({:?} vs {:?})",
            a.key, b.key
        )));
    }
    let mut out = a.clone();
    out.absorb(b);
    Ok(out)
}

/// One fully resolved and scored record, ready for binning.
#[derive(Clone, Debug)]
pub struct BinInput {
    pub city_id: String,
    pub local: LocalTime,
    pub interaction: InteractionType,
    pub labels: PolarityLabels,
}

/// Counts records per (city, local date, hour). Output is sorted by key.
pub fn bin_stream(exec: Exec, records: &[BinInput]) -> Vec<PartialBin> {
    let shards = exec::map_chunks(exec, records, 16_384, |chunk| {
        let mut map: HashMap<BinKey, PartialBin> = HashMap::new();
        for r in chunk {
            let key = BinKey {
                city_id: r.city_id.clone(),
                date: r.local.date,
                hour: r.local.hour,
            };
            let bin = map
                .entry(key)
                .or_insert_with_key(|k| PartialBin::empty(k.clone(), r.local.day_of_week));
            bin.n_total += 1;
            bin.n_pos += r.labels.is_positive as u64;
            bin.n_neg += r.labels.is_negative as u64;
            bin.n_social += (r.interaction == InteractionType::Social) as u64;
        }
        map
    });
    let mut merged: BTreeMap<BinKey, PartialBin> = BTreeMap::new();
    for shard in shards {
        for (key, bin) in shard {
            match merged.get_mut(&key) {
                Some(acc) => acc.absorb(&bin),
                None => {
                    merged.insert(key, bin);
                }
            }
        }
    }
    merged.into_values().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CityHourBin {
    pub city_id: String,
    pub local_date: NaiveDate,
    pub hour: u8,
    pub day_of_week: u8,
    pub n_total: u64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub n_social: u64,
    pub weather: Option<WeatherCategory>,
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_social: f64,
}

impl CityHourBin {
    pub fn key(&self) -> BinKey {
        BinKey {
            city_id: self.city_id.clone(),
            date: self.local_date,
            hour: self.hour,
        }
    }

    /// Builds a finalized bin from counts. `n_total` must be positive.
    pub fn from_counts(
        key: BinKey,
        day_of_week: u8,
        counts: (u64, u64, u64, u64),
        weather: Option<WeatherCategory>,
    ) -> Self {
        let (n_total, n_pos, n_neg, n_social) = counts;
        let n = n_total as f64;
        Self {
            city_id: key.city_id,
            local_date: key.date,
            hour: key.hour,
            day_of_week,
            n_total,
            n_pos,
            n_neg,
            n_social,
            weather,
            p_pos: n_pos as f64 / n,
            p_neg: n_neg as f64 / n,
            p_social: n_social as f64 / n,
        }
    }
}

/// Computes proportions, joins weather on the bin's own key and sorts.
/// Empty bins are dropped.
pub fn finalize_bins(partials: Vec<PartialBin>, weather: &WeatherTable) -> Vec<CityHourBin> {
    let mut out: Vec<CityHourBin> = partials
        .into_iter()
        .filter(|p| p.n_total > 0)
        .map(|p| {
            let w = weather.get(&p.key.city_id, p.key.date, p.key.hour);
            CityHourBin::from_counts(p.key, p.day_of_week, (p.n_total, p.n_pos, p.n_neg, p.n_social), w)
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.city_id, a.local_date, a.hour).cmp(&(&b.city_id, b.local_date, b.hour))
    });
    out
}

const BIN_HEADER: [&str; 12] = [
    "city_id", "local_date", "hour", "day_of_week", "n_total", "n_pos", "n_neg", "n_social",
    "weather", "p_pos", "p_neg", "p_social",
];

/// Bin export; missing weather is an empty field.
pub fn bins_to_csv(bins: &[CityHourBin]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BIN_HEADER).expect("in-memory write");
    for b in bins {
        w.write_record([
            b.city_id.clone(),
            b.local_date.to_string(),
            b.hour.to_string(),
            b.day_of_week.to_string(),
            b.n_total.to_string(),
            b.n_pos.to_string(),
            b.n_neg.to_string(),
            b.n_social.to_string(),
            b.weather.map(|w| w.to_string()).unwrap_or_default(),
            b.p_pos.to_string(),
            b.p_neg.to_string(),
            b.p_social.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn bins_from_csv<R: Read>(reader: R) -> Result<Vec<CityHourBin>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse("bins", 1, e.to_string()))?
        .clone();
    if headers.iter().ne(BIN_HEADER) {
        return Err(Error::parse("bins", 1, "unexpected header"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse("bins", line, e.to_string()))?;
        let field = |j: usize| &rec[j];
        let num = |j: usize| -> Result<u64> {
            field(j)
                .parse()
                .map_err(|_| Error::parse("bins", line, format!("{} is not a count", BIN_HEADER[j])))
        };
        let date: NaiveDate = field(1)
            .parse()
            .map_err(|_| Error::parse("bins", line, "bad local_date"))?;
        let weather = match field(8) {
            "" => None,
            w => Some(w.parse().map_err(|e: Error| Error::parse("bins", line, e.to_string()))?),
        };
        let n_total = num(4)?;
        if n_total == 0 {
            return Err(Error::parse("bins", line, "empty bin"));
        }
        let key = BinKey {
            city_id: field(0).to_string(),
            date,
            hour: num(2)? as u8,
        };
        out.push(CityHourBin::from_counts(
            key,
            num(3)? as u8,
            (n_total, num(5)?, num(6)?, num(7)?),
            weather,
        ));
    }
    Ok(out)
}
