use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};

use super::{recurrence_interval, DeviationScore, Direction, RecurrenceInterval};
use crate::aggregate::BinKey;
use crate::error::{Error, Result};
use crate::geo::CityRegistry;
use crate::polarity::Polarity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventScope {
    CityDay,
    CountryHour,
    CountryDay,
    CountryMultiday,
}

impl EventScope {
    pub fn as_str(self) -> &'static str {
        match self {
            EventScope::CityDay => "city_day",
            EventScope::CountryHour => "country_hour",
            EventScope::CountryDay => "country_day",
            EventScope::CountryMultiday => "country_multiday",
        }
    }
}

impl fmt::Display for EventScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "city_day" => EventScope::CityDay,
            "country_hour" => EventScope::CountryHour,
            "country_day" => EventScope::CountryDay,
            "country_multiday" => EventScope::CountryMultiday,
            _ => return Err(Error::Validation(format!("unknown event scope {s:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergedEvent {
    /// 1-based position in the combined ranking of both polarities.
    pub rank: usize,
    pub scope: EventScope,
    /// City id for city-level scopes, otherwise the country code.
    pub id: String,
    pub country: String,
    pub polarity: Polarity,
    pub direction: Direction,
    /// Member scores sorted by (date, hour, city).
    pub members: Vec<DeviationScore>,
    /// The member carrying the largest statistic.
    pub peak: DeviationScore,
    pub max_statistic: f64,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub recurrence_interval: RecurrenceInterval,
}

impl MergedEvent {
    pub fn member_keys(&self) -> Vec<BinKey> {
        self.members.iter().map(DeviationScore::key).collect()
    }

    pub fn cities(&self) -> Vec<&str> {
        let mut c: Vec<&str> = self.members.iter().map(|m| m.city_id.as_str()).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn first_date(&self) -> NaiveDate {
        self.start.date()
    }

    pub fn last_date(&self) -> NaiveDate {
        self.end.date()
    }
}

/// Whether two scores in different cities of one country count as
/// simultaneous: same local date and same local wall-clock hour.
pub fn same_time(a: &DeviationScore, b: &DeviationScore) -> bool {
    a.local_date == b.local_date && a.hour == b.hour
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so the result does not depend on call order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn hour_start(s: &DeviationScore) -> NaiveDateTime {
    s.local_date.and_hms_opt(s.hour as u32, 0, 0).expect("hour < 24")
}

/// Groups significant scores into events and ranks them together.
///
/// Scores are first joined within a polarity and direction when they fall
/// on the same city-day or happen at the same time in two cities of one
/// country. Resulting groups in one country whose date ranges touch or
/// overlap are then joined into multi-day events. Callers pass only the
/// significant scores; anything ineligible is rejected.
pub fn merge_events(
    significant: &[DeviationScore],
    registry: &CityRegistry,
    observation_days: f64,
) -> Result<Vec<MergedEvent>> {
    let mut countries = Vec::with_capacity(significant.len());
    for s in significant {
        if !s.eligible {
            return Err(Error::Validation(format!(
                "ineligible score for {} {} {:02}h passed to merging",
                s.city_id, s.local_date, s.hour
            )));
        }
        let c = registry.country_of(&s.city_id).ok_or_else(|| {
            Error::Validation(format!("city {:?} is not in the registry", s.city_id))
        })?;
        countries.push(c);
    }

    let mut uf = UnionFind::new(significant.len());
    {
        let mut by_city_day: HashMap<(Polarity, Direction, &str, NaiveDate), usize> = HashMap::new();
        let mut by_country_hour: HashMap<(Polarity, Direction, &str, NaiveDate, u8), usize> =
            HashMap::new();
        for (i, s) in significant.iter().enumerate() {
            let a = *by_city_day
                .entry((s.polarity, s.direction, s.city_id.as_str(), s.local_date))
                .or_insert(i);
            uf.union(a, i);
            let b = *by_country_hour
                .entry((s.polarity, s.direction, countries[i], s.local_date, s.hour))
                .or_insert(i);
            debug_assert!(same_time(&significant[b], s));
            uf.union(b, i);
        }
    }

    // components with their date span
    let mut comps: HashMap<usize, (NaiveDate, NaiveDate)> = HashMap::new();
    for (i, s) in significant.iter().enumerate() {
        let r = uf.find(i);
        let d = s.local_date;
        let span = comps.entry(r).or_insert((d, d));
        span.0 = span.0.min(d);
        span.1 = span.1.max(d);
    }
    let mut order: Vec<(Polarity, Direction, &str, NaiveDate, NaiveDate, usize)> = comps
        .iter()
        .map(|(&r, &(lo, hi))| {
            let s = &significant[r];
            (s.polarity, s.direction, countries[r], lo, hi, r)
        })
        .collect();
    order.sort();
    let mut current: Option<(Polarity, Direction, &str, NaiveDate, usize)> = None;
    for &(p, d, c, lo, hi, r) in &order {
        match current {
            Some((cp, cd, cc, end, root))
                if (cp, cd, cc) == (p, d, c) && lo <= end + chrono::Days::new(1) =>
            {
                uf.union(root, r);
                current = Some((cp, cd, cc, end.max(hi), root));
            }
            _ => current = Some((p, d, c, hi, r)),
        }
    }

    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..significant.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut events: Vec<MergedEvent> = groups
        .into_values()
        .map(|idx| build_event(significant, &countries, idx))
        .collect();
    events.sort_by(|a, b| {
        b.max_statistic
            .total_cmp(&a.max_statistic)
            .then(a.start.cmp(&b.start))
            .then_with(|| a.id.cmp(&b.id))
            .then(a.polarity.cmp(&b.polarity))
            .then(a.direction.cmp(&b.direction))
    });
    for (i, e) in events.iter_mut().enumerate() {
        e.rank = i + 1;
        e.recurrence_interval = recurrence_interval(e.rank, observation_days)?;
    }
    Ok(events)
}

fn build_event(scores: &[DeviationScore], countries: &[&str], idx: Vec<usize>) -> MergedEvent {
    let mut members: Vec<DeviationScore> = idx.iter().map(|&i| scores[i].clone()).collect();
    members.sort_by(|a, b| {
        (a.local_date, a.hour, &a.city_id).cmp(&(b.local_date, b.hour, &b.city_id))
    });
    let country = countries[idx[0]].to_string();
    let peak = members
        .iter()
        .max_by(|a, b| {
            a.statistic
                .total_cmp(&b.statistic)
                // earliest member wins ties
                .then((b.local_date, b.hour, &b.city_id).cmp(&(a.local_date, a.hour, &a.city_id)))
        })
        .expect("non-empty group")
        .clone();
    let first = &members[0];
    let last = &members[members.len() - 1];
    let multi_day = first.local_date != last.local_date;
    let one_city = members.iter().all(|m| m.city_id == first.city_id);
    let one_hour = members.iter().all(|m| m.hour == first.hour);
    let scope = if multi_day {
        EventScope::CountryMultiday
    } else if one_city {
        EventScope::CityDay
    } else if one_hour {
        EventScope::CountryHour
    } else {
        EventScope::CountryDay
    };
    let id = if scope == EventScope::CityDay {
        first.city_id.clone()
    } else {
        country.clone()
    };
    MergedEvent {
        rank: 0,
        scope,
        id,
        country,
        polarity: first.polarity,
        direction: first.direction,
        max_statistic: peak.statistic,
        start: members.iter().map(hour_start).min().expect("non-empty"),
        end: members.iter().map(hour_start).max().expect("non-empty"),
        peak,
        members,
        recurrence_interval: RecurrenceInterval::AtLeast(0.0),
    }
}
