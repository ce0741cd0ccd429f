use std::collections::BTreeMap;

use super::InjectedEvent;
use crate::deviation::{Direction, MergedEvent};
use crate::geo::CityRegistry;
use crate::polarity::Polarity;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRow {
    pub label: String,
    pub city_id: String,
    pub polarity: Polarity,
    pub delta: f64,
    /// Best rank among merged events overlapping the injection.
    pub rank: Option<usize>,
    pub in_top_k: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionReport {
    pub k: usize,
    pub rows: Vec<DetectionRow>,
    /// Unmatched events ranked at or above the worst matched injection
    /// (or above K when an injection was missed).
    pub false_alarms: usize,
}

impl DetectionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,city_id,polarity,delta,rank,in_top_k\n");
        for r in &self.rows {
            let rank = r.rank.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.label, r.city_id, r.polarity, r.delta, rank, r.in_top_k
            ));
        }
        out.push_str(&format!("# false_alarms,{}\n", self.false_alarms));
        out
    }
}

fn matches(injected: &InjectedEvent, e: &MergedEvent) -> bool {
    let dir = if injected.delta > 0.0 {
        Direction::Surplus
    } else {
        Direction::Deficit
    };
    e.polarity == injected.polarity
        && e.direction == dir
        && e.members
            .iter()
            .any(|m| m.city_id == injected.city_id && injected.covers(m.local_date, m.hour))
}

/// Where each injected event landed in the merged ranking.
pub fn evaluate_detection(injected: &[InjectedEvent], events: &[MergedEvent], k: usize) -> DetectionReport {
    let rows: Vec<DetectionRow> = injected
        .iter()
        .map(|inj| {
            let rank = events.iter().filter(|e| matches(inj, e)).map(|e| e.rank).min();
            DetectionRow {
                label: inj.label.clone(),
                city_id: inj.city_id.clone(),
                polarity: inj.polarity,
                delta: inj.delta,
                rank,
                in_top_k: rank.is_some_and(|r| r <= k),
            }
        })
        .collect();
    let worst = if rows.iter().all(|r| r.in_top_k) {
        rows.iter().filter_map(|r| r.rank).max().unwrap_or(0)
    } else {
        k
    };
    let false_alarms = events
        .iter()
        .filter(|e| e.rank <= worst && !injected.iter().any(|inj| matches(inj, e)))
        .count();
    DetectionReport {
        k,
        rows,
        false_alarms,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasRow {
    pub country: String,
    pub n_cities: usize,
    pub city_share: f64,
    /// Per model: (positive-surplus count, negative-surplus count) in the top K.
    pub counts: Vec<(usize, usize)>,
    /// Per model: the same counts as shares of the events considered.
    pub shares: Vec<(f64, f64)>,
    /// Some model's share differs from the first model's by more than the margin.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasReport {
    pub k: usize,
    pub models: Vec<String>,
    pub rows: Vec<BiasRow>,
}

impl BiasReport {
    pub fn row(&self, country: &str) -> Option<&BiasRow> {
        self.rows.iter().find(|r| r.country == country)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "country,n_cities,city_share,model,positive_surplus_top_k,positive_share,negative_surplus_top_k,negative_share,flagged\n",
        );
        for r in &self.rows {
            for (i, m) in self.models.iter().enumerate() {
                let (pc, nc) = r.counts[i];
                let (ps, ns) = r.shares[i];
                out.push_str(&format!(
                    "{},{},{:.4},{},{},{:.4},{},{:.4},{}\n",
                    r.country, r.n_cities, r.city_share, m, pc, ps, nc, ns, r.flagged
                ));
            }
        }
        out
    }
}

fn top_k_by_country(events: &[MergedEvent], polarity: Polarity, k: usize) -> (BTreeMap<String, usize>, usize) {
    let mut picked: Vec<&MergedEvent> = events
        .iter()
        .filter(|e| e.polarity == polarity && e.direction == Direction::Surplus)
        .collect();
    picked.sort_by_key(|e| e.rank);
    picked.truncate(k);
    let mut counts = BTreeMap::new();
    for e in &picked {
        *counts.entry(e.country.clone()).or_insert(0) += 1;
    }
    (counts, picked.len())
}

/// Per-country share of the top-K surplus events under each model.
///
/// The first model is the reference for flagging.
pub fn bias_report(models: &[(&str, &[MergedEvent])], registry: &CityRegistry, k: usize, margin: f64) -> BiasReport {
    let mut n_cities: BTreeMap<String, usize> = BTreeMap::new();
    for e in registry.entries() {
        *n_cities.entry(e.country.clone()).or_insert(0) += 1;
    }
    let tallies: Vec<_> = models
        .iter()
        .map(|(_, ev)| (top_k_by_country(ev, Polarity::Positive, k), top_k_by_country(ev, Polarity::Negative, k)))
        .collect();
    let share = |c: usize, total: usize| if total == 0 { 0.0 } else { c as f64 / total as f64 };
    let rows = n_cities
        .iter()
        .map(|(country, &n)| {
            let mut counts = Vec::new();
            let mut shares = Vec::new();
            for ((pos, pos_total), (neg, neg_total)) in &tallies {
                let pc = pos.get(country).copied().unwrap_or(0);
                let nc = neg.get(country).copied().unwrap_or(0);
                counts.push((pc, nc));
                shares.push((share(pc, *pos_total), share(nc, *neg_total)));
            }
            let flagged = shares.iter().skip(1).any(|(p, q)| {
                (p - shares[0].0).abs() > margin || (q - shares[0].1).abs() > margin
            });
            BiasRow {
                country: country.clone(),
                n_cities: n,
                city_share: n as f64 / registry.len() as f64,
                counts,
                shares,
                flagged,
            }
        })
        .collect();
    BiasReport {
        k,
        models: models.iter().map(|(m, _)| m.to_string()).collect(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deviation::{merge_events, DeviationScore};
    use crate::synth::synthetic_registry;
    use chrono::NaiveDate;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 10, d).unwrap()
    }

    fn score(city: &str, d: u32, hour: u8, stat: f64, pol: Polarity) -> DeviationScore {
        DeviationScore {
            city_id: city.into(),
            local_date: day(d),
            hour,
            polarity: pol,
            n_total: 100,
            observed: 60,
            expected: 40.0,
            statistic: stat,
            p_value: crate::stats::chi_square_sf(stat, 1.0),
            direction: Direction::Surplus,
            eligible: true,
        }
    }

    #[test]
    fn detection_ranks_and_false_alarms() {
        let reg = synthetic_registry(&[("US", 2), ("GB", 2)]).unwrap();
        let scores = [
            score("gb_00", 3, 5, 40.0, Polarity::Negative),
            score("us_00", 7, 12, 30.0, Polarity::Negative),
            score("us_01", 9, 1, 20.0, Polarity::Positive),
            score("gb_01", 9, 8, 10.0, Polarity::Negative),
        ];
        let events = merge_events(&scores, &reg, 30.0).unwrap();
        let injected = [
            InjectedEvent::city_day("us_00", day(7), Polarity::Negative, 0.3, "a"),
            InjectedEvent::city_day("us_01", day(9), Polarity::Positive, 0.15, "b"),
            InjectedEvent::city_day("gb_01", day(9), Polarity::Positive, 0.15, "missed"),
        ];
        let rep = evaluate_detection(&injected[..2], &events, 20);
        assert_eq!(rep.rows[0].rank, Some(2));
        assert_eq!(rep.rows[1].rank, Some(3));
        assert_eq!(rep.false_alarms, 1);
        let rep = evaluate_detection(&injected, &events, 3);
        assert_eq!(rep.rows[2].rank, None);
        assert!(!rep.rows[2].in_top_k);
        assert_eq!(rep.false_alarms, 1);
        assert!(rep.to_csv().contains("missed,gb_01,positive,0.15,,false\n"));
    }

    #[test]
    fn shares_per_country() {
        let reg = synthetic_registry(&[("US", 1), ("GB", 3)]).unwrap();
        let skewed: Vec<DeviationScore> = (1..=4).map(|d| score("us_00", d * 2, 3, 10.0 + d as f64, Polarity::Negative)).collect();
        let spread: Vec<DeviationScore> = ["us_00", "gb_00", "gb_01", "gb_02"]
            .iter()
            .enumerate()
            .map(|(i, c)| score(c, 2 + 2 * i as u32, 3, 10.0 + i as f64, Polarity::Negative))
            .collect();
        let a = merge_events(&spread, &reg, 30.0).unwrap();
        let b = merge_events(&skewed, &reg, 30.0).unwrap();
        let rep = bias_report(&[("full", &a), ("no_city", &b)], &reg, 20, 0.2);
        let us = rep.row("US").unwrap();
        assert_eq!(us.city_share, 0.25);
        assert_eq!(us.counts, vec![(0, 1), (0, 4)]);
        assert_eq!(us.shares[1].1, 1.0);
        assert!(us.flagged);
        assert!(rep.to_csv().lines().count() == 5);
    }
}
