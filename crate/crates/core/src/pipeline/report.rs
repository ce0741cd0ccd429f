use crate::aggregate::CityHourBin;
use crate::deviation::{score_bin, DeviationScore, EventScope, MergedEvent, RankedDeviation};
use crate::error::{Error, Result};
use crate::geo::CityRegistry;
use crate::model::{FittedModel, ModelSummary};

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

fn put<I, S>(w: &mut csv::Writer<Vec<u8>>, row: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).expect("in-memory write");
}

/// `"49.6% (28.7%)"` from proportions.
pub fn render_percentages(observed: f64, expected: f64) -> String {
    format!("{:.1}% ({:.1}%)", observed * 100.0, expected * 100.0)
}

fn hour_span(h0: u8, h1: u8) -> String {
    format!("{h0:02}:00-{:02}:00", h1 + 1)
}

/// Human-readable time and place of an event.
pub fn render_when_where(e: &MergedEvent, registry: &CityRegistry) -> String {
    let cities = e.cities();
    let place = match cities.as_slice() {
        [one] => registry
            .get(one)
            .map(|c| c.display_name.clone())
            .unwrap_or_else(|| one.to_string()),
        _ => e.country.clone(),
    };
    let first = &e.members[0];
    let when = match e.scope {
        EventScope::CityDay => {
            let (lo, hi) = e
                .members
                .iter()
                .fold((23u8, 0u8), |(lo, hi), m| (lo.min(m.hour), hi.max(m.hour)));
            format!("{} {}", first.local_date, hour_span(lo, hi))
        }
        EventScope::CountryHour => format!("{} {}", first.local_date, hour_span(first.hour, first.hour)),
        EventScope::CountryDay => first.local_date.to_string(),
        EventScope::CountryMultiday => format!("{} to {}", e.first_date(), e.last_date()),
    };
    format!("{when} in {place}")
}

/// Observed and expected labeled proportions pooled over an event's bins.
pub fn event_proportions(e: &MergedEvent) -> (f64, f64) {
    let n: u64 = e.members.iter().map(|m| m.n_total).sum();
    if n == 0 {
        return (0.0, 0.0);
    }
    let o: u64 = e.members.iter().map(|m| m.observed).sum();
    let x: f64 = e.members.iter().map(|m| m.expected).sum();
    (o as f64 / n as f64, x / n as f64)
}

/// Ranked event table: rank, when and where, observed (expected) share,
/// recurrence interval and a free label column.
pub fn event_report_csv(events: &[MergedEvent], registry: &CityRegistry, labels: &dyn Fn(&MergedEvent) -> String) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    put(
        &mut w,
        ["rank", "time_and_location", "polarity", "direction", "observed_pct_expected_pct", "recurrence_interval", "label"],
    );
    for e in events {
        let (o, x) = event_proportions(e);
        put(
            &mut w,
            [
                e.rank.to_string(),
                render_when_where(e, registry),
                e.polarity.to_string(),
                e.direction.to_string(),
                render_percentages(o, x),
                e.recurrence_interval.to_string(),
                labels(e),
            ],
        );
    }
    finish(w)
}

/// Ranked per-bin deviations of one polarity.
pub fn ranked_csv(ranked: &[RankedDeviation], alpha: f64) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    put(
        &mut w,
        ["rank", "city_id", "local_date", "hour", "polarity", "direction", "observed", "expected", "statistic", "p_value", "significant"],
    );
    for r in ranked {
        let s = &r.score;
        put(
            &mut w,
            [
                r.rank.to_string(),
                s.city_id.clone(),
                s.local_date.to_string(),
                s.hour.to_string(),
                s.polarity.to_string(),
                s.direction.to_string(),
                s.observed.to_string(),
                s.expected.to_string(),
                s.statistic.to_string(),
                s.p_value.to_string(),
                s.is_significant(alpha).to_string(),
            ],
        );
    }
    finish(w)
}

/// Expected and observed counts per hour for one city.
pub fn timeline_csv(city_id: &str, bins: &[CityHourBin], pos: &FittedModel, neg: &FittedModel) -> Result<String> {
    let rows: Vec<&CityHourBin> = bins.iter().filter(|b| b.city_id == city_id).collect();
    if rows.is_empty() {
        return Err(Error::Validation(format!("no test bins for city {city_id:?}")));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    put(
        &mut w,
        [
            "city_id", "local_date", "hour", "n_total", "expected_pos", "observed_pos", "statistic_pos",
            "direction_pos", "expected_neg", "observed_neg", "statistic_neg", "direction_neg",
        ],
    );
    for b in rows {
        let sp = score_bin(b, pos);
        let sn = score_bin(b, neg);
        let cols = |s: &DeviationScore| {
            [
                format!("{:.4}", s.expected),
                s.observed.to_string(),
                format!("{:.6}", s.statistic),
                s.direction.to_string(),
            ]
        };
        let mut row = vec![b.city_id.clone(), b.local_date.to_string(), b.hour.to_string(), b.n_total.to_string()];
        row.extend(cols(&sp));
        row.extend(cols(&sn));
        put(&mut w, row);
    }
    Ok(finish(w))
}

/// Model comparison table. Rows that failed to fit carry the reason.
pub fn comparison_csv(rows: &[(String, std::result::Result<ModelSummary, String>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    put(
        &mut w,
        ["model", "outcome", "coefficients", "r_squared_pct", "test_r", "n_test", "note"],
    );
    for (name, row) in rows {
        match row {
            Ok(s) => {
                let (r, n) = match &s.test {
                    Some(c) => (format!("{:.3} ({:.3}-{:.3})", c.r, c.ci_low, c.ci_high), c.n.to_string()),
                    None => (String::new(), String::new()),
                };
                put(
                    &mut w,
                    [
                        name.clone(),
                        s.outcome.to_string(),
                        format!("{} ({})", s.n_coefficients, s.n_significant),
                        format!("{:.3}", s.r_squared * 100.0),
                        r,
                        n,
                        String::new(),
                    ],
                );
            }
            Err(msg) => put(&mut w, [name.as_str(), "", "", "", "", "", msg.as_str()]),
        }
    }
    finish(w)
}
