//! Chart-ready numeric time series built from the Observation table.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use crate::model::{Decimal, TimePoint, TypedValue};
use crate::normalize::{Dataset, ObservationRow};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SeriesKey {
    pub subject_ref: String,
    pub code_system: String,
    pub code: String,
    pub component_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub time: TimePoint,
    pub epoch_millis: i64,
    pub value: Decimal,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub unit: String,
    /// Strictly increasing by `epoch_millis`.
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum SeriesWarning {
    UnitMismatch {
        key: SeriesKey,
        resource_id: String,
        expected: String,
        found: String,
    },
    /// The timestamp had no offset and was ordered as UTC.
    NaiveTimestamp { resource_id: String, time: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesSet {
    pub series: BTreeMap<SeriesKey, Series>,
    pub warnings: Vec<SeriesWarning>,
}

impl SeriesSet {
    pub fn label(&self, key: &SeriesKey) -> Option<&str> {
        self.series.get(key).map(|s| s.label.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.series.values().map(|s| s.points.len()).sum()
    }

    /// Wire shape consumed by the browser UI. Values keep their decimal text.
    pub fn to_json(&self) -> Value {
        let series: Vec<Value> = self
            .series
            .iter()
            .map(|(key, s)| {
                let points: Vec<Value> = s
                    .points
                    .iter()
                    .map(|p| json!([p.epoch_millis, p.value]))
                    .collect();
                json!({ "key": key, "label": s.label, "unit": s.unit, "points": points })
            })
            .collect();
        json!({ "series": series })
    }
}

struct Candidate<'a> {
    row: &'a ObservationRow,
    time: &'a TimePoint,
    epoch: i64,
    value: &'a Decimal,
    unit: &'a str,
}

/// Groups numeric observations by subject, code and component.
///
/// Only rows with a Quantity value and an effective time that has an epoch
/// projection take part. Within a series, points sharing a timestamp keep
/// the one latest in table order. The unit of the earliest point is the
/// series unit; points in any other unit are dropped with a warning.
pub fn extract_series(dataset: &Dataset) -> SeriesSet {
    extract_from_rows(&dataset.tables.observations)
}

pub fn extract_from_rows(rows: &[ObservationRow]) -> SeriesSet {
    let mut grouped: BTreeMap<SeriesKey, Vec<Candidate<'_>>> = BTreeMap::new();
    let mut warnings = Vec::new();

    for row in rows {
        let Some(TypedValue::Quantity(q)) = &row.value else { continue };
        let Some(time) = &row.effective else { continue };
        let Some(epoch) = time.epoch_millis_utc() else { continue };
        if time.is_naive_timestamp() {
            warnings.push(SeriesWarning::NaiveTimestamp {
                resource_id: row.resource_id.clone(),
                time: time.iso_text().to_owned(),
            });
        }
        let key = SeriesKey {
            subject_ref: row.subject_ref.clone(),
            code_system: row.code_system.clone(),
            code: row.code.clone(),
            component_code: row.component_code.clone(),
        };
        grouped.entry(key).or_default().push(Candidate {
            row,
            time,
            epoch,
            value: &q.value,
            unit: &row.unit,
        });
    }

    let mut series = BTreeMap::new();
    for (key, mut candidates) in grouped {
        // Stable: equal timestamps stay in table order, so the last one wins.
        candidates.sort_by_key(|c| c.epoch);
        let mut deduped: Vec<Candidate<'_>> = Vec::with_capacity(candidates.len());
        for c in candidates {
            match deduped.last_mut() {
                Some(last) if last.epoch == c.epoch => *last = c,
                _ => deduped.push(c),
            }
        }
        let unit = deduped[0].unit.to_owned();
        let label = label_for(deduped[0].row, &unit);
        let mut points = Vec::with_capacity(deduped.len());
        for c in deduped {
            if c.unit != unit {
                warnings.push(SeriesWarning::UnitMismatch {
                    key: key.clone(),
                    resource_id: c.row.resource_id.clone(),
                    expected: unit.clone(),
                    found: c.unit.to_owned(),
                });
                continue;
            }
            points.push(SeriesPoint {
                time: c.time.clone(),
                epoch_millis: c.epoch,
                value: c.value.clone(),
                unit: c.unit.to_owned(),
            });
        }
        series.insert(key, Series { label, unit, points });
    }
    SeriesSet { series, warnings }
}

fn label_for(row: &ObservationRow, unit: &str) -> String {
    let name = if row.display.is_empty() { row.code.as_str() } else { row.display.as_str() };
    let mut label = name.to_owned();
    if !row.subject_ref.is_empty() {
        label = format!("{label} - {}", row.subject_ref);
    }
    if !unit.is_empty() {
        label = format!("{label} [{unit}]");
    }
    label
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub count: usize,
    pub min: Decimal,
    pub max: Decimal,
    pub mean: f64,
    pub first_t: TimePoint,
    pub last_t: TimePoint,
}

impl SeriesSummary {
    /// Mean rounded to four significant digits.
    pub fn mean_display(&self) -> String {
        significant(self.mean, 4)
    }
}

pub fn summarize(set: &SeriesSet) -> BTreeMap<SeriesKey, SeriesSummary> {
    set.series
        .iter()
        .filter_map(|(key, s)| {
            let first = s.points.first()?;
            let last = s.points.last()?;
            let mut min = &first.value;
            let mut max = &first.value;
            let mut sum = 0.0;
            for p in &s.points {
                if p.value.value() < min.value() {
                    min = &p.value;
                }
                if p.value.value() > max.value() {
                    max = &p.value;
                }
                sum += p.value.value();
            }
            let mean = (sum / s.points.len() as f64).clamp(min.value(), max.value());
            Some((
                key.clone(),
                SeriesSummary {
                    count: s.points.len(),
                    min: min.clone(),
                    max: max.clone(),
                    mean,
                    first_t: first.time.clone(),
                    last_t: last.time.clone(),
                },
            ))
        })
        .collect()
}

/// Formats `x` with `digits` significant digits.
pub fn significant(x: f64, digits: i32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = digits - 1 - magnitude;
    if decimals >= 0 {
        let s = format!("{x:.*}", decimals as usize);
        // Rounding can carry into a new digit (9.9996 -> 10.000).
        let rounded: f64 = s.parse().unwrap_or(x);
        if rounded != 0.0 && (rounded.abs().log10().floor() as i32) > magnitude && decimals > 0 {
            return format!("{x:.*}", decimals as usize - 1);
        }
        s
    } else {
        let scale = 10f64.powi(-decimals);
        format!("{}", (x / scale).round() * scale)
    }
}
