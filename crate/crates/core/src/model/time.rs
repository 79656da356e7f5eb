use std::fmt;

use chrono::NaiveDate;
use serde::{Serialize, Serializer};

/// How many components a FHIR date/dateTime/instant string carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Precision {
    Year,
    Month,
    Day,
    Second,
    Millisecond,
}

/// A FHIR temporal value kept verbatim, with an epoch projection when one
/// is meaningful.
///
/// Partial dates (`YYYY`, `YYYY-MM`) never get an epoch value. Full dates
/// map to midnight UTC. Timestamps without an offset are projected as if
/// they were UTC; [`TimePoint::has_offset`] tells callers when that happened.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TimePoint {
    iso_text: String,
    precision: Precision,
    epoch_millis_utc: Option<i64>,
    has_offset: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid FHIR date/time {text:?}: {reason}")]
pub struct InvalidTimePoint {
    pub text: String,
    pub reason: &'static str,
}

impl TimePoint {
    pub fn parse(text: &str) -> Result<Self, InvalidTimePoint> {
        let fail = |reason| InvalidTimePoint {
            text: text.to_owned(),
            reason,
        };
        let b = text.as_bytes();

        let year = digits(b, 0, 4).ok_or_else(|| fail("expected a four digit year"))?;
        if year == 0 {
            return Err(fail("year 0000 is not allowed"));
        }
        if b.len() == 4 {
            return Ok(Self::partial(text, Precision::Year));
        }
        expect(b, 4, b'-').ok_or_else(|| fail("expected '-' after year"))?;
        let month = digits(b, 5, 2).ok_or_else(|| fail("expected a two digit month"))?;
        if !(1..=12).contains(&month) {
            return Err(fail("month out of range"));
        }
        if b.len() == 7 {
            return Ok(Self::partial(text, Precision::Month));
        }
        expect(b, 7, b'-').ok_or_else(|| fail("expected '-' after month"))?;
        let day = digits(b, 8, 2).ok_or_else(|| fail("expected a two digit day"))?;
        let date = NaiveDate::from_ymd_opt(year as i32, month, day)
            .ok_or_else(|| fail("day out of range for month"))?;
        let day_millis = date
            .and_hms_opt(0, 0, 0)
            .expect("midnight is always valid")
            .and_utc()
            .timestamp_millis();
        if b.len() == 10 {
            return Ok(Self {
                iso_text: text.to_owned(),
                precision: Precision::Day,
                epoch_millis_utc: Some(day_millis),
                has_offset: false,
            });
        }

        expect(b, 10, b'T').ok_or_else(|| fail("expected 'T' before time"))?;
        let hour = digits(b, 11, 2).ok_or_else(|| fail("expected two digit hour"))?;
        expect(b, 13, b':').ok_or_else(|| fail("expected ':' after hour"))?;
        let minute = digits(b, 14, 2).ok_or_else(|| fail("expected two digit minute"))?;
        expect(b, 16, b':').ok_or_else(|| fail("expected ':' after minute"))?;
        let second = digits(b, 17, 2).ok_or_else(|| fail("expected two digit second"))?;
        if hour > 23 || minute > 59 || second > 60 {
            return Err(fail("time component out of range"));
        }

        let mut pos = 19;
        let mut precision = Precision::Second;
        let mut millis = 0u32;
        if b.get(pos) == Some(&b'.') {
            let start = pos + 1;
            let mut end = start;
            while end < b.len() && b[end].is_ascii_digit() {
                end += 1;
            }
            if end == start {
                return Err(fail("empty fractional seconds"));
            }
            // Only the first three fractional digits matter for ordering.
            let frac = &b[start..end];
            for i in 0..3 {
                millis = millis * 10 + frac.get(i).map_or(0, |d| u32::from(d - b'0'));
            }
            precision = Precision::Millisecond;
            pos = end;
        }

        let offset_minutes: Option<i64> = match b.get(pos) {
            None => None,
            Some(b'Z') if pos + 1 == b.len() => Some(0),
            Some(&sign @ (b'+' | b'-')) => {
                let oh = digits(b, pos + 1, 2).ok_or_else(|| fail("bad offset hours"))?;
                expect(b, pos + 3, b':').ok_or_else(|| fail("bad offset separator"))?;
                let om = digits(b, pos + 4, 2).ok_or_else(|| fail("bad offset minutes"))?;
                if pos + 6 != b.len() {
                    return Err(fail("trailing characters after offset"));
                }
                if oh > 14 || om > 59 || (oh == 14 && om != 0) {
                    return Err(fail("offset out of range"));
                }
                let total = i64::from(oh * 60 + om);
                Some(if sign == b'-' { -total } else { total })
            }
            Some(_) => return Err(fail("unexpected characters after time")),
        };

        let local = day_millis
            + i64::from(hour) * 3_600_000
            + i64::from(minute) * 60_000
            + i64::from(second) * 1_000
            + i64::from(millis);
        let epoch = local - offset_minutes.unwrap_or(0) * 60_000;
        Ok(Self {
            iso_text: text.to_owned(),
            precision,
            epoch_millis_utc: Some(epoch),
            has_offset: offset_minutes.is_some(),
        })
    }

    fn partial(text: &str, precision: Precision) -> Self {
        Self {
            iso_text: text.to_owned(),
            precision,
            epoch_millis_utc: None,
            has_offset: false,
        }
    }

    pub fn iso_text(&self) -> &str {
        &self.iso_text
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn epoch_millis_utc(&self) -> Option<i64> {
        self.epoch_millis_utc
    }

    /// True when the text carried `Z` or a numeric offset.
    pub fn has_offset(&self) -> bool {
        self.has_offset
    }

    /// True for timestamps (second precision or finer) without an offset.
    pub fn is_naive_timestamp(&self) -> bool {
        self.precision >= Precision::Second && !self.has_offset
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.iso_text)
    }
}

impl Serialize for TimePoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.iso_text)
    }
}

fn digits(b: &[u8], at: usize, n: usize) -> Option<u32> {
    let slice = b.get(at..at + n)?;
    slice.iter().try_fold(0u32, |acc, &d| {
        d.is_ascii_digit().then(|| acc * 10 + u32::from(d - b'0'))
    })
}

fn expect(b: &[u8], at: usize, ch: u8) -> Option<()> {
    (b.get(at) == Some(&ch)).then_some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_dates_keep_text_and_have_no_epoch() {
        let y = TimePoint::parse("1810").unwrap();
        assert_eq!(y.precision(), Precision::Year);
        assert_eq!(y.epoch_millis_utc(), None);
        let m = TimePoint::parse("1810-03").unwrap();
        assert_eq!(m.precision(), Precision::Month);
        assert_eq!(m.to_string(), "1810-03");
    }

    #[test]
    fn full_date_is_midnight_utc() {
        let d = TimePoint::parse("1970-01-02").unwrap();
        assert_eq!(d.precision(), Precision::Day);
        assert_eq!(d.epoch_millis_utc(), Some(86_400_000));
        let old = TimePoint::parse("1810-03-21").unwrap();
        assert_eq!(old.iso_text(), "1810-03-21");
        assert!(old.epoch_millis_utc().unwrap() < 0);
    }

    #[test]
    fn offsets_shift_epoch() {
        let z = TimePoint::parse("2024-01-09T10:00:00Z").unwrap();
        let plus = TimePoint::parse("2024-01-09T12:00:00+02:00").unwrap();
        assert_eq!(z.epoch_millis_utc(), plus.epoch_millis_utc());
        assert_eq!(z.epoch_millis_utc(), Some(1_704_794_400_000));
        assert!(z.has_offset());
    }

    #[test]
    fn fractional_seconds_truncate_to_millis() {
        let a = TimePoint::parse("1970-01-01T00:00:00.1234Z").unwrap();
        assert_eq!(a.precision(), Precision::Millisecond);
        assert_eq!(a.epoch_millis_utc(), Some(123));
        let b = TimePoint::parse("1970-01-01T00:00:00.5Z").unwrap();
        assert_eq!(b.epoch_millis_utc(), Some(500));
    }

    #[test]
    fn naive_timestamp_is_projected_as_utc() {
        let n = TimePoint::parse("1970-01-01T00:00:01").unwrap();
        assert_eq!(n.epoch_millis_utc(), Some(1000));
        assert!(n.is_naive_timestamp());
    }

    #[test]
    fn rejects_malformed_text() {
        for bad in [
            "", "99", "1810-3-21", "1810-13-01", "2023-02-29", "2024-01-09T10:00Z",
            "2024-01-09T25:00:00Z", "2024-01-09T10:00:00+15:00", "2024-01-09 10:00:00",
            "2024-01-09T10:00:00.Z", "0000", "2024-01-09T10:00:00Zjunk", "２０２４",
        ] {
            assert!(TimePoint::parse(bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn leap_day_accepted() {
        assert!(TimePoint::parse("2024-02-29").is_ok());
    }
}
