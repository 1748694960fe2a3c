use std::fmt;

use chrono::{DateTime, Datelike, TimeZone, Timelike, Weekday};

/// Name of the predefined all-week period.
pub const PERIOD_24X7: &str = "24x7";

pub(crate) const WEEKDAYS: [&str; 7] = [
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];

/// Half-open `[start, end)` range in minutes since midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MinuteRange {
    pub start: u16,
    pub end: u16,
}

impl MinuteRange {
    pub fn new(start: u16, end: u16) -> Result<Self, String> {
        if start < end && end <= 1440 {
            Ok(MinuteRange { start, end })
        } else {
            Err(format!("invalid time range {start}..{end}"))
        }
    }

    pub fn contains(&self, minute: u16) -> bool {
        self.start <= minute && minute < self.end
    }
}

impl fmt::Display for MinuteRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02}:{:02}-{:02}:{:02}",
            self.start / 60,
            self.start % 60,
            self.end / 60,
            self.end % 60
        )
    }
}

/// Weekly schedule. `ranges[0]` is Monday, `ranges[6]` Sunday.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimePeriodDef {
    pub period_name: String,
    pub alias: String,
    pub ranges: [Vec<MinuteRange>; 7],
}

impl TimePeriodDef {
    pub fn all_week(name: &str) -> Self {
        let day = vec![MinuteRange {
            start: 0,
            end: 1440,
        }];
        TimePeriodDef {
            period_name: name.to_string(),
            alias: name.to_string(),
            ranges: std::array::from_fn(|_| day.clone()),
        }
    }

    pub fn day(&self, weekday: Weekday) -> &[MinuteRange] {
        &self.ranges[weekday.num_days_from_monday() as usize]
    }

    /// True iff the local weekday of `at` has a range containing its
    /// minute of day.
    pub fn contains<Tz: TimeZone>(&self, at: &DateTime<Tz>) -> bool {
        let minute = (at.hour() * 60 + at.minute()) as u16;
        self.day(at.weekday()).iter().any(|r| r.contains(minute))
    }

    /// Parses one weekday value such as `08:00-12:00,13:00-18:00`; the result
    /// is sorted and rejected if ranges overlap.
    pub fn parse_day(value: &str) -> Result<Vec<MinuteRange>, String> {
        let mut ranges = Vec::new();
        for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (a, b) = part
                .split_once('-')
                .ok_or_else(|| format!("time range '{part}' must look like HH:MM-HH:MM"))?;
            ranges.push(MinuteRange::new(parse_clock(a)?, parse_clock(b)?)?);
        }
        ranges.sort();
        for pair in ranges.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(format!("time ranges {} and {} overlap", pair[0], pair[1]));
            }
        }
        Ok(ranges)
    }
}

fn parse_clock(text: &str) -> Result<u16, String> {
    let text = text.trim();
    let bad = || format!("invalid clock time '{text}'");
    let (h, m) = text.split_once(':').ok_or_else(bad)?;
    let h: u16 = h.parse().map_err(|_| bad())?;
    let m: u16 = m.parse().map_err(|_| bad())?;
    if m >= 60 || h > 24 || (h == 24 && m != 0) {
        return Err(bad());
    }
    Ok(h * 60 + m)
}
