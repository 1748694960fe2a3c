use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, Offset, TimeZone};
use chrono_tz::{OffsetName, Tz};

use crate::Timestamp;

/// Timezone used for time periods and notification dates.
///
/// Either an IANA zone (`Europe/Berlin`, `UTC`) or a fixed offset with its
/// own abbreviation (`MET=+01:00`) for zones the tz database no longer
/// spells the way operators expect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Zone {
    Named(Tz),
    Fixed { abbreviation: String, offset: FixedOffset },
}

impl Zone {
    pub const UTC: Zone = Zone::Named(Tz::UTC);

    pub fn local(&self, at: Timestamp) -> DateTime<FixedOffset> {
        match self {
            Zone::Named(tz) => at.with_timezone(tz).fixed_offset(),
            Zone::Fixed { offset, .. } => at.with_timezone(offset),
        }
    }

    pub fn abbreviation(&self, at: Timestamp) -> String {
        match self {
            Zone::Named(tz) => {
                let offset = tz.offset_from_utc_datetime(&at.naive_utc());
                offset
                    .abbreviation()
                    .map(str::to_string)
                    .unwrap_or_else(|| offset.fix().to_string())
            }
            Zone::Fixed { abbreviation, .. } => abbreviation.clone(),
        }
    }

    /// Formats `at` in this zone; `%Z` yields the zone abbreviation.
    pub fn format(&self, at: Timestamp, pattern: &str) -> String {
        let pattern = pattern.replace("%Z", &self.abbreviation(at).replace('%', "%%"));
        self.local(at).format(&pattern).to_string()
    }
}

impl Default for Zone {
    fn default() -> Self {
        Zone::UTC
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Zone::Named(tz) => f.write_str(tz.name()),
            Zone::Fixed { abbreviation, offset } => write!(f, "{abbreviation}={offset}"),
        }
    }
}

impl From<Tz> for Zone {
    fn from(tz: Tz) -> Self {
        Zone::Named(tz)
    }
}

impl FromStr for Zone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((abbr, off)) = s.split_once('=') {
            let offset: FixedOffset = off
                .trim()
                .parse()
                .map_err(|_| format!("invalid offset '{off}' in zone '{s}'"))?;
            if abbr.trim().is_empty() {
                return Err(format!("zone '{s}' has an empty abbreviation"));
            }
            return Ok(Zone::Fixed {
                abbreviation: abbr.trim().to_string(),
                offset,
            });
        }
        s.parse::<Tz>()
            .map(Zone::Named)
            .map_err(|_| format!("unknown timezone '{s}'"))
    }
}
