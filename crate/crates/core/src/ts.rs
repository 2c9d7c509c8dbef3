//! Epiweek calendar and weekly hospitalization series.
//!
//! Weeks follow the MMWR convention: Sunday to Saturday, and week 1 of a
//! year is the first such week with at least four days in that year.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EpiWeek {
    year: i32,
    week: u32,
}

/// Sunday that starts MMWR week 1 of `year`: the Sunday on or before January 4.
fn year_start(year: i32) -> NaiveDate {
    let jan4 = NaiveDate::from_ymd_opt(year, 1, 4).expect("January 4 exists");
    let back = jan4.weekday().num_days_from_sunday() as i64;
    jan4 - Duration::days(back)
}

impl EpiWeek {
    pub fn new(year: i32, week: u32) -> Result<Self> {
        if week == 0 || week > Self::weeks_in_year(year) {
            return Err(Error::InvalidEpiWeek { year, week });
        }
        Ok(Self { year, week })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn week(&self) -> u32 {
        self.week
    }

    pub fn weeks_in_year(year: i32) -> u32 {
        ((year_start(year + 1) - year_start(year)).num_days() / 7) as u32
    }

    pub fn from_date(date: NaiveDate) -> Self {
        let year = date.year();
        let next = year_start(year + 1);
        if date >= next {
            return Self {
                year: year + 1,
                week: 1,
            };
        }
        let this = year_start(year);
        let (year, start) = if date >= this {
            (year, this)
        } else {
            (year - 1, year_start(year - 1))
        };
        let week = ((date - start).num_days() / 7) as u32 + 1;
        Self { year, week }
    }

    /// Sunday that opens the week.
    pub fn start_date(&self) -> NaiveDate {
        year_start(self.year) + Duration::weeks(self.week as i64 - 1)
    }

    /// Saturday that closes the week.
    pub fn end_date(&self) -> NaiveDate {
        let end = self.start_date() + Duration::days(6);
        debug_assert_eq!(end.weekday(), Weekday::Sat);
        end
    }

    pub fn add_weeks(&self, n: i64) -> Self {
        Self::from_date(self.start_date() + Duration::weeks(n))
    }

    /// Signed number of weeks from `self` to `other`.
    pub fn weeks_until(&self, other: EpiWeek) -> i64 {
        (other.start_date() - self.start_date()).num_days() / 7
    }
}

pub fn epiweek_from_date(date: NaiveDate) -> EpiWeek {
    EpiWeek::from_date(date)
}

impl fmt::Display for EpiWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:02}", self.year, self.week)
    }
}

impl TryFrom<String> for EpiWeek {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EpiWeek> for String {
    fn from(w: EpiWeek) -> Self {
        w.to_string()
    }
}

impl FromStr for EpiWeek {
    type Err = Error;

    /// Accepts `YYYYWW` or `YYYY-WW`.
    fn from_str(s: &str) -> Result<Self> {
        let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
        if digits.len() != 6 {
            return Err(Error::Validation(format!("cannot parse epiweek {s:?}")));
        }
        let year: i32 = digits[..4].parse().expect("digits");
        let week: u32 = digits[4..].parse().expect("digits");
        EpiWeek::new(year, week)
    }
}

/// Weekly incident hospitalizations for one location over consecutive weeks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HospSeries {
    location: String,
    start: EpiWeek,
    counts: Vec<u64>,
}

impl HospSeries {
    pub fn new(location: impl Into<String>, start: EpiWeek, counts: Vec<u64>) -> Self {
        Self {
            location: location.into(),
            start,
            counts,
        }
    }

    /// Builds a series from explicit points, which must be consecutive weeks.
    pub fn from_points(location: impl Into<String>, points: &[(EpiWeek, u64)]) -> Result<Self> {
        let (start, _) = *points.first().ok_or(Error::Empty("series points"))?;
        for (k, pair) in points.windows(2).enumerate() {
            let expected = pair[0].0.add_weeks(1);
            if pair[1].0 != expected {
                return Err(Error::NonConsecutive {
                    expected: expected.to_string(),
                    found: format!("{} at position {}", pair[1].0, k + 1),
                });
            }
        }
        Ok(Self::new(location, start, points.iter().map(|p| p.1).collect()))
    }

    pub fn location(&self) -> &str {
        &self.location
    }

    pub fn start(&self) -> EpiWeek {
        self.start
    }

    pub fn end(&self) -> EpiWeek {
        self.start.add_weeks(self.counts.len() as i64 - 1)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn week_at(&self, index: usize) -> EpiWeek {
        self.start.add_weeks(index as i64)
    }

    /// Position of `week` in the series, if covered.
    pub fn index_of(&self, week: EpiWeek) -> Option<usize> {
        let k = self.start.weeks_until(week);
        (k >= 0 && (k as usize) < self.counts.len()).then_some(k as usize)
    }

    pub fn points(&self) -> impl Iterator<Item = (EpiWeek, u64)> + '_ {
        self.counts.iter().enumerate().map(|(k, &c)| (self.week_at(k), c))
    }

    /// Prefix of the series ending at `upto` (inclusive).
    pub fn truncate_to(&self, upto: EpiWeek) -> Result<HospSeries> {
        let n = self.start.weeks_until(upto) + 1;
        if n < 1 {
            return Err(Error::InsufficientHistory(format!(
                "{} starts at {}, after {}",
                self.location, self.start, upto
            )));
        }
        let n = (n as usize).min(self.counts.len());
        Ok(Self::new(self.location.clone(), self.start, self.counts[..n].to_vec()))
    }

    /// The weeks from `from` through `to`, both inclusive; every one of them
    /// must be covered.
    pub fn window(&self, from: EpiWeek, to: EpiWeek) -> Result<HospSeries> {
        match (self.index_of(from), self.index_of(to)) {
            (Some(a), Some(b)) if a <= b => Ok(Self::new(self.location.clone(), from, self.counts[a..=b].to_vec())),
            _ => Err(Error::InsufficientHistory(format!(
                "{} covers {} to {}, not {from} to {to}",
                self.location,
                self.start,
                self.end()
            ))),
        }
    }
}

/// Counts divided by their running maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSeries {
    pub values: Vec<f64>,
    pub scale: f64,
}

pub fn running_max_scale(series: &HospSeries, upto: EpiWeek) -> Result<ScaledSeries> {
    let prefix = series.truncate_to(upto)?;
    let max = prefix.counts().iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::DegenerateScale);
    }
    let scale = max as f64;
    Ok(ScaledSeries {
        values: prefix.counts().iter().map(|&c| c as f64 / scale).collect(),
        scale,
    })
}

/// Earliest week attaining the maximum count.
pub fn peak(series: &HospSeries) -> Result<(EpiWeek, u64)> {
    let mut best: Option<(usize, u64)> = None;
    for (k, &c) in series.counts().iter().enumerate() {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((k, c));
        }
    }
    let (k, c) = best.ok_or(Error::Empty("series"))?;
    Ok((series.week_at(k), c))
}

/// Zero-based position and value of the first maximum of `values`.
pub fn argmax_first(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best
}

/// Consecutive 7-day sums, labelled from `alignment` onward.
pub fn weekly_from_daily(daily: &[f64], alignment: EpiWeek) -> Result<Vec<(EpiWeek, f64)>> {
    if daily.len() % 7 != 0 {
        return Err(Error::Alignment(daily.len()));
    }
    Ok(daily
        .chunks_exact(7)
        .enumerate()
        .map(|(k, chunk)| (alignment.add_weeks(k as i64), chunk.iter().sum()))
        .collect())
}
