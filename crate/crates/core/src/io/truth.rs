//! Surveillance counts as `date,location,value` rows.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ts::{EpiWeek, HospSeries};

pub fn load_truth(path: &Path) -> Result<BTreeMap<String, HospSeries>> {
    read_truth(super::open(path)?)
}

/// Parses truth rows in any order. Each date is collapsed to its epiweek;
/// every location must then cover a consecutive run of weeks.
pub fn read_truth<R: Read>(reader: R) -> Result<BTreeMap<String, HospSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("truth file has no {name:?} column")))
    };
    let (ci_date, ci_loc, ci_val) = (column("date")?, column("location")?, column("value")?);

    let mut by_loc: BTreeMap<String, BTreeMap<EpiWeek, (NaiveDate, u64)>> = BTreeMap::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |k: usize| row.get(k).unwrap_or("");
        let at = || format!("row {}", line + 2);
        let date = NaiveDate::parse_from_str(field(ci_date), "%Y-%m-%d")
            .map_err(|_| Error::Validation(format!("{}: cannot parse date {:?}", at(), field(ci_date))))?;
        let location = field(ci_loc).to_string();
        if location.is_empty() {
            return Err(Error::Validation(format!("{}: empty location", at())));
        }
        let raw = field(ci_val);
        let value: i64 = raw
            .parse()
            .or_else(|_| match raw.parse::<f64>() {
                Ok(x) if x.fract() == 0.0 && x.abs() < 9e15 => Ok(x as i64),
                _ => Err(()),
            })
            .map_err(|_| Error::Validation(format!("{}: value {raw:?} is not an integer", at())))?;
        if value < 0 {
            return Err(Error::Validation(format!("{}: negative value {value}", at())));
        }
        let week = EpiWeek::from_date(date);
        if let Some((other, _)) = by_loc
            .entry(location.clone())
            .or_default()
            .insert(week, (date, value as u64))
        {
            return Err(Error::Validation(if other == date {
                format!("duplicate row for {location} on {date}")
            } else {
                format!("{location} has two rows in epiweek {week} ({other} and {date})")
            }));
        }
    }
    if by_loc.is_empty() {
        return Err(Error::Empty("truth file"));
    }
    let mut out = BTreeMap::new();
    for (location, weeks) in by_loc {
        let first = *weeks.keys().next().expect("non-empty");
        let last = *weeks.keys().last().expect("non-empty");
        let missing: Vec<String> = (0..=first.weeks_until(last))
            .map(|k| first.add_weeks(k))
            .filter(|w| !weeks.contains_key(w))
            .map(|w| w.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Gap { location, missing });
        }
        let counts = weeks.values().map(|&(_, v)| v).collect();
        out.insert(location.clone(), HospSeries::new(location, first, counts));
    }
    Ok(out)
}

/// Writes one row per location and week, dated by the week's last day.
pub fn write_truth<'a>(series: impl IntoIterator<Item = &'a HospSeries>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create(path)?);
    w.write_record(["date", "location", "value"])?;
    for s in series {
        for (week, count) in s.points() {
            w.write_record([week.end_date().to_string(), s.location().to_string(), count.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_sorts() {
        let text = "date,location,value\n2023-10-14,NY,5\n2023-10-07,NY,3\n2023-10-07,CA,1\n";
        let m = read_truth(text.as_bytes()).unwrap();
        assert_eq!(m["NY"].counts(), &[3, 5]);
        assert_eq!(
            m["NY"].start(),
            EpiWeek::from_date(NaiveDate::from_ymd_opt(2023, 10, 7).unwrap())
        );
        assert_eq!(m["CA"].counts(), &[1]);
    }

    #[test]
    fn rejects_bad_rows() {
        let neg = "date,location,value\n2023-10-07,NY,-3\n";
        assert!(matches!(read_truth(neg.as_bytes()), Err(Error::Validation(_))));
        let dup = "date,location,value\n2023-10-07,NY,3\n2023-10-07,NY,4\n";
        assert!(matches!(read_truth(dup.as_bytes()), Err(Error::Validation(_))));
        let gap = "date,location,value\n2023-10-07,NY,3\n2023-10-28,NY,4\n";
        match read_truth(gap.as_bytes()) {
            Err(Error::Gap { location, missing }) => {
                assert_eq!(location, "NY");
                assert_eq!(missing.len(), 2);
            }
            other => panic!("{other:?}"),
        }
        let cols = "day,location,value\n2023-10-07,NY,3\n";
        assert!(matches!(read_truth(cols.as_bytes()), Err(Error::Schema(_))));
        let bad_date = "date,location,value\n10/07/2023,NY,3\n";
        assert!(matches!(read_truth(bad_date.as_bytes()), Err(Error::Validation(_))));
        assert!(matches!(
            load_truth(Path::new("/nonexistent/truth.csv")),
            Err(Error::FileNotFound(_))
        ));
    }
}
