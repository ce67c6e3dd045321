use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{Event, EventLog, Trace};
use crate::error::{Error, Result};

/// Header names for each event attribute.
///
/// `enabled` and `arrival` are optional: they are read only when the header
/// contains them, and empty cells mean "unknown".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub case_id: String,
    pub activity: String,
    pub resource: String,
    pub start: String,
    pub end: String,
    pub enabled: String,
    pub arrival: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            case_id: "case_id".into(),
            activity: "activity".into(),
            resource: "resource".into(),
            start: "start_time".into(),
            end: "end_time".into(),
            enabled: "enabled_time".into(),
            arrival: "arrival_time".into(),
        }
    }
}

pub fn read_csv_log(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<EventLog> {
    parse_csv_log(File::open(path)?, columns)
}

pub fn parse_csv_log<R: Read>(input: R, columns: &ColumnMap) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let index = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| index(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let case_col = require(&columns.case_id)?;
    let activity_col = require(&columns.activity)?;
    let resource_col = require(&columns.resource)?;
    let start_col = require(&columns.start)?;
    let end_col = require(&columns.end)?;
    let enabled_col = index(&columns.enabled);
    let arrival_col = index(&columns.arrival);

    let mut events = Vec::new();
    let mut arrivals: HashMap<String, DateTime<Utc>> = HashMap::new();
    let mut bad_rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(row + 1);
        let field = |col: usize| record.get(col).unwrap_or("");
        let datetime = |col: usize, name: &str| -> Result<Option<DateTime<Utc>>> {
            let raw = field(col);
            if raw.is_empty() {
                return Ok(None);
            }
            DateTime::parse_from_rfc3339(raw)
                .map(|d| Some(d.with_timezone(&Utc)))
                .map_err(|_| Error::BadDatetime {
                    row,
                    line,
                    column: name.to_string(),
                    value: raw.to_string(),
                })
        };
        let required = |col: usize, name: &str| -> Result<DateTime<Utc>> {
            datetime(col, name)?.ok_or_else(|| Error::BadDatetime {
                row,
                line,
                column: name.to_string(),
                value: String::new(),
            })
        };
        let started_at = required(start_col, &columns.start)?;
        let completed_at = required(end_col, &columns.end)?;
        let enabled_at = match enabled_col {
            Some(c) => datetime(c, &columns.enabled)?,
            None => None,
        };
        let case_id = field(case_col).to_string();
        if let Some(c) = arrival_col {
            if let Some(a) = datetime(c, &columns.arrival)? {
                arrivals
                    .entry(case_id.clone())
                    .and_modify(|x| *x = (*x).min(a))
                    .or_insert(a);
            }
        }
        if completed_at < started_at || enabled_at.is_some_and(|e| e > started_at) {
            bad_rows.push(row);
        }
        events.push(Event {
            case_id,
            activity: field(activity_col).to_string(),
            resource: field(resource_col).to_string(),
            enabled_at,
            started_at,
            completed_at,
        });
    }
    if !bad_rows.is_empty() {
        return Err(Error::EndBeforeStart { rows: bad_rows });
    }
    let log = EventLog::from_events(events)?;
    if arrivals.is_empty() {
        return Ok(log);
    }
    let traces = log
        .traces()
        .iter()
        .map(|t| Trace::new(t.case_id(), t.events().to_vec(), arrivals.get(t.case_id()).copied()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EventLog::new(traces))
}

fn format_datetime(d: DateTime<Utc>) -> String {
    d.to_rfc3339_opts(SecondsFormat::AutoSi, false)
}

/// Writes the log with the default column names. The enabled and arrival
/// columns are only emitted when the log carries that information.
pub fn write_csv_log<W: Write>(log: &EventLog, output: W) -> Result<()> {
    let cols = ColumnMap::default();
    let with_enabled = log.events().any(|e| e.enabled_at.is_some());
    let with_arrival = log.traces().iter().any(|t| t.has_explicit_arrival());
    let mut writer = csv::Writer::from_writer(output);
    let mut header = vec![
        cols.case_id.as_str(),
        cols.activity.as_str(),
        cols.resource.as_str(),
    ];
    if with_arrival {
        header.push(&cols.arrival);
    }
    if with_enabled {
        header.push(&cols.enabled);
    }
    header.extend([cols.start.as_str(), cols.end.as_str()]);
    writer.write_record(&header)?;
    for trace in log.traces() {
        for e in trace.events() {
            let mut row = vec![e.case_id.clone(), e.activity.clone(), e.resource.clone()];
            if with_arrival {
                row.push(if trace.has_explicit_arrival() {
                    format_datetime(trace.arrival_at())
                } else {
                    String::new()
                });
            }
            if with_enabled {
                row.push(e.enabled_at.map(format_datetime).unwrap_or_default());
            }
            row.push(format_datetime(e.started_at));
            row.push(format_datetime(e.completed_at));
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv_path(log: &EventLog, path: impl AsRef<Path>) -> Result<()> {
    write_csv_log(log, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "case_id,activity,resource,start_time,end_time\n";

    #[test]
    fn minimal_file() {
        let text = format!(
            "{HEADER}1,A,r1,2024-03-27T10:00:00+00:00,2024-03-27T10:30:00+00:00\n\
             1,B,r2,2024-03-27T10:45:00+00:00,2024-03-27T11:00:00+00:00\n"
        );
        let log = parse_csv_log(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(log.traces().len(), 1);
        assert_eq!(log.event_count(), 2);
        assert_eq!(log.resources().len(), 2);
    }

    #[test]
    fn offsets_are_normalized_to_utc() {
        let text = format!("{HEADER}1,A,r,2024-03-27T12:00:00+02:00,2024-03-27T12:30:00+02:00\n");
        let log = parse_csv_log(text.as_bytes(), &ColumnMap::default()).unwrap();
        let e = &log.traces()[0].events()[0];
        assert_eq!(format_datetime(e.started_at), "2024-03-27T10:00:00+00:00");
    }

    #[test]
    fn end_before_start_cites_rows() {
        let text = format!(
            "{HEADER}1,A,r,2024-03-27T10:00:00+00:00,2024-03-27T10:30:00+00:00\n\
             1,B,r,2024-03-27T10:45:00+00:00,2024-03-27T11:00:00+00:00\n\
             2,A,r,2024-03-27T12:00:00+00:00,2024-03-27T11:00:00+00:00\n"
        );
        match parse_csv_log(text.as_bytes(), &ColumnMap::default()) {
            Err(Error::EndBeforeStart { rows }) => assert_eq!(rows, vec![3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let text = "case_id,activity,start_time,end_time\n";
        match parse_csv_log(text.as_bytes(), &ColumnMap::default()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "resource"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn datetime_without_offset_is_rejected_with_line() {
        let text = format!(
            "{HEADER}1,A,r,2024-03-27T10:00:00+00:00,2024-03-27T10:30:00+00:00\n\
             1,B,r,2024-03-27T10:45:00,2024-03-27T11:00:00+00:00\n"
        );
        match parse_csv_log(text.as_bytes(), &ColumnMap::default()) {
            Err(Error::BadDatetime { row, line, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn custom_column_names() {
        let text = "Case,Task,Who,From,To\n7,A,r,2024-03-27T10:00:00Z,2024-03-27T10:30:00Z\n";
        let cols = ColumnMap {
            case_id: "Case".into(),
            activity: "Task".into(),
            resource: "Who".into(),
            start: "From".into(),
            end: "To".into(),
            ..ColumnMap::default()
        };
        let log = parse_csv_log(text.as_bytes(), &cols).unwrap();
        assert_eq!(log.traces()[0].case_id(), "7");
    }

    #[test]
    fn explicit_arrival_and_enabled_round_trip() {
        let text = "case_id,activity,resource,arrival_time,enabled_time,start_time,end_time\n\
                    1,A,r,2024-03-27T08:00:00+00:00,2024-03-27T09:00:00+00:00,2024-03-27T10:00:00+00:00,2024-03-27T10:30:00.250+00:00\n";
        let log = parse_csv_log(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(format_datetime(log.traces()[0].arrival_at()), "2024-03-27T08:00:00+00:00");
        let mut out = Vec::new();
        write_csv_log(&log, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
