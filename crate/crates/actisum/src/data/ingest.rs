//! CSV ingestion for minute-level sequences.
//!
//! Two layouts, auto-detected from the header:
//!   wide: `participant_id,day_index,m0,...,m1439` — one row per day
//!   long: `participant_id,day_index,minute,value` — one row per minute
//!
//! Both writers emit the canonical forms the reader accepts, so
//! `ingest(serialize(x)) == x`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::data::{DaySequence, MINUTES_PER_DAY};
use crate::error::{Error, Result};

pub fn ingest_csv(path: &Path) -> Result<Vec<DaySequence>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::validation(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: format!("bad header: {e}"),
        })?
        .clone();
    let fields: Vec<&str> = headers.iter().collect();

    if fields.len() >= 3 && fields[0] == "participant_id" && fields[1] == "day_index" {
        if fields[2] == "minute" {
            ingest_long(reader)
        } else if fields[2] == "m0" {
            ingest_wide(reader)
        } else {
            Err(Error::Parse {
                row: 1,
                message: format!("unrecognized third column {:?}; expected m0 or minute", fields[2]),
            })
        }
    } else {
        Err(Error::Parse {
            row: 1,
            message: "header must start with participant_id,day_index".into(),
        })
    }
}

fn parse_cell(row: usize, raw: &str, what: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("malformed {what} {raw:?}"),
    })
}

fn parse_u32(row: usize, raw: &str, what: &str) -> Result<u32> {
    raw.trim().parse::<u32>().map_err(|_| Error::Parse {
        row,
        message: format!("malformed {what} {raw:?}"),
    })
}

fn ingest_wide<R: std::io::Read>(mut reader: csv::Reader<R>) -> Result<Vec<DaySequence>> {
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after header
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() < 3 {
            return Err(Error::Parse {
                row,
                message: "wide row needs participant_id, day_index and minute cells".into(),
            });
        }
        let participant_id = record[0].to_string();
        let day_index = parse_u32(row, &record[1], "day_index")?;
        let cells = record.len() - 2;
        if cells != MINUTES_PER_DAY {
            return Err(Error::validation(format!(
                "participant {participant_id} day {day_index}: row {row} has {cells} minute cells, expected {MINUTES_PER_DAY}"
            )));
        }
        let mut minutes = Vec::with_capacity(MINUTES_PER_DAY);
        for cell in record.iter().skip(2) {
            minutes.push(parse_cell(row, cell, "minute value")?);
        }
        out.push(DaySequence::new(participant_id, day_index, minutes)?);
    }
    Ok(out)
}

fn ingest_long<R: std::io::Read>(mut reader: csv::Reader<R>) -> Result<Vec<DaySequence>> {
    // Preserve first-appearance order of (participant, day) groups.
    let mut order: Vec<(String, u32)> = Vec::new();
    let mut groups: Vec<Vec<Option<f64>>> = Vec::new();
    let mut index: std::collections::HashMap<(String, u32), usize> = Default::default();

    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != 4 {
            return Err(Error::Parse {
                row,
                message: format!("long row needs 4 cells, got {}", record.len()),
            });
        }
        let key = (record[0].to_string(), parse_u32(row, &record[1], "day_index")?);
        let minute = parse_u32(row, &record[2], "minute")? as usize;
        let value = parse_cell(row, &record[3], "value")?;
        if minute >= MINUTES_PER_DAY {
            return Err(Error::Parse {
                row,
                message: format!("minute {minute} out of range"),
            });
        }
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            groups.push(vec![None; MINUTES_PER_DAY]);
            groups.len() - 1
        });
        if groups[slot][minute].is_some() {
            return Err(Error::Parse {
                row,
                message: format!("duplicate minute {minute}"),
            });
        }
        groups[slot][minute] = Some(value);
    }

    let mut out = Vec::with_capacity(order.len());
    for ((participant_id, day_index), values) in order.into_iter().zip(groups) {
        let missing: BTreeSet<usize> = values
            .iter()
            .enumerate()
            .filter_map(|(m, v)| v.is_none().then_some(m))
            .collect();
        if !missing.is_empty() {
            return Err(Error::validation(format!(
                "participant {participant_id} day {day_index}: {} minutes missing (first: {})",
                missing.len(),
                missing.iter().next().unwrap()
            )));
        }
        let minutes = values.into_iter().map(|v| v.unwrap()).collect();
        out.push(DaySequence::new(participant_id, day_index, minutes)?);
    }
    Ok(out)
}

fn fmt_value(v: f64) -> String {
    // shortest round-trip representation keeps files deterministic
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

pub fn write_wide_csv<W: Write>(out: &mut W, sequences: &[DaySequence]) -> Result<()> {
    let mut header = String::from("participant_id,day_index");
    for m in 0..MINUTES_PER_DAY {
        header.push_str(&format!(",m{m}"));
    }
    writeln!(out, "{header}").map_err(|e| Error::io("wide csv", e))?;
    for seq in sequences {
        let mut line = format!("{},{}", seq.participant_id, seq.day_index);
        for v in &seq.minutes {
            line.push(',');
            line.push_str(&fmt_value(*v));
        }
        writeln!(out, "{line}").map_err(|e| Error::io("wide csv", e))?;
    }
    Ok(())
}

pub fn write_long_csv<W: Write>(out: &mut W, sequences: &[DaySequence]) -> Result<()> {
    writeln!(out, "participant_id,day_index,minute,value").map_err(|e| Error::io("long csv", e))?;
    for seq in sequences {
        for (minute, v) in seq.minutes.iter().enumerate() {
            writeln!(
                out,
                "{},{},{minute},{}",
                seq.participant_id,
                seq.day_index,
                fmt_value(*v)
            )
            .map_err(|e| Error::io("long csv", e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn wide_row_of_zeros_parses_to_zero_sequence() {
        let mut header = String::from("participant_id,day_index");
        for m in 0..MINUTES_PER_DAY {
            header.push_str(&format!(",m{m}"));
        }
        let row = format!("p1,0{}", ",0".repeat(MINUTES_PER_DAY));
        let f = write_temp(&format!("{header}\n{row}\n"));
        let seqs = ingest_csv(f.path()).unwrap();
        assert_eq!(seqs.len(), 1);
        assert!(seqs[0].minutes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wide_row_with_wrong_cell_count_names_participant_and_day() {
        let mut header = String::from("participant_id,day_index");
        for m in 0..MINUTES_PER_DAY {
            header.push_str(&format!(",m{m}"));
        }
        let row = format!("p7,3{}", ",0".repeat(MINUTES_PER_DAY - 1));
        let f = write_temp(&format!("{header}\n{row}\n"));
        let err = ingest_csv(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("p7") && msg.contains('3') && msg.contains("1439"), "{msg}");
    }

    #[test]
    fn malformed_cell_reports_row_number() {
        let mut header = String::from("participant_id,day_index");
        for m in 0..MINUTES_PER_DAY {
            header.push_str(&format!(",m{m}"));
        }
        let good = format!("p1,0{}", ",0".repeat(MINUTES_PER_DAY));
        let bad = format!("p2,0,oops{}", ",0".repeat(MINUTES_PER_DAY - 1));
        let f = write_temp(&format!("{header}\n{good}\n{bad}\n"));
        let err = ingest_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn long_format_identity_values_round_trip() {
        let mut content = String::from("participant_id,day_index,minute,value\n");
        for m in 0..MINUTES_PER_DAY {
            content.push_str(&format!("p1,0,{m},{m}.0\n"));
        }
        let f = write_temp(&content);
        let seqs = ingest_csv(f.path()).unwrap();
        assert_eq!(seqs.len(), 1);
        for (m, v) in seqs[0].minutes.iter().enumerate() {
            assert_eq!(*v, m as f64);
        }
    }

    #[test]
    fn both_serializers_round_trip() {
        let seqs = vec![
            DaySequence::new("a", 0, (0..MINUTES_PER_DAY).map(|m| (m % 97) as f64 * 0.5).collect())
                .unwrap(),
            DaySequence::new("b", 2, vec![1.25; MINUTES_PER_DAY]).unwrap(),
        ];
        for writer in [write_wide_csv, write_long_csv] {
            let mut buf = Vec::new();
            writer(&mut buf, &seqs).unwrap();
            let mut f = tempfile::NamedTempFile::new().unwrap();
            f.write_all(&buf).unwrap();
            f.flush().unwrap();
            let back = ingest_csv(f.path()).unwrap();
            assert_eq!(back, seqs);
        }
    }

    #[test]
    fn long_format_missing_minutes_is_a_validation_error() {
        let content = "participant_id,day_index,minute,value\np1,0,0,5.0\np1,0,2,1.0\n";
        let f = write_temp(content);
        let err = ingest_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }
}
