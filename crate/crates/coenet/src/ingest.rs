//! Delimited-text parsing and writing for enrolment and student files.
//!
//! Input is header-named CSV or TSV (delimiter sniffed from the header
//! line). Every row either becomes a record or lands in a rejects list
//! with its row number and reason; nothing is dropped silently.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use coenet_core::types::{
    AssessmentMode, EnrolmentRecord, Ethnicity, Sex, StandardKind, StudentMeta, YEAR_MAX, YEAR_MIN,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required column {name:?}")]
    MissingColumn { name: String },
    #[error("empty input: no header row")]
    EmptyInput,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Column-name mapping for the enrolments file.
#[derive(Debug, Clone)]
pub struct EnrolmentSchema {
    pub student_id: String,
    pub standard_id: String,
    pub year: String,
    pub domain: String,
    pub kind: String,
    pub mode: String,
}

impl Default for EnrolmentSchema {
    fn default() -> Self {
        EnrolmentSchema {
            student_id: "student_id".into(),
            standard_id: "standard_id".into(),
            year: "year".into(),
            domain: "domain".into(),
            kind: "kind".into(),
            mode: "mode".into(),
        }
    }
}

/// Column-name mapping for the students file. `ethnicities` and `flags`
/// are semicolon-joined lists.
#[derive(Debug, Clone)]
pub struct StudentSchema {
    pub student_id: String,
    pub sex: String,
    pub ethnicities: String,
    pub decile: String,
    pub flags: String,
}

impl Default for StudentSchema {
    fn default() -> Self {
        StudentSchema {
            student_id: "student_id".into(),
            sex: "sex".into(),
            ethnicities: "ethnicities".into(),
            decile: "decile".into(),
            flags: "flags".into(),
        }
    }
}

/// A rejected input row: 1-based data row number plus the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub row: u64,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedEnrolments {
    pub records: Vec<EnrolmentRecord>,
    pub rejects: Vec<Reject>,
    /// Rows dropped as exact (student, standard, year) duplicates.
    pub duplicates: usize,
}

#[derive(Debug, Default)]
pub struct ParsedStudents {
    pub students: Vec<StudentMeta>,
    pub rejects: Vec<Reject>,
}

fn sniff_delimiter(text: &str) -> u8 {
    match text.lines().next() {
        Some(header) if header.contains('\t') => b'\t',
        _ => b',',
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::MissingColumn { name: name.into() })
}

pub fn parse_enrolments<R: Read>(
    mut reader: R,
    schema: &EnrolmentSchema,
) -> Result<ParsedEnrolments, IngestError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(&text))
        .from_reader(text.as_bytes());
    let headers = csv_reader.headers()?.clone();
    let col_student = column_index(&headers, &schema.student_id)?;
    let col_standard = column_index(&headers, &schema.standard_id)?;
    let col_year = column_index(&headers, &schema.year)?;
    let col_domain = column_index(&headers, &schema.domain)?;
    let col_kind = column_index(&headers, &schema.kind)?;
    let col_mode = column_index(&headers, &schema.mode)?;

    let mut out = ParsedEnrolments::default();
    let mut seen: BTreeSet<(String, String, u16)> = BTreeSet::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row_number = i as u64 + 1;
        let reject = |reason: String, rejects: &mut Vec<Reject>| {
            rejects.push(Reject {
                row: row_number,
                reason,
            });
        };
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                reject(format!("malformed row: {e}"), &mut out.rejects);
                continue;
            }
        };
        let field = |idx: usize| record.get(idx).unwrap_or("").trim().to_string();
        let year: u16 = match field(col_year).parse() {
            Ok(y) => y,
            Err(_) => {
                reject(
                    format!("unparseable year {:?}", field(col_year)),
                    &mut out.rejects,
                );
                continue;
            }
        };
        if !(YEAR_MIN..=YEAR_MAX).contains(&year) {
            reject(
                format!("year {year} outside [{YEAR_MIN}, {YEAR_MAX}]"),
                &mut out.rejects,
            );
            continue;
        }
        let kind: StandardKind = match field(col_kind).parse() {
            Ok(k) => k,
            Err(e) => {
                reject(e.to_string(), &mut out.rejects);
                continue;
            }
        };
        let mode: AssessmentMode = match field(col_mode).parse() {
            Ok(m) => m,
            Err(e) => {
                reject(e.to_string(), &mut out.rejects);
                continue;
            }
        };
        let student_id = field(col_student);
        let standard_id = field(col_standard);
        if student_id.is_empty() || standard_id.is_empty() {
            reject("empty student_id or standard_id".into(), &mut out.rejects);
            continue;
        }
        if !seen.insert((student_id.clone(), standard_id.clone(), year)) {
            out.duplicates += 1;
            continue;
        }
        out.records.push(EnrolmentRecord {
            student_id,
            standard_id,
            year,
            domain: field(col_domain),
            kind,
            mode,
        });
    }
    Ok(out)
}

pub fn parse_students<R: Read>(
    mut reader: R,
    schema: &StudentSchema,
) -> Result<ParsedStudents, IngestError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(&text))
        .from_reader(text.as_bytes());
    let headers = csv_reader.headers()?.clone();
    let col_student = column_index(&headers, &schema.student_id)?;
    let col_sex = column_index(&headers, &schema.sex)?;
    let col_eth = column_index(&headers, &schema.ethnicities)?;
    let col_decile = column_index(&headers, &schema.decile)?;
    let col_flags = column_index(&headers, &schema.flags)?;

    let mut out = ParsedStudents::default();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row_number = i as u64 + 1;
        let reject = |reason: String, rejects: &mut Vec<Reject>| {
            rejects.push(Reject {
                row: row_number,
                reason,
            });
        };
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                reject(format!("malformed row: {e}"), &mut out.rejects);
                continue;
            }
        };
        let field = |idx: usize| record.get(idx).unwrap_or("").trim().to_string();
        let student_id = field(col_student);
        if student_id.is_empty() {
            reject("empty student_id".into(), &mut out.rejects);
            continue;
        }
        if !seen_ids.insert(student_id.clone()) {
            reject(format!("duplicate student_id {student_id:?}"), &mut out.rejects);
            continue;
        }
        let sex: Sex = match field(col_sex).parse() {
            Ok(s) => s,
            Err(e) => {
                reject(e.to_string(), &mut out.rejects);
                continue;
            }
        };
        let ethnicities: Result<BTreeSet<Ethnicity>, _> = field(col_eth)
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse())
            .collect();
        let ethnicities = match ethnicities {
            Ok(set) if !set.is_empty() => set,
            Ok(_) => {
                reject("ethnicities must be non-empty".into(), &mut out.rejects);
                continue;
            }
            Err(e) => {
                reject(e.to_string(), &mut out.rejects);
                continue;
            }
        };
        let decile: u8 = match field(col_decile).parse() {
            Ok(d) if (1..=10).contains(&d) => d,
            _ => {
                reject(
                    format!("decile {:?} outside 1..=10", field(col_decile)),
                    &mut out.rejects,
                );
                continue;
            }
        };
        let flags: BTreeSet<String> = field(col_flags)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        out.students.push(StudentMeta {
            student_id,
            sex,
            ethnicities,
            decile,
            flags,
            cohort_year: None,
        });
    }
    Ok(out)
}

pub fn write_enrolments<W: Write>(writer: W, records: &[EnrolmentRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["student_id", "standard_id", "year", "domain", "kind", "mode"])?;
    for r in records {
        w.write_record([
            r.student_id.as_str(),
            r.standard_id.as_str(),
            &r.year.to_string(),
            r.domain.as_str(),
            &r.kind.to_string(),
            &r.mode.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_students<W: Write>(writer: W, students: &[StudentMeta]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["student_id", "sex", "ethnicities", "decile", "flags"])?;
    for s in students {
        let ethnicities = s
            .ethnicities
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let flags = s.flags.iter().cloned().collect::<Vec<_>>().join(";");
        w.write_record([
            s.student_id.as_str(),
            &s.sex.to_string(),
            &ethnicities,
            &s.decile.to_string(),
            &flags,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_enrolments_file(path: &Path) -> Result<ParsedEnrolments, IngestError> {
    parse_enrolments(std::fs::File::open(path)?, &EnrolmentSchema::default())
}

pub fn read_students_file(path: &Path) -> Result<ParsedStudents, IngestError> {
    parse_students(std::fs::File::open(path)?, &StudentSchema::default())
}
