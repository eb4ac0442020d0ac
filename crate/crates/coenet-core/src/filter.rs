//! Population filters applied before any network construction.
//!
//! Rules are declarative flag requirements on student metadata. A rule
//! naming a flag that appears nowhere in the data is treated as a
//! configuration error rather than silently removing everyone.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::types::{EnrolmentRecord, StudentMeta};

/// Conventional flag names written by the synthetic generator and expected
/// in `students.csv`.
pub const FLAG_STATE_SCHOOL: &str = "state_school";
pub const FLAG_RESIDENT: &str = "resident";
pub const FLAG_PRIOR_LEVEL: &str = "prior_level";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterRules {
    /// Flags every retained student must carry. Empty = no filtering.
    pub required_flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterSummary {
    pub students_before: usize,
    pub students_after: usize,
    /// (flag, number of students failing that rule). A student failing
    /// several rules is counted under each.
    pub removed_per_rule: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterError {
    /// The rule references a flag absent from every student record.
    UnknownFlag(String),
}

impl fmt::Display for FilterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterError::UnknownFlag(flag) => {
                write!(f, "filter rule references unknown flag {flag:?}")
            }
        }
    }
}

/// Keep exactly the students satisfying all enabled rules, and only their
/// records.
pub fn filter_population(
    records: &[EnrolmentRecord],
    students: &[StudentMeta],
    rules: &FilterRules,
) -> Result<(Vec<EnrolmentRecord>, Vec<StudentMeta>, FilterSummary), FilterError> {
    let known: BTreeSet<&str> = students
        .iter()
        .flat_map(|s| s.flags.iter().map(String::as_str))
        .collect();
    for flag in &rules.required_flags {
        if !known.contains(flag.as_str()) {
            return Err(FilterError::UnknownFlag(flag.clone()));
        }
    }

    let mut removed_per_rule: Vec<(String, usize)> = rules
        .required_flags
        .iter()
        .map(|f| (f.clone(), 0))
        .collect();
    let mut kept_students = Vec::new();
    let mut kept_ids: BTreeSet<&str> = BTreeSet::new();
    for student in students {
        let mut keep = true;
        for (i, flag) in rules.required_flags.iter().enumerate() {
            if !student.flags.contains(flag) {
                removed_per_rule[i].1 += 1;
                keep = false;
            }
        }
        if keep {
            kept_ids.insert(student.student_id.as_str());
            kept_students.push(student.clone());
        }
    }
    let kept_records = records
        .iter()
        .filter(|r| kept_ids.contains(r.student_id.as_str()))
        .cloned()
        .collect();

    let summary = FilterSummary {
        students_before: students.len(),
        students_after: kept_students.len(),
        removed_per_rule,
    };
    Ok((kept_records, kept_students, summary))
}
