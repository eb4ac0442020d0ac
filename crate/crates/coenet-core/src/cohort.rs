//! Cohort-year assignment.
//!
//! A student may take standards across several calendar years; each student
//! is assigned the single year holding most of their records. Ties break to
//! the latest tied year, since records accumulate toward the final
//! qualification year. Records from non-cohort years are kept.

use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::types::{EnrolmentRecord, StudentMeta};

/// Map each student to the most frequent year among their records,
/// latest year winning ties.
pub fn assign_cohorts(records: &[EnrolmentRecord]) -> BTreeMap<String, u16> {
    let mut per_student: BTreeMap<&str, BTreeMap<u16, u32>> = BTreeMap::new();
    for rec in records {
        *per_student
            .entry(rec.student_id.as_str())
            .or_default()
            .entry(rec.year)
            .or_insert(0) += 1;
    }
    per_student
        .into_iter()
        .map(|(student, year_counts)| {
            // Iterate ascending; >= keeps the latest year among maximal counts.
            let mut best_year = 0;
            let mut best_count = 0;
            for (year, count) in year_counts {
                if count >= best_count {
                    best_count = count;
                    best_year = year;
                }
            }
            (String::from(student), best_year)
        })
        .collect()
}

/// Write assigned cohort years onto student metadata in place.
/// Students with no records are left unassigned.
pub fn apply_cohorts(students: &mut [StudentMeta], cohorts: &BTreeMap<String, u16>) {
    for student in students {
        if let Some(&year) = cohorts.get(&student.student_id) {
            student.cohort_year = Some(year);
        }
    }
}
