//! Domain types shared across the pipeline.

use alloc::collections::BTreeSet;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

/// Calendar-year range accepted for enrolment records.
pub const YEAR_MIN: u16 = 2000;
pub const YEAR_MAX: u16 = 2100;

/// Assessment standard type: vocational pass/fail versus curriculum-linked graded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StandardKind {
    Unit,
    Achievement,
}

impl fmt::Display for StandardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StandardKind::Unit => f.write_str("unit"),
            StandardKind::Achievement => f.write_str("achievement"),
        }
    }
}

impl FromStr for StandardKind {
    type Err = EnumParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit" => Ok(StandardKind::Unit),
            "achievement" => Ok(StandardKind::Achievement),
            _ => Err(EnumParseError::new("standard_kind", s)),
        }
    }
}

/// Whether a standard is assessed by the school or by an external body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AssessmentMode {
    Internal,
    External,
}

impl fmt::Display for AssessmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssessmentMode::Internal => f.write_str("internal"),
            AssessmentMode::External => f.write_str("external"),
        }
    }
}

impl FromStr for AssessmentMode {
    type Err = EnumParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "internal" => Ok(AssessmentMode::Internal),
            "external" => Ok(AssessmentMode::External),
            _ => Err(EnumParseError::new("assessment_mode", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sex {
    Male,
    Female,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sex::Male => f.write_str("male"),
            Sex::Female => f.write_str("female"),
        }
    }
}

impl FromStr for Sex {
    type Err = EnumParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "male" => Ok(Sex::Male),
            "female" => Ok(Sex::Female),
            _ => Err(EnumParseError::new("sex", s)),
        }
    }
}

/// Ethnic group labels following the Stats NZ classification; students may
/// identify with several at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ethnicity {
    European,
    Maori,
    Pacific,
    Asian,
    Melaa,
    Other,
}

impl fmt::Display for Ethnicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ethnicity::European => f.write_str("European"),
            Ethnicity::Maori => f.write_str("Maori"),
            Ethnicity::Pacific => f.write_str("Pacific"),
            Ethnicity::Asian => f.write_str("Asian"),
            Ethnicity::Melaa => f.write_str("MELAA"),
            Ethnicity::Other => f.write_str("Other"),
        }
    }
}

impl FromStr for Ethnicity {
    type Err = EnumParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "European" => Ok(Ethnicity::European),
            "Maori" => Ok(Ethnicity::Maori),
            "Pacific" => Ok(Ethnicity::Pacific),
            "Asian" => Ok(Ethnicity::Asian),
            "MELAA" => Ok(Ethnicity::Melaa),
            "Other" => Ok(Ethnicity::Other),
            _ => Err(EnumParseError::new("ethnicity", s)),
        }
    }
}

/// School decile banded into thirds: 1-3 low, 4-7 medium, 8-10 high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DecileBand {
    Low,
    Medium,
    High,
}

impl DecileBand {
    pub fn from_decile(decile: u8) -> Option<DecileBand> {
        match decile {
            1..=3 => Some(DecileBand::Low),
            4..=7 => Some(DecileBand::Medium),
            8..=10 => Some(DecileBand::High),
            _ => None,
        }
    }
}

impl fmt::Display for DecileBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecileBand::Low => f.write_str("low"),
            DecileBand::Medium => f.write_str("medium"),
            DecileBand::High => f.write_str("high"),
        }
    }
}

impl FromStr for DecileBand {
    type Err = EnumParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(DecileBand::Low),
            "medium" => Ok(DecileBand::Medium),
            "high" => Ok(DecileBand::High),
            _ => Err(EnumParseError::new("decile_band", s)),
        }
    }
}

/// Failure to parse a closed enum value from text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumParseError {
    pub field: &'static str,
    pub value: String,
}

impl EnumParseError {
    fn new(field: &'static str, value: &str) -> Self {
        EnumParseError {
            field,
            value: String::from(value),
        }
    }
}

impl fmt::Display for EnumParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {} value: {:?}", self.field, self.value)
    }
}

/// One student × standard × year enrolment event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EnrolmentRecord {
    pub student_id: String,
    pub standard_id: String,
    pub year: u16,
    pub domain: String,
    pub kind: StandardKind,
    pub mode: AssessmentMode,
}

/// Demographic and eligibility attributes of one student.
///
/// IDI-style eligibility checks (tax/birth/visa presence, prior-level
/// records, state-school attendance) are carried as named boolean flags;
/// no record linkage is attempted here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentMeta {
    pub student_id: String,
    pub sex: Sex,
    /// Non-empty; multi-membership allowed.
    pub ethnicities: BTreeSet<Ethnicity>,
    /// Raw school decile, 1-10.
    pub decile: u8,
    /// Presence flags used by population filters, e.g. "state_school".
    pub flags: BTreeSet<String>,
    /// Assigned by `cohort::assign_cohorts`, not raw data.
    pub cohort_year: Option<u16>,
}

impl StudentMeta {
    pub fn decile_band(&self) -> DecileBand {
        DecileBand::from_decile(self.decile).unwrap_or(DecileBand::Medium)
    }
}

/// Conjunction of optional attribute filters picking out a sub-population.
/// An empty selector matches every student.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubpopSelector {
    pub sex: Option<Sex>,
    pub ethnicity: Option<Ethnicity>,
    pub decile_band: Option<DecileBand>,
    pub cohort_year: Option<u16>,
}

impl SubpopSelector {
    pub fn matches(&self, student: &StudentMeta) -> bool {
        if let Some(sex) = self.sex {
            if student.sex != sex {
                return false;
            }
        }
        if let Some(eth) = self.ethnicity {
            if !student.ethnicities.contains(&eth) {
                return false;
            }
        }
        if let Some(band) = self.decile_band {
            if student.decile_band() != band {
                return false;
            }
        }
        if let Some(year) = self.cohort_year {
            if student.cohort_year != Some(year) {
                return false;
            }
        }
        true
    }
}

/// Pre-projection filter deciding which students' enrolments enter a graph.
///
/// Shares the selector shape: slicing and sub-population selection are both
/// conjunctions over student attributes.
pub type SliceSpec = SubpopSelector;
