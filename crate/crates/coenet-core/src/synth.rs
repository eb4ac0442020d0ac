//! Seeded synthetic cohort generation.
//!
//! Desk-scale stand-in for the access-restricted microdata: K subject
//! blocks of standards, student groups with preference weights over
//! blocks. Each student draws a block by their group's weights, then a
//! standard uniformly within the block, planting both community structure
//! and group-level entropy differences. Output is a pure function of
//! (config, seed).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::filter::{FLAG_PRIOR_LEVEL, FLAG_RESIDENT, FLAG_STATE_SCHOOL};
use crate::types::{
    AssessmentMode, DecileBand, EnrolmentRecord, Ethnicity, Sex, StandardKind, StudentMeta,
};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    /// Doubles as the standards' domain label.
    pub name: String,
    pub standards: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub name: String,
    pub students: u32,
    /// Preference weight per block; same length as the block list.
    pub weights: Vec<f64>,
    /// Demographics stamped on every student of the group, so selectors
    /// can target it. Unset fields get alternating/default values.
    pub sex: Option<Sex>,
    pub ethnicity: Option<Ethnicity>,
    pub decile: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub blocks: Vec<BlockSpec>,
    pub groups: Vec<GroupSpec>,
    /// Standards per student, uniform over [min, max].
    pub standards_min: u32,
    pub standards_max: u32,
    pub year: u16,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            blocks: Vec::new(),
            groups: Vec::new(),
            standards_min: 8,
            standards_max: 14,
            year: 2016,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    NoBlocks,
    NoStudents,
    EmptyBlock { block: String },
    WeightMismatch { group: String, expected: usize, got: usize },
    InvalidWeights { group: String },
    InvalidStandardsRange { min: u32, max: u32 },
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::NoBlocks => f.write_str("generator config has no blocks"),
            SynthError::NoStudents => f.write_str("generator config has no students"),
            SynthError::EmptyBlock { block } => write!(f, "block {block:?} has zero standards"),
            SynthError::WeightMismatch {
                group,
                expected,
                got,
            } => write!(
                f,
                "group {group:?} has {got} weights but there are {expected} blocks"
            ),
            SynthError::InvalidWeights { group } => {
                write!(f, "group {group:?} weights must be non-negative with a positive sum")
            }
            SynthError::InvalidStandardsRange { min, max } => {
                write!(f, "standards per student range [{min}, {max}] is invalid")
            }
        }
    }
}

/// Generated cohort with the planted ground truth kept explicit.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub records: Vec<EnrolmentRecord>,
    pub students: Vec<StudentMeta>,
    /// standard id → index of the block it was planted in.
    pub standard_blocks: BTreeMap<String, usize>,
    /// student id → group name.
    pub student_groups: BTreeMap<String, String>,
}

fn validate(config: &GeneratorConfig) -> Result<(), SynthError> {
    if config.blocks.is_empty() {
        return Err(SynthError::NoBlocks);
    }
    for block in &config.blocks {
        if block.standards == 0 {
            return Err(SynthError::EmptyBlock {
                block: block.name.clone(),
            });
        }
    }
    if config.groups.iter().map(|g| g.students).sum::<u32>() == 0 {
        return Err(SynthError::NoStudents);
    }
    for group in &config.groups {
        if group.weights.len() != config.blocks.len() {
            return Err(SynthError::WeightMismatch {
                group: group.name.clone(),
                expected: config.blocks.len(),
                got: group.weights.len(),
            });
        }
        let sum: f64 = group.weights.iter().sum();
        if group.weights.iter().any(|&w| w < 0.0) || sum <= 0.0 {
            return Err(SynthError::InvalidWeights {
                group: group.name.clone(),
            });
        }
    }
    if config.standards_min == 0 || config.standards_min > config.standards_max {
        return Err(SynthError::InvalidStandardsRange {
            min: config.standards_min,
            max: config.standards_max,
        });
    }
    Ok(())
}

pub fn standard_id(block: usize, index: u32) -> String {
    format!("S{block:02}-{index:03}")
}

/// Generate a synthetic cohort; deterministic for fixed (config, seed).
pub fn generate_synthetic(
    config: &GeneratorConfig,
    seed: u64,
) -> Result<SyntheticCohort, SynthError> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut standard_blocks = BTreeMap::new();
    for (b, block) in config.blocks.iter().enumerate() {
        for i in 0..block.standards {
            standard_blocks.insert(standard_id(b, i), b);
        }
    }
    let total_standards: u64 = config.blocks.iter().map(|b| u64::from(b.standards)).sum();

    let mut records = Vec::new();
    let mut students = Vec::new();
    let mut student_groups = BTreeMap::new();
    let default_flags: BTreeSet<String> = [FLAG_STATE_SCHOOL, FLAG_RESIDENT, FLAG_PRIOR_LEVEL]
        .iter()
        .map(|f| String::from(*f))
        .collect();

    let mut student_counter = 0u32;
    for group in &config.groups {
        let block_picker = WeightedIndex::new(&group.weights)
            .map_err(|_| SynthError::InvalidWeights {
                group: group.name.clone(),
            })?;
        for _ in 0..group.students {
            let student_id = format!("{}-{:05}", group.name, student_counter);
            student_counter += 1;

            let target = rng.gen_range(config.standards_min..=config.standards_max);
            let target = (u64::from(target)).min(total_standards) as u32;
            let mut taken: BTreeSet<String> = BTreeSet::new();
            // Rejection sampling on duplicates, bounded so degenerate
            // configs (tiny blocks) cannot spin forever.
            let mut attempts = 0u32;
            while (taken.len() as u32) < target && attempts < target * 50 {
                attempts += 1;
                let block = block_picker.sample(&mut rng);
                let index = rng.gen_range(0..config.blocks[block].standards);
                taken.insert(standard_id(block, index));
            }

            for id in &taken {
                let block = standard_blocks[id];
                // Deterministic standard attributes from the planted index.
                let index: u32 = id[4..].parse().unwrap_or(0);
                records.push(EnrolmentRecord {
                    student_id: student_id.clone(),
                    standard_id: id.clone(),
                    year: config.year,
                    domain: config.blocks[block].name.clone(),
                    kind: if index % 4 == 3 {
                        StandardKind::Unit
                    } else {
                        StandardKind::Achievement
                    },
                    mode: if index % 2 == 0 {
                        AssessmentMode::External
                    } else {
                        AssessmentMode::Internal
                    },
                });
            }

            let sex = group.sex.unwrap_or(if student_counter % 2 == 0 {
                Sex::Male
            } else {
                Sex::Female
            });
            let ethnicity = group.ethnicity.unwrap_or(Ethnicity::European);
            let decile = group.decile.unwrap_or(5);
            debug_assert!(DecileBand::from_decile(decile).is_some());
            students.push(StudentMeta {
                student_id: student_id.clone(),
                sex,
                ethnicities: [ethnicity].into_iter().collect(),
                decile,
                flags: default_flags.clone(),
                cohort_year: Some(config.year),
            });
            student_groups.insert(student_id, group.name.clone());
        }
    }

    Ok(SyntheticCohort {
        records,
        students,
        standard_blocks,
        student_groups,
    })
}
