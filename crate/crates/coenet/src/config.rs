//! TOML run and generator configurations.
//!
//! Parsing is strict (unknown keys rejected) and validation is exhaustive:
//! every problem found in one pass is reported, each diagnostic naming the
//! config section and field it came from.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use coenet_core::filter::FilterRules;
use coenet_core::synth::{BlockSpec, GeneratorConfig, GroupSpec};
use coenet_core::types::{SubpopSelector, YEAR_MAX, YEAR_MIN};
use serde::Deserialize;

/// Aggregated validation diagnostics, one human-readable line each.
#[derive(Debug)]
pub struct ConfigErrors {
    pub errors: Vec<String>,
}

impl ConfigErrors {
    fn new() -> ConfigErrors {
        ConfigErrors { errors: Vec::new() }
    }

    fn push(&mut self, message: String) {
        self.errors.push(message);
    }

    fn into_result<T>(self, value: T) -> Result<T, ConfigErrors> {
        if self.errors.is_empty() {
            Ok(value)
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, err) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{err}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn single(message: String) -> ConfigErrors {
    ConfigErrors {
        errors: vec![message],
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInput {
    enrolments: Option<String>,
    students: Option<String>,
    generator: Option<String>,
    generator_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFilters {
    #[serde(default)]
    require_flags: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRcp {
    #[serde(default = "default_threshold")]
    threshold: f64,
}

fn default_threshold() -> f64 {
    1.0
}

impl Default for RawRcp {
    fn default() -> Self {
        RawRcp {
            threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInfomap {
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_tau")]
    tau: f64,
}

fn default_trials() -> usize {
    10
}

fn default_tau() -> f64 {
    0.15
}

impl Default for RawInfomap {
    fn default() -> Self {
        RawInfomap {
            trials: default_trials(),
            tau: default_tau(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBootstrap {
    #[serde(default = "default_reps")]
    reps: u32,
    #[serde(default = "default_perturb")]
    perturb: f64,
}

fn default_reps() -> u32 {
    1000
}

fn default_perturb() -> f64 {
    0.2
}

impl Default for RawBootstrap {
    fn default() -> Self {
        RawBootstrap {
            reps: default_reps(),
            perturb: default_perturb(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSelector {
    id: String,
    sex: Option<String>,
    ethnicity: Option<String>,
    decile_band: Option<String>,
    cohort_year: Option<u16>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    #[serde(default)]
    input: RawInput,
    output_dir: String,
    #[serde(default)]
    master_seed: u64,
    #[serde(default)]
    filters: RawFilters,
    #[serde(default)]
    rcp: RawRcp,
    #[serde(default)]
    infomap: RawInfomap,
    #[serde(default)]
    bootstrap: RawBootstrap,
    #[serde(default, rename = "slice")]
    slices: Vec<RawSelector>,
    #[serde(default, rename = "selector")]
    selectors: Vec<RawSelector>,
}

/// Where the run's enrolment data comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    Files {
        enrolments: PathBuf,
        students: PathBuf,
    },
    Generator {
        config: PathBuf,
        seed: u64,
    },
}

/// A named slice or sub-population selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedSelector {
    pub id: String,
    pub selector: SubpopSelector,
}

/// Validated run configuration driving the whole pipeline.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: InputSource,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub filters: FilterRules,
    pub rcp_threshold: f64,
    pub infomap_trials: usize,
    pub infomap_tau: f64,
    pub bootstrap_reps: u32,
    pub bootstrap_perturb: f64,
    pub slices: Vec<NamedSelector>,
    pub selectors: Vec<NamedSelector>,
}

/// Selector label reserved for the implicit all-students baseline.
pub const BASELINE_SELECTOR_ID: &str = "all";
/// Slice label reserved for the union-network baseline rows.
pub const UNION_SLICE_ID: &str = "union";

fn parse_selector(
    raw: &RawSelector,
    section: &str,
    index: usize,
    errors: &mut ConfigErrors,
) -> SubpopSelector {
    let mut selector = SubpopSelector::default();
    let at = |field: &str| format!("{section}[{index}].{field}");
    if let Some(sex) = &raw.sex {
        match sex.parse() {
            Ok(v) => selector.sex = Some(v),
            Err(_) => errors.push(format!("{}: invalid sex {sex:?}", at("sex"))),
        }
    }
    if let Some(eth) = &raw.ethnicity {
        match eth.parse() {
            Ok(v) => selector.ethnicity = Some(v),
            Err(_) => errors.push(format!("{}: invalid ethnicity {eth:?}", at("ethnicity"))),
        }
    }
    if let Some(band) = &raw.decile_band {
        match band.parse() {
            Ok(v) => selector.decile_band = Some(v),
            Err(_) => errors.push(format!("{}: invalid decile_band {band:?}", at("decile_band"))),
        }
    }
    if let Some(year) = raw.cohort_year {
        if (YEAR_MIN..=YEAR_MAX).contains(&year) {
            selector.cohort_year = Some(year);
        } else {
            errors.push(format!(
                "{}: cohort_year {year} outside [{YEAR_MIN}, {YEAR_MAX}]",
                at("cohort_year")
            ));
        }
    }
    selector
}

fn validate_ids(raws: &[RawSelector], section: &str, reserved: &str, errors: &mut ConfigErrors) {
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in raws.iter().enumerate() {
        let id = raw.id.trim();
        if id.is_empty() {
            errors.push(format!("{section}[{i}].id: must not be empty"));
        } else if id == reserved {
            errors.push(format!(
                "{section}[{i}].id: {id:?} is reserved for baseline output rows"
            ));
        } else if id.contains(['/', '\\']) || id.contains(char::is_whitespace) {
            errors.push(format!(
                "{section}[{i}].id: {id:?} must not contain path separators or whitespace"
            ));
        } else if !seen.insert(id.to_string()) {
            errors.push(format!("{section}[{i}].id: duplicate id {id:?}"));
        }
    }
}

impl RunConfig {
    /// Parse and validate. Relative paths resolve against `base_dir`
    /// (normally the config file's directory). All problems are reported
    /// together, not just the first.
    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigErrors> {
        let raw: RawRunConfig =
            toml::from_str(text).map_err(|e| single(format!("config parse error: {e}")))?;
        let mut errors = ConfigErrors::new();

        let resolve = |p: &str| -> PathBuf {
            let path = Path::new(p);
            if path.is_absolute() {
                path.to_path_buf()
            } else {
                base_dir.join(path)
            }
        };
        let check_exists = |path: &Path, field: &str, errors: &mut ConfigErrors| {
            if !path.exists() {
                errors.push(format!("input.{field}: path {} does not exist", path.display()));
            }
        };

        let input = match (&raw.input.enrolments, &raw.input.students, &raw.input.generator) {
            (Some(e), Some(s), None) => {
                let enrolments = resolve(e);
                let students = resolve(s);
                check_exists(&enrolments, "enrolments", &mut errors);
                check_exists(&students, "students", &mut errors);
                InputSource::Files {
                    enrolments,
                    students,
                }
            }
            (None, None, Some(g)) => {
                let config = resolve(g);
                check_exists(&config, "generator", &mut errors);
                InputSource::Generator {
                    config,
                    seed: raw.input.generator_seed.unwrap_or(0),
                }
            }
            _ => {
                errors.push(
                    "input: set either enrolments + students, or generator, not both or neither"
                        .into(),
                );
                InputSource::Generator {
                    config: PathBuf::new(),
                    seed: 0,
                }
            }
        };
        if raw.input.generator.is_none() && raw.input.generator_seed.is_some() {
            errors.push("input.generator_seed: only meaningful with input.generator".into());
        }

        if !(raw.rcp.threshold.is_finite() && raw.rcp.threshold > 0.0) {
            errors.push(format!(
                "rcp.threshold: must be a positive finite number, got {}",
                raw.rcp.threshold
            ));
        }
        if raw.infomap.trials < 1 {
            errors.push("infomap.trials: must be at least 1".into());
        }
        if !(raw.infomap.tau >= 0.0 && raw.infomap.tau < 1.0) {
            errors.push(format!(
                "infomap.tau: must lie in [0, 1), got {}",
                raw.infomap.tau
            ));
        }
        if raw.bootstrap.reps < 1 {
            errors.push("bootstrap.reps: must be at least 1".into());
        }
        if !(raw.bootstrap.perturb >= 0.0 && raw.bootstrap.perturb < 1.0) {
            errors.push(format!(
                "bootstrap.perturb: must lie in [0, 1), got {}",
                raw.bootstrap.perturb
            ));
        }

        if raw.slices.is_empty() {
            errors.push("slice: at least one [[slice]] is required".into());
        }
        if raw.selectors.is_empty() {
            errors.push("selector: at least one [[selector]] is required".into());
        }
        validate_ids(&raw.slices, "slice", UNION_SLICE_ID, &mut errors);
        validate_ids(&raw.selectors, "selector", BASELINE_SELECTOR_ID, &mut errors);

        let slices = raw
            .slices
            .iter()
            .enumerate()
            .map(|(i, s)| NamedSelector {
                id: s.id.trim().to_string(),
                selector: parse_selector(s, "slice", i, &mut errors),
            })
            .collect();
        let selectors = raw
            .selectors
            .iter()
            .enumerate()
            .map(|(i, s)| NamedSelector {
                id: s.id.trim().to_string(),
                selector: parse_selector(s, "selector", i, &mut errors),
            })
            .collect();

        errors.into_result(RunConfig {
            input,
            output_dir: resolve(&raw.output_dir),
            master_seed: raw.master_seed,
            filters: FilterRules {
                required_flags: raw.filters.require_flags,
            },
            rcp_threshold: raw.rcp.threshold,
            infomap_trials: raw.infomap.trials,
            infomap_tau: raw.infomap.tau,
            bootstrap_reps: raw.bootstrap.reps,
            bootstrap_perturb: raw.bootstrap.perturb,
            slices,
            selectors,
        })
    }

    /// Read, parse, and validate a run config file. Returns the raw text
    /// alongside so callers can hash exactly what was read.
    pub fn load(path: &Path) -> Result<(RunConfig, String), ConfigErrors> {
        let text = fs::read_to_string(path)
            .map_err(|e| single(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let config = RunConfig::parse(&text, base)?;
        Ok((config, text))
    }
}

// ---------------------------------------------------------------------------
// Generator configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMinMax {
    min: u32,
    max: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    name: String,
    standards: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    name: String,
    students: u32,
    weights: Vec<f64>,
    sex: Option<String>,
    ethnicity: Option<String>,
    decile: Option<u8>,
}

/// Synthetic-cohort generator config as written in TOML: a year, the
/// standards-per-student range, `[[block]]` tables, and `[[group]]` tables.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfigFile {
    #[serde(default = "default_gen_year")]
    year: u16,
    standards_per_student: Option<RawMinMax>,
    #[serde(default, rename = "block")]
    blocks: Vec<RawBlock>,
    #[serde(default, rename = "group")]
    groups: Vec<RawGroup>,
}

fn default_gen_year() -> u16 {
    2016
}

impl GeneratorConfigFile {
    pub fn parse(text: &str) -> Result<GeneratorConfigFile, ConfigErrors> {
        toml::from_str(text).map_err(|e| single(format!("generator config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<GeneratorConfigFile, ConfigErrors> {
        let text = fs::read_to_string(path)
            .map_err(|e| single(format!("cannot read {}: {e}", path.display())))?;
        GeneratorConfigFile::parse(&text)
    }

    /// Resolve enum-valued fields into the core generator config,
    /// collecting every bad value. Structural checks (weight lengths,
    /// non-empty blocks) are deferred to generation itself.
    pub fn to_generator_config(&self) -> Result<GeneratorConfig, ConfigErrors> {
        let mut errors = ConfigErrors::new();
        let defaults = GeneratorConfig::default();
        let (standards_min, standards_max) = match &self.standards_per_student {
            Some(range) => (range.min, range.max),
            None => (defaults.standards_min, defaults.standards_max),
        };
        if !(YEAR_MIN..=YEAR_MAX).contains(&self.year) {
            errors.push(format!(
                "year: {} outside [{YEAR_MIN}, {YEAR_MAX}]",
                self.year
            ));
        }

        let blocks = self
            .blocks
            .iter()
            .map(|b| BlockSpec {
                name: b.name.clone(),
                standards: b.standards,
            })
            .collect();
        let mut groups = Vec::with_capacity(self.groups.len());
        for (i, g) in self.groups.iter().enumerate() {
            let mut spec = GroupSpec {
                name: g.name.clone(),
                students: g.students,
                weights: g.weights.clone(),
                sex: None,
                ethnicity: None,
                decile: None,
            };
            if let Some(sex) = &g.sex {
                match sex.parse() {
                    Ok(v) => spec.sex = Some(v),
                    Err(_) => errors.push(format!("group[{i}].sex: invalid sex {sex:?}")),
                }
            }
            if let Some(eth) = &g.ethnicity {
                match eth.parse() {
                    Ok(v) => spec.ethnicity = Some(v),
                    Err(_) => {
                        errors.push(format!("group[{i}].ethnicity: invalid ethnicity {eth:?}"))
                    }
                }
            }
            if let Some(decile) = g.decile {
                if (1..=10).contains(&decile) {
                    spec.decile = Some(decile);
                } else {
                    errors.push(format!("group[{i}].decile: {decile} outside [1, 10]"));
                }
            }
            groups.push(spec);
        }

        errors.into_result(GeneratorConfig {
            blocks,
            groups,
            standards_min,
            standards_max,
            year: self.year,
        })
    }
}
