//! End-to-end run orchestration: ingest or generate, slice, project,
//! normalize, detect communities, measure sub-population entropy, and write
//! every artifact plus a manifest describing the run.
//!
//! Determinism contract: with fixed input files, config, and master seed,
//! all numeric artifacts are byte-identical across runs and across worker
//! counts. Only the manifest's timing fields vary.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use coenet_core::cohort::{apply_cohorts, assign_cohorts};
use coenet_core::community::{detect_infomap, modularity};
use coenet_core::entropy::{bootstrap_replicate, entropy, subpop_counts, summarize_replicates};
use coenet_core::filter::filter_population;
use coenet_core::graph::{build_bipartite, project_standards_with_cap, DEFAULT_STANDARD_CAP};
use coenet_core::rcp::{compute_rcp, prune, RcpError};
use coenet_core::seeds::derive_seed;
use coenet_core::synth::generate_synthetic;
use coenet_core::types::{EnrolmentRecord, StudentMeta, SubpopSelector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    GeneratorConfigFile, InputSource, NamedSelector, RunConfig, BASELINE_SELECTOR_ID,
    UNION_SLICE_ID,
};
use crate::export::{
    write_edge_csv, write_entropy_csv, write_graph_json, write_graphml, write_partition_csv,
    EntropyRow,
};
use crate::ingest::{read_enrolments_file, read_students_file};

/// Worker-count env override honoured by `thread_pool`.
pub const THREADS_ENV: &str = "COENET_THREADS";

/// Rayon pool capped by COENET_THREADS when set (0 / unparseable = default).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSection {
    pub students_before: usize,
    pub students_after: usize,
    pub removed_per_rule: Vec<(String, usize)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub build_ms: u128,
    pub project_ms: u128,
    pub rcp_ms: u128,
    pub infomap_ms: u128,
    pub entropy_ms: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceSummary {
    pub id: String,
    pub status: SliceStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub students: usize,
    pub standards: usize,
    pub raw_edges: usize,
    pub nodes_after_prune: usize,
    pub edges_after_prune: usize,
    pub removed_edges: usize,
    pub removed_isolates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub communities: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modularity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codelength: Option<f64>,
    pub trial_codelengths: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen_trial: Option<usize>,
    pub timings: Timings,
}

impl SliceSummary {
    fn new(id: &str) -> SliceSummary {
        SliceSummary {
            id: id.to_string(),
            status: SliceStatus::Ok,
            error: None,
            students: 0,
            standards: 0,
            raw_edges: 0,
            nodes_after_prune: 0,
            edges_after_prune: 0,
            removed_edges: 0,
            removed_isolates: 0,
            communities: None,
            modularity: None,
            codelength: None,
            trial_codelengths: Vec::new(),
            chosen_trial: None,
            timings: Timings::default(),
        }
    }
}

/// Run record written to `manifest.json`. Timings aside, its content is a
/// pure function of (inputs, config, master seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub filter: FilterSection,
    pub slices: Vec<SliceSummary>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    /// Ids of slices whose processing aborted; non-empty means exit code 1.
    pub failed_slices: Vec<String>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct PruneReport {
    threshold: f64,
    nodes_before: usize,
    nodes_after: usize,
    removed_edges: usize,
    removed_isolates: usize,
    zero_strength_removed: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct SliceOutput {
    summary: SliceSummary,
    /// (file name, bytes), written by the caller in slice order.
    artifacts: Vec<(String, Vec<u8>)>,
    warnings: Vec<String>,
}

fn bootstrap_rows(
    records: &[EnrolmentRecord],
    students: &[StudentMeta],
    slice: &NamedSelector,
    selectors: &[NamedSelector],
    network: &BTreeSet<String>,
    config: &RunConfig,
    warnings: &mut Vec<String>,
) -> Vec<EntropyRow> {
    // The all-students baseline leads, then the configured sub-populations.
    let baseline = NamedSelector {
        id: BASELINE_SELECTOR_ID.to_string(),
        selector: SubpopSelector::default(),
    };
    let mut rows = Vec::new();
    for named in std::iter::once(&baseline).chain(selectors.iter()) {
        let counts = subpop_counts(records, students, &named.selector, &slice.selector, network);
        let point = match entropy(&counts) {
            Ok(point) => point,
            Err(_) => {
                warnings.push(format!(
                    "slice {}: selector {}: entropy undefined (total {} ≤ 1); row skipped",
                    slice.id,
                    named.id,
                    counts.total()
                ));
                continue;
            }
        };
        let seed = derive_seed(
            config.master_seed,
            &format!("bootstrap/{}/{}", slice.id, named.id),
        );
        let replicates: Vec<f64> = (0..u64::from(config.bootstrap_reps))
            .into_par_iter()
            .map(|rep| bootstrap_replicate(&counts, config.bootstrap_perturb, seed, rep))
            .collect();
        let estimate = summarize_replicates(point, replicates, config.bootstrap_perturb, seed);
        rows.push(EntropyRow {
            slice: slice.id.clone(),
            selector: named.id.clone(),
            x_total: counts.total(),
            n_standards: counts.support(),
            estimate,
        });
    }
    rows
}

fn render<F>(write: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), crate::export::ExportError>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn process_slice(
    config: &RunConfig,
    records: &[EnrolmentRecord],
    students: &[StudentMeta],
    slice: &NamedSelector,
) -> Result<SliceOutput> {
    let mut summary = SliceSummary::new(&slice.id);
    let mut warnings = Vec::new();
    let mut artifacts = Vec::new();
    let skip = |mut summary: SliceSummary, mut warnings: Vec<String>, reason: String| {
        warnings.push(format!("slice {}: {reason}; skipped", summary.id));
        summary.status = SliceStatus::Skipped;
        Ok(SliceOutput {
            summary,
            artifacts: Vec::new(),
            warnings,
        })
    };

    let t = Instant::now();
    let bipartite = build_bipartite(records, students, &slice.selector);
    summary.timings.build_ms = t.elapsed().as_millis();
    summary.students = bipartite.student_count();
    summary.standards = bipartite.standard_count();
    if bipartite.is_empty() {
        return skip(summary, warnings, "no matching students".into());
    }

    let t = Instant::now();
    let (raw, projection) = project_standards_with_cap(&bipartite, DEFAULT_STANDARD_CAP);
    summary.timings.project_ms = t.elapsed().as_millis();
    summary.raw_edges = raw.edge_count();
    if !projection.students_over_cap.is_empty() {
        warnings.push(format!(
            "slice {}: {} student(s) above the {}-standard projection cap",
            slice.id,
            projection.students_over_cap.len(),
            projection.cap
        ));
    }
    artifacts.push((
        format!("{}.raw.edges.csv", slice.id),
        render(|buf| write_edge_csv(buf, &raw))?,
    ));
    artifacts.push((
        format!("{}.raw.graphml", slice.id),
        render(|buf| write_graphml(buf, &raw, None))?,
    ));

    let t = Instant::now();
    let rcp = match compute_rcp(&raw) {
        Ok(rcp) => rcp,
        Err(RcpError::EmptyGraph) => {
            return skip(summary, warnings, "projection has no edges".into())
        }
        Err(e) => return Err(anyhow!("RCP failed: {e}")),
    };
    let pruned = prune(&rcp.graph, config.rcp_threshold);
    summary.timings.rcp_ms = t.elapsed().as_millis();
    summary.nodes_after_prune = pruned.nodes_after;
    summary.edges_after_prune = pruned.graph.edge_count();
    summary.removed_edges = pruned.removed_edges;
    summary.removed_isolates = pruned.removed_isolates;
    let report = PruneReport {
        threshold: config.rcp_threshold,
        nodes_before: pruned.nodes_before,
        nodes_after: pruned.nodes_after,
        removed_edges: pruned.removed_edges,
        removed_isolates: pruned.removed_isolates,
        zero_strength_removed: rcp.zero_strength_removed.clone(),
    };
    artifacts.push((
        format!("{}.rcp.prune.json", slice.id),
        serde_json::to_vec_pretty(&report)?,
    ));
    if pruned.graph.node_count() == 0 {
        return skip(summary, warnings, "pruning removed every node".into());
    }

    let t = Instant::now();
    let infomap = detect_infomap(
        &pruned.graph,
        derive_seed(config.master_seed, &format!("infomap/{}", slice.id)),
        config.infomap_trials,
        config.infomap_tau,
    )
    .map_err(|e| anyhow!("community detection failed: {e}"))?;
    summary.timings.infomap_ms = t.elapsed().as_millis();
    summary.communities = Some(infomap.partition.num_communities());
    summary.modularity = Some(modularity(&pruned.graph, &infomap.partition));
    summary.codelength = Some(infomap.codelength);
    summary.trial_codelengths = infomap.trial_codelengths.clone();
    summary.chosen_trial = Some(infomap.chosen_trial);

    artifacts.push((
        format!("{}.partition.csv", slice.id),
        render(|buf| write_partition_csv(buf, &pruned.graph, &infomap.partition))?,
    ));
    artifacts.push((
        format!("{}.rcp.edges.csv", slice.id),
        render(|buf| write_edge_csv(buf, &pruned.graph))?,
    ));
    artifacts.push((
        format!("{}.rcp.graphml", slice.id),
        render(|buf| write_graphml(buf, &pruned.graph, Some(&infomap.partition)))?,
    ));
    artifacts.push((
        format!("{}.rcp.graph.json", slice.id),
        render(|buf| write_graph_json(buf, &pruned.graph, Some(&infomap.partition)))?,
    ));

    let t = Instant::now();
    let network: BTreeSet<String> = pruned.graph.nodes().iter().map(|n| n.id.clone()).collect();
    let rows = bootstrap_rows(
        records,
        students,
        slice,
        &config.selectors,
        &network,
        config,
        &mut warnings,
    );
    summary.timings.entropy_ms = t.elapsed().as_millis();
    artifacts.push((
        format!("{}.entropy.csv", slice.id),
        render(|buf| write_entropy_csv(buf, &rows))?,
    ));

    Ok(SliceOutput {
        summary,
        artifacts,
        warnings,
    })
}

/// All-students baseline entropy on the union network (every student, no
/// slice restriction), so per-slice baselines have a global reference.
fn union_baseline(
    config: &RunConfig,
    records: &[EnrolmentRecord],
    students: &[StudentMeta],
    warnings: &mut Vec<String>,
) -> Result<Option<(String, Vec<u8>)>> {
    let union = NamedSelector {
        id: UNION_SLICE_ID.to_string(),
        selector: SubpopSelector::default(),
    };
    let bipartite = build_bipartite(records, students, &union.selector);
    if bipartite.is_empty() {
        warnings.push("union baseline: no students; skipped".into());
        return Ok(None);
    }
    let (raw, _) = project_standards_with_cap(&bipartite, DEFAULT_STANDARD_CAP);
    let rcp = match compute_rcp(&raw) {
        Ok(rcp) => rcp,
        Err(_) => {
            warnings.push("union baseline: projection has no edges; skipped".into());
            return Ok(None);
        }
    };
    let pruned = prune(&rcp.graph, config.rcp_threshold);
    let network: BTreeSet<String> = pruned.graph.nodes().iter().map(|n| n.id.clone()).collect();
    let rows = bootstrap_rows(
        records,
        students,
        &union,
        &[],
        &network,
        config,
        warnings,
    );
    let bytes = render(|buf| write_entropy_csv(buf, &rows))?;
    Ok(Some((format!("{UNION_SLICE_ID}.entropy.csv"), bytes)))
}

fn load_inputs(config: &RunConfig) -> Result<(Vec<EnrolmentRecord>, Vec<StudentMeta>, Vec<String>)> {
    let mut warnings = Vec::new();
    match &config.input {
        InputSource::Files {
            enrolments,
            students,
        } => {
            let parsed = read_enrolments_file(enrolments)
                .with_context(|| format!("reading {}", enrolments.display()))?;
            for reject in &parsed.rejects {
                warnings.push(format!(
                    "{}: row {}: {}",
                    enrolments.display(),
                    reject.row,
                    reject.reason
                ));
            }
            if parsed.duplicates > 0 {
                warnings.push(format!(
                    "{}: {} duplicate enrolment row(s) collapsed",
                    enrolments.display(),
                    parsed.duplicates
                ));
            }
            let roster = read_students_file(students)
                .with_context(|| format!("reading {}", students.display()))?;
            for reject in &roster.rejects {
                warnings.push(format!(
                    "{}: row {}: {}",
                    students.display(),
                    reject.row,
                    reject.reason
                ));
            }
            Ok((parsed.records, roster.students, warnings))
        }
        InputSource::Generator {
            config: generator_path,
            seed,
        } => {
            let file = GeneratorConfigFile::load(generator_path)
                .map_err(|e| anyhow!("generator config: {e}"))?;
            let generator = file
                .to_generator_config()
                .map_err(|e| anyhow!("generator config: {e}"))?;
            let cohort =
                generate_synthetic(&generator, *seed).map_err(|e| anyhow!("generation: {e}"))?;
            Ok((cohort.records, cohort.students, warnings))
        }
    }
}

/// Execute a validated run config. `config_text` is the exact config bytes,
/// hashed into the manifest. Fails only on run-wide problems (unreadable
/// input, bad generator spec); per-slice failures are recorded and the
/// remaining slices still complete.
pub fn run_pipeline(config: &RunConfig, config_text: &str) -> Result<PipelineOutcome> {
    let (records, mut students, mut warnings) = load_inputs(config)?;
    let cohorts = assign_cohorts(&records);
    apply_cohorts(&mut students, &cohorts);

    let (records, students, filter_summary) =
        filter_population(&records, &students, &config.filters)
            .map_err(|e| anyhow!("population filter: {e}"))?;

    let pool = thread_pool()?;
    let outputs: Vec<Result<SliceOutput>> = pool.install(|| {
        config
            .slices
            .par_iter()
            .map(|slice| process_slice(config, &records, &students, slice))
            .collect()
    });

    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let mut slices = Vec::with_capacity(outputs.len());
    let mut artifacts = Vec::new();
    let mut failed_slices = Vec::new();
    let write_artifact = |name: String, bytes: Vec<u8>| -> Result<ArtifactEntry> {
        let path = config.output_dir.join(&name);
        fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(ArtifactEntry {
            path: name,
            sha256: sha256_hex(&bytes),
        })
    };
    for (slice, output) in config.slices.iter().zip(outputs) {
        match output {
            Ok(output) => {
                warnings.extend(output.warnings);
                for (name, bytes) in output.artifacts {
                    artifacts.push(write_artifact(name, bytes)?);
                }
                slices.push(output.summary);
            }
            Err(e) => {
                let mut summary = SliceSummary::new(&slice.id);
                summary.status = SliceStatus::Failed;
                summary.error = Some(format!("{e:#}"));
                failed_slices.push(slice.id.clone());
                slices.push(summary);
            }
        }
    }

    if let Some((name, bytes)) =
        pool.install(|| union_baseline(config, &records, &students, &mut warnings))?
    {
        artifacts.push(write_artifact(name, bytes)?);
    }

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        master_seed: config.master_seed,
        filter: FilterSection {
            students_before: filter_summary.students_before,
            students_after: filter_summary.students_after,
            removed_per_rule: filter_summary.removed_per_rule,
        },
        slices,
        warnings,
        artifacts,
    };
    write_manifest(&config.output_dir, &manifest)?;

    Ok(PipelineOutcome {
        manifest,
        failed_slices,
        output_dir: config.output_dir.clone(),
    })
}

/// Atomic write: the manifest appears complete or not at all.
fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(manifest)?;
    let tmp = dir.join("manifest.json.tmp");
    let target = dir.join("manifest.json");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &target).with_context(|| format!("renaming to {}", target.display()))?;
    Ok(())
}
