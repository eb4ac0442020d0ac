//! Bipartite student–standard graphs and their projection onto the
//! standard node set.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::types::{AssessmentMode, EnrolmentRecord, SliceSpec, StandardKind, StudentMeta};

/// Default per-student standard count above which projection warns: pair
/// expansion is quadratic in the count.
pub const DEFAULT_STANDARD_CAP: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StandardInfo {
    pub id: String,
    pub domain: String,
    pub kind: StandardKind,
    pub mode: AssessmentMode,
}

/// Students and standards joined by unweighted enrolment edges.
/// A standard appearing in several years within a slice is one node.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    standards: Vec<StandardInfo>,
    students: Vec<String>,
    /// Per student, sorted deduplicated standard indices.
    adjacency: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn standards(&self) -> &[StandardInfo] {
        &self.standards
    }

    pub fn students(&self) -> &[String] {
        &self.students
    }

    pub fn student_count(&self) -> usize {
        self.students.len()
    }

    pub fn standard_count(&self) -> usize {
        self.standards.len()
    }

    /// Standards taken by the student at `student_idx`, sorted.
    pub fn student_standards(&self, student_idx: usize) -> &[usize] {
        &self.adjacency[student_idx]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }
}

/// Build the bipartite graph for the students matching `slice`.
///
/// All records of a matching student enter the graph, including records
/// from outside the student's cohort year. Selecting no students yields an
/// empty graph, not an error.
pub fn build_bipartite(
    records: &[EnrolmentRecord],
    students: &[StudentMeta],
    slice: &SliceSpec,
) -> BipartiteGraph {
    let selected: BTreeSet<&str> = students
        .iter()
        .filter(|s| slice.matches(s))
        .map(|s| s.student_id.as_str())
        .collect();

    // Deterministic node order: sorted ids. Standard metadata comes from
    // the first record seen for that standard.
    let mut standard_meta: BTreeMap<&str, &EnrolmentRecord> = BTreeMap::new();
    let mut pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
    for rec in records {
        if !selected.contains(rec.student_id.as_str()) {
            continue;
        }
        standard_meta.entry(rec.standard_id.as_str()).or_insert(rec);
        pairs.insert((rec.student_id.as_str(), rec.standard_id.as_str()));
    }

    let standards: Vec<StandardInfo> = standard_meta
        .values()
        .map(|rec| StandardInfo {
            id: rec.standard_id.clone(),
            domain: rec.domain.clone(),
            kind: rec.kind,
            mode: rec.mode,
        })
        .collect();
    let standard_index: BTreeMap<&str, usize> = standards
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();

    let students_with_records: Vec<String> = pairs
        .iter()
        .map(|(student, _)| *student)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(String::from)
        .collect();
    let student_index: BTreeMap<&str, usize> = students_with_records
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let mut adjacency = alloc::vec![Vec::new(); students_with_records.len()];
    for (student, standard) in pairs {
        adjacency[student_index[student]].push(standard_index[standard]);
    }
    // BTreeSet iteration already sorts per student since pairs are ordered.

    BipartiteGraph {
        standards,
        students: students_with_records,
        adjacency,
    }
}

/// Whether edge weights are raw co-enrolment counts or RCP values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    RawCount,
    Rcp,
}

/// Undirected weighted standard–standard graph. No self-loops; weights
/// symmetric; strengths and the total weight are cached.
#[derive(Debug, Clone)]
pub struct CoGraph {
    nodes: Vec<StandardInfo>,
    /// Sorted neighbor lists, both directions stored.
    adjacency: Vec<Vec<(usize, f64)>>,
    strength: Vec<f64>,
    /// Sum of undirected edge weights (each edge once).
    total_weight: f64,
    weight_mode: WeightMode,
}

impl CoGraph {
    /// Build from undirected edges given once per pair. Self-loops and
    /// duplicate pairs are rejected by panic; callers construct edges from
    /// sets keyed by ordered pairs.
    pub fn from_edges(
        nodes: Vec<StandardInfo>,
        edges: &[(usize, usize, f64)],
        weight_mode: WeightMode,
    ) -> CoGraph {
        let n = nodes.len();
        let mut adjacency = alloc::vec![Vec::new(); n];
        let mut strength = alloc::vec![0.0; n];
        let mut total_weight = 0.0;
        for &(a, b, w) in edges {
            assert!(a != b, "self-loop on node {a}");
            assert!(a < n && b < n, "edge endpoint out of range");
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
            strength[a] += w;
            strength[b] += w;
            total_weight += w;
        }
        for list in &mut adjacency {
            list.sort_unstable_by(|x, y| x.0.cmp(&y.0));
            for pair in list.windows(2) {
                assert!(pair[0].0 != pair[1].0, "parallel edge");
            }
        }
        CoGraph {
            nodes,
            adjacency,
            strength,
            total_weight,
            weight_mode,
        }
    }

    pub fn nodes(&self) -> &[StandardInfo] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn strength(&self, node: usize) -> f64 {
        self.strength[node]
    }

    /// Sum of undirected edge weights, each edge counted once.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn weight_mode(&self) -> WeightMode {
        self.weight_mode
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency[a]
            .binary_search_by(|probe| probe.0.cmp(&b))
            .ok()
            .map(|i| self.adjacency[a][i].1)
    }

    /// Undirected edges with `a < b`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .filter(move |(b, _)| a < *b)
                .map(move |&(b, w)| (a, b, w))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProjectionReport {
    /// Students whose standard count exceeded the cap; their pairs are
    /// still counted, the report only flags the quadratic cost.
    pub students_over_cap: Vec<String>,
    pub cap: usize,
}

/// Project onto the standard nodes: edge (i, j) weighted by the number of
/// distinct students enrolled in both i and j.
pub fn project_standards(b: &BipartiteGraph) -> CoGraph {
    project_standards_with_cap(b, DEFAULT_STANDARD_CAP).0
}

pub fn project_standards_with_cap(
    b: &BipartiteGraph,
    cap: usize,
) -> (CoGraph, ProjectionReport) {
    let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut over_cap = Vec::new();
    for (student_idx, standards) in b.adjacency.iter().enumerate() {
        if standards.len() > cap {
            over_cap.push(b.students[student_idx].clone());
        }
        for (i, &a) in standards.iter().enumerate() {
            for &c in &standards[i + 1..] {
                *counts.entry((a, c)).or_insert(0.0) += 1.0;
            }
        }
    }
    let edges: Vec<(usize, usize, f64)> = counts
        .into_iter()
        .map(|((a, c), w)| (a, c, w))
        .collect();
    let graph = CoGraph::from_edges(b.standards.clone(), &edges, WeightMode::RawCount);
    (graph, ProjectionReport {
        students_over_cap: over_cap,
        cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Ethnicity, Sex, SubpopSelector};
    use alloc::format;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn rec(student: &str, standard: &str) -> EnrolmentRecord {
        EnrolmentRecord {
            student_id: student.to_string(),
            standard_id: standard.to_string(),
            year: 2016,
            domain: "physics".to_string(),
            kind: StandardKind::Achievement,
            mode: AssessmentMode::External,
        }
    }

    fn meta(id: &str) -> StudentMeta {
        StudentMeta {
            student_id: id.to_string(),
            sex: Sex::Male,
            ethnicities: [Ethnicity::European].into_iter().collect(),
            decile: 5,
            flags: Default::default(),
            cohort_year: Some(2016),
        }
    }

    fn three_student_fixture() -> (Vec<EnrolmentRecord>, Vec<StudentMeta>) {
        // s1{A,B}, s2{A,B}, s3{A,C}
        let records = alloc::vec![
            rec("s1", "A"),
            rec("s1", "B"),
            rec("s2", "A"),
            rec("s2", "B"),
            rec("s3", "A"),
            rec("s3", "C"),
        ];
        let students = alloc::vec![meta("s1"), meta("s2"), meta("s3")];
        (records, students)
    }

    #[test]
    fn bipartite_counts_from_enumeration() {
        let (records, students) = three_student_fixture();
        let b = build_bipartite(&records, &students, &SubpopSelector::default());
        assert_eq!(b.student_count(), 3);
        assert_eq!(b.standard_count(), 3);
        assert_eq!(b.edge_count(), 6);
    }

    #[test]
    fn bipartite_minimal_and_empty() {
        let records = alloc::vec![rec("s1", "A")];
        let students = alloc::vec![meta("s1")];
        let b = build_bipartite(&records, &students, &SubpopSelector::default());
        assert_eq!((b.student_count(), b.standard_count(), b.edge_count()), (1, 1, 1));

        let nobody = SubpopSelector {
            sex: Some(Sex::Female),
            ..Default::default()
        };
        let empty = build_bipartite(&records, &students, &nobody);
        assert!(empty.is_empty());
        assert_eq!(empty.edge_count(), 0);
    }

    #[test]
    fn projection_weights_match_shared_students() {
        let (records, students) = three_student_fixture();
        let b = build_bipartite(&records, &students, &SubpopSelector::default());
        let g = project_standards(&b);
        let idx = |id: &str| g.nodes().iter().position(|n| n.id == id).unwrap();
        assert_eq!(g.weight(idx("A"), idx("B")), Some(2.0));
        assert_eq!(g.weight(idx("A"), idx("C")), Some(1.0));
        assert_eq!(g.weight(idx("B"), idx("C")), None);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn one_standard_per_student_gives_no_edges() {
        let records = alloc::vec![rec("s1", "A"), rec("s2", "B"), rec("s3", "C")];
        let students = alloc::vec![meta("s1"), meta("s2"), meta("s3")];
        let b = build_bipartite(&records, &students, &SubpopSelector::default());
        let g = project_standards(&b);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn complete_overlap_is_complete_graph() {
        let k = 5;
        let n = 7;
        let mut records = Vec::new();
        let mut students = Vec::new();
        for s in 0..n {
            students.push(meta(&format!("s{s}")));
            for std_i in 0..k {
                records.push(rec(&format!("s{s}"), &format!("std{std_i}")));
            }
        }
        let b = build_bipartite(&records, &students, &SubpopSelector::default());
        let g = project_standards(&b);
        assert_eq!(g.edge_count(), k * (k - 1) / 2);
        for (_, _, w) in g.edges() {
            assert_eq!(w, n as f64);
        }
    }

    #[test]
    fn cap_report_flags_heavy_students() {
        let mut records = Vec::new();
        for i in 0..5 {
            records.push(rec("s1", &format!("std{i}")));
        }
        let students = alloc::vec![meta("s1")];
        let b = build_bipartite(&records, &students, &SubpopSelector::default());
        let (_, report) = project_standards_with_cap(&b, 3);
        assert_eq!(report.students_over_cap, alloc::vec!["s1".to_string()]);
    }

    /// Random bipartite membership as bit matrix: students x standards.
    fn membership_strategy() -> impl Strategy<Value = Vec<Vec<bool>>> {
        (1usize..8, 1usize..12).prop_flat_map(|(n_std, n_stu)| {
            prop::collection::vec(prop::collection::vec(any::<bool>(), n_std), n_stu)
        })
    }

    fn graph_from_membership(
        membership: &[Vec<bool>],
    ) -> (Vec<EnrolmentRecord>, Vec<StudentMeta>) {
        let mut records = Vec::new();
        let mut students = Vec::new();
        for (s, row) in membership.iter().enumerate() {
            students.push(meta(&format!("s{s:03}")));
            for (i, &m) in row.iter().enumerate() {
                if m {
                    records.push(rec(&format!("s{s:03}"), &format!("std{i:03}")));
                }
            }
        }
        (records, students)
    }

    proptest! {
        /// Projection weight equals the intersection size of the two
        /// standards' student sets, computed independently from the raw
        /// membership matrix.
        #[test]
        fn projection_matches_brute_force(membership in membership_strategy()) {
            let (records, students) = graph_from_membership(&membership);
            let b = build_bipartite(&records, &students, &SubpopSelector::default());
            let g = project_standards(&b);

            // Brute force over the membership matrix, mapped by id.
            let id_of = |i: usize| format!("std{i:03}");
            for a in 0..membership[0].len() {
                for c in (a + 1)..membership[0].len() {
                    let shared = membership
                        .iter()
                        .filter(|row| row[a] && row[c])
                        .count();
                    let ia = g.nodes().iter().position(|n| n.id == id_of(a));
                    let ic = g.nodes().iter().position(|n| n.id == id_of(c));
                    let w = match (ia, ic) {
                        (Some(ia), Some(ic)) => g.weight(ia, ic).unwrap_or(0.0),
                        _ => 0.0,
                    };
                    prop_assert_eq!(w, shared as f64);
                }
            }

            // Total projected weight = sum over students of C(deg, 2).
            let expected: f64 = b
                .students()
                .iter()
                .enumerate()
                .map(|(s, _)| {
                    let d = b.student_standards(s).len() as f64;
                    d * (d - 1.0) / 2.0
                })
                .sum();
            prop_assert!((g.total_weight() - expected).abs() < 1e-9);
        }

        /// Filtering then projecting equals projecting the filtered slice.
        #[test]
        fn slice_and_projection_commute(membership in membership_strategy()) {
            let (records, mut students) = graph_from_membership(&membership);
            // Alternate sexes so slicing is nontrivial.
            for (i, s) in students.iter_mut().enumerate() {
                s.sex = if i % 2 == 0 { Sex::Male } else { Sex::Female };
            }
            let slice = SubpopSelector { sex: Some(Sex::Male), ..Default::default() };

            let direct = project_standards(&build_bipartite(&records, &students, &slice));

            let kept: BTreeSet<&str> = students
                .iter()
                .filter(|s| slice.matches(s))
                .map(|s| s.student_id.as_str())
                .collect();
            let filtered_records: Vec<_> = records
                .iter()
                .filter(|r| kept.contains(r.student_id.as_str()))
                .cloned()
                .collect();
            let filtered = project_standards(&build_bipartite(
                &filtered_records,
                &students,
                &SubpopSelector::default(),
            ));

            prop_assert_eq!(direct.node_count(), filtered.node_count());
            let direct_edges: Vec<_> = direct.edges().collect();
            let filtered_edges: Vec<_> = filtered.edges().collect();
            prop_assert_eq!(direct_edges, filtered_edges);
        }
    }
}
