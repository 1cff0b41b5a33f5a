//! Code matrices: one row per binary subproblem, one column (codeword) per
//! class.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::{Error, Result};

/// Number of random candidates drawn when searching for a sparse random code.
pub const ECOC_CANDIDATES: usize = 20_000;

/// Smallest class count for which [`gen_ecoc`] switches from the complete code
/// to a sparse random code.
pub const SPARSE_ECOC_MIN_CLASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeEntry {
    #[serde(rename = "1")]
    Pos,
    #[serde(rename = "0")]
    Neg,
    #[serde(rename = "*")]
    DontCare,
}

impl CodeEntry {
    pub fn is_defined(self) -> bool {
        self != CodeEntry::DontCare
    }

    /// Ternary value used by the exponential loss: +1, -1 or 0.
    pub fn sign(self) -> f64 {
        match self {
            CodeEntry::Pos => 1.0,
            CodeEntry::Neg => -1.0,
            CodeEntry::DontCare => 0.0,
        }
    }
}

impl fmt::Display for CodeEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodeEntry::Pos => "1",
            CodeEntry::Neg => "0",
            CodeEntry::DontCare => "*",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Ova,
    #[serde(rename = "allpairs")]
    AllPairs,
    EcocComplete,
    EcocSparseRandom,
}

/// An M×K ternary code matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodeMatrixFile", into = "CodeMatrixFile")]
pub struct CodeMatrix {
    scheme: Scheme,
    classes: usize,
    rows: usize,
    entries: Vec<CodeEntry>,
}

impl CodeMatrix {
    /// Builds a matrix from its rows and checks every structural invariant.
    pub fn new(scheme: Scheme, rows: Vec<Vec<CodeEntry>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidCodeMatrix("matrix has no rows".into()));
        }
        let k = rows[0].len();
        if k < 3 {
            return Err(Error::InvalidClassCount(k));
        }
        if let Some(j) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::InvalidCodeMatrix(format!(
                "row {j} has {} entries, expected {k}",
                rows[j].len()
            )));
        }
        let matrix = CodeMatrix {
            scheme,
            classes: k,
            rows: m,
            entries: rows.into_iter().flatten().collect(),
        };
        matrix.validate()?;
        Ok(matrix)
    }

    fn validate(&self) -> Result<()> {
        for j in 0..self.rows {
            let row = self.row(j);
            if !row.contains(&CodeEntry::Pos) || !row.contains(&CodeEntry::Neg) {
                return Err(Error::InvalidCodeMatrix(format!(
                    "row {j} needs at least one positive and one negative class"
                )));
            }
        }
        for k in 0..self.classes {
            let col = self.column(k);
            if !col.iter().any(|e| e.is_defined()) {
                return Err(Error::InvalidCodeMatrix(format!("column {k} is entirely don't-care")));
            }
            if self.scheme == Scheme::EcocSparseRandom
                && (!col.contains(&CodeEntry::Pos) || !col.contains(&CodeEntry::Neg))
            {
                return Err(Error::InvalidCodeMatrix(format!(
                    "sparse random column {k} needs at least one positive and one negative entry"
                )));
            }
        }
        for a in 0..self.classes {
            for b in a + 1..self.classes {
                if self.column_distance(a, b) == 0.0 {
                    return Err(Error::InvalidCodeMatrix(format!(
                        "columns {a} and {b} are identical"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Number of classes K.
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of binary classifiers M.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn entry(&self, row: usize, class: usize) -> CodeEntry {
        self.entries[row * self.classes + class]
    }

    pub fn row(&self, j: usize) -> &[CodeEntry] {
        &self.entries[j * self.classes..(j + 1) * self.classes]
    }

    /// Codeword of `class`.
    pub fn column(&self, class: usize) -> Vec<CodeEntry> {
        (0..self.rows).map(|j| self.entry(j, class)).collect()
    }

    /// Generalized Hamming distance between two codewords.
    pub fn column_distance(&self, a: usize, b: usize) -> f64 {
        (0..self.rows)
            .map(|j| entry_distance(self.entry(j, a), self.entry(j, b)))
            .sum()
    }
}

fn entry_distance(a: CodeEntry, b: CodeEntry) -> f64 {
    match (a.is_defined(), b.is_defined()) {
        (true, true) if a != b => 1.0,
        (true, false) | (false, true) => 0.5,
        _ => 0.0,
    }
}

/// On-disk layout of a code matrix.
#[derive(Serialize, Deserialize)]
struct CodeMatrixFile {
    scheme: Scheme,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    rows: Vec<Vec<CodeEntry>>,
}

impl TryFrom<CodeMatrixFile> for CodeMatrix {
    type Error = Error;

    fn try_from(file: CodeMatrixFile) -> Result<Self> {
        if file.rows.len() != file.m {
            return Err(Error::DimensionMismatch { expected: file.m, found: file.rows.len() });
        }
        if let Some(row) = file.rows.iter().find(|r| r.len() != file.k) {
            return Err(Error::DimensionMismatch { expected: file.k, found: row.len() });
        }
        CodeMatrix::new(file.scheme, file.rows)
    }
}

impl From<CodeMatrix> for CodeMatrixFile {
    fn from(c: CodeMatrix) -> Self {
        CodeMatrixFile {
            scheme: c.scheme,
            k: c.classes,
            m: c.rows,
            rows: (0..c.rows).map(|j| c.row(j).to_vec()).collect(),
        }
    }
}

fn check_classes(k: usize) -> Result<()> {
    if k < 3 {
        Err(Error::InvalidClassCount(k))
    } else {
        Ok(())
    }
}

/// One-versus-all: the K×K identity pattern.
pub fn gen_ova(k: usize) -> Result<CodeMatrix> {
    check_classes(k)?;
    let rows = (0..k)
        .map(|j| (0..k).map(|c| if c == j { CodeEntry::Pos } else { CodeEntry::Neg }).collect())
        .collect();
    CodeMatrix::new(Scheme::Ova, rows)
}

/// All pairs, one row per pair `(a, b)` with `a < b` in lexicographic order;
/// `a` is positive, `b` negative.
pub fn gen_allpairs(k: usize) -> Result<CodeMatrix> {
    check_classes(k)?;
    let mut rows = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let mut row = vec![CodeEntry::DontCare; k];
            row[a] = CodeEntry::Pos;
            row[b] = CodeEntry::Neg;
            rows.push(row);
        }
    }
    CodeMatrix::new(Scheme::AllPairs, rows)
}

/// Error-correcting output code: the complete code for `k < 8`, otherwise a
/// sparse random code picked from [`ECOC_CANDIDATES`] candidates.
pub fn gen_ecoc(k: usize, seed: u64) -> Result<CodeMatrix> {
    gen_ecoc_with(Exec::default(), k, seed)
}

pub fn gen_ecoc_with(exec: Exec, k: usize, seed: u64) -> Result<CodeMatrix> {
    check_classes(k)?;
    if k < SPARSE_ECOC_MIN_CLASSES {
        complete_code(k)
    } else {
        sparse_random_code(exec, k, seed, ECOC_CANDIDATES)
    }
}

/// Complete code for any `k`, regardless of the sparse threshold.
pub fn gen_ecoc_complete(k: usize) -> Result<CodeMatrix> {
    check_classes(k)?;
    complete_code(k)
}

/// Sparse random code for any `k`, regardless of the sparse threshold.
pub fn gen_ecoc_sparse(exec: Exec, k: usize, seed: u64) -> Result<CodeMatrix> {
    check_classes(k)?;
    sparse_random_code(exec, k, seed, ECOC_CANDIDATES)
}

/// All bipartitions with class 0 on the positive side. Rows are ordered by the
/// membership bits of classes `1..K` read as a binary numeral, class 1 being
/// the most significant bit; the all-positive row is excluded.
fn complete_code(k: usize) -> Result<CodeMatrix> {
    let free = k - 1;
    let rows = (0..(1u64 << free) - 1)
        .map(|bits| {
            let mut row = vec![CodeEntry::Pos; k];
            for (c, entry) in row.iter_mut().enumerate().skip(1) {
                if bits >> (free - c) & 1 == 0 {
                    *entry = CodeEntry::Neg;
                }
            }
            row
        })
        .collect();
    CodeMatrix::new(Scheme::EcocComplete, rows)
}

/// Row count of the sparse random code, `ceil(15 log2 K)`.
pub fn sparse_code_rows(k: usize) -> usize {
    (15.0 * (k as f64).log2() - 1e-9).ceil() as usize
}

fn sparse_candidate(k: usize, m: usize, seed: u64, index: usize) -> Vec<Vec<CodeEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..m)
        .map(|_| loop {
            // Rows without both sides are redrawn; rows are independent, so this
            // samples the same distribution as discarding whole candidates.
            let row: Vec<CodeEntry> = (0..k)
                .map(|_| match rng.random_range(0..4u8) {
                    0 | 1 => CodeEntry::DontCare,
                    2 => CodeEntry::Pos,
                    _ => CodeEntry::Neg,
                })
                .collect();
            if row.contains(&CodeEntry::Pos) && row.contains(&CodeEntry::Neg) {
                break row;
            }
        })
        .collect()
}

fn sparse_random_code(exec: Exec, k: usize, seed: u64, candidates: usize) -> Result<CodeMatrix> {
    let m = sparse_code_rows(k);
    let scores = exec.map_range(candidates, |c| {
        CodeMatrix::new(Scheme::EcocSparseRandom, sparse_candidate(k, m, seed, c))
            .ok()
            .map(|cm| code_distance(&cm))
    });
    let mut best: Option<(usize, f64)> = None;
    for (c, score) in scores.into_iter().enumerate() {
        if let Some(d) = score {
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((c, d));
            }
        }
    }
    let (winner, _) = best.ok_or(Error::GenerationFailed { seed })?;
    CodeMatrix::new(Scheme::EcocSparseRandom, sparse_candidate(k, m, seed, winner))
}

/// Minimum generalized Hamming distance over all codeword pairs: per row, 1
/// when both entries are defined and differ, 0.5 when exactly one is
/// don't-care.
pub fn code_distance(c: &CodeMatrix) -> f64 {
    let k = c.classes();
    let mut best = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            best = best.min(c.column_distance(a, b));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::CodeEntry::{DontCare as D, Neg as N, Pos as P};
    use super::*;

    /// Three-class all-pairs rows in the order (1v2, 2v3, 1v3).
    fn rotated_pairs() -> CodeMatrix {
        CodeMatrix::new(Scheme::AllPairs, vec![vec![P, N, D], vec![D, P, N], vec![P, D, N]]).unwrap()
    }

    #[test]
    fn ova_is_identity_pattern() {
        let c = gen_ova(3).unwrap();
        assert_eq!(c.rows(), 3);
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(c.entry(j, k), if j == k { P } else { N });
            }
        }
        let c4 = gen_ova(4).unwrap();
        assert_eq!(c4.rows(), 4);
        for j in 0..4 {
            assert_eq!(c4.row(j).iter().filter(|&&e| e == P).count(), 1);
        }
    }

    #[test]
    fn small_class_counts_rejected() {
        assert!(matches!(gen_ova(2), Err(Error::InvalidClassCount(2))));
        assert!(matches!(gen_allpairs(1), Err(Error::InvalidClassCount(1))));
        assert!(matches!(gen_ecoc(2, 0), Err(Error::InvalidClassCount(2))));
    }

    #[test]
    fn allpairs_matches_rotated_pairs_as_row_set() {
        let c = gen_allpairs(3).unwrap();
        let mut ours: Vec<Vec<CodeEntry>> = (0..3).map(|j| c.row(j).to_vec()).collect();
        let t = rotated_pairs();
        let mut theirs: Vec<Vec<CodeEntry>> = (0..3).map(|j| t.row(j).to_vec()).collect();
        let key = |r: &Vec<CodeEntry>| r.iter().map(|e| e.to_string()).collect::<String>();
        ours.sort_by_key(key);
        theirs.sort_by_key(key);
        assert_eq!(ours, theirs);
        assert_eq!(c.row(0), &[P, N, D]);
        assert_eq!(c.row(1), &[P, D, N]);
        assert_eq!(c.row(2), &[D, P, N]);
    }

    #[test]
    fn allpairs_column_usage() {
        assert_eq!(gen_allpairs(4).unwrap().rows(), 6);
        let c = gen_allpairs(5).unwrap();
        for k in 0..5 {
            assert_eq!(c.column(k).iter().filter(|e| e.is_defined()).count(), 4);
        }
    }

    #[test]
    fn complete_code_shapes() {
        let c = gen_ecoc(4, 0).unwrap();
        assert_eq!(c.scheme(), Scheme::EcocComplete);
        assert_eq!(c.rows(), 7);
        assert!((0..7).all(|j| c.row(j).iter().all(|e| e.is_defined())));
        let c3 = gen_ecoc(3, 0).unwrap();
        assert_eq!(c3.row(0), &[P, N, N]);
        assert_eq!(c3.row(1), &[P, N, P]);
        assert_eq!(c3.row(2), &[P, P, N]);
    }

    #[test]
    fn sparse_code_row_count() {
        assert_eq!(sparse_code_rows(8), 45);
        assert_eq!(sparse_code_rows(10), 50);
        assert_eq!(sparse_code_rows(11), 52);
    }

    #[test]
    fn sparse_candidate_entry_frequencies() {
        let (k, m) = (10, sparse_code_rows(10));
        let mut counts = [0usize; 3];
        for c in 0..200 {
            for row in sparse_candidate(k, m, 3, c) {
                for e in row {
                    counts[match e {
                        D => 0,
                        P => 1,
                        N => 2,
                    }] += 1;
                }
            }
        }
        let total = (200 * k * m) as f64;
        let f: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
        assert!((f[0] - 0.5).abs() <= 0.05, "dont-care {}", f[0]);
        assert!((f[1] - 0.25).abs() <= 0.05, "pos {}", f[1]);
        assert!((f[2] - 0.25).abs() <= 0.05, "neg {}", f[2]);
    }

    #[test]
    fn selection_favours_defined_entries() {
        // Maximizing the minimum distance prefers defined entries, which
        // separate columns by 1 instead of 0.5.
        let c = gen_ecoc(10, 3).unwrap();
        assert_eq!(c.scheme(), Scheme::EcocSparseRandom);
        let total = (c.rows() * c.classes()) as f64;
        let dc = (0..c.rows()).map(|j| c.row(j).iter().filter(|&&e| e == D).count()).sum::<usize>() as f64 / total;
        assert!(dc < 0.5 && dc > 0.3, "dont-care {dc}");
    }

    #[test]
    fn sparse_generation_is_deterministic_and_exec_independent() {
        let a = gen_ecoc_with(Exec::Parallel, 9, 11).unwrap();
        let b = gen_ecoc_with(Exec::Sequential, 9, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_ecoc(9, 12).unwrap());
    }

    #[test]
    fn distances_of_small_codes() {
        assert_eq!(code_distance(&gen_ova(3).unwrap()), 2.0);
        assert_eq!(code_distance(&rotated_pairs()), 2.0);
        assert_eq!(code_distance(&gen_ecoc(3, 0).unwrap()), 2.0);
    }

    #[test]
    fn invalid_matrices_rejected() {
        // row without a negative side
        assert!(CodeMatrix::new(Scheme::Ova, vec![vec![P, D, D], vec![N, P, N]]).is_err());
        // identical columns 1 and 2
        assert!(CodeMatrix::new(Scheme::Ova, vec![vec![P, N, N], vec![N, P, P]]).is_err());
        // all don't-care column
        assert!(CodeMatrix::new(Scheme::AllPairs, vec![vec![P, N, D], vec![N, P, D]]).is_err());
    }

    #[test]
    fn json_round_trip_and_format() {
        let c = rotated_pairs();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"scheme":"allpairs","K":3,"M":3,"rows":[["1","0","*"],["*","1","0"],["1","*","0"]]}"#);
        let back: CodeMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"scheme":"ova","K":3,"M":2,"rows":[["1","0","0"]]}"#;
        assert!(serde_json::from_str::<CodeMatrix>(bad).is_err());
    }
}
