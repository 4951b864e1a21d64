//! Patient-level cross-validation folds.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::manifest::ManifestRow;
use crate::ordinal::Fitzpatrick;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum FoldError {
    #[error("n_folds must be in 2..=255, got {0}")]
    FoldCount(usize),
    #[error("subject {subject:?} has images in folds {folds:?}")]
    SubjectSpansFolds { subject: String, folds: Vec<u8> },
    #[error("subject {0:?} has no fold assigned")]
    Unassigned(String),
    #[error("fold {fold} out of range for {n_folds} folds")]
    FoldRange { fold: u8, n_folds: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n_folds: usize,
    pub seed: u64,
    pub folds: BTreeMap<String, u8>,
}

impl FoldAssignment {
    pub fn fold_of(&self, subject: &str) -> Option<u8> {
        self.folds.get(subject).copied()
    }

    /// Sorted subjects of fold `f`.
    pub fn subjects_in(&self, f: u8) -> Vec<&str> {
        self.folds.iter().filter(|(_, &v)| v == f).map(|(k, _)| k.as_str()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.folds.values() {
            sizes[f as usize] += 1;
        }
        sizes
    }

    /// Copies each row's subject fold into its `fold` column.
    pub fn apply(&self, rows: &mut [ManifestRow]) -> Result<(), FoldError> {
        for row in rows.iter_mut() {
            row.fold = Some(
                self.fold_of(&row.subject_id)
                    .ok_or_else(|| FoldError::Unassigned(row.subject_id.clone()))?,
            );
        }
        Ok(())
    }

    /// Reads an existing assignment from the manifest's `fold` column.
    /// Returns `None` when no row carries a fold.
    pub fn from_manifest(rows: &[ManifestRow], n_folds: usize) -> Result<Option<Self>, FoldError> {
        if rows.iter().all(|r| r.fold.is_none()) {
            return Ok(None);
        }
        let mut seen: BTreeMap<&str, BTreeSet<u8>> = BTreeMap::new();
        for r in rows {
            let f = r.fold.ok_or_else(|| FoldError::Unassigned(r.subject_id.clone()))?;
            if f as usize >= n_folds {
                return Err(FoldError::FoldRange { fold: f, n_folds });
            }
            seen.entry(&r.subject_id).or_default().insert(f);
        }
        let mut folds = BTreeMap::new();
        for (subject, fs) in seen {
            if fs.len() > 1 {
                return Err(FoldError::SubjectSpansFolds {
                    subject: subject.to_string(),
                    folds: fs.into_iter().collect(),
                });
            }
            folds.insert(subject.to_string(), *fs.iter().next().expect("non-empty"));
        }
        Ok(Some(Self { n_folds, seed: 0, folds }))
    }
}

/// Per-subject Fitzpatrick stratum: the most frequent single-type label among
/// the subject's images, ties to the lower type. Grouped labels are ignored.
pub fn subject_strata(rows: &[ManifestRow]) -> BTreeMap<String, Option<Fitzpatrick>> {
    let mut counts: BTreeMap<String, [usize; 6]> = BTreeMap::new();
    for r in rows {
        let c = counts.entry(r.subject_id.clone()).or_default();
        if let Some(f) = r.fitzpatrick.and_then(|l| l.single()) {
            c[f.rank() as usize - 1] += 1;
        }
    }
    counts
        .into_iter()
        .map(|(s, c)| {
            let best = c
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| Fitzpatrick::from_rank(i + 1).expect("1..=6"));
            (s, best)
        })
        .collect()
}

/// Stratified, seeded subject-level assignment.
///
/// Subjects are grouped by stratum (types I..VI, then unlabeled), each group
/// is sorted and shuffled, and subjects are dealt round-robin with a counter
/// that continues across groups so fold sizes differ by at most one.
pub fn make_folds_for_subjects(
    subjects: &BTreeMap<String, Option<Fitzpatrick>>,
    n_folds: usize,
    seed: u64,
) -> Result<FoldAssignment, FoldError> {
    if !(2..=255).contains(&n_folds) {
        return Err(FoldError::FoldCount(n_folds));
    }
    let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (s, fp) in subjects {
        groups.entry(fp.map_or(7, |f| f.rank() as usize)).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = BTreeMap::new();
    let mut counter = 0usize;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for s in members.iter() {
            folds.insert(s.to_string(), (counter % n_folds) as u8);
            counter += 1;
        }
    }
    let out = FoldAssignment { n_folds, seed, folds };
    let empty = out.sizes().iter().filter(|&&n| n == 0).count();
    if empty > 0 {
        log::warn!("{empty} of {n_folds} folds are empty ({} subjects)", subjects.len());
    }
    Ok(out)
}

pub fn make_folds(rows: &[ManifestRow], n_folds: usize, seed: u64) -> Result<FoldAssignment, FoldError> {
    make_folds_for_subjects(&subject_strata(rows), n_folds, seed)
}

/// Seeded subject-level hold-out: returns (train, validation) subject lists,
/// both sorted. The validation share is `round(fraction · n)`, at least one
/// subject whenever two or more are available.
pub fn split_validation(subjects: &[String], fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut all: Vec<String> = subjects.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = all.len();
    let mut n_val = (fraction.clamp(0.0, 1.0) * n as f64).round() as usize;
    if n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    } else {
        n_val = 0;
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = all.split_off(n - n_val);
    all.sort();
    val.sort();
    (all, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::manifest::FitzpatrickLabel;

    fn rows(n_subjects: usize, per: usize) -> Vec<ManifestRow> {
        let mut out = Vec::new();
        for s in 0..n_subjects {
            for i in 0..per {
                let mut r = ManifestRow::new(format!("s{s}_{i}.png"), format!("S{s:03}"));
                r.fitzpatrick = Some(FitzpatrickLabel::Single(Fitzpatrick::from_rank(s % 6 + 1).unwrap()));
                out.push(r);
            }
        }
        out
    }

    #[test]
    fn sixty_four_subjects() {
        let f = make_folds(&rows(64, 3), 5, 11).unwrap();
        let mut sizes = f.sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![13, 13, 13, 13, 12]);
    }

    #[test]
    fn image_order_irrelevant() {
        let r = rows(20, 4);
        let mut rev = r.clone();
        rev.reverse();
        assert_eq!(make_folds(&r, 5, 3).unwrap(), make_folds(&rev, 5, 3).unwrap());
    }

    #[test]
    fn single_subject() {
        let f = make_folds(&rows(1, 2), 5, 0).unwrap();
        assert_eq!(f.folds.len(), 1);
        assert_eq!(f.sizes().iter().filter(|&&n| n == 0).count(), 4);
    }

    #[test]
    fn strata_balanced_across_folds() {
        let f = make_folds(&rows(60, 1), 5, 8).unwrap();
        let strata = subject_strata(&rows(60, 1));
        for fold in 0..5u8 {
            let mut per = [0; 6];
            for s in f.subjects_in(fold) {
                per[strata[s].unwrap().rank() as usize - 1] += 1;
            }
            assert_eq!(per, [2; 6]);
        }
    }

    #[test]
    fn manifest_fold_round_trip() {
        let mut r = rows(12, 2);
        let f = make_folds(&r, 5, 1).unwrap();
        f.apply(&mut r).unwrap();
        let back = FoldAssignment::from_manifest(&r, 5).unwrap().unwrap();
        assert_eq!(back.folds, f.folds);
        r[0].fold = Some((r[0].fold.unwrap() + 1) % 5);
        assert!(matches!(
            FoldAssignment::from_manifest(&r, 5),
            Err(FoldError::SubjectSpansFolds { .. })
        ));
    }

    #[test]
    fn validation_split() {
        let subjects: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let (t, v) = split_validation(&subjects, 0.2, 3);
        assert_eq!((t.len(), v.len()), (8, 2));
        assert!(v.iter().all(|s| !t.contains(s)));
        assert_eq!(split_validation(&subjects[..1], 0.2, 3).1.len(), 0);
        assert_eq!(split_validation(&subjects[..2], 0.2, 3).1.len(), 1);
    }
}
