//! Precision and recall of ranked answers, averaged per query class.

use crate::descriptor::chlbp;
use crate::retrieval::{rank, EntryFailure, Index, RankedResult, RetrievalError};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("EmptyRelevantSet: no relevant images")]
    EmptyRelevantSet,
    #[error("EmptyAnswerSet: no answers")]
    EmptyAnswerSet,
    #[error("BadCutoff: {0}")]
    BadCutoff(String),
}

impl EvalError {
    pub fn name(&self) -> &'static str {
        match self {
            EvalError::EmptyRelevantSet => "EmptyRelevantSet",
            EvalError::EmptyAnswerSet => "EmptyAnswerSet",
            EvalError::BadCutoff(_) => "BadCutoff",
        }
    }
}

/// Relevant set R and answer list A for one query.
#[derive(Debug, Clone, Default)]
pub struct EvalSets {
    pub relevant: BTreeSet<String>,
    pub answers: Vec<String>,
}

impl EvalSets {
    /// Distinct answers that are relevant (Ra).
    pub fn relevant_answers(&self) -> BTreeSet<&str> {
        self.answers
            .iter()
            .filter(|a| self.relevant.contains(*a))
            .map(String::as_str)
            .collect()
    }
}

/// Exact counts behind one precision/recall pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionRecall {
    pub relevant_answers: usize,
    pub answers: usize,
    pub relevant: usize,
}

impl PrecisionRecall {
    pub fn precision(&self) -> f64 {
        self.relevant_answers as f64 / self.answers as f64
    }

    pub fn recall(&self) -> f64 {
        self.relevant_answers as f64 / self.relevant as f64
    }
}

pub fn precision_recall(s: &EvalSets) -> Result<PrecisionRecall, EvalError> {
    if s.relevant.is_empty() {
        return Err(EvalError::EmptyRelevantSet);
    }
    let answers: BTreeSet<&str> = s.answers.iter().map(String::as_str).collect();
    if answers.is_empty() {
        return Err(EvalError::EmptyAnswerSet);
    }
    Ok(PrecisionRecall {
        relevant_answers: s.relevant_answers().len(),
        answers: answers.len(),
        relevant: s.relevant.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Rejects cutoff lists that are empty, contain zero, or are not strictly
/// ascending.
pub fn check_cutoffs(cutoffs: &[usize]) -> Result<(), EvalError> {
    if cutoffs.is_empty() {
        return Err(EvalError::BadCutoff("no cutoffs given".into()));
    }
    let mut prev = 0;
    for &k in cutoffs {
        if k <= prev {
            return Err(EvalError::BadCutoff(format!(
                "cutoffs must be positive and strictly ascending, got {k} after {prev}"
            )));
        }
        prev = k;
    }
    Ok(())
}

/// Precision and recall of the top-k answers for each cutoff.
pub fn pr_curve(
    ranked: &[RankedResult],
    relevant: &BTreeSet<String>,
    cutoffs: &[usize],
) -> Result<Vec<PrPoint>, EvalError> {
    check_cutoffs(cutoffs)?;
    if let Some(&k) = cutoffs.last().filter(|&&k| k > ranked.len()) {
        return Err(EvalError::BadCutoff(format!(
            "cutoff {k} exceeds {} ranked answers",
            ranked.len()
        )));
    }
    cutoffs
        .iter()
        .map(|&k| {
            let sets = EvalSets {
                relevant: relevant.clone(),
                answers: ranked[..k].iter().map(|r| r.image_id.clone()).collect(),
            };
            let pr = precision_recall(&sets)?;
            Ok(PrPoint {
                k,
                precision: pr.precision(),
                recall: pr.recall(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCurveRow {
    pub class: String,
    pub k: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub queries: usize,
}

/// Arithmetic mean of per-query curves, grouped by class. Every curve in a
/// class must use the same cutoffs.
pub fn mean_curves(per_query: &[(String, Vec<PrPoint>)]) -> Vec<ClassCurveRow> {
    let mut groups: BTreeMap<&str, BTreeMap<usize, (f64, f64, usize)>> = BTreeMap::new();
    for (class, curve) in per_query {
        let g = groups.entry(class).or_default();
        for p in curve {
            let acc = g.entry(p.k).or_insert((0.0, 0.0, 0));
            acc.0 += p.precision;
            acc.1 += p.recall;
            acc.2 += 1;
        }
    }
    groups
        .into_iter()
        .flat_map(|(class, ks)| {
            ks.into_iter().map(move |(k, (p, r, n))| ClassCurveRow {
                class: class.to_string(),
                k,
                mean_precision: p / n as f64,
                mean_recall: r / n as f64,
                queries: n,
            })
        })
        .collect()
}

pub fn to_csv(rows: &[ClassCurveRow]) -> String {
    let mut out = String::from("class,k,mean_precision,mean_recall\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6}",
            r.class, r.k, r.mean_precision, r.mean_recall
        );
    }
    out
}

#[derive(Debug, Default)]
pub struct Evaluation {
    pub rows: Vec<ClassCurveRow>,
    /// Per query: id, class and its curve.
    pub per_query: Vec<(String, String, Vec<PrPoint>)>,
    pub failures: Vec<EntryFailure>,
}

/// Leave-one-out evaluation over an index: every labelled image that can be
/// restored is used as a query against all other readable entries, and the
/// entries sharing its label form the relevant set.
///
/// Labels come from `labels` when given, otherwise from the index rows.
pub fn evaluate_index(
    index: &Index,
    labels: Option<&BTreeMap<String, String>>,
    cutoffs: &[usize],
) -> Result<Evaluation, RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let label_of = |id: &str| -> Option<String> {
        match labels {
            Some(map) => map.get(id).cloned(),
            None => index.get(id).and_then(|e| e.class_label.clone()),
        }
    };

    let mut eval = Evaluation::default();
    let mut stored = Vec::new();
    for (entry, result) in index.scan() {
        match result {
            Ok(s) => stored.push((entry.image_id.clone(), s)),
            Err(error) => eval.failures.push(EntryFailure {
                image_id: entry.image_id.clone(),
                error,
            }),
        }
    }
    let candidates: Vec<_> = stored
        .iter()
        .map(|(id, s)| (id.clone(), s.payload.descriptor.clone()))
        .collect();

    let mut curves = Vec::new();
    for (id, s) in &stored {
        let Some(class) = label_of(id) else { continue };
        let others: Vec<_> = candidates
            .iter()
            .filter(|(c, _)| c != id)
            .cloned()
            .collect();
        let relevant: BTreeSet<String> = others
            .iter()
            .filter(|(c, _)| label_of(c).as_deref() == Some(class.as_str()))
            .map(|(c, _)| c.clone())
            .collect();
        if relevant.is_empty() {
            continue;
        }
        let query = chlbp(&s.original)?;
        let ranked = rank(&query, &others, others.len())?;
        let curve = pr_curve(&ranked, &relevant, cutoffs)
            .map_err(|e| RetrievalError::InvalidField(e.to_string()))?;
        curves.push((class.clone(), curve.clone()));
        eval.per_query.push((id.clone(), class, curve));
    }
    eval.rows = mean_curves(&curves);
    Ok(eval)
}
