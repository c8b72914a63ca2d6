//! ROC-AUC, average precision and the zero-shot evaluation protocols.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{argmax_first, CategoryId, CategoryScoreMatrix, DatasetSplit, InstanceId, Registry, Table};
use crate::error::{Error, Result};
use crate::io::format_table;

/// Mann-Whitney AUC: the probability that a random positive outscores a
/// random negative, ties counting one half. Uses midranks.
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            positives.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidValue("NaN score".into()));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share the midrank, 1-based
        let midrank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| positives[i]).count();
        rank_sum += midrank * pos_in_group as f64;
        start = end;
    }
    let p = n_pos as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n_neg as f64))
}

/// Mean of precision at the rank of each positive, ranking by descending
/// score with ties kept in input order. `None` without positives.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positives[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| total / hits as f64)
}

fn truth_of<'a>(truth: &'a BTreeMap<InstanceId, CategoryId>, inst: &str) -> Result<&'a CategoryId> {
    truth.get(inst).ok_or_else(|| Error::UnknownId(inst.to_string()))
}

/// Average precision per score column over all score rows.
pub fn per_category_ap(
    scores: &CategoryScoreMatrix,
    truth: &BTreeMap<InstanceId, CategoryId>,
) -> Result<BTreeMap<CategoryId, f64>> {
    let labels = scores
        .instances()
        .iter()
        .map(|i| truth_of(truth, i))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for (z, cat) in scores.categories().iter().enumerate() {
        let col: Vec<f64> = scores.values().column(z).to_vec();
        let pos: Vec<bool> = labels.iter().map(|l| l.as_str() == cat).collect();
        let ap = average_precision(&col, &pos).ok_or_else(|| Error::NoPositives(cat.to_string()))?;
        out.insert(cat.to_string(), ap);
    }
    Ok(out)
}

/// Mean over score columns of [`average_precision`].
pub fn mean_ap(scores: &CategoryScoreMatrix, truth: &BTreeMap<InstanceId, CategoryId>) -> Result<f64> {
    let aps = per_category_ap(scores, truth)?;
    Ok(mean(aps.values().copied()).unwrap_or(0.0))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Negatives for a novel category are test instances of the other novel
    /// categories.
    NovelOnly,
    /// Known-category test instances are added as negatives for every novel
    /// category.
    WithDistractors,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::NovelOnly => "novel_only",
            Protocol::WithDistractors => "with_distractors",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "novel_only" => Ok(Protocol::NovelOnly),
            "with_distractors" => Ok(Protocol::WithDistractors),
            other => Err(Error::InvalidConfig(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub per_category_auc: BTreeMap<CategoryId, f64>,
    pub mean_auc: f64,
    /// Arg-max accuracy over novel test instances, restricted to novel
    /// score columns.
    pub accuracy: f64,
    pub per_category_ap: BTreeMap<CategoryId, f64>,
    pub mean_ap: Option<f64>,
    pub n_novel_instances: usize,
    pub n_distractors: usize,
    /// Novel categories without test positives; left out of the means.
    pub skipped_categories: Vec<CategoryId>,
}

impl EvalReport {
    /// Per-category metrics as a TSV table with `auc` and `ap` columns.
    pub fn to_tsv(&self) -> Result<String> {
        let cats: Vec<&String> = self.per_category_auc.keys().collect();
        let mut values = Array2::zeros((cats.len(), 2));
        for (i, c) in cats.iter().enumerate() {
            values[[i, 0]] = self.per_category_auc[*c];
            values[[i, 1]] = self.per_category_ap.get(*c).copied().unwrap_or(0.0);
        }
        let table = Table::new(Registry::new(cats)?, Registry::new(["auc", "ap"])?, values)?;
        Ok(format_table(&table, &[format!("protocol={}", self.protocol.as_str())]))
    }
}

/// Per-category AUC and AP, mean AUC and multiclass accuracy under the
/// given protocol.
///
/// Evaluated rows are the test instances of `split` whose `truth` label is a
/// novel category, plus known-category test instances with
/// [`Protocol::WithDistractors`]. Every novel category needs a score column.
pub fn evaluate_zero_shot(
    scores: &CategoryScoreMatrix,
    truth: &BTreeMap<InstanceId, CategoryId>,
    split: &DatasetSplit,
    protocol: Protocol,
) -> Result<EvalReport> {
    let novel_cols: Vec<usize> = split
        .novel_categories
        .iter()
        .map(|c| scores.categories().require(c))
        .collect::<Result<_>>()?;
    let mut novel_cols_sorted = novel_cols.clone();
    novel_cols_sorted.sort_unstable();

    let mut rows: Vec<(usize, Option<usize>)> = Vec::new();
    let mut n_distractors = 0;
    for inst in split.test_instances.keys() {
        let label = truth_of(truth, inst)?;
        if split.novel_categories.contains(label) {
            let col = scores.categories().require(label)?;
            rows.push((scores.instances().require(inst)?, Some(col)));
        } else if protocol == Protocol::WithDistractors && split.known_categories.contains(label) {
            rows.push((scores.instances().require(inst)?, None));
            n_distractors += 1;
        }
    }
    let n_novel = rows.len() - n_distractors;

    let v = scores.values();
    let mut per_category_auc = BTreeMap::new();
    let mut per_category_ap = BTreeMap::new();
    let mut skipped = Vec::new();
    for &z in &novel_cols_sorted {
        let cat = scores.categories().name(z).to_string();
        let col: Vec<f64> = rows.iter().map(|&(r, _)| v[[r, z]]).collect();
        let pos: Vec<bool> = rows.iter().map(|&(_, l)| l == Some(z)).collect();
        match roc_auc(&col, &pos) {
            Ok(auc) => {
                per_category_auc.insert(cat.clone(), auc);
                if let Some(ap) = average_precision(&col, &pos) {
                    per_category_ap.insert(cat, ap);
                }
            }
            Err(Error::DegenerateAuc) => skipped.push(cat),
            Err(e) => return Err(e),
        }
    }

    let mut correct = 0usize;
    for &(r, label) in &rows {
        if let Some(l) = label {
            let sub: Vec<f64> = novel_cols_sorted.iter().map(|&z| v[[r, z]]).collect();
            let best = novel_cols_sorted[argmax_first(ndarray::ArrayView1::from(&sub))];
            if best == l {
                correct += 1;
            }
        }
    }
    let accuracy = if n_novel == 0 { 0.0 } else { correct as f64 / n_novel as f64 };

    Ok(EvalReport {
        protocol,
        mean_auc: mean(per_category_auc.values().copied()).unwrap_or(0.0),
        per_category_auc,
        accuracy,
        mean_ap: mean(per_category_ap.values().copied()),
        per_category_ap,
        n_novel_instances: n_novel,
        n_distractors,
        skipped_categories: skipped,
    })
}

/// Fraction of `predictions` matching `truth`; instances without a truth
/// label are an error.
pub fn accuracy(predictions: &[(InstanceId, CategoryId)], truth: &BTreeMap<InstanceId, CategoryId>) -> Result<f64> {
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for (inst, pred) in predictions {
        if truth_of(truth, inst)? == pred {
            correct += 1;
        }
    }
    Ok(correct as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], pos: &[bool]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in pos.iter().enumerate() {
            for (j, &pj) in pos.iter().enumerate() {
                if pi && !pj {
                    pairs += 1.0;
                    total += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs
    }

    #[test]
    fn auc_hand_cases() {
        assert_eq!(roc_auc(&[0.9, 0.4, 0.6, 0.1], &[true, false, true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.4, 0.6, 0.1], &[false, true, true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.4, 0.6, 0.1], &[false, false, true, true]).unwrap(), 0.25);
        assert_eq!(roc_auc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateAuc)));
        assert!(matches!(roc_auc(&[0.1, 0.2], &[false, false]), Err(Error::DegenerateAuc)));
    }

    #[test]
    fn ap_hand_cases() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
        assert_eq!(average_precision(&[0.9, 0.8, 0.3, 0.1], &[false, true, false, false]), Some(0.5));
        assert_eq!(average_precision(&[0.9, 0.8], &[false, false]), None);
        // tie keeps input order: positive second
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]), Some(0.5));
    }

    #[test]
    fn mean_ap_hand_case() {
        let t = Table::new(
            Registry::new(["i0", "i1", "i2", "i3"]).unwrap(),
            Registry::new(["a", "b"]).unwrap(),
            array![[0.9, 0.1], [0.8, 0.7], [0.1, 0.9], [0.0, 0.2]],
        )
        .unwrap();
        let s = CategoryScoreMatrix::new(t, false).unwrap();
        let truth: BTreeMap<_, _> = [("i0", "a"), ("i1", "a"), ("i2", "x"), ("i3", "b")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        // a: positives at ranks 1, 2 -> 1.0; b: positive at rank 3 -> 1/3
        let aps = per_category_ap(&s, &truth).unwrap();
        assert_eq!(aps["a"], 1.0);
        assert!((aps["b"] - 1.0 / 3.0).abs() < 1e-15);
        assert!((mean_ap(&s, &truth).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let mut none = truth.clone();
        none.insert("i3".into(), "x".into());
        assert!(matches!(mean_ap(&s, &none), Err(Error::NoPositives(c)) if c == "b"));
    }

    fn setup(distractor_score: f64) -> (CategoryScoreMatrix, BTreeMap<String, String>, DatasetSplit) {
        let ids = ["p0", "p1", "q0", "q1", "k0"];
        let t = Table::new(
            Registry::new(ids).unwrap(),
            Registry::new(["n1", "n2", "k"]).unwrap(),
            array![
                [0.9, 0.1, 0.0],
                [0.8, 0.2, 0.0],
                [0.3, 0.7, 0.0],
                [0.2, 0.6, 0.0],
                [distractor_score, distractor_score, 1.0]
            ],
        )
        .unwrap();
        let truth: BTreeMap<_, _> = [("p0", "n1"), ("p1", "n1"), ("q0", "n2"), ("q1", "n2"), ("k0", "k")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let split = DatasetSplit {
            known_categories: ["k".to_string()].into(),
            novel_categories: ["n1".to_string(), "n2".to_string()].into(),
            train_instances: BTreeMap::new(),
            test_instances: truth.clone(),
            fewshot_instances: BTreeMap::new(),
        };
        (CategoryScoreMatrix::new(t, false).unwrap(), truth, split)
    }

    #[test]
    fn protocols() {
        let (s, truth, split) = setup(0.95);
        let a = evaluate_zero_shot(&s, &truth, &split, Protocol::NovelOnly).unwrap();
        assert_eq!(a.per_category_auc["n1"], 1.0);
        assert_eq!(a.per_category_auc["n2"], 1.0);
        assert_eq!(a.accuracy, 1.0);
        assert_eq!(a.n_distractors, 0);
        let b = evaluate_zero_shot(&s, &truth, &split, Protocol::WithDistractors).unwrap();
        assert_eq!(b.n_distractors, 1);
        assert!(b.mean_auc < a.mean_auc);
        assert_eq!(b.accuracy, a.accuracy);
        assert!((b.mean_auc - b.per_category_auc.values().sum::<f64>() / 2.0).abs() < 1e-12);

        let tsv = b.to_tsv().unwrap();
        assert!(tsv.starts_with("# protocol=with_distractors\n\tauc\tap\n"));
    }

    #[test]
    fn no_distractors_matches_novel_only() {
        let (s, truth, mut split) = setup(0.5);
        split.test_instances.remove("k0");
        let a = evaluate_zero_shot(&s, &truth, &split, Protocol::NovelOnly).unwrap();
        let mut b = evaluate_zero_shot(&s, &truth, &split, Protocol::WithDistractors).unwrap();
        b.protocol = Protocol::NovelOnly;
        assert_eq!(a, b);
    }

    #[test]
    fn constant_predictor_accuracy_and_missing_rows() {
        let (s, truth, split) = setup(0.5);
        let flat = Table::new(
            s.instances().clone(),
            s.categories().clone(),
            Array2::from_elem((5, 3), 0.5),
        )
        .unwrap();
        let flat = CategoryScoreMatrix::new(flat, false).unwrap();
        let r = evaluate_zero_shot(&flat, &truth, &split, Protocol::NovelOnly).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.mean_auc, 0.5);

        let mut extra = split.clone();
        extra.test_instances.insert("zz".into(), "n1".into());
        let mut t2 = truth.clone();
        t2.insert("zz".into(), "n1".into());
        assert!(evaluate_zero_shot(&s, &t2, &extra, Protocol::NovelOnly).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pair_enumeration(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
            let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
            match roc_auc(&scores, &pos) {
                Ok(auc) => {
                    prop_assert!((auc - brute_auc(&scores, &pos)).abs() < 1e-12);
                    let exp: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
                    prop_assert!((roc_auc(&exp, &pos).unwrap() - auc).abs() < 1e-12);
                }
                Err(_) => prop_assert!(pos.iter().all(|&p| p) || pos.iter().all(|&p| !p)),
            }
        }

        #[test]
        fn auc_complement_without_ties(
            data in prop::collection::btree_map(0u32..10_000, any::<bool>(), 2..40)
        ) {
            let scores: Vec<f64> = data.keys().map(|&k| k as f64).collect();
            let pos: Vec<bool> = data.values().copied().collect();
            if let Ok(a) = roc_auc(&scores, &pos) {
                let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
                prop_assert!((a + roc_auc(&neg, &pos).unwrap() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn ap_monotone_invariance(
            data in prop::collection::vec((0u8..8, any::<bool>()), 1..30)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
            let t: Vec<f64> = scores.iter().map(|s| s * s * s + 2.0).collect();
            prop_assert_eq!(average_precision(&scores, &pos), average_precision(&t, &pos));
        }
    }
}
