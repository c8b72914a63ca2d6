use ndarray::Array2;

use super::corpus::tokenize;
use crate::data::{AttributeId, CategoryId, Measure, Registry, RelatednessMatrix, Table};
use crate::error::{Error, Result};
use crate::io::ScriptDocument;

/// Groups script documents by category, keeping first-appearance order.
pub fn group_scripts(docs: &[ScriptDocument]) -> Vec<(CategoryId, Vec<String>)> {
    let mut out: Vec<(CategoryId, Vec<String>)> = Vec::new();
    for d in docs {
        let cat = d.category.trim();
        match out.iter_mut().find(|(c, _)| c == cat) {
            Some((_, texts)) => texts.push(d.text.clone()),
            None => out.push((cat.to_string(), vec![d.text.clone()])),
        }
    }
    out
}

fn count_phrase(tokens: &[String], phrase: &[String]) -> usize {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return 0;
    }
    tokens.windows(phrase.len()).filter(|w| *w == phrase).count()
}

/// Composite x attribute tf*idf associations from script documents.
///
/// `tf` is the attribute's occurrence count in the composite's documents
/// divided by their total token count; `idf = ln(C / df)` where `df` counts
/// composites whose documents mention the attribute. Multi-word attributes
/// count as contiguous phrases within a document.
pub fn tfidf_associations(
    scripts: &[(CategoryId, Vec<String>)],
    attributes: &[AttributeId],
) -> Result<RelatednessMatrix> {
    if attributes.is_empty() {
        return Err(Error::InvalidValue("attribute vocabulary is empty".into()));
    }
    let categories = Registry::new(scripts.iter().map(|(c, _)| c))?;
    let attrs = Registry::new(attributes)?;
    let phrases: Vec<Vec<String>> = attrs.iter().map(tokenize).collect();

    let n_cat = scripts.len();
    let mut counts = Array2::<f64>::zeros((n_cat, attrs.len()));
    let mut totals = vec![0usize; n_cat];
    for (y, (cat, docs)) in scripts.iter().enumerate() {
        if docs.is_empty() {
            return Err(Error::InvalidValue(format!("composite `{cat}` has no documents")));
        }
        for doc in docs {
            let tokens = tokenize(doc);
            totals[y] += tokens.len();
            for (m, phrase) in phrases.iter().enumerate() {
                counts[[y, m]] += count_phrase(&tokens, phrase) as f64;
            }
        }
    }

    let c = n_cat as f64;
    let mut values = Array2::<f64>::zeros((n_cat, attrs.len()));
    for m in 0..attrs.len() {
        let df = counts.column(m).iter().filter(|&&v| v > 0.0).count();
        if df == 0 {
            continue;
        }
        let idf = (c / df as f64).ln();
        for y in 0..n_cat {
            if totals[y] > 0 {
                values[[y, m]] = counts[[y, m]] / totals[y] as f64 * idf;
            }
        }
    }
    RelatednessMatrix::new(Table::new(categories, attrs, values)?, Measure::Tfidf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scripts(list: &[(&str, &[&str])]) -> Vec<(String, Vec<String>)> {
        list.iter()
            .map(|(c, d)| (c.to_string(), d.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn attrs(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn egg_hand_case() {
        let s = scripts(&[
            ("scrambled egg", &["crack egg whisk", "egg into pan", "stir stir serve hot"]),
            ("salad", &["wash lettuce cut", "serve"]),
        ]);
        let r = tfidf_associations(&s, &attrs(&["egg", "serve", "knife"])).unwrap();
        assert_eq!(r.measure(), Measure::Tfidf);
        assert!((r.get(0, 0) - 0.2 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(r.get(1, 0), 0.0);
        // in both composites: idf = ln 1 = 0
        assert_eq!(r.get(0, 1), 0.0);
        assert_eq!(r.get(1, 1), 0.0);
        // absent everywhere
        assert_eq!(r.get(0, 2), 0.0);
        assert_eq!(r.get(1, 2), 0.0);
    }

    #[test]
    fn phrases_and_errors() {
        let s = scripts(&[("a", &["cut the onion", "onion"]), ("b", &["cut bread"])]);
        let r = tfidf_associations(&s, &attrs(&["cut the", "onion"])).unwrap();
        assert!((r.get(0, 0) - 0.25 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(r.get(1, 0), 0.0);
        assert!((r.get(0, 1) - 0.5 * 2f64.ln()).abs() < 1e-15);

        let empty = scripts(&[("a", &[])]);
        assert!(tfidf_associations(&empty, &attrs(&["x"])).is_err());
        assert!(tfidf_associations(&s, &[]).is_err());
    }

    #[test]
    fn grouping_keeps_order() {
        let docs = vec![
            ScriptDocument { category: "b".into(), text: "1".into() },
            ScriptDocument { category: "a".into(), text: "2".into() },
            ScriptDocument { category: "b".into(), text: "3".into() },
        ];
        let g = group_scripts(&docs);
        assert_eq!(g[0], ("b".to_string(), vec!["1".to_string(), "3".to_string()]));
        assert_eq!(g[1].0, "a");
    }

    proptest! {
        #[test]
        fn invariant_to_duplicating_documents(
            docs in proptest::collection::vec(proptest::collection::vec(proptest::collection::vec(0u8..5, 1..8), 1..4), 1..5)
        ) {
            let s: Vec<(String, Vec<String>)> = docs.iter().enumerate().map(|(y, ds)| {
                (format!("c{y}"), ds.iter().map(|toks| toks.iter().map(|t| format!("w{t}")).collect::<Vec<_>>().join(" ")).collect())
            }).collect();
            let doubled: Vec<(String, Vec<String>)> = s.iter().map(|(c, ds)| {
                (c.clone(), ds.iter().chain(ds.iter()).cloned().collect())
            }).collect();
            let vocab: Vec<String> = (0..5).map(|t| format!("w{t}")).collect();
            let a = tfidf_associations(&s, &vocab).unwrap();
            let b = tfidf_associations(&doubled, &vocab).unwrap();
            prop_assert_eq!(a.values(), b.values());
            prop_assert!(a.values().iter().all(|&v| v >= 0.0));
        }
    }
}
