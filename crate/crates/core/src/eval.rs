//! Macro-averaged F1 over entity classes (exact NER spans or the one-token
//! EC rule) and over directed relation classes. `Other` entities and `NEG`
//! relations are never scored. All scores are percentages.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use crate::data::{EntitySpan, Relation, NEG};

/// Entity label left out of every entity score.
pub const OTHER: &str = "Other";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityMetric {
    /// Boundaries and type must both match.
    Ner,
    /// One correctly typed token is enough.
    Ec,
}

impl fmt::Display for EntityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityMetric::Ner => "ner",
            EntityMetric::Ec => "ec",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub class: String,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class scores sorted by class name, plus their unweighted mean F1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable {
    pub classes: Vec<ClassScore>,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    pred_correct: usize,
    pred_total: usize,
    gold_correct: usize,
    gold_total: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn table(counts: BTreeMap<String, Counts>) -> ClassTable {
    let classes: Vec<ClassScore> = counts
        .into_iter()
        .map(|(class, c)| {
            let precision = ratio(c.pred_correct, c.pred_total);
            let recall = ratio(c.gold_correct, c.gold_total);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScore {
                class,
                tp: c.gold_correct,
                fp: c.pred_total - c.pred_correct,
                fn_: c.gold_total - c.gold_correct,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let macro_f1 = if classes.is_empty() {
        0.0
    } else {
        classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64
    };
    ClassTable { classes, macro_f1 }
}

fn entity_counts(
    gold: &[Vec<EntitySpan>],
    pred: &[Vec<EntitySpan>],
    correct: impl Fn(&EntitySpan, &[EntitySpan]) -> bool,
) -> BTreeMap<String, Counts> {
    assert_eq!(gold.len(), pred.len(), "one prediction per gold sentence");
    let mut counts: BTreeMap<String, Counts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        for span in g.iter().filter(|s| s.label != OTHER) {
            let c = counts.entry(span.label.clone()).or_default();
            c.gold_total += 1;
            c.gold_correct += usize::from(correct(span, p));
        }
        for span in p.iter().filter(|s| s.label != OTHER) {
            let c = counts.entry(span.label.clone()).or_default();
            c.pred_total += 1;
            c.pred_correct += usize::from(correct(span, g));
        }
    }
    counts
}

/// A span counts only if an identical `(start, end, label)` span exists on
/// the other side.
pub fn score_ner(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> ClassTable {
    table(entity_counts(gold, pred, |s, other| other.contains(s)))
}

/// A span counts if it shares at least one token with a span of the same
/// type on the other side. The rule is applied to gold spans for recall and
/// to predicted spans for precision.
pub fn score_ec(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> ClassTable {
    table(entity_counts(gold, pred, |s, other| {
        other
            .iter()
            .any(|o| o.label == s.label && o.start <= s.end && s.start <= o.end)
    }))
}

/// Exact `(head, tail, label)` matching; direction matters.
pub fn score_rc(gold: &[Vec<Relation>], pred: &[Vec<Relation>]) -> ClassTable {
    assert_eq!(gold.len(), pred.len(), "one prediction per gold sentence");
    let mut counts: BTreeMap<String, Counts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let g: BTreeSet<&Relation> = g.iter().filter(|r| r.label != NEG).collect();
        let p: BTreeSet<&Relation> = p.iter().filter(|r| r.label != NEG).collect();
        for r in &g {
            let c = counts.entry(r.label.clone()).or_default();
            c.gold_total += 1;
            c.gold_correct += usize::from(p.contains(r));
        }
        for r in &p {
            let c = counts.entry(r.label.clone()).or_default();
            c.pred_total += 1;
            c.pred_correct += usize::from(g.contains(r));
        }
    }
    table(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub entity_metric: EntityMetric,
    pub entities: ClassTable,
    pub relations: ClassTable,
}

impl ScoreReport {
    pub fn new(
        metric: EntityMetric,
        gold_spans: &[Vec<EntitySpan>],
        pred_spans: &[Vec<EntitySpan>],
        gold_relations: &[Vec<Relation>],
        pred_relations: &[Vec<Relation>],
    ) -> Self {
        let entities = match metric {
            EntityMetric::Ner => score_ner(gold_spans, pred_spans),
            EntityMetric::Ec => score_ec(gold_spans, pred_spans),
        };
        ScoreReport {
            entity_metric: metric,
            entities,
            relations: score_rc(gold_relations, pred_relations),
        }
    }

    /// Mean of the entity and relation macro-F1, the model-selection score.
    pub fn average(&self) -> f64 {
        (self.entities.macro_f1 + self.relations.macro_f1) / 2.0
    }

    /// Aligned text table.
    ///
    /// ```text
    /// entities (NER)
    /// class                  P       R      F1    tp    fp    fn
    /// Loc               100.00  100.00  100.00     1     0     0
    /// macro-F1                          100.00
    /// ```
    ///
    /// followed by a blank line and the same block for `relations`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let title = match self.entity_metric {
            EntityMetric::Ner => "entities (NER)",
            EntityMetric::Ec => "entities (EC)",
        };
        write_block(&mut out, title, &self.entities);
        out.push('\n');
        write_block(&mut out, "relations", &self.relations);
        out
    }

    /// `key=value` lines with six decimals, in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "entity.metric={}", self.entity_metric).unwrap();
        write_kv(&mut out, "entity", &self.entities);
        write_kv(&mut out, "relation", &self.relations);
        writeln!(out, "average={:.6}", self.average()).unwrap();
        out
    }
}

fn write_block(out: &mut String, title: &str, t: &ClassTable) {
    writeln!(out, "{title}").unwrap();
    writeln!(
        out,
        "{:<16}{:>8}{:>8}{:>8}{:>6}{:>6}{:>6}",
        "class", "P", "R", "F1", "tp", "fp", "fn"
    )
    .unwrap();
    for c in &t.classes {
        writeln!(
            out,
            "{:<16}{:>8.2}{:>8.2}{:>8.2}{:>6}{:>6}{:>6}",
            c.class, c.precision, c.recall, c.f1, c.tp, c.fp, c.fn_
        )
        .unwrap();
    }
    writeln!(out, "{:<16}{:>24.2}", "macro-F1", t.macro_f1).unwrap();
}

fn write_kv(out: &mut String, prefix: &str, t: &ClassTable) {
    for c in &t.classes {
        let k = format!("{prefix}.class.{}", c.class);
        writeln!(out, "{k}.precision={:.6}", c.precision).unwrap();
        writeln!(out, "{k}.recall={:.6}", c.recall).unwrap();
        writeln!(out, "{k}.f1={:.6}", c.f1).unwrap();
        writeln!(out, "{k}.tp={}", c.tp).unwrap();
        writeln!(out, "{k}.fp={}", c.fp).unwrap();
        writeln!(out, "{k}.fn={}", c.fn_).unwrap();
    }
    writeln!(out, "{prefix}.macro_f1={:.6}", t.macro_f1).unwrap();
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp(start: usize, end: usize, label: &str) -> EntitySpan {
        EntitySpan::new(start, end, label)
    }

    fn class<'t>(t: &'t ClassTable, name: &str) -> &'t ClassScore {
        t.classes.iter().find(|c| c.class == name).unwrap()
    }

    #[test]
    fn exact_match_is_perfect() {
        let g = vec![vec![sp(0, 1, "Peop"), sp(3, 3, "Loc")]];
        assert_eq!(score_ner(&g, &g).macro_f1, 100.0);
        assert_eq!(score_ec(&g, &g).macro_f1, 100.0);
    }

    #[test]
    fn wrong_boundary_is_fp_and_fn() {
        let g = vec![vec![sp(0, 1, "Peop")]];
        let p = vec![vec![sp(0, 0, "Peop")]];
        let t = score_ner(&g, &p);
        let c = class(&t, "Peop");
        assert_eq!((c.tp, c.fp, c.fn_), (0, 1, 1));
        assert_eq!(t.macro_f1, 0.0);
    }

    #[test]
    fn one_perfect_class_one_missed_gives_fifty() {
        let g = vec![vec![sp(0, 0, "Peop"), sp(2, 2, "Loc")]];
        let p = vec![vec![sp(0, 0, "Peop")]];
        assert_eq!(score_ner(&g, &p).macro_f1, 50.0);
    }

    #[test]
    fn one_token_suffices_for_ec() {
        let g = vec![vec![sp(0, 1, "Peop")]];
        let p = vec![vec![sp(1, 1, "Peop")]];
        assert_eq!(score_ec(&g, &p).macro_f1, 100.0);
        assert_eq!(score_ner(&g, &p).macro_f1, 0.0);
        let wrong_type = vec![vec![sp(1, 1, "Loc")]];
        assert_eq!(score_ec(&g, &wrong_type).macro_f1, 0.0);
    }

    #[test]
    fn no_predictions_scores_zero() {
        let g = vec![vec![sp(0, 1, "Peop")]];
        assert_eq!(score_ec(&g, &[vec![]]).macro_f1, 0.0);
        assert_eq!(score_ner(&[vec![]], &[vec![]]).macro_f1, 0.0);
    }

    #[test]
    fn other_and_neg_are_not_scored() {
        let g = vec![vec![sp(0, 0, "Other"), sp(1, 1, "Loc")]];
        let p = vec![vec![sp(1, 1, "Loc")]];
        let t = score_ner(&g, &p);
        assert_eq!(t.classes.len(), 1);
        assert_eq!(t.macro_f1, 100.0);
        let gr = vec![vec![Relation::new(0, 1, "Live_In")]];
        let pr = vec![vec![Relation::new(0, 1, "Live_In"), Relation::new(1, 0, NEG)]];
        assert_eq!(score_rc(&gr, &pr).macro_f1, 100.0);
    }

    #[test]
    fn relation_rules() {
        let gold = vec![vec![Relation::new(2, 5, "OrgBased_In")]];
        assert_eq!(score_rc(&gold, &gold).macro_f1, 100.0);
        let flipped = vec![vec![Relation::new(5, 2, "OrgBased_In")]];
        assert_eq!(score_rc(&gold, &flipped).macro_f1, 0.0);
        let relabeled = vec![vec![Relation::new(2, 5, "Located_In")]];
        let t = score_rc(&gold, &relabeled);
        let a = class(&t, "Located_In");
        let b = class(&t, "OrgBased_In");
        assert_eq!((a.tp, a.fp, a.fn_), (0, 1, 0));
        assert_eq!((b.tp, b.fp, b.fn_), (0, 0, 1));
    }

    fn spans_strategy() -> impl Strategy<Value = Vec<Vec<EntitySpan>>> {
        let sentence = prop::collection::btree_set((0usize..12, 0usize..3), 0..5).prop_map(|set| {
            // one-token spans at distinct positions
            let mut seen = BTreeSet::new();
            set.into_iter()
                .filter(|(p, _)| seen.insert(*p))
                .map(|(p, l)| sp(p, p, ["A", "B", "C"][l]))
                .collect::<Vec<_>>()
        });
        prop::collection::vec(sentence, 1..5)
    }

    proptest! {
        #[test]
        fn swapping_sides_swaps_precision_and_recall(g in spans_strategy(), p in spans_strategy()) {
            let n = g.len().min(p.len());
            let (g, p) = (&g[..n], &p[..n]);
            let a = score_ner(g, p);
            let b = score_ner(p, g);
            prop_assert_eq!(a.classes.len(), b.classes.len());
            for (x, y) in a.classes.iter().zip(&b.classes) {
                prop_assert_eq!(x.precision, y.recall);
                prop_assert_eq!(x.recall, y.precision);
            }
        }

        #[test]
        fn self_score_is_perfect_and_order_free(g in spans_strategy()) {
            let t = score_ner(&g, &g);
            if !t.classes.is_empty() {
                prop_assert_eq!(t.macro_f1, 100.0);
            }
            let mut rev = g.clone();
            rev.reverse();
            let mut pred = g.clone();
            for s in &mut pred { s.pop(); }
            let mut rev_pred = pred.clone();
            rev_pred.reverse();
            prop_assert_eq!(score_ner(&g, &pred), score_ner(&rev, &rev_pred));
        }

        #[test]
        fn scores_stay_in_range(g in spans_strategy(), p in spans_strategy()) {
            let n = g.len().min(p.len());
            for t in [score_ner(&g[..n], &p[..n]), score_ec(&g[..n], &p[..n])] {
                for c in &t.classes {
                    for v in [c.precision, c.recall, c.f1] {
                        prop_assert!((0.0..=100.0).contains(&v));
                    }
                }
                prop_assert!((0.0..=100.0).contains(&t.macro_f1));
            }
        }
    }
}
