mod common;

use common::{clipped_overlap_oracle, lcs_oracle};
use proptest::prelude::*;
use r2p_core::corpus::TaskKind;
use r2p_core::metrics::{
    evaluate, lcs_len, macro_f1, mae, parse_rating, rmse, rouge_1_f, rouge_l_f, rouge_scores,
    unigram_overlap, MacroF1Options, Metric,
};
use r2p_core::par::Execution;

fn words(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec((0u8..6).prop_map(|i| format!("t{i}")), 0..max)
}

proptest! {
    #[test]
    fn mae_never_exceeds_rmse(pairs in prop::collection::vec((1i64..=5, 1i64..=5), 1..40)) {
        let (p, g): (Vec<i64>, Vec<i64>) = pairs.into_iter().unzip();
        let (a, r) = (mae(&p, &g).unwrap(), rmse(&p, &g).unwrap());
        prop_assert!(a <= r + 1e-12);
        prop_assert!((0.0..=4.0).contains(&a));
    }

    #[test]
    fn macro_f1_ignores_instance_order(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..30), rot in 0usize..30) {
        let labels = ["l0", "l1", "l2", "l3"];
        let p: Vec<&str> = pairs.iter().map(|x| labels[x.0 as usize]).collect();
        let g: Vec<&str> = pairs.iter().map(|x| labels[x.1 as usize]).collect();
        let a = macro_f1(&p, &g, &labels, MacroF1Options::default()).unwrap();
        let mut p2 = p.clone();
        let mut g2 = g.clone();
        let r = rot % p.len();
        p2.rotate_left(r);
        g2.rotate_left(r);
        let b = macro_f1(&p2, &g2, &labels, MacroF1Options::default()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn rouge_bounded_symmetric_and_oracle_equal(a in words(25), b in words(25)) {
        let (sa, sb) = (a.join(" "), b.join(" "));
        for f in [rouge_1_f, rouge_l_f] {
            let v = f(&sa, &sb);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - f(&sb, &sa)).abs() < 1e-12);
        }
        prop_assert_eq!(lcs_len(&a, &b), lcs_oracle(&a, &b));
        prop_assert_eq!(unigram_overlap(&a, &b), clipped_overlap_oracle(&a, &b));
        prop_assert!(lcs_len(&a, &b) <= unigram_overlap(&a, &b));
    }

    #[test]
    fn parsed_ratings_stay_in_range(text in ".{0,20}") {
        prop_assert!((1..=5).contains(&parse_rating(&text)));
    }
}

#[test]
fn parallel_rouge_matches_sequential() {
    let pairs: Vec<(String, String)> = (0..50)
        .map(|i| (format!("a b c {i} d"), format!("b c d {} e", i % 7)))
        .collect();
    let seq = rouge_scores(&pairs, Execution::Sequential);
    let par = rouge_scores(&pairs, Execution::with_workers(4));
    assert_eq!(seq, par);
}

#[test]
fn evaluate_picks_metrics_per_task() {
    let opts = MacroF1Options::default();
    let cls = evaluate(TaskKind::Lamp1, &["[1]", "[2]"], &["[1]", "[1]"], opts).unwrap();
    assert_eq!(cls.keys().copied().collect::<Vec<_>>(), [Metric::Accuracy, Metric::MacroF1]);
    assert_eq!(cls[&Metric::Accuracy], 0.5);

    let reg = evaluate(TaskKind::Lamp3, &["4", "rating: 2", "nonsense"], &["5", "2", "3"], opts).unwrap();
    assert_eq!(reg[&Metric::Mae], 1.0 / 3.0);
    assert_eq!(reg[&Metric::Rmse], (1.0f64 / 3.0).sqrt());

    let gen = evaluate(TaskKind::Lamp5, &["the cat sat"], &["the cat"], opts).unwrap();
    assert!((gen[&Metric::Rouge1] - 0.8).abs() < 1e-15);
    assert!((gen[&Metric::RougeL] - 0.8).abs() < 1e-15);
}

#[test]
fn news_categories_macro_f1_skips_unused_labels() {
    let labels = TaskKind::Lamp2N.label_set().unwrap();
    let v = macro_f1(&["sports", "women"], &["sports", "sports"], labels, MacroF1Options::default()).unwrap();
    // sports: P=1, R=1/2 → 2/3; women: predicted, no support → 0
    assert!((v - (2.0 / 3.0) / 2.0).abs() < 1e-15);
    assert_eq!(labels.len(), 15);
}
