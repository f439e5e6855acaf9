mod common;

use common::*;
use sdoh_probe::model::Outcome;
use sdoh_probe::probe::{parse_completion, parse_prediction};

#[test]
fn fixture_corpus_is_classified_exactly() {
    println!("{}", check_parser_corpus().unwrap());
}

#[test]
fn every_kind_is_represented() {
    let fixtures = load_completions();
    for kind in ["canonical", "spacing", "prose", "refusal"] {
        assert!(fixtures.iter().any(|f| f.kind == kind), "no {kind} fixtures");
    }
    assert!(fixtures.iter().any(|f| f.expected.is_none()));
}

#[test]
fn refusals_keep_the_raw_text() {
    for f in load_completions().iter().filter(|f| f.expected.is_none()) {
        match parse_prediction(&f.text) {
            Outcome::Refusal(raw) => assert_eq!(raw, f.text),
            other => panic!("{:?} parsed as {other:?}", f.text),
        }
    }
}

#[test]
fn match_count_is_reported() {
    let p = parse_completion("Valeur prédite: 2 ... puis Valeur prédite : 6");
    assert_eq!(p.outcome.value().map(|v| v.get()), Some(2));
    assert_eq!(p.matches, 2);
}
