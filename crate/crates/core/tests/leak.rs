mod common;

use std::collections::BTreeSet;

use common::*;
use sdoh_probe::corpus::{ingest, leak_check, read_records, render, InputFormat, NeutralizationLexicon};

#[test]
fn quarantine_matches_expected_list_and_kept_records_are_clean() {
    println!("{}", check_leak_fixture().unwrap());
}

#[test]
fn quarantine_reasons_name_the_token() {
    let records = read_records(&fixture("leak_corpus.jsonl")).unwrap();
    let out = ingest(records, &NeutralizationLexicon::builtin(), InputFormat::NeutralizedSdoh);
    for r in &out.rejected {
        assert!(r.token.is_some(), "{} has no token: {}", r.record_id, r.reason);
    }
}

#[test]
fn neutralized_renderings_are_stable() {
    let lex = NeutralizationLexicon::builtin();
    let records = read_records(&fixture("leak_corpus.jsonl")).unwrap();
    let a = ingest(records.clone(), &lex, InputFormat::NeutralizedSdoh);
    let b = ingest(records, &lex, InputFormat::NeutralizedSdoh);
    let render_all = |rs: &[sdoh_probe::model::SdohRecord]| -> Vec<String> {
        rs.iter().map(|r| render(r, InputFormat::NeutralizedSdoh).unwrap()).collect()
    };
    assert_eq!(render_all(&a.kept), render_all(&b.kept));
    let ids: BTreeSet<_> = a.kept.iter().map(|r| r.record_id.clone()).collect();
    assert_eq!(ids.len(), a.kept.len());
    assert!(a.kept.iter().all(|r| leak_check(r, &lex).is_empty()));
}
