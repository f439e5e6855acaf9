mod common;

use common::*;
use proptest::prelude::*;
use sdoh_probe::association::{fisher, Alternative, ContingencyTable};

#[test]
fn one_tailed_matches_enumeration_for_every_table_up_to_30() {
    let summary = check_fisher_oracle().unwrap();
    println!("{summary}");
}

#[test]
fn spot_values() {
    println!("{}", check_spot_values().unwrap());
}

#[test]
fn two_sided_matches_enumeration() {
    for t in all_tables(16) {
        let got = fisher(&t, Alternative::TwoSided).p;
        let want = oracle_two_sided(&t);
        assert!(rel_err(got, want) <= 1e-9, "{t:?}: {got} vs {want}");
    }
}

#[test]
fn degenerate_margins_give_one() {
    for t in [
        ContingencyTable::new(0, 0, 4, 6),
        ContingencyTable::new(0, 3, 0, 7),
        ContingencyTable::new(0, 0, 0, 0),
    ] {
        let r = fisher(&t, Alternative::Greater);
        assert_eq!(r.p, 1.0, "{t:?}");
        assert!(r.degenerate_margin);
    }
}

#[test]
fn undefined_odds_ratio_is_zero() {
    let r = fisher(&ContingencyTable::new(0, 4, 0, 6), Alternative::Greater);
    assert!(r.undefined_odds_ratio);
    assert_eq!(r.odds_ratio, 0.0);
}

#[test]
fn bias_identities() {
    println!("{}", check_bias_identities().unwrap());
}

#[test]
fn binarization_table() {
    println!("{}", check_binarization().unwrap());
}

proptest! {
    #[test]
    fn larger_tables_agree_with_u128_enumeration(a in 0u64..25, b in 0u64..25, c in 0u64..25, d in 0u64..25) {
        let t = ContingencyTable::new(a, b, c, d);
        let got = fisher(&t, Alternative::Greater).p;
        let want = oracle_greater(&t);
        prop_assert!(rel_err(got, want) <= 1e-9, "{:?}: {} vs {}", t, got, want);
    }
}
