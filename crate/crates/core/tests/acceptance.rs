mod common;

use common::*;

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("fisher-oracle-sweep", check_fisher_oracle),
        ("fisher-spot-values", check_spot_values),
        ("bias-score-identities", check_bias_identities),
        ("binarization", check_binarization),
        ("parser-fixture-corpus", check_parser_corpus),
        ("neutralization-leak-fixture", check_leak_fixture),
        ("planted-association-recovery", check_planted_recovery),
        ("campaign-resumability", check_resumability),
        ("pipeline-determinism", check_determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                println!("FAIL {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
