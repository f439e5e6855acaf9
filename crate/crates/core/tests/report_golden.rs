//! Figures compared byte-for-byte against checked-in files. Set
//! `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;

use sdoh_probe::association::{AssociationRow, Direction};
use sdoh_probe::metrics::{distributions_from_runs, BiasScore, RunScore};
use sdoh_probe::report::{
    distribution_chart, heatmap, score_chart, ChartStyle, Figure, HeatmapStyle, InfiniteDisplay,
};

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("{} missing; run with UPDATE_GOLDEN=1", path.display()));
    assert!(expected == actual, "{name} differs from the golden file");
}

fn check(stem: &str, fig: &Figure) {
    golden(&format!("{stem}.svg"), &fig.svg);
    golden(&format!("{stem}.csv"), &fig.csv);
}

fn row(subject: &str, condition: &str, t: [u64; 4], odds_ratio: f64, p: f64) -> AssociationRow {
    AssociationRow {
        subject: subject.into(),
        condition: condition.into(),
        direction: Direction::Male,
        a: t[0],
        b: t[1],
        c: t[2],
        d: t[3],
        odds_ratio,
        p,
        neg_log10_p: 0.0 - p.log10(),
        significant: p < 0.05,
    }
}

fn rows() -> Vec<AssociationRow> {
    vec![
        row("alpha", "Workers", [40, 0, 30, 30], f64::INFINITY, 1.2e-9),
        row("alpha", "Executives", [5, 10, 60, 25], 0.21, 0.99),
        row("alpha", "Retired", [12, 8, 50, 30], 0.9, 0.6),
        row("beta", "Workers", [20, 5, 40, 35], 3.5, 0.012),
        row("beta", "Executives", [9, 6, 51, 34], 1.0, 0.55),
        row("beta", "Retired", [0, 10, 0, 90], 0.0, 1.0),
    ]
}

fn score(subject: &str, format: &str, score: Option<f64>, run_std: f64) -> BiasScore {
    BiasScore {
        subject: subject.into(),
        format: format.into(),
        n: 300,
        refusals: 4,
        score,
        run_std,
        class_1: 10,
        class_2: 20,
        class_3: 30,
        class_4: 40,
        class_5: 50,
        class_6: 60,
        class_7: 90,
    }
}

#[test]
fn heatmap_default_style() {
    check("heatmap", &heatmap(&rows(), &HeatmapStyle::default()).unwrap());
}

#[test]
fn heatmap_with_haldane_display_and_all_cells() {
    let style = HeatmapStyle {
        omit_below_one: false,
        infinite: InfiniteDisplay::Haldane,
        title: Some("Male predictions".into()),
        ..HeatmapStyle::default()
    };
    check("heatmap-haldane", &heatmap(&rows(), &style).unwrap());
}

#[test]
fn score_chart_with_missing_score() {
    let scores = vec![
        score("alpha", "all", Some(1.27), 0.004),
        score("beta", "all", Some(-0.42), 0.01),
        score("gamma", "all", None, 0.0),
    ];
    check("scores", &score_chart(&scores, &ChartStyle::default()).unwrap());
}

#[test]
fn distribution_chart_over_three_runs() {
    let runs: Vec<RunScore> = (1..=3)
        .flat_map(|run| {
            ["alpha", "beta"].into_iter().map(move |subject| RunScore {
                subject: subject.into(),
                format: "all".into(),
                run,
                n: 100,
                refusals: run as u64,
                score: Some(0.5),
                class_1: 5 + run as u64,
                class_2: 10,
                class_3: 15,
                class_4: 20 - run as u64,
                class_5: 20,
                class_6: 15,
                class_7: 15,
            })
        })
        .collect();
    let dists = distributions_from_runs(&runs);
    check("distribution", &distribution_chart(&dists, &ChartStyle::default()).unwrap());
}

#[test]
fn empty_inputs_are_errors() {
    assert!(heatmap(&[], &HeatmapStyle::default()).is_err());
    assert!(score_chart(&[], &ChartStyle::default()).is_err());
    assert!(distribution_chart(&[], &ChartStyle::default()).is_err());
}
