use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// 2x2 table. Rows: condition true / false. Columns: prediction true / false.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable { a, b, c, d }
    }

    /// Tabulate `(condition, prediction)` pairs.
    pub fn tally(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut t = ContingencyTable::default();
        for pair in pairs {
            match pair {
                (true, true) => t.a += 1,
                (true, false) => t.b += 1,
                (false, true) => t.c += 1,
                (false, false) => t.d += 1,
            }
        }
        t
    }

    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// Relabel condition true/false: swaps (a,b) with (c,d).
    pub fn swap_rows(&self) -> Self {
        ContingencyTable::new(self.c, self.d, self.a, self.b)
    }

    pub fn transpose(&self) -> Self {
        ContingencyTable::new(self.a, self.c, self.b, self.d)
    }

    pub fn odds_ratio(&self) -> OddsRatio {
        let ad = self.a as f64 * self.d as f64;
        let bc = self.b as f64 * self.c as f64;
        match (ad > 0.0, bc > 0.0) {
            (_, true) => OddsRatio::Finite(ad / bc),
            (true, false) => OddsRatio::Infinite,
            (false, false) => OddsRatio::Undefined,
        }
    }

    /// Haldane-Anscombe corrected odds ratio (+0.5 in every cell).
    pub fn haldane_odds_ratio(&self) -> f64 {
        let h = |x: u64| x as f64 + 0.5;
        (h(self.a) * h(self.d)) / (h(self.b) * h(self.c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OddsRatio {
    Finite(f64),
    Infinite,
    /// a·d = b·c = 0.
    Undefined,
}

impl OddsRatio {
    /// Numeric value; undefined reports as 0.
    pub fn value(self) -> f64 {
        match self {
            OddsRatio::Finite(v) => v,
            OddsRatio::Infinite => f64::INFINITY,
            OddsRatio::Undefined => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    #[default]
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherResult {
    pub odds_ratio: f64,
    pub p: f64,
    pub neg_log10_p: f64,
    /// Condition or prediction never true (a+b = 0 or a+c = 0); p is 1.
    pub degenerate_margin: bool,
    /// a·d = b·c = 0; odds_ratio is reported as 0.
    pub undefined_odds_ratio: bool,
}

/// Table of ln(k!) for k = 0..=n.
#[derive(Debug, Clone)]
pub struct LogFactorial {
    table: Vec<f64>,
}

impl LogFactorial {
    pub fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        // compensated summation keeps the error near one ulp of ln(n!)
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 1..=n {
            let y = (k as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        LogFactorial { table }
    }

    pub fn max_n(&self) -> usize {
        self.table.len() - 1
    }

    pub fn get(&self, k: u64) -> f64 {
        self.table[k as usize]
    }

    fn ln_choose(&self, n: u64, k: u64) -> f64 {
        self.get(n) - self.get(k) - self.get(n - k)
    }

    /// ln P(X = x) for X ~ Hypergeometric(population, successes, draws).
    pub fn ln_hypergeom_pmf(&self, population: u64, successes: u64, draws: u64, x: u64) -> f64 {
        self.ln_choose(successes, x) + self.ln_choose(population - successes, draws - x)
            - self.ln_choose(population, draws)
    }
}

const SHARED_TABLE_N: usize = 1 << 16;

fn shared_table() -> &'static LogFactorial {
    static TABLE: OnceLock<LogFactorial> = OnceLock::new();
    TABLE.get_or_init(|| LogFactorial::new(SHARED_TABLE_N))
}

/// One-tailed (greater) Fisher exact test.
pub fn fisher_one_tailed(t: &ContingencyTable) -> FisherResult {
    fisher(t, Alternative::Greater)
}

pub fn fisher(t: &ContingencyTable, alternative: Alternative) -> FisherResult {
    let n = t.n() as usize;
    if n <= SHARED_TABLE_N {
        fisher_with(t, alternative, shared_table())
    } else {
        fisher_with(t, alternative, &LogFactorial::new(n))
    }
}

/// Fisher exact test using a caller-provided factorial table, which must
/// cover `t.n()`.
pub fn fisher_with(t: &ContingencyTable, alternative: Alternative, lf: &LogFactorial) -> FisherResult {
    assert!(
        t.n() as usize <= lf.max_n(),
        "log-factorial table too small for n = {}",
        t.n()
    );
    let or = t.odds_ratio();
    let degenerate_margin = t.a + t.b == 0 || t.a + t.c == 0;
    let (p, neg_log10_p) = if degenerate_margin {
        (1.0, 0.0)
    } else {
        match alternative {
            Alternative::Greater => upper_tail(t, lf),
            Alternative::TwoSided => two_sided(t, lf),
        }
    };
    FisherResult {
        odds_ratio: or.value(),
        p,
        neg_log10_p,
        degenerate_margin,
        undefined_odds_ratio: or == OddsRatio::Undefined,
    }
}

struct Margins {
    n: u64,
    k: u64,
    draws: u64,
    lo: u64,
    hi: u64,
}

fn margins(t: &ContingencyTable) -> Margins {
    let n = t.n();
    let k = t.a + t.b;
    let draws = t.a + t.c;
    Margins {
        n,
        k,
        draws,
        lo: (k + draws).saturating_sub(n),
        hi: k.min(draws),
    }
}

/// Mode of the hypergeometric support, used as the scaling reference.
fn mode(m: &Margins) -> u64 {
    let x = ((m.k + 1) as f64 * (m.draws + 1) as f64 / (m.n + 2) as f64).floor() as u64;
    x.clamp(m.lo, m.hi)
}

fn finish(ln_ref: f64, scaled_sum: f64, ln_terms: impl Fn() -> Vec<f64>) -> (f64, f64) {
    let ln_p = if scaled_sum > f64::MIN_POSITIVE {
        ln_ref + scaled_sum.ln()
    } else {
        // tail far from the mode: recompute in log space around its own maximum
        let terms = ln_terms();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    };
    let p = (ln_ref.exp() * scaled_sum).min(1.0);
    let neg_log10_p = (-ln_p / std::f64::consts::LN_10).max(0.0);
    (p, neg_log10_p)
}

fn upper_tail(t: &ContingencyTable, lf: &LogFactorial) -> (f64, f64) {
    let m = margins(t);
    let ln_ref = lf.ln_hypergeom_pmf(m.n, m.k, m.draws, mode(&m));
    // summed from the top of the support down, so the tail is monotone in a
    let mut sum = 0.0;
    for x in (t.a..=m.hi).rev() {
        sum += (lf.ln_hypergeom_pmf(m.n, m.k, m.draws, x) - ln_ref).exp();
    }
    finish(ln_ref, sum, || {
        (t.a..=m.hi)
            .map(|x| lf.ln_hypergeom_pmf(m.n, m.k, m.draws, x))
            .collect()
    })
}

fn two_sided(t: &ContingencyTable, lf: &LogFactorial) -> (f64, f64) {
    let m = margins(t);
    let ln_ref = lf.ln_hypergeom_pmf(m.n, m.k, m.draws, mode(&m));
    let ln_obs = lf.ln_hypergeom_pmf(m.n, m.k, m.draws, t.a);
    // same relative tolerance as the usual reference implementation
    let cutoff = ln_obs + (1.0f64 + 1e-7).ln();
    let included = || {
        (m.lo..=m.hi)
            .map(|x| lf.ln_hypergeom_pmf(m.n, m.k, m.draws, x))
            .filter(|&l| l <= cutoff)
            .collect::<Vec<_>>()
    };
    let sum: f64 = included().iter().map(|l| (l - ln_ref).exp()).sum();
    finish(ln_ref, sum, included)
}
