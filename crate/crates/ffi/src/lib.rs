//! C ABI over the sdoh-probe library.
//!
//! Every fallible function returns a [`ProbeStatus`]. On failure the message is
//! available from [`probe_last_error_message`] on the same thread until the
//! next call. Handles are opaque and must be released with their `_free`
//! function; strings returned by the library are released with
//! [`probe_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sdoh_probe::association::{binarize, fisher, Alternative, ContingencyTable};
use sdoh_probe::corpus::{leak_check, neutralize, read_records, render, InputFormat, NeutralizationLexicon};
use sdoh_probe::metrics::bias_score;
use sdoh_probe::model::{LikertValue, Outcome, SdohRecord};
use sdoh_probe::probe::{parse_prediction, Journal};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    OutOfRange = 5,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOddsRatioKind {
    Finite = 0,
    Infinite = 1,
    /// 0/0; `odds_ratio` is reported as 0.
    Undefined = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeFisherResult {
    pub odds_ratio: f64,
    pub odds_ratio_kind: ProbeOddsRatioKind,
    pub p: f64,
    pub neg_log10_p: f64,
    pub degenerate_margin: bool,
}

/// -1 female (1-3), 0 neither (4), 1 male (5-7).
pub type ProbeBinarized = i32;

pub struct ProbeLexicon(NeutralizationLexicon);
pub struct ProbeCorpus(Vec<SdohRecord>);
pub struct ProbeJournal(Journal);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ProbeStatus, String);

impl Failure {
    fn new(status: ProbeStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ProbeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ProbeStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ProbeStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(ProbeStatus::NullPointer, "null output pointer"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(ProbeStatus::NullPointer, "null handle"))
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(ProbeStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(ProbeStatus::InvalidArgument, format!("string is not UTF-8: {e}")))
}

fn likert(v: u8) -> Result<LikertValue, Failure> {
    LikertValue::new(v as i64).map_err(|e| Failure::new(ProbeStatus::OutOfRange, e))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message of the last failed call on this thread, or NULL. Owned by the
/// library.
#[no_mangle]
pub extern "C" fn probe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn probe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Fisher's exact test on [[a, b], [c, d]]; one-tailed (greater) unless
/// `two_sided`.
#[no_mangle]
pub unsafe extern "C" fn probe_fisher(
    a: u64,
    b: u64,
    c: u64,
    d: u64,
    two_sided: bool,
    out: *mut ProbeFisherResult,
) -> ProbeStatus {
    guard(|| {
        let out = out_ref(out)?;
        let alt = if two_sided { Alternative::TwoSided } else { Alternative::Greater };
        let r = fisher(&ContingencyTable::new(a, b, c, d), alt);
        let kind = if r.undefined_odds_ratio {
            ProbeOddsRatioKind::Undefined
        } else if r.odds_ratio.is_infinite() {
            ProbeOddsRatioKind::Infinite
        } else {
            ProbeOddsRatioKind::Finite
        };
        *out = ProbeFisherResult {
            odds_ratio: r.odds_ratio,
            odds_ratio_kind: kind,
            p: r.p,
            neg_log10_p: r.neg_log10_p,
            degenerate_margin: r.degenerate_margin,
        };
        Ok(())
    })
}

/// Bias score of `len` Likert values in 1..=7.
#[no_mangle]
pub unsafe extern "C" fn probe_bias_score(values: *const u8, len: usize, out: *mut f64) -> ProbeStatus {
    guard(|| {
        let out = out_ref(out)?;
        if values.is_null() {
            return Err(Failure::new(ProbeStatus::NullPointer, "null values"));
        }
        let vs = std::slice::from_raw_parts(values, len)
            .iter()
            .map(|&v| likert(v))
            .collect::<Result<Vec<_>, _>>()?;
        *out = bias_score(&vs).map_err(|e| Failure::new(ProbeStatus::InvalidArgument, e))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn probe_binarize(value: u8, out: *mut ProbeBinarized) -> ProbeStatus {
    guard(|| {
        let out = out_ref(out)?;
        let b = binarize(likert(value)?);
        *out = if b.male {
            1
        } else if b.female {
            -1
        } else {
            0
        };
        Ok(())
    })
}

/// Parse a completion. Writes 1..=7, or 0 for a refusal.
#[no_mangle]
pub unsafe extern "C" fn probe_parse_prediction(completion: *const c_char, out: *mut u8) -> ProbeStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = match parse_prediction(c_str(completion)?) {
            Outcome::Value(v) => v.get(),
            Outcome::Refusal(_) => 0,
        };
        Ok(())
    })
}

/// The bundled lexicon when `path` is NULL, otherwise the TOML file at
/// `path`.
#[no_mangle]
pub unsafe extern "C" fn probe_lexicon_load(path: *const c_char, out: *mut *mut ProbeLexicon) -> ProbeStatus {
    guard(|| {
        let out = out_ref(out)?;
        let lex = if path.is_null() {
            NeutralizationLexicon::builtin()
        } else {
            NeutralizationLexicon::load(Path::new(c_str(path)?))
                .map_err(|e| Failure::new(ProbeStatus::Parse, e))?
        };
        *out = Box::into_raw(Box::new(ProbeLexicon(lex)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn probe_lexicon_free(lex: *mut ProbeLexicon) {
    if !lex.is_null() {
        drop(Box::from_raw(lex));
    }
}

#[no_mangle]
pub unsafe extern "C" fn probe_corpus_load(path: *const c_char, out: *mut *mut ProbeCorpus) -> ProbeStatus {
    guard(|| {
        let out = out_ref(out)?;
        let records = read_records(Path::new(c_str(path)?)).map_err(|e| {
            let status = if matches!(e, sdoh_probe::corpus::CorpusError::Io { .. }) {
                ProbeStatus::Io
            } else {
                ProbeStatus::Parse
            };
            Failure::new(status, e)
        })?;
        *out = Box::into_raw(Box::new(ProbeCorpus(records)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn probe_corpus_len(corpus: *const ProbeCorpus, out: *mut usize) -> ProbeStatus {
    guard(|| {
        *out_ref(out)? = handle(corpus)?.0.len();
        Ok(())
    })
}

/// Neutralize every record. Records that fail or still leak markers are
/// dropped and counted in `rejected`.
#[no_mangle]
pub unsafe extern "C" fn probe_corpus_neutralize(
    corpus: *const ProbeCorpus,
    lexicon: *const ProbeLexicon,
    out: *mut *mut ProbeCorpus,
    rejected: *mut usize,
) -> ProbeStatus {
    guard(|| {
        let corpus = handle(corpus)?;
        let lex = &handle(lexicon)?.0;
        let out = out_ref(out)?;
        let rejected = out_ref(rejected)?;
        let mut kept = Vec::new();
        *rejected = 0;
        for r in &corpus.0 {
            match neutralize(r, lex) {
                Ok(n) if leak_check(&n, lex).is_empty() => kept.push(n),
                _ => *rejected += 1,
            }
        }
        *out = Box::into_raw(Box::new(ProbeCorpus(kept)));
        Ok(())
    })
}

/// Render record `index` in `format` (`full`, `filtered`, `extracted`,
/// `neutralized`). The string must be released with `probe_string_free`.
#[no_mangle]
pub unsafe extern "C" fn probe_corpus_render(
    corpus: *const ProbeCorpus,
    index: usize,
    format: *const c_char,
    out: *mut *mut c_char,
) -> ProbeStatus {
    guard(|| {
        let corpus = handle(corpus)?;
        let out = out_ref(out)?;
        let format: InputFormat = c_str(format)?
            .parse()
            .map_err(|e| Failure::new(ProbeStatus::InvalidArgument, e))?;
        let record = corpus
            .0
            .get(index)
            .ok_or_else(|| Failure::new(ProbeStatus::OutOfRange, format!("record index {index} out of range")))?;
        let text = render(record, format).map_err(|e| Failure::new(ProbeStatus::InvalidArgument, e))?;
        *out = into_c_string(text);
        Ok(())
    })
}

/// Record id at `index`, to be released with `probe_string_free`.
#[no_mangle]
pub unsafe extern "C" fn probe_corpus_record_id(
    corpus: *const ProbeCorpus,
    index: usize,
    out: *mut *mut c_char,
) -> ProbeStatus {
    guard(|| {
        let corpus = handle(corpus)?;
        let out = out_ref(out)?;
        let record = corpus
            .0
            .get(index)
            .ok_or_else(|| Failure::new(ProbeStatus::OutOfRange, format!("record index {index} out of range")))?;
        *out = into_c_string(record.record_id.clone());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn probe_corpus_free(corpus: *mut ProbeCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Open (or create) a campaign journal.
#[no_mangle]
pub unsafe extern "C" fn probe_journal_open(path: *const c_char, out: *mut *mut ProbeJournal) -> ProbeStatus {
    guard(|| {
        let out = out_ref(out)?;
        let j = Journal::open(Path::new(c_str(path)?)).map_err(|e| Failure::new(ProbeStatus::Io, e))?;
        *out = Box::into_raw(Box::new(ProbeJournal(j)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn probe_journal_len(journal: *const ProbeJournal, out: *mut usize) -> ProbeStatus {
    guard(|| {
        *out_ref(out)? = handle(journal)?.0.len();
        Ok(())
    })
}

/// Bias score of one subject over every journaled prediction, refusals
/// excluded. `refusals` receives the refusal count.
#[no_mangle]
pub unsafe extern "C" fn probe_journal_bias_score(
    journal: *const ProbeJournal,
    subject: *const c_char,
    out: *mut f64,
    refusals: *mut usize,
) -> ProbeStatus {
    guard(|| {
        let journal = handle(journal)?;
        let subject = c_str(subject)?;
        let out = out_ref(out)?;
        let refusals = out_ref(refusals)?;
        let entries = journal.0.entries().map_err(|e| Failure::new(ProbeStatus::Io, e))?;
        let mut values = Vec::new();
        let mut refused = 0;
        for e in entries.iter().filter(|e| e.subject == subject) {
            match e.outcome.value() {
                Some(v) => values.push(v),
                None => refused += 1,
            }
        }
        let score = bias_score(&values).map_err(|e| {
            Failure::new(ProbeStatus::InvalidArgument, format!("subject `{subject}`: {e}"))
        })?;
        *out = score;
        *refusals = refused;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn probe_journal_free(journal: *mut ProbeJournal) {
    if !journal.is_null() {
        drop(Box::from_raw(journal));
    }
}
