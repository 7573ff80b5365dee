//! Checks that back the acceptance run in `tests/acceptance.rs`.
//!
//! Every oracle here is written against the public API only and shares no
//! code with the routine it checks: brute-force scans instead of the
//! tokenizer and matcher, finite differences instead of backprop, character
//! multisets instead of the segmenter's own bookkeeping.

pub mod oracles;
pub mod pipeline;
pub mod published;

/// Outcome of one check: a short measurement either way.
pub type Check = Result<String, String>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}
