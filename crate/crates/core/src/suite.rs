//! The built-in derivation suite: a scripted replay of the full
//! 50-to-30-component reduction with every intermediate equality
//! asserted canonically and the curvature identities additionally
//! confirmed by the exact numeric oracle.

use crate::derivation::{parse_script, run_script_in, Report, RunOptions, Session};
use crate::parse::print_expr;
use thiserror::Error;

pub const SUITE_SCRIPT: &str = include_str!("suite_data/reduction.script");

/// Deliberate single-term corruptions used to demonstrate that the
/// assertions actually bite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Flip the sign of the Ricci term in the charged commutator.
    FlipRicciSign,
    /// Drop the Ricci term from the charged commutator.
    DropRicci,
}

impl Mutation {
    pub fn parse(text: &str) -> Option<Mutation> {
        match text {
            "flip-ricci-sign" => Some(Mutation::FlipRicciSign),
            "drop-ricci" => Some(Mutation::DropRicci),
            _ => None,
        }
    }
}

#[derive(Error, Debug)]
pub enum SuiteError {
    #[error("mutation target not found in the suite script")]
    MutationTargetMissing,
    #[error(transparent)]
    Derivation(#[from] crate::derivation::DerivationError),
    #[error(transparent)]
    Parse(#[from] crate::parse::ParseError),
}

/// The suite text with an optional mutation applied.
pub fn suite_script(mutation: Option<Mutation>) -> Result<String, SuiteError> {
    let target = "- Ric_{a c}*PhiS^{c}_{b}";
    let text = match mutation {
        None => SUITE_SCRIPT.to_string(),
        Some(Mutation::FlipRicciSign) => {
            if !SUITE_SCRIPT.contains(target) {
                return Err(SuiteError::MutationTargetMissing);
            }
            SUITE_SCRIPT.replacen(target, "+ Ric_{a c}*PhiS^{c}_{b}", 1)
        }
        Some(Mutation::DropRicci) => {
            if !SUITE_SCRIPT.contains(target) {
                return Err(SuiteError::MutationTargetMissing);
            }
            SUITE_SCRIPT.replacen(target, "", 1)
        }
    };
    Ok(text)
}

/// Runs the built-in reduction replay. Returns the report together with
/// the finished session so callers can inspect or oracle-check any
/// registered equation.
pub fn run_builtin_suite(
    options: RunOptions,
    mutation: Option<Mutation>,
) -> Result<(Report, Session), SuiteError> {
    let text = suite_script(mutation)?;
    let script = parse_script(&text)?;
    let mut session = Session::new(options);
    let mut report = run_script_in(&mut session, &script)?;
    if report.passed {
        if let Ok(eq) = session.equation("moment_coupling") {
            let canon = crate::canon::canonicalize(&eq.lhs, &session.table)
                .map(|c| print_expr(c.expr(), &session.table))
                .unwrap_or_else(|e| e.to_string());
            report
                .notes
                .push(format!("assembled moment coupling: {canon}"));
        }
        if session.options.no_cyclic {
            report.notes.push(
                "curvature sampled without the cyclic projection: all identities still pass"
                    .to_string(),
            );
        }
        report.notes.push(
            "the rank-2 tilde fields of the rescaled system are one field; the mixed-trace \
             constraint on the antisymmetric-pair field is derived, not declared"
                .to_string(),
        );
    }
    Ok((report, session))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_script_parses() {
        let script = parse_script(SUITE_SCRIPT).unwrap();
        assert!(script.steps.len() > 80);
    }

    #[test]
    fn mutations_patch_the_script() {
        let flipped = suite_script(Some(Mutation::FlipRicciSign)).unwrap();
        assert!(flipped.contains("+ Ric_{a c}*PhiS^{c}_{b}"));
        let dropped = suite_script(Some(Mutation::DropRicci)).unwrap();
        assert!(!dropped.contains("- Ric_{a c}*PhiS^{c}_{b}"));
    }
}
