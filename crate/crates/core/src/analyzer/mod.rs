//! Static checking and flattening.
//!
//! [`check`] runs the passes in order: lift anonymous classes, build the class
//! table, check conformance and types, then normalize. [`flatten`] instantiates
//! a checked system into a [`HybridModel`].

pub mod conformance;
pub mod flatten;
pub mod normalize;
pub mod table;
pub mod typeck;

use crate::ast::{BuiltinInterface, CompilationUnit};
use crate::diag::{Diagnostic, Severity};
use crate::eval::Externals;

pub use flatten::{flatten, Action, Component, Endpoint, FlattenError, HybridModel, Mode, Ode, OdeRhs, Role, Subsystem, SyncGroup, Transition};
pub use table::ClassTable;

/// A unit that passed every static check, in normal form.
#[derive(Debug, Clone)]
pub struct Checked {
    pub unit: CompilationUnit,
    pub table: ClassTable,
    /// Warnings only.
    pub warnings: Vec<Diagnostic>,
}

impl Checked {
    /// Names of all classes implementing System, in declaration order.
    pub fn systems(&self) -> Vec<String> {
        self.table
            .classes
            .keys()
            .filter(|c| self.table.builtin_interface(c) == Some(BuiltinInterface::System))
            .cloned()
            .collect()
    }
}

/// Runs all static passes. On failure returns every finding, errors and
/// warnings, ordered by position.
pub fn check(unit: &CompilationUnit, externals: &Externals) -> Result<Checked, Vec<Diagnostic>> {
    let lifted = table::lift_anonymous(unit);
    let (t, mut report) = ClassTable::build(&lifted);
    report.extend(conformance::check_interface_conformance(&t));
    report.extend(typeck::resolve_and_typecheck(&t, externals));
    report.sort_by_key(|d| (d.span.offset, d.rule.clone()));
    report.dedup();
    if report.iter().any(|d| d.severity == Severity::Error) {
        return Err(report);
    }
    let unit = normalize::normalize_dbc(&lifted, &t);
    let (table, _) = ClassTable::build(&unit);
    Ok(Checked { unit, table, warnings: report })
}
