//! Numerical audits: the energy bound, convergence rates, operator spectra,
//! the reduced-problem oracle and mean drift.

pub mod audit;
pub mod energy;
pub mod mms;

pub use audit::{
    compatibility_check, discrete_exactness_check, initial_guess_sensitivity, operator_audit, oracle_compare,
    CompatibilityRecord, OperatorAuditRow, OracleRecord,
};
pub use energy::{energy_audit, energy_audit_with, BoundVariant, EnergyLedger, EnergyRow};
pub use mms::{field_errors, mms_convergence, temporal_convergence, DtRule, FieldErrors, RatesRow, RatesTable, TemporalStudy};
