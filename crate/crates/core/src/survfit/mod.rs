//! Single-trial estimation: Kaplan-Meier curves and the univariable Cox
//! model for a binary treatment indicator.

mod cox;
mod km;

pub use cox::{cox_fit, estimate, CoxFit, EstimateRecord, TieMethod};
pub use km::{km_curve, median_survival, ArmFilter, KmCurve};
