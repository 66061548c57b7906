//! Non-intrusive reduced-order modeling with POD and RBF interpolation,
//! plus the lumped-parameter hemodynamic pieces used alongside it: a
//! three-element Windkessel outlet and an LVAD pump head curve.

// NaN must fail validity checks, so `!(x > 0.0)` is intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod pipeline;
pub mod pod;
pub mod pump;
pub mod rbf;
pub mod snapshot;
pub mod windkessel;
