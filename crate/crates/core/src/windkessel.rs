//! Three-element (RCR) Windkessel outlet model.
//!
//! Per outlet the circuit obeys
//!
//! ```text
//! C dp_p/dt + (p_p - p_d) / R_d = Q
//! p - p_p = R_p Q
//! ```
//!
//! The algebraic line is eliminated, leaving one scalar ODE in the proximal
//! pressure `p_p`, advanced with implicit Euler (BDF1). Units are CGS:
//! dyne/cm^2 for pressure, cm^3/s for flow, dyne s/cm^5 for resistance and
//! cm^5/dyne for compliance.
//!
//! The outlet is standalone: it is not coupled to reconstructed ROM fields.

use std::io::{self, Write};
use thiserror::Error;

/// 1 mmHg in dyne/cm^2.
pub const DYNE_PER_CM2_PER_MMHG: f64 = 1333.22;
/// 1 l/min in cm^3/s.
pub const CM3_PER_S_PER_L_PER_MIN: f64 = 1000.0 / 60.0;

pub fn dyne_per_cm2_to_mmhg(p: f64) -> f64 {
    p / DYNE_PER_CM2_PER_MMHG
}

pub fn mmhg_to_dyne_per_cm2(p: f64) -> f64 {
    p * DYNE_PER_CM2_PER_MMHG
}

pub fn l_per_min_to_cm3_per_s(q: f64) -> f64 {
    q * CM3_PER_S_PER_L_PER_MIN
}

pub fn cm3_per_s_to_l_per_min(q: f64) -> f64 {
    q / CM3_PER_S_PER_L_PER_MIN
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WindkesselError {
    #[error("invalid Windkessel parameter {name} = {value}")]
    InvalidParams { name: &'static str, value: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("end time {t_end} must exceed start time {t_start}")]
    InvalidHorizon { t_start: f64, t_end: f64 },
    #[error("flow signal is not finite at t = {time}")]
    NonFiniteSignal { time: f64 },
    #[error("sampled flow signal needs at least one sample and a positive spacing")]
    InvalidSamples,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindkesselParams {
    pub r_proximal: f64,
    pub r_distal: f64,
    pub compliance: f64,
    pub p_distal: f64,
}

impl WindkesselParams {
    pub fn new(r_proximal: f64, r_distal: f64, compliance: f64, p_distal: f64) -> Result<Self, WindkesselError> {
        let params = Self {
            r_proximal,
            r_distal,
            compliance,
            p_distal,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), WindkesselError> {
        let positive = [
            ("r_proximal", self.r_proximal),
            ("r_distal", self.r_distal),
            ("compliance", self.compliance),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(WindkesselError::InvalidParams { name, value });
            }
        }
        if !self.p_distal.is_finite() {
            return Err(WindkesselError::InvalidParams {
                name: "p_distal",
                value: self.p_distal,
            });
        }
        Ok(())
    }

    /// `R_d C`, in seconds.
    pub fn time_constant(&self) -> f64 {
        self.r_distal * self.compliance
    }

    pub fn with_p_distal(self, p_distal: f64) -> Self {
        Self { p_distal, ..self }
    }
}

/// Outlet coefficients of the post-LVAD aorta model (zero distal pressure).
pub mod outlets {
    use super::WindkesselParams;

    const fn rcr(r_proximal: f64, r_distal: f64, compliance: f64) -> WindkesselParams {
        WindkesselParams {
            r_proximal,
            r_distal,
            compliance,
            p_distal: 0.0,
        }
    }

    pub const RIGHT_SUBCLAVIAN: WindkesselParams = rcr(2.56e3, 4.32e4, 3.26e-5);
    pub const RIGHT_COMMON_CAROTID: WindkesselParams = rcr(1.63e3, 2.74e4, 5.16e-5);
    pub const LEFT_COMMON_CAROTID: WindkesselParams = rcr(2.38e3, 4e4, 3.52e-5);
    pub const LEFT_SUBCLAVIAN: WindkesselParams = rcr(8.96e2, 1.51e4, 9.35e-5);
    pub const DESCENDING_AORTA: WindkesselParams = rcr(1.08e2, 1.83e3, 7.72e-4);

    pub const ALL: [(&str, WindkesselParams); 5] = [
        ("right_subclavian", RIGHT_SUBCLAVIAN),
        ("right_common_carotid", RIGHT_COMMON_CAROTID),
        ("left_common_carotid", LEFT_COMMON_CAROTID),
        ("left_subclavian", LEFT_SUBCLAVIAN),
        ("descending_aorta", DESCENDING_AORTA),
    ];

    pub fn by_name(name: &str) -> Option<WindkesselParams> {
        ALL.iter().find(|(n, _)| *n == name).map(|(_, p)| *p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindkesselState {
    pub p_proximal: f64,
    pub time: f64,
}

impl WindkesselState {
    pub fn new(p_proximal: f64, time: f64) -> Self {
        Self { p_proximal, time }
    }

    /// State sitting at the steady solution for a constant flow `q`.
    pub fn steady(params: &WindkesselParams, q: f64, time: f64) -> Self {
        Self {
            p_proximal: steady_state(params, q).0,
            time,
        }
    }
}

/// One implicit Euler step with the flow `q` taken at the new time level.
pub fn bdf1_step(
    state: &WindkesselState,
    params: &WindkesselParams,
    q: f64,
    dt: f64,
) -> Result<WindkesselState, WindkesselError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(WindkesselError::InvalidStep(dt));
    }
    if !q.is_finite() {
        return Err(WindkesselError::NonFiniteSignal { time: state.time + dt });
    }
    Ok(WindkesselState {
        p_proximal: step_pressure(state.p_proximal, params, q, dt),
        time: state.time + dt,
    })
}

fn step_pressure(p: f64, params: &WindkesselParams, q: f64, dt: f64) -> f64 {
    let c = params.compliance;
    let rd = params.r_distal;
    (p + dt / c * (q + params.p_distal / rd)) / (1.0 + dt / (rd * c))
}

/// Pressure at the outlet, `p = p_p + R_p Q`.
pub fn outlet_pressure(state: &WindkesselState, params: &WindkesselParams, q: f64) -> f64 {
    state.p_proximal + params.r_proximal * q
}

/// `(p_p, p)` at equilibrium under constant flow `q`.
pub fn steady_state(params: &WindkesselParams, q: f64) -> (f64, f64) {
    let p_proximal = params.p_distal + params.r_distal * q;
    (p_proximal, p_proximal + params.r_proximal * q)
}

/// A flow rate as a function of time, cm^3/s.
pub trait FlowSignal {
    fn flow_at(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> FlowSignal for F {
    fn flow_at(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Uniformly sampled flow, linearly interpolated between samples and held
/// constant outside the sampled window.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFlow {
    t0: f64,
    spacing: f64,
    samples: Vec<f64>,
}

impl SampledFlow {
    pub fn new(t0: f64, spacing: f64, samples: Vec<f64>) -> Result<Self, WindkesselError> {
        if samples.is_empty() || !(spacing > 0.0 && spacing.is_finite()) || !t0.is_finite() {
            return Err(WindkesselError::InvalidSamples);
        }
        Ok(Self { t0, spacing, samples })
    }
}

impl FlowSignal for SampledFlow {
    fn flow_at(&self, t: f64) -> f64 {
        let last = self.samples.len() - 1;
        let x = (t - self.t0) / self.spacing;
        if !(x > 0.0) {
            return self.samples[0];
        }
        if x >= last as f64 {
            return self.samples[last];
        }
        let i = x.floor() as usize;
        let frac = x - i as f64;
        self.samples[i] + frac * (self.samples[i + 1] - self.samples[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub p_proximal: f64,
    pub p_outlet: f64,
}

/// Number of steps needed to cover `span` with steps of `dt`; spans that
/// are an integer multiple of `dt` up to rounding are not padded.
fn step_count(span: f64, dt: f64) -> usize {
    let ratio = span / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Integrates from `initial` to `t_end`. The trace holds the initial state
/// followed by one point per step; the last step is shortened if needed so
/// the trace ends exactly at `t_end`.
pub fn simulate<S: FlowSignal + ?Sized>(
    params: &WindkesselParams,
    signal: &S,
    dt: f64,
    t_end: f64,
    initial: WindkesselState,
) -> Result<Vec<TracePoint>, WindkesselError> {
    params.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(WindkesselError::InvalidStep(dt));
    }
    let t0 = initial.time;
    if !(t_end > t0) || !t_end.is_finite() {
        return Err(WindkesselError::InvalidHorizon { t_start: t0, t_end });
    }
    let steps = step_count(t_end - t0, dt);
    let flow = |t: f64| {
        let q = signal.flow_at(t);
        if q.is_finite() {
            Ok(q)
        } else {
            Err(WindkesselError::NonFiniteSignal { time: t })
        }
    };

    let mut trace = Vec::with_capacity(steps + 1);
    let q0 = flow(t0)?;
    trace.push(TracePoint {
        t: t0,
        p_proximal: initial.p_proximal,
        p_outlet: outlet_pressure(&initial, params, q0),
    });

    let mut state = initial;
    for n in 1..=steps {
        let t_next = if n == steps { t_end } else { t0 + n as f64 * dt };
        let q = flow(t_next)?;
        let h = t_next - state.time;
        state = WindkesselState {
            p_proximal: step_pressure(state.p_proximal, params, q, h),
            time: t_next,
        };
        trace.push(TracePoint {
            t: t_next,
            p_proximal: state.p_proximal,
            p_outlet: outlet_pressure(&state, params, q),
        });
    }
    Ok(trace)
}

/// Writes `t,p_proximal,p_outlet` rows with 17 significant digits.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], mut out: W) -> io::Result<()> {
    writeln!(out, "t,p_proximal,p_outlet")?;
    for p in trace {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", p.t, p.p_proximal, p.p_outlet)?;
    }
    Ok(())
}
