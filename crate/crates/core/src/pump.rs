//! LVAD pump head curve `dP = K_A w^2 + K_B w PF + K_C PF^2`.
//!
//! Units: head in mmHg, speed in rpm, flow in l/min. The default constants
//! are the HeartMate 3 fit; with them `K_C < 0` and `K_B < 0`, so the head
//! falls monotonically with flow and the inverse has at most one
//! nonnegative root whenever `dP < K_A w^2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when checking a computed flow against the admissible range.
pub const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PumpError {
    #[error("pump speed must be positive and finite, got {0} rpm")]
    InvalidSpeed(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("no real flow rate yields head {head} mmHg at {omega} rpm")]
    NoRealRoot { omega: f64, head: f64 },
    #[error("pump flow rate {flow} l/min is outside the admissible range [{min}, {max}] l/min")]
    FlowOutOfRange { flow: f64, min: f64, max: f64 },
    #[error("two nonnegative flow rates ({0}, {1}) match the requested head")]
    AmbiguousRoot(f64, f64),
    #[error("invalid pump curve: {0}")]
    InvalidCurve(&'static str),
    #[error("at least two curve samples are required, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpCurve {
    /// mmHg / rpm^2
    pub k_a: f64,
    /// mmHg / (rpm l/min)
    pub k_b: f64,
    /// mmHg / (l/min)^2
    pub k_c: f64,
    pub pf_min: f64,
    pub pf_max: f64,
}

impl Default for PumpCurve {
    fn default() -> Self {
        Self::HEARTMATE3
    }
}

impl PumpCurve {
    pub const HEARTMATE3: PumpCurve = PumpCurve {
        k_a: 3.45e-6,
        k_b: -5.9e-5,
        k_c: -1.45,
        pf_min: 3.0,
        pf_max: 5.0,
    };

    pub fn new(k_a: f64, k_b: f64, k_c: f64, pf_min: f64, pf_max: f64) -> Result<Self, PumpError> {
        let curve = Self {
            k_a,
            k_b,
            k_c,
            pf_min,
            pf_max,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), PumpError> {
        if [self.k_a, self.k_b, self.k_c, self.pf_min, self.pf_max]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(PumpError::InvalidCurve("non-finite constant"));
        }
        if self.k_c == 0.0 {
            return Err(PumpError::InvalidCurve("k_c must be nonzero"));
        }
        if !(self.pf_min < self.pf_max) {
            return Err(PumpError::InvalidCurve("pf_min must be below pf_max"));
        }
        Ok(())
    }

    fn check_range(&self, flow: f64) -> Result<f64, PumpError> {
        if flow >= self.pf_min - RANGE_SLACK && flow <= self.pf_max + RANGE_SLACK {
            Ok(flow)
        } else {
            Err(PumpError::FlowOutOfRange {
                flow,
                min: self.pf_min,
                max: self.pf_max,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpOperatingPoint {
    /// rpm
    pub speed: f64,
    /// l/min
    pub flow: f64,
    /// mmHg
    pub head: f64,
}

fn check_speed(omega: f64) -> Result<(), PumpError> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(PumpError::InvalidSpeed(omega))
    }
}

pub fn head_from_speed_flow(curve: &PumpCurve, omega: f64, pf: f64) -> Result<f64, PumpError> {
    check_speed(omega)?;
    if !pf.is_finite() {
        return Err(PumpError::NonFinite("flow"));
    }
    Ok(curve.k_a * omega * omega + curve.k_b * omega * pf + curve.k_c * pf * pf)
}

/// Real roots of `K_C PF^2 + K_B w PF + (K_A w^2 - dP) = 0`, larger first.
///
/// The larger-magnitude root comes from `q = -(b + sign(b) sqrt(disc)) / 2`
/// and the other from Vieta's product, so neither suffers cancellation.
pub fn flow_roots(curve: &PumpCurve, omega: f64, head: f64) -> Result<(f64, f64), PumpError> {
    check_speed(omega)?;
    if !head.is_finite() {
        return Err(PumpError::NonFinite("head"));
    }
    let a = curve.k_c;
    let b = curve.k_b * omega;
    let c = curve.k_a * omega * omega - head;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(PumpError::NoRealRoot { omega, head });
    }
    let sign = if b < 0.0 { -1.0 } else { 1.0 };
    let q = -0.5 * (b + sign * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    Ok(if r1 >= r2 { (r1, r2) } else { (r2, r1) })
}

/// Flow rate delivering `head` at speed `omega`, range-checked against the
/// curve's admissible window.
pub fn flow_from_speed_head(curve: &PumpCurve, omega: f64, head: f64) -> Result<f64, PumpError> {
    let (hi, lo) = flow_roots(curve, omega, head)?;
    let flow = if lo >= 0.0 {
        if hi != lo {
            return Err(PumpError::AmbiguousRoot(lo, hi));
        }
        hi
    } else {
        // exactly one nonnegative root, or none: report the larger one
        hi
    };
    curve.check_range(flow)
}

/// `n` equispaced `(PF, dP)` samples over `[pf_min, pf_max]`.
pub fn curve_samples(curve: &PumpCurve, omega: f64, n: usize) -> Result<Vec<(f64, f64)>, PumpError> {
    check_speed(omega)?;
    if n < 2 {
        return Err(PumpError::TooFewSamples(n));
    }
    let span = curve.pf_max - curve.pf_min;
    (0..n)
        .map(|i| {
            let pf = if i == n - 1 {
                curve.pf_max
            } else {
                curve.pf_min + span * i as f64 / (n - 1) as f64
            };
            head_from_speed_flow(curve, omega, pf).map(|h| (pf, h))
        })
        .collect()
}

/// Designer panel: head and speed in, operating point out.
pub fn panel1(curve: &PumpCurve, head: f64, omega: f64) -> Result<PumpOperatingPoint, PumpError> {
    let flow = flow_from_speed_head(curve, omega, head)?;
    Ok(PumpOperatingPoint {
        speed: omega,
        flow,
        head,
    })
}

/// Ramp-test calibration: head at a measured speed and flow. The measured
/// flow is not range-checked.
pub fn panel2_calibrate(curve: &PumpCurve, omega_measured: f64, pf_measured: f64) -> Result<f64, PumpError> {
    head_from_speed_flow(curve, omega_measured, pf_measured)
}

/// Flow at a new speed, holding the calibrated head fixed.
pub fn panel2_predict(curve: &PumpCurve, head_fixed: f64, omega_new: f64) -> Result<PumpOperatingPoint, PumpError> {
    panel1(curve, head_fixed, omega_new)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HM3: PumpCurve = PumpCurve::HEARTMATE3;

    #[test]
    fn forward_examples() {
        // 3.45e-6 * 2.5e7 - 5.9e-5 * 2e4 - 1.45 * 16 = 86.25 - 1.18 - 23.2
        let h = head_from_speed_flow(&HM3, 5000.0, 4.0).unwrap();
        assert!((h - 61.87).abs() < 1e-9, "{h}");
        assert!((head_from_speed_flow(&HM3, 5000.0, 0.0).unwrap() - 86.25).abs() < 1e-12);
        assert_eq!(
            head_from_speed_flow(&HM3, 0.0, 4.0).unwrap_err(),
            PumpError::InvalidSpeed(0.0)
        );
    }

    #[test]
    fn inverse_examples() {
        let pf = flow_from_speed_head(&HM3, 5000.0, 61.87).unwrap();
        assert!((pf - 4.0).abs() < 1e-6);
        let shutoff = HM3.k_a * 5000.0 * 5000.0;
        match flow_from_speed_head(&HM3, 5000.0, shutoff).unwrap_err() {
            PumpError::FlowOutOfRange { flow, min, max } => {
                assert!(flow.abs() < 1e-12);
                assert_eq!((min, max), (3.0, 5.0));
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(
            flow_from_speed_head(&HM3, 5000.0, 500.0),
            Err(PumpError::NoRealRoot { .. })
        ));
    }

    #[test]
    fn both_negative_roots_report_out_of_range() {
        // dP slightly above shutoff: both roots negative but real
        let shutoff = HM3.k_a * 5000.0 * 5000.0;
        assert!(matches!(
            flow_from_speed_head(&HM3, 5000.0, shutoff + 0.01),
            Err(PumpError::FlowOutOfRange { flow, .. }) if flow < 0.0
        ));
    }

    #[test]
    fn ambiguous_roots_detected_for_upward_curve() {
        // K_C > 0 with negative linear term gives two positive roots.
        let curve = PumpCurve::new(1e-6, -1e-3, 1.0, 0.0, 10.0).unwrap();
        assert!(matches!(
            flow_from_speed_head(&curve, 1000.0, 0.9),
            Err(PumpError::AmbiguousRoot(_, _))
        ));
    }

    #[test]
    fn curve_samples_endpoints_and_monotone() {
        let two = curve_samples(&HM3, 5000.0, 2).unwrap();
        assert_eq!(two.iter().map(|p| p.0).collect::<Vec<_>>(), vec![3.0, 5.0]);
        let five = curve_samples(&HM3, 5000.0, 5).unwrap();
        assert!(five.windows(2).all(|w| w[1].1 < w[0].1));
        for (pf, head) in five {
            assert!((head_from_speed_flow(&HM3, 5000.0, pf).unwrap() - head).abs() < 1e-9);
        }
        assert_eq!(curve_samples(&HM3, 5000.0, 1).unwrap_err(), PumpError::TooFewSamples(1));
    }

    #[test]
    fn panels() {
        let op = panel1(&HM3, 61.87, 5000.0).unwrap();
        assert!((op.flow - 4.0).abs() < 1e-6);
        let head = panel2_calibrate(&HM3, 5000.0, 4.0).unwrap();
        assert!((head - 61.87).abs() < 1e-9);
        // calibration outside the admissible window is allowed
        assert!(panel2_calibrate(&HM3, 5000.0, 5.5).is_ok());
        assert!(panel2_calibrate(&HM3, -1.0, 4.0).is_err());
        let same = panel2_predict(&HM3, head, 5000.0).unwrap();
        assert!((same.flow - 4.0).abs() < 1e-9);
        let faster = panel2_predict(&HM3, head, 5200.0).unwrap();
        assert!(faster.flow > same.flow);
        assert!(matches!(
            panel2_predict(&HM3, head, 6000.0),
            Err(PumpError::FlowOutOfRange { flow, .. }) if flow > 5.0
        ));
        assert!(matches!(
            panel2_predict(&HM3, head, 2000.0),
            Err(PumpError::NoRealRoot { .. })
        ));
    }

    #[test]
    fn invalid_curve() {
        assert!(PumpCurve::new(1.0, 1.0, 0.0, 3.0, 5.0).is_err());
        assert!(PumpCurve::new(1.0, 1.0, -1.0, 5.0, 3.0).is_err());
    }
}
