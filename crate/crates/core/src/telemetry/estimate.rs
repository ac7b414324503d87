//! Demand-flexibility estimators.

use serde::{Deserialize, Serialize};

use super::{TelemetryError, TelemetrySample};

pub trait Estimator {
    /// Estimated demand flexibility (kW) for one sample.
    fn estimate(&self, sample: &TelemetrySample) -> f64;
}

/// `DF_t = max(0, a·net + b·hvac − c·(tamb − t_ref))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimator {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub t_ref: f64,
}

impl Default for LinearEstimator {
    fn default() -> Self {
        LinearEstimator {
            a: 0.05,
            b: 0.5,
            c: 1.0,
            t_ref: 22.0,
        }
    }
}

impl LinearEstimator {
    pub fn new(a: f64, b: f64, c: f64, t_ref: f64) -> Result<Self, TelemetryError> {
        let e = LinearEstimator { a, b, c, t_ref };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), TelemetryError> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TelemetryError::Config(format!("coefficient {name} must be positive, got {v}")));
            }
        }
        if !self.t_ref.is_finite() {
            return Err(TelemetryError::Config("t_ref must be finite".into()));
        }
        Ok(())
    }
}

impl Estimator for LinearEstimator {
    fn estimate(&self, s: &TelemetrySample) -> f64 {
        (self.a * s.net_kw + self.b * s.hvac_kw - self.c * (s.tamb_c - self.t_ref)).max(0.0)
    }
}

pub fn estimate_flexibility(series: &[TelemetrySample], estimator: &dyn Estimator) -> Vec<f64> {
    series.iter().map(|s| estimator.estimate(s)).collect()
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDateTime;
    use proptest::prelude::*;

    use super::*;

    fn sample(net: f64, tamb: f64, hvac: f64) -> TelemetrySample {
        TelemetrySample {
            time: NaiveDateTime::default(),
            net_kw: net,
            tamb_c: tamb,
            hvac_kw: hvac,
            hvac_demand_res_kw: 0.0,
        }
    }

    #[test]
    fn zero_inputs_at_reference() {
        assert_eq!(LinearEstimator::default().estimate(&sample(0.0, 22.0, 0.0)), 0.0);
    }

    #[test]
    fn clamps_at_zero() {
        assert_eq!(LinearEstimator::default().estimate(&sample(0.0, 40.0, 0.0)), 0.0);
        assert!((LinearEstimator::default().estimate(&sample(10.0, 20.0, 2.0)) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn non_positive_coefficients_rejected() {
        assert!(LinearEstimator::new(0.0, 1.0, 1.0, 22.0).is_err());
        assert!(LinearEstimator::new(1.0, -1.0, 1.0, 22.0).is_err());
        assert!(LinearEstimator::new(1.0, 1.0, f64::NAN, 22.0).is_err());
        assert!(LinearEstimator::new(1.0, 1.0, 1.0, 22.0).is_ok());
    }

    proptest! {
        #[test]
        fn monotone_in_each_input(
            net in -50f64..50.0, tamb in -10f64..45.0, hvac in 0f64..10.0, bump in 0f64..5.0,
        ) {
            let e = LinearEstimator::default();
            let base = e.estimate(&sample(net, tamb, hvac));
            prop_assert!(e.estimate(&sample(net + bump, tamb, hvac)) >= base);
            prop_assert!(e.estimate(&sample(net, tamb, hvac + bump)) >= base);
            prop_assert!(e.estimate(&sample(net, tamb + bump, hvac)) <= base);
        }
    }
}
