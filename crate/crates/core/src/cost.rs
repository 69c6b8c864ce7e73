//! Analytic multiplication counts for the three strategies.
//!
//! With all leading constants set to 1:
//!
//! ```text
//! T_W      = p·n·t·r
//! T_M      = p²·n·r + p·r
//! T_ridge  = T_M + T_W
//! T_MOR    = (T_W + t·T_M) / c
//! T_B-MOR  = T_W / c + T_M
//! ```
//!
//! Counts are exact rationals so identities such as
//! `T_MOR − T_B-MOR = (t/c − 1)·T_M` hold without rounding.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedulers::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemShape {
    pub n: u64,
    pub p: u64,
    pub t: u64,
    pub r: u64,
    pub c: u64,
}

impl ProblemShape {
    pub fn new(n: u64, p: u64, t: u64, r: u64, c: u64) -> Result<Self> {
        let shape = Self { n, p, t, r, c };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.n, self.p, self.t, self.r, self.c].contains(&0) {
            return Err(Error::Config(format!("all shape counts must be >= 1: {self:?}")));
        }
        if self.n < self.p {
            return Err(Error::Config(format!("shape needs n >= p, got n = {} and p = {}", self.n, self.p)));
        }
        Ok(())
    }

    pub fn with_c(self, c: u64) -> Self {
        Self { c, ..self }
    }
}

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    pub shape: ProblemShape,
    pub t_m: BigRational,
    pub t_w: BigRational,
    pub t_ridge: BigRational,
    pub t_mor: BigRational,
    pub t_bmor: BigRational,
}

impl CostEstimate {
    pub fn for_strategy(&self, s: Strategy) -> &BigRational {
        match s {
            Strategy::Ridgecv => &self.t_ridge,
            Strategy::Mor => &self.t_mor,
            Strategy::Bmor => &self.t_bmor,
        }
    }

    pub fn count_f64(&self, s: Strategy) -> f64 {
        to_f64(self.for_strategy(s))
    }
}

pub(crate) fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::INFINITY)
}

pub fn estimate_costs(shape: &ProblemShape) -> Result<CostEstimate> {
    shape.validate()?;
    let (n, p, t, r, c) = (int(shape.n), int(shape.p), int(shape.t), int(shape.r), int(shape.c));
    let t_w = &p * &n * &t * &r;
    let t_m = &p * &p * &n * &r + &p * &r;
    let t_ridge = &t_m + &t_w;
    let t_mor = (&t_w + &t * &t_m) / &c;
    let t_bmor = &t_w / &c + &t_m;
    Ok(CostEstimate { shape: *shape, t_m, t_w, t_ridge, t_mor, t_bmor })
}

/// Strategies grouped by estimated cost, cheapest group first; strategies in
/// one group tie exactly.
pub fn predict_ranking(shape: &ProblemShape) -> Result<Vec<Vec<Strategy>>> {
    let est = estimate_costs(shape)?;
    let mut order = Strategy::ALL.to_vec();
    order.sort_by(|a, b| est.for_strategy(*a).cmp(est.for_strategy(*b)).then(a.cmp(b)));
    let mut groups: Vec<Vec<Strategy>> = Vec::new();
    for s in order {
        match groups.last_mut() {
            Some(g) if est.for_strategy(g[0]) == est.for_strategy(s) => g.push(s),
            _ => groups.push(vec![s]),
        }
    }
    Ok(groups)
}

/// One timed run used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub shape: ProblemShape,
    pub strategy: Strategy,
    pub seconds: f64,
}

/// Seconds per counted multiplication, fitted by least squares through the
/// origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub seconds_per_op: f64,
    /// `measured − predicted` seconds, in input order.
    pub residuals: Vec<f64>,
}

impl Calibration {
    pub fn predict_seconds(&self, est: &CostEstimate, s: Strategy) -> f64 {
        self.seconds_per_op * est.count_f64(s)
    }
}

pub fn calibrate(measured: &[Measurement]) -> Result<Calibration> {
    if measured.len() < 2 {
        return Err(Error::Config(format!("calibration needs at least 2 measurements, got {}", measured.len())));
    }
    if let Some(m) = measured.iter().find(|m| !(m.seconds > 0.0 && m.seconds.is_finite())) {
        return Err(Error::Config(format!("measured time {} is not positive", m.seconds)));
    }
    let counts = measured
        .iter()
        .map(|m| estimate_costs(&m.shape).map(|e| e.for_strategy(m.strategy).clone()))
        .collect::<Result<Vec<_>>>()?;
    let all_equal = counts.windows(2).all(|w| w[0] == w[1])
        && measured.windows(2).all(|w| w[0].seconds == w[1].seconds);
    if all_equal {
        return Err(Error::Config("calibration measurements are all identical".into()));
    }
    // Work in units of the largest count to keep the normal equation well scaled.
    let xs: Vec<f64> = counts.iter().map(to_f64).collect();
    let scale = xs.iter().copied().fold(0.0f64, f64::max);
    if scale.is_zero() || !scale.is_finite() {
        return Err(Error::Config("predicted counts are degenerate".into()));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, m) in xs.iter().zip(measured) {
        let xn = x / scale;
        sxy += xn * m.seconds;
        sxx += xn * xn;
    }
    let seconds_per_op = sxy / sxx / scale;
    let residuals = xs.iter().zip(measured).map(|(x, m)| m.seconds - seconds_per_op * x).collect();
    Ok(Calibration { seconds_per_op, residuals })
}

/// JSON document printed by the `cost` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub shape: ProblemShape,
    pub t_m: f64,
    pub t_w: f64,
    pub t_ridge: f64,
    pub t_mor: f64,
    pub t_bmor: f64,
    /// The same counts as exact `numerator/denominator` strings.
    pub exact: std::collections::BTreeMap<String, String>,
    pub ranking: Vec<Vec<Strategy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<std::collections::BTreeMap<String, f64>>,
}

pub fn cost_report(shape: &ProblemShape, seconds_per_op: Option<f64>) -> Result<CostReport> {
    let est = estimate_costs(shape)?;
    let named = [
        ("t_m", &est.t_m),
        ("t_w", &est.t_w),
        ("t_ridge", &est.t_ridge),
        ("t_mor", &est.t_mor),
        ("t_bmor", &est.t_bmor),
    ];
    let exact = named.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let seconds = seconds_per_op.map(|k| named.iter().map(|(name, v)| (name.to_string(), k * to_f64(v))).collect());
    Ok(CostReport {
        shape: *shape,
        t_m: to_f64(&est.t_m),
        t_w: to_f64(&est.t_w),
        t_ridge: to_f64(&est.t_ridge),
        t_mor: to_f64(&est.t_mor),
        t_bmor: to_f64(&est.t_bmor),
        exact,
        ranking: predict_ranking(shape)?,
        seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: u64, p: u64, t: u64, r: u64, c: u64) -> ProblemShape {
        ProblemShape::new(n, p, t, r, c).unwrap()
    }

    #[test]
    fn single_worker_single_target_coincide() {
        let e = estimate_costs(&shape(100, 10, 1, 11, 1)).unwrap();
        assert_eq!(e.t_mor, e.t_ridge);
        assert_eq!(e.t_bmor, e.t_ridge);
        assert_eq!(predict_ranking(&shape(100, 10, 1, 11, 1)).unwrap(), vec![Strategy::ALL.to_vec()]);
    }

    #[test]
    fn closed_forms_by_hand() {
        // n=4, p=2, t=3, r=1, c=2: T_W = 24, T_M = 16 + 2 = 18
        let e = estimate_costs(&shape(4, 2, 3, 1, 2)).unwrap();
        assert_eq!(e.t_w, int(24));
        assert_eq!(e.t_m, int(18));
        assert_eq!(e.t_ridge, int(42));
        assert_eq!(e.t_mor, int(39)); // (24 + 54) / 2
        assert_eq!(e.t_bmor, int(30)); // 12 + 18
    }

    #[test]
    fn gap_for_thousand_targets_on_eight_workers() {
        let e = estimate_costs(&shape(2000, 512, 1000, 11, 8)).unwrap();
        assert_eq!(&e.t_mor - &e.t_bmor, &e.t_m * int(124));
    }

    #[test]
    fn desk_preset_ranking() {
        let s = shape(2000, 512, 4096, 11, 8);
        let e = estimate_costs(&s).unwrap();
        assert!(e.t_mor > e.t_bmor);
        assert_eq!(
            predict_ranking(&s).unwrap(),
            vec![vec![Strategy::Bmor], vec![Strategy::Ridgecv], vec![Strategy::Mor]]
        );
        // c = 1: bmor and ridge tie, mor is worst
        assert_eq!(
            predict_ranking(&s.with_c(1)).unwrap(),
            vec![vec![Strategy::Ridgecv, Strategy::Bmor], vec![Strategy::Mor]]
        );
    }

    #[test]
    fn bmor_plateaus_at_matrix_cost() {
        let s = shape(2000, 512, 4096, 11, 1 << 40);
        let e = estimate_costs(&s).unwrap();
        let ratio = to_f64(&e.t_bmor) / to_f64(&e.t_m);
        assert!(ratio > 1.0 && ratio < 1.0 + 1e-6);
    }

    #[test]
    fn invalid_shapes() {
        assert!(ProblemShape::new(1, 2, 1, 1, 1).is_err());
        assert!(ProblemShape::new(5, 2, 0, 1, 1).is_err());
    }

    #[test]
    fn calibration_scales_and_fits_exactly() {
        let shapes = [shape(100, 10, 5, 11, 1), shape(200, 20, 5, 11, 2), shape(400, 20, 50, 11, 4)];
        let truth = 3e-9;
        let ms: Vec<Measurement> = shapes
            .iter()
            .zip([Strategy::Ridgecv, Strategy::Bmor, Strategy::Mor])
            .map(|(s, st)| Measurement {
                shape: *s,
                strategy: st,
                seconds: truth * estimate_costs(s).unwrap().count_f64(st),
            })
            .collect();
        let cal = calibrate(&ms).unwrap();
        assert!((cal.seconds_per_op / truth - 1.0).abs() < 1e-12);
        assert!(cal.residuals.iter().all(|r| r.abs() < 1e-12));
        let doubled: Vec<Measurement> = ms.iter().map(|m| Measurement { seconds: 2.0 * m.seconds, ..*m }).collect();
        let cal2 = calibrate(&doubled).unwrap();
        assert!((cal2.seconds_per_op / cal.seconds_per_op - 2.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_rejects_degenerate_input() {
        let m = Measurement { shape: shape(100, 10, 5, 11, 1), strategy: Strategy::Ridgecv, seconds: 1.0 };
        assert!(calibrate(&[m]).is_err());
        assert!(calibrate(&[m, m, m]).is_err());
        assert!(calibrate(&[m, Measurement { seconds: 0.0, ..m }]).is_err());
    }
}
