//! Fixed-coefficient estimators for plastic rotations `a` and `b` and the
//! fixed one-vs-all failure-mode classifier.
//!
//! All coefficients are embedded verbatim. Inputs are fractions (not
//! percentages) for the reinforcement ratios.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnFeatures, FailureMode, Feature, ModelingParams, SectionShape};
use crate::error::{Error, Result};

use Feature::{AxialRatio as P, RhoL, RhoT, ShearRatio as V, SpacingDepth as SD, SpanDepth as AD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorFamily {
    /// Linear equations adopted by ASCE 41-17 for column rotations.
    Gm,
    /// Three-feature multiple linear regression.
    Mlr,
    /// Three-feature polynomial (square-term) regression.
    Prm,
    /// Six-feature regularized linear regression.
    Rlr,
}

impl EstimatorFamily {
    pub const ALL: [EstimatorFamily; 4] =
        [EstimatorFamily::Gm, EstimatorFamily::Mlr, EstimatorFamily::Prm, EstimatorFamily::Rlr];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorFamily::Gm => "gm",
            EstimatorFamily::Mlr => "mlr",
            EstimatorFamily::Prm => "prm",
            EstimatorFamily::Rlr => "rlr",
        }
    }

    pub fn estimate(self, f: &ColumnFeatures, shape: SectionShape) -> Result<Estimate> {
        match self {
            EstimatorFamily::Gm => estimate_gm(f, shape),
            EstimatorFamily::Mlr => estimate_mlr_fixed(f, shape),
            EstimatorFamily::Prm => estimate_prm_fixed(f, shape),
            EstimatorFamily::Rlr => estimate_rlr_fixed(f, shape),
        }
    }
}

impl fmt::Display for EstimatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorFamily::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Clamped rotations together with the raw equation values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub a: f64,
    pub b: f64,
    pub raw_a: f64,
    pub raw_b: f64,
}

impl Estimate {
    pub fn from_raw(raw_a: f64, raw_b: f64) -> Self {
        let ModelingParams { a, b } = ModelingParams::clamp(raw_a, raw_b);
        Estimate { a, b, raw_a, raw_b }
    }

    pub fn params(&self) -> ModelingParams {
        ModelingParams { a: self.a, b: self.b }
    }
}

/// `intercept + Σ coefficient · feature`, summed in the listed order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearForm {
    pub intercept: f64,
    pub terms: &'static [(Feature, f64)],
}

impl LinearForm {
    pub fn eval(&self, f: &ColumnFeatures) -> f64 {
        self.terms.iter().fold(self.intercept, |acc, (feat, c)| acc + c * f.get(*feat))
    }
}

/// Square-term polynomial over three features:
/// `β0 + β1·x1 + β2·x2 + β3·x3 + β4·x1² + β5·x2² + β6·x3²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrmCoefficients {
    pub features: [Feature; 3],
    pub beta: [f64; 7],
}

impl PrmCoefficients {
    pub fn eval(&self, f: &ColumnFeatures) -> f64 {
        let x = self.features.map(|feat| f.get(feat));
        let b = &self.beta;
        b[0] + b[1] * x[0] + b[2] * x[1] + b[3] * x[2] + b[4] * x[0] * x[0] + b[5] * x[1] * x[1] + b[6] * x[2] * x[2]
    }
}

pub const GM_A_RECT: LinearForm = LinearForm { intercept: 0.042, terms: &[(P, -0.043), (RhoT, 0.063), (V, -0.023)] };
pub const GM_B_RECT: LinearForm = LinearForm { intercept: 0.051, terms: &[(P, -0.051), (RhoT, 1.3), (V, -0.023)] };
pub const GM_A_CIRC: LinearForm = LinearForm { intercept: 0.06, terms: &[(P, -0.058), (RhoT, 1.3), (V, -0.037)] };
pub const GM_B_CIRC: LinearForm = LinearForm { intercept: 0.064, terms: &[(P, -0.07), (RhoT, 2.85), (V, -0.03)] };

pub const MLR_A_RECT: LinearForm = LinearForm { intercept: 0.046, terms: &[(P, -0.043), (RhoT, 0.363), (V, -0.031)] };
pub const MLR_B_RECT: LinearForm = LinearForm { intercept: 0.054, terms: &[(P, -0.047), (RhoT, 0.565), (V, -0.03)] };
pub const MLR_A_CIRC: LinearForm = LinearForm { intercept: -0.002, terms: &[(P, -0.059), (RhoT, 3.282), (AD, 0.007)] };
pub const MLR_B_CIRC: LinearForm = LinearForm { intercept: 0.069, terms: &[(P, -0.072), (RhoT, 0.742), (V, -0.044)] };

pub const PRM_A_RECT: PrmCoefficients =
    PrmCoefficients { features: [P, RhoT, V], beta: [0.030, -0.039, 1.488, -0.031, -0.009, -16.166, -0.001] };
pub const PRM_B_RECT: PrmCoefficients =
    PrmCoefficients { features: [P, RhoT, V], beta: [0.033, -0.012, 2.150, -0.044, -0.056, -23.141, 0.007] };
pub const PRM_A_CIRC: PrmCoefficients =
    PrmCoefficients { features: [P, RhoT, AD], beta: [-0.018, -0.027, 6.933, 0.010, -0.057, -280.136, 0.000] };
pub const PRM_B_CIRC: PrmCoefficients =
    PrmCoefficients { features: [P, RhoT, V], beta: [0.079, 0.008, 0.935, -0.088, -0.141, -8.469, 0.024] };

pub const RLR_A_RECT: LinearForm = LinearForm {
    intercept: 0.052,
    terms: &[(AD, -0.0012), (P, -0.046), (RhoL, 0.36), (RhoT, 0.21), (SD, 0.0074), (V, -0.030)],
};
pub const RLR_B_RECT: LinearForm = LinearForm {
    intercept: 0.055,
    terms: &[(AD, 0.0019), (P, -0.031), (RhoL, 0.01), (RhoT, 0.0034), (SD, -0.027), (V, -0.012)],
};
pub const RLR_A_CIRC: LinearForm = LinearForm {
    intercept: 0.047,
    terms: &[(AD, 0.003), (P, -0.062), (RhoL, 0.440), (RhoT, 0.622), (SD, -0.031), (V, -0.030)],
};
pub const RLR_B_CIRC: LinearForm = LinearForm {
    intercept: 0.043,
    terms: &[(AD, 0.004), (P, -0.022), (RhoL, 0.003), (RhoT, 0.001), (SD, -0.024), (V, -0.014)],
};

/// Class score forms for the fixed classifier, in `FailureMode::ALL` order.
pub const CLASSIFIER_RECT: [LinearForm; 3] = [
    LinearForm { intercept: 6.94, terms: &[(P, -3.99), (RhoT, 0.44), (V, -9.21)] },
    LinearForm { intercept: -2.19, terms: &[(P, 0.35), (RhoT, -1.04), (V, 1.63)] },
    LinearForm { intercept: -7.7, terms: &[(P, 4.07), (RhoT, -0.05), (V, 5.86)] },
];
pub const CLASSIFIER_CIRC: [LinearForm; 3] = [
    LinearForm { intercept: 5.02, terms: &[(P, 2.15), (RhoT, -0.2), (V, -6.35)] },
    LinearForm { intercept: -1.52, terms: &[(P, -3.42), (RhoT, 0.02), (V, 0.8)] },
    LinearForm { intercept: -9.72, terms: &[(P, 3.68), (RhoT, -0.19), (V, 7.27)] },
];

fn pair<T>(shape: SectionShape, rect: (T, T), circ: (T, T)) -> (T, T) {
    match shape {
        SectionShape::Rectangular => rect,
        SectionShape::Circular => circ,
    }
}

pub fn estimate_gm(f: &ColumnFeatures, shape: SectionShape) -> Result<Estimate> {
    f.validate()?;
    let (a, b) = pair(shape, (GM_A_RECT, GM_B_RECT), (GM_A_CIRC, GM_B_CIRC));
    Ok(Estimate::from_raw(a.eval(f), b.eval(f)))
}

pub fn estimate_mlr_fixed(f: &ColumnFeatures, shape: SectionShape) -> Result<Estimate> {
    f.validate()?;
    let (a, b) = pair(shape, (MLR_A_RECT, MLR_B_RECT), (MLR_A_CIRC, MLR_B_CIRC));
    Ok(Estimate::from_raw(a.eval(f), b.eval(f)))
}

pub fn estimate_prm_fixed(f: &ColumnFeatures, shape: SectionShape) -> Result<Estimate> {
    f.validate()?;
    let (a, b) = pair(shape, (PRM_A_RECT, PRM_B_RECT), (PRM_A_CIRC, PRM_B_CIRC));
    Ok(Estimate::from_raw(a.eval(f), b.eval(f)))
}

pub fn estimate_rlr_fixed(f: &ColumnFeatures, shape: SectionShape) -> Result<Estimate> {
    f.validate()?;
    let (a, b) = pair(shape, (RLR_A_RECT, RLR_B_RECT), (RLR_A_CIRC, RLR_B_CIRC));
    Ok(Estimate::from_raw(a.eval(f), b.eval(f)))
}

/// Linear class scores, their per-class sigmoid probabilities, and the
/// argmax prediction. Arrays are indexed by `FailureMode::index()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub scores: [f64; 3],
    pub probabilities: [f64; 3],
    pub predicted: FailureMode,
}

impl ClassScores {
    pub fn from_scores(scores: [f64; 3]) -> Self {
        ClassScores { scores, probabilities: scores.map(sigmoid), predicted: argmax_brittle(&scores) }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Argmax over class scores; ties resolve toward the more brittle mode.
pub fn argmax_brittle(scores: &[f64; 3]) -> FailureMode {
    let mut best = FailureMode::SC;
    for mode in [FailureMode::FSC, FailureMode::FC] {
        if scores[mode.index()] > scores[best.index()] {
            best = mode;
        }
    }
    best
}

pub fn classify_fixed(f: &ColumnFeatures, shape: SectionShape) -> Result<ClassScores> {
    f.validate()?;
    let forms = match shape {
        SectionShape::Rectangular => &CLASSIFIER_RECT,
        SectionShape::Circular => &CLASSIFIER_CIRC,
    };
    Ok(ClassScores::from_scores([forms[0].eval(f), forms[1].eval(f), forms[2].eval(f)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use SectionShape::{Circular as C, Rectangular as R};

    fn feat(ad: f64, p: f64, rl: f64, rt: f64, sd: f64, v: f64) -> ColumnFeatures {
        ColumnFeatures::new(ad, p, rl, rt, sd, v).unwrap()
    }

    fn close(x: f64, y: f64) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }

    #[test]
    fn gm_intercepts_and_clamp() {
        let e = estimate_gm(&feat(3.0, 0.0, 0.0, 0.0, 0.5, 0.0), R).unwrap();
        close(e.a, 0.042);
        close(e.b, 0.051);

        let e = estimate_gm(&feat(3.0, 1.0, 0.0, 0.0, 0.5, 1.0), R).unwrap();
        close(e.raw_a, -0.024);
        assert_eq!(e.a, 0.0);
        assert!(e.b >= e.a);
    }

    #[test]
    fn gm_worked_example() {
        let f = feat(3.0, 0.2, 0.02, 0.01, 0.5, 0.8);
        let e = estimate_gm(&f, R).unwrap();
        close(e.a, 0.01563);
        close(e.b, 0.0354);
        close(estimate_gm(&f, C).unwrap().b, 0.0545);
    }

    #[test]
    fn mlr_examples() {
        let zero = feat(1.0, 0.0, 0.0, 0.0, 0.5, 0.0);
        let e = estimate_mlr_fixed(&zero, R).unwrap();
        close(e.a, 0.046);
        close(e.b, 0.054);
        close(estimate_mlr_fixed(&zero, C).unwrap().raw_b, 0.069);
        let e = estimate_mlr_fixed(&feat(3.0, 0.0, 0.0, 0.0, 0.5, 0.0), C).unwrap();
        close(e.a, 0.019);
    }

    #[test]
    fn prm_examples() {
        let f = feat(3.0, 0.2, 0.02, 0.01, 0.5, 0.8);
        close(PRM_A_RECT.eval(&f), 0.0096634);
        let zero = feat(1.0, 0.0, 0.0, 0.0, 0.5, 0.0);
        close(PRM_A_RECT.eval(&zero), 0.030);
        close(estimate_prm_fixed(&zero, C).unwrap().raw_b, 0.079);
    }

    #[test]
    fn rlr_examples() {
        let zero = feat(1e-300, 0.0, 0.0, 0.0, 1e-300, 0.0);
        let e = estimate_rlr_fixed(&zero, R).unwrap();
        close(e.raw_a, 0.052);
        close(e.raw_b, 0.055);
        let e = estimate_rlr_fixed(&zero, C).unwrap();
        close(e.raw_a, 0.047);
        close(e.raw_b, 0.043);
        let e = estimate_rlr_fixed(&feat(3.0, 0.2, 0.02, 0.01, 0.5, 0.8), R).unwrap();
        close(e.raw_a, 0.0282);
    }

    #[test]
    fn classifier_examples() {
        let s = classify_fixed(&feat(1.0, 0.0, 0.0, 0.0, 0.5, 0.0), R).unwrap();
        assert_eq!(s.scores, [6.94, -2.19, -7.7]);
        assert_eq!(s.predicted, FailureMode::FC);

        let s = classify_fixed(&feat(3.0, 0.2, 0.02, 0.005, 0.5, 0.6), R).unwrap();
        close(s.scores[0], 0.6182);
        close(s.scores[1], -1.1472);
        close(s.scores[2], -3.37025);
        assert_eq!(s.predicted, FailureMode::FC);

        let s = classify_fixed(&feat(3.0, 0.3, 0.02, 0.01, 0.5, 1.2), C).unwrap();
        close(s.scores[0], -1.957);
        close(s.scores[1], -1.5858);
        close(s.scores[2], 0.1061);
        assert_eq!(s.predicted, FailureMode::SC);
    }

    #[test]
    fn ties_go_to_brittle_mode() {
        assert_eq!(argmax_brittle(&[0.0, 0.0, 0.0]), FailureMode::SC);
        assert_eq!(argmax_brittle(&[1.0, 1.0, 0.0]), FailureMode::FSC);
        assert_eq!(argmax_brittle(&[2.0, 1.0, 1.0]), FailureMode::FC);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut f = feat(3.0, 0.2, 0.02, 0.01, 0.5, 0.8);
        f.rho_t = f64::INFINITY;
        for fam in EstimatorFamily::ALL {
            assert!(matches!(fam.estimate(&f, R), Err(Error::NonFiniteInput(_))));
        }
        assert!(matches!(classify_fixed(&f, C), Err(Error::NonFiniteInput(_))));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        close(sigmoid(2.0) + sigmoid(-2.0), 1.0);
    }

    #[test]
    fn family_names_round_trip() {
        for fam in EstimatorFamily::ALL {
            assert_eq!(fam.name().parse::<EstimatorFamily>().unwrap(), fam);
        }
        assert!(matches!("xyz".parse::<EstimatorFamily>(), Err(Error::UnknownModel(_))));
    }
}
