//! One-vs-all logistic regression over failure modes and confusion matrices.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnFeatures, FailureMode, SectionShape};
use crate::error::{Error, Result};
use crate::estimators::{ClassScores, LinearForm, CLASSIFIER_CIRC, CLASSIFIER_RECT};
use crate::linear::{DesignMatrix, FeatureTerm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvaMeta {
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Three binary logistic models (FC, FSC, SC) over shared features; each
/// member holds the intercept followed by one coefficient per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvaModel {
    pub feature_names: Vec<String>,
    pub members: [Vec<f64>; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<OvaMeta>,
}

/// Per-class cost before training and after every iteration.
pub type CostHistories = [Vec<f64>; 3];

impl OvaModel {
    /// The fixed three-variable classifier for `shape`.
    pub fn from_fixed(shape: SectionShape) -> Self {
        let forms = match shape {
            SectionShape::Rectangular => &CLASSIFIER_RECT,
            SectionShape::Circular => &CLASSIFIER_CIRC,
        };
        let feature_names = forms[0].terms.iter().map(|(f, _)| f.name().to_string()).collect();
        let member = |form: &LinearForm| {
            let mut c = vec![form.intercept];
            c.extend(form.terms.iter().map(|(_, v)| *v));
            c
        };
        OvaModel { feature_names, members: [member(&forms[0]), member(&forms[1]), member(&forms[2])], meta: None }
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.members.iter().enumerate() {
            if m.len() != self.dim() + 1 {
                return Err(Error::ArityMismatch(format!(
                    "member {} has {} coefficients, expected {}",
                    FailureMode::ALL[i].code(),
                    m.len(),
                    self.dim() + 1
                )));
            }
            if m.iter().any(|c| !c.is_finite()) {
                return Err(Error::CorruptPayload("non-finite classifier coefficient".into()));
            }
        }
        for n in &self.feature_names {
            FeatureTerm::parse(n)?;
        }
        Ok(())
    }

    /// Feature values in model order.
    pub fn row(&self, f: &ColumnFeatures) -> Result<Vec<f64>> {
        self.feature_names.iter().map(|n| FeatureTerm::parse(n).map(|t| t.value(f))).collect()
    }

    pub fn predict_features(&self, f: &ColumnFeatures) -> Result<ClassScores> {
        f.validate()?;
        ova_predict(self, &self.row(f)?)
    }
}

fn linear_score(coef: &[f64], x: &[f64]) -> f64 {
    coef[1..].iter().zip(x).fold(coef[0], |acc, (c, v)| acc + c * v)
}

/// Linear scores, per-class sigmoids and the brittle-biased argmax.
pub fn ova_predict(model: &OvaModel, x: &[f64]) -> Result<ClassScores> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("classifier input".into()));
    }
    let s = |i: usize| linear_score(&model.members[i], x);
    Ok(ClassScores::from_scores([s(0), s(1), s(2)]))
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy in the overflow-free form `softplus(z) - y·z`.
fn cross_entropy(z: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    z.iter().zip(y).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / z.len() as f64
}

/// Full-batch gradient descent on binary cross-entropy for each mode
/// against the rest, from zero coefficients. An intercept is always fitted.
///
/// Training is deterministic; `seed` is recorded for provenance only.
pub fn ova_fit(
    x: &DesignMatrix,
    labels: &[FailureMode],
    learning_rate: f64,
    iterations: usize,
    seed: u64,
) -> Result<(OvaModel, CostHistories)> {
    if labels.len() != x.n_rows() {
        return Err(Error::DimensionMismatch { expected: x.n_rows(), got: labels.len() });
    }
    if !learning_rate.is_finite() || learning_rate <= 0.0 {
        return Err(Error::InvalidParameter(format!("learning rate {learning_rate} must be > 0")));
    }
    let first = labels[0];
    if labels.iter().all(|l| *l == first) {
        return Err(Error::SingleClassData);
    }
    for n in x.feature_names() {
        FeatureTerm::parse(n)?;
    }
    let xa = DesignMatrix::new(x.values().clone(), x.feature_names().to_vec(), true)?.augmented();
    let m = xa.nrows() as f64;

    let mut members: [Vec<f64>; 3] = Default::default();
    let mut histories: CostHistories = Default::default();
    for mode in FailureMode::ALL {
        let y: Array1<f64> = labels.iter().map(|l| if *l == mode { 1.0 } else { 0.0 }).collect();
        let mut theta = Array1::<f64>::zeros(xa.ncols());
        let mut history = Vec::with_capacity(iterations + 1);
        let mut z = xa.dot(&theta);
        history.push(cross_entropy(z.view(), y.view()));
        for step in 0..iterations {
            let resid = z.mapv(crate::estimators::sigmoid) - &y;
            let grad = xa.t().dot(&resid) / m;
            theta.scaled_add(-learning_rate, &grad);
            z = xa.dot(&theta);
            let cost = cross_entropy(z.view(), y.view());
            if !cost.is_finite() || theta.iter().any(|t| !t.is_finite()) {
                return Err(Error::DivergenceDetected { step });
            }
            history.push(cost);
        }
        members[mode.index()] = theta.to_vec();
        histories[mode.index()] = history;
    }
    let model = OvaModel {
        feature_names: x.feature_names().to_vec(),
        members,
        meta: Some(OvaMeta { learning_rate, iterations, seed }),
    };
    Ok((model, histories))
}

/// Counts indexed `[predicted][true]` in FC, FSC, SC order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[usize; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    fn fraction(&self, n: usize) -> f64 {
        match self.total() {
            0 => 0.0,
            t => n as f64 / t as f64,
        }
    }

    pub fn accuracy(&self) -> f64 {
        self.fraction((0..3).map(|i| self.counts[i][i]).sum())
    }

    /// Share of items predicted more ductile than observed.
    pub fn unconservative_fraction(&self) -> f64 {
        self.fraction(self.off_diagonal(|p, t| p.more_ductile_than(t)))
    }

    /// Share of items predicted more brittle than observed.
    pub fn conservative_fraction(&self) -> f64 {
        self.fraction(self.off_diagonal(|p, t| t.more_ductile_than(p)))
    }

    fn off_diagonal(&self, pick: impl Fn(FailureMode, FailureMode) -> bool) -> usize {
        let mut n = 0;
        for p in FailureMode::ALL {
            for t in FailureMode::ALL {
                if pick(p, t) {
                    n += self.counts[p.index()][t.index()];
                }
            }
        }
        n
    }

    /// Recall per true class; `None` when the class never occurs.
    pub fn recall(&self) -> [Option<f64>; 3] {
        let actual = self.actual_counts();
        std::array::from_fn(|t| (actual[t] > 0).then(|| self.counts[t][t] as f64 / actual[t] as f64))
    }

    pub fn predicted_counts(&self) -> [usize; 3] {
        std::array::from_fn(|p| self.counts[p].iter().sum())
    }

    pub fn actual_counts(&self) -> [usize; 3] {
        std::array::from_fn(|t| (0..3).map(|p| self.counts[p][t]).sum())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("predicted,true_FC,true_FSC,true_SC\n");
        for p in FailureMode::ALL {
            let c = self.counts[p.index()];
            out.push_str(&format!("{},{},{},{}\n", p.code(), c[0], c[1], c[2]));
        }
        out
    }
}

pub fn confusion_matrix(predicted: &[FailureMode], actual: &[FailureMode]) -> Result<ConfusionMatrix> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: actual.len() });
    }
    if predicted.is_empty() {
        return Err(Error::InsufficientRows { needed: 1, got: 0 });
    }
    let mut counts = [[0usize; 3]; 3];
    for (p, t) in predicted.iter().zip(actual) {
        counts[p.index()][t.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::classify_fixed;
    use ndarray::Array2;
    use FailureMode::{FC, FSC, SC};

    fn design(rows: &[[f64; 2]]) -> DesignMatrix {
        let values = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        DesignMatrix::new(values, vec!["axial_ratio".into(), "vy_over_vo".into()], true).unwrap()
    }

    #[test]
    fn fixed_model_matches_closed_form() {
        let f = ColumnFeatures::new(3.0, 0.2, 0.02, 0.005, 0.5, 0.6).unwrap();
        for shape in SectionShape::ALL {
            let m = OvaModel::from_fixed(shape);
            assert_eq!(m.feature_names, vec!["axial_ratio", "rho_t", "vy_over_vo"]);
            assert_eq!(m.predict_features(&f).unwrap(), classify_fixed(&f, shape).unwrap());
        }
        let r = ova_predict(&OvaModel::from_fixed(SectionShape::Rectangular), &[0.2, 0.005, 0.6]).unwrap();
        assert_eq!(r.predicted, FC);
    }

    #[test]
    fn zero_model_ties_to_shear() {
        let m = OvaModel { feature_names: vec!["rho_t".into()], members: [vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]], meta: None };
        let s = ova_predict(&m, &[0.3]).unwrap();
        assert_eq!(s.scores, [0.0; 3]);
        assert_eq!(s.probabilities, [0.5; 3]);
        assert_eq!(s.predicted, SC);
        assert!(matches!(ova_predict(&m, &[0.3, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn mirrored_classes_get_mirrored_coefficients() {
        let rows = [[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0], [-2.0, 0.0]];
        let labels = [FC, FC, SC, SC];
        let (m, _) = ova_fit(&design(&rows), &labels, 0.5, 500, 0).unwrap();
        let (fc, sc) = (&m.members[0], &m.members[2]);
        assert!((fc[0] - sc[0]).abs() < 1e-12);
        assert!((fc[1] + sc[1]).abs() < 1e-12);
        assert!(fc[1] > 0.0);
    }

    #[test]
    fn cost_histories_decrease() {
        let rows = [[0.1, 0.2], [0.2, 0.1], [0.5, 0.9], [0.6, 0.8], [0.9, 0.1], [0.8, 0.2]];
        let labels = [FC, FC, FSC, FSC, SC, SC];
        let (_, h) = ova_fit(&design(&rows), &labels, 0.5, 200, 0).unwrap();
        for hist in &h {
            assert_eq!(hist.len(), 201);
            assert!((hist[0] - std::f64::consts::LN_2).abs() < 1e-15);
            assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn fit_errors() {
        let rows = [[0.1, 0.2], [0.2, 0.1]];
        assert!(matches!(ova_fit(&design(&rows), &[FC, FC], 0.5, 10, 0), Err(Error::SingleClassData)));
        assert!(matches!(ova_fit(&design(&rows), &[FC], 0.5, 10, 0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[FC, FSC, SC], &[FC, FSC, SC]).unwrap();
        assert_eq!(cm.accuracy(), 1.0);
        assert_eq!(cm.unconservative_fraction(), 0.0);
        assert_eq!(cm.conservative_fraction(), 0.0);

        let cm = confusion_matrix(&[FC], &[FSC]).unwrap();
        assert_eq!(cm.unconservative_fraction(), 1.0);
        assert_eq!(cm.recall(), [None, Some(0.0), None]);

        assert!(matches!(confusion_matrix(&[FC], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn reference_rectangular_counts() {
        let cm = ConfusionMatrix::from_counts([[196, 27, 1], [1, 49, 5], [0, 6, 34]]);
        assert_eq!(cm.total(), 319);
        assert!((cm.accuracy() - 279.0 / 319.0).abs() < 1e-15);
        assert_eq!(format!("{:.4}", cm.accuracy()), "0.8746");
        assert_eq!(cm.predicted_counts(), [224, 55, 40]);
        assert_eq!(cm.actual_counts(), [197, 82, 40]);
        assert!(cm.to_csv().starts_with("predicted,true_FC,true_FSC,true_SC\nFC,196,27,1\n"));
    }
}
