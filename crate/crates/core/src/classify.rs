//! Per-attribute probabilistic linear classifiers `p(a_m | x)`.
//!
//! Each attribute gets an L2-regularized logistic regression trained by
//! full-batch gradient descent on standardized features. Training targets
//! are inherited class-wise from the association matrix: an instance of
//! category `y` has target `a^y_m` for attribute `m` (soft associations are
//! used directly as cross-entropy targets).

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    AssociationMatrix, AttributeId, AttributeScoreMatrix, CategoryId, CategoryScoreMatrix,
    FeatureMatrix, InstanceId, Registry, Table,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub l2: f64,
    pub lr: f64,
    pub max_iters: usize,
    /// Stop once the gradient's Euclidean norm drops below this.
    pub tol: f64,
    pub seed: u64,
    /// Standard deviation of the random initial weights; 0 starts from zero.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2: 1e-3,
            lr: 0.1,
            max_iters: 2000,
            tol: 1e-6,
            seed: 0,
            init_scale: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("classifier lr must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("classifier l2 must be non-negative");
        }
        if !(self.tol >= 0.0) {
            return bad("classifier tol must be non-negative");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("classifier init_scale must be non-negative");
        }
        Ok(())
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

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Regularized mean cross-entropy of one logistic model.
///
/// Parameters are laid out as `[w_0, ..., w_{D-1}, b]`; the bias is not
/// regularized:
/// `L = mean_i [softplus(z_i) - t_i z_i] + l2/2 |w|^2`, `z_i = w.x_i + b`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticObjective<'a> {
    x: ArrayView2<'a, f64>,
    targets: ArrayView1<'a, f64>,
    l2: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: ArrayView2<'a, f64>, targets: ArrayView1<'a, f64>, l2: f64) -> Result<Self> {
        if x.nrows() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} targets",
                x.nrows(),
                targets.len()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidValue("no training instances".into()));
        }
        Ok(LogisticObjective { x, targets, l2 })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    fn logits(&self, params: &[f64]) -> Array1<f64> {
        let d = self.x.ncols();
        let w = ArrayView1::from(&params[..d]);
        self.x.dot(&w) + params[d]
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.loss_and_gradient(params).0
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(params.len(), self.dim(), "parameter vector length");
        let d = self.x.ncols();
        let n = self.x.nrows() as f64;
        let z = self.logits(params);
        let mut loss = 0.0;
        let mut residual = Array1::zeros(z.len());
        for (i, (&zi, &ti)) in z.iter().zip(self.targets.iter()).enumerate() {
            loss += softplus(zi) - ti * zi;
            residual[i] = sigmoid(zi) - ti;
        }
        loss /= n;
        let w = &params[..d];
        loss += 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>();

        let gw = self.x.t().dot(&residual) / n;
        let mut grad: Vec<f64> = gw.iter().zip(w).map(|(g, wj)| g + self.l2 * wj).collect();
        grad.push(residual.sum() / n);
        (loss, grad)
    }
}

/// Outcome of [`fit_logistic`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Loss before every update and at the final parameters.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fixed-step full-batch gradient descent.
pub fn fit_logistic(
    objective: &LogisticObjective<'_>,
    init: Vec<f64>,
    lr: f64,
    max_iters: usize,
    tol: f64,
) -> FitResult {
    let mut params = init;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (loss, grad) = objective.loss_and_gradient(&params);
        history.push(loss);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < tol {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        iterations += 1;
    }
    FitResult {
        params,
        loss_history: history,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub config: TrainConfig,
    pub n_train: usize,
    pub iterations: Vec<usize>,
    pub final_loss: Vec<f64>,
    pub converged: Vec<bool>,
    /// Attributes whose training targets were all identical.
    pub degenerate_attributes: Vec<AttributeId>,
}

/// Trained attribute classifiers. Weights act on standardized features
/// `(x - feature_mean) / feature_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeModel {
    pub attributes: Vec<AttributeId>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub meta: TrainingMeta,
}

impl AttributeModel {
    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: AttributeModel =
            serde_json::from_str(text).map_err(|e| Error::parse("attribute model", e.to_string()))?;
        let d = model.dim();
        let m = model.attributes.len();
        if model.feature_scale.len() != d
            || model.weights.len() != m
            || model.bias.len() != m
            || model.weights.iter().any(|w| w.len() != d)
        {
            return Err(Error::parse("attribute model", "inconsistent dimensions"));
        }
        Ok(model)
    }

    fn standardize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mean = ArrayView1::from(&self.feature_mean);
        let scale = ArrayView1::from(&self.feature_scale);
        (&x - &mean) / scale
    }
}

fn standardization(x: ArrayView2<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty training set");
    let var = x.var_axis(Axis(0), 0.0);
    let scale = var
        .iter()
        .map(|&v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
        .collect();
    (mean.to_vec(), scale)
}

/// Trains one logistic classifier per attribute of `assoc`.
///
/// Every instance in `labels` must have a feature row and a category row in
/// `assoc`. Attributes whose targets are constant are still trained and
/// listed in [`TrainingMeta::degenerate_attributes`].
pub fn train_attribute_classifiers(
    features: &FeatureMatrix,
    labels: &BTreeMap<InstanceId, CategoryId>,
    assoc: &AssociationMatrix,
    cfg: &TrainConfig,
) -> Result<AttributeModel> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::InvalidValue("no labelled training instances".into()));
    }
    let mut rows = Vec::with_capacity(labels.len());
    let mut cats = Vec::with_capacity(labels.len());
    for (inst, cat) in labels {
        rows.push(features.instances().require(inst)?);
        cats.push(assoc.categories().require(cat)?);
    }
    let raw = features.values().select(Axis(0), &rows);
    let (mean, scale) = standardization(raw.view());
    let x = (&raw - &ArrayView1::from(&mean)) / ArrayView1::from(&scale);
    let targets = assoc.values().select(Axis(0), &cats);

    let d = features.dim();
    let fits: Vec<FitResult> = (0..assoc.attributes().len())
        .into_par_iter()
        .map(|m| {
            let t = targets.column(m);
            let objective = LogisticObjective::new(x.view(), t, cfg.l2)?;
            let init = initial_params(d + 1, cfg, m);
            Ok(fit_logistic(&objective, init, cfg.lr, cfg.max_iters, cfg.tol))
        })
        .collect::<Result<_>>()?;

    let degenerate = (0..assoc.attributes().len())
        .filter(|&m| {
            let col = targets.column(m);
            col.iter().all(|&v| v == col[0])
        })
        .map(|m| assoc.attributes().name(m).to_string())
        .collect();

    Ok(AttributeModel {
        attributes: assoc.attributes().ids().to_vec(),
        weights: fits.iter().map(|f| f.params[..d].to_vec()).collect(),
        bias: fits.iter().map(|f| f.params[d]).collect(),
        feature_mean: mean,
        feature_scale: scale,
        meta: TrainingMeta {
            config: *cfg,
            n_train: rows.len(),
            iterations: fits.iter().map(|f| f.iterations).collect(),
            final_loss: fits
                .iter()
                .map(|f| *f.loss_history.last().expect("at least one loss"))
                .collect(),
            converged: fits.iter().map(|f| f.converged).collect(),
            degenerate_attributes: degenerate,
        },
    })
}

fn initial_params(len: usize, cfg: &TrainConfig, attribute: usize) -> Vec<f64> {
    if cfg.init_scale == 0.0 {
        return vec![0.0; len];
    }
    let stream = cfg.seed ^ (attribute as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let normal = Normal::new(0.0, cfg.init_scale).expect("finite scale");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// `p(a_m | x_i) = sigmoid(w_m . x_i + b_m)` for every instance and attribute.
pub fn predict_attribute_scores(
    model: &AttributeModel,
    features: &FeatureMatrix,
) -> Result<AttributeScoreMatrix> {
    if features.dim() != model.dim() {
        return Err(Error::Dimension(format!(
            "model expects {} features, got {}",
            model.dim(),
            features.dim()
        )));
    }
    let x = model.standardize(features.values());
    let w = Array2::from_shape_vec(
        (model.attributes.len(), model.dim()),
        model.weights.iter().flatten().copied().collect(),
    )
    .map_err(|e| Error::Dimension(e.to_string()))?;
    let z = x.dot(&w.t()) + ArrayView1::from(&model.bias);
    let table = Table::new(
        features.instances().clone(),
        Registry::new(&model.attributes)?,
        z.mapv(sigmoid),
    )?;
    AttributeScoreMatrix::new(table)
}

/// One-vs-rest associations: every category is its own attribute.
pub fn one_vs_rest<S: AsRef<str>>(categories: &[S]) -> Result<AssociationMatrix> {
    let reg = Registry::new(categories)?;
    let n = reg.len();
    AssociationMatrix::binary(Table::new(reg.clone(), reg, Array2::eye(n))?)
}

/// Known-category posteriors from one-vs-rest classifiers, each row
/// normalized to sum one.
pub fn predict_category_posteriors(
    model: &AttributeModel,
    features: &FeatureMatrix,
) -> Result<CategoryScoreMatrix> {
    let scores = predict_attribute_scores(model, features)?;
    let (rows, cols, mut values) = scores.into_table().into_parts();
    for mut row in values.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    CategoryScoreMatrix::new(Table::new(rows, cols, values)?, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn features(values: Array2<f64>) -> FeatureMatrix {
        let ids = Registry::new((0..values.nrows()).map(|i| format!("x{i}"))).unwrap();
        FeatureMatrix::from_array(ids, values).unwrap()
    }

    fn labels(cats: &[&str]) -> BTreeMap<String, String> {
        cats.iter()
            .enumerate()
            .map(|(i, c)| (format!("x{i}"), c.to_string()))
            .collect()
    }

    fn two_class_assoc() -> AssociationMatrix {
        AssociationMatrix::binary(
            Table::new(
                Registry::new(["pos", "neg"]).unwrap(),
                Registry::new(["a"]).unwrap(),
                array![[1.0], [0.0]],
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_iterations_gives_half() {
        let f = features(array![[1.0, 2.0], [3.0, -1.0], [0.0, 0.0]]);
        let cfg = TrainConfig { max_iters: 0, ..Default::default() };
        let model =
            train_attribute_classifiers(&f, &labels(&["pos", "neg", "pos"]), &two_class_assoc(), &cfg)
                .unwrap();
        assert!(model.weights[0].iter().all(|&w| w == 0.0));
        assert_eq!(model.bias[0], 0.0);
        let s = predict_attribute_scores(&model, &f).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn separable_data_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let mut x = Array2::zeros((n, 2));
        let mut cats = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let shift = if pos { 2.0 } else { -2.0 };
            x[[i, 0]] = shift + rng.random_range(-1.0..1.0);
            x[[i, 1]] = rng.random_range(-3.0..3.0);
            cats.push(if pos { "pos" } else { "neg" });
        }
        let f = features(x);
        let model = train_attribute_classifiers(&f, &labels(&cats), &two_class_assoc(), &TrainConfig::default())
            .unwrap();
        let s = predict_attribute_scores(&model, &f).unwrap();
        for (i, c) in cats.iter().enumerate() {
            assert_eq!(s.get(i, 0) > 0.5, *c == "pos");
        }
        let hist_ok = model.meta.final_loss[0] < 0.2;
        assert!(hist_ok, "loss {}", model.meta.final_loss[0]);
        assert!(model.meta.degenerate_attributes.is_empty());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((25, 4), |_| rng.random_range(-2.0..2.0));
        let t = Array1::from_shape_fn(25, |_| rng.random_range(0.0..1.0));
        let obj = LogisticObjective::new(x.view(), t.view(), 0.05).unwrap();
        let p: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = obj.loss_and_gradient(&p);
        let h = 1e-5;
        for j in 0..5 {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (obj.loss(&up) - obj.loss(&dn)) / (2.0 * h);
            assert!((fd - g[j]).abs() / g[j].abs().max(1e-8) < 1e-4, "{fd} vs {}", g[j]);
        }
    }

    fn hand_model(w: Vec<f64>, b: f64) -> AttributeModel {
        let d = w.len();
        AttributeModel {
            attributes: vec!["a".into()],
            weights: vec![w],
            bias: vec![b],
            feature_mean: vec![0.0; d],
            feature_scale: vec![1.0; d],
            meta: TrainingMeta {
                config: TrainConfig::default(),
                n_train: 0,
                iterations: vec![0],
                final_loss: vec![0.0],
                converged: vec![false],
                degenerate_attributes: vec![],
            },
        }
    }

    #[test]
    fn prediction_hand_cases() {
        let f = features(array![[2.0, 7.0]]);
        let s = predict_attribute_scores(&hand_model(vec![1.0, 0.0], 0.0), &f).unwrap();
        assert!((s.get(0, 0) - 0.8807970779778823).abs() < 1e-12);
        let s = predict_attribute_scores(&hand_model(vec![0.0, 0.0], 50.0), &f).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-9);
        let s = predict_attribute_scores(&hand_model(vec![0.0, 0.0], 0.0), &f).unwrap();
        assert_eq!(s.get(0, 0), 0.5);
        let wrong = features(array![[1.0]]);
        assert!(matches!(
            predict_attribute_scores(&hand_model(vec![1.0, 0.0], 0.0), &wrong),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn degenerate_attribute_flagged() {
        let assoc = AssociationMatrix::binary(
            Table::new(
                Registry::new(["p", "q"]).unwrap(),
                Registry::new(["always", "split"]).unwrap(),
                array![[1.0, 1.0], [1.0, 0.0]],
            )
            .unwrap(),
        )
        .unwrap();
        let f = features(array![[1.0], [-1.0]]);
        let m = train_attribute_classifiers(&f, &labels(&["p", "q"]), &assoc, &TrainConfig::default())
            .unwrap();
        assert_eq!(m.meta.degenerate_attributes, vec!["always".to_string()]);
    }

    #[test]
    fn unknown_label_category_is_an_error() {
        let f = features(array![[1.0]]);
        let r = train_attribute_classifiers(&f, &labels(&["zzz"]), &two_class_assoc(), &TrainConfig::default());
        assert!(matches!(r, Err(Error::UnknownId(_))));
    }

    #[test]
    fn model_json_round_trip() {
        let m = hand_model(vec![0.25, -1.5], 0.125);
        let back = AttributeModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.bias.push(0.0);
        assert!(AttributeModel::from_json(&bad.to_json()).is_err());
    }

    #[test]
    fn posteriors_are_row_normalized() {
        let f = features(array![[1.0], [-1.0], [0.5]]);
        let cats = ["a", "b"];
        let assoc = one_vs_rest(&cats).unwrap();
        let m = train_attribute_classifiers(&f, &labels(&["a", "b", "a"]), &assoc, &TrainConfig::default())
            .unwrap();
        let p = predict_category_posteriors(&m, &f).unwrap();
        assert!(p.is_normalized());
        assert_eq!(p.argmax(), vec![0, 1, 0]);
    }
}
