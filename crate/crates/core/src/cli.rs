//! The `colmp` command line.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data or
//! validation errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use crate::artifact::{load_model, save_model, LoadedModel, ModelArtifact};
use crate::classifier::{confusion_matrix, ova_fit, OvaModel};
use crate::data::{generate_fixture, parse_dataset, ColumnFeatures, ColumnRecord, Dataset, SectionShape, Target};
use crate::error::{Error, Result};
use crate::estimators::EstimatorFamily;
use crate::evaluation::{
    bin_analysis, bins_to_csv, cdf_to_csv, error_cdf, error_samples, fit_metrics, standard_bins, unconservative_share,
};
use crate::gpr::train_gpr;
use crate::linear::{
    all_feature_names, coefficient_pvalues, default_lambda_grid, expand_squares, kfold_cv, ols_fit, ridge_fit,
    select_significant, tune_lambda, DesignMatrix, LinearModel, TrainingMeta,
};
use crate::nn::{network_input, train_mlp_regressor, MlpConfig};
use crate::service::{handle_classify, handle_predict, ClassifyRequest, PredictRequest, Registry};

#[derive(Parser, Debug)]
#[command(name = "colmp", version, about = "Modeling parameters and failure modes for RC columns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a and b for one column.
    Predict(PredictArgs),
    /// Predict the failure mode of one column.
    Classify(ClassifyArgs),
    /// Fit a model on a dataset and write its artifact.
    Train(TrainArgs),
    /// Score a model against a dataset.
    Eval(EvalArgs),
    /// Per-bin feature selection and fit comparison.
    Bins(BinsArgs),
    /// Empirical CDF of estimation errors.
    Cdf(CdfArgs),
    /// Write a seeded synthetic dataset.
    Fixtures(FixtureArgs),
    /// Run the HTTP prediction service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct FeatureArgs {
    #[arg(long)]
    shape: SectionShape,
    /// Span-to-depth ratio a/d.
    #[arg(long, allow_hyphen_values = true)]
    ad: f64,
    /// Axial load ratio.
    #[arg(long, allow_hyphen_values = true)]
    axial: f64,
    /// Longitudinal reinforcement ratio.
    #[arg(long, allow_hyphen_values = true)]
    rhol: f64,
    /// Transverse reinforcement ratio.
    #[arg(long, allow_hyphen_values = true)]
    rhot: f64,
    /// Hoop spacing to depth ratio s/d.
    #[arg(long, allow_hyphen_values = true)]
    sd: f64,
    /// Shear demand to capacity ratio V_y/V_o.
    #[arg(long, allow_hyphen_values = true)]
    vyvo: f64,
}

impl FeatureArgs {
    fn features(&self) -> ColumnFeatures {
        ColumnFeatures {
            span_depth: self.ad,
            axial_ratio: self.axial,
            rho_l: self.rhol,
            rho_t: self.rhot,
            spacing_depth: self.sd,
            shear_ratio: self.vyvo,
        }
    }
}

#[derive(Args, Debug)]
struct RegistryArgs {
    /// Directory of model artifacts [default: $COLMP_MODELS_DIR].
    #[arg(long)]
    models_dir: Option<PathBuf>,
    /// Dataset whose statistics enable the separation parameter.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl RegistryArgs {
    fn registry(&self) -> Result<Registry> {
        let dir = self.models_dir.clone().or_else(|| std::env::var_os("COLMP_MODELS_DIR").map(PathBuf::from));
        let mut reg = match dir {
            Some(d) => Registry::load_dir(&d)?,
            None => Registry::new(),
        };
        if let Some(path) = &self.data {
            reg = reg.with_dataset(&read_dataset(path)?);
        }
        Ok(reg)
    }
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    features: FeatureArgs,
    /// Models to evaluate; closed-form families or registry names.
    #[arg(long = "model", default_value = "gm", value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long)]
    classifier: Option<String>,
    #[command(flatten)]
    registry: RegistryArgs,
    /// Print the service JSON response instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long)]
    classifier: Option<String>,
    #[command(flatten)]
    registry: RegistryArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Trainer {
    /// Least squares on the top-k features by p-value.
    Linear,
    /// Ridge regression with λ chosen on a validation split.
    Ridge,
    Gpr,
    Mlp,
    /// One-vs-all logistic classifier.
    Ova,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    shape: SectionShape,
    #[arg(long, value_enum)]
    model: Trainer,
    /// a or b; ignored for `ova`, which predicts the failure mode.
    #[arg(long, default_value = "a")]
    target: Target,
    /// Artifact path.
    #[arg(long)]
    out: PathBuf,
    /// Explicit feature list (names, `name^2` for squares).
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Features kept by p-value ranking for `linear`.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Append squared terms before fitting `ridge`.
    #[arg(long)]
    squares: bool,
    /// Also report k-fold validation for `linear` and `ridge`.
    #[arg(long)]
    kfold: Option<usize>,
    /// Write the λ tuning curve as CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Args, Debug)]
struct ModelChoice {
    /// Closed-form family.
    #[arg(long, default_value = "gm", conflicts_with = "artifact")]
    model: EstimatorFamily,
    /// Single-target artifact to score instead of a closed-form family.
    #[arg(long)]
    artifact: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    shape: SectionShape,
    /// a, b or mode.
    #[arg(long)]
    target: String,
    #[command(flatten)]
    choice: ModelChoice,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CdfArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    shape: SectionShape,
    #[arg(long)]
    target: Target,
    #[command(flatten)]
    choice: ModelChoice,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BinsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    shape: SectionShape,
    #[arg(long)]
    target: Target,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    n_rect: usize,
    #[arg(long)]
    n_circ: usize,
    /// Output file, or `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[command(flatten)]
    registry: RegistryArgs,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, text).map_err(io),
        _ => out.write_all(text.as_bytes()).map_err(io),
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Predict(a) => predict(a, out),
        Command::Classify(a) => classify(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Bins(a) => {
            let ds = read_dataset(&a.data)?;
            let results = bin_analysis(&ds, a.shape, &standard_bins(), a.target, a.k)?;
            emit(out, a.out.as_deref(), &bins_to_csv(&results))
        }
        Command::Cdf(a) => {
            let ds = read_dataset(&a.data)?;
            let errors = regression_errors(&ds, a.shape, a.target, &a.choice)?;
            emit(out, a.out.as_deref(), &cdf_to_csv(&error_cdf(&errors)))
        }
        Command::Fixtures(a) => {
            let csv = generate_fixture(a.seed, a.n_rect, a.n_circ).to_csv();
            emit(out, Some(Path::new(&a.out)), &csv)
        }
        Command::Serve(a) => serve(a, out),
    }
}

fn json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "{text}").map_err(io)
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let reg = a.registry.registry()?;
    let req = PredictRequest {
        id: None,
        shape: a.features.shape,
        features: a.features.features(),
        models: a.models,
        classifier: a.classifier,
    };
    let resp = handle_predict(&req, &reg)?;
    if a.json {
        return json_line(out, &resp);
    }
    for r in &resp.results {
        writeln!(out, "{} a={:.5} b={:.5} raw_a={:.5} raw_b={:.5}", r.model, r.a, r.b, r.raw_a, r.raw_b).map_err(io)?;
    }
    let c = &resp.classification;
    writeln!(out, "mode={} p_FC={:.4} p_FSC={:.4} p_SC={:.4}", c.mode, c.probabilities[0], c.probabilities[1], c.probabilities[2])
        .map_err(io)?;
    if let Some(x) = resp.x_test {
        writeln!(out, "x_test={x:.4}").map_err(io)?;
    }
    Ok(())
}

fn classify(a: ClassifyArgs, out: &mut dyn Write) -> Result<()> {
    let reg = a.registry.registry()?;
    let req = ClassifyRequest { id: None, shape: a.features.shape, features: a.features.features(), classifier: a.classifier };
    let resp = handle_classify(&req, &reg)?;
    if a.json {
        return json_line(out, &resp);
    }
    let c = &resp.classification;
    writeln!(out, "mode={}", c.mode).map_err(io)?;
    for (mode, (s, p)) in ["FC", "FSC", "SC"].iter().zip(c.scores.iter().zip(&c.probabilities)) {
        writeln!(out, "{mode} score={s:.5} p={p:.5}").map_err(io)?;
    }
    Ok(())
}

fn labelled(ds: &Dataset, shape: SectionShape, target: Target) -> Vec<&ColumnRecord> {
    ds.of_shape(shape).filter(|r| r.target(target).is_some()).collect()
}

fn feature_matrix(rows: &[&ColumnRecord], augment: bool) -> Array2<f64> {
    let dim = if augment { 8 } else { 6 };
    let data: Vec<f64> = rows.iter().flat_map(|r| network_input(&r.features, augment)).collect();
    Array2::from_shape_vec((rows.len(), dim), data).expect("rows have fixed width")
}

fn report_kfold(out: &mut dyn Write, x: &DesignMatrix, y: &[f64], k: usize, lambda: f64, seed: u64) -> Result<()> {
    let rep = kfold_cv(x, y, k, |xt, yt| ridge_fit(xt, yt, lambda), seed)?;
    writeln!(out, "fold,rows,r2,mse").map_err(io)?;
    for f in &rep.folds {
        let r2 = f.r2.map_or("NA".to_string(), |v| v.to_string());
        writeln!(out, "{},{},{},{}", f.fold, f.rows.len(), r2, f.mse).map_err(io)?;
    }
    let r2 = rep.mean_r2.map_or("NA".to_string(), |v| v.to_string());
    writeln!(out, "mean,,{},{}", r2, rep.mean_mse).map_err(io)
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    writeln!(out, "seed={}", a.seed).map_err(io)?;
    let artifact = match a.model {
        Trainer::Linear | Trainer::Ridge => {
            let rows = labelled(&ds, a.shape, a.target);
            let names = match (&a.features, a.model) {
                (Some(f), _) => f.clone(),
                (None, Trainer::Linear) => {
                    let (x, y) = DesignMatrix::from_records(&rows, &all_feature_names(), a.target)?;
                    select_significant(&coefficient_pvalues(&x, &y)?, a.k)?
                }
                (None, _) => all_feature_names(),
            };
            let (mut x, y) = DesignMatrix::from_records(&rows, &names, a.target)?;
            if a.squares {
                x = expand_squares(&x);
            }
            let (mut model, lambda): (LinearModel, f64) = if a.model == Trainer::Ridge {
                let tuning = tune_lambda(&x, &y, a.seed, &default_lambda_grid())?;
                if let Some(p) = &a.curve {
                    std::fs::write(p, tuning.to_csv()).map_err(io)?;
                }
                writeln!(out, "lambda_star={}", tuning.lambda_star).map_err(io)?;
                (ridge_fit(&x, &y, tuning.lambda_star)?, tuning.lambda_star)
            } else {
                (ols_fit(&x, &y)?, 0.0)
            };
            model.meta = TrainingMeta { seed: Some(a.seed), split: (a.model == Trainer::Ridge).then(|| "70/30".into()) };
            let m = fit_metrics(&model.predict(&x)?, &y)?;
            writeln!(out, "features={}", model.feature_names.join(";")).map_err(io)?;
            writeln!(out, "train_r2={} train_mse={}", m.r2, m.mse).map_err(io)?;
            if let Some(k) = a.kfold {
                report_kfold(out, &x, &y, k, lambda, a.seed)?;
            }
            ModelArtifact::linear(&model, a.shape, a.target)
        }
        Trainer::Gpr => {
            let rows = labelled(&ds, a.shape, a.target);
            let y: Vec<f64> = rows.iter().filter_map(|r| r.target(a.target)).collect();
            let (model, rep) = train_gpr(feature_matrix(&rows, false).view(), &y, a.seed)?;
            writeln!(out, "noise_var={} test_mse={} n_train={} n_test={}", rep.noise_var, rep.test_mse, rep.n_train, rep.n_test)
                .map_err(io)?;
            let mut art = ModelArtifact::gpr(&model, a.shape, a.target);
            art.training_meta.seed = Some(a.seed);
            art.training_meta.split = Some("90/10".into());
            art
        }
        Trainer::Mlp => {
            let rows = labelled(&ds, a.shape, a.target);
            let y: Vec<f64> = rows.iter().filter_map(|r| r.target(a.target)).collect();
            let augment = a.shape == SectionShape::Circular;
            let mut cfg = MlpConfig::standard(if augment { 8 } else { 6 }, a.seed);
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
            let (model, tr) = train_mlp_regressor(feature_matrix(&rows, augment).view(), &y, cfg, a.seed, augment, false)?;
            writeln!(out, "train_mse={} validation_mse={}", tr.final_train_mse, tr.final_validation_mse.unwrap_or(f64::NAN))
                .map_err(io)?;
            let mut art = ModelArtifact::mlp(&model, a.shape, a.target);
            art.training_meta.split = Some("70/30".into());
            art
        }
        Trainer::Ova => {
            let rows: Vec<&ColumnRecord> = ds.of_shape(a.shape).filter(|r| r.mode.is_some()).collect();
            let names = a
                .features
                .clone()
                .unwrap_or_else(|| ["axial_ratio", "rho_t", "vy_over_vo"].map(String::from).to_vec());
            let x = DesignMatrix::from_features(rows.iter().map(|r| &r.features), &names, true)?;
            let labels: Vec<_> = rows.iter().map(|r| r.mode.expect("filtered")).collect();
            let lr = a.lr.unwrap_or(0.5);
            let iters = a.iters.unwrap_or(5000);
            let (model, hist) = ova_fit(&x, &labels, lr, iters, a.seed)?;
            let predicted = rows.iter().map(|r| model.predict_features(&r.features).map(|s| s.predicted)).collect::<Result<Vec<_>>>()?;
            let cm = confusion_matrix(&predicted, &labels)?;
            let finals: Vec<String> = hist.iter().map(|h| h.last().copied().unwrap_or(f64::NAN).to_string()).collect();
            writeln!(out, "final_costs={} accuracy={:.4}", finals.join(";"), cm.accuracy()).map_err(io)?;
            write!(out, "{}", cm.to_csv()).map_err(io)?;
            ModelArtifact::ova(&model, a.shape)
        }
    };
    std::fs::write(&a.out, save_model(&artifact)?).map_err(|e| Error::Io(format!("{}: {e}", a.out.display())))?;
    writeln!(out, "wrote {}", a.out.display()).map_err(io)
}

fn load_artifact(path: &Path) -> Result<ModelArtifact> {
    load_model(&std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)
}

/// Measured minus estimated values; closed-form estimates are clamped,
/// artifact outputs are used as predicted.
fn regression_errors(ds: &Dataset, shape: SectionShape, target: Target, choice: &ModelChoice) -> Result<Vec<f64>> {
    let rows = labelled(ds, shape, target);
    let samples = match &choice.artifact {
        Some(path) => {
            let art = load_artifact(path)?;
            if art.shape != shape || art.target != target.into() {
                return Err(Error::InvalidParameter(format!(
                    "artifact predicts {} for shape {}",
                    art.target.name(),
                    art.shape.code()
                )));
            }
            let model = art.to_model()?;
            error_samples(rows, target, |r| match &model {
                LoadedModel::ClosedForm(f) => f.estimate(&r.features, shape).map(|e| pick(e.a, e.b, target)),
                m => Ok(m.predict_value(&r.features)?.expect("regression artifact")),
            })?
        }
        None => error_samples(rows, target, |r| {
            choice.model.estimate(&r.features, shape).map(|e| pick(e.a, e.b, target))
        })?,
    };
    Ok(samples.into_iter().map(|s| s.error).collect())
}

fn pick(a: f64, b: f64, target: Target) -> f64 {
    match target {
        Target::A => a,
        Target::B => b,
    }
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    if a.target == "mode" {
        let model = match &a.choice.artifact {
            Some(p) => match load_artifact(p)?.to_model()? {
                LoadedModel::Ova(m) => m,
                _ => return Err(Error::InvalidParameter("artifact is not a classifier".into())),
            },
            None => OvaModel::from_fixed(a.shape),
        };
        let rows: Vec<&ColumnRecord> = ds.of_shape(a.shape).filter(|r| r.mode.is_some()).collect();
        let predicted = rows.iter().map(|r| model.predict_features(&r.features).map(|s| s.predicted)).collect::<Result<Vec<_>>>()?;
        let actual: Vec<_> = rows.iter().map(|r| r.mode.expect("filtered")).collect();
        let cm = confusion_matrix(&predicted, &actual)?;
        let text = format!(
            "{}accuracy,{}\nunconservative,{}\nconservative,{}\n",
            cm.to_csv(),
            cm.accuracy(),
            cm.unconservative_fraction(),
            cm.conservative_fraction()
        );
        return emit(out, a.out.as_deref(), &text);
    }
    let target: Target = a.target.parse()?;
    let errors = regression_errors(&ds, a.shape, target, &a.choice)?;
    let actual: Vec<f64> = labelled(&ds, a.shape, target).iter().filter_map(|r| r.target(target)).collect();
    let estimated: Vec<f64> = actual.iter().zip(&errors).map(|(y, e)| y - e).collect();
    let m = fit_metrics(&estimated, &actual)?;
    let name = match &a.choice.artifact {
        Some(p) => p.display().to_string(),
        None => a.choice.model.name().to_string(),
    };
    let text = format!(
        "model,shape,target,n,r2,mse,std_err,unconservative_share\n{},{},{},{},{},{},{},{}\n",
        name,
        a.shape.code(),
        target,
        actual.len(),
        m.r2,
        m.mse,
        m.std_err,
        unconservative_share(&errors)
    );
    emit(out, a.out.as_deref(), &text)
}

fn serve(a: ServeArgs, out: &mut dyn Write) -> Result<()> {
    let reg = Arc::new(a.registry.registry()?);
    let rt = tokio::runtime::Runtime::new().map_err(io)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await.map_err(io)?;
        let addr = listener.local_addr().map_err(io)?;
        writeln!(out, "listening on http://{addr}").map_err(io)?;
        out.flush().map_err(io)?;
        crate::service::serve(listener, reg).await.map_err(io)
    })
}
