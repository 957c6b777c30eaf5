//! The four subcommands as library calls.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coop_pliable::eval::{count_model_effects, mse, selection_curve, summarize_experiment, ExperimentReport, ReplicateResult};
use coop_pliable::simgen::{generate, SimData, SimScenario};
use coop_pliable::{make_folds, prepare, FoldSpec, Method, MultiViewData, PliableCoefs, PrepareOptions, RhoGrid, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{prediction_hash, write_json, Coefficients, ModelFile, FORMAT_VERSION};
use crate::config::RunConfig;
use crate::io::{load_dataset, load_features, read_groups, write_dataset, write_vector, IngestOptions};
use crate::run::fit_method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub version: String,
    pub scenario: SimScenario,
    pub sigma: f64,
    pub realized_snr: f64,
    pub beta1: Vec<f64>,
    pub theta1: Vec<Vec<f64>>,
    pub beta2: Vec<f64>,
    pub theta2: Vec<Vec<f64>>,
    pub main_support1: Vec<usize>,
    pub main_support2: Vec<usize>,
    pub interaction_support1: Vec<(usize, usize)>,
    pub interaction_support2: Vec<(usize, usize)>,
}

fn theta_rows(c: &PliableCoefs) -> Vec<Vec<f64>> {
    c.theta.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Generates `scenario` and writes `out/train`, `out/test` and
/// `out/truth.json`.
pub fn simulate(scenario: &SimScenario, out: &Path) -> Result<SimData> {
    let sim = generate(scenario)?;
    write_dataset(&out.join("train"), &sim.train)?;
    write_dataset(&out.join("test"), &sim.test)?;
    let t = &sim.truth;
    let truth = TruthFile {
        version: FORMAT_VERSION.to_string(),
        scenario: scenario.clone(),
        sigma: t.sigma,
        realized_snr: t.realized_snr,
        beta1: t.coefs1.beta.to_vec(),
        theta1: theta_rows(&t.coefs1),
        beta2: t.coefs2.beta.to_vec(),
        theta2: theta_rows(&t.coefs2),
        main_support1: t.main_support1.clone(),
        main_support2: t.main_support2.clone(),
        interaction_support1: t.interaction_support1.clone(),
        interaction_support2: t.interaction_support2.clone(),
    };
    write_json(&out.join("truth.json"), &truth)?;
    Ok(sim)
}

/// Training directory and optional test directory for `--data DIR`: the
/// layout written by `simulate` (`DIR/train`, `DIR/test`) or a flat
/// directory of training files.
pub fn resolve_data_dirs(data: &Path, test: Option<&Path>) -> (PathBuf, Option<PathBuf>) {
    let nested = data.join("train").join("x1.csv").exists();
    let train = if nested { data.join("train") } else { data.to_path_buf() };
    let test = match test {
        Some(t) => Some(t.to_path_buf()),
        None if nested && data.join("test").join("x1.csv").exists() => Some(data.join("test")),
        None => None,
    };
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub method: Method,
    pub selected_rho: Option<f64>,
    pub selected_lambda: f64,
    pub n_train: usize,
    pub train_mse: f64,
    pub n_test: Option<usize>,
    pub test_mse: Option<f64>,
    pub main_effects: usize,
    pub interactions: usize,
    pub train_prediction_sha256: String,
}

pub struct FitRequest {
    pub data: PathBuf,
    pub test: Option<PathBuf>,
    pub groups: Option<PathBuf>,
    pub out: PathBuf,
    pub config: RunConfig,
}

/// Fits one method and writes `model.json`, `coefficients.json` and
/// `metrics.json` into the output directory.
pub fn fit(request: &FitRequest) -> Result<FitMetrics> {
    let config = &request.config;
    let (train_dir, test_dir) = resolve_data_dirs(&request.data, request.test.as_deref());
    let train = load_dataset(&train_dir, &config.ingest, None)?;
    let n = train.data.n();
    let mut folds_spec = config.folds.clone();
    if let Some(path) = &request.groups {
        let groups = read_groups(path)?;
        if groups.len() != n {
            bail!("{}: {} group ids for {n} training rows", path.display(), groups.len());
        }
        folds_spec.grouping = Some(groups);
    }
    let folds = make_folds(n, &folds_spec)?;
    let prepared = prepare(&train.data, config.prepare);
    let grid = RhoGrid::new(config.rho_grid.clone())?;
    let (model, surface) = fit_method(&prepared, config.method, &grid, &config.solver, &folds)
        .with_context(|| format!("fitting {} on {}", config.method, train_dir.display()))?;

    let train_pred = model.predict(&train.data)?;
    let hash = prediction_hash(train_pred.as_slice().expect("contiguous"));
    let train_mse = mse(train.data.y().as_slice().expect("contiguous"), train_pred.as_slice().expect("contiguous"))?;
    let (n_test, test_mse) = match &test_dir {
        Some(dir) => {
            let test = load_dataset(dir, &config.ingest, Some(&train.encoding))?;
            let pred = model.predict(&test.data)?;
            let e = mse(test.data.y().as_slice().expect("contiguous"), pred.as_slice().expect("contiguous"))?;
            (Some(test.data.n()), Some(e))
        }
        None => (None, None),
    };

    let counts = count_model_effects(&model);
    let coefficients = Coefficients::from_model(&model);
    let file = ModelFile {
        version: FORMAT_VERSION.to_string(),
        method: model.method,
        alpha: model.alpha,
        rho: model.rho,
        lambda: model.lambda,
        coefficients: coefficients.clone(),
        weights: model.weights,
        late: model.late.clone(),
        preprocessing: model.preprocessing.clone(),
        z_encoding: train.encoding.clone(),
        cv_surface: surface,
        config: RunConfig {
            folds: FoldSpec {
                grouping: None,
                ..folds_spec.clone()
            },
            ..config.clone()
        },
        train_prediction_sha256: hash.clone(),
    };
    let metrics = FitMetrics {
        method: model.method,
        selected_rho: model.rho,
        selected_lambda: model.lambda,
        n_train: n,
        train_mse,
        n_test,
        test_mse,
        main_effects: counts.main,
        interactions: counts.interaction,
        train_prediction_sha256: hash,
    };
    std::fs::create_dir_all(&request.out).with_context(|| format!("cannot create {}", request.out.display()))?;
    write_json(&request.out.join("model.json"), &file)?;
    write_json(&request.out.join("coefficients.json"), &coefficients)?;
    write_json(&request.out.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOutcome {
    pub n: usize,
    pub sha256: String,
    /// Present when the input directory has a response file.
    pub mse: Option<f64>,
}

/// Predicts for the data in `data` with a saved model; writes a one-column
/// CSV when `out` is given.
pub fn predict(model_path: &Path, data: &Path, out: Option<&Path>) -> Result<PredictOutcome> {
    let file = ModelFile::load(model_path)?;
    let model = file.to_model()?;
    let (dataset, has_y) = load_features(data, &file.config.ingest, Some(&file.z_encoding))?;
    let pred = model.predict(&dataset.data)?;
    let slice = pred.as_slice().expect("contiguous");
    if let Some(path) = out {
        write_vector(path, "yhat", pred.view())?;
    }
    let mse = if has_y {
        Some(mse(dataset.data.y().as_slice().expect("contiguous"), slice)?)
    } else {
        None
    };
    Ok(PredictOutcome {
        n: slice.len(),
        sha256: prediction_hash(slice),
        mse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenarios: Vec<SimScenario>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    pub rho_grid: Vec<f64>,
    pub solver: SolverConfig,
    pub n_folds: usize,
    pub prepare: PrepareOptions,
    /// Also score interaction-level selection.
    pub interaction_selection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub scenario: String,
    pub replicate: usize,
    pub method: Method,
    pub data_seed: u64,
    pub realized_snr: Option<f64>,
    pub result: Option<ReplicateResult>,
    pub main_selected: Vec<bool>,
    pub interaction_selected: Vec<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub scenario: String,
    pub method: Method,
    pub level: String,
    pub cutoff: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub report: Option<ExperimentReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResults {
    pub version: String,
    pub config: BenchConfig,
    pub cells: Vec<CellRecord>,
    pub summaries: Vec<ScenarioReport>,
    pub selection: Vec<SelectionRow>,
    pub failures: usize,
}

/// Seed for replicate `r` of a run seeded with `seed`.
pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(replicate as u64)
}

fn run_cell(
    sim: &SimData,
    scenario: &str,
    replicate: usize,
    data_seed: u64,
    method: Method,
    config: &BenchConfig,
) -> CellRecord {
    let attempt = || -> Result<(ReplicateResult, Vec<bool>, Vec<bool>)> {
        let folds = make_folds(
            sim.train.n(),
            &FoldSpec {
                n_folds: config.n_folds,
                seed: data_seed,
                grouping: None,
            },
        )?;
        let prepared = prepare(&sim.train, config.prepare);
        let grid = RhoGrid::new(config.rho_grid.clone())?;
        let (model, _) = fit_method(&prepared, method, &grid, &config.solver, &folds)?;
        let result = ReplicateResult::from_model(&model, replicate, &sim.test)?;
        Ok((result, model.main_selected(), model.interaction_selected()))
    };
    let (result, main_selected, interaction_selected, error) = match attempt() {
        Ok((r, m, i)) => (Some(r), m, i, None),
        Err(e) => (None, Vec::new(), Vec::new(), Some(format!("{e:#}"))),
    };
    CellRecord {
        scenario: scenario.to_string(),
        replicate,
        method,
        data_seed,
        realized_snr: Some(sim.truth.realized_snr),
        result,
        main_selected,
        interaction_selected,
        error,
    }
}

fn truth_masks(scenario: &SimScenario) -> Result<(Vec<bool>, Vec<bool>)> {
    let (c1, c2) = scenario.true_coefs()?;
    let main = c1.beta.iter().chain(c2.beta.iter()).map(|&b| b != 0.0).collect();
    let inter = c1.theta.iter().chain(c2.theta.iter()).map(|&t| t != 0.0).collect();
    Ok((main, inter))
}

/// Runs every scenario × replicate × method cell. A failing cell is
/// recorded and the run continues.
pub fn bench(config: &BenchConfig) -> Result<BenchResults> {
    if config.replicates == 0 {
        bail!("at least one replicate is required");
    }
    for s in &config.scenarios {
        s.validate().with_context(|| format!("scenario {}", s.name))?;
    }
    let units: Vec<(usize, usize)> = (0..config.scenarios.len())
        .flat_map(|s| (0..config.replicates).map(move |r| (s, r)))
        .collect();
    let cells: Vec<Vec<CellRecord>> = units
        .par_iter()
        .map(|&(s, r)| {
            let scenario = &config.scenarios[s];
            let data_seed = replicate_seed(config.seed, r);
            match generate(&scenario.clone().with_seed(data_seed)) {
                Ok(sim) => config
                    .methods
                    .par_iter()
                    .map(|&m| run_cell(&sim, &scenario.name, r, data_seed, m, config))
                    .collect(),
                Err(e) => config
                    .methods
                    .iter()
                    .map(|&method| CellRecord {
                        scenario: scenario.name.clone(),
                        replicate: r,
                        method,
                        data_seed,
                        realized_snr: None,
                        result: None,
                        main_selected: Vec::new(),
                        interaction_selected: Vec::new(),
                        error: Some(format!("data generation: {e}")),
                    })
                    .collect(),
            }
        })
        .collect();
    let cells: Vec<CellRecord> = cells.into_iter().flatten().collect();

    let mut summaries = Vec::new();
    let mut selection = Vec::new();
    for scenario in &config.scenarios {
        let mine: Vec<&CellRecord> = cells.iter().filter(|c| c.scenario == scenario.name).collect();
        let results: Vec<ReplicateResult> = mine.iter().filter_map(|c| c.result.clone()).collect();
        summaries.push(ScenarioReport {
            scenario: scenario.name.clone(),
            report: summarize_experiment(&results).ok(),
        });
        let (main_truth, inter_truth) = truth_masks(scenario)?;
        for &method in &config.methods {
            let ok: Vec<&&CellRecord> = mine.iter().filter(|c| c.method == method && c.result.is_some()).collect();
            if ok.is_empty() {
                continue;
            }
            let mut levels = vec![("main", ok.iter().map(|c| c.main_selected.clone()).collect::<Vec<_>>(), &main_truth)];
            if config.interaction_selection {
                levels.push(("interaction", ok.iter().map(|c| c.interaction_selected.clone()).collect(), &inter_truth));
            }
            for (level, masks, truth) in levels {
                for s in selection_curve(&masks, truth)? {
                    selection.push(SelectionRow {
                        scenario: scenario.name.clone(),
                        method,
                        level: level.to_string(),
                        cutoff: s.cutoff,
                        true_positives: s.true_positives,
                        false_positives: s.false_positives,
                        true_negatives: s.true_negatives,
                        false_negatives: s.false_negatives,
                        sensitivity: s.sensitivity,
                        specificity: s.specificity,
                    });
                }
            }
        }
    }
    let failures = cells.iter().filter(|c| c.error.is_some()).count();
    Ok(BenchResults {
        version: FORMAT_VERSION.to_string(),
        config: config.clone(),
        cells,
        summaries,
        selection,
        failures,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub const TABLE_HEADER: &str = "scenario\tmethod\treplicates\tmean_mse\tsd_mse\tmain_effects\tinteractions\tmean_main\tmean_interactions";
pub const RHO_HEADER: &str = "scenario\tmethod\trho\tcount";
pub const SELECTION_HEADER: &str =
    "scenario\tmethod\tlevel\tcutoff\ttp\tfp\ttn\tfn\tsensitivity\tspecificity";

/// Writes `results.json`, `table.tsv`, `rho_hist.tsv` and `selection.tsv`.
pub fn write_bench(results: &BenchResults, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(&out.join("results.json"), results)?;
    let mut table = vec![TABLE_HEADER.to_string()];
    let mut rho = vec![RHO_HEADER.to_string()];
    for s in &results.summaries {
        let Some(report) = &s.report else { continue };
        for row in &report.rows {
            table.push(format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.scenario,
                row.method,
                row.replicates,
                row.mean_mse,
                row.sd_mse,
                row.rounded_main,
                row.rounded_interaction,
                row.mean_main,
                row.mean_interaction
            ));
            for (r, count) in &row.rho_histogram {
                rho.push(format!("{}\t{}\t{r}\t{count}", s.scenario, row.method));
            }
        }
    }
    let mut sel = vec![SELECTION_HEADER.to_string()];
    for r in &results.selection {
        sel.push(format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.scenario,
            r.method,
            r.level,
            r.cutoff,
            r.true_positives,
            r.false_positives,
            r.true_negatives,
            r.false_negatives,
            opt(r.sensitivity),
            opt(r.specificity)
        ));
    }
    for (name, lines) in [("table.tsv", table), ("rho_hist.tsv", rho), ("selection.tsv", sel)] {
        let mut text = lines.join("\n");
        text.push('\n');
        std::fs::write(out.join(name), text).with_context(|| format!("cannot write {name}"))?;
    }
    Ok(())
}

/// Loads a dataset written by [`simulate`] back into memory.
pub fn load_simulated(dir: &Path) -> Result<(MultiViewData, MultiViewData)> {
    let options = IngestOptions::default();
    let train = load_dataset(&dir.join("train"), &options, None)?;
    let test = load_dataset(&dir.join("test"), &options, Some(&train.encoding))?;
    Ok((train.data, test.data))
}
