//! Stage implementations behind the subcommands.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelSource, PipelineConfig};
use super::CliError;
use crate::cost::{estimate_area, estimate_power_random, rank_weight_areas};
use crate::netlist::{emit_verilog, stats, Netlist, NetlistError, Verdict};
use crate::qmodel::{load_model, save_model, Dataset, QuantizedMLP, Split};
use crate::synth::{flatten_baseline, flatten_network, verify_netlist, SynthError, VerifyOptions};
use crate::timing::{explore_stages, insert_pipeline_stages, retime, save_stage_csv, sta_min_period};
use crate::train::{
    evaluate, fine_tune, monitor_split, profile_adder_widths, prune_unstructured,
    save_log_csv, train_hat, train_qat, FloatMLP, TrainError,
};

fn internal(e: impl Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn write_failed(path: &Path) -> impl Fn(String) -> CliError + '_ {
    move |msg| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(msg),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Diverged { .. } => internal(e),
        _ => CliError::Config(e.to_string()),
    }
}

fn synth_err(e: SynthError) -> CliError {
    match e {
        SynthError::Netlist(NetlistError::SignatureMismatch(m)) => CliError::Verify(m),
        e => internal(e),
    }
}

fn require(path: PathBuf, hint: &str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Config(format!("{} not found; {hint}", path.display())))
    }
}

fn read_model(path: &Path) -> Result<QuantizedMLP, CliError> {
    load_model(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_netlist(path: &Path) -> Result<Netlist, CliError> {
    Netlist::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The model `compile` and `verify` work on.
fn compile_model(cfg: &PipelineConfig) -> Result<QuantizedMLP, CliError> {
    let path = match (&cfg.paths.model, cfg.compile.source) {
        (Some(p), _) => require(p.clone(), "check paths.model")?,
        (None, ModelSource::Qat) => require(cfg.out_dir().join("model.json"), "run `train` first")?,
        (None, ModelSource::Hat) => require(cfg.out_dir().join("hat_model.json"), "run `hat` first")?,
    };
    read_model(&path)
}

fn finish_model(
    cfg: &PipelineConfig,
    latent: &FloatMLP,
    data: &Dataset,
    name: &str,
) -> Result<QuantizedMLP, CliError> {
    let mut model = latent.export(name).map_err(train_err)?;
    if let Some(q) = cfg.quantile {
        profile_adder_widths(&mut model, data, q).map_err(train_err)?;
    }
    Ok(model)
}

/// QAT, then optional pruning with fine-tuning and width profiling.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<(), CliError> {
    let data = cfg.dataset()?;
    let arch = cfg.arch_for(&data);
    let out = train_qat(&data, &arch, &cfg.train).map_err(train_err)?;
    let mut latent = out.latent;
    let mut log = out.log;
    if cfg.prune.sparsity > 0.0 {
        latent = prune_unstructured(&latent, cfg.prune.sparsity).map_err(train_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x5052_554e);
        let offset = log.len();
        let tuned = fine_tune(&mut latent, &data, &cfg.train, cfg.prune.fine_tune_epochs, &mut rng)
            .map_err(train_err)?;
        log.extend(tuned.into_iter().map(|mut e| {
            e.epoch += offset;
            e
        }));
    }
    let model = finish_model(cfg, &latent, &data, "qat")?;
    let dir = cfg.out_dir();
    let model_path = dir.join("model.json");
    save_model(&model, &model_path).map_err(|e| write_failed(&model_path)(e.to_string()))?;
    let latent_path = dir.join("latent.json");
    latent
        .save(&latent_path)
        .map_err(|e| write_failed(&latent_path)(e.to_string()))?;
    let log_path = dir.join("train_log.csv");
    save_log_csv(&log, &log_path).map_err(|e| write_failed(&log_path)(e.to_string()))?;
    let split = monitor_split(&data);
    let metric = evaluate(&model, &data, split, cfg.train.metric).map_err(train_err)?;
    println!(
        "trained {arch:?} for {} epochs; {} {:?} = {metric:.4}",
        log.len(),
        split.as_str(),
        cfg.train.metric
    );
    Ok(())
}

/// Hardware-aware training starting from `latent.json`.
pub fn cmd_hat(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = cfg.out_dir();
    let latent_path = require(dir.join("latent.json"), "run `train` first")?;
    let latent = FloatMLP::load(&latent_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", latent_path.display())))?;
    let data = cfg.dataset()?;
    let table = rank_weight_areas(&cfg.cost);
    let out = train_hat(&latent, &data, &table, &cfg.train).map_err(train_err)?;
    let mut model = out.model;
    if let Some(q) = cfg.quantile {
        profile_adder_widths(&mut model, &data, q).map_err(train_err)?;
    }
    let model_path = dir.join("hat_model.json");
    save_model(&model, &model_path).map_err(|e| write_failed(&model_path)(e.to_string()))?;
    let lp = dir.join("hat_latent.json");
    out.latent.save(&lp).map_err(|e| write_failed(&lp)(e.to_string()))?;
    let sel = dir.join("selected_weights.json");
    let text = serde_json::to_string_pretty(&out.state).map_err(internal)?;
    write_text(&sel, &(text + "\n"))?;
    let log_path = dir.join("hat_log.csv");
    save_log_csv(&out.log, &log_path).map_err(|e| write_failed(&log_path)(e.to_string()))?;
    println!(
        "selected {} weight values after set sizes {:?}; metric {:.4} against baseline {:.4}{}",
        out.state.set.len(),
        out.state.sizes,
        out.state.history.last().copied().unwrap_or(f64::NAN),
        out.state.baseline,
        if out.state.recovered { "" } else { " (not recovered)" }
    );
    Ok(())
}

/// Summary written to `stats.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileStats {
    pub model: String,
    pub area: u64,
    pub cells: usize,
    pub flops: usize,
    pub nets: usize,
    pub depth: usize,
    pub latency: u32,
    /// Period of the flattened network before any stage insertion.
    pub flat_period: u32,
    /// Period after stage insertion, before retiming.
    pub staged_period: u32,
    pub period: u32,
    pub cells_by_kind: std::collections::BTreeMap<String, usize>,
}

/// Flatten, optionally pipeline and retime; write netlist, Verilog, stats.
pub fn cmd_compile(cfg: &PipelineConfig) -> Result<CompileStats, CliError> {
    let model = compile_model(cfg)?;
    let flat = flatten_network(&model).map_err(internal)?;
    let flat_period = sta_min_period(&flat, &cfg.timing).map_err(internal)?.period;
    let staged = insert_pipeline_stages(&flat, cfg.compile.pipeline_stages).map_err(internal)?;
    let staged_period = sta_min_period(&staged, &cfg.timing).map_err(internal)?.period;
    let n = if cfg.compile.retime {
        retime(&staged, &cfg.timing).map_err(internal)?.netlist
    } else {
        staged
    };
    let period = sta_min_period(&n, &cfg.timing).map_err(internal)?.period;
    if period > staged_period {
        return Err(internal(format!("retiming raised the period from {staged_period} to {period}")));
    }
    let st = stats(&n);
    let cs = CompileStats {
        model: model.name.clone(),
        area: estimate_area(&n, &cfg.cost),
        cells: st.cells,
        flops: st.flops,
        nets: st.nets,
        depth: st.depth,
        latency: n.latency(),
        flat_period,
        staged_period,
        period,
        cells_by_kind: st.cells_by_kind,
    };
    let dir = cfg.out_dir();
    let np = dir.join("netlist.json");
    n.save(&np).map_err(|e| write_failed(&np)(e.to_string()))?;
    let module = format!("nnlogic_{}", sanitize(&model.name));
    write_text(&dir.join("netlist.v"), &emit_verilog(&n, &module))?;
    let text = serde_json::to_string_pretty(&cs).map_err(internal)?;
    write_text(&dir.join("stats.json"), &(text + "\n"))?;
    println!(
        "compiled {}: {} cells, {} flops, area {}, period {} (flat {}), latency {}",
        cs.model, cs.cells, cs.flops, cs.area, cs.period, cs.flat_period, cs.latency
    );
    Ok(cs)
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "model".into()
    } else {
        s
    }
}

/// Compare `netlist.json` with reference inference on random vectors and
/// the dataset's test split.
pub fn cmd_verify(cfg: &PipelineConfig) -> Result<(), CliError> {
    let model = compile_model(cfg)?;
    let np = require(cfg.out_dir().join("netlist.json"), "run `compile` first")?;
    let n = read_netlist(&np)?;
    let vectors: Vec<Vec<i8>> = match cfg.dataset() {
        Ok(d) if d.features() == model.inputs() => {
            d.split(Split::Test).map(|s| s.input.clone()).collect()
        }
        _ => Vec::new(),
    };
    // a retimed circuit settles once every register on its paths has been
    // refilled from the inputs
    let warmup = n.register_depth().unwrap_or(n.latency()) as usize;
    let opts = VerifyOptions {
        trials: cfg.verify.trials + warmup,
        seed: cfg.verify.seed,
        warmup,
        vectors,
    };
    match verify_netlist(&n, &model, &opts).map_err(synth_err)? {
        Verdict::Equivalent { compared } => {
            println!("equivalent: {compared} vectors match reference inference");
            Ok(())
        }
        Verdict::Counterexample(c) => {
            println!("{c}");
            Err(CliError::Verify(format!(
                "netlist differs from reference inference at cycle {}",
                c.cycle
            )))
        }
    }
}

/// One build in `comparison.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub build: String,
    pub area: u64,
    pub cells: usize,
    pub flops: usize,
    pub period: u32,
    pub dynamic_power: f64,
    pub clock_power: f64,
    pub total_power: f64,
}

/// Weight-area table, stage exploration and the build comparison.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<(), CliError> {
    cmd_rank_weights(cfg)?;
    cmd_explore_stages(cfg)?;
    let dir = cfg.out_dir();
    let qat = match &cfg.paths.model {
        Some(p) => read_model(&require(p.clone(), "check paths.model")?)?,
        None => read_model(&require(dir.join("model.json"), "run `train` first")?)?,
    };
    let mut builds = vec![
        ("baseline".to_string(), flatten_baseline(&qat).map_err(internal)?),
        ("embedded".to_string(), flatten_network(&qat).map_err(internal)?),
    ];
    let hat_path = dir.join("hat_model.json");
    if cfg.paths.model.is_none() && hat_path.exists() {
        let hat = read_model(&hat_path)?;
        builds.push(("hat".to_string(), flatten_network(&hat).map_err(internal)?));
    }
    let warmup = builds.iter().map(|(_, n)| n.latency() as usize + 1).max().unwrap_or(0);
    let rows = builds
        .iter()
        .map(|(name, n)| {
            let p = estimate_power_random(n, &cfg.cost, cfg.report.power_cycles + warmup, warmup, cfg.report.power_seed)
                .map_err(internal)?;
            Ok(ComparisonRow {
                build: name.clone(),
                area: estimate_area(n, &cfg.cost),
                cells: n.cells().len(),
                flops: n.flops().len(),
                period: sta_min_period(n, &cfg.timing).map_err(internal)?.period,
                dynamic_power: p.dynamic,
                clock_power: p.clock,
                total_power: p.total,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let path = dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| write_failed(&path)(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| write_failed(&path)(e.to_string()))?;
    }
    w.flush().map_err(|source| CliError::Io { path: path.clone(), source })?;
    for r in &rows {
        println!(
            "{:>9}: area {:>8}, power {:>12.1}, period {}",
            r.build, r.area, r.total_power, r.period
        );
    }
    Ok(())
}

pub fn cmd_rank_weights(cfg: &PipelineConfig) -> Result<(), CliError> {
    let table = rank_weight_areas(&cfg.cost);
    let path = cfg.out_dir().join("weight_areas.csv");
    table.save_csv(&path).map_err(|e| write_failed(&path)(e.to_string()))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_explore_stages(cfg: &PipelineConfig) -> Result<(), CliError> {
    let model = compile_model(cfg)?;
    let flat = flatten_network(&model).map_err(internal)?;
    let rows = explore_stages(&flat, &cfg.timing, cfg.report.max_stages).map_err(internal)?;
    let path = cfg.out_dir().join("stage_exploration.csv");
    save_stage_csv(&rows, &path).map_err(|e| write_failed(&path)(e.to_string()))?;
    println!(
        "periods for 0..={} extra ranks: {:?}",
        cfg.report.max_stages,
        rows.iter().map(|r| r.period).collect::<Vec<_>>()
    );
    Ok(())
}
