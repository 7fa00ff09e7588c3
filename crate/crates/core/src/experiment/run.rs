//! End-to-end experiment execution: generate both domains, pretrain on the
//! source, adapt by the configured method, score on the target test split,
//! and persist records plus artifacts.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::diff::Tensor;
use crate::error::{RunError, TrainError};
use crate::experiment::config::{ExperimentConfig, Method, ResultRecord, TrainOverrides};
use crate::io;
use crate::model::{
    train_supervised, DeepOnet, DeepOnetHyper, Fno1d, FnoHyper, OperatorModel, TrainConfig,
    TrainReport,
};
use crate::pde::datagen::{generate, Family, GenSpec, Subdomain};
use crate::pde::grid::{Dataset, Domain};
use crate::pott::{dual_train, pushforward, transfer_train, PottConfig, PushforwardDataset};
use crate::rng::stream;

/// The operator family used for each equation unless overridden: spectral
/// convolutions for periodic 1-d fields, branch-trunk nets elsewhere.
pub fn default_arch(equation: Family) -> &'static str {
    match equation {
        Family::Burgers => "fno1d",
        Family::Advection | Family::Darcy => "deeponet",
    }
}

/// Preset-sized surrogate for the given discretization.
pub fn build_model(
    arch: &str,
    k_domain: Domain,
    u_domain: Domain,
    seed: u64,
) -> Result<OperatorModel, TrainError> {
    match arch {
        "fno1d" => {
            let n = match (k_domain, u_domain) {
                (Domain::Interval { n }, Domain::Interval { n: m }) if n == m => n,
                _ => {
                    return Err(TrainError::Config(format!(
                        "spectral model needs matching 1-d grids, got {:?} -> {:?}",
                        k_domain, u_domain
                    )))
                }
            };
            if !n.is_power_of_two() {
                return Err(TrainError::Config(format!(
                    "spectral model needs a power-of-two grid, got {}",
                    n
                )));
            }
            Ok(OperatorModel::Fno(Fno1d::init(
                FnoHyper::preset(n),
                &mut stream(seed, "init", 0),
            )))
        }
        "deeponet" => Ok(OperatorModel::DeepOnet(DeepOnet::init(
            DeepOnetHyper::preset(k_domain, u_domain),
            &mut stream(seed, "init", 0),
        ))),
        other => Err(TrainError::Config(format!(
            "unknown architecture tag {:?}, expected fno1d or deeponet",
            other
        ))),
    }
}

/// Stage bases; overrides in the config layer on top of these.
pub fn pretrain_base(seed: u64) -> TrainConfig {
    TrainConfig::scratch(40, seed)
}

fn transfer_base(n2: usize, seed: u64) -> TrainConfig {
    TrainConfig::finetune(n2, seed)
}

fn gen_splits(
    cfg: &ExperimentConfig,
    which: Subdomain,
    n_train: Option<usize>,
    seed: u64,
) -> Result<crate::pde::datagen::GeneratedSplits, RunError> {
    let custom = if which == cfg.source {
        cfg.source_custom.clone()
    } else {
        cfg.target_custom.clone()
    };
    Ok(generate(&GenSpec {
        equation: cfg.equation,
        subdomain: which,
        n_train,
        n_val: 10,
        n_test: 100,
        seed,
        custom,
    })?)
}

fn merged(a: &Dataset, b: &Dataset) -> Dataset {
    assert_eq!(a.k_domain(), b.k_domain(), "cannot mix discretizations");
    assert_eq!(a.u_domain(), b.u_domain(), "cannot mix discretizations");
    let mut pairs = a.pairs.clone();
    pairs.extend(b.pairs.iter().cloned());
    Dataset {
        pairs,
        family: b.family.clone(),
        domain_id: format!("{}+{}", a.domain_id, b.domain_id),
        split: "train".into(),
        seed: b.seed,
    }
}

/// Side-by-side tensors for one test sample, for the report's panels.
pub struct Panel {
    pub input: Tensor,
    pub gt: Tensor,
    pub pred: Tensor,
}

pub struct SingleRun {
    pub record: ResultRecord,
    pub model: OperatorModel,
    pub panels: Vec<Panel>,
    pub pushforward: Option<PushforwardDataset>,
}

pub struct AdaptOutcome {
    pub model: OperatorModel,
    pub report: TrainReport,
    pub dual_objective: Vec<f64>,
    pub pushforward: Option<PushforwardDataset>,
}

/// Adapt a pretrained source surrogate to the target splits by the chosen
/// method. The source training split is consumed by the pooled baseline and
/// by the transport stage; plain finetuning ignores it.
pub fn adapt(
    method: Method,
    g_src: &OperatorModel,
    src_train: &Dataset,
    tgt_train: &Dataset,
    tgt_val: &Dataset,
    pott: &PottConfig,
    overrides: &TrainOverrides,
    seed: u64,
) -> Result<AdaptOutcome, RunError> {
    match method {
        Method::Finetune => {
            let tcfg = overrides.apply(transfer_base(pott.n2, seed));
            let (model, report) = crate::pott::finetune(g_src, tgt_train, tgt_val, &tcfg)?;
            Ok(AdaptOutcome {
                model,
                report,
                dual_objective: Vec::new(),
                pushforward: None,
            })
        }
        Method::SrcTgt => {
            // joint training from scratch on the pooled splits, validated on
            // the target
            let pool = merged(src_train, tgt_train);
            let mut m = build_model(g_src.arch(), pool.k_domain(), pool.u_domain(), seed)?;
            m.fit_standardizer(&pool);
            let tcfg = overrides.apply(pretrain_base(seed));
            let report = train_supervised(&mut m, &pool, tgt_val, &tcfg, None)?;
            Ok(AdaptOutcome {
                model: m,
                report,
                dual_objective: Vec::new(),
                pushforward: None,
            })
        }
        Method::Pott => {
            let (map, _potential, trace) = dual_train(src_train, tgt_train, Some(g_src), pott, seed)?;
            let dual_objective = trace.iter().map(|s| s.objective).collect();
            let pf = pushforward(&map, src_train);
            let tcfg = overrides.apply(transfer_base(pott.n2, seed));
            let (model, report) =
                transfer_train(g_src, tgt_train, tgt_val, &pf, pott.beta, &tcfg)?;
            Ok(AdaptOutcome {
                model,
                report,
                dual_objective,
                pushforward: Some(pf),
            })
        }
    }
}

/// The first few test pairs rendered through the model, for the report.
pub fn panels_for(model: &OperatorModel, test: &Dataset) -> Vec<Panel> {
    test.pairs
        .iter()
        .take(2)
        .map(|pair| Panel {
            input: pair.k.values.clone(),
            gt: pair.u.values.clone(),
            pred: model.predict(&pair.k).values,
        })
        .collect()
}

/// Execute one (config, seed) run entirely in memory.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<SingleRun, RunError> {
    let t0 = Instant::now();
    let src = gen_splits(cfg, cfg.source, cfg.n_source, seed)?;
    let tgt = gen_splits(cfg, cfg.target, Some(cfg.n_target), seed)?;

    let arch = default_arch(cfg.equation);
    let mut g_src = build_model(arch, src.train.k_domain(), src.train.u_domain(), seed)?;
    g_src.fit_standardizer(&src.train);
    let pre_cfg = cfg.pretrain.apply(pretrain_base(seed));
    let pre_report = train_supervised(&mut g_src, &src.train, &src.val, &pre_cfg, None)?;

    let outcome = adapt(
        cfg.method,
        &g_src,
        &src.train,
        &tgt.train,
        &tgt.val,
        &cfg.pott,
        &cfg.transfer,
        seed,
    )?;

    let rmse = outcome.model.dataset_rmse(&tgt.test);
    let panels = panels_for(&outcome.model, &tgt.test);

    let record = ResultRecord {
        config_hash: cfg.hash(),
        task: cfg.task_id(),
        method: cfg.method,
        n_target: cfg.n_target,
        seed,
        rmse,
        pretrain_val: pre_report.val_trace,
        transfer_loss: outcome.report.loss_trace,
        transfer_val: outcome.report.val_trace,
        dual_objective: outcome.dual_objective,
        wall_seconds: t0.elapsed().as_secs_f64(),
    };
    record.check()?;
    Ok(SingleRun {
        record,
        model: outcome.model,
        panels,
        pushforward: outcome.pushforward,
    })
}

/// Code-version stamp written next to every artifact directory so it can be
/// traced back to the code that produced it.
#[derive(Serialize)]
pub struct Provenance {
    pub package_version: &'static str,
    pub format_version: u32,
}

impl Provenance {
    pub fn current() -> Self {
        Provenance {
            package_version: env!("CARGO_PKG_VERSION"),
            format_version: io::FORMAT_VERSION,
        }
    }
}

fn parse_threads(raw: Option<String>) -> usize {
    raw.and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Sweep parallelism cap, from POTT_THREADS (default 1).
pub fn sweep_threads() -> usize {
    parse_threads(std::env::var("POTT_THREADS").ok())
}

/// Write one run's artifacts: the append-only record, the adapted model,
/// report panels, and the transported split when one exists.
pub fn persist_run(dir: &Path, run: &SingleRun) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(crate::error::FormatError::Io)?;
    let record_path = dir.join("record.json");
    if record_path.exists() {
        return Err(crate::error::FormatError::Manifest(format!(
            "record {} already exists; records are append-only",
            record_path.display()
        ))
        .into());
    }
    let json =
        serde_json::to_string_pretty(&run.record).map_err(crate::error::FormatError::Json)?;
    fs::write(&record_path, json).map_err(crate::error::FormatError::Io)?;
    io::save_model(&dir.join("model.pott"), &run.model)?;
    for (i, p) in run.panels.iter().enumerate() {
        io::write_tensor(&dir.join(format!("panel{}_input.pott", i)), &p.input)?;
        io::write_tensor(&dir.join(format!("panel{}_gt.pott", i)), &p.gt)?;
        io::write_tensor(&dir.join(format!("panel{}_pred.pott", i)), &p.pred)?;
    }
    if let Some(pf) = &run.pushforward {
        io::save_dataset(&dir.join("pushforward"), &pf.data)?;
    }
    Ok(())
}

/// Run every seed of the experiment, honoring the POTT_THREADS cap, and
/// persist one artifact directory per run under the configured output root.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>, RunError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(crate::error::FormatError::Io)?;
    let config_json =
        serde_json::to_string_pretty(cfg).map_err(crate::error::FormatError::Json)?;
    fs::write(cfg.out_dir.join("config.json"), config_json)
        .map_err(crate::error::FormatError::Io)?;
    let stamp = Provenance::current();
    fs::write(
        cfg.out_dir.join("provenance.json"),
        serde_json::to_string_pretty(&stamp).map_err(crate::error::FormatError::Json)?,
    )
    .map_err(crate::error::FormatError::Io)?;

    let cap = sweep_threads();
    let mut records = Vec::with_capacity(cfg.seeds.len());
    for group in cfg.seeds.chunks(cap) {
        // each run owns its seed and output directory exclusively, so runs
        // in a group can proceed independently
        let runs: Vec<(u64, Result<SingleRun, RunError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = group
                .iter()
                .map(|&seed| (seed, scope.spawn(move || run_single(cfg, seed))))
                .collect();
            handles
                .into_iter()
                .map(|(seed, h)| (seed, h.join().expect("run thread panicked")))
                .collect()
        });
        for (seed, result) in runs {
            let run = result?;
            let dir = cfg
                .out_dir
                .join(format!("{}_{:04}", cfg.method.id(), seed));
            persist_run(&dir, &run)?;
            records.push(run.record);
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pott::{MapConfig, RegKind};
    use tempfile::tempdir;

    fn tiny_cfg(method: Method, out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            equation: Family::Advection,
            source: Subdomain::D1,
            target: Subdomain::D2,
            n_target: 50,
            method,
            pott: PottConfig {
                n11: 2,
                n12: 2,
                n2: 2,
                batch: 8,
                lambda: 0.0,
                reg: RegKind::None,
                map: MapConfig { hidden: 4, depth: 1 },
                potential_hidden: 8,
                potential_depth: 1,
                ..PottConfig::default()
            },
            pretrain: TrainOverrides {
                epochs: Some(2),
                batch: Some(10),
                ..TrainOverrides::default()
            },
            transfer: TrainOverrides {
                epochs: Some(2),
                batch: Some(10),
                ..TrainOverrides::default()
            },
            seeds: vec![0],
            out_dir: out.to_path_buf(),
            n_source: Some(20),
            source_custom: None,
            target_custom: None,
        }
    }

    #[test]
    fn thread_cap_parses_defensively() {
        assert_eq!(parse_threads(None), 1);
        assert_eq!(parse_threads(Some("4".into())), 4);
        assert_eq!(parse_threads(Some("0".into())), 1);
        assert_eq!(parse_threads(Some("lots".into())), 1);
    }

    #[test]
    fn finetune_runs_end_to_end_and_repeats_exactly() {
        let dir = tempdir().unwrap();
        let cfg_a = tiny_cfg(Method::Finetune, &dir.path().join("a"));
        let recs_a = run_experiment(&cfg_a).unwrap();
        assert_eq!(recs_a.len(), 1);
        let r = &recs_a[0];
        assert!(r.rmse.is_finite() && r.rmse >= 0.0);
        assert_eq!(r.pretrain_val.len(), 2);
        assert_eq!(r.transfer_loss.len(), 2);
        assert!(r.dual_objective.is_empty());

        // full determinism: a second invocation reproduces the error exactly
        let cfg_b = tiny_cfg(Method::Finetune, &dir.path().join("b"));
        let recs_b = run_experiment(&cfg_b).unwrap();
        assert_eq!(recs_a[0].rmse, recs_b[0].rmse);
        assert_eq!(recs_a[0].transfer_loss, recs_b[0].transfer_loss);

        // artifacts: record, checkpoint, panels
        let run_dir = dir.path().join("a").join("finetune_0000");
        assert!(run_dir.join("record.json").exists());
        let model = io::load_model(&run_dir.join("model.pott")).unwrap();
        assert_eq!(model.arch(), "deeponet");
        let panel = io::read_tensor(&run_dir.join("panel0_gt.pott")).unwrap();
        assert_eq!(panel.shape(), &[100, 50]);

        // report generation runs against the stored artifacts
        let csv = crate::experiment::report::csv_report(dir.path()).unwrap();
        assert!(csv.contains("finetune,50,"), "{}", csv);
        let svg = crate::experiment::report::svg_report(dir.path()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("prediction"));

        // append-only records: rerunning into the same directory refuses
        let err = match run_experiment(&cfg_a) {
            Err(e) => e,
            Ok(_) => panic!("overwrite was accepted"),
        };
        assert!(err.to_string().contains("append-only"), "{}", err);
    }

    #[test]
    fn pott_runs_persist_the_transported_split() {
        let dir = tempdir().unwrap();
        let cfg = tiny_cfg(Method::Pott, dir.path());
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs[0].dual_objective.len(), 2);
        let pushed = io::load_dataset(&dir.path().join("pott_0000").join("pushforward")).unwrap();
        assert_eq!(pushed.len(), 20);
        assert_eq!(pushed.split, "pushforward");
    }

    #[test]
    fn srctgt_pools_the_two_training_splits() {
        let dir = tempdir().unwrap();
        let mut cfg = tiny_cfg(Method::SrcTgt, dir.path());
        cfg.transfer.epochs = Some(1);
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].rmse.is_finite());
        assert!(recs[0].dual_objective.is_empty());
    }
}
