use crate::{CellArgs, Command, OracleArgs, SpaceArgs};
use anyhow::{bail, Context, Result};
use densewire::graph::{export_dot, scale_to_budget, single_cell_template, Preset};
use densewire::iso::augment;
use densewire::mcmc::{chain_diagnostics, ChainSpec, StateSpace};
use densewire::pipeline::{
    append_records, build_dataset, enumerate_classes, enumerate_space, load_records, make_oracle,
    sample_random, write_records, Budget, ExternalSettings, OracleSpec,
};
use densewire::predictor::{predict, ranking_metrics, train, TrainConfig};
use densewire::rng::derive_seed;
use densewire::search::{run_search, score_all, Oracle, SearchConfig, Strategy};
use densewire::{arch_stats, ArchRecord, MetaGraph, PredictorModel, RecordSource, StageConfig};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

/// Stage used for single-cell spaces.
const SINGLE_STAGE: StageConfig = StageConfig {
    base_channels: 16,
    repeats: 1,
    height: 8,
    width: 8,
};

fn read_meta(path: &Path) -> Result<MetaGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MetaGraph::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn space(args: &SpaceArgs) -> Result<MetaGraph> {
    if let Some(n) = args.num_vertices {
        return Ok(single_cell_template(n, SINGLE_STAGE)?);
    }
    if let Some(path) = &args.template {
        return Ok(read_meta(path)?.empty_template());
    }
    let preset: Preset = args.preset.as_deref().unwrap_or("imagenet").parse()?;
    Ok(preset.template())
}

fn oracle(args: &OracleArgs) -> Result<Box<dyn Oracle>> {
    let spec: OracleSpec = args.oracle.parse().map_err(anyhow::Error::msg)?;
    if !(args.data_fraction > 0.0 && args.data_fraction <= 1.0) || args.eval_epochs == 0 {
        bail!("evaluation budget needs epochs >= 1 and 0 < data fraction <= 1");
    }
    let external = ExternalSettings {
        budget: Budget {
            epochs: args.eval_epochs,
            data_fraction: args.data_fraction,
        },
        timeout: Duration::from_secs(args.oracle_timeout),
        workers: args.oracle_workers,
    };
    Ok(make_oracle(&spec, external)?)
}

fn cell_space(args: &CellArgs) -> Result<MetaGraph> {
    let template = match &args.template {
        Some(path) => read_meta(path)?.empty_template(),
        None => single_cell_template(args.num_vertices, SINGLE_STAGE)?,
    };
    if template.num_stages() != 1 {
        bail!("exhaustive commands need a single-cell template");
    }
    Ok(template)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Sample {
            space: s,
            oracle: o,
            n,
            seed,
            out,
            append,
        } => {
            let template = space(&s)?;
            let oracle = oracle(&o)?;
            let metas = sample_random(&template, n, seed)?;
            let scores = score_all(oracle.as_ref(), &metas)?;
            let records: Vec<ArchRecord> = metas
                .into_iter()
                .zip(scores)
                .map(|(m, y)| ArchRecord::measured(m, y, seed))
                .collect();
            if append {
                append_records(&out, &records)?;
            } else {
                write_records(&out, &records)?;
            }
            println!("wrote {} records to {}", records.len(), out.display());
        }

        Command::Augment {
            input,
            out,
            factor,
            seed,
        } => {
            let records = load_records(&input)?;
            let mut all = Vec::with_capacity(records.len() * (factor + 1));
            for (i, r) in records.iter().enumerate() {
                all.push(r.clone());
                if r.source == RecordSource::Measured {
                    all.extend(augment(r, factor, derive_seed(&[seed, i as u64])));
                }
            }
            write_records(&out, &all)?;
            println!(
                "{} records in, {} out ({} augmented)",
                records.len(),
                all.len(),
                all.len() - records.len()
            );
        }

        Command::TrainPredictor {
            data,
            out,
            seed,
            factor,
            epochs,
            batch_size,
            lr,
            weight_decay,
            hidden,
        } => {
            let records: Vec<ArchRecord> = load_records(&data)?
                .into_iter()
                .filter(|r| r.source == RecordSource::Measured)
                .collect();
            if records.is_empty() {
                bail!("{} holds no measured records", data.display());
            }
            let built = build_dataset(&records, factor, seed)?;
            let mut cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = lr {
                cfg.learning_rate = v;
            }
            if let Some(v) = weight_decay {
                cfg.weight_decay = v;
            }
            if let Some(v) = hidden {
                cfg.hidden = v;
            }
            let model = train(&built.train, &cfg)?;
            model.save(&out)?;
            println!(
                "trained on {} samples ({} measured), {} held out",
                built.train.len(),
                built.split.train.len(),
                built.test.len()
            );
            let m = ranking_metrics(&model, &built.test).context("held-out evaluation")?;
            println!(
                "held-out pearson={} kendall_tau={} mse={}",
                m.pearson, m.kendall_tau, m.mse
            );
        }

        Command::Predict {
            model,
            input,
            records,
        } => {
            let model = PredictorModel::load(&model)?;
            for path in &input {
                let meta = read_meta(path)?;
                println!("{}", predict(&model, &meta)?);
            }
            if let Some(path) = records {
                println!("canon,perf,prediction");
                for r in load_records(&path)? {
                    println!("{},{},{}", r.canon, r.perf, predict(&model, &r.meta)?);
                }
            }
        }

        Command::Search {
            space: s,
            oracle: o,
            strategy,
            rounds,
            population,
            initial_population,
            t0,
            seed,
            trace,
            best_out,
        } => {
            let template = space(&s)?;
            let oracle = oracle(&o)?;
            let strategy: Strategy = strategy.parse().map_err(anyhow::Error::msg)?;
            let cfg = SearchConfig {
                strategy,
                rounds,
                population,
                initial_population,
                initial_temperature: t0,
                seed,
            };
            let outcome = run_search(&cfg, oracle.as_ref(), &template)?;
            write_or_print(trace.as_deref(), &outcome.trace.to_csv())?;
            if let Some(path) = best_out {
                fs::write(&path, outcome.best.to_json())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            eprintln!(
                "best score {} after {} evaluations",
                outcome.best_score, outcome.evaluations
            );
        }

        Command::Enumerate { cell, out, classes } => {
            let template = cell_space(&cell)?;
            let all = enumerate_space(&template)?;
            let reps = enumerate_classes(&template)?;
            println!("valid={} classes={}", all.len(), reps.len());
            if let Some(path) = out {
                let metas = if classes { &reps } else { &all };
                let mut text = String::new();
                for m in metas {
                    text.push_str(&m.to_json());
                    text.push('\n');
                }
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
        }

        Command::VerifyMcmc {
            cell,
            oracle: o,
            temperature,
            steps,
            burn_in,
            seed,
            out,
        } => {
            let template = cell_space(&cell)?;
            let oracle = oracle(&o)?;
            let space = StateSpace::enumerate(&template, oracle.as_ref())?;
            let spec = ChainSpec {
                temperature,
                steps,
                burn_in,
                seed,
            };
            let report = chain_diagnostics(&space, &spec)?;
            write_or_print(out.as_deref(), &report.to_csv(&space))?;
            let d = &report.diagnostics;
            eprintln!(
                "states={} tv={} balance_residual={} detailed_balance_residual={} spectral_gap={} acceptance={}",
                d.states,
                d.tv_distance,
                d.balance_residual,
                d.detailed_balance_residual,
                d.spectral_gap,
                d.acceptance_rate
            );
        }

        Command::ExportDot { input, out } => {
            let meta = read_meta(&input)?;
            write_or_print(out.as_deref(), &export_dot(&meta)?)?;
        }

        Command::Stats {
            store: Some(path), ..
        } => store_summary(&path)?,

        Command::Stats {
            input: Some(input),
            budget,
            ..
        } => {
            let meta = read_meta(&input)?;
            let stats = arch_stats(&meta)?;
            println!(
                "macs={} params={} active_vertices={:?}",
                stats.macs, stats.params, stats.active_vertices
            );
            if let Some(target) = budget {
                let scaled = scale_to_budget(&meta, target)?;
                let widths: Vec<String> = scaled
                    .meta
                    .stages()
                    .iter()
                    .map(|s| s.base_channels.to_string())
                    .collect();
                println!(
                    "multiplier={} widths={} macs={} params={}",
                    scaled.multiplier,
                    widths.join(","),
                    scaled.stats.macs,
                    scaled.stats.params
                );
            }
        }
        Command::Stats { .. } => bail!("stats needs --store or --in"),
    }
    Ok(())
}

fn store_summary(path: &Path) -> Result<()> {
    let records = load_records(path)?;
    let count = |src| records.iter().filter(|r| r.source == src).count();
    let classes: std::collections::HashSet<&str> =
        records.iter().map(|r| r.canon.as_str()).collect();
    println!(
        "records={} measured={} augmented={} predicted={} classes={}",
        records.len(),
        count(RecordSource::Measured),
        count(RecordSource::Augmented),
        count(RecordSource::Predicted),
        classes.len()
    );
    if !records.is_empty() {
        let perf: Vec<f64> = records.iter().map(|r| r.perf).collect();
        let min = perf.iter().copied().fold(f64::INFINITY, f64::min);
        let max = perf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = perf.iter().sum::<f64>() / perf.len() as f64;
        println!("perf min={min} mean={mean} max={max}");
    }
    Ok(())
}
