use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use meshcrash::groundtruth::{lhs_sample, simulate};
use meshcrash::io::{load_checkpoint, read_dataset, save_checkpoint, write_dataset};
use meshcrash::metrics::rmse_series;
use meshcrash::rollout::{drift_rollout, rollout_sample};
use meshcrash::split::make_split;
use meshcrash::train::train;
use meshcrash::{build_contacts, ContactParams, Error, EvalReport, Sample, SplitReport, Surrogate};
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::svg::{line_chart, scatter, Series};
use crate::{
    input, sibling, write_file, BenchArgs, Cli, Command, ContactsArgs, EvaluateArgs, GenerateArgs, ReportArgs,
    RolloutArgs, Selection, SplitArgs, TrainArgs,
};

/// Runs one parsed invocation and returns its manifest.
pub fn run(cli: Cli) -> Result<RunManifest> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let (mut mb, primary) = match &cli.command {
        Command::Generate(a) => generate(a, &cfg)?,
        Command::Split(a) => split(a, &cfg)?,
        Command::Train(a) => train_cmd(a, &cfg)?,
        Command::Rollout(a) => rollout_cmd(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Report(a) => report(a)?,
        Command::Bench(a) => bench(a, &cfg)?,
        Command::Contacts(a) => contacts(a, &cfg)?,
    };
    if let Some(c) = &cli.config {
        mb.input(c);
    }
    let path = cli.manifest.unwrap_or(primary);
    mb.write(&path)
}

fn load_data(path: &Path) -> Result<Vec<Sample>> {
    Ok(read_dataset(input(path)?)?)
}

fn load_model(path: &Path) -> Result<Surrogate> {
    Ok(load_checkpoint(input(path)?)?)
}

fn load_split(path: &Path) -> Result<SplitReport> {
    let text = fs::read_to_string(input(path)?).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn select(samples: Vec<Sample>, sel: &Selection, mb: &mut ManifestBuilder) -> Result<Vec<Sample>> {
    let keep: Option<Vec<u64>> = if !sel.ids.is_empty() {
        Some(sel.ids.clone())
    } else if let (Some(path), Some(name)) = (&sel.split, sel.subset) {
        mb.input(path);
        Some(load_split(path)?.ids(name))
    } else {
        None
    };
    let Some(keep) = keep else {
        return Ok(samples);
    };
    let mut by_id: BTreeMap<u64, Sample> = samples.into_iter().map(|s| (s.id, s)).collect();
    keep.iter()
        .map(|id| {
            by_id
                .remove(id)
                .ok_or_else(|| CliError::Usage(format!("sample {id} not in dataset")))
        })
        .collect()
}

fn generate(a: &GenerateArgs, cfg: &RunConfig) -> Result<(ManifestBuilder, PathBuf)> {
    let mut oracle = cfg.oracle.clone();
    if let Some(h) = a.horizon {
        oracle.horizon = h;
    }
    oracle.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let space = cfg.design_space()?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let designs = lhs_sample(a.n, &space, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let samples = designs
        .par_iter()
        .map(|d| {
            simulate(d, &oracle).map_err(|e| Error::Sample {
                sample: d.id,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (bin, side) = write_dataset(&a.out, &samples)?;
    eprintln!(
        "generated {} samples ({} nodes, {} frames) -> {}",
        samples.len(),
        samples[0].graph.node_count(),
        oracle.horizon + 1,
        bin.display()
    );
    let mut mb = ManifestBuilder::new(
        "generate",
        &json!({ "oracle": oracle, "design": space, "n": a.n, "seed": seed }),
    )?;
    mb.seed(seed).output(&bin).output(&side).details(json!({
        "samples": designs.iter().map(|d| {
            let vars: BTreeMap<&str, f64> = d.vars.iter().map(|v| (v.bounds.name.as_str(), v.value)).collect();
            json!({ "id": d.id, "design": vars })
        }).collect::<Vec<_>>()
    }));
    Ok((mb, sibling(&a.out, "manifest.json")))
}

fn split(a: &SplitArgs, cfg: &RunConfig) -> Result<(ManifestBuilder, PathBuf)> {
    let samples = load_data(&a.data)?;
    let designs = samples
        .iter()
        .map(|s| {
            s.trajectory
                .design
                .clone()
                .ok_or_else(|| CliError::Usage(format!("sample {} carries no design vector", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sc = cfg.split.clone();
    if let Some(t) = a.ks_threshold {
        sc.ks_threshold = t;
    }
    if let Some(r) = &a.ratios {
        sc.ratios = [r[0], r[1], r[2]];
    }
    if let Some(m) = a.max_attempts {
        sc.max_attempts = m;
    }
    if let Some(s) = a.seed.or(cfg.seed) {
        sc.seed = s;
    }
    let report = match make_split(&designs, &sc) {
        Ok(r) => r,
        Err(Error::SplitGate { best, .. }) => {
            let rejected = sibling(&a.out, "rejected.json");
            write_file(&rejected, serde_json::to_string_pretty(&best)? + "\n")?;
            return Err(Error::SplitGate {
                attempts: best.attempts,
                best_ks: best.max_ks,
                threshold: best.ks_threshold,
                best,
            }
            .into());
        }
        Err(e @ Error::InvalidArgument(_)) => return Err(CliError::Usage(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    write_file(&a.out, serde_json::to_string_pretty(&report)? + "\n")?;
    let diag = a.out.with_extension("csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(&diag, buf)?;
    let assign = a.out.with_extension("assignment.csv");
    let mut text = String::from("id,split\n");
    for x in &report.assignment {
        let _ = writeln!(text, "{},{}", x.id, x.split);
    }
    write_file(&assign, text)?;
    eprintln!(
        "split {}/{}/{} max KS {:.3} (gate {}) after {} attempt(s)",
        report.ids(meshcrash::SplitName::Train).len(),
        report.ids(meshcrash::SplitName::Val).len(),
        report.ids(meshcrash::SplitName::Test).len(),
        report.max_ks,
        report.ks_threshold,
        report.attempts
    );
    let mut mb = ManifestBuilder::new("split", &sc)?;
    mb.seed(sc.seed)
        .input(&a.data)
        .output(&a.out)
        .output(&diag)
        .output(&assign);
    Ok((mb, sibling(&a.out, "manifest.json")))
}

fn train_cmd(a: &TrainArgs, cfg: &RunConfig) -> Result<(ManifestBuilder, PathBuf)> {
    let family = a
        .family
        .or(cfg.model.family)
        .ok_or_else(|| CliError::Usage("no model family given (--family or [model] family)".into()))?;
    let samples = load_data(&a.data)?;
    let report = load_split(&a.split)?;
    let dim = samples[0].graph.dim();
    let mut tc = cfg.train_config(cfg.model_config(family, dim, a.contact.section()));
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(lr) = a.lr {
        tc.lr = lr;
        tc.lr_floor = lr * 0.01;
    }
    if let Some(p) = a.patience {
        tc.patience = p;
    }
    if let Some(s) = a.seed {
        tc.seed = s;
    }
    tc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let part = |n: meshcrash::SplitName| -> Vec<Sample> {
        samples
            .iter()
            .filter(|s| report.split_of(s.id) == Some(n))
            .cloned()
            .collect()
    };
    let (tr, va) = (part(meshcrash::SplitName::Train), part(meshcrash::SplitName::Val));
    if tr.is_empty() || va.is_empty() {
        return Err(CliError::Usage(
            "split leaves no training or validation samples for this dataset".into(),
        ));
    }
    let quiet = a.quiet;
    let out = train(&tc, &tr, &va, |r, _| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  train {:.5}  val {:.4} mm^2  lr {:.2e}  |g| {:.3}{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.lr,
                r.grad_norm,
                if r.improved { "  *" } else { "" }
            );
        }
        Ok(())
    })?;
    save_checkpoint(&a.out, &out.surrogate)?;
    let history = a.history.clone().unwrap_or_else(|| a.out.with_extension("history.csv"));
    let mut buf = Vec::new();
    out.history.write_csv(&mut buf)?;
    write_file(&history, buf)?;
    let echo = a.out.with_extension("config.json");
    write_file(&echo, serde_json::to_string_pretty(&tc)? + "\n")?;
    eprintln!(
        "{family}: best val {:.4} mm^2 at epoch {} (initial {:.4}){}",
        out.history.best_val_loss,
        out.history.best_epoch,
        out.history.initial_val_loss,
        if out.history.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    let mut mb = ManifestBuilder::new("train", &tc)?;
    mb.seed(tc.seed)
        .input(&a.data)
        .input(&a.split)
        .output(&a.out)
        .output(&history)
        .output(&echo)
        .details(json!({
            "family": family,
            "parameters": out.surrogate.params.num_scalars(),
            "best_epoch": out.history.best_epoch,
            "best_val_loss": out.history.best_val_loss,
            "stopped_early": out.history.stopped_early,
            "epoch_seconds": out.history.records.iter().map(|r| r.seconds).collect::<Vec<_>>(),
        }));
    Ok((mb, sibling(&a.out, "manifest.json")))
}

fn rollout_cmd(a: &RolloutArgs) -> Result<(ManifestBuilder, PathBuf)> {
    let sur = load_model(&a.model)?;
    let mut mb = ManifestBuilder::new("rollout", &sur.model.config)?;
    mb.input(&a.model).input(&a.data);
    let samples = select(load_data(&a.data)?, &a.select, &mut mb)?;
    let results = samples
        .par_iter()
        .map(|s| {
            rollout_sample(&sur, s).map_err(|e| Error::Sample {
                sample: s.id,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from("sample,step,rmse,contacts\n");
    let mut preds = Vec::with_capacity(samples.len());
    for (s, r) in samples.iter().zip(&results) {
        let series = rmse_series(&r.predicted, &s.trajectory)?;
        for (t, v) in series.per_step.iter().enumerate() {
            let c = if t == 0 { 0 } else { r.per_step_contact_counts[t - 1] };
            let _ = writeln!(csv, "{},{},{},{}", s.id, t, v, c);
        }
        eprintln!(
            "sample {:>4}: RMSE_mu {:.3} mm  final {:.3} mm  {:.3}s",
            s.id, series.mean, series.final_step, r.wall_time
        );
        preds.push(Sample {
            id: s.id,
            graph: s.graph.clone(),
            trajectory: r.predicted.clone(),
        });
    }
    let (bin, side) = write_dataset(&a.out, &preds)?;
    let rmse = a.out.with_extension("rmse.csv");
    write_file(&rmse, csv)?;
    mb.output(&bin).output(&side).output(&rmse);
    mb.details(json!({ "samples": samples.iter().map(|s| s.id).collect::<Vec<_>>() }));
    Ok((mb, sibling(&a.out, "manifest.json")))
}

fn evaluate(a: &EvaluateArgs) -> Result<(ManifestBuilder, PathBuf)> {
    let mut mb = ManifestBuilder::new("evaluate", &json!({ "drift": a.drift }))?;
    mb.input(&a.reference);
    let refs = select(load_data(&a.reference)?, &a.select, &mut mb)?;
    let preds: Vec<(u64, meshcrash::Trajectory)> = if a.drift {
        refs.par_iter()
            .map(|s| Ok((s.id, drift_rollout(s)?)))
            .collect::<Result<Vec<_>, Error>>()?
    } else {
        let path = a.pred.as_ref().expect("clap enforces --pred without --drift");
        mb.input(path);
        let by_id: BTreeMap<u64, Sample> = load_data(path)?.into_iter().map(|s| (s.id, s)).collect();
        refs.iter()
            .map(|r| {
                by_id
                    .get(&r.id)
                    .map(|p| (r.id, p.trajectory.clone()))
                    .ok_or_else(|| CliError::Usage(format!("prediction for sample {} missing", r.id)))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let report = EvalReport::from_pairs(refs.iter().zip(&preds).map(|(r, (id, p))| (*id, p, &r.trajectory)))?;
    let json_path = a.out_dir.join("eval.json");
    write_file(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    let steps = a.out_dir.join("eval_steps.csv");
    let summary = a.out_dir.join("eval_summary.csv");
    let mut buf = Vec::new();
    report.write_steps_csv(&mut buf)?;
    write_file(&steps, buf)?;
    let mut buf = Vec::new();
    report.write_summary_csv(&mut buf)?;
    write_file(&summary, buf)?;
    println!(
        "samples {}  RMSE_mu {:.4} mm  RMSE_final {:.4} ± {:.4} mm  Rel.RMSE {:.4}  e_surv_final {:+.4} ± {:.4} mm",
        report.samples.len(),
        report.rmse_mu,
        report.rmse_final_mean,
        report.rmse_final_std,
        report.rel_rmse,
        report.survival_final_mean,
        report.survival_final_std
    );
    mb.output(&json_path).output(&steps).output(&summary);
    Ok((mb, a.out_dir.join("evaluate.manifest.json")))
}

fn report(a: &ReportArgs) -> Result<(ManifestBuilder, PathBuf)> {
    if !a.label.is_empty() && a.label.len() != a.eval.len() {
        return Err(CliError::Usage(format!(
            "{} labels for {} --eval files",
            a.label.len(),
            a.eval.len()
        )));
    }
    let mut mb = ManifestBuilder::new("report", &json!({ "labels": a.label }))?;
    let mut runs = Vec::new();
    for (k, path) in a.eval.iter().enumerate() {
        let text = fs::read_to_string(input(path)?).map_err(|e| CliError::io(path, e))?;
        let rep: EvalReport = serde_json::from_str(&text)?;
        let label = a.label.get(k).cloned().unwrap_or_else(|| {
            path.parent()
                .and_then(|p| p.file_name())
                .map_or_else(|| format!("run {k}"), |n| n.to_string_lossy().into_owned())
        });
        mb.input(path);
        runs.push((label, rep));
    }
    let mean_over = |rep: &EvalReport, f: &dyn Fn(&meshcrash::metrics::SampleEval, usize) -> f64| -> Vec<(f64, f64)> {
        let steps = rep.samples[0].rmse.per_step.len();
        (0..steps)
            .map(|t| {
                let m = rep.samples.iter().map(|s| f(s, t)).sum::<f64>() / rep.samples.len() as f64;
                (t as f64, m)
            })
            .collect()
    };
    let rmse: Vec<Series> = runs
        .iter()
        .map(|(l, r)| Series::new(l.clone(), mean_over(r, &|s, t| s.rmse.per_step[t])))
        .collect();
    let mut surv: Vec<Series> = runs
        .iter()
        .map(|(l, r)| Series::new(l.clone(), mean_over(r, &|s, t| s.survival.predicted[t])))
        .collect();
    surv.push(Series::new("reference", mean_over(&runs[0].1, &|s, t| s.survival.reference[t])).dashed());
    let points: Vec<Series> = runs
        .iter()
        .map(|(l, r)| {
            Series::new(
                l.clone(),
                r.samples
                    .iter()
                    .map(|s| {
                        (
                            *s.survival.reference.last().unwrap(),
                            *s.survival.predicted.last().unwrap(),
                        )
                    })
                    .collect(),
            )
        })
        .collect();
    let files = [
        (
            "rmse.svg",
            line_chart("Mean nodal displacement RMSE", "step", "RMSE_t (mm)", &rmse),
        ),
        (
            "survival.svg",
            line_chart("Mean survival distance", "step", "d_t (mm)", &surv),
        ),
        (
            "survival_scatter.svg",
            scatter(
                "Final survival distance",
                "reference d_T (mm)",
                "predicted d_T (mm)",
                &points,
            ),
        ),
    ];
    for (name, doc) in files {
        let p = a.out_dir.join(name);
        write_file(&p, doc)?;
        mb.output(&p);
    }
    eprintln!("wrote {} charts to {}", 3, a.out_dir.display());
    Ok((mb, a.out_dir.join("report.manifest.json")))
}

fn bench(a: &BenchArgs, cfg: &RunConfig) -> Result<(ManifestBuilder, PathBuf)> {
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let sur = load_model(&a.model)?;
    let mut mb = ManifestBuilder::new(
        "bench",
        &json!({ "model": sur.model.config, "oracle": cfg.oracle, "repeats": a.repeats }),
    )?;
    mb.input(&a.model).input(&a.data);
    let samples = select(load_data(&a.data)?, &a.select, &mut mb)?;
    let mut csv = String::from("sample,nodes,steps,surrogate_s,oracle_s,speedup\n");
    println!(
        "{:>6} {:>6} {:>6} {:>13} {:>10} {:>8}",
        "sample", "nodes", "steps", "surrogate_s", "oracle_s", "speedup"
    );
    let mut total = (0.0, 0.0);
    for s in &samples {
        let mut best = f64::INFINITY;
        for _ in 0..a.repeats {
            best = best.min(rollout_sample(&sur, s)?.wall_time);
        }
        let oracle_s = match (&s.trajectory.design, a.no_oracle) {
            (Some(d), false) => {
                let mut oc = cfg.oracle.clone();
                oc.horizon = s.trajectory.horizon();
                let t = Instant::now();
                simulate(d, &oc)?;
                Some(t.elapsed().as_secs_f64())
            }
            _ => None,
        };
        total.0 += best;
        total.1 += oracle_s.unwrap_or(0.0);
        let fmt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |v| format!("{v:.p$}"));
        let speedup = oracle_s.map(|o| o / best);
        println!(
            "{:>6} {:>6} {:>6} {:>13.4} {:>10} {:>8}",
            s.id,
            s.graph.node_count(),
            s.trajectory.horizon(),
            best,
            fmt(oracle_s, 4),
            fmt(speedup, 2)
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.id,
            s.graph.node_count(),
            s.trajectory.horizon(),
            best,
            oracle_s.map_or(String::new(), |v| v.to_string()),
            speedup.map_or(String::new(), |v| v.to_string())
        );
    }
    let n = samples.len().max(1) as f64;
    println!("mean surrogate time per design {:.4} s", total.0 / n);
    if !a.no_oracle {
        println!("mean oracle time per design {:.4} s", total.1 / n);
    }
    let primary = match &a.out {
        Some(p) => {
            write_file(p, csv)?;
            mb.output(p);
            sibling(p, "manifest.json")
        }
        None => sibling(&a.model, "bench.manifest.json"),
    };
    Ok((mb, primary))
}

fn contacts(a: &ContactsArgs, cfg: &RunConfig) -> Result<(ManifestBuilder, PathBuf)> {
    let samples = load_data(&a.data)?;
    let s = samples
        .iter()
        .find(|s| s.id == a.sample)
        .ok_or_else(|| CliError::Usage(format!("sample {} not in dataset", a.sample)))?;
    if a.step > s.trajectory.horizon() {
        return Err(CliError::Usage(format!(
            "step {} beyond horizon {}",
            a.step,
            s.trajectory.horizon()
        )));
    }
    let mut params = ContactParams {
        radius: Some(15.0),
        k: 8,
        ..ContactParams::default()
    };
    let mut positions = s.trajectory.states[a.step].positions.clone();
    let mut mb = ManifestBuilder::new("contacts", &json!({ "sample": a.sample, "step": a.step }))?;
    mb.input(&a.data);
    if let Some(path) = &a.model {
        let sur = load_model(path)?;
        mb.input(path);
        params = sur
            .model
            .config
            .contact
            .ok_or_else(|| CliError::Usage(format!("{} has no contact block", sur.model.config.family)))?;
        if a.predicted {
            positions = rollout_sample(&sur, s)?.predicted.states[a.step].positions.clone();
        }
    }
    cfg.contact.merged(a.contact.section()).apply(&mut params);
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let set = build_contacts(&positions, &s.graph, &params, a.step)?;
    let mut buf = Vec::new();
    set.write_csv(&mut buf)?;
    write_file(&a.out, buf)?;
    eprintln!("{} contact pairs at step {} of sample {}", set.len(), a.step, a.sample);
    mb.output(&a.out)
        .details(json!({ "params": params, "pairs": set.len() }));
    Ok((mb, sibling(&a.out, "manifest.json")))
}
