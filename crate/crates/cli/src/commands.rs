use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::warn;
use seqmon_core::critval::{convergence_check, reduce_exponent};
use seqmon_core::detector::{Decision, TrimRule};
use seqmon_core::format::sig17;
use seqmon_core::io::{event_to_ndjson, model_from_json, model_to_json};
use seqmon_core::regression::{fit_training_with, LagSpec};
use seqmon_core::simulation::{resolve_monitor, run_experiment, MonitorSpec, ResolvedMonitor};
use seqmon_core::veto::standard_combo;
use seqmon_core::{CriticalValueTable, ExperimentConfig, MonitoringModel, WienerSimSettings};

use crate::data::{read_dataset, CsvRows};
use crate::{
    CritvalArgs, FitArgs, MonitorArgs, SimArgs, SimulateArgs, UsageError, VetoCritvalArgs,
    CACHE_ENV, DEFAULT_CACHE, EXIT_REJECT,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("file not found: {}", path.display())))
    }
}

fn cache_path(explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE))
}

/// Cache file plus the number of entries it held when loaded.
struct Cache {
    path: PathBuf,
    table: CriticalValueTable,
    loaded: usize,
}

impl Cache {
    fn open(explicit: &Option<PathBuf>) -> Result<Self> {
        let path = cache_path(explicit);
        let table = CriticalValueTable::load(&path)
            .with_context(|| format!("reading critical-value cache {}", path.display()))?;
        let loaded = table.entries().len();
        Ok(Self {
            path,
            table,
            loaded,
        })
    }

    fn grew(&self) -> bool {
        self.table.entries().len() > self.loaded
    }

    fn save_if_grown(&self) -> Result<()> {
        if self.grew() {
            self.table
                .save(&self.path)
                .with_context(|| format!("writing critical-value cache {}", self.path.display()))?;
        }
        Ok(())
    }
}

fn sim_settings(a: &SimArgs) -> Result<WienerSimSettings> {
    let s = WienerSimSettings {
        n_steps: a.steps,
        n_reps: a.reps,
        seed: a.seed,
    };
    s.validate()?;
    Ok(s)
}

fn write_output(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json_array(xs: &[f64]) -> String {
    let body: Vec<String> = xs.iter().map(|x| sig17(*x)).collect();
    format!("[{}]", body.join(","))
}

pub fn fit(a: &FitArgs) -> Result<u8> {
    require_file(&a.train_csv)?;
    let data = read_dataset(&a.train_csv, !a.intercept_in_data)?;
    let model = fit_training_with(&data, &LagSpec::burn_in(a.lag_p), a.bandwidth)?;
    let mut text = model_to_json(&model.params);
    text.push('\n');
    write_output(&a.out, &text)?;
    Ok(0)
}

fn monitor_spec(a: &MonitorArgs) -> Result<MonitorSpec> {
    match (a.eta, &a.veto, &a.etas) {
        (Some(eta), None, None) => {
            if a.c_alpha.is_some() {
                return Err(usage("--c-alpha applies to veto monitors only"));
            }
            Ok(MonitorSpec::Single { eta })
        }
        (None, Some(name), None) => {
            if a.critical_value.is_some() {
                return Err(usage(
                    "--critical-value applies to single-weight monitors only",
                ));
            }
            Ok(MonitorSpec::Named {
                veto: name.clone(),
                c_alpha: a.c_alpha,
            })
        }
        (None, None, Some(etas)) => {
            if a.critical_value.is_some() {
                return Err(usage(
                    "--critical-value applies to single-weight monitors only",
                ));
            }
            Ok(MonitorSpec::Veto {
                etas: etas.clone(),
                c_alpha: a.c_alpha,
            })
        }
        _ => Err(usage("choose exactly one of --eta, --veto, --etas")),
    }
}

fn resolve(
    a: &MonitorArgs,
    spec: &MonitorSpec,
    settings: &WienerSimSettings,
) -> Result<ResolvedMonitor> {
    if let (MonitorSpec::Single { eta }, Some(c)) = (spec, a.critical_value) {
        seqmon_core::detector::classify_eta(*eta)?;
        return Ok(ResolvedMonitor::single(*eta, c));
    }
    let mut cache = Cache::open(&a.sim.critval_cache)?;
    let resolved = resolve_monitor(spec, a.alpha, settings, &mut cache.table)?;
    if cache.grew() {
        warn!(
            "critical values not cached; simulated with {} steps, {} paths, seed {}",
            settings.n_steps, settings.n_reps, settings.seed
        );
    }
    cache.save_if_grown()?;
    Ok(resolved)
}

pub fn monitor(a: &MonitorArgs) -> Result<u8> {
    require_file(&a.model)?;
    let from_stdin = a.data.is_none() || a.data.as_deref() == Some(Path::new("-"));
    if !from_stdin {
        require_file(a.data.as_ref().expect("data path"))?;
    }
    let spec = monitor_spec(a)?;
    let trim: TrimRule = a.trim.parse().map_err(|e| usage(format!("--trim: {e}")))?;
    let settings = sim_settings(&a.sim)?;

    let model_text =
        fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model: MonitoringModel = model_from_json(&model_text)?;
    let horizon = a.horizon.unwrap_or(model.m);

    let resolved = resolve(a, &spec, &settings)?;
    let mut mon = resolved.build(&model, trim, a.alpha, horizon)?;

    let input: Box<dyn io::Read> = if from_stdin {
        Box::new(io::stdin().lock())
    } else {
        Box::new(fs::File::open(a.data.as_ref().expect("data path"))?)
    };
    let rows = CsvRows::new(io::BufReader::new(input), !a.intercept_in_data)?;
    let expected = model.d - model.lag_p;
    if rows.regressor_count() != expected {
        return Err(seqmon_core::Error::DimensionMismatch {
            expected,
            got: rows.regressor_count(),
        }
        .into());
    }

    let mut events: Box<dyn Write> = match &a.events_out {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut lags = model.lag_state();
    let mut last = None;
    for row in rows {
        let (y, z) = row?;
        let x = lags.augment(&z);
        let ev = mon.step(y, &x)?;
        lags.push(y);
        writeln!(events, "{}", event_to_ndjson(&ev))?;
        let done = ev.decision != Decision::Continue;
        last = Some((ev.k, ev.decision));
        if done {
            break;
        }
    }
    events.flush()?;
    drop(events);

    let mut out = io::stdout().lock();
    match last {
        Some((k, Decision::Reject)) => {
            writeln!(out, "tau={k}")?;
            Ok(EXIT_REJECT)
        }
        Some((k, Decision::Terminate)) => {
            writeln!(out, "tau={k}")?;
            Ok(0)
        }
        Some((k, Decision::Continue)) => {
            writeln!(out, "steps={k}")?;
            Ok(0)
        }
        None => {
            writeln!(out, "steps=0")?;
            Ok(0)
        }
    }
}

pub fn critval(a: &CritvalArgs) -> Result<u8> {
    let settings = sim_settings(&a.sim)?;
    let e = reduce_exponent(a.eta)?;
    let mut cache = Cache::open(&a.sim.critval_cache)?;
    let q = cache.table.single_quantile(a.eta, a.alpha, &settings)?;
    cache.save_if_grown()?;
    let mut line = format!(
        "{{\"eta\":{},\"gamma_tilde\":{},\"alpha\":{},\"critical_value\":{},\"n_steps\":{},\"n_reps\":{},\"seed\":{},\"generator\":\"{}\"",
        sig17(a.eta),
        sig17(e.signed()),
        sig17(a.alpha),
        sig17(q),
        settings.n_steps,
        settings.n_reps,
        settings.seed,
        seqmon_core::critval::GENERATOR
    );
    if a.check_convergence {
        let r = convergence_check(e.signed(), a.alpha, &settings)?;
        if r.flagged {
            warn!(
                "quantile moved by {:.4}% when doubling the grid",
                100.0 * r.relative_difference
            );
        }
        line.push_str(&format!(
            ",\"convergence\":{{\"coarse\":{},\"fine\":{},\"relative_difference\":{},\"flagged\":{}}}",
            sig17(r.coarse.value),
            sig17(r.fine.value),
            sig17(r.relative_difference),
            r.flagged
        ));
    }
    line.push_str("}\n");
    write_output(&None, &line)?;
    Ok(0)
}

pub fn veto_critval(a: &VetoCritvalArgs) -> Result<u8> {
    let settings = sim_settings(&a.sim)?;
    let etas = match (&a.veto, &a.etas) {
        (Some(name), None) => {
            standard_combo(name)
                .ok_or_else(|| usage(format!("unknown veto set `{name}`")))?
                .etas
        }
        (None, Some(etas)) => etas.clone(),
        _ => return Err(usage("choose exactly one of --veto, --etas")),
    };
    let mut cache = Cache::open(&a.sim.critval_cache)?;
    let (criticals, c) = cache.table.veto_criticals(&etas, a.alpha, &settings)?;
    cache.save_if_grown()?;
    let line = format!(
        "{{\"etas\":{},\"criticals\":{},\"alpha\":{},\"c_alpha\":{},\"n_steps\":{},\"n_reps\":{},\"seed\":{}}}\n",
        json_array(&etas),
        json_array(&criticals),
        sig17(a.alpha),
        sig17(c),
        settings.n_steps,
        settings.n_reps,
        settings.seed
    );
    write_output(&None, &line)?;
    Ok(0)
}

pub fn simulate(a: &SimulateArgs) -> Result<u8> {
    require_file(&a.config)?;
    let text = fs::read_to_string(&a.config)?;
    let mut exp: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", a.config.display())))?;
    if let Some(seed) = a.seed {
        exp.seed = seed;
    }
    let mut cache = Cache::open(&a.critval_cache)?;
    let out = run_experiment(&exp, &mut cache.table)?;
    cache.save_if_grown()?;

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut written = Vec::new();
    for (name, csv) in &out.tables {
        let p = a.out_dir.join(name);
        fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    let p = a.out_dir.join("manifest.json");
    fs::write(&p, format!("{}\n", out.manifest))?;
    written.push(p);
    let mut stdout = io::stdout().lock();
    for p in written {
        writeln!(stdout, "{}", p.display())?;
    }
    Ok(0)
}
