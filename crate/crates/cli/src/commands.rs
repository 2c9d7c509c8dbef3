use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chimera_core::hj::{pool_latest, IndividualForecast, JointDensity2D, TailPolicy, Target, STANDARD_LEVELS};
use chimera_core::inference::{ModelKind, PosteriorSpec, SamplerConfig};
use chimera_core::io::{
    load_hj, load_samples, load_truth, load_weights, read_hub_forecast, read_scores, save_samples,
    write_extension_report, write_hj, write_hub_forecast, write_json, write_marginals, write_rwis_cells, write_scores,
    write_truth, HubForecast, HubTarget, RunConfig,
};
use chimera_core::model::ModelParams;
use chimera_core::pipeline::{self, hj_joints, job_seed, score_hub, truth_peaks};
use chimera_core::scoring::{build_report, peak_units, regression_rows, stratify_scores, ScoreRecord, ScoreTarget};
use chimera_core::synth::{random_season, synthetic_hj, CrowdSkill};
use chimera_core::ts::{EpiWeek, HospSeries};
use chimera_core::Error;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::Manifest;
use crate::{CliError, Command, EnsembleArgs, ExtendArgs, FitArgs, ForecastArgs, ReportArgs, ScoreArgs, SimulateArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Extend(a) => extend(a),
        Command::Fit(a) => fit(a),
        Command::Forecast(a) => forecast(a),
        Command::Score(a) => score(a),
        Command::Report(a) => report(a),
    }
}

/// Fails on the first missing input before any work starts.
fn require<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::FileNotFound(p.display().to_string()).into());
        }
    }
    Ok(())
}

fn default_config() -> RunConfig {
    let start = EpiWeek::new(2023, 40).expect("valid epiweek");
    RunConfig {
        locations: vec!["SIM".into()],
        in_sample_locations: vec!["SIM".into()],
        season_start: start,
        season_end: start.add_weeks(29),
        populations: BTreeMap::from([("SIM".to_string(), 5000.0)]),
        seed: 1,
        model: Default::default(),
        sampler: Default::default(),
        optimizer: Default::default(),
    }
}

fn select_locations(cfg: &RunConfig, requested: &Option<Vec<String>>) -> Result<Vec<String>> {
    match requested {
        None => Ok(cfg.locations.clone()),
        Some(locs) => {
            if let Some(l) = locs.iter().find(|l| !cfg.locations.contains(l)) {
                return Err(CliError::Usage(format!("location {l} is not in the configuration")));
            }
            Ok(locs.clone())
        }
    }
}

fn hub_target(t: Target) -> HubTarget {
    match t {
        Target::PeakWeek => HubTarget::PeakWeek,
        Target::PeakIntensity => HubTarget::PeakIntensity,
    }
}

fn joint_rows(location: &str, joint: &JointDensity2D, reference_date: chrono::NaiveDate) -> Result<Vec<HubForecast>> {
    let mut out = Vec::with_capacity(2);
    for (target, density) in [
        (Target::PeakWeek, &joint.week),
        (Target::PeakIntensity, &joint.intensity),
    ] {
        out.push(HubForecast {
            reference_date,
            target: hub_target(target),
            horizon: None,
            location: location.to_string(),
            quantiles: density.to_quantiles(&STANDARD_LEVELS)?,
        });
    }
    Ok(out)
}

/// Truth from the season start through `asof`.
fn observed(
    truth: &BTreeMap<String, HospSeries>,
    location: &str,
    cfg: &RunConfig,
    asof: EpiWeek,
) -> Result<HospSeries> {
    let series = truth
        .get(location)
        .ok_or_else(|| Error::Validation(format!("no truth for {location}")))?;
    if asof < cfg.season_start || asof > cfg.season_end {
        return Err(CliError::Usage(format!(
            "as-of week {asof} is outside the season {}..{}",
            cfg.season_start, cfg.season_end
        )));
    }
    Ok(series.window(cfg.season_start, asof)?)
}

fn samples_path(out: &Path, model: ModelKind, location: &str, asof: EpiWeek) -> PathBuf {
    out.join("samples")
        .join(format!("{}_{location}_{asof}.tsv", model.as_str()))
}

#[derive(Serialize)]
struct SimulatedLocation {
    params: ModelParams,
    /// Weekly mean hospitalizations.
    latent: Vec<f64>,
    peak_week: usize,
    peak_intensity: f64,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    if let Some(c) = &a.config {
        require([c.as_path()])?;
    }
    let mut manifest = Manifest::new("simulate");
    let cfg = match &a.config {
        Some(path) => {
            manifest.config(path)?;
            RunConfig::load(path)?
        }
        None => {
            let cfg = default_config();
            manifest.config_sha256 = Some(crate::manifest::sha256_hex(cfg.to_toml()?.as_bytes()));
            cfg
        }
    };
    let seed = a.seed.unwrap_or(cfg.seed);
    manifest.seeds.insert("seed".into(), seed);
    manifest.arg("no_hj", a.no_hj);
    manifest.arg("forecasters", a.forecasters);

    let mut series = Vec::new();
    let mut truth = BTreeMap::new();
    let mut params = BTreeMap::new();
    let mut crowd: Vec<IndividualForecast> = Vec::new();
    for loc in &cfg.locations {
        let season = random_season(loc, &cfg.model_config(loc)?, job_seed(seed, loc, cfg.season_start))?;
        let (peak_week, peak_intensity) = season.peak();
        info!("{loc}: latent peak in week {peak_week} at {peak_intensity:.1}");
        truth.insert(loc.clone(), season.observed.clone());
        params.insert(
            loc.clone(),
            SimulatedLocation {
                params: season.params.clone(),
                latent: season.latent.clone(),
                peak_week,
                peak_intensity,
            },
        );
        series.push(season.observed);
    }
    if !a.no_hj {
        let peaks = truth_peaks(&truth)?;
        let asked = if cfg.in_sample_locations.is_empty() {
            &cfg.locations
        } else {
            &cfg.in_sample_locations
        };
        for loc in asked {
            let (week, count) = peaks[loc];
            crowd.extend(synthetic_hj(
                loc,
                cfg.season_start.weeks_until(week) as f64 + 1.0,
                count,
                a.forecasters,
                cfg.season_start.end_date(),
                CrowdSkill::default(),
                job_seed(seed ^ 0x68_6a, loc, cfg.season_start),
            )?);
        }
    }

    let truth_path = a.out.join("truth.csv");
    write_truth(&series, &truth_path)?;
    manifest.output(&a.out, &truth_path)?;
    let params_path = a.out.join("params.json");
    write_json(&params, &params_path)?;
    manifest.output(&a.out, &params_path)?;
    if !a.no_hj {
        let hj_path = a.out.join("hj.json");
        write_hj(&crowd, &hj_path)?;
        manifest.output(&a.out, &hj_path)?;
    }
    manifest.write(&a.out)
}

fn ensemble(a: &EnsembleArgs) -> Result<()> {
    require([a.hj.as_path()].into_iter().chain(a.weights.as_deref()))?;
    let mut manifest = Manifest::new("ensemble");
    manifest.input(&a.hj)?;
    if let Some(w) = &a.weights {
        manifest.input(w)?;
    }
    if let Some(w) = a.asof {
        manifest.arg("asof", w);
    }
    if let Some(l) = &a.locations {
        manifest.arg("locations", l.join(","));
    }

    let forecasts = load_hj(&a.hj)?;
    let weights = a.weights.as_deref().map(load_weights).transpose()?;
    let cutoff = a.asof.map(|w| w.end_date());
    let pooled = pool_latest(&forecasts, weights.as_ref(), cutoff, TailPolicy::default())?;
    let mut rows = Vec::new();
    for ((loc, target), density) in &pooled {
        if a.locations.as_ref().is_some_and(|ls| !ls.contains(loc)) {
            continue;
        }
        // Without a cutoff the pool is dated by its latest submission.
        let reference_date = cutoff.unwrap_or_else(|| {
            forecasts
                .iter()
                .filter(|f| &f.location == loc && f.target == *target)
                .map(|f| f.submitted_at)
                .max()
                .expect("pooled keys have forecasts")
        });
        rows.push(HubForecast {
            reference_date,
            target: hub_target(*target),
            horizon: None,
            location: loc.clone(),
            quantiles: density.to_quantiles(&STANDARD_LEVELS)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Validation("no forecasts left to pool".into()).into());
    }
    let path = a.out.join("ensemble.csv");
    write_hub_forecast(&rows, &path)?;
    manifest.output(&a.out, &path)?;
    manifest.write(&a.out)
}

fn extend(a: &ExtendArgs) -> Result<()> {
    require(
        [a.config.as_path(), &a.truth, &a.hj]
            .into_iter()
            .chain(a.weights.as_deref()),
    )?;
    let mut manifest = Manifest::new("extend");
    manifest.config(&a.config)?;
    manifest.input(&a.truth)?;
    manifest.input(&a.hj)?;
    if let Some(w) = &a.weights {
        manifest.input(w)?;
    }
    manifest.arg("asof", a.asof);

    let cfg = RunConfig::load(&a.config)?;
    if cfg.in_sample_locations.is_empty() {
        return Err(Error::Config("in_sample_locations is empty; nothing to extend from".into()).into());
    }
    let locations = select_locations(&cfg, &a.locations)?;
    manifest.arg("locations", locations.join(","));
    manifest.seeds.insert("optimizer".into(), cfg.optimizer.seed);
    let truth = load_truth(&a.truth)?;
    let forecasts = load_hj(&a.hj)?;
    let weights = a.weights.as_deref().map(load_weights).transpose()?;

    let (joints, reports) = hj_joints(
        &forecasts,
        weights.as_ref(),
        &truth,
        &cfg.in_sample_locations,
        &locations,
        a.asof,
        &cfg.optimizer,
    )?;
    for r in &reports {
        if r.non_identifiable {
            warn!(
                "{}: in-sample histories are collinear; the weight split is not identified",
                r.oos_location
            );
        }
    }
    let mut rows = Vec::new();
    for (loc, joint) in &joints {
        rows.extend(joint_rows(loc, joint, a.asof.end_date())?);
    }
    let hub_path = a.out.join("extended.csv");
    write_hub_forecast(&rows, &hub_path)?;
    manifest.output(&a.out, &hub_path)?;
    let report_path = a.out.join("extension_weights.json");
    write_extension_report(&reports, &report_path)?;
    manifest.output(&a.out, &report_path)?;
    manifest.write(&a.out)
}

fn fit(a: &FitArgs) -> Result<()> {
    if a.model == ModelKind::Chimeric && a.hj.is_none() {
        return Err(CliError::Usage("the chimeric model needs --hj".into()));
    }
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    require(
        [a.config.as_path(), &a.truth]
            .into_iter()
            .chain(a.hj.as_deref())
            .chain(a.weights.as_deref()),
    )?;
    let mut manifest = Manifest::new("fit");
    manifest.config(&a.config)?;
    manifest.input(&a.truth)?;
    if let Some(p) = &a.hj {
        manifest.input(p)?;
    }
    if let Some(p) = &a.weights {
        manifest.input(p)?;
    }

    let cfg = RunConfig::load(&a.config)?;
    let locations = select_locations(&cfg, &a.locations)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    manifest.arg("model", a.model.as_str());
    manifest.arg("locations", locations.join(","));
    manifest.arg(
        "asof",
        a.asof.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
    );
    manifest.seeds.insert("seed".into(), seed);
    manifest.seeds.insert("optimizer".into(), cfg.optimizer.seed);
    let truth = load_truth(&a.truth)?;

    let mut joints: BTreeMap<EpiWeek, BTreeMap<String, JointDensity2D>> = BTreeMap::new();
    if let Some(hj) = &a.hj {
        if a.model == ModelKind::Chimeric {
            let forecasts = load_hj(hj)?;
            let weights = a.weights.as_deref().map(load_weights).transpose()?;
            for &asof in &a.asof {
                let (j, _) = hj_joints(
                    &forecasts,
                    weights.as_ref(),
                    &truth,
                    &cfg.in_sample_locations,
                    &locations,
                    asof,
                    &cfg.optimizer,
                )?;
                joints.insert(asof, j);
            }
        }
    }

    let mut specs = Vec::new();
    for loc in &locations {
        for &asof in &a.asof {
            let joint = joints.get(&asof).and_then(|j| j.get(loc)).cloned();
            let mut spec = PosteriorSpec::new(
                a.model,
                observed(&truth, loc, &cfg, asof)?,
                cfg.model_config(loc)?,
                joint,
            )?
            .with_omega(cfg.model.omega);
            spec.peak_temperature = cfg.model.peak_temperature;
            let sampler = SamplerConfig {
                seed: job_seed(seed, loc, asof),
                ..cfg.sampler.clone()
            };
            specs.push((loc.clone(), asof, spec, sampler));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", a.jobs)))?;
    let results: Vec<_> = pool.install(|| {
        specs
            .par_iter()
            .map(|(loc, asof, spec, sampler)| {
                info!("fitting {} for {loc} as of {asof}", a.model.as_str());
                pipeline::fit(spec, sampler, &cfg.optimizer).map(|s| (loc, *asof, s))
            })
            .collect()
    });
    for r in results {
        let (loc, asof, samples) = r?;
        let d = &samples.diagnostics;
        if d.flagged {
            warn!(
                "{loc} as of {asof}: {} divergences ({:.1}%); treat the fit with care",
                d.divergences,
                100.0 * d.divergence_rate
            );
        }
        info!(
            "{loc} as of {asof}: max R-hat {:.3}, min ESS {:.0}",
            d.max_rhat(),
            d.min_ess()
        );
        let path = samples_path(&a.out, a.model, loc, asof);
        save_samples(&samples, &path)?;
        manifest.output(&a.out, &path)?;
        manifest.output(&a.out, &chimera_core::io::sidecar_path(&path))?;
    }
    manifest.write(&a.out)
}

fn forecast(a: &ForecastArgs) -> Result<()> {
    require([a.config.as_path(), &a.truth])?;
    let cfg = RunConfig::load(&a.config)?;
    let locations = select_locations(&cfg, &a.locations)?;
    let mut jobs = Vec::new();
    for loc in &locations {
        for &asof in &a.asof {
            jobs.push((loc.clone(), asof, samples_path(&a.out, a.model, loc, asof)));
        }
    }
    require(jobs.iter().map(|j| j.2.as_path()))?;

    let mut manifest = Manifest::new("forecast");
    manifest.config(&a.config)?;
    manifest.input(&a.truth)?;
    manifest.arg("model", a.model.as_str());
    manifest.arg("locations", locations.join(","));
    manifest.arg(
        "asof",
        a.asof.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
    );
    manifest.arg("max_horizon", a.max_horizon);
    let truth = load_truth(&a.truth)?;

    let mut rows = Vec::new();
    for (loc, asof, path) in &jobs {
        manifest.input(path)?;
        let samples = load_samples(path)?;
        manifest.seeds.insert(format!("{loc}_{asof}"), samples.seed);
        // Predictions need only the observation window and the model grid,
        // which both models share.
        let spec = PosteriorSpec::control(observed(&truth, loc, &cfg, *asof)?, cfg.model_config(loc)?)?;
        rows.extend(pipeline::forecast(&samples, &spec, a.max_horizon)?.to_hub());
    }
    let path = a.out.join("forecasts").join(format!("{}.csv", a.model.as_str()));
    write_hub_forecast(&rows, &path)?;
    manifest.output(&a.out, &path)?;
    manifest.write(&a.out)
}

fn parse_named(spec: &str) -> Result<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(CliError::Usage(format!("--forecast expects name=path, got {spec:?}"))),
    }
}

fn score(a: &ScoreArgs) -> Result<()> {
    let named = a.forecasts.iter().map(|s| parse_named(s)).collect::<Result<Vec<_>>>()?;
    let names: BTreeSet<&str> = named.iter().map(|(n, _)| n.as_str()).collect();
    if names.len() != named.len() {
        return Err(CliError::Usage(
            "model names given to --forecast must be distinct".into(),
        ));
    }
    if !names.contains(a.reference.as_str()) {
        return Err(CliError::Usage(format!(
            "reference {:?} is not among the --forecast names",
            a.reference
        )));
    }
    require(
        [a.config.as_path(), &a.truth]
            .into_iter()
            .chain(named.iter().map(|(_, p)| p.as_path())),
    )?;

    let mut manifest = Manifest::new("score");
    manifest.config(&a.config)?;
    manifest.input(&a.truth)?;
    for (name, path) in &named {
        manifest.arg(
            &format!("forecast.{name}"),
            path.file_name().map(|f| f.to_string_lossy()).unwrap_or_default(),
        );
        manifest.input(path)?;
    }
    manifest.arg("reference", &a.reference);

    let cfg = RunConfig::load(&a.config)?;
    let truth = load_truth(&a.truth)?;
    let mut records: Vec<ScoreRecord> = Vec::new();
    for (name, path) in &named {
        records.extend(score_hub(name, &read_hub_forecast(path)?, &truth, cfg.season_start)?);
    }
    let scores_path = a.out.join("scores.csv");
    write_scores(&records, &scores_path)?;
    manifest.output(&a.out, &scores_path)?;

    let peaks = truth_peaks(&truth)?;
    let models: Vec<String> = named
        .iter()
        .map(|(n, _)| n.clone())
        .filter(|n| n != &a.reference)
        .collect();
    for m in &models {
        let table = match stratify_scores(&records, m, &a.reference, &peaks) {
            Ok(t) => t,
            Err(Error::Empty(_)) => {
                warn!("{m} shares no weekly forecasts with {}", a.reference);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let cells = a.out.join(format!("rwis_cells_{m}.csv"));
        write_rwis_cells(&table, &cells)?;
        manifest.output(&a.out, &cells)?;
        let marginals = a.out.join(format!("rwis_marginals_{m}.csv"));
        write_marginals(&table, &marginals)?;
        manifest.output(&a.out, &marginals)?;
    }
    if !models.is_empty() {
        let in_sample = (!cfg.in_sample_locations.is_empty()).then_some(cfg.in_sample_locations.as_slice());
        let stats = build_report(&records, &models, &a.reference, &peaks, in_sample)?;
        let stats_path = a.out.join("stats.json");
        write_json(&stats, &stats_path)?;
        manifest.output(&a.out, &stats_path)?;
    }
    manifest.write(&a.out)
}

#[derive(Serialize)]
struct WisSummaryRow<'a> {
    model: &'a str,
    target: &'a str,
    horizon: Option<u32>,
    n: usize,
    mean_wis: f64,
}

#[derive(Serialize)]
struct PeakUnitRow<'a> {
    model: &'a str,
    target: &'a str,
    location: &'a str,
    forecast_date: EpiWeek,
    weeks_from_peak: i64,
    rwis: f64,
}

#[derive(Serialize)]
struct RegressionRowOut<'a> {
    model: &'a str,
    rwis: f64,
    horizon: f64,
    weeks_from_peak: f64,
}

fn write_rows<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::Io)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    if rows.is_empty() {
        w.write_record(header).map_err(Error::Csv)?;
    }
    for r in rows {
        w.serialize(r).map_err(Error::Csv)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let scores = a.scores.clone().unwrap_or_else(|| a.out.join("scores.csv"));
    require([a.config.as_path(), &a.truth, &scores])?;
    let mut manifest = Manifest::new("report");
    manifest.config(&a.config)?;
    manifest.input(&a.truth)?;
    manifest.input(&scores)?;
    manifest.arg("reference", &a.reference);

    let cfg = RunConfig::load(&a.config)?;
    let truth = load_truth(&a.truth)?;
    let peaks = truth_peaks(&truth)?;
    let records = read_scores(&scores)?;
    let models: Vec<String> = records
        .iter()
        .map(|r| r.model.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|m| m != &a.reference)
        .collect();
    if !records.iter().any(|r| r.model == a.reference) {
        return Err(CliError::Usage(format!(
            "no scores for the reference {:?}",
            a.reference
        )));
    }
    let dir = a.out.join("report");

    let mut sums: BTreeMap<(&str, &str, Option<u32>), (usize, f64)> = BTreeMap::new();
    for r in &records {
        let e = sums.entry((&r.model, r.target.as_str(), r.horizon)).or_default();
        e.0 += 1;
        e.1 += r.wis;
    }
    let wis_rows: Vec<WisSummaryRow> = sums
        .iter()
        .map(|(&(model, target, horizon), &(n, total))| WisSummaryRow {
            model,
            target,
            horizon,
            n,
            mean_wis: total / n as f64,
        })
        .collect();
    let path = dir.join("wis_summary.csv");
    write_rows(&wis_rows, &["model", "target", "horizon", "n", "mean_wis"], &path)?;
    manifest.output(&a.out, &path)?;

    let mut unit_rows = Vec::new();
    let mut reg_rows = Vec::new();
    for m in &models {
        for target in [ScoreTarget::PeakWeek, ScoreTarget::PeakIntensity] {
            for u in peak_units(&records, m, &a.reference, target)? {
                let peak = peaks
                    .get(&u.location)
                    .ok_or_else(|| Error::MissingPeak(u.location.clone()))?
                    .0;
                unit_rows.push((
                    m.clone(),
                    target,
                    u.location.clone(),
                    u.forecast_date,
                    peak.weeks_until(u.forecast_date),
                    u.rwis,
                ));
            }
        }
        for r in regression_rows(&records, m, &a.reference, &peaks)? {
            reg_rows.push((m.clone(), r));
        }
    }
    let units: Vec<PeakUnitRow> = unit_rows
        .iter()
        .map(|(m, t, loc, date, wfp, rwis)| PeakUnitRow {
            model: m,
            target: t.as_str(),
            location: loc,
            forecast_date: *date,
            weeks_from_peak: *wfp,
            rwis: *rwis,
        })
        .collect();
    let path = dir.join("peak_units.csv");
    write_rows(
        &units,
        &[
            "model",
            "target",
            "location",
            "forecast_date",
            "weeks_from_peak",
            "rwis",
        ],
        &path,
    )?;
    manifest.output(&a.out, &path)?;
    let regs: Vec<RegressionRowOut> = reg_rows
        .iter()
        .map(|(m, r)| RegressionRowOut {
            model: m,
            rwis: r.rwis,
            horizon: r.horizon,
            weeks_from_peak: r.weeks_from_peak,
        })
        .collect();
    let path = dir.join("regression_rows.csv");
    write_rows(&regs, &["model", "rwis", "horizon", "weeks_from_peak"], &path)?;
    manifest.output(&a.out, &path)?;

    if !models.is_empty() {
        let in_sample = (!cfg.in_sample_locations.is_empty()).then_some(cfg.in_sample_locations.as_slice());
        let stats = build_report(&records, &models, &a.reference, &peaks, in_sample)?;
        let path = dir.join("stats.json");
        write_json(&stats, &path)?;
        manifest.output(&a.out, &path)?;
    }
    manifest.write(&a.out)
}
