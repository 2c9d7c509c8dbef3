//! Wiring from observations to scored forecasts, shared by the command line
//! and the end-to-end checks.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extend::{extend_location, ExtensionWeights};
use crate::hj::{
    joint_independence, pool_latest, IndividualForecast, JointDensity2D, QuantileForecast, TailPolicy, Target,
};
use crate::inference::{
    ga_initialize, peak_forecast, posterior_predictive, sample, Diagnostics, PosteriorSamples, PosteriorSpec,
    SamplerConfig,
};
use crate::io::{HubForecast, HubTarget};
use crate::model::ModelConfig;
use crate::optim::OptimizerConfig;
use crate::scoring::{ScoreRecord, ScoreTarget};
use crate::synth::{random_season, synthetic_hj, CrowdSkill, SyntheticSeason};
use crate::ts::{peak, EpiWeek, HospSeries};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one (location, as-of week) job. Depends only on its inputs, so
/// jobs can run in any order or in parallel.
pub fn job_seed(base: u64, location: &str, asof: EpiWeek) -> u64 {
    let mut h = splitmix(base);
    for b in location.bytes() {
        h = splitmix(h ^ b as u64);
    }
    splitmix(h ^ ((asof.year() as u64) << 8 | asof.week() as u64))
}

/// Optimizer start followed by NUTS.
pub fn fit(spec: &PosteriorSpec, sampler: &SamplerConfig, optimizer: &OptimizerConfig) -> Result<PosteriorSamples> {
    let init = ga_initialize(spec, optimizer, sampler.seed)?;
    sample(spec, &init, sampler)
}

/// Every forecast made from one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub location: String,
    /// Last observed week.
    pub asof: EpiWeek,
    pub weekly: Vec<(u32, QuantileForecast)>,
    /// In 1-based season weeks.
    pub peak_week: QuantileForecast,
    pub peak_intensity: QuantileForecast,
}

/// Weekly forecasts for horizons `1..=max_horizon` (cut at the season end)
/// plus both peak targets.
pub fn forecast(samples: &PosteriorSamples, spec: &PosteriorSpec, max_horizon: usize) -> Result<ForecastSet> {
    let remaining = spec.config.season_weeks - spec.obs.len();
    let horizons: Vec<usize> = (1..=max_horizon.min(remaining)).collect();
    let weekly = if horizons.is_empty() {
        Vec::new()
    } else {
        posterior_predictive(samples, spec, &horizons)?
    };
    let (peak_week, peak_intensity) = peak_forecast(samples, spec)?;
    Ok(ForecastSet {
        location: spec.obs.location().to_string(),
        asof: spec.obs.end(),
        weekly: horizons.iter().map(|&h| h as u32).zip(weekly).collect(),
        peak_week,
        peak_intensity,
    })
}

impl ForecastSet {
    /// Hub rows, dated by the Saturday closing the as-of week.
    pub fn to_hub(&self) -> Vec<HubForecast> {
        let reference_date = self.asof.end_date();
        let row = |target, horizon, q: &QuantileForecast| HubForecast {
            reference_date,
            target,
            horizon,
            location: self.location.clone(),
            quantiles: q.clone(),
        };
        let mut out: Vec<HubForecast> = self
            .weekly
            .iter()
            .map(|(h, q)| row(HubTarget::Weekly, Some(*h), q))
            .collect();
        out.push(row(HubTarget::PeakWeek, None, &self.peak_week));
        out.push(row(HubTarget::PeakIntensity, None, &self.peak_intensity));
        out
    }
}

/// Peak week and count of every truth series.
pub fn truth_peaks(truth: &BTreeMap<String, HospSeries>) -> Result<BTreeMap<String, (EpiWeek, f64)>> {
    truth
        .iter()
        .map(|(l, s)| {
            let (w, c) = peak(s)?;
            Ok((l.clone(), (w, c as f64)))
        })
        .collect()
}

/// Scores hub forecasts against truth. Weekly targets past the end of the
/// truth are skipped; peak weeks are scored as 1-based weeks from
/// `season_start`.
pub fn score_hub(
    model: &str,
    forecasts: &[HubForecast],
    truth: &BTreeMap<String, HospSeries>,
    season_start: EpiWeek,
) -> Result<Vec<ScoreRecord>> {
    let peaks = truth_peaks(truth)?;
    let mut out = Vec::with_capacity(forecasts.len());
    for f in forecasts {
        let series = truth
            .get(&f.location)
            .ok_or_else(|| Error::Validation(format!("no truth for {}", f.location)))?;
        let date = EpiWeek::from_date(f.reference_date);
        let (target, y) = match f.target {
            HubTarget::Weekly => {
                let h = f
                    .horizon
                    .ok_or_else(|| Error::Validation("weekly forecast without a horizon".into()))?;
                match series.index_of(date.add_weeks(h as i64)) {
                    Some(k) => (ScoreTarget::Weekly, series.counts()[k] as f64),
                    None => continue,
                }
            }
            HubTarget::PeakWeek => {
                let week = season_start.weeks_until(peaks[&f.location].0) + 1;
                (ScoreTarget::PeakWeek, week as f64)
            }
            HubTarget::PeakIntensity => (ScoreTarget::PeakIntensity, peaks[&f.location].1),
        };
        out.push(ScoreRecord::score(
            model,
            &f.location,
            date,
            target,
            f.horizon,
            &f.quantiles,
            y,
        )?);
    }
    Ok(out)
}

/// Pools a crowd's forecasts into the joint peak density of one location.
pub fn crowd_joint(
    forecasts: &[IndividualForecast],
    location: &str,
    asof: Option<NaiveDate>,
) -> Result<JointDensity2D> {
    let pooled = pool_latest(forecasts, None, asof, TailPolicy::default())?;
    let get = |t: Target| {
        pooled
            .get(&(location.to_string(), t))
            .cloned()
            .ok_or_else(|| Error::Validation(format!("no {t} forecasts for {location}")))
    };
    Ok(joint_independence(get(Target::PeakWeek)?, get(Target::PeakIntensity)?))
}

/// Joint peak densities for `locations` as of `asof`: the pooled crowd where
/// one was asked, an extension from the asked locations elsewhere.
pub fn hj_joints(
    forecasts: &[IndividualForecast],
    weights: Option<&BTreeMap<String, f64>>,
    truth: &BTreeMap<String, HospSeries>,
    in_sample: &[String],
    locations: &[String],
    asof: EpiWeek,
    optimizer: &OptimizerConfig,
) -> Result<(BTreeMap<String, JointDensity2D>, Vec<ExtensionWeights>)> {
    let pooled = pool_latest(forecasts, weights, Some(asof.end_date()), TailPolicy::default())?;
    let mut asked = BTreeMap::new();
    for loc in in_sample {
        let week = pooled.get(&(loc.clone(), Target::PeakWeek));
        let intensity = pooled.get(&(loc.clone(), Target::PeakIntensity));
        match (week, intensity) {
            (Some(w), Some(i)) => {
                asked.insert(loc.clone(), joint_independence(w.clone(), i.clone()));
            }
            _ => {
                return Err(Error::Validation(format!(
                    "no crowd forecasts of both peak targets for {loc} by {asof}"
                )))
            }
        }
    }
    let mut joints = BTreeMap::new();
    let mut reports = Vec::new();
    for loc in locations {
        if let Some(j) = asked.get(loc) {
            joints.insert(loc.clone(), j.clone());
        } else {
            let (j, w) = extend_location(loc, truth, &asked, asof, optimizer)?;
            joints.insert(loc.clone(), j);
            reports.push(w);
        }
    }
    Ok((joints, reports))
}

/// Shared settings of the synthetic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub population: f64,
    pub season_weeks: usize,
    pub season_start: EpiWeek,
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerConfig,
    pub skill: CrowdSkill,
    pub forecasters: usize,
}

impl SyntheticDesign {
    pub fn config(&self) -> ModelConfig {
        ModelConfig::new(self.population, self.season_weeks, self.season_start)
    }
}

/// One synthetic season drawn from `seed`.
pub fn synthetic_season(design: &SyntheticDesign, location: &str, seed: u64) -> Result<SyntheticSeason> {
    random_season(location, &design.config(), seed)
}

/// Whether the 95% posterior interval of the peak week covers the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageOutcome {
    pub truth_week: usize,
    pub interval: (f64, f64),
    pub covered: bool,
    pub diagnostics: Diagnostics,
}

/// Fits the control model to the first `observed_weeks` of a synthetic
/// season and checks the peak-week interval against the latent peak.
pub fn peak_week_coverage(design: &SyntheticDesign, observed_weeks: usize, seed: u64) -> Result<CoverageOutcome> {
    let season = synthetic_season(design, "SBC", seed)?;
    let spec = PosteriorSpec::control(season.observed_through(observed_weeks)?, design.config())?;
    let sampler = SamplerConfig {
        seed: splitmix(seed),
        ..design.sampler.clone()
    };
    let samples = fit(&spec, &sampler, &design.optimizer)?;
    let (weeks, _) = peak_forecast(&samples, &spec)?;
    let lo = weeks.value_at(0.025).expect("standard levels");
    let hi = weeks.value_at(0.975).expect("standard levels");
    let truth_week = season.peak().0;
    Ok(CoverageOutcome {
        truth_week,
        interval: (lo, hi),
        covered: lo <= truth_week as f64 && truth_week as f64 <= hi,
        diagnostics: samples.diagnostics,
    })
}

/// Scores of the control and chimeric models on one synthetic season.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonComparison {
    pub location: String,
    pub records: Vec<ScoreRecord>,
    pub truth_peak: (EpiWeek, f64),
    pub control: Diagnostics,
    pub chimeric: Diagnostics,
}

/// Fits both models after `observed_weeks` weeks, the chimeric one with a
/// crowd centered on the observed peak, and scores their forecasts.
pub fn compare_on_synthetic_season(
    design: &SyntheticDesign,
    location: &str,
    observed_weeks: usize,
    max_horizon: usize,
    seed: u64,
) -> Result<SeasonComparison> {
    let season = synthetic_season(design, location, seed)?;
    let truth = BTreeMap::from([(location.to_string(), season.observed.clone())]);
    let truth_peak = truth_peaks(&truth)?[location];
    let peak_index = design.season_start.weeks_until(truth_peak.0) as f64 + 1.0;
    let obs = season.observed_through(observed_weeks)?;
    let crowd = synthetic_hj(
        location,
        peak_index,
        truth_peak.1,
        design.forecasters,
        obs.end().end_date(),
        design.skill,
        splitmix(seed ^ 0xc0ffee),
    )?;
    let joint = crowd_joint(&crowd, location, None)?;

    let sampler = SamplerConfig {
        seed: job_seed(seed, location, obs.end()),
        ..design.sampler.clone()
    };
    let mut records = Vec::new();
    let mut diags = Vec::with_capacity(2);
    for spec in [
        PosteriorSpec::control(obs.clone(), design.config())?,
        PosteriorSpec::chimeric(obs.clone(), design.config(), joint)?,
    ] {
        let samples = fit(&spec, &sampler, &design.optimizer)?;
        let set = forecast(&samples, &spec, max_horizon)?;
        records.extend(score_hub(
            spec.kind.as_str(),
            &set.to_hub(),
            &truth,
            design.season_start,
        )?);
        diags.push(samples.diagnostics);
    }
    let chimeric = diags.pop().expect("two fits");
    let control = diags.pop().expect("two fits");
    Ok(SeasonComparison {
        location: location.to_string(),
        records,
        truth_peak,
        control,
        chimeric,
    })
}
