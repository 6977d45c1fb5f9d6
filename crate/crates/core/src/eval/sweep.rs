//! Distance × state scenario sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::error_rate;
use crate::dsp::{median, quantile};
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, PipelineId, ProcessOptions};
use crate::sim::{default_layout, synthesize_cube, Coverage, RbmModel, Scenario};
use crate::template::Banks;

/// Distance at which a trial runs at the grid's base SNR.
pub const REFERENCE_DISTANCE_M: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    #[serde(rename = "SI")]
    Sitting,
    #[serde(rename = "ST")]
    Standing,
    #[serde(rename = "LS")]
    LegShaking,
    #[serde(rename = "HT")]
    HeadTurning,
}

impl State {
    pub const ALL: [State; 4] = [
        State::Sitting,
        State::Standing,
        State::LegShaking,
        State::HeadTurning,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            State::Sitting => "SI",
            State::Standing => "ST",
            State::LegShaking => "LS",
            State::HeadTurning => "HT",
        }
    }

    pub fn rbm(&self) -> RbmModel {
        match self {
            State::Sitting => RbmModel::None,
            State::Standing => RbmModel::stand_sway(),
            State::LegShaking => RbmModel::leg_shake(),
            State::HeadTurning => RbmModel::head_turn(),
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        State::ALL
            .into_iter()
            .find(|st| st.code() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown state '{s}'")))
    }
}

fn default_distances() -> Vec<f64> {
    vec![0.3, 1.0, 2.0]
}
fn default_states() -> Vec<State> {
    State::ALL.to_vec()
}
fn default_repeats() -> usize {
    3
}
fn default_base_snr() -> f64 {
    20.0
}
fn default_coverage() -> Coverage {
    Coverage::All
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    #[serde(default = "default_distances")]
    pub distances_m: Vec<f64>,
    #[serde(default = "default_states")]
    pub states: Vec<State>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Per-repeat base seeds; repeat `r` uses `seeds[r]`, or `r` when the
    /// list is shorter.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Receiver SNR at 0.3 m; farther trials lose 20·log10(r / 0.3) dB.
    #[serde(default = "default_base_snr")]
    pub base_snr_db: f64,
    #[serde(default = "default_coverage")]
    pub coverage: Coverage,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        Self {
            distances_m: default_distances(),
            states: default_states(),
            repeats: default_repeats(),
            seeds: Vec::new(),
            base_snr_db: default_base_snr(),
            coverage: default_coverage(),
        }
    }
}

impl ScenarioGrid {
    pub fn validate(&self) -> Result<()> {
        if self.distances_m.is_empty() || self.states.is_empty() || self.repeats == 0 {
            return Err(Error::InvalidConfig(
                "grid axes must be non-empty and repeats >= 1".into(),
            ));
        }
        if self
            .distances_m
            .iter()
            .any(|d| !(d.is_finite() && *d > 0.0))
        {
            return Err(Error::InvalidConfig("distances must be positive".into()));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.distances_m.len() * self.states.len() * self.repeats
    }

    fn seed(&self, d: usize, s: usize, r: usize) -> u64 {
        let base = self.seeds.get(r).copied().unwrap_or(r as u64);
        let cell = (d * self.states.len() + s) as u64;
        base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (cell << 32 | r as u64)
    }

    /// Scenario for one grid cell, with truth rates drawn from its seed.
    pub fn scenario(&self, d: usize, s: usize, r: usize) -> Scenario {
        let seed = self.seed(d, s, r);
        let distance = self.distances_m[d];
        let mut truth = ChaCha8Rng::seed_from_u64(seed ^ 0x7472_7574_68);
        let mut sc = Scenario::default_with(self.coverage, seed);
        let layout = default_layout(self.coverage, distance, sc.radar.num_channels());
        sc.scatterers = layout.scatterers;
        sc.coupling = layout.coupling;
        sc.rr_bpm_truth = truth.random_range(12.0..24.0);
        sc.hr_bpm_truth = truth.random_range(60.0..100.0);
        sc.noise_snr_db = Some(self.base_snr_db - 20.0 * (distance / REFERENCE_DISTANCE_M).log10());
        sc.rbm_model = self.states[s].rbm();
        sc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub distance_m: f64,
    pub state: State,
    pub repeat: usize,
    pub method: PipelineId,
    pub rr_true: f64,
    pub hr_true: f64,
    pub rr_est: f64,
    pub hr_est: f64,
    pub rr_error_pct: f64,
    pub hr_error_pct: f64,
    /// Failure message; estimates and errors are NaN when set.
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

pub fn scenario_id(distance_m: f64, state: State, repeat: usize) -> String {
    format!("{distance_m}m_{state}_r{repeat}")
}

/// Synthesize every cell once and feed the same cube to each method.
pub fn run_sweep(
    grid: &ScenarioGrid,
    methods: &[PipelineId],
    opts: &ProcessOptions,
    banks: &Banks,
) -> Result<Vec<TrialRecord>> {
    grid.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig("at least one method required".into()));
    }
    let cells: Vec<(usize, usize, usize)> = (0..grid.distances_m.len())
        .flat_map(|d| {
            (0..grid.states.len()).flat_map(move |s| (0..grid.repeats).map(move |r| (d, s, r)))
        })
        .collect();
    let nested: Vec<Vec<TrialRecord>> = cells
        .par_iter()
        .map(|&(d, s, r)| {
            let sc = grid.scenario(d, s, r);
            let state = grid.states[s];
            let distance = grid.distances_m[d];
            let cube = synthesize_cube(&sc);
            methods
                .iter()
                .map(|&method| {
                    let result = cube.as_ref().map_err(|e| e.to_string()).and_then(|cube| {
                        run_pipeline(cube, method, opts, banks).map_err(|e| e.to_string())
                    });
                    let mut rec = TrialRecord {
                        scenario: scenario_id(distance, state, r),
                        distance_m: distance,
                        state,
                        repeat: r,
                        method,
                        rr_true: sc.rr_bpm_truth,
                        hr_true: sc.hr_bpm_truth,
                        rr_est: f64::NAN,
                        hr_est: f64::NAN,
                        rr_error_pct: f64::NAN,
                        hr_error_pct: f64::NAN,
                        error: None,
                    };
                    match result {
                        Ok(out) => {
                            rec.rr_est = out.estimate.rr_bpm;
                            rec.hr_est = out.estimate.hr_bpm;
                            rec.rr_error_pct =
                                error_rate(rec.rr_est, rec.rr_true).expect("truth > 0");
                            rec.hr_error_pct =
                                error_rate(rec.hr_est, rec.hr_true).expect("truth > 0");
                        }
                        Err(e) => {
                            log::warn!("trial {} {method} failed: {e}", rec.scenario);
                            rec.error = Some(e);
                        }
                    }
                    rec
                })
                .collect()
        })
        .collect();
    Ok(nested.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
                n: 0,
            };
        }
        Self {
            min: quantile(values, 0.0),
            q1: quantile(values, 0.25),
            median: median(values),
            q3: quantile(values, 0.75),
            max: quantile(values, 1.0),
            n: values.len(),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: PipelineId,
    pub distance_m: f64,
    pub state: State,
    pub rr: Quartiles,
    pub hr: Quartiles,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: PipelineId,
    pub rr_median_error_pct: f64,
    pub hr_median_error_pct: f64,
    pub rr_iqr: f64,
    pub hr_iqr: f64,
    pub trials: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub total_trials: usize,
    pub failed_trials: usize,
    pub success_fraction: f64,
    pub methods: Vec<MethodSummary>,
    pub cells: Vec<CellSummary>,
    pub failures: Vec<String>,
}

fn errors(records: &[&TrialRecord]) -> (Vec<f64>, Vec<f64>) {
    records
        .iter()
        .filter(|r| r.ok())
        .map(|r| (r.rr_error_pct, r.hr_error_pct))
        .unzip()
}

pub fn summarize(records: &[TrialRecord]) -> SweepSummary {
    let mut methods: Vec<PipelineId> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut cells: BTreeMap<(PipelineId, u64, State), Vec<&TrialRecord>> = BTreeMap::new();
    let mut order: Vec<(PipelineId, u64, State, f64)> = Vec::new();
    for r in records {
        let key = (r.method, r.distance_m.to_bits(), r.state);
        if !cells.contains_key(&key) {
            order.push((r.method, r.distance_m.to_bits(), r.state, r.distance_m));
        }
        cells.entry(key).or_default().push(r);
    }
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.3.total_cmp(&b.3)).then(a.2.cmp(&b.2)));
    let cells = order
        .iter()
        .map(|&(method, bits, state, distance_m)| {
            let recs = &cells[&(method, bits, state)];
            let (rr, hr) = errors(recs);
            CellSummary {
                method,
                distance_m,
                state,
                rr: Quartiles::of(&rr),
                hr: Quartiles::of(&hr),
                failed: recs.iter().filter(|r| !r.ok()).count(),
            }
        })
        .collect();
    let methods = methods
        .into_iter()
        .map(|m| {
            let recs: Vec<&TrialRecord> = records.iter().filter(|r| r.method == m).collect();
            let (rr, hr) = errors(&recs);
            let (qr, qh) = (Quartiles::of(&rr), Quartiles::of(&hr));
            MethodSummary {
                method: m,
                rr_median_error_pct: qr.median,
                hr_median_error_pct: qh.median,
                rr_iqr: qr.iqr(),
                hr_iqr: qh.iqr(),
                trials: recs.len(),
                failed: recs.iter().filter(|r| !r.ok()).count(),
            }
        })
        .collect();
    let failed = records.iter().filter(|r| !r.ok()).count();
    SweepSummary {
        total_trials: records.len(),
        failed_trials: failed,
        success_fraction: if records.is_empty() {
            0.0
        } else {
            1.0 - failed as f64 / records.len() as f64
        },
        methods,
        cells,
        failures: records
            .iter()
            .filter_map(|r| {
                r.error
                    .as_ref()
                    .map(|e| format!("{} {}: {e}", r.scenario, r.method))
            })
            .collect(),
    }
}
