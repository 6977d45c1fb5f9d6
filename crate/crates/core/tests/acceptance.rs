//! Acceptance criteria 1–9. Each test prints one PASS/FAIL line with the
//! measured value next to its pinned tolerance.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use rand_distr::{Distribution, Exp1};
use vitalwave_core::channel_fusion::{
    band_snr, build_reports, classify_channel, fuse_by_class, screen_channels, ClassRule, SnrPair,
};
use vitalwave_core::dsp::unwrap;
use vitalwave_core::eval::{
    run_sweep, snr_spatial_map, summarize, verify_appendix_file, ScenarioGrid,
};
use vitalwave_core::pipeline::{run_pipeline, PipelineId, ProcessOptions};
use vitalwave_core::preprocess::{channel_range_time, parse_cube, write_cube};
use vitalwave_core::range_fusion::{fuse_range_bins, BinSignalMatrix};
use vitalwave_core::range_select::{cfar_detect, select_effective_bins, BandSpec, CfarParams};
use vitalwave_core::sim::{
    default_layout, synthesize_cube, vdp_limit_cycle, BodyRegion, Coverage, RespCycle, RespShape,
    Scenario,
};
use vitalwave_core::template::{default_banks, match_bank};
use vitalwave_core::RadarCube;

fn report(id: &str, pass: bool, detail: String) {
    println!(
        "criterion {id}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

#[test]
fn criterion_1_error_metric_fixture() {
    const WITHIN: f64 = 0.95;
    const BUDGET_S: f64 = 1.0;
    let t0 = Instant::now();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/appendix_tables.csv");
    let r = verify_appendix_file(&path).unwrap();
    let dt = secs(t0.elapsed());
    let frac = r.fraction_within();
    let pass = r.cells > 0 && frac >= WITHIN && dt < BUDGET_S;
    report(
        "1",
        pass,
        format!(
            "{}/{} cells within 0.01 pp ({:.1}% >= {:.0}%), {dt:.3} s (< {BUDGET_S} s)",
            r.within_tolerance,
            r.cells,
            100.0 * frac,
            100.0 * WITHIN
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_closed_loop_accuracy() {
    const RR_MAX: f64 = 3.0;
    const HR_MAX: f64 = 8.0;
    const BUDGET_S: f64 = 120.0;
    let banks = default_banks();
    let t0 = Instant::now();
    let (mut rr, mut hr) = (Vec::new(), Vec::new());
    for seed in 0..50 {
        let sc = Scenario::default_with(Coverage::All, 1000 + seed);
        let est = run_pipeline(
            &synthesize_cube(&sc).unwrap(),
            PipelineId::Proposed,
            &ProcessOptions::default(),
            banks,
        )
        .unwrap()
        .estimate;
        rr.push(pct_err(est.rr_bpm, 15.0));
        hr.push(pct_err(est.hr_bpm, 75.0));
    }
    let dt = secs(t0.elapsed());
    let (mr, mh) = (median(&rr), median(&hr));
    let pass = mr < RR_MAX && mh < HR_MAX && dt < BUDGET_S;
    report(
        "2",
        pass,
        format!(
            "median RR error {mr:.2}% (< {RR_MAX}%), HR {mh:.2}% (< {HR_MAX}%), {dt:.1} s (< {BUDGET_S} s)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_method_ordering() {
    const SLACK_PP: f64 = 1.0;
    const BUDGET_S: f64 = 1200.0;
    let grid = ScenarioGrid {
        repeats: 10,
        ..ScenarioGrid::default()
    };
    let t0 = Instant::now();
    let records = run_sweep(
        &grid,
        &PipelineId::ALL,
        &ProcessOptions::default(),
        default_banks(),
    )
    .unwrap();
    let dt = secs(t0.elapsed());
    let s = summarize(&records);
    let get = |m: PipelineId| s.methods.iter().find(|x| x.method == m).unwrap();
    let (r1, r2, p) = (
        get(PipelineId::Ref1),
        get(PipelineId::Ref2),
        get(PipelineId::Proposed),
    );
    let chain = |a: f64, b: f64, c: f64| a <= b + SLACK_PP && b <= c + SLACK_PP;
    let rr_ok = chain(
        p.rr_median_error_pct,
        r2.rr_median_error_pct,
        r1.rr_median_error_pct,
    );
    let hr_ok = chain(
        p.hr_median_error_pct,
        r2.hr_median_error_pct,
        r1.hr_median_error_pct,
    );
    let pass = rr_ok && hr_ok && dt < BUDGET_S;
    report(
        "3",
        pass,
        format!(
            "RR proposed {:.2}% / ref2 {:.2}% / ref1 {:.2}%, HR {:.2}% / {:.2}% / {:.2}% ({SLACK_PP} pp slack), {} trials in {dt:.1} s (< {BUDGET_S} s)",
            p.rr_median_error_pct,
            r2.rr_median_error_pct,
            r1.rr_median_error_pct,
            p.hr_median_error_pct,
            r2.hr_median_error_pct,
            r1.hr_median_error_pct,
            records.len(),
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_spatial_distribution() {
    const SEEDS: u64 = 30;
    const NEEDED: f64 = 0.9;
    const WITHIN_DB: f64 = 3.0;
    let opts = ProcessOptions::default();
    let lowest = |v: &[f64], group: &[usize]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        group.iter().all(|a| idx[..group.len()].contains(a))
    };
    let mut arms = Vec::new();
    let (mut apical_hits, mut within_hits) = (0, 0);
    for cov in [Coverage::RightHalf, Coverage::All, Coverage::LeftHalf] {
        let layout = default_layout(cov, 0.5, 8);
        let arm = layout.channels_in(BodyRegion::Arm);
        let apical = layout.channels_in(BodyRegion::Apical);
        let mut hits = 0;
        for seed in 0..SEEDS {
            let cube = synthesize_cube(&Scenario::default_with(cov, 2000 + seed)).unwrap();
            let map = snr_spatial_map(&cube, &opts).unwrap();
            let b: Vec<f64> = map.iter().map(|p| p.snr_b_db).collect();
            let h: Vec<f64> = map.iter().map(|p| p.snr_h_db).collect();
            // Vacuous when the layout maps no channel onto an arm.
            hits += (lowest(&b, &arm) && lowest(&h, &arm)) as usize;
            if cov == Coverage::All {
                let top_h = (0..h.len()).max_by(|&x, &y| h[x].total_cmp(&h[y])).unwrap();
                apical_hits += apical.contains(&top_h) as usize;
                let top_b = b.iter().cloned().fold(f64::MIN, f64::max);
                within_hits += b.iter().all(|v| *v >= top_b - WITHIN_DB) as usize;
            }
        }
        arms.push((cov, arm.len(), hits));
    }
    let frac = |k: usize| k as f64 / SEEDS as f64;
    let i_ok = arms.iter().all(|&(_, _, k)| frac(k) >= NEEDED);
    let ii_ok = frac(apical_hits) >= NEEDED;
    let iii_ok = frac(within_hits) >= NEEDED;
    let arms_txt: Vec<String> = arms
        .iter()
        .map(|(c, n, k)| format!("{c:?} {k}/{SEEDS} ({n} arm channels)"))
        .collect();
    report(
        "4(i)",
        i_ok,
        format!(
            "arm channels lowest in both SNRs: {} (>= 90%)",
            arms_txt.join(", ")
        ),
    );
    report(
        "4(ii)",
        ii_ok,
        format!("apical channel is argmax SNR_H: {apical_hits}/{SEEDS} (>= 90%)"),
    );
    report(
        "4(iii)",
        iii_ok,
        format!("every SNR_B within {WITHIN_DB} dB of the max: {within_hits}/{SEEDS} (>= 90%)"),
    );
    assert!(i_ok && ii_ok && iii_ok);
}

#[test]
fn criterion_5_mrc_gain() {
    const GAIN_DB: f64 = 4.771_212_547;
    const GAIN_TOL: f64 = 1.0;
    const MIXED_MARGIN: f64 = 0.5;
    const MIXED_NEEDED: usize = 95;
    let bands = BandSpec::default();
    let s = tone(0.25, tone_amplitude(15.0), 0.2);
    let gains: Vec<f64> = (0..100)
        .map(|seed| {
            let mut r = rng(seed);
            let rows: Vec<Vec<f64>> = (0..3).map(|_| add(&s, &gauss(&mut r, N, 1.0))).collect();
            let single = band_snr(&signal(rows[0].clone()), &bands).unwrap().snr_b_db;
            let y = BinSignalMatrix::new(rows, vec![0, 1, 2], RATE).unwrap();
            band_snr(&fuse_range_bins(&y).unwrap().0, &bands)
                .unwrap()
                .snr_b_db
                - single
        })
        .collect();
    let g = mean(&gains);

    let s = tone(0.25, tone_amplitude(20.0), 0.0);
    let mut ok = 0;
    for seed in 0..100 {
        let mut r = rng(500 + seed);
        let h: Vec<f64> = gauss(&mut r, 3, 1.0)
            .iter()
            .map(|g| 0.2 + 0.8 * (0.5 + 0.5 * g.tanh()))
            .collect();
        let rows: Vec<Vec<f64>> = h
            .iter()
            .map(|g| {
                add(
                    &s.iter().map(|v| g * v).collect::<Vec<_>>(),
                    &gauss(&mut r, N, 1.0),
                )
            })
            .collect();
        let best = rows
            .iter()
            .map(|x| projection_snr(x, &s))
            .fold(f64::MIN, f64::max);
        let y = BinSignalMatrix::new(rows, vec![0, 1, 2], RATE).unwrap();
        ok += (projection_snr(&fuse_range_bins(&y).unwrap().0.samples, &s) >= best - MIXED_MARGIN)
            as usize;
    }
    let pass = (g - GAIN_DB).abs() <= GAIN_TOL && ok >= MIXED_NEEDED;
    report(
        "5",
        pass,
        format!(
            "equal-SNR gain {g:.2} dB ({GAIN_DB:.2} ± {GAIN_TOL}), mixed-SNR within {MIXED_MARGIN} dB of best bin in {ok}/100 (>= {MIXED_NEEDED})"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_cfar_calibration() {
    const CELLS: usize = 100_000;
    let params = CfarParams::default();
    let mut r = rng(66);
    let mut hits = 0;
    for _ in 0..CELLS / 100 {
        let p: Vec<f64> = (0..100).map(|_| Exp1.sample(&mut r)).collect();
        hits += cfar_detect(&p, params).unwrap().len();
    }
    let rate = hits as f64 / CELLS as f64;
    let pass = rate >= 0.5 * params.pfa && rate <= 2.0 * params.pfa;
    report(
        "6",
        pass,
        format!(
            "false-alarm rate {rate:.2e} over {CELLS} cells (within [{:.1e}, {:.1e}])",
            0.5 * params.pfa,
            2.0 * params.pfa
        ),
    );
    assert!(pass);
}

/// Midpoint-rule integration of V'' − α(1 − V²)V' + V = 0; largest |V|
/// over the last 20 time units of a 300-unit run.
fn vdp_amplitude_oracle(alpha: f64) -> f64 {
    let h = 1e-4;
    let (mut v, mut w) = (0.5, 0.0);
    let f = |v: f64, w: f64| (w, alpha * (1.0 - v * v) * w - v);
    let steps = (300.0 / h) as usize;
    let tail = (20.0 / h) as usize;
    let mut amp = 0.0f64;
    for i in 0..steps {
        let (dv, dw) = f(v, w);
        let (mv, mw) = f(v + 0.5 * h * dv, w + 0.5 * h * dw);
        v += h * mv;
        w += h * mw;
        if i >= steps - tail {
            amp = amp.max(v.abs());
        }
    }
    amp
}

#[test]
fn criterion_7_oscillators() {
    let tau = std::f64::consts::TAU;
    let p0 = vdp_limit_cycle(0.0).unwrap().period;
    let period_ok = (p0 / tau - 1.0).abs() <= 1e-3;
    let a = vdp_limit_cycle(0.5).unwrap().amplitude;
    let oracle = vdp_amplitude_oracle(0.5);
    let amp_ok = (a / 2.0 - 1.0).abs() <= 0.02
        && (oracle / 2.0 - 1.0).abs() <= 0.02
        && (a - oracle).abs() < 1e-3;
    let mut worst = 0.0f64;
    for t1 in [0.25, 0.4, 0.5, 0.6] {
        for tau_s in [0.2, 0.6, 1.5] {
            for period in [2.5, 4.0, 5.0] {
                let c = RespCycle::new(period, RespShape::new(t1, tau_s).unwrap());
                worst = worst.max((c.inspiration(c.t1_s) - c.expiration(c.t1_s)).abs());
                worst = worst.max((c.inspiration(0.0) - c.expiration(period)).abs());
            }
        }
    }
    let cont_ok = worst <= 1e-9;
    let pass = period_ok && amp_ok && cont_ok;
    report(
        "7",
        pass,
        format!(
            "α=0 period {p0:.6} (2π ± 0.1%), α=0.5 amplitude {a:.4} vs oracle {oracle:.4} (2 ± 2%), branch gap {worst:.1e} (<= 1e-9)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_structural_invariants() {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    let mut r = rng(88);
    let pairs: Vec<SnrPair> = (0..2000)
        .map(|_| {
            let g = gauss(&mut r, 2, 15.0);
            SnrPair {
                snr_b_db: 20.0 + g[0],
                snr_h_db: 10.0 + g[1],
            }
        })
        .collect();
    check(
        "partition",
        pairs.iter().all(|p| {
            let ratio = 10f64.powf((p.snr_b_db - p.snr_h_db) / 10.0);
            let c = classify_channel(*p, ClassRule::Partition).as_str();
            (ratio > 3.0) as u8 + (ratio < 0.35) as u8 <= 1
                && c == if ratio > 3.0 {
                    "respiration_dominant"
                } else if ratio < 0.35 {
                    "heartbeat_dominant"
                } else {
                    "mixed"
                }
        }),
    );
    check(
        "screen never empty",
        pairs
            .chunks(7)
            .all(|c| screen_channels(c).iter().any(|&k| k)),
    );

    let signals: Vec<_> = (0..5)
        .map(|i| {
            signal(add(
                &tone(0.25, 1.0, i as f64),
                &tone(1.2, 0.6, 0.5 * i as f64),
            ))
        })
        .collect();
    let snrs = &pairs[..5];
    let reports = build_reports(&[0, 1, 2, 3, 4], snrs, ClassRule::Partition);
    let order = [3, 0, 4, 1, 2];
    let (a, b) = (
        fuse_by_class(&signals, &reports, &BandSpec::default()),
        fuse_by_class(
            &order
                .iter()
                .map(|&i| signals[i].clone())
                .collect::<Vec<_>>(),
            &order
                .iter()
                .map(|&i| reports[i].clone())
                .collect::<Vec<_>>(),
            &BandSpec::default(),
        ),
    );
    let same =
        |x: &vitalwave_core::Result<vitalwave_core::PhysioSignal>,
         y: &vitalwave_core::Result<vitalwave_core::PhysioSignal>| match (x, y) {
            (Ok(x), Ok(y)) => x
                .samples
                .iter()
                .zip(&y.samples)
                .all(|(p, q)| (p - q).abs() < 1e-9),
            (Err(_), Err(_)) => true,
            _ => false,
        };
    check("fusion permutation", same(&a.0, &b.0) && same(&a.1, &b.1));

    let cube = synthesize_cube(&Scenario::default_with(Coverage::All, 8))
        .unwrap()
        .select_channels(&[1])
        .unwrap();
    let pick = |c: &RadarCube| {
        select_effective_bins(
            &channel_range_time(c, 0).unwrap(),
            CfarParams::default(),
            &BandSpec::default(),
        )
        .unwrap()
        .iter()
        .map(|b| b.bin_index)
        .collect::<Vec<_>>()
    };
    let big = RadarCube::new(
        cube.config,
        cube.num_chirps,
        cube.samples_per_chirp,
        cube.data().iter().map(|z| z * 250.0).collect(),
    )
    .unwrap();
    check("selection scale", pick(&cube) == pick(&big));
    let x = add(&tone(1.3, 1.0, 0.1), &gauss(&mut r, N, 0.2));
    let m1 = match_bank(&signal(x.clone()), &default_banks().heart).unwrap();
    let m2 = match_bank(
        &signal(x.iter().map(|v| v * 1e-3).collect()),
        &default_banks().heart,
    )
    .unwrap();
    check(
        "matching scale",
        m1.rate_bpm == m2.rate_bpm && (m1.score - m2.score).abs() < 1e-9,
    );

    let bytes = write_cube(&cube);
    check(
        "file round trip",
        write_cube(&parse_cube(&bytes).unwrap()) == bytes,
    );
    let sc = Scenario::default_with(Coverage::LeftHalf, 99);
    check(
        "seed determinism",
        synthesize_cube(&sc).unwrap() == synthesize_cube(&sc).unwrap(),
    );
    let wrapped: Vec<f64> = (0..400)
        .map(|i| (0.3 * i as f64).sin() * 9.0 % std::f64::consts::PI)
        .collect();
    check(
        "unwrap",
        unwrap(&wrapped)
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() <= std::f64::consts::PI),
    );

    let pass = failures.is_empty();
    report(
        "8",
        pass,
        if pass {
            "partition, screening, permutation, scale, round trip, determinism, unwrap all hold"
                .into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    );
    assert!(pass);
}

#[test]
fn criterion_9_performance() {
    const CUBE_BUDGET_S: f64 = 1.0;
    const SWEEP_BUDGET_S: f64 = 1200.0;
    let banks = default_banks();
    let cube = synthesize_cube(&Scenario::default_with(Coverage::All, 9)).unwrap();
    run_pipeline(
        &cube,
        PipelineId::Proposed,
        &ProcessOptions::default(),
        banks,
    )
    .unwrap();
    let mut times: Vec<f64> = (0..3)
        .map(|_| {
            let t0 = Instant::now();
            run_pipeline(
                &cube,
                PipelineId::Proposed,
                &ProcessOptions::default(),
                banks,
            )
            .unwrap();
            secs(t0.elapsed())
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let per_cube = times[1];
    let t0 = Instant::now();
    run_sweep(
        &ScenarioGrid::default(),
        &PipelineId::ALL,
        &ProcessOptions::default(),
        banks,
    )
    .unwrap();
    let sweep = secs(t0.elapsed());
    let pass = per_cube < CUBE_BUDGET_S && sweep < SWEEP_BUDGET_S;
    report(
        "9",
        pass,
        format!(
            "proposed cube {per_cube:.3} s (< {CUBE_BUDGET_S} s), default sweep {sweep:.1} s (< {SWEEP_BUDGET_S} s), rayon pool of {}",
            rayon::current_num_threads()
        ),
    );
    assert!(pass);
}
