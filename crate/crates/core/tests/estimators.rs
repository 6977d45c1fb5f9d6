//! Monte-Carlo and closed-loop checks of the fusion and matching stages.

mod common;

use common::*;
use vitalwave_core::channel_fusion::{
    band_snr, build_reports, fuse_by_class, ChannelClass, ClassRule, SnrPair,
};
use vitalwave_core::dsp::{bandpass_zero_phase, periodogram};
use vitalwave_core::model::{HEART_BAND, RESP_BAND};
use vitalwave_core::pipeline::{run_pipeline, PipelineId, ProcessOptions};
use vitalwave_core::preprocess::cube_range_time;
use vitalwave_core::range_fusion::{
    coherent_estimate, estimate_delays, estimate_delays_with_polarity, fuse_range_bins,
    pick_reference_bin, BinSignalMatrix,
};
use vitalwave_core::range_select::{select_with_fallback, BandSpec, CfarParams};
use vitalwave_core::sim::{synthesize_cube, vdp_limit_cycle, Coverage, Scenario};
use vitalwave_core::template::{
    default_banks, match_bank, HeartTemplateParams, RespTemplateParams, Template, TemplateBank,
    RATE_STEP_BPM,
};

#[test]
fn reference_is_a_sinusoid_row() {
    for s in 0..20 {
        let rows = vec![
            tone(0.25, 1.0, 0.0),
            tone(0.25, 0.8, 0.4),
            gauss(&mut rng(s), N, 1.0),
        ];
        let y = BinSignalMatrix::new(rows, vec![10, 11, 12], RATE).unwrap();
        assert!(pick_reference_bin(&y) < 2);
    }
}

#[test]
fn shifted_row_reports_its_delay() {
    let base = add(&tone(0.3, 1.0, 0.0), &tone(0.55, 0.4, 1.0));
    let mut late = vec![0.0; 3];
    late.extend_from_slice(&base[..N - 3]);
    let y = BinSignalMatrix::new(vec![base, late], vec![0, 1], RATE).unwrap();
    assert_eq!(estimate_delays(&y, 0), vec![0, 3]);
}

#[test]
fn pure_noise_rows_reconstruct_poorly() {
    for s in 0..50 {
        let mut r = rng(100 + s);
        let rows: Vec<Vec<f64>> = (0..8).map(|_| gauss(&mut r, N, 1.0)).collect();
        let y = BinSignalMatrix::new(rows, (0..8).collect(), RATE).unwrap();
        let reference = pick_reference_bin(&y);
        let (delays, pol) = estimate_delays_with_polarity(&y, reference);
        let (s_hat, h) = coherent_estimate(&y, &delays, &pol).unwrap();
        let fit = (h.iter().map(|v| v * v).sum::<f64>() * s_hat.iter().map(|v| v * v).sum::<f64>())
            .sqrt();
        let total = y.rows().iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!(fit / total < 0.5, "seed {s}: {}", fit / total);
    }
}

#[test]
fn band_snr_of_a_constructed_tone() {
    let a = tone_amplitude(20.0);
    let est: Vec<f64> = (0..500)
        .map(|s| {
            let x = add(&tone(0.25, a, 0.3), &gauss(&mut rng(s), N, 1.0));
            band_snr(&signal(x), &BandSpec::default()).unwrap().snr_b_db
        })
        .collect();
    let m = mean(&est);
    assert!((m - 20.0).abs() < 2.0, "mean SNR_B {m}");
}

#[test]
fn band_snr_of_pure_noise_sits_near_zero() {
    let pairs: Vec<SnrPair> = (0..500)
        .map(|s| band_snr(&signal(gauss(&mut rng(s), N, 1.0)), &BandSpec::default()).unwrap())
        .collect();
    let b = mean(&pairs.iter().map(|p| p.snr_b_db).collect::<Vec<_>>());
    let h = mean(&pairs.iter().map(|p| p.snr_h_db).collect::<Vec<_>>());
    // The in-band peak search favours the largest noise bump; the wider
    // heart band picks a higher one.
    assert!(b.abs() < 4.0, "mean SNR_B {b}");
    assert!(h.abs() < 4.5, "mean SNR_H {h}");
    assert!(h > b);
}

#[test]
fn heart_tone_raises_heart_snr() {
    for s in 0..20 {
        let x = add(
            &tone(1.2, tone_amplitude(20.0), 0.0),
            &gauss(&mut rng(s), N, 1.0),
        );
        let p = band_snr(&signal(x), &BandSpec::default()).unwrap();
        assert!(p.snr_h_db - p.snr_b_db >= 10.0, "{p:?}");
    }
}

fn fused_gain(rows: Vec<Vec<f64>>, single: &[f64]) -> (f64, f64) {
    let n = rows.len();
    let y = BinSignalMatrix::new(rows, (0..n).collect(), RATE).unwrap();
    let (fused, _) = fuse_range_bins(&y).unwrap();
    let f = band_snr(&fused, &BandSpec::default()).unwrap().snr_b_db;
    let b = band_snr(&signal(single.to_vec()), &BandSpec::default())
        .unwrap()
        .snr_b_db;
    (f, b)
}

#[test]
fn mrc_gain_for_three_equal_bins() {
    let s = tone(0.25, tone_amplitude(15.0), 0.2);
    let gains: Vec<f64> = (0..100)
        .map(|seed| {
            let mut r = rng(seed);
            let rows: Vec<Vec<f64>> = (0..3).map(|_| add(&s, &gauss(&mut r, N, 1.0))).collect();
            let first = rows[0].clone();
            let (f, b) = fused_gain(rows, &first);
            f - b
        })
        .collect();
    let g = mean(&gains);
    assert!((g - 10.0 * 3f64.log10()).abs() < 1.0, "mean gain {g} dB");
}

#[test]
fn mrc_never_much_worse_than_best_bin() {
    // Unit-gain rows sit 20 dB above the noise in the peak window.
    let s = tone(0.25, tone_amplitude(20.0), 0.0);
    let mut ok = 0;
    for seed in 0..100 {
        let mut r = rng(500 + seed);
        let gains: Vec<f64> = gauss(&mut r, 3, 1.0)
            .iter()
            .map(|g| 0.2 + 0.8 * (0.5 + 0.5 * g.tanh()))
            .collect();
        let rows: Vec<Vec<f64>> = gains
            .iter()
            .map(|g| {
                add(
                    &s.iter().map(|v| g * v).collect::<Vec<_>>(),
                    &gauss(&mut r, N, 1.0),
                )
            })
            .collect();
        let best = (0..3)
            .map(|i| projection_snr(&rows[i], &s))
            .fold(f64::MIN, f64::max);
        let y = BinSignalMatrix::new(rows, vec![0, 1, 2], RATE).unwrap();
        let fused = projection_snr(&fuse_range_bins(&y).unwrap().0.samples, &s);
        ok += (fused >= best - 0.5) as usize;
    }
    assert!(ok >= 95, "{ok}/100 trials within 0.5 dB of the best bin");
}

#[test]
fn lone_mixed_channel_passes_through_both_streams() {
    let x = add(&tone(0.25, 1.0, 0.0), &tone(1.25, 1.0, 0.0));
    let snr = SnrPair {
        snr_b_db: 12.0,
        snr_h_db: 12.0,
    };
    let reports = build_reports(&[0], &[snr], ClassRule::Partition);
    assert_eq!(reports[0].class, ChannelClass::Mixed);
    let (r, h) = fuse_by_class(&[signal(x.clone())], &reports, &BandSpec::default());
    let (r, h) = (r.unwrap(), h.unwrap());
    let want_r = bandpass_zero_phase(&x, RATE, RESP_BAND.0, RESP_BAND.1);
    let want_h = bandpass_zero_phase(&x, RATE, HEART_BAND.0, HEART_BAND.1);
    assert!(r
        .samples
        .iter()
        .zip(&want_r)
        .all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(h
        .samples
        .iter()
        .zip(&want_h)
        .all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn fused_streams_peak_at_the_true_rates() {
    let bands = BandSpec::default();
    for seed in 0..5 {
        let sc = Scenario::default_with(Coverage::All, 40 + seed);
        let cube = synthesize_cube(&sc).unwrap();
        let signals: Vec<_> = cube_range_time(&cube)
            .unwrap()
            .iter()
            .map(|m| {
                let sel = select_with_fallback(m, CfarParams::default(), &bands).unwrap();
                let phases: Vec<_> = sel.bins.iter().map(|c| &c.phase).collect();
                let y = BinSignalMatrix::from_signals(
                    &phases,
                    sel.bins.iter().map(|c| c.bin_index).collect(),
                )
                .unwrap();
                fuse_range_bins(&y).unwrap().0
            })
            .collect();
        let snrs: Vec<SnrPair> = signals
            .iter()
            .map(|s| band_snr(s, &bands).unwrap())
            .collect();
        let reports = build_reports(&(0..8).collect::<Vec<_>>(), &snrs, ClassRule::Partition);
        let (r, h) = fuse_by_class(&signals, &reports, &bands);
        for (stream, band, truth) in [
            (r.unwrap(), RESP_BAND, 15.0),
            (h.unwrap(), HEART_BAND, 75.0),
        ] {
            let psd = periodogram(&stream.samples, RATE, 1024);
            let k = psd.argmax_in(band.0, band.1).unwrap();
            assert!(
                (psd.freq(k) - truth / 60.0).abs() <= psd.df * 1.0001,
                "seed {seed}: {} Hz",
                psd.freq(k)
            );
        }
    }
}

fn noisy(template: &Template, snr_db: f64, seed: u64) -> Vec<f64> {
    let x = template.render(N as f64 / RATE, RATE).unwrap().samples;
    let p = x.iter().map(|v| v * v).sum::<f64>() / N as f64;
    add(
        &x,
        &gauss(&mut rng(seed), N, (p / 10f64.powf(snr_db / 10.0)).sqrt()),
    )
}

#[test]
fn noisy_template_recovers_its_rate() {
    let banks = default_banks();
    let heart = TemplateBank::from_templates(banks.heart.templates.clone());
    let resp = TemplateBank::from_templates(banks.resp.templates.clone());
    let th = Template::heart(HeartTemplateParams {
        hr_bpm: 75.0,
        vdp_alpha: 1.5,
    })
    .unwrap();
    let tr = Template::resp(RespTemplateParams {
        rr_bpm: 15.0,
        t1_fraction: 0.4,
        tau_rs_s: 0.6,
    })
    .unwrap();
    let (mut ok_h, mut ok_r) = (0, 0);
    for seed in 0..100 {
        ok_h += ((match_bank(&signal(noisy(&th, 10.0, seed)), &heart)
            .unwrap()
            .rate_bpm
            - 75.0)
            .abs()
            <= RATE_STEP_BPM + 1e-9) as usize;
        ok_r += ((match_bank(&signal(noisy(&tr, 10.0, 1000 + seed)), &resp)
            .unwrap()
            .rate_bpm
            - 15.0)
            .abs()
            <= RATE_STEP_BPM + 1e-9) as usize;
    }
    assert!(ok_h >= 95, "heart {ok_h}/100");
    assert!(ok_r >= 95, "resp {ok_r}/100");
}

#[test]
fn negated_template_is_found_at_half_period() {
    let heart = TemplateBank::from_templates(default_banks().heart.templates.clone());
    let t = Template::heart(HeartTemplateParams {
        hr_bpm: 75.0,
        vdp_alpha: 0.5,
    })
    .unwrap();
    let x: Vec<f64> = t
        .render(N as f64 / RATE, RATE)
        .unwrap()
        .samples
        .iter()
        .map(|v| -v)
        .collect();
    let m = match_bank(&signal(x), &heart).unwrap();
    assert!(m.score >= 0.99, "score {}", m.score);
    assert!((m.rate_bpm - 75.0).abs() <= RATE_STEP_BPM + 1e-9);
}

#[test]
fn relaxation_raises_crest_factor() {
    let crest = |alpha: f64| {
        let c = vdp_limit_cycle(alpha).unwrap();
        let v: Vec<f64> = (0..4096)
            .map(|i| c.normalized_at_phase(i as f64 / 4096.0))
            .collect();
        let d: Vec<f64> = (0..4096).map(|i| v[(i + 1) % 4096] - v[i]).collect();
        let cf = |x: &[f64]| {
            x.iter().fold(0.0f64, |m, a| m.max(a.abs()))
                / (x.iter().map(|a| a * a).sum::<f64>() / x.len() as f64).sqrt()
        };
        (cf(&v), cf(&d))
    };
    let (v0, d0) = crest(0.0);
    let (v5, d5) = crest(5.0);
    // Displacement flattens toward a square wave; its slope sharpens.
    println!("crest factor V: {v0:.3} -> {v5:.3}, dV/dt: {d0:.3} -> {d5:.3}");
    assert!((v0 - 2f64.sqrt()).abs() < 1e-3);
    assert!(v5 < v0);
    assert!(d5 > 3.0 * d0);
}

#[test]
fn closed_loop_at_30_db() {
    let banks = default_banks();
    for seed in 0..5 {
        let mut sc = Scenario::default_with(Coverage::All, 70 + seed);
        sc.noise_snr_db = Some(30.0);
        let est = run_pipeline(
            &synthesize_cube(&sc).unwrap(),
            PipelineId::Proposed,
            &ProcessOptions::default(),
            banks,
        )
        .unwrap()
        .estimate;
        assert!(
            (est.rr_bpm - 15.0).abs() <= 0.5,
            "seed {seed}: rr {}",
            est.rr_bpm
        );
        assert!(
            (est.hr_bpm - 75.0).abs() <= 2.0,
            "seed {seed}: hr {}",
            est.hr_bpm
        );
    }
}
