//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line. Tolerances are pinned as constants next to each check.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bola_core::metrics::{self, Metrics};
use bola_core::model::{derive_v, log_utilities, BitrateLevel, PlayerConfig, Variant, VideoManifest};
use bola_core::oracle::{brute_force_optimal, offline_optimal, OracleConfig};
use bola_core::policy::{bola_basic_decide, decision_thresholds, Decision};
use bola_core::simulator::{simulate, NetworkTrace, SessionLog, TraceSegment};
use bola_core::traces::{gen_profile, gen_synthetic_trace, gen_vbr_manifest};

/// Seed for every generated manifest in this suite.
const MANIFEST_SEED: u64 = 12061;
const GAMMA_P: f64 = 5.0;
const BUFFER_S: f64 = 25.0;
const CHUNK_S: f64 = 3.0;

fn verdict(label: &str, pass: bool, detail: &str) {
    println!(
        "acceptance [{label}]: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "[{label}] {detail}");
}

/// Five-level constant-bitrate ladder with logarithmic utilities.
fn five_level_ladder(chunks: usize) -> VideoManifest {
    let sizes_mb = [18.00, 8.886, 4.281, 2.064, 0.993];
    let levels = sizes_mb
        .iter()
        .map(|&s| BitrateLevel {
            nominal_bitrate_bps: s * 1e6 / CHUNK_S,
            utility: 0.0,
            chunk_sizes_bits: vec![s * 1e6; chunks],
        })
        .collect();
    let mut m = VideoManifest {
        chunk_duration_s: CHUNK_S,
        levels,
    };
    log_utilities(&mut m).unwrap();
    m
}

/// Ten-minute sessions for all variants on all twelve profiles, plus the
/// offline bound per profile. Computed once and shared by several criteria.
struct ProfileRuns {
    bounds: HashMap<usize, f64>,
    runs: HashMap<(usize, Variant), (SessionLog, Metrics)>,
    build_s: f64,
}

fn profile_runs() -> &'static ProfileRuns {
    static RUNS: OnceLock<ProfileRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let manifest = gen_vbr_manifest(200, CHUNK_S, MANIFEST_SEED).unwrap();
        let mut bounds = HashMap::new();
        let mut runs = HashMap::new();
        for id in 1..=12 {
            let trace = gen_profile(id).unwrap();
            let config = OracleConfig::new(0.25, BUFFER_S);
            let bound = offline_optimal(&manifest, &trace, GAMMA_P, &config).unwrap();
            bounds.insert(id, bound.r_star);
            for variant in [Variant::Basic, Variant::Finite, Variant::O, Variant::U] {
                let pc = PlayerConfig::new(variant, GAMMA_P, BUFFER_S / CHUNK_S);
                let log = simulate(&manifest, &trace, &pc).unwrap();
                let m = metrics::compute(&log, &manifest, GAMMA_P).unwrap();
                runs.insert((id, variant), (log, m));
            }
        }
        ProfileRuns {
            bounds,
            runs,
            build_s: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_1_threshold_geometry() {
    let start = Instant::now();
    let m = five_level_ladder(33);
    let (v, gamma_p) = (0.93, 5.0);
    let thresholds = decision_thresholds(v, gamma_p, &m.mean_sizes(), &m.utilities());

    const CHUNK_TOL: f64 = 2e-3;
    const SECOND_TOL: f64 = 6e-3;
    let cutoff = *thresholds.last().unwrap();
    let lowest_boundary = thresholds[1];
    let mut ok = thresholds.len() == 6;
    ok &= (cutoff - 7.344).abs() <= CHUNK_TOL;
    ok &= (cutoff * CHUNK_S - 22.03).abs() <= SECOND_TOL * 3.0;
    ok &= (lowest_boundary * CHUNK_S - 12.06).abs() <= SECOND_TOL;

    // The closed-form map and the per-decision rule must agree everywhere.
    let mut mismatches = 0;
    let mut q = 0.0;
    while q <= cutoff + 1.0 {
        let expected = if q > cutoff + 1e-9 {
            None
        } else {
            let region = thresholds[..5]
                .iter()
                .rposition(|&t| q >= t - 1e-12)
                .unwrap();
            Some(5 - region)
        };
        let got = match bola_basic_decide(q, v, gamma_p, &m, 1) {
            Decision::Download { m } => Some(m),
            _ => None,
        };
        if got != expected {
            mismatches += 1;
        }
        q += 0.01;
    }
    ok &= mismatches == 0;
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 1.0;
    verdict(
        "1 threshold geometry",
        ok,
        &format!(
            "cutoff {cutoff:.4} chunks = {:.3} s, lowest-pair boundary {:.3} s, \
             {mismatches} mismatches at 0.01 granularity, {elapsed:.2} s",
            cutoff * CHUNK_S,
            lowest_boundary * CHUNK_S
        ),
    );
}

#[test]
fn criterion_2_buffer_bounds() {
    let start = Instant::now();
    let manifest = gen_vbr_manifest(200, CHUNK_S, MANIFEST_SEED).unwrap();
    let q_max = BUFFER_S / CHUNK_S;
    let v = derive_v(q_max, manifest.top_utility(), GAMMA_P).unwrap();
    let bound = v * (manifest.top_utility() + GAMMA_P) + 1.0;
    const SLACK: f64 = 1e-9;

    let mut traces: Vec<NetworkTrace> = (1..=12).map(|id| gen_profile(id).unwrap()).collect();
    for seed in 0..100 {
        traces.push(gen_synthetic_trace(seed, 660.0).unwrap());
    }

    let mut violations = 0;
    for trace in &traces {
        let config = PlayerConfig::new(Variant::Basic, GAMMA_P, q_max);
        let log = simulate(&manifest, trace, &config).unwrap();
        violations += log.warnings.len();
        for r in &log.records {
            if r.q_start_chunks > bound + SLACK || r.q_start_chunks > q_max + SLACK {
                violations += 1;
            }
        }
        if log.final_buffer_s / CHUNK_S > bound + SLACK {
            violations += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = violations == 0 && elapsed < 30.0;
    verdict(
        "2 buffer never exceeds its bound",
        ok,
        &format!(
            "{} traces, bound {bound:.4} chunks, cap {q_max:.4} chunks, \
             {violations} violations, {elapsed:.1} s",
            traces.len()
        ),
    );
}

#[test]
fn criterion_3_oracle_matches_brute_force() {
    let start = Instant::now();
    const DELTA: f64 = 0.01;
    const B_MAX: f64 = 15.0;
    const REL_TOL: f64 = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    let mut worst_gap = 0.0f64;
    while checked < 55 {
        let n = rng.gen_range(1..=4);
        let m_count = rng.gen_range(2..=3);
        let mut bitrates: Vec<f64> = (0..m_count)
            .map(|_| rng.gen_range(0.3e6..4.0e6))
            .collect();
        bitrates.sort_by(|a, b| b.total_cmp(a));
        if bitrates.windows(2).any(|w| w[0] / w[1] < 1.2) {
            continue; // levels too close to carry distinct utilities
        }
        let mut manifest =
            VideoManifest::cbr(CHUNK_S, n, &bitrates.iter().map(|&b| (b, 0.0)).collect::<Vec<_>>());
        log_utilities(&mut manifest).unwrap();

        let segments = (0..rng.gen_range(1..=3))
            .map(|_| TraceSegment {
                duration_s: rng.gen_range(4.0..20.0),
                bandwidth_bps: rng.gen_range(0.5e6..8.0e6),
                latency_s: rng.gen_range(0.0..0.1),
            })
            .collect();
        let trace = NetworkTrace::new(segments, true).unwrap();

        let exact = brute_force_optimal(&manifest, &trace, GAMMA_P, B_MAX).unwrap();
        // The quantized bound overshoots by up to ~N*DELTA*(gamma + u1) in
        // absolute value; a 1% relative check is only meaningful when the
        // optimum is comfortably above that floor.
        if exact.r_star.abs() < 0.6 {
            continue;
        }
        let config = OracleConfig::new(DELTA, B_MAX);
        let dp = offline_optimal(&manifest, &trace, GAMMA_P, &config).unwrap();
        assert!(
            dp.r_star >= exact.r_star - 1e-9,
            "quantized bound fell below the exact optimum: {} < {}",
            dp.r_star,
            exact.r_star
        );
        let gap = (dp.r_star - exact.r_star) / exact.r_star.abs();
        worst_gap = worst_gap.max(gap);
        assert!(
            gap <= REL_TOL,
            "instance {checked}: gap {gap} exceeds {REL_TOL}"
        );
        checked += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = checked >= 50 && elapsed < 120.0;
    verdict(
        "3 oracle matches exhaustive search",
        ok,
        &format!("{checked} instances, worst relative gap {worst_gap:.5}, {elapsed:.1} s"),
    );
}

#[test]
fn criterion_4_bound_is_an_upper_bound() {
    let shared = profile_runs();
    const SLACK: f64 = 1e-9;
    let mut violations = Vec::new();
    for (&(id, variant), (_, m)) in &shared.runs {
        let r_star = shared.bounds[&id];
        if m.oracle_form > r_star + SLACK {
            violations.push(format!(
                "profile {id} {}: {} > {r_star}",
                variant.as_str(),
                m.oracle_form
            ));
        }
    }
    verdict(
        "4 sessions never beat the offline bound",
        violations.is_empty(),
        &format!(
            "{} sessions against 12 bounds; violations: {:?}",
            shared.runs.len(),
            violations
        ),
    );
}

#[test]
fn criterion_5_near_optimal_utility() {
    let shared = profile_runs();
    const MIN_RATIO: f64 = 0.80;
    let mut worst: (f64, String) = (f64::INFINITY, String::new());
    let mut ok = true;
    for id in 1..=12 {
        for variant in [Variant::Finite, Variant::U] {
            let (_, m) = &shared.runs[&(id, variant)];
            let ratio = m.oracle_form / shared.bounds[&id];
            if ratio < worst.0 {
                worst = (ratio, format!("profile {id} {}", variant.as_str()));
            }
            ok &= ratio >= MIN_RATIO;
        }
    }
    ok &= shared.build_s < 300.0;
    verdict(
        "5 near-optimal on all twelve profiles",
        ok,
        &format!(
            "worst ratio {:.3} at {}, shared setup {:.0} s",
            worst.0, worst.1, shared.build_s
        ),
    );
}

#[test]
fn criterion_6_no_midstream_rebuffering() {
    let shared = profile_runs();
    let mut offenders = Vec::new();
    for id in 1..=12 {
        for variant in [Variant::Finite, Variant::O, Variant::U] {
            let (log, _) = &shared.runs[&(id, variant)];
            if log.midstream_rebuffer_s != 0.0 {
                offenders.push(format!(
                    "profile {id} {}: {} s",
                    variant.as_str(),
                    log.midstream_rebuffer_s
                ));
            }
        }
    }
    verdict(
        "6 zero mid-stream rebuffering",
        offenders.is_empty(),
        &format!("36 sessions; offenders: {offenders:?}"),
    );
}

#[test]
fn criterion_7_oscillation_ordering() {
    let shared = profile_runs();
    let mut ok = true;
    let mut detail = String::new();
    for id in 1..=12 {
        let o = shared.runs[&(id, Variant::O)].1.avg_bitrate_change_mbps;
        let u = shared.runs[&(id, Variant::U)].1.avg_bitrate_change_mbps;
        if o > u + 1e-12 {
            ok = false;
            detail += &format!("profile {id}: O {o:.3} > U {u:.3}; ");
        }
    }

    // Constant bandwidth strictly between two ladder rates: the damped
    // variant must settle, the utility-preserving one must keep switching.
    let manifest = five_level_ladder(200);
    let trace = NetworkTrace::new(
        vec![TraceSegment {
            duration_s: 60.0,
            bandwidth_bps: 2.0e6,
            latency_s: 0.05,
        }],
        true,
    )
    .unwrap();
    let steady_change = |variant: Variant| -> f64 {
        let pc = PlayerConfig::new(variant, GAMMA_P, BUFFER_S / CHUNK_S);
        let log = simulate(&manifest, &trace, &pc).unwrap();
        let mbps: Vec<f64> = log.chunk_levels[40..]
            .iter()
            .map(|&m| manifest.nominal_mbps(m))
            .collect();
        mbps.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (mbps.len() - 1) as f64
    };
    let o_steady = steady_change(Variant::O);
    let u_steady = steady_change(Variant::U);
    ok &= o_steady == 0.0 && u_steady > 0.0;
    verdict(
        "7 damped variant switches least",
        ok,
        &format!(
            "per-profile ordering held; steady-state change at 2.0 Mbps: \
             O {o_steady:.3}, U {u_steady:.3} Mbps; {detail}"
        ),
    );
}

#[test]
fn criterion_8_finite_beats_basic_across_buffers() {
    let manifest = gen_vbr_manifest(600, CHUNK_S, MANIFEST_SEED).unwrap();
    let trace = gen_profile(1).unwrap();
    let buffers = [10.0, 25.0, 60.0, 120.0];
    let joint = |variant: Variant, buffer_s: f64| -> f64 {
        let pc = PlayerConfig::new(variant, GAMMA_P, buffer_s / CHUNK_S);
        let log = simulate(&manifest, &trace, &pc).unwrap();
        metrics::compute(&log, &manifest, GAMMA_P).unwrap().joint_utility
    };
    let basic: Vec<f64> = buffers.iter().map(|&b| joint(Variant::Basic, b)).collect();
    let finite: Vec<f64> = buffers.iter().map(|&b| joint(Variant::Finite, b)).collect();

    let finite_wins = basic
        .iter()
        .zip(&finite)
        .all(|(b, f)| f > b);
    let basic_monotone = basic.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    verdict(
        "8 startup-aware variant dominates the fixed-parameter one",
        finite_wins && basic_monotone,
        &format!(
            "buffers {buffers:?} s; basic {basic:?}; finite {finite:?}; \
             finite wins everywhere: {finite_wins}; basic non-increasing: {basic_monotone}. \
             Known shortfalls of the fixed-parameter rule at small buffers: with a 10 s \
             buffer its top-bitrate band sits just below the cutoff, and an 18 Mb chunk \
             at 1.5 Mbps outlasts any possible buffer, so it stalls heavily there and \
             scores worse than at 25 s; at 25 s both rules coincide in steady state and \
             the ordering is a coin flip"
        ),
    );
}
