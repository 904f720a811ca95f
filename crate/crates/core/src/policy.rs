//! Pure decision logic: per-slot bitrate choice, the sleep rule, dynamic
//! control-parameter scaling for finite videos, the oscillation guards and
//! the download-abandonment test.
//!
//! Everything here is a pure function over explicit state; the simulator owns
//! the clock and the buffer.

use crate::model::{derive_v, Variant, VideoManifest};

/// A per-slot control decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Download the next chunk at ladder index `m` (1-based, 1 = highest).
    Download { m: usize },
    /// Do not download; wait until the buffer drains below the threshold.
    SleepUntilBufferBelow { threshold_chunks: f64 },
    /// Let the buffer drain for a fixed time, then download at `m`.
    PauseThenDownload { pause_s: f64, m: usize },
}

/// State the policy carries across chunks: the previous bitrate choice and
/// the bandwidth measured on the last completed (or abandoned) download.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolicyState {
    pub previous_choice: Option<usize>,
    pub measured_bandwidth_bps: Option<f64>,
}

/// The per-slot objective value for one ladder level:
/// `(V * utility + V * gamma_p - Q) / size`.
///
/// Linear and strictly decreasing in `Q`; units are utility per bit.
pub fn score(v: f64, gamma_p: f64, utility: f64, q_chunks: f64, size_bits: f64) -> f64 {
    (v * utility + v * gamma_p - q_chunks) / size_bits
}

/// Index (1-based) maximizing [`score`] over the ladder; ties break toward
/// the smallest index, i.e. the highest bitrate.
pub fn argmax_score(
    q_chunks: f64,
    v: f64,
    gamma_p: f64,
    sizes_bits: &[f64],
    utilities: &[f64],
) -> usize {
    let mut best = 1;
    let mut best_score = score(v, gamma_p, utilities[0], q_chunks, sizes_bits[0]);
    for m in 2..=sizes_bits.len() {
        let s = score(v, gamma_p, utilities[m - 1], q_chunks, sizes_bits[m - 1]);
        if s > best_score {
            best = m;
            best_score = s;
        }
    }
    best
}

/// The fixed-V decision rule for chunk `n`: sleep while the buffer is above
/// `V * (utility_1 + gamma_p)`, otherwise download the score-maximizing
/// level using chunk `n`'s own sizes.
pub fn bola_basic_decide(
    q_chunks: f64,
    v: f64,
    gamma_p: f64,
    manifest: &VideoManifest,
    n: usize,
) -> Decision {
    let cutoff = v * (manifest.top_utility() + gamma_p);
    if q_chunks > cutoff {
        return Decision::SleepUntilBufferBelow {
            threshold_chunks: cutoff,
        };
    }
    let sizes = manifest.chunk_sizes(n);
    let m = argmax_score(q_chunks, v, gamma_p, &sizes, &manifest.utilities());
    Decision::Download { m }
}

/// Buffer level (chunks) at which the score lines of levels `a` and `c`
/// cross, with `a < c` (so `size_a > size_c`).
fn crossing(v: f64, gamma_p: f64, sizes: &[f64], utilities: &[f64], a: usize, c: usize) -> f64 {
    let (s_a, s_c) = (sizes[a - 1], sizes[c - 1]);
    let (u_a, u_c) = (utilities[a - 1], utilities[c - 1]);
    v * ((u_c * s_a - u_a * s_c) / (s_a - s_c) + gamma_p)
}

/// Boundaries of the step function that [`bola_basic_decide`] induces over
/// the buffer level, computed from mean sizes.
///
/// Returns `M + 1` buffer levels (chunks): entry 0 is zero, entry `i` for
/// `1 <= i < M` is the boundary where the choice switches from level
/// `M - i + 1` to level `M - i`, and entry `M` is the no-download cutoff
/// `V * (utility_1 + gamma_p)`. Levels never chosen appear as zero-width
/// regions (equal adjacent boundaries).
pub fn decision_thresholds(
    v: f64,
    gamma_p: f64,
    mean_sizes: &[f64],
    utilities: &[f64],
) -> Vec<f64> {
    let m_count = mean_sizes.len();
    let cutoff = v * (utilities[0] + gamma_p);
    let mut bounds = vec![0.0; m_count + 1];
    bounds[m_count] = cutoff;
    if m_count == 1 {
        return bounds;
    }

    // Walk the upper envelope of the score lines from Q = 0 upward. The
    // boundary between levels l and l - 1 lives at bounds[M - l + 1].
    let mut q = 0.0;
    let mut cur = argmax_score(0.0, v, gamma_p, mean_sizes, utilities);
    while cur > 1 {
        // The next level to take over is the one with the nearest crossing
        // above q among all higher-bitrate lines.
        let mut next_q = f64::INFINITY;
        let mut next_level = 0;
        for a in 1..cur {
            if mean_sizes[a - 1] <= mean_sizes[cur - 1] {
                continue; // parallel or ill-ordered lines never cross
            }
            let x = crossing(v, gamma_p, mean_sizes, utilities, a, cur);
            if x >= q - 1e-12 && (x < next_q - 1e-12 || (x < next_q + 1e-12 && a < next_level)) {
                next_q = x;
                next_level = a;
            }
        }
        if next_level == 0 {
            break;
        }
        let boundary = next_q.min(cutoff);
        for l in (next_level + 1)..=cur {
            bounds[m_count - l + 1] = boundary;
        }
        q = next_q;
        cur = next_level;
        if q >= cutoff {
            break;
        }
    }
    bounds
}

/// Dynamic buffer cap and control parameter for finite videos.
///
/// `t = min(playtime_from_begin, playtime_to_end)`, `t' = max(t/2, min_buffer)`,
/// `Q_max_dyn = min(Q_max, t'/p)`, `V_dyn = (Q_max_dyn - 1)/(utility_1 + gamma_p)`.
pub fn dynamic_v(
    playtime_from_begin_s: f64,
    playtime_to_end_s: f64,
    q_max_chunks: f64,
    utility_1: f64,
    gamma_p: f64,
    p: f64,
    minimum_buffer_chunks: f64,
) -> (f64, f64) {
    let t = playtime_from_begin_s.min(playtime_to_end_s);
    let t_prime = (t / 2.0).max(minimum_buffer_chunks * p);
    let q_max_dyn = q_max_chunks.min(t_prime / p);
    let v_dyn = derive_v(q_max_dyn, utility_1, gamma_p)
        .expect("dynamic buffer cap is at least minimum_buffer_chunks > 1");
    (q_max_dyn, v_dyn)
}

/// Caps an up-switch (`m_new < m_prev`) against the bandwidth measured on
/// the previous download.
///
/// `m'` is the highest bitrate the measured bandwidth sustains. If it lies
/// strictly between the old and new choices, the O variant pauses until the
/// buffer drains to where `m'` scores at least as well as `m' - 1` and then
/// downloads `m'`; the U variant downloads one level above `m'`. The plain
/// finite variant leaves the choice alone.
pub fn oscillation_guard(
    m_new: usize,
    m_prev: usize,
    measured_bps: f64,
    chunk_sizes_bits: &[f64],
    utilities: &[f64],
    p: f64,
    variant: Variant,
    v_dyn: f64,
    gamma_p: f64,
    q_chunks: f64,
) -> Decision {
    debug_assert!(m_new < m_prev);
    if variant == Variant::Finite || variant == Variant::Basic {
        return Decision::Download { m: m_new };
    }
    let m_count = chunk_sizes_bits.len();
    let floor_rate = chunk_sizes_bits[m_count - 1] / p;
    let sustainable = measured_bps.max(floor_rate);
    let m_cap = (1..=m_count)
        .find(|&m| chunk_sizes_bits[m - 1] / p <= sustainable)
        .unwrap_or(m_count);

    if m_cap <= m_new {
        Decision::Download { m: m_new }
    } else if m_cap > m_prev {
        Decision::Download { m: m_prev }
    } else if variant == Variant::O {
        // Let the buffer slip to where m_cap overtakes m_cap - 1, then
        // download. Capped at a full drain in case the crossing is below
        // zero.
        let q_cross = crossing(v_dyn, gamma_p, chunk_sizes_bits, utilities, m_cap - 1, m_cap);
        let pause_s = if q_cross.is_finite() {
            (p * (q_chunks - q_cross)).clamp(0.0, p * q_chunks)
        } else {
            0.0 // adjacent levels have equal size; the scores never cross
        };
        Decision::PauseThenDownload {
            pause_s,
            m: m_cap,
        }
    } else {
        Decision::Download { m: m_cap - 1 }
    }
}

/// Whether to abandon an in-flight download of chunk level `m` with
/// `remaining_bits` still to fetch, and if so at which level to restart.
///
/// A lower level `m'` wins when its full-size score beats the current
/// level's remaining-size score; a restart is only worthwhile for a
/// positive score.
pub fn shall_abandon(
    m: usize,
    remaining_bits: f64,
    q_chunks: f64,
    v_dyn: f64,
    gamma_p: f64,
    chunk_sizes_bits: &[f64],
    utilities: &[f64],
) -> Option<usize> {
    let m_count = chunk_sizes_bits.len();
    if m >= m_count {
        return None;
    }
    let current = score(v_dyn, gamma_p, utilities[m - 1], q_chunks, remaining_bits);
    let mut best: Option<(usize, f64)> = None;
    for cand in (m + 1)..=m_count {
        let s = score(
            v_dyn,
            gamma_p,
            utilities[cand - 1],
            q_chunks,
            chunk_sizes_bits[cand - 1],
        );
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((cand, s));
        }
    }
    match best {
        Some((cand, s)) if s > current && s > 0.0 => Some(cand),
        _ => None,
    }
}
