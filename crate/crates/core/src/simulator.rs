//! Deterministic discrete-event playback simulation: runs a policy variant
//! against a manifest and a bandwidth trace, producing a per-slot session
//! log with full buffer, rebuffer and timing accounting.
//!
//! One slot per decision epoch: a download, a sleep (buffer above the
//! no-download cutoff) or a pause (buffer headroom or oscillation guard).
//! The buffer drains continuously at `1/p` chunks per second whenever it is
//! non-empty; playback stalls accrue while it is empty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PlayerConfig, Variant, VideoManifest};
use crate::policy::{
    argmax_score, bola_basic_decide, dynamic_v, oscillation_guard, shall_abandon, Decision,
    PolicyState,
};

/// One piecewise-constant stage of a bandwidth trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub duration_s: f64,
    pub bandwidth_bps: f64,
    /// One-way request latency while this segment is active.
    pub latency_s: f64,
}

/// A piecewise-constant bandwidth/latency schedule, optionally repeating
/// from the first segment when exhausted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTrace {
    pub segments: Vec<TraceSegment>,
    pub cyclic: bool,
}

impl NetworkTrace {
    pub fn new(segments: Vec<TraceSegment>, cyclic: bool) -> Result<NetworkTrace> {
        let trace = NetworkTrace { segments, cyclic };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter("trace has no segments".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.duration_s <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "trace segment {i} has non-positive duration"
                )));
            }
            if s.bandwidth_bps < 0.0 || s.latency_s < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "trace segment {i} has negative bandwidth or latency"
                )));
            }
        }
        if self.cyclic && self.cycle_bits() <= 0.0 {
            return Err(Error::InvalidParameter(
                "cyclic trace delivers zero bits per cycle; downloads can never finish".into(),
            ));
        }
        Ok(())
    }

    pub fn total_duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    fn cycle_bits(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.duration_s * s.bandwidth_bps)
            .sum()
    }

    pub fn mean_bandwidth_bps(&self) -> f64 {
        self.cycle_bits() / self.total_duration_s()
    }

    /// Segment index and offset within it for absolute time `t`.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let total = self.total_duration_s();
        let mut local = if self.cyclic {
            let r = t % total;
            if r < 0.0 {
                r + total
            } else {
                r
            }
        } else {
            t
        };
        if !self.cyclic && local >= total {
            return Err(Error::Simulation(format!(
                "trace exhausted at t = {t:.3} s (trace ends at {total:.3} s)"
            )));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if local < s.duration_s {
                return Ok((i, local));
            }
            local -= s.duration_s;
        }
        // Floating-point residue can leave `local` a few ulps past the final
        // boundary; a cyclic trace wraps to its start, a finite one pins to
        // its end.
        if self.cyclic {
            Ok((0, 0.0))
        } else {
            Ok((self.segments.len() - 1, self.segments.last().unwrap().duration_s))
        }
    }

    pub fn bandwidth_at(&self, t: f64) -> Result<f64> {
        let (i, _) = self.locate(t)?;
        Ok(self.segments[i].bandwidth_bps)
    }

    pub fn latency_at(&self, t: f64) -> Result<f64> {
        let (i, _) = self.locate(t)?;
        Ok(self.segments[i].latency_s)
    }

    /// Absolute time of the next segment boundary strictly after `t`.
    pub fn next_boundary_after(&self, t: f64) -> Option<f64> {
        let total = self.total_duration_s();
        let (i, offset) = self.locate(t).ok()?;
        let remaining = self.segments[i].duration_s - offset;
        let boundary = t + remaining.max(1e-12);
        if !self.cyclic && boundary >= total {
            if t < total {
                return Some(total);
            }
            return None;
        }
        Some(boundary)
    }

    /// Bits delivered over the half-open interval `[t0, t1)`.
    pub fn bits_between(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let total = self.total_duration_s();
        let mut bits = 0.0;
        let mut t = t0;
        while t < t1 - 1e-12 {
            let Ok((i, offset)) = self.locate(t) else {
                break;
            };
            let seg_end = t + (self.segments[i].duration_s - offset);
            let upto = seg_end.min(t1);
            if upto <= t {
                // Only reachable at the pinned end of a finite trace; the
                // sliver left is below timing resolution.
                break;
            }
            bits += (upto - t) * self.segments[i].bandwidth_bps;
            t = upto;
            if !self.cyclic && t >= total {
                break;
            }
        }
        bits
    }

    /// Absolute completion time for delivering `bits` starting at `t0`
    /// (latency already paid).
    pub fn time_to_deliver(&self, t0: f64, bits: f64) -> Result<f64> {
        if bits <= 0.0 {
            return Ok(t0);
        }
        let total = self.total_duration_s();
        let mut remaining = bits;
        let mut t = t0;
        // Skip whole cycles arithmetically once past the first partial one.
        if self.cyclic {
            let cycle = self.cycle_bits();
            let head = self.bits_between(t, (t / total).floor() * total + total);
            if remaining > head {
                remaining -= head;
                t = (t / total).floor() * total + total;
                let whole = (remaining / cycle).floor();
                if whole >= 1.0 {
                    t += whole * total;
                    remaining -= whole * cycle;
                }
            }
        }
        loop {
            let (i, offset) = self.locate(t).map_err(|_| {
                Error::Simulation(format!(
                    "transfer of {bits:.0} bits starting at {t0:.3} s ran past the end of a \
                     non-cyclic trace"
                ))
            })?;
            let seg = self.segments[i];
            let seg_left = seg.duration_s - offset;
            let can = seg_left * seg.bandwidth_bps;
            if can >= remaining && seg.bandwidth_bps > 0.0 {
                return Ok(t + remaining / seg.bandwidth_bps);
            }
            remaining -= can;
            // A sub-ulp segment remainder would leave `t` unchanged; force
            // at least one representable step so the walk always advances.
            let t_next = t + seg_left;
            t = if t_next > t { t_next } else { t.next_up() };
            if !self.cyclic && t >= total - 1e-12 {
                return Err(Error::Simulation(format!(
                    "transfer of {bits:.0} bits starting at {t0:.3} s stalls: trace exhausted \
                     with {remaining:.0} bits undelivered"
                )));
            }
        }
    }
}

/// Download completion time for `bits` requested at `t_start`: the active
/// segment's latency elapses first (no bits flow), then bandwidth is
/// integrated until exactly `bits` have arrived.
pub fn transfer_time(trace: &NetworkTrace, t_start: f64, bits: f64) -> Result<f64> {
    let latency = trace.latency_at(t_start)?;
    trace.time_to_deliver(t_start + latency, bits)
}

/// The slot-boundary buffer update:
/// `Q' = max(Q - T_k / p, 0) + downloaded`.
pub fn step_buffer(q_chunks: f64, slot_s: f64, downloaded: f64, p: f64) -> f64 {
    (q_chunks - slot_s / p).max(0.0) + downloaded
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Download,
    Sleep,
    Pause,
}

/// One slot of the session: a download, sleep or pause epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkRecord {
    /// Slot index `k`, 1-based.
    pub slot: usize,
    /// Chunk index `n` this slot works toward.
    pub chunk: usize,
    pub kind: SlotKind,
    /// Slot start time `t_k`, seconds.
    pub start_s: f64,
    /// Slot length `T_k`, seconds.
    pub duration_s: f64,
    /// Chosen ladder index for download slots, 0 otherwise.
    pub m: usize,
    /// Bits of the chunk as finally delivered (excludes abandoned bits).
    pub bits: f64,
    /// Buffer occupancy at slot start, chunks.
    pub q_start_chunks: f64,
    /// Stall seconds incurred during this slot.
    pub rebuffer_s: f64,
    /// Set when the download was abandoned: (first chosen level, total bits
    /// thrown away across all abandonments in this slot).
    pub abandoned_from: Option<(usize, f64)>,
}

/// Complete accounting for one simulated playback session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionLog {
    pub records: Vec<ChunkRecord>,
    pub chunk_duration_s: f64,
    /// Final delivered level per chunk, ordered by chunk index.
    pub chunk_levels: Vec<usize>,
    /// Time until the first chunk finished downloading.
    pub startup_delay_s: f64,
    /// Stall seconds after startup.
    pub midstream_rebuffer_s: f64,
    /// Startup plus mid-stream stalls.
    pub total_rebuffer_s: f64,
    /// Completion time of the last download.
    pub last_download_finish_s: f64,
    /// Buffered seconds remaining at the last download's completion.
    pub final_buffer_s: f64,
    /// Playback end: last download finish plus remaining buffer playout.
    pub t_end_s: f64,
    pub warnings: Vec<String>,
}

impl SessionLog {
    pub fn chunk_count(&self) -> usize {
        self.chunk_levels.len()
    }

    /// Tabular export, one row per slot. Stable column order; bit-exact for
    /// equal inputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,n,t_k,T_k,m,bits,Q_start_chunks,rebuffer_s,abandoned\n");
        for r in &self.records {
            let abandoned = match r.abandoned_from {
                Some((m, wasted)) => format!("{m}:{wasted}"),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.slot,
                r.chunk,
                r.start_s,
                r.duration_s,
                r.m,
                r.bits,
                r.q_start_chunks,
                r.rebuffer_s,
                abandoned
            ));
        }
        out
    }
}

struct SessionBuilder {
    records: Vec<ChunkRecord>,
    t: f64,
    q: f64,
    downloaded: usize,
    stall_s: f64,
    p: f64,
}

impl SessionBuilder {
    fn wait(&mut self, chunk: usize, kind: SlotKind, duration_s: f64) {
        if duration_s <= 0.0 {
            return;
        }
        self.records.push(ChunkRecord {
            slot: self.records.len() + 1,
            chunk,
            kind,
            start_s: self.t,
            duration_s,
            m: 0,
            bits: 0.0,
            q_start_chunks: self.q,
            rebuffer_s: 0.0,
            abandoned_from: None,
        });
        self.q = step_buffer(self.q, duration_s, 0.0, self.p);
        self.t += duration_s;
    }

    fn check_conservation(&self) {
        // playhead + buffered seconds == p * chunks fully downloaded
        let playhead = self.t - self.stall_s;
        let lhs = playhead + self.q * self.p;
        let rhs = self.downloaded as f64 * self.p;
        debug_assert!(
            (lhs - rhs).abs() < 1e-6,
            "conservation broken: {lhs} != {rhs}"
        );
    }
}

/// Runs one playback session. Deterministic: identical inputs produce an
/// identical log.
pub fn simulate(
    manifest: &VideoManifest,
    trace: &NetworkTrace,
    config: &PlayerConfig,
) -> Result<SessionLog> {
    manifest.validate()?;
    trace.validate()?;
    config.validate()?;

    let p = manifest.chunk_duration_s;
    let n_chunks = manifest.chunk_count();
    let m_count = manifest.level_count();
    let utilities = manifest.utilities();
    let u1 = utilities[0];
    let gamma_p = config.gamma_p;
    let v_fixed = config.effective_v(u1)?;

    let mut warnings = Vec::new();
    let basic_compliant = if config.variant == Variant::Basic {
        match config.precondition_warning(u1) {
            Some(w) => {
                warnings.push(w);
                false
            }
            None => true,
        }
    } else {
        false
    };
    let q_bound = v_fixed * (u1 + gamma_p) + 1.0;

    let mut sb = SessionBuilder {
        records: Vec::new(),
        t: 0.0,
        q: 0.0,
        downloaded: 0,
        stall_s: 0.0,
        p,
    };
    let mut state = PolicyState::default();
    let mut chunk_levels = Vec::with_capacity(n_chunks);
    let mut startup_delay = 0.0;
    let mut midstream = 0.0;

    for n in 1..=n_chunks {
        let sizes = manifest.chunk_sizes(n);
        let (q_max_dyn, v_eff) = if config.variant.uses_dynamic_v() {
            let from_begin = (n - 1) as f64 * p;
            let to_end = (n_chunks - n + 1) as f64 * p;
            dynamic_v(
                from_begin,
                to_end,
                config.buffer_chunks,
                u1,
                gamma_p,
                p,
                config.minimum_buffer_chunks,
            )
        } else {
            (config.buffer_chunks, v_fixed)
        };

        let mut m_star;
        if config.variant == Variant::Basic {
            loop {
                match bola_basic_decide(sb.q, v_eff, gamma_p, manifest, n) {
                    Decision::Download { m } => {
                        m_star = m;
                        break;
                    }
                    Decision::SleepUntilBufferBelow { threshold_chunks } => {
                        // `q - dur/p` need not round-trip exactly, so force a
                        // minimum drain or the loop can livelock a few ulps
                        // above the threshold.
                        let dur = ((sb.q - threshold_chunks) * p).max(1e-6);
                        sb.wait(n, SlotKind::Sleep, dur);
                    }
                    Decision::PauseThenDownload { .. } => unreachable!(),
                }
            }
        } else {
            m_star = argmax_score(sb.q, v_eff, gamma_p, &sizes, &utilities);
            if let (Some(prev), Some(r)) = (state.previous_choice, state.measured_bandwidth_bps) {
                if m_star < prev {
                    match oscillation_guard(
                        m_star,
                        prev,
                        r,
                        &sizes,
                        &utilities,
                        p,
                        config.variant,
                        v_eff,
                        gamma_p,
                        sb.q,
                    ) {
                        Decision::Download { m } => m_star = m,
                        Decision::PauseThenDownload { pause_s, m } => {
                            m_star = m;
                            sb.wait(n, SlotKind::Pause, pause_s);
                        }
                        Decision::SleepUntilBufferBelow { .. } => unreachable!(),
                    }
                }
            }
            // Keep one chunk of headroom below the dynamic buffer cap.
            let pause = (p * (sb.q - q_max_dyn + 1.0)).max(0.0);
            sb.wait(n, SlotKind::Pause, pause);
        }

        // Execute the download. The monitoring loop may abandon repeatedly;
        // every abandonment moves strictly down the ladder, so it runs at
        // most M - 1 times per chunk.
        let slot_start = sb.t;
        let q_slot_start = sb.q;
        let err_chunk = |e: Error| match e {
            Error::Simulation(msg) => Error::Simulation(format!("chunk {n}: {msg}")),
            other => other,
        };
        let latency = trace.latency_at(slot_start).map_err(err_chunk)?;
        let mut data_start = slot_start + latency;
        let mut m_final = m_star;
        let mut delivered = sizes[m_final - 1];
        let mut completion = trace
            .time_to_deliver(data_start, delivered)
            .map_err(err_chunk)?;
        let mut wasted = 0.0;
        let mut abandoned_from = None;

        if config.abandonment_enabled && config.variant.uses_dynamic_v() {
            let tick = config.abandonment_tick_s.max(1e-3);
            let mut t_cur = slot_start;
            let mut next_tick = slot_start + tick;
            while m_final < m_count {
                let boundary = trace.next_boundary_after(t_cur).unwrap_or(f64::INFINITY);
                let t_chk = next_tick.min(boundary);
                if t_chk >= completion - 1e-9 {
                    break;
                }
                let q_now = (q_slot_start - (t_chk - slot_start) / p).max(0.0);
                let got = trace.bits_between(data_start, t_chk).min(delivered);
                let remaining = (delivered - got).max(1e-9);
                if let Some(m_to) =
                    shall_abandon(m_final, remaining, q_now, v_eff, gamma_p, &sizes, &utilities)
                {
                    wasted += got;
                    abandoned_from = Some((m_star, wasted));
                    m_final = m_to;
                    delivered = sizes[m_to - 1];
                    let lat2 = trace.latency_at(t_chk).map_err(err_chunk)?;
                    data_start = t_chk + lat2;
                    completion = trace
                        .time_to_deliver(data_start, delivered)
                        .map_err(err_chunk)?;
                }
                if t_chk + 1e-12 >= next_tick {
                    next_tick += tick;
                }
                t_cur = t_chk;
            }
        }

        let slot_s = completion - slot_start;
        let stall = (slot_s - q_slot_start * p).max(0.0);
        sb.q = step_buffer(q_slot_start, slot_s, 1.0, p);
        sb.t = completion;
        sb.downloaded += 1;
        sb.stall_s += stall;
        sb.records.push(ChunkRecord {
            slot: sb.records.len() + 1,
            chunk: n,
            kind: SlotKind::Download,
            start_s: slot_start,
            duration_s: slot_s,
            m: m_final,
            bits: delivered,
            q_start_chunks: q_slot_start,
            rebuffer_s: stall,
            abandoned_from,
        });
        sb.check_conservation();
        chunk_levels.push(m_final);

        if n == 1 {
            startup_delay = completion;
        } else {
            midstream += stall;
        }

        let wire_bits = delivered + abandoned_from.map_or(0.0, |(_, w)| w);
        state.previous_choice = Some(m_final);
        state.measured_bandwidth_bps = Some(wire_bits / slot_s);

        if basic_compliant {
            if sb.q > q_bound + 1e-9 {
                warnings.push(format!(
                    "queue bound violated after chunk {n}: Q = {} > {q_bound}",
                    sb.q
                ));
            }
            if sb.q > config.buffer_chunks + 1e-9 {
                warnings.push(format!(
                    "buffer cap violated after chunk {n}: Q = {} > {}",
                    sb.q, config.buffer_chunks
                ));
            }
        }
    }

    let last_finish = sb.t;
    let final_buffer_s = sb.q * p;
    let total_rebuffer = startup_delay + midstream;
    Ok(SessionLog {
        records: sb.records,
        chunk_duration_s: p,
        chunk_levels,
        startup_delay_s: startup_delay,
        midstream_rebuffer_s: midstream,
        total_rebuffer_s: total_rebuffer,
        last_download_finish_s: last_finish,
        final_buffer_s,
        t_end_s: last_finish + final_buffer_s,
        warnings,
    })
}
