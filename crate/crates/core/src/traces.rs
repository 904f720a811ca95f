//! Network-trace and manifest generation: the twelve canned bandwidth
//! profiles, CSV trace I/O, and the seeded variable-bitrate manifest
//! generator built on the ten-level benchmark ladder statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{log_utilities, BitrateLevel, VideoManifest};
use crate::simulator::{NetworkTrace, TraceSegment};

/// Benchmark ladder statistics, highest level first:
/// `(bitrate mean Mbps, bitrate std Mbps, chunk size mean Mb, chunk size std Mb)`
/// for 3-second chunks.
pub const LADDER_STATS: [(f64, f64, f64, f64); 10] = [
    (6.000, 1.078, 18.00, 3.232),
    (5.027, 0.891, 15.08, 2.673),
    (2.962, 0.564, 8.886, 1.691),
    (2.056, 0.394, 6.168, 1.182),
    (1.427, 0.275, 4.281, 0.825),
    (0.991, 0.182, 2.973, 0.545),
    (0.688, 0.120, 2.064, 0.360),
    (0.477, 0.096, 1.431, 0.287),
    (0.331, 0.054, 0.993, 0.162),
    (0.230, 0.038, 0.690, 0.113),
];

/// Seconds per stage in every canned profile.
pub const PROFILE_STAGE_S: f64 = 30.0;

/// The `(bandwidth Mbps, latency ms)` stages of the odd-numbered profiles.
/// Each even profile is the preceding odd one rotated to start at its
/// lowest-bandwidth stage.
const ODD_PROFILES: [&[(f64, f64)]; 6] = [
    // 1
    &[
        (5.0, 38.0),
        (4.0, 50.0),
        (3.0, 75.0),
        (2.0, 88.0),
        (1.5, 100.0),
        (2.0, 88.0),
        (3.0, 75.0),
        (4.0, 50.0),
    ],
    // 3
    &[
        (5.0, 13.0),
        (4.0, 18.0),
        (3.0, 28.0),
        (2.0, 58.0),
        (1.5, 200.0),
        (2.0, 58.0),
        (3.0, 28.0),
        (4.0, 18.0),
    ],
    // 5
    &[
        (5.0, 11.0),
        (4.0, 13.0),
        (3.0, 15.0),
        (2.0, 20.0),
        (1.5, 25.0),
        (2.0, 20.0),
        (3.0, 15.0),
        (4.0, 13.0),
    ],
    // 7
    &[
        (9.0, 25.0),
        (4.0, 50.0),
        (2.0, 75.0),
        (1.0, 100.0),
        (2.0, 75.0),
        (4.0, 50.0),
    ],
    // 9
    &[
        (9.0, 10.0),
        (4.0, 50.0),
        (2.0, 150.0),
        (1.0, 200.0),
        (2.0, 150.0),
        (4.0, 50.0),
    ],
    // 11
    &[
        (9.0, 6.0),
        (4.0, 13.0),
        (2.0, 20.0),
        (1.0, 25.0),
        (2.0, 20.0),
        (4.0, 13.0),
    ],
];

/// Builds canned profile `id` in `1..=12` as a cyclic trace.
pub fn gen_profile(id: usize) -> Result<NetworkTrace> {
    if !(1..=12).contains(&id) {
        return Err(Error::InvalidParameter(format!(
            "profile id {id} out of range 1..=12"
        )));
    }
    let stages = ODD_PROFILES[(id - 1) / 2];
    let rotation = if id % 2 == 1 {
        0
    } else {
        // Start the even twin at the lowest-bandwidth stage.
        stages
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .map(|(i, _)| i)
            .unwrap()
    };
    let segments = (0..stages.len())
        .map(|i| {
            let (mbps, latency_ms) = stages[(i + rotation) % stages.len()];
            TraceSegment {
                duration_s: PROFILE_STAGE_S,
                bandwidth_bps: mbps * 1e6,
                latency_s: latency_ms / 1e3,
            }
        })
        .collect();
    NetworkTrace::new(segments, true)
}

/// Default latency for trace rows that omit the column.
pub const DEFAULT_LATENCY_S: f64 = 0.050;

const TRACE_HEADER: &str = "duration_s,bandwidth_kbps,latency_ms";

/// Parses the trace CSV format. Rows may omit the latency column, which then
/// defaults to 50 ms. Errors carry the 1-based line number.
pub fn parse_trace(text: &str, cyclic: bool) -> Result<NetworkTrace> {
    let mut segments = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRACE_HEADER => {}
        Some((_, header)) => {
            return Err(Error::TraceParse {
                line: 1,
                msg: format!("expected header `{TRACE_HEADER}`, found `{}`", header.trim()),
            })
        }
        None => {
            return Err(Error::TraceParse {
                line: 1,
                msg: "empty trace file".into(),
            })
        }
    }
    for (i, line) in lines {
        let line_no = i + 1;
        let row = line.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::TraceParse {
                line: line_no,
                msg: format!("expected 2 or 3 fields, found {}", fields.len()),
            });
        }
        let num = |field: &str, name: &str| -> Result<f64> {
            field.parse::<f64>().map_err(|_| Error::TraceParse {
                line: line_no,
                msg: format!("{name} `{field}` is not a number"),
            })
        };
        let duration_s = num(fields[0], "duration")?;
        let bandwidth_kbps = num(fields[1], "bandwidth")?;
        let latency_s = match fields.get(2) {
            Some(f) => num(f, "latency")? / 1e3,
            None => DEFAULT_LATENCY_S,
        };
        if duration_s <= 0.0 {
            return Err(Error::TraceParse {
                line: line_no,
                msg: format!("duration {duration_s} s must be positive"),
            });
        }
        if bandwidth_kbps < 0.0 || latency_s < 0.0 {
            return Err(Error::TraceParse {
                line: line_no,
                msg: "bandwidth and latency must be non-negative".into(),
            });
        }
        segments.push(TraceSegment {
            duration_s,
            bandwidth_bps: bandwidth_kbps * 1e3,
            latency_s,
        });
    }
    if segments.is_empty() {
        return Err(Error::TraceParse {
            line: 1,
            msg: "trace has no segments".into(),
        });
    }
    NetworkTrace::new(segments, cyclic)
}

/// Serializes a trace in the same CSV format `parse_trace` reads.
pub fn trace_to_csv(trace: &NetworkTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for s in &trace.segments {
        out.push_str(&format!(
            "{},{},{}\n",
            s.duration_s,
            s.bandwidth_bps / 1e3,
            s.latency_s * 1e3
        ));
    }
    out
}

/// Warns when parts of the trace cannot sustain even the lowest bitrate.
pub fn trace_warnings(trace: &NetworkTrace, manifest: &VideoManifest) -> Vec<String> {
    let lowest_bps = manifest
        .levels
        .last()
        .map(|l| l.nominal_bitrate_bps)
        .unwrap_or(0.0);
    let mut warnings = Vec::new();
    let below: f64 = trace
        .segments
        .iter()
        .filter(|s| s.bandwidth_bps < lowest_bps)
        .map(|s| s.duration_s)
        .sum();
    if below > 0.0 {
        warnings.push(format!(
            "{below} s of the trace sit below the lowest ladder bitrate \
             ({:.0} kbps); sustained rebuffering is unavoidable there",
            lowest_bps / 1e3
        ));
    }
    warnings
}

/// Generates a variable-bitrate manifest from the benchmark ladder
/// statistics. One standard-normal draw per chunk, clamped to three sigma,
/// scales every level of that chunk, so level sizes stay correlated the way
/// scene complexity correlates them. Per-chunk columns are then sorted
/// descending so the ladder ordering holds chunk by chunk.
pub fn gen_vbr_manifest(chunk_count: usize, chunk_duration_s: f64, seed: u64) -> Result<VideoManifest> {
    if chunk_count == 0 {
        return Err(Error::InvalidParameter("chunk count must be positive".into()));
    }
    if chunk_duration_s <= 0.0 {
        return Err(Error::InvalidParameter("chunk duration must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
    let scale = chunk_duration_s / 3.0; // statistics are for 3 s chunks
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(chunk_count);
    for _ in 0..chunk_count {
        let z = normal.sample(&mut rng).clamp(-3.0, 3.0);
        let mut col: Vec<f64> = LADDER_STATS
            .iter()
            .map(|&(_, _, mean_mb, std_mb)| {
                let bits = (mean_mb + z * std_mb) * 1e6 * scale;
                bits.max(0.1 * mean_mb * 1e6 * scale)
            })
            .collect();
        col.sort_by(|a, b| b.total_cmp(a));
        columns.push(col);
    }
    let levels = (0..LADDER_STATS.len())
        .map(|m| {
            let sizes: Vec<f64> = columns.iter().map(|c| c[m]).collect();
            let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
            BitrateLevel {
                nominal_bitrate_bps: mean / chunk_duration_s,
                utility: 0.0,
                chunk_sizes_bits: sizes,
            }
        })
        .collect();
    let mut manifest = VideoManifest {
        chunk_duration_s,
        levels,
    };
    log_utilities(&mut manifest)?;
    manifest.validate()?;
    Ok(manifest)
}

/// Generates a random piecewise-constant cyclic trace: segment durations
/// uniform in 2..15 s, bandwidth log-uniform in 0.3..9 Mbps, latency uniform
/// in 5..100 ms. Deterministic per seed.
pub fn gen_synthetic_trace(seed: u64, min_total_s: f64) -> Result<NetworkTrace> {
    if min_total_s <= 0.0 {
        return Err(Error::InvalidParameter("trace length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut segments = Vec::new();
    let mut total = 0.0;
    while total < min_total_s {
        let duration_s = rng.gen_range(2.0..15.0);
        let log_mbps = rng.gen_range(0.3f64.ln()..9.0f64.ln());
        let latency_s = rng.gen_range(0.005..0.100);
        segments.push(TraceSegment {
            duration_s,
            bandwidth_bps: log_mbps.exp() * 1e6,
            latency_s,
        });
        total += duration_s;
    }
    NetworkTrace::new(segments, true)
}
