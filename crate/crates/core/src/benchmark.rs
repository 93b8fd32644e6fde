//! Decoding throughput and per-step latency for exact versus random feature
//! attention across window sizes.
//!
//! Every cell decodes a batch of synthetic windows with forced-length greedy
//! decoding, so all backends emit the same number of tokens. Only decoder
//! steps are timed; encoding and cache construction happen before the clock
//! starts.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::decoding::{decode_step, forced_choice, init_cache, DecodeCache};
use crate::document_pipeline::join_sentences;
use crate::error::{Error, Result};
use crate::fsutil::write_file;
use crate::seed;
use crate::transformer::{Model, Variant};
use crate::vocab::{BOS, SPECIALS};

/// Default window sizes.
pub const DEFAULT_WINDOWS: [usize; 7] = [1, 2, 3, 4, 5, 10, 15];
/// Reference decoding batch size per window size.
pub const DEFAULT_BATCH_TABLE: [(usize, usize); 7] =
    [(1, 1024), (2, 512), (3, 512), (4, 256), (5, 256), (10, 128), (15, 96)];
/// Published speedups at L = 15 (GPU, CPU). Metadata only; never asserted.
pub const REFERENCE_SPEEDUP_GPU: f64 = 2.09;
pub const REFERENCE_SPEEDUP_CPU: f64 = 19.2;

pub const CSV_HEADER: &str =
    "backend,L,batch,tokens_per_sec,p50_latency_us,p95_latency_us,cache_entries_peak,speedup";

/// Time source. Readings must be nondecreasing.
pub trait Clock {
    fn now(&mut self) -> Duration;
}

pub struct MonotonicClock(Instant);

impl Default for MonotonicClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> Duration {
        self.0.elapsed()
    }
}

/// Advances by a fixed tick on every reading.
pub struct MockClock {
    t: Duration,
    tick: Duration,
}

impl MockClock {
    pub fn new(tick: Duration) -> Self {
        Self { t: Duration::ZERO, tick }
    }
}

impl Clock for MockClock {
    fn now(&mut self) -> Duration {
        let t = self.t;
        self.t += self.tick;
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub windows: Vec<usize>,
    /// Reference `(L, batch)` pairs.
    pub batch_table: Vec<(usize, usize)>,
    /// Actual batch = max(1, table / divisor).
    pub batch_divisor: usize,
    pub reps: usize,
    pub warmup: usize,
    pub backends: Vec<Variant>,
    pub tokens_per_sentence: usize,
    /// Prefix lengths for the per-step latency profile.
    pub profile_prefixes: Vec<usize>,
    /// Steps on each side of a profile prefix that are pooled.
    pub profile_bucket: usize,
    /// Repetitions pooled by the latency profile.
    pub profile_reps: usize,
    /// Source length used by the latency profile.
    pub profile_source_len: usize,
    /// Cells whose projected cache exceeds this many bytes are skipped.
    pub max_cache_bytes: Option<usize>,
    /// Test hook: extra busy time per step, proportional to the prefix
    /// length, in nanoseconds per prefix token, for one backend.
    pub inflate_latency: Option<(Variant, f64)>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            windows: DEFAULT_WINDOWS.to_vec(),
            batch_table: DEFAULT_BATCH_TABLE.to_vec(),
            batch_divisor: 32,
            reps: 3,
            warmup: 1,
            backends: vec![Variant::Exact, Variant::Rfa],
            tokens_per_sentence: 20,
            profile_prefixes: vec![100, 1000],
            profile_bucket: 25,
            profile_reps: 9,
            profile_source_len: 4,
            max_cache_bytes: None,
            inflate_latency: None,
            seed: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("benchmark config: {m}")));
        if self.backends.is_empty() {
            return bad("backend list is empty");
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return bad("window sizes must be positive");
        }
        if self.reps < 3 || self.profile_reps < 3 {
            return bad("repetitions must be >= 3");
        }
        if self.batch_divisor == 0 || self.tokens_per_sentence == 0 || self.profile_source_len == 0 {
            return bad("sizes must be positive");
        }
        if self.batch_table.is_empty() || self.batch_table.iter().any(|e| e.1 == 0) {
            return bad("batch sizes must be positive");
        }
        Ok(())
    }

    /// Batch size for window size `l`, from the table entry with the largest
    /// window not above `l` (the smallest entry when none is), divided by
    /// `batch_divisor`.
    pub fn batch_for(&self, l: usize) -> usize {
        let reference = self
            .batch_table
            .iter()
            .filter(|(w, _)| *w <= l)
            .max_by_key(|(w, _)| *w)
            .or_else(|| self.batch_table.iter().min_by_key(|(w, _)| *w))
            .map_or(1, |(_, b)| *b);
        (reference / self.batch_divisor).max(1)
    }

    /// Source (and forced target) length of one window of size `l`.
    pub fn window_len(&self, l: usize) -> usize {
        l * self.tokens_per_sentence + l - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub backend: Variant,
    pub window: usize,
    pub batch: usize,
    pub tokens: usize,
    /// Median over repetitions of the timed seconds.
    pub seconds: f64,
    pub tokens_per_sec: f64,
    pub p50_latency_us: f64,
    pub p95_latency_us: f64,
    pub cache_entries_peak: usize,
    /// Tokens decoded in the first repetition.
    pub outputs: Vec<Vec<usize>>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyProfile {
    pub backend: Variant,
    /// `(prefix length, median per-step latency in microseconds)`.
    pub points: Vec<(usize, f64)>,
}

impl LatencyProfile {
    pub fn at(&self, prefix: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == prefix).map(|p| p.1)
    }

    /// Latency at the last profiled prefix over latency at the first.
    pub fn growth(&self) -> Option<f64> {
        let (first, last) = (self.points.first()?, self.points.last()?);
        Some(last.1 / first.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub cells: Vec<BenchCell>,
    pub profiles: Vec<LatencyProfile>,
}

impl BenchResult {
    pub fn cell(&self, backend: Variant, window: usize) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.backend == backend && c.window == window && c.skipped.is_none())
    }

    pub fn profile(&self, backend: Variant) -> Option<&LatencyProfile> {
        self.profiles.iter().find(|p| p.backend == backend)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    percentile(xs, 0.5)
}

/// Nearest-rank percentile after sorting, except that the median of an even
/// count averages the two middle values; 0 for an empty slice.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if q == 0.5 && v.len().is_multiple_of(2) {
        let m = v.len() / 2;
        return 0.5 * (v[m - 1] + v[m]);
    }
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. NaN when either
/// side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Source windows of `l` sentences with `tokens_per_sentence` ordinary
/// tokens each.
pub fn synthetic_windows(model: &Model, cfg: &BenchConfig, l: usize, count: usize) -> Vec<Vec<usize>> {
    let mut rng = seed::rng(seed::derive_indexed(cfg.seed, "bench-windows", &[l]));
    let first = SPECIALS.len();
    let vocab = model.config.vocab_size.max(first + 1);
    (0..count)
        .map(|_| {
            let sentences: Vec<Vec<usize>> = (0..l)
                .map(|_| (0..cfg.tokens_per_sentence).map(|_| rng.gen_range(first..vocab)).collect())
                .collect();
            join_sentences(&sentences)
        })
        .collect()
}

fn busy(d: Duration) {
    let start = Instant::now();
    while start.elapsed() < d {
        std::hint::spin_loop();
    }
}

struct Run {
    seconds: f64,
    step_latency_us: Vec<f64>,
    outputs: Vec<Vec<usize>>,
    peak_entries: usize,
}

/// Decodes every window for `len` forced steps in lockstep, timing each batch
/// step.
fn timed_decode(
    model: &Model,
    backend: Variant,
    sources: &[Vec<usize>],
    len: usize,
    cfg: &BenchConfig,
    clock: &mut dyn Clock,
) -> Result<Run> {
    let mut caches: Vec<DecodeCache> = sources.iter().map(|s| init_cache(model, s)).collect::<Result<_>>()?;
    let mut last = vec![BOS; sources.len()];
    let mut outputs = vec![Vec::with_capacity(len); sources.len()];
    let inflate = cfg.inflate_latency.filter(|(b, _)| *b == backend).map(|(_, f)| f);
    let mut step_latency_us = Vec::with_capacity(len);
    let mut total = Duration::ZERO;
    let mut prev = clock.now();
    for step in 0..len {
        for ((cache, tok), out) in caches.iter_mut().zip(&mut last).zip(&mut outputs) {
            let mut logits = decode_step(model, cache, *tok)?;
            *tok = forced_choice(&mut logits);
            out.push(*tok);
            if let Some(f) = inflate {
                busy(Duration::from_nanos((f * step as f64) as u64));
            }
        }
        let now = clock.now();
        let dt = now.saturating_sub(prev);
        prev = now;
        total += dt;
        step_latency_us.push(dt.as_secs_f64() * 1e6 / sources.len() as f64);
    }
    Ok(Run {
        seconds: total.as_secs_f64(),
        step_latency_us,
        outputs,
        peak_entries: caches.iter().map(DecodeCache::entries).max().unwrap_or(0),
    })
}

fn run_cell(model: &Model, backend: Variant, l: usize, cfg: &BenchConfig, clock: &mut dyn Clock) -> Result<BenchCell> {
    let batch = cfg.batch_for(l);
    let len = cfg.window_len(l);
    let sources = synthetic_windows(model, cfg, l, batch);
    let mut cell = BenchCell {
        backend,
        window: l,
        batch,
        tokens: batch * len,
        seconds: 0.0,
        tokens_per_sec: 0.0,
        p50_latency_us: 0.0,
        p95_latency_us: 0.0,
        cache_entries_peak: 0,
        outputs: Vec::new(),
        skipped: None,
    };
    if let Some(budget) = cfg.max_cache_bytes {
        let probe = timed_decode(model, backend, &sources[..1], len, cfg, &mut MockClock::new(Duration::ZERO))?;
        let projected = probe.peak_entries * std::mem::size_of::<f64>() * batch;
        if projected > budget {
            cell.skipped = Some(format!("projected cache {projected} bytes exceeds budget {budget}"));
            return Ok(cell);
        }
    }
    for _ in 0..cfg.warmup {
        timed_decode(model, backend, &sources, len, cfg, &mut MockClock::new(Duration::ZERO))?;
    }
    let mut seconds = Vec::with_capacity(cfg.reps);
    let mut latencies = Vec::new();
    for rep in 0..cfg.reps {
        let run = timed_decode(model, backend, &sources, len, cfg, clock)?;
        seconds.push(run.seconds);
        latencies.extend(run.step_latency_us);
        if rep == 0 {
            cell.outputs = run.outputs;
            cell.cache_entries_peak = run.peak_entries;
        }
    }
    cell.seconds = median(&seconds);
    cell.tokens_per_sec = if cell.seconds > 0.0 {
        cell.tokens as f64 / cell.seconds
    } else {
        f64::INFINITY
    };
    cell.p50_latency_us = percentile(&latencies, 0.5);
    cell.p95_latency_us = percentile(&latencies, 0.95);
    Ok(cell)
}

/// Per-step latency of a single sequence at each profiled prefix length:
/// the median over repetitions and the steps within `profile_bucket` of the
/// prefix.
pub fn latency_profile(model: &Model, backend: Variant, cfg: &BenchConfig, clock: &mut dyn Clock) -> Result<LatencyProfile> {
    let Some(&max_prefix) = cfg.profile_prefixes.iter().max() else {
        return Ok(LatencyProfile {
            backend,
            points: Vec::new(),
        });
    };
    let len = max_prefix + cfg.profile_bucket + 1;
    let src = synthetic_windows(
        model,
        &BenchConfig {
            tokens_per_sentence: cfg.profile_source_len,
            ..cfg.clone()
        },
        1,
        1,
    );
    for _ in 0..cfg.warmup {
        timed_decode(model, backend, &src, len, cfg, &mut MockClock::new(Duration::ZERO))?;
    }
    let runs: Vec<Run> = (0..cfg.profile_reps)
        .map(|_| timed_decode(model, backend, &src, len, cfg, clock))
        .collect::<Result<_>>()?;
    let points = cfg
        .profile_prefixes
        .iter()
        .map(|&p| {
            // Step index s decodes with a prefix of s + 1 tokens (BOS included).
            let lo = p.saturating_sub(cfg.profile_bucket);
            let hi = p + cfg.profile_bucket;
            let pooled: Vec<f64> = runs
                .iter()
                .flat_map(|r| r.step_latency_us[lo..=hi.min(len - 1)].iter().copied())
                .collect();
            (p, median(&pooled))
        })
        .collect();
    Ok(LatencyProfile { backend, points })
}

pub fn run_benchmark(model: &Model, cfg: &BenchConfig) -> Result<BenchResult> {
    run_benchmark_with_clock(model, cfg, &mut MonotonicClock::default())
}

pub fn run_benchmark_with_clock(model: &Model, cfg: &BenchConfig, clock: &mut dyn Clock) -> Result<BenchResult> {
    cfg.validate()?;
    let mut cells = Vec::new();
    let mut profiles = Vec::new();
    for &backend in &cfg.backends {
        let (cross, causal, gate) = backend.backends();
        let m = model.with_backends(cross, causal, gate)?;
        for &l in &cfg.windows {
            cells.push(run_cell(&m, backend, l, cfg, clock)?);
        }
        profiles.push(latency_profile(&m, backend, cfg, clock)?);
    }
    Ok(BenchResult { cells, profiles })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupTable {
    pub baseline: Variant,
    pub candidate: Variant,
    /// `(L, candidate tokens/sec over baseline tokens/sec)`.
    pub rows: Vec<(usize, f64)>,
    pub spearman: f64,
}

impl SpeedupTable {
    pub fn increasing(&self, min_rho: f64) -> bool {
        self.spearman > min_rho
    }
}

/// Tokens-per-second ratio of `candidate` over `baseline` at every window
/// size of the baseline, plus its rank correlation with L.
pub fn compute_speedup(result: &BenchResult, baseline: Variant, candidate: Variant) -> Result<SpeedupTable> {
    let mut rows = Vec::new();
    let windows: Vec<usize> = result
        .cells
        .iter()
        .filter(|c| c.backend == baseline)
        .map(|c| c.window)
        .collect();
    if windows.is_empty() {
        return Err(Error::MissingCell {
            backend: baseline.name().into(),
            window: 0,
        });
    }
    for l in windows {
        let missing = |b: Variant| Error::MissingCell {
            backend: b.name().into(),
            window: l,
        };
        let base = result.cell(baseline, l).ok_or_else(|| missing(baseline))?;
        let cand = result.cell(candidate, l).ok_or_else(|| missing(candidate))?;
        rows.push((l, cand.tokens_per_sec / base.tokens_per_sec));
    }
    let ls: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let rs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(SpeedupTable {
        baseline,
        candidate,
        spearman: spearman(&ls, &rs),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawCheck {
    pub name: &'static str,
    pub value: f64,
    pub pass: bool,
}

/// Maximum RFA latency growth from the first to the last profiled prefix.
pub const RFA_MAX_GROWTH: f64 = 1.2;
/// Minimum exact latency growth over the same range.
pub const EXACT_MIN_GROWTH: f64 = 5.0;
/// Minimum Spearman correlation between speedup and L.
pub const MIN_SPEEDUP_RHO: f64 = 0.8;

/// Scaling laws: constant RFA step latency, growing exact step latency and
/// a speedup that increases with L. Laws whose inputs are absent are not
/// reported.
pub fn check_laws(result: &BenchResult) -> Vec<LawCheck> {
    let mut checks = Vec::new();
    for p in &result.profiles {
        let Some(g) = p.growth() else { continue };
        if p.backend == Variant::Exact {
            checks.push(LawCheck {
                name: "exact step latency growth",
                value: g,
                pass: g >= EXACT_MIN_GROWTH,
            });
        } else {
            checks.push(LawCheck {
                name: "rfa step latency growth",
                value: g,
                pass: (1.0 / RFA_MAX_GROWTH..=RFA_MAX_GROWTH).contains(&g),
            });
        }
    }
    let has = |v: Variant| result.cells.iter().any(|c| c.backend == v);
    if has(Variant::Exact) {
        for &cand in &[Variant::Rfa, Variant::RfaSgate, Variant::RfaSgateAvg] {
            if !has(cand) {
                continue;
            }
            if let Ok(t) = compute_speedup(result, Variant::Exact, cand) {
                if t.rows.len() >= 3 {
                    checks.push(LawCheck {
                        name: "speedup rank correlation with L",
                        value: t.spearman,
                        pass: t.increasing(MIN_SPEEDUP_RHO),
                    });
                }
            }
        }
    }
    checks
}

/// CSV with one row per cell. `speedup` is relative to the exact backend at
/// the same L, and empty when that cell is absent. Skipped cells keep their
/// row with empty measurements.
pub fn render_csv(result: &BenchResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        if c.skipped.is_some() {
            out.push_str(&format!("{},{},{},,,,,\n", c.backend.name(), c.window, c.batch));
            continue;
        }
        let speedup = result
            .cell(Variant::Exact, c.window)
            .map(|e| format!("{:.4}", c.tokens_per_sec / e.tokens_per_sec))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.3},{},{}\n",
            c.backend.name(),
            c.window,
            c.batch,
            c.tokens_per_sec,
            c.p50_latency_us,
            c.p95_latency_us,
            c.cache_entries_peak,
            speedup
        ));
    }
    out
}

pub fn summary(result: &BenchResult) -> String {
    let mut s = String::new();
    for p in &result.profiles {
        let pts: Vec<String> = p.points.iter().map(|(n, us)| format!("prefix {n}: {us:.2} us")).collect();
        s.push_str(&format!("{} step latency: {}\n", p.backend.name(), pts.join(", ")));
    }
    for c in result.cells.iter().filter(|c| c.skipped.is_some()) {
        s.push_str(&format!(
            "skipped {} L={}: {}\n",
            c.backend.name(),
            c.window,
            c.skipped.as_deref().unwrap_or_default()
        ));
    }
    for check in check_laws(result) {
        s.push_str(&format!(
            "{}: {:.3} {}\n",
            check.name,
            check.value,
            if check.pass { "PASS" } else { "FAIL" }
        ));
    }
    s.push_str(&format!(
        "reference speedups at L=15 (not asserted): {REFERENCE_SPEEDUP_GPU}x GPU, {REFERENCE_SPEEDUP_CPU}x CPU\n"
    ));
    s.push_str("timed region: decoder steps only; encoding and beam bookkeeping excluded\n");
    s
}

/// Writes the CSV and returns the summary text.
pub fn emit_report(result: &BenchResult, path: &Path, force: bool) -> Result<String> {
    if result.cells.is_empty() {
        return Err(Error::Empty("benchmark results"));
    }
    write_file(path, render_csv(result), force)?;
    Ok(summary(result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_known_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        // One adjacent swap among five: 1 - 6*2/(5*24) = 0.9.
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 4.0, 5.0]);
        assert!((r - 0.9).abs() < 1e-12);
    }

    #[test]
    fn percentiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(percentile(&(1..=100).map(f64::from).collect::<Vec<_>>(), 0.95), 95.0);
    }

    #[test]
    fn batch_table_lookup() {
        let cfg = BenchConfig {
            batch_divisor: 1,
            ..BenchConfig::default()
        };
        assert_eq!(cfg.batch_for(1), 1024);
        assert_eq!(cfg.batch_for(15), 96);
        assert_eq!(cfg.batch_for(7), 256);
        assert_eq!(BenchConfig::default().batch_for(15), 3);
        assert_eq!(cfg.window_len(3), 62);
    }

    #[test]
    fn invalid_configs() {
        let no_backends = BenchConfig {
            backends: vec![],
            ..BenchConfig::default()
        };
        assert!(no_backends.validate().is_err());
        let few_reps = BenchConfig {
            reps: 2,
            ..BenchConfig::default()
        };
        assert!(few_reps.validate().is_err());
    }
}
