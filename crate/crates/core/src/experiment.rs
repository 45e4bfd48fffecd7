//! Seeded Monte Carlo harness: many random instances, several randomized
//! runs per instance, per-run CSV records and a three-number summary per
//! criterion (runs meeting it, instances with at least one such run, mean
//! metric value).
//!
//! Instance `i` is generated from `master ^ mix(i)`; run `j` of that
//! instance draws its coefficients from `mix(instance_seed ^ mix(!j))`,
//! where `mix` is the SplitMix64 finalizer. Records depend only on these
//! seeds, so the thread count never changes the output.

use std::fmt::{self, Write as _};
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decompose::{ostd, ostd_with_coefficients, whitened_ostd, OstdOptions, WhitenOptions};
use crate::error::{Error, Result};
use crate::linalg::DEFAULT_TOL;
use crate::metrics::{normalize_columns, relative_error, solution_score, ScoreOptions};
use crate::synth::{gen_instance, Family, GroundTruth, InstanceSpec};
use crate::tensor::CoefficientTensor;

pub const CSV_HEADER: &str = "instance_id,run_id,predicted_rank,rel_error,score,psd_attempts,failed,wall_time_ms";

/// Score at or above which a run counts as a match.
pub const SCORE_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ortho,
    Whiten,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ortho => "ortho",
            Method::Whiten => "whiten",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ortho" => Ok(Method::Ortho),
            "whiten" => Ok(Method::Whiten),
            other => Err(Error::InvalidSpec(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub order: usize,
    pub dim: usize,
    pub rank: usize,
    pub eta: f64,
    pub instances: usize,
    pub runs: usize,
    pub seed: u64,
    pub method: Method,
    pub randomize: bool,
    pub max_attempts: usize,
    pub tol: f64,
    pub jobs: usize,
    /// Record wall-clock time per run. Off by default because timings make
    /// the CSV output non-reproducible.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(family: Family, method: Method, order: usize, dim: usize, rank: usize, eta: f64) -> Self {
        ExperimentConfig {
            family,
            order,
            dim,
            rank,
            eta,
            instances: 100,
            runs: 10,
            seed: 0,
            method,
            randomize: false,
            max_attempts: 100,
            tol: DEFAULT_TOL,
            jobs: 1,
            timing: false,
        }
    }

    /// Relative-error threshold for the summary: `1e-10` without noise,
    /// `10 * eta` otherwise.
    pub fn error_threshold(&self) -> f64 {
        if self.eta == 0.0 {
            1e-10
        } else {
            10.0 * self.eta
        }
    }

    fn whiten_options(&self) -> WhitenOptions {
        WhitenOptions {
            base: OstdOptions { randomize: self.randomize, nonzero_tol: self.tol },
            max_psd_attempts: self.max_attempts,
            psd_tol: self.tol,
        }
    }

    fn instance_spec(&self, instance_id: usize) -> InstanceSpec {
        InstanceSpec::new(
            self.family,
            self.order,
            self.dim,
            self.rank,
            self.eta,
            instance_seed(self.seed, instance_id),
        )
    }
}

/// SplitMix64 finalizer.
pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn instance_seed(master: u64, instance_id: usize) -> u64 {
    master ^ mix(instance_id as u64)
}

pub fn run_seed(instance_seed: u64, run_id: usize) -> u64 {
    mix(instance_seed ^ mix(!(run_id as u64)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub instance_id: usize,
    pub run_id: usize,
    pub predicted_rank: Option<usize>,
    pub relative_error: Option<f64>,
    pub solution_score: Option<f64>,
    pub psd_attempts: Option<usize>,
    pub failed: bool,
    pub wall_time_ms: Option<f64>,
}

/// One decomposition of one instance.
pub fn run_once(gt: &GroundTruth, cfg: &ExperimentConfig, instance_id: usize, run_id: usize) -> Result<RunRecord> {
    let seed = run_seed(instance_seed(cfg.seed, instance_id), run_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let outcome = match cfg.method {
        Method::Ortho => {
            let opts = OstdOptions { randomize: cfg.randomize, nonzero_tol: cfg.tol };
            ostd(&gt.observed, &opts, &mut rng).map(|d| (d, None))
        }
        Method::Whiten => whitened_ostd(&gt.observed, &cfg.whiten_options(), &mut rng)
            .map(|r| (r.decomposition, Some(r.psd_attempts))),
    };
    let elapsed = cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    let mut record = RunRecord {
        instance_id,
        run_id,
        predicted_rank: None,
        relative_error: None,
        solution_score: None,
        psd_attempts: None,
        failed: false,
        wall_time_ms: elapsed,
    };
    match outcome {
        Ok((d, attempts)) => {
            let d = normalize_columns(&d, cfg.order)?;
            record.predicted_rank = Some(d.rank());
            record.relative_error = Some(relative_error(&gt.observed, &d)?);
            record.solution_score = Some(solution_score(&d, &gt.truth, &ScoreOptions::new(cfg.order))?);
            record.psd_attempts = attempts;
        }
        Err(Error::WhiteningFailure { .. }) => record.failed = true,
        Err(e) => return Err(e),
    }
    Ok(record)
}

/// Runs the whole experiment on a pool of `cfg.jobs` threads. Records come
/// back sorted by `(instance_id, run_id)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.instance_spec(0).validate()?;
    if cfg.tol <= 0.0 || cfg.max_attempts < 1 {
        return Err(Error::InvalidSpec("tolerance must be positive and max attempts at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let per_instance: Vec<Vec<RunRecord>> = pool.install(|| {
        (0..cfg.instances)
            .into_par_iter()
            .map(|i| {
                let gt = gen_instance(&cfg.instance_spec(i))?;
                (0..cfg.runs).map(|j| run_once(&gt, cfg, i, j)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_instance.into_iter().flatten().collect())
}

fn opt_to_string<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn float_to_string(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_csv<W: Write>(w: &mut W, records: &[RunRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.instance_id,
            r.run_id,
            opt_to_string(r.predicted_rank),
            float_to_string(r.relative_error),
            float_to_string(r.solution_score),
            opt_to_string(r.psd_attempts),
            r.failed,
            float_to_string(r.wall_time_ms),
        )?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<RunRecord>> {
    fn field<T: FromStr>(line: usize, s: &str) -> Result<Option<T>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::Parse { line, message: format!("invalid field '{s}'") })
    }
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if idx == 0 {
            if line != CSV_HEADER {
                return Err(Error::Parse { line: 1, message: "unexpected CSV header".into() });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::Parse { line: lineno, message: format!("expected 8 columns, got {}", cols.len()) });
        }
        let missing = || Error::Parse { line: lineno, message: "missing required field".into() };
        out.push(RunRecord {
            instance_id: field(lineno, cols[0])?.ok_or_else(missing)?,
            run_id: field(lineno, cols[1])?.ok_or_else(missing)?,
            predicted_rank: field(lineno, cols[2])?,
            relative_error: field(lineno, cols[3])?,
            solution_score: field(lineno, cols[4])?,
            psd_attempts: field(lineno, cols[5])?,
            failed: field(lineno, cols[6])?.ok_or_else(missing)?,
            wall_time_ms: field(lineno, cols[7])?,
        });
    }
    Ok(out)
}

/// Runs meeting a criterion, instances with at least one such run, and the
/// mean of the underlying metric over runs that produced a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionStats {
    pub runs_meeting: usize,
    pub instances_with_any: usize,
    pub mean_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub total_runs: usize,
    pub total_instances: usize,
    pub error_threshold: f64,
    /// Only for the whitening method; mean is the number of attempts.
    pub psd_found: Option<CriterionStats>,
    pub rank_correct: CriterionStats,
    pub error_within: CriterionStats,
    pub score_within: CriterionStats,
}

fn criterion<F, G>(records: &[RunRecord], metric: F, meets: G) -> CriterionStats
where
    F: Fn(&RunRecord) -> Option<f64>,
    G: Fn(&RunRecord) -> bool,
{
    let values: Vec<f64> = records.iter().filter_map(&metric).collect();
    let mean_value = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    let meeting: Vec<&RunRecord> = records.iter().filter(|r| meets(r)).collect();
    let mut instances: Vec<usize> = meeting.iter().map(|r| r.instance_id).collect();
    instances.sort_unstable();
    instances.dedup();
    CriterionStats { runs_meeting: meeting.len(), instances_with_any: instances.len(), mean_value }
}

pub fn summarize(records: &[RunRecord], cfg: &ExperimentConfig) -> ExperimentSummary {
    let threshold = cfg.error_threshold();
    let mut instances: Vec<usize> = records.iter().map(|r| r.instance_id).collect();
    instances.sort_unstable();
    instances.dedup();
    let psd_found = (cfg.method == Method::Whiten)
        .then(|| criterion(records, |r| r.psd_attempts.map(|a| a as f64), |r| !r.failed));
    ExperimentSummary {
        total_runs: records.len(),
        total_instances: instances.len(),
        error_threshold: threshold,
        psd_found,
        rank_correct: criterion(
            records,
            |r| r.predicted_rank.map(|p| p as f64),
            |r| r.predicted_rank == Some(cfg.rank),
        ),
        error_within: criterion(records, |r| r.relative_error, |r| r.relative_error.is_some_and(|e| e <= threshold)),
        score_within: criterion(
            records,
            |r| r.solution_score,
            |r| r.solution_score.is_some_and(|s| s >= SCORE_THRESHOLD),
        ),
    }
}

/// Text table in the runs / instances / mean layout.
pub fn format_summary(summary: &ExperimentSummary, cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "family={} method={} m={} n={} p={} eta={} instances={} runs={} seed={} randomize={}",
        cfg.family, cfg.method, cfg.order, cfg.dim, cfg.rank, cfg.eta, cfg.instances, cfg.runs, cfg.seed, cfg.randomize
    );
    let _ = writeln!(out, "{:<24}{:>8}{:>8}{:>12}", "criterion", "runs", "inst", "mean");
    let mut row = |label: String, c: &CriterionStats, digits: usize| {
        let mean = c.mean_value.map(|m| format!("{m:.digits$}")).unwrap_or_else(|| "---".into());
        let _ = writeln!(out, "{:<24}{:>8}{:>8}{:>12}", label, c.runs_meeting, c.instances_with_any, mean);
    };
    if let Some(psd) = &summary.psd_found {
        row("p.s.d. C found".into(), psd, 1);
    }
    row(format!("rank = {}", cfg.rank), &summary.rank_correct, 3);
    let t = summary.error_threshold;
    let label = if t >= 1e-3 { format!("rel. error <= {t}") } else { format!("rel. error <= {t:e}") };
    row(label, &summary.error_within, 4);
    row(format!("score >= {SCORE_THRESHOLD}"), &summary.score_within, 4);
    out
}

/// Outcome of the single-slice demonstration on the `X = I_3` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceDemo {
    pub weights: Vec<f64>,
    pub first_slice: DMatrix<f64>,
    pub single_slice_rank: usize,
    pub random_mix_rank: usize,
    pub randomized_single_slice_rank: usize,
}

/// Shows that the single slice `A(:, :, 1)` of a 3-way tensor with identity
/// factors has rank one, while a random slice mix, or a random rotation
/// before taking the same slice, recovers all three factors.
pub fn demo_slices(seed: u64) -> Result<SliceDemo> {
    let weights = vec![3.0, 2.0, 1.0];
    let mut spec = InstanceSpec::new(Family::Identity, 3, 3, 3, 0.0, seed);
    spec.weights = Some(weights.clone());
    let gt = gen_instance(&spec)?;
    let e1 = CoefficientTensor::unit(1, 3, &[0])?;
    let first_slice = gt.observed.slice_combination(&e1)?;

    let plain = OstdOptions::default();
    let randomized = OstdOptions { randomize: true, ..plain };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let single = ostd_with_coefficients(&gt.observed, Some(&e1), &plain, &mut rng)?;
    let mixed = ostd(&gt.observed, &plain, &mut rng)?;
    let rotated = ostd_with_coefficients(&gt.observed, Some(&e1), &randomized, &mut rng)?;
    Ok(SliceDemo {
        weights,
        first_slice,
        single_slice_rank: single.rank(),
        random_mix_rank: mixed.rank(),
        randomized_single_slice_rank: rotated.rank(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(method: Method, family: Family) -> ExperimentConfig {
        ExperimentConfig { instances: 4, runs: 3, seed: 17, ..ExperimentConfig::new(family, method, 3, 4, 2, 0.0) }
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..50 {
            let s = instance_seed(1, i);
            assert!(seen.insert(s));
            for j in 0..20 {
                assert!(seen.insert(run_seed(s, j)));
            }
        }
    }

    #[test]
    fn records_are_sorted_and_complete() {
        let recs = run_experiment(&small(Method::Ortho, Family::Orthogonal)).unwrap();
        assert_eq!(recs.len(), 12);
        let keys: Vec<(usize, usize)> = recs.iter().map(|r| (r.instance_id, r.run_id)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(recs.iter().all(|r| r.predicted_rank == Some(2) && !r.failed && r.wall_time_ms.is_none()));
    }

    #[test]
    fn csv_round_trip_preserves_summary() {
        let cfg = small(Method::Whiten, Family::Nonorthogonal);
        let recs = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        assert_eq!(summarize(&back, &cfg), summarize(&recs, &cfg));
    }

    #[test]
    fn failed_runs_have_no_metrics() {
        let cfg = ExperimentConfig { max_attempts: 1, instances: 10, ..small(Method::Whiten, Family::Nonorthogonal) };
        let recs = run_experiment(&cfg).unwrap();
        assert!(recs.iter().any(|r| r.failed));
        for r in recs.iter().filter(|r| r.failed) {
            assert!(r.predicted_rank.is_none() && r.relative_error.is_none() && r.solution_score.is_none());
        }
        let s = summarize(&recs, &cfg);
        let psd = s.psd_found.unwrap();
        assert_eq!(psd.runs_meeting, recs.iter().filter(|r| !r.failed).count());
        assert!(psd.instances_with_any <= 10);
    }

    #[test]
    fn summary_counts() {
        let cfg = ExperimentConfig { rank: 2, ..small(Method::Ortho, Family::Orthogonal) };
        let rec = |i, j, p, e, s| RunRecord {
            instance_id: i,
            run_id: j,
            predicted_rank: Some(p),
            relative_error: Some(e),
            solution_score: Some(s),
            psd_attempts: None,
            failed: false,
            wall_time_ms: None,
        };
        let recs = vec![rec(0, 0, 2, 0.0, 1.0), rec(0, 1, 3, 0.5, 0.5), rec(1, 0, 3, 0.5, 0.999)];
        let s = summarize(&recs, &cfg);
        assert_eq!(s.total_runs, 3);
        assert_eq!(s.total_instances, 2);
        assert!(s.psd_found.is_none());
        assert_eq!((s.rank_correct.runs_meeting, s.rank_correct.instances_with_any), (1, 1));
        assert!((s.rank_correct.mean_value.unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!((s.score_within.runs_meeting, s.score_within.instances_with_any), (2, 2));
        let table = format_summary(&s, &cfg);
        assert!(table.contains("rank = 2"));
        assert!(table.contains("score >= 0.99"));
    }

    #[test]
    fn timing_only_when_requested() {
        let cfg = ExperimentConfig { timing: true, instances: 1, runs: 1, ..small(Method::Ortho, Family::Orthogonal) };
        let recs = run_experiment(&cfg).unwrap();
        assert!(recs[0].wall_time_ms.is_some());
    }

    #[test]
    fn slice_demo() {
        let d = demo_slices(1).unwrap();
        assert_eq!(d.single_slice_rank, 1);
        assert_eq!(d.random_mix_rank, 3);
        assert_eq!(d.randomized_single_slice_rank, 3);
        assert_eq!(d.first_slice[(0, 0)], 3.0);
    }

    #[test]
    fn method_names() {
        assert_eq!("ortho".parse::<Method>().unwrap(), Method::Ortho);
        assert_eq!(Method::Whiten.to_string(), "whiten");
        assert!("power".parse::<Method>().is_err());
    }
}
