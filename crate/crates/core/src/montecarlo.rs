//! Batches of independent cascade runs, parameter sweeps and the
//! vulnerable-bus scan.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelParams;
use crate::engine::{run_cascade, BaseCase, CascadeTrace, Disturbance, RunConfig, Termination};
use crate::error::SimError;

const CENTER_STREAM: u64 = 0x6a09_e667_f3bc_c908;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of run `index` under `master`; independent of scheduling.
pub fn run_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterPolicy {
    Fixed(u32),
    /// A load bus drawn uniformly for every run.
    RandomLoadBus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub params: ModelParams,
    pub gamma: f64,
    pub delta_t: f64,
    pub center: CenterPolicy,
    pub runs: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub histogram_bin_mw: f64,
    pub keep_traces: bool,
}

impl BatchConfig {
    pub fn new(params: ModelParams, gamma: f64, delta_t: f64, center: CenterPolicy, runs: usize, seed: u64) -> Self {
        BatchConfig {
            params,
            gamma,
            delta_t,
            center,
            runs,
            seed,
            workers: None,
            histogram_bin_mw: 100.0,
            keep_traces: false,
        }
    }
}

/// One row of the batch CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub center_bus: u32,
    pub gamma: f64,
    pub delta_t: f64,
    pub lines_tripped: usize,
    pub gens_tripped: usize,
    pub shed_mw: f64,
    pub termination: Termination,
    /// Load at the start of the cascade, after the temperature change.
    #[serde(skip)]
    pub load_mw: f64,
}

impl RunRecord {
    pub fn outages(&self) -> usize {
        self.lines_tripped + self.gens_tripped
    }

    pub fn shed_fraction(&self) -> f64 {
        if self.load_mw > 0.0 {
            (self.shed_mw / self.load_mw).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    fn from_trace(seed: u64, d: &Disturbance, trace: &CascadeTrace) -> Self {
        RunRecord {
            seed,
            center_bus: d.center_bus,
            gamma: d.gamma,
            delta_t: d.delta_t,
            lines_tripped: trace.totals.lines,
            gens_tripped: trace.totals.generators,
            shed_mw: trace.totals.shed_mw,
            termination: trace.termination,
            load_mw: trace.series.load_mw.first().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for one sample.
    pub std: f64,
}

impl Moments {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for x in xs {
            n += 1.0;
            let d = x - mean;
            mean += d / n;
            m2 += d * (x - mean);
        }
        let std = if n > 1.0 { (m2 / (n - 1.0)).sqrt() } else { 0.0 };
        Moments { mean, std }
    }

    /// Standard error of the mean for `n` samples.
    pub fn std_error(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_mw: f64,
    /// counts[i] holds values in [i·bin, (i+1)·bin).
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn of(values: impl IntoIterator<Item = f64>, bin_mw: f64) -> Self {
        let mut counts: Vec<usize> = Vec::new();
        for v in values {
            let i = (v.max(0.0) / bin_mw).floor() as usize;
            if counts.len() <= i {
                counts.resize(i + 1, 0);
            }
            counts[i] += 1;
        }
        Histogram { bin_mw, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub runs: usize,
    pub lines: Moments,
    pub generators: Moments,
    pub outages: Moments,
    pub shed_mw: Moments,
    pub shed_histogram: Histogram,
    pub terminations: Vec<(Termination, usize)>,
}

/// Sample statistics of a set of runs.
pub fn summarize(records: &[RunRecord], bin_mw: f64) -> Result<BatchStats, SimError> {
    if records.is_empty() {
        return Err(SimError::Empty("no runs to summarize"));
    }
    let mut terminations: Vec<(Termination, usize)> = Vec::new();
    for r in records {
        match terminations.iter_mut().find(|(t, _)| *t == r.termination) {
            Some((_, c)) => *c += 1,
            None => terminations.push((r.termination, 1)),
        }
    }
    terminations.sort_by_key(|(t, _)| t.as_str());
    Ok(BatchStats {
        runs: records.len(),
        lines: Moments::of(records.iter().map(|r| r.lines_tripped as f64)),
        generators: Moments::of(records.iter().map(|r| r.gens_tripped as f64)),
        outages: Moments::of(records.iter().map(|r| r.outages() as f64)),
        shed_mw: Moments::of(records.iter().map(|r| r.shed_mw)),
        shed_histogram: Histogram::of(records.iter().map(|r| r.shed_mw), bin_mw),
        terminations,
    })
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub records: Vec<RunRecord>,
    pub stats: BatchStats,
    pub traces: Option<Vec<CascadeTrace>>,
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(job),
        None => job(),
    }
}

/// Disturbance center of the run with this seed.
pub fn center_of(load_buses: &[u32], policy: CenterPolicy, seed: u64) -> Result<u32, SimError> {
    match policy {
        CenterPolicy::Fixed(id) => Ok(id),
        CenterPolicy::RandomLoadBus => {
            if load_buses.is_empty() {
                return Err(SimError::NoLoadBuses);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ CENTER_STREAM));
            Ok(load_buses[rng.random_range(0..load_buses.len())])
        }
    }
}

/// Runs `cfg.runs` independent cascades. Results are in run-index order and
/// do not depend on the number of workers.
pub fn run_batch(base: &BaseCase, cfg: &BatchConfig) -> Result<Batch, SimError> {
    if cfg.runs == 0 {
        return Err(SimError::Empty("batch needs at least one run"));
    }
    let results = run_range(base, cfg, 0..cfg.runs)?;
    let mut records = Vec::with_capacity(cfg.runs);
    let mut traces = cfg.keep_traces.then(Vec::new);
    for (rec, tr) in results {
        records.push(rec);
        if let (Some(all), Some(t)) = (traces.as_mut(), tr) {
            all.push(t);
        }
    }
    let stats = summarize(&records, cfg.histogram_bin_mw)?;
    Ok(Batch { records, stats, traces })
}

/// Records of the runs with indices in `range`, as `run_batch` would
/// produce them. Lets callers process a batch in slices.
pub fn run_records(base: &BaseCase, cfg: &BatchConfig, range: Range<usize>) -> Result<Vec<RunRecord>, SimError> {
    let cfg = BatchConfig { keep_traces: false, ..cfg.clone() };
    Ok(run_range(base, &cfg, range)?.into_iter().map(|(r, _)| r).collect())
}

fn run_range(
    base: &BaseCase,
    cfg: &BatchConfig,
    range: Range<usize>,
) -> Result<Vec<(RunRecord, Option<CascadeTrace>)>, SimError> {
    let load_buses = base.load_bus_ids();
    let one = |i: usize| -> Result<(RunRecord, Option<CascadeTrace>), SimError> {
        let seed = run_seed(cfg.seed, i as u64);
        let center_bus = center_of(&load_buses, cfg.center, seed)?;
        let disturbance = Disturbance { center_bus, gamma: cfg.gamma, delta_t: cfg.delta_t };
        let run = RunConfig { params: cfg.params.clone(), disturbance, seed };
        let trace = run_cascade(base, &run)?;
        let record = RunRecord::from_trace(seed, &disturbance, &trace);
        Ok((record, cfg.keep_traces.then_some(trace)))
    };
    in_pool(cfg.workers, || range.into_par_iter().map(one).collect())
}

/// Writes the per-run table as CSV with a header row.
pub fn write_records_csv<W: std::io::Write>(records: &[RunRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    DeltaT,
    Gamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub stats: Vec<BatchStats>,
    /// Value maximizing the discrete second difference of mean outages.
    pub knee: Option<f64>,
}

impl SweepResult {
    pub fn means(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.outages.mean).collect()
    }
}

/// Interior grid value with the largest second difference of `means`.
pub fn knee(values: &[f64], means: &[f64]) -> Option<f64> {
    (1..means.len().saturating_sub(1))
        .map(|i| (i, means[i + 1] - 2.0 * means[i] + means[i - 1]))
        .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
            Some((_, b)) if b >= d => best,
            _ => Some((i, d)),
        })
        .map(|(i, _)| values[i])
}

/// One batch per grid value; the swept parameter replaces the one in `cfg`.
/// Every value uses the same master seed.
pub fn sweep(
    base: &BaseCase,
    cfg: &BatchConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<SweepResult, SimError> {
    if values.is_empty() {
        return Err(SimError::Empty("sweep grid is empty"));
    }
    let mut stats = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        c.keep_traces = false;
        match parameter {
            SweepParameter::DeltaT => c.delta_t = v,
            SweepParameter::Gamma => c.gamma = v,
        }
        stats.push(run_batch(base, &c)?.stats);
    }
    let means: Vec<f64> = stats.iter().map(|s| s.outages.mean).collect();
    Ok(SweepResult { parameter, values: values.to_vec(), knee: knee(values, &means), stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusScore {
    pub bus: u32,
    pub mean_outages: f64,
    pub mean_shed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityRanking {
    /// Scores in bus order.
    pub scores: Vec<BusScore>,
    /// Bus ids, most vulnerable first; ties by id.
    pub by_outages: Vec<u32>,
    pub by_shed_fraction: Vec<u32>,
}

impl VulnerabilityRanking {
    /// Buses shared by the top `k` of both rankings.
    pub fn top_overlap(&self, k: usize) -> Vec<u32> {
        let a = &self.by_outages[..k.min(self.by_outages.len())];
        let b = &self.by_shed_fraction[..k.min(self.by_shed_fraction.len())];
        let mut both: Vec<u32> = a.iter().copied().filter(|x| b.contains(x)).collect();
        both.sort_unstable();
        both
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub params: ModelParams,
    pub delta_t: Vec<f64>,
    pub gamma: Vec<f64>,
    pub runs_per_cell: usize,
    pub seed: u64,
    pub workers: Option<usize>,
}

/// Runs every (ΔT, γ) cell around every load bus and ranks the buses.
pub fn vulnerability_scan(base: &BaseCase, cfg: &ScanConfig) -> Result<VulnerabilityRanking, SimError> {
    if cfg.delta_t.is_empty() || cfg.gamma.is_empty() || cfg.runs_per_cell == 0 {
        return Err(SimError::Empty("scan grid is empty"));
    }
    let buses = base.load_bus_ids();
    if buses.is_empty() {
        return Err(SimError::NoLoadBuses);
    }
    let cells: Vec<(f64, f64)> =
        cfg.delta_t.iter().flat_map(|&dt| cfg.gamma.iter().map(move |&g| (dt, g))).collect();
    let per_bus = cells.len() * cfg.runs_per_cell;
    let jobs = buses.len() * per_bus;
    let one = |j: usize| -> Result<RunRecord, SimError> {
        let (b, rest) = (j / per_bus, j % per_bus);
        let (dt, gamma) = cells[rest / cfg.runs_per_cell];
        let seed = run_seed(cfg.seed, j as u64);
        let disturbance = Disturbance { center_bus: buses[b], gamma, delta_t: dt };
        let run = RunConfig { params: cfg.params.clone(), disturbance, seed };
        Ok(RunRecord::from_trace(seed, &disturbance, &run_cascade(base, &run)?))
    };
    let records: Vec<RunRecord> =
        in_pool(cfg.workers, || (0..jobs).into_par_iter().map(one).collect::<Result<_, _>>())?;
    let scores: Vec<BusScore> = buses
        .iter()
        .enumerate()
        .map(|(b, &bus)| {
            let rs = &records[b * per_bus..(b + 1) * per_bus];
            BusScore {
                bus,
                mean_outages: Moments::of(rs.iter().map(|r| r.outages() as f64)).mean,
                mean_shed_fraction: Moments::of(rs.iter().map(|r| r.shed_fraction())).mean,
            }
        })
        .collect();
    let rank = |key: fn(&BusScore) -> f64| {
        let mut order: Vec<&BusScore> = scores.iter().collect();
        order.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.bus.cmp(&b.bus)));
        order.into_iter().map(|s| s.bus).collect::<Vec<u32>>()
    };
    let by_outages = rank(|s| s.mean_outages);
    let by_shed_fraction = rank(|s| s.mean_shed_fraction);
    Ok(VulnerabilityRanking { scores, by_outages, by_shed_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(lines: usize, gens: usize, shed: f64) -> RunRecord {
        RunRecord {
            seed: 0,
            center_bus: 1,
            gamma: 0.07,
            delta_t: 10.0,
            lines_tripped: lines,
            gens_tripped: gens,
            shed_mw: shed,
            termination: Termination::NoEvent,
            load_mw: 100.0,
        }
    }

    #[test]
    fn moments_of_small_samples() {
        let m = Moments::of([2.0, 2.0, 2.0]);
        assert_eq!((m.mean, m.std), (2.0, 0.0));
        let m = Moments::of([0.0, 4.0]);
        assert!((m.mean - 2.0).abs() < 1e-12 && (m.std - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(Moments::of([5.0]).std, 0.0);
    }

    #[test]
    fn bernoulli_mean_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let xs: Vec<f64> = (0..1000).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect();
        let m = Moments::of(xs);
        let sigma = (0.3f64 * 0.7 / 1000.0).sqrt();
        assert!((m.mean - 0.3).abs() < 3.0 * sigma, "{}", m.mean);
    }

    #[test]
    fn summarize_counts_and_histogram() {
        let rs = vec![record(1, 0, 50.0), record(2, 1, 250.0), record(0, 0, 0.0)];
        let s = summarize(&rs, 100.0).unwrap();
        assert_eq!(s.runs, 3);
        assert!((s.outages.mean - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.shed_histogram.counts, vec![2, 0, 1]);
        assert_eq!(s.terminations, vec![(Termination::NoEvent, 3)]);
        assert!(summarize(&[], 100.0).is_err());
    }

    #[test]
    fn knee_picks_largest_bend() {
        let v = [5.0, 7.0, 9.0, 11.0, 13.0];
        assert_eq!(knee(&v, &[1.0, 1.1, 1.3, 4.0, 5.0]), Some(9.0));
        assert_eq!(knee(&v[..2], &[1.0, 2.0]), None);
    }

    #[test]
    fn seeds_differ_per_index() {
        let s: Vec<u64> = (0..1000).map(|i| run_seed(7, i)).collect();
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), s.len());
        assert_eq!(run_seed(7, 3), s[3]);
    }

    #[test]
    fn csv_has_the_documented_columns() {
        let mut buf = Vec::new();
        write_records_csv(&[record(1, 2, 3.5)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "seed,center_bus,gamma,delta_t,lines_tripped,gens_tripped,shed_mw,termination"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,0.07,10.0,1,2,3.5,no-event");
    }
}
