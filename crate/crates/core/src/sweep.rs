//! Monte Carlo sweeps over outlier ratio and noise, with CSV reports.
//!
//! Every `(ratio, σ)` cell draws `mc_runs` instances with seeds
//! `seed, seed + 1, …`; all methods see the same instances. Cells run on the
//! rayon pool and are collected in grid order, so reports are deterministic
//! apart from wall times.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force_tls, inverse_variance_weights, ransac_rotation, wahba_closed_form, RansacParams};
use crate::error::{Error, Result};
use crate::pipeline::solve_robust_wahba;
use crate::problem::tls_cost;
use crate::relax::Relaxation;
use crate::sdp::SolverSettings;
use crate::synth::{generate_instance, rotation_geodesic_error, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Quasar,
    Naive,
    Wahba,
    Ransac,
    Brute,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Quasar => "quasar",
            Method::Naive => "naive",
            Method::Wahba => "wahba",
            Method::Ransac => "ransac",
            Method::Brute => "brute",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "quasar" => Method::Quasar,
            "naive" => Method::Naive,
            "wahba" => Method::Wahba,
            "ransac" => Method::Ransac,
            "brute" => Method::Brute,
            _ => return Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    pub outlier_ratios: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub mc_runs: usize,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub settings: SolverSettings,
    #[serde(default = "default_ransac_iters")]
    pub ransac_max_iters: usize,
}

fn default_ransac_iters() -> usize {
    1000
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outlier_ratios.is_empty() || self.sigmas.is_empty() || self.methods.is_empty() || self.mc_runs == 0 {
            return Err(Error::InvalidArgument("sweep grid must be non-empty".into()));
        }
        if self.methods.contains(&Method::Brute) && self.n > crate::baselines::BRUTE_FORCE_MAX_N {
            return Err(Error::TooLarge(format!(
                "brute force limited to n ≤ {}",
                crate::baselines::BRUTE_FORCE_MAX_N
            )));
        }
        for &r in &self.outlier_ratios {
            for &s in &self.sigmas {
                SyntheticConfig::new(self.n, s, r, self.seed).validate()?;
            }
        }
        self.settings.validate()
    }
}

/// One method on one instance. Metrics a method does not produce are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub n: usize,
    pub outlier_ratio: f64,
    pub sigma: f64,
    pub seed: u64,
    /// `ok`, a solver status, or `error: …`.
    pub status: String,
    pub is_tight: Option<bool>,
    pub rotation_error_rad: Option<f64>,
    /// QCQP cost of the rounded point (SDP methods), or the TLS cost of the
    /// estimate.
    pub f_qcqp: Option<f64>,
    pub gap: Option<f64>,
    pub rank: Option<f64>,
    pub stable_rank: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub rotation_error_rad: Option<f64>,
    pub f_qcqp: Option<f64>,
    pub gap: Option<f64>,
    pub rank: Option<f64>,
    pub stable_rank: Option<f64>,
    pub wall_time_s: Option<f64>,
}

/// Mean and sample standard deviation per `(method, ratio, σ)` cell, over
/// the runs where a metric is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub n: usize,
    pub outlier_ratio: f64,
    pub sigma: f64,
    pub count: usize,
    pub mean: Metrics,
    pub sd: Metrics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(sd))
}

/// Aggregates in first-appearance order of each cell.
pub fn aggregate(runs: &[RunRecord]) -> Vec<Aggregate> {
    let mut cells: Vec<(Method, usize, f64, f64)> = Vec::new();
    for r in runs {
        let key = (r.method, r.n, r.outlier_ratio, r.sigma);
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    cells
        .into_iter()
        .map(|(method, n, outlier_ratio, sigma)| {
            let rows: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| (r.method, r.n, r.outlier_ratio, r.sigma) == (method, n, outlier_ratio, sigma))
                .collect();
            let col = |f: &dyn Fn(&RunRecord) -> Option<f64>| mean_sd(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let (m_err, s_err) = col(&|r| r.rotation_error_rad);
            let (m_f, s_f) = col(&|r| r.f_qcqp);
            let (m_gap, s_gap) = col(&|r| r.gap);
            let (m_rank, s_rank) = col(&|r| r.rank);
            let (m_sr, s_sr) = col(&|r| r.stable_rank);
            let (m_t, s_t) = col(&|r| Some(r.wall_time_s));
            Aggregate {
                method,
                n,
                outlier_ratio,
                sigma,
                count: rows.len(),
                mean: Metrics {
                    rotation_error_rad: m_err,
                    f_qcqp: m_f,
                    gap: m_gap,
                    rank: m_rank,
                    stable_rank: m_sr,
                    wall_time_s: m_t,
                },
                sd: Metrics {
                    rotation_error_rad: s_err,
                    f_qcqp: s_f,
                    gap: s_gap,
                    rank: s_rank,
                    stable_rank: s_sr,
                    wall_time_s: s_t,
                },
            }
        })
        .collect()
}

fn run_one(cfg: &SweepConfig, method: Method, ratio: f64, sigma: f64, seed: u64) -> RunRecord {
    let t0 = Instant::now();
    let mut rec = RunRecord {
        method,
        n: cfg.n,
        outlier_ratio: ratio,
        sigma,
        seed,
        status: "ok".into(),
        is_tight: None,
        rotation_error_rad: None,
        f_qcqp: None,
        gap: None,
        rank: None,
        stable_rank: None,
        wall_time_s: 0.0,
    };
    let outcome = (|| -> Result<()> {
        let inst = generate_instance(&SyntheticConfig::new(cfg.n, sigma, ratio, seed))?;
        let p = &inst.problem;
        let rotation = match method {
            Method::Quasar | Method::Naive => {
                let relax = if method == Method::Quasar { Relaxation::Quasar } else { Relaxation::Naive };
                let sol = solve_robust_wahba(p, relax, &cfg.settings)?;
                let c = &sol.certificate;
                rec.status = sol.status.to_string();
                rec.is_tight = Some(c.is_tight);
                rec.f_qcqp = Some(c.f_qcqp);
                rec.gap = Some(c.relative_gap);
                rec.rank = Some(c.rank as f64);
                rec.stable_rank = Some(c.stable_rank);
                sol.estimate.r
            }
            Method::Wahba => {
                let r = wahba_closed_form(p.correspondences(), &inverse_variance_weights(p.correspondences()))?;
                rec.f_qcqp = Some(tls_cost(&r, p));
                r
            }
            Method::Ransac => {
                let params = RansacParams {
                    max_iters: cfg.ransac_max_iters,
                    seed,
                    ..Default::default()
                };
                let res = ransac_rotation(p, &params)?;
                rec.status = match res.status {
                    crate::baselines::RansacStatus::Success => "ok".into(),
                    crate::baselines::RansacStatus::Failed => "failed".into(),
                };
                rec.f_qcqp = Some(tls_cost(&res.rotation, p));
                res.rotation
            }
            Method::Brute => {
                let bf = brute_force_tls(p)?;
                rec.f_qcqp = Some(bf.f_star);
                bf.rotation
            }
        };
        rec.rotation_error_rad = Some(rotation_geodesic_error(&rotation, &inst.r_true));
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.status = format!("error: {e}");
    }
    rec.wall_time_s = t0.elapsed().as_secs_f64();
    rec
}

/// Run the full factorial grid. Failures are recorded per row.
pub fn run_sweep(cfg: &SweepConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &ratio in &cfg.outlier_ratios {
        for &sigma in &cfg.sigmas {
            for &method in &cfg.methods {
                for k in 0..cfg.mc_runs as u64 {
                    jobs.push((method, ratio, sigma, cfg.seed + k));
                }
            }
        }
    }
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(m, r, s, seed)| run_one(cfg, m, r, s, seed))
        .collect();
    let aggregates = aggregate(&runs);
    Ok(BenchReport { runs, aggregates })
}

/// Flat CSV row; `record` is `run`, `mean` or `sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    record: String,
    method: Method,
    n: usize,
    outlier_ratio: f64,
    sigma: f64,
    seed: Option<u64>,
    count: usize,
    status: String,
    is_tight: Option<bool>,
    rotation_error_rad: Option<f64>,
    f_qcqp: Option<f64>,
    gap: Option<f64>,
    rank: Option<f64>,
    stable_rank: Option<f64>,
    wall_time_s: Option<f64>,
}

impl CsvRow {
    fn from_metrics(kind: &str, a: &Aggregate, m: &Metrics) -> Self {
        Self {
            record: kind.into(),
            method: a.method,
            n: a.n,
            outlier_ratio: a.outlier_ratio,
            sigma: a.sigma,
            seed: None,
            count: a.count,
            status: String::new(),
            is_tight: None,
            rotation_error_rad: m.rotation_error_rad,
            f_qcqp: m.f_qcqp,
            gap: m.gap,
            rank: m.rank,
            stable_rank: m.stable_rank,
            wall_time_s: m.wall_time_s,
        }
    }

    fn metrics(&self) -> Metrics {
        Metrics {
            rotation_error_rad: self.rotation_error_rad,
            f_qcqp: self.f_qcqp,
            gap: self.gap,
            rank: self.rank,
            stable_rank: self.stable_rank,
            wall_time_s: self.wall_time_s,
        }
    }
}

/// `|a − b| ≤ tol·max(1, |a|, |b|)` on every present field, and identical
/// presence.
fn metrics_agree(a: &Metrics, b: &Metrics, tol: f64) -> bool {
    let eq = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0),
        _ => false,
    };
    eq(a.rotation_error_rad, b.rotation_error_rad)
        && eq(a.f_qcqp, b.f_qcqp)
        && eq(a.gap, b.gap)
        && eq(a.rank, b.rank)
        && eq(a.stable_rank, b.stable_rank)
        && eq(a.wall_time_s, b.wall_time_s)
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.runs {
            wtr.serialize(CsvRow {
                record: "run".into(),
                method: r.method,
                n: r.n,
                outlier_ratio: r.outlier_ratio,
                sigma: r.sigma,
                seed: Some(r.seed),
                count: 1,
                status: r.status.clone(),
                is_tight: r.is_tight,
                rotation_error_rad: r.rotation_error_rad,
                f_qcqp: r.f_qcqp,
                gap: r.gap,
                rank: r.rank,
                stable_rank: r.stable_rank,
                wall_time_s: Some(r.wall_time_s),
            })?;
        }
        for a in &self.aggregates {
            wtr.serialize(CsvRow::from_metrics("mean", a, &a.mean))?;
            wtr.serialize(CsvRow::from_metrics("sd", a, &a.sd))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Parse a report and check that the stored aggregates match the ones
    /// recomputed from its run rows to `1e-12`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut runs = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            match row.record.as_str() {
                "run" => runs.push(RunRecord {
                    method: row.method,
                    n: row.n,
                    outlier_ratio: row.outlier_ratio,
                    sigma: row.sigma,
                    seed: row.seed.ok_or_else(|| Error::Parse {
                        line,
                        msg: "run row without seed".into(),
                    })?,
                    status: row.status.clone(),
                    is_tight: row.is_tight,
                    rotation_error_rad: row.rotation_error_rad,
                    f_qcqp: row.f_qcqp,
                    gap: row.gap,
                    rank: row.rank,
                    stable_rank: row.stable_rank,
                    wall_time_s: row.wall_time_s.unwrap_or(f64::NAN),
                }),
                "mean" => means.push((line, row)),
                "sd" => sds.push((line, row)),
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown record kind `{other}`"),
                    })
                }
            }
        }
        let aggregates = aggregate(&runs);
        if means.len() != aggregates.len() || sds.len() != aggregates.len() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("expected {} mean/sd pairs, found {}/{}", aggregates.len(), means.len(), sds.len()),
            });
        }
        for ((a, (lm, m)), (ls, s)) in aggregates.iter().zip(&means).zip(&sds) {
            let key_ok = |r: &CsvRow| (r.method, r.n, r.outlier_ratio, r.sigma, r.count) == (a.method, a.n, a.outlier_ratio, a.sigma, a.count);
            if !key_ok(m) || !metrics_agree(&m.metrics(), &a.mean, 1e-12) {
                return Err(Error::Parse {
                    line: *lm,
                    msg: "stored mean does not match the run rows".into(),
                });
            }
            if !key_ok(s) || !metrics_agree(&s.metrics(), &a.sd, 1e-12) {
                return Err(Error::Parse {
                    line: *ls,
                    msg: "stored standard deviation does not match the run rows".into(),
                });
            }
        }
        Ok(Self { runs, aggregates })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(methods: Vec<Method>) -> SweepConfig {
        SweepConfig {
            n: 6,
            outlier_ratios: vec![0.0, 0.5],
            sigmas: vec![0.01],
            mc_runs: 2,
            methods,
            seed: 4,
            settings: SolverSettings::default(),
            ransac_max_iters: 200,
        }
    }

    #[test]
    fn single_cell_aggregate_equals_row() {
        let mut c = cfg(vec![Method::Wahba]);
        c.outlier_ratios = vec![0.2];
        c.mc_runs = 1;
        let rep = run_sweep(&c).unwrap();
        assert_eq!(rep.runs.len(), 1);
        let (r, a) = (&rep.runs[0], &rep.aggregates[0]);
        assert_eq!(a.mean.rotation_error_rad, r.rotation_error_rad);
        assert_eq!(a.mean.f_qcqp, r.f_qcqp);
        assert_eq!(a.sd.f_qcqp, Some(0.0));
    }

    #[test]
    fn csv_round_trip_and_tamper_detection() {
        let rep = run_sweep(&cfg(vec![Method::Wahba, Method::Ransac, Method::Brute])).unwrap();
        assert_eq!(rep.runs.len(), 12);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let back = BenchReport::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rep);

        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let idx = lines.iter().position(|l| l.starts_with("mean,")).unwrap();
        let mut fields: Vec<String> = lines[idx].split(',').map(String::from).collect();
        fields[10] = "123.0".into(); // f_qcqp
        lines[idx] = fields.join(",");
        let tampered = lines.join("\n");
        assert!(BenchReport::read_csv(tampered.as_bytes()).is_err());
    }

    #[test]
    fn deterministic_rows() {
        let c = cfg(vec![Method::Ransac, Method::Brute]);
        let strip = |mut r: BenchReport| {
            for x in &mut r.runs {
                x.wall_time_s = 0.0;
            }
            r.runs
        };
        assert_eq!(strip(run_sweep(&c).unwrap()), strip(run_sweep(&c).unwrap()));
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(cfg(vec![]).validate().is_err());
        let mut c = cfg(vec![Method::Brute]);
        c.n = 20;
        assert!(matches!(run_sweep(&c), Err(Error::TooLarge(_))));
    }
}
