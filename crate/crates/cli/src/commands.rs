//! The four subcommands. Each has a pure part returning data and a `write_*`
//! part that puts files into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chirpmod::analysis::{draw_profiles, optimize_chirp_order, papr_by_chirp_index, BoundModel, ChirpOrderResult};
use chirpmod::channel::noise_variance_for_ebn0;
use chirpmod::harness::{run_sweep, BerCurve};

use crate::config::{Curve, ExperimentConfig};
use crate::CliError;

pub const BER_HEADER: &str = "waveform,ebn0_db,trials,bit_errors,ber,stderr";
pub const BOUND_HEADER: &str = "ebn0_db,bound";

/// CSV text of one simulated curve.
pub fn ber_csv(label: &str, curve: &BerCurve) -> String {
    let mut out = format!("{BER_HEADER}\n");
    for r in &curve.rows {
        let _ = writeln!(
            out,
            "{label},{},{},{},{:e},{:e}",
            r.ebn0_db, r.trials, r.bit_errors, r.ber, r.stderr
        );
    }
    out
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<(Curve, BerCurve)>, CliError> {
    cfg.curves()?
        .into_iter()
        .map(|curve| {
            let ber = run_sweep(&cfg.sweep_spec(&curve))?;
            Ok((curve, ber))
        })
        .collect()
}

/// Runs every curve and writes `<slug>.csv` per curve.
pub fn write_simulation(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    // refuse oversized detectors before spending time on earlier curves
    for curve in cfg.curves()? {
        chirpmod::receiver::Detector::new(&curve.config)?;
    }
    let mut paths = Vec::new();
    for (curve, ber) in simulate(cfg)? {
        paths.push(write_file(dir, &format!("{}.csv", curve.slug()), &ber_csv(&curve.label, &ber))?);
    }
    Ok(paths)
}

/// Bound of one single-user curve.
#[derive(Debug, Clone)]
pub struct BoundOutcome {
    pub curve: Curve,
    pub rows: Vec<(f64, f64)>,
    pub diversity_order: usize,
    pub weight: f64,
    pub report: String,
}

pub fn bound(cfg: &ExperimentConfig) -> Result<Vec<BoundOutcome>, CliError> {
    let curves: Vec<Curve> = cfg.curves()?.into_iter().filter(|c| c.config.users == 1).collect();
    if curves.is_empty() {
        return Err(CliError::Config(
            "the bound is single-user; no curve has users = 1".into(),
        ));
    }
    if cfg.bound.profiles == 0 {
        return Err(CliError::Config("bound.profiles must be at least 1".into()));
    }
    let profiles = draw_profiles(&cfg.channel.params(), cfg.bound.profiles, cfg.bound.seed);
    curves
        .into_iter()
        .map(|curve| {
            let model = BoundModel::with_normalization(&curve.config, &profiles, cfg.bound.normalization)?;
            let points = cfg.bound.ebn0_db.clone().unwrap_or_else(|| curve.ebn0_db.clone());
            let gamma = |x: f64| 1.0 / noise_variance_for_ebn0(&curve.config, x);
            let rows: Vec<(f64, f64)> = points.iter().map(|&x| (x, model.bound(gamma(x)))).collect();
            let report = bound_report(cfg, &curve, &model, &points, gamma);
            Ok(BoundOutcome {
                diversity_order: model.diversity_order(),
                weight: model.weight(),
                curve,
                rows,
                report,
            })
        })
        .collect()
}

fn bound_report(
    cfg: &ExperimentConfig,
    curve: &Curve,
    model: &BoundModel,
    points: &[f64],
    gamma: impl Fn(f64) -> f64,
) -> String {
    let c = &curve.config;
    let mut out = String::new();
    let _ = writeln!(out, "curve: {}", curve.label);
    let _ = writeln!(
        out,
        "system: {} N={} M={} Q={} P={} U={}",
        c.waveform.name(),
        c.n,
        c.m,
        c.q,
        c.p,
        c.users
    );
    let _ = writeln!(out, "channel profiles: {} (seed {})", cfg.bound.profiles, cfg.bound.seed);
    let _ = writeln!(out, "normalization: {:?}, f = {}", cfg.bound.normalization, model.weight());
    let _ = writeln!(out, "diversity order: {}", model.diversity_order());

    let probe = points.last().copied().unwrap_or(20.0);
    let terms = model.report(gamma(probe)).pair_terms;
    let mut ranks: Vec<usize> = terms.iter().map(|t| t.rank).collect();
    ranks.sort_unstable();
    ranks.dedup();
    let _ = writeln!(out, "pair terms: {} ordered pairs per profile", terms.len() / cfg.bound.profiles.max(1));
    for r in ranks {
        let of_rank: Vec<_> = terms.iter().filter(|t| t.rank == r).collect();
        let pep: f64 = of_rank.iter().map(|t| t.pep * t.hamming as f64).sum();
        let _ = writeln!(
            out,
            "  rank {r}: {} terms, sum of pep*d over profiles at {probe} dB = {:e}",
            of_rank.len(),
            pep
        );
    }
    let g = gamma(probe);
    let ratio = model.bound(g) / model.bound(2.0 * g);
    let _ = writeln!(
        out,
        "gamma doubling at {probe} dB: bound ratio {ratio:.4}, 2^diversity = {}",
        1u64 << model.diversity_order()
    );
    out
}

/// Writes `<slug>_bound.csv` and `<slug>_bound.txt` per single-user curve.
pub fn write_bound(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<BoundOutcome>, CliError> {
    let outcomes = bound(cfg)?;
    for o in &outcomes {
        let mut csv = format!("{BOUND_HEADER}\n");
        for (x, b) in &o.rows {
            let _ = writeln!(csv, "{x},{b:e}");
        }
        write_file(dir, &format!("{}_bound.csv", o.curve.slug()), &csv)?;
        write_file(dir, &format!("{}_bound.txt", o.curve.slug()), &o.report)?;
    }
    Ok(outcomes)
}

/// Worst PAPR per chirp index over all users; for the chirped waveform the
/// fixed chirp shift of the curve is reported instead.
pub fn papr(cfg: &ExperimentConfig) -> Result<Vec<(Curve, Vec<(usize, f64)>)>, CliError> {
    cfg.curves()?
        .into_iter()
        .map(|curve| {
            let mut worst: Vec<(usize, f64)> = Vec::new();
            for u in 0..curve.config.users {
                let table = papr_by_chirp_index(&curve.config, u, cfg.papr.max_draws, cfg.papr.seed)?;
                if worst.is_empty() {
                    worst = table;
                } else {
                    worst.iter_mut().zip(table).for_each(|(w, t)| w.1 = w.1.max(t.1));
                }
            }
            if !curve.config.waveform.is_chirp_modulated() {
                worst.iter_mut().for_each(|w| w.0 = curve.config.chirp_shift);
            }
            Ok((curve, worst))
        })
        .collect()
}

pub fn papr_table(results: &[(Curve, Vec<(usize, f64)>)]) -> String {
    let mut out = String::from("curve,chirp_index,chirp_bits,max_papr_db\n");
    for (curve, rows) in results {
        let width = curve.config.chirp_bits().max(2);
        for (nu, db) in rows {
            // clamp the -0.0 of an exactly flat envelope
            let db = if db.abs() < 1e-12 { 0.0 } else { *db };
            let _ = writeln!(out, "{},{nu},{nu:0width$b},{db:.6}", curve.label);
        }
    }
    out
}

pub fn write_papr(cfg: &ExperimentConfig, dir: &Path) -> Result<String, CliError> {
    let table = papr_table(&papr(cfg)?);
    write_file(dir, "papr.csv", &table)?;
    Ok(table)
}

pub fn optimize_p(cfg: &ExperimentConfig) -> Result<Vec<(Curve, ChirpOrderResult)>, CliError> {
    let curves: Vec<Curve> = cfg
        .curves()?
        .into_iter()
        .filter(|c| c.config.waveform.is_chirp_modulated())
        .collect();
    if curves.is_empty() {
        return Err(CliError::Config("no curve uses a chirp-modulated waveform".into()));
    }
    curves
        .into_iter()
        .map(|curve| {
            let res = optimize_chirp_order(&curve.config)?;
            Ok((curve, res))
        })
        .collect()
}

pub fn chirp_order_report(results: &[(Curve, ChirpOrderResult)]) -> String {
    let mut out = String::new();
    for (curve, res) in results {
        let c = &curve.config;
        let _ = writeln!(out, "curve: {} (N={} M={} Q={} U={})", curve.label, c.n, c.m, c.q, c.users);
        for step in &res.trace {
            match &step.collision {
                Some((a, b)) => {
                    let _ = writeln!(
                        out,
                        "  P~={}: ambiguous, e.g. nu={} symbols={:?} equals nu={} symbols={:?}",
                        step.order, a.nu, a.symbol_labels, b.nu, b.symbol_labels
                    );
                }
                None => {
                    let _ = writeln!(out, "  P~={}: unique", step.order);
                }
            }
        }
        let _ = writeln!(out, "  P*={}", res.p_star);
    }
    out
}

pub fn write_optimize_p(cfg: &ExperimentConfig, dir: &Path) -> Result<String, CliError> {
    let report = chirp_order_report(&optimize_p(cfg)?);
    write_file(dir, "chirp_order.txt", &report)?;
    Ok(report)
}
