//! CSV and report emission. Everything written here is deterministic given
//! the run logs: fixed column orders, shortest round-trip float formatting,
//! rows merged in (seed, iteration) order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use metaret::runlog::RunLog;
use metaret::Real;

pub fn write_config(out_dir: &Path, echo: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.txt"), echo)
}

fn eta_headers(log: &RunLog<Real>) -> String {
    if log.scalar_eta {
        "gamma,lambda".to_string()
    } else {
        let g: Vec<String> = (0..log.num_slots).map(|s| format!("gamma_s{s}")).collect();
        let l: Vec<String> = (0..log.num_slots).map(|s| format!("lambda_s{s}")).collect();
        format!("{},{}", g.join(","), l.join(","))
    }
}

/// `runlog.csv`: `seed,iter,metric,<gamma columns>,<lambda columns>`.
pub fn write_runlog(out_dir: &Path, logs: &[RunLog<Real>]) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(out_dir.join("runlog.csv"))?);
    writeln!(f, "seed,iter,metric,{}", eta_headers(&logs[0]))?;
    for log in logs {
        for row in &log.rows {
            let g: Vec<String> = row.gamma.iter().map(|x| x.to_string()).collect();
            let l: Vec<String> = row.lambda.iter().map(|x| x.to_string()).collect();
            writeln!(
                f,
                "{},{},{},{},{}",
                log.seed,
                row.iter,
                row.metric,
                g.join(","),
                l.join(",")
            )?;
        }
    }
    Ok(())
}

/// `final_eta.csv`: `seed,state,gamma,lambda`, one row per meta-parameter slot.
pub fn write_final_eta(out_dir: &Path, logs: &[RunLog<Real>]) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(out_dir.join("final_eta.csv"))?);
    writeln!(f, "seed,state,gamma,lambda")?;
    for log in logs {
        for (state, (g, l)) in log.final_eta.iter().enumerate() {
            writeln!(f, "{},{},{},{}", log.seed, state, g, l)?;
        }
    }
    Ok(())
}

/// `aborted.csv` is written only when some seed diverged.
pub fn write_aborts(out_dir: &Path, logs: &[RunLog<Real>]) -> std::io::Result<Vec<u64>> {
    let aborted: Vec<_> = logs.iter().filter(|l| l.aborted.is_some()).collect();
    if aborted.is_empty() {
        return Ok(Vec::new());
    }
    let mut f = BufWriter::new(File::create(out_dir.join("aborted.csv"))?);
    writeln!(f, "seed,iter,metric,reason")?;
    let mut seeds = Vec::new();
    for log in aborted {
        let info = log.aborted.as_ref().unwrap();
        writeln!(f, "{},{},{},{}", log.seed, info.iter, info.metric, info.reason)?;
        seeds.push(log.seed);
    }
    Ok(seeds)
}

/// One sweep row per (grid point, seed).
pub struct SweepRow {
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub final_metric: f64,
}

/// `sweep.csv`: `gamma,seed,final_metric`, with a lambda column inserted when
/// the sweep also varies the bootstrapping parameter.
pub fn write_sweep(out_dir: &Path, rows: &[SweepRow]) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(out_dir.join("sweep.csv"))?);
    let with_lambda = rows.iter().any(|r| r.lambda.is_some());
    if with_lambda {
        writeln!(f, "gamma,lambda,seed,final_metric")?;
    } else {
        writeln!(f, "gamma,seed,final_metric")?;
    }
    for row in rows {
        if with_lambda {
            writeln!(
                f,
                "{},{},{},{}",
                row.gamma,
                row.lambda.unwrap_or(f64::NAN),
                row.seed,
                row.final_metric
            )?;
        } else {
            writeln!(f, "{},{},{}", row.gamma, row.seed, row.final_metric)?;
        }
    }
    Ok(())
}

pub fn write_gradcheck_report(
    out_dir: &Path,
    report: &metaret::gradcheck::GradCheckReport,
) -> std::io::Result<String> {
    let mut text = String::new();
    for c in &report.checks {
        text.push_str(&format!(
            "{} {}: max_rel_err={:.3e} tol={:.1e} instances={} — {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_rel_err,
            c.tolerance,
            c.instances,
            c.subject,
        ));
    }
    text.push_str(&format!(
        "{} in {:.2?}\n",
        if report.all_passed() { "ALL CHECKS PASSED" } else { "CHECK FAILURES PRESENT" },
        report.elapsed
    ));
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("gradcheck_report.txt"), &text)?;
    Ok(text)
}
