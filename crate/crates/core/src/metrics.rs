//! Metrics CSV, run summaries and the grid table.

use std::fmt::Write as _;

use crate::engine::{RoundReport, RunConfig, RunSummary};
use crate::error::{Error, Result};
use crate::rng;

pub const METRICS_HEADER: &str = "k,train_loss,test_loss,test_acc,grad_norm,agg_norm";
pub const TABLE_HEADER: &str = "rule,attack,eps,optimizer,best_acc,final_loss";

/// 17 significant digits, enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn metrics_csv(reports: &[RoundReport]) -> String {
    let mut out = String::with_capacity(64 * (reports.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            num(r.train_loss),
            num(r.test_loss),
            num(r.test_acc),
            num(r.grad_norm),
            num(r.agg_norm)
        );
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<RoundReport>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {METRICS_HEADER:?}, got {:?}", other.map(|l| l.1)),
            })
        }
    }
    let mut reports: Vec<RoundReport> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", fields.len())));
        }
        let k: usize = fields[0].parse().map_err(|_| err(format!("bad k {:?}", fields[0])))?;
        let mut v = [0.0; 5];
        for (slot, raw) in v.iter_mut().zip(&fields[1..]) {
            *slot = raw.parse().map_err(|_| err(format!("bad number {raw:?}")))?;
        }
        if let Some(prev) = reports.last() {
            if k <= prev.k {
                return Err(err(format!("k must increase, {} then {k}", prev.k)));
            }
        }
        reports.push(RoundReport {
            k,
            train_loss: v[0],
            test_loss: v[1],
            test_acc: v[2],
            grad_norm: v[3],
            agg_norm: v[4],
        });
    }
    Ok(reports)
}

/// Human-readable `summary.txt`: metrics, seeding, the momentum used and the
/// full config as TOML.
pub fn summary_text(summary: &RunSummary) -> Result<String> {
    let cfg = &summary.config_echo;
    let echo = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "final_acc = {}", num(summary.final_acc));
    let _ = writeln!(out, "best_acc = {}", num(summary.best_acc));
    let _ = writeln!(out, "final_loss = {}", num(summary.final_loss));
    let _ = writeln!(out, "wall_time_s = {:.3}", summary.wall_time.as_secs_f64());
    let _ = writeln!(out, "beta_used = {}", cfg.effective_beta());
    let _ = writeln!(out, "byzantine = {} of {}", cfg.byzantine_count(), cfg.n_workers);
    let _ = writeln!(out, "rng = {}", rng::describe(cfg.seed));
    let _ = writeln!(out, "\n[config]\n{echo}");
    Ok(out)
}

/// Reads `best_acc` back out of a summary file.
pub fn summary_best_acc(text: &str) -> Option<f64> {
    text.lines().find_map(|l| l.strip_prefix("best_acc = ")).and_then(|v| v.trim().parse().ok())
}

pub fn table_row(cfg: &RunConfig, summary: &RunSummary) -> String {
    format!(
        "{},{},{},{},{},{}",
        cfg.rule.name(),
        cfg.attack.name(),
        cfg.byz_ratio,
        cfg.optimizer.name(),
        num(summary.best_acc),
        num(summary.final_loss)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reports() -> Vec<RoundReport> {
        vec![
            RoundReport { k: 0, train_loss: std::f64::consts::LN_2, test_loss: 0.7, test_acc: 0.5, grad_norm: 1.25, agg_norm: 0.0 },
            RoundReport { k: 50, train_loss: 0.1, test_loss: 1e-300, test_acc: 1.0, grad_norm: 3.0e10, agg_norm: -0.0 },
        ]
    }

    #[test]
    fn matches_golden_file() {
        assert_eq!(metrics_csv(&reports()), include_str!("../tests/fixtures/metrics_golden.csv"));
    }

    #[test]
    fn round_trips_exactly() {
        let r = reports();
        assert_eq!(parse_metrics_csv(&metrics_csv(&r)).unwrap(), r);
        assert_eq!(parse_metrics_csv(&metrics_csv(&[])).unwrap(), vec![]);
    }

    #[test]
    fn rejects_bad_header_and_order() {
        assert!(parse_metrics_csv("k,loss\n").is_err());
        let mut r = reports();
        r[1].k = 0;
        assert!(matches!(parse_metrics_csv(&metrics_csv(&r)), Err(Error::Parse { line: 3, .. })));
        let bad = format!("{METRICS_HEADER}\n1,2,3\n");
        assert!(parse_metrics_csv(&bad).is_err());
    }

    #[test]
    fn summary_best_acc_reads_back() {
        let text = "final_acc = 1e0\nbest_acc = 9.5000000000000000e-1\n";
        assert_eq!(summary_best_acc(text), Some(0.95));
        assert_eq!(summary_best_acc("nothing"), None);
    }
}
