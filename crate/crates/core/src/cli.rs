//! Command implementations behind the binary. Each returns the process exit
//! status: 0 on success, 1 for config errors, 2 for runtime failures.

use std::fs;
use std::path::Path;

use crate::config::ConfigFile;
use crate::engine::{run_matrix, run_training, RunResult};
use crate::error::Error;
use crate::metrics::{metrics_csv, summary_text, table_row, TABLE_HEADER};
use crate::verify::Suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<ConfigFile, i32> {
    match ConfigFile::load(config) {
        Ok(f) => Ok(match seed {
            Some(s) => f.with_seed(s),
            None => f,
        }),
        Err(e) => {
            eprintln!("error: {e}");
            Err(exit_code(&e))
        }
    }
}

fn write_outputs(dir: &Path, run: &RunResult) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&run.reports))?;
    fs::write(dir.join("summary.txt"), summary_text(&run.summary)?)?;
    Ok(())
}

pub fn cmd_run(config: &Path, out: &Path, seed: Option<u64>) -> i32 {
    let file = match load(config, seed) {
        Ok(f) => f,
        Err(code) => return code,
    };
    if file.matrix.is_some() {
        eprintln!("error: {} has a [matrix] table; use `grid`", config.display());
        return EXIT_CONFIG;
    }
    let result = run_training(&file.run).and_then(|run| {
        write_outputs(out, &run)?;
        Ok(run)
    });
    match result {
        Ok(run) => {
            println!(
                "final_acc={:.4} best_acc={:.4} final_loss={:.4} ({:.1}s)",
                run.summary.final_acc,
                run.summary.best_acc,
                run.summary.final_loss,
                run.summary.wall_time.as_secs_f64()
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn cmd_grid(config: &Path, out: &Path, seed: Option<u64>, jobs: usize) -> i32 {
    let file = match load(config, seed) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let cells = file.cells();
    let cfgs: Vec<_> = cells.iter().map(|c| c.config.clone()).collect();
    let results = match run_matrix(&cfgs, jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let mut table = format!("{TABLE_HEADER}\n");
    let mut status = EXIT_OK;
    for (cell, result) in cells.iter().zip(results) {
        match result.and_then(|run| write_outputs(&out.join(&cell.name), &run).map(|_| run)) {
            Ok(run) => {
                table.push_str(&table_row(&cell.config, &run.summary));
                table.push('\n');
                println!("{}: best_acc={:.4} final_loss={:.4}", cell.name, run.summary.best_acc, run.summary.final_loss);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", cell.name);
                status = status.max(exit_code(&e));
            }
        }
    }
    if let Err(e) = fs::create_dir_all(out).and_then(|_| fs::write(out.join("table.csv"), table)) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    status
}

pub fn cmd_verify(selection: &str) -> i32 {
    let suites = match Suite::parse_selection(selection) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut all_passed = true;
    for suite in suites {
        match suite.run() {
            Ok(checks) => {
                for c in checks {
                    all_passed &= c.passed();
                    println!("{c}");
                }
            }
            Err(e) => {
                all_passed = false;
                println!("FAIL {}: {e}", suite.name());
            }
        }
    }
    if all_passed {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    }
}
