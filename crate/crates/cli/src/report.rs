//! `massrd report`: consolidated summary and plot data for earlier runs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use massrd::output::{self, RunManifest};
use massrd::{Error, Result};

fn manifest_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("manifest.json")
    } else {
        input.to_path_buf()
    }
}

pub fn run(inputs: &[PathBuf], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut summary = String::new();
    let mut index = Vec::new();
    for (k, input) in inputs.iter().enumerate() {
        let path = manifest_path(input);
        let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let manifest = RunManifest::from_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let tag = format!("{k:02}_{}", manifest.command);
        let _ = writeln!(summary, "== {} ({})", input.display(), manifest.command);
        let _ = writeln!(summary, "seed {}  version {}  wall clock {:.2} s", manifest.seed, manifest.code_version, manifest.wall_clock_seconds);
        if let Some(checks) = &manifest.checks {
            let verdict = if checks.passed() { "pass" } else { "FAIL" };
            let _ = writeln!(summary, "checks: {verdict}  eta_hat {:.4}", checks.kernel.eta_hat);
            for f in checks.failures() {
                let _ = writeln!(summary, "  failed: {f}");
            }
        }
        for (key, value) in &manifest.results {
            let _ = writeln!(summary, "{key}: {value}");
        }
        for (kind, file) in &manifest.outputs {
            let src = dir.join(file);
            match kind.as_str() {
                "moments" | "blowup" => {
                    let rows = output::read_moment_csv(File::open(&src)?)?;
                    let _ = writeln!(summary, "{:>8} {:>14} {:>12} {:>10}", "n", "moment", "+-", "P(tau<=T)");
                    for r in &rows {
                        let _ = writeln!(summary, "{:>8} {:>14.6e} {:>12.4e} {:>10.4}", r.n, r.moment, r.half_width, r.blowup);
                    }
                    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n, r.moment)).collect();
                    let name = format!("{tag}_moment_vs_n.csv");
                    output::write_xy_csv("n", "moment", &pts, BufWriter::new(File::create(out.join(&name))?))?;
                    index.push(name);
                }
                "mass" | "heat_kernel" => {
                    let (x, y, pts) = output::read_xy_csv(File::open(&src)?)?;
                    let name = format!("{tag}_{}.csv", if kind == "mass" { "mass_vs_t" } else { "log_sup_G_vs_log_t" });
                    output::write_xy_csv(&x, &y, &pts, BufWriter::new(File::create(out.join(&name))?))?;
                    index.push(name);
                }
                "history" => {
                    let h = output::read_history_csv(File::open(&src)?)?;
                    if let (Some(first), Some(last)) = (h.first(), h.last()) {
                        let _ = writeln!(
                            summary,
                            "mass {:.6} -> {:.6} over [{}, {}]; sup|u| {:.6}",
                            first.mass,
                            last.mass,
                            first.time,
                            last.time,
                            h.iter().fold(0f64, |m, r| m.max(r.u_sup))
                        );
                    }
                }
                _ => {}
            }
        }
        summary.push('\n');
    }
    let _ = writeln!(summary, "plot data:");
    for name in &index {
        let _ = writeln!(summary, "  {name}");
    }
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
