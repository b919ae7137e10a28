//! Dispatches a parsed experiment and writes its artifacts.
//!
//! Every experiment writes `config.toml` (the input text), one or more
//! CSV tables, `verdict.json` and, last, `manifest.json` listing every
//! other file with its SHA-256. Runs may execute on several workers; all
//! writes go through one [`ArtifactWriter`] after the computation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diagnostics::studies::{
    self, BlowupResult, ConvergenceResult, CounterexampleResult, MaxPrincipleResult, SigmaCertifyResult,
    Table, TvContractionResult, ViscousResult,
};
use crate::error::{Error, Result};
use crate::harness::config::{Experiment, ExperimentConfig, Plan, SingleRunPlan};
use crate::harness::plot::{render_plot, PlotKind};
use crate::kernels::KernelSpec;
use crate::solver::{run, write_trace};
use crate::util::hex;

/// Bounds used by the single-run verdict.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub status: String,
    pub exit_code: i32,
    pub verdict: Option<String>,
    pub note: Option<String>,
    pub files: Vec<ManifestEntry>,
}

/// Serialises artifact writes and records them for the manifest.
pub struct ArtifactWriter {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Self {
        ArtifactWriter {
            root: root.to_path_buf(),
            entries: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes)?;
        self.record(rel, bytes);
        Ok(p)
    }

    /// Registers a file that something else already wrote under the root.
    pub fn adopt(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let rel = path
            .strip_prefix(&self.root)
            .map_err(|_| Error::config(format!("{} is outside the output directory", path.display())))?;
        let rel = rel.to_string_lossy().replace('\\', "/");
        self.record(&rel, &bytes);
        Ok(())
    }

    fn record(&mut self, rel: &str, bytes: &[u8]) {
        self.entries.retain(|e| e.path != rel);
        self.entries.push(ManifestEntry {
            path: rel.to_string(),
            sha256: hex(&Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
    }

    pub fn table(&mut self, rel: &str, t: &Table) -> Result<PathBuf> {
        self.write(rel, t.to_csv().as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, v: &T) -> Result<PathBuf> {
        let s = serde_json::to_string_pretty(v)? + "\n";
        self.write(rel, s.as_bytes())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Writes `manifest.json`; consumes the writer so nothing follows it.
    pub fn finish(
        mut self,
        experiment: &str,
        status: &str,
        exit_code: i32,
        verdict: Option<String>,
        note: Option<String>,
    ) -> Result<Manifest> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest {
            experiment: experiment.to_string(),
            status: status.to_string(),
            exit_code,
            verdict,
            note,
            files: self.entries,
        };
        let s = serde_json::to_string_pretty(&m)? + "\n";
        fs::write(self.root.join("manifest.json"), s)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub experiment: String,
    pub seed: u64,
    pub hypotheses: Value,
    /// `pass`, `fail`, `demonstration` or a hypotheses notice.
    pub verdict: String,
    pub passed: bool,
    /// Informational verdicts do not affect the exit status.
    pub informational: bool,
    pub tolerance: Value,
    pub witnesses: Vec<Value>,
    pub summary: Value,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub verdict: Verdict,
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

fn kernel_hypotheses(kernels: &[&KernelSpec]) -> Value {
    Value::Array(
        kernels
            .iter()
            .map(|k| {
                let r = k.validate();
                json!({
                    "kernel": k.name(),
                    "convex": r.convex,
                    "monotone": r.monotone,
                    "satisfies_convex_hypotheses": r.satisfies_convex_hypotheses(),
                    "violations": r.violations,
                })
            })
            .collect(),
    )
}

fn pass_str(ok: bool) -> String {
    if ok { "pass" } else { "fail" }.to_string()
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Resolves the output directory. Without `create` it must exist.
pub fn prepare_output_dir(dir: &Path, create: bool) -> Result<()> {
    if dir.is_dir() {
        return Ok(());
    }
    if dir.exists() {
        return Err(Error::Io(std::io::Error::other(format!(
            "{} exists and is not a directory",
            dir.display()
        ))));
    }
    if !create {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist (pass --create)", dir.display()),
        )));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Runs the experiment into `out_dir`. On a solver failure a partial
/// manifest with a note is written before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, create: bool) -> Result<RunOutcome> {
    prepare_output_dir(out_dir, create)?;
    let mut w = ArtifactWriter::new(out_dir);
    w.write("config.toml", cfg.source.as_bytes())?;

    let pool = match cfg.workers {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?,
        ),
        None => None,
    };
    let res = match &pool {
        Some(p) => p.install(|| dispatch(cfg, &mut w)),
        None => dispatch(cfg, &mut w),
    };
    let id = cfg.experiment.id();
    match res {
        Ok(v) => {
            w.json("verdict.json", &v)?;
            let code = if v.passed || v.informational || cfg.experiment.is_demonstration() {
                0
            } else {
                1
            };
            let manifest = w.finish(id, "complete", code, Some(v.verdict.clone()), None)?;
            Ok(RunOutcome {
                exit_code: code,
                verdict: v,
                manifest,
                out_dir: out_dir.to_path_buf(),
            })
        }
        Err(e) => {
            let note = format!("partial: run stopped before completion: {e}");
            // the original error matters more than a failed manifest write
            let _ = w.finish(id, "aborted", e.exit_code(), None, Some(note));
            Err(e)
        }
    }
}

fn dispatch(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Verdict> {
    let exp = cfg.experiment;
    let mut v = match &cfg.plan {
        Plan::MaxPrinciple(p) => {
            let r = studies::max_principle_suite(p)?;
            w.table("results.csv", &r.table())?;
            verdict_max_principle(&r, &p.kernels.iter().collect::<Vec<_>>())?
        }
        Plan::TvWMonotone(p) => {
            let r = studies::tv_contraction_study(p)?;
            w.table("results.csv", &r.table())?;
            verdict_tv(&r, &p.kernels.iter().collect::<Vec<_>>())?
        }
        Plan::Counterexample(p) => {
            let r = studies::counterexample_search(p)?;
            w.table("candidates.csv", &r.table())?;
            w.table("confirmations.csv", &r.confirmation_table())?;
            verdict_counterexample(&r, &p.kernel)?
        }
        Plan::Blowup(p) => {
            let r = studies::tv_blowup_study(p)?;
            w.table("results.csv", &r.table())?;
            if !r.contrast.is_empty() {
                w.table("contrast.csv", &r.contrast_table())?;
            }
            verdict_blowup(&r, p)?
        }
        Plan::Convergence(p) => {
            let r = studies::convergence_study(p)?;
            w.table("results.csv", &r.table())?;
            verdict_convergence(&r, &p.kernel, false)?
        }
        Plan::EvenKernel(p) => {
            let r = studies::convergence_study(p)?;
            w.table("results.csv", &r.table())?;
            verdict_convergence(&r, &p.kernel, true)?
        }
        Plan::Viscous(p) => {
            let r = studies::viscous_diagram_study(p)?;
            w.table("results.csv", &r.table())?;
            verdict_viscous(&r, &p.kernel)?
        }
        Plan::Sigma(p) => {
            let r = studies::sigma_certify_study(p)?;
            w.table("results.csv", &r.table())?;
            verdict_sigma(&r, &p.kernels.iter().collect::<Vec<_>>())?
        }
        Plan::Single(p) => single_run(p, w)?,
    };
    v.experiment = exp.id().to_string();
    v.seed = cfg.seed;
    if exp.is_demonstration() {
        v.verdict = "demonstration".into();
        v.informational = true;
    }
    Ok(v)
}

fn base(hypotheses: Value, passed: bool, tolerance: Value, witnesses: Vec<Value>, summary: Value) -> Verdict {
    Verdict {
        experiment: String::new(),
        seed: 0,
        hypotheses,
        verdict: pass_str(passed),
        passed,
        informational: false,
        tolerance,
        witnesses,
        summary,
    }
}

fn verdict_max_principle(r: &MaxPrincipleResult, kernels: &[&KernelSpec]) -> Result<Verdict> {
    let witnesses = r.rows.iter().filter(|x| !x.ok).map(to_value).collect::<Result<_>>()?;
    Ok(base(
        kernel_hypotheses(kernels),
        r.passed,
        json!({ "bound": r.tolerance }),
        witnesses,
        json!({ "runs": r.rows.len() }),
    ))
}

fn verdict_tv(r: &TvContractionResult, kernels: &[&KernelSpec]) -> Result<Verdict> {
    let convex_rows: Vec<_> = r
        .rows
        .iter()
        .filter(|x| !r.non_convex_kernels.contains(&x.kernel))
        .collect();
    let ok = |x: &&studies::TvContractionRow| x.monotone && x.monotone_fine.unwrap_or(true) && x.shrink_ok;
    let convex_ok = convex_rows.iter().all(ok);
    let witnesses = r.rows.iter().filter(|x| !ok(x)).map(to_value).collect::<Result<_>>()?;
    let mut v = base(
        kernel_hypotheses(kernels),
        if r.hypotheses_ok { r.passed } else { convex_ok },
        json!({ "excess": "10 dx Lip(V)", "excess_floor": studies::EXCESS_FLOOR }),
        witnesses,
        json!({
            "runs": r.rows.len(),
            "non_convex_kernels": r.non_convex_kernels,
            "max_excess": r.rows.iter().map(|x| x.max_excess).fold(0.0, f64::max),
        }),
    );
    if !r.hypotheses_ok && convex_ok {
        v.verdict = "hypotheses not satisfied: convexity".into();
        v.informational = true;
    }
    Ok(v)
}

fn verdict_counterexample(r: &CounterexampleResult, k: &KernelSpec) -> Result<Verdict> {
    Ok(base(
        kernel_hypotheses(&[k]),
        r.found(),
        json!({ "threshold": r.threshold, "gate": r.gate }),
        r.witness.iter().map(to_value).collect::<Result<_>>()?,
        json!({
            "kernel_convex": r.kernel_convex,
            "candidates": r.candidates.len(),
            "confirmations": r.confirmations.len(),
        }),
    ))
}

fn verdict_blowup(r: &BlowupResult, p: &studies::BlowupParams) -> Result<Verdict> {
    let mut witnesses: Vec<Value> = r.rows.iter().filter(|x| !x.converged).map(to_value).collect::<Result<_>>()?;
    for c in r.contrast.iter().filter(|c| !c.bounded) {
        witnesses.push(to_value(c)?);
    }
    Ok(base(
        kernel_hypotheses(&[&p.kernel]),
        r.passed,
        json!({ "grid_gate": p.gate, "contrast_factor": 1.0 + p.contrast_tol }),
        witnesses,
        json!({
            "increasing": r.increasing,
            "converged": r.converged,
            "contrast_bounded": r.contrast_bounded,
            "tv_u": r.rows.iter().map(|x| x.tv_u).collect::<Vec<_>>(),
        }),
    ))
}

fn verdict_convergence(r: &ConvergenceResult, k: &KernelSpec, demonstration: bool) -> Result<Verdict> {
    let witnesses = r
        .fits
        .iter()
        .filter(|f| !(f.u_decreasing && f.w_decreasing))
        .map(to_value)
        .collect::<Result<_>>()?;
    let summary = if demonstration {
        json!({ "fits": r.fits, "l1_u_floor": r.floors() })
    } else {
        json!({ "fits": r.fits })
    };
    Ok(base(
        kernel_hypotheses(&[k]),
        r.passed,
        json!({ "monotone_in_eps": "strict", "slope": "> 0" }),
        witnesses,
        summary,
    ))
}

fn verdict_viscous(r: &ViscousResult, k: &KernelSpec) -> Result<Verdict> {
    Ok(base(
        kernel_hypotheses(&[k]),
        r.passed,
        json!({ "monotone": "strict" }),
        Vec::new(),
        json!({
            "eps_to_zero": r.horizontal_decreasing,
            "nu_to_zero": r.vertical_decreasing,
            "nu_to_zero_local": r.local_decreasing,
        }),
    ))
}

fn verdict_sigma(r: &SigmaCertifyResult, kernels: &[&KernelSpec]) -> Result<Verdict> {
    let mut witnesses = Vec::new();
    for k in &r.kernels {
        if let Some(worst) = &k.worst {
            for wi in worst.witnesses.iter().take(4) {
                witnesses.push(json!({ "kernel": k.kernel, "witness": wi }));
            }
        }
    }
    let summary = r
        .kernels
        .iter()
        .map(|k| {
            json!({
                "kernel": k.kernel,
                "expected_clean": k.expected_clean,
                "profiles_with_witness": k.profiles_with_witness,
                "sigma_witnesses": k.sigma_witnesses,
                "j_witnesses": k.j_witnesses,
                "ok": k.ok,
            })
        })
        .collect::<Vec<_>>();
    Ok(base(
        kernel_hypotheses(kernels),
        r.passed,
        json!({ "sigma": crate::diagnostics::sigma::SIGMA_TOL }),
        witnesses,
        Value::Array(summary),
    ))
}

fn single_run(p: &SingleRunPlan, w: &mut ArtifactWriter) -> Result<Verdict> {
    let trace = run(&p.model, &p.scheme, &p.grid, &p.snapshot_times)?;
    let dir = w.root().join("trace");
    let files = write_trace(&trace, &dir, json!({}))?;
    for f in &files {
        w.adopt(f)?;
    }
    let last = format!("trace/snapshot_{:04}.csv", trace.fields_u.len() - 1);
    let profile = fs::read_to_string(w.root().join(&last))?;
    w.write("profile_final.svg", render_plot(&profile, PlotKind::Profile)?.as_bytes())?;
    let series = fs::read_to_string(dir.join("diagnostics.csv"))?;
    w.write("tv_series.svg", render_plot(&series, PlotKind::Series)?.as_bytes())?;

    let (lo, hi) = trace
        .diagnostics
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.min_u), b.max(r.max_u)));
    let ok = lo >= -MAX_PRINCIPLE_TOL && hi <= 1.0 + MAX_PRINCIPLE_TOL;
    let witnesses = trace
        .diagnostics
        .iter()
        .filter(|r| r.min_u < -MAX_PRINCIPLE_TOL || r.max_u > 1.0 + MAX_PRINCIPLE_TOL)
        .take(16)
        .map(to_value)
        .collect::<Result<_>>()?;
    let kernels = if p.scheme.flux_form.is_nonlocal() { vec![&p.scheme.kernel] } else { vec![] };
    Ok(base(
        kernel_hypotheses(&kernels),
        ok,
        json!({ "max_principle": MAX_PRINCIPLE_TOL }),
        witnesses,
        json!({
            "n_steps": trace.n_steps,
            "dt": trace.dt,
            "min_u": lo,
            "max_u": hi,
            "final_mass": trace.diagnostics.last().map(|r| r.mass),
            "final_tv_u": trace.diagnostics.last().map(|r| r.tv_u),
        }),
    ))
}

/// One-line descriptions of every experiment id.
pub fn list_experiments() -> Vec<(&'static str, &'static str)> {
    Experiment::ALL.iter().map(|e| (e.id(), e.description())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::studies::ConvergenceParams;
    use crate::harness::config::parse_config_str;

    #[test]
    fn failed_study_leaves_partial_manifest() {
        let mut cfg = parse_config_str("experiment = \"eps_convergence\"\n", Path::new(".")).unwrap();
        // too coarse for the smallest eps; the parser would refuse this
        cfg.plan = Plan::Convergence(ConvergenceParams {
            dx: 0.05,
            ..ConvergenceParams::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let e = run_experiment(&cfg, dir.path(), false).unwrap_err();
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["status"], "aborted");
        assert_eq!(m["exit_code"], e.exit_code());
        assert!(m["note"].as_str().unwrap().starts_with("partial:"));
        assert_eq!(m["files"][0]["path"], "config.toml");
        assert!(!dir.path().join("verdict.json").exists());
    }

    #[test]
    fn adopt_rejects_outside_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let f = b.path().join("x");
        fs::write(&f, "1").unwrap();
        assert!(ArtifactWriter::new(a.path()).adopt(&f).is_err());
    }
}
