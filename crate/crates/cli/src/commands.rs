use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use second_species::chain::{find_critical_chain, seed_and_solve, ChainCertificate, ChainFile, CollisionChain, Variant};
use second_species::error::Error;
use second_species::kepler::{arc_at_energy, lambert_f};
use second_species::plane::PlanePoint;
use second_species::shadow::{orbit_csv, run_sweep, SweepSummary};

use crate::config::RunConfig;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONVERGENCE: u8 = 3;
pub const EXIT_CERTIFICATE: u8 = 4;

/// A failed command: exit code plus a machine-readable record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub exit_code: u8,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { exit_code: EXIT_INPUT, kind: "input".into(), message: message.into() }
    }

    fn from_error(e: &Error) -> Self {
        let (exit_code, kind) = match e {
            Error::NonConvergence { .. } | Error::Integration(_) => (EXIT_CONVERGENCE, "convergence"),
            Error::Degenerate(_) | Error::Collision(_) => (EXIT_CERTIFICATE, "certificate"),
            Error::Domain(_) | Error::NoSolution { .. } | Error::InvalidInput(_) => (EXIT_INPUT, "input"),
        };
        Self { exit_code, kind: kind.into(), message: e.to_string() }
    }
}

pub type Outcome = Result<(), Failure>;

/// Everything needed to run one command.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub command: &'static str,
}

impl Context {
    fn provenance(&self) -> Value {
        let canonical = serde_json::to_string(&self.config).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        json!({
            "tool": "second-species",
            "library_version": second_species::VERSION,
            "command": self.command,
            "config_sha256": hash.iter().map(|b| format!("{b:02x}")).collect::<String>(),
            "seed": self.config.seed,
            "config": self.config,
        })
    }

    fn write(&self, name: &str, contents: &str) -> Outcome {
        fs::create_dir_all(&self.out).map_err(|e| Failure::input(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&self, name: &str, value: &Value) -> Outcome {
        self.write(name, &(serde_json::to_string_pretty(value).expect("JSON value serializes") + "\n"))
    }

    /// Record a failure next to the outputs (best effort) and pass it on.
    pub fn record(&self, f: Failure) -> Failure {
        let _ = self.write_json("error.json", &json!({ "provenance": self.provenance(), "error": f }));
        f
    }

    /// Like [`Context::record`], for failures before a configuration exists.
    pub fn record_without_config(&self, f: Failure) -> Failure {
        let provenance = json!({ "tool": "second-species", "library_version": second_species::VERSION, "command": self.command });
        let _ = self.write_json("error.json", &json!({ "provenance": provenance, "error": f }));
        f
    }
}

fn point(p: [f64; 2]) -> PlanePoint {
    PlanePoint::new(p[0], p[1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct LambertRow {
    x_minus: PlanePoint,
    x_plus: PlanePoint,
    n: i32,
    energy: f64,
    f: f64,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "F")]
    f_action: f64,
    tau: f64,
    y_minus: PlanePoint,
    y_plus: PlanePoint,
    second_focus: PlanePoint,
}

fn lambert_rows(a: PlanePoint, b: PlanePoint, cfg: &crate::config::LambertConfig) -> Result<Vec<LambertRow>, Error> {
    let f = lambert_f(a, b)?;
    cfg.revolutions
        .iter()
        .map(|&n| {
            let arc = arc_at_energy(n, cfg.energy, a, b)?;
            Ok(LambertRow {
                x_minus: a,
                x_plus: b,
                n,
                energy: cfg.energy,
                f,
                j: arc.action_j,
                f_action: arc.action_f,
                tau: arc.tof,
                y_minus: arc.y_minus,
                y_plus: arc.y_plus,
                second_focus: arc.second_focus,
            })
        })
        .collect()
}

pub fn cmd_lambert(ctx: &Context) -> Outcome {
    let cfg = &ctx.config.lambert;
    let mut rows = Vec::new();
    for (i, pair) in cfg.pairs.iter().enumerate() {
        let (a, b) = (point(pair[0]), point(pair[1]));
        rows.extend(lambert_rows(a, b, cfg).map_err(|e| Failure::input(format!("lambert pair {i} ({a:?} → {b:?}): {e}")))?);
    }
    let mut skipped = 0usize;
    let mut try_pair = |a: PlanePoint, b: PlanePoint, rows: &mut Vec<LambertRow>| match lambert_rows(a, b, cfg) {
        Ok(r) => rows.extend(r),
        Err(_) => skipped += 1,
    };
    for (i, &a) in cfg.grid.iter().enumerate() {
        for (j, &b) in cfg.grid.iter().enumerate() {
            if i != j {
                try_pair(point(a), point(b), &mut rows);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
    let disk = |rng: &mut ChaCha8Rng| PlanePoint::from_polar(cfg.random_radius * rng.random::<f64>().sqrt(), std::f64::consts::TAU * rng.random::<f64>());
    for _ in 0..cfg.random_pairs {
        let (a, b) = (disk(&mut rng), disk(&mut rng));
        try_pair(a, b, &mut rows);
    }
    info!("lambert: {} rows, {skipped} inadmissible pairs skipped", rows.len());
    let mut csv = String::from("x_minus_x,x_minus_y,x_plus_x,x_plus_y,n,energy,f,J,F,tau,y_minus_x,y_minus_y,y_plus_x,y_plus_y\n");
    for r in &rows {
        let v = [
            r.x_minus.x, r.x_minus.y, r.x_plus.x, r.x_plus.y, r.n as f64, r.energy, r.f, r.j, r.f_action, r.tau, r.y_minus.x, r.y_minus.y, r.y_plus.x,
            r.y_plus.y,
        ];
        csv.push_str(&v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    ctx.write_json("lambert.json", &json!({ "provenance": ctx.provenance(), "skipped_pairs": skipped, "rows": rows }))?;
    ctx.write("lambert.csv", &csv)
}

/// On-disk form of a solved chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    #[serde(default)]
    pub provenance: Value,
    pub chain: ChainFile,
    pub certificate: Option<ChainCertificate>,
}

pub fn solve_chain(ctx: &Context) -> Result<(CollisionChain, ChainCertificate), Failure> {
    let c = &ctx.config.chain;
    let solved = match &c.input {
        Some(file) => {
            let start = CollisionChain::from_file(file).map_err(|e| Failure::input(format!("chain.input: {e}")))?;
            let variant = if start.angular_momentum.is_some() { Variant::FixedEnergyMomentum } else { Variant::FixedEnergy };
            find_critical_chain(&start, variant, &c.solver)
        }
        None => seed_and_solve(c.energy, c.angular_momentum, c.revolutions, c.collisions, &c.k1, c.alpha1, &c.solver),
    };
    solved.map_err(|e| Failure::from_error(&e))
}

pub fn cmd_chain(ctx: &Context) -> Result<(CollisionChain, ChainCertificate), Failure> {
    let (chain, cert) = solve_chain(ctx)?;
    let out = ChainOutput { provenance: ctx.provenance(), chain: chain.to_file(), certificate: Some(cert.clone()) };
    ctx.write_json("chain.json", &serde_json::to_value(&out).expect("chain serializes"))?;
    if !cert.valid {
        return Err(Failure { exit_code: EXIT_CERTIFICATE, kind: "certificate".into(), message: "chain certificate is not valid".into() });
    }
    Ok((chain, cert))
}

pub fn load_chain(path: &Path) -> Result<(CollisionChain, ChainCertificate), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let out: ChainOutput = serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let chain = CollisionChain::from_file(&out.chain).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let cert = out.certificate.ok_or_else(|| Failure::input(format!("{}: no certificate", path.display())))?;
    if !cert.valid {
        return Err(Failure { exit_code: EXIT_CERTIFICATE, kind: "certificate".into(), message: format!("{}: certificate is not valid", path.display()) });
    }
    Ok((chain, cert))
}

pub fn cmd_shadow(ctx: &Context, chain: &CollisionChain, cert: &ChainCertificate) -> Outcome {
    let s = &ctx.config.shadow;
    let members = run_sweep(chain, cert, &s.mu_sweep, s.rho, s.variant, &s.options);
    let mut entries = Vec::new();
    let mut reports = Vec::new();
    let mut failed = 0usize;
    for m in &members {
        match &m.result {
            Ok((orbit, report)) => {
                if s.trajectories {
                    ctx.write(&format!("trajectory_mu_{:e}.csv", m.mu), &orbit_csv(orbit))?;
                }
                entries.push(json!({ "mu": m.mu, "status": "converged", "report": report, "newton_history": orbit.newton_history }));
                reports.push(report.clone());
            }
            Err(e) => {
                warn!("μ = {:e}: {e}", m.mu);
                failed += 1;
                entries.push(json!({ "mu": m.mu, "status": "failed", "error": e.to_string() }));
            }
        }
    }
    let summary = (!reports.is_empty()).then(|| SweepSummary::new(&reports));
    let checks = summary.as_ref().map(|s| {
        json!({
            "slopes_within_tolerance": s.slopes_within_tolerance(),
            "min_delta_ratio_bounded": s.min_delta_ratio_bounded(),
            "units_within_tolerance": s.units_within_tolerance(),
            "lambda1_increasing": s.lambda1_increasing,
            "lambda1_log_fit_better": s.lambda1_log_fit_better(),
            "lambda2_cauchy": s.lambda2_cauchy(),
        })
    });
    ctx.write_json(
        "shadow_report.json",
        &json!({
            "provenance": ctx.provenance(),
            "variant": s.variant,
            "rho": s.rho,
            "members": entries,
            "summary": summary,
            "checks": checks,
        }),
    )?;
    if let Some(sm) = &summary {
        ctx.write("shadow_report.csv", &sm.to_csv())?;
    }
    if failed > 0 {
        return Err(Failure { exit_code: EXIT_CONVERGENCE, kind: "convergence".into(), message: format!("{failed} of {} sweep members did not converge", members.len()) });
    }
    Ok(())
}
