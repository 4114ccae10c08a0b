use log::{info, warn};
use rayon::prelude::*;

use super::{build_initial_guess, predict_from_orbit, solve_periodic_orbit, verify_shadowing, ShadowOrbit, ShadowReport, ShadowVariant, ShootingOptions};
use crate::chain::{ChainCertificate, CollisionChain};
use crate::error::{Error, Result};

/// Outcome for one `μ` of a sweep.
#[derive(Debug, Clone)]
pub struct SweepMember {
    pub mu: f64,
    pub result: Result<(ShadowOrbit, ShadowReport)>,
}

/// Solve and verify the shadowing orbit for every `μ` in `mus`.
///
/// The direct solves run in parallel on the current rayon pool. A `μ` whose
/// direct solve fails is retried by continuation from the converged orbit at
/// the nearest smaller `μ`, if there is one. Results keep the order of `mus`.
pub fn run_sweep(
    chain: &CollisionChain,
    cert: &ChainCertificate,
    mus: &[f64],
    rho: f64,
    variant: ShadowVariant,
    opts: &ShootingOptions,
) -> Vec<SweepMember> {
    let solve = |mu: f64| -> Result<(ShadowOrbit, ShadowReport)> {
        let guess = build_initial_guess(chain, cert, mu, rho, opts)?;
        let orbit = solve_periodic_orbit(&guess, variant, opts)?;
        finish(orbit, chain, opts)
    };
    let mut members: Vec<SweepMember> = mus.par_iter().map(|&mu| SweepMember { mu, result: solve(mu) }).collect();
    for i in 0..members.len() {
        if members[i].result.is_ok() {
            continue;
        }
        let mu = members[i].mu;
        let base = members
            .iter()
            .filter(|m| m.mu < mu && m.result.is_ok())
            .max_by(|a, b| a.mu.total_cmp(&b.mu))
            .map(|m| (m.mu, m.result.as_ref().unwrap().0.clone()));
        let Some((mu0, orbit0)) = base else { continue };
        info!("μ = {mu:e}: retrying by continuation from μ = {mu0:e}");
        let retry = (|| {
            let old = build_initial_guess(chain, cert, mu0, rho, opts)?;
            let new = build_initial_guess(chain, cert, mu, rho, opts)?;
            let guess = predict_from_orbit(&new, &old, &orbit0)?;
            finish(solve_periodic_orbit(&guess, variant, opts)?, chain, opts)
        })();
        match retry {
            Ok(r) => members[i].result = Ok(r),
            Err(e) => warn!("μ = {mu:e}: continuation failed too ({e})"),
        }
    }
    members
}

fn finish(mut orbit: ShadowOrbit, chain: &CollisionChain, opts: &ShootingOptions) -> Result<(ShadowOrbit, ShadowReport)> {
    let report = verify_shadowing(&orbit, chain, opts)?;
    orbit.sup_shadow_distance = report.row.sup_dist;
    Ok((orbit, report))
}

/// Converged reports of a sweep, or the first failure.
pub fn sweep_reports(members: &[SweepMember]) -> Result<Vec<ShadowReport>> {
    members
        .iter()
        .map(|m| m.result.as_ref().map(|(_, r)| r.clone()).map_err(Error::clone))
        .collect()
}
