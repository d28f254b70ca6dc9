//! Analytic bounds over a grid of profiles and horizons, without simulating.

use std::fmt::Write as _;

use ehsched::metrics::{
    capacity_from_density, rr_prediction_from_densities, urop_lower_bound, Capacity,
};
use ehsched::NetworkConfig;
use serde::{Deserialize, Serialize};

use crate::spec::{ExperimentSpec, SpecError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub profile: String,
    pub m: usize,
    pub k: usize,
    pub horizon: usize,
    pub density: f64,
    /// `None` when the density lies outside `(0, 1)`.
    pub urop_lower_bound: Option<f64>,
    pub rr_prediction: f64,
    pub capacity: Capacity,
}

pub const OUT_OF_DOMAIN: &str = "out of domain";

/// One row per (profile, horizon); profiles come from `[bounds]`, or the
/// spec's own profile when the section lists none.
pub fn run_bounds(spec: &ExperimentSpec) -> Result<Vec<BoundsRow>, SpecError> {
    spec.validate()?;
    let (profiles, horizons) = match &spec.bounds {
        Some(b) if !b.all_profiles().is_empty() => (b.all_profiles(), b.horizons.clone()),
        Some(b) => (vec![spec.profile.clone()], b.horizons.clone()),
        None => (vec![spec.profile.clone()], vec![spec.network.horizon]),
    };
    let (m, k) = (spec.network.m, spec.network.k);
    let mut rows = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        let profile = p.resolve(&format!("bounds.profile[{i}]"), m)?;
        let d = profile.network_density();
        let label = p.label.clone().unwrap_or_else(|| format!("D={d}"));
        for &n in &horizons {
            let cfg = NetworkConfig::new(m, k, n).map_err(|e| SpecError::Invalid {
                field: "bounds.horizons".into(),
                reason: e.to_string(),
            })?;
            let sigma = (k * n) as f64 / m as f64;
            rows.push(BoundsRow {
                profile: label.clone(),
                m,
                k,
                horizon: n,
                density: d,
                urop_lower_bound: urop_lower_bound(&cfg, d).ok(),
                rr_prediction: rr_prediction_from_densities(&profile.densities, sigma),
                capacity: capacity_from_density(d),
            });
        }
    }
    Ok(rows)
}

fn capacity_label(c: Capacity) -> String {
    match c {
        Capacity::Admissible => "admissible".into(),
        Capacity::Saturated { max_efficiency } => format!("saturated:{max_efficiency:.6}"),
    }
}

pub fn bounds_csv(rows: &[BoundsRow]) -> String {
    let mut out = String::from("profile,m,k,N,D,urop_lower_bound,rr_prediction,capacity\n");
    for r in rows {
        let bound = r
            .urop_lower_bound
            .map(|b| format!("{b:.6}"))
            .unwrap_or_else(|| OUT_OF_DOMAIN.to_string());
        writeln!(
            out,
            "{},{},{},{},{:.6},{},{:.6},{}",
            r.profile,
            r.m,
            r.k,
            r.horizon,
            r.density,
            bound,
            r.rr_prediction,
            capacity_label(r.capacity)
        )
        .expect("writing to a string");
    }
    out
}
