//! Efficiency, density and fairness figures, and the closed-form bounds
//! they are checked against.
//!
//! Throughout, `V_i^opt(t) = floor(B_i(0) + E_i^tot(t))` is the number of
//! packets node `i` could have sent by slot `t` if nothing were wasted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HarvestTrace, NetworkConfig};
use crate::sim::RunRecord;

fn check_interval(cfg: &NetworkConfig, from: usize) -> Result<()> {
    if from >= cfg.horizon {
        return Err(Error::Parameter(format!(
            "interval start {from} must be below the horizon {}",
            cfg.horizon
        )));
    }
    Ok(())
}

/// Network density: fully-efficient packet count over `kN`.
pub fn density(trace: &HarvestTrace, cfg: &NetworkConfig) -> f64 {
    let total: u64 = trace.total_floors().iter().sum();
    total as f64 / (cfg.channels * cfg.horizon) as f64
}

/// `V_i^(T)`: packets node `i` can still send in `(T, N]`.
///
/// A fully efficient schedule has drained node `i` by slot `T` as far as
/// one packet per slot allows, leaving `floor(B_i(0)+E_i^tot(T)) -
/// min(that, T)` whole packets banked; add the harvest after `T`.
pub fn remaining_packets(trace: &HarvestTrace, from: usize) -> Vec<u64> {
    trace
        .packet_floors()
        .into_iter()
        .map(|c| {
            let drained = c[from].min(from as u64);
            c[c.len() - 1] - drained
        })
        .collect()
}

/// Per-node partial densities `D_i^(T)`.
pub fn partial_node_densities(
    trace: &HarvestTrace,
    cfg: &NetworkConfig,
    from: usize,
) -> Result<Vec<f64>> {
    check_interval(cfg, from)?;
    let share = (cfg.channels * (cfg.horizon - from)) as f64 / cfg.nodes as f64;
    Ok(remaining_packets(trace, from)
        .into_iter()
        .map(|v| v as f64 / share)
        .collect())
}

/// Partial density `D^(T)` over the interval `(T, N]`.
pub fn partial_density(trace: &HarvestTrace, cfg: &NetworkConfig, from: usize) -> Result<f64> {
    check_interval(cfg, from)?;
    let total: u64 = remaining_packets(trace, from).iter().sum();
    Ok(total as f64 / (cfg.channels * (cfg.horizon - from)) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Capacity {
    Admissible,
    /// Demand exceeds `k(N-T)`; no policy can exceed `max_efficiency`.
    Saturated {
        max_efficiency: f64,
    },
}

/// Whether the energy available in `(T, N]` fits through `k` channels.
pub fn capacity_check(trace: &HarvestTrace, cfg: &NetworkConfig, from: usize) -> Result<Capacity> {
    check_interval(cfg, from)?;
    let total: u64 = remaining_packets(trace, from).iter().sum();
    let slots = (cfg.channels * (cfg.horizon - from)) as u64;
    Ok(capacity_from_totals(total as f64, slots as f64))
}

fn capacity_from_totals(demand: f64, slots: f64) -> Capacity {
    if demand <= slots {
        Capacity::Admissible
    } else {
        Capacity::Saturated {
            max_efficiency: slots / demand,
        }
    }
}

/// Capacity verdict for an expected density `D` (demand `D*kN`).
pub fn capacity_from_density(d: f64) -> Capacity {
    capacity_from_totals(d, 1.0)
}

/// Round-robin (quantum 1) efficiency predicted from per-node densities,
/// with `sigma = k(N-T)/m` slots per node.
///
/// Integral `sigma` uses `1 - sum_H (D_i - 1) / sum D_i`; otherwise the
/// heavy nodes get `floor(sigma) + 1` slots and the loss per heavy node is
/// `(D_i - 1) sigma - (1 - frac(sigma))`, floored at zero.
pub fn rr_prediction_from_densities(densities: &[f64], sigma: f64) -> f64 {
    let total: f64 = densities.iter().sum();
    if total == 0.0 {
        return 1.0;
    }
    let heavy = densities.iter().filter(|d| **d > 1.0);
    let loss = if sigma.fract() == 0.0 {
        heavy.map(|d| d - 1.0).sum::<f64>() / total
    } else {
        let spare = 1.0 - sigma.fract();
        heavy
            .map(|d| ((d - 1.0) * sigma - spare).max(0.0))
            .sum::<f64>()
            / (total * sigma)
    };
    1.0 - loss
}

pub fn rr_efficiency_prediction(
    trace: &HarvestTrace,
    cfg: &NetworkConfig,
    from: usize,
) -> Result<f64> {
    let d = partial_node_densities(trace, cfg, from)?;
    let sigma = (cfg.channels * (cfg.horizon - from)) as f64 / cfg.nodes as f64;
    Ok(rr_prediction_from_densities(&d, sigma))
}

/// Expected-efficiency floor for UROP at density `D`:
/// `max(0, 1 - 2m / ((1-D) D N k))`.
pub fn urop_lower_bound(cfg: &NetworkConfig, d: f64) -> Result<f64> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!(
            "density must lie in (0, 1), got {d}"
        )));
    }
    let denom = (1.0 - d) * d * (cfg.horizon * cfg.channels) as f64;
    Ok((1.0 - 2.0 * cfg.nodes as f64 / denom).max(0.0))
}

/// Earliest "final drop" slot over all nodes; a node that was never
/// dropped counts as slot 0.
pub fn last_departure(run: &RunRecord) -> usize {
    run.last_idle_slot()
        .into_iter()
        .map(|s| s.unwrap_or(0))
        .min()
        .unwrap_or(0)
}

/// Per-run UROP floor `1 - k(N - T0) / sum_i V_i^opt(N)` with `T0` taken
/// from the run's slot log.
pub fn theorem4_lower_bound(run: &RunRecord, trace: &HarvestTrace) -> f64 {
    theorem4_bound_at(run, trace, last_departure(run))
}

pub fn theorem4_bound_at(run: &RunRecord, trace: &HarvestTrace, t0: usize) -> f64 {
    let cfg = &run.config;
    let opt: u64 = trace.total_floors().iter().sum();
    if opt == 0 {
        return 1.0;
    }
    1.0 - (cfg.channels * (cfg.horizon - t0.min(cfg.horizon))) as f64 / opt as f64
}

/// Jain's index `(sum x)^2 / (n sum x^2)`.
pub fn jain_fairness(x: &[f64]) -> Result<f64> {
    if x.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::Domain("allocations must be nonnegative".into()));
    }
    let sum: f64 = x.iter().sum();
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return Err(Error::Domain("all-zero allocation vector".into()));
    }
    Ok(sum * sum / (x.len() as f64 * sq))
}

/// `min(kN, sum_i V_i^opt(N))`.
pub fn packet_bound(trace: &HarvestTrace, cfg: &NetworkConfig) -> u64 {
    let total: u64 = trace.total_floors().iter().sum();
    total.min((cfg.channels * cfg.horizon) as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `min(kN, sum floor(B(0)+E^tot(N)))`.
    PacketBound,
    /// Max-flow offline optimum.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub total_sent: u64,
    pub opt_throughput: u64,
    pub normalization: Normalization,
    pub packet_bound: u64,
    pub oracle_opt: Option<u64>,
    pub efficiency: f64,
    /// `V_i(N) / V_i^opt(N)`; `None` for nodes that never had a packet.
    pub per_node_x: Vec<Option<f64>>,
    pub jain: Option<f64>,
}

impl EfficiencyReport {
    /// Report for `run` on `trace`, normalised by the oracle value when one
    /// is supplied and by `min(kN, sum floors)` otherwise.
    pub fn new(run: &RunRecord, trace: &HarvestTrace, oracle_opt: Option<u64>) -> Self {
        let packet_bound = packet_bound(trace, &run.config);
        let (opt, normalization) = match oracle_opt {
            Some(o) => (o, Normalization::Oracle),
            None => (packet_bound, Normalization::PacketBound),
        };
        let total_sent = run.total_sent();
        let efficiency = if opt == 0 {
            1.0
        } else {
            total_sent as f64 / opt as f64
        };
        let per_node_x: Vec<Option<f64>> = run
            .sent_per_node()
            .iter()
            .zip(trace.total_floors())
            .map(|(&sent, opt)| (opt > 0).then(|| sent as f64 / opt as f64))
            .collect();
        let xs: Vec<f64> = per_node_x.iter().flatten().copied().collect();
        EfficiencyReport {
            total_sent,
            opt_throughput: opt,
            normalization,
            packet_bound,
            oracle_opt,
            efficiency,
            jain: jain_fairness(&xs).ok(),
            per_node_x,
        }
    }
}

/// Cumulative efficiency `sent(1..=t) / min(kt, sum V_i^opt(t))` at each
/// checkpoint slot.
pub fn efficiency_checkpoints(
    run: &RunRecord,
    trace: &HarvestTrace,
    at: &[usize],
) -> Vec<(usize, f64)> {
    let floors = trace.packet_floors();
    let sent = run.cumulative_sent();
    at.iter()
        .filter(|&&t| t >= 1 && t <= run.config.horizon)
        .map(|&t| {
            let avail: u64 = floors.iter().map(|c| c[t]).sum();
            let opt = avail.min((run.config.channels * t) as u64);
            let eff = if opt == 0 {
                1.0
            } else {
                sent[t] as f64 / opt as f64
            };
            (t, eff)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harvest::{gen_deterministic, make_profile, DensityProfile, TwoLevelProfile};
    use crate::policies::Urop;
    use crate::sim::run_simulation;

    fn high() -> TwoLevelProfile {
        TwoLevelProfile {
            count_high: 25,
            d_high: 3.0,
            d_low: 0.3,
        }
    }

    fn low() -> TwoLevelProfile {
        TwoLevelProfile {
            count_high: 5,
            d_high: 2.1,
            d_low: 0.1,
        }
    }

    #[test]
    fn density_of_high_profile() {
        let cfg = NetworkConfig::new(100, 10, 2000).unwrap();
        let trace = gen_deterministic(&cfg, &make_profile(high(), 100).unwrap()).unwrap();
        assert!((density(&trace, &cfg) - 0.975).abs() <= 0.005);
    }

    #[test]
    fn density_edge_cases() {
        let cfg = NetworkConfig::new(3, 1, 10).unwrap();
        let zero = HarvestTrace::from_initial(vec![0.0; 3], 10).unwrap();
        assert_eq!(density(&zero, &cfg), 0.0);
        let cfg = NetworkConfig::new(10, 2, 5000).unwrap();
        let t = gen_deterministic(&cfg, &DensityProfile::uniform(10, 1.0).unwrap()).unwrap();
        assert!((density(&t, &cfg) - 1.0).abs() <= 10.0 / (2.0 * 5000.0));
    }

    #[test]
    fn partial_density_reductions() {
        let cfg = NetworkConfig::new(4, 2, 100).unwrap();
        let t = gen_deterministic(&cfg, &DensityProfile::uniform(4, 0.6).unwrap()).unwrap();
        assert_eq!(partial_density(&t, &cfg, 0).unwrap(), density(&t, &cfg));
        for from in [10, 50, 90] {
            let pd = partial_density(&t, &cfg, from).unwrap();
            // floor error of one packet per node over the shorter interval
            assert!(
                (pd - 0.6).abs() <= 4.0 / (2.0 * (100 - from) as f64),
                "T={from}: {pd}"
            );
        }
        assert!(partial_density(&t, &cfg, 100).is_err());
    }

    #[test]
    fn burst_after_t_raises_partial_density() {
        // two nodes, one channel, ten slots; all energy lands in slot 8
        let cfg = NetworkConfig::new(2, 1, 10).unwrap();
        let mut grid = vec![vec![0.0; 10]; 2];
        grid[0][7] = 2.0;
        grid[1][7] = 1.0;
        let t = HarvestTrace::new(grid, vec![0.0; 2]).unwrap();
        assert_eq!(density(&t, &cfg), 0.3);
        // interval (5, 10]: 3 packets over 5 channel-slots
        assert_eq!(partial_density(&t, &cfg, 5).unwrap(), 0.6);
    }

    #[test]
    fn capacity_verdicts() {
        let cfg = NetworkConfig::new(2, 1, 10).unwrap();
        let t = HarvestTrace::from_initial(vec![10.0, 10.0], 10).unwrap();
        assert_eq!(
            capacity_check(&t, &cfg, 0).unwrap(),
            Capacity::Saturated {
                max_efficiency: 0.5
            }
        );
        let empty = HarvestTrace::from_initial(vec![0.0; 2], 10).unwrap();
        assert_eq!(
            capacity_check(&empty, &cfg, 0).unwrap(),
            Capacity::Admissible
        );
        // m=9, k=3, ten slots, 27 packets: D = 0.9
        let cfg = NetworkConfig::new(9, 3, 10).unwrap();
        let t = HarvestTrace::from_initial(vec![3.0; 9], 10).unwrap();
        assert!((density(&t, &cfg) - 0.9).abs() < 1e-12);
        assert_eq!(capacity_check(&t, &cfg, 0).unwrap(), Capacity::Admissible);
    }

    #[test]
    fn rr_predictions_for_both_profiles() {
        let cfg = NetworkConfig::new(100, 10, 2000).unwrap();
        let hi = gen_deterministic(&cfg, &make_profile(high(), 100).unwrap()).unwrap();
        let lo = gen_deterministic(&cfg, &make_profile(low(), 100).unwrap()).unwrap();
        let p_hi = rr_efficiency_prediction(&hi, &cfg, 0).unwrap();
        let p_lo = rr_efficiency_prediction(&lo, &cfg, 0).unwrap();
        assert!((p_hi - 0.487).abs() < 0.001, "{p_hi}");
        assert!((p_lo - 0.725).abs() < 0.001, "{p_lo}");
        assert!(
            (rr_prediction_from_densities(
                &[3.0; 25]
                    .iter()
                    .chain(&[0.3; 75])
                    .copied()
                    .collect::<Vec<_>>(),
                200.0
            ) - (1.0 - 50.0 / 97.5))
                .abs()
                < 1e-12
        );
        assert_eq!(rr_prediction_from_densities(&[0.5, 1.0, 0.2], 7.5), 1.0);
    }

    #[test]
    fn rr_prediction_non_integer_sigma() {
        // m=3,k=1,N=10: sigma=10/3; node 0 has D=3 -> 10 packets, gets 4 slots
        let d = [3.0, 0.3, 0.3];
        let sigma = 10.0 / 3.0;
        let expected = 1.0 - (10.0 - 4.0) / (3.6 * sigma);
        assert!((rr_prediction_from_densities(&d, sigma) - expected).abs() < 1e-12);
    }

    #[test]
    fn urop_bound_values() {
        let cfg = NetworkConfig::new(100, 10, 2000).unwrap();
        assert!((urop_lower_bound(&cfg, 0.975).unwrap() - (1.0 - 200.0 / 487.5)).abs() < 1e-12);
        assert!((urop_lower_bound(&cfg, 0.2).unwrap() - 0.9375).abs() < 1e-12);
        assert!(urop_lower_bound(&cfg, 1.0).is_err());
        assert!(urop_lower_bound(&cfg, 0.0).is_err());
        let mut prev = 0.0;
        for n in [2_000, 20_000, 200_000, 2_000_000] {
            let b = urop_lower_bound(&NetworkConfig::new(100, 10, n).unwrap(), 0.975).unwrap();
            assert!(b > prev);
            prev = b;
        }
        assert!(prev > 0.99);
    }

    #[test]
    fn last_departure_floor_on_golden_trace() {
        let cfg = NetworkConfig::new(3, 1, 7).unwrap();
        let trace = HarvestTrace::from_initial(vec![2.0, 1.0, 0.0], 7).unwrap();
        let run = run_simulation(&cfg, &trace, &mut Urop::with_order(vec![0, 1, 2], 1)).unwrap();
        assert_eq!(last_departure(&run), 5);
        let b = theorem4_lower_bound(&run, &trace);
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
        let rep = EfficiencyReport::new(&run, &trace, None);
        assert_eq!(rep.efficiency, 1.0);
        assert!(rep.efficiency >= b);
        assert_eq!(theorem4_bound_at(&run, &trace, 7), 1.0);
    }

    #[test]
    fn jain_values() {
        assert!((jain_fairness(&[0.7; 10]).unwrap() - 1.0).abs() < 1e-12);
        let mut x = vec![1.0 / 3.0; 25];
        x.extend(vec![1.0; 75]);
        assert!((jain_fairness(&x).unwrap() - 0.893).abs() < 0.0005);
        let mut one = vec![0.0; 100];
        one[17] = 4.0;
        assert!((jain_fairness(&one).unwrap() - 0.01).abs() < 1e-12);
        assert!(jain_fairness(&[0.0; 4]).is_err());
    }

    #[test]
    fn report_excludes_nodes_without_energy() {
        let cfg = NetworkConfig::new(3, 1, 4).unwrap();
        let trace = HarvestTrace::from_initial(vec![2.0, 0.0, 1.0], 4).unwrap();
        let run = run_simulation(&cfg, &trace, &mut Urop::with_order(vec![0, 1, 2], 1)).unwrap();
        let rep = EfficiencyReport::new(&run, &trace, Some(3));
        assert_eq!(rep.per_node_x[1], None);
        assert_eq!(rep.normalization, Normalization::Oracle);
        assert_eq!(rep.packet_bound, 3);
    }
}
