//! Subset-enumeration stability test.
//!
//! The network is ergodic when, for every nonempty server set `U`, the
//! arrival rate of dispatchers confined to `U` is strictly below the
//! service capacity of `U`; it is unstable if some `U` strictly reverses
//! the inequality. Exact ties settle neither, so they are reported as such.

use serde::{Deserialize, Serialize};

use super::{CompatGraph, ServerId};
use crate::error::{Error, Result};

pub const DEFAULT_ERGODICITY_SERVER_CAP: usize = 20;

/// Relative tolerance under which demand and capacity count as equal.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Ergodicity {
    Ergodic,
    /// `witness` is the subset with the largest excess demand (smallest
    /// bitmask among equals).
    Unstable { witness: Vec<ServerId>, demand: f64, capacity: f64 },
    /// No subset is overloaded but `witness` sits exactly at capacity.
    Inconclusive { witness: Vec<ServerId>, demand: f64, capacity: f64 },
}

impl CompatGraph {
    /// Exact stability check with the default cap of 20 servers.
    pub fn check_ergodicity_exact(&self) -> Result<Ergodicity> {
        self.check_ergodicity_exact_capped(DEFAULT_ERGODICITY_SERVER_CAP)
    }

    pub fn check_ergodicity_exact_capped(&self, max_servers: usize) -> Result<Ergodicity> {
        let ns = self.num_servers();
        if ns > max_servers || ns >= 63 {
            return Err(Error::Size {
                what: "servers for subset enumeration",
                requested: ns as u128,
                cap: max_servers.min(62) as u128,
                hint: "; use the per-node simple-graph check or analyse by hand",
            });
        }
        let full = 1usize << ns;
        // demand[mask] = sum of arrival rates of dispatchers whose
        // neighborhood is exactly mask, then summed over submasks.
        let mut demand = vec![0.0f64; full];
        for d in self.dispatchers() {
            let mask = self.nbrs(d.index()).iter().fold(0usize, |m, u| m | (1 << u.index()));
            demand[mask] += self.arrival_rate(d);
        }
        for bit in 0..ns {
            let b = 1usize << bit;
            for mask in 0..full {
                if mask & b != 0 {
                    demand[mask] += demand[mask ^ b];
                }
            }
        }
        let mut capacity = vec![0.0f64; full];
        for mask in 1..full {
            let low = mask.trailing_zeros() as usize;
            capacity[mask] = capacity[mask & (mask - 1)] + self.service_rates()[low];
        }

        let mut worst: Option<(f64, usize)> = None;
        let mut tie: Option<usize> = None;
        for mask in 1..full {
            let (lam, mu) = (demand[mask], capacity[mask]);
            let scale = lam.abs().max(mu).max(1.0);
            let excess = lam - mu;
            if excess.abs() <= TIE_TOLERANCE * scale {
                tie.get_or_insert(mask);
            } else if excess > 0.0 && worst.is_none_or(|(w, _)| excess > w) {
                worst = Some((excess, mask));
            }
        }
        let members = |mask: usize| -> Vec<ServerId> {
            (0..ns).filter(|i| mask >> i & 1 == 1).map(|i| ServerId(i as u32)).collect()
        };
        Ok(match (worst, tie) {
            (Some((_, mask)), _) => Ergodicity::Unstable {
                witness: members(mask),
                demand: demand[mask],
                capacity: capacity[mask],
            },
            (None, Some(mask)) => Ergodicity::Inconclusive {
                witness: members(mask),
                demand: demand[mask],
                capacity: capacity[mask],
            },
            (None, None) => Ergodicity::Ergodic,
        })
    }
}
