//! Alpha-beta communication predictions per algorithm and phase.
//!
//! Every formula is evaluated with its asymptotic constants set to 1 and
//! `log` taken base 2, so predictions are meant for ratios and crossovers
//! rather than absolute word counts.

use std::fmt;

use crate::distributed::{phase, Algorithm};
use crate::error::{KkmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CostPhase {
    /// Kernel matrix construction.
    K,
    /// Forming `Eᵀ` and `c` each iteration.
    E,
    /// Updating cluster assignments each iteration.
    Update,
    /// Moving `K` from the 2D grid to 1D column blocks.
    Redistribute,
}

impl CostPhase {
    pub const ALL: [CostPhase; 4] = [CostPhase::K, CostPhase::E, CostPhase::Update, CostPhase::Redistribute];

    pub fn as_str(self) -> &'static str {
        match self {
            CostPhase::K => "K",
            CostPhase::E => "E",
            CostPhase::Update => "update",
            CostPhase::Redistribute => "redistribute",
        }
    }

    /// Ledger phases whose words make up this cost phase.
    pub fn ledger_phases(self) -> &'static [&'static str] {
        match self {
            CostPhase::K => &[phase::K_COMPUTE],
            CostPhase::E => &[phase::V_EXCHANGE, phase::E_REDUCE, phase::C_ALLREDUCE],
            CostPhase::Update => &[phase::ASSIGN_UPDATE],
            CostPhase::Redistribute => &[phase::K_REDISTRIBUTE],
        }
    }

    /// Whether the phase repeats every clustering iteration.
    pub fn per_iteration(self) -> bool {
        matches!(self, CostPhase::E | CostPhase::Update)
    }
}

impl fmt::Display for CostPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CostPhase {
    type Err = KkmError;

    fn from_str(s: &str) -> Result<Self> {
        CostPhase::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| KkmError::InvalidConfig(format!("unknown cost phase '{s}'")))
    }
}

/// `latency·α + words·β`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTerms {
    pub latency: f64,
    pub words: f64,
    pub formula_id: &'static str,
}

impl CostTerms {
    fn new(latency: f64, words: f64, formula_id: &'static str) -> Self {
        Self {
            latency,
            words,
            formula_id,
        }
    }

    pub fn time(&self, alpha: f64, beta: f64) -> f64 {
        alpha * self.latency + beta * self.words
    }
}

fn grid_side(p: usize) -> Result<f64> {
    let q = (p as f64).sqrt().round() as usize;
    if q * q != p {
        return Err(KkmError::InvalidConfig(format!(
            "{p} ranks do not form a square grid"
        )));
    }
    Ok(q as f64)
}

/// Predicted communication of one phase of one algorithm.
pub fn predict(algorithm: Algorithm, phase: CostPhase, n: usize, d: usize, k: usize, p: usize) -> Result<CostTerms> {
    if n == 0 || d == 0 || k == 0 || p == 0 {
        return Err(KkmError::InvalidConfig(format!(
            "cost parameters must be positive (n={n}, d={d}, k={k}, P={p})"
        )));
    }
    let (nf, df, kf, pf) = (n as f64, d as f64, k as f64, p as f64);
    let summa_k = |q: f64| {
        let lg = q.log2();
        CostTerms::new(q * lg, lg * nf * df / q, "K-SUMMA")
    };
    use Algorithm::*;
    use CostPhase::*;
    Ok(match (algorithm, phase) {
        (OneD, K) => CostTerms::new(pf, pf * nf * df, "K-1D"),
        (OneD | Hybrid1D, E) => CostTerms::new(pf, nf, "E-1D"),
        (OneD | Hybrid1D | OnePointFiveD, Update) => CostTerms::new(0.0, 0.0, "update-local"),
        (Hybrid1D | OnePointFiveD | TwoD, K) => summa_k(grid_side(p)?),
        (Hybrid1D, Redistribute) => {
            grid_side(p)?;
            CostTerms::new(pf, nf * nf / pf, "redistribute-alltoallv")
        }
        (OnePointFiveD, E) => {
            let q = grid_side(p)?;
            CostTerms::new(q, nf * (kf + 1.0) / q, "E-1.5D")
        }
        (TwoD, E) => {
            let q = grid_side(p)?;
            CostTerms::new(q, nf * (kf + 1.0) / q, "E-2D")
        }
        (TwoD, Update) => {
            let lg = grid_side(p)?.log2();
            CostTerms::new(lg, lg * nf, "update-2D")
        }
        (OneD | OnePointFiveD | TwoD, Redistribute) => {
            return Err(KkmError::UnknownCostPair {
                algorithm: algorithm.to_string(),
                phase: phase.to_string(),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Algorithm::*;
    use CostPhase::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn formulas() {
        // (algorithm, phase, n, d, k, P, latency, words)
        let cases: [(Algorithm, CostPhase, usize, usize, usize, usize, f64, f64); 12] = [
            (OneD, K, 1000, 10, 4, 8, 8.0, 80_000.0),
            (OneD, E, 1024, 3, 16, 64, 64.0, 1024.0),
            (OneD, Update, 1024, 3, 16, 64, 0.0, 0.0),
            (Hybrid1D, K, 512, 8, 4, 16, 8.0, 2.0 * 512.0 * 8.0 / 4.0),
            (Hybrid1D, Redistribute, 512, 8, 4, 16, 16.0, 512.0 * 512.0 / 16.0),
            (Hybrid1D, E, 512, 8, 4, 16, 16.0, 512.0),
            (OnePointFiveD, E, 1024, 5, 16, 16, 4.0, 4352.0),
            (OnePointFiveD, Update, 1024, 5, 16, 16, 0.0, 0.0),
            (OnePointFiveD, K, 4096, 2, 8, 64, 8.0 * 3.0, 3.0 * 4096.0 * 2.0 / 8.0),
            (TwoD, E, 900, 4, 6, 9, 3.0, 900.0 * 7.0 / 3.0),
            (TwoD, Update, 256, 4, 4, 16, 2.0, 512.0),
            (TwoD, K, 64, 4, 2, 1, 0.0, 0.0),
        ];
        for (alg, ph, n, d, k, p, lat, words) in cases {
            let t = predict(alg, ph, n, d, k, p).unwrap();
            assert!(close(t.latency, lat), "{alg} {ph}: latency {} vs {lat}", t.latency);
            assert!(close(t.words, words), "{alg} {ph}: words {} vs {words}", t.words);
        }
    }

    #[test]
    fn one_d_e_is_n_for_any_p() {
        for p in [1, 2, 3, 16, 100] {
            assert_eq!(predict(OneD, E, 1024, 7, 9, p).unwrap().words, 1024.0);
        }
    }

    #[test]
    fn invalid_pairs_and_inputs() {
        for alg in [OneD, OnePointFiveD, TwoD] {
            assert!(matches!(
                predict(alg, Redistribute, 16, 2, 2, 4),
                Err(KkmError::UnknownCostPair { .. })
            ));
        }
        assert!(predict(TwoD, E, 16, 2, 2, 8).is_err());
        assert!(predict(OneD, E, 0, 2, 2, 4).is_err());
        assert_eq!("update".parse::<CostPhase>().unwrap(), Update);
        assert!("bogus".parse::<CostPhase>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn one_point_five_d_beats_one_d_past_crossover(
                n in 1usize..1_000_000,
                k in 1usize..64,
                extra in 0usize..200,
                d in 1usize..100,
            ) {
                let q = k + 1 + extra;
                let p = q * q;
                let a = predict(OnePointFiveD, E, n, d, k, p).unwrap().words;
                let b = predict(OneD, E, n, d, k, p).unwrap().words;
                prop_assert!(a <= b * (1.0 + 1e-12));
            }

            #[test]
            fn coefficients_are_nonnegative(
                n in 1usize..100_000,
                d in 1usize..1000,
                k in 1usize..128,
                q in 1usize..40,
            ) {
                for alg in Algorithm::ALL {
                    for ph in CostPhase::ALL {
                        if let Ok(t) = predict(alg, ph, n, d, k, q * q) {
                            prop_assert!(t.latency >= 0.0 && t.words >= 0.0);
                        }
                    }
                }
            }
        }
    }
}
