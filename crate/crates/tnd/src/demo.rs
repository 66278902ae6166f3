//! Exact-enumeration demonstration of collider bias from pooling reasons for
//! testing.
//!
//! A binary confounder X with Pr(X=1)=0.5, Pr(V=1)=0.5 and
//! log Pr(I=1|V,X) = -0.5 - 0.5V - 1.5X, with testing channels
//! Symptoms 0.2X + 0.2IX, Screening 0.4V, Other 0.1VI. The aggregated odds
//! ratio among tested subjects lands near zero VE (|1 - OR| ~ 0.02) even
//! though the true VE is 1 - e^{-0.5} = 0.39.

use crate::glm::{fit_glm_weighted, Link};

/// Joint test probability split by channel, as a function of (x, v, i).
pub type TestChannels = fn(f64, f64, f64) -> (f64, f64, f64);

fn paper_channels(x: f64, v: f64, i: f64) -> (f64, f64, f64) {
    (0.2 * x + 0.2 * i * x, 0.4 * v, 0.1 * v * i)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasDemo {
    /// 1 - e^{-0.5}, the population VE.
    pub true_ve: f64,
    /// 1 - OR from the aggregated 2x2 table of all tested subjects.
    pub pooled_ve: f64,
    /// 1 - e^{beta_v} from an x-adjusted logistic fit on the exact joint
    /// distribution of tested subjects; `None` when the fit is degenerate
    /// (e.g. an x stratum with a single vaccine arm).
    pub adjusted_ve: Option<f64>,
    /// 1 - OR within each X stratum among tested subjects (x = 0, 1);
    /// `None` where a cell of the stratum table is empty.
    pub stratum_ve: [Option<f64>; 2],
}

pub fn demo_bias() -> BiasDemo {
    demo_bias_with(-0.5, paper_channels)
}

/// Parameterized enumeration: `intercept` is the infection model intercept
/// and `channels` gives the per-channel joint test probabilities.
pub fn demo_bias_with(intercept: f64, channels: TestChannels) -> BiasDemo {
    let mut y = Vec::with_capacity(8);
    let mut design = Vec::with_capacity(8);
    let mut weights = Vec::with_capacity(8);
    // population limit: one weighted pseudo-observation per (x, v, i) cell
    // with weight Pr(cell) * Pr(T=1 | cell)
    let mut tables = [[[0.0f64; 2]; 2]; 2]; // [x][v][i] among tested
    for xb in 0..2usize {
        for vb in 0..2usize {
            let p_i = (intercept - 0.5 * vb as f64 - 1.5 * xb as f64).exp();
            for ib in 0..2usize {
                let (x, v, i) = (xb as f64, vb as f64, ib as f64);
                let p_cell = 0.25 * if ib == 1 { p_i } else { 1.0 - p_i };
                let (s, scr, o) = channels(x, v, i);
                let p_test = s + scr + o;
                assert!((0.0..=1.0).contains(&p_test), "test mass {p_test}");
                let w = p_cell * p_test;
                if w > 0.0 {
                    y.push(i);
                    design.push(vec![1.0, v, x]);
                    weights.push(w);
                    tables[xb][vb][ib] = w;
                }
            }
        }
    }

    let or_from = |t: &[[f64; 2]; 2]| -> Option<f64> {
        let num = t[1][1] * t[0][0];
        let den = t[1][0] * t[0][1];
        (num > 0.0 && den > 0.0).then(|| num / den)
    };
    let mut aggregated = [[0.0f64; 2]; 2];
    for t in &tables {
        for v in 0..2 {
            for i in 0..2 {
                aggregated[v][i] += t[v][i];
            }
        }
    }
    let pooled_ve = 1.0 - or_from(&aggregated).expect("aggregated table is complete");
    let stratum_ve = [
        or_from(&tables[0]).map(|or| 1.0 - or),
        or_from(&tables[1]).map(|or| 1.0 - or),
    ];
    let adjusted_ve = fit_glm_weighted(&y, &design, Some(&weights), Link::Logit)
        .ok()
        .map(|fit| 1.0 - fit.coefficients[1].exp());

    BiasDemo {
        true_ve: 1.0 - (-0.5f64).exp(),
        pooled_ve,
        adjusted_ve,
        stratum_ve,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pooled_estimate_collapses_toward_zero() {
        let d = demo_bias();
        assert_relative_eq!(d.true_ve, 0.3935, max_relative = 2e-3);
        // the aggregated estimate is essentially null: |1 - OR| about 0.02
        assert!(
            (d.pooled_ve.abs() - 0.02).abs() < 0.01,
            "pooled VE {}",
            d.pooled_ve
        );
        assert!((d.pooled_ve - d.true_ve).abs() > 0.3);
        // only unvaccinated screening channels exist at x=0, so that stratum
        // has a single arm and no odds ratio
        assert_eq!(d.stratum_ve[0], None);
        assert!(d.stratum_ve[1].is_some());
    }

    #[test]
    fn no_collider_rare_outcome_recovers_truth() {
        // constant testing (independent of I and V) with a rare outcome:
        // the pooled odds ratio approximates the relative risk e^{-0.5}
        fn constant(_: f64, _: f64, _: f64) -> (f64, f64, f64) {
            (0.1, 0.1, 0.1)
        }
        let d = demo_bias_with(-6.0, constant);
        assert!(
            (d.pooled_ve - d.true_ve).abs() < 0.005,
            "pooled {} true {}",
            d.pooled_ve,
            d.true_ve
        );
        let adjusted = d.adjusted_ve.unwrap();
        assert!((adjusted - d.true_ve).abs() < 0.005, "adjusted {adjusted}");
    }

    #[test]
    fn enumeration_is_exact_and_deterministic() {
        assert_eq!(demo_bias(), demo_bias());
    }
}
