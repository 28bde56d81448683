use statrs::distribution::{ChiSquared, ContinuousCDF};

use xlr_core::channel::{burst_lengths, derive_transitions, GilbertChain, GilbertParams};

fn bursts(plr: f64, len: f64, seed: u64, min_bursts: usize) -> Vec<usize> {
    let params = GilbertParams::new(plr, len, seed).unwrap();
    let mut chain = GilbertChain::new(&params).unwrap();
    let mut out = Vec::new();
    while out.len() < min_bursts {
        out.extend(burst_lengths(chain.by_ref().take(1_000_000)));
    }
    out
}

#[test]
fn burst_lengths_follow_the_geometric_law() {
    for (plr, len, seed) in [(0.01, 2.0, 5), (0.05, 3.0, 6), (0.1, 1.5, 7)] {
        let b = bursts(plr, len, seed, 20_000);
        let (_, p_bg) = derive_transitions(&GilbertParams::new(plr, len, seed).unwrap()).unwrap();
        let n = b.len() as f64;
        let last = 12;
        let mut observed = vec![0.0; last + 1];
        for &k in &b {
            observed[k.min(last + 1) - 1] += 1.0;
        }
        let expected: Vec<f64> = (1..=last + 1)
            .map(|k| {
                let stay = 1.0 - p_bg;
                if k <= last {
                    n * stay.powi(k as i32 - 1) * p_bg
                } else {
                    n * stay.powi(last as i32)
                }
            })
            .collect();
        let stat: f64 = observed
            .iter()
            .zip(&expected)
            .filter(|(_, &e)| e >= 5.0)
            .map(|(o, e)| (o - e) * (o - e) / e)
            .sum();
        let bins = expected.iter().filter(|&&e| e >= 5.0).count();
        let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
        assert!(
            p > 1e-3,
            "plr {plr} len {len}: chi2 {stat:.2} on {} dof, p {p:.2e}",
            bins - 1
        );
    }
}

#[test]
fn mean_burst_length_over_many_bursts() {
    for (plr, len) in [(0.1, 2.0), (0.05, 4.0)] {
        let b = bursts(plr, len, 99, 100_000);
        assert!(b.len() >= 100_000);
        let mean = b.iter().sum::<usize>() as f64 / b.len() as f64;
        // standard error of a geometric mean is sqrt(L(L-1)/n)
        let se = (len * (len - 1.0) / b.len() as f64).sqrt();
        assert!(
            (mean - len).abs() < 5.0 * se,
            "len {len}: mean {mean}, se {se}"
        );
    }
}

#[test]
fn long_run_loss_fraction() {
    for (plr, len, seed) in [(0.001, 2.0, 1), (0.02, 2.0, 2), (0.3, 5.0, 3)] {
        let params = GilbertParams::new(plr, len, seed).unwrap();
        let n = 4_000_000;
        let lost = GilbertChain::new(&params)
            .unwrap()
            .take(n)
            .filter(|&l| l)
            .count();
        let observed = lost as f64 / n as f64;
        // variance inflation of a two-state chain: (1 + r) / (1 - r), r = 1 - p_gb - p_bg
        let (gb, bg) = derive_transitions(&params).unwrap();
        let r = 1.0 - gb - bg;
        let se = (plr * (1.0 - plr) * (1.0 + r) / (1.0 - r) / n as f64).sqrt();
        assert!(
            (observed - plr).abs() < 5.0 * se,
            "plr {plr}: observed {observed}, se {se}"
        );
    }
}
