mod common;

use bridge_core::concordance::{self, McNemarMode, RiskRecord};
use bridge_core::design::{self, Direction, DesignSpec, StrataRates};
use bridge_core::estimation::{self, Arm, PointEstimate, Stratum, StratumArmData};
use bridge_core::numeric::{self, Probability, RoundingPolicy, RngStream};
use rand_distr::{Distribution, StandardNormal};

fn p(v: f64) -> Probability {
    Probability::new(v).unwrap()
}

#[test]
fn normal_cdf_matches_series() {
    for i in -80..=80 {
        let x = i as f64 / 10.0;
        let want = common::phi_oracle(x);
        let got = numeric::normal_cdf(x);
        assert!((got - want).abs() < 1e-14 + 1e-12 * want, "x={x}: {got} vs {want}");
    }
}

#[test]
fn oracle_reproduces_frozen_constants() {
    assert!((common::quantile_oracle(0.975) - 1.959963984540054).abs() < 1e-12);
    assert!((common::quantile_oracle(0.8) - 0.8416212335729143).abs() < 1e-12);
    assert!((common::chi2_1_sf_oracle(3.841459) - 0.04999999465319563).abs() < 1e-14);
    assert!((common::chi2_1_sf_oracle(5.0) - 0.025347318677468325).abs() < 1e-14);
}

#[test]
fn quantile_matches_bisection_oracle() {
    let grid = [1e-10, 1e-6, 1e-3, 0.01, 0.025, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.975, 0.99, 0.999, 1.0 - 1e-6];
    for &pr in &grid {
        let want = common::quantile_oracle(pr);
        let got = numeric::normal_quantile(pr).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "p={pr}: {got} vs {want}");
    }
}

#[test]
fn chi_square_tail_matches_oracle() {
    for i in 0..=400 {
        let x = i as f64 / 10.0;
        let want = common::chi2_1_sf_oracle(x);
        let got = numeric::chi_square1_sf(x).unwrap();
        assert!((got - want).abs() < 1e-12, "x={x}: {got} vs {want}");
    }
}

#[test]
fn mcnemar_exact_matches_binomial_sums() {
    for n in 0..=30u64 {
        for b in 0..=n {
            let c = n - b;
            let got = concordance::mcnemar_test(b, c, McNemarMode::Exact).unwrap().p_value.value();
            let want = common::mcnemar_exact_oracle(b, c);
            assert!((got - want).abs() < 1e-12, "b={b} c={c}: {got} vs {want}");
        }
    }
}

#[test]
fn mcnemar_asymptotic_matches_chi_square_tail() {
    for n in 1..=30u64 {
        for b in 0..=n {
            let c = n - b;
            let got = concordance::mcnemar_test(b, c, McNemarMode::Asymptotic).unwrap();
            let stat = (b as f64 - c as f64).powi(2) / n as f64;
            assert!((got.statistic - stat).abs() < 1e-12);
            assert!((got.p_value.value() - common::chi2_1_sf_oracle(stat)).abs() < 1e-9);
        }
    }
}

fn classical_spec(p1: f64, p0: f64, alpha: f64, power: f64, k: f64) -> DesignSpec {
    DesignSpec {
        alpha: p(alpha),
        power: p(power),
        delta_margin: 0.0,
        cr12: p(1.0),
        cr21: p(1.0),
        rates: StrataRates::uniform(p1, p0).unwrap(),
        k2: k,
        legacy: None,
        unit_cost: None,
        control_unit_cost: None,
        rounding: RoundingPolicy::CeilPerArm,
        direction: if p1 > p0 { Direction::Increase } else { Direction::Decrease },
        target_effect: None,
    }
}

#[test]
fn sample_size_matches_two_proportion_formula() {
    let grid = common::classical_grid();
    assert_eq!(grid.len(), 50);
    for (p1, p0, alpha, power, k) in grid {
        let r = design::required_sample_size(&classical_spec(p1, p0, alpha, power, k)).unwrap();
        let (t, c) = common::two_proportion_oracle(p1, p0, alpha, power, k);
        assert!(r.arm_treat.abs_diff(t) <= 1 && r.arm_control.abs_diff(c) <= 1, "{p1} {p0} {alpha} {power} {k}: {r:?} vs {t}/{c}");
    }
}

#[test]
fn orthant_oracle_matches_frozen_values() {
    assert!((common::orthant_cr12_oracle(0.0, 0.05) - 0.05).abs() < 1e-9);
    assert!((common::orthant_cr12_oracle(0.5, 0.05) - 0.24378857534349863).abs() < 1e-7);
    assert!((common::orthant_cr12_oracle(0.8, 0.05) - 0.4951395146871764).abs() < 1e-7);
}

pub fn gaussian_scores(rho: f64, n: usize, seed: u64) -> Vec<RiskRecord> {
    let mut rng = RngStream::new(seed, 0).rng();
    let s = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|i| {
            let x: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            RiskRecord::new(format!("u{i}")).with_score("legacy", x).with_score("new", rho * x + s * e)
        })
        .collect()
}

#[test]
fn gaussian_concordance_near_orthant_probability() {
    for (rho, seed) in [(0.0, 1), (0.5, 2), (0.8, 3)] {
        let records = gaussian_scores(rho, 100_000, seed);
        let l = concordance::classify_top_fraction(&records, "legacy", 0.05).unwrap();
        let n = concordance::classify_top_fraction(&records, "new", 0.05).unwrap();
        let est = concordance::concordance_rates(&l, &n).unwrap();
        let want = common::orthant_cr12_oracle(rho, 0.05);
        assert!((est.cr12.value() - want).abs() < 0.02, "rho={rho}: {} vs {want}", est.cr12);
    }
}

#[test]
fn superiority_example() {
    let est = PointEstimate { delta_hat: 0.1, variance: 0.0155, warnings: vec![] };
    let r = estimation::superiority_test(&est, p(0.5), 0.0, 0.025, Direction::Increase).unwrap();
    assert!((r.z_stat - 0.8032193289024989).abs() < 1e-12);
    assert!((r.p_value.value() - (1.0 - common::phi_oracle(r.z_stat))).abs() < 1e-12);
    assert!((r.p_value.value() - 0.2109239877266813).abs() < 1e-12);
    assert!(!r.rejected);
}

#[test]
fn stratified_estimate_matches_hand_computation() {
    let cells = [
        StratumArmData::new(Stratum::C, Arm::Treatment, 10, 3),
        StratumArmData::new(Stratum::C, Arm::Control, 10, 1),
        StratumArmData::new(Stratum::D, Arm::Treatment, 10, 2),
        StratumArmData::new(Stratum::D, Arm::Control, 10, 2),
    ];
    let e = estimation::estimate_delta(&cells, p(0.5)).unwrap();
    let v = 0.25 * (0.3 * 0.7 / 10.0 + 0.1 * 0.9 / 10.0) + 0.25 * (2.0 * 0.2 * 0.8 / 10.0);
    assert!((e.delta_hat - 0.1).abs() < 1e-15);
    assert!((e.variance - v).abs() < 1e-15);
}
