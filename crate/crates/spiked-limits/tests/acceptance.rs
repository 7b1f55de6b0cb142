//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with its measured values. Tolerances are pinned here,
//! not configurable. Criterion 2 is expected red; see the analysis notes
//! accompanying the build.

use std::time::Instant;

use rand::Rng;
use spiked_limits::channel::{psi, psi_bar};
use spiked_limits::detection::{kl_limit, mu, mu_with_diagonal, optimal_error, tv_limit};
use spiked_limits::experiments::{
    run_clt, run_overlap, run_strong_detection, run_test_error, ExperimentConfig, LrEstimator,
};
use spiked_limits::prior::Prior;
use spiked_limits::rng::{derive_seed, rng_for};
use spiked_limits::sim::{
    log_lr_exact, log_lr_mc, overlap_moments, sample_observation, GibbsParams, OverlapMethod,
    DEFAULT_ENUMERATION_CAP,
};
use spiked_limits::threshold::{
    reconstruction_threshold, rho_star, spectral_threshold, DEFAULT_Q_TOL,
};

fn base_config(
    prior: Prior,
    lambda: f64,
    n: usize,
    replicates: usize,
    seed: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        prior,
        lambda,
        n_list: vec![n],
        replicates,
        seed,
        lr_method: LrEstimator::Exact,
        mc_samples: 200_000,
        sigma: f64::INFINITY,
        enumeration_cap: DEFAULT_ENUMERATION_CAP,
    }
}

/// Random centered prior with 2..=4 atoms, support radius <= 5, variance
/// bounded away from zero.
fn random_centered_prior<R: Rng>(rng: &mut R) -> Prior {
    loop {
        let k = rng.gen_range(2..=4usize);
        let mut atoms: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.5..2.5)).collect();
        atoms.sort_by(f64::total_cmp);
        if atoms.windows(2).any(|w| w[1] - w[0] < 0.05) {
            continue;
        }
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mean: f64 = atoms.iter().zip(&weights).map(|(a, w)| a * w / total).sum();
        let centered: Vec<f64> = atoms.iter().map(|a| a - mean).collect();
        if centered.windows(2).any(|w| w[1] - w[0] < 0.05) {
            continue;
        }
        match Prior::new(centered, weights) {
            Ok(p) if p.is_centered() && p.moment(2) >= 0.2 => return p,
            _ => continue,
        }
    }
}

#[test]
fn criterion_01_rademacher_threshold() {
    let start = Instant::now();
    let t = reconstruction_threshold(&Prior::rademacher(), DEFAULT_Q_TOL).unwrap();
    let elapsed = start.elapsed();
    let ok = (t.lambda_c - 1.0).abs() <= 1e-3 && elapsed.as_secs_f64() < 10.0;
    println!(
        "criterion 01 [{}]: lambda_c(Rademacher) = {:.6} (want 1.000 +- 1e-3) in {:.2?} (< 10 s)",
        if ok { "PASS" } else { "FAIL" },
        t.lambda_c,
        elapsed
    );
    assert!(ok, "lambda_c = {}, elapsed = {:?}", t.lambda_c, elapsed);
}

#[test]
fn criterion_02_critical_sparsity() {
    let start = Instant::now();
    let rho = rho_star(1e-4).unwrap();
    let elapsed = start.elapsed();
    let ok = (0.087..=0.097).contains(&rho) && elapsed.as_secs_f64() < 60.0;
    println!(
        "criterion 02 [{}]: rho_star = {:.5} (want within [0.087, 0.097]) in {:.2?} (< 60 s)",
        if ok { "PASS" } else { "FAIL" },
        rho,
        elapsed
    );
    assert!(
        ok,
        "rho_star = {rho:.5} is outside the target band [0.087, 0.097]. The discrepancy is in \
         the target, not the solver: on the sparse Rademacher family psi'''(0) = -1 identically \
         (so no derivative-sign criterion can locate a boundary at all), and the boundary of \
         {{lambda_c < 1}} computed from the potential itself sits at 0.0856, confirmed by two \
         independent integrators agreeing on psi to 1e-14. elapsed = {elapsed:?}"
    );
}

#[test]
fn criterion_03_spectral_bound_and_strict_gap() {
    let mut rng = rng_for(0xacce97, 0);
    let mut worst: f64 = f64::NEG_INFINITY;
    for i in 0..20 {
        let prior = random_centered_prior(&mut rng);
        let t = reconstruction_threshold(&prior, DEFAULT_Q_TOL).unwrap();
        let m2 = prior.moment(2);
        let product = t.lambda_c * m2 * m2;
        worst = worst.max(product);
        assert!(
            product <= 1.0 + 1e-4,
            "prior {i}: lambda_c (E X^2)^2 = {product} > 1 + 1e-4 (atoms {:?})",
            prior.atoms()
        );
    }

    let sparse = Prior::sparse_rademacher(0.04).unwrap();
    let lambda_c = reconstruction_threshold(&sparse, DEFAULT_Q_TOL)
        .unwrap()
        .lambda_c;
    let spectral = spectral_threshold(&sparse).unwrap();
    let gap_ok = lambda_c <= spectral - 0.01;
    println!(
        "criterion 03 [{}]: max lambda_c (E X^2)^2 over 20 random centered priors = {:.6} \
         (<= 1 + 1e-4); sparse(0.04) lambda_c = {:.4} <= spectral {:.4} - 0.01: {}",
        if gap_ok { "PASS" } else { "FAIL" },
        worst,
        lambda_c,
        spectral,
        gap_ok
    );
    assert!(gap_ok, "lambda_c = {lambda_c}, spectral = {spectral}");
}

#[test]
fn criterion_04_identity_suite() {
    let mut rng = rng_for(0xacce97, 4);
    let mut worst_diag: f64 = 0.0;
    let mut worst_asym: f64 = f64::NEG_INFINITY;
    for _ in 0..20 {
        let prior = random_centered_prior(&mut rng);
        let r = rng.gen_range(0.0..3.0);
        let on_diag = psi_bar(&prior, r, r).unwrap();
        let direct = psi(&prior, r).unwrap();
        worst_diag = worst_diag.max((on_diag - direct).abs());
        let mirrored = psi_bar(&prior, r, -r).unwrap();
        worst_asym = worst_asym.max(mirrored - on_diag);
    }
    let psi_ok = worst_diag <= 1e-9 && worst_asym <= 1e-9;

    let mut exact_ok = true;
    for lambda in [0.0, 0.1, 0.35, 0.6, 0.85, 0.99] {
        exact_ok &= kl_limit(lambda).unwrap() == mu(lambda).unwrap();
        exact_ok &= optimal_error(lambda).unwrap() + tv_limit(lambda).unwrap() == 1.0;
    }

    let ok = psi_ok && exact_ok;
    println!(
        "criterion 04 [{}]: max |psi_bar(r,r) - psi(r)| = {:.2e} (<= 1e-9); \
         max psi_bar(r,-r) - psi_bar(r,r) = {:.2e} (<= 1e-9); kl == mu and err + tv == 1 exactly: {}",
        if ok { "PASS" } else { "FAIL" },
        worst_diag,
        worst_asym,
        exact_ok
    );
    assert!(ok);
}

/// Exact `E_0[L^2]` for the two-point prior: a binomial sum over the
/// overlap of two independent replicas. Independent of the whole
/// simulation pipeline; anchors the finite-size discussion below.
fn exact_null_second_moment(n: u64, lambda: f64) -> f64 {
    let ln_binom = |n: u64, k: u64| {
        libm::lgamma((n + 1) as f64)
            - libm::lgamma((k + 1) as f64)
            - libm::lgamma((n - k + 1) as f64)
    };
    (0..=n)
        .map(|b| {
            let s = 2.0 * b as f64 - n as f64;
            let w = (ln_binom(n, b) - n as f64 * 2.0f64.ln()).exp();
            w * ((lambda / (2.0 * n as f64)) * (s * s - n as f64)).exp()
        })
        .sum()
}

#[test]
fn criterion_05_clt_desk_scale() {
    let start = Instant::now();
    let config = base_config(Prior::rademacher(), 0.5, 12, 2000, 0x0c17);
    let r = run_clt(&config).unwrap();
    let elapsed = start.elapsed();

    let mu = r.theory_mu;
    let mean_tol = (4.0 * r.null.std_error).max(0.1 * mu);
    let mean_ok = (r.null.mean + mu).abs() <= mean_tol;
    let var_ok = (r.null.variance - 2.0 * mu).abs() <= 0.25 * 2.0 * mu;
    let gap = r.alt.mean - r.null.mean;
    let gap_ok = (gap - 2.0 * mu).abs() <= 0.2 * 2.0 * mu;
    let time_ok = elapsed.as_secs_f64() < 900.0;
    let ok = mean_ok && var_ok && gap_ok && time_ok;
    println!(
        "criterion 05 [{}]: null mean {:.4} vs -mu {:.4} (tol {:.4}); null var {:.4} vs 2mu {:.4} \
         (25%); mean gap {:.4} vs 2mu (20%); elapsed {:.2?} (< 15 min); ks_null {:.3} ks_alt {:.3} \
         (reported, not gated)",
        if ok { "PASS" } else { "FAIL" },
        r.null.mean,
        -mu,
        mean_tol,
        r.null.variance,
        2.0 * mu,
        gap,
        elapsed,
        r.ks_null,
        r.ks_alt
    );
    // Context for the FAIL outcome: the finite-size law itself, not the
    // solver, is what misses the tolerances. The structure of the limit
    // (variance = mean gap = 2 |null mean|, E_0 L = 1) holds to a few
    // percent at n = 12, and the exact binomial E_0[L^2] pins the scale.
    println!(
        "criterion 05 context: var / (2 |null mean|) = {:.3}; gap / var = {:.3}; \
         exact E_0[L^2] at n=12 gives ln E_0 L^2 = {:.4} vs measured var {:.4} (skewed law); \
         all at n = 12 where the K/sqrt(N) correction is ~30% of 2mu",
        r.null.variance / (2.0 * r.null.mean.abs()),
        gap / r.null.variance,
        exact_null_second_moment(12, 0.5).ln(),
        r.null.variance
    );
    assert!(
        mean_ok,
        "null mean {} vs {} tol {}",
        r.null.mean, -mu, mean_tol
    );
    assert!(var_ok, "null variance {} vs {}", r.null.variance, 2.0 * mu);
    assert!(gap_ok, "gap {} vs {}", gap, 2.0 * mu);
    assert!(time_ok, "elapsed {elapsed:?}");
}

#[test]
fn criterion_06_optimal_error_formula() {
    let config = base_config(Prior::rademacher(), 0.75, 14, 2000, 0x7e57);
    let r = run_test_error(&config).unwrap();
    let theory = libm::erfc(0.25 * (-(0.25f64).ln() - 0.75).sqrt());
    let ok = (r.total - theory).abs() <= 0.05;
    println!(
        "criterion 06 [{}]: empirical total LR-test error {:.4} vs erfc form {:.4} (tol 0.05); \
         type I {:.4}, type II {:.4}, per-type limit {:.4}",
        if ok { "PASS" } else { "FAIL" },
        r.total,
        theory,
        r.type_i,
        r.type_ii,
        r.theory_per_type
    );
    assert!(ok, "total {} vs {}", r.total, theory);
}

#[test]
fn criterion_07_strong_detection() {
    let config = base_config(Prior::rademacher(), 2.5, 14, 500, 0x57d7);
    let r = run_strong_detection(&config).unwrap();
    let ok = r.correct_sign_null >= 0.95 && r.correct_sign_alt >= 0.95;
    println!(
        "criterion 07 [{}]: correct sign of log L / n in {:.1}% (null) and {:.1}% (alt) of 500 \
         replicates (want >= 95% each); null-side mean {:.4} (reported)",
        if ok { "PASS" } else { "FAIL" },
        100.0 * r.correct_sign_null,
        100.0 * r.correct_sign_alt,
        r.mean_normalized_null
    );
    assert!(
        ok,
        "null {} alt {}",
        r.correct_sign_null, r.correct_sign_alt
    );
}

#[test]
fn criterion_08_overlap_scaling() {
    let mut config = base_config(Prior::rademacher(), 0.5, 8, 200, 0x04e5);
    config.n_list = vec![8, 10, 12];
    let rows = run_overlap(&config, OverlapMethod::Exact).unwrap();

    let mut cavity_ok = true;
    for row in &rows {
        cavity_ok &= (0.85..=1.15).contains(&row.scaled_second);
    }
    let fourth: Vec<f64> = rows.iter().map(|r| r.scaled_fourth).collect();
    let spread = fourth.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / fourth.iter().cloned().fold(f64::INFINITY, f64::min);
    let fourth_ok = spread < 1.5;
    let nish = &rows[0];
    let nish_ok = nish.nishimori_gap <= 3.0 * nish.nishimori_gap_se;

    let ok = cavity_ok && fourth_ok && nish_ok;
    println!(
        "criterion 08 [{}]: n(1-lambda)E<R^2> = {:?} (want within [0.85, 1.15]); n^2 E<R^4> \
         spread = {:.3} (< 1.5); Nishimori gap at n=8 over 200 draws = {:.2e} vs 3 SE = {:.2e}",
        if ok { "PASS" } else { "FAIL" },
        rows.iter().map(|r| r.scaled_second).collect::<Vec<_>>(),
        spread,
        nish.nishimori_gap,
        3.0 * nish.nishimori_gap_se
    );
    assert!(
        cavity_ok,
        "scaled second moments {:?}",
        rows.iter().map(|r| r.scaled_second).collect::<Vec<_>>()
    );
    assert!(fourth_ok, "fourth-moment spread {spread}");
    assert!(
        nish_ok,
        "gap {} vs 3 SE {}",
        nish.nishimori_gap,
        3.0 * nish.nishimori_gap_se
    );
}

#[test]
fn criterion_09_oracle_equivalence() {
    let prior = Prior::rademacher();
    let mut exact_vs_mc_ok = true;
    let mut worst_z: f64 = 0.0;
    for i in 0..20 {
        let lambda = if i % 2 == 0 { 0.3 } else { 0.6 };
        let seed = derive_seed(0x09ac, i);
        let (obs, _) = sample_observation(&prior, 10, lambda, f64::INFINITY, seed).unwrap();
        let exact = log_lr_exact(&obs, lambda, &prior, DEFAULT_ENUMERATION_CAP).unwrap();
        let mc = log_lr_mc(&obs, lambda, &prior, 200_000, derive_seed(0x09ac, 100 + i)).unwrap();
        let z = (exact.value - mc.value).abs() / mc.std_error;
        worst_z = worst_z.max(z);
        exact_vs_mc_ok &= z <= 4.0;
    }

    let (obs, spike) = sample_observation(&prior, 10, 0.5, f64::INFINITY, 0x915b).unwrap();
    let spike = spike.unwrap();
    let exact = overlap_moments(
        &obs,
        &spike,
        0.5,
        &prior,
        OverlapMethod::Exact,
        DEFAULT_ENUMERATION_CAP,
        GibbsParams::default(),
    )
    .unwrap();
    let gibbs = overlap_moments(
        &obs,
        &spike,
        0.5,
        &prior,
        OverlapMethod::Gibbs,
        DEFAULT_ENUMERATION_CAP,
        GibbsParams {
            seed: 0x915c,
            ..GibbsParams::default()
        },
    )
    .unwrap();
    let gibbs_checks = [
        (exact.e_r1star_sq, gibbs.e_r1star_sq, gibbs.se_r1star_sq),
        (exact.e_r1star_4, gibbs.e_r1star_4, gibbs.se_r1star_4),
        (exact.e_r12_sq, gibbs.e_r12_sq, gibbs.se_r12_sq),
        (exact.e_r12_4, gibbs.e_r12_4, gibbs.se_r12_4),
    ];
    let gibbs_ok = gibbs_checks
        .iter()
        .all(|(e, g, se)| (e - g).abs() <= 3.0 * se);

    let ok = exact_vs_mc_ok && gibbs_ok;
    println!(
        "criterion 09 [{}]: max |exact - mc| / SE over 20 instances = {:.2} (<= 4); Gibbs vs \
         exact overlap moments all within 3 SE: {}",
        if ok { "PASS" } else { "FAIL" },
        worst_z,
        gibbs_ok
    );
    assert!(exact_vs_mc_ok, "worst z = {worst_z}");
    assert!(gibbs_ok, "{gibbs_checks:?}");
}

#[test]
fn criterion_10_diagonal_kept_variant() {
    // Reduction to the diagonal-free value at huge sigma.
    let scale = 2.0f64.sqrt();
    let skewed = Prior::new(vec![-2.0 / scale, 1.0 / scale], vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
    let kappa = skewed.moment(3).powi(2);
    let reduction = (mu_with_diagonal(&skewed, 0.4, 1e12).unwrap() - mu(0.4).unwrap()).abs();
    let reduction_ok = reduction <= 1e-9;

    // Finite-sigma CLT at n = 12, sigma = 1, lambda = 0.4 against the
    // adjusted mu, at the same tolerances as criterion 5.
    let mut config = base_config(skewed.clone(), 0.4, 12, 2000, 0xd1a6);
    config.sigma = 1.0;
    let r = run_clt(&config).unwrap();
    let mu_adj = r.theory_mu;
    let expected = mu(0.4).unwrap() * (1.0 + kappa) + 0.2;
    let formula_ok = (mu_adj - expected).abs() < 1e-12;
    let mean_tol = (4.0 * r.null.std_error).max(0.1 * mu_adj);
    let mean_ok = (r.null.mean + mu_adj).abs() <= mean_tol;
    let var_ok = (r.null.variance - 2.0 * mu_adj).abs() <= 0.25 * 2.0 * mu_adj;
    let gap = r.alt.mean - r.null.mean;
    let gap_ok = (gap - 2.0 * mu_adj).abs() <= 0.2 * 2.0 * mu_adj;

    let ok = reduction_ok && formula_ok && mean_ok && var_ok && gap_ok;
    println!(
        "criterion 10 [{}]: |mu_with_diagonal(sigma=1e12) - mu| = {:.1e} (<= 1e-9); kappa = {:.3}; \
         adjusted mu = {:.4}; null mean {:.4} vs {:.4} (tol {:.4}); var {:.4} vs {:.4} (25%); gap \
         {:.4} vs {:.4} (20%)",
        if ok { "PASS" } else { "FAIL" },
        reduction,
        kappa,
        mu_adj,
        r.null.mean,
        -mu_adj,
        mean_tol,
        r.null.variance,
        2.0 * mu_adj,
        gap,
        2.0 * mu_adj
    );
    assert!(reduction_ok, "reduction distance {reduction}");
    assert!(formula_ok, "mu {} vs composed {}", mu_adj, expected);
    assert!(
        mean_ok,
        "null mean {} vs {} tol {}",
        r.null.mean, -mu_adj, mean_tol
    );
    assert!(var_ok, "variance {} vs {}", r.null.variance, 2.0 * mu_adj);
    assert!(gap_ok, "gap {} vs {}", gap, 2.0 * mu_adj);
}
