#include <catch2/catch.hpp>

#include <cmath>
#include <optional>

#include "bbm/dualreg.hpp"
#include "bbm/fit.hpp"
#include "bbm/rng.hpp"
#include "bbm/stats.hpp"
#include "bbm/synth.hpp"

using namespace bbm;

namespace {

Matrix random_mat(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

// Quadrature oracle for the one-network posterior mean and variance:
// p(s | y) ~ exp(-||y - a s||^2 / 2 tau2) exp(-(s - s0)^2 / 2 sig2) on a
// dense grid, integrated by the trapezoid rule.
std::pair<double, double> grid_posterior_1d(const Vector& y, const Vector& a, double tau2,
                                            double s0, double sig2) {
    const double ols = a.dot(y) / a.squaredNorm();
    const double lo = std::min(s0, ols) - 10.0 * std::sqrt(sig2) - 10.0;
    const double hi = std::max(s0, ols) + 10.0 * std::sqrt(sig2) + 10.0;
    const int n = 200001;
    const double dx = (hi - lo) / (n - 1);
    long double w_sum = 0.0L, sw_sum = 0.0L, ssw_sum = 0.0L;
    for (int i = 0; i < n; ++i) {
        const double s = lo + i * dx;
        const double resid = (y - a * s).squaredNorm();
        const double logw = -0.5 * resid / tau2 - 0.5 * (s - s0) * (s - s0) / sig2;
        const long double w = std::exp(static_cast<long double>(logw));
        const long double mult = (i == 0 || i == n - 1) ? 0.5L : 1.0L;
        w_sum += mult * w;
        sw_sum += mult * w * s;
        ssw_sum += mult * w * s * s;
    }
    const double mean = static_cast<double>(sw_sum / w_sum);
    const double var = static_cast<double>(ssw_sum / w_sum) - mean * mean;
    return {mean, var};
}

struct SynthFit {
    SynthPopulation pop;
    BoldMatrix data;  // session 0 of subject 0, column-centered
};

SynthFit make_generative(int q, int v, int t, double snr, std::uint64_t seed,
                         double var_scale = 0.05, double var_floor = 1e-4) {
    SynthConfig cfg;
    cfg.q = q;
    cfg.v = v;
    cfg.t = t;
    cfg.n_subjects = 1;
    cfg.var_scale = var_scale;
    cfg.var_floor = var_floor;
    cfg.rng_seed = seed;
    cfg.noise_sd = noise_sd_for_snr(population_prior(cfg).mean,
                                    ar1_correlation(q, 0.5), snr);
    SynthFit s{simulate_population(cfg), {}};
    s.data = s.pop.subjects[0].sessions[0];
    s.data.data.rowwise() -= s.data.data.colwise().mean();
    return s;
}

double mean_map_correlation(const Matrix& estimate, const Matrix& truth) {
    double acc = 0.0;
    for (Eigen::Index q = 0; q < truth.rows(); ++q)
        acc += pearson(estimate.row(q).transpose(), truth.row(q).transpose());
    return acc / static_cast<double>(truth.rows());
}

}  // namespace

TEST_CASE("posterior_location with no data information returns the prior") {
    const Eigen::Index q = 3, t = 20;
    const Matrix a = Matrix::Zero(t, q);
    const Vector y = random_mat(t, 1, 60);
    Vector s0(q), sig2(q);
    s0 << 1.0, -2.0, 0.5;
    sig2 << 0.3, 0.7, 1.1;
    const auto [mu, cov] = posterior_location(y, a, 2.0, s0, sig2);
    CHECK((mu - s0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((cov - Matrix(sig2.asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("posterior_location flat-prior limit is OLS") {
    const Eigen::Index t = 30;
    Vector a = random_mat(t, 1, 61);
    a /= std::sqrt(a.squaredNorm() / static_cast<double>(t - 1));
    const Vector y = random_mat(t, 1, 62);
    const double ols = a.dot(y) / a.squaredNorm();
    const auto [mu, cov] = posterior_location(y, a, 1.0, Vector::Constant(1, 5.0),
                                              Vector::Constant(1, 1e8));
    CHECK(mu[0] == Approx(ols).margin(1e-5));
}

TEST_CASE("posterior_location agrees with a quadrature oracle") {
    const Eigen::Index t = 10;
    Vector a = random_mat(t, 1, 63);
    a.array() -= a.mean();
    a /= std::sqrt(a.squaredNorm() / static_cast<double>(t - 1));
    const Vector y = 0.8 * a + Vector(random_mat(t, 1, 64));
    const double s0 = 0.4, sig2 = 1.0, tau2 = 1.0;

    const auto [oracle_mean, oracle_var] = grid_posterior_1d(y, a, tau2, s0, sig2);
    const auto [mu, cov] = posterior_location(y, a, tau2, Vector::Constant(1, s0),
                                              Vector::Constant(1, sig2));
    CHECK(mu[0] == Approx(oracle_mean).margin(1e-6));
    CHECK(cov(0, 0) == Approx(oracle_var).margin(1e-6));
    // And the precision-weighted closed form.
    const double prec = 1.0 / sig2 + a.squaredNorm() / tau2;
    CHECK(mu[0] == Approx((s0 / sig2 + a.dot(y) / tau2) / prec).margin(1e-12));
}

TEST_CASE("posterior_location pins zero-variance networks") {
    const Eigen::Index t = 40;
    Matrix a = random_mat(t, 3, 65);
    const Vector y = random_mat(t, 1, 66);
    Vector s0(3), sig2(3);
    s0 << 0.7, -1.0, 2.0;
    sig2 << 0.5, 0.0, 0.8;
    const auto [mu, cov] = posterior_location(y, a, 1.5, s0, sig2);
    CHECK(mu[1] == s0[1]);
    CHECK(cov.row(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cov.col(1).cwiseAbs().maxCoeff() == 0.0);

    // Free coordinates equal the conditional with the pinned column removed.
    Matrix a_free(t, 2);
    a_free << a.col(0), a.col(2);
    const Vector y_adj = y - a.col(1) * s0[1];
    Vector s0_f(2), sig2_f(2);
    s0_f << s0[0], s0[2];
    sig2_f << sig2[0], sig2[2];
    const auto [mu_f, cov_f] = posterior_location(y_adj, a_free, 1.5, s0_f, sig2_f);
    CHECK(mu[0] == Approx(mu_f[0]).margin(1e-12));
    CHECK(mu[2] == Approx(mu_f[1]).margin(1e-12));
    CHECK(cov(0, 0) == Approx(cov_f(0, 0)).margin(1e-12));
    CHECK(cov(2, 2) == Approx(cov_f(1, 1)).margin(1e-12));

    // All networks pinned: the prior is returned untouched.
    const auto [mu_all, cov_all] = posterior_location(y, a, 1.5, s0, Vector::Zero(3));
    CHECK((mu_all - s0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cov_all.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero prior variance pins the whole fit to the prior mean") {
    SynthFit s = make_generative(3, 120, 80, 0.5, 701, /*var_scale=*/0.0, /*var_floor=*/0.0);
    FitConfig cfg;
    cfg.max_iters = 5;
    const SubjectFit fit = fit_subject(s.data, s.pop.prior, std::nullopt, cfg);
    CHECK((fit.s_mean - s.pop.prior.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK(fit.s_var.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flat prior on noise-free data reproduces dual regression") {
    SynthConfig scfg;
    scfg.q = 3;
    scfg.v = 150;
    scfg.t = 100;
    scfg.n_subjects = 1;
    scfg.noise_sd = 0.0;
    scfg.var_scale = 0.02;
    scfg.rng_seed = 702;
    const SynthPopulation pop = simulate_population(scfg);
    BoldMatrix b = pop.subjects[0].sessions[0];
    b.data.rowwise() -= b.data.colwise().mean();

    SpatialPrior flat = pop.prior;
    flat.var.setConstant(1e8);

    const DualRegResult dr = dual_regress(b, continuous_template(flat.mean));
    FitConfig cfg;
    cfg.tol = 1e-8;
    cfg.max_iters = 200;
    const SubjectFit fit = fit_subject(b, flat, std::nullopt, cfg);
    const double rel = (fit.s_mean - dr.maps).norm() / dr.maps.norm();
    CHECK(rel < 1e-3);
}

TEST_CASE("fit improves on dual regression under the generative model") {
    int wins = 0;
    double fit_acc = 0.0, dr_acc = 0.0;
    const int reps = 20;
    for (int rep = 0; rep < reps; ++rep) {
        SynthFit s = make_generative(4, 400, 250, 0.5, 800 + static_cast<std::uint64_t>(rep));
        FitConfig cfg;
        cfg.rng_seed = 1;
        const SubjectFit fit = fit_subject(s.data, s.pop.prior, std::nullopt, cfg);
        const DualRegResult dr = dual_regress(s.data, continuous_template(s.pop.prior.mean));
        const double c_fit = mean_map_correlation(fit.s_mean, s.pop.subjects[0].s_true);
        const double c_dr = mean_map_correlation(dr.maps, s.pop.subjects[0].s_true);
        fit_acc += c_fit;
        dr_acc += c_dr;
        if (c_fit > c_dr) ++wins;
    }
    INFO("fit " << fit_acc / reps << " vs dual regression " << dr_acc / reps);
    CHECK(wins >= 16);
    CHECK(fit_acc / reps > dr_acc / reps);
}

TEST_CASE("EM objective is non-decreasing before renormalization") {
    for (int rep = 0; rep < 20; ++rep) {
        SynthFit s = make_generative(3, 80, 60, 0.4, 900 + static_cast<std::uint64_t>(rep),
                                     0.08, 1e-3);
        FitConfig cfg;
        cfg.max_iters = 40;
        cfg.tol = 1e-6;
        cfg.noise_model = (rep % 2 == 0) ? NoiseModel::PerLocation : NoiseModel::Global;
        const SubjectFit fit = fit_subject(s.data, s.pop.prior, std::nullopt, cfg);
        REQUIRE(!fit.objective_pre_norm.empty());
        double prev = fit.objective_init;
        for (std::size_t k = 0; k < fit.objective_pre_norm.size(); ++k) {
            const double tol = 1e-8 * (1.0 + std::abs(prev));
            CHECK(fit.objective_pre_norm[k] >= prev - tol);
            prev = fit.objective_trace[k];
        }
    }
}

TEST_CASE("permutation equivariance of the fit") {
    SynthFit s = make_generative(4, 150, 90, 0.6, 1000);
    FitConfig cfg;
    cfg.max_iters = 15;
    cfg.tol = 1e-9;
    const SubjectFit base = fit_subject(s.data, s.pop.prior, std::nullopt, cfg);

    const std::array<int, 4> perm = {2, 0, 3, 1};
    SpatialPrior permuted = s.pop.prior;
    for (int k = 0; k < 4; ++k) {
        permuted.mean.row(k) = s.pop.prior.mean.row(perm[static_cast<std::size_t>(k)]);
        permuted.var.row(k) = s.pop.prior.var.row(perm[static_cast<std::size_t>(k)]);
    }
    const SubjectFit pfit = fit_subject(s.data, permuted, std::nullopt, cfg);
    for (int k = 0; k < 4; ++k) {
        CHECK((pfit.s_mean.row(k) - base.s_mean.row(perm[static_cast<std::size_t>(k)]))
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);
        CHECK((pfit.A.col(k) - base.A.col(perm[static_cast<std::size_t>(k)]))
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);
    }
}

TEST_CASE("posterior means sit between the prior mean and OLS for orthogonal designs") {
    // Component-wise betweenness is exact when A^T A is diagonal; build an
    // orthogonal mixing matrix and freeze it.
    const Eigen::Index t = 64, v = 50;
    const int q = 4;
    Matrix a = Matrix::Zero(t, q);
    for (int k = 0; k < q; ++k)
        for (Eigen::Index i = 0; i < t; ++i)
            a(i, k) = std::cos(2.0 * 3.14159265358979323846 * (k + 1) *
                               (static_cast<double>(i) + 0.5) / static_cast<double>(t));
    for (int k = 0; k < q; ++k)
        a.col(k) /= std::sqrt(a.col(k).squaredNorm() / static_cast<double>(t - 1));
    const Matrix ata = a.transpose() * a;
    REQUIRE((ata - Matrix(ata.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-8);

    const Matrix s_true = random_mat(q, v, 1100);
    const Matrix y = a * s_true + 0.5 * random_mat(t, v, 1101);
    Rng rng(1102);
    for (Eigen::Index loc = 0; loc < v; ++loc) {
        Vector s0(q), sig2(q);
        for (int k = 0; k < q; ++k) {
            s0[k] = rng.normal();
            sig2[k] = 0.05 + rng.uniform();
        }
        const auto [mu, cov] = posterior_location(y.col(loc), a, 1.0, s0, sig2);
        const Vector ols = (a.transpose() * a).ldlt().solve(a.transpose() * y.col(loc));
        for (int k = 0; k < q; ++k) {
            const double lo = std::min(s0[k], ols[k]) - 1e-9;
            const double hi = std::max(s0[k], ols[k]) + 1e-9;
            CHECK(mu[k] >= lo);
            CHECK(mu[k] <= hi);
        }
    }
}

TEST_CASE("halving the scan pulls the maps toward the prior mean") {
    int toward = 0;
    const int reps = 10;
    for (int rep = 0; rep < reps; ++rep) {
        SynthFit s = make_generative(3, 200, 240, 0.5, 1200 + static_cast<std::uint64_t>(rep));
        FitConfig cfg;
        const SubjectFit full = fit_subject(s.data, s.pop.prior, std::nullopt, cfg);
        BoldMatrix half = s.data;
        half.data = s.data.data.topRows(120);
        half.data.rowwise() -= half.data.colwise().mean();
        half.reset_mask();
        const SubjectFit short_fit = fit_subject(half, s.pop.prior, std::nullopt, cfg);
        const double d_full = (full.s_mean - s.pop.prior.mean).cwiseAbs().mean();
        const double d_half = (short_fit.s_mean - s.pop.prior.mean).cwiseAbs().mean();
        if (d_half < d_full) ++toward;
    }
    CHECK(toward >= 8);
}

TEST_CASE("vb with iw prior recovers the sample correlation of the mixing matrix") {
    SynthConfig scfg;
    scfg.q = 4;
    scfg.v = 300;
    scfg.t = 4000;
    scfg.n_subjects = 1;
    scfg.fc_perturb_scale = 0.08;
    scfg.var_scale = 0.04;
    scfg.rng_seed = 1300;
    scfg.noise_sd = noise_sd_for_snr(population_prior(scfg).mean,
                                     ar1_correlation(4, 0.5), 2.0);
    const SynthPopulation pop = simulate_population(scfg);
    BoldMatrix b = pop.subjects[0].sessions[0];
    b.data.rowwise() -= b.data.colwise().mean();

    // Training FC population around the base.
    std::vector<Matrix> rs;
    Rng rng(1301);
    for (int i = 0; i < 60; ++i) {
        Matrix r = pop.fc_base;
        for (int x = 0; x < 4; ++x)
            for (int y2 = x + 1; y2 < 4; ++y2) {
                const double d = 0.08 * rng.normal();
                r(x, y2) += d;
                r(y2, x) += d;
            }
        rs.push_back(repair_correlation(r, 1e-6));
    }
    const FCPrior fc = make_fc_prior(rs, FCPriorKind::InverseWishart, true, false, 1, 7);

    FitConfig cfg;
    cfg.fc_prior = FCPriorChoice::IW;
    cfg.max_iters = 60;
    const SubjectFit fit = fit_subject(b, pop.prior, fc, cfg);
    const Matrix sample_corr = correlation_matrix(pop.subjects[0].mixing[0]);
    CHECK((fit.G_hat - sample_corr).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("cholesky FC update is deterministic in the seed") {
    SynthFit s = make_generative(3, 120, 150, 0.8, 1400);
    std::vector<Matrix> rs;
    Rng rng(1401);
    for (int i = 0; i < 40; ++i) {
        Matrix r = s.pop.fc_base;
        for (int x = 0; x < 3; ++x)
            for (int y2 = x + 1; y2 < 3; ++y2) {
                const double d = 0.1 * rng.normal();
                r(x, y2) += d;
                r(y2, x) += d;
            }
        rs.push_back(repair_correlation(r, 1e-6));
    }
    const FCPrior fc = make_fc_prior(rs, FCPriorKind::Cholesky, false, true, 5, 8);

    FitConfig cfg;
    cfg.fc_prior = FCPriorChoice::Cholesky;
    cfg.cholesky_K = 400;
    cfg.max_iters = 20;
    cfg.rng_seed = 77;
    const SubjectFit f1 = fit_subject(s.data, s.pop.prior, fc, cfg);
    const SubjectFit f2 = fit_subject(s.data, s.pop.prior, fc, cfg);
    CHECK((f1.G_hat - f2.G_hat).cwiseAbs().maxCoeff() == 0.0);
    CHECK((f1.s_mean - f2.s_mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK(min_eigenvalue(f1.G_hat) > 0.0);
    CHECK((f1.G_hat.diagonal().array() - 1.0).abs().maxCoeff() < 1e-10);
}

TEST_CASE("fit outputs satisfy their contracts") {
    SynthFit s = make_generative(3, 100, 80, 0.7, 1500);
    FitConfig cfg;
    const SubjectFit fit = fit_subject(s.data, s.pop.prior, std::nullopt, cfg);
    // Unit-variance mixing columns.
    for (int k = 0; k < 3; ++k)
        CHECK(sample_variance(fit.A.col(k)) == Approx(1.0).margin(1e-6));
    CHECK(fit.tau2.minCoeff() > 0.0);
    CHECK(fit.s_var.minCoeff() > 0.0);  // nothing pinned in this prior
    CHECK((fit.G_hat.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(fit.n_iters <= cfg.max_iters);
}

TEST_CASE("non-convergence is reported, not thrown") {
    SynthFit s = make_generative(3, 80, 60, 0.4, 1600);
    FitConfig cfg;
    cfg.max_iters = 2;
    cfg.tol = 1e-15;
    const SubjectFit fit = fit_subject(s.data, s.pop.prior, std::nullopt, cfg);
    CHECK(fit.n_iters == 2);
    CHECK_FALSE(fit.converged);
}

TEST_CASE("dimension and configuration errors") {
    SynthFit s = make_generative(3, 80, 60, 0.5, 1700);
    SpatialPrior bad = s.pop.prior;
    bad.mean = bad.mean.leftCols(40).eval();
    bad.var = bad.var.leftCols(40).eval();
    FitConfig cfg;
    CHECK_THROWS_AS(fit_subject(s.data, bad, std::nullopt, cfg), DimensionMismatch);

    cfg.fc_prior = FCPriorChoice::IW;
    CHECK_THROWS_AS(fit_subject(s.data, s.pop.prior, std::nullopt, cfg), ValidationError);
}
