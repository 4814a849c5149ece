#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "bbm/dualreg.hpp"
#include "bbm/fc_prior.hpp"
#include "bbm/parallel.hpp"
#include "bbm/spatial_prior.hpp"
#include "bbm/stats.hpp"
#include "bbm/types.hpp"

namespace bbm {

enum class FCPriorChoice { None, IW, Cholesky };

inline std::string to_string(FCPriorChoice c) {
    switch (c) {
        case FCPriorChoice::IW: return "iw";
        case FCPriorChoice::Cholesky: return "cholesky";
        default: return "none";
    }
}

inline FCPriorChoice fc_prior_choice_from_string(const std::string& s) {
    if (s == "none") return FCPriorChoice::None;
    if (s == "iw") return FCPriorChoice::IW;
    if (s == "cholesky") return FCPriorChoice::Cholesky;
    throw ValidationError("unknown fc prior choice: " + s);
}

enum class NoiseModel { PerLocation, Global };

inline std::string to_string(NoiseModel n) {
    return n == NoiseModel::PerLocation ? "per_location" : "global";
}

inline NoiseModel noise_model_from_string(const std::string& s) {
    if (s == "per_location") return NoiseModel::PerLocation;
    if (s == "global") return NoiseModel::Global;
    throw ValidationError("unknown noise model: " + s);
}

struct FitConfig {
    int max_iters = 100;
    double tol = 1e-3;  // relative Frobenius change in A
    FCPriorChoice fc_prior = FCPriorChoice::None;
    int cholesky_K = 1000;
    NoiseModel noise_model = NoiseModel::PerLocation;
    std::uint64_t rng_seed = 0;
    int threads = 1;

    void validate() const {
        if (max_iters < 1) throw ValidationError("FitConfig: max_iters must be >= 1");
        if (!(tol > 0.0)) throw ValidationError("FitConfig: tol must be > 0");
        if (cholesky_K < 1) throw ValidationError("FitConfig: cholesky_K must be >= 1");
    }
};

struct SubjectFit {
    Matrix s_mean;  // Q x V posterior means
    Matrix s_var;   // Q x V posterior variances (0 where the prior pins)
    Matrix A;       // T x Q mixing matrix, unit-variance columns
    Matrix G_hat;   // Q x Q FC estimate (correlation of A columns when no FC prior)
    Vector tau2;    // V noise variances
    int n_iters = 0;
    bool converged = false;
    double objective_init = 0.0;
    std::vector<double> objective_trace;     // per iteration, after renormalization
    std::vector<double> objective_pre_norm;  // per iteration, after the M-step, before renormalization
};

namespace detail {

inline constexpr double kTau2Floor = 1e-12;

// Gaussian posterior for one location given moments of the mixing matrix.
//   aat = E[A^T A], aty = E[A]^T y_v.
// Networks with zero prior variance are pinned at the prior mean and carry
// zero posterior variance; the free coordinates condition on them exactly.
inline void location_posterior(const Matrix& aat, const Vector& aty, double tau2,
                               const Vector& s0, const Vector& sig2, Vector& mu, Matrix& cov) {
    const Eigen::Index q_n = s0.size();
    bool any_pinned = false;
    for (Eigen::Index q = 0; q < q_n; ++q)
        if (sig2[q] <= 0.0) {
            any_pinned = true;
            break;
        }

    if (!any_pinned) {
        Matrix prec = aat / tau2;
        prec.diagonal() += sig2.cwiseInverse();
        Eigen::LDLT<Matrix> ldlt(prec);
        cov = ldlt.solve(Matrix::Identity(q_n, q_n));
        mu = ldlt.solve(s0.cwiseQuotient(sig2) + aty / tau2);
        return;
    }

    std::vector<Eigen::Index> free;
    free.reserve(static_cast<std::size_t>(q_n));
    for (Eigen::Index q = 0; q < q_n; ++q)
        if (sig2[q] > 0.0) free.push_back(q);

    mu = s0;
    cov = Matrix::Zero(q_n, q_n);
    if (free.empty()) return;

    const auto f_n = static_cast<Eigen::Index>(free.size());
    Matrix prec(f_n, f_n);
    Vector rhs(f_n);
    for (Eigen::Index a = 0; a < f_n; ++a) {
        const Eigen::Index qa = free[static_cast<std::size_t>(a)];
        // Data term with the pinned contribution A_P s0_P removed from y.
        double adj = aty[qa];
        for (Eigen::Index q = 0; q < q_n; ++q)
            if (sig2[q] <= 0.0) adj -= aat(qa, q) * s0[q];
        rhs[a] = s0[qa] / sig2[qa] + adj / tau2;
        for (Eigen::Index c = 0; c < f_n; ++c)
            prec(a, c) = aat(qa, free[static_cast<std::size_t>(c)]) / tau2;
        prec(a, a) += 1.0 / sig2[qa];
    }
    Eigen::LDLT<Matrix> ldlt(prec);
    const Matrix cov_f = ldlt.solve(Matrix::Identity(f_n, f_n));
    const Vector mu_f = ldlt.solve(rhs);
    for (Eigen::Index a = 0; a < f_n; ++a) {
        mu[free[static_cast<std::size_t>(a)]] = mu_f[a];
        for (Eigen::Index c = 0; c < f_n; ++c)
            cov(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(c)]) =
                cov_f(a, c);
    }
}

// Observed-data log likelihood with the spatial maps integrated out:
//   y_v ~ N(A s0_v, A D_v A^T + tau2_v I_T),
// evaluated per location through the Q x Q Woodbury identities. This is the
// quantity EM increases, so it backs the objective trace.
inline double marginal_loglik(const Matrix& ata, const Matrix& aty, const Vector& yy,
                              const Vector& tau2, const SpatialPrior& prior,
                              Eigen::Index t_n, int threads) {
    const Eigen::Index v_n = prior.v_count();
    const Eigen::Index q_n = prior.mean.rows();
    constexpr double kLog2Pi = 1.8378770664093454836;
    const std::size_t chunk = 512;
    std::vector<double> chunk_sums(chunk_count(static_cast<std::size_t>(v_n), chunk), 0.0);

    for_each_chunk(static_cast<std::size_t>(v_n), chunk, threads,
                   [&](std::size_t c, std::size_t begin, std::size_t end) {
        double acc = 0.0;
        Matrix cap(q_n, q_n);
        for (std::size_t vi = begin; vi < end; ++vi) {
            const auto v = static_cast<Eigen::Index>(vi);
            const Vector s0 = prior.mean.col(v);
            const Vector sd = prior.var.col(v).cwiseSqrt();
            const double t2 = tau2[v];
            const Vector ats0 = ata * s0;
            const double r2 = yy[v] - 2.0 * s0.dot(aty.col(v)) + s0.dot(ats0);
            const Vector u = sd.cwiseProduct(aty.col(v) - ats0);
            cap = sd.asDiagonal() * ata * sd.asDiagonal();
            cap.diagonal().array() += t2;
            Eigen::LLT<Matrix> llt(cap);
            if (llt.info() != Eigen::Success)
                throw NumericError("marginal_loglik: capacitance not positive definite");
            double logdet = 0.0;
            for (Eigen::Index i = 0; i < q_n; ++i)
                logdet += 2.0 * std::log(llt.matrixL()(i, i));
            const double quad = (r2 - u.dot(llt.solve(u))) / t2;
            acc += -0.5 * (static_cast<double>(t_n) * kLog2Pi +
                           static_cast<double>(t_n - q_n) * std::log(t2) + logdet + quad);
        }
        chunk_sums[c] = acc;
    });
    double total = 0.0;
    for (double s : chunk_sums) total += s;  // fixed order
    return total;
}

struct EStepResult {
    Matrix mu;        // Q x V posterior means
    Matrix var_diag;  // Q x V posterior variances
    Matrix w1;        // sum_v E[s_v s_v^T] / tau2_v
};

// One pass of q(s) updates over locations. aat carries E[A^T A] (exact A^T A
// in the EM case), aty carries E[A]^T Y.
inline EStepResult e_step(const Matrix& aat, const Matrix& aty, const Vector& tau2,
                          const SpatialPrior& prior, int threads) {
    const Eigen::Index v_n = prior.v_count();
    const Eigen::Index q_n = prior.mean.rows();
    EStepResult r;
    r.mu.resize(q_n, v_n);
    r.var_diag.resize(q_n, v_n);
    const std::size_t chunk = 512;
    const std::size_t n_chunks = chunk_count(static_cast<std::size_t>(v_n), chunk);
    std::vector<Matrix> w1_chunks(n_chunks, Matrix::Zero(q_n, q_n));

    for_each_chunk(static_cast<std::size_t>(v_n), chunk, threads,
                   [&](std::size_t c, std::size_t begin, std::size_t end) {
        Vector mu(q_n);
        Matrix cov(q_n, q_n);
        Matrix w1 = Matrix::Zero(q_n, q_n);
        for (std::size_t vi = begin; vi < end; ++vi) {
            const auto v = static_cast<Eigen::Index>(vi);
            location_posterior(aat, aty.col(v), tau2[v], prior.mean.col(v), prior.var.col(v),
                               mu, cov);
            r.mu.col(v) = mu;
            r.var_diag.col(v) = cov.diagonal();
            w1.noalias() += (cov + mu * mu.transpose()) / tau2[v];
        }
        w1_chunks[c] = std::move(w1);
    });
    r.w1 = Matrix::Zero(q_n, q_n);
    for (const auto& w : w1_chunks) r.w1 += w;  // fixed order
    return r;
}

// Posterior covariance only; it does not depend on the data vector.
inline Matrix location_covariance(const Matrix& aat, double tau2, const Vector& sig2) {
    const Eigen::Index q_n = sig2.size();
    bool any_pinned = false;
    for (Eigen::Index q = 0; q < q_n; ++q)
        if (sig2[q] <= 0.0) {
            any_pinned = true;
            break;
        }
    if (!any_pinned) {
        Matrix prec = aat / tau2;
        prec.diagonal() += sig2.cwiseInverse();
        return Eigen::LDLT<Matrix>(prec).solve(Matrix::Identity(q_n, q_n));
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index q = 0; q < q_n; ++q)
        if (sig2[q] > 0.0) free.push_back(q);
    Matrix cov = Matrix::Zero(q_n, q_n);
    if (free.empty()) return cov;
    const auto f_n = static_cast<Eigen::Index>(free.size());
    Matrix prec(f_n, f_n);
    for (Eigen::Index a = 0; a < f_n; ++a) {
        for (Eigen::Index c = 0; c < f_n; ++c)
            prec(a, c) = aat(free[static_cast<std::size_t>(a)],
                             free[static_cast<std::size_t>(c)]) / tau2;
        prec(a, a) += 1.0 / sig2[free[static_cast<std::size_t>(a)]];
    }
    const Matrix cov_f = Eigen::LDLT<Matrix>(prec).solve(Matrix::Identity(f_n, f_n));
    for (Eigen::Index a = 0; a < f_n; ++a)
        for (Eigen::Index c = 0; c < f_n; ++c)
            cov(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(c)]) =
                cov_f(a, c);
    return cov;
}

// Noise update: tau2_v = E||y_v - A s_v||^2 / T. The expectation splits into
// nonnegative pieces to avoid the catastrophic cancellation a moment-based
// expansion suffers when posterior means grow large:
//   ||y_v - E[A] mu_v||^2 + tr(E[A^T A] Sigma_v) + mu_v^T (T Va) mu_v.
// resid holds Y - E[A_new] * Mu; quad_extra holds T * Va_new (VB) or is empty
// (EM). Posterior covariances are recomputed at the E-step parameters
// (aat_mom, tau2_mom). The floor is scaled to the data so weights 1/tau2 stay
// well conditioned.
inline Vector tau2_update(const Matrix& resid, const Matrix& aat_mom, const Vector& tau2_mom,
                          const Matrix& aat_new, const Matrix& quad_extra, const Vector& yy,
                          const SpatialPrior& prior, const Matrix& mu, Eigen::Index t_n,
                          NoiseModel noise_model, int threads) {
    const Eigen::Index v_n = prior.v_count();
    Vector out(v_n);
    const std::size_t chunk = 512;
    for_each_chunk(static_cast<std::size_t>(v_n), chunk, threads,
                   [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t vi = begin; vi < end; ++vi) {
            const auto v = static_cast<Eigen::Index>(vi);
            const Matrix cov = location_covariance(aat_mom, tau2_mom[v], prior.var.col(v));
            double e = resid.col(v).squaredNorm() + (aat_new.cwiseProduct(cov)).sum();
            if (quad_extra.size() > 0) {
                const Vector m = mu.col(v);
                e += m.dot(quad_extra * m);
            }
            const double floor =
                std::max(kTau2Floor, 1e-10 * yy[v] / static_cast<double>(t_n));
            out[v] = std::max(e / static_cast<double>(t_n), floor);
        }
    });
    if (noise_model == NoiseModel::Global) out.setConstant(std::max(out.mean(), kTau2Floor));
    return out;
}

}  // namespace detail

// Gaussian posterior of the spatial loadings at a single location. Exposed on
// its own so the conjugate step can be checked directly.
inline std::pair<Vector, Matrix> posterior_location(const Vector& y_v, const Matrix& a,
                                                    double tau2_v, const Vector& s0_v,
                                                    const Vector& sigma2_v) {
    if (!(tau2_v > 0.0)) throw ValidationError("posterior_location: tau2 must be > 0");
    if (sigma2_v.minCoeff() < 0.0)
        throw ValidationError("posterior_location: negative prior variance");
    if (a.rows() != y_v.size() || a.cols() != s0_v.size() || s0_v.size() != sigma2_v.size())
        throw DimensionMismatch("posterior_location: inconsistent dimensions");
    Vector mu;
    Matrix cov;
    detail::location_posterior(a.transpose() * a, a.transpose() * y_v, tau2_v, s0_v, sigma2_v,
                               mu, cov);
    return {mu, cov};
}

// Subject-level Bayesian estimation. Without an FC prior this is EM on the
// conjugate spatial model; with one it alternates q(s), q(a) and the FC
// update. Initialization comes from dual regression against the prior mean.
inline SubjectFit fit_subject(const BoldMatrix& b, const SpatialPrior& prior,
                              const std::optional<FCPrior>& fc, const FitConfig& cfg) {
    cfg.validate();
    b.validate();
    prior.validate();
    const Eigen::Index t_n = b.t_count();
    const Eigen::Index v_n = b.v_count();
    const Eigen::Index q_n = prior.mean.rows();
    if (prior.v_count() != v_n)
        throw DimensionMismatch("fit_subject: prior has " + std::to_string(prior.v_count()) +
                                " locations, data has " + std::to_string(v_n));
    if (t_n <= q_n)
        throw InsufficientTimepoints("fit_subject: need T > Q");
    const bool use_fc = cfg.fc_prior != FCPriorChoice::None;
    if (use_fc) {
        if (!fc) throw ValidationError("fit_subject: FC prior requested but none supplied");
        if (fc->q != q_n) throw DimensionMismatch("fit_subject: FC prior dimension mismatch");
        if (cfg.fc_prior == FCPriorChoice::IW && !fc->has_iw)
            throw ValidationError("fit_subject: bundle has no fitted IW parameters");
        if (cfg.fc_prior == FCPriorChoice::Cholesky && !fc->has_cholesky)
            throw ValidationError("fit_subject: bundle has no Cholesky statistics");
    }

    const Matrix& y = b.data;
    const Vector yy = y.colwise().squaredNorm();

    // Initialization from dual regression against the prior mean.
    const NetworkTemplate tmpl = continuous_template(prior.mean);
    Matrix a_cur = stage1(b, tmpl);
    Vector tau2 = stage2(b, a_cur).residual_var.cwiseMax(detail::kTau2Floor);
    if (cfg.noise_model == NoiseModel::Global) tau2.setConstant(tau2.mean());

    SubjectFit fit;
    fit.objective_trace.reserve(static_cast<std::size_t>(cfg.max_iters));
    fit.objective_pre_norm.reserve(static_cast<std::size_t>(cfg.max_iters));

    auto normalize_columns = [&](Matrix& m) {
        for (Eigen::Index q = 0; q < m.cols(); ++q) {
            Vector col = m.col(q);
            col.array() -= col.mean();
            const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(t_n - 1));
            if (!(sd > 0.0)) throw NumericError("fit_subject: degenerate mixing column");
            m.col(q) /= sd;
        }
    };

    if (!use_fc) {
        // --- EM with the spatial prior only ---
        fit.objective_init = detail::marginal_loglik(a_cur.transpose() * a_cur,
                                                     a_cur.transpose() * y, yy, tau2, prior,
                                                     t_n, cfg.threads);
        detail::EStepResult es;
        for (int it = 0; it < cfg.max_iters; ++it) {
            const Matrix ata = a_cur.transpose() * a_cur;
            const Matrix aty = a_cur.transpose() * y;
            es = detail::e_step(ata, aty, tau2, prior, cfg.threads);

            // Weighted M-step; the 1/tau2_v weights cancel under the global
            // noise model and make the update the exact maximizer under the
            // per-location model.
            const Matrix mu_w =
                es.mu.array().rowwise() * tau2.transpose().array().inverse();
            const Matrix b_w = y * mu_w.transpose();  // T x Q
            Eigen::LDLT<Matrix> ldlt(es.w1);
            Matrix a_new = ldlt.solve(b_w.transpose()).transpose();
            if (!a_new.allFinite()) throw NumericError("fit_subject: M-step produced non-finite A");

            const Matrix ata_new = a_new.transpose() * a_new;
            const Matrix aty_new = a_new.transpose() * y;
            const Matrix resid = y - a_new * es.mu;
            const Vector tau2_new =
                detail::tau2_update(resid, ata, tau2, ata_new, Matrix(), yy, prior, es.mu,
                                    t_n, cfg.noise_model, cfg.threads);
            fit.objective_pre_norm.push_back(detail::marginal_loglik(
                ata_new, aty_new, yy, tau2_new, prior, t_n, cfg.threads));

            Matrix a_norm = a_new;
            normalize_columns(a_norm);
            fit.objective_trace.push_back(
                detail::marginal_loglik(a_norm.transpose() * a_norm, a_norm.transpose() * y,
                                        yy, tau2_new, prior, t_n, cfg.threads));

            const double rel = (a_norm - a_cur).norm() / a_cur.norm();
            a_cur = std::move(a_norm);
            tau2 = tau2_new;
            fit.n_iters = it + 1;
            if (rel < cfg.tol) {
                fit.converged = true;
                break;
            }
        }
        // Posterior moments at the converged parameters.
        es = detail::e_step(a_cur.transpose() * a_cur, a_cur.transpose() * y, tau2, prior,
                            cfg.threads);
        fit.s_mean = std::move(es.mu);
        fit.s_var = std::move(es.var_diag);
        fit.A = a_cur;
        fit.G_hat = correlation_matrix(fit.A);
        fit.tau2 = tau2;
        return fit;
    }

    // --- Variational loop with an FC prior on the mixing matrix rows ---
    std::vector<Matrix> g_samples;
    std::vector<double> g_logdet;
    std::vector<Matrix> g_inv;
    if (cfg.fc_prior == FCPriorChoice::Cholesky) {
        g_samples = sample_fc_prior(*fc, cfg.cholesky_K, cfg.rng_seed);
        g_logdet.reserve(g_samples.size());
        g_inv.reserve(g_samples.size());
        for (auto& g : g_samples) {
            g = clip_spd(g, 1e-8);
            Eigen::LLT<Matrix> llt(g);
            if (llt.info() != Eigen::Success)
                throw NumericError("fit_subject: FC prior sample not positive definite");
            double ld = 0.0;
            for (Eigen::Index i = 0; i < q_n; ++i) ld += 2.0 * std::log(llt.matrixL()(i, i));
            g_logdet.push_back(ld);
            g_inv.push_back(llt.solve(Matrix::Identity(q_n, q_n)));
        }
    }

    Matrix g_cur = clip_spd(fc->emp_mean, 1e-8);
    Matrix g_inv_cur = g_cur.llt().solve(Matrix::Identity(q_n, q_n));
    Matrix m_cur = a_cur;                       // E[A]
    Matrix va = Matrix::Zero(q_n, q_n);         // shared per-row covariance of q(a_t)
    detail::EStepResult es;

    for (int it = 0; it < cfg.max_iters; ++it) {
        const Matrix eata = m_cur.transpose() * m_cur + static_cast<double>(t_n) * va;
        const Matrix mty = m_cur.transpose() * y;
        es = detail::e_step(eata, mty, tau2, prior, cfg.threads);

        // q(a_t) = N(m_t, V), shared covariance across time points.
        Eigen::LDLT<Matrix> prec_a(g_inv_cur + es.w1);
        const Matrix va_new = prec_a.solve(Matrix::Identity(q_n, q_n));
        const Matrix mu_w = es.mu.array().rowwise() * tau2.transpose().array().inverse();
        const Matrix m_new = (y * mu_w.transpose()) * va_new;

        const Matrix scatter =
            m_new.transpose() * m_new + static_cast<double>(t_n) * va_new;

        if (cfg.fc_prior == FCPriorChoice::IW) {
            g_cur = repair_correlation((fc->iw_psi + scatter) /
                                           (fc->iw_nu + static_cast<double>(t_n) + q_n + 1.0),
                                       1e-10);
        } else {
            // Likelihood-weighted barycenter of the prior samples under the
            // Wishart likelihood of the scatter.
            std::vector<double> logw(g_samples.size());
            double max_lw = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < g_samples.size(); ++k) {
                logw[k] = -0.5 * static_cast<double>(t_n) * g_logdet[k] -
                          0.5 * (g_inv[k].cwiseProduct(scatter)).sum();
                max_lw = std::max(max_lw, logw[k]);
            }
            Matrix g_acc = Matrix::Zero(q_n, q_n);
            double w_sum = 0.0;
            for (std::size_t k = 0; k < g_samples.size(); ++k) {
                const double w = std::exp(logw[k] - max_lw);
                g_acc += w * g_samples[k];
                w_sum += w;
            }
            g_cur = repair_correlation(g_acc / w_sum, 1e-10);
        }
        g_inv_cur = g_cur.llt().solve(Matrix::Identity(q_n, q_n));

        const Matrix mty_new = m_new.transpose() * y;
        const Matrix resid = y - m_new * es.mu;
        const Matrix va_scaled = static_cast<double>(t_n) * va_new;
        // E||y - A s||^2 = ||y - M mu||^2 + tr(scatter Sigma) + mu^T (T Va) mu.
        const Vector tau2_new =
            detail::tau2_update(resid, eata, tau2, scatter, va_scaled, yy, prior, es.mu, t_n,
                                cfg.noise_model, cfg.threads);

        // Diagnostic trace: spatial-model evidence at the posterior-mean
        // mixing matrix (no monotonicity guarantee on the VB path).
        fit.objective_trace.push_back(detail::marginal_loglik(
            m_new.transpose() * m_new, mty_new, yy, tau2_new, prior, t_n, cfg.threads));

        const double rel = (m_new - m_cur).norm() / m_cur.norm();
        m_cur = m_new;
        va = va_new;
        tau2 = tau2_new;
        fit.n_iters = it + 1;
        if (rel < cfg.tol) {
            fit.converged = true;
            break;
        }
    }

    es = detail::e_step(m_cur.transpose() * m_cur + static_cast<double>(t_n) * va,
                        m_cur.transpose() * y, tau2, prior, cfg.threads);
    fit.s_mean = std::move(es.mu);
    fit.s_var = std::move(es.var_diag);
    fit.A = m_cur;
    normalize_columns(fit.A);
    fit.G_hat = g_cur;
    fit.tau2 = tau2;
    return fit;
}

}  // namespace bbm
