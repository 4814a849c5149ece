#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "bbm/rng.hpp"
#include "bbm/stats.hpp"
#include "bbm/types.hpp"

namespace bbm {

enum class FCPriorKind { InverseWishart, Cholesky };

inline std::string to_string(FCPriorKind k) {
    return k == FCPriorKind::InverseWishart ? "iw" : "cholesky";
}

// Population prior over the Q x Q functional connectivity matrix. Holds the
// empirical element-wise statistics of the training correlation matrices plus
// whichever parametric constructions were built on top of them: the fitted
// inverse-Wishart (nu, Psi) and/or the permuted-Cholesky element statistics.
struct FCPrior {
    int q = 0;
    FCPriorKind kind = FCPriorKind::InverseWishart;

    Matrix emp_mean;  // Q x Q correlation (SPD-repaired)
    Matrix emp_var;   // Q x Q element-wise across-session variance

    bool has_iw = false;
    double iw_nu = 0.0;
    Matrix iw_psi;  // Q x Q, Psi = (nu - Q - 1) * emp_mean

    bool has_cholesky = false;
    std::vector<std::vector<int>> permutations;  // P orderings of 0..Q-1, first = identity
    Matrix chol_mean;  // P x Q(Q+1)/2 lower-triangle element means
    Matrix chol_var;   // P x Q(Q+1)/2 lower-triangle element variances

    Eigen::Index tri_count() const {
        return static_cast<Eigen::Index>(q) * (q + 1) / 2;
    }
};

// Pearson correlation matrix of the columns of a T x Q time-course matrix.
inline Matrix correlation_matrix(const Matrix& tc) {
    const Eigen::Index t_n = tc.rows();
    const Eigen::Index q_n = tc.cols();
    if (t_n <= q_n)
        throw InsufficientTimepoints("correlation_matrix: need T > Q");
    Matrix x = tc;
    x.rowwise() -= x.colwise().mean();
    Vector norms(q_n);
    for (Eigen::Index q = 0; q < q_n; ++q) {
        norms[q] = x.col(q).norm();
        if (!(norms[q] > 0.0))
            throw ValidationError("correlation_matrix: constant column " + std::to_string(q));
    }
    Matrix r = x.transpose() * x;
    for (Eigen::Index i = 0; i < q_n; ++i)
        for (Eigen::Index j = 0; j < q_n; ++j) r(i, j) /= norms[i] * norms[j];
    for (Eigen::Index i = 0; i < q_n; ++i) r(i, i) = 1.0;
    return symmetrized(r);
}

// Element-wise mean and sample variance of correlation matrices across
// training sessions. The mean's diagonal is forced to one.
inline std::pair<Matrix, Matrix> empirical_fc_from_matrices(const std::vector<Matrix>& rs) {
    if (rs.size() < 2) throw ValidationError("empirical_fc: need >= 2 training sessions");
    const Eigen::Index q_n = rs.front().rows();
    Matrix sum = Matrix::Zero(q_n, q_n), sumsq = Matrix::Zero(q_n, q_n);
    for (const auto& r : rs) {
        if (r.rows() != q_n || r.cols() != q_n)
            throw DimensionMismatch("empirical_fc: inconsistent matrix sizes");
        sum += r;
        sumsq += r.cwiseProduct(r);
    }
    const double n = static_cast<double>(rs.size());
    Matrix mean = sum / n;
    Matrix var = ((sumsq - sum.cwiseProduct(sum) / n) / (n - 1.0)).cwiseMax(0.0);
    for (Eigen::Index i = 0; i < q_n; ++i) mean(i, i) = 1.0;
    return {symmetrized(mean), symmetrized(var)};
}

inline std::pair<Matrix, Matrix> empirical_fc(const std::vector<Matrix>& timecourses) {
    std::vector<Matrix> rs;
    rs.reserve(timecourses.size());
    for (const auto& tc : timecourses) rs.push_back(correlation_matrix(tc));
    return empirical_fc_from_matrices(rs);
}

// Element-wise variance of Sigma ~ IW(nu, Psi) in dimension Q:
//   Var(Sigma_ij) = [(nu-Q+1) Psi_ij^2 + (nu-Q-1) Psi_ii Psi_jj]
//                   / [(nu-Q)(nu-Q-1)^2(nu-Q-3)],   nu > Q + 3.
inline Matrix iw_element_variance(double nu, const Matrix& psi) {
    const Eigen::Index q_n = psi.rows();
    const double a = nu - static_cast<double>(q_n);
    if (!(a > 3.0)) throw ValidationError("iw_element_variance: need nu > Q + 3");
    const double denom = a * (a - 1.0) * (a - 1.0) * (a - 3.0);
    Matrix v(q_n, q_n);
    for (Eigen::Index i = 0; i < q_n; ++i)
        for (Eigen::Index j = 0; j < q_n; ++j)
            v(i, j) = ((a + 1.0) * psi(i, j) * psi(i, j) + (a - 1.0) * psi(i, i) * psi(j, j)) /
                      denom;
    return v;
}

namespace detail {

// True when the IW prior at nu (with Psi matched to the mean) is at least as
// dispersed as the population, element-wise over the off-diagonal.
inline bool iw_nu_feasible(double nu, const Matrix& mean, const Matrix& var) {
    const Eigen::Index q_n = mean.rows();
    const Matrix psi = (nu - static_cast<double>(q_n) - 1.0) * mean;
    const Matrix iw_var = iw_element_variance(nu, psi);
    for (Eigen::Index i = 0; i < q_n; ++i)
        for (Eigen::Index j = i + 1; j < q_n; ++j)
            if (iw_var(i, j) < var(i, j)) return false;
    return true;
}

}  // namespace detail

// Fits the inverse-Wishart FC prior. Psi = (nu - Q - 1) * emp_mean keeps the
// prior mean exactly at the population mean for any nu; nu is then the largest
// (tightest) value whose element-wise variance still dominates the population
// variance at every off-diagonal entry, found by bisection.
inline std::pair<double, Matrix> fit_iw(const Matrix& emp_mean, const Matrix& emp_var) {
    const Eigen::Index q_n = emp_mean.rows();
    if (q_n < 2) throw ValidationError("fit_iw: need Q >= 2");
    if (emp_var.rows() != q_n || emp_var.cols() != q_n)
        throw DimensionMismatch("fit_iw: mean/var shape mismatch");

    double lo = static_cast<double>(q_n) + 4.0;
    double hi = lo + 1e6;
    if (!detail::iw_nu_feasible(lo, emp_mean, emp_var))
        throw Infeasible("fit_iw: population variance exceeds the IW variance even at nu = Q + 4");
    if (detail::iw_nu_feasible(hi, emp_mean, emp_var)) {
        // Constraint vacuous (e.g. zero population variance): maximally informative.
        return {hi, (hi - static_cast<double>(q_n) - 1.0) * emp_mean};
    }
    while ((hi - lo) / lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        if (detail::iw_nu_feasible(mid, emp_mean, emp_var))
            lo = mid;
        else
            hi = mid;
    }
    return {lo, (lo - static_cast<double>(q_n) - 1.0) * emp_mean};
}

inline Eigen::Index lower_tri_count(int q) {
    return static_cast<Eigen::Index>(q) * (q + 1) / 2;
}

// Row-major lower-triangle packing: (0,0), (1,0), (1,1), (2,0), ...
inline Vector pack_lower(const Matrix& l) {
    const Eigen::Index q_n = l.rows();
    Vector v(lower_tri_count(static_cast<int>(q_n)));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < q_n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) v[k++] = l(i, j);
    return v;
}

inline Matrix unpack_lower(const Vector& v, int q) {
    Matrix l = Matrix::Zero(q, q);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < q; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) l(i, j) = v[k++];
    return l;
}

// Permuted-Cholesky prior over correlation matrices. For each of P network
// orderings (the first is the identity), every training matrix is permuted,
// SPD-repaired and Cholesky-factorized; the prior keeps element-wise mean and
// variance of the lower-triangle entries per ordering. Sampling mixes
// uniformly over the orderings.
inline void build_cholesky_prior(FCPrior& prior, const std::vector<Matrix>& rs,
                                 int n_permutations, std::uint64_t rng_seed) {
    if (rs.empty()) throw ValidationError("build_cholesky_prior: no training matrices");
    if (n_permutations < 1) throw ValidationError("build_cholesky_prior: need P >= 1");
    const int q_n = static_cast<int>(rs.front().rows());
    const Eigen::Index n_tri = lower_tri_count(q_n);

    prior.permutations.clear();
    std::vector<int> identity(static_cast<std::size_t>(q_n));
    std::iota(identity.begin(), identity.end(), 0);
    prior.permutations.push_back(identity);
    Rng rng = Rng::derive(rng_seed, 0x70657221ULL);  // permutation stream
    for (int p = 1; p < n_permutations; ++p) {
        std::vector<int> perm = identity;
        rng.shuffle(perm.begin(), perm.end());
        prior.permutations.push_back(perm);
    }

    prior.chol_mean = Matrix::Zero(n_permutations, n_tri);
    prior.chol_var = Matrix::Zero(n_permutations, n_tri);
    const double n = static_cast<double>(rs.size());
    for (int p = 0; p < n_permutations; ++p) {
        const auto& perm = prior.permutations[static_cast<std::size_t>(p)];
        Vector sum = Vector::Zero(n_tri), sumsq = Vector::Zero(n_tri);
        for (const auto& r : rs) {
            if (r.rows() != q_n || r.cols() != q_n)
                throw DimensionMismatch("build_cholesky_prior: inconsistent matrix sizes");
            Matrix rp(q_n, q_n);
            for (int i = 0; i < q_n; ++i)
                for (int j = 0; j < q_n; ++j)
                    rp(i, j) = r(perm[static_cast<std::size_t>(i)],
                                 perm[static_cast<std::size_t>(j)]);
            Eigen::LLT<Matrix> llt(clip_spd(rp, 1e-8));
            if (llt.info() != Eigen::Success)
                throw NumericError("build_cholesky_prior: Cholesky failed after repair");
            const Vector elems = pack_lower(Matrix(llt.matrixL()));
            sum += elems;
            sumsq += elems.cwiseProduct(elems);
        }
        prior.chol_mean.row(p) = (sum / n).transpose();
        if (rs.size() > 1)
            prior.chol_var.row(p) =
                ((sumsq - sum.cwiseProduct(sum) / n) / (n - 1.0)).cwiseMax(0.0).transpose();
    }
    prior.has_cholesky = true;
}

namespace detail {

// One inverse-Wishart draw via the Bartlett decomposition of the Wishart on
// Psi^{-1}, rescaled to unit diagonal by the caller.
inline Matrix sample_iw(double nu, const Eigen::LLT<Matrix>& chol_psi_inv, int q_n, Rng& rng) {
    Matrix a = Matrix::Zero(q_n, q_n);
    for (int i = 0; i < q_n; ++i) {
        a(i, i) = std::sqrt(rng.chi_squared(nu - static_cast<double>(i)));
        for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
    }
    const Matrix lw = Matrix(chol_psi_inv.matrixL()) * a;  // chol factor of W ~ Wishart(nu, Psi^{-1})
    const Matrix w = lw * lw.transpose();
    return symmetrized(w.llt().solve(Matrix::Identity(q_n, q_n)));
}

}  // namespace detail

// Draws K correlation matrices from the prior. Cholesky kind: pick an
// ordering uniformly, draw the lower-triangle elements independently from
// N(chol_mean, chol_var), form LL^T, rescale to unit diagonal and undo the
// ordering. IW kind: standard inverse-Wishart draws rescaled to unit
// diagonal. Draw k is keyed by (rng_seed, k), so parallel generation would
// reproduce the serial stream.
inline std::vector<Matrix> sample_fc_prior(const FCPrior& prior, int k_draws,
                                           std::uint64_t rng_seed) {
    std::vector<Matrix> draws;
    draws.reserve(static_cast<std::size_t>(k_draws));
    const int q_n = prior.q;

    if (prior.kind == FCPriorKind::Cholesky) {
        if (!prior.has_cholesky)
            throw ValidationError("sample_fc_prior: Cholesky statistics not built");
        const auto n_perm = prior.permutations.size();
        for (int k = 0; k < k_draws; ++k) {
            Rng rng = Rng::derive(rng_seed, 0x63686f6cULL, static_cast<std::uint64_t>(k));
            const auto p = rng.uniform_index(n_perm);
            const auto& perm = prior.permutations[p];
            Vector elems(prior.tri_count());
            for (Eigen::Index e = 0; e < elems.size(); ++e) {
                const double sd = std::sqrt(prior.chol_var(static_cast<Eigen::Index>(p), e));
                elems[e] = prior.chol_mean(static_cast<Eigen::Index>(p), e) + sd * rng.normal();
            }
            const Matrix l = unpack_lower(elems, q_n);
            Matrix r = l * l.transpose();
            // Guard against an (improbable) all-zero row before rescaling.
            for (int i = 0; i < q_n; ++i) r(i, i) = std::max(r(i, i), 1e-12);
            r = to_correlation(r);
            Matrix out(q_n, q_n);
            for (int i = 0; i < q_n; ++i)
                for (int j = 0; j < q_n; ++j)
                    out(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) =
                        r(i, j);
            draws.push_back(symmetrized(out));
        }
        return draws;
    }

    if (!prior.has_iw) throw ValidationError("sample_fc_prior: IW parameters not fitted");
    const Matrix psi_inv = prior.iw_psi.llt().solve(Matrix::Identity(q_n, q_n));
    const Eigen::LLT<Matrix> chol_psi_inv(symmetrized(psi_inv));
    if (chol_psi_inv.info() != Eigen::Success)
        throw NumericError("sample_fc_prior: Psi is not positive definite");
    for (int k = 0; k < k_draws; ++k) {
        Rng rng = Rng::derive(rng_seed, 0x69775f73ULL, static_cast<std::uint64_t>(k));
        draws.push_back(to_correlation(detail::sample_iw(prior.iw_nu, chol_psi_inv, q_n, rng)));
    }
    return draws;
}

// Builds the full FC prior from training correlation matrices: empirical
// statistics always, plus the requested parametric layers.
inline FCPrior make_fc_prior(const std::vector<Matrix>& rs, FCPriorKind kind, bool build_iw,
                             bool build_chol, int n_permutations = 10,
                             std::uint64_t rng_seed = 0) {
    FCPrior prior;
    prior.q = static_cast<int>(rs.front().rows());
    prior.kind = kind;
    auto [mean, var] = empirical_fc_from_matrices(rs);
    prior.emp_mean = repair_correlation(mean);
    prior.emp_var = var;
    if (build_iw) {
        std::tie(prior.iw_nu, prior.iw_psi) = fit_iw(prior.emp_mean, prior.emp_var);
        prior.has_iw = true;
    }
    if (build_chol) build_cholesky_prior(prior, rs, n_permutations, rng_seed);
    return prior;
}

}  // namespace bbm
