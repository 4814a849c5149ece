#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bbm/dualreg.hpp"
#include "bbm/types.hpp"

namespace bbm {

// Population prior on spatial topography: per-network, per-location mean and
// between-subject variance, in dual-regression engagement units.
struct SpatialPrior {
    Matrix mean;  // Q x V
    Matrix var;   // Q x V, nonnegative
    int n_subjects = 0;
    std::string template_name;
    std::string gsr_flag;

    int q_count() const { return static_cast<int>(mean.rows()); }
    Eigen::Index v_count() const { return mean.cols(); }

    void validate() const {
        if (mean.rows() != var.rows() || mean.cols() != var.cols())
            throw DimensionMismatch("SpatialPrior: mean/var shape mismatch");
        if (!mean.allFinite() || !var.allFinite())
            throw ValidationError("SpatialPrior: non-finite entries");
        if (var.minCoeff() < 0.0) throw ValidationError("SpatialPrior: negative variance");
    }
};

// Method-of-moments estimator for the two-session measurement-error model
//   x_ij = z_i + e_ij,  e_ij ~ (0, sigma_e^2),  z_i ~ (mu, sigma^2).
// Per cell: mean is the grand mean, sigma_e^2 comes from within-subject
// session differences, and sigma^2 is the sample variance of subject means
// minus sigma_e^2 / 2, clamped at zero. Unbiased before the clamp.
inline SpatialPrior estimate_spatial_prior(const std::vector<std::pair<Matrix, Matrix>>& subject_maps) {
    const auto n = subject_maps.size();
    if (n < 2) throw ValidationError("estimate_spatial_prior: need >= 2 subjects");
    const Eigen::Index q_n = subject_maps.front().first.rows();
    const Eigen::Index v_n = subject_maps.front().first.cols();
    for (const auto& [a, b] : subject_maps)
        if (a.rows() != q_n || a.cols() != v_n || b.rows() != q_n || b.cols() != v_n)
            throw DimensionMismatch("estimate_spatial_prior: inconsistent map dimensions");

    const double nd = static_cast<double>(n);
    Matrix subj_mean_sum = Matrix::Zero(q_n, v_n);
    Matrix subj_mean_sq = Matrix::Zero(q_n, v_n);
    Matrix diff_sq = Matrix::Zero(q_n, v_n);
    for (const auto& [a, b] : subject_maps) {
        const Matrix sm = 0.5 * (a + b);
        subj_mean_sum += sm;
        subj_mean_sq += sm.cwiseProduct(sm);
        const Matrix d = a - b;
        diff_sq += d.cwiseProduct(d);
    }

    SpatialPrior p;
    p.n_subjects = static_cast<int>(n);
    p.mean = subj_mean_sum / nd;
    const Matrix noise_var = diff_sq / (2.0 * nd);  // sigma_e^2
    // Sample variance of subject means, n-1 denominator.
    const Matrix between =
        (subj_mean_sq - subj_mean_sum.cwiseProduct(subj_mean_sum) / nd) / (nd - 1.0);
    p.var = (between - 0.5 * noise_var).cwiseMax(0.0);
    p.validate();
    return p;
}

inline SpatialPrior estimate_spatial_prior(
    const std::vector<std::pair<DualRegResult, DualRegResult>>& sessions) {
    std::vector<std::pair<Matrix, Matrix>> maps;
    maps.reserve(sessions.size());
    for (const auto& [a, b] : sessions) maps.emplace_back(a.maps, b.maps);
    return estimate_spatial_prior(maps);
}

// Companion to estimate_spatial_prior exposing the noise variance estimate,
// for diagnostics and estimator checks.
inline Matrix estimate_noise_variance(const std::vector<std::pair<Matrix, Matrix>>& subject_maps) {
    if (subject_maps.empty()) throw ValidationError("estimate_noise_variance: no subjects");
    const Eigen::Index q_n = subject_maps.front().first.rows();
    const Eigen::Index v_n = subject_maps.front().first.cols();
    Matrix diff_sq = Matrix::Zero(q_n, v_n);
    for (const auto& [a, b] : subject_maps) {
        const Matrix d = a - b;
        diff_sq += d.cwiseProduct(d);
    }
    return diff_sq / (2.0 * static_cast<double>(subject_maps.size()));
}

inline SpatialPrior clamp_and_inflate(SpatialPrior p, double var_floor = 0.0) {
    if (!std::isfinite(var_floor) || var_floor < 0.0)
        throw ValidationError("clamp_and_inflate: var_floor must be finite and >= 0");
    p.var = p.var.cwiseMax(var_floor);
    return p;
}

}  // namespace bbm
