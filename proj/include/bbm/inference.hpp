#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bbm/fit.hpp"
#include "bbm/spatial_prior.hpp"
#include "bbm/stats.hpp"

namespace bbm {

enum class Correction { Bonferroni, None };

inline std::string to_string(Correction c) {
    return c == Correction::Bonferroni ? "bonferroni" : "none";
}

inline Correction correction_from_string(const std::string& s) {
    if (s == "bonferroni") return Correction::Bonferroni;
    if (s == "none") return Correction::None;
    throw ValidationError("unknown correction: " + s);
}

// Nested significance masks: masks[i] flags locations whose posterior exceeds
// the effect-size threshold u_q(zs[i]) after multiplicity correction.
struct EngagementResult {
    std::vector<double> zs;
    std::vector<BoolMatrix> masks;  // per z: Q x V
    Matrix thresholds;              // zs.size() x Q, u_q(z)
    double alpha = 0.05;
    Correction correction = Correction::Bonferroni;
};

// Minimum effect size for network q at level z: the prior mean map's value z
// standard deviations above its own mean, statistics taken over locations.
inline double engagement_threshold(const SpatialPrior& prior, int q, double z) {
    const Vector row = prior.mean.row(q).transpose();
    return row.mean() + z * sample_sd(row);
}

// One-sided posterior exceedance test per location: flag v for network q when
// Pr(s_qv > u_q(z)) >= 1 - alpha', i.e. (s_mean - u)/sqrt(s_var) exceeds the
// normal quantile. Locations the prior pins (zero posterior variance) are
// decided by the sign of s_mean - u.
inline EngagementResult engagements(const SubjectFit& fit, const SpatialPrior& prior,
                                    std::vector<double> zs, double alpha = 0.05,
                                    Correction correction = Correction::Bonferroni) {
    prior.validate();
    const Eigen::Index q_n = prior.mean.rows();
    const Eigen::Index v_n = prior.v_count();
    if (fit.s_mean.rows() != q_n || fit.s_mean.cols() != v_n ||
        fit.s_var.rows() != q_n || fit.s_var.cols() != v_n)
        throw DimensionMismatch("engagements: fit and prior dimensions disagree");
    if (zs.empty()) throw ValidationError("engagements: no z values");
    for (std::size_t i = 0; i < zs.size(); ++i) {
        if (zs[i] < 0.0) throw ValidationError("engagements: z values must be >= 0");
        if (i > 0 && zs[i] < zs[i - 1])
            throw ValidationError("engagements: z values must be sorted ascending");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("engagements: alpha in (0,1)");

    const double n_tests = static_cast<double>(q_n) * static_cast<double>(v_n);
    const double alpha_adj =
        correction == Correction::Bonferroni ? alpha / n_tests : alpha;
    const double crit = normal_quantile(1.0 - alpha_adj);

    EngagementResult result;
    result.zs = std::move(zs);
    result.alpha = alpha;
    result.correction = correction;
    result.thresholds.resize(static_cast<Eigen::Index>(result.zs.size()), q_n);
    result.masks.reserve(result.zs.size());
    for (std::size_t zi = 0; zi < result.zs.size(); ++zi) {
        BoolMatrix mask(q_n, v_n);
        for (Eigen::Index q = 0; q < q_n; ++q) {
            const double u = engagement_threshold(prior, static_cast<int>(q), result.zs[zi]);
            result.thresholds(static_cast<Eigen::Index>(zi), q) = u;
            for (Eigen::Index v = 0; v < v_n; ++v) {
                const double diff = fit.s_mean(q, v) - u;
                const double sv = fit.s_var(q, v);
                mask(q, v) = (sv > 0.0) ? (diff / std::sqrt(sv) > crit) : (diff > 0.0);
            }
        }
        result.masks.push_back(std::move(mask));
    }
    return result;
}

}  // namespace bbm
