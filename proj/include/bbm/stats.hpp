#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bbm/error.hpp"

namespace bbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double mean_of(const Vector& x) { return x.mean(); }

// Sample variance with the n-1 denominator.
inline double sample_variance(const Vector& x) {
    const auto n = x.size();
    if (n < 2) return 0.0;
    const double m = x.mean();
    return (x.array() - m).square().sum() / static_cast<double>(n - 1);
}

inline double sample_sd(const Vector& x) { return std::sqrt(sample_variance(x)); }

inline double pearson(const Vector& x, const Vector& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ValidationError("pearson: length mismatch or too short");
    const Eigen::ArrayXd xc = x.array() - x.mean();
    const Eigen::ArrayXd yc = y.array() - y.mean();
    const double sxx = (xc * xc).sum();
    const double syy = (yc * yc).sum();
    if (sxx <= 0.0 || syy <= 0.0) throw ValidationError("pearson: constant input");
    return (xc * yc).sum() / std::sqrt(sxx * syy);
}

// Average ranks (ties share the mean rank).
inline Vector ranks_of(const Vector& x) {
    const auto n = static_cast<std::size_t>(x.size());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return x[static_cast<Eigen::Index>(a)] <
                                                         x[static_cast<Eigen::Index>(b)]; });
    Vector r(x.size());
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[static_cast<Eigen::Index>(idx[j + 1])] ==
                                x[static_cast<Eigen::Index>(idx[i])])
            ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[static_cast<Eigen::Index>(idx[k])] = avg;
        i = j + 1;
    }
    return r;
}

inline double spearman(const Vector& x, const Vector& y) {
    return pearson(ranks_of(x), ranks_of(y));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

// Inverse standard normal CDF, Wichura's AS 241 (PPND16); |error| < 1e-15 over
// the open unit interval.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal_quantile: p must be in (0,1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double v;
    if (r <= 5.0) {
        r -= 1.6;
        v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -v : v;
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Clip eigenvalues of a symmetric matrix from below; keeps the result
// symmetric positive definite for floor > 0.
inline Matrix clip_spd(const Matrix& m, double floor) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    Vector ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], floor);
    return symmetrized(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

// D^{-1/2} M D^{-1/2}; diagonal entries become exactly 1.
inline Matrix to_correlation(const Matrix& m) {
    const Eigen::Index n = m.rows();
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mii = m(i, i);
        if (!(mii > 0.0)) throw NumericError("to_correlation: nonpositive diagonal");
        d[i] = 1.0 / std::sqrt(mii);
    }
    Matrix r = d.asDiagonal() * m * d.asDiagonal();
    for (Eigen::Index i = 0; i < n; ++i) r(i, i) = 1.0;
    return symmetrized(r);
}

// Eigenvalue clipping followed by unit-diagonal rescaling; used to repair
// nearly (or not quite) positive definite correlation matrices.
inline Matrix repair_correlation(const Matrix& m, double eig_floor = 1e-8) {
    return to_correlation(clip_spd(m, eig_floor));
}

inline double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    return es.eigenvalues().minCoeff();
}

}  // namespace bbm
