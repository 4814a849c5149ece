#pragma once

#include <cmath>
#include <string>

#include "bbm/stats.hpp"
#include "bbm/types.hpp"

namespace bbm {

// Standardize each map over locations and flag |z-score| >= z.
inline BoolMatrix threshold_zmap(const Matrix& maps, double z) {
    BoolMatrix out(maps.rows(), maps.cols());
    for (Eigen::Index q = 0; q < maps.rows(); ++q) {
        const Vector row = maps.row(q).transpose();
        const double sd = sample_sd(row);
        if (!(sd > 0.0))
            throw ValidationError("threshold_zmap: constant map for network " +
                                  std::to_string(q));
        const double m = row.mean();
        for (Eigen::Index v = 0; v < maps.cols(); ++v)
            out(q, v) = std::abs((maps(q, v) - m) / sd) >= z;
    }
    return out;
}

// Dice coefficient 2|a&b| / (|a| + |b|); 0 when both masks are empty.
template <class DerivedA, class DerivedB>
inline double dice(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
    if (a.size() != b.size()) throw DimensionMismatch("dice: mask length mismatch");
    long na = 0, nb = 0, nab = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const bool xa = a(i), xb = b(i);
        na += xa;
        nb += xb;
        nab += (xa && xb);
    }
    if (na + nb == 0) return 0.0;
    return 2.0 * static_cast<double>(nab) / static_cast<double>(na + nb);
}

struct OverlapMatrix {
    Matrix dice;  // Q x Q
    double threshold_z = 2.0;
    std::string source;
};

inline Matrix dice_matrix(const BoolMatrix& a, const BoolMatrix& b) {
    if (a.cols() != b.cols()) throw DimensionMismatch("dice_matrix: location counts differ");
    Matrix d(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = dice(a.row(i), b.row(j));
    return d;
}

// Binary masks per network: labels directly for parcellations, z-thresholded
// maps for continuous templates.
inline BoolMatrix template_masks(const NetworkTemplate& t, double z = 2.0) {
    t.validate();
    if (t.kind == TemplateKind::ContinuousMaps) return threshold_zmap(t.maps, z);
    const int q_n = t.q_count();
    BoolMatrix out(q_n, t.labels.size());
    for (int q = 0; q < q_n; ++q)
        for (Eigen::Index v = 0; v < t.labels.size(); ++v) out(q, v) = (t.labels[v] == q + 1);
    return out;
}

// Per-network Pearson correlation over locations between two map sets.
inline Vector reliability(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols())
        throw DimensionMismatch("reliability: shape mismatch");
    Vector r(x.rows());
    for (Eigen::Index q = 0; q < x.rows(); ++q)
        r[q] = pearson(x.row(q).transpose(), y.row(q).transpose());
    return r;
}

}  // namespace bbm
