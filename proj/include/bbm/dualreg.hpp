#pragma once

#include <algorithm>
#include <vector>

#include "bbm/stats.hpp"
#include "bbm/types.hpp"

namespace bbm {

// Noisy per-session estimates: network time courses (unit-variance columns)
// and the engagement map plus residual variance per location from regressing
// the data on those time courses.
struct DualRegResult {
    Matrix timecourses;  // T x Q
    Matrix maps;         // Q x V
    Vector residual_var; // V
};

namespace detail {

inline double median_inplace(std::vector<double>& v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

// Centers each column and rescales it to unit sample variance.
inline void normalize_columns(Matrix& tc) {
    const auto t_n = tc.rows();
    for (Eigen::Index q = 0; q < tc.cols(); ++q) {
        tc.col(q).array() -= tc.col(q).mean();
        const double sd = std::sqrt(tc.col(q).squaredNorm() / static_cast<double>(t_n - 1));
        if (!(sd > 0.0))
            throw NumericError("dual regression: constant time course for network " +
                               std::to_string(q));
        tc.col(q) /= sd;
    }
}

}  // namespace detail

// Per-parcel median time series (label 0 locations contribute to no parcel).
// Separated out so the raw, un-normalized values are directly checkable.
inline Matrix parcel_median_timecourses(const BoldMatrix& b, const NetworkTemplate& t) {
    const int q_n = t.q_count();
    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(q_n));
    for (Eigen::Index v = 0; v < t.labels.size(); ++v) {
        const int l = t.labels[v];
        if (l > 0) members[static_cast<std::size_t>(l - 1)].push_back(v);
    }
    Matrix tc(b.t_count(), q_n);
    std::vector<double> buf;
    for (int q = 0; q < q_n; ++q) {
        const auto& m = members[static_cast<std::size_t>(q)];
        if (m.empty()) throw ValidationError("dual regression: empty parcel " + std::to_string(q + 1));
        for (Eigen::Index tt = 0; tt < b.t_count(); ++tt) {
            buf.clear();
            for (Eigen::Index v : m) buf.push_back(b.data(tt, v));
            tc(tt, q) = detail::median_inplace(buf);
        }
    }
    return tc;
}

// Stage 1: network time courses from the template. Continuous maps regress
// each data row on the Q maps across locations; parcellations take the
// within-parcel median. Columns are then centered and scaled to unit sample
// variance.
inline Matrix stage1(const BoldMatrix& b, const NetworkTemplate& t) {
    b.validate();
    t.validate();
    if (t.v_count() != b.v_count())
        throw DimensionMismatch("stage1: template has " + std::to_string(t.v_count()) +
                                " locations, data has " + std::to_string(b.v_count()));
    Matrix tc;
    if (t.kind == TemplateKind::ContinuousMaps) {
        const Matrix gram = t.maps * t.maps.transpose();  // Q x Q
        Eigen::FullPivLU<Matrix> lu(gram);
        if (lu.rank() < gram.rows())
            throw RankDeficient("stage1: template maps are rank deficient");
        tc = lu.solve(t.maps * b.data.transpose()).transpose();  // T x Q
    } else {
        tc = parcel_median_timecourses(b, t);
    }
    detail::normalize_columns(tc);
    return tc;
}

// Stage 2: per-location multiple regression of the data on the network time
// courses. maps(q, v) is the coefficient; residual_var(v) = RSS / (T - Q).
inline DualRegResult stage2(const BoldMatrix& b, const Matrix& tc) {
    b.validate();
    const Eigen::Index t_n = b.t_count();
    const Eigen::Index q_n = tc.cols();
    if (tc.rows() != t_n)
        throw DimensionMismatch("stage2: time courses have " + std::to_string(tc.rows()) +
                                " rows, data has " + std::to_string(t_n));
    if (t_n <= q_n)
        throw InsufficientTimepoints("stage2: need T > Q, got T = " + std::to_string(t_n) +
                                     ", Q = " + std::to_string(q_n));
    const Matrix gram = tc.transpose() * tc;
    Eigen::FullPivLU<Matrix> lu(gram);
    if (lu.rank() < q_n) throw RankDeficient("stage2: collinear time courses");

    DualRegResult r;
    r.timecourses = tc;
    r.maps = lu.solve(tc.transpose() * b.data);  // Q x V
    const Matrix fitted = tc * r.maps;
    r.residual_var = (b.data - fitted).colwise().squaredNorm() /
                     static_cast<double>(t_n - q_n);
    return r;
}

inline DualRegResult dual_regress(const BoldMatrix& b, const NetworkTemplate& t) {
    return stage2(b, stage1(b, t));
}

}  // namespace bbm
