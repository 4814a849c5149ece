#pragma once

#include <cmath>
#include <string>

#include "bbm/types.hpp"

namespace bbm {

enum class ScaleMode { Global, Local, None };

inline std::string to_string(ScaleMode s) {
    switch (s) {
        case ScaleMode::Global: return "global";
        case ScaleMode::Local: return "local";
        default: return "none";
    }
}

inline ScaleMode scale_mode_from_string(const std::string& s) {
    if (s == "global") return ScaleMode::Global;
    if (s == "local") return ScaleMode::Local;
    if (s == "none") return ScaleMode::None;
    throw ValidationError("unknown scale mode: " + s);
}

// Framewise displacement from lagged differences of the six realignment
// parameters; rotations are converted to arc length at head_radius_mm. The
// first `lag` entries are zero.
inline Vector compute_fd(const MotionParams& m, double head_radius_mm = 50.0, int lag = 1) {
    m.validate();
    const Eigen::Index t_raw = m.params.rows();
    if (lag < 1 || lag >= t_raw)
        throw ValidationError("compute_fd: lag must be in [1, T_original)");
    Vector fd = Vector::Zero(t_raw);
    for (Eigen::Index t = lag; t < t_raw; ++t) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j) s += std::abs(m.params(t, j) - m.params(t - lag, j));
        for (int j = 3; j < 6; ++j)
            s += head_radius_mm * std::abs(m.params(t, j) - m.params(t - lag, j));
        fd[t] = s;
    }
    return fd;
}

// Drops the first drop_initial raw volumes and any volume with FD above the
// threshold, then enforces a minimum retained duration. Operates in raw scan
// indices, so censoring an already-censored matrix with the same FD vector is
// a no-op.
inline BoldMatrix censor(const BoldMatrix& b, const Vector& fd, double threshold_mm,
                         int drop_initial, double min_duration_s = 600.0) {
    b.validate();
    const auto t_raw = static_cast<Eigen::Index>(b.kept_mask.size());
    if (fd.size() != t_raw)
        throw DimensionMismatch("censor: fd has " + std::to_string(fd.size()) +
                                " entries, raw scan length is " + std::to_string(t_raw));
    if (!(threshold_mm > 0.0)) throw ValidationError("censor: threshold_mm must be > 0");
    if (drop_initial < 0) throw ValidationError("censor: drop_initial must be >= 0");

    std::vector<bool> new_mask(static_cast<std::size_t>(t_raw));
    Eigen::Index kept = 0;
    for (Eigen::Index t = 0; t < t_raw; ++t) {
        const bool keep = b.kept_mask[static_cast<std::size_t>(t)] && t >= drop_initial &&
                          fd[t] <= threshold_mm;
        new_mask[static_cast<std::size_t>(t)] = keep;
        kept += keep ? 1 : 0;
    }
    const double retained_s = static_cast<double>(kept) * b.tr_seconds;
    if (retained_s < min_duration_s) throw InsufficientDuration(retained_s, min_duration_s);

    BoldMatrix out;
    out.tr_seconds = b.tr_seconds;
    out.subject_id = b.subject_id;
    out.session_id = b.session_id;
    out.kept_mask = std::move(new_mask);
    out.data.resize(kept, b.v_count());
    Eigen::Index row_in = 0, row_out = 0;
    for (Eigen::Index t = 0; t < t_raw; ++t) {
        if (!b.kept_mask[static_cast<std::size_t>(t)]) continue;
        if (out.kept_mask[static_cast<std::size_t>(t)]) out.data.row(row_out++) = b.data.row(row_in);
        ++row_in;
    }
    return out;
}

// Deterministic normalization: optional global signal regression, column
// centering, then global or per-location variance scaling. The same settings
// must be used for prior training and for the subjects later fit against that
// prior.
inline BoldMatrix preprocess(const BoldMatrix& b, bool gsr, ScaleMode scale) {
    b.validate();
    BoldMatrix out = b;
    Matrix& y = out.data;
    const Eigen::Index t_n = y.rows();

    if (gsr) {
        Vector g = y.rowwise().mean();
        g.array() -= g.mean();
        const double gg = g.squaredNorm();
        if (gg > 0.0) {
            const Vector coef = (y.transpose() * g) / gg;  // per-column slope
            y.noalias() -= g * coef.transpose();
        }
    }

    y.rowwise() -= y.colwise().mean();

    if (scale == ScaleMode::Local) {
        for (Eigen::Index v = 0; v < y.cols(); ++v) {
            const double sd =
                std::sqrt(y.col(v).squaredNorm() / static_cast<double>(t_n - 1));
            if (!(sd > 0.0))
                throw ValidationError("preprocess: zero-variance column " + std::to_string(v) +
                                      " with local scaling");
            y.col(v) /= sd;
        }
    } else if (scale == ScaleMode::Global) {
        double sd_sum = 0.0;
        for (Eigen::Index v = 0; v < y.cols(); ++v)
            sd_sum += std::sqrt(y.col(v).squaredNorm() / static_cast<double>(t_n - 1));
        const double sd_mean = sd_sum / static_cast<double>(y.cols());
        if (!(sd_mean > 0.0)) throw ValidationError("preprocess: all columns constant");
        y /= sd_mean;
    }
    return out;
}

// First floor(T/2) rows and the remainder, each re-centered, as two pseudo
// test-retest sessions.
inline std::pair<BoldMatrix, BoldMatrix> split_pseudo_sessions(const BoldMatrix& b) {
    b.validate();
    const Eigen::Index t_n = b.t_count();
    if (t_n < 4) throw ValidationError("split_pseudo_sessions: need T >= 4");
    const Eigen::Index half = t_n / 2;

    auto make = [&](Eigen::Index begin, Eigen::Index len, const char* suffix) {
        BoldMatrix s;
        s.data = b.data.middleRows(begin, len);
        s.data.rowwise() -= s.data.colwise().mean();
        s.tr_seconds = b.tr_seconds;
        s.subject_id = b.subject_id;
        s.session_id = b.session_id + suffix;
        s.reset_mask();
        return s;
    };
    return {make(0, half, "_ps1"), make(half, t_n - half, "_ps2")};
}

}  // namespace bbm
