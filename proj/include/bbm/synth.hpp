#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "bbm/rng.hpp"
#include "bbm/spatial_prior.hpp"
#include "bbm/stats.hpp"
#include "bbm/types.hpp"

namespace bbm {

enum class EngagementGeometry { Blocks, GaussianBumps };

inline std::string to_string(EngagementGeometry g) {
    return g == EngagementGeometry::Blocks ? "blocks" : "gaussian_bumps";
}

inline EngagementGeometry geometry_from_string(const std::string& s) {
    if (s == "blocks") return EngagementGeometry::Blocks;
    if (s == "gaussian_bumps") return EngagementGeometry::GaussianBumps;
    throw ValidationError("unknown engagement geometry: " + s);
}

struct SynthConfig {
    int q = 6;
    int v = 2000;
    int t = 600;
    int n_subjects = 10;
    double noise_sd = 1.0;
    EngagementGeometry geometry = EngagementGeometry::Blocks;
    Matrix fc_base;                 // Q x Q; empty selects ar1_correlation(q, 0.5)
    double fc_perturb_scale = 0.1;  // sd of the per-subject FC perturbation
    double engage_height = 1.0;
    double var_scale = 0.05;   // sigma^2 = var_scale * |s0| + var_floor
    double var_floor = 1e-4;
    double tr_seconds = 1.0;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (q < 1 || q >= std::min(t, v)) throw ValidationError("SynthConfig: need Q < min(T, V)");
        if (n_subjects < 1) throw ValidationError("SynthConfig: need n_subjects >= 1");
        if (noise_sd < 0.0) throw ValidationError("SynthConfig: noise_sd must be >= 0");
        if (var_scale < 0.0 || var_floor < 0.0)
            throw ValidationError("SynthConfig: variance parameters must be >= 0");
    }
};

struct SynthSubject {
    Matrix s_true;  // Q x V individual maps
    Matrix g_true;  // Q x Q individual FC
    std::array<BoldMatrix, 2> sessions;
    std::array<Matrix, 2> mixing;  // the T x Q mixing matrices actually used
};

struct SynthPopulation {
    SpatialPrior prior;  // the generative mean and variance
    Matrix fc_base;
    std::vector<SynthSubject> subjects;
    int repaired_fc_count = 0;  // perturbed matrices that needed eigenvalue clipping
};

inline Matrix ar1_correlation(int q, double rho) {
    Matrix r(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) r(i, j) = std::pow(rho, std::abs(i - j));
    return r;
}

namespace detail {

// Stream roles; combined with (seed, subject, session) they key every draw.
inline constexpr std::uint64_t kRoleDelta = 1;
inline constexpr std::uint64_t kRoleFC = 2;
inline constexpr std::uint64_t kRoleMixing = 3;
inline constexpr std::uint64_t kRoleNoise = 4;

inline Matrix population_mean_maps(const SynthConfig& cfg) {
    Matrix s0 = Matrix::Zero(cfg.q, cfg.v);
    if (cfg.geometry == EngagementGeometry::Blocks) {
        // Contiguous blocks with a cosine taper over the outer 20% of each edge.
        const double width = static_cast<double>(cfg.v) / cfg.q;
        for (int q = 0; q < cfg.q; ++q) {
            const double lo = q * width, hi = (q + 1) * width;
            const double taper = 0.2 * width;
            for (int v = 0; v < cfg.v; ++v) {
                const double x = v + 0.5;
                if (x < lo || x >= hi) continue;
                double h = cfg.engage_height;
                const double din = std::min(x - lo, hi - x);
                if (din < taper) h *= 0.5 * (1.0 - std::cos(3.14159265358979323846 * din / taper));
                s0(q, v) = h;
            }
        }
    } else {
        const double width = static_cast<double>(cfg.v) / (3.0 * cfg.q);
        for (int q = 0; q < cfg.q; ++q) {
            const double center = (q + 0.5) * static_cast<double>(cfg.v) / cfg.q;
            for (int v = 0; v < cfg.v; ++v) {
                const double z = (v + 0.5 - center) / width;
                s0(q, v) = cfg.engage_height * std::exp(-0.5 * z * z);
            }
        }
    }
    return s0;
}

}  // namespace detail

// The generative prior (population mean and variance maps) implied by a
// configuration, without simulating any subjects.
inline SpatialPrior population_prior(const SynthConfig& cfg) {
    cfg.validate();
    SpatialPrior prior;
    prior.mean = detail::population_mean_maps(cfg);
    prior.var = (cfg.var_scale * prior.mean.cwiseAbs()).array() + cfg.var_floor;
    prior.n_subjects = cfg.n_subjects;
    prior.template_name = "synthetic";
    prior.gsr_flag = "nogsr";
    return prior;
}

// Forward simulation of the generative model: individual maps are the
// population mean plus Gaussian deviations whose variance tracks engagement,
// mixing rows are drawn from the individual FC matrix, and white noise is
// added on top. Two sessions per subject share maps and FC but draw
// independent mixing and noise. Every draw is keyed by
// (seed, subject, session, role), so results do not depend on evaluation
// order.
inline SynthPopulation simulate_population(const SynthConfig& cfg) {
    cfg.validate();
    SynthPopulation pop;
    pop.prior = population_prior(cfg);
    const Matrix& s0 = pop.prior.mean;
    const Matrix& sig2 = pop.prior.var;

    pop.fc_base = cfg.fc_base.size() ? cfg.fc_base : ar1_correlation(cfg.q, 0.5);
    if (pop.fc_base.rows() != cfg.q || pop.fc_base.cols() != cfg.q)
        throw DimensionMismatch("simulate_population: fc_base must be Q x Q");

    const Matrix sig = sig2.cwiseSqrt();
    pop.subjects.reserve(static_cast<std::size_t>(cfg.n_subjects));
    for (int i = 0; i < cfg.n_subjects; ++i) {
        SynthSubject subj;
        const auto si = static_cast<std::uint64_t>(i) + 1;

        Rng rng_delta = Rng::derive(cfg.rng_seed, si, 0, detail::kRoleDelta);
        subj.s_true = s0;
        for (Eigen::Index q = 0; q < s0.rows(); ++q)
            for (Eigen::Index v = 0; v < s0.cols(); ++v)
                subj.s_true(q, v) += sig(q, v) * rng_delta.normal();

        Rng rng_fc = Rng::derive(cfg.rng_seed, si, 0, detail::kRoleFC);
        Matrix g = pop.fc_base;
        for (int a = 0; a < cfg.q; ++a)
            for (int bcol = a + 1; bcol < cfg.q; ++bcol) {
                const double d = cfg.fc_perturb_scale * rng_fc.normal();
                g(a, bcol) += d;
                g(bcol, a) += d;
            }
        if (min_eigenvalue(g) < 1e-6) ++pop.repaired_fc_count;
        subj.g_true = repair_correlation(g, 1e-6);
        const Matrix chol_g = Matrix(subj.g_true.llt().matrixL());

        for (int s = 0; s < 2; ++s) {
            const auto ss = static_cast<std::uint64_t>(s) + 1;
            Rng rng_mix = Rng::derive(cfg.rng_seed, si, ss, detail::kRoleMixing);
            Matrix z(cfg.t, cfg.q);
            for (Eigen::Index r = 0; r < z.rows(); ++r)
                for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng_mix.normal();
            const Matrix mixing = z * chol_g.transpose();

            Rng rng_noise = Rng::derive(cfg.rng_seed, si, ss, detail::kRoleNoise);
            BoldMatrix b;
            b.data = mixing * subj.s_true;
            if (cfg.noise_sd > 0.0)
                for (Eigen::Index r = 0; r < b.data.rows(); ++r)
                    for (Eigen::Index c = 0; c < b.data.cols(); ++c)
                        b.data(r, c) += cfg.noise_sd * rng_noise.normal();
            b.tr_seconds = cfg.tr_seconds;
            b.subject_id = "sub-" + std::to_string(i + 1);
            b.session_id = "ses-" + std::to_string(s + 1);
            b.reset_mask();
            subj.mixing[static_cast<std::size_t>(s)] = mixing;
            subj.sessions[static_cast<std::size_t>(s)] = std::move(b);
        }
        pop.subjects.push_back(std::move(subj));
    }
    return pop;
}

// Noise level giving the requested ratio of mean signal variance to noise
// variance; signal variance per location is s_v^T G s_v.
inline double noise_sd_for_snr(const Matrix& s_true, const Matrix& g, double snr) {
    if (!(snr > 0.0)) throw ValidationError("noise_sd_for_snr: snr must be > 0");
    double power = 0.0;
    for (Eigen::Index v = 0; v < s_true.cols(); ++v) {
        const Vector s = s_true.col(v);
        power += s.dot(g * s);
    }
    power /= static_cast<double>(s_true.cols());
    return std::sqrt(power / snr);
}

}  // namespace bbm
