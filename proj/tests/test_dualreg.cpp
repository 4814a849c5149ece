#include <catch2/catch.hpp>

#include <array>
#include <cmath>

#include "bbm/dualreg.hpp"
#include "bbm/rng.hpp"
#include "bbm/stats.hpp"

using namespace bbm;

namespace {

Matrix random_mat(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

BoldMatrix make_bold(Matrix data) {
    BoldMatrix b;
    b.data = std::move(data);
    b.data.rowwise() -= b.data.colwise().mean();
    b.reset_mask();
    return b;
}

// Disjoint-block maps: orthogonal rows by construction.
Matrix block_maps(int q, Eigen::Index v) {
    Matrix s = Matrix::Zero(q, v);
    const Eigen::Index w = v / q;
    for (int k = 0; k < q; ++k) s.block(k, k * w, 1, w).setOnes();
    return s;
}

}  // namespace

TEST_CASE("stage1 recovers the mixing matrix exactly on noise-free data") {
    const int q = 4;
    const Eigen::Index t = 80, v = 200;
    const Matrix s = block_maps(q, v);
    Matrix a = random_mat(t, q, 31);
    a.rowwise() -= a.colwise().mean();
    const BoldMatrix b = make_bold(a * s);

    const Matrix tc = stage1(b, continuous_template(s));
    // OLS with template = S gives A up to per-column positive scaling.
    for (int k = 0; k < q; ++k) {
        CHECK(pearson(tc.col(k), a.col(k)) == Approx(1.0).margin(1e-10));
        CHECK(sample_variance(tc.col(k)) == Approx(1.0).margin(1e-8));
    }
}

TEST_CASE("parcel median stage 1 uses the median, not the mean") {
    NetworkTemplate tmpl;
    tmpl.kind = TemplateKind::Parcellation;
    tmpl.labels = IntVector::Zero(4);
    tmpl.labels << 1, 1, 1, 0;  // one parcel of three locations + unassigned

    BoldMatrix b;
    b.data.resize(4, 4);
    b.data << 1, 5, 100, 0,
              2, 6, 101, 0,
              0, 4,  99, 0,
              3, 7, 102, 0;
    b.reset_mask();

    const Matrix raw = parcel_median_timecourses(b, tmpl);
    CHECK(raw(0, 0) == 5.0);
    CHECK(raw(1, 0) == 6.0);
    CHECK(raw(2, 0) == 4.0);
    CHECK(raw(3, 0) == 7.0);
}

TEST_CASE("parcel median equals parcel mean on within-parcel symmetric data") {
    NetworkTemplate tmpl;
    tmpl.kind = TemplateKind::Parcellation;
    tmpl.labels.resize(6);
    tmpl.labels << 1, 1, 1, 2, 2, 2;

    Matrix base = random_mat(40, 2, 32);
    Matrix data(40, 6);
    data << base.col(0), base.col(0), base.col(0), base.col(1), base.col(1), base.col(1);
    BoldMatrix b;
    b.data = data;
    b.reset_mask();

    const Matrix med = parcel_median_timecourses(b, tmpl);
    CHECK((med.col(0) - base.col(0)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((med.col(1) - base.col(1)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("duplicated template maps are rank deficient") {
    Matrix s = block_maps(3, 120);
    s.row(2) = s.row(1);
    const BoldMatrix b = make_bold(random_mat(50, 120, 33));
    CHECK_THROWS_AS(stage1(b, continuous_template(s)), RankDeficient);
}

TEST_CASE("stage2 reproduces maps exactly from exact time courses") {
    const int q = 3;
    const Eigen::Index t = 60, v = 150;
    const Matrix s = block_maps(q, v);
    Matrix a = random_mat(t, q, 34);
    // Unit-variance centered columns so stage2 coefficients equal S directly.
    for (int k = 0; k < q; ++k) {
        a.col(k).array() -= a.col(k).mean();
        a.col(k) /= std::sqrt(a.col(k).squaredNorm() / static_cast<double>(t - 1));
    }
    const BoldMatrix b = make_bold(a * s);
    const DualRegResult r = stage2(b, a);
    CHECK((r.maps - s).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(r.residual_var.maxCoeff() < 1e-16);
}

TEST_CASE("stage2 requires more time points than networks") {
    const Matrix tc = random_mat(5, 5, 35);
    const BoldMatrix b = make_bold(random_mat(5, 20, 36));
    CHECK_THROWS_AS(stage2(b, tc), InsufficientTimepoints);
}

TEST_CASE("stage2 rejects collinear time courses") {
    Matrix tc = random_mat(40, 3, 37);
    tc.col(2) = 2.0 * tc.col(0);
    const BoldMatrix b = make_bold(random_mat(40, 30, 38));
    CHECK_THROWS_AS(stage2(b, tc), RankDeficient);
}

TEST_CASE("white-noise stage2 coefficients shrink like 1/sqrt(T)") {
    // Monte Carlo oracle: mean |coefficient| at T in {64, 256, 1024} over 100
    // replicates each; the log-log slope against T should be -1/2.
    const int q = 3;
    const Eigen::Index v = 10;
    const std::array<Eigen::Index, 3> ts = {64, 256, 1024};
    std::array<double, 3> mean_abs{};
    std::uint64_t seed = 5000;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        double acc = 0.0;
        long count = 0;
        for (int rep = 0; rep < 100; ++rep) {
            Matrix tc = random_mat(ts[i], q, seed++);
            for (int k = 0; k < q; ++k) {
                tc.col(k).array() -= tc.col(k).mean();
                tc.col(k) /= std::sqrt(tc.col(k).squaredNorm() /
                                       static_cast<double>(ts[i] - 1));
            }
            const BoldMatrix b = make_bold(random_mat(ts[i], v, seed++));
            const DualRegResult r = stage2(b, tc);
            acc += r.maps.cwiseAbs().sum();
            count += r.maps.size();
        }
        mean_abs[i] = acc / static_cast<double>(count);
    }
    const double slope01 = std::log(mean_abs[1] / mean_abs[0]) /
                           std::log(static_cast<double>(ts[1]) / static_cast<double>(ts[0]));
    const double slope12 = std::log(mean_abs[2] / mean_abs[1]) /
                           std::log(static_cast<double>(ts[2]) / static_cast<double>(ts[1]));
    CHECK(slope01 == Approx(-0.5).margin(0.1));
    CHECK(slope12 == Approx(-0.5).margin(0.1));
    CHECK(mean_abs[2] < 0.05);
}

TEST_CASE("dual regression recovers self-generated maps through both stages") {
    const int q = 4;
    const Eigen::Index t = 300, v = 400;
    const Matrix s = block_maps(q, v);
    Matrix a = random_mat(t, q, 40);
    Matrix noise = 0.05 * random_mat(t, v, 41);
    const BoldMatrix b = make_bold(a * s + noise);
    const DualRegResult r = dual_regress(b, continuous_template(s));
    for (int k = 0; k < q; ++k)
        CHECK(pearson(r.maps.row(k).transpose(), s.row(k).transpose()) > 0.99);
}

TEST_CASE("permuting template networks permutes map rows identically") {
    const int q = 4;
    const Eigen::Index t = 100, v = 200;
    Matrix maps = block_maps(q, v) + 0.1 * random_mat(q, v, 42);
    const BoldMatrix b = make_bold(random_mat(t, v, 43));

    const DualRegResult base = dual_regress(b, continuous_template(maps));
    Matrix perm_maps(q, v);
    const std::array<int, 4> perm = {2, 0, 3, 1};
    for (int k = 0; k < q; ++k) perm_maps.row(k) = maps.row(perm[static_cast<std::size_t>(k)]);
    const DualRegResult permuted = dual_regress(b, continuous_template(perm_maps));
    for (int k = 0; k < q; ++k) {
        const double diff = (permuted.maps.row(k) -
                             base.maps.row(perm[static_cast<std::size_t>(k)]))
                                .cwiseAbs()
                                .maxCoeff();
        CHECK(diff < 1e-9);
    }
}
