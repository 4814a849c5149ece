#include <catch2/catch.hpp>

#include "bbm/preprocess.hpp"
#include "bbm/rng.hpp"

using namespace bbm;

namespace {

BoldMatrix make_bold(const Matrix& data, double tr = 1.0) {
    BoldMatrix b;
    b.data = data;
    b.tr_seconds = tr;
    b.reset_mask();
    return b;
}

Matrix random_mat(Eigen::Index t, Eigen::Index v, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(t, v);
    for (Eigen::Index r = 0; r < t; ++r)
        for (Eigen::Index c = 0; c < v; ++c) m(r, c) = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("fd is zero for constant motion") {
    MotionParams m;
    m.params = Matrix::Constant(20, 6, 0.7);
    const Vector fd = compute_fd(m);
    CHECK(fd.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fd picks up a single translation step") {
    MotionParams m;
    m.params = Matrix::Zero(10, 6);
    for (Eigen::Index t = 5; t < 10; ++t) m.params(t, 0) = 0.3;
    const Vector fd = compute_fd(m, 50.0, 1);
    for (Eigen::Index t = 0; t < 10; ++t) CHECK(fd[t] == Approx(t == 5 ? 0.3 : 0.0));
}

TEST_CASE("rotation contributes arc length at the head radius") {
    // arc = radius * angle: 50 mm * 0.01 rad = 0.5 mm, frozen by hand.
    MotionParams m;
    m.params = Matrix::Zero(8, 6);
    for (Eigen::Index t = 3; t < 8; ++t) m.params(t, 4) = 0.01;
    const Vector fd = compute_fd(m, 50.0, 1);
    CHECK(fd[3] == Approx(0.5));
    CHECK(fd[2] == 0.0);
    CHECK(fd[4] == 0.0);
}

TEST_CASE("fd depends only on lagged differences") {
    MotionParams m;
    m.params = random_mat(30, 6, 11) * 0.1;
    MotionParams shifted;
    shifted.params = m.params;
    shifted.params.array() += 5.0;  // absolute position offset
    CHECK((compute_fd(m) - compute_fd(shifted)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fd respects the lag parameter") {
    MotionParams m;
    m.params = random_mat(30, 6, 12);
    const Vector fd = compute_fd(m, 50.0, 4);
    for (int t = 0; t < 4; ++t) CHECK(fd[t] == 0.0);
    CHECK(fd[4] != 0.0);
    CHECK_THROWS_AS(compute_fd(m, 50.0, 30), ValidationError);
}

TEST_CASE("censor drops initial volumes and high-motion volumes") {
    BoldMatrix b = make_bold(random_mat(1200, 4, 13), 0.72);
    const Vector fd = Vector::Zero(1200);
    const BoldMatrix c = censor(b, fd, 0.5, 15);
    CHECK(c.t_count() == 1185);
    CHECK(c.tr_seconds == 0.72);

    Vector fd_spike = fd;
    fd_spike[20] = 0.6;
    const BoldMatrix c2 = censor(b, fd_spike, 0.5, 15);
    CHECK(c2.t_count() == 1184);
    CHECK_FALSE(c2.kept_mask[20]);
    // Row 20 of the original data is gone.
    CHECK(c2.data.row(5) == b.data.row(21));
}

TEST_CASE("censor rejects insufficient retained duration") {
    BoldMatrix b = make_bold(random_mat(100, 3, 14), 1.0);
    const Vector fd = Vector::Constant(100, 2.0);
    try {
        censor(b, fd, 0.5, 0);
        FAIL("expected InsufficientDuration");
    } catch (const InsufficientDuration& e) {
        CHECK(e.retained_seconds == 0.0);
        CHECK(e.required_seconds == 600.0);
    }
}

TEST_CASE("censor is idempotent") {
    BoldMatrix b = make_bold(random_mat(900, 5, 15), 1.0);
    Vector fd = Vector::Zero(900);
    Rng rng(99);
    for (Eigen::Index t = 0; t < 900; ++t) fd[t] = rng.uniform();
    const BoldMatrix once = censor(b, fd, 0.7, 10, 60.0);
    const BoldMatrix twice = censor(once, fd, 0.7, 10, 60.0);
    CHECK(once.t_count() == twice.t_count());
    CHECK(once.data == twice.data);
    CHECK(once.kept_mask == twice.kept_mask);
}

TEST_CASE("preprocess identity on centered input") {
    Matrix d = random_mat(50, 6, 16);
    d.rowwise() -= d.colwise().mean();
    const BoldMatrix b = make_bold(d);
    const BoldMatrix out = preprocess(b, false, ScaleMode::None);
    CHECK((out.data - d).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gsr leaves columns uncorrelated with the removed global signal") {
    Matrix d = random_mat(200, 8, 17);
    // Inject a strong shared component so GSR has something to remove.
    const Matrix shared = random_mat(200, 1, 18);
    d += shared * Matrix::Constant(1, 8, 2.0);
    Vector global = d.rowwise().mean();
    global.array() -= global.mean();

    const BoldMatrix out = preprocess(make_bold(d), true, ScaleMode::None);
    for (Eigen::Index v = 0; v < 8; ++v) {
        CHECK(std::abs(out.data.col(v).mean()) < 1e-10);
        const double corr = out.data.col(v).dot(global) /
                            (out.data.col(v).norm() * global.norm());
        CHECK(std::abs(corr) < 1e-10);
    }
}

TEST_CASE("global scaling normalizes the mean column sd") {
    Matrix d = random_mat(100, 5, 19);
    d.rowwise() -= d.colwise().mean();
    for (Eigen::Index v = 0; v < 5; ++v)
        d.col(v) *= 2.0 / std::sqrt(d.col(v).squaredNorm() / 99.0);
    const BoldMatrix out = preprocess(make_bold(d), false, ScaleMode::Global);
    for (Eigen::Index v = 0; v < 5; ++v)
        CHECK(std::sqrt(out.data.col(v).squaredNorm() / 99.0) == Approx(1.0).margin(1e-12));
}

TEST_CASE("local scaling rejects constant columns") {
    Matrix d = random_mat(40, 3, 20);
    d.col(1).setConstant(3.0);
    CHECK_THROWS_AS(preprocess(make_bold(d), false, ScaleMode::Local), ValidationError);
}

TEST_CASE("pseudo-session split") {
    const BoldMatrix even = make_bold(random_mat(100, 4, 21));
    auto [a, b] = split_pseudo_sessions(even);
    CHECK(a.t_count() == 50);
    CHECK(b.t_count() == 50);
    CHECK(a.data.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    CHECK(b.data.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);

    const BoldMatrix odd = make_bold(random_mat(101, 4, 22));
    auto [c, d] = split_pseudo_sessions(odd);
    CHECK(c.t_count() == 50);
    CHECK(d.t_count() == 51);

    const BoldMatrix tiny = make_bold(random_mat(3, 4, 23));
    CHECK_THROWS_AS(split_pseudo_sessions(tiny), ValidationError);
}
