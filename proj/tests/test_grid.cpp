#include <hjens/grid.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hjens;

namespace {

GridSpec line(double lo, double hi, int n, Boundary bc = Boundary::outflow) {
    return GridSpec{{AxisSpec{lo, hi, n, bc}}, Axes::position};
}

}  // namespace

TEST_CASE("grid validation rejects bad axes") {
    CHECK_THROWS_AS(line(1, -1, 8).validate(), config_error);
    CHECK_THROWS_AS(line(0, 1, 1).validate(), config_error);
    GridSpec empty{{}, Axes::position};
    CHECK_THROWS_AS(empty.validate(), config_error);
}

TEST_CASE("flat index round-trips through unflatten") {
    GridSpec g{{AxisSpec{-1, 1, 5, Boundary::outflow},
                AxisSpec{0, 2, 7, Boundary::periodic}},
               Axes::position};
    std::array<int, 8> idx{};
    for (std::int64_t k = 0; k < g.node_count(); ++k) {
        g.unflatten(k, idx);
        CHECK(g.flat_index(idx) == k);
    }
    // last axis fastest
    g.unflatten(1, idx);
    CHECK(idx[0] == 0);
    CHECK(idx[1] == 1);
}

TEST_CASE("node coordinates span the bounds uniformly") {
    GridSpec g = line(-2, 2, 5);
    Vec x(1);
    g.node_coords(0, x);
    CHECK(x[0] == -2.0);
    g.node_coords(4, x);
    CHECK(x[0] == 2.0);
    g.node_coords(2, x);
    CHECK(x[0] == 0.0);
    CHECK(g.min_h() == Catch::Approx(1.0));
}

TEST_CASE("linear interpolation is exact on affine data") {
    GridSpec g{{AxisSpec{-1, 1, 9, Boundary::outflow},
                AxisSpec{-1, 1, 11, Boundary::outflow}},
               Axes::position};
    GridField f = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) {
        o[0] = 2.0 + 0.5 * x[0] - 1.25 * x[1];
    });
    for (auto pt : {Vec{0.13, -0.4}, Vec{-0.77, 0.91}, Vec{0.0, 0.0}})
        CHECK(interp_linear(f, 0, pt) ==
              Catch::Approx(2.0 + 0.5 * pt[0] - 1.25 * pt[1]).margin(1e-14));
}

TEST_CASE("cubic interpolation is exact on cubics and wraps on rings") {
    GridSpec g = line(0, 1, 9);
    GridField f = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) {
        const double u = x[0];
        o[0] = 1 + u - 2 * u * u + 0.5 * u * u * u;
    });
    for (double u : {0.06, 0.5, 0.93})
        CHECK(interp_cubic(f, 0, Vec{u}) ==
              Catch::Approx(1 + u - 2 * u * u + 0.5 * u * u * u).margin(1e-13));

    const int n = 64;
    GridSpec ring = line(0, double(n - 1) / n, n, Boundary::periodic);
    const double two_pi = 2 * 3.14159265358979323846;
    GridField c = sample_field(ring, 1, 0.0, [&](ConstSpan x, MutSpan o) {
        o[0] = std::sin(two_pi * x[0]);
    });
    for (double u : {-0.02, 0.999, 1.31})
        CHECK(interp_cubic(c, 0, Vec{u}) ==
              Catch::Approx(std::sin(two_pi * u)).margin(1e-5));
}

TEST_CASE("gradients are second order inside and at edges") {
    GridSpec g = line(-1, 1, 41);
    GridField f = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) {
        o[0] = x[0] * x[0] * 0.5 - 0.3 * x[0];
    });
    GridField df = gradient_field(f);
    Vec x(1);
    for (std::int64_t i = 0; i < f.nodes(); ++i) {
        g.node_coords(i, x);
        CHECK(df.at(0, i) == Catch::Approx(x[0] - 0.3).margin(1e-12));  // exact: poly deg 2
    }
}

TEST_CASE("periodic gradient respects the ring") {
    const int n = 128;
    GridSpec ring = line(0, double(n - 1) / n, n, Boundary::periodic);
    const double two_pi = 2 * 3.14159265358979323846;
    GridField f = sample_field(ring, 1, 0.0, [&](ConstSpan x, MutSpan o) {
        o[0] = std::cos(two_pi * x[0]);
    });
    GridField df = gradient_field(f);
    Vec x(1);
    double worst = 0;
    for (std::int64_t i = 0; i < f.nodes(); ++i) {
        ring.node_coords(i, x);
        worst = std::max(worst,
                         std::fabs(df.at(0, i) + two_pi * std::sin(two_pi * x[0])));
    }
    CHECK(worst < 3e-3);  // (2 pi)^3 h^2 / 6 = 2.53e-3 at h = 1/128
}

TEST_CASE("contains distinguishes inside from outside") {
    GridSpec g = line(-1, 1, 9);
    CHECK(g.contains(Vec{0.5}));
    CHECK_FALSE(g.contains(Vec{1.5}));
    const int n = 16;
    GridSpec ring = line(0, double(n - 1) / n, n, Boundary::periodic);
    CHECK(ring.contains(Vec{7.3}));  // rings wrap everything
}

TEST_CASE("field access is by component and node") {
    GridSpec g = line(0, 1, 3);
    GridField f = GridField::zeros(g, 2, 1.5);
    f.at(1, 2) = 7.0;
    CHECK(f.t == 1.5);
    CHECK(f.components == 2);
    CHECK(f.at(1, 2) == 7.0);
    CHECK(f.at(0, 2) == 0.0);
    CHECK(max_abs(f) == 7.0);
}
