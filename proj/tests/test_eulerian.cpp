#include <hjens/eulerian.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hjens;

namespace {

SystemModel oscillator() {
    auto U = [](double, ConstSpan q) { return 0.5 * q[0] * q[0]; };
    auto gU = [](double, ConstSpan q, MutSpan g) { g[0] = q[0]; };
    return make_potential_particle(1.0, U, gU, 1);
}

SystemModel free_particle() {
    auto U = [](double, ConstSpan) { return 0.0; };
    auto gU = [](double, ConstSpan, MutSpan g) { g[0] = 0; };
    return make_potential_particle(1.0, U, gU, 1);
}

GridSpec ring(int n) {
    return GridSpec{{AxisSpec{0.0, double(n - 1) / n, n, Boundary::periodic}},
                    Axes::position};
}

}  // namespace

TEST_CASE("velocity field divides by the mass") {
    auto U = [](double, ConstSpan) { return 0.0; };
    auto gU = [](double, ConstSpan, MutSpan g) { g[0] = 0; };
    SystemModel m = make_potential_particle(4.0, U, gU, 1);
    GridSpec g{{AxisSpec{-1, 1, 5, Boundary::outflow}}, Axes::position};
    GridField p = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) { o[0] = x[0]; });
    GridField v = velocity_from_momentum(m, p);
    CHECK(v.at(0, 4) == Catch::Approx(0.25));
}

TEST_CASE("momentum step converges at second order on the oscillator") {
    SystemModel m = oscillator();
    auto run = [&](int n, double dt, double T) {
        GridSpec g{{AxisSpec{-1, 1, n, Boundary::outflow}}, Axes::position};
        GridField p = sample_field(g, 1, 0.0,
                                   [](ConstSpan x, MutSpan o) { o[0] = x[0]; });
        const int steps = int(std::lround(T / dt));
        for (int k = 0; k < steps; ++k) p = step_momentum_field(m, p, dt);
        const double fac =
            (std::cos(T) - std::sin(T)) / (std::cos(T) + std::sin(T));
        double worst = 0;
        Vec x(1);
        for (std::int64_t i = 0; i < p.nodes(); ++i) {
            g.node_coords(i, x);
            if (std::fabs(x[0]) > 0.8) continue;
            worst = std::max(worst, std::fabs(p.at(0, i) - fac * x[0]));
        }
        return worst;
    };
    const double e1 = run(129, 4e-3, 0.4);
    const double e2 = run(257, 2e-3, 0.4);
    CHECK(e1 < 1e-4);
    CHECK(e1 / e2 > 3.0);
}

TEST_CASE("cfl violation raises with the node and speed") {
    SystemModel m = free_particle();
    GridSpec g{{AxisSpec{-1, 1, 11, Boundary::outflow}}, Axes::position};
    GridField p = sample_field(g, 1, 0.0, [](ConstSpan, MutSpan o) { o[0] = 5.0; });
    CHECK_THROWS_AS(step_momentum_field(m, p, 0.5), cfl_error);
    try {
        step_momentum_field(m, p, 0.5);
    } catch (const cfl_error& e) {
        CHECK(e.speed == Catch::Approx(2.5));  // |v| dt
        CHECK(e.limit == Catch::Approx(0.1));  // 0.5 h
    }
}

TEST_CASE("density transport conserves mass on a ring") {
    GridSpec g = ring(96);
    const double two_pi = 2 * 3.14159265358979323846;
    GridField v = sample_field(g, 1, 0.0, [&](ConstSpan x, MutSpan o) {
        o[0] = 0.2 + 0.05 * std::sin(two_pi * x[0]);
    });
    GridField rho = sample_field(g, 1, 0.0, [&](ConstSpan x, MutSpan o) {
        o[0] = 1.0 + 0.3 * std::cos(two_pi * x[0]);
    });
    const double m0 = total_mass(rho);
    DensityStepReport rep;
    for (int k = 0; k < 200; ++k) rho = step_density(v, rho, 2e-3, &rep);
    CHECK(total_mass(rho) == Catch::Approx(m0).epsilon(1e-13));
    CHECK(rep.boundary_outflux == 0.0);
}

TEST_CASE("outflow boundaries account for the leaving mass") {
    GridSpec g{{AxisSpec{-1, 1, 65, Boundary::outflow}}, Axes::position};
    GridField v = sample_field(g, 1, 0.0, [](ConstSpan, MutSpan o) { o[0] = 1.0; });
    GridField rho = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) {
        o[0] = std::exp(-8 * x[0] * x[0]);
    });
    const double m0 = total_mass(rho);
    double outflux = 0;
    DensityStepReport rep;
    for (int k = 0; k < 300; ++k) {
        rho = step_density(v, rho, 1e-2, &rep);
        outflux += rep.boundary_outflux;
    }
    CHECK(total_mass(rho) + outflux == Catch::Approx(m0).epsilon(1e-12));
    CHECK(outflux > 0.1 * m0);  // most of the bump has drifted out
}

TEST_CASE("negative density is a scheme failure, not clipped") {
    GridSpec g = ring(16);
    GridField v = sample_field(g, 1, 0.0, [](ConstSpan, MutSpan o) { o[0] = 0.1; });
    GridField rho = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) {
        o[0] = (x[0] > 0.4 && x[0] < 0.6) ? -1.0 : 1.0;  // doctored input
    });
    CHECK_THROWS_AS(step_density(v, rho, 1e-2), numeric_error);
}

TEST_CASE("multivaluedness measure scales the velocity gradient by h") {
    GridSpec g{{AxisSpec{-1, 1, 101, Boundary::outflow}}, Axes::position};
    GridField v = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) { o[0] = 3 * x[0]; });
    // dv/dx = 3, h = 0.02
    CHECK(multivaluedness_measure(v) == Catch::Approx(0.06).margin(1e-12));
    const std::vector<GridField> hist{v};
    CHECK_FALSE(detect_multivaluedness(hist, 2.0).has_value());
    CHECK(detect_multivaluedness(hist, 0.05).has_value());
}

TEST_CASE("run_eulerian halves dt under auto_cfl and logs it") {
    SystemModel m = free_particle();
    GridSpec g{{AxisSpec{-1, 1, 101, Boundary::outflow}}, Axes::position};
    // fast stream: |v| dt = 2e-2 > 0.5 h = 1e-2 at the requested dt
    GridField p = sample_field(g, 1, 0.0, [](ConstSpan, MutSpan o) { o[0] = 2.0; });
    EulerianOptions opt;
    opt.dt = 1e-2;
    opt.t_end = 0.05;
    opt.auto_cfl = true;
    opt.stop_on_flag = false;
    EulerianResult res = run_eulerian(m, p, std::nullopt, opt);
    CHECK(res.final_t == Catch::Approx(0.05));
    bool halved = false;
    for (const auto& line : res.log)
        halved = halved || line.find("halv") != std::string::npos;
    CHECK(halved);

    opt.auto_cfl = false;
    CHECK_THROWS_AS(run_eulerian(m, p, std::nullopt, opt), cfl_error);
}

TEST_CASE("run_eulerian carries the density alongside the momentum") {
    SystemModel m = oscillator();
    GridSpec g{{AxisSpec{-1, 1, 129, Boundary::outflow}}, Axes::position};
    GridField p = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) { o[0] = x[0]; });
    GridField rho = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) {
        o[0] = std::exp(-4 * x[0] * x[0]);
    });
    EulerianOptions opt;
    opt.dt = 1e-3;
    opt.t_end = 0.2;
    opt.cadence = 100;
    EulerianResult res = run_eulerian(m, p, rho, opt);
    REQUIRE(res.rho_snapshots.size() == res.p_snapshots.size());
    CHECK(res.rho_snapshots.back().t == Catch::Approx(0.2));
    // expanding flow: the center density must drop
    const double c0 = interp_linear(res.rho_snapshots.front(), 0, Vec{0.0});
    const double c1 = interp_linear(res.rho_snapshots.back(), 0, Vec{0.0});
    CHECK(c1 < c0);
}

TEST_CASE("the gradient detector flags the folding ensemble") {
    SystemModel m = oscillator();
    GridSpec g{{AxisSpec{-1, 1, 257, Boundary::outflow}}, Axes::position};
    GridField p = GridField::zeros(g, 1, 0.0);
    EulerianOptions opt;
    opt.dt = 1e-3;
    opt.t_end = 2.0;
    opt.detector_threshold = 2.0;
    opt.stop_on_flag = true;
    EulerianResult res = run_eulerian(m, p, std::nullopt, opt);
    REQUIRE(res.flagged_time.has_value());
    CHECK(*res.flagged_time == Catch::Approx(3.14159265358979 / 2).margin(0.05));
    CHECK(res.final_t < 2.0);
}

TEST_CASE("curl diagnostic vanishes on gradient fields only") {
    GridSpec g{{AxisSpec{-1, 1, 33, Boundary::outflow},
                AxisSpec{-1, 1, 33, Boundary::outflow}},
               Axes::position};
    GridField grad = sample_field(g, 2, 0.0, [](ConstSpan x, MutSpan o) {
        o[0] = x[0] + 0.3 * x[1];  // d/dx of (x^2/2 + 0.3 x y + ...)
        o[1] = 0.3 * x[0] - x[1];
    });
    CHECK(curl_diagnostic(grad) < 1e-12);
    GridField swirl = sample_field(g, 2, 0.0, [](ConstSpan x, MutSpan o) {
        o[0] = -x[1];
        o[1] = x[0];
    });
    CHECK(curl_diagnostic(swirl) == Catch::Approx(2.0).margin(1e-10));
}
