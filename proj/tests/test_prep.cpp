#include <hjens/prep.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hjens;

namespace {

SystemModel oscillator() {
    auto U = [](double, ConstSpan q) { return 0.5 * q[0] * q[0]; };
    auto gU = [](double, ConstSpan q, MutSpan g) { g[0] = q[0]; };
    return make_potential_particle(1.0, U, gU, 1);
}

GridSpec pline(int n, double lo = -1, double hi = 1) {
    return GridSpec{{AxisSpec{lo, hi, n, Boundary::outflow}}, Axes::momentum};
}

}  // namespace

TEST_CASE("momentum-space advection velocity is the force") {
    SystemModel m = oscillator();
    GridSpec g = pline(9);
    GridField q = sample_field(g, 1, 0.0, [](ConstSpan p, MutSpan o) { o[0] = 0.3 * p[0]; });
    GridField w = momentum_space_velocity(m, q);
    // omega = F = -q = -0.3 p on the oscillator
    Vec p(1);
    for (std::int64_t i = 0; i < w.nodes(); ++i) {
        g.node_coords(i, p);
        CHECK(w.at(0, i) == Catch::Approx(-0.3 * p[0]).margin(1e-14));
    }
}

TEST_CASE("symbolic residual in the momentum representation") {
    SystemModel m = oscillator();
    // Phi for the oscillator ensemble q(0,p) = -0.3 p evolves with
    // c(t) = (0.3 cos t - sin t)/(cos t + 0.3 sin t):  Phi = c(t) p^2 / 2
    SymbolicActionP phi = SymbolicActionP::parse(
        "((0.3*cos(t) - sin(t))/(cos(t) + 0.3*sin(t)))*p1^2/2", 1);
    for (double t : {0.0, 0.4, 1.0})
        for (double p : {-0.8, 0.1, 0.9})
            CHECK(hj_residual_p(m, phi, t, Vec{p}) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("truncated residual needs a time-independent model") {
    SystemModel m = oscillator();
    // W with H(-dW/dp, p) = E: -dW/dp = sqrt(2E - p^2)
    const double E = 0.5;
    GridSpec g = pline(201, -0.9, 0.9);
    GridField W = sample_field(g, 1, 0.0, [&](ConstSpan p, MutSpan o) {
        const double u = p[0];
        // -int sqrt(2E - p^2) dp
        o[0] = -(0.5 * u * std::sqrt(2 * E - u * u) +
                 E * std::asin(u / std::sqrt(2 * E)));
    });
    double worst = 0;
    for (double p : {-0.7, -0.2, 0.0, 0.45, 0.8})
        worst = std::max(worst, std::fabs(truncated_hj_residual_p(m, W, E, Vec{p})));
    CHECK(worst < 2e-4);

    // a time-dependent model is refused
    auto Ut = [](double t, ConstSpan q) { return 0.5 * q[0] * q[0] * (1 + t); };
    auto gUt = [](double t, ConstSpan q, MutSpan gr) { gr[0] = q[0] * (1 + t); };
    SystemModel td = make_potential_particle(1.0, Ut, gUt, 1);
    CHECK_THROWS_AS(truncated_hj_residual_p(td, W, E, Vec{0.0}), config_error);
}

TEST_CASE("coordinate field evolution mirrors the position picture") {
    // duality on the oscillator: R(q,p) = (p,-q) maps the q-picture ensemble
    // p0(q) = 0.3 q onto the p-picture ensemble q0(p) = -0.3 p
    SystemModel m = oscillator();

    GridSpec gq{{AxisSpec{-1, 1, 257, Boundary::outflow}}, Axes::position};
    GridField p0 = sample_field(gq, 1, 0.0, [](ConstSpan x, MutSpan o) { o[0] = 0.3 * x[0]; });
    EulerianOptions opt;
    opt.dt = 1e-3;
    opt.t_end = 0.4;
    opt.cadence = 1 << 20;
    opt.stop_on_flag = false;
    opt.detector_threshold = 1e9;
    EulerianResult eu = run_eulerian(m, p0, std::nullopt, opt);

    GridSpec gp{{AxisSpec{-1, 1, 257, Boundary::outflow}}, Axes::momentum};
    GridField q0 = sample_field(gp, 1, 0.0, [](ConstSpan p, MutSpan o) { o[0] = -0.3 * p[0]; });
    PrepRunResult pr = run_prep(m, q0, std::nullopt, opt);

    const GridField& pE = eu.p_snapshots.back();
    const GridField& qE = pr.q_snapshots.back();
    double worst = 0;
    Vec u(1);
    for (std::int64_t i = 0; i < qE.nodes(); ++i) {
        gp.node_coords(i, u);
        if (std::fabs(u[0]) > 0.6) continue;
        // the p-picture coordinate at P is the q-picture momentum at q = -P
        const double mirrored = interp_cubic(pE, 0, Vec{-u[0]});
        worst = std::max(worst, std::fabs(qE.at(0, i) - mirrored));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("density transport works on momentum grids too") {
    SystemModel m = oscillator();
    GridSpec g = pline(257);
    GridField q0 = sample_field(g, 1, 0.0, [](ConstSpan p, MutSpan o) { o[0] = -0.3 * p[0]; });
    GridField rho0 = sample_field(g, 1, 0.0, [](ConstSpan p, MutSpan o) {
        o[0] = std::exp(-6 * p[0] * p[0]);
    });
    EulerianOptions opt;
    opt.dt = 1e-3;
    opt.t_end = 0.3;
    opt.cadence = 200;
    PrepRunResult res = run_prep(m, q0, rho0, opt);
    REQUIRE(!res.rho_snapshots.empty());
    CHECK(res.rho_snapshots.back().t == Catch::Approx(0.3));
    for (double v : res.rho_snapshots.back().data) CHECK(v >= -1e-12);
}

TEST_CASE("momentum-representation recovery matches the position one") {
    CompleteIntegral ci;
    ci.dim = 1;
    ci.representation = Axes::momentum;
    ci.Phi = [](double t, ConstSpan p, ConstSpan b) {
        return -0.5 * p[0] * p[0] * t + b[0] * p[0];
    };
    Vec t_grid{0.2, 0.6, 1.1};
    // free particle: p = alpha, q = p t - beta
    Trajectory tr = jacobi_recover_p(ci, Vec{0.3}, Vec{0.7}, t_grid, Vec{0.7});
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        CHECK(tr.samples[k].p[0] == Catch::Approx(0.7).margin(1e-8));
        CHECK(tr.samples[k].q[0] ==
              Catch::Approx(0.7 * t_grid[k] - 0.3).margin(1e-8));
    }
}
