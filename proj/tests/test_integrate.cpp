#include <hjens/integrate.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hjens;

namespace {

SystemModel oscillator(double mass = 1.0) {
    auto U = [](double, ConstSpan q) { return 0.5 * q[0] * q[0]; };
    auto gU = [](double, ConstSpan q, MutSpan g) { g[0] = q[0]; };
    return make_potential_particle(mass, U, gU, 1);
}

}  // namespace

TEST_CASE("rk4 reproduces the oscillator orbit") {
    SystemModel m = oscillator();
    PhaseState s0;
    s0.q = {1.0};
    s0.p = {0.0};
    Trajectory tr = integrate_trajectory(m, s0, 1e-3, 6.0, Method::rk4, 1000);
    for (const auto& s : tr.samples) {
        CHECK(s.q[0] == Catch::Approx(std::cos(s.t)).margin(1e-9));
        CHECK(s.p[0] == Catch::Approx(-std::sin(s.t)).margin(1e-9));
    }
    CHECK(tr.samples.front().t == 0.0);
    CHECK(tr.samples.back().t == Catch::Approx(6.0));
}

TEST_CASE("parse_method accepts the two schemes") {
    CHECK(parse_method("rk4") == Method::rk4);
    CHECK(parse_method("symplectic_leapfrog") == Method::symplectic_leapfrog);
    CHECK_THROWS_AS(parse_method("euler"), config_error);
}

TEST_CASE("leapfrog requires a separable model") {
    auto H = [](double, ConstSpan q, ConstSpan p) { return q[0] * p[0]; };
    auto dHdq = [](double, ConstSpan, ConstSpan p, MutSpan g) { g[0] = p[0]; };
    auto dHdp = [](double, ConstSpan q, ConstSpan, MutSpan g) { g[0] = q[0]; };
    SystemModel m = make_hamiltonian_model(1, H, dHdq, dHdp);
    REQUIRE_FALSE(m.separable);
    PhaseState s0;
    s0.q = {1.0};
    s0.p = {1.0};
    CHECK_THROWS_AS(
        integrate_trajectory(m, s0, 1e-3, 0.1, Method::symplectic_leapfrog),
        config_error);
    CHECK_NOTHROW(integrate_trajectory(m, s0, 1e-3, 0.1, Method::rk4));
}

TEST_CASE("integration runs backward in time") {
    SystemModel m = oscillator();
    PhaseState s0;
    s0.t = 0.0;
    s0.q = {1.0};
    s0.p = {0.0};
    Trajectory tr = integrate_trajectory(m, s0, 1e-3, -2.0, Method::rk4, 500);
    CHECK(tr.samples.back().t == Catch::Approx(-2.0));
    CHECK(tr.samples.back().q[0] == Catch::Approx(std::cos(2.0)).margin(1e-9));
}

TEST_CASE("ensemble blow-up names the offending member") {
    // U = -q^4: force 4 q^3 drives member 1 to infinity quickly
    auto U = [](double, ConstSpan q) {
        const double s = q[0] * q[0];
        return -s * s;
    };
    auto gU = [](double, ConstSpan q, MutSpan g) { g[0] = -4 * q[0] * q[0] * q[0]; };
    SystemModel m = make_potential_particle(1.0, U, gU, 1);
    EnsembleCloud cloud;
    PhaseState a, b;
    a.q = {0.0};
    a.p = {0.0};
    b.q = {2.0};
    b.p = {3.0};
    cloud.states = {a, b};
    cloud.weights = {0.5, 0.5};
    try {
        integrate_ensemble(m, cloud, 1e-2, 50.0, Method::rk4);
        FAIL("expected blow-up");
    } catch (const blowup_error& e) {
        CHECK(e.member == 1);
    }
}

TEST_CASE("flow map jacobian matches the oscillator rotation") {
    SystemModel m = oscillator();
    GridSpec g{{AxisSpec{-1, 1, 33, Boundary::outflow}}, Axes::position};
    GridField p0 = GridField::zeros(g, 1, 0.0);  // resting ensemble
    const double T = 0.7;
    GridField dets = flow_map_jacobian(m, g, p0, T, 1e-3);
    // every member rotates: dq(T)/dq0 = cos T
    for (std::int64_t i = 0; i < dets.nodes(); ++i)
        CHECK(dets.at(0, i) == Catch::Approx(std::cos(T)).margin(1e-6));
}

TEST_CASE("caustic time of the resting oscillator ensemble is pi/2") {
    SystemModel m = oscillator();
    GridSpec g{{AxisSpec{-1, 1, 33, Boundary::outflow}}, Axes::position};
    GridField p0 = GridField::zeros(g, 1, 0.0);
    auto t = first_caustic_time(m, g, p0, 1e-3, 3.0);
    REQUIRE(t.has_value());
    CHECK(*t == Catch::Approx(3.14159265358979 / 2).margin(5e-3));

    // an expanding ensemble never folds
    GridField outp = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) { o[0] = x[0]; });
    auto U0 = [](double, ConstSpan) { return 0.0; };
    auto g0 = [](double, ConstSpan, MutSpan gr) { gr[0] = 0; };
    SystemModel freem = make_potential_particle(1.0, U0, g0, 1);
    CHECK_FALSE(first_caustic_time(freem, g, outp, 1e-2, 1.0).has_value());
}

TEST_CASE("cloud weights must match states and sum to one") {
    EnsembleCloud cloud;
    PhaseState a;
    a.q = {0.0};
    a.p = {0.0};
    cloud.states = {a};
    cloud.weights = {0.25};
    CHECK_THROWS_AS(cloud.validate(), config_error);
    cloud.weights = {1.0};
    CHECK_NOTHROW(cloud.validate());
}
