#include <hjens/dipole.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hjens;

namespace {

constexpr double pi = 3.14159265358979323846;

EmFieldSet uniform_Hz(double H0) {
    EmFieldSet f;
    f.E = [](double, ConstSpan, MutSpan o) { o[0] = o[1] = o[2] = 0; };
    f.H = [H0](double, ConstSpan, MutSpan o) {
        o[0] = o[1] = 0;
        o[2] = H0;
    };
    f.grad_H = [](double, ConstSpan, MutSpan o) {
        for (int k = 0; k < 9; ++k) o[std::size_t(k)] = 0;
    };
    return f;
}

}  // namespace

TEST_CASE("spin parameterization round-trips") {
    auto s = spin_vector(0.3, 1.1, 0.5);
    CHECK(std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) ==
          Catch::Approx(0.5).margin(1e-15));
    CHECK(s[2] == 0.3);
    double xi = 0, chi = 0;
    spin_angles(s, xi, chi);
    CHECK(xi == Catch::Approx(0.3).margin(1e-15));
    CHECK(chi == Catch::Approx(1.1).margin(1e-12));

    // azimuth is measured from +y toward +x
    auto along_y = spin_vector(0.0, 0.0, 0.5);
    CHECK(along_y[1] == Catch::Approx(0.5));
    CHECK(along_y[0] == Catch::Approx(0.0).margin(1e-15));

    CHECK_THROWS_AS(spin_vector(0.6, 0.0, 0.5), config_error);
}

TEST_CASE("angle unwrapping lands next to the reference") {
    CHECK(unwrap_angle(0.1, 6.2) == Catch::Approx(0.1 + 2 * pi).margin(1e-12));
    CHECK(unwrap_angle(-0.1, -7.0) == Catch::Approx(-0.1 - 2 * pi).margin(1e-12));
    CHECK(unwrap_angle(1.0, 1.5) == 1.0);
}

TEST_CASE("uniform field precession conserves the magnitude") {
    DipoleParams par;
    par.e = 0;  // no Lorentz force
    par.gamma = 1;
    par.spin_mag = 0.5;
    EmFieldSet f = uniform_Hz(2.0);
    DipoleState s0;
    s0.r = {0, 0, 0};
    s0.v = {0, 0, 0};
    s0.xi = 0.3;
    s0.chi = 0.7;
    auto path = integrate_dipole(par, f, s0, 1e-3, 10.0, 100);
    REQUIRE(path.size() > 2);
    for (const auto& st : path) {
        // chi advances at gamma H0, xi and the position stay put
        CHECK(st.chi == Catch::Approx(0.7 + 2.0 * st.t).margin(1e-8));
        CHECK(st.xi == Catch::Approx(0.3).margin(1e-12));
        CHECK(std::fabs(st.r[0]) + std::fabs(st.r[1]) + std::fabs(st.r[2]) < 1e-12);
        CHECK_FALSE(st.pole);
    }
    // |s| follows from the parameterization; xi drift is the only leak
    CHECK(path.back().t == Catch::Approx(10.0));
}

TEST_CASE("spin field step applies the canonical sources") {
    GridSpec g{{AxisSpec{0.0, 1.0 - 1.0 / 32, 32, Boundary::periodic}}, Axes::position};
    DipoleParams par;
    par.gamma = 1;
    par.spin_mag = 0.5;
    EmFieldSet f = uniform_Hz(2.0);
    GridField v = GridField::zeros(g, 1, 0.0);  // resting fluid
    SpinFields sf;
    sf.xi = GridField::zeros(g, 1, 0.0);
    sf.chi = GridField::zeros(g, 1, 0.0);
    for (auto& x : sf.xi.data) x = 0.3;
    for (auto& c : sf.chi.data) c = 0.7;

    SpinStepReport rep;
    SpinFields out = step_spin_fields(sf, v, f, par, 0.01, &rep);
    CHECK(rep.pole_nodes == 0);
    CHECK(rep.clamped_nodes == 0);
    for (std::int64_t i = 0; i < out.chi.nodes(); ++i) {
        CHECK(out.chi.at(0, i) == Catch::Approx(0.7 + 2.0 * 0.01).margin(1e-14));
        CHECK(out.xi.at(0, i) == Catch::Approx(0.3).margin(1e-14));
    }
    CHECK(out.xi.t == Catch::Approx(0.01));
}

TEST_CASE("poles freeze the azimuth and out-of-range xi is clamped") {
    DipoleParams par;
    par.spin_mag = 0.5;
    CHECK(pole_frozen(par, 0.5));
    CHECK(pole_frozen(par, -0.5));
    CHECK_FALSE(pole_frozen(par, 0.3));

    GridSpec g{{AxisSpec{0.0, 1.0 - 1.0 / 16, 16, Boundary::periodic}}, Axes::position};
    EmFieldSet f = uniform_Hz(2.0);
    GridField v = GridField::zeros(g, 1, 0.0);
    SpinFields sf;
    sf.xi = GridField::zeros(g, 1, 0.0);
    sf.chi = GridField::zeros(g, 1, 0.0);
    for (auto& x : sf.xi.data) x = 0.6;  // doctored: beyond |s|
    for (auto& c : sf.chi.data) c = 1.2;

    SpinStepReport rep;
    SpinFields out = step_spin_fields(sf, v, f, par, 0.01, &rep);
    CHECK(rep.clamped_nodes == 16);
    CHECK(rep.pole_nodes == 16);
    for (std::int64_t i = 0; i < out.chi.nodes(); ++i) {
        CHECK(out.xi.at(0, i) == 0.5);
        CHECK(out.chi.at(0, i) == 1.2);  // frozen, no precession at the pole
    }
}

TEST_CASE("spin fields ride the stream") {
    const int n = 64;
    GridSpec g{{AxisSpec{0.0, 1.0 - 1.0 / n, n, Boundary::periodic}}, Axes::position};
    DipoleParams par;
    par.spin_mag = 0.5;
    EmFieldSet f = uniform_Hz(0.0);  // no field: pure advection
    GridField v = GridField::zeros(g, 1, 0.0);
    for (auto& u : v.data) u = 0.7;
    SpinFields sf;
    sf.xi = GridField::zeros(g, 1, 0.0);
    sf.chi = sample_field(g, 1, 0.0,
                          [](ConstSpan x, MutSpan o) { o[0] = std::cos(2 * pi * x[0]); });

    const double dt = 5e-3;
    for (int k = 0; k < 50; ++k) {
        v.t = sf.chi.t;
        sf = step_spin_fields(sf, v, f, par, dt);
    }
    Vec x(1);
    double worst = 0;
    for (std::int64_t i = 0; i < sf.chi.nodes(); ++i) {
        g.node_coords(i, x);
        worst = std::max(worst, std::fabs(sf.chi.at(0, i) -
                                          std::cos(2 * pi * (x[0] - 0.7 * 0.25))));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("fluid velocity composes gradient, vector potential, and spin drive") {
    GridSpec g{{AxisSpec{-1, 1, 101, Boundary::outflow}}, Axes::position};
    DipoleParams par;
    par.m = 2;
    par.e = 2;
    par.c = 4;
    GridField S = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) { o[0] = 0.3 * x[0]; });
    SpinFields sf;
    sf.xi = GridField::zeros(g, 1, 0.0);
    for (auto& x : sf.xi.data) x = 0.1;
    sf.chi = sample_field(g, 1, 0.0,
                          [](ConstSpan x, MutSpan o) { o[0] = 0.2 * x[0] * x[0]; });
    auto A = [](double, ConstSpan, MutSpan o) {
        o[0] = 0.05;
        o[1] = o[2] = 0;
    };
    GridField v = dipole_velocity(S, sf, par, A);
    Vec x(1);
    for (std::int64_t i = 0; i < v.nodes(); ++i) {
        g.node_coords(i, x);
        // (dS - (e/c) A + xi dchi) / m, exact because S and chi are polynomial
        const double expect = (0.3 - 0.025 + 0.1 * 0.4 * x[0]) / 2;
        CHECK(v.at(0, i) == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("uniform precession solves the action equation, a broken pair does not") {
    GridSpec g{{AxisSpec{0.0, 1.0 - 1.0 / 32, 32, Boundary::periodic}}, Axes::position};
    DipoleParams par;
    par.gamma = 1;
    par.spin_mag = 0.5;
    EmFieldSet f = uniform_Hz(2.0);
    const double dt = 0.01;

    // S = const, xi = const, chi = chi0 + gamma H0 t: every term cancels
    GridField S0 = GridField::zeros(g, 1, 0.0);
    GridField S1 = GridField::zeros(g, 1, dt);
    SpinFields f0, f1;
    f0.xi = GridField::zeros(g, 1, 0.0);
    f1.xi = GridField::zeros(g, 1, dt);
    for (auto& x : f0.xi.data) x = 0.3;
    for (auto& x : f1.xi.data) x = 0.3;
    f0.chi = GridField::zeros(g, 1, 0.0);
    f1.chi = GridField::zeros(g, 1, dt);
    for (auto& c : f0.chi.data) c = 0.7;
    for (auto& c : f1.chi.data) c = 0.7 + 2.0 * dt;

    const double r = dipole_hj_residual_max(S0, S1, f0, f1, par, f, nullptr, nullptr);
    CHECK(r < 1e-12);

    // precession at the wrong rate leaves xi (chi_t + gamma H0) behind
    for (auto& c : f1.chi.data) c = 0.7 + 3.0 * dt;
    const double r2 = dipole_hj_residual_max(S0, S1, f0, f1, par, f, nullptr, nullptr);
    CHECK(r2 == Catch::Approx(0.3).margin(0.05));
}

TEST_CASE("dipole continuity conserves mass on a ring") {
    const int n = 64;
    GridSpec g{{AxisSpec{0.0, 1.0 - 1.0 / n, n, Boundary::periodic}}, Axes::position};
    GridField v = GridField::zeros(g, 1, 0.0);
    for (auto& u : v.data) u = 0.4;
    GridField rho = sample_field(g, 1, 0.0, [](ConstSpan x, MutSpan o) {
        o[0] = 1 + 0.3 * std::sin(2 * pi * x[0]);
    });
    const double m0 = total_mass(rho);
    DensityStepReport rep;
    for (int k = 0; k < 200; ++k) rho = dipole_continuity_step(v, rho, 5e-3, &rep);
    CHECK(total_mass(rho) == Catch::Approx(m0).epsilon(1e-13));
    CHECK(rep.boundary_outflux == 0.0);
}
