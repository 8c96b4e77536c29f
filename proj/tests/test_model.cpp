#include <hjens/model.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hjens;

namespace {

double osc_U(double, ConstSpan q) { return 0.5 * q[0] * q[0]; }
void osc_gU(double, ConstSpan q, MutSpan g) { g[0] = q[0]; }

}  // namespace

TEST_CASE("potential particle wires force and velocity") {
    SystemModel m = make_potential_particle(2.0, osc_U, osc_gU, 1);
    CHECK(m.dim == 1);
    CHECK(m.is_hamiltonian);
    CHECK(m.separable);
    Vec q{0.4}, p{1.2}, out(1);
    m.velocity(0, q, p, out);
    CHECK(out[0] == Catch::Approx(0.6));  // p/m
    m.force(0, q, p, out);
    CHECK(out[0] == Catch::Approx(-0.4));
    CHECK(m.hamiltonian(0, q, p) == Catch::Approx(1.2 * 1.2 / 4 + 0.08));
}

TEST_CASE("gradient audit rejects an inconsistent potential") {
    auto bad_g = [](double, ConstSpan q, MutSpan g) { g[0] = 2.0 * q[0]; };  // wrong by 2x
    CHECK_THROWS_AS(make_potential_particle(1.0, osc_U, bad_g, 1), config_error);
    AuditOptions off;
    off.enabled = false;
    CHECK_NOTHROW(make_potential_particle(1.0, osc_U, bad_g, 1, off));
}

TEST_CASE("drag variants scale differently with mass") {
    auto zero_U = [](double, ConstSpan) { return 0.0; };
    auto zero_g = [](double, ConstSpan, MutSpan g) { g[0] = 0; };
    SystemModel vd = make_damped_particle(2.0, zero_U, zero_g, 0.6, 1);
    CHECK_FALSE(vd.is_hamiltonian);
    Vec q{0.0}, p{1.0}, out(1);
    vd.force(0, q, p, out);
    CHECK(out[0] == Catch::Approx(-0.3));  // -beta v = -beta p/m

    CHECK(parse_drag_variant("velocity_drag") == DragVariant::velocity_drag);
    CHECK(parse_drag_variant("canonical_drag") == DragVariant::canonical_drag);
    CHECK_THROWS_AS(parse_drag_variant("quadratic"), config_error);
}

TEST_CASE("charged particle model uses kinetic momentum") {
    // uniform field along z via A = H0/2 (-y, x, 0)
    EmPotentials pots;
    pots.phi = [](double, ConstSpan) { return 0.0; };
    pots.grad_phi = [](double, ConstSpan, MutSpan g) { g[0] = g[1] = g[2] = 0; };
    pots.A = [](double, ConstSpan r, MutSpan a) {
        a[0] = -0.5 * r[1];
        a[1] = 0.5 * r[0];
        a[2] = 0;
    };
    pots.dA_dq = [](double, ConstSpan, MutSpan d) {
        for (auto& v : d) v = 0;
        d[0 * 3 + 1] = 0.5;
        d[1 * 3 + 0] = -0.5;
    };
    pots.dA_dt = [](double, ConstSpan, MutSpan d) { d[0] = d[1] = d[2] = 0; };
    SystemModel m = make_em_particle(1.0, 1.0, 1.0, std::move(pots));
    Vec q{0.2, -0.1, 0.0}, p{0.3, 0.0, 0.0}, out(3);
    m.velocity(0, q, p, out);
    // v = (p - (e/c) A)/m with A = ( .05, .1, 0 )
    CHECK(out[0] == Catch::Approx(0.25));
    CHECK(out[1] == Catch::Approx(-0.1));
    CHECK(out[2] == Catch::Approx(0.0));
}

TEST_CASE("n-body factory checks shapes") {
    auto U = [](double, ConstSpan q) {
        const double d = q[0] - q[1];
        return 0.5 * d * d;
    };
    auto gU = [](double, ConstSpan q, MutSpan g) {
        const double d = q[0] - q[1];
        g[0] = d;
        g[1] = -d;
    };
    SystemModel m = make_nbody({1.0, 3.0}, 1, U, gU);
    CHECK(m.dim == 2);
    Vec q{0.0, 0.0}, p{1.0, 1.0}, out(2);
    m.velocity(0, q, p, out);
    CHECK(out[1] == Catch::Approx(1.0 / 3.0));  // per-particle mass
    CHECK_THROWS_AS(make_nbody({}, 1, U, gU), config_error);
    CHECK_THROWS_AS(make_nbody({1.0, -2.0}, 1, U, gU), config_error);
}

TEST_CASE("generic hamiltonian factory audits the supplied gradients") {
    auto H = [](double, ConstSpan q, ConstSpan p) {
        return 0.5 * p[0] * p[0] + std::cos(q[0]);
    };
    auto dHdq = [](double, ConstSpan q, ConstSpan, MutSpan g) {
        g[0] = -std::sin(q[0]);
    };
    auto dHdp = [](double, ConstSpan, ConstSpan p, MutSpan g) { g[0] = p[0]; };
    SystemModel m = make_hamiltonian_model(1, H, dHdq, dHdp);
    CHECK(m.is_hamiltonian);
    Vec q{0.3}, p{-0.2}, out(1);
    m.force(0, q, p, out);
    CHECK(out[0] == Catch::Approx(std::sin(0.3)));

    auto lying_dHdp = [](double, ConstSpan, ConstSpan p, MutSpan g) {
        g[0] = -p[0];
    };
    CHECK_THROWS_AS(make_hamiltonian_model(1, H, dHdq, lying_dHdp), config_error);
}
