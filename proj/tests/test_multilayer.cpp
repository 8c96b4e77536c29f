#include <hjens/multilayer.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace hjens;

namespace {

constexpr double pi = 3.14159265358979323846;

GridSpec shell_grid(int n = 241) {
    return GridSpec{{AxisSpec{-1.2, 1.2, n, Boundary::outflow}}, Axes::position};
}

SystemModel oscillator() {
    auto U = [](double, ConstSpan q) { return 0.5 * q[0] * q[0]; };
    auto gU = [](double, ConstSpan q, MutSpan g) { g[0] = q[0]; };
    return make_potential_particle(1.0, U, gU, 1);
}

}  // namespace

TEST_CASE("oscillator shell splits into two mirrored branches") {
    MultilayerEnsemble ens = build_oscillator_layers(0.5, 1.0, 1.0, shell_grid());
    ens.validate();
    REQUIRE(ens.layers.size() == 2);
    CHECK(ens.layers[0].weight == 0.5);
    CHECK(ens.layers[1].weight == 0.5);

    const GridSpec& g = ens.layers[0].rho.spec;
    Vec x(1);
    for (std::int64_t i = 0; i < ens.layers[0].rho.nodes(); ++i) {
        g.node_coords(i, x);
        if (std::fabs(x[0]) > 0.95) continue;  // stay off the turning points
        const double speed = std::sqrt(1 - x[0] * x[0]);
        CHECK(ens.layers[0].v.at(0, i) == Catch::Approx(speed).margin(1e-12));
        CHECK(ens.layers[1].v.at(0, i) == Catch::Approx(-speed).margin(1e-12));
        // flux relation rho |v| = omega / pi on the support
        CHECK(ens.layers[0].rho.at(0, i) * speed == Catch::Approx(1 / pi).margin(1e-12));
    }
}

TEST_CASE("turning flags mark the fold, not the interior") {
    MultilayerEnsemble ens = build_oscillator_layers(0.5, 1.0, 1.0, shell_grid());
    const Layer& l = ens.layers[0];
    const GridSpec& g = l.rho.spec;
    Vec x(1);
    int flagged = 0;
    for (std::int64_t i = 0; i < l.rho.nodes(); ++i) {
        g.node_coords(i, x);
        if (l.turning[std::size_t(i)]) {
            ++flagged;
            CHECK(std::fabs(x[0]) > 0.95);  // only near |x| = A = 1
        } else if (std::fabs(x[0]) < 0.9) {
            CHECK(l.v.at(0, i) != 0.0);
        }
    }
    CHECK(flagged >= 2);  // both turning points found
}

TEST_CASE("branch fluxes cancel across the turning surface") {
    MultilayerEnsemble ens = build_oscillator_layers(0.5, 1.0, 1.0, shell_grid());
    FluxMatchReport rep = check_flux_matching(ens.layers[0], ens.layers[1]);
    REQUIRE(!rep.samples.empty());
    CHECK(rep.flux_scale == Catch::Approx(1 / pi).margin(1e-3));
    CHECK(rep.matched(1e-6));

    // negative control: inflate one branch's density by 5 percent
    Layer bad = ens.layers[1];
    for (auto& r : bad.rho.data) r *= 1.05;
    FluxMatchReport rep2 = check_flux_matching(ens.layers[0], bad);
    CHECK_FALSE(rep2.matched(1e-3));
    CHECK(rep2.max_asym == Catch::Approx(0.05 / pi).epsilon(0.1));
}

TEST_CASE("mixing weights must sum to one") {
    MultilayerEnsemble ens = build_oscillator_layers(0.5, 1.0, 1.0, shell_grid(121));
    GridField mixed = mix_density(ens);
    // both branches carry the same density, so the mixture equals either one
    for (std::int64_t i = 0; i < mixed.nodes(); ++i)
        CHECK(mixed.at(0, i) == Catch::Approx(ens.layers[0].rho.at(0, i)).margin(1e-14));

    ens.layers[0].weight = 0.6;  // 0.6 + 0.5 != 1
    CHECK_THROWS_AS(mix_density(ens), config_error);
}

TEST_CASE("layer construction rejects malformed fields") {
    GridSpec g = shell_grid(41);
    GridField rho = GridField::zeros(g, 1, 0.0);
    GridField v = GridField::zeros(g, 1, 0.0);
    rho.data[5] = -1e-3;
    CHECK_THROWS_AS(make_layer(rho, v, 1.0), config_error);

    GridField S = sample_field(g, 1, 0.0,
                               [](ConstSpan x, MutSpan o) { o[0] = 0.5 * x[0] * x[0]; });
    GridField flat = GridField::zeros(g, 1, 0.0);
    for (auto& r : flat.data) r = 0.5;
    Layer l = make_layer_from_action(flat, S, 2.0, 1.0);
    Vec x(1);
    for (std::int64_t i = 0; i < l.v.nodes(); ++i) {
        g.node_coords(i, x);
        if (std::fabs(x[0]) < 1.0)
            CHECK(l.v.at(0, i) == Catch::Approx(0.5 * x[0]).margin(1e-12));
    }
    CHECK_THROWS_AS(make_layer_from_action(flat, S, -2.0, 1.0), config_error);
}

TEST_CASE("trajectory samples are tagged by travel direction") {
    MultilayerEnsemble ens = build_oscillator_layers(0.5, 1.0, 1.0, shell_grid());
    SystemModel m = oscillator();
    PhaseState s0;
    s0.q = {0.0};
    s0.p = {1.0};  // q = sin t on the E = 1/2 shell
    Trajectory tr = integrate_trajectory(m, s0, 1e-3, 4 * pi, Method::rk4, 10);
    std::vector<int> tags = tag_trajectory_layers(m, tr, ens);
    REQUIRE(tags.size() == tr.samples.size());
    for (std::size_t k = 0; k < tags.size(); ++k) {
        const double p = tr.samples[k].p[0];
        if (p > 0.3) CHECK(tags[k] == 0);   // right-moving branch
        if (p < -0.3) CHECK(tags[k] == 1);  // left-moving branch
    }
}

TEST_CASE("position histogram is normalized and piles up at the turning points") {
    SystemModel m = oscillator();
    PhaseState s0;
    s0.q = {0.0};
    s0.p = {1.0};
    Trajectory tr = integrate_trajectory(m, s0, 1e-3, 40 * pi, Method::rk4, 7);
    Vec h = position_histogram(tr, -0.9, 0.9, 20);
    double sum = 0;
    for (double b : h) sum += b;
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    // arcsine statistics: the outer bins collect more dwell time than the middle
    CHECK(h[0] > 1.4 * h[10]);
    CHECK(h[19] > 1.4 * h[10]);

    CHECK_THROWS_AS(position_histogram(tr, 0.9, -0.9, 20), config_error);
    CHECK_THROWS_AS(position_histogram(tr, -0.9, 0.9, 0), config_error);
}
