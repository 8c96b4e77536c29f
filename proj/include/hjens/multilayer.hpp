#pragma once

// Multilayer configuration-space topology. When the flow folds back on
// itself (an oscillator between turning points, a reflected beam), no single
// single-valued field covers the domain, but a finite set of partial
// ensembles ("layers") does, each with its own density and velocity field.
// Layers meet at turning surfaces, where the normal velocity component
// changes sign; there the perpendicular fluxes of adjacent layers must
// cancel, and observable densities are weighted mixtures with unit total
// weight. The mixing weights are user data, not derived quantities.

#include "eulerian.hpp"

namespace hjens {

struct Layer {
    GridField rho;                     // scalar density, >= 0 on support
    GridField v;                       // velocity field, one comp per axis
    double weight = 1;
    std::vector<std::uint8_t> turning;  // 1 = node touches a turning surface

    void validate() const {
        if (rho.components != 1) throw config_error("layer density must be scalar");
        if (v.components != v.spec.dim())
            throw config_error("layer velocity needs one component per axis");
        if (!rho.spec.same_layout(v.spec))
            throw config_error("layer density and velocity grids differ");
        for (double r : rho.data)
            if (r < 0)
                throw config_error("layer density must be non-negative");
        if (!(weight >= 0))
            throw config_error("layer weight must be non-negative");
    }
};

struct MultilayerEnsemble {
    std::vector<Layer> layers;

    void validate() const {
        if (layers.empty()) throw config_error("no layers");
        double wsum = 0;
        for (const auto& l : layers) {
            l.validate();
            if (!l.rho.spec.same_layout(layers[0].rho.spec))
                throw config_error("layers must share one grid");
            wsum += l.weight;
        }
        if (std::fabs(wsum - 1.0) > 1e-12)
            throw config_error("layer weights must sum to 1 (got " +
                               std::to_string(wsum) + ")");
    }
};

// Flag the nodes that touch a sign change (or zero) of any velocity
// component between axis neighbours. These are the turning cells; field
// values there are excluded from norms and comparisons.
inline std::vector<std::uint8_t> detect_turning_surface(const GridField& v) {
    const GridSpec& g = v.spec;
    const int s = g.dim();
    if (v.components != s)
        throw config_error("turning detection needs a full velocity field");
    std::vector<std::uint8_t> flag(static_cast<std::size_t>(g.node_count()), 0);
    std::vector<int> idx(s);
    std::vector<std::int64_t> stride(s, 1);
    for (int d = s - 2; d >= 0; --d)
        stride[std::size_t(d)] = stride[std::size_t(d + 1)] * g.axes[std::size_t(d + 1)].n;
    for (std::int64_t i = 0; i < g.node_count(); ++i) {
        g.unflatten(i, idx);
        for (int c = 0; c < s && !flag[std::size_t(i)]; ++c) {
            for (int d = 0; d < s && !flag[std::size_t(i)]; ++d) {
                const auto& ax = g.axes[std::size_t(d)];
                const int id = idx[std::size_t(d)];
                for (int dir = -1; dir <= 1; dir += 2) {
                    std::int64_t j;
                    if (dir < 0 && id == 0) {
                        if (ax.bc != Boundary::periodic) continue;
                        j = i + std::int64_t(ax.n - 1) * stride[std::size_t(d)];
                    } else if (dir > 0 && id == ax.n - 1) {
                        if (ax.bc != Boundary::periodic) continue;
                        j = i - std::int64_t(ax.n - 1) * stride[std::size_t(d)];
                    } else {
                        j = i + dir * stride[std::size_t(d)];
                    }
                    if (v.at(c, i) * v.at(c, j) <= 0) {
                        flag[std::size_t(i)] = 1;
                        break;
                    }
                }
            }
        }
    }
    return flag;
}

inline Layer make_layer(GridField rho, GridField v, double weight) {
    Layer l;
    l.rho = std::move(rho);
    l.v = std::move(v);
    l.weight = weight;
    l.validate();
    l.turning = detect_turning_surface(l.v);
    return l;
}

// Layer whose velocity derives from an action field: v = grad S / m.
inline Layer make_layer_from_action(GridField rho, const GridField& S, double m,
                                    double weight) {
    if (!(m > 0)) throw config_error("mass must be positive");
    GridField v = gradient_field(S);
    for (auto& x : v.data) x /= m;
    return make_layer(std::move(rho), std::move(v), weight);
}

// Observable density: sum of w_n rho_n. Weights must sum to 1.
inline GridField mix_density(const MultilayerEnsemble& ens) {
    ens.validate();
    GridField out = GridField::zeros(ens.layers[0].rho.spec, 1,
                                     ens.layers[0].rho.t);
    for (const auto& l : ens.layers)
        for (std::int64_t i = 0; i < out.nodes(); ++i)
            out.at(0, i) += l.weight * l.rho.at(0, i);
    return out;
}

struct FluxMatchSample {
    std::int64_t node = 0;  // evaluation node (one cell inside the surface)
    int axis = 0;
    double j_a = 0, j_b = 0;
    double asym() const { return std::fabs(j_a + j_b); }
};

struct FluxMatchReport {
    std::vector<FluxMatchSample> samples;
    double max_asym = 0;
    double flux_scale = 0;  // max |j| seen, for context in reports
    bool matched(double tol) const { return max_asym <= tol; }
};

// Check j_perp^(a) = -j_perp^(b) across the shared turning surface. For
// every flagged node the flux rho*v_axis of both layers is evaluated at the
// nearest unflagged node walking inward along each axis (up to 5 cells); the
// verdict is symmetric in (a, b).
inline FluxMatchReport check_flux_matching(const Layer& a, const Layer& b) {
    a.validate();
    b.validate();
    if (!a.rho.spec.same_layout(b.rho.spec))
        throw config_error("layers must share one grid");
    const GridSpec& g = a.rho.spec;
    const int s = g.dim();
    std::vector<int> idx(s);
    std::vector<std::int64_t> stride(s, 1);
    for (int d = s - 2; d >= 0; --d)
        stride[std::size_t(d)] = stride[std::size_t(d + 1)] * g.axes[std::size_t(d + 1)].n;

    auto flagged = [&](std::int64_t i) {
        return (i < std::int64_t(a.turning.size()) && a.turning[std::size_t(i)]) ||
               (i < std::int64_t(b.turning.size()) && b.turning[std::size_t(i)]);
    };

    FluxMatchReport rep;
    for (std::int64_t i = 0; i < g.node_count(); ++i) {
        if (!flagged(i)) continue;
        g.unflatten(i, idx);
        for (int d = 0; d < s; ++d) {
            const auto& ax = g.axes[std::size_t(d)];
            for (int dir = -1; dir <= 1; dir += 2) {
                // walk inward until the first unflagged node
                std::int64_t j = -1;
                int id = idx[std::size_t(d)];
                for (int stepn = 1; stepn <= 5; ++stepn) {
                    const int jn = id + dir * stepn;
                    if (jn < 0 || jn >= ax.n) break;
                    const std::int64_t cand = i + std::int64_t(dir) * stepn * stride[std::size_t(d)];
                    if (!flagged(cand)) {
                        j = cand;
                        break;
                    }
                }
                if (j < 0) continue;
                FluxMatchSample smp;
                smp.node = j;
                smp.axis = d;
                smp.j_a = a.rho.at(0, j) * a.v.at(d, j);
                smp.j_b = b.rho.at(0, j) * b.v.at(d, j);
                rep.samples.push_back(smp);
                rep.max_asym = std::max(rep.max_asym, smp.asym());
                rep.flux_scale = std::max({rep.flux_scale, std::fabs(smp.j_a),
                                           std::fabs(smp.j_b)});
            }
        }
    }
    if (rep.samples.empty())
        throw config_error("no shared turning surface between the layers");
    return rep;
}

// Two-layer decomposition of the 1-D harmonic oscillator energy shell:
// right- and left-moving branches with v = +-omega sqrt(A^2 - x^2),
// rho = (omega/pi)/|v| on the support (so each branch is normalized), equal
// weights. Nodes at or beyond the turning points carry zero fields and are
// flagged.
inline MultilayerEnsemble build_oscillator_layers(double E, double m,
                                                  double omega,
                                                  const GridSpec& g) {
    if (!(E > 0) || !(m > 0) || !(omega > 0))
        throw config_error("oscillator layers need positive E, m, omega");
    if (g.dim() != 1)
        throw config_error("oscillator layers are one-dimensional");
    g.validate();
    const double A = std::sqrt(2 * E / (m * omega * omega));
    if (g.axes[0].lo > -A || g.axes[0].hi < A)
        throw config_error("grid must cover the classical support [-A, A]");

    const double K = omega / 3.14159265358979323846;  // normalizes each branch
    MultilayerEnsemble ens;
    for (int branch = 0; branch < 2; ++branch) {
        const double sign = branch == 0 ? 1.0 : -1.0;
        GridField v = GridField::zeros(g, 1, 0.0);
        GridField rho = GridField::zeros(g, 1, 0.0);
        Vec x(1);
        for (std::int64_t i = 0; i < v.nodes(); ++i) {
            g.node_coords(i, x);
            const double arg = A * A - x[0] * x[0];
            if (arg > 0) {
                const double speed = omega * std::sqrt(arg);
                v.at(0, i) = sign * speed;
                rho.at(0, i) = K / speed;
            }
        }
        ens.layers.push_back(make_layer(std::move(rho), std::move(v), 0.5));
    }
    return ens;
}

// Assign every trajectory sample to the layer whose velocity field (linear
// interpolation) is closest to the sample's own velocity.
inline std::vector<int> tag_trajectory_layers(const SystemModel& m,
                                              const Trajectory& tr,
                                              const MultilayerEnsemble& ens) {
    ens.validate();
    const int s = ens.layers[0].v.spec.dim();
    if (s != m.dim) throw config_error("layer grid does not match model");
    std::vector<int> tags;
    tags.reserve(tr.samples.size());
    Vec vs(s);
    for (const auto& st : tr.samples) {
        m.velocity(st.t, st.q, st.p, vs);
        int best = -1;
        double best_d = 0;
        for (std::size_t n = 0; n < ens.layers.size(); ++n) {
            double d2 = 0;
            for (int d = 0; d < s; ++d) {
                const double lv = interp_linear(ens.layers[n].v, d, st.q);
                const double diff = lv - vs[std::size_t(d)];
                d2 += diff * diff;
            }
            if (best < 0 || d2 < best_d) {
                best = int(n);
                best_d = d2;
            }
        }
        tags.push_back(best);
    }
    return tags;
}

// Normalized per-bin occupation of the first coordinate over a trajectory
// (uniform sampling in time is assumed; initial and final samples count
// half).
inline Vec position_histogram(const Trajectory& tr, double lo, double hi,
                              int nbins) {
    if (nbins < 1) throw config_error("histogram needs at least one bin");
    if (!(hi > lo)) throw config_error("histogram range is empty");
    Vec h(std::size_t(nbins), 0.0);
    double total = 0;
    for (std::size_t k = 0; k < tr.samples.size(); ++k) {
        const double w = (k == 0 || k + 1 == tr.samples.size()) ? 0.5 : 1.0;
        const double x = tr.samples[k].q[0];
        if (x < lo || x >= hi) continue;
        const int b = std::min(nbins - 1, int((x - lo) / (hi - lo) * nbins));
        h[std::size_t(b)] += w;
        total += w;
    }
    if (total > 0)
        for (auto& v : h) v /= total;
    return h;
}

}  // namespace hjens
