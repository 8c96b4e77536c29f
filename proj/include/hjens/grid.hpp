#pragma once

// Rectilinear tensor-product grids and node-sampled fields.
//
// Nodes along an axis sit at lo + i*h with h = (hi-lo)/(n-1); node order in
// the flat array is row-major with the LAST axis fastest. On a periodic axis
// the n nodes tile a ring of period n*h (node n-1 wraps to node 0 at
// distance h), which is what makes the upwind density update conserve mass
// exactly. Fields store one contiguous block per component.

#include "common.hpp"

#include <algorithm>
#include <array>
#include <optional>

namespace hjens {

enum class Boundary { periodic, outflow };
enum class Axes { position, momentum };  // which variables the grid spans

struct AxisSpec {
    double lo = 0, hi = 1;
    int n = 3;
    Boundary bc = Boundary::outflow;
    double h() const { return (hi - lo) / (n - 1); }
};

struct GridSpec {
    std::vector<AxisSpec> axes;
    Axes kind = Axes::position;

    int dim() const { return int(axes.size()); }

    void validate() const {
        if (axes.empty()) throw config_error("grid has no axes");
        for (const auto& a : axes) {
            if (a.n < 3)
                throw config_error("grid axis needs at least 3 nodes, got " +
                                   std::to_string(a.n));
            if (!(a.hi > a.lo))
                throw config_error("grid axis has empty extent [" +
                                   std::to_string(a.lo) + "," +
                                   std::to_string(a.hi) + "]");
        }
    }

    std::int64_t node_count() const {
        std::int64_t n = 1;
        for (const auto& a : axes) n *= a.n;
        return n;
    }

    double min_h() const {
        double m = axes[0].h();
        for (const auto& a : axes) m = std::min(m, a.h());
        return m;
    }

    double cell_volume() const {
        double v = 1;
        for (const auto& a : axes) v *= a.h();
        return v;
    }

    // flat index <-> per-axis indices (last axis fastest)
    std::int64_t flat_index(std::span<const int> idx) const {
        std::int64_t f = 0;
        for (int d = 0; d < dim(); ++d) f = f * axes[std::size_t(d)].n + idx[std::size_t(d)];
        return f;
    }

    void unflatten(std::int64_t flat, std::span<int> idx) const {
        for (int d = dim() - 1; d >= 0; --d) {
            int n = axes[std::size_t(d)].n;
            idx[std::size_t(d)] = int(flat % n);
            flat /= n;
        }
    }

    void node_coords(std::int64_t flat, MutSpan x) const {
        for (int d = dim() - 1; d >= 0; --d) {
            const auto& a = axes[std::size_t(d)];
            x[std::size_t(d)] = a.lo + double(flat % a.n) * a.h();
            flat /= a.n;
        }
    }

    bool same_layout(const GridSpec& o) const {
        if (dim() != o.dim() || kind != o.kind) return false;
        for (int d = 0; d < dim(); ++d) {
            const auto &a = axes[std::size_t(d)], &b = o.axes[std::size_t(d)];
            if (a.n != b.n || a.lo != b.lo || a.hi != b.hi || a.bc != b.bc)
                return false;
        }
        return true;
    }

    // true when x lies inside the closed box (periodic axes always pass)
    bool contains(ConstSpan x) const {
        for (int d = 0; d < dim(); ++d) {
            const auto& a = axes[std::size_t(d)];
            if (a.bc == Boundary::periodic) continue;
            if (x[std::size_t(d)] < a.lo || x[std::size_t(d)] > a.hi) return false;
        }
        return true;
    }
};

struct GridField {
    GridSpec spec;
    int components = 1;
    double t = 0;
    Vec data;  // data[c*N + node]

    static GridField zeros(const GridSpec& spec, int components, double t = 0) {
        spec.validate();
        if (components < 1) throw config_error("field needs >= 1 component");
        GridField f;
        f.spec = spec;
        f.components = components;
        f.t = t;
        f.data.assign(std::size_t(components) * std::size_t(spec.node_count()), 0.0);
        return f;
    }

    std::int64_t nodes() const { return spec.node_count(); }
    double& at(int c, std::int64_t node) {
        return data[std::size_t(c) * std::size_t(nodes()) + std::size_t(node)];
    }
    double at(int c, std::int64_t node) const {
        return data[std::size_t(c) * std::size_t(nodes()) + std::size_t(node)];
    }
    MutSpan component(int c) {
        return MutSpan(data).subspan(std::size_t(c) * std::size_t(nodes()),
                                     std::size_t(nodes()));
    }
    ConstSpan component(int c) const {
        return ConstSpan(data).subspan(std::size_t(c) * std::size_t(nodes()),
                                       std::size_t(nodes()));
    }
};

// Fill a scalar/vector field by evaluating fn(coords) at every node.
template <class F>
GridField sample_field(const GridSpec& spec, int components, double t, F&& fn) {
    GridField f = GridField::zeros(spec, components, t);
    const int s = spec.dim();
    Vec x(s);
    Vec out(components);
    for (std::int64_t i = 0; i < f.nodes(); ++i) {
        spec.node_coords(i, x);
        fn(ConstSpan(x), MutSpan(out));
        for (int c = 0; c < components; ++c) f.at(c, i) = out[std::size_t(c)];
    }
    return f;
}

namespace detail {

// Per-axis interpolation stencil: node indices (already wrapped/clamped) and
// Lagrange weights.
struct AxisStencil {
    std::array<int, 4> idx{};
    std::array<double, 4> w{};
    int count = 0;
};

inline int wrap_index(int i, int n) {
    int r = i % n;
    return r < 0 ? r + n : r;
}

inline AxisStencil linear_stencil(const AxisSpec& a, double x) {
    AxisStencil st;
    double u = (x - a.lo) / a.h();
    int base;
    if (a.bc == Boundary::periodic) {
        base = int(std::floor(u));
        double f = u - base;
        st.idx = {wrap_index(base, a.n), wrap_index(base + 1, a.n), 0, 0};
        st.w = {1 - f, f, 0, 0};
    } else {
        base = std::clamp(int(std::floor(u)), 0, a.n - 2);
        double f = u - base;  // may leave [0,1]: linear extrapolation
        st.idx = {base, base + 1, 0, 0};
        st.w = {1 - f, f, 0, 0};
    }
    st.count = 2;
    return st;
}

// Cubic Lagrange on nodes {base-1, base, base+1, base+2}; falls back to the
// full quadratic when the axis only has 3 nodes.
inline AxisStencil cubic_stencil(const AxisSpec& a, double x) {
    AxisStencil st;
    double u = (x - a.lo) / a.h();
    if (a.n == 3 && a.bc == Boundary::outflow) {
        double p = u;  // local coordinate over nodes 0,1,2
        st.idx = {0, 1, 2, 0};
        st.w = {(p - 1) * (p - 2) / 2, -p * (p - 2), p * (p - 1) / 2, 0};
        st.count = 3;
        return st;
    }
    int base;
    double f;
    if (a.bc == Boundary::periodic) {
        base = int(std::floor(u));
        f = u - base;
        for (int k = 0; k < 4; ++k) st.idx[std::size_t(k)] = wrap_index(base - 1 + k, a.n);
    } else {
        base = std::clamp(int(std::floor(u)), 1, a.n - 3);
        f = u - base;  // outside [0,1] near the ends: one-sided evaluation
        for (int k = 0; k < 4; ++k) st.idx[std::size_t(k)] = base - 1 + k;
    }
    st.w = {-f * (f - 1) * (f - 2) / 6, (f + 1) * (f - 1) * (f - 2) / 2,
            -(f + 1) * f * (f - 2) / 2, (f + 1) * f * (f - 1) / 6};
    st.count = 4;
    return st;
}

template <class StencilFn>
double interp_impl(const GridField& f, int c, ConstSpan x, StencilFn&& make) {
    const int s = f.spec.dim();
    std::array<AxisStencil, 8> st;
    if (s > 8) throw config_error("interpolation supports up to 8 axes");
    for (int d = 0; d < s; ++d)
        st[std::size_t(d)] = make(f.spec.axes[std::size_t(d)], x[std::size_t(d)]);

    // odometer over the tensor product of axis stencils
    std::array<int, 8> k{};
    double acc = 0;
    for (;;) {
        double w = 1;
        std::int64_t flat = 0;
        for (int d = 0; d < s; ++d) {
            const auto& a = st[std::size_t(d)];
            w *= a.w[std::size_t(k[std::size_t(d)])];
            flat = flat * f.spec.axes[std::size_t(d)].n + a.idx[std::size_t(k[std::size_t(d)])];
        }
        acc += w * f.at(c, flat);
        int d = s - 1;
        while (d >= 0 && ++k[std::size_t(d)] == st[std::size_t(d)].count) {
            k[std::size_t(d)] = 0;
            --d;
        }
        if (d < 0) break;
    }
    return acc;
}

}  // namespace detail

inline double interp_linear(const GridField& f, int c, ConstSpan x) {
    return detail::interp_impl(f, c, x, detail::linear_stencil);
}

inline double interp_cubic(const GridField& f, int c, ConstSpan x) {
    return detail::interp_impl(f, c, x, detail::cubic_stencil);
}

// Central-difference gradient of component c; one-sided second-order stencils
// at outflow boundaries, wrap-around on periodic axes. Returns a vector field
// with spec.dim() components.
inline GridField gradient_field(const GridField& f, int c = 0) {
    const GridSpec& g = f.spec;
    const int s = g.dim();
    GridField out = GridField::zeros(g, s, f.t);
    std::vector<int> idx(s);
    // stride of axis d in the flat index
    std::vector<std::int64_t> stride(s, 1);
    for (int d = s - 2; d >= 0; --d)
        stride[std::size_t(d)] = stride[std::size_t(d + 1)] * g.axes[std::size_t(d + 1)].n;

    for (std::int64_t i = 0; i < f.nodes(); ++i) {
        g.unflatten(i, idx);
        for (int d = 0; d < s; ++d) {
            const auto& a = g.axes[std::size_t(d)];
            const double h = a.h();
            const int id = idx[std::size_t(d)];
            double v;
            if (a.bc == Boundary::periodic) {
                std::int64_t ip = i + (id + 1 == a.n ? -(std::int64_t(a.n) - 1) : 1) * stride[std::size_t(d)];
                std::int64_t im = i + (id == 0 ? (std::int64_t(a.n) - 1) : -1) * stride[std::size_t(d)];
                v = (f.at(c, ip) - f.at(c, im)) / (2 * h);
            } else if (id == 0) {
                v = (-3 * f.at(c, i) + 4 * f.at(c, i + stride[std::size_t(d)]) -
                     f.at(c, i + 2 * stride[std::size_t(d)])) /
                    (2 * h);
            } else if (id == a.n - 1) {
                v = (3 * f.at(c, i) - 4 * f.at(c, i - stride[std::size_t(d)]) +
                     f.at(c, i - 2 * stride[std::size_t(d)])) /
                    (2 * h);
            } else {
                v = (f.at(c, i + stride[std::size_t(d)]) -
                     f.at(c, i - stride[std::size_t(d)])) /
                    (2 * h);
            }
            out.at(d, i) = v;
        }
    }
    return out;
}

inline double max_abs(const GridField& f) {
    double m = 0;
    for (double v : f.data) m = std::max(m, std::fabs(v));
    return m;
}

// A time-ordered sequence of scalar action snapshots on one grid.
struct ActionField {
    std::vector<GridField> snapshots;

    void validate() const {
        if (snapshots.empty()) throw config_error("action field has no snapshots");
        for (std::size_t i = 0; i < snapshots.size(); ++i) {
            if (snapshots[i].components != 1)
                throw config_error("action snapshots must be scalar");
            if (i && !(snapshots[i].t > snapshots[i - 1].t))
                throw config_error("action snapshots must be strictly ordered in t");
            if (i && !snapshots[i].spec.same_layout(snapshots[0].spec))
                throw config_error("action snapshots must share one grid");
        }
    }
    double t_front() const { return snapshots.front().t; }
    double t_back() const { return snapshots.back().t; }
};

}  // namespace hjens
