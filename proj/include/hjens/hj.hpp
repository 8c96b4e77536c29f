#pragma once

// Hamilton-Jacobi machinery in the coordinate representation:
//
//   dS/dt + H(t, q, grad S) = 0
//
// plus the damped variant dS/dt + |grad S|^2/(2m) + (beta/m) S + U = 0,
// residual evaluation from either snapshot pairs (finite differences, second
// order in dt and h) or closed-form actions with exact symbolic partials,
// a characteristics-based solver that rebuilds S on the grid by moving-least-
// squares scatter, and trajectory recovery from a complete integral.

#include "eulerian.hpp"
#include "expr.hpp"

#include <map>
#include <optional>

namespace hjens {

// Closed-form action with exact partial derivatives, built from one
// expression over (t, q1..qs).
struct SymbolicAction {
    int dim = 1;
    Expr S;
    Expr dS_dt;
    std::vector<Expr> dS_dq;

    static SymbolicAction from_expr(const Expr& e, int s) {
        SymbolicAction a;
        a.dim = s;
        a.S = e;
        a.dS_dt = e.derivative(0);  // slot 0 is t
        for (int d = 0; d < s; ++d) a.dS_dq.push_back(e.derivative(1 + d));
        return a;
    }
    static SymbolicAction parse(const std::string& text, int s) {
        VarTable vars = VarTable::time_position(s);
        return from_expr(parse_expression(text, vars), s);
    }

    double value(double t, ConstSpan q) const { return eval(S, t, q); }
    double dt(double t, ConstSpan q) const { return eval(dS_dt, t, q); }
    void grad(double t, ConstSpan q, MutSpan out) const {
        for (int d = 0; d < dim; ++d) out[std::size_t(d)] = eval(dS_dq[std::size_t(d)], t, q);
    }

private:
    double eval(const Expr& e, double t, ConstSpan q) const {
        Vec vals(std::size_t(dim) + 1);
        vals[0] = t;
        for (int d = 0; d < dim; ++d) vals[std::size_t(d) + 1] = q[std::size_t(d)];
        return e.eval(vals);
    }
};

// grad S as a vector field (central differences).
inline GridField momentum_from_action(const GridField& S) {
    if (S.components != 1) throw config_error("action must be a scalar field");
    return gradient_field(S);
}

namespace detail {

// q must sit at least one cell inside every outflow axis so the centered
// stencils around it are usable.
inline void require_interior(const GridSpec& g, ConstSpan q) {
    for (int d = 0; d < g.dim(); ++d) {
        const auto& a = g.axes[std::size_t(d)];
        if (a.bc == Boundary::periodic) continue;
        if (q[std::size_t(d)] < a.lo + a.h() || q[std::size_t(d)] > a.hi - a.h())
            throw config_error(
                "residual point is outside the interior stencil region on axis " +
                std::to_string(d + 1));
    }
}

inline void check_snapshot_pair(const GridField& S0, const GridField& S1) {
    if (S0.components != 1 || S1.components != 1)
        throw config_error("action snapshots must be scalar");
    if (!S0.spec.same_layout(S1.spec))
        throw config_error("action snapshots must share one grid");
    if (!(S1.t > S0.t)) throw config_error("snapshots must be ordered in t");
}

}  // namespace detail

// Residual of dS/dt + H(t,q,grad S) = 0 from a snapshot pair, evaluated at
// the midpoint time: dS/dt by the centered difference of the pair, grad S by
// central differences of the snapshot average. Second order in dt and h.
inline double hj_residual(const SystemModel& m, const GridField& S0,
                          const GridField& S1, ConstSpan q) {
    detail::check_snapshot_pair(S0, S1);
    if (!m.has_hamiltonian())
        throw config_error("hj residual needs a Hamiltonian model");
    detail::require_interior(S0.spec, q);
    const double dt = S1.t - S0.t;
    const double tm = 0.5 * (S0.t + S1.t);
    const double st = (interp_cubic(S1, 0, q) - interp_cubic(S0, 0, q)) / dt;

    GridField Sm = S0;
    for (std::size_t i = 0; i < Sm.data.size(); ++i)
        Sm.data[i] = 0.5 * (S0.data[i] + S1.data[i]);
    GridField gr = gradient_field(Sm);
    Vec p(std::size_t(m.dim));
    for (int d = 0; d < m.dim; ++d) p[std::size_t(d)] = interp_cubic(gr, d, q);
    return st + m.hamiltonian(tm, q, p);
}

// Same residual with an exact symbolic action: no discretization error.
inline double hj_residual(const SystemModel& m, const SymbolicAction& S,
                          double t, ConstSpan q) {
    if (!m.has_hamiltonian())
        throw config_error("hj residual needs a Hamiltonian model");
    if (S.dim != m.dim) throw config_error("action dimension does not match model");
    Vec p(std::size_t(S.dim));
    S.grad(t, q, p);
    return S.dt(t, q) + m.hamiltonian(t, q, p);
}

// Residual of the damped equation dS/dt + |grad S|^2/(2m) + (beta/m) S + U.
// This form is gauge-sensitive: S + k exp(-beta t / m) solves it whenever S
// does, so only gauge-fixed actions are comparable.
inline double hj_damped_residual(double m_mass, double beta, const PotentialFn& U,
                                 const GridField& S0, const GridField& S1,
                                 ConstSpan q) {
    detail::check_snapshot_pair(S0, S1);
    detail::require_interior(S0.spec, q);
    const double dt = S1.t - S0.t;
    const double tm = 0.5 * (S0.t + S1.t);
    const double st = (interp_cubic(S1, 0, q) - interp_cubic(S0, 0, q)) / dt;
    GridField Sm = S0;
    for (std::size_t i = 0; i < Sm.data.size(); ++i)
        Sm.data[i] = 0.5 * (S0.data[i] + S1.data[i]);
    GridField gr = gradient_field(Sm);
    double k = 0;
    for (int d = 0; d < Sm.spec.dim(); ++d) {
        const double g = interp_cubic(gr, d, q);
        k += g * g;
    }
    const double sval = interp_cubic(Sm, 0, q);
    return st + k / (2 * m_mass) + (beta / m_mass) * sval + U(tm, q);
}

inline double hj_damped_residual(double m_mass, double beta, const PotentialFn& U,
                                 const SymbolicAction& S, double t, ConstSpan q) {
    Vec g(std::size_t(S.dim));
    S.grad(t, q, g);
    double k = 0;
    for (double v : g) k += v * v;
    return S.dt(t, q) + k / (2 * m_mass) + (beta / m_mass) * S.value(t, q) +
           U(t, q);
}

// Max |residual| over all interior nodes of a snapshot pair.
inline double hj_residual_max_interior(const SystemModel& m, const GridField& S0,
                                       const GridField& S1) {
    detail::check_snapshot_pair(S0, S1);
    if (!m.has_hamiltonian())
        throw config_error("hj residual needs a Hamiltonian model");
    const GridSpec& g = S0.spec;
    const int s = g.dim();
    const double dt = S1.t - S0.t;
    const double tm = 0.5 * (S0.t + S1.t);
    GridField Sm = S0;
    for (std::size_t i = 0; i < Sm.data.size(); ++i)
        Sm.data[i] = 0.5 * (S0.data[i] + S1.data[i]);
    GridField gr = gradient_field(Sm);
    std::vector<int> idx(s);
    Vec x(s), p(s);
    double worst = 0;
    for (std::int64_t i = 0; i < S0.nodes(); ++i) {
        g.unflatten(i, idx);
        bool interior = true;
        for (int d = 0; d < s; ++d) {
            const auto& a = g.axes[std::size_t(d)];
            if (a.bc == Boundary::outflow &&
                (idx[std::size_t(d)] == 0 || idx[std::size_t(d)] == a.n - 1))
                interior = false;
        }
        if (!interior) continue;
        g.node_coords(i, x);
        const double st = (S1.at(0, i) - S0.at(0, i)) / dt;
        for (int d = 0; d < s; ++d) p[std::size_t(d)] = gr.at(d, i);
        worst = std::max(worst, std::fabs(st + m.hamiltonian(tm, x, p)));
    }
    return worst;
}

// ---- moving least squares scatter ---------------------------------------

namespace detail {

// Quadratic-basis MLS fit of scattered values, evaluated at grid nodes.
// Wendland C2 weight on an adaptive radius: start near two cells and grow
// until enough neighbours support the basis. Too-sparse neighbourhoods are a
// coverage error.
class MlsScatter {
public:
    MlsScatter(const GridSpec& g, const std::vector<Vec>& pts, const Vec& vals)
        : grid_(g), pts_(pts), vals_(vals) {
        const int s = g.dim();
        nbasis_ = 1 + s + s * (s + 1) / 2;
        build_buckets();
    }

    double at_node(std::int64_t node) const {
        const int s = grid_.dim();
        Vec x(s);
        grid_.node_coords(node, x);
        const double h = grid_.min_h();
        double radius = 2.2 * h;
        for (int attempt = 0; attempt < 7; ++attempt, radius *= 1.6) {
            std::vector<int> nbr = neighbours(x, radius);
            if (int(nbr.size()) < nbasis_ + 1) continue;
            double fit;
            if (solve(x, nbr, radius, fit)) return fit;
        }
        throw coverage_error(
            "scattered characteristics too sparse near node " +
            std::to_string(node) + " for the quadratic fit");
    }

private:
    void build_buckets() {
        const int s = grid_.dim();
        // hash points into grid-aligned buckets of width ~2h for fast range query
        bw_ = 2.0 * grid_.min_h();
        lo_.resize(s);
        dims_.resize(s);
        for (int d = 0; d < s; ++d) {
            double lo = grid_.axes[std::size_t(d)].lo, hi = grid_.axes[std::size_t(d)].hi;
            // points can stray outside the box; pad generously
            double pad = 0.5 * (hi - lo) + 4 * bw_;
            lo_[std::size_t(d)] = lo - pad;
            dims_[std::size_t(d)] = std::max<std::int64_t>(
                1, std::int64_t((hi + pad - lo_[std::size_t(d)]) / bw_) + 1);
        }
        buckets_.clear();
        for (std::size_t k = 0; k < pts_.size(); ++k)
            buckets_[bucket_of(pts_[k])].push_back(int(k));
    }

    std::int64_t bucket_of(ConstSpan x) const {
        const int s = grid_.dim();
        std::int64_t b = 0;
        for (int d = 0; d < s; ++d) {
            std::int64_t i = std::int64_t((x[std::size_t(d)] - lo_[std::size_t(d)]) / bw_);
            i = std::clamp<std::int64_t>(i, 0, dims_[std::size_t(d)] - 1);
            b = b * dims_[std::size_t(d)] + i;
        }
        return b;
    }

    std::vector<int> neighbours(ConstSpan x, double radius) const {
        const int s = grid_.dim();
        const int reach = int(radius / bw_) + 1;
        std::vector<int> out;
        std::vector<std::int64_t> base(s), it(s);
        for (int d = 0; d < s; ++d)
            base[std::size_t(d)] = std::int64_t((x[std::size_t(d)] - lo_[std::size_t(d)]) / bw_);
        // odometer over the bucket neighbourhood
        std::vector<int> k(s, -reach);
        for (;;) {
            bool ok = true;
            std::int64_t b = 0;
            for (int d = 0; d < s; ++d) {
                std::int64_t i = base[std::size_t(d)] + k[std::size_t(d)];
                if (i < 0 || i >= dims_[std::size_t(d)]) { ok = false; break; }
                b = b * dims_[std::size_t(d)] + i;
            }
            if (ok) {
                auto itb = buckets_.find(b);
                if (itb != buckets_.end())
                    for (int pk : itb->second) {
                        double r2 = 0;
                        for (int d = 0; d < s; ++d) {
                            double dd = pts_[std::size_t(pk)][std::size_t(d)] - x[std::size_t(d)];
                            r2 += dd * dd;
                        }
                        if (r2 <= radius * radius) out.push_back(pk);
                    }
            }
            int d = s - 1;
            while (d >= 0 && ++k[std::size_t(d)] > reach) {
                k[std::size_t(d)] = -reach;
                --d;
            }
            if (d < 0) break;
        }
        return out;
    }

    bool solve(ConstSpan x, const std::vector<int>& nbr, double radius,
               double& fit) const {
        const int s = grid_.dim();
        const int nb = nbasis_;
        const double h = grid_.min_h();
        std::vector<double> A(std::size_t(nb) * std::size_t(nb), 0.0);
        std::vector<double> rhs(nb, 0.0);
        Vec basis(nb);
        for (int pk : nbr) {
            double r2 = 0;
            for (int d = 0; d < s; ++d) {
                double dd = pts_[std::size_t(pk)][std::size_t(d)] - x[std::size_t(d)];
                r2 += dd * dd;
            }
            const double r = std::sqrt(r2) / radius;
            const double u = std::max(0.0, 1.0 - r);
            const double w = u * u * u * u * (1 + 4 * r);  // Wendland C2
            if (w <= 0) continue;
            // scaled local coordinates keep the normal matrix well conditioned
            int b = 0;
            basis[std::size_t(b++)] = 1;
            for (int d = 0; d < s; ++d)
                basis[std::size_t(b++)] = (pts_[std::size_t(pk)][std::size_t(d)] - x[std::size_t(d)]) / h;
            for (int d = 0; d < s; ++d)
                for (int e = d; e < s; ++e)
                    basis[std::size_t(b++)] =
                        (pts_[std::size_t(pk)][std::size_t(d)] - x[std::size_t(d)]) / h *
                        (pts_[std::size_t(pk)][std::size_t(e)] - x[std::size_t(e)]) / h;
            for (int i = 0; i < nb; ++i) {
                for (int j = 0; j < nb; ++j)
                    A[std::size_t(i) * std::size_t(nb) + std::size_t(j)] +=
                        w * basis[std::size_t(i)] * basis[std::size_t(j)];
                rhs[std::size_t(i)] += w * basis[std::size_t(i)] * vals_[std::size_t(pk)];
            }
        }
        if (!solve_linear(A, rhs, nb)) return false;
        fit = rhs[0];  // basis is centered on x
        return all_finite(rhs);
    }

    const GridSpec& grid_;
    const std::vector<Vec>& pts_;
    const Vec& vals_;
    int nbasis_;
    double bw_ = 1;
    Vec lo_;
    std::vector<std::int64_t> dims_;
    std::map<std::int64_t, std::vector<int>> buckets_;
};

}  // namespace detail

// Rebuild a node-sampled field from scattered point values by quadratic
// moving least squares.
inline GridField scatter_to_grid(const GridSpec& g, const std::vector<Vec>& points,
                                 const Vec& values, double t) {
    g.validate();
    if (points.size() != values.size())
        throw config_error("scatter points and values differ in count");
    if (points.size() < 3) throw coverage_error("too few scattered points");
    detail::MlsScatter mls(g, points, values);
    GridField out = GridField::zeros(g, 1, t);
    for (std::int64_t i = 0; i < out.nodes(); ++i) out.at(0, i) = mls.at_node(i);
    return out;
}

struct HjSolveOptions {
    double dt = 1e-3;
    double t_end = 1.0;
    int cadence = 10;          // snapshot every n steps
    double det_floor = 1e-6;   // caustic guard on the bundle determinant
};

// Solve the HJ equation by characteristics: launch one system per grid node
// with p0 = grad S0, transport dS/dt = p . dH/dp - H along each path, and
// scatter S back to the grid at snapshot times. Stops with caustic_error at
// the first flow-map fold (there is no single-valued continuation past it).
inline ActionField solve_hj_characteristics(const SystemModel& m,
                                            const GridField& S0,
                                            const HjSolveOptions& opt = {}) {
    if (!m.has_hamiltonian())
        throw config_error("characteristics need a Hamiltonian model");
    if (S0.components != 1) throw config_error("initial action must be scalar");
    if (S0.spec.dim() != m.dim)
        throw config_error("field dimension does not match model");
    if (!(opt.dt > 0)) throw config_error("dt must be positive");
    if (!(opt.t_end > S0.t)) throw config_error("t_end must exceed the initial time");

    const GridSpec& g = S0.spec;
    const int s = g.dim();
    const std::int64_t N = g.node_count();

    GridField p0 = momentum_from_action(S0);
    auto states = detail::seed_states(g, p0);
    Vec action(static_cast<std::size_t>(N));
    for (std::int64_t i = 0; i < N; ++i) action[std::size_t(i)] = S0.at(0, i);

    ActionField out;
    out.snapshots.push_back(S0);

    detail::Rk4Work w(s);
    Vec dets, dets0;
    detail::flow_map_dets(g, states, dets0);

    double t = S0.t;
    long step = 0;
    Vec vel(s);
    while (t < opt.t_end - 1e-14) {
        const double h = std::min(opt.dt, opt.t_end - t);
        for (std::int64_t i = 0; i < N; ++i) {
            PhaseState& st = states[std::size_t(i)];
            // transport the action with the same RK4 stages as the state:
            // dS/dt = p . dH/dp - H along the characteristic
            auto lagrangian = [&](const PhaseState& ps) {
                m.velocity(ps.t, ps.q, ps.p, vel);
                double acc = 0;
                for (int d = 0; d < s; ++d) acc += ps.p[std::size_t(d)] * vel[std::size_t(d)];
                return acc - m.hamiltonian(ps.t, ps.q, ps.p);
            };
            PhaseState a = st;
            const double k1 = lagrangian(a);
            detail::rk4_step(m, a, 0.5 * h, w);
            const double k2 = lagrangian(a);
            PhaseState b = st;
            detail::rk4_step(m, b, h, w);
            const double k4 = lagrangian(b);
            // Simpson blend over the step using start/half/full stage values
            action[std::size_t(i)] += h / 6 * (k1 + 4 * k2 + k4);
            detail::rk4_step(m, st, h, w);
        }
        t += h;
        ++step;

        detail::flow_map_dets(g, states, dets);
        for (std::int64_t i = 0; i < N; ++i)
            if (dets[std::size_t(i)] * dets0[std::size_t(i)] <= 0 ||
                std::fabs(dets[std::size_t(i)]) <
                    opt.det_floor * std::fabs(dets0[std::size_t(i)]))
                throw caustic_error(t);

        if (step % opt.cadence == 0 || !(t < opt.t_end - 1e-14)) {
            std::vector<Vec> pts(static_cast<std::size_t>(N));
            for (std::int64_t i = 0; i < N; ++i) pts[std::size_t(i)] = states[std::size_t(i)].q;
            GridField snap = scatter_to_grid(g, pts, action, t);
            out.snapshots.push_back(std::move(snap));
        }
    }
    if (out.snapshots.size() > 1) out.snapshots.back().t = opt.t_end;
    return out;
}

// ---- complete integrals and the trajectory theorem -----------------------

// A complete integral Phi(t, x; beta) with one constant per axis. x is the
// coordinate vector in the coordinate representation and the momentum vector
// in the momentum representation.
struct CompleteIntegral {
    int dim = 1;
    Axes representation = Axes::position;
    std::function<double(double t, ConstSpan x, ConstSpan beta)> Phi;
    // optional analytic partials; finite differences fill in when absent
    std::function<void(double, ConstSpan, ConstSpan, MutSpan)> dPhi_dbeta;
    std::function<void(double, ConstSpan, ConstSpan, MutSpan)> dPhi_dx;
    double fd_step = 1e-6;
};

namespace detail {

inline void ci_dbeta(const CompleteIntegral& ci, double t, ConstSpan x,
                     ConstSpan beta, MutSpan out) {
    if (ci.dPhi_dbeta) {
        ci.dPhi_dbeta(t, x, beta, out);
        return;
    }
    Vec b(beta.begin(), beta.end());
    for (int i = 0; i < ci.dim; ++i) {
        const double h = ci.fd_step * std::max(1.0, std::fabs(b[std::size_t(i)]));
        const double b0 = b[std::size_t(i)];
        b[std::size_t(i)] = b0 + h;
        const double fp = ci.Phi(t, x, b);
        b[std::size_t(i)] = b0 - h;
        const double fm = ci.Phi(t, x, b);
        b[std::size_t(i)] = b0;
        out[std::size_t(i)] = (fp - fm) / (2 * h);
    }
}

inline void ci_dx(const CompleteIntegral& ci, double t, ConstSpan x,
                  ConstSpan beta, MutSpan out) {
    if (ci.dPhi_dx) {
        ci.dPhi_dx(t, x, beta, out);
        return;
    }
    Vec xx(x.begin(), x.end());
    for (int i = 0; i < ci.dim; ++i) {
        const double h = ci.fd_step * std::max(1.0, std::fabs(xx[std::size_t(i)]));
        const double x0 = xx[std::size_t(i)];
        xx[std::size_t(i)] = x0 + h;
        const double fp = ci.Phi(t, xx, beta);
        xx[std::size_t(i)] = x0 - h;
        const double fm = ci.Phi(t, xx, beta);
        xx[std::size_t(i)] = x0;
        out[std::size_t(i)] = (fp - fm) / (2 * h);
    }
}

// Damped Newton solve of dPhi/dbeta(t, x; beta) = alpha for x. Jacobian by
// finite differences of the beta-gradient; step halving up to 8 times; at
// most 50 iterations. Near-singular Jacobians raise degeneracy_error.
inline Vec ci_solve_point(const CompleteIntegral& ci, double t, ConstSpan beta,
                          ConstSpan alpha, ConstSpan seed) {
    const int n = ci.dim;
    Vec x(seed.begin(), seed.end());
    Vec r(n), rtry(n), xt(n);
    auto residual = [&](ConstSpan xx, MutSpan out) {
        ci_dbeta(ci, t, xx, beta, out);
        for (int i = 0; i < n; ++i) out[std::size_t(i)] -= alpha[std::size_t(i)];
    };
    residual(x, r);
    double rn = sup_norm(r);
    // FD partials carry cancellation noise ~eps/h, so the reachable floor
    // depends on how the beta-gradient is computed
    const double tol =
        (ci.dPhi_dbeta ? 1e-12 : 1e-9) * std::max(1.0, sup_norm(alpha));
    for (int iter = 0; iter < 50; ++iter) {
        // Jacobian J[i][j] = d r_i / d x_j
        std::vector<double> J(std::size_t(n) * std::size_t(n));
        Vec rp(n), rm(n);
        double row_scale = 1;
        for (int j = 0; j < n; ++j) {
            const double h = ci.fd_step * std::max(1.0, std::fabs(x[std::size_t(j)]));
            const double x0 = x[std::size_t(j)];
            x[std::size_t(j)] = x0 + h;
            residual(x, rp);
            x[std::size_t(j)] = x0 - h;
            residual(x, rm);
            x[std::size_t(j)] = x0;
            for (int i = 0; i < n; ++i)
                J[std::size_t(i) * std::size_t(n) + std::size_t(j)] =
                    (rp[std::size_t(i)] - rm[std::size_t(i)]) / (2 * h);
        }
        std::vector<double> Jc = J;
        double det = determinant(Jc, n);
        for (int i = 0; i < n; ++i) {
            double rown = 0;
            for (int j = 0; j < n; ++j)
                rown = std::max(rown, std::fabs(J[std::size_t(i) * std::size_t(n) + std::size_t(j)]));
            row_scale *= std::max(rown, 1e-30);
        }
        if (std::fabs(det) < 1e-6 * row_scale)
            throw degeneracy_error(
                "complete-integral sensitivity matrix is singular near t=" +
                std::to_string(t) + " (|det| " + std::to_string(std::fabs(det)) +
                " vs scale " + std::to_string(row_scale) + ")");
        // only trust a converged residual once the sensitivity matrix has
        // passed the check above; a degenerate family can satisfy the
        // equations at any point
        if (rn <= tol) return x;
        Vec step(r.begin(), r.end());
        std::vector<double> Js = J;
        if (!solve_linear(Js, step, n))
            throw degeneracy_error("Newton linear solve failed at t=" + std::to_string(t));
        double lambda = 1;
        bool improved = false;
        for (int halvings = 0; halvings <= 8; ++halvings, lambda *= 0.5) {
            for (int i = 0; i < n; ++i)
                xt[std::size_t(i)] = x[std::size_t(i)] - lambda * step[std::size_t(i)];
            residual(xt, rtry);
            if (sup_norm(rtry) < rn) {
                improved = true;
                break;
            }
        }
        // stagnation just above tol means we hit the derivative noise floor
        if (!improved && rn <= 1e3 * tol) return x;
        x = xt;
        r = rtry;
        rn = sup_norm(r);
    }
    if (rn > tol)
        throw numeric_error("Newton failed to converge at t=" + std::to_string(t) +
                            " (residual " + std::to_string(rn) + ")");
    return x;
}

}  // namespace detail

// Trajectory recovery from a coordinate-representation complete integral:
// solve dPhi/dbeta = alpha for q at each requested time (seeded from the
// previous solution), then read p = dPhi/dq.
inline Trajectory jacobi_recover_q(const CompleteIntegral& ci, ConstSpan beta,
                                   ConstSpan alpha, ConstSpan t_grid,
                                   ConstSpan q_seed) {
    if (ci.representation != Axes::position)
        throw config_error("jacobi_recover_q needs a coordinate-representation integral");
    if (int(beta.size()) != ci.dim || int(alpha.size()) != ci.dim ||
        int(q_seed.size()) != ci.dim)
        throw config_error("constant vectors must match the integral dimension");
    if (t_grid.empty()) throw config_error("empty time grid");
    Trajectory tr;
    tr.model_name = "jacobi_q";
    Vec seed(q_seed.begin(), q_seed.end());
    for (double t : t_grid) {
        Vec q = detail::ci_solve_point(ci, t, beta, alpha, seed);
        PhaseState st;
        st.t = t;
        st.q = q;
        st.p.resize(ci.dim);
        detail::ci_dx(ci, t, q, beta, st.p);
        tr.samples.push_back(st);
        seed = q;
    }
    return tr;
}

}  // namespace hjens
