#pragma once

// Trajectory-level integration: fixed-step RK4 (any model) and velocity
// Verlet / leapfrog (separable Hamiltonian models only), ensembles of
// identical systems, flow-map Jacobians and first-caustic detection, and
// reconstruction of trajectories from a stored action field.

#include "grid.hpp"
#include "model.hpp"

#include <optional>

namespace hjens {

enum class Method { rk4, symplectic_leapfrog };

inline Method parse_method(const std::string& s) {
    if (s == "rk4") return Method::rk4;
    if (s == "symplectic_leapfrog" || s == "leapfrog")
        return Method::symplectic_leapfrog;
    throw config_error("unknown integration method '" + s + "'");
}

struct Trajectory {
    std::string model_name;
    std::vector<PhaseState> samples;  // strictly increasing t, uniform cadence
};

// Identically-prepared systems observed at a common time; weights are the
// ensemble mixing weights supplied by the caller (they are data, not derived).
struct EnsembleCloud {
    std::vector<PhaseState> states;
    Vec weights;

    void validate() const {
        if (states.empty()) throw config_error("ensemble is empty");
        if (!weights.empty() && weights.size() != states.size())
            throw config_error("ensemble weights do not match member count");
        if (!weights.empty()) {
            double sum = 0;
            for (double w : weights) {
                if (!(w >= 0)) throw config_error("ensemble weights must be non-negative");
                sum += w;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw config_error("ensemble weights must sum to one");
        }
        for (const auto& s : states)
            if (s.t != states[0].t)
                throw config_error("ensemble members must share one time");
    }
};

namespace detail {

struct Rk4Work {
    Vec kq1, kp1, kq2, kp2, kq3, kp3, kq4, kp4, qt, pt;
    explicit Rk4Work(int s)
        : kq1(std::size_t(s)), kp1(std::size_t(s)), kq2(std::size_t(s)), kp2(std::size_t(s)),
          kq3(std::size_t(s)), kp3(std::size_t(s)), kq4(std::size_t(s)), kp4(std::size_t(s)),
          qt(std::size_t(s)), pt(std::size_t(s)) {}
};

inline void rk4_step(const SystemModel& m, PhaseState& st, double dt, Rk4Work& w) {
    const int s = m.dim;
    const double t = st.t;
    m.velocity(t, st.q, st.p, w.kq1);
    m.force(t, st.q, st.p, w.kp1);
    for (int d = 0; d < s; ++d) {
        w.qt[std::size_t(d)] = st.q[std::size_t(d)] + 0.5 * dt * w.kq1[std::size_t(d)];
        w.pt[std::size_t(d)] = st.p[std::size_t(d)] + 0.5 * dt * w.kp1[std::size_t(d)];
    }
    m.velocity(t + 0.5 * dt, w.qt, w.pt, w.kq2);
    m.force(t + 0.5 * dt, w.qt, w.pt, w.kp2);
    for (int d = 0; d < s; ++d) {
        w.qt[std::size_t(d)] = st.q[std::size_t(d)] + 0.5 * dt * w.kq2[std::size_t(d)];
        w.pt[std::size_t(d)] = st.p[std::size_t(d)] + 0.5 * dt * w.kp2[std::size_t(d)];
    }
    m.velocity(t + 0.5 * dt, w.qt, w.pt, w.kq3);
    m.force(t + 0.5 * dt, w.qt, w.pt, w.kp3);
    for (int d = 0; d < s; ++d) {
        w.qt[std::size_t(d)] = st.q[std::size_t(d)] + dt * w.kq3[std::size_t(d)];
        w.pt[std::size_t(d)] = st.p[std::size_t(d)] + dt * w.kp3[std::size_t(d)];
    }
    m.velocity(t + dt, w.qt, w.pt, w.kq4);
    m.force(t + dt, w.qt, w.pt, w.kp4);
    for (int d = 0; d < s; ++d) {
        st.q[std::size_t(d)] += dt / 6 *
            (w.kq1[std::size_t(d)] + 2 * w.kq2[std::size_t(d)] + 2 * w.kq3[std::size_t(d)] + w.kq4[std::size_t(d)]);
        st.p[std::size_t(d)] += dt / 6 *
            (w.kp1[std::size_t(d)] + 2 * w.kp2[std::size_t(d)] + 2 * w.kp3[std::size_t(d)] + w.kp4[std::size_t(d)]);
    }
    st.t = t + dt;
}

// Kick-drift-kick leapfrog. Valid only for separable H (force independent of
// p, velocity independent of q), which the caller has already checked.
inline void leapfrog_step(const SystemModel& m, PhaseState& st, double dt, Rk4Work& w) {
    const int s = m.dim;
    const double t = st.t;
    m.force(t, st.q, st.p, w.kp1);
    for (int d = 0; d < s; ++d)
        w.pt[std::size_t(d)] = st.p[std::size_t(d)] + 0.5 * dt * w.kp1[std::size_t(d)];
    m.velocity(t + 0.5 * dt, st.q, w.pt, w.kq1);
    for (int d = 0; d < s; ++d)
        st.q[std::size_t(d)] += dt * w.kq1[std::size_t(d)];
    m.force(t + dt, st.q, w.pt, w.kp2);
    for (int d = 0; d < s; ++d)
        st.p[std::size_t(d)] = w.pt[std::size_t(d)] + 0.5 * dt * w.kp2[std::size_t(d)];
    st.t = t + dt;
}

inline void step_once(const SystemModel& m, PhaseState& st, double dt,
                      Rk4Work& w, Method method) {
    if (method == Method::rk4)
        rk4_step(m, st, dt, w);
    else
        leapfrog_step(m, st, dt, w);
}

inline void check_step_args(const SystemModel& m, const PhaseState& s0, double dt,
                            Method method) {
    if (!(dt > 0)) throw config_error("dt must be positive");
    if (int(s0.q.size()) != m.dim || int(s0.p.size()) != m.dim)
        throw config_error("state dimension does not match model");
    if (method == Method::symplectic_leapfrog &&
        !(m.is_hamiltonian && m.separable))
        throw config_error(
            "symplectic_leapfrog requires a separable Hamiltonian model");
}

}  // namespace detail

// Integrate one system from s0 to t_end with fixed step dt (the last step is
// shortened to land on t_end). Samples are recorded every `cadence` steps
// plus the initial and final states. t_end < s0.t integrates backward.
inline Trajectory integrate_trajectory(const SystemModel& m, const PhaseState& s0,
                                       double dt, double t_end,
                                       Method method = Method::rk4,
                                       int cadence = 1) {
    detail::check_step_args(m, s0, dt, method);
    if (cadence < 1) throw config_error("cadence must be >= 1");

    const double dir = t_end >= s0.t ? 1.0 : -1.0;
    Trajectory tr;
    tr.model_name = m.name;
    PhaseState st = s0;
    tr.samples.push_back(st);
    detail::Rk4Work w(m.dim);

    const double span = std::fabs(t_end - s0.t);
    if (span == 0) return tr;
    long nsteps = 0;
    for (double remaining = span; remaining > 1e-14 * std::max(1.0, span);
         remaining = std::fabs(t_end - st.t)) {
        const double h = dir * std::min(dt, remaining);
        if (method == Method::rk4)
            detail::rk4_step(m, st, h, w);
        else
            detail::leapfrog_step(m, st, h, w);
        if (!all_finite(st.q) || !all_finite(st.p)) {
            const PhaseState& last = tr.samples.back();
            throw blowup_error(last.t, last.q, last.p);
        }
        ++nsteps;
        if (nsteps % cadence == 0) tr.samples.push_back(st);
    }
    st.t = t_end;  // absorb roundoff from the final shortened step
    if (std::fabs(tr.samples.back().t - st.t) <
        1e-12 * std::max(1.0, std::fabs(t_end)))
        tr.samples.back() = st;
    else
        tr.samples.push_back(st);
    return tr;
}

// Advance every ensemble member with the same integrator and step sequence.
// Returns the cloud at t_end; optionally also the member trajectories.
inline EnsembleCloud integrate_ensemble(const SystemModel& m, const EnsembleCloud& cloud,
                                        double dt, double t_end,
                                        Method method = Method::rk4,
                                        std::vector<Trajectory>* trajectories = nullptr,
                                        int cadence = 1) {
    cloud.validate();
    EnsembleCloud out;
    out.weights = cloud.weights;
    if (trajectories) trajectories->clear();
    for (std::size_t i = 0; i < cloud.states.size(); ++i) {
        try {
            Trajectory tr = integrate_trajectory(m, cloud.states[i], dt, t_end,
                                                 method, cadence);
            out.states.push_back(tr.samples.back());
            if (trajectories) trajectories->push_back(std::move(tr));
        } catch (const blowup_error& e) {
            throw blowup_error(e.t_last, e.q_last, e.p_last, int(i));
        }
    }
    return out;
}

namespace detail {

// Advance a bundle of node states one RK4 step each and differentiate the
// final positions against the initial grid to get det(dq/dq0) per node.
inline void flow_map_dets(const GridSpec& g, const std::vector<PhaseState>& states,
                          Vec& dets) {
    const int s = g.dim();
    std::vector<int> idx(s);
    std::vector<std::int64_t> stride(s, 1);
    for (int d = s - 2; d >= 0; --d)
        stride[std::size_t(d)] = stride[std::size_t(d + 1)] * g.axes[std::size_t(d + 1)].n;
    std::vector<double> M(s * s);
    const std::int64_t N = g.node_count();
    dets.resize(std::size_t(N));
    for (std::int64_t i = 0; i < N; ++i) {
        g.unflatten(i, idx);
        for (int b = 0; b < s; ++b) {  // derivative along initial axis b
            const auto& ax = g.axes[std::size_t(b)];
            const double h = ax.h();
            const int ib = idx[std::size_t(b)];
            for (int a = 0; a < s; ++a) {
                double der;
                if (ib > 0 && ib < ax.n - 1) {
                    der = (states[std::size_t(i + stride[std::size_t(b)])].q[std::size_t(a)] -
                           states[std::size_t(i - stride[std::size_t(b)])].q[std::size_t(a)]) /
                          (2 * h);
                } else if (ib == 0) {
                    der = (-3 * states[std::size_t(i)].q[std::size_t(a)] +
                           4 * states[std::size_t(i + stride[std::size_t(b)])].q[std::size_t(a)] -
                           states[std::size_t(i + 2 * stride[std::size_t(b)])].q[std::size_t(a)]) /
                          (2 * h);
                } else {
                    der = (3 * states[std::size_t(i)].q[std::size_t(a)] -
                           4 * states[std::size_t(i - stride[std::size_t(b)])].q[std::size_t(a)] +
                           states[std::size_t(i - 2 * stride[std::size_t(b)])].q[std::size_t(a)]) /
                          (2 * h);
                }
                M[std::size_t(a) * std::size_t(s) + std::size_t(b)] = der;
            }
        }
        dets[std::size_t(i)] = determinant(M, s);
    }
}

inline std::vector<PhaseState> seed_states(const GridSpec& g, const GridField& p0) {
    g.validate();
    if (!p0.spec.same_layout(g))
        throw config_error("initial momentum field must live on the seed grid");
    if (p0.components != g.dim())
        throw config_error("initial momentum field needs one component per axis");
    const std::int64_t N = g.node_count();
    std::vector<PhaseState> states(static_cast<std::size_t>(N));
    const int s = g.dim();
    for (std::int64_t i = 0; i < N; ++i) {
        PhaseState& st = states[std::size_t(i)];
        st.t = p0.t;
        st.q.resize(std::size_t(s));
        st.p.resize(std::size_t(s));
        g.node_coords(i, st.q);
        for (int d = 0; d < s; ++d) st.p[std::size_t(d)] = p0.at(d, i);
    }
    return states;
}

}  // namespace detail

// det(dq(t)/dq0) on the seed grid: each node launches a trajectory from
// (q0, p0(q0)), and the Jacobian is differenced between neighbouring nodes
// (central interior, one-sided second order at the edges).
inline GridField flow_map_jacobian(const SystemModel& m, const GridSpec& q0_grid,
                                   const GridField& p0, double t, double dt,
                                   Method method = Method::rk4) {
    if (q0_grid.dim() != m.dim)
        throw config_error("seed grid dimension does not match model");
    auto states = detail::seed_states(q0_grid, p0);
    for (auto& st : states) {
        Trajectory tr = integrate_trajectory(m, st, dt, t, method, 1 << 30);
        st = tr.samples.back();
    }
    Vec dets;
    detail::flow_map_dets(q0_grid, states, dets);
    GridField out = GridField::zeros(q0_grid, 1, t);
    for (std::int64_t i = 0; i < out.nodes(); ++i) out.at(0, i) = dets[std::size_t(i)];
    return out;
}

// March the whole bundle forward and report the first time any node's
// flow-map determinant changes sign (linear interpolation between steps).
// Returns nullopt when no sign change occurs before t_max.
inline std::optional<double> first_caustic_time(const SystemModel& m,
                                                const GridSpec& q0_grid,
                                                const GridField& p0, double dt,
                                                double t_max,
                                                Method method = Method::rk4) {
    if (q0_grid.dim() != m.dim)
        throw config_error("seed grid dimension does not match model");
    if (!(dt > 0)) throw config_error("dt must be positive");
    auto states = detail::seed_states(q0_grid, p0);
    detail::Rk4Work w(m.dim);
    Vec dets, prev;
    detail::flow_map_dets(q0_grid, states, prev);
    double t = p0.t;
    while (t < t_max - 1e-14) {
        const double h = std::min(dt, t_max - t);
        for (auto& st : states) detail::step_once(m, st, h, w, method);
        t += h;
        detail::flow_map_dets(q0_grid, states, dets);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (prev[i] != 0 && dets[i] * prev[i] <= 0) {
                // linear interpolation of the crossing inside this step
                const double frac = prev[i] / (prev[i] - dets[i]);
                return t - h + frac * h;
            }
        }
        prev.swap(dets);
    }
    return std::nullopt;
}

// Rebuild a trajectory from a stored action field: dq/dt = grad S(t,q)/m,
// with grad S interpolated cubically in space and linearly between
// snapshots. Exiting the field domain raises domain_exit_error.
inline Trajectory characteristics_from_action(const ActionField& S, double m_mass,
                                              ConstSpan q0, double dt, double t_end,
                                              int cadence = 1) {
    S.validate();
    if (!(m_mass > 0)) throw config_error("mass must be positive");
    const GridSpec& g = S.snapshots[0].spec;
    const int s = g.dim();
    if (int(q0.size()) != s) throw config_error("seed dimension does not match field");
    if (t_end > S.t_back() + 1e-12 || S.t_front() > t_end)
        throw config_error("t_end outside the stored snapshot range");

    // precompute gradient snapshots once
    std::vector<GridField> grads;
    grads.reserve(S.snapshots.size());
    for (const auto& snap : S.snapshots) grads.push_back(gradient_field(snap));

    auto grad_at = [&](double t, ConstSpan x, MutSpan out) {
        // clamp t into the stored range (roundoff at the ends)
        double tc = std::clamp(t, S.t_front(), S.t_back());
        std::size_t hi = 1;
        while (hi + 1 < grads.size() && grads[hi].t < tc) ++hi;
        const GridField &a = grads[hi - 1], &b = grads[hi];
        const double w = (b.t == a.t) ? 0.0 : (tc - a.t) / (b.t - a.t);
        for (int d = 0; d < s; ++d) {
            const double va = interp_cubic(a, d, x);
            const double vb = interp_cubic(b, d, x);
            out[std::size_t(d)] = (1 - w) * va + w * vb;
        }
    };

    Trajectory tr;
    tr.model_name = "action_characteristic";
    PhaseState st;
    st.t = S.t_front();
    st.q.assign(q0.begin(), q0.end());
    st.p.assign(std::size_t(s), 0.0);
    Vec k1(s), k2(s), k3(s), k4(s), xt(s);

    auto record = [&](PhaseState& state) {
        grad_at(state.t, state.q, state.p);  // p = grad S along the path
        tr.samples.push_back(state);
    };
    record(st);

    long nsteps = 0;
    while (st.t < t_end - 1e-14 * std::max(1.0, std::fabs(t_end))) {
        const double h = std::min(dt, t_end - st.t);
        grad_at(st.t, st.q, k1);
        for (int d = 0; d < s; ++d) xt[std::size_t(d)] = st.q[std::size_t(d)] + 0.5 * h / m_mass * k1[std::size_t(d)];
        grad_at(st.t + 0.5 * h, xt, k2);
        for (int d = 0; d < s; ++d) xt[std::size_t(d)] = st.q[std::size_t(d)] + 0.5 * h / m_mass * k2[std::size_t(d)];
        grad_at(st.t + 0.5 * h, xt, k3);
        for (int d = 0; d < s; ++d) xt[std::size_t(d)] = st.q[std::size_t(d)] + h / m_mass * k3[std::size_t(d)];
        grad_at(st.t + h, xt, k4);
        for (int d = 0; d < s; ++d)
            st.q[std::size_t(d)] += h / (6 * m_mass) *
                (k1[std::size_t(d)] + 2 * k2[std::size_t(d)] + 2 * k3[std::size_t(d)] + k4[std::size_t(d)]);
        st.t += h;
        if (!g.contains(st.q)) throw domain_exit_error(st.t);
        ++nsteps;
        if (nsteps % cadence == 0 || !(st.t < t_end - 1e-14)) record(st);
    }
    tr.samples.back().t = t_end;  // absorb roundoff on the final step
    return tr;
}

}  // namespace hjens
