#pragma once

// Momentum-representation mirrors of the coordinate-space machinery. The
// ensemble is described by the coordinate field q(t,p) on a momentum-space
// grid, advected by omega = F(t, q(p), p) with source phi (the roles of
// force and velocity swap):
//
//   dq/dt + (omega . grad_p) q = phi(t, q, p)
//   drho/dt + div_p(rho omega) = 0
//
// plus the momentum-representation HJ equation for Phi(t,p) with
// q = -dPhi/dp, its time-independent truncation H(-dW/dp, p) = E, and
// trajectory recovery from a momentum-representation complete integral.

#include "hj.hpp"

namespace hjens {

// omega_alpha(p) = F_alpha(t, q(p), p) evaluated nodewise.
inline GridField momentum_space_velocity(const SystemModel& m, const GridField& q) {
    const GridSpec& g = q.spec;
    if (g.kind != Axes::momentum)
        throw config_error("coordinate field must live on a momentum-space grid");
    if (q.components != g.dim())
        throw config_error("coordinate field needs one component per axis");
    if (g.dim() != m.dim) throw config_error("field dimension does not match model");
    GridField w = GridField::zeros(g, g.dim(), q.t);
    const int s = g.dim();
    Vec pp(s), qq(s), out(s);
    for (std::int64_t i = 0; i < q.nodes(); ++i) {
        g.node_coords(i, pp);
        for (int d = 0; d < s; ++d) qq[std::size_t(d)] = q.at(d, i);
        m.force(q.t, qq, pp, out);
        for (int d = 0; d < s; ++d) w.at(d, i) = out[std::size_t(d)];
    }
    return w;
}

// Semi-Lagrangian step of q(t,p), the exact mirror of the coordinate-space
// momentum step: backward trace through omega, cubic pull of q, midpoint
// source phi(t, q, p) along the traced segment. Same CFL contract.
inline GridField step_coordinate_field(const SystemModel& m, const GridField& q,
                                       double dt) {
    if (!(dt > 0)) throw config_error("dt must be positive");
    const GridSpec& g = q.spec;
    GridField w = momentum_space_velocity(m, q);
    detail::enforce_cfl(w, dt);

    GridField out = GridField::zeros(g, q.components, q.t + dt);
    const int s = g.dim();
    Vec pp(s), w0(s), ph(s), wh(s), foot(s), qf(s), qh(s), pm(s), f0(s), fm(s);
    for (std::int64_t i = 0; i < q.nodes(); ++i) {
        g.node_coords(i, pp);
        for (int d = 0; d < s; ++d) w0[std::size_t(d)] = w.at(d, i);
        for (int d = 0; d < s; ++d) ph[std::size_t(d)] = pp[std::size_t(d)] - 0.5 * dt * w0[std::size_t(d)];
        for (int d = 0; d < s; ++d) wh[std::size_t(d)] = interp_linear(w, d, ph);
        for (int d = 0; d < s; ++d) foot[std::size_t(d)] = pp[std::size_t(d)] - dt * wh[std::size_t(d)];
        for (int d = 0; d < s; ++d) qf[std::size_t(d)] = interp_cubic(q, d, foot);
        // midpoint source: dq/dt = phi(t, q, p) along the characteristic
        m.velocity(q.t, qf, foot, f0);
        for (int d = 0; d < s; ++d) qh[std::size_t(d)] = qf[std::size_t(d)] + 0.5 * dt * f0[std::size_t(d)];
        for (int d = 0; d < s; ++d) pm[std::size_t(d)] = 0.5 * (pp[std::size_t(d)] + foot[std::size_t(d)]);
        m.velocity(q.t + 0.5 * dt, qh, pm, fm);
        for (int d = 0; d < s; ++d) out.at(d, i) = qf[std::size_t(d)] + dt * fm[std::size_t(d)];
    }
    if (!all_finite(out.data))
        throw numeric_error("coordinate field update produced non-finite values");
    return out;
}

// Continuity in momentum space: same conservative upwind scheme, transport
// velocity omega.
inline GridField step_density_p(const GridField& omega, const GridField& rho,
                                double dt, DensityStepReport* report = nullptr) {
    if (rho.spec.kind != Axes::momentum)
        throw config_error("momentum-space density must live on a momentum-space grid");
    return step_density(omega, rho, dt, report);
}

// Closed-form momentum-representation action Phi(t,p) with exact partials.
struct SymbolicActionP {
    int dim = 1;
    Expr Phi;
    Expr dPhi_dt;
    std::vector<Expr> dPhi_dp;

    static SymbolicActionP from_expr(const Expr& e, int s) {
        SymbolicActionP a;
        a.dim = s;
        a.Phi = e;
        a.dPhi_dt = e.derivative(0);
        for (int d = 0; d < s; ++d) a.dPhi_dp.push_back(e.derivative(1 + d));
        return a;
    }
    static SymbolicActionP parse(const std::string& text, int s) {
        VarTable vars = VarTable::time_momentum(s);
        return from_expr(parse_expression(text, vars), s);
    }

    double value(double t, ConstSpan p) const { return eval(Phi, t, p); }
    double dt(double t, ConstSpan p) const { return eval(dPhi_dt, t, p); }
    void grad(double t, ConstSpan p, MutSpan out) const {
        for (int d = 0; d < dim; ++d) out[std::size_t(d)] = eval(dPhi_dp[std::size_t(d)], t, p);
    }

private:
    double eval(const Expr& e, double t, ConstSpan p) const {
        Vec vals(std::size_t(dim) + 1);
        vals[0] = t;
        for (int d = 0; d < dim; ++d) vals[std::size_t(d) + 1] = p[std::size_t(d)];
        return e.eval(vals);
    }
};

// Residual of dPhi/dt + H(t, -dPhi/dp, p) = 0 from a snapshot pair on a
// momentum grid (finite differences, midpoint time, second order).
inline double hj_residual_p(const SystemModel& m, const GridField& Phi0,
                            const GridField& Phi1, ConstSpan p) {
    detail::check_snapshot_pair(Phi0, Phi1);
    if (Phi0.spec.kind != Axes::momentum)
        throw config_error("momentum-representation residual needs a momentum grid");
    if (!m.has_hamiltonian())
        throw config_error("hj residual needs a Hamiltonian model");
    detail::require_interior(Phi0.spec, p);
    const double dt = Phi1.t - Phi0.t;
    const double tm = 0.5 * (Phi0.t + Phi1.t);
    const double pt = (interp_cubic(Phi1, 0, p) - interp_cubic(Phi0, 0, p)) / dt;
    GridField Pm = Phi0;
    for (std::size_t i = 0; i < Pm.data.size(); ++i)
        Pm.data[i] = 0.5 * (Phi0.data[i] + Phi1.data[i]);
    GridField gr = gradient_field(Pm);
    Vec q(std::size_t(m.dim));
    for (int d = 0; d < m.dim; ++d) q[std::size_t(d)] = -interp_cubic(gr, d, p);
    return pt + m.hamiltonian(tm, q, p);
}

// Same residual with an exact symbolic action.
inline double hj_residual_p(const SystemModel& m, const SymbolicActionP& a,
                            double t, ConstSpan p) {
    if (!m.has_hamiltonian())
        throw config_error("hj residual needs a Hamiltonian model");
    if (a.dim != m.dim) throw config_error("action dimension does not match model");
    Vec q(std::size_t(a.dim));
    a.grad(t, p, q);
    for (auto& v : q) v = -v;
    return a.dt(t, p) + m.hamiltonian(t, q, p);
}

// Residual of the truncated (time-independent) momentum-representation
// equation H(-dW/dp, p) = E. Only valid for time-independent models.
inline double truncated_hj_residual_p(const SystemModel& m, const GridField& W,
                                      double E, ConstSpan p) {
    if (!m.time_independent)
        throw config_error(
            "truncated momentum-representation equation requires a "
            "time-independent model");
    if (!m.has_hamiltonian())
        throw config_error("hj residual needs a Hamiltonian model");
    if (W.spec.kind != Axes::momentum)
        throw config_error("reduced action must live on a momentum grid");
    detail::require_interior(W.spec, p);
    GridField gr = gradient_field(W);
    Vec q(std::size_t(m.dim));
    for (int d = 0; d < m.dim; ++d) q[std::size_t(d)] = -interp_cubic(gr, d, p);
    return m.hamiltonian(0.0, q, p) - E;
}

inline double truncated_hj_residual_p(const SystemModel& m,
                                      const SymbolicActionP& W, double E,
                                      ConstSpan p) {
    if (!m.time_independent)
        throw config_error(
            "truncated momentum-representation equation requires a "
            "time-independent model");
    if (!m.has_hamiltonian())
        throw config_error("hj residual needs a Hamiltonian model");
    Vec q(std::size_t(W.dim));
    W.grad(0.0, p, q);
    for (auto& v : q) v = -v;
    return m.hamiltonian(0.0, q, p) - E;
}

// Trajectory recovery from a momentum-representation complete integral:
// solve dPhi/dbeta(t, p; beta) = alpha for p, then q = -dPhi/dp.
inline Trajectory jacobi_recover_p(const CompleteIntegral& ci, ConstSpan beta,
                                   ConstSpan alpha, ConstSpan t_grid,
                                   ConstSpan p_seed) {
    if (ci.representation != Axes::momentum)
        throw config_error("jacobi_recover_p needs a momentum-representation integral");
    if (int(beta.size()) != ci.dim || int(alpha.size()) != ci.dim ||
        int(p_seed.size()) != ci.dim)
        throw config_error("constant vectors must match the integral dimension");
    if (t_grid.empty()) throw config_error("empty time grid");
    Trajectory tr;
    tr.model_name = "jacobi_p";
    Vec seed(p_seed.begin(), p_seed.end());
    for (double t : t_grid) {
        Vec p = detail::ci_solve_point(ci, t, beta, alpha, seed);
        PhaseState st;
        st.t = t;
        st.p = p;
        st.q.resize(ci.dim);
        detail::ci_dx(ci, t, p, beta, st.q);
        for (auto& v : st.q) v = -v;
        tr.samples.push_back(st);
        seed = p;
    }
    return tr;
}

// ---- driver --------------------------------------------------------------

struct PrepRunResult {
    std::vector<GridField> q_snapshots;
    std::vector<GridField> rho_snapshots;
    double final_t = 0;
    double boundary_outflux = 0;
    std::vector<std::string> log;
};

// March q(t,p) (and optionally rho) on a momentum grid, mirroring
// run_eulerian: CFL auto-halving, shortened final step.
inline PrepRunResult run_prep(const SystemModel& m, const GridField& q0,
                              const std::optional<GridField>& rho0,
                              const EulerianOptions& opt) {
    if (!(opt.t_end > q0.t)) throw config_error("t_end must exceed the initial time");
    if (!(opt.dt > 0)) throw config_error("dt must be positive");
    PrepRunResult res;
    GridField q = q0;
    std::optional<GridField> rho = rho0;
    if (rho && !rho->spec.same_layout(q.spec))
        throw config_error("density and coordinate grids differ");
    if (rho) rho->t = q.t;
    res.q_snapshots.push_back(q);
    if (rho) res.rho_snapshots.push_back(*rho);

    long accepted = 0;
    double t = q.t;
    while (t < opt.t_end - 1e-14) {
        GridField w = momentum_space_velocity(m, q);
        const double wmax = max_abs(w);
        double dt_step = std::min(opt.dt, opt.t_end - t);
        if (opt.auto_cfl) {
            const double limit = 0.5 * q.spec.min_h();
            while (wmax * dt_step > limit && dt_step > 1e-15) {
                dt_step *= 0.5;
                std::ostringstream os;
                os << "t=" << t << ": halved dt to " << dt_step
                   << " (max|omega|=" << wmax << ", CFL limit " << limit << ")";
                res.log.push_back(os.str());
            }
            if (dt_step <= 1e-15)
                throw numeric_error("CFL step collapsed below 1e-15 at t=" +
                                    std::to_string(t));
        }
        if (rho) {
            DensityStepReport rep;
            *rho = step_density_p(w, *rho, dt_step, &rep);
            res.boundary_outflux += rep.boundary_outflux;
        }
        q = step_coordinate_field(m, q, dt_step);
        t = q.t;
        ++accepted;
        if (accepted % opt.cadence == 0 || !(t < opt.t_end - 1e-14)) {
            res.q_snapshots.push_back(q);
            if (rho) res.rho_snapshots.push_back(*rho);
        }
    }
    res.final_t = t;
    return res;
}

}  // namespace hjens
