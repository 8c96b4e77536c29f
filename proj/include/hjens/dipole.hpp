#pragma once

// Magnetic-dipole subsystem: point dipoles with fixed spin magnitude in
// electromagnetic fields, and the matching Eulerian description where the
// spin enters through two angle fields.
//
// The spin vector is parameterized as
//
//   s = (s_perp sin chi, s_perp cos chi, xi),   s_perp = sqrt(smag^2 - xi^2)
//
// so (xi, chi) form a canonical pair with spin Hamiltonian
// H_sp = -gamma (s . H):  dchi/dt = -dH_sp/dxi,  dxi/dt = +dH_sp/dchi.
// The ensemble velocity picks up the spin gauge term:
//
//   m v = grad S - (e/c) A + xi grad chi
//
// and the action equation gains xi dchi/dt and H_sp terms. chi is stored
// unwrapped; at the poles (|s_perp| < 1e-9 smag) chi is frozen and flagged.

#include "eulerian.hpp"
#include "hj.hpp"

#include <array>

namespace hjens {

struct DipoleParams {
    double m = 1, e = 1, c = 1;
    double gamma = 1;       // gyromagnetic ratio
    double spin_mag = 0.5;  // |s|

    void validate() const {
        if (!(m > 0)) throw config_error("mass must be positive");
        if (!(c > 0)) throw config_error("speed of light must be positive");
        if (!(spin_mag > 0)) throw config_error("spin magnitude must be positive");
    }
};

// Field callbacks over (t, r) with r three-dimensional. grad_H is stored
// row-major with out[a*3+i] = dH_i/dr_a.
struct EmFieldSet {
    std::function<void(double t, ConstSpan r, MutSpan out)> E;       // 3
    std::function<void(double t, ConstSpan r, MutSpan out)> H;       // 3
    std::function<void(double t, ConstSpan r, MutSpan out)> grad_H;  // 9
};

inline std::array<double, 3> spin_vector(double xi, double chi, double smag) {
    if (std::fabs(xi) > smag * (1 + 1e-12))
        throw config_error("|xi| exceeds the spin magnitude");
    const double sp = std::sqrt(std::max(0.0, smag * smag - xi * xi));
    return {sp * std::sin(chi), sp * std::cos(chi), xi};
}

// Inverse map; chi = atan2(s_x, s_y) (zero along +y, increasing toward +x,
// matching the parameterization above).
inline void spin_angles(ConstSpan s, double& xi, double& chi) {
    xi = s[2];
    chi = std::atan2(s[0], s[1]);
}

// Shift chi by whole turns to land next to ref (unwrapped storage).
inline double unwrap_angle(double chi, double ref) {
    const double two_pi = 2 * 3.14159265358979323846;
    return chi + two_pi * std::round((ref - chi) / two_pi);
}

// dH_sp/dxi and dH_sp/dchi for H_sp = -gamma s(xi,chi) . H. At the poles
// s_perp -> 0 and the xi-derivative is singular; callers guard with
// pole_frozen().
inline double dHsp_dxi(const DipoleParams& par, double xi, double chi, ConstSpan H) {
    const double sp = std::sqrt(std::max(0.0, par.spin_mag * par.spin_mag - xi * xi));
    const double inplane = std::sin(chi) * H[0] + std::cos(chi) * H[1];
    return -par.gamma * (-(xi / sp) * inplane + H[2]);
}

inline double dHsp_dchi(const DipoleParams& par, double xi, double chi, ConstSpan H) {
    const double sp = std::sqrt(std::max(0.0, par.spin_mag * par.spin_mag - xi * xi));
    return -par.gamma * sp * (std::cos(chi) * H[0] - std::sin(chi) * H[1]);
}

inline bool pole_frozen(const DipoleParams& par, double xi) {
    const double sp2 = par.spin_mag * par.spin_mag - xi * xi;
    return sp2 < (1e-9 * par.spin_mag) * (1e-9 * par.spin_mag);
}

struct DipoleState {
    double t = 0;
    Vec r, v;        // kinetic position/velocity, 3 components
    double xi = 0;   // s_z
    double chi = 0;  // azimuth, unwrapped
    bool pole = false;
};

namespace detail {

// RK4 right-hand side for the (r, v, s) system:
//   dr/dt = v
//   m dv/dt = e (E + v x H / c) + gamma (grad H)^T s
//   ds/dt = gamma s x H
inline void dipole_rhs(const DipoleParams& par, const EmFieldSet& fields,
                       double t, ConstSpan y, MutSpan dy) {
    Vec r(y.begin(), y.begin() + 3);
    Vec E(3), H(3), gH(9);
    fields.E(t, r, E);
    fields.H(t, r, H);
    fields.grad_H(t, r, gH);
    const double *v = y.data() + 3, *s = y.data() + 6;
    for (int d = 0; d < 3; ++d) dy[std::size_t(d)] = v[d];
    const double vxH[3] = {v[1] * H[2] - v[2] * H[1], v[2] * H[0] - v[0] * H[2],
                           v[0] * H[1] - v[1] * H[0]};
    for (int a = 0; a < 3; ++a) {
        double grad_term = 0;
        for (int i = 0; i < 3; ++i) grad_term += s[i] * gH[std::size_t(a * 3 + i)];
        dy[std::size_t(3 + a)] =
            (par.e * (E[std::size_t(a)] + vxH[a] / par.c) + par.gamma * grad_term) / par.m;
    }
    dy[std::size_t(6)] = par.gamma * (s[1] * H[2] - s[2] * H[1]);
    dy[std::size_t(7)] = par.gamma * (s[2] * H[0] - s[0] * H[2]);
    dy[std::size_t(8)] = par.gamma * (s[0] * H[1] - s[1] * H[0]);
}

}  // namespace detail

// Integrate one dipole with fixed-step RK4 on (r, v, s); the spin vector is
// evolved directly (so |s| is conserved to integrator accuracy) and reported
// through the angle pair with unwrapped chi.
inline std::vector<DipoleState> integrate_dipole(const DipoleParams& par,
                                                 const EmFieldSet& fields,
                                                 const DipoleState& s0, double dt,
                                                 double t_end, int cadence = 1) {
    par.validate();
    if (!(dt > 0)) throw config_error("dt must be positive");
    if (s0.r.size() != 3 || s0.v.size() != 3)
        throw config_error("dipole state needs 3-component r and v");
    if (cadence < 1) throw config_error("cadence must be >= 1");

    auto s3 = spin_vector(s0.xi, s0.chi, par.spin_mag);
    Vec y(9);
    for (int d = 0; d < 3; ++d) {
        y[std::size_t(d)] = s0.r[std::size_t(d)];
        y[std::size_t(3 + d)] = s0.v[std::size_t(d)];
        y[std::size_t(6 + d)] = s3[std::size_t(d)];
    }

    std::vector<DipoleState> out;
    double chi_prev = s0.chi;
    auto record = [&](double t) {
        DipoleState st;
        st.t = t;
        st.r.assign(y.begin(), y.begin() + 3);
        st.v.assign(y.begin() + 3, y.begin() + 6);
        double xi, chi;
        spin_angles(ConstSpan(y).subspan(6, 3), xi, chi);
        st.xi = xi;
        st.pole = pole_frozen(par, xi);
        st.chi = st.pole ? chi_prev : unwrap_angle(chi, chi_prev);
        chi_prev = st.chi;
        out.push_back(st);
    };
    record(s0.t);

    Vec k1(9), k2(9), k3(9), k4(9), yt(9);
    double t = s0.t;
    long nsteps = 0;
    while (t < t_end - 1e-14 * std::max(1.0, std::fabs(t_end))) {
        const double h = std::min(dt, t_end - t);
        detail::dipole_rhs(par, fields, t, y, k1);
        for (int i = 0; i < 9; ++i) yt[std::size_t(i)] = y[std::size_t(i)] + 0.5 * h * k1[std::size_t(i)];
        detail::dipole_rhs(par, fields, t + 0.5 * h, yt, k2);
        for (int i = 0; i < 9; ++i) yt[std::size_t(i)] = y[std::size_t(i)] + 0.5 * h * k2[std::size_t(i)];
        detail::dipole_rhs(par, fields, t + 0.5 * h, yt, k3);
        for (int i = 0; i < 9; ++i) yt[std::size_t(i)] = y[std::size_t(i)] + h * k3[std::size_t(i)];
        detail::dipole_rhs(par, fields, t + h, yt, k4);
        for (int i = 0; i < 9; ++i)
            y[std::size_t(i)] += h / 6 *
                (k1[std::size_t(i)] + 2 * k2[std::size_t(i)] + 2 * k3[std::size_t(i)] + k4[std::size_t(i)]);
        t += h;
        if (!all_finite(y)) throw numeric_error("dipole integration blew up at t=" + std::to_string(t));
        ++nsteps;
        if (nsteps % cadence == 0 || !(t < t_end - 1e-14)) record(t);
    }
    if (out.size() > 1) out.back().t = t_end;
    return out;
}

// ---- Eulerian spin fields ------------------------------------------------

// xi and chi as scalar fields on a 1/2/3-d position grid (a reduced-
// dimension slice of physical space); H is still a full 3-vector.
struct SpinFields {
    GridField xi, chi;

    void validate() const {
        if (xi.components != 1 || chi.components != 1)
            throw config_error("spin fields must be scalar");
        if (!xi.spec.same_layout(chi.spec))
            throw config_error("xi and chi must share one grid");
        if (xi.t != chi.t) throw config_error("xi and chi must share one time");
    }
};

namespace detail {

// Evaluate H(t, r) with the grid coordinates embedded into the first
// components of a 3-vector position (missing axes pinned to zero).
inline void embed_H(const EmFieldSet& fields, double t, ConstSpan x, int g,
                    MutSpan H) {
    Vec r(3, 0.0);
    for (int d = 0; d < g; ++d) r[std::size_t(d)] = x[std::size_t(d)];
    fields.H(t, r, H);
}

}  // namespace detail

struct SpinStepReport {
    int pole_nodes = 0;     // chi frozen at these nodes this step
    int clamped_nodes = 0;  // xi pulled back into [-smag, smag]
};

// One semi-Lagrangian step of both spin fields through the velocity field v:
// backward trace (midpoint, linear velocity interpolation), cubic pull of
// xi and chi, then the canonical sources dchi/dt = -dH_sp/dxi,
// dxi/dt = +dH_sp/dchi applied with the midpoint rule.
inline SpinFields step_spin_fields(const SpinFields& f, const GridField& v,
                                   const EmFieldSet& fields,
                                   const DipoleParams& par, double dt,
                                   SpinStepReport* report = nullptr) {
    f.validate();
    par.validate();
    if (!(dt > 0)) throw config_error("dt must be positive");
    const GridSpec& g = f.xi.spec;
    if (!v.spec.same_layout(g)) throw config_error("velocity grid differs from spin grid");
    if (v.components != g.dim())
        throw config_error("velocity field needs one component per axis");
    detail::enforce_cfl(v, dt);

    const int s = g.dim();
    SpinFields out;
    out.xi = GridField::zeros(g, 1, f.xi.t + dt);
    out.chi = GridField::zeros(g, 1, f.xi.t + dt);
    SpinStepReport rep;

    Vec x(s), v0(s), xh(s), vh(s), foot(s), xm(s), H(3);
    for (std::int64_t i = 0; i < f.xi.nodes(); ++i) {
        g.node_coords(i, x);
        for (int d = 0; d < s; ++d) v0[std::size_t(d)] = v.at(d, i);
        for (int d = 0; d < s; ++d) xh[std::size_t(d)] = x[std::size_t(d)] - 0.5 * dt * v0[std::size_t(d)];
        for (int d = 0; d < s; ++d) vh[std::size_t(d)] = interp_linear(v, d, xh);
        for (int d = 0; d < s; ++d) foot[std::size_t(d)] = x[std::size_t(d)] - dt * vh[std::size_t(d)];
        double xi = interp_cubic(f.xi, 0, foot);
        double chi = interp_cubic(f.chi, 0, foot);
        if (std::fabs(xi) > par.spin_mag) {
            xi = std::clamp(xi, -par.spin_mag, par.spin_mag);
            ++rep.clamped_nodes;
        }

        // midpoint source
        const double t0 = f.xi.t;
        double src_xi0 = 0, src_chi0 = 0;
        const bool pole0 = pole_frozen(par, xi);
        detail::embed_H(fields, t0, foot, s, H);
        src_xi0 = dHsp_dchi(par, xi, chi, H);
        if (!pole0) src_chi0 = -dHsp_dxi(par, xi, chi, H);
        double xi_h = xi + 0.5 * dt * src_xi0;
        double chi_h = chi + 0.5 * dt * src_chi0;
        if (std::fabs(xi_h) > par.spin_mag) xi_h = std::clamp(xi_h, -par.spin_mag, par.spin_mag);
        for (int d = 0; d < s; ++d) xm[std::size_t(d)] = 0.5 * (x[std::size_t(d)] + foot[std::size_t(d)]);
        detail::embed_H(fields, t0 + 0.5 * dt, xm, s, H);
        const bool pole_h = pole_frozen(par, xi_h);
        const double src_xi = dHsp_dchi(par, xi_h, chi_h, H);
        const double src_chi = pole_h ? 0.0 : -dHsp_dxi(par, xi_h, chi_h, H);
        if (pole0 || pole_h) ++rep.pole_nodes;

        double xi_new = xi + dt * src_xi;
        if (std::fabs(xi_new) > par.spin_mag) {
            xi_new = std::clamp(xi_new, -par.spin_mag, par.spin_mag);
            ++rep.clamped_nodes;
        }
        out.xi.at(0, i) = xi_new;
        out.chi.at(0, i) = chi + dt * src_chi;
    }
    if (report) *report = rep;
    return out;
}

// Ensemble velocity of the dipole fluid: m v = grad S - (e/c) A + xi grad chi,
// over the grid's axes (A's first dim() components are used).
inline GridField dipole_velocity(const GridField& S, const SpinFields& f,
                                 const DipoleParams& par,
                                 const std::function<void(double, ConstSpan, MutSpan)>& A) {
    f.validate();
    par.validate();
    if (S.components != 1) throw config_error("action must be scalar");
    if (!S.spec.same_layout(f.xi.spec))
        throw config_error("action grid differs from spin grid");
    const GridSpec& g = S.spec;
    const int s = g.dim();
    GridField gS = gradient_field(S);
    GridField gchi = gradient_field(f.chi);
    GridField v = GridField::zeros(g, s, S.t);
    Vec x(s), r(3, 0.0), a(3, 0.0);
    for (std::int64_t i = 0; i < S.nodes(); ++i) {
        g.node_coords(i, x);
        if (A) {
            for (int d = 0; d < s; ++d) r[std::size_t(d)] = x[std::size_t(d)];
            A(S.t, r, a);
        }
        const double xi = f.xi.at(0, i);
        for (int d = 0; d < s; ++d)
            v.at(d, i) = (gS.at(d, i) - (par.e / par.c) * a[std::size_t(d)] +
                          xi * gchi.at(d, i)) /
                         par.m;
    }
    return v;
}

// Residual of the dipole action equation from snapshot pairs of (S, xi, chi):
//
//   dS/dt + xi dchi/dt + (1/2m) |grad S - (e/c)A + xi grad chi|^2
//         + e phi + H_sp(t, q, xi, chi) = 0
//
// evaluated at interior nodes at the midpoint time (second order in dt, h).
// The squared sum runs over all three components; axes beyond the grid
// contribute only their -(e/c)A_a part. Returns the max |residual| over
// interior nodes.
inline double dipole_hj_residual_max(
    const GridField& S0, const GridField& S1, const SpinFields& f0,
    const SpinFields& f1, const DipoleParams& par, const EmFieldSet& fields,
    const std::function<double(double, ConstSpan)>& phi,
    const std::function<void(double, ConstSpan, MutSpan)>& A) {
    detail::check_snapshot_pair(S0, S1);
    f0.validate();
    f1.validate();
    par.validate();
    if (!S0.spec.same_layout(f0.xi.spec))
        throw config_error("action grid differs from spin grid");
    const GridSpec& g = S0.spec;
    const int s = g.dim();
    const double dt = S1.t - S0.t;
    const double tm = 0.5 * (S0.t + S1.t);

    auto midpoint = [](const GridField& a, const GridField& b) {
        GridField m = a;
        for (std::size_t i = 0; i < m.data.size(); ++i)
            m.data[i] = 0.5 * (a.data[i] + b.data[i]);
        return m;
    };
    GridField Sm = midpoint(S0, S1);
    GridField xim = midpoint(f0.xi, f1.xi);
    GridField chim = midpoint(f0.chi, f1.chi);
    GridField gS = gradient_field(Sm);
    GridField gchi = gradient_field(chim);

    std::vector<int> idx(s);
    Vec x(s), r(3, 0.0), a3(3, 0.0), H(3);
    double worst = 0;
    for (std::int64_t i = 0; i < S0.nodes(); ++i) {
        g.unflatten(i, idx);
        bool interior = true;
        for (int d = 0; d < s; ++d) {
            const auto& ax = g.axes[std::size_t(d)];
            if (ax.bc == Boundary::outflow &&
                (idx[std::size_t(d)] == 0 || idx[std::size_t(d)] == ax.n - 1))
                interior = false;
        }
        if (!interior) continue;
        g.node_coords(i, x);
        for (int d = 0; d < s; ++d) r[std::size_t(d)] = x[std::size_t(d)];
        const double xi = xim.at(0, i);
        const double chi = chim.at(0, i);
        if (pole_frozen(par, xi)) continue;  // chi undefined at the poles

        const double St = (S1.at(0, i) - S0.at(0, i)) / dt;
        const double chit = (f1.chi.at(0, i) - f0.chi.at(0, i)) / dt;
        if (A) A(tm, r, a3);
        double kinetic = 0;
        for (int comp = 0; comp < 3; ++comp) {
            double term = -(par.e / par.c) * a3[std::size_t(comp)];
            if (comp < s) term += gS.at(comp, i) + xi * gchi.at(comp, i);
            kinetic += term * term;
        }
        kinetic /= 2 * par.m;
        fields.H(tm, r, H);
        const auto sv = spin_vector(xi, chi, par.spin_mag);
        const double hsp = -par.gamma * (sv[0] * H[0] + sv[1] * H[1] + sv[2] * H[2]);
        const double pot = phi ? par.e * phi(tm, r) : 0.0;
        worst = std::max(worst, std::fabs(St + xi * chit + kinetic + pot + hsp));
    }
    return worst;
}

// Continuity for the dipole fluid reuses the conservative upwind step.
inline GridField dipole_continuity_step(const GridField& v, const GridField& rho,
                                        double dt,
                                        DensityStepReport* report = nullptr) {
    return step_density(v, rho, dt, report);
}

}  // namespace hjens
