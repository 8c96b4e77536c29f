#pragma once

// System models: the force/velocity pair that drives every integrator, plus
// factories for the built-in families. A model is "Hamiltonian" when it also
// carries H and its partials; factories audit analytic partials against
// finite differences at construction so inconsistent inputs fail fast.

#include "common.hpp"

#include <functional>
#include <memory>
#include <sstream>
#include <utility>

namespace hjens {

struct PhaseState {
    double t = 0;
    Vec q, p;
};

using FieldFn = std::function<void(double t, ConstSpan q, ConstSpan p, MutSpan out)>;
using ScalarFn = std::function<double(double t, ConstSpan q, ConstSpan p)>;
using PotentialFn = std::function<double(double t, ConstSpan q)>;
using PotentialGradFn = std::function<void(double t, ConstSpan q, MutSpan out)>;

struct SystemModel {
    int dim = 1;                   // configuration-space dimension s
    std::string name = "model";
    FieldFn force;                 // dp/dt = F(t,q,p)
    FieldFn velocity;              // dq/dt = phi(t,q,p)
    ScalarFn hamiltonian;          // null for non-Hamiltonian models
    FieldFn dH_dq, dH_dp;          // analytic partials when available
    bool is_hamiltonian = false;
    bool separable = false;        // H = T(p) + V(t,q); enables leapfrog
    bool time_independent = false;

    bool has_hamiltonian() const { return bool(hamiltonian); }

    Vec eval_velocity(double t, ConstSpan q, ConstSpan p) const {
        Vec out(dim);
        velocity(t, q, p, out);
        return out;
    }
    Vec eval_force(double t, ConstSpan q, ConstSpan p) const {
        Vec out(dim);
        force(t, q, p, out);
        return out;
    }
};

struct AuditOptions {
    bool enabled = true;
    double lo = -1, hi = 1;   // sampling box, per axis, for q and p alike
    int npoints = 100;
    std::uint32_t start = 0;  // offset into the low-discrepancy sequence
    double fd_step = 1e-5;
    double tol = 1e-6;        // relative, floored at unit scale
};

struct AuditReport {
    double max_err_velocity = 0;  // |phi - dH/dp| relative
    double max_err_force = 0;     // |F + dH/dq| relative
    Vec worst_point;              // (t, q..., p...) of the worst sample
    bool ok(double tol) const {
        return max_err_velocity <= tol && max_err_force <= tol;
    }
};

namespace detail {

inline double fd_partial(const ScalarFn& f, double t, Vec q, Vec p, bool wrt_p,
                         int comp, double step) {
    Vec& x = wrt_p ? p : q;
    const double h = step * std::max(1.0, std::fabs(x[std::size_t(comp)]));
    const double x0 = x[std::size_t(comp)];
    x[std::size_t(comp)] = x0 + h;
    const double fp = f(t, q, p);
    x[std::size_t(comp)] = x0 - h;
    const double fm = f(t, q, p);
    x[std::size_t(comp)] = x0;
    return (fp - fm) / (2 * h);
}

}  // namespace detail

// Compare the model's velocity/force fields against finite differences of
// its Hamiltonian over Halton-sampled (t,q,p). Relative errors are floored
// at unit scale so zero components do not blow up the quotient.
inline AuditReport audit_hamiltonian_consistency(const SystemModel& m,
                                                 const AuditOptions& opt = {}) {
    if (!m.has_hamiltonian())
        throw config_error("model '" + m.name + "' has no Hamiltonian to audit");
    AuditReport rep;
    const int s = m.dim;
    Vec q(s), p(s), vel(s), frc(s);
    Vec u(2 * s + 1);
    for (int k = 0; k < opt.npoints; ++k) {
        halton_point(opt.start + std::uint32_t(k), 2 * s + 1, u);
        double t = u[0];
        for (int d = 0; d < s; ++d) {
            q[std::size_t(d)] = opt.lo + (opt.hi - opt.lo) * u[std::size_t(1 + d)];
            p[std::size_t(d)] = opt.lo + (opt.hi - opt.lo) * u[std::size_t(1 + s + d)];
        }
        m.velocity(t, q, p, vel);
        m.force(t, q, p, frc);
        for (int d = 0; d < s; ++d) {
            double dhp = detail::fd_partial(m.hamiltonian, t, q, p, true, d, opt.fd_step);
            double dhq = detail::fd_partial(m.hamiltonian, t, q, p, false, d, opt.fd_step);
            double ev = std::fabs(vel[std::size_t(d)] - dhp) /
                        std::max(1.0, std::fabs(dhp));
            double ef = std::fabs(frc[std::size_t(d)] + dhq) /
                        std::max(1.0, std::fabs(dhq));
            if (ev > rep.max_err_velocity || ef > rep.max_err_force) {
                rep.worst_point.assign(1, t);
                rep.worst_point.insert(rep.worst_point.end(), q.begin(), q.end());
                rep.worst_point.insert(rep.worst_point.end(), p.begin(), p.end());
            }
            rep.max_err_velocity = std::max(rep.max_err_velocity, ev);
            rep.max_err_force = std::max(rep.max_err_force, ef);
        }
    }
    return rep;
}

namespace detail {

inline std::string point_string(ConstSpan x) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
    os << ")";
    return os.str();
}

// Check a supplied gradient against finite differences of the potential.
inline void audit_gradient(const std::string& what, const PotentialFn& U,
                           const PotentialGradFn& gradU, int s,
                           const AuditOptions& opt) {
    if (!opt.enabled) return;
    Vec q(s), g(s), u(s + 1);
    for (int k = 0; k < opt.npoints; ++k) {
        halton_point(opt.start + std::uint32_t(k), s + 1, u);
        double t = u[0];
        for (int d = 0; d < s; ++d)
            q[std::size_t(d)] = opt.lo + (opt.hi - opt.lo) * u[std::size_t(1 + d)];
        gradU(t, q, g);
        for (int d = 0; d < s; ++d) {
            const double h = opt.fd_step * std::max(1.0, std::fabs(q[std::size_t(d)]));
            const double q0 = q[std::size_t(d)];
            q[std::size_t(d)] = q0 + h;
            const double up = U(t, q);
            q[std::size_t(d)] = q0 - h;
            const double um = U(t, q);
            q[std::size_t(d)] = q0;
            const double fd = (up - um) / (2 * h);
            const double err = std::fabs(g[std::size_t(d)] - fd) /
                               std::max(1.0, std::fabs(fd));
            if (err > opt.tol)
                throw config_error(what + ": gradient component " +
                                   std::to_string(d + 1) +
                                   " disagrees with finite differences at t=" +
                                   std::to_string(t) + ", q=" + point_string(q) +
                                   " (rel err " + std::to_string(err) + ")");
        }
    }
}

// Heuristic: sample force/velocity (and H when present) at shifted times
// over a Halton set; bitwise agreement everywhere marks the model as
// time-independent. A dependence hidden outside [-1,1]^2s escapes this.
inline bool probe_time_independent(const SystemModel& m) {
    const int s = m.dim;
    Vec u(2 * s), q(s), p(s), a(s), b(s);
    for (int k = 0; k < 8; ++k) {
        halton_point(std::uint32_t(23 + k), 2 * s, u);
        for (int d = 0; d < s; ++d) {
            q[std::size_t(d)] = -1 + 2 * u[std::size_t(d)];
            p[std::size_t(d)] = -1 + 2 * u[std::size_t(s + d)];
        }
        const double t1 = 0.173 + 0.11 * k, t2 = t1 + 1.37;
        m.force(t1, q, p, a);
        m.force(t2, q, p, b);
        if (a != b) return false;
        m.velocity(t1, q, p, a);
        m.velocity(t2, q, p, b);
        if (a != b) return false;
        if (m.hamiltonian && m.hamiltonian(t1, q, p) != m.hamiltonian(t2, q, p))
            return false;
    }
    return true;
}

}  // namespace detail

// ---- factories -----------------------------------------------------------

// Particle of mass m in a scalar potential U(t,q).
inline SystemModel make_potential_particle(double m, PotentialFn U,
                                           PotentialGradFn gradU, int dim = 1,
                                           const AuditOptions& audit = {}) {
    if (!(m > 0)) throw config_error("mass must be positive");
    if (dim < 1) throw config_error("dimension must be >= 1");
    detail::audit_gradient("potential_particle", U, gradU, dim, audit);

    SystemModel md;
    md.dim = dim;
    md.name = "potential_particle";
    md.is_hamiltonian = true;
    md.separable = true;
    md.velocity = [m, dim](double, ConstSpan, ConstSpan p, MutSpan out) {
        for (int d = 0; d < dim; ++d) out[std::size_t(d)] = p[std::size_t(d)] / m;
    };
    md.force = [gradU, dim](double t, ConstSpan q, ConstSpan, MutSpan out) {
        gradU(t, q, out);
        for (int d = 0; d < dim; ++d) out[std::size_t(d)] = -out[std::size_t(d)];
    };
    md.hamiltonian = [m, U, dim](double t, ConstSpan q, ConstSpan p) {
        double k = 0;
        for (int d = 0; d < dim; ++d) k += p[std::size_t(d)] * p[std::size_t(d)];
        return k / (2 * m) + U(t, q);
    };
    md.dH_dq = [gradU](double t, ConstSpan q, ConstSpan, MutSpan out) {
        gradU(t, q, out);
    };
    md.dH_dp = md.velocity;
    md.time_independent = detail::probe_time_independent(md);
    return md;
}

// Adds linear drag -beta*v to the potential particle. With beta = 0 this IS
// the potential particle (identical callables); with beta > 0 the model is
// non-Hamiltonian and carries no H.
inline SystemModel make_damped_particle(double m, PotentialFn U,
                                        PotentialGradFn gradU, double beta,
                                        int dim = 1,
                                        const AuditOptions& audit = {}) {
    if (beta < 0) throw config_error("drag coefficient must be >= 0");
    if (beta == 0) return make_potential_particle(m, std::move(U), std::move(gradU), dim, audit);
    if (!(m > 0)) throw config_error("mass must be positive");
    if (dim < 1) throw config_error("dimension must be >= 1");
    detail::audit_gradient("damped_particle", U, gradU, dim, audit);

    SystemModel md;
    md.dim = dim;
    md.name = "damped_particle";
    md.is_hamiltonian = false;
    md.velocity = [m, dim](double, ConstSpan, ConstSpan p, MutSpan out) {
        for (int d = 0; d < dim; ++d) out[std::size_t(d)] = p[std::size_t(d)] / m;
    };
    // drag acts on the velocity p/m, so the momentum equation reads
    // dp/dt = -grad U - (beta/m) p
    md.force = [gradU, beta, m, dim](double t, ConstSpan q, ConstSpan p, MutSpan out) {
        gradU(t, q, out);
        for (int d = 0; d < dim; ++d)
            out[std::size_t(d)] = -out[std::size_t(d)] - beta * p[std::size_t(d)] / m;
    };
    md.time_independent = detail::probe_time_independent(md);
    return md;
}

// Electromagnetic potentials and their analytic derivatives. dA_dq is stored
// row-major with out[a*3+b] = dA_b/dq_a.
struct EmPotentials {
    std::function<double(double t, ConstSpan r)> phi;
    std::function<void(double t, ConstSpan r, MutSpan out)> grad_phi;  // 3
    std::function<void(double t, ConstSpan r, MutSpan out)> A;         // 3
    std::function<void(double t, ConstSpan r, MutSpan out)> dA_dq;     // 9
    std::function<void(double t, ConstSpan r, MutSpan out)> dA_dt;     // 3
};

// E = -grad phi - (1/c) dA/dt ; H = curl A.
inline void em_fields(const EmPotentials& pots, double c, double t, ConstSpan r,
                      MutSpan E, MutSpan H) {
    Vec gp(3), at(3), j(9);
    pots.grad_phi(t, r, gp);
    pots.dA_dt(t, r, at);
    pots.dA_dq(t, r, j);
    for (int d = 0; d < 3; ++d) E[std::size_t(d)] = -gp[std::size_t(d)] - at[std::size_t(d)] / c;
    H[0] = j[1 * 3 + 2] - j[2 * 3 + 1];
    H[1] = j[2 * 3 + 0] - j[0 * 3 + 2];
    H[2] = j[0 * 3 + 1] - j[1 * 3 + 0];
}

// Charge e in electromagnetic potentials. State momentum is the GENERALIZED
// momentum p = mv + (e/c)A, which keeps the model Hamiltonian with
// H = |p - (e/c)A|^2/(2m) + e*phi.
inline SystemModel make_em_particle(double m, double e, double c,
                                    EmPotentials pots,
                                    const AuditOptions& audit = {}) {
    if (!(m > 0)) throw config_error("mass must be positive");
    if (!(c > 0)) throw config_error("speed of light must be positive");
    auto P = std::make_shared<EmPotentials>(std::move(pots));

    SystemModel md;
    md.dim = 3;
    md.name = "em_particle";
    md.is_hamiltonian = true;
    md.separable = false;  // velocity depends on q through A

    md.velocity = [m, e, c, P](double t, ConstSpan q, ConstSpan p, MutSpan out) {
        Vec a(3);
        P->A(t, q, a);
        for (int d = 0; d < 3; ++d)
            out[std::size_t(d)] = (p[std::size_t(d)] - (e / c) * a[std::size_t(d)]) / m;
    };
    // dp_a/dt = -dH/dq_a = -e dphi/dq_a + (e/c) sum_b v_b dA_b/dq_a.
    // No dA/dt term here: that one lives in the kinetic-momentum equation,
    // and p = mv + (e/c)A already absorbs it.
    md.force = [m, e, c, P](double t, ConstSpan q, ConstSpan p, MutSpan out) {
        Vec a(3), gp(3), j(9);
        P->A(t, q, a);
        P->grad_phi(t, q, gp);
        P->dA_dq(t, q, j);
        Vec v(3);
        for (int d = 0; d < 3; ++d) v[std::size_t(d)] = (p[std::size_t(d)] - (e / c) * a[std::size_t(d)]) / m;
        for (int al = 0; al < 3; ++al) {
            double acc = -e * gp[std::size_t(al)];
            for (int be = 0; be < 3; ++be)
                acc += (e / c) * v[std::size_t(be)] * j[std::size_t(al * 3 + be)];
            out[std::size_t(al)] = acc;
        }
    };
    md.hamiltonian = [m, e, c, P](double t, ConstSpan q, ConstSpan p) {
        Vec a(3);
        P->A(t, q, a);
        double k = 0;
        for (int d = 0; d < 3; ++d) {
            double w = p[std::size_t(d)] - (e / c) * a[std::size_t(d)];
            k += w * w;
        }
        return k / (2 * m) + e * P->phi(t, q);
    };
    md.dH_dp = md.velocity;
    md.dH_dq = [force = md.force](double t, ConstSpan q, ConstSpan p, MutSpan out) {
        force(t, q, p, out);
        for (auto& v : out) v = -v;
    };
    if (audit.enabled) {
        AuditReport rep = audit_hamiltonian_consistency(md, audit);
        if (!rep.ok(audit.tol))
            throw config_error(
                "em_particle: analytic force/velocity disagree with H at " +
                detail::point_string(rep.worst_point) + " (vel err " +
                std::to_string(rep.max_err_velocity) + ", force err " +
                std::to_string(rep.max_err_force) + ")");
    }
    md.time_independent = detail::probe_time_independent(md);
    return md;
}

enum class DragVariant { velocity_drag, canonical_drag };

inline DragVariant parse_drag_variant(const std::string& s) {
    if (s == "velocity_drag") return DragVariant::velocity_drag;
    if (s == "canonical_drag") return DragVariant::canonical_drag;
    throw config_error("unknown drag variant '" + s +
                       "' (expected velocity_drag or canonical_drag)");
}

// EM particle with drag. velocity_drag subtracts beta*v (v = (p-(e/c)A)/m),
// canonical_drag subtracts (beta/m)*p. They coincide when A = 0.
inline SystemModel make_damped_em_particle(double m, double e, double c,
                                           EmPotentials pots, double beta,
                                           DragVariant variant,
                                           const AuditOptions& audit = {}) {
    if (beta < 0) throw config_error("drag coefficient must be >= 0");
    SystemModel base = make_em_particle(m, e, c, std::move(pots), audit);
    if (beta == 0) return base;

    SystemModel md = base;
    md.name = "damped_em_particle";
    md.is_hamiltonian = false;
    md.hamiltonian = nullptr;
    md.dH_dq = nullptr;
    md.dH_dp = nullptr;
    auto base_force = base.force;
    auto vel = base.velocity;
    if (variant == DragVariant::velocity_drag) {
        md.force = [base_force, vel, beta](double t, ConstSpan q, ConstSpan p, MutSpan out) {
            base_force(t, q, p, out);
            Vec v(3);
            vel(t, q, p, v);
            for (int d = 0; d < 3; ++d) out[std::size_t(d)] -= beta * v[std::size_t(d)];
        };
    } else {
        md.force = [base_force, beta, m](double t, ConstSpan q, ConstSpan p, MutSpan out) {
            base_force(t, q, p, out);
            for (int d = 0; d < 3; ++d) out[std::size_t(d)] -= (beta / m) * p[std::size_t(d)];
        };
    }
    md.time_independent = detail::probe_time_independent(md);
    return md;
}

// N identical-structure bodies in d spatial dimensions with a joint
// potential U(t,q) over the stacked configuration vector (s = N*d).
inline SystemModel make_nbody(std::vector<double> masses, int per_dim,
                              PotentialFn U, PotentialGradFn gradU,
                              const AuditOptions& audit = {}) {
    if (masses.empty()) throw config_error("nbody needs at least one body");
    if (per_dim < 1) throw config_error("per-body dimension must be >= 1");
    for (double mi : masses)
        if (!(mi > 0)) throw config_error("all masses must be positive");
    const int s = int(masses.size()) * per_dim;
    detail::audit_gradient("nbody", U, gradU, s, audit);

    SystemModel md;
    md.dim = s;
    md.name = "nbody";
    md.is_hamiltonian = true;
    md.separable = true;
    auto ms = std::make_shared<std::vector<double>>(std::move(masses));
    md.velocity = [ms, per_dim, s](double, ConstSpan, ConstSpan p, MutSpan out) {
        for (int d = 0; d < s; ++d)
            out[std::size_t(d)] = p[std::size_t(d)] / (*ms)[std::size_t(d / per_dim)];
    };
    md.force = [gradU, s](double t, ConstSpan q, ConstSpan, MutSpan out) {
        gradU(t, q, out);
        for (int d = 0; d < s; ++d) out[std::size_t(d)] = -out[std::size_t(d)];
    };
    md.hamiltonian = [ms, per_dim, U, s](double t, ConstSpan q, ConstSpan p) {
        double k = 0;
        for (int d = 0; d < s; ++d)
            k += p[std::size_t(d)] * p[std::size_t(d)] / (2 * (*ms)[std::size_t(d / per_dim)]);
        return k + U(t, q);
    };
    md.dH_dq = [gradU](double t, ConstSpan q, ConstSpan, MutSpan out) {
        gradU(t, q, out);
    };
    md.dH_dp = md.velocity;
    md.time_independent = detail::probe_time_independent(md);
    return md;
}

// Arbitrary Hamiltonian system from H and its analytic partials. The partials
// are audited against finite differences of H; a mismatch names the worst
// sample point.
inline SystemModel make_hamiltonian_model(int s, ScalarFn H, FieldFn dHdq,
                                          FieldFn dHdp,
                                          const AuditOptions& audit = {}) {
    if (s < 1) throw config_error("dimension must be >= 1");
    SystemModel md;
    md.dim = s;
    md.name = "hamiltonian";
    md.is_hamiltonian = true;
    md.hamiltonian = std::move(H);
    md.dH_dq = std::move(dHdq);
    md.dH_dp = std::move(dHdp);
    md.velocity = md.dH_dp;
    md.force = [dhq = md.dH_dq, s](double t, ConstSpan q, ConstSpan p, MutSpan out) {
        dhq(t, q, p, out);
        for (int d = 0; d < s; ++d) out[std::size_t(d)] = -out[std::size_t(d)];
    };
    if (audit.enabled) {
        AuditReport rep = audit_hamiltonian_consistency(md, audit);
        if (!rep.ok(audit.tol))
            throw config_error(
                "hamiltonian model: partials disagree with H at " +
                detail::point_string(rep.worst_point) + " (vel err " +
                std::to_string(rep.max_err_velocity) + ", force err " +
                std::to_string(rep.max_err_force) + ")");
    }
    md.time_independent = detail::probe_time_independent(md);
    return md;
}

}  // namespace hjens
