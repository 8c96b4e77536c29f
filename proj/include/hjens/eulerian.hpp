#pragma once

// Eulerian evolution of the ensemble momentum field p(t,q) and density
// rho(t,q):
//
//   dp/dt + (v . grad) p = F(t, q, p)        advective momentum transport
//   drho/dt + div(rho v) = 0                 continuity
//
// The momentum update is semi-Lagrangian: trace the characteristic foot
// backward with a midpoint step through the frozen velocity field (linear
// interpolation), pull p from the foot (cubic interpolation), then apply the
// source F along the traced segment with the midpoint rule. The density
// update is a conservative first-order upwind finite-volume step whose face
// velocity is the average of the adjacent node velocities; on periodic grids
// total mass is conserved to roundoff, on outflow grids inflow is zero and
// the boundary flux is reported.

#include "integrate.hpp"

#include <optional>
#include <sstream>

namespace hjens {

// v_alpha(q) = phi_alpha(t, q, p(q)) evaluated nodewise.
inline GridField velocity_from_momentum(const SystemModel& m, const GridField& p) {
    const GridSpec& g = p.spec;
    if (p.components != g.dim())
        throw config_error("momentum field needs one component per axis");
    if (g.dim() != m.dim)
        throw config_error("field dimension does not match model");
    GridField v = GridField::zeros(g, g.dim(), p.t);
    const int s = g.dim();
    Vec x(s), pm(s), out(s);
    for (std::int64_t i = 0; i < p.nodes(); ++i) {
        g.node_coords(i, x);
        for (int d = 0; d < s; ++d) pm[std::size_t(d)] = p.at(d, i);
        m.velocity(p.t, x, pm, out);
        for (int d = 0; d < s; ++d) v.at(d, i) = out[std::size_t(d)];
    }
    return v;
}

namespace detail {

// Throws cfl_error when max|v| * dt exceeds half the smallest cell.
inline void enforce_cfl(const GridField& v, double dt) {
    const double limit = 0.5 * v.spec.min_h();
    double worst = 0;
    std::int64_t worst_node = 0;
    for (int c = 0; c < v.components; ++c)
        for (std::int64_t i = 0; i < v.nodes(); ++i) {
            const double s = std::fabs(v.at(c, i));
            if (s > worst) {
                worst = s;
                worst_node = i;
            }
        }
    if (worst * dt > limit * (1 + 1e-12))
        throw cfl_error(worst_node, worst * dt, limit);
}

}  // namespace detail

// One semi-Lagrangian step of the momentum field. Checks the CFL contract
// (max|v| dt <= 0.5 min h) and throws cfl_error when violated.
inline GridField step_momentum_field(const SystemModel& m, const GridField& p,
                                     double dt) {
    if (!(dt > 0)) throw config_error("dt must be positive");
    const GridSpec& g = p.spec;
    GridField v = velocity_from_momentum(m, p);
    detail::enforce_cfl(v, dt);

    GridField out = GridField::zeros(g, p.components, p.t + dt);
    const int s = g.dim();
    Vec x(s), vh(s);
    Vec foot(s), pf(s), ph(s), xm(s);
    Vec f0(s), fm(s);
    for (std::int64_t i = 0; i < p.nodes(); ++i) {
        g.node_coords(i, x);
        // backward trace: fixed-point passes on
        //   foot = x - dt * v(t + dt/2, (x + foot)/2)
        // where the midpoint velocity uses the foot momentum advanced by
        // its material derivative Dp/Dt = F, keeping the trace centered in
        // both space and time
        for (int d = 0; d < s; ++d) foot[std::size_t(d)] = x[std::size_t(d)] - dt * v.at(d, i);
        for (int pass = 0; pass < 2; ++pass) {
            for (int d = 0; d < s; ++d) pf[std::size_t(d)] = interp_linear(p, d, foot);
            m.force(p.t, foot, pf, f0);
            for (int d = 0; d < s; ++d) ph[std::size_t(d)] = pf[std::size_t(d)] + 0.5 * dt * f0[std::size_t(d)];
            for (int d = 0; d < s; ++d) xm[std::size_t(d)] = 0.5 * (x[std::size_t(d)] + foot[std::size_t(d)]);
            m.velocity(p.t + 0.5 * dt, xm, ph, vh);
            for (int d = 0; d < s; ++d) foot[std::size_t(d)] = x[std::size_t(d)] - dt * vh[std::size_t(d)];
        }
        // transported value
        for (int d = 0; d < s; ++d) pf[std::size_t(d)] = interp_cubic(p, d, foot);
        // midpoint source along the segment foot -> x
        m.force(p.t, foot, pf, f0);
        for (int d = 0; d < s; ++d) ph[std::size_t(d)] = pf[std::size_t(d)] + 0.5 * dt * f0[std::size_t(d)];
        for (int d = 0; d < s; ++d) xm[std::size_t(d)] = 0.5 * (x[std::size_t(d)] + foot[std::size_t(d)]);
        m.force(p.t + 0.5 * dt, xm, ph, fm);
        for (int d = 0; d < s; ++d) out.at(d, i) = pf[std::size_t(d)] + dt * fm[std::size_t(d)];
    }
    if (!all_finite(out.data)) throw numeric_error("momentum field update produced non-finite values");
    return out;
}

struct DensityStepReport {
    double mass_before = 0, mass_after = 0;
    double boundary_outflux = 0;  // mass leaving through outflow faces
    int negative_nodes = 0;       // nodes within the -1e-12 tolerance band
};

// Conservative upwind finite-volume continuity step. Face velocity is the
// mean of the two adjacent node velocities; the upwind cell supplies the
// transported density. Density more negative than -1e-12 after the update is
// a scheme failure and raises numeric_error (values are never clipped).
inline GridField step_density(const GridField& v, const GridField& rho, double dt,
                              DensityStepReport* report = nullptr) {
    if (!(dt > 0)) throw config_error("dt must be positive");
    const GridSpec& g = rho.spec;
    if (rho.components != 1) throw config_error("density must be scalar");
    if (!v.spec.same_layout(g)) throw config_error("velocity and density grids differ");
    if (v.components != g.dim())
        throw config_error("velocity field needs one component per axis");
    detail::enforce_cfl(v, dt);

    const int s = g.dim();
    GridField out = rho;
    out.t = rho.t + dt;
    std::vector<int> idx(s);
    std::vector<std::int64_t> stride(s, 1);
    for (int d = s - 2; d >= 0; --d)
        stride[std::size_t(d)] = stride[std::size_t(d + 1)] * g.axes[std::size_t(d + 1)].n;

    double outflux = 0;
    for (int d = 0; d < s; ++d) {
        const auto& ax = g.axes[std::size_t(d)];
        const double h = ax.h();
        for (std::int64_t i = 0; i < g.node_count(); ++i) {
            g.unflatten(i, idx);
            const int id = idx[std::size_t(d)];
            // right-hand face of cell i along axis d; also handles the wrap
            // face on periodic axes when id == n-1
            if (id == ax.n - 1 && ax.bc != Boundary::periodic) continue;
            const std::int64_t j = (id == ax.n - 1)
                                       ? i - std::int64_t(ax.n - 1) * stride[std::size_t(d)]
                                       : i + stride[std::size_t(d)];
            const double vface = 0.5 * (v.at(d, i) + v.at(d, j));
            const double up = vface > 0 ? rho.at(0, i) : rho.at(0, j);
            const double flux = vface * up * dt / h;
            out.at(0, i) -= flux;
            out.at(0, j) += flux;
        }
        if (g.axes[std::size_t(d)].bc == Boundary::outflow) {
            // boundary faces: outward flow leaves the domain, inflow is zero
            for (std::int64_t i = 0; i < g.node_count(); ++i) {
                g.unflatten(i, idx);
                const int id = idx[std::size_t(d)];
                if (id == 0) {
                    const double vface = v.at(d, i);
                    if (vface < 0) {  // leaving through the low face
                        const double flux = -vface * rho.at(0, i) * dt / h;
                        out.at(0, i) -= flux;
                        outflux += flux * g.cell_volume();
                    }
                } else if (id == ax.n - 1) {
                    const double vface = v.at(d, i);
                    if (vface > 0) {  // leaving through the high face
                        const double flux = vface * rho.at(0, i) * dt / h;
                        out.at(0, i) -= flux;
                        outflux += flux * g.cell_volume();
                    }
                }
            }
        }
    }

    int negatives = 0;
    for (std::int64_t i = 0; i < out.nodes(); ++i) {
        const double r = out.at(0, i);
        if (r < -1e-12) {
            std::ostringstream os;
            os << "density went negative (" << r << ") at node " << i
               << " after upwind step";
            throw numeric_error(os.str());
        }
        if (r < 0) ++negatives;
    }
    if (report) {
        const double vol = g.cell_volume();
        report->mass_before = 0;
        report->mass_after = 0;
        for (std::int64_t i = 0; i < rho.nodes(); ++i) report->mass_before += rho.at(0, i);
        for (std::int64_t i = 0; i < out.nodes(); ++i) report->mass_after += out.at(0, i);
        report->mass_before *= vol;
        report->mass_after *= vol;
        report->boundary_outflux = outflux;
        report->negative_nodes = negatives;
    }
    return out;
}

// Total mass sum(rho) * cell volume.
inline double total_mass(const GridField& rho) {
    double m = 0;
    for (std::int64_t i = 0; i < rho.nodes(); ++i) m += rho.at(0, i);
    return m * rho.spec.cell_volume();
}

// Max over node pairs (a<b) of |d p_a/d q_b - d p_b/d q_a|. Zero (to
// discretization error) for gradient momentum fields of Hamiltonian flows.
inline double curl_diagnostic(const GridField& p) {
    const int s = p.spec.dim();
    if (p.components != s)
        throw config_error("curl diagnostic needs a full vector field");
    if (s < 2) return 0;
    std::vector<GridField> grads;
    grads.reserve(std::size_t(s));
    for (int c = 0; c < s; ++c) grads.push_back(gradient_field(p, c));
    double worst = 0;
    for (int a = 0; a < s; ++a)
        for (int b = a + 1; b < s; ++b)
            for (std::int64_t i = 0; i < p.nodes(); ++i)
                worst = std::max(worst, std::fabs(grads[std::size_t(a)].at(b, i) -
                                                  grads[std::size_t(b)].at(a, i)));
    return worst;
}

// Single-valuedness watchdog: max_{a,b,node} |d v_a/d q_b| * min h. When a
// caustic forms the velocity gradient steepens without bound and the measure
// crosses any fixed threshold shortly before the fold time.
inline double multivaluedness_measure(const GridField& v) {
    const int s = v.spec.dim();
    if (v.components != s)
        throw config_error("multivaluedness measure needs a full vector field");
    const double h = v.spec.min_h();
    double worst = 0;
    for (int c = 0; c < s; ++c) {
        GridField gr = gradient_field(v, c);
        worst = std::max(worst, max_abs(gr));
    }
    return worst * h;
}

// Scan a velocity-field history and report the first time the measure
// exceeds the threshold. Default threshold 2.0 places the flag within two
// plain steps of the flow-map fold on well-resolved grids.
inline std::optional<double> detect_multivaluedness(
    const std::vector<GridField>& v_history, double threshold = 2.0) {
    if (!(threshold > 0)) throw config_error("detector threshold must be positive");
    for (const auto& v : v_history)
        if (multivaluedness_measure(v) > threshold) return v.t;
    return std::nullopt;
}

// ---- driver --------------------------------------------------------------

struct EulerianOptions {
    double dt = 1e-3;
    double t_end = 1.0;
    int cadence = 1;              // snapshot every n accepted steps
    bool auto_cfl = true;         // halve dt when the CFL contract would fail
    double detector_threshold = 2.0;
    bool stop_on_flag = true;     // stop marching once flagged
};

struct EulerianResult {
    std::vector<GridField> p_snapshots;
    std::vector<GridField> rho_snapshots;           // empty without a density
    std::optional<double> flagged_time;             // multivaluedness flag
    double final_t = 0;
    double boundary_outflux = 0;                    // accumulated
    std::vector<std::string> log;                   // CFL halvings, flags
};

// March p (and optionally rho) from their shared initial time to t_end.
// The step shrinks by halving whenever the CFL contract would fail and is
// shortened at the end to land on t_end exactly.
inline EulerianResult run_eulerian(const SystemModel& m, const GridField& p0,
                                   const std::optional<GridField>& rho0,
                                   const EulerianOptions& opt) {
    if (!(opt.t_end > p0.t)) throw config_error("t_end must exceed the initial time");
    if (!(opt.dt > 0)) throw config_error("dt must be positive");
    EulerianResult res;
    GridField p = p0;
    std::optional<GridField> rho = rho0;
    if (rho && !rho->spec.same_layout(p.spec))
        throw config_error("density and momentum grids differ");
    if (rho) rho->t = p.t;

    res.p_snapshots.push_back(p);
    if (rho) res.rho_snapshots.push_back(*rho);

    const double limit_frac = 0.5;
    long accepted = 0;
    double t = p.t;
    while (t < opt.t_end - 1e-14) {
        GridField v = velocity_from_momentum(m, p);
        double vmax = max_abs(v);
        double dt_step = std::min(opt.dt, opt.t_end - t);
        if (opt.auto_cfl) {
            const double limit = limit_frac * p.spec.min_h();
            while (vmax * dt_step > limit && dt_step > 1e-15) {
                dt_step *= 0.5;
                std::ostringstream os;
                os << "t=" << t << ": halved dt to " << dt_step
                   << " (max|v|=" << vmax << ", CFL limit " << limit << ")";
                res.log.push_back(os.str());
            }
            if (dt_step <= 1e-15)
                throw numeric_error("CFL step collapsed below 1e-15 at t=" +
                                    std::to_string(t));
        }
        if (rho) {
            DensityStepReport rep;
            *rho = step_density(v, *rho, dt_step, &rep);
            res.boundary_outflux += rep.boundary_outflux;
        }
        p = step_momentum_field(m, p, dt_step);
        t = p.t;
        ++accepted;
        if (accepted % opt.cadence == 0 || !(t < opt.t_end - 1e-14)) {
            res.p_snapshots.push_back(p);
            if (rho) res.rho_snapshots.push_back(*rho);
        }

        GridField vnew = velocity_from_momentum(m, p);
        const double measure = multivaluedness_measure(vnew);
        if (!res.flagged_time && measure > opt.detector_threshold) {
            res.flagged_time = t;
            std::ostringstream os;
            os << "t=" << t << ": single-valuedness watchdog fired (measure "
               << measure << " > " << opt.detector_threshold << ")";
            res.log.push_back(os.str());
            if (opt.stop_on_flag) break;
        }
    }
    res.final_t = t;
    if (res.p_snapshots.back().t != t) {  // flag-break between cadences
        res.p_snapshots.push_back(p);
        if (rho) res.rho_snapshots.push_back(*rho);
    }
    return res;
}

}  // namespace hjens
