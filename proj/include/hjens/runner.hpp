#pragma once

// Config-driven drivers behind the CLI subcommands: build a model and
// initial data from an INI file, run the requested solver, and write
// hjfield/hjtraj outputs. Everything here is deterministic for a fixed
// config + seed.

#include "dipole.hpp"
#include "hj.hpp"
#include "io.hpp"
#include "multilayer.hpp"
#include "prep.hpp"

#include <filesystem>
#include <iostream>
#include <random>

namespace hjens {

struct RunPaths {
    std::string out_dir = "out";
    std::string prefix;       // defaults to the subcommand name
    bool quiet = false;
    unsigned seed = 12345;    // audit sampling offset + ensemble sampling
};

namespace detail {

inline void note(const RunPaths& rp, const std::string& msg) {
    if (!rp.quiet) std::cout << msg << "\n";
}

inline std::string out_path(const RunPaths& rp, const std::string& tail) {
    std::filesystem::create_directories(rp.out_dir);
    return (std::filesystem::path(rp.out_dir) / (rp.prefix + "_" + tail)).string();
}

inline std::string seq_name(const std::string& stem, int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04d", stem.c_str(), k);
    return buf;
}

// Parse an expression value, rethrowing with the config line attached.
inline Expr config_expr(const IniValue& v, const VarTable& vars) {
    try {
        return parse_expression(v.text, vars);
    } catch (const parse_error& e) {
        throw format_error(e.what(), v.line);
    }
}

// U(t, q) and its symbolic gradient as model callbacks.
struct PotentialPack {
    PotentialFn U;
    PotentialGradFn gradU;
};

inline PotentialPack compile_potential(const IniFile& ini, int s) {
    VarTable vars = VarTable::time_position(s);
    Expr u = config_expr(ini.expression("model", "U"), vars);
    std::vector<Expr> du;
    for (int d = 0; d < s; ++d)
        du.push_back(u.derivative(vars.lookup("q" + std::to_string(d + 1))));
    PotentialPack pk;
    pk.U = [u, s](double t, ConstSpan q) {
        Vec v(std::size_t(s) + 1);
        v[0] = t;
        std::copy(q.begin(), q.end(), v.begin() + 1);
        return u.eval(v);
    };
    pk.gradU = [du, s](double t, ConstSpan q, MutSpan g) {
        Vec v(std::size_t(s) + 1);
        v[0] = t;
        std::copy(q.begin(), q.end(), v.begin() + 1);
        for (int d = 0; d < s; ++d) g[std::size_t(d)] = du[std::size_t(d)].eval(v);
    };
    return pk;
}

// phi, A1..A3 from [model] with all the symbolic derivatives the EM force
// needs.
inline EmPotentials compile_em_potentials(const IniFile& ini) {
    VarTable vars = VarTable::time_position(3);
    Expr phi = ini.has("model", "phi")
                   ? config_expr(ini.expression("model", "phi"), vars)
                   : Expr::number(0);
    std::vector<Expr> A, gphi, dAdq, dAdt;
    for (int b = 0; b < 3; ++b) {
        const std::string key = "A" + std::to_string(b + 1);
        A.push_back(ini.has("model", key)
                        ? config_expr(ini.expression("model", key), vars)
                        : Expr::number(0));
    }
    for (int d = 0; d < 3; ++d) {
        const int slot = vars.lookup("q" + std::to_string(d + 1));
        gphi.push_back(phi.derivative(slot));
        for (int b = 0; b < 3; ++b) dAdq.push_back(A[std::size_t(b)].derivative(slot));
    }
    for (int b = 0; b < 3; ++b) dAdt.push_back(A[std::size_t(b)].derivative(vars.lookup("t")));

    auto bind = [](double t, ConstSpan r, Vec& v) {
        v[0] = t;
        std::copy(r.begin(), r.end(), v.begin() + 1);
    };
    EmPotentials pots;
    pots.phi = [phi, bind](double t, ConstSpan r) {
        Vec v(4);
        bind(t, r, v);
        return phi.eval(v);
    };
    pots.grad_phi = [gphi, bind](double t, ConstSpan r, MutSpan out) {
        Vec v(4);
        bind(t, r, v);
        for (int d = 0; d < 3; ++d) out[std::size_t(d)] = gphi[std::size_t(d)].eval(v);
    };
    pots.A = [A, bind](double t, ConstSpan r, MutSpan out) {
        Vec v(4);
        bind(t, r, v);
        for (int b = 0; b < 3; ++b) out[std::size_t(b)] = A[std::size_t(b)].eval(v);
    };
    pots.dA_dq = [dAdq, bind](double t, ConstSpan r, MutSpan out) {
        Vec v(4);
        bind(t, r, v);
        for (int i = 0; i < 9; ++i) out[std::size_t(i)] = dAdq[std::size_t(i)].eval(v);
    };
    pots.dA_dt = [dAdt, bind](double t, ConstSpan r, MutSpan out) {
        Vec v(4);
        bind(t, r, v);
        for (int b = 0; b < 3; ++b) out[std::size_t(b)] = dAdt[std::size_t(b)].eval(v);
    };
    return pots;
}

inline AuditOptions config_audit(const IniFile& ini, const RunPaths& rp) {
    AuditOptions a;
    a.enabled = ini.text_or("model", "audit", "true") != "false";
    a.start = std::uint32_t(rp.seed % 1000003u);
    return a;
}

}  // namespace detail

// [model] section -> SystemModel. kind selects the factory; expressions are
// compiled with symbolic derivatives so no user-facing finite differencing
// is involved.
inline SystemModel build_model(const IniFile& ini, const RunPaths& rp) {
    const std::string kind = ini.require("model", "kind").text;
    const double mass = ini.number_or("model", "mass", 1.0);
    const AuditOptions audit = detail::config_audit(ini, rp);

    if (kind == "potential" || kind == "damped") {
        const int s = ini.integer_or("model", "dim", 1);
        if (s < 1 || s > 8) throw config_error("model dim out of range");
        auto pk = detail::compile_potential(ini, s);
        if (kind == "potential")
            return make_potential_particle(mass, pk.U, pk.gradU, s, audit);
        return make_damped_particle(mass, pk.U, pk.gradU,
                                    ini.number("model", "beta"), s, audit);
    }
    if (kind == "em" || kind == "damped_em") {
        const double e = ini.number_or("model", "charge", 1.0);
        const double c = ini.number_or("model", "light_speed", 1.0);
        EmPotentials pots = detail::compile_em_potentials(ini);
        if (kind == "em") return make_em_particle(mass, e, c, std::move(pots), audit);
        return make_damped_em_particle(
            mass, e, c, std::move(pots), ini.number("model", "beta"),
            parse_drag_variant(ini.text_or("model", "drag", "velocity_drag")), audit);
    }
    if (kind == "nbody") {
        auto masses = ini.number_list("model", "masses");
        const int per_dim = ini.integer_or("model", "per_dim", 1);
        const int s = int(masses.size()) * per_dim;
        auto pk = detail::compile_potential(ini, s);
        return make_nbody(std::move(masses), per_dim, pk.U, pk.gradU, audit);
    }
    if (kind == "hamiltonian") {
        const int s = ini.integer_or("model", "dim", 1);
        if (s < 1 || s > 8) throw config_error("model dim out of range");
        VarTable vars = VarTable::time_phase(s);
        Expr h = detail::config_expr(ini.expression("model", "H"), vars);
        std::vector<Expr> dq, dp;
        for (int d = 0; d < s; ++d) {
            dq.push_back(h.derivative(vars.lookup("q" + std::to_string(d + 1))));
            dp.push_back(h.derivative(vars.lookup("p" + std::to_string(d + 1))));
        }
        auto bind = [s](double t, ConstSpan q, ConstSpan p, Vec& v) {
            v[0] = t;
            std::copy(q.begin(), q.end(), v.begin() + 1);
            std::copy(p.begin(), p.end(), v.begin() + 1 + s);
        };
        ScalarFn H = [h, bind, s](double t, ConstSpan q, ConstSpan p) {
            Vec v(std::size_t(2 * s) + 1);
            bind(t, q, p, v);
            return h.eval(v);
        };
        FieldFn dHdq = [dq, bind, s](double t, ConstSpan q, ConstSpan p, MutSpan out) {
            Vec v(std::size_t(2 * s) + 1);
            bind(t, q, p, v);
            for (int d = 0; d < s; ++d) out[std::size_t(d)] = dq[std::size_t(d)].eval(v);
        };
        FieldFn dHdp = [dp, bind, s](double t, ConstSpan q, ConstSpan p, MutSpan out) {
            Vec v(std::size_t(2 * s) + 1);
            bind(t, q, p, v);
            for (int d = 0; d < s; ++d) out[std::size_t(d)] = dp[std::size_t(d)].eval(v);
        };
        return make_hamiltonian_model(s, H, dHdq, dHdp, audit);
    }
    throw config_error("unknown model kind '" + kind + "'");
}

// [grid] section. axes=q|p picks the representation.
inline GridSpec build_grid(const IniFile& ini) {
    auto lo = ini.number_list("grid", "lo");
    auto hi = ini.number_list("grid", "hi");
    auto n = ini.number_list("grid", "n");
    if (lo.size() != hi.size() || lo.size() != n.size())
        throw config_error("[grid] lo/hi/n must agree in length");
    std::vector<std::string> bc(lo.size(), "outflow");
    if (ini.has("grid", "bc")) {
        bc = ini.token_list("grid", "bc");
        if (bc.size() == 1) bc.assign(lo.size(), bc[0]);
        if (bc.size() != lo.size())
            throw config_error("[grid] bc must name one condition, or one per axis");
    }
    GridSpec g;
    const std::string axes = ini.text_or("grid", "axes", "q");
    if (axes != "q" && axes != "p") throw config_error("[grid] axes must be q or p");
    g.kind = axes == "q" ? Axes::position : Axes::momentum;
    for (std::size_t d = 0; d < lo.size(); ++d) {
        AxisSpec ax;
        ax.lo = lo[d];
        ax.hi = hi[d];
        ax.n = int(n[d]);
        if (bc[d] == "periodic") ax.bc = Boundary::periodic;
        else if (bc[d] == "outflow") ax.bc = Boundary::outflow;
        else throw config_error("unknown boundary '" + bc[d] + "'");
        g.axes.push_back(ax);
    }
    g.validate();
    return g;
}

namespace detail {

// Sample a scalar [init] expression (variables t, q1..qs / p1..ps per the
// grid kind) onto the grid at time t0.
inline GridField init_scalar_field(const IniFile& ini, const std::string& key,
                                   const GridSpec& g, double t0) {
    const int s = g.dim();
    VarTable vars = g.kind == Axes::position ? VarTable::time_position(s)
                                             : VarTable::time_momentum(s);
    Expr e = config_expr(ini.expression("init", key), vars);
    Vec v(std::size_t(s) + 1);
    v[0] = t0;
    return sample_field(g, 1, t0, [&](ConstSpan x, MutSpan out) {
        std::copy(x.begin(), x.end(), v.begin() + 1);
        out[0] = e.eval(v);
    });
}

// Initial momentum field: grad of the S expression when given, else
// components p1..ps directly.
inline GridField init_momentum_field(const IniFile& ini, const GridSpec& g, double t0) {
    const int s = g.dim();
    VarTable vars = VarTable::time_position(s);
    std::vector<Expr> comps;
    if (ini.has("init", "S")) {
        if (ini.has("init", "p1"))
            throw config_error("[init] gives both S and p1; pick one");
        Expr S = config_expr(ini.expression("init", "S"), vars);
        for (int d = 0; d < s; ++d)
            comps.push_back(S.derivative(vars.lookup("q" + std::to_string(d + 1))));
    } else {
        for (int d = 0; d < s; ++d) {
            const std::string key = "p" + std::to_string(d + 1);
            if (!ini.has("init", key))
                throw config_error("[init] needs S or p1..p" + std::to_string(s));
            comps.push_back(config_expr(ini.expression("init", key), vars));
        }
    }
    Vec v(std::size_t(s) + 1);
    v[0] = t0;
    return sample_field(g, s, t0, [&](ConstSpan x, MutSpan out) {
        std::copy(x.begin(), x.end(), v.begin() + 1);
        for (int d = 0; d < s; ++d) out[std::size_t(d)] = comps[std::size_t(d)].eval(v);
    });
}

// Initial coordinate field on a momentum grid: q = -dPhi/dp when Phi is
// given, else components q1..qs.
inline GridField init_coordinate_field(const IniFile& ini, const GridSpec& g, double t0) {
    const int s = g.dim();
    VarTable vars = VarTable::time_momentum(s);
    std::vector<Expr> comps;
    if (ini.has("init", "Phi")) {
        if (ini.has("init", "q1"))
            throw config_error("[init] gives both Phi and q1; pick one");
        Expr Phi = config_expr(ini.expression("init", "Phi"), vars);
        for (int d = 0; d < s; ++d)
            comps.push_back(
                Phi.derivative(vars.lookup("p" + std::to_string(d + 1))).negated());
    } else {
        for (int d = 0; d < s; ++d) {
            const std::string key = "q" + std::to_string(d + 1);
            if (!ini.has("init", key))
                throw config_error("[init] needs Phi or q1..q" + std::to_string(s));
            comps.push_back(config_expr(ini.expression("init", key), vars));
        }
    }
    Vec v(std::size_t(s) + 1);
    v[0] = t0;
    return sample_field(g, s, t0, [&](ConstSpan x, MutSpan out) {
        std::copy(x.begin(), x.end(), v.begin() + 1);
        for (int d = 0; d < s; ++d) out[std::size_t(d)] = comps[std::size_t(d)].eval(v);
    });
}

inline std::optional<GridField> init_density(const IniFile& ini, const GridSpec& g,
                                             double t0) {
    if (ini.has("init", "rho_file")) {
        FieldSnapshot snap = read_field_snapshot(ini.require("init", "rho_file").text);
        if (!snap.field.spec.same_layout(g))
            throw config_error("rho_file grid does not match [grid]");
        snap.field.t = t0;
        return snap.field;
    }
    if (!ini.has("init", "rho")) return std::nullopt;
    return init_scalar_field(ini, "rho", g, t0);
}

inline EulerianOptions config_eulerian_options(const IniFile& ini) {
    EulerianOptions opt;
    opt.dt = ini.number("time", "dt");
    opt.t_end = ini.number("time", "t_end");
    opt.cadence = ini.integer_or("time", "cadence", 1);
    opt.auto_cfl = ini.text_or("time", "auto_cfl", "true") != "false";
    opt.detector_threshold = ini.number_or("time", "detector_threshold", 2.0);
    opt.stop_on_flag = ini.text_or("time", "stop_on_flag", "true") != "false";
    return opt;
}

inline void write_log(const RunPaths& rp, const std::vector<std::string>& lines) {
    std::ofstream os(out_path(rp, "log.txt"));
    for (const auto& l : lines) os << l << "\n";
}

inline std::vector<std::string> comp_names(const std::string& stem, int n) {
    std::vector<std::string> names;
    if (n == 1) {
        names.push_back(stem);
        return names;
    }
    for (int c = 0; c < n; ++c) names.push_back(stem + std::to_string(c + 1));
    return names;
}

}  // namespace detail

// `lagrangian`: integrate a single phase point or a sampled cloud, write one
// hjtraj file per member.
inline void run_lagrangian_driver(const IniFile& ini, const RunPaths& rp) {
    SystemModel m = build_model(ini, rp);
    const double dt = ini.number("time", "dt");
    const double t_end = ini.number("time", "t_end");
    const int cadence = ini.integer_or("time", "cadence", 1);
    const Method method = parse_method(ini.text_or("time", "method", "rk4"));
    const double t0 = ini.number_or("time", "t0", 0.0);

    EnsembleCloud cloud;
    if (ini.has("init", "q0")) {
        PhaseState st;
        st.t = t0;
        st.q = ini.number_list("init", "q0");
        st.p = ini.number_list("init", "p0");
        if (int(st.q.size()) != m.dim || int(st.p.size()) != m.dim)
            throw config_error("[init] q0/p0 must have one entry per dimension");
        cloud.states.push_back(st);
        cloud.weights.push_back(1.0);
    } else if (ini.has("init", "count")) {
        const int count = ini.integer("init", "count");
        if (count < 1) throw config_error("[init] count must be >= 1");
        auto qlo = ini.number_list("init", "q0_lo");
        auto qhi = ini.number_list("init", "q0_hi");
        auto plo = ini.number_list("init", "p0_lo");
        auto phi = ini.number_list("init", "p0_hi");
        if (int(qlo.size()) != m.dim || int(qhi.size()) != m.dim ||
            int(plo.size()) != m.dim || int(phi.size()) != m.dim)
            throw config_error("[init] sampling bounds must have one entry per dimension");
        std::mt19937 rng(rp.seed);
        for (int k = 0; k < count; ++k) {
            PhaseState st;
            st.t = t0;
            for (int d = 0; d < m.dim; ++d) {
                std::uniform_real_distribution<double> uq(qlo[std::size_t(d)], qhi[std::size_t(d)]);
                st.q.push_back(uq(rng));
            }
            for (int d = 0; d < m.dim; ++d) {
                std::uniform_real_distribution<double> up(plo[std::size_t(d)], phi[std::size_t(d)]);
                st.p.push_back(up(rng));
            }
            cloud.states.push_back(std::move(st));
            cloud.weights.push_back(1.0 / count);
        }
    } else {
        throw config_error("[init] needs q0/p0 or count with sampling bounds");
    }

    std::vector<Trajectory> trajs;
    integrate_ensemble(m, cloud, dt, t_end, method, &trajs, cadence);
    for (std::size_t i = 0; i < trajs.size(); ++i)
        write_trajectory(
            detail::out_path(rp, detail::seq_name("traj", int(i)) + ".hjtraj"), trajs[i]);
    detail::note(rp, "wrote " + std::to_string(trajs.size()) + " trajectories to " + rp.out_dir);
}

// `eulerian`: march the momentum (and optional density) fields; write
// snapshots and a run log. A multivaluedness flag with stop_on_flag set
// surfaces as a caustic error so the CLI can exit 3 with the time.
inline void run_eulerian_driver(const IniFile& ini, const RunPaths& rp) {
    SystemModel m = build_model(ini, rp);
    GridSpec g = build_grid(ini);
    if (g.kind != Axes::position)
        throw config_error("eulerian runs need a position-space grid (axes=q)");
    if (g.dim() != m.dim) throw config_error("grid and model dimensions differ");
    const double t0 = ini.number_or("time", "t0", 0.0);
    GridField p0 = detail::init_momentum_field(ini, g, t0);
    std::optional<GridField> rho0 = detail::init_density(ini, g, t0);
    EulerianOptions opt = detail::config_eulerian_options(ini);

    EulerianResult res = run_eulerian(m, p0, rho0, opt);
    for (std::size_t k = 0; k < res.p_snapshots.size(); ++k)
        write_field_snapshot(
            detail::out_path(rp, detail::seq_name("p", int(k)) + ".hjfield"),
            res.p_snapshots[k], detail::comp_names("p", g.dim()));
    for (std::size_t k = 0; k < res.rho_snapshots.size(); ++k)
        write_field_snapshot(
            detail::out_path(rp, detail::seq_name("rho", int(k)) + ".hjfield"),
            res.rho_snapshots[k], {"rho"});
    std::vector<std::string> log = res.log;
    log.push_back("final_t " + detail::fmt_g17(res.final_t));
    log.push_back("p_snapshots " + std::to_string(res.p_snapshots.size()));
    if (rho0) log.push_back("boundary_outflux " + detail::fmt_g17(res.boundary_outflux));
    if (res.flagged_time) log.push_back("flagged_t " + detail::fmt_g17(*res.flagged_time));
    detail::write_log(rp, log);
    detail::note(rp, "wrote " + std::to_string(res.p_snapshots.size()) +
                         " momentum snapshots to " + rp.out_dir);
    if (res.flagged_time && opt.stop_on_flag) throw caustic_error(*res.flagged_time);
}

// `hj`: solve the action equation by characteristics from S0, write action
// snapshots plus a residual estimate for the last snapshot pair.
inline void run_hj_driver(const IniFile& ini, const RunPaths& rp) {
    SystemModel m = build_model(ini, rp);
    GridSpec g = build_grid(ini);
    if (g.kind != Axes::position)
        throw config_error("hj runs need a position-space grid (axes=q)");
    if (g.dim() != m.dim) throw config_error("grid and model dimensions differ");
    const double t0 = ini.number_or("time", "t0", 0.0);

    GridField S0;
    if (ini.has("init", "S_file")) {
        FieldSnapshot snap = read_field_snapshot(ini.require("init", "S_file").text);
        if (!snap.field.spec.same_layout(g))
            throw config_error("S_file grid does not match [grid]");
        S0 = snap.field;
        S0.t = t0;
    } else {
        S0 = detail::init_scalar_field(ini, "S", g, t0);
    }

    HjSolveOptions opt;
    opt.dt = ini.number("time", "dt");
    opt.t_end = ini.number("time", "t_end");
    opt.cadence = ini.integer_or("time", "cadence", 10);

    ActionField S = solve_hj_characteristics(m, S0, opt);
    for (std::size_t k = 0; k < S.snapshots.size(); ++k)
        write_field_snapshot(
            detail::out_path(rp, detail::seq_name("S", int(k)) + ".hjfield"),
            S.snapshots[k], {"S"});
    std::vector<std::string> log;
    log.push_back("snapshots " + std::to_string(S.snapshots.size()));
    if (S.snapshots.size() >= 2) {
        const auto& a = S.snapshots[S.snapshots.size() - 2];
        const auto& b = S.snapshots.back();
        log.push_back("residual_last_pair " +
                      detail::fmt_g17(hj_residual_max_interior(m, a, b)));
    }
    detail::write_log(rp, log);
    detail::note(rp, "wrote " + std::to_string(S.snapshots.size()) +
                         " action snapshots to " + rp.out_dir);
}

// `prep`: the momentum-representation mirror of `eulerian`.
inline void run_prep_driver(const IniFile& ini, const RunPaths& rp) {
    SystemModel m = build_model(ini, rp);
    GridSpec g = build_grid(ini);
    if (g.kind != Axes::momentum)
        throw config_error("prep runs need a momentum-space grid (axes=p)");
    if (g.dim() != m.dim) throw config_error("grid and model dimensions differ");
    const double t0 = ini.number_or("time", "t0", 0.0);
    GridField q0 = detail::init_coordinate_field(ini, g, t0);
    std::optional<GridField> rho0 = detail::init_density(ini, g, t0);
    EulerianOptions opt = detail::config_eulerian_options(ini);

    PrepRunResult res = run_prep(m, q0, rho0, opt);
    for (std::size_t k = 0; k < res.q_snapshots.size(); ++k)
        write_field_snapshot(
            detail::out_path(rp, detail::seq_name("q", int(k)) + ".hjfield"),
            res.q_snapshots[k], detail::comp_names("q", g.dim()));
    for (std::size_t k = 0; k < res.rho_snapshots.size(); ++k)
        write_field_snapshot(
            detail::out_path(rp, detail::seq_name("rho", int(k)) + ".hjfield"),
            res.rho_snapshots[k], {"rho"});
    std::vector<std::string> log = res.log;
    log.push_back("final_t " + detail::fmt_g17(res.final_t));
    log.push_back("q_snapshots " + std::to_string(res.q_snapshots.size()));
    if (rho0) log.push_back("boundary_outflux " + detail::fmt_g17(res.boundary_outflux));
    detail::write_log(rp, log);
    detail::note(rp, "wrote " + std::to_string(res.q_snapshots.size()) +
                         " coordinate snapshots to " + rp.out_dir);
}

// `layers`: two-branch oscillator ensemble at fixed energy; writes per-layer
// density/velocity snapshots, the mixed density, and a manifest with the
// flux-matching report.
inline void run_layers_driver(const IniFile& ini, const RunPaths& rp) {
    if (!ini.has_section("layers")) throw config_error("layers runs need a [layers] section");
    const double mass = ini.number_or("model", "mass", 1.0);
    const double omega = ini.number("layers", "omega");
    const double energy = ini.number("layers", "energy");
    GridSpec g = build_grid(ini);
    if (g.dim() != 1 || g.kind != Axes::position)
        throw config_error("layer construction expects a 1-d position grid");

    MultilayerEnsemble ens = build_oscillator_layers(energy, mass, omega, g);
    if (ini.has("layers", "weights")) {
        auto w = ini.number_list("layers", "weights");
        if (w.size() != ens.layers.size())
            throw config_error("[layers] weights count does not match layer count");
        for (std::size_t i = 0; i < w.size(); ++i) ens.layers[i].weight = w[i];
        ens.validate();
    }
    FluxMatchReport flux = check_flux_matching(ens.layers[0], ens.layers[1]);
    GridField mixed = mix_density(ens);

    for (std::size_t i = 0; i < ens.layers.size(); ++i) {
        write_field_snapshot(
            detail::out_path(rp, "layer" + std::to_string(i) + "_rho.hjfield"),
            ens.layers[i].rho, {"rho"});
        write_field_snapshot(
            detail::out_path(rp, "layer" + std::to_string(i) + "_v.hjfield"),
            ens.layers[i].v, {"v"});
    }
    write_field_snapshot(detail::out_path(rp, "mixed_rho.hjfield"), mixed, {"rho"});

    std::ofstream man(detail::out_path(rp, "manifest.txt"));
    man << "layers " << ens.layers.size() << "\n";
    for (std::size_t i = 0; i < ens.layers.size(); ++i)
        man << "weight" << i << " " << detail::fmt_g17(ens.layers[i].weight) << "\n";
    man << "flux_max_asym " << detail::fmt_g17(flux.max_asym) << "\n";
    man << "flux_scale " << detail::fmt_g17(flux.flux_scale) << "\n";
    detail::note(rp, "wrote " + std::to_string(ens.layers.size()) + " layers to " + rp.out_dir);
}

namespace detail {

// E1..E3, H1..H3 expressions over (t, x, y, z), with the symbolic H
// gradient the dipole force needs.
inline EmFieldSet compile_dipole_fields(const IniFile& ini) {
    VarTable vars = VarTable::time_position(3);
    std::vector<Expr> E, H, gH;
    for (int i = 0; i < 3; ++i) {
        const std::string ek = "E" + std::to_string(i + 1);
        const std::string hk = "H" + std::to_string(i + 1);
        E.push_back(ini.has("model", ek) ? config_expr(ini.expression("model", ek), vars)
                                         : Expr::number(0));
        H.push_back(ini.has("model", hk) ? config_expr(ini.expression("model", hk), vars)
                                         : Expr::number(0));
    }
    for (int a = 0; a < 3; ++a) {
        const int slot = vars.lookup("q" + std::to_string(a + 1));
        for (int i = 0; i < 3; ++i) gH.push_back(H[std::size_t(i)].derivative(slot));
    }
    auto bind = [](double t, ConstSpan r, Vec& v) {
        v[0] = t;
        std::copy(r.begin(), r.end(), v.begin() + 1);
    };
    EmFieldSet fs;
    fs.E = [E, bind](double t, ConstSpan r, MutSpan out) {
        Vec v(4);
        bind(t, r, v);
        for (int i = 0; i < 3; ++i) out[std::size_t(i)] = E[std::size_t(i)].eval(v);
    };
    fs.H = [H, bind](double t, ConstSpan r, MutSpan out) {
        Vec v(4);
        bind(t, r, v);
        for (int i = 0; i < 3; ++i) out[std::size_t(i)] = H[std::size_t(i)].eval(v);
    };
    fs.grad_H = [gH, bind](double t, ConstSpan r, MutSpan out) {
        Vec v(4);
        bind(t, r, v);
        for (int i = 0; i < 9; ++i) out[std::size_t(i)] = gH[std::size_t(i)].eval(v);
    };
    return fs;
}

}  // namespace detail

// `dipole`: tracer mode ([init] r0/v0/xi0/chi0) integrates one dipole and
// writes a CSV table; field mode ([init] xi/chi plus a prescribed velocity
// v1..vs) advects the spin fields and writes hjfield snapshots.
inline void run_dipole_driver(const IniFile& ini, const RunPaths& rp) {
    DipoleParams par;
    par.m = ini.number_or("model", "mass", 1.0);
    par.e = ini.number_or("model", "charge", 1.0);
    par.c = ini.number_or("model", "light_speed", 1.0);
    par.gamma = ini.number_or("model", "gamma", 1.0);
    par.spin_mag = ini.number_or("model", "spin", 0.5);
    par.validate();
    EmFieldSet fields = detail::compile_dipole_fields(ini);
    const double t0 = ini.number_or("time", "t0", 0.0);
    const double dt = ini.number("time", "dt");
    const double t_end = ini.number("time", "t_end");
    const int cadence = ini.integer_or("time", "cadence", 1);

    if (ini.has("init", "r0")) {
        DipoleState d0;
        d0.t = t0;
        d0.r = ini.number_list("init", "r0");
        d0.v = ini.number_list("init", "v0");
        d0.xi = ini.number("init", "xi0");
        d0.chi = ini.number_or("init", "chi0", 0.0);
        auto traj = integrate_dipole(par, fields, d0, dt, t_end, cadence);
        std::ofstream os(detail::out_path(rp, "tracer.csv"));
        os << "# dipole tracer\n# columns=t,x,y,z,vx,vy,vz,xi,chi\n";
        for (const auto& st : traj) {
            os << detail::fmt_g17(st.t);
            for (double v : st.r) os << "," << detail::fmt_g17(v);
            for (double v : st.v) os << "," << detail::fmt_g17(v);
            os << "," << detail::fmt_g17(st.xi) << "," << detail::fmt_g17(st.chi) << "\n";
        }
        detail::note(rp, "wrote tracer with " + std::to_string(traj.size()) +
                             " samples to " + rp.out_dir);
        return;
    }

    GridSpec g = build_grid(ini);
    if (g.kind != Axes::position)
        throw config_error("dipole field runs need a position-space grid");
    const int s = g.dim();
    SpinFields f;
    f.xi = detail::init_scalar_field(ini, "xi", g, t0);
    f.chi = detail::init_scalar_field(ini, "chi", g, t0);

    VarTable vars = VarTable::time_position(s);
    std::vector<Expr> vexprs;
    for (int d = 0; d < s; ++d)
        vexprs.push_back(detail::config_expr(
            ini.expression("init", "v" + std::to_string(d + 1)), vars));

    std::vector<std::string> log;
    const long nsteps = long(std::ceil((t_end - t0) / dt - 1e-12));
    int written = 0;
    auto dump = [&](int k) {
        write_field_snapshot(
            detail::out_path(rp, detail::seq_name("xi", k) + ".hjfield"), f.xi, {"xi"});
        write_field_snapshot(
            detail::out_path(rp, detail::seq_name("chi", k) + ".hjfield"), f.chi, {"chi"});
    };
    dump(written++);
    Vec bind(std::size_t(s) + 1);
    for (long k = 0; k < nsteps; ++k) {
        const double h = std::min(dt, t_end - f.xi.t);
        bind[0] = f.xi.t;
        GridField v = sample_field(g, s, f.xi.t, [&](ConstSpan x, MutSpan out) {
            std::copy(x.begin(), x.end(), bind.begin() + 1);
            for (int d = 0; d < s; ++d) out[std::size_t(d)] = vexprs[std::size_t(d)].eval(bind);
        });
        SpinStepReport rep;
        f = step_spin_fields(f, v, fields, par, h, &rep);
        if (rep.pole_nodes || rep.clamped_nodes)
            log.push_back("t " + detail::fmt_g17(f.xi.t) + " pole_nodes " +
                          std::to_string(rep.pole_nodes) + " clamped " +
                          std::to_string(rep.clamped_nodes));
        if ((k + 1) % cadence == 0 || k + 1 == nsteps) dump(written++);
    }
    log.push_back("final_t " + detail::fmt_g17(f.xi.t));
    log.push_back("spin_snapshots " + std::to_string(written));
    detail::write_log(rp, log);
    detail::note(rp, "wrote " + std::to_string(written) + " spin-field snapshots to " +
                         rp.out_dir);
}

}  // namespace hjens
