#include <hjens/runner.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace hjens;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& leaf) {
    fs::path d = fs::temp_directory_path() / "hjens_runner_tests" / leaf;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::vector<std::string> listing(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

RunPaths paths_in(const fs::path& dir, const std::string& prefix) {
    RunPaths rp;
    rp.out_dir = dir.string();
    rp.prefix = prefix;
    rp.quiet = true;
    return rp;
}

const char* oscillator_cloud_ini = R"ini(
[model]
kind = potential
mass = 1
dim = 1
U = "0.5*x^2"

[time]
dt = 1e-2
t_end = 1.0
cadence = 10

[init]
count = 4
q0_lo = -0.5
q0_hi = 0.5
p0_lo = -0.2
p0_hi = 0.2
)ini";

const char* oscillator_field_ini = R"ini(
[model]
kind = potential
mass = 1
dim = 1
U = "0.5*x^2"

[grid]
lo = -1
hi = 1
n = 65
bc = outflow

[time]
dt = 1e-2
t_end = 0.1
cadence = 5

[init]
S = "0.1*x^2"
rho = "exp(-4*x^2)"
)ini";

}  // namespace

TEST_CASE("trajectory runs write one file per ensemble member") {
    fs::path dir = fresh_dir("lagr");
    IniFile ini = IniFile::parse_string(oscillator_cloud_ini);
    run_lagrangian_driver(ini, paths_in(dir, "lagrangian"));

    auto names = listing(dir);
    REQUIRE(names.size() == 4);
    CHECK(names[0] == "lagrangian_traj_0000.hjtraj");
    CHECK(names[3] == "lagrangian_traj_0003.hjtraj");

    Trajectory tr = read_trajectory((dir / names[0]).string());
    REQUIRE(tr.samples.size() > 2);
    CHECK(tr.samples.front().t == 0.0);
    CHECK(tr.samples.back().t == Catch::Approx(1.0));
    // oscillator energy along the orbit stays put
    const auto& a = tr.samples.front();
    const auto& b = tr.samples.back();
    const double Ea = 0.5 * a.p[0] * a.p[0] + 0.5 * a.q[0] * a.q[0];
    const double Eb = 0.5 * b.p[0] * b.p[0] + 0.5 * b.q[0] * b.q[0];
    CHECK(Eb == Catch::Approx(Ea).margin(1e-9));
}

TEST_CASE("sampled clouds are reproducible by seed") {
    fs::path d1 = fresh_dir("seed_a");
    fs::path d2 = fresh_dir("seed_b");
    fs::path d3 = fresh_dir("seed_c");
    IniFile ini = IniFile::parse_string(oscillator_cloud_ini);
    RunPaths rp1 = paths_in(d1, "lagrangian");
    RunPaths rp2 = paths_in(d2, "lagrangian");
    RunPaths rp3 = paths_in(d3, "lagrangian");
    rp3.seed = 999;
    run_lagrangian_driver(ini, rp1);
    run_lagrangian_driver(ini, rp2);
    run_lagrangian_driver(ini, rp3);
    CHECK(slurp(d1 / "lagrangian_traj_0002.hjtraj") ==
          slurp(d2 / "lagrangian_traj_0002.hjtraj"));
    CHECK(slurp(d1 / "lagrangian_traj_0002.hjtraj") !=
          slurp(d3 / "lagrangian_traj_0002.hjtraj"));
}

TEST_CASE("field runs write snapshots, density, and a log") {
    fs::path dir = fresh_dir("euler");
    IniFile ini = IniFile::parse_string(oscillator_field_ini);
    run_eulerian_driver(ini, paths_in(dir, "eulerian"));

    auto names = listing(dir);
    int p_files = 0, rho_files = 0;
    for (const auto& n : names) {
        if (n.rfind("eulerian_p_", 0) == 0) ++p_files;
        if (n.rfind("eulerian_rho_", 0) == 0) ++rho_files;
    }
    // initial field, one cadence dump, final
    CHECK(p_files == 3);
    CHECK(rho_files == 3);

    std::string log = slurp(dir / "eulerian_log.txt");
    CHECK(log.find("p_snapshots 3") != std::string::npos);
    CHECK(log.find("boundary_outflux") != std::string::npos);
    auto fpos = log.find("final_t ");
    REQUIRE(fpos != std::string::npos);
    CHECK(std::stod(log.substr(fpos + 8)) == Catch::Approx(0.1).margin(1e-12));

    FieldSnapshot last = read_field_snapshot((dir / "eulerian_p_0002.hjfield").string());
    CHECK(last.field.t == Catch::Approx(0.1).margin(1e-12));
    CHECK(last.names == std::vector<std::string>{"p"});
}

TEST_CASE("action runs leave a residual audit in the log") {
    fs::path dir = fresh_dir("hj");
    IniFile ini = IniFile::parse_string(R"ini(
[model]
kind = potential
mass = 1
dim = 1
U = "0"

[grid]
lo = -2
hi = 2
n = 81
bc = outflow

[time]
dt = 1e-2
t_end = 0.5
cadence = 5

[init]
S = "x^2/4"
)ini");
    run_hj_driver(ini, paths_in(dir, "hj"));
    auto names = listing(dir);
    int s_files = 0;
    for (const auto& n : names)
        if (n.rfind("hj_S_", 0) == 0) ++s_files;
    CHECK(s_files == 11);  // initial field plus every fifth step

    std::string log = slurp(dir / "hj_log.txt");
    CHECK(log.find("snapshots 11") != std::string::npos);
    auto pos = log.find("residual_last_pair ");
    REQUIRE(pos != std::string::npos);
    const double resid = std::stod(log.substr(pos + 19));
    CHECK(resid < 1e-4);
}

TEST_CASE("momentum-representation runs mirror the field driver") {
    fs::path dir = fresh_dir("prep");
    IniFile ini = IniFile::parse_string(R"ini(
[model]
kind = potential
mass = 1
dim = 1
U = "0.5*x^2"

[grid]
lo = -1
hi = 1
n = 65
bc = outflow
axes = p

[time]
dt = 1e-2
t_end = 0.1
cadence = 5

[init]
Phi = "-0.15*p1^2"
)ini");
    run_prep_driver(ini, paths_in(dir, "prep"));
    auto names = listing(dir);
    int q_files = 0;
    for (const auto& n : names)
        if (n.rfind("prep_q_", 0) == 0) ++q_files;
    CHECK(q_files == 3);
    std::string log = slurp(dir / "prep_log.txt");
    CHECK(log.find("q_snapshots 3") != std::string::npos);

    FieldSnapshot q0 = read_field_snapshot((dir / "prep_q_0000.hjfield").string());
    CHECK(q0.field.spec.kind == Axes::momentum);
}

TEST_CASE("layer runs produce densities, a mixture, and a manifest") {
    fs::path dir = fresh_dir("layers");
    IniFile ini = IniFile::parse_string(R"ini(
[model]
mass = 1

[grid]
lo = -1.2
hi = 1.2
n = 121
bc = outflow

[layers]
omega = 1
energy = 0.5
)ini");
    run_layers_driver(ini, paths_in(dir, "layers"));
    auto names = listing(dir);
    CHECK(std::count(names.begin(), names.end(), "layers_layer0_rho.hjfield") == 1);
    CHECK(std::count(names.begin(), names.end(), "layers_layer1_v.hjfield") == 1);
    CHECK(std::count(names.begin(), names.end(), "layers_mixed_rho.hjfield") == 1);

    std::string man = slurp(dir / "layers_manifest.txt");
    CHECK(man.find("layers 2") != std::string::npos);
    CHECK(man.find("weight0 0.5") != std::string::npos);
    auto pos = man.find("flux_max_asym ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(man.substr(pos + 14)) < 1e-6);
}

TEST_CASE("dipole tracer runs record the spin columns") {
    fs::path dir = fresh_dir("dipole");
    IniFile ini = IniFile::parse_string(R"ini(
[model]
kind = dipole
charge = 0
gamma = 1
spin = 0.5
H3 = "2"

[time]
dt = 1e-3
t_end = 1.0
cadence = 100

[init]
r0 = 0, 0, 0
v0 = 0, 0, 0
xi0 = 0.3
chi0 = 0.0
)ini");
    run_dipole_driver(ini, paths_in(dir, "dipole"));
    std::string csv = slurp(dir / "dipole_tracer.csv");
    CHECK(csv.rfind("# dipole tracer\n", 0) == 0);
    CHECK(csv.find("# columns=t,x,y,z,vx,vy,vz,xi,chi") != std::string::npos);
    // last row: uniform H3=2 precession, chi = gamma H0 t = 2
    auto last_nl = csv.find_last_of('\n', csv.size() - 2);
    auto row = csv.substr(last_nl + 1);
    auto comma = row.find_last_of(',');
    CHECK(std::stod(row.substr(comma + 1)) == Catch::Approx(2.0).margin(1e-6));
}

TEST_CASE("damped em models pick a drag variant by default") {
    fs::path dir = fresh_dir("dem");
    IniFile ini = IniFile::parse_string(R"ini(
[model]
kind = damped_em
mass = 1
beta = 0.2
phi = "0.5*(x^2 + y^2 + z^2)"

[time]
dt = 1e-2
t_end = 0.5

[init]
q0 = 0.4, 0, 0
p0 = 0, 0.3, 0
)ini");
    run_lagrangian_driver(ini, paths_in(dir, "lagrangian"));
    CHECK(fs::exists(dir / "lagrangian_traj_0000.hjtraj"));

    IniFile bad = IniFile::parse_string(R"ini(
[model]
kind = damped_em
mass = 1
beta = 0.2
drag = sticky

[time]
dt = 1e-2
t_end = 0.5

[init]
q0 = 0, 0, 0
p0 = 0, 0, 0
)ini");
    CHECK_THROWS_AS(run_lagrangian_driver(bad, paths_in(dir, "x")), config_error);
}

TEST_CASE("driver configuration mistakes fail as config errors") {
    fs::path dir = fresh_dir("bad");
    RunPaths rp = paths_in(dir, "x");

    IniFile unknown_kind = IniFile::parse_string("[model]\nkind = wavelet\ndim = 1\n");
    CHECK_THROWS_AS(run_lagrangian_driver(unknown_kind, rp), config_error);

    // eulerian on a momentum grid is a category mistake
    IniFile wrong_axes = IniFile::parse_string(R"ini(
[model]
kind = potential
mass = 1
dim = 1
U = "0"

[grid]
lo = -1
hi = 1
n = 17
axes = p

[time]
dt = 1e-2
t_end = 0.1

[init]
S = "0"
)ini");
    CHECK_THROWS_AS(run_eulerian_driver(wrong_axes, rp), config_error);

    IniFile no_init = IniFile::parse_string(R"ini(
[model]
kind = potential
mass = 1
dim = 1
U = "0"

[time]
dt = 1e-2
t_end = 0.1
)ini");
    CHECK_THROWS_AS(run_lagrangian_driver(no_init, rp), config_error);
}

// ---- subprocess checks of the installed binary ---------------------------

namespace {

int run_cli(const std::string& args) {
    const char* bin = std::getenv("HJENS_BIN");
    REQUIRE(bin != nullptr);
    const std::string cmd = std::string(bin) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

}  // namespace

TEST_CASE("command line maps failures to exit codes") {
    if (!std::getenv("HJENS_BIN"))
        SKIP("HJENS_BIN not set; built binary not under test here");

    fs::path dir = fresh_dir("cli");
    CHECK(run_cli("") == 2);                       // no subcommand
    CHECK(run_cli("eulerian") == 2);               // missing --config
    CHECK(run_cli("eulerian --config " + (dir / "absent.ini").string()) == 2);

    {
        std::ofstream os(dir / "bad_section.ini");
        os << "[modle]\nkind = potential\n";
    }
    CHECK(run_cli("eulerian --config " + (dir / "bad_section.ini").string()) == 2);

    {
        std::ofstream os(dir / "cloud.ini");
        os << oscillator_cloud_ini;
    }
    CHECK(run_cli("lagrangian --config " + (dir / "cloud.ini").string() + " --out " +
                  (dir / "out").string() + " --quiet") == 0);
    CHECK(fs::exists(dir / "out" / "lagrangian_traj_0003.hjtraj"));

    // a fold mid-run surfaces as a numerical failure
    {
        std::ofstream os(dir / "fold.ini");
        os << R"ini(
[model]
kind = potential
mass = 1
dim = 1
U = "0"

[grid]
lo = -1
hi = 1
n = 65
bc = outflow

[time]
dt = 5e-3
t_end = 2.0
cadence = 50

[init]
S = "-x^2/2"
)ini";
    }
    CHECK(run_cli("eulerian --config " + (dir / "fold.ini").string() + " --out " +
                  (dir / "fold_out").string() + " --quiet") == 3);
}
