#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pcwqed/app.hpp"

using namespace pcwqed;
namespace fs = std::filesystem;

namespace {

io::Config config(const std::string& text) {
    auto c = app::make_config();
    std::istringstream in(text);
    c.parse(in, "inline");
    return c;
}

io::Table table(const app::Output& out, const std::string& name) {
    for (const auto& [n, t] : out.tables)
        if (n == name) return t;
    throw std::runtime_error("no table " + name);
}

std::string report(const app::Output& out, const std::string& name) {
    for (const auto& [n, t] : out.reports)
        if (n == name) return t;
    throw std::runtime_error("no report " + name);
}

double report_value(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(key + " = ", 0) == 0) return std::stod(line.substr(key.size() + 3));
    throw std::runtime_error("no key " + key);
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(testing::TempDir()) / ("pcwqed_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PCWQED_CLI) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string write_spectrum(const app::Output& out, const std::string& name, const fs::path& dir) {
    const auto path = (dir / (name + ".csv")).string();
    io::write_csv(table(out, name), path);
    return path;
}

} // namespace

TEST(CmdBands, UniformStackHasNoGapRows) {
    const auto out = app::run("bands", config("stack.source = layers\nstack.cell_layers = 1.5:185,1.5:185\n"
                                              "stack.ambient_index = 1.5\nbands.points = 801\n"),
                              1);
    const auto gap = table(out, "bands").column_values("in_gap");
    EXPECT_EQ(std::count(gap.begin(), gap.end(), 1.0), 0);
}

TEST(CmdBands, EdgeMatchesCalibratedBandEdge) {
    const auto c = app::make_config();
    const auto cal = app::calibration_from(c);
    const auto t = table(app::run("bands", c, 1), "bands");
    const auto nu = t.column_values("nu_THz");
    const auto gap = t.column_values("in_gap");
    const auto kappa = t.column_values("kappa_rad_per_nm");
    std::size_t edge = 0;
    for (std::size_t i = 1; i < nu.size(); ++i)
        if (gap[i] == 1.0 && gap[i - 1] == 0.0) {
            edge = i;
            break;
        }
    ASSERT_GT(edge, 0u);
    EXPECT_NEAR(units::ghz_from_thz(0.5 * (nu[edge] + nu[edge - 1]) - cal.nu_be()), 0.0, 1.0);
    for (std::size_t i = 0; i < nu.size(); ++i)
        if (gap[i] == 1.0) {
            EXPECT_GT(kappa[i], 0.0) << nu[i];
        }
}

TEST(CmdSpectrum, EmptyEnsembleIsFlat) {
    const auto t = table(app::run("spectrum", config("ensemble.n_bar = 0\n"), 1), "spectrum");
    for (double v : t.column_values("T_over_T0")) EXPECT_EQ(v, 1.0);
}

TEST(CmdSpectrum, FirstResonanceSettingsGiveSymmetricDip) {
    const auto t = table(app::run("spectrum", config("spectrum.detuning_min_mhz = -72.5\nspectrum.detuning_max_mhz = 47.5\n"), 1),
                          "spectrum");
    const auto y = t.column_values("T_over_T0");
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], y[y.size() - 1 - i], 1e-12);
}

// With J < 0 the collective resonance sits at Delta_A + Delta0 = -s J > 0, where |t/t0|^2 peaks
// above 1; the minimum is the other stationary point, on the negative side.
TEST(CmdSpectrum, GapSettingsGiveFanoShape) {
    const auto t = table(app::run("spectrum", config("coupling.gamma_1d_gamma0 = 0.1\ncoupling.j_1d_gamma0 = -2\n"), 1), "spectrum");
    const auto x = t.column_values("detuning_MHz");
    const auto y = t.column_values("T_over_T0");
    const auto k_min = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
    const auto k_max = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    EXPECT_LT(x[k_min] + 12.5, 0.0);
    EXPECT_GT(x[k_max] + 12.5, 0.0);
    EXPECT_GT(y[k_max], 1.0);
    EXPECT_LT(y[k_min], 1.0);
    // The asymmetric line is far from its mirror image about -Delta0.
    EXPECT_GT(std::abs(y[k_min] - y[190 - k_min]), 0.05);
}

TEST(CmdSynth, ZeroNoiseMatchesSpectrumExactly) {
    const auto c = config("synth.noise = 0\n");
    EXPECT_EQ(io::to_csv(table(app::run("synth", c, 3), "synth")), io::to_csv(table(app::run("spectrum", c, 3), "spectrum")));
}

TEST(CmdSynth, SeedReproducibleAndNoiseHonoured) {
    const auto c = config("synth.noise = 0.02\nspectrum.points = 4001\n");
    const auto a = table(app::run("synth", c, 11), "synth");
    const auto b = table(app::run("synth", c, 11), "synth");
    EXPECT_EQ(io::to_csv(a), io::to_csv(b));
    EXPECT_NE(io::to_csv(a), io::to_csv(table(app::run("synth", c, 12), "synth")));
    const auto clean = table(app::run("spectrum", c, 11), "spectrum").column_values("T_over_T0");
    const auto noisy = a.column_values("T_over_T0");
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < noisy.size(); ++i) m += noisy[i] - clean[i];
    m /= noisy.size();
    for (std::size_t i = 0; i < noisy.size(); ++i) s += std::pow(noisy[i] - clean[i] - m, 2);
    EXPECT_NEAR(std::sqrt(s / (noisy.size() - 1)) / 0.02, 1.0, 0.05);
    for (double v : a.column_values("sigma")) EXPECT_EQ(v, 0.02);
}

TEST(CmdFit, SynthRoundTripRecoversTruth) {
    const auto dir = scratch("roundtrip");
    const auto c = config("synth.noise = 0\ncoupling.j_1d_gamma0 = -2\nspectrum.points = 61\n");
    const auto path = write_spectrum(app::run("synth", c, 1), "synth", dir);
    const auto out = app::run("fit", c, 1, path);
    ASSERT_TRUE(out.ok);
    const auto rep = report(out, "fit_report");
    EXPECT_NEAR(report_value(rep, "param.gamma_1d.value"), 1.4, 1e-4);
    EXPECT_NEAR(report_value(rep, "param.j_1d.value"), -2.0, 1e-4);
    EXPECT_EQ(table(out, "fit_residuals").rows.size(), 61u);
}

TEST(CmdFit, PairedFitsReportEnhancementRatio) {
    const auto dir = scratch("pair");
    const auto te = write_spectrum(app::run("synth", config("synth.noise = 0.005\n"), 1), "synth", dir);
    const auto tm_out = app::run("synth", config("synth.noise = 0.005\nspectrum.polarization = tm\n"), 2);
    const auto tm = (dir / "tm.csv").string();
    io::write_csv(table(tm_out, "synth"), tm);
    const auto out = app::run("fit", config("fit.model = pair\nfit.data_csv = " + te + "\nfit.tm_data_csv = " + tm + "\n"), 1);
    ASSERT_TRUE(out.ok);
    EXPECT_NEAR(report_value(report(out, "fit_report"), "enhancement_ratio"), 30.0, 10.0);
    table(out, "fit_residuals_te");
    table(out, "fit_residuals_tm");
}

TEST(CmdFit, MalformedCsvNamesTheLine) {
    const auto dir = scratch("malformed");
    const auto path = (dir / "bad.csv").string();
    {
        std::ofstream f(path);
        f << "detuning_MHz,T_over_T0,sigma\n-1,0.9,0.02\n0,0.8\n";
    }
    try {
        app::run("fit", app::make_config(), 1, path);
        FAIL() << "no error";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(app::run("fit", app::make_config(), 1, ""), InputError);
}

TEST(CmdDecay, ReportsMeanAtomNumber) {
    const auto out = app::run("decay", app::make_config(), 1);
    const auto rep = report(out, "decay_report");
    EXPECT_NEAR(report_value(rep, "n_bar"), 3.0, 0.5);
    EXPECT_NEAR(report_value(rep, "eta_sr"), 0.36, 0.08);
    EXPECT_NEAR(report_value(rep, "single_atom_fit_ratio"), 0.81, 0.03);
    const auto fits = table(out, "decay_fits").column_values("fit_rate_gamma0");
    for (std::size_t i = 1; i < fits.size(); ++i) EXPECT_GT(fits[i], fits[i - 1]);
}

TEST(CmdFig4, ShapeOfTheSweep) {
    const auto t = table(app::run("fig4", app::make_config(), 1), "fig4");
    const auto d = t.column_values("delta_BE_GHz");
    const auto g = t.column_values("gamma_1d_gamma0");
    const auto j = t.column_values("minus_j_1d_gamma0");
    const auto r = t.column_values("R");
    const auto rc = t.column_values("R_cqed");
    EXPECT_LT(std::abs(j[0]), 0.05 * g[0]);
    for (std::size_t i = 2; i < r.size(); ++i) EXPECT_LT(r[i], r[i - 1]) << d[i];
    for (std::size_t i = 0; i < r.size(); ++i)
        if (d[i] >= 50.0) {
            EXPECT_LT(r[i], rc[i]) << d[i];
        }
}

TEST(Binary, ExitCodes) {
    const auto dir = scratch("exit");
    EXPECT_EQ(run_cli("--print-schema"), 0);
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("nonsense"), 2);
    EXPECT_EQ(run_cli("spectrum --format pdf"), 2);
    const auto bad = (dir / "bad.cfg").string();
    {
        std::ofstream f(bad);
        f << "stack.lattice_nm = 370\n";
    }
    EXPECT_EQ(run_cli("spectrum --config " + bad + " --out-dir " + dir.string()), 2);
    const auto flat = (dir / "flat.cfg").string();
    {
        std::ofstream f(flat);
        f << "decay.gamma_sr_gamma_prime = 0\ndecay.max_atoms = 1\ndecay.points = 201\n";
    }
    EXPECT_EQ(run_cli("decay --config " + flat + " --out-dir " + dir.string()), 3);
    EXPECT_EQ(run_cli("fit --data " + (dir / "missing.csv").string() + " --out-dir " + dir.string()), 2);
}

TEST(Binary, RerunsAreByteIdentical) {
    const auto a = scratch("rerun_a"), b = scratch("rerun_b");
    const auto cfg = (a / "mc.cfg").string();
    {
        std::ofstream f(cfg);
        f << "ensemble.position_method = monte_carlo\nensemble.samples = 2000\nspectrum.points = 81\n";
    }
    for (const char* cmd : {"synth", "spectrum"}) {
        ASSERT_EQ(run_cli(std::string(cmd) + " --config " + cfg + " --seed 9 --out-dir " + a.string()), 0);
        ASSERT_EQ(run_cli(std::string(cmd) + " --config " + cfg + " --seed 9 --out-dir " + b.string()), 0);
        const std::string name = cmd;
        EXPECT_EQ(slurp(a / (name + ".csv")), slurp(b / (name + ".csv")));
        EXPECT_EQ(slurp(a / (name + ".svg")), slurp(b / (name + ".svg")));
        EXPECT_FALSE(slurp(a / (name + ".csv")).empty());
    }
}

TEST(Binary, FormatSelectsOutputs) {
    const auto dir = scratch("format");
    ASSERT_EQ(run_cli("spectrum --format csv --out-dir " + dir.string()), 0);
    EXPECT_TRUE(fs::exists(dir / "spectrum.csv"));
    EXPECT_FALSE(fs::exists(dir / "spectrum.svg"));
}
