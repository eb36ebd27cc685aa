// app.hpp: run configuration and the command-line subcommands as library calls
//
// Every command maps a Config (plus seed) to named CSV tables, SVG charts and text
// reports; the executable only parses flags and writes the files.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pcwqed/calibration.hpp"
#include "pcwqed/decay.hpp"
#include "pcwqed/ensemble.hpp"
#include "pcwqed/errors.hpp"
#include "pcwqed/fitkit.hpp"
#include "pcwqed/io/config.hpp"
#include "pcwqed/io/csv.hpp"
#include "pcwqed/io/svg.hpp"
#include "pcwqed/photonic1d.hpp"
#include "pcwqed/random.hpp"
#include "pcwqed/units.hpp"

namespace pcwqed::app {

inline constexpr int schema_version = 1;

inline std::vector<io::KeySpec> schema() {
    using io::ValueType;
    return {
        {"schema_version", ValueType::integer, "1", "config format version"},
        {"seed", ValueType::integer, "20150704", "seed for Monte Carlo averaging and synthetic noise"},

        {"stack.source", ValueType::choice, "design", "design: two-layer cell from stack.* knobs; layers: explicit lists",
         {"design", "layers"}},
        {"stack.a_nm", ValueType::real, "370", "lattice constant"},
        {"stack.fill", ValueType::real, "0.5", "high-index fraction of the cell"},
        {"stack.n_mean", ValueType::real, "1.78484294", "fill-weighted mean index (also the ambient index)"},
        {"stack.delta_n", ValueType::real, "0.18576978", "index contrast of the nominal cells"},
        {"stack.n_cells", ValueType::integer, "150", "nominal cells"},
        {"stack.taper_cells", ValueType::integer, "10", "taper cells on each side, contrast ramped linearly"},
        {"stack.cell_layers", ValueType::text, "1.8777278:185,1.6919580:185",
         "layers source: unit cell as index:thickness_nm pairs"},
        {"stack.taper_layers", ValueType::text, "", "layers source: left taper, outermost first, whole cells"},
        {"stack.ambient_index", ValueType::real, "1.78484294", "layers source: index of the surrounding waveguide"},
        {"calibration.gamma_ref_gamma0", ValueType::real, "1.5", "guided rate at nu_1 fixing the Green's function scale"},

        {"bands.nu_min_thz", ValueType::real, "200", "sweep start"},
        {"bands.nu_max_thz", ValueType::real, "240", "sweep end"},
        {"bands.points", ValueType::integer, "20001", "sweep points"},

        {"fields.at", ValueType::choice, "nu1", "nu1: first resonance below the band edge; detuning: fields.delta_be_ghz",
         {"nu1", "detuning"}},
        {"fields.delta_be_ghz", ValueType::real, "60", "probe detuning from the band edge (positive into the gap)"},
        {"fields.samples_per_layer", ValueType::integer, "8", "samples per layer for the peak intensity"},

        {"rates.delta_min_ghz", ValueType::real, "-600", "sweep start, detuning from the band edge"},
        {"rates.delta_max_ghz", ValueType::real, "400", "sweep end"},
        {"rates.points", ValueType::integer, "201", "sweep points"},

        {"fig4.delta_min_ghz", ValueType::real, "-120", "sweep start above nu_1"},
        {"fig4.delta_max_ghz", ValueType::real, "150", "sweep end"},
        {"fig4.points", ValueType::integer, "28", "sweep points"},
        {"fig4.include_nu1", ValueType::boolean, "true", "prepend a row at nu_1"},
        {"cqed.gamma_c_ghz", ValueType::real, "60", "cavity linewidth of the comparator"},

        {"coupling.source", ValueType::choice, "manual", "manual: coupling.* rates; model: Green's function at coupling.delta_be_ghz",
         {"manual", "model"}},
        {"coupling.gamma_1d_gamma0", ValueType::real, "1.4", "peak guided decay rate"},
        {"coupling.j_1d_gamma0", ValueType::real, "0", "peak guided coherent shift"},
        {"coupling.gamma_prime_gamma0", ValueType::real, "2.0", "non-guided decay rate"},
        {"coupling.delta_0_mhz", ValueType::real, "12.5", "AC Stark plus Lamb shift"},
        {"coupling.delta_be_ghz", ValueType::real, "-133", "model source: atom detuning from the band edge"},
        {"coupling.kappa_per_nm", ValueType::real, "0", "manual source: attenuation constant for the exact model"},

        {"ensemble.n_bar", ValueType::real, "3", "mean atom number"},
        {"ensemble.position_method", ValueType::choice, "quadrature", "averaging over positions",
         {"quadrature", "monte_carlo", "pinned"}},
        {"ensemble.number_statistics", ValueType::choice, "poisson", "atom-number distribution", {"poisson", "fixed"}},
        {"ensemble.model", ValueType::choice, "bright_mode", "transmission formula", {"bright_mode", "exact"}},
        {"ensemble.samples", ValueType::integer, "100000", "Monte Carlo configurations per atom number"},
        {"ensemble.bin_width", ValueType::real, "0.001", "quadrature grid spacing in s = sum cos^2"},
        {"ensemble.cloud_half_width_nm", ValueType::real, "6000", "exact model: positions uniform in +-width"},

        {"spectrum.polarization", ValueType::choice, "te", "te: averaged spin model; tm: optical density model", {"te", "tm"}},
        {"spectrum.detuning_min_mhz", ValueType::real, "-60", "probe detuning start"},
        {"spectrum.detuning_max_mhz", ValueType::real, "60", "probe detuning end"},
        {"spectrum.points", ValueType::integer, "241", "probe detuning points"},
        {"tm.gamma_1d_gamma0", ValueType::real, "0.045", "guided rate of the weakly coupled polarization"},

        {"synth.noise", ValueType::real, "0.02", "additive Gaussian noise on T/T0 (one sigma)"},

        {"fit.model", ValueType::choice, "te", "te, tm, or pair (te from fit.data_csv, tm from fit.tm_data_csv)",
         {"te", "tm", "pair"}},
        {"fit.data_csv", ValueType::text, "", "spectrum with columns detuning_MHz,T_over_T0,sigma"},
        {"fit.tm_data_csv", ValueType::text, "", "pair model: the TM spectrum"},
        {"fit.n_bar", ValueType::real, "3", "fixed mean atom number"},

        {"decay.gamma_1d_gamma0", ValueType::real, "1.5", "peak guided rate for model curves"},
        {"decay.gamma_prime_gamma0", ValueType::real, "2.0", "non-guided rate for model curves"},
        {"decay.max_atoms", ValueType::integer, "6", "curves for N = 1..max_atoms"},
        {"decay.span", ValueType::real, "3", "time span in units of 1/Gamma'"},
        {"decay.points", ValueType::integer, "1201", "time samples"},
        {"decay.hold_csv", ValueType::text, "", "hold-time data with columns t_m_ms,gamma_tot_gamma_prime; empty: synthesize"},
        {"decay.gamma_1d_gamma_prime", ValueType::real, "1.4", "peak guided rate for the atom-number inference"},
        {"decay.gamma_sr_gamma_prime", ValueType::real, "1.5", "synthetic hold series amplitude"},
        {"decay.tau_sr_ms", ValueType::real, "16", "synthetic hold series time constant"},
        {"decay.asymptote_gamma_prime", ValueType::real, "2.12", "synthetic hold series asymptote"},
        {"decay.hold_times_ms", ValueType::real, "0,4,8,12,16,20,24,28,32,40,48,60", "synthetic hold times"},
        {"decay.hold_noise", ValueType::real, "0", "additive Gaussian noise on the synthetic rates"},
        {"decay.probe_time_ms", ValueType::real, "4", "hold time at which the mean atom number is reported"},
    };
}

inline io::Config make_config() { return io::Config(schema()); }

inline io::Config load_config(const std::string& path) {
    auto c = make_config();
    if (!path.empty()) c.load(path);
    if (c.integer("schema_version") != schema_version)
        throw InputError("config: unsupported schema_version " + c.text("schema_version"));
    return c;
}

// ---------------------------------------------------------------- config readers

inline int positive_int(const io::Config& c, const std::string& key, int min_value = 1) {
    const auto v = c.integer(key);
    if (v < min_value || v > 10'000'000) throw InputError(key + ": out of range");
    return static_cast<int>(v);
}

inline std::vector<photonic::Layer> parse_layers(const std::string& text, const std::string& key) {
    std::vector<photonic::Layer> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto t = io::trim(item);
        if (t.empty()) continue;
        const auto colon = t.find(':');
        if (colon == std::string_view::npos) throw InputError(key + ": expected index:thickness_nm, got '" + std::string(t) + "'");
        out.push_back({io::parse_real(t.substr(0, colon), key), io::parse_real(t.substr(colon + 1), key)});
    }
    return out;
}

inline photonic::LayerStack stack_from(const io::Config& c) {
    photonic::LayerStack s;
    if (c.text("stack.source") == "design") {
        calibration::StackDesign d;
        d.a_nm = c.real("stack.a_nm");
        d.fill = c.real("stack.fill");
        d.n_mean = c.real("stack.n_mean");
        d.delta_n = c.real("stack.delta_n");
        d.n_cells = positive_int(c, "stack.n_cells", 0);
        d.taper_cells = positive_int(c, "stack.taper_cells", 0);
        s = calibration::make_stack(d);
    } else {
        s.cell = parse_layers(c.text("stack.cell_layers"), "stack.cell_layers");
        s.taper = parse_layers(c.text("stack.taper_layers"), "stack.taper_layers");
        s.n_cells = positive_int(c, "stack.n_cells", 0);
        s.ambient_index = c.real("stack.ambient_index");
    }
    s.validate();
    return s;
}

inline calibration::Calibration calibration_from(const io::Config& c) {
    return calibration::calibrate(stack_from(c), c.real("calibration.gamma_ref_gamma0"));
}

inline ensemble::EnsembleSpec ensemble_from(const io::Config& c, std::uint64_t seed) {
    ensemble::EnsembleSpec e;
    e.n_bar = c.real("ensemble.n_bar");
    const auto pm = c.text("ensemble.position_method");
    e.position_method = pm == "quadrature"    ? ensemble::PositionMethod::quadrature
                        : pm == "monte_carlo" ? ensemble::PositionMethod::monte_carlo
                                              : ensemble::PositionMethod::pinned;
    e.number_statistics = c.text("ensemble.number_statistics") == "fixed" ? ensemble::NumberStatistics::fixed
                                                                         : ensemble::NumberStatistics::poisson;
    e.model = c.text("ensemble.model") == "exact" ? ensemble::TransmissionModel::exact : ensemble::TransmissionModel::bright_mode;
    e.samples = static_cast<std::size_t>(positive_int(c, "ensemble.samples"));
    e.seed = seed;
    e.bin_width = c.real("ensemble.bin_width");
    e.cloud_half_width_nm = c.real("ensemble.cloud_half_width_nm");
    e.lattice_constant_nm = stack_from(c).lattice_constant();
    e.validate();
    return e;
}

struct CouplingSetup {
    spin::CouplingRates rates;
    double kappa_x{0.0};
    double delta_be_ghz{std::numeric_limits<double>::quiet_NaN()};
};

inline CouplingSetup coupling_from(const io::Config& c) {
    CouplingSetup out;
    out.rates.gamma_prime = c.real("coupling.gamma_prime_gamma0");
    out.rates.delta_0 = c.real("coupling.delta_0_mhz");
    if (c.text("coupling.source") == "manual") {
        out.rates.gamma_1d = c.real("coupling.gamma_1d_gamma0");
        out.rates.j_1d = c.real("coupling.j_1d_gamma0");
        out.kappa_x = c.real("coupling.kappa_per_nm");
    } else {
        const auto cal = calibration_from(c);
        out.delta_be_ghz = c.real("coupling.delta_be_ghz");
        const auto g = calibration::rates_at(cal, out.delta_be_ghz);
        out.rates.gamma_1d = g.gamma_1d;
        out.rates.j_1d = g.j_1d;
        out.kappa_x = photonic::bloch_analysis(cal.stack, calibration::frequency_at(cal, out.delta_be_ghz)).kappa;
    }
    out.rates.validate();
    return out;
}

// ----------------------------------------------------------------- outputs

struct Output {
    std::vector<std::pair<std::string, io::Table>> tables;
    std::vector<std::pair<std::string, io::Chart>> charts;
    std::vector<std::pair<std::string, std::string>> reports;
    std::string summary;
    bool ok{true}; // false: results written but a fit did not converge
};

class Report {
public:
    Report& add(const std::string& key, double v) { return line(key, io::format_number(v)); }
    Report& add(const std::string& key, const std::string& v) { return line(key, v); }
    Report& add(const std::string& key, const char* v) { return line(key, v); }
    Report& add(const std::string& key, bool v) { return line(key, v ? "true" : "false"); }
    Report& add(const std::string& key, int v) { return line(key, std::to_string(v)); }

    Report& fit(const std::string& prefix, const fit::FitReport& r) {
        add(prefix + "converged", r.converged);
        add(prefix + "iterations", r.iterations);
        add(prefix + "chi2", r.chi2);
        add(prefix + "reduced_chi2", r.reduced_chi2());
        add(prefix + "gradient_norm", r.gradient_norm);
        add(prefix + "message", r.message);
        for (const auto& p : r.parameters) {
            add(prefix + "param." + p.name + ".value", p.value);
            add(prefix + "param." + p.name + ".sigma", p.sigma);
            add(prefix + "param." + p.name + ".bound_active", p.bound_active);
        }
        return *this;
    }

    const std::string& str() const noexcept { return text_; }

private:
    Report& line(const std::string& key, const std::string& v) {
        text_ += key + " = " + v + "\n";
        return *this;
    }
    std::string text_;
};

inline io::Chart chart(std::string title, std::string x, std::string y) {
    io::Chart c;
    c.title = std::move(title);
    c.x_label = std::move(x);
    c.y_label = std::move(y);
    return c;
}

// ------------------------------------------------------------------- commands

inline Output cmd_bands(const io::Config& c) {
    const auto stack = stack_from(c);
    const auto grid = ensemble::linear_grid(c.real("bands.nu_min_thz"), c.real("bands.nu_max_thz"),
                                            static_cast<std::size_t>(positive_int(c, "bands.points", 2)));
    if (!(grid.front() > 0.0)) throw InputError("bands.nu_min_thz: must be > 0");
    std::vector<photonic::BlochPoint> pts(grid.size());
    parallel::parallel_for(grid.size(), [&](std::size_t i) { pts[i] = photonic::bloch_analysis(stack, grid[i]); }, 64);
    io::Table t{{"nu_THz", "delta_k_rad_per_nm", "kappa_rad_per_nm", "in_gap"}, {}};
    Output out;
    io::Series dk{"delta_k", {}, {}}, ka{"kappa", {}, {}, true};
    int gap_rows = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        t.add_row({grid[i], pts[i].delta_k, pts[i].kappa, pts[i].in_gap ? 1.0 : 0.0});
        (pts[i].in_gap ? ka : dk).x.push_back(grid[i]);
        (pts[i].in_gap ? ka : dk).y.push_back(pts[i].delta_k_or_kappa());
        gap_rows += pts[i].in_gap;
    }
    auto ch = chart("Bloch wave vector", "nu [THz]", "delta_k or kappa [rad/nm]");
    ch.series = {dk, ka};
    out.tables.emplace_back("bands", std::move(t));
    out.charts.emplace_back("bands", std::move(ch));
    out.summary = "bands: " + std::to_string(grid.size()) + " rows, " + std::to_string(gap_rows) + " in a gap\n";
    return out;
}

inline Output cmd_fields(const io::Config& c) {
    const auto cal = calibration_from(c);
    const double nu = c.text("fields.at") == "nu1" ? cal.nu_1() : calibration::frequency_at(cal, c.real("fields.delta_be_ghz"));
    const auto prof = photonic::field_profile(cal.stack, nu, positive_int(c, "fields.samples_per_layer"));
    io::Table t{{"x_nm", "intensity_rel", "nominal"}, {}};
    io::Series s{"|E|^2", {}, {}};
    for (const auto& p : prof) {
        t.add_row({p.x_nm, p.intensity, p.nominal ? 1.0 : 0.0});
        s.x.push_back(p.x_nm);
        s.y.push_back(p.intensity);
    }
    Output out;
    auto ch = chart("Field intensity along the crystal", "x [nm]", "|E|^2 / |E_in|^2");
    ch.series = {s};
    out.tables.emplace_back("fields", std::move(t));
    out.charts.emplace_back("fields", std::move(ch));
    std::ostringstream os;
    os << "fields: nu = " << io::format_number(nu) << " THz, effective length " << io::format_number(cal.length_cells())
       << " cells\n";
    out.summary = os.str();
    return out;
}

inline Output cmd_rates(const io::Config& c) {
    const auto cal = calibration_from(c);
    const auto grid = ensemble::linear_grid(c.real("rates.delta_min_ghz"), c.real("rates.delta_max_ghz"),
                                            static_cast<std::size_t>(positive_int(c, "rates.points", 2)));
    std::vector<photonic::GuidedRates> r(grid.size());
    std::vector<photonic::BlochPoint> b(grid.size());
    parallel::parallel_for(grid.size(), [&](std::size_t i) {
        r[i] = calibration::rates_at(cal, grid[i]);
        b[i] = photonic::bloch_analysis(cal.stack, calibration::frequency_at(cal, grid[i]));
    }, 1);
    io::Table t{{"delta_BE_GHz", "nu_THz", "gamma_1d_gamma0", "j_1d_gamma0", "kappa_rad_per_nm"}, {}};
    io::Series g{"Gamma_1D", {}, {}}, j{"-J_1D", {}, {}};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        t.add_row({grid[i], calibration::frequency_at(cal, grid[i]), r[i].gamma_1d, r[i].j_1d, b[i].kappa});
        g.x.push_back(grid[i]);
        g.y.push_back(r[i].gamma_1d);
        j.x.push_back(grid[i]);
        j.y.push_back(-r[i].j_1d);
    }
    Output out;
    auto ch = chart("Guided rates across the band edge", "Delta_BE [GHz]", "rate [Gamma0]");
    ch.series = {g, j};
    out.tables.emplace_back("rates", std::move(t));
    out.charts.emplace_back("rates", std::move(ch));
    std::ostringstream os;
    os << "rates: nu_BE = " << io::format_number(cal.nu_be()) << " THz, nu_BE - nu_1 = "
       << io::format_number(cal.detuning_nu1_ghz()) << " GHz\n";
    out.summary = os.str();
    return out;
}

inline ensemble::Spectrum model_spectrum(const io::Config& c, std::uint64_t seed) {
    const auto grid = ensemble::linear_grid(c.real("spectrum.detuning_min_mhz"), c.real("spectrum.detuning_max_mhz"),
                                            static_cast<std::size_t>(positive_int(c, "spectrum.points", 2)));
    const auto cp = coupling_from(c);
    ensemble::Spectrum sp;
    if (c.text("spectrum.polarization") == "tm") {
        const double n_bar = c.real("ensemble.n_bar");
        const double g_tm = c.real("tm.gamma_1d_gamma0");
        pcwqed::detail::require(n_bar >= 0.0 && g_tm >= 0.0, "tm spectrum: n_bar and tm.gamma_1d_gamma0 must be >= 0");
        sp.detuning_mhz = grid;
        sp.sigma.assign(grid.size(), 0.0);
        for (double d : grid)
            sp.transmission.push_back(fit::tm_transmission(d, n_bar, g_tm, cp.rates.gamma_prime, cp.rates.delta_0));
        sp.mode = ensemble::Polarization::tm;
    } else {
        sp = ensemble::average_poisson(ensemble_from(c, seed), cp.rates, cp.kappa_x, grid);
    }
    sp.delta_be_ghz = cp.delta_be_ghz;
    return sp;
}

inline io::Table spectrum_table(const ensemble::Spectrum& sp) {
    io::Table t{{"detuning_MHz", "T_over_T0", "sigma"}, {}};
    for (std::size_t i = 0; i < sp.size(); ++i) t.add_row({sp.detuning_mhz[i], sp.transmission[i], sp.sigma[i]});
    return t;
}

inline Output spectrum_output(const std::string& name, const ensemble::Spectrum& sp, bool markers) {
    Output out;
    auto ch = chart("Transmission spectrum", "Delta_A [MHz]", "T / T0");
    ch.series = {{"T/T0", sp.detuning_mhz, sp.transmission, markers}};
    out.tables.emplace_back(name, spectrum_table(sp));
    out.charts.emplace_back(name, std::move(ch));
    const auto k = static_cast<std::size_t>(std::min_element(sp.transmission.begin(), sp.transmission.end()) - sp.transmission.begin());
    std::ostringstream os;
    os << name << ": " << sp.size() << " points, minimum T/T0 = " << io::format_number(sp.transmission[k]) << " at "
       << io::format_number(sp.detuning_mhz[k]) << " MHz\n";
    out.summary = os.str();
    return out;
}

inline Output cmd_spectrum(const io::Config& c, std::uint64_t seed) {
    return spectrum_output("spectrum", model_spectrum(c, seed), false);
}

// Standard normal deviate from a counter stream (Box-Muller), portable across libraries.
inline double normal_draw(rng::CounterRng& g) {
    double u1 = g.uniform();
    while (u1 <= 0.0) u1 = g.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(units::two_pi * g.uniform());
}

// Noise streams are keyed by (seed, sample index), independent of the averaging streams.
inline std::vector<double> add_noise(std::vector<double> y, double sigma, std::uint64_t seed, std::uint64_t salt) {
    if (sigma == 0.0) return y;
    for (std::size_t i = 0; i < y.size(); ++i) {
        rng::CounterRng g(seed ^ salt, i);
        y[i] += sigma * normal_draw(g);
    }
    return y;
}

inline constexpr std::uint64_t spectrum_noise_salt = 0x5E7A11CEull;
inline constexpr std::uint64_t hold_noise_salt = 0x401DDA7Aull;

inline Output cmd_synth(const io::Config& c, std::uint64_t seed) {
    const double noise = c.real("synth.noise");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw InputError("synth.noise: must be >= 0");
    auto sp = model_spectrum(c, seed);
    sp.transmission = add_noise(sp.transmission, noise, seed, spectrum_noise_salt);
    sp.sigma.assign(sp.size(), noise);
    return spectrum_output("synth", sp, true);
}

inline ensemble::Spectrum read_spectrum(const std::string& path) {
    if (path.empty()) throw InputError("fit: no data file given (--data or fit.data_csv)");
    const auto t = io::read_csv(path);
    ensemble::Spectrum sp;
    sp.detuning_mhz = t.column_values("detuning_MHz");
    sp.transmission = t.column_values("T_over_T0");
    sp.sigma = t.column_values("sigma");
    sp.validate();
    return sp;
}

inline fit::TeFitOptions te_options_from(const io::Config& c, std::uint64_t seed) {
    fit::TeFitOptions o;
    o.ensemble = ensemble_from(c, seed);
    o.kappa_x = c.real("coupling.kappa_per_nm");
    return o;
}

inline void fit_residuals(Output& out, const std::string& name, const ensemble::Spectrum& sp, const std::vector<double>& model) {
    io::Table t{{"detuning_MHz", "T_over_T0", "sigma", "model_T_over_T0", "residual"}, {}};
    for (std::size_t i = 0; i < sp.size(); ++i)
        t.add_row({sp.detuning_mhz[i], sp.transmission[i], sp.sigma[i], model[i], sp.transmission[i] - model[i]});
    auto ch = chart("Spectrum fit", "Delta_A [MHz]", "T / T0");
    ch.series = {{"data", sp.detuning_mhz, sp.transmission, true}, {"model", sp.detuning_mhz, model}};
    out.tables.emplace_back(name, std::move(t));
    out.charts.emplace_back(name, std::move(ch));
}

inline Output cmd_fit(const io::Config& c, std::uint64_t seed, const std::string& data_override = {}) {
    const std::string model = c.text("fit.model");
    const double n_bar = c.real("fit.n_bar");
    const std::string data_path = data_override.empty() ? c.text("fit.data_csv") : data_override;
    Output out;
    Report rep;
    rep.add("model", model).add("n_bar", n_bar);
    std::ostringstream os;

    fit::FitReport te, tm;
    if (model == "te" || model == "pair") {
        const auto sp = read_spectrum(data_path);
        const auto opt = te_options_from(c, seed);
        te = fit::fit_te_spectrum(sp, n_bar, opt);
        rep.fit(model == "pair" ? "te." : "", te);
        rep.add(model == "pair" ? "te.ratio_gamma_over_abs_j" : "ratio_gamma_over_abs_j", fit::dissipative_ratio(te));
        const auto m = fit::TeModel(n_bar, opt)(sp.detuning_mhz, fit::te_rates(te.values())).transmission;
        fit_residuals(out, model == "pair" ? "fit_residuals_te" : "fit_residuals", sp, m);
        out.ok = out.ok && te.converged;
        os << "fit te: gamma_1d = " << io::format_number(te.value("gamma_1d")) << ", j_1d = "
           << io::format_number(te.value("j_1d")) << " Gamma0, converged = " << (te.converged ? "true" : "false") << "\n";
    }
    if (model == "tm" || model == "pair") {
        const auto sp = read_spectrum(model == "pair" ? c.text("fit.tm_data_csv") : data_path);
        tm = fit::fit_tm_spectrum(sp, n_bar);
        rep.fit(model == "pair" ? "tm." : "", tm);
        std::vector<double> m;
        for (double d : sp.detuning_mhz)
            m.push_back(fit::tm_transmission(d, n_bar, tm.value("gamma_1d_tm"), tm.value("gamma_prime"), tm.value("delta_0_mhz")));
        fit_residuals(out, model == "pair" ? "fit_residuals_tm" : "fit_residuals", sp, m);
        out.ok = out.ok && tm.converged;
        os << "fit tm: gamma_1d_tm = " << io::format_number(tm.value("gamma_1d_tm")) << " Gamma0, converged = "
           << (tm.converged ? "true" : "false") << "\n";
    }
    if (model == "pair") {
        const double e = fit::enhancement_ratio(te, tm);
        rep.add("enhancement_ratio", e);
        os << "enhancement ratio gamma_1d / gamma_1d_tm = " << io::format_number(e) << "\n";
    }
    out.reports.emplace_back("fit_report", rep.str());
    out.summary = os.str();
    return out;
}

inline std::vector<decay::HoldTimePoint> hold_data(const io::Config& c, std::uint64_t seed) {
    const std::string path = c.text("decay.hold_csv");
    std::vector<decay::HoldTimePoint> pts;
    if (!path.empty()) {
        const auto t = io::read_csv(path);
        const auto tm = t.column_values("t_m_ms");
        const auto g = t.column_values("gamma_tot_gamma_prime");
        for (std::size_t i = 0; i < tm.size(); ++i) pts.push_back({tm[i], g[i]});
        return pts;
    }
    const double tau = c.real("decay.tau_sr_ms");
    if (!(tau > 0.0)) throw InputError("decay.tau_sr_ms: must be > 0");
    const double noise = c.real("decay.hold_noise");
    if (!(noise >= 0.0)) throw InputError("decay.hold_noise: must be >= 0");
    pts = decay::hold_time_series(c.real("decay.gamma_sr_gamma_prime"), tau, c.real("decay.asymptote_gamma_prime"),
                                  c.reals("decay.hold_times_ms"));
    std::vector<double> y;
    for (const auto& p : pts) y.push_back(p.gamma_tot);
    y = add_noise(y, noise, seed, hold_noise_salt);
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i].gamma_tot = y[i];
    return pts;
}

inline Output cmd_decay(const io::Config& c, std::uint64_t seed) {
    const double g1d = c.real("decay.gamma_1d_gamma0");
    const double gp = c.real("decay.gamma_prime_gamma0");
    pcwqed::detail::require(g1d > 0.0 && gp > 0.0, "decay: rates must be > 0");
    const int n_max = positive_int(c, "decay.max_atoms");
    if (n_max > 50) throw InputError("decay.max_atoms: at most 50");
    const auto grid = decay::decay_time_grid(gp, c.real("decay.span"), static_cast<std::size_t>(positive_int(c, "decay.points", 2)));

    Output out;
    io::Table curves{{"t_us"}, {}};
    for (int n = 1; n <= n_max; ++n) curves.columns.push_back("intensity_n" + std::to_string(n));
    std::vector<decay::DecayCurve> cs(static_cast<std::size_t>(n_max));
    parallel::parallel_for(cs.size(), [&](std::size_t k) { cs[k] = decay::model_curve(static_cast<int>(k) + 1, g1d, gp, grid); }, 1);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> row{grid[i]};
        for (const auto& cv : cs) row.push_back(cv.intensity[i]);
        curves.add_row(std::move(row));
    }
    io::Table fits{{"n_atoms", "fit_rate_gamma0", "fit_guided_over_gamma_1d", "window_lo_us", "window_hi_us"}, {}};
    auto ch = chart("Decay curves", "t [us]", "I_N(t) / I_N(0)");
    for (int n = 1; n <= n_max; ++n) {
        const auto& cv = cs[static_cast<std::size_t>(n - 1)];
        const auto f = decay::fit_single_exponential(cv);
        fits.add_row({static_cast<double>(n), f.rate, (f.rate - gp) / g1d, f.window.t_lo_us, f.window.t_hi_us});
        io::Series s{"N = " + std::to_string(n), grid, {}};
        for (double v : cv.intensity) s.y.push_back(v / cv.intensity.front());
        ch.series.push_back(std::move(s));
    }
    out.tables.emplace_back("decay_curves", std::move(curves));
    out.tables.emplace_back("decay_fits", std::move(fits));
    out.charts.emplace_back("decay_curves", std::move(ch));

    const auto hold = hold_data(c, seed);
    const auto nf = decay::fit_nbar(hold, c.real("decay.gamma_1d_gamma_prime"), c.real("decay.probe_time_ms"));
    io::Table ht{{"t_m_ms", "gamma_tot_gamma_prime", "model_gamma_tot_gamma_prime"}, {}};
    io::Series hd{"data", {}, {}, true}, hm{"fit", {}, {}};
    for (const auto& p : hold) {
        const double m = nf.gamma_sr * std::exp(-p.t_m_ms / nf.tau_sr_ms) + nf.asymptote;
        ht.add_row({p.t_m_ms, p.gamma_tot, m});
        hd.x.push_back(p.t_m_ms);
        hd.y.push_back(p.gamma_tot);
        hm.x.push_back(p.t_m_ms);
        hm.y.push_back(m);
    }
    auto hc = chart("Total decay rate vs hold time", "t_m [ms]", "Gamma_tot [Gamma']");
    hc.series = {hd, hm};
    out.tables.emplace_back("decay_hold", std::move(ht));
    out.charts.emplace_back("decay_hold", std::move(hc));

    Report rep;
    rep.add("single_atom_fit_ratio", decay::single_atom_fit_ratio(g1d, gp))
        .add("gamma_sr_gamma_prime", nf.gamma_sr)
        .add("tau_sr_ms", nf.tau_sr_ms)
        .add("asymptote_gamma_prime", nf.asymptote)
        .add("probe_time_ms", nf.probe_time_ms)
        .add("gamma_tot_at_probe_gamma_prime", nf.gamma_tot_at_probe)
        .add("n_bar", nf.n_bar)
        .add("eta_sr", nf.eta_sr)
        .fit("hold_fit.", nf.report);
    out.reports.emplace_back("decay_report", rep.str());
    std::ostringstream os;
    os << "decay: n_bar = " << io::format_number(nf.n_bar) << " at t_m = " << io::format_number(nf.probe_time_ms)
       << " ms, eta_sr = " << io::format_number(nf.eta_sr) << "\n";
    out.summary = os.str();
    return out;
}

inline Output cmd_fig4(const io::Config& c) {
    const auto cal = calibration_from(c);
    auto grid = ensemble::linear_grid(c.real("fig4.delta_min_ghz"), c.real("fig4.delta_max_ghz"),
                                      static_cast<std::size_t>(positive_int(c, "fig4.points")));
    if (c.boolean("fig4.include_nu1")) grid.insert(grid.begin(), -cal.detuning_nu1_ghz());
    const auto rows = calibration::rate_sweep(cal, grid, c.real("cqed.gamma_c_ghz"));
    io::Table t{{"delta_BE_GHz", "gamma_1d_gamma0", "minus_j_1d_gamma0", "R", "R_cqed"}, {}};
    io::Series g{"Gamma_1D", {}, {}}, j{"-J_1D", {}, {}}, r{"R", {}, {}}, rc{"R_CQED", {}, {}};
    for (const auto& row : rows) {
        t.add_row({row.delta_be_ghz, row.gamma_1d, row.minus_j_1d, row.ratio, row.ratio_cqed});
        g.x.push_back(row.delta_be_ghz);
        g.y.push_back(row.gamma_1d);
        j.x.push_back(row.delta_be_ghz);
        j.y.push_back(row.minus_j_1d);
        if (row.ratio < 2.0) {
            r.x.push_back(row.delta_be_ghz);
            r.y.push_back(row.ratio);
        }
        if (row.ratio_cqed < 2.0) {
            rc.x.push_back(row.delta_be_ghz);
            rc.y.push_back(row.ratio_cqed);
        }
    }
    Output out;
    auto ch = chart("Guided rates", "Delta_BE [GHz]", "rate [Gamma0]");
    ch.series = {g, j};
    auto cr = chart("Dissipative to coherent ratio", "Delta_BE [GHz]", "Gamma_1D / |J_1D|");
    cr.series = {r, rc};
    out.tables.emplace_back("fig4", std::move(t));
    out.charts.emplace_back("fig4_rates", std::move(ch));
    out.charts.emplace_back("fig4_ratio", std::move(cr));
    std::ostringstream os;
    os << "fig4: " << rows.size() << " rows, nu_BE - nu_1 = " << io::format_number(cal.detuning_nu1_ghz()) << " GHz\n";
    out.summary = os.str();
    return out;
}

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"bands", "fields", "rates", "spectrum", "synth", "fit", "decay", "fig4"};
    return names;
}

inline Output run(const std::string& command, const io::Config& c, std::uint64_t seed, const std::string& data = {}) {
    if (command == "bands") return cmd_bands(c);
    if (command == "fields") return cmd_fields(c);
    if (command == "rates") return cmd_rates(c);
    if (command == "spectrum") return cmd_spectrum(c, seed);
    if (command == "synth") return cmd_synth(c, seed);
    if (command == "fit") return cmd_fit(c, seed, data);
    if (command == "decay") return cmd_decay(c, seed);
    if (command == "fig4") return cmd_fig4(c);
    throw InputError("unknown command '" + command + "'");
}

} // namespace pcwqed::app
