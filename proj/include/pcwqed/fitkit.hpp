// fitkit.hpp: model fitters: cavity intensity profile, band-edge dispersion, averaged TE
// transmission spectra and TM optical-density spectra

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "pcwqed/ensemble.hpp"
#include "pcwqed/errors.hpp"
#include "pcwqed/least_squares.hpp"
#include "pcwqed/units.hpp"

namespace pcwqed::fit {

namespace detail {

inline constexpr double inf = std::numeric_limits<double>::infinity();

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Uniform weights when any sigma is zero (noiseless model data).
inline Eigen::VectorXd effective_sigma(const std::vector<double>& sigma) {
    Eigen::VectorXd s = to_vector(sigma);
    if (s.size() == 0 || (s.array() <= 0.0).any()) s.setOnes();
    return s;
}

inline double relative_spread(const std::vector<double>& y) {
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    return (*hi - *lo) / std::max(std::abs(*hi), 1e-300);
}

} // namespace detail

// ------------------------------------------------------------- intensity profile

// |E(x)|^2 = I1 |e^{i dk x} - R e^{2 i dk L} e^{-i dk x}|^2 = I1 (1 + R^2 - 2R cos(2 dk (x - L)))
// with x measured from the cavity entrance. In the gap dk -> i kappa and the profile becomes
// I1 (e^{-kappa x} - R e^{kappa (x - 2L)})^2.
inline double cavity_intensity(double x, double length, double delta_k, double r_t, double i1) {
    return i1 * (1.0 + r_t * r_t - 2.0 * r_t * std::cos(2.0 * delta_k * (x - length)));
}

inline double evanescent_intensity(double x, double length, double kappa, double r_t, double i1) {
    const double v = std::exp(-kappa * x) - r_t * std::exp(kappa * (x - 2.0 * length));
    return i1 * v * v;
}

struct ProfileFit {
    bool evanescent{false};
    double delta_k{0.0}; // rad/nm, propagating regime
    double kappa{0.0};   // rad/nm, gap regime
    double r_t{0.0};
    double i1{0.0};
    FitReport report;
};

inline constexpr std::size_t min_profile_samples = 20;

inline ProfileFit fit_intensity_profile(const std::vector<double>& x_nm, const std::vector<double>& intensity, double length_nm,
                                        const std::vector<double>& sigma = {}) {
    pcwqed::detail::require(x_nm.size() == intensity.size(), "fit_intensity_profile: column lengths differ");
    pcwqed::detail::require(x_nm.size() >= min_profile_samples, "fit_intensity_profile: need >= 20 samples");
    pcwqed::detail::require(std::isfinite(length_nm) && length_nm > 0.0, "fit_intensity_profile: length must be > 0");
    pcwqed::detail::require(sigma.empty() || sigma.size() == x_nm.size(), "fit_intensity_profile: sigma length differs");
    for (std::size_t i = 0; i < x_nm.size(); ++i)
        pcwqed::detail::require(std::isfinite(x_nm[i]) && std::isfinite(intensity[i]) && intensity[i] >= 0.0,
                                "fit_intensity_profile: samples must be finite with intensity >= 0");
    if (detail::relative_spread(intensity) < 1e-9)
        throw IdentifiabilityError("fit_intensity_profile: flat profile carries no wave-vector information");

    const Eigen::VectorXd x = detail::to_vector(x_nm);
    const Eigen::VectorXd y = detail::to_vector(intensity);
    const Eigen::VectorXd s = sigma.empty() ? Eigen::VectorXd::Ones(y.size()) : detail::effective_sigma(sigma);
    const double ymax = y.maxCoeff();
    const double span = x.maxCoeff() - x.minCoeff();
    pcwqed::detail::require(span >= 0.5 * length_nm, "fit_intensity_profile: samples must span most of the length");

    auto run = [&](bool evanescent, double k0) {
        auto model = [&, evanescent](const Eigen::VectorXd& p) {
            Eigen::VectorXd m(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i)
                m(i) = evanescent ? evanescent_intensity(x(i), length_nm, p(0), p(1), p(2))
                                  : cavity_intensity(x(i), length_nm, p(0), p(1), p(2));
            return m;
        };
        const double r0 = 0.5;
        const double i0 = evanescent ? y(0) : ymax / ((1.0 + r0) * (1.0 + r0));
        std::vector<ParameterSpec> ps{
            {evanescent ? "kappa" : "delta_k", k0, 0.0, detail::inf, units::pi / length_nm},
            {"r_t", r0, -1.0, 1.0, 1.0},
            {"i1", std::max(i0, 1e-12 * ymax), 0.0, detail::inf, ymax},
        };
        return least_squares(weighted_residual(model, y, s), ps);
    };

    // Oscillatory branch: start from the nearest standing-wave order of a coarse scan.
    FitReport best;
    bool best_evanescent = false;
    double best_chi2 = detail::inf;
    const double k_unit = units::pi / length_nm;
    double k_start = k_unit, scan_best = detail::inf;
    for (int m = 1; m <= 40; ++m) {
        const double k = 0.25 * m * k_unit;
        Eigen::VectorXd base(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) base(i) = 1.0 - std::cos(2.0 * k * (x(i) - length_nm));
        // Best linear fit y ~ c0 + c1 * base.
        Eigen::MatrixXd A(x.size(), 2);
        A.col(0).setOnes();
        A.col(1) = base;
        const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
        const double chi = (A * c - y).squaredNorm();
        if (chi < scan_best) {
            scan_best = chi;
            k_start = k;
        }
    }
    auto osc = run(false, k_start);
    best = osc;
    best_chi2 = osc.chi2;

    // Evanescent branch: slope of the log profile on its first half.
    std::vector<double> xs, ls;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (y(i) > 0.0 && x(i) < 0.5 * length_nm) {
            xs.push_back(x(i));
            ls.push_back(std::log(y(i)));
        }
    if (xs.size() >= 3) {
        const double xm = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
        const double lm = std::accumulate(ls.begin(), ls.end(), 0.0) / ls.size();
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxx += (xs[i] - xm) * (xs[i] - xm);
            sxy += (xs[i] - xm) * (ls[i] - lm);
        }
        const double kappa0 = -0.5 * sxy / sxx;
        if (kappa0 > 0.0) {
            auto ev = run(true, kappa0);
            if (ev.chi2 < best_chi2) {
                best = ev;
                best_chi2 = ev.chi2;
                best_evanescent = true;
            }
        }
    }

    ProfileFit out;
    out.evanescent = best_evanescent;
    out.r_t = best.parameters[1].value;
    out.i1 = best.parameters[2].value;
    (best_evanescent ? out.kappa : out.delta_k) = best.parameters[0].value;
    out.report = std::move(best);
    return out;
}

// -------------------------------------------------------------------- dispersion

// dk(nu) = (2 pi / a) sqrt((nu_BE2 - nu)(nu_BE - nu) / (4 zeta^2 - W^2)), W = nu_BE2 - nu_BE.
struct Dispersion {
    double nu_be{0.0};  // THz
    double nu_be2{0.0}; // THz
    double zeta{0.0};   // THz
    double a_nm{370.0};

    double width() const noexcept { return nu_be2 - nu_be; }

    void validate() const {
        pcwqed::detail::require(nu_be < nu_be2, "Dispersion: nu_BE must be below nu_BE2");
        pcwqed::detail::require(4.0 * zeta * zeta > width() * width(), "Dispersion: need 4 zeta^2 > W^2");
        pcwqed::detail::require(a_nm > 0.0, "Dispersion: lattice constant must be > 0");
    }

    double curvature() const { return (units::two_pi / a_nm) * (units::two_pi / a_nm) / (4.0 * zeta * zeta - width() * width()); }

    // Valid below the edge.
    double delta_k(double nu) const {
        const double v = (nu_be2 - nu) * (nu_be - nu);
        return std::sqrt(std::max(0.0, v * curvature()));
    }

    // Frequency below the edge with the given dk.
    double nu_at(double delta_k_value) const {
        const double d = delta_k_value * delta_k_value / curvature();
        const double w = width();
        return nu_be - 0.5 * (-w + std::sqrt(w * w + 4.0 * d));
    }
};

struct DispersionPoint {
    double nu_thz{0.0};
    double delta_k{0.0}; // rad/nm
    bool in_gap{false};
};

struct DispersionFit {
    Dispersion dispersion;
    FitReport report;
};

inline constexpr std::size_t min_dispersion_points = 6;

inline DispersionFit fit_dispersion(const std::vector<DispersionPoint>& points, double a_nm) {
    pcwqed::detail::require(a_nm > 0.0, "fit_dispersion: lattice constant must be > 0");
    pcwqed::detail::require(points.size() >= min_dispersion_points, "fit_dispersion: need >= 6 points below the edge");
    for (const auto& p : points) {
        pcwqed::detail::require(!p.in_gap, "fit_dispersion: gap points mixed in; pass band points only");
        pcwqed::detail::require(std::isfinite(p.nu_thz) && std::isfinite(p.delta_k) && p.delta_k >= 0.0,
                                "fit_dispersion: points must be finite with delta_k >= 0");
    }
    // dk^2 = C (nu_BE - nu)(nu_BE2 - nu) is quadratic in nu: linear least squares for the start.
    const auto n = static_cast<Eigen::Index>(points.size());
    double nu_ref = 0.0;
    for (const auto& p : points) nu_ref += p.nu_thz;
    nu_ref /= static_cast<double>(n);
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = points[static_cast<std::size_t>(i)].nu_thz - nu_ref;
        A(i, 0) = 1.0;
        A(i, 1) = v;
        A(i, 2) = v * v;
        b(i) = points[static_cast<std::size_t>(i)].delta_k * points[static_cast<std::size_t>(i)].delta_k;
    }
    const Eigen::Vector3d c = A.colPivHouseholderQr().solve(b);
    const double disc = c(1) * c(1) - 4.0 * c(2) * c(0);
    if (!(c(2) > 0.0) || !(disc > 0.0))
        throw IdentifiabilityError("fit_dispersion: points do not determine two band edges");
    const double r1 = nu_ref + (-c(1) - std::sqrt(disc)) / (2.0 * c(2));
    const double r2 = nu_ref + (-c(1) + std::sqrt(disc)) / (2.0 * c(2));
    const double w0 = r2 - r1;
    const double k2 = (units::two_pi / a_nm) * (units::two_pi / a_nm);
    const double zeta0 = 0.5 * std::sqrt(k2 / c(2) + w0 * w0);

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = points[static_cast<std::size_t>(i)].delta_k;
    auto residual = [&](const Eigen::VectorXd& p) {
        Dispersion d{p(0), p(0) + p(1), p(2), a_nm};
        Eigen::VectorXd r(n);
        const double cv = k2 / std::max(4.0 * p(2) * p(2) - p(1) * p(1), 1e-300);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double nu = points[static_cast<std::size_t>(i)].nu_thz;
            const double v = (d.nu_be2 - nu) * (d.nu_be - nu) * cv;
            r(i) = std::sqrt(std::max(0.0, v)) - y(i);
        }
        return r;
    };
    const double nu_max = std::max_element(points.begin(), points.end(), [](auto& l, auto& r) { return l.nu_thz < r.nu_thz; })->nu_thz;
    const double yscale = std::max(y.maxCoeff(), 1e-12);
    std::vector<ParameterSpec> ps{
        {"nu_be_thz", r1, -detail::inf, detail::inf, std::max(1e-3, std::abs(r1))},
        {"width_thz", w0, 0.0, detail::inf, std::max(w0, 1e-6)},
        {"zeta_thz", zeta0, 0.0, detail::inf, zeta0},
    };
    auto rep = least_squares([&](const Eigen::VectorXd& p) { return Eigen::VectorXd(residual(p) / yscale); }, ps);
    // Undo the residual scaling in the reported chi-square and covariance.
    rep.chi2 *= yscale * yscale;
    DispersionFit out;
    out.dispersion = {rep.value("nu_be_thz"), rep.value("nu_be_thz") + rep.value("width_thz"), rep.value("zeta_thz"), a_nm};
    out.report = std::move(rep);
    if (nu_max > out.dispersion.nu_be + 1e-9)
        throw InputError("fit_dispersion: a point lies above the fitted band edge; separate the regimes first");
    out.dispersion.validate();
    return out;
}

// ----------------------------------------------------------- TE averaged spectra

struct TeFitOptions {
    ensemble::EnsembleSpec ensemble{}; // n_bar is overwritten by the fixed value
    double kappa_x{0.0};
    Options solver{};
};

struct TeInit {
    double gamma_1d{0.0};
    double j_1d{0.0};
    double gamma_prime{1.0};
    double delta_0{0.0};
};

namespace detail {

inline std::size_t argmin(const std::vector<double>& y) {
    return static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
}

// Full width at half depth of 1 - T around the minimum, linear interpolation; MHz.
inline double dip_fwhm(const std::vector<double>& x, const std::vector<double>& absorb, std::size_t k) {
    const double half = 0.5 * absorb[k];
    double left = x.front(), right = x.back();
    for (std::size_t i = k; i-- > 0;)
        if (absorb[i] <= half) {
            left = x[i] + (half - absorb[i]) / (absorb[i + 1] - absorb[i]) * (x[i + 1] - x[i]);
            break;
        }
    for (std::size_t i = k + 1; i < x.size(); ++i)
        if (absorb[i] <= half) {
            right = x[i - 1] + (absorb[i - 1] - half) / (absorb[i - 1] - absorb[i]) * (x[i] - x[i - 1]);
            break;
        }
    return std::max(right - left, 1e-6);
}

} // namespace detail

// Starting point: Delta0 from the dip location, Gamma' from the dip width and depth,
// Gamma_1D from the depth through the J = 0 single-mode form at s = N/2, and J_1D from
// the sign and size of the far-wing asymmetry.
inline TeInit te_initial_guess(const ensemble::Spectrum& sp, double n_bar) {
    const auto k = detail::argmin(sp.transmission);
    const double tmin = std::clamp(sp.transmission[k], 1e-6, 1.0);
    std::vector<double> absorb(sp.size());
    for (std::size_t i = 0; i < sp.size(); ++i) absorb[i] = 1.0 - sp.transmission[i];
    const double g_total = units::gamma0_from_mhz(detail::dip_fwhm(sp.detuning_mhz, absorb, k));
    TeInit init;
    init.gamma_prime = std::max(0.05 * g_total, g_total * std::sqrt(tmin));
    const double s_mean = 0.5 * n_bar;
    init.gamma_1d = std::max(1e-3, (g_total - init.gamma_prime) / s_mean);

    // Far wings: T - 1 ~ -2 s J / x, with x measured from the dip.
    double num = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < sp.size(); ++i) {
        const double x = units::gamma0_from_mhz(sp.detuning_mhz[i] - sp.detuning_mhz[k]);
        if (std::abs(x) < 1.5 * g_total) continue;
        num += -(sp.transmission[i] - 1.0) * x / (2.0 * s_mean);
        ++count;
    }
    init.j_1d = count > 0 ? num / count : 0.0;
    init.delta_0 = -sp.detuning_mhz[k] - units::mhz_from_gamma0(s_mean * init.j_1d);
    return init;
}

// Model-evaluation closure for a fixed atom-number distribution.
class TeModel {
public:
    TeModel(double n_bar, const TeFitOptions& opt) : kappa_(opt.kappa_x), spec_(opt.ensemble) {
        spec_.n_bar = n_bar;
        spec_.validate();
        if (spec_.model == ensemble::TransmissionModel::bright_mode) dist_ = ensemble::s_distribution(spec_);
    }

    ensemble::Spectrum operator()(const std::vector<double>& grid, const ensemble::CouplingRates& r) const {
        if (spec_.model == ensemble::TransmissionModel::bright_mode) return ensemble::bright_spectrum(grid, r, dist_);
        return ensemble::average_poisson(spec_, r, kappa_, grid);
    }

private:
    double kappa_;
    ensemble::EnsembleSpec spec_;
    ensemble::SDistribution dist_;
};

inline ensemble::CouplingRates te_rates(const Eigen::VectorXd& p) {
    ensemble::CouplingRates r;
    r.gamma_1d = p(0);
    r.j_1d = p(1);
    r.gamma_prime = p(2);
    r.delta_0 = p(3);
    return r;
}

inline constexpr std::size_t min_spectrum_points = 15;

// N_bar is an input and never a fit parameter: only the product N Gamma_1D is constrained.
inline FitReport fit_te_spectrum(const ensemble::Spectrum& sp, double n_bar, const TeFitOptions& opt = {}) {
    sp.validate();
    pcwqed::detail::require(sp.size() >= min_spectrum_points, "fit_te_spectrum: need >= 15 detuning points");
    pcwqed::detail::require(std::isfinite(n_bar) && n_bar > 0.0, "fit_te_spectrum: n_bar must be > 0");
    if (1.0 - *std::min_element(sp.transmission.begin(), sp.transmission.end()) < 1e-9)
        throw IdentifiabilityError("fit_te_spectrum: spectrum has no absorption dip");
    const TeModel model(n_bar, opt);
    const auto init = te_initial_guess(sp, n_bar);
    const auto grid = sp.detuning_mhz;
    auto curve = [&](const Eigen::VectorXd& p) {
        return detail::to_vector(model(grid, te_rates(p)).transmission);
    };
    std::vector<ParameterSpec> ps{
        {"gamma_1d", init.gamma_1d, 0.0, detail::inf, std::max(init.gamma_1d, 0.1)},
        {"j_1d", init.j_1d, -detail::inf, detail::inf, std::max(init.gamma_1d, 0.1)},
        {"gamma_prime", init.gamma_prime, 1e-6, detail::inf, std::max(init.gamma_prime, 0.1)},
        {"delta_0_mhz", init.delta_0, -detail::inf, detail::inf, units::mhz_from_gamma0(1.0)},
    };
    return least_squares(weighted_residual(curve, detail::to_vector(sp.transmission), detail::effective_sigma(sp.sigma)), ps,
                         opt.solver);
}

// ------------------------------------------------------------ TM optical density

struct TmInit {
    double gamma_1d_tm{0.0};
    double gamma_prime{1.0};
    double delta_0{0.0};
};

inline double tm_transmission(double detuning_mhz, double n_bar, double gamma_1d_tm, double gamma_prime, double delta_0) {
    return ensemble::od_transmission(detuning_mhz, ensemble::optical_depth(n_bar, gamma_1d_tm, gamma_prime),
                                     units::mhz_from_gamma0(gamma_1d_tm + gamma_prime), delta_0);
}

// OD from the dip depth, total width from the FWHM of -ln T, then split with OD = 2 N G / G'.
inline TmInit tm_initial_guess(const ensemble::Spectrum& sp, double n_bar) {
    const auto k = detail::argmin(sp.transmission);
    std::vector<double> od(sp.size());
    for (std::size_t i = 0; i < sp.size(); ++i) od[i] = -std::log(std::clamp(sp.transmission[i], 1e-12, 1.0));
    const double od0 = std::max(od[k], 1e-6);
    const double width = units::gamma0_from_mhz(detail::dip_fwhm(sp.detuning_mhz, od, k));
    TmInit init;
    init.gamma_prime = width / (1.0 + od0 / (2.0 * n_bar));
    init.gamma_1d_tm = od0 * init.gamma_prime / (2.0 * n_bar);
    init.delta_0 = -sp.detuning_mhz[k];
    return init;
}

inline FitReport fit_tm_spectrum(const ensemble::Spectrum& sp, double n_bar, const Options& solver = {}) {
    sp.validate();
    pcwqed::detail::require(sp.size() >= min_spectrum_points, "fit_tm_spectrum: need >= 15 detuning points");
    pcwqed::detail::require(std::isfinite(n_bar) && n_bar > 0.0, "fit_tm_spectrum: n_bar must be > 0");
    if (1.0 - *std::min_element(sp.transmission.begin(), sp.transmission.end()) < 1e-9)
        throw IdentifiabilityError("fit_tm_spectrum: spectrum has no absorption dip");
    const auto init = tm_initial_guess(sp, n_bar);
    const auto grid = sp.detuning_mhz;
    auto curve = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd m(static_cast<Eigen::Index>(grid.size()));
        for (std::size_t i = 0; i < grid.size(); ++i)
            m(static_cast<Eigen::Index>(i)) = tm_transmission(grid[i], n_bar, p(0), p(1), p(2));
        return m;
    };
    std::vector<ParameterSpec> ps{
        {"gamma_1d_tm", init.gamma_1d_tm, 0.0, detail::inf, std::max(init.gamma_1d_tm, 1e-3)},
        {"gamma_prime", init.gamma_prime, 1e-6, detail::inf, std::max(init.gamma_prime, 0.1)},
        {"delta_0_mhz", init.delta_0, -detail::inf, detail::inf, units::mhz_from_gamma0(1.0)},
    };
    return least_squares(weighted_residual(curve, detail::to_vector(sp.transmission), detail::effective_sigma(sp.sigma)), ps,
                         solver);
}

// Gamma_1D / |J_1D| from a TE report.
inline double dissipative_ratio(const FitReport& te) {
    const double j = te.value("j_1d");
    return j != 0.0 ? te.value("gamma_1d") / std::abs(j) : std::numeric_limits<double>::infinity();
}

inline double enhancement_ratio(const FitReport& te, const FitReport& tm) {
    const double g_tm = tm.value("gamma_1d_tm");
    pcwqed::detail::require(g_tm > 0.0, "enhancement_ratio: TM rate must be > 0");
    return te.value("gamma_1d") / g_tm;
}

} // namespace pcwqed::fit
