// ensemble.hpp: transmission averaged over atom positions along the Bloch function and
// over the atom-number distribution; optical-density model for weakly coupled probing.
//
// Bright-mode averages depend on the positions only through s = sum_j cos^2(pi x_j / a),
// so every averaging method reduces to a weighted set of s nodes (SDistribution).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pcwqed/errors.hpp"
#include "pcwqed/least_squares.hpp"
#include "pcwqed/parallel.hpp"
#include "pcwqed/random.hpp"
#include "pcwqed/spinmodel.hpp"
#include "pcwqed/units.hpp"

namespace pcwqed::ensemble {

using cplx = std::complex<double>;
using spin::CouplingRates;

enum class Polarization { te, tm };

struct Spectrum {
    std::vector<double> detuning_mhz;
    std::vector<double> transmission; // T / T0
    std::vector<double> sigma;        // one-sigma uncertainty; 0 for model curves
    Polarization mode{Polarization::te};
    double delta_be_ghz{std::numeric_limits<double>::quiet_NaN()};

    std::size_t size() const noexcept { return detuning_mhz.size(); }

    void validate() const {
        pcwqed::detail::require(transmission.size() == detuning_mhz.size() && sigma.size() == detuning_mhz.size(),
                        "Spectrum: column lengths differ");
        for (std::size_t i = 0; i < size(); ++i) {
            pcwqed::detail::require(std::isfinite(detuning_mhz[i]) && std::isfinite(transmission[i]),
                            "Spectrum: non-finite sample");
            pcwqed::detail::require(std::isfinite(sigma[i]) && sigma[i] >= 0.0, "Spectrum: sigma must be >= 0");
            if (i > 0) pcwqed::detail::require(detuning_mhz[i] > detuning_mhz[i - 1], "Spectrum: detunings must increase");
        }
    }
};

inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
    pcwqed::detail::require(n >= 1 && std::isfinite(lo) && std::isfinite(hi), "linear_grid: bad range");
    std::vector<double> g(n);
    if (n == 1) {
        g[0] = lo;
        return g;
    }
    pcwqed::detail::require(hi > lo, "linear_grid: hi must exceed lo");
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

// ------------------------------------------------------------------ ensemble settings

enum class PositionMethod { quadrature, monte_carlo, pinned };
enum class NumberStatistics { poisson, fixed };
enum class TransmissionModel { bright_mode, exact };

inline constexpr double poisson_tail_tolerance = 1e-6;
inline constexpr std::size_t min_monte_carlo_samples = 1000;

struct EnsembleSpec {
    double n_bar{0.0};
    PositionMethod position_method{PositionMethod::quadrature};
    NumberStatistics number_statistics{NumberStatistics::poisson};
    TransmissionModel model{TransmissionModel::bright_mode};
    std::size_t samples{100000};          // Monte Carlo configurations per atom number
    std::optional<std::uint64_t> seed;    // required for monte_carlo
    double bin_width{1e-3};               // s-grid spacing for quadrature
    double cloud_half_width_nm{6000.0};   // exact model: x uniform in [-w, w]
    double lattice_constant_nm{370.0};

    void validate() const {
        pcwqed::detail::require(std::isfinite(n_bar) && n_bar >= 0.0, "EnsembleSpec: n_bar must be >= 0");
        if (number_statistics == NumberStatistics::fixed)
            pcwqed::detail::require(n_bar == std::round(n_bar) && n_bar <= 10000,
                            "EnsembleSpec: fixed number statistics need an integer atom number");
        if (position_method == PositionMethod::monte_carlo) {
            pcwqed::detail::require(seed.has_value(), "EnsembleSpec: monte_carlo averaging requires a seed");
            pcwqed::detail::require(samples >= min_monte_carlo_samples, "EnsembleSpec: monte_carlo needs >= 1000 samples");
        }
        if (model == TransmissionModel::exact)
            pcwqed::detail::require(position_method == PositionMethod::monte_carlo || position_method == PositionMethod::pinned,
                            "EnsembleSpec: the exact model is averaged by monte_carlo only");
        pcwqed::detail::require(bin_width > 0.0 && bin_width <= 0.1, "EnsembleSpec: bin_width must be in (0, 0.1]");
        pcwqed::detail::require(cloud_half_width_nm > 0.0 && lattice_constant_nm > 0.0,
                        "EnsembleSpec: lengths must be > 0");
    }

    int n_max() const;
};

// Smallest N with cumulative Poisson mass > 1 - 1e-6.
inline int poisson_truncation(double n_bar, double tail = poisson_tail_tolerance) {
    pcwqed::detail::require(std::isfinite(n_bar) && n_bar >= 0.0, "poisson_truncation: n_bar must be >= 0");
    if (n_bar == 0.0) return 0;
    double p = std::exp(-n_bar), cum = p;
    int n = 0;
    while (cum <= 1.0 - tail) {
        ++n;
        p *= n_bar / n;
        cum += p;
        if (n > 100000) throw InputError("poisson_truncation: n_bar too large");
    }
    return n;
}

// P(N) for N = 0..n_max, renormalized after truncation.
inline std::vector<double> poisson_weights(double n_bar, double tail = poisson_tail_tolerance) {
    const int n_max = poisson_truncation(n_bar, tail);
    std::vector<double> w(static_cast<std::size_t>(n_max) + 1);
    double p = std::exp(-n_bar), total = 0.0;
    for (int n = 0; n <= n_max; ++n) {
        if (n > 0) p *= n_bar / n;
        w[static_cast<std::size_t>(n)] = p;
        total += p;
    }
    for (auto& v : w) v /= total;
    return w;
}

inline int EnsembleSpec::n_max() const {
    return number_statistics == NumberStatistics::fixed ? static_cast<int>(n_bar) : poisson_truncation(n_bar);
}

// ------------------------------------------------------------ s = sum cos^2 nodes

class SDistribution {
public:
    std::vector<double> nodes;
    std::vector<double> weights;

    double total_weight() const {
        double t = 0.0;
        for (double w : weights) t += w;
        return t;
    }

    double mean() const {
        double m = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) m += nodes[i] * weights[i];
        return m;
    }

    static SDistribution point(double s, double weight = 1.0) { return {{s}, {weight}}; }

    // Density of cos^2(pi u), u uniform on [0, 1), deposited on a grid of spacing h by
    // cloud-in-cell from midpoint u nodes.
    static SDistribution single_atom(double h, std::size_t u_nodes = 200000) {
        const auto n = static_cast<std::size_t>(std::llround(1.0 / h));
        pcwqed::detail::require(n >= 1 && std::abs(n * h - 1.0) < 1e-9, "SDistribution: 1/h must be an integer");
        SDistribution d;
        d.nodes.resize(n + 1);
        d.weights.assign(n + 1, 0.0);
        for (std::size_t k = 0; k <= n; ++k) d.nodes[k] = static_cast<double>(k) * h;
        for (std::size_t i = 0; i < u_nodes; ++i) {
            const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(u_nodes);
            const double c = std::cos(units::pi * u);
            deposit(d.weights, c * c / h, 1.0 / static_cast<double>(u_nodes));
        }
        return d;
    }

    // Grid convolution; both operands must share the grid spacing and start at 0.
    static std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> out(a.size() + b.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] == 0.0) continue;
            for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
        }
        return out;
    }

    // Weighted mixture over atom number, sum_N w_N * density_N, on a grid of spacing h.
    static SDistribution mixture(const std::vector<double>& number_weights, double h) {
        const auto one = single_atom(h);
        SDistribution out;
        std::vector<double> acc{1.0}; // N = 0
        std::vector<double> mix;
        for (std::size_t n = 0; n < number_weights.size(); ++n) {
            if (n > 0) acc = convolve(acc, one.weights);
            if (mix.size() < acc.size()) mix.resize(acc.size(), 0.0);
            for (std::size_t k = 0; k < acc.size(); ++k) mix[k] += number_weights[n] * acc[k];
        }
        out.weights = mix;
        out.nodes.resize(mix.size());
        for (std::size_t k = 0; k < mix.size(); ++k) out.nodes[k] = static_cast<double>(k) * h;
        out.prune();
        return out;
    }

    static SDistribution for_count(int n, double h) {
        std::vector<double> w(static_cast<std::size_t>(n) + 1, 0.0);
        w.back() = 1.0;
        return mixture(w, h);
    }

    // Re-deposits onto a coarser grid, preserving total weight and mean.
    SDistribution rebinned(double h) const {
        pcwqed::detail::require(h > 0.0, "SDistribution: bin width must be > 0");
        double top = 0.0;
        for (double s : nodes) top = std::max(top, s);
        SDistribution out;
        const auto n = static_cast<std::size_t>(std::ceil(top / h)) + 1;
        out.weights.assign(n + 1, 0.0);
        out.nodes.resize(n + 1);
        for (std::size_t k = 0; k <= n; ++k) out.nodes[k] = static_cast<double>(k) * h;
        for (std::size_t i = 0; i < nodes.size(); ++i) deposit(out.weights, nodes[i] / h, weights[i]);
        out.prune();
        return out;
    }

private:
    static void deposit(std::vector<double>& w, double pos, double mass) {
        auto k = static_cast<std::size_t>(std::floor(pos));
        if (k >= w.size() - 1) {
            w.back() += mass;
            return;
        }
        const double f = pos - static_cast<double>(k);
        w[k] += mass * (1.0 - f);
        w[k + 1] += mass * f;
    }

    void prune() {
        std::size_t j = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (weights[i] == 0.0) continue;
            nodes[j] = nodes[i];
            weights[j] = weights[i];
            ++j;
        }
        nodes.resize(j);
        weights.resize(j);
    }
};

// ------------------------------------------------------------------ Monte Carlo

namespace detail {

// Randomly shifted Kronecker design of `samples` points in [0,1)^n, keyed by (seed, n).
// Frequencies are powers of the inverse generalized golden ratio (root of x^(n+1) = x + 1).
// The integrands are smooth and periodic in each coordinate, where this design converges far
// faster than independent draws; the random shift keeps the estimate unbiased.
inline std::vector<double> sample_design(int n, std::size_t samples, std::uint64_t seed) {
    const auto dims = static_cast<std::size_t>(n);
    double phi = 2.0;
    for (int it = 0; it < 100; ++it) phi = std::pow(1.0 + phi, 1.0 / static_cast<double>(n + 1));
    rng::CounterRng g(seed, static_cast<std::uint64_t>(n));
    std::vector<double> alpha(dims), shift(dims);
    for (std::size_t j = 0; j < dims; ++j) {
        alpha[j] = std::fmod(std::pow(1.0 / phi, static_cast<double>(j + 1)), 1.0);
        shift[j] = g.uniform();
    }
    std::vector<double> u(samples * dims);
    for (std::size_t i = 0; i < samples; ++i)
        for (std::size_t j = 0; j < dims; ++j) {
            const double v = shift[j] + static_cast<double>(i + 1) * alpha[j];
            u[i * dims + j] = v - std::floor(v);
        }
    return u;
}

} // namespace detail

inline SDistribution monte_carlo_s(int n, std::size_t samples, std::uint64_t seed, double weight = 1.0) {
    if (n == 0) return SDistribution::point(0.0, weight);
    const auto u = detail::sample_design(n, samples, seed);
    SDistribution d;
    d.nodes.resize(samples);
    d.weights.assign(samples, weight / static_cast<double>(samples));
    for (std::size_t i = 0; i < samples; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            const double c = std::cos(units::pi * u[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)]);
            s += c * c;
        }
        d.nodes[i] = s;
    }
    return d;
}

// s-distribution for exactly n atoms under the configured position method.
inline SDistribution s_distribution_for_count(int n, const EnsembleSpec& spec) {
    pcwqed::detail::require(n >= 0, "atom count must be >= 0");
    switch (spec.position_method) {
    case PositionMethod::pinned: return SDistribution::point(n);
    case PositionMethod::monte_carlo: return monte_carlo_s(n, spec.samples, *spec.seed);
    case PositionMethod::quadrature: break;
    }
    if (n == 0) return SDistribution::point(0.0);
    return SDistribution::for_count(n, spec.bin_width);
}

// s-distribution including the atom-number statistics.
inline SDistribution s_distribution(const EnsembleSpec& spec) {
    spec.validate();
    if (spec.number_statistics == NumberStatistics::fixed)
        return s_distribution_for_count(static_cast<int>(spec.n_bar), spec);
    const auto w = poisson_weights(spec.n_bar);
    if (spec.position_method == PositionMethod::quadrature) return SDistribution::mixture(w, spec.bin_width);
    SDistribution out;
    for (std::size_t n = 0; n < w.size(); ++n) {
        auto d = s_distribution_for_count(static_cast<int>(n), spec);
        for (std::size_t k = 0; k < d.nodes.size(); ++k) {
            out.nodes.push_back(d.nodes[k]);
            out.weights.push_back(w[n] * d.weights[k]);
        }
    }
    return out;
}

// ------------------------------------------------------------- averaged spectra

// <|t/t0|^2> for the bright-mode form over a fixed s distribution:
// |d|^2 / |d + s lambda|^2 with d = x + i Gamma'/2 and lambda = J + i Gamma/2.
inline double bright_average(double detuning_mhz, const CouplingRates& rates, const SDistribution& dist) {
    const double x = units::gamma0_from_mhz(detuning_mhz + rates.delta_0);
    const double y = 0.5 * rates.gamma_prime;
    const double j = rates.j_1d, g = 0.5 * rates.gamma_1d;
    const double num = x * x + y * y;
    double acc = 0.0;
    const double* s = dist.nodes.data();
    const double* w = dist.weights.data();
    for (std::size_t k = 0, n = dist.nodes.size(); k < n; ++k) {
        const double re = x + s[k] * j, im = y + s[k] * g;
        acc += w[k] * (num / (re * re + im * im)); // exactly w at s = 0
    }
    return acc;
}

inline Spectrum bright_spectrum(const std::vector<double>& grid, const CouplingRates& rates, const SDistribution& dist) {
    rates.validate();
    Spectrum out;
    out.detuning_mhz = grid;
    out.transmission.assign(grid.size(), 0.0);
    out.sigma.assign(grid.size(), 0.0);
    parallel::parallel_for(grid.size(), [&](std::size_t i) { out.transmission[i] = bright_average(grid[i], rates, dist); });
    return out;
}

// Eigenvalue sets (Gamma0 units, per unit peak coupling) for Monte Carlo configurations of
// the exact model. Eigenvalues scale linearly with J + i Gamma/2, so one set serves all rates.
struct ExactSamples {
    std::vector<std::vector<cplx>> eigenvalues;
    std::vector<double> weights;
};

inline ExactSamples exact_samples(int n, double kappa_x, const EnsembleSpec& spec, double weight = 1.0) {
    ExactSamples out;
    if (n == 0) {
        out.eigenvalues.emplace_back();
        out.weights.push_back(weight);
        return out;
    }
    CouplingRates unit;
    unit.gamma_1d = 2.0; // J + i Gamma/2 = i
    unit.gamma_prime = 1.0;
    spin::AtomConfiguration cfg;
    cfg.kappa_x = kappa_x;
    cfg.lattice_constant = spec.lattice_constant_nm;
    cfg.positions_nm.resize(static_cast<std::size_t>(n));
    if (spec.position_method == PositionMethod::pinned) {
        for (int j = 0; j < n; ++j) cfg.positions_nm[static_cast<std::size_t>(j)] = 0.0;
        auto ev = spin::eigenvalues(spin::build_coupling_matrix(unit, cfg));
        for (auto& v : ev) v /= cplx(0.0, 1.0);
        out.eigenvalues.push_back(ev);
        out.weights.push_back(weight);
        return out;
    }
    const auto u = detail::sample_design(n, spec.samples, *spec.seed);
    out.eigenvalues.resize(spec.samples);
    out.weights.assign(spec.samples, weight / static_cast<double>(spec.samples));
    parallel::parallel_for(spec.samples, [&](std::size_t i) {
        spin::AtomConfiguration c = cfg;
        for (int j = 0; j < n; ++j)
            c.positions_nm[static_cast<std::size_t>(j)] =
                spec.cloud_half_width_nm * (2.0 * u[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] - 1.0);
        auto ev = spin::eigenvalues(spin::build_coupling_matrix(unit, c));
        for (auto& v : ev) v /= cplx(0.0, 1.0);
        out.eigenvalues[i] = std::move(ev);
    }, 64);
    return out;
}

inline double exact_average(double detuning_mhz, const CouplingRates& rates, const ExactSamples& s) {
    const cplx d{units::gamma0_from_mhz(detuning_mhz + rates.delta_0), 0.5 * rates.gamma_prime};
    const cplx lam = rates.peak_coupling();
    double acc = 0.0;
    for (std::size_t k = 0; k < s.eigenvalues.size(); ++k) {
        cplx ratio{1.0, 0.0};
        for (const auto& e : s.eigenvalues[k]) ratio *= d / (d + e * lam);
        acc += s.weights[k] * std::norm(ratio);
    }
    return acc;
}

inline Spectrum exact_spectrum(const std::vector<double>& grid, const CouplingRates& rates, const ExactSamples& s) {
    rates.validate();
    Spectrum out;
    out.detuning_mhz = grid;
    out.transmission.assign(grid.size(), 0.0);
    out.sigma.assign(grid.size(), 0.0);
    parallel::parallel_for(grid.size(), [&](std::size_t i) { out.transmission[i] = exact_average(grid[i], rates, s); });
    return out;
}

// Average over positions for exactly n atoms.
inline Spectrum average_positions(int n, const CouplingRates& rates, double kappa_x, const std::vector<double>& grid,
                                  const EnsembleSpec& spec) {
    spec.validate();
    rates.validate();
    pcwqed::detail::require(n >= 0, "average_positions: atom count must be >= 0");
    pcwqed::detail::require(std::isfinite(kappa_x) && kappa_x >= 0.0, "average_positions: kappa_x must be >= 0");
    if (spec.model == TransmissionModel::exact) return exact_spectrum(grid, rates, exact_samples(n, kappa_x, spec));
    return bright_spectrum(grid, rates, s_distribution_for_count(n, spec));
}

// Average over positions and atom number.
inline Spectrum average_poisson(const EnsembleSpec& spec, const CouplingRates& rates, double kappa_x,
                                const std::vector<double>& grid) {
    spec.validate();
    rates.validate();
    pcwqed::detail::require(std::isfinite(kappa_x) && kappa_x >= 0.0, "average_poisson: kappa_x must be >= 0");
    if (spec.model == TransmissionModel::bright_mode) return bright_spectrum(grid, rates, s_distribution(spec));
    if (spec.number_statistics == NumberStatistics::fixed)
        return exact_spectrum(grid, rates, exact_samples(static_cast<int>(spec.n_bar), kappa_x, spec));
    const auto w = poisson_weights(spec.n_bar);
    ExactSamples all;
    for (std::size_t n = 0; n < w.size(); ++n) {
        auto s = exact_samples(static_cast<int>(n), kappa_x, spec, w[n]);
        all.eigenvalues.insert(all.eigenvalues.end(), s.eigenvalues.begin(), s.eigenvalues.end());
        all.weights.insert(all.weights.end(), s.weights.begin(), s.weights.end());
    }
    return exact_spectrum(grid, rates, all);
}

// ------------------------------------------------------------ optical density model

inline double optical_depth(double n_bar, double gamma_1d_tm, double gamma_prime) {
    pcwqed::detail::require(n_bar >= 0.0 && gamma_1d_tm >= 0.0 && gamma_prime > 0.0,
                            "optical_depth: need n_bar >= 0, gamma_1d >= 0, gamma_prime > 0");
    return 2.0 * n_bar * gamma_1d_tm / gamma_prime;
}

// T/T0 = exp(-OD / (1 + (2 (Delta + Delta0) / linewidth)^2)); linewidth = Gamma_1D^TM + Gamma'.
inline double od_transmission(double detuning_mhz, double od, double linewidth_mhz, double delta_0_mhz) {
    pcwqed::detail::require(std::isfinite(od) && od >= 0.0, "od_transmission: od must be >= 0");
    pcwqed::detail::require(std::isfinite(linewidth_mhz) && linewidth_mhz > 0.0, "od_transmission: linewidth must be > 0");
    pcwqed::detail::require(std::isfinite(detuning_mhz) && std::isfinite(delta_0_mhz), "od_transmission: non-finite detuning");
    const double x = 2.0 * (detuning_mhz + delta_0_mhz) / linewidth_mhz;
    return std::exp(-od / (1.0 + x * x));
}

// --------------------------------------------------------- effective single-mode fit

// Unaveraged single collective mode with total decay rate A and shift B (Gamma0 units).
inline double single_mode_transmission(double detuning_mhz, double a, double b, double gamma_prime, double delta_0_mhz) {
    const double x = units::gamma0_from_mhz(detuning_mhz + delta_0_mhz);
    const cplx num{x, 0.5 * gamma_prime};
    const cplx den{x + b, 0.5 * (gamma_prime + a)};
    return std::norm(num / den);
}

struct EffectiveRates {
    double eta{0.0};   // A / (N Gamma_1D)
    double a{0.0};     // Gamma0 units
    double b{0.0};     // Gamma0 units
    fit::FitReport report;
};

inline constexpr double effective_half_span_gamma0 = 8.0;
inline constexpr std::size_t effective_points = 41;

// Fits A and B of the single-mode form (Gamma', Delta0 held at their true values) to the
// averaged spectrum over +-8 Gamma0 around the shifted resonance.
inline EffectiveRates effective_ratio(const CouplingRates& rates, const EnsembleSpec& spec, double kappa_x = 0.0) {
    rates.validate();
    spec.validate();
    pcwqed::detail::require(spec.n_bar > 0.0 && rates.gamma_1d > 0.0, "effective_ratio: need n_bar > 0 and gamma_1d > 0");
    const double span = units::mhz_from_gamma0(effective_half_span_gamma0);
    const auto grid = linear_grid(-rates.delta_0 - span, -rates.delta_0 + span, effective_points);
    const auto avg = average_poisson(spec, rates, kappa_x, grid);
    const Eigen::Map<const Eigen::VectorXd> y(avg.transmission.data(), static_cast<Eigen::Index>(avg.size()));
    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i)
            r(i) = single_mode_transmission(grid[static_cast<std::size_t>(i)], p(0), p(1), rates.gamma_prime, rates.delta_0) - y(i);
        return r;
    };
    const double scale = spec.n_bar * rates.gamma_1d;
    std::vector<fit::ParameterSpec> ps{
        {"A_gamma0", 0.5 * scale, 0.0, std::numeric_limits<double>::infinity(), std::max(scale, 1e-3)},
        {"B_gamma0", 0.5 * spec.n_bar * rates.j_1d, -std::numeric_limits<double>::infinity(),
         std::numeric_limits<double>::infinity(), std::max(scale, 1e-3)},
    };
    auto rep = fit::least_squares(residual, ps);
    if (!rep.converged) throw NumericError("effective_ratio: single-mode fit did not converge (" + rep.message + ")");
    EffectiveRates out;
    out.a = rep.value("A_gamma0");
    out.b = rep.value("B_gamma0");
    out.eta = out.a / scale;
    out.report = std::move(rep);
    return out;
}

} // namespace pcwqed::ensemble
