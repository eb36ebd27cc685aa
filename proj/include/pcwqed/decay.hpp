// decay.hpp: position-averaged fluorescence decay of N atoms, exponential rate
// extraction and mean-atom-number inference from decay rate vs hold time.
//
// Rates are in Gamma0 units and times in microseconds unless a name says otherwise.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcwqed/ensemble.hpp"
#include "pcwqed/errors.hpp"
#include "pcwqed/least_squares.hpp"
#include "pcwqed/units.hpp"

namespace pcwqed::decay {

// ------------------------------------------------------------- scaled Bessel I0, I1

namespace detail {

inline constexpr double series_limit = 30.0;

// e^{-x} I_k(x) from the power series; all terms are positive.
inline double bessel_series(int k, double x) {
    const double q = 0.25 * x * x;
    double term = k == 0 ? 1.0 : 0.5 * x;
    double sum = term;
    for (int m = 1; m < 500; ++m) {
        term *= q / (static_cast<double>(m) * static_cast<double>(m + k));
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return std::exp(-x) * sum;
}

// Large-x expansion e^{-x} I_k(x) ~ (2 pi x)^{-1/2} sum_m (-1)^m a_m(k) / x^m.
inline double bessel_asymptotic(int k, double x) {
    const double mu = 4.0 * k * k;
    double term = 1.0, sum = 1.0;
    for (int m = 1; m < 60; ++m) {
        const double odd = 2.0 * m - 1.0;
        const double next = -term * (mu - odd * odd) / (8.0 * m * x);
        if (std::abs(next) > std::abs(term)) break;
        term = next;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum / std::sqrt(units::two_pi * x);
}

// e^{-x} I_1(x) / x, regular at x = 0 (value 1/2).
inline double bessel_i1_over_x(double x) {
    if (x < 1.0) {
        const double q = 0.25 * x * x;
        double term = 0.5, sum = 0.5;
        for (int m = 1; m < 60; ++m) {
            term *= q / (static_cast<double>(m) * static_cast<double>(m + 1));
            sum += term;
            if (term < 1e-17 * sum) break;
        }
        return std::exp(-x) * sum;
    }
    return (x <= series_limit ? bessel_series(1, x) : bessel_asymptotic(1, x)) / x;
}

} // namespace detail

inline double bessel_i_scaled(int k, double x) {
    pcwqed::detail::require(k == 0 || k == 1, "bessel_i_scaled: order must be 0 or 1");
    pcwqed::detail::require(std::isfinite(x) || x == std::numeric_limits<double>::infinity(),
                            "bessel_i_scaled: argument must not be NaN");
    pcwqed::detail::require(x >= 0.0, "bessel_i_scaled: argument must be >= 0");
    if (x == std::numeric_limits<double>::infinity()) return 0.0;
    return x <= detail::series_limit ? detail::bessel_series(k, x) : detail::bessel_asymptotic(k, x);
}

// ----------------------------------------------------------------- intensity model

// Position-averaged decay intensity for n atoms. `t` is in units of 1/(rate unit); the
// prefactor gamma^2 e^{-(n gamma + Gamma') t} I0^{n-2} is carried with scaled Bessels.
inline double intensity_n(int n, double t, double gamma_1d, double gamma_prime) {
    pcwqed::detail::require(n >= 1, "intensity_n: atom count must be >= 1");
    pcwqed::detail::require(std::isfinite(t) && t >= 0.0, "intensity_n: time must be >= 0");
    pcwqed::detail::require(std::isfinite(gamma_1d) && gamma_1d >= 0.0, "intensity_n: gamma_1d must be >= 0");
    pcwqed::detail::require(std::isfinite(gamma_prime) && gamma_prime > 0.0, "intensity_n: gamma_prime must be > 0");
    const double g = 0.5 * gamma_1d;
    const double x = g * t;
    const double nn = n;
    double i0, i1, i1_over_x;
    if (x < 1e-6) {
        // Second order in x.
        i0 = 1.0 - x + 0.75 * x * x;
        i1 = 0.5 * x - 0.5 * x * x;
        i1_over_x = 0.5 - 0.5 * x + 0.3125 * x * x;
    } else {
        i0 = bessel_i_scaled(0, x);
        i1 = bessel_i_scaled(1, x);
        i1_over_x = detail::bessel_i1_over_x(x);
    }
    const double bracket = 0.25 * nn * (nn + 1.0) * i0 * i0 - 0.25 * nn * i0 * i1_over_x - 0.5 * nn * nn * i0 * i1 +
                           0.25 * nn * (nn - 1.0) * i1 * i1;
    const double envelope = g * g * std::exp(-gamma_prime * t) * std::pow(i0, nn - 2.0);
    return std::max(0.0, envelope * bracket);
}

// t in microseconds, rates in Gamma0 units.
inline double intensity_n_us(int n, double t_us, double gamma_1d, double gamma_prime) {
    const double g0 = units::angular_from_gamma0(1.0);
    return intensity_n(n, t_us * g0, gamma_1d, gamma_prime);
}

// ---------------------------------------------------------------------- curves

struct DecayCurve {
    std::vector<double> t_us;
    std::vector<double> intensity;
    double gamma_prime{1.0};
    double gamma_1d{0.0};

    std::size_t size() const noexcept { return t_us.size(); }

    void validate() const {
        pcwqed::detail::require(t_us.size() == intensity.size(), "DecayCurve: column lengths differ");
        for (std::size_t i = 0; i < size(); ++i) {
            pcwqed::detail::require(std::isfinite(t_us[i]) && std::isfinite(intensity[i]), "DecayCurve: non-finite sample");
            if (i > 0) pcwqed::detail::require(t_us[i] > t_us[i - 1], "DecayCurve: times must increase strictly");
        }
    }
};

inline DecayCurve model_curve(int n, double gamma_1d, double gamma_prime, const std::vector<double>& t_us) {
    DecayCurve c;
    c.t_us = t_us;
    c.gamma_1d = gamma_1d;
    c.gamma_prime = gamma_prime;
    c.intensity.resize(t_us.size());
    for (std::size_t i = 0; i < t_us.size(); ++i) c.intensity[i] = intensity_n_us(n, t_us[i], gamma_1d, gamma_prime);
    c.validate();
    return c;
}

// Poisson mixture of peak-normalized curves, sum_{N>=1} P(N) I_N(t) / I_N(0).
inline DecayCurve mixture_curve(double n_bar, double gamma_1d, double gamma_prime, const std::vector<double>& t_us) {
    pcwqed::detail::require(n_bar >= 0.0, "mixture_curve: n_bar must be >= 0");
    const auto w = ensemble::poisson_weights(n_bar);
    DecayCurve c;
    c.t_us = t_us;
    c.gamma_1d = gamma_1d;
    c.gamma_prime = gamma_prime;
    c.intensity.assign(t_us.size(), 0.0);
    // As n_bar -> 0 the N = 1 term dominates; keep it so the limit is continuous.
    const std::size_t top = std::max<std::size_t>(w.size(), 2);
    for (std::size_t n = 1; n < top; ++n) {
        double weight = n < w.size() ? w[n] : 0.0;
        if (n_bar == 0.0 && n == 1) weight = 1.0;
        if (weight == 0.0) continue;
        const double i0 = intensity_n(static_cast<int>(n), 0.0, gamma_1d, gamma_prime);
        for (std::size_t k = 0; k < t_us.size(); ++k)
            c.intensity[k] += weight * intensity_n_us(static_cast<int>(n), t_us[k], gamma_1d, gamma_prime) / i0;
    }
    c.validate();
    return c;
}

// ------------------------------------------------------- single-exponential fits

struct TimeWindow {
    double t_lo_us{0.0};
    double t_hi_us{0.0};
};

inline constexpr double default_window_lo = 0.1; // in units of 1/Gamma_tot
inline constexpr double default_window_hi = 2.0;
inline constexpr std::size_t min_window_samples = 8;

struct ExponentialFit {
    double rate{0.0};     // Gamma0 units
    TimeWindow window;
    std::size_t samples{0};
    int window_iterations{0};
};

namespace detail {

// Least-squares slope of log intensity, uniform weights. Intensities are rescaled by an
// exact power of two first, so a power-of-two change of scale gives a bit-identical result.
inline double log_slope(const DecayCurve& c, const TimeWindow& w, std::size_t& used) {
    double peak = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.t_us[i] < w.t_lo_us || c.t_us[i] > w.t_hi_us) continue;
        if (!(c.intensity[i] > 0.0))
            throw InputError("fit_single_exponential: non-positive intensity at t = " + std::to_string(c.t_us[i]) + " us");
        idx.push_back(i);
        peak = std::max(peak, c.intensity[i]);
    }
    used = idx.size();
    if (idx.size() < min_window_samples)
        throw InputError("fit_single_exponential: fewer than 8 samples in the fit window");
    int e = 0;
    std::frexp(peak, &e);
    double st = 0.0, sy = 0.0;
    std::vector<double> y(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        y[k] = std::log(std::ldexp(c.intensity[idx[k]], -e));
        st += c.t_us[idx[k]];
        sy += y[k];
    }
    const double n = static_cast<double>(idx.size());
    const double tm = st / n, ym = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const double dt = c.t_us[idx[k]] - tm;
        sxx += dt * dt;
        sxy += dt * (y[k] - ym);
    }
    return sxy / sxx;
}

} // namespace detail

inline ExponentialFit fit_single_exponential(const DecayCurve& curve, const TimeWindow& window) {
    curve.validate();
    pcwqed::detail::require(window.t_hi_us > window.t_lo_us, "fit_single_exponential: empty window");
    ExponentialFit f;
    f.window = window;
    f.rate = -detail::log_slope(curve, window, f.samples) / units::angular_from_gamma0(1.0);
    return f;
}

// Default window [0.1, 2] / Gamma_tot, iterated to a fixed point in the fitted rate.
inline ExponentialFit fit_single_exponential(const DecayCurve& curve) {
    curve.validate();
    pcwqed::detail::require(curve.size() >= min_window_samples, "fit_single_exponential: need >= 8 samples");
    const double g0 = units::angular_from_gamma0(1.0);
    double rate = curve.gamma_prime + 0.5 * curve.gamma_1d;
    ExponentialFit f;
    for (int it = 1; it <= 100; ++it) {
        const TimeWindow w{default_window_lo / (rate * g0), default_window_hi / (rate * g0)};
        f = fit_single_exponential(curve, w);
        f.window_iterations = it;
        if (!(f.rate > 0.0)) throw NumericError("fit_single_exponential: fitted rate is not positive");
        if (std::abs(f.rate - rate) <= 1e-12 * rate) return f;
        rate = f.rate;
    }
    throw NumericError("fit_single_exponential: window iteration did not settle");
}

// Uniform time grid for model evaluation covering [0, span / Gamma_ref].
inline std::vector<double> decay_time_grid(double gamma_ref, double span = 3.0, std::size_t n = 1201) {
    pcwqed::detail::require(gamma_ref > 0.0, "decay_time_grid: reference rate must be > 0");
    return ensemble::linear_grid(0.0, span / units::angular_from_gamma0(gamma_ref), n);
}

// Gamma_fit / Gamma_1D for single atoms: the fitted guided rate relative to the peak rate.
inline double single_atom_fit_ratio(double gamma_1d, double gamma_prime) {
    pcwqed::detail::require(gamma_1d > 0.0, "single_atom_fit_ratio: gamma_1d must be > 0");
    const auto c = model_curve(1, gamma_1d, gamma_prime, decay_time_grid(gamma_prime));
    return (fit_single_exponential(c).rate - gamma_prime) / gamma_1d;
}

// Peak guided rate estimated from a single-atom decay measurement.
inline double gamma_1d_from_decay(const DecayCurve& curve, double gamma_prime, double fit_ratio) {
    pcwqed::detail::require(fit_ratio > 0.0, "gamma_1d_from_decay: ratio must be > 0");
    return (fit_single_exponential(curve).rate - gamma_prime) / fit_ratio;
}

inline constexpr std::size_t window_model_samples = 801;

// Fitted total decay rate of the normalized Poisson mixture. The model is sampled on the fit
// window itself, so no grid point enters or leaves it and the rate is smooth in n_bar, which
// invert_mixture_rate relies on.
inline double mixture_decay_rate(double n_bar, double gamma_1d, double gamma_prime) {
    const double g0 = units::angular_from_gamma0(1.0);
    double rate = gamma_prime + 0.5 * gamma_1d * (1.0 + n_bar);
    for (int it = 0; it < 100; ++it) {
        const TimeWindow w{default_window_lo / (rate * g0), default_window_hi / (rate * g0)};
        const auto c = mixture_curve(n_bar, gamma_1d, gamma_prime, ensemble::linear_grid(w.t_lo_us, w.t_hi_us, window_model_samples));
        const double next = fit_single_exponential(c, {0.0, 2.0 * w.t_hi_us}).rate;
        if (std::abs(next - rate) <= 1e-12 * rate) return next;
        rate = next;
    }
    throw NumericError("mixture_decay_rate: window iteration did not settle");
}

// ------------------------------------------------------- mean atom number inference

struct HoldTimePoint {
    double t_m_ms{0.0};
    double gamma_tot{0.0}; // Gamma' units
};

struct NbarFit {
    double gamma_sr{0.0};   // amplitude of the hold-time exponential [Gamma']
    double tau_sr_ms{0.0};
    double asymptote{0.0};  // [Gamma']
    double probe_time_ms{4.0};
    double gamma_tot_at_probe{0.0};
    double n_bar{0.0};      // mean atom number at the probe time
    double eta_sr{0.0};     // gamma_sr / (n_bar gamma_1d)
    fit::FitReport report;
};

inline constexpr double default_probe_time_ms = 4.0;

// Inverts mixture_decay_rate for n_bar by bisection (rate grows with n_bar).
inline double invert_mixture_rate(double rate, double gamma_1d, double gamma_prime = 1.0, double n_hi = 40.0) {
    const double r0 = mixture_decay_rate(0.0, gamma_1d, gamma_prime);
    if (rate <= r0) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (mixture_decay_rate(hi, gamma_1d, gamma_prime) < rate) {
        lo = hi;
        hi *= 2.0;
        if (hi > n_hi) throw NumericError("invert_mixture_rate: rate above the modelled range");
    }
    for (int i = 0; i < 60 && hi - lo > 1e-9; ++i) {
        const double mid = 0.5 * (lo + hi);
        (mixture_decay_rate(mid, gamma_1d, gamma_prime) < rate ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// gamma_1d is fixed and in Gamma' units.
inline NbarFit fit_nbar(const std::vector<HoldTimePoint>& data, double gamma_1d,
                        double probe_time_ms = default_probe_time_ms) {
    pcwqed::detail::require(data.size() >= 5, "fit_nbar: need >= 5 hold-time points");
    pcwqed::detail::require(gamma_1d > 0.0, "fit_nbar: gamma_1d must be > 0");
    double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin, tmax = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        pcwqed::detail::require(std::isfinite(data[i].t_m_ms) && std::isfinite(data[i].gamma_tot) && data[i].t_m_ms >= 0.0,
                                "fit_nbar: non-finite data");
        if (i > 0) pcwqed::detail::require(data[i].t_m_ms > data[i - 1].t_m_ms, "fit_nbar: hold times must increase");
        ymin = std::min(ymin, data[i].gamma_tot);
        ymax = std::max(ymax, data[i].gamma_tot);
        tmax = std::max(tmax, data[i].t_m_ms);
    }
    if (!(ymax - ymin > 1e-9 * std::max(1.0, std::abs(ymax))))
        throw IdentifiabilityError("fit_nbar: decay rates do not vary with hold time");

    Eigen::VectorXd t(static_cast<Eigen::Index>(data.size())), y(t.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        t(static_cast<Eigen::Index>(i)) = data[i].t_m_ms;
        y(static_cast<Eigen::Index>(i)) = data[i].gamma_tot;
    }
    auto residual = [&](const Eigen::VectorXd& p) {
        return Eigen::VectorXd((p(0) * (-t.array() / p(1)).exp() + p(2) - y.array()).matrix());
    };
    const double inf = std::numeric_limits<double>::infinity();
    const double span = ymax - ymin;
    std::vector<fit::ParameterSpec> ps{
        {"gamma_sr", data.front().gamma_tot - data.back().gamma_tot, -inf, inf, span},
        {"tau_sr_ms", 0.5 * tmax, 1e-6 * tmax, inf, tmax},
        {"asymptote", data.back().gamma_tot, -inf, inf, std::max(std::abs(ymax), 1e-3)},
    };
    if (ps[0].init == 0.0) ps[0].init = span;
    auto rep = fit::least_squares(residual, ps);
    if (!rep.converged) throw NumericError("fit_nbar: hold-time fit did not converge (" + rep.message + ")");
    const auto& amp = rep.at("gamma_sr");
    if (amp.value == 0.0 || (amp.sigma > std::abs(amp.value) && rep.chi2 > 0.0))
        throw IdentifiabilityError("fit_nbar: superradiant amplitude is not identifiable from the data");

    NbarFit out;
    out.gamma_sr = amp.value;
    out.tau_sr_ms = rep.value("tau_sr_ms");
    out.asymptote = rep.value("asymptote");
    out.probe_time_ms = probe_time_ms;
    out.gamma_tot_at_probe = out.gamma_sr * std::exp(-probe_time_ms / out.tau_sr_ms) + out.asymptote;
    out.n_bar = invert_mixture_rate(out.gamma_tot_at_probe, gamma_1d, 1.0);
    out.eta_sr = out.n_bar > 0.0 ? out.gamma_sr / (out.n_bar * gamma_1d) : std::nan("");
    out.report = std::move(rep);
    return out;
}

inline std::vector<HoldTimePoint> hold_time_series(double gamma_sr, double tau_sr_ms, double asymptote,
                                                   const std::vector<double>& t_m_ms) {
    std::vector<HoldTimePoint> out;
    for (double tm : t_m_ms) out.push_back({tm, gamma_sr * std::exp(-tm / tau_sr_ms) + asymptote});
    return out;
}

} // namespace pcwqed::decay
