// photonic1d.hpp: effective 1D periodic dielectric: transfer matrices, Bloch analysis,
// finite-crystal transmission and field profiles, and the emitter Green's function.
//
// Conventions: fields are e^{+i k x}, frequencies in THz, lengths in nm. A layer matrix
// maps the (E, H) pair at the exit face of a layer onto its entrance face, with H scaled
// so that a right-going wave in index n has H = n E. Every layer matrix has unit
// determinant, and so do their products.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pcwqed/errors.hpp"
#include "pcwqed/units.hpp"

namespace pcwqed::photonic {

using cplx = std::complex<double>;

struct Layer {
    double index{1.0};
    double thickness_nm{0.0};
};

// A finite photonic crystal: n_cells copies of `cell`, with `taper` prepended (outermost
// layer first) and appended in mirrored order, embedded in a uniform ambient waveguide.
// The taper is grouped in cells of cell.size() layers; mirroring reverses the order of
// these groups but keeps the layer order inside each, so the period runs on unbroken.
struct LayerStack {
    std::vector<Layer> cell;
    int n_cells{0};
    std::vector<Layer> taper;
    double ambient_index{1.0};

    double lattice_constant() const noexcept {
        double a = 0.0;
        for (const auto& l : cell) a += l.thickness_nm;
        return a;
    }

    double taper_length() const noexcept {
        double len = 0.0;
        for (const auto& l : taper) len += l.thickness_nm;
        return len;
    }

    // Position frame: x = 0 at the entrance of the first nominal cell; the left taper
    // occupies negative x.
    double x_begin() const noexcept { return -taper_length(); }
    double x_end() const noexcept { return n_cells * lattice_constant() + taper_length(); }

    void validate() const {
        pcwqed::detail::require(!cell.empty(), "LayerStack: unit cell has no layers");
        pcwqed::detail::require(n_cells >= 0, "LayerStack: n_cells must be >= 0");
        pcwqed::detail::require(std::isfinite(ambient_index) && ambient_index >= 1.0,
                        "LayerStack: ambient index must be >= 1");
        auto check = [](const Layer& l) {
            pcwqed::detail::require(std::isfinite(l.index) && l.index >= 1.0,
                            "LayerStack: every layer index must be >= 1");
            pcwqed::detail::require(std::isfinite(l.thickness_nm) && l.thickness_nm > 0.0,
                            "LayerStack: every layer thickness must be > 0");
        };
        for (const auto& l : cell) check(l);
        for (const auto& l : taper) check(l);
        pcwqed::detail::require(taper.size() % cell.size() == 0,
                        "LayerStack: taper length must be a whole number of cells");
        pcwqed::detail::require(lattice_constant() > 0.0, "LayerStack: lattice constant must be > 0");
    }

    // Every layer from the left ambient to the right ambient.
    std::vector<Layer> layers() const {
        std::vector<Layer> out;
        out.reserve(2 * taper.size() + cell.size() * static_cast<std::size_t>(n_cells));
        out.insert(out.end(), taper.begin(), taper.end());
        for (int i = 0; i < n_cells; ++i) out.insert(out.end(), cell.begin(), cell.end());
        const std::size_t m = cell.size();
        for (std::size_t g = taper.size() / m; g-- > 0;)
            out.insert(out.end(), taper.begin() + static_cast<std::ptrdiff_t>(g * m),
                       taper.begin() + static_cast<std::ptrdiff_t>((g + 1) * m));
        return out;
    }
};

struct TransferMatrix2 {
    Eigen::Matrix2cd m{Eigen::Matrix2cd::Identity()};

    cplx det() const { return m.determinant(); }
    double half_trace() const { return 0.5 * m.trace().real(); }

    TransferMatrix2 operator*(const TransferMatrix2& rhs) const { return {m * rhs.m}; }
};

namespace detail {

inline void require_frequency(double nu_thz) {
    pcwqed::detail::require(std::isfinite(nu_thz) && nu_thz > 0.0,
                            "frequency must be finite and > 0 THz");
}

inline double phase(const Layer& l, double thickness_nm, double nu_thz) {
    return units::two_pi * l.index * thickness_nm * nu_thz / units::c_nm_thz;
}

inline Eigen::Matrix2cd layer_matrix(const Layer& l, double thickness_nm, double nu_thz) {
    const double d = phase(l, thickness_nm, nu_thz);
    const double c = std::cos(d), s = std::sin(d);
    const cplx i{0.0, 1.0};
    Eigen::Matrix2cd m;
    m << c, -i * s / l.index,
         -i * l.index * s, c;
    return m;
}

// Product of many unit-determinant matrices with the magnitude tracked in log form so
// that the evanescent growth deep inside a gap never overflows.
struct ScaledMatrix {
    Eigen::Matrix2cd m{Eigen::Matrix2cd::Identity()};
    double log_scale{0.0};

    void renormalize() {
        const double s = m.cwiseAbs().maxCoeff();
        if (s > 1e64 || (s > 0.0 && s < 1e-64)) {
            m /= s;
            log_scale += std::log(s);
        }
    }
    void right_multiply(const Eigen::Matrix2cd& x) {
        m = m * x;
        renormalize();
    }
};

inline ScaledMatrix stack_matrix(const std::vector<Layer>& layers, double nu_thz) {
    ScaledMatrix acc;
    for (const auto& l : layers) acc.right_multiply(layer_matrix(l, l.thickness_nm, nu_thz));
    return acc;
}

} // namespace detail

inline TransferMatrix2 layer_matrix(const Layer& layer, double nu_thz) {
    detail::require_frequency(nu_thz);
    return {detail::layer_matrix(layer, layer.thickness_nm, nu_thz)};
}

inline TransferMatrix2 cell_matrix(const LayerStack& stack, double nu_thz) {
    detail::require_frequency(nu_thz);
    stack.validate();
    TransferMatrix2 acc;
    for (const auto& l : stack.cell) acc.m = acc.m * detail::layer_matrix(l, l.thickness_nm, nu_thz);
    return acc;
}

// ----------------------------------------------------------------- Bloch analysis

// |trace/2| may exceed 1 by rounding in a uniform medium; anything within this margin
// counts as propagating.
inline constexpr double gap_margin = 1e-13;

struct BlochPoint {
    bool in_gap{false};
    double delta_k{0.0};   // pi/a - k_x in the band [rad/nm]; 0 in the gap
    double kappa{0.0};     // attenuation constant in the gap [rad/nm]; 0 in the band
    double half_trace{0.0};

    double delta_k_or_kappa() const noexcept { return in_gap ? kappa : delta_k; }
};

inline BlochPoint bloch_analysis(const LayerStack& stack, double nu_thz) {
    stack.validate();
    const double a = stack.lattice_constant();
    const double h = cell_matrix(stack, nu_thz).half_trace();
    BlochPoint p;
    p.half_trace = h;
    if (std::abs(h) > 1.0 + gap_margin) {
        p.in_gap = true;
        p.kappa = std::acosh(std::abs(h)) / a;
    } else {
        const double ka = std::acos(std::clamp(h, -1.0, 1.0));
        p.delta_k = (units::pi - ka) / a;
    }
    return p;
}

// Projected wave vector k_x folded into [0, pi/a].
inline double bloch_wavevector(const LayerStack& stack, double nu_thz) {
    const auto p = bloch_analysis(stack, nu_thz);
    return p.in_gap ? std::nan("") : units::pi / stack.lattice_constant() - p.delta_k;
}

inline constexpr double band_edge_tolerance_thz = 1e-6; // 1 MHz

// Bisection on |trace/2| - 1 between a propagating and an evanescent frequency.
inline double find_band_edge(const LayerStack& stack, double nu_band, double nu_gap,
                             double tol_thz = band_edge_tolerance_thz) {
    auto excess = [&](double nu) { return std::abs(cell_matrix(stack, nu).half_trace()) - 1.0; };
    double fb = excess(nu_band), fg = excess(nu_gap);
    if (!(fb <= gap_margin && fg > gap_margin))
        throw InputError("find_band_edge: bracket does not straddle a band edge");
    while (std::abs(nu_gap - nu_band) > tol_thz) {
        const double mid = 0.5 * (nu_band + nu_gap);
        if (excess(mid) > gap_margin) nu_gap = mid;
        else nu_band = mid;
    }
    return 0.5 * (nu_band + nu_gap);
}

struct BandGap {
    double lower_thz{0.0};
    double upper_thz{0.0};
    double width_thz() const noexcept { return upper_thz - lower_thz; }
};

// First gap found scanning upward from nu_lo; nullopt when [nu_lo, nu_hi] has none.
inline std::optional<BandGap> locate_gap(const LayerStack& stack, double nu_lo, double nu_hi,
                                         int n_scan = 4000) {
    stack.validate();
    detail::require_frequency(nu_lo);
    pcwqed::detail::require(nu_hi > nu_lo && n_scan >= 2, "locate_gap: bad scan range");
    const double step = (nu_hi - nu_lo) / n_scan;
    auto gapped = [&](double nu) { return std::abs(cell_matrix(stack, nu).half_trace()) > 1.0 + gap_margin; };
    bool prev = gapped(nu_lo);
    if (prev) return std::nullopt;
    for (int i = 1; i <= n_scan; ++i) {
        const double nu = nu_lo + i * step;
        if (gapped(nu)) {
            BandGap g;
            g.lower_thz = find_band_edge(stack, nu - step, nu);
            double hi = nu;
            while (hi <= nu_hi + 1e3 * step && gapped(hi)) hi += step;
            if (gapped(hi)) return std::nullopt;
            g.upper_thz = find_band_edge(stack, hi, hi - step);
            return g;
        }
    }
    return std::nullopt;
}

// ------------------------------------------------------------ finite stack response

struct StackResponse {
    cplx t{1.0, 0.0};
    cplx r{0.0, 0.0};
    double log_abs_t{0.0}; // ln|t|, finite even when |t| underflows
};

inline StackResponse stack_response(const LayerStack& stack, double nu_thz) {
    stack.validate();
    detail::require_frequency(nu_thz);
    const auto total = detail::stack_matrix(stack.layers(), nu_thz);
    const double n0 = stack.ambient_index;
    const auto& m = total.m;
    // Identical ambient on both sides.
    const cplx den = n0 * m(0, 0) + n0 * n0 * m(0, 1) + m(1, 0) + n0 * m(1, 1);
    const cplx num_r = n0 * m(0, 0) + n0 * n0 * m(0, 1) - m(1, 0) - n0 * m(1, 1);
    StackResponse out;
    out.log_abs_t = std::log(2.0 * n0) - std::log(std::abs(den)) - total.log_scale;
    out.t = (2.0 * n0 / den) * std::exp(-total.log_scale);
    out.r = num_r / den;
    return out;
}

inline cplx stack_transmission(const LayerStack& stack, double nu_thz) {
    return stack_response(stack, nu_thz).t;
}

// Local maxima of |t|^2 on a uniform grid, each refined by golden-section search.
inline std::vector<double> transmission_peaks(const LayerStack& stack, double nu_lo, double nu_hi,
                                              int n_grid = 2000) {
    pcwqed::detail::require(nu_hi > nu_lo && n_grid >= 3, "transmission_peaks: bad grid");
    auto T = [&](double nu) { return std::norm(stack_transmission(stack, nu)); };
    const double step = (nu_hi - nu_lo) / (n_grid - 1);
    std::vector<double> vals(n_grid);
    for (int i = 0; i < n_grid; ++i) vals[i] = T(nu_lo + i * step);
    std::vector<double> peaks;
    for (int i = 1; i + 1 < n_grid; ++i) {
        if (!(vals[i] > vals[i - 1] && vals[i] >= vals[i + 1])) continue;
        double lo = nu_lo + (i - 1) * step, hi = nu_lo + (i + 1) * step;
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
        double f1 = T(x1), f2 = T(x2);
        while (hi - lo > 1e-9) {
            if (f1 < f2) { lo = x1; x1 = x2; f1 = f2; x2 = lo + g * (hi - lo); f2 = T(x2); }
            else { hi = x2; x2 = x1; f2 = f1; x1 = hi - g * (hi - lo); f1 = T(x1); }
        }
        peaks.push_back(0.5 * (lo + hi));
    }
    return peaks;
}

// Resonances nu_1, nu_2, ... counted downward from the lower band edge.
inline std::vector<double> band_edge_resonances(const LayerStack& stack, double nu_band_edge,
                                                double span_thz, int count = 3) {
    auto peaks = transmission_peaks(stack, nu_band_edge - span_thz, nu_band_edge, 4000);
    std::sort(peaks.rbegin(), peaks.rend());
    if (static_cast<int>(peaks.size()) > count) peaks.resize(count);
    if (peaks.empty()) throw NumericError("band_edge_resonances: no transmission peak below the edge");
    return peaks;
}

// ------------------------------------------------------------------ field profiles

struct FieldSample {
    double x_nm{0.0};        // cell centre
    double intensity{0.0};   // peak |E|^2 within the cell, unit-amplitude input
    bool nominal{false};     // inside the n_cells periodic section
};

namespace detail {

// Per-layer (E, H) at the entrance of every layer plus at the far exit, for a wave leaving
// the stack to the right with unit amplitude. Magnitudes are carried with per-entry
// log-scales so deep-gap profiles stay finite.
struct BackwardFields {
    std::vector<Eigen::Vector2cd> entrance; // entrance of layer i (scaled)
    std::vector<double> log_scale;
};

inline BackwardFields backward_fields(const std::vector<Layer>& layers, double n0, double nu_thz) {
    BackwardFields out;
    out.entrance.resize(layers.size() + 1);
    out.log_scale.resize(layers.size() + 1);
    Eigen::Vector2cd f(1.0, n0);
    double ls = 0.0;
    out.entrance[layers.size()] = f;
    out.log_scale[layers.size()] = 0.0;
    for (std::size_t k = layers.size(); k-- > 0;) {
        f = layer_matrix(layers[k], layers[k].thickness_nm, nu_thz) * f;
        const double s = f.cwiseAbs().maxCoeff();
        if (s > 1e32) {
            f /= s;
            ls += std::log(s);
        }
        out.entrance[k] = f;
        out.log_scale[k] = ls;
    }
    return out;
}

} // namespace detail

inline std::vector<FieldSample> field_profile(const LayerStack& stack, double nu_thz,
                                              int samples_per_layer = 8) {
    stack.validate();
    detail::require_frequency(nu_thz);
    pcwqed::detail::require(samples_per_layer >= 1, "field_profile: samples_per_layer must be >= 1");
    const auto layers = stack.layers();
    const double n0 = stack.ambient_index;
    const auto bw = detail::backward_fields(layers, n0, nu_thz);

    // Right-going amplitude of the field at the entrance: E = a (1 + r'), H = n0 a (1 - r').
    const Eigen::Vector2cd& front = bw.entrance[0];
    const cplx incident = 0.5 * (front(0) + front(1) / n0);
    const double log_inc = std::log(std::abs(incident)) + bw.log_scale[0];

    std::vector<FieldSample> out;
    const std::size_t per_cell = stack.cell.size();
    const std::size_t n_taper = stack.taper.size();
    double x = stack.x_begin();

    auto layer_peak = [&](std::size_t k) {
        const auto& l = layers[k];
        const Eigen::Vector2cd& exit = bw.entrance[k + 1];
        double peak = 0.0;
        for (int s = 0; s < samples_per_layer; ++s) {
            const double depth = l.thickness_nm * (s + 0.5) / samples_per_layer;
            const Eigen::Vector2cd f = detail::layer_matrix(l, l.thickness_nm - depth, nu_thz) * exit;
            const double logI = 2.0 * (std::log(std::abs(f(0)) + 1e-300) + bw.log_scale[k + 1] - log_inc);
            peak = std::max(peak, std::exp(logI));
        }
        return peak;
    };

    // Tapers are reported layer by layer; nominal cells as whole cells.
    std::size_t k = 0;
    for (; k < n_taper; ++k) {
        out.push_back({x + 0.5 * layers[k].thickness_nm, layer_peak(k), false});
        x += layers[k].thickness_nm;
    }
    const double a = stack.lattice_constant();
    for (int c = 0; c < stack.n_cells; ++c) {
        double peak = 0.0;
        for (std::size_t j = 0; j < per_cell; ++j, ++k) peak = std::max(peak, layer_peak(k));
        out.push_back({x + 0.5 * a, peak, true});
        x += a;
    }
    for (; k < layers.size(); ++k) {
        out.push_back({x + 0.5 * layers[k].thickness_nm, layer_peak(k), false});
        x += layers[k].thickness_nm;
    }
    return out;
}

// -------------------------------------------------------------- Green's function

// Centre of the highest-index layer of nominal cell `cell_index`: the Bloch-function
// antinode at the dielectric band edge.
inline double antinode_position(const LayerStack& stack, int cell_index) {
    stack.validate();
    pcwqed::detail::require(cell_index >= 0 && cell_index < stack.n_cells,
                            "antinode_position: cell index out of range");
    double x = cell_index * stack.lattice_constant();
    std::size_t best = 0;
    for (std::size_t j = 1; j < stack.cell.size(); ++j)
        if (stack.cell[j].index > stack.cell[best].index) best = j;
    for (std::size_t j = 0; j < best; ++j) x += stack.cell[j].thickness_nm;
    return x + 0.5 * stack.cell[best].thickness_nm;
}

inline double centre_antinode(const LayerStack& stack) {
    return antinode_position(stack, stack.n_cells / 2);
}

// Self Green's function at x, normalized by the uniform-ambient value i/(2 k0 n0):
// P = 2 k0 n0 G(x, x). P = i in a uniform waveguide, so Im P is the guided Purcell factor
// and Re P the normalized coherent shift.
inline cplx purcell_factor(const LayerStack& stack, double x_nm, double nu_thz) {
    stack.validate();
    detail::require_frequency(nu_thz);
    pcwqed::detail::require(std::isfinite(x_nm) && x_nm >= stack.x_begin() && x_nm <= stack.x_end(),
                            "greens function: emitter position outside the stack");
    const auto layers = stack.layers();
    const double n0 = stack.ambient_index;

    // Split the layer containing x into a left and right part.
    double pos = stack.x_begin();
    std::size_t k = 0;
    while (k + 1 < layers.size() && pos + layers[k].thickness_nm < x_nm) pos += layers[k++].thickness_nm;
    const double left_part = std::clamp(x_nm - pos, 0.0, layers.empty() ? 0.0 : layers[k].thickness_nm);

    detail::ScaledMatrix front; // entrance -> x
    detail::ScaledMatrix back;  // x -> exit
    if (!layers.empty()) {
        for (std::size_t j = 0; j < k; ++j) front.right_multiply(detail::layer_matrix(layers[j], layers[j].thickness_nm, nu_thz));
        front.right_multiply(detail::layer_matrix(layers[k], left_part, nu_thz));
        back.right_multiply(detail::layer_matrix(layers[k], layers[k].thickness_nm - left_part, nu_thz));
        for (std::size_t j = k + 1; j < layers.size(); ++j) back.right_multiply(detail::layer_matrix(layers[j], layers[j].thickness_nm, nu_thz));
    }
    // Right-outgoing solution: (1, n0) at the exit. Left-outgoing: (1, -n0) at the entrance,
    // carried to x with the inverse (unit-determinant) front matrix.
    const Eigen::Vector2cd uR = back.m * Eigen::Vector2cd(1.0, n0);
    Eigen::Matrix2cd inv;
    inv << front.m(1, 1), -front.m(0, 1), -front.m(1, 0), front.m(0, 0);
    const Eigen::Vector2cd uL = inv * Eigen::Vector2cd(1.0, -n0);
    const cplx wronskian = uL(0) * uR(1) - uL(1) * uR(0);
    if (std::abs(wronskian) == 0.0) throw NumericError("purcell_factor: vanishing Wronskian");
    // Scale factors cancel between numerator and Wronskian.
    return cplx(0.0, 2.0) * n0 * uL(0) * uR(0) / wronskian;
}

// Single global constant linking the normalized Green's function to Gamma0 units.
struct GreensCalibration {
    double scale{1.0}; // Gamma_1D = scale * Im P
};

inline GreensCalibration calibrate_greens(const LayerStack& stack, double x_nm, double nu_ref_thz,
                                          double gamma_ref) {
    pcwqed::detail::require(gamma_ref > 0.0, "calibrate_greens: reference rate must be > 0");
    const double im = purcell_factor(stack, x_nm, nu_ref_thz).imag();
    if (!(im > 0.0)) throw NumericError("calibrate_greens: non-positive Purcell factor at reference");
    return {gamma_ref / im};
}

struct GuidedRates {
    double gamma_1d{0.0}; // Gamma0 units
    double j_1d{0.0};     // Gamma0 units
};

inline GuidedRates greens_rates(const LayerStack& stack, double x_nm, double nu_thz,
                                const GreensCalibration& cal) {
    const cplx p = purcell_factor(stack, x_nm, nu_thz);
    // g = J + i Gamma/2 = (scale / 2) P
    return {cal.scale * p.imag(), 0.5 * cal.scale * p.real()};
}

// Calibrates against nu_1, the first transmission resonance below the lower band edge.
inline GuidedRates greens_rates(const LayerStack& stack, double x_nm, double nu_thz, double gamma_ref,
                                double nu_band_edge, double span_thz = 1.0) {
    const double nu1 = band_edge_resonances(stack, nu_band_edge, span_thz, 1).front();
    return greens_rates(stack, x_nm, nu_thz, calibrate_greens(stack, x_nm, nu1, gamma_ref));
}

} // namespace pcwqed::photonic
