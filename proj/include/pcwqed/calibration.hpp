// calibration.hpp: the shipped two-layer crystal and the derived band-edge quantities:
// band edges, resonances nu_n, dispersion fit, effective cavity length, Green's-function
// normalization and the guided-rate sweep across the band edge.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "pcwqed/errors.hpp"
#include "pcwqed/fitkit.hpp"
#include "pcwqed/parallel.hpp"
#include "pcwqed/photonic1d.hpp"
#include "pcwqed/spinmodel.hpp"
#include "pcwqed/units.hpp"

namespace pcwqed::calibration {

using photonic::Layer;
using photonic::LayerStack;

// Two layers per cell with mean index n_mean (fill-weighted) and contrast delta_n. The
// tapers ramp the contrast linearly, k / (taper_cells + 1) for k = 1..taper_cells from
// the outside in.
struct StackDesign {
    double a_nm{370.0};
    double fill{0.5};
    double n_mean{1.78484294};
    double delta_n{0.18576978};
    int n_cells{150};
    int taper_cells{10};

    void validate() const {
        pcwqed::detail::require(a_nm > 0.0, "StackDesign: lattice constant must be > 0");
        pcwqed::detail::require(fill > 0.0 && fill < 1.0, "StackDesign: fill must be in (0, 1)");
        pcwqed::detail::require(delta_n >= 0.0 && n_mean - delta_n * fill >= 1.0, "StackDesign: indices must stay >= 1");
        pcwqed::detail::require(n_cells >= 0 && taper_cells >= 0, "StackDesign: cell counts must be >= 0");
    }
};

inline std::vector<Layer> design_cell(const StackDesign& d, double contrast) {
    return {{d.n_mean + contrast * (1.0 - d.fill), d.fill * d.a_nm}, {d.n_mean - contrast * d.fill, (1.0 - d.fill) * d.a_nm}};
}

inline LayerStack make_stack(const StackDesign& d) {
    d.validate();
    LayerStack s;
    s.cell = design_cell(d, d.delta_n);
    s.n_cells = d.n_cells;
    s.ambient_index = d.n_mean;
    for (int k = 1; k <= d.taper_cells; ++k) {
        const auto c = design_cell(d, d.delta_n * k / (d.taper_cells + 1.0));
        s.taper.insert(s.taper.end(), c.begin(), c.end());
    }
    return s;
}

inline LayerStack default_stack() { return make_stack(StackDesign{}); }

// ------------------------------------------------------------------ band edges

// First gap above 0.7 of the quarter-wave frequency c / (2 a n_mean).
inline photonic::BandGap dielectric_gap(const LayerStack& stack) {
    double nbar = 0.0;
    for (const auto& l : stack.cell) nbar += l.index * l.thickness_nm;
    nbar /= stack.lattice_constant();
    const double centre = units::c_nm_thz / (2.0 * stack.lattice_constant() * nbar);
    const auto gap = photonic::locate_gap(stack, 0.7 * centre, 1.3 * centre, 6000);
    if (!gap) throw NumericError("dielectric_gap: no band gap near the first Bragg frequency");
    return *gap;
}

inline std::vector<fit::DispersionPoint> dispersion_points(const LayerStack& stack, double nu_be, double span_thz = 1.0,
                                                           double offset_thz = 0.01, int n = 20) {
    pcwqed::detail::require(n >= 2 && span_thz > offset_thz, "dispersion_points: bad sampling");
    std::vector<fit::DispersionPoint> pts;
    for (int i = 0; i < n; ++i) {
        const double nu = nu_be - span_thz + (span_thz - offset_thz) * i / (n - 1.0);
        const auto b = photonic::bloch_analysis(stack, nu);
        pts.push_back({nu, b.delta_k, b.in_gap});
    }
    return pts;
}

// --------------------------------------------------------------- effective length

inline std::vector<photonic::FieldSample> nominal_profile(const LayerStack& stack, double nu_thz) {
    auto prof = photonic::field_profile(stack, nu_thz);
    prof.erase(std::remove_if(prof.begin(), prof.end(), [](const auto& s) { return !s.nominal; }), prof.end());
    return prof;
}

// Fits the cavity standing-wave form with dk = pi / L to the nominal-cell profile at nu_1,
// the cavity centred on the crystal. Returns L in nm.
inline double effective_length(const LayerStack& stack, double nu1_thz) {
    const auto prof = nominal_profile(stack, nu1_thz);
    pcwqed::detail::require(prof.size() >= fit::min_profile_samples, "effective_length: need >= 20 nominal cells");
    const double xc = 0.5 * stack.n_cells * stack.lattice_constant();
    Eigen::VectorXd x(static_cast<Eigen::Index>(prof.size())), y(x.size());
    for (std::size_t i = 0; i < prof.size(); ++i) {
        x(static_cast<Eigen::Index>(i)) = prof[i].x_nm;
        y(static_cast<Eigen::Index>(i)) = prof[i].intensity;
    }
    auto model = [&](const Eigen::VectorXd& p) {
        const double len = p(0);
        Eigen::VectorXd m(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            m(i) = fit::cavity_intensity(x(i) - (xc - 0.5 * len), len, units::pi / len, p(1), p(2));
        return m;
    };
    const double l0 = stack.x_end() - stack.x_begin();
    std::vector<fit::ParameterSpec> ps{
        {"length_nm", l0, 0.5 * stack.n_cells * stack.lattice_constant(), 4.0 * l0, l0},
        {"r_t", 0.9, -1.0, 1.0, 1.0},
        {"i1", y.maxCoeff() / 3.61, 0.0, fit::detail::inf, y.maxCoeff()},
    };
    const auto rep = fit::least_squares(fit::weighted_residual(model, y, Eigen::VectorXd::Ones(y.size())), ps);
    if (!rep.converged) throw NumericError("effective_length: profile fit did not converge (" + rep.message + ")");
    return rep.value("length_nm");
}

// ------------------------------------------------------------------ full pass

struct Calibration {
    LayerStack stack;
    photonic::BandGap gap;
    std::vector<double> resonances_thz; // nu_1, nu_2, ... downward from the edge
    fit::DispersionFit dispersion;
    double length_nm{0.0};              // effective cavity length from the nu_1 profile
    double emitter_x_nm{0.0};
    photonic::GreensCalibration greens;
    double gamma_ref{1.5};

    double nu_be() const noexcept { return gap.lower_thz; }
    double nu_1() const { return resonances_thz.front(); }
    double detuning_nu1_ghz() const { return units::ghz_from_thz(nu_be() - nu_1()); }
    double length_cells() const { return length_nm / stack.lattice_constant(); }
};

inline constexpr double default_gamma_ref = 1.5;

inline Calibration calibrate(const LayerStack& stack, double gamma_ref = default_gamma_ref) {
    stack.validate();
    Calibration c;
    c.stack = stack;
    c.gamma_ref = gamma_ref;
    c.gap = dielectric_gap(stack);
    c.resonances_thz = photonic::band_edge_resonances(stack, c.nu_be(), 1.5, 3);
    c.dispersion = fit::fit_dispersion(dispersion_points(stack, c.nu_be()), stack.lattice_constant());
    c.length_nm = effective_length(stack, c.nu_1());
    c.emitter_x_nm = stack.n_cells > 0 ? photonic::centre_antinode(stack) : 0.0;
    c.greens = photonic::calibrate_greens(stack, c.emitter_x_nm, c.nu_1(), gamma_ref);
    return c;
}

// Detuning from the band edge (GHz, positive into the gap) to absolute frequency.
inline double frequency_at(const Calibration& c, double delta_be_ghz) { return c.nu_be() + units::thz_from_ghz(delta_be_ghz); }

inline photonic::GuidedRates rates_at(const Calibration& c, double delta_be_ghz) {
    return photonic::greens_rates(c.stack, c.emitter_x_nm, frequency_at(c, delta_be_ghz), c.greens);
}

// Frequency below the edge where cos(k a) = 0, a quarter of the way across the Brillouin
// zone and as far from both band edges as the lowest band gets.
inline double mid_band_frequency(const Calibration& c) {
    double lo = 1e-6 * c.nu_be(), hi = c.nu_be();
    for (int i = 0; i < 200 && hi - lo > 1e-9; ++i) {
        const double mid = 0.5 * (lo + hi);
        (photonic::cell_matrix(c.stack, mid).half_trace() > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Guided rate of a plain waveguide: the mean over a window around mid-band, where the
// crystal no longer slows the mode. Serves as the weakly coupled (TM-like) reference.
inline double far_band_rate(const Calibration& c, double half_window_ghz = 2000.0, int n = 201) {
    const double centre = units::ghz_from_thz(mid_band_frequency(c) - c.nu_be());
    std::vector<double> g(static_cast<std::size_t>(n));
    parallel::parallel_for(g.size(), [&](std::size_t i) {
        g[i] = rates_at(c, centre + half_window_ghz * (2.0 * static_cast<double>(i) / (n - 1.0) - 1.0)).gamma_1d;
    });
    double s = 0.0;
    for (double v : g) s += v;
    return s / n;
}

// ------------------------------------------------------------------ rate sweep

struct SweepRow {
    double delta_be_ghz{0.0};
    double gamma_1d{0.0};
    double minus_j_1d{0.0};
    double ratio{0.0};      // Gamma_1D / |J_1D|
    double ratio_cqed{0.0}; // gamma_c / Delta_c, Delta_c measured from nu_1
    bool cqed_defined{true};
};

inline std::vector<SweepRow> rate_sweep(const Calibration& c, const std::vector<double>& delta_be_ghz, double gamma_c_ghz) {
    pcwqed::detail::require(gamma_c_ghz > 0.0, "rate_sweep: cavity linewidth must be > 0");
    std::vector<SweepRow> rows(delta_be_ghz.size());
    parallel::parallel_for(rows.size(), [&](std::size_t i) {
        const double d = delta_be_ghz[i];
        const auto r = rates_at(c, d);
        const double delta_c = d + c.detuning_nu1_ghz();
        const auto cq = spin::cqed_rates(delta_c, gamma_c_ghz, c.gamma_ref);
        SweepRow row;
        row.delta_be_ghz = d;
        row.gamma_1d = r.gamma_1d;
        row.minus_j_1d = -r.j_1d;
        row.ratio = r.j_1d != 0.0 ? r.gamma_1d / std::abs(r.j_1d) : std::numeric_limits<double>::infinity();
        row.cqed_defined = cq.ratio_defined;
        row.ratio_cqed = cq.ratio_defined ? std::abs(cq.ratio()) : std::numeric_limits<double>::infinity();
        rows[i] = row;
    }, 1);
    return rows;
}

} // namespace pcwqed::calibration
