// spinmodel.hpp: Green's-function spin model for N two-level atoms on a 1D waveguide
//
// Rates enter in units of Gamma0 and detunings in linear MHz; internally all arithmetic
// is in angular units (rad/us) through units::angular_from_*.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "pcwqed/errors.hpp"
#include "pcwqed/units.hpp"

namespace pcwqed::spin {

using cplx = std::complex<double>;

struct CouplingRates {
    double gamma_1d{0.0};    // peak guided decay rate [Gamma0]
    double j_1d{0.0};        // peak guided coherent shift [Gamma0], signed
    double gamma_prime{1.0}; // non-guided decay rate [Gamma0]
    double delta_0{0.0};     // AC Stark + Lamb shift [MHz]

    void validate() const {
        pcwqed::detail::require(std::isfinite(gamma_1d) && gamma_1d >= 0.0, "CouplingRates: gamma_1d must be >= 0");
        pcwqed::detail::require(std::isfinite(j_1d), "CouplingRates: j_1d must be finite");
        pcwqed::detail::require(std::isfinite(gamma_prime) && gamma_prime > 0.0, "CouplingRates: gamma_prime must be > 0");
        pcwqed::detail::require(std::isfinite(delta_0), "CouplingRates: delta_0 must be finite");
    }

    // J + i Gamma/2 in Gamma0 units.
    cplx peak_coupling() const noexcept { return {j_1d, 0.5 * gamma_1d}; }
};

struct AtomConfiguration {
    std::vector<double> positions_nm;
    double kappa_x{0.0};          // rad/nm
    double lattice_constant{370.0}; // nm

    void validate() const {
        pcwqed::detail::require(std::isfinite(kappa_x) && kappa_x >= 0.0, "AtomConfiguration: kappa_x must be >= 0");
        pcwqed::detail::require(std::isfinite(lattice_constant) && lattice_constant > 0.0,
                        "AtomConfiguration: lattice constant must be > 0");
        for (double x : positions_nm)
            pcwqed::detail::require(std::isfinite(x), "AtomConfiguration: positions must be finite");
    }

    std::size_t size() const noexcept { return positions_nm.size(); }

    // Bloch-function amplitude cos(pi x / a) at each atom.
    double bloch_amplitude(std::size_t i) const {
        return std::cos(units::pi * positions_nm[i] / lattice_constant);
    }
};

namespace detail {

// Descending |lambda|, ties by descending real part.
inline void sort_eigenvalues(std::vector<cplx>& ev) {
    std::stable_sort(ev.begin(), ev.end(), [](const cplx& a, const cplx& b) {
        const double ma = std::abs(a), mb = std::abs(b);
        if (ma != mb) return ma > mb;
        return a.real() > b.real();
    });
}

inline std::string echo(const Eigen::MatrixXcd& m) {
    std::ostringstream os;
    os.precision(17);
    os << m;
    return os.str();
}

} // namespace detail

// Complex symmetric coupling matrix. Entries are stored in rad/us; gamma0_entry() gives the
// API-facing value.
class CouplingMatrix {
public:
    CouplingMatrix() = default;

    // From entries in Gamma0 units. Symmetrizes by taking the upper triangle.
    static CouplingMatrix from_gamma0(const Eigen::MatrixXcd& g) {
        if (g.rows() != g.cols()) throw InputError("CouplingMatrix: matrix must be square");
        CouplingMatrix out;
        const Eigen::Index n = g.rows();
        out.g_.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j) {
                const cplx v = g(i, j);
                if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                    throw InputError("CouplingMatrix: entries must be finite");
                const cplx w = units::angular_from_gamma0(1.0) * v;
                out.g_(i, j) = w;
                out.g_(j, i) = w;
            }
        out.compute_eigenvalues();
        return out;
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(g_.rows()); }
    const Eigen::MatrixXcd& angular() const noexcept { return g_; }
    cplx gamma0_entry(std::size_t i, std::size_t j) const {
        return g_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / units::angular_from_gamma0(1.0);
    }
    Eigen::MatrixXcd gamma0() const { return g_ / units::angular_from_gamma0(1.0); }

    // Eigenvalues in rad/us, sorted.
    const std::vector<cplx>& eigenvalues_angular() const noexcept { return lambda_; }

    cplx trace_angular() const { return g_.trace(); }

private:
    void compute_eigenvalues() {
        lambda_.clear();
        if (g_.rows() == 0) return;
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(g_, /*computeEigenvectors=*/false);
        if (solver.info() != Eigen::Success)
            throw NumericError("eigenvalues: complex eigensolver did not converge for matrix\n" + detail::echo(g_));
        const auto& ev = solver.eigenvalues();
        lambda_.assign(ev.data(), ev.data() + ev.size());
        detail::sort_eigenvalues(lambda_);
    }

    Eigen::MatrixXcd g_;
    std::vector<cplx> lambda_;
};

// g_ij = (J + i Gamma/2) cos(pi x_i/a) cos(pi x_j/a) exp(-kappa |x_i - x_j|)
inline CouplingMatrix build_coupling_matrix(const CouplingRates& rates, const AtomConfiguration& config) {
    rates.validate();
    config.validate();
    const auto n = static_cast<Eigen::Index>(config.size());
    const cplx peak = rates.peak_coupling();
    Eigen::MatrixXcd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ui = config.bloch_amplitude(static_cast<std::size_t>(i));
        for (Eigen::Index j = i; j < n; ++j) {
            const double uj = config.bloch_amplitude(static_cast<std::size_t>(j));
            const double dx = std::abs(config.positions_nm[i] - config.positions_nm[j]);
            g(i, j) = peak * (ui * uj * std::exp(-config.kappa_x * dx));
            g(j, i) = g(i, j);
        }
    }
    return CouplingMatrix::from_gamma0(g);
}

// Eigenvalues in Gamma0 units, descending |lambda|.
inline std::vector<cplx> eigenvalues(const CouplingMatrix& matrix) {
    std::vector<cplx> out = matrix.eigenvalues_angular();
    for (auto& v : out) v /= units::angular_from_gamma0(1.0);
    return out;
}

// Delta'_A + i Gamma'/2 in rad/us for a probe detuning in MHz.
inline cplx bare_denominator(double detuning_mhz, const CouplingRates& rates) {
    return {units::angular_from_mhz(detuning_mhz + rates.delta_0),
            0.5 * units::angular_from_gamma0(rates.gamma_prime)};
}

// Steady-state coherences from (Delta' + i Gamma'/2) sigma_i + sum_j g_ij sigma_j = -Omega_i.
// Drive amplitudes in rad/us.
inline std::vector<cplx> solve_coherences(const CouplingMatrix& matrix, double detuning_mhz,
                                          const CouplingRates& rates, const std::vector<cplx>& drive) {
    rates.validate();
    if (drive.size() != matrix.size()) throw InputError("solve_coherences: drive length must equal atom count");
    const auto n = static_cast<Eigen::Index>(matrix.size());
    if (n == 0) return {};
    const cplx d = bare_denominator(detuning_mhz, rates);
    for (const auto& lam : matrix.eigenvalues_angular())
        if (d + lam == cplx(0.0, 0.0))
            throw NumericError("solve_coherences: singular system at this detuning");
    Eigen::MatrixXcd A = matrix.angular();
    A.diagonal().array() += d;
    Eigen::VectorXcd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) rhs(i) = -drive[static_cast<std::size_t>(i)];
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
    Eigen::VectorXcd x = lu.solve(rhs);
    const double rel = (A * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
    if (!(rel < 1e-10) && rhs.norm() > 0.0)
        throw NumericError("solve_coherences: residual above tolerance (ill-conditioned system)");
    return {x.data(), x.data() + x.size()};
}

// t/t0 = prod_xi (Delta' + i Gamma'/2) / (Delta' + i Gamma'/2 + lambda_xi)
inline cplx transmission_exact(double detuning_mhz, const CouplingRates& rates, const CouplingMatrix& matrix) {
    rates.validate();
    const cplx d = bare_denominator(detuning_mhz, rates);
    cplx ratio{1.0, 0.0};
    for (const auto& lam : matrix.eigenvalues_angular()) ratio *= d / (d + lam);
    return ratio;
}

// Single bright mode: only the diagonal sum of g enters. `bloch_weight_sum` is
// sum_i cos^2(pi x_i / a).
inline cplx transmission_bright_weighted(double detuning_mhz, const CouplingRates& rates, double bloch_weight_sum) {
    const cplx d = bare_denominator(detuning_mhz, rates);
    const cplx lambda_b = units::angular_from_gamma0(1.0) * bloch_weight_sum * rates.peak_coupling();
    return d / (d + lambda_b);
}

inline double bloch_weight_sum(const AtomConfiguration& config) {
    double s = 0.0;
    for (std::size_t i = 0; i < config.size(); ++i) {
        const double u = config.bloch_amplitude(i);
        s += u * u;
    }
    return s;
}

inline cplx transmission_bright(double detuning_mhz, const CouplingRates& rates, const AtomConfiguration& config) {
    rates.validate();
    config.validate();
    return transmission_bright_weighted(detuning_mhz, rates, bloch_weight_sum(config));
}

// Cavity-QED comparator: J ~ Delta_c / (1 + Delta_c^2/gamma_c^2), Gamma ~ gamma_c / (1 + ...),
// with `peak` the value of Gamma_1D on cavity resonance.
struct CqedRates {
    double j_1d{0.0};
    double gamma_1d{0.0};
    bool ratio_defined{true}; // false on resonance, where Gamma/J diverges

    double ratio() const noexcept { return ratio_defined ? gamma_1d / j_1d : std::nan(""); }
};

inline CqedRates cqed_rates(double delta_c_ghz, double gamma_c_ghz, double peak) {
    pcwqed::detail::require(std::isfinite(gamma_c_ghz) && gamma_c_ghz > 0.0, "cqed_rates: gamma_c must be > 0");
    pcwqed::detail::require(std::isfinite(delta_c_ghz) && std::isfinite(peak), "cqed_rates: inputs must be finite");
    const double lorentz = 1.0 / (1.0 + (delta_c_ghz / gamma_c_ghz) * (delta_c_ghz / gamma_c_ghz));
    CqedRates out;
    out.gamma_1d = peak * lorentz;
    out.j_1d = peak * (delta_c_ghz / gamma_c_ghz) * lorentz;
    out.ratio_defined = delta_c_ghz != 0.0;
    return out;
}

} // namespace pcwqed::spin
