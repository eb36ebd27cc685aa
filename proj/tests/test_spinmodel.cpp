#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "pcwqed/spinmodel.hpp"

using namespace pcwqed;
using namespace pcwqed::spin;

namespace {

using Dense = std::vector<std::vector<cplx>>;

const double w0 = units::angular_from_gamma0(1.0);

CouplingRates rates(double gamma, double j, double gamma_prime, double delta0 = 0.0) {
    CouplingRates r;
    r.gamma_1d = gamma;
    r.j_1d = j;
    r.gamma_prime = gamma_prime;
    r.delta_0 = delta0;
    return r;
}

Eigen::MatrixXcd random_symmetric(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXcd g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            g(i, j) = cplx(u(rng), u(rng));
            g(j, i) = g(i, j);
        }
    return g;
}

Dense to_dense(const Eigen::MatrixXcd& m) {
    Dense d(m.rows(), std::vector<cplx>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
    return d;
}

// Gaussian elimination with partial pivoting; returns the determinant.
cplx lu_determinant(Dense a) {
    const std::size_t n = a.size();
    cplx det = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > std::abs(a[p][k])) p = i;
        if (p != k) {
            std::swap(a[p], a[k]);
            det = -det;
        }
        det *= a[k][k];
        for (std::size_t i = k + 1; i < n; ++i) {
            const cplx f = a[i][k] / a[k][k];
            for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
        }
    }
    return det;
}

std::vector<cplx> gauss_solve(Dense a, std::vector<cplx> b) {
    const std::size_t n = a.size();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > std::abs(a[p][k])) p = i;
        std::swap(a[p], a[k]);
        std::swap(b[p], b[k]);
        for (std::size_t i = k + 1; i < n; ++i) {
            const cplx f = a[i][k] / a[k][k];
            for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<cplx> x(n);
    for (std::size_t k = n; k-- > 0;) {
        cplx s = b[k];
        for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * x[j];
        x[k] = s / a[k][k];
    }
    return x;
}

// Roots of det(A - lambda I) for 3x3 A from cofactor-expanded coefficients, Durand-Kerner.
std::vector<cplx> cubic_char_roots(const Dense& a) {
    const cplx tr = a[0][0] + a[1][1] + a[2][2];
    const cplx m2 = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0] +
                    a[1][1] * a[2][2] - a[1][2] * a[2][1];
    const cplx det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    auto p = [&](cplx l) { return ((l - tr) * l + m2) * l - det; };
    std::vector<cplx> z{cplx(0.4, 0.9), cplx(0.4, 0.9) * cplx(0.4, 0.9), cplx(0.4, 0.9) * cplx(0.4, 0.9) * cplx(0.4, 0.9)};
    for (int it = 0; it < 500; ++it)
        for (int i = 0; i < 3; ++i) {
            cplx den = 1.0;
            for (int j = 0; j < 3; ++j)
                if (j != i) den *= z[i] - z[j];
            z[i] -= p(z[i]) / den;
        }
    return z;
}


} // namespace

TEST(CouplingMatrixBuild, AtomAtOriginCarriesPeakCoupling) {
    const auto r = rates(1.5, -0.7, 2.0);
    AtomConfiguration c;
    c.positions_nm = {0.0};
    const auto g = build_coupling_matrix(r, c);
    EXPECT_NEAR(std::abs(g.gamma0_entry(0, 0) - cplx(-0.7, 0.75)), 0.0, 1e-14);
}

TEST(CouplingMatrixBuild, AtomAtBlochNodeDecouples) {
    AtomConfiguration c;
    c.positions_nm = {0.5 * c.lattice_constant};
    const auto g = build_coupling_matrix(rates(1.5, -0.7, 2.0), c);
    EXPECT_NEAR(std::abs(g.gamma0_entry(0, 0)), 0.0, 1e-15);
}

TEST(CouplingMatrixBuild, OffDiagonalFactors) {
    AtomConfiguration c;
    const double a = c.lattice_constant;
    c.positions_nm = {0.0, 0.25 * a};
    c.kappa_x = 0.1 / a;
    const auto r = rates(1.2, 0.4, 2.0);
    const auto g = build_coupling_matrix(r, c);
    const cplx ratio = g.gamma0_entry(0, 1) / r.peak_coupling();
    EXPECT_NEAR(ratio.real(), 0.68965, 5e-6);
    EXPECT_NEAR(ratio.imag(), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(g.gamma0_entry(1, 1) / r.peak_coupling() - 0.5), 0.0, 1e-14);
}

TEST(CouplingMatrixBuild, ExactlySymmetricAndTraceMatches) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> x(-6000.0, 6000.0);
    for (int trial = 0; trial < 50; ++trial) {
        AtomConfiguration c;
        c.kappa_x = 3e-5 * (trial % 5);
        for (int i = 0; i < 1 + trial % 8; ++i) c.positions_nm.push_back(x(rng));
        const auto g = build_coupling_matrix(rates(1.4, -2.0, 2.0), c);
        const auto& m = g.angular();
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) {
                EXPECT_EQ(m(i, j).real(), m(j, i).real());
                EXPECT_EQ(m(i, j).imag(), m(j, i).imag());
            }
        cplx sum = 0.0;
        for (const auto& l : g.eigenvalues_angular()) sum += l;
        EXPECT_LE(std::abs(sum - m.trace()), 1e-9 * std::max(1.0, std::abs(m.trace())));
    }
}

TEST(CouplingMatrixBuild, RejectsInvalidInput) {
    AtomConfiguration c;
    c.positions_nm = {0.0};
    EXPECT_THROW(build_coupling_matrix(rates(-1.0, 0.0, 1.0), c), InputError);
    EXPECT_THROW(build_coupling_matrix(rates(1.0, 0.0, 0.0), c), InputError);
    c.kappa_x = -1.0;
    EXPECT_THROW(build_coupling_matrix(rates(1.0, 0.0, 1.0), c), InputError);
    c.kappa_x = 0.0;
    c.positions_nm = {std::nan("")};
    EXPECT_THROW(build_coupling_matrix(rates(1.0, 0.0, 1.0), c), InputError);
    EXPECT_THROW(CouplingMatrix::from_gamma0(Eigen::MatrixXcd(2, 3)), InputError);
}

TEST(Eigenvalues, DiagonalMatrixReturnsDiagonal) {
    Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(3, 3);
    d(0, 0) = cplx(0.5, 0.1);
    d(1, 1) = cplx(-2.0, 0.3);
    d(2, 2) = cplx(1.0, -1.0);
    const auto ev = eigenvalues(CouplingMatrix::from_gamma0(d));
    ASSERT_EQ(ev.size(), 3u);
    EXPECT_NEAR(std::abs(ev[0] - cplx(-2.0, 0.3)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(ev[1] - cplx(1.0, -1.0)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(ev[2] - cplx(0.5, 0.1)), 0.0, 1e-12);
}

TEST(Eigenvalues, SortedByDescendingMagnitude) {
    std::mt19937_64 rng(11);
    for (int n = 1; n <= 6; ++n) {
        const auto ev = eigenvalues(CouplingMatrix::from_gamma0(random_symmetric(rng, n)));
        for (std::size_t i = 1; i < ev.size(); ++i) EXPECT_GE(std::abs(ev[i - 1]), std::abs(ev[i]));
    }
}

TEST(Eigenvalues, SeparableMatrixHasOneNonzeroEigenvalue) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> x(-6000.0, 6000.0);
    for (int n = 1; n <= 6; ++n) {
        AtomConfiguration c;
        for (int i = 0; i < n; ++i) c.positions_nm.push_back(x(rng));
        const auto r = rates(1.4, -2.0, 2.0);
        const auto ev = eigenvalues(build_coupling_matrix(r, c));
        const cplx expected = bloch_weight_sum(c) * r.peak_coupling();
        EXPECT_NEAR(std::abs(ev[0] - expected), 0.0, 1e-12 * std::abs(expected));
        for (std::size_t i = 1; i < ev.size(); ++i) EXPECT_LT(std::abs(ev[i]), 1e-12 * std::abs(ev[0]));
    }
}

TEST(Eigenvalues, RandomThreeByThreeMatchesCharacteristicPolynomial) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto g = random_symmetric(rng, 3);
        const auto roots = cubic_char_roots(to_dense(g));
        const auto ev = eigenvalues(CouplingMatrix::from_gamma0(g));
        const double scale = std::abs(ev[0]);
        for (const auto& l : ev) {
            double best = 1e300;
            for (const auto& r : roots) best = std::min(best, std::abs(l - r));
            EXPECT_LT(best, 1e-9 * scale);
        }
    }
}

TEST(SolveCoherences, SingleAtomScalarSolve) {
    const auto r = rates(1.5, 0.0, 1.0);
    AtomConfiguration c;
    c.positions_nm = {0.0};
    const auto s = solve_coherences(build_coupling_matrix(r, c), 0.0, r, {cplx(1.0, 0.0)});
    const cplx expected = -1.0 / (cplx(0.0, 1.0) * w0 * (1.0 + 1.5) / 2.0);
    EXPECT_NEAR(std::abs(s[0] - expected), 0.0, 1e-14 * std::abs(expected));
}

TEST(SolveCoherences, ZeroDriveGivesZero) {
    std::mt19937_64 rng(2);
    const auto m = CouplingMatrix::from_gamma0(random_symmetric(rng, 4));
    const auto s = solve_coherences(m, 3.0, rates(1.0, 0.0, 2.0), std::vector<cplx>(4, 0.0));
    for (const auto& v : s) EXPECT_EQ(v, cplx(0.0, 0.0));
}

TEST(SolveCoherences, MatchesIndependentElimination) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = random_symmetric(rng, 3);
        const auto m = CouplingMatrix::from_gamma0(g);
        const auto r = rates(1.0, 0.0, 2.0, 1.5);
        const double det_mhz = 10.0 * u(rng);
        std::vector<cplx> drive{cplx(u(rng), u(rng)), cplx(u(rng), u(rng)), cplx(u(rng), u(rng))};
        Dense a = to_dense(m.angular());
        const cplx d = bare_denominator(det_mhz, r);
        for (int i = 0; i < 3; ++i) a[i][i] += d;
        std::vector<cplx> rhs;
        for (const auto& o : drive) rhs.push_back(-o);
        const auto expected = gauss_solve(a, rhs);
        const auto got = solve_coherences(m, det_mhz, r, drive);
        double err = 0.0, norm = 0.0;
        for (int i = 0; i < 3; ++i) {
            err += std::norm(got[i] - expected[i]);
            norm += std::norm(expected[i]);
        }
        EXPECT_LT(std::sqrt(err / norm), 1e-10);
    }
}

TEST(SolveCoherences, RejectsWrongDriveLengthAndSingularSystem) {
    const auto r = rates(1.0, 0.0, 2.0);
    Eigen::MatrixXcd g(1, 1);
    g(0, 0) = cplx(0.0, -1.0);
    const auto m = CouplingMatrix::from_gamma0(g);
    EXPECT_THROW(solve_coherences(m, 0.0, r, {}), InputError);
    EXPECT_THROW(solve_coherences(m, 0.0, r, {cplx(1.0, 0.0)}), NumericError);
}

TEST(TransmissionExact, NoAtomsIsUnity) {
    const CouplingMatrix empty = CouplingMatrix::from_gamma0(Eigen::MatrixXcd(0, 0));
    for (double d : {-50.0, 0.0, 12.5, 300.0}) EXPECT_EQ(transmission_exact(d, rates(1.0, 0.0, 2.0), empty), cplx(1.0, 0.0));
}

TEST(TransmissionExact, FarDetunedLimit) {
    std::mt19937_64 rng(17);
    const auto m = CouplingMatrix::from_gamma0(random_symmetric(rng, 4));
    const double far = 1e4 * units::gamma0_mhz;
    for (double d : {far, -far}) EXPECT_LT(std::abs(transmission_exact(d, rates(1.0, 0.0, 2.0), m) - 1.0), 1e-3);
}

TEST(TransmissionExact, SingleAtomClosedForm) {
    const auto r = rates(1.5, 0.0, 1.0, 12.5);
    AtomConfiguration c;
    c.positions_nm = {0.0};
    const cplx t = transmission_exact(-12.5, r, build_coupling_matrix(r, c));
    EXPECT_NEAR(std::norm(t), 0.16, 1e-14);
}

TEST(TransmissionExact, EigenvalueProductEqualsDeterminantRatio) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + trial % 6;
        const auto g = random_symmetric(rng, n);
        const auto m = CouplingMatrix::from_gamma0(g);
        const auto r = rates(1.0, 0.0, 0.5 + std::abs(u(rng)) * 3.0, u(rng));
        const double det_mhz = 20.0 * u(rng);
        const cplx d = bare_denominator(det_mhz, r);
        Dense a = to_dense(m.angular());
        for (int i = 0; i < n; ++i) a[i][i] += d;
        const cplx expected = std::pow(d, n) / lu_determinant(a);
        const cplx got = transmission_exact(det_mhz, r, m);
        EXPECT_LT(std::abs(got - expected), 1e-9 * std::abs(expected)) << "n=" << n;
    }
}

TEST(TransmissionBright, NoAtomsIsUnity) {
    AtomConfiguration c;
    EXPECT_EQ(transmission_bright(3.0, rates(1.4, -2.0, 2.0), c), cplx(1.0, 0.0));
}

TEST(TransmissionBright, SeparableLimitIsExact) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> x(-6000.0, 6000.0);
    for (int n = 1; n <= 6; ++n) {
        AtomConfiguration c;
        for (int i = 0; i < n; ++i) c.positions_nm.push_back(x(rng));
        for (double j : {0.0, -2.0, 1.0}) {
            const auto r = rates(1.4, j, 2.0, 12.5);
            const auto m = build_coupling_matrix(r, c);
            for (int k = 0; k <= 400; ++k) {
                const double d = -60.0 + 0.3 * k;
                EXPECT_NEAR(std::abs(transmission_bright(d, r, c) - transmission_exact(d, r, m)), 0.0, 1e-12);
            }
        }
    }
}

namespace {

struct SpreadComparison {
    double averaged{0.0};                // max |<exact> - <bright>| / depth of <exact>
    std::vector<double> per_configuration; // same measure for each placement
};

// Three atoms placed uniformly over +-6 um with kappa_x * 6 um = 0.2.
SpreadComparison compare_at_spread(const CouplingRates& r, int configurations, std::uint64_t seed) {
    const double spread = 6000.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> x(-spread, spread);
    std::vector<double> grid;
    for (int k = -320; k <= 320; ++k) grid.push_back(-r.delta_0 + 0.25 * k);
    std::vector<double> sum_e(grid.size()), sum_b(grid.size());
    auto depth_of = [](const std::vector<double>& t2) {
        double d = 0.0;
        for (double v : t2) d = std::max(d, std::abs(1.0 - v));
        return d;
    };
    SpreadComparison out;
    for (int trial = 0; trial < configurations; ++trial) {
        AtomConfiguration c;
        c.kappa_x = 0.2 / spread;
        for (int i = 0; i < 3; ++i) c.positions_nm.push_back(x(rng));
        const auto m = build_coupling_matrix(r, c);
        std::vector<double> e(grid.size());
        double worst = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            e[k] = std::norm(transmission_exact(grid[k], r, m));
            const double b = std::norm(transmission_bright(grid[k], r, c));
            worst = std::max(worst, std::abs(e[k] - b));
            sum_e[k] += e[k];
            sum_b[k] += b;
        }
        out.per_configuration.push_back(worst / depth_of(e));
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        sum_e[k] /= configurations;
        sum_b[k] /= configurations;
        worst = std::max(worst, std::abs(sum_e[k] - sum_b[k]));
    }
    out.averaged = worst / depth_of(sum_e);
    return out;
}

double median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

// Rates of the default stack 60 GHz into the gap, where kappa_x * 6 um is about 0.2.
const CouplingRates deep_gap_rates = rates(0.0078, -0.101, 2.0, 12.5);

} // namespace

TEST(TransmissionBright, ValidAtExperimentalSpread) {
    const auto cmp = compare_at_spread(deep_gap_rates, 4000, 29);
    EXPECT_LT(cmp.averaged, 0.03);
    EXPECT_LT(median(cmp.per_configuration), 0.03);
}

TEST(TransmissionBright, ValidAtExperimentalSpreadDissipativeLine) {
    const auto cmp = compare_at_spread(rates(1.4, 0.0, 2.0, 12.5), 4000, 31);
    EXPECT_LT(cmp.averaged, 0.03);
    EXPECT_LT(median(cmp.per_configuration), 0.03);
}

TEST(TransmissionBright, BreaksDownForStrongCoherentCoupling) {
    // Same spread with |J| comparable to the line width: the dark modes are no longer negligible.
    const auto cmp = compare_at_spread(rates(0.1, -2.0, 2.0, 12.5), 2000, 37);
    EXPECT_GT(cmp.averaged, 0.03);
}

TEST(TransmissionBright, LorentzianSymmetryWithoutCoherentShift) {
    const auto r = rates(1.4, 0.0, 2.0, 12.5);
    for (double w : {0.3, 1.0, 2.7}) {
        for (double dl = 0.0; dl <= 40.0; dl += 0.37) {
            const double up = std::norm(transmission_bright_weighted(-12.5 + dl, r, w));
            const double dn = std::norm(transmission_bright_weighted(-12.5 - dl, r, w));
            EXPECT_NEAR(up, dn, 1e-12);
            EXPECT_LE(up, 1.0);
        }
    }
}

TEST(TransmissionBright, NegativeCoherentShiftMovesResonanceToPositiveDetuning) {
    const double w = 2.0;
    const auto r = rates(1.4, -2.0, 2.0, 12.5);
    const double shift_mhz = -w * r.j_1d * units::gamma0_mhz;
    // Pole of t: |d + lambda_b| is smallest exactly where Delta_A + Delta0 = -sum J.
    const auto pole_mag = [&](double x) {
        const cplx d = bare_denominator(x - r.delta_0, r);
        return std::abs(d + w0 * w * r.peak_coupling());
    };
    EXPECT_NEAR(pole_mag(shift_mhz), 0.5 * w0 * (r.gamma_prime + w * r.gamma_1d), 1e-9);
    EXPECT_LT(pole_mag(shift_mhz), pole_mag(shift_mhz + 1e-3));
    EXPECT_LT(pole_mag(shift_mhz), pole_mag(shift_mhz - 1e-3));

    // |t|^2 = (x^2+a^2)/((x+b)^2+c^2) in angular units is stationary at the roots of
    // b x^2 + (b^2+c^2-a^2) x - a^2 b = 0. With |J| large the root beside the pole is a
    // transmission peak and the dip sits on the opposite side of the bare resonance.
    const double a = 0.5 * w0 * r.gamma_prime, b = w0 * w * r.j_1d, cc = 0.5 * w0 * (r.gamma_prime + w * r.gamma_1d);
    const double q = b * b + cc * cc - a * a;
    const double disc = std::sqrt(q * q + 4.0 * a * a * b * b);
    const double x_peak_mhz = (-q - disc) / (2.0 * b) / units::angular_from_mhz(1.0);
    const double x_min_mhz = (-q + disc) / (2.0 * b) / units::angular_from_mhz(1.0);
    EXPECT_GT(x_peak_mhz, 0.0);
    EXPECT_LT(x_min_mhz, 0.0);
    const auto t2 = [&](double x) { return std::norm(transmission_bright_weighted(x - r.delta_0, r, w)); };
    EXPECT_GT(t2(x_peak_mhz), 1.0);
    double best_x = 0.0, best = 1e300, top_x = 0.0, top = -1.0;
    for (int k = 0; k <= 200000; ++k) {
        const double x = -100.0 + 1e-3 * k;
        const double v = t2(x);
        if (v < best) best = v, best_x = x;
        if (v > top) top = v, top_x = x;
    }
    EXPECT_NEAR(best_x, x_min_mhz, 1e-3);
    EXPECT_NEAR(top_x, x_peak_mhz, 1e-3);
}

TEST(Cqed, RatioIsLinewidthOverDetuning) {
    for (double dc : {-300.0, -60.0, -1.0, 1e-3, 5.0, 60.0, 193.0, 1e4}) {
        const auto q = cqed_rates(dc, 60.0, 1.3);
        ASSERT_TRUE(q.ratio_defined);
        EXPECT_NEAR(q.ratio(), 60.0 / dc, 1e-12 * std::abs(60.0 / dc));
    }
}

TEST(Cqed, SymmetryPointAndExperimentalValue) {
    const auto q = cqed_rates(60.0, 60.0, 1.0);
    EXPECT_DOUBLE_EQ(q.j_1d, q.gamma_1d);
    EXPECT_NEAR(cqed_rates(193.0, 60.0, 1.0).ratio(), 0.311, 5e-4);
}

TEST(Cqed, DetuningSignFlipsCoherentPart) {
    const auto p = cqed_rates(80.0, 60.0, 1.0), m = cqed_rates(-80.0, 60.0, 1.0);
    EXPECT_EQ(p.gamma_1d, m.gamma_1d);
    EXPECT_EQ(p.j_1d, -m.j_1d);
}

TEST(Cqed, ResonanceFlagsUndefinedRatio) {
    const auto q = cqed_rates(0.0, 60.0, 1.0);
    EXPECT_FALSE(q.ratio_defined);
    EXPECT_EQ(q.j_1d, 0.0);
    EXPECT_TRUE(std::isnan(q.ratio()));
    EXPECT_THROW(cqed_rates(10.0, 0.0, 1.0), InputError);
}
