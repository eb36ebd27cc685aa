// least_squares.hpp: bounded Levenberg-Marquardt with numerical Jacobians
//
// Minimizes 0.5 * |r(p)|^2 over box-bounded parameters. Residuals are expected to be
// pre-weighted (divided by their one-sigma uncertainty). Failure to converge within the
// iteration cap is reported in the FitReport, never thrown.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pcwqed/errors.hpp"

namespace pcwqed::fit {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct ParameterSpec {
    std::string name;
    double init{0.0};
    double lower{-std::numeric_limits<double>::infinity()};
    double upper{std::numeric_limits<double>::infinity()};
    double typical{1.0}; // magnitude used for finite-difference steps
};

struct FitParameter {
    std::string name;
    double value{0.0};
    double sigma{0.0};
    bool bound_active{false};
};

struct FitReport {
    std::vector<FitParameter> parameters;
    double chi2{0.0};
    std::size_t n_data{0};
    int iterations{0};
    bool converged{false};
    double gradient_norm{0.0};
    Eigen::MatrixXd covariance;
    std::string message;

    const FitParameter& at(const std::string& name) const {
        for (const auto& p : parameters)
            if (p.name == name) return p;
        throw InputError("FitReport: no parameter named '" + name + "'");
    }
    double value(const std::string& name) const { return at(name).value; }
    double sigma(const std::string& name) const { return at(name).sigma; }

    double reduced_chi2() const {
        const auto dof = static_cast<double>(n_data) - static_cast<double>(parameters.size());
        return dof > 0 ? chi2 / dof : std::nan("");
    }

    Eigen::VectorXd values() const {
        Eigen::VectorXd v(static_cast<Eigen::Index>(parameters.size()));
        for (std::size_t i = 0; i < parameters.size(); ++i) v(static_cast<Eigen::Index>(i)) = parameters[i].value;
        return v;
    }
};

struct Options {
    int max_iterations{500};
    double rel_cost_tol{1e-10};
    double gradient_tol{1e-8};
    double step_tol{1e-14};
    double fd_relative_step{1e-6};
    JacobianFn jacobian{}; // analytic Jacobian of the residuals; finite differences when empty
};

// Forward/central finite-difference Jacobian. Steps are h_j = rel * max(|p_j|, typical_j),
// one-sided where a bound would be crossed.
inline Eigen::MatrixXd numerical_jacobian(const ResidualFn& residual, const Eigen::VectorXd& p,
                                          const std::vector<ParameterSpec>& specs, double rel_step,
                                          const Eigen::VectorXd* r0 = nullptr) {
    const Eigen::Index n = p.size();
    Eigen::VectorXd base = r0 ? *r0 : residual(p);
    Eigen::MatrixXd J(base.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& s = specs[static_cast<std::size_t>(j)];
        const double h = rel_step * std::max(std::abs(p(j)), s.typical);
        Eigen::VectorXd hi = p, lo = p;
        const bool up_ok = p(j) + h <= s.upper;
        const bool down_ok = p(j) - h >= s.lower;
        if (up_ok && down_ok) {
            hi(j) += h;
            lo(j) -= h;
            J.col(j) = (residual(hi) - residual(lo)) / (2.0 * h);
        } else if (up_ok) {
            hi(j) += h;
            J.col(j) = (residual(hi) - base) / h;
        } else {
            lo(j) -= h;
            J.col(j) = (base - residual(lo)) / h;
        }
    }
    return J;
}

namespace detail {

inline Eigen::VectorXd clamp_to_bounds(Eigen::VectorXd p, const std::vector<ParameterSpec>& specs) {
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        const auto& s = specs[static_cast<std::size_t>(j)];
        p(j) = std::clamp(p(j), s.lower, s.upper);
    }
    return p;
}

inline bool at_bound(double v, const ParameterSpec& s) {
    const double tol = 1e-12 * std::max(1.0, std::abs(v));
    return std::abs(v - s.lower) <= tol || std::abs(v - s.upper) <= tol;
}

} // namespace detail

inline constexpr double polish_cost_slack = 1e-12;

inline FitReport least_squares(const ResidualFn& residual, const std::vector<ParameterSpec>& specs,
                               const Options& opt = {}) {
    const auto n = static_cast<Eigen::Index>(specs.size());
    if (n == 0) throw InputError("least_squares: no parameters");
    Eigen::VectorXd p(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& s = specs[static_cast<std::size_t>(j)];
        if (!std::isfinite(s.init) || s.init < s.lower || s.init > s.upper || !(s.lower <= s.upper))
            throw InputError("least_squares: initial value of '" + s.name + "' is not finite or outside its bounds");
        p(j) = s.init;
    }

    Eigen::VectorXd r = residual(p);
    if (!r.allFinite()) throw NumericError("least_squares: non-finite residuals at the initial point");
    double cost = 0.5 * r.squaredNorm();

    FitReport rep;
    rep.n_data = static_cast<std::size_t>(r.size());
    double mu = 0.0;  // start with an undamped Gauss-Newton step
    double nu = 2.0;
    auto jacobian_at = [&](const Eigen::VectorXd& pp, const Eigen::VectorXd& rr) -> Eigen::MatrixXd {
        if (!opt.jacobian) return numerical_jacobian(residual, pp, specs, opt.fd_relative_step, &rr);
        Eigen::MatrixXd jac = opt.jacobian(pp);
        if (jac.rows() != rr.size() || jac.cols() != n) throw InputError("least_squares: analytic Jacobian has the wrong shape");
        return jac;
    };
    Eigen::MatrixXd J = jacobian_at(p, r);
    Eigen::VectorXd g = J.transpose() * r;

    auto free_mask = [&](const Eigen::VectorXd& pp, const Eigen::VectorXd& grad) {
        // A parameter sitting on a bound with the gradient pushing outward is frozen.
        std::vector<bool> free(static_cast<std::size_t>(n), true);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& s = specs[static_cast<std::size_t>(j)];
            const double tol = 1e-12 * std::max(1.0, std::abs(pp(j)));
            if (std::abs(pp(j) - s.lower) <= tol && grad(j) > 0) free[static_cast<std::size_t>(j)] = false;
            if (std::abs(pp(j) - s.upper) <= tol && grad(j) < 0) free[static_cast<std::size_t>(j)] = false;
        }
        return free;
    };
    // Scale-free gradient measure: the largest cosine between the residual vector and a free
    // Jacobian column (zero when the residual is orthogonal to every search direction). Once
    // the residual has shrunk below 1e-6 of its starting size it is rounding noise, so the
    // cosine is taken against that floor instead.
    const double residual_floor = 1e-6 * r.norm();
    auto projected_gradient_norm = [&](const Eigen::VectorXd& pp, const Eigen::VectorXd& grad) {
        const auto free = free_mask(pp, grad);
        const double rn = std::max(r.norm(), residual_floor);
        if (rn == 0.0) return 0.0;
        double m = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!free[static_cast<std::size_t>(j)]) continue;
            const double cn = J.col(j).norm();
            if (cn > 0.0) m = std::max(m, std::abs(grad(j)) / (cn * rn));
        }
        return m;
    };

    // Damped normal equations with parameters frozen at a bound removed.
    auto gauss_newton_step = [&](double mu_damp) {
        const auto free = free_mask(p, g);
        Eigen::MatrixXd A = J.transpose() * J;
        const double max_diag = A.diagonal().maxCoeff();
        for (Eigen::Index j = 0; j < n; ++j) {
            A(j, j) += mu_damp * std::max(A(j, j), 1e-12 * std::max(max_diag, 1e-300));
            if (!free[static_cast<std::size_t>(j)]) {
                A.row(j).setZero();
                A.col(j).setZero();
                A(j, j) = 1.0;
            }
        }
        Eigen::VectorXd rhs = -g;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!free[static_cast<std::size_t>(j)]) rhs(j) = 0.0;
        Eigen::VectorXd step = A.ldlt().solve(rhs);
        if (!step.allFinite()) step = A.completeOrthogonalDecomposition().solve(rhs);
        return step;
    };

    int iter = 0;
    // Close to the optimum the cost change of a good step is below the rounding noise of the
    // residuals, so damping alone stalls. Undamped steps, halved on failure, are kept when the
    // gradient falls and the cost rises by no more than rounding (polish_cost_slack relative).
    auto polish = [&]() {
        for (int attempt = 0; attempt < 16 && iter < opt.max_iterations; ++attempt) {
            const double before = projected_gradient_norm(p, g);
            if (before < opt.gradient_tol) return true;
            const Eigen::VectorXd step = gauss_newton_step(0.0);
            bool kept = false;
            for (int half = 0; half < 8 && !kept; ++half) {
                const Eigen::VectorXd trial = detail::clamp_to_bounds(p + std::ldexp(1.0, -half) * step, specs);
                Eigen::VectorXd rt = residual(trial);
                if (!rt.allFinite() || !(0.5 * rt.squaredNorm() <= cost * (1.0 + polish_cost_slack))) continue;
                Eigen::MatrixXd Jt = jacobian_at(trial, rt);
                Eigen::VectorXd gt = Jt.transpose() * rt;
                std::swap(J, Jt);
                std::swap(r, rt);
                if (projected_gradient_norm(trial, gt) < before) {
                    p = trial;
                    g = std::move(gt);
                    cost = 0.5 * r.squaredNorm();
                    ++iter;
                    kept = true;
                } else {
                    std::swap(J, Jt);
                    std::swap(r, rt);
                }
            }
            if (!kept) return false;
        }
        return projected_gradient_norm(p, g) < opt.gradient_tol;
    };

    int rejections = 0;
    bool converged = projected_gradient_norm(p, g) < opt.gradient_tol;
    if (converged) rep.message = "gradient below tolerance at initial point";
    while (!converged && iter < opt.max_iterations) {
        const Eigen::MatrixXd A = J.transpose() * J;
        const Eigen::VectorXd step = gauss_newton_step(mu);
        const Eigen::VectorXd trial = detail::clamp_to_bounds(p + step, specs);
        const Eigen::VectorXd actual_step = trial - p;
        if (actual_step.norm() <= opt.step_tol * (p.norm() + opt.step_tol)) {
            converged = polish();
            rep.message = converged ? "gradient below tolerance after refinement" : "step below tolerance";
            break;
        }
        const Eigen::VectorXd rt = residual(trial);
        const double cost_t = rt.allFinite() ? 0.5 * rt.squaredNorm() : std::numeric_limits<double>::infinity();
        const double predicted = -(g.dot(actual_step) + 0.5 * actual_step.dot(A * actual_step));
        const double rho = predicted > 0 ? (cost - cost_t) / predicted : (cost_t < cost ? 1.0 : -1.0);

        if (cost_t < cost) {
            const double rel = (cost - cost_t) / std::max(cost, 1e-300);
            p = trial;
            r = rt;
            cost = cost_t;
            ++iter;
            rejections = 0;
            J = jacobian_at(p, r);
            g = J.transpose() * r;
            mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * std::clamp(rho, 0.0, 1.0) - 1.0, 3));
            nu = 2.0;
            if (mu < 1e-15) mu = 0.0;
            // A small cost change alone does not end the run; it must be confirmed by the gradient.
            if (projected_gradient_norm(p, g) < opt.gradient_tol) {
                converged = true;
                rep.message = rel < opt.rel_cost_tol ? "relative cost change below tolerance" : "gradient below tolerance";
            }
        } else {
            mu = mu == 0.0 ? 1e-3 : mu * nu;
            nu *= 2.0;
            if (++rejections > 60) {
                converged = polish();
                rep.message = converged ? "gradient below tolerance after refinement" : "no further decrease possible";
                break;
            }
        }
    }
    if (!converged && rep.message.empty()) rep.message = "iteration cap reached";

    rep.iterations = iter;
    rep.converged = converged;
    rep.chi2 = 2.0 * cost;
    rep.gradient_norm = projected_gradient_norm(p, g);

    // Covariance over the free parameters, scaled by the reduced chi-square.
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
        if (!detail::at_bound(p(j), specs[static_cast<std::size_t>(j)])) idx.push_back(j);
    rep.covariance = Eigen::MatrixXd::Zero(n, n);
    const double dof = static_cast<double>(rep.n_data) - static_cast<double>(n);
    const double s2 = dof > 0 ? rep.chi2 / dof : 1.0;
    if (!idx.empty()) {
        Eigen::MatrixXd Jf(J.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) Jf.col(static_cast<Eigen::Index>(k)) = J.col(idx[k]);
        const Eigen::MatrixXd info = Jf.transpose() * Jf;
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(info);
        const Eigen::MatrixXd cov = cod.pseudoInverse() * s2;
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = 0; b < idx.size(); ++b)
                rep.covariance(idx[a], idx[b]) = cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& s = specs[static_cast<std::size_t>(j)];
        FitParameter fp;
        fp.name = s.name;
        fp.value = p(j);
        fp.sigma = std::sqrt(std::max(0.0, rep.covariance(j, j)));
        fp.bound_active = detail::at_bound(p(j), s);
        rep.parameters.push_back(fp);
    }
    return rep;
}

// Residuals (model(p) - y) / sigma for a curve model evaluated at fixed abscissae.
inline ResidualFn weighted_residual(std::function<Eigen::VectorXd(const Eigen::VectorXd&)> model,
                                    Eigen::VectorXd y, Eigen::VectorXd sigma) {
    if (y.size() != sigma.size()) throw InputError("weighted_residual: y and sigma lengths differ");
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        if (!(sigma(i) > 0.0)) throw InputError("weighted_residual: every sigma must be > 0");
    return [model = std::move(model), y = std::move(y), sigma = std::move(sigma)](const Eigen::VectorXd& p) {
        Eigen::VectorXd m = model(p);
        if (m.size() != y.size()) throw NumericError("weighted_residual: model returned the wrong length");
        return Eigen::VectorXd(((m - y).array() / sigma.array()).matrix());
    };
}

} // namespace pcwqed::fit
