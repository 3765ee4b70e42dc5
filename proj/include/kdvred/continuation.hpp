#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kdvred/error.hpp"
#include "kdvred/model.hpp"
#include "kdvred/spectrum.hpp"

namespace kdvred::spectrum {

/// One tracked eigenpair of alpha(h) rho.
struct ContinuationSample {
    double h = 0.0;
    double lambda_squared = 0.0;
    Eigen::VectorXd q;
};

struct ContinuationOptions {
    double tolerance = 1e-12;
    int max_iterations = 200;
    /// Smallest admissible step as a fraction of the nominal step.
    double min_step_fraction = 1e-6;
    /// Allow h_target on the positivity boundary (used by h-sweeps).
    bool allow_boundary = false;
};

/// Branch tracking lost: the fixed-point iteration stopped contracting even
/// after step-size halving (typically an avoided crossing).
class BranchTrackingLost : public NumericalError {
public:
    BranchTrackingLost(const std::string& what, double h) : NumericalError(what), h_(h) {}
    double h() const { return h_; }

private:
    double h_;
};

namespace detail {

/// (alpha_1 rho) x with alpha_1 = ones - identity.
inline Eigen::VectorXd apply_cross(const Eigen::VectorXd& rho, const Eigen::VectorXd& x) {
    const Eigen::VectorXd rx = rho.cwiseProduct(x);
    return Eigen::VectorXd::Constant(x.size(), rx.sum()) - rx;
}

inline Eigen::VectorXd apply_alpha_rho(const StructuredGH& s, const Eigen::VectorXd& rho, double h,
                                       const Eigen::VectorXd& x) {
    Eigen::VectorXd out = h * apply_cross(rho, x);
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) += s.g[static_cast<std::size_t>(i)] * rho(i) * x(i);
    return out;
}

struct StepResult {
    Eigen::VectorXd q;
    double lambda_squared = 0.0;
};

/// Advances (q, lambda^2) from h to h + dh. Solves
///   (alpha(h) rho - lambda^2) p = (nu - alpha_1 rho)(q + dh p) - r / dh
/// with p orthogonal to the left null vector rho q and nu fixed by the
/// solvability condition. r is the eigen-residual at h. From h = 0 the
/// operator is diagonal and p_k = 0 is imposed exactly.
inline std::optional<StepResult> continuation_step(const StructuredGH& s, const Eigen::VectorXd& rho,
                                                   std::size_t k, double h, double dh,
                                                   const Eigen::VectorXd& q, double lambda_squared,
                                                   const ContinuationOptions& opt) {
    const Eigen::Index n = q.size();
    const auto ki = static_cast<Eigen::Index>(k);
    const bool first_stage = (h == 0.0);
    const Eigen::VectorXd rq = rho.cwiseProduct(q);
    const double rq_q = rq.dot(q);
    const Eigen::VectorXd residual = apply_alpha_rho(s, rho, h, q) - lambda_squared * q;
    const double residual_term = rq.dot(residual) / dh;

    Eigen::VectorXd diag_inverse;
    Eigen::PartialPivLU<Eigen::MatrixXd> bordered;
    if (first_stage) {
        diag_inverse = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i == ki) continue;
            diag_inverse(i) = 1.0 / (s.g[static_cast<std::size_t>(i)] * rho(i) - lambda_squared);
        }
    } else {
        Eigen::MatrixXd kmat = Eigen::MatrixXd::Zero(n + 1, n + 1);
        for (Eigen::Index j = 0; j < n; ++j) {
            Eigen::VectorXd e = Eigen::VectorXd::Unit(n, j);
            kmat.col(j).head(n) = apply_alpha_rho(s, rho, h, e) - lambda_squared * e;
        }
        kmat.col(n).head(n) = q;
        kmat.row(n).head(n) = rq.transpose();
        bordered.compute(kmat);
    }

    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    double nu = 0.0;
    const double qscale = q.norm();
    for (int it = 0; it < opt.max_iterations; ++it) {
        const Eigen::VectorXd qn = q + dh * p;
        const Eigen::VectorXd cross = apply_cross(rho, qn);
        nu = (rq.dot(cross) + residual_term) / rq_q;
        const Eigen::VectorXd rhs = nu * qn - cross - residual / dh;
        Eigen::VectorXd p_next(n);
        if (first_stage) {
            p_next = diag_inverse.cwiseProduct(rhs);
            p_next(ki) = 0.0;
        } else {
            Eigen::VectorXd b(n + 1);
            b << rhs, 0.0;
            p_next = bordered.solve(b).head(n);
        }
        if (!p_next.allFinite()) return std::nullopt;
        const double change = dh * (p_next - p).norm();
        p = std::move(p_next);
        if (change <= opt.tolerance * qscale) {
            StepResult out;
            out.q = q + dh * p;
            const Eigen::VectorXd cross_final = apply_cross(rho, out.q);
            nu = (rq.dot(cross_final) + residual_term) / rq_q;
            out.lambda_squared = lambda_squared + dh * nu;
            return out;
        }
        if (it > 8 && change > 1e3 * qscale) return std::nullopt;  // diverging
    }
    return std::nullopt;
}

} // namespace detail

/// Continues a tracked sample of branch k (component index at h = 0) to
/// h_target in n_steps equal increments. Returns n_steps + 1 samples
/// starting with `start`.
inline std::vector<ContinuationSample> continue_eigenpair_from(const CouplingModel& coupling, const BackgroundState& bg,
                                                               std::size_t k, const ContinuationSample& start,
                                                               double h_target, std::size_t n_steps,
                                                               const ContinuationOptions& opt = {}) {
    const auto& s = coupling.structured_form();
    bg.validate_against(coupling);
    const std::size_t n = s.g.size();
    if (k >= n) throw ConfigError("continue_eigenpair: component index out of range");
    if (n_steps == 0) throw ConfigError("continue_eigenpair: n_steps must be positive");
    if (!std::isfinite(h_target) || h_target < start.h) {
        throw ConfigError("continue_eigenpair: h_target must be >= the starting h");
    }
    if (start.q.size() != static_cast<Eigen::Index>(n)) throw ConfigError("continue_eigenpair: start vector size");
    const auto deg = degeneracy_report(coupling, bg);
    for (const auto& rep : deg.repeated) {
        for (std::size_t idx : rep.group) {
            if (idx == k) {
                throw ConfigError("continue_eigenpair: component " + std::to_string(k + 1) +
                                  " belongs to a repeated (rho0 g, rho0) pair");
            }
        }
    }
    if (h_target > 0.0 && !opt.allow_boundary) {
        const auto pos = positivity_report(coupling.with_h(h_target));
        if (!pos.is_positive_definite) throw UnstableBackground(pos);
    }

    const Eigen::VectorXd rho = bg.rho();
    std::vector<ContinuationSample> out;
    out.reserve(n_steps + 1);
    ContinuationSample current = start;
    out.push_back(current);
    const double span = h_target - start.h;
    if (span == 0.0) {
        for (std::size_t i = 0; i < n_steps; ++i) out.push_back(current);
        return out;
    }

    const double nominal = span / static_cast<double>(n_steps);
    const double min_step = nominal * opt.min_step_fraction;
    double step = nominal;
    for (std::size_t i = 1; i <= n_steps; ++i) {
        const double goal =
            (i == n_steps) ? h_target : start.h + span * static_cast<double>(i) / static_cast<double>(n_steps);
        while (current.h < goal) {
            const double dh = std::min(step, goal - current.h);
            auto next = detail::continuation_step(s, rho, k, current.h, dh, current.q, current.lambda_squared, opt);
            if (!next) {
                step = 0.5 * dh;
                if (step < min_step) {
                    std::ostringstream msg;
                    msg << "continue_eigenpair: lost tracking of branch " << (k + 1) << " at h = " << current.h;
                    throw BranchTrackingLost(msg.str(), current.h);
                }
                continue;
            }
            current.h = (dh == goal - current.h) ? goal : current.h + dh;
            current.q = std::move(next->q);
            current.lambda_squared = next->lambda_squared;
            step = std::min(nominal, 2.0 * step);
        }
        out.push_back(current);
    }
    return out;
}

/// Tracks the eigenpair of alpha(h) rho that starts at (rho0_k g_k, e_k)
/// when h = 0, in n_steps equal increments up to h_target. Returns the
/// n_steps + 1 samples including h = 0.
inline std::vector<ContinuationSample> continue_eigenpair(const CouplingModel& coupling, const BackgroundState& bg,
                                                          std::size_t k, double h_target, std::size_t n_steps,
                                                          const ContinuationOptions& opt = {}) {
    const auto& s = coupling.structured_form();
    bg.validate_against(coupling);
    if (k >= s.g.size()) throw ConfigError("continue_eigenpair: component index out of range");
    if (!std::isfinite(h_target) || h_target < 0.0) throw ConfigError("continue_eigenpair: h_target must be >= 0");
    const auto n = static_cast<Eigen::Index>(s.g.size());
    const ContinuationSample start{0.0, bg.rho0[k] * s.g[k], Eigen::VectorXd::Unit(n, static_cast<Eigen::Index>(k))};
    return continue_eigenpair_from(coupling, bg, k, start, h_target, n_steps, opt);
}

/// Second-order small-h series: rho0_k g_k - h^2 sum'_j rho0_j rho0_k / (rho0_j g_j - rho0_k g_k).
inline double quadratic_eigenvalue_series(const StructuredGH& s, const BackgroundState& bg, std::size_t k, double h) {
    const double dk = bg.rho0[k] * s.g[k];
    double sum = 0.0;
    for (std::size_t j = 0; j < s.g.size(); ++j) {
        if (j == k) continue;
        sum += bg.rho0[j] * bg.rho0[k] / (bg.rho0[j] * s.g[j] - dk);
    }
    return dk - h * h * sum;
}

} // namespace kdvred::spectrum
