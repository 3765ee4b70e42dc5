#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kdvred/error.hpp"

namespace kdvred {

/// Diagonal g_i, uniform off-diagonal h.
struct StructuredGH {
    std::vector<double> g;
    double h = 0.0;
};

/// Symmetric coupling matrix alpha of the vector NLS.
///
/// Either the structured form (g on the diagonal, h everywhere else) or a
/// general symmetric matrix. h = 0 is admitted as the decoupled limit.
class CouplingModel {
public:
    static CouplingModel structured(std::vector<double> g, double h) {
        if (g.empty()) throw ConfigError("coupling: at least one component is required");
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i]) || g[i] <= 0.0) {
                throw ConfigError("coupling: g[" + std::to_string(i + 1) + "] must be positive and finite");
            }
        }
        if (!std::isfinite(h) || h < 0.0) throw ConfigError("coupling: h must be finite and >= 0");
        CouplingModel m;
        const auto n = static_cast<Eigen::Index>(g.size());
        m.alpha_ = Eigen::MatrixXd::Constant(n, n, h);
        for (Eigen::Index i = 0; i < n; ++i) m.alpha_(i, i) = g[static_cast<std::size_t>(i)];
        m.structured_ = StructuredGH{std::move(g), h};
        return m;
    }

    static CouplingModel general(Eigen::MatrixXd alpha) {
        if (alpha.rows() == 0 || alpha.rows() != alpha.cols()) {
            throw ConfigError("coupling: alpha must be a non-empty square matrix");
        }
        if (!alpha.allFinite()) throw ConfigError("coupling: alpha has non-finite entries");
        const double scale = std::max(alpha.cwiseAbs().maxCoeff(), 1e-300);
        if ((alpha - alpha.transpose()).cwiseAbs().maxCoeff() > 1e-14 * scale) {
            throw ConfigError("coupling: alpha must be symmetric");
        }
        CouplingModel m;
        m.alpha_ = 0.5 * (alpha + alpha.transpose());
        return m;
    }

    std::size_t size() const { return static_cast<std::size_t>(alpha_.rows()); }
    const Eigen::MatrixXd& alpha() const { return alpha_; }
    bool is_structured() const { return structured_.has_value(); }

    /// Throws ConfigError when the model is not in structured form.
    const StructuredGH& structured_form() const {
        if (!structured_) throw ConfigError("coupling: operation requires the structured (g, h) form");
        return *structured_;
    }

    /// Same structured model with a different cross coupling.
    CouplingModel with_h(double h) const { return structured(structured_form().g, h); }

private:
    CouplingModel() = default;

    Eigen::MatrixXd alpha_;
    std::optional<StructuredGH> structured_;
};

/// Uniform background densities plus the physical constants m and hbar.
struct BackgroundState {
    std::vector<double> rho0;
    double mass = 1.0;
    double hbar = 1.0;

    std::size_t size() const { return rho0.size(); }

    Eigen::VectorXd rho() const {
        return Eigen::Map<const Eigen::VectorXd>(rho0.data(), static_cast<Eigen::Index>(rho0.size()));
    }

    void validate() const {
        if (rho0.empty()) throw ConfigError("background: rho0 is empty");
        for (std::size_t i = 0; i < rho0.size(); ++i) {
            if (!std::isfinite(rho0[i]) || rho0[i] <= 0.0) {
                throw ConfigError("background: rho0[" + std::to_string(i + 1) + "] must be positive");
            }
        }
        if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("background: mass must be positive");
        if (!(hbar > 0.0) || !std::isfinite(hbar)) throw ConfigError("background: hbar must be positive");
    }

    void validate_against(const CouplingModel& coupling) const {
        validate();
        if (coupling.size() != rho0.size()) {
            throw ConfigError("dimension mismatch: coupling has " + std::to_string(coupling.size()) +
                              " components, rho0 has " + std::to_string(rho0.size()));
        }
    }
};

} // namespace kdvred
