#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kdvred/error.hpp"
#include "kdvred/model.hpp"
#include "kdvred/symprod.hpp"

namespace kdvred::spectrum {

/// 2N x 2N matrix [[0, diag(rho0)], [alpha, 0]] of the linearized
/// hydrodynamic system d_t(drho, dv) = -d_x A (drho, dv).
inline Eigen::MatrixXd assemble_block_matrix(const CouplingModel& coupling, const BackgroundState& bg) {
    bg.validate_against(coupling);
    const auto n = static_cast<Eigen::Index>(coupling.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    a.topRightCorner(n, n) = bg.rho().asDiagonal();
    a.bottomLeftCorner(n, n) = coupling.alpha();
    return a;
}

struct PositivityReport {
    bool is_positive_definite = false;
    /// h < sqrt(g_(1) g_(2)) with the two smallest g. Only for the structured form.
    std::optional<bool> necessary_pass;
    /// h < min g_i. Only for the structured form.
    std::optional<bool> sufficient_pass;
};

inline PositivityReport positivity_report(const CouplingModel& coupling) {
    PositivityReport r;
    Eigen::LLT<Eigen::MatrixXd> llt(coupling.alpha());
    r.is_positive_definite = llt.info() == Eigen::Success;
    if (coupling.is_structured()) {
        const auto& s = coupling.structured_form();
        std::vector<double> g = s.g;
        std::sort(g.begin(), g.end());
        if (g.size() < 2) {
            r.necessary_pass = true;
            r.sufficient_pass = true;
        } else {
            r.necessary_pass = s.h < std::sqrt(g[0] * g[1]);
            r.sufficient_pass = s.h < g[0];
        }
    }
    return r;
}

/// Thrown when alpha is not positive definite: the background is
/// linearly unstable and the sound speeds are not real.
class UnstableBackground : public NumericalError {
public:
    explicit UnstableBackground(PositivityReport report)
        : NumericalError("unstable background: coupling matrix is not positive definite "
                         "(complex sound speeds, exponentially growing modes)"),
          report_(report) {}

    const PositivityReport& report() const { return report_; }

private:
    PositivityReport report_;
};

struct CharPolyEvaluation {
    double mu = 0.0;
    std::vector<double> gammas;
    double value = 0.0;
};

/// gamma_i = (rho0_i g_i - mu) / (rho0_i h)
inline std::vector<double> char_poly_gammas(const StructuredGH& s, const BackgroundState& bg, double mu) {
    std::vector<double> gammas(s.g.size());
    for (std::size_t i = 0; i < s.g.size(); ++i) {
        gammas[i] = (bg.rho0[i] * s.g[i] - mu) / (bg.rho0[i] * s.h);
    }
    return gammas;
}

/// Characteristic polynomial of A in the variable mu = lambda^2, scaled so
/// that value * prod(rho0_i h) = det(alpha rho - mu I).
inline CharPolyEvaluation char_poly(const CouplingModel& coupling, const BackgroundState& bg, double mu) {
    const auto& s = coupling.structured_form();
    bg.validate_against(coupling);
    if (s.h == 0.0) throw ConfigError("char_poly: h = 0 leaves the gamma variables undefined");
    CharPolyEvaluation ev;
    ev.mu = mu;
    ev.gammas = char_poly_gammas(s, bg, mu);
    const auto e = symprod::elem_sym_all<double>(ev.gammas);
    const std::size_t n = ev.gammas.size();
    double value = e[n];
    for (std::size_t k = 2; k <= n; ++k) {
        const double sign = (k % 2 == 0) ? -1.0 : 1.0;
        value += sign * static_cast<double>(k - 1) * e[n - k];
    }
    ev.value = value;
    return ev;
}

/// Relative equality used for the (rho0 g, rho0) pair test.
inline bool nearly_equal(double a, double b, double rel = 1e-12) {
    if (a == b) return true;
    return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

struct RepeatedEigenvalue {
    std::vector<std::size_t> group;  ///< zero-based component indices sharing the pair
    double lambda_squared = 0.0;     ///< rho0* (g* - h)
    std::size_t multiplicity = 0;    ///< group size - 1
    bool is_real() const { return lambda_squared > 0.0; }
    double lambda() const { return is_real() ? std::sqrt(lambda_squared) : std::nan(""); }
};

struct DegeneracyReport {
    /// Partition of the components by equal (rho0 g, rho0) pairs, ordered by first member.
    std::vector<std::vector<std::size_t>> groups;
    std::vector<RepeatedEigenvalue> repeated;

    bool has_repeated() const { return !repeated.empty(); }
};

/// Permanent degeneracies of the structured model: m equal (rho0 g, rho0)
/// pairs force +-sqrt(rho0*(g* - h)) with multiplicity m - 1 for every h.
/// Accidental degeneracies at isolated h are not detected.
inline DegeneracyReport degeneracy_report(const CouplingModel& coupling, const BackgroundState& bg) {
    const auto& s = coupling.structured_form();
    bg.validate_against(coupling);
    DegeneracyReport r;
    const std::size_t n = s.g.size();
    std::vector<bool> assigned(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i]) continue;
        std::vector<std::size_t> group{i};
        assigned[i] = true;
        const double pi = bg.rho0[i] * s.g[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (assigned[j]) continue;
            if (nearly_equal(pi, bg.rho0[j] * s.g[j]) && nearly_equal(bg.rho0[i], bg.rho0[j])) {
                group.push_back(j);
                assigned[j] = true;
            }
        }
        if (group.size() >= 2) {
            RepeatedEigenvalue rep;
            rep.group = group;
            rep.lambda_squared = bg.rho0[i] * (s.g[i] - s.h);
            rep.multiplicity = group.size() - 1;
            r.repeated.push_back(rep);
        }
        r.groups.push_back(std::move(group));
    }
    return r;
}

/// Factored characteristic polynomial for two permanently degenerate groups
/// of sizes m and m' with pair variables gamma and gamma':
///   (gamma - 1)^(m-1) (gamma' - 1)^(m'-1) psi(mu),
///   psi = sum_p e_p(rest) (-1)^(M-p) [m (gamma'-1) + m' (gamma-1) + (gamma-1)(gamma'-1)(1 - (M - p))]
/// where "rest" are the M = N - m - m' remaining gamma_i. Equals char_poly.
inline double two_group_factored_char_poly(const CouplingModel& coupling, const BackgroundState& bg, double mu) {
    const auto& s = coupling.structured_form();
    const auto deg = degeneracy_report(coupling, bg);
    if (deg.repeated.size() != 2) throw ConfigError("two_group_factored_char_poly: requires exactly two degenerate groups");
    if (s.h == 0.0) throw ConfigError("two_group_factored_char_poly: h = 0 leaves the gamma variables undefined");
    const auto gammas = char_poly_gammas(s, bg, mu);
    const auto& g1 = deg.repeated[0].group;
    const auto& g2 = deg.repeated[1].group;
    const double gamma = gammas[g1.front()];
    const double gamma_p = gammas[g2.front()];
    const auto m = static_cast<double>(g1.size());
    const auto mp = static_cast<double>(g2.size());
    std::vector<double> rest;
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        if (std::find(g1.begin(), g1.end(), i) == g1.end() && std::find(g2.begin(), g2.end(), i) == g2.end()) {
            rest.push_back(gammas[i]);
        }
    }
    const std::size_t big_m = rest.size();
    const auto e = symprod::elem_sym_all<double>(rest);
    double psi = 0.0;
    for (std::size_t p = 0; p <= big_m; ++p) {
        const double sign = ((big_m - p) % 2 == 0) ? 1.0 : -1.0;
        const double f = m * (gamma_p - 1.0) + mp * (gamma - 1.0) +
                         (gamma - 1.0) * (gamma_p - 1.0) * (1.0 - static_cast<double>(big_m - p));
        psi += e[p] * sign * f;
    }
    return std::pow(gamma - 1.0, m - 1.0) * std::pow(gamma_p - 1.0, mp - 1.0) * psi;
}

enum class EigenvectorNormalization {
    /// q_N = +1 (the convention of the explicit N = 2, 3 closed forms),
    /// falling back to LargestEntry when q_N vanishes.
    LastComponent,
    /// Largest-magnitude entry = +1.
    LargestEntry,
};

inline void normalize_column(Eigen::Ref<Eigen::VectorXd> q, EigenvectorNormalization how) {
    Eigen::Index imax = 0;
    const double qmax = q.cwiseAbs().maxCoeff(&imax);
    const Eigen::Index last = q.size() - 1;
    if (how == EigenvectorNormalization::LastComponent && std::abs(q(last)) >= 1e-8 * qmax) {
        q /= q(last);
    } else {
        q /= q(imax);
    }
}

struct LinearSpectrum {
    Eigen::VectorXd lambda;  ///< positive sound speeds, ascending
    Eigen::MatrixXd Q;       ///< eigenvectors of alpha rho (columns)
    Eigen::VectorXd L;       ///< diagonal of Q^T rho Q
    Eigen::MatrixXd V;       ///< eigenvectors of A: [rho Q Lambda^-1, -rho Q Lambda^-1; Q, Q]
    Eigen::MatrixXd W;       ///< (V^-1)^T
    Eigen::VectorXd rho0;
    /// Branches (zero-based, ascending order) grouped by numerically equal lambda.
    std::vector<std::vector<std::size_t>> degeneracy;

    std::size_t size() const { return static_cast<std::size_t>(lambda.size()); }

    /// Multiplicity of the eigenvalue of branch j (zero-based).
    std::size_t multiplicity(std::size_t j) const {
        for (const auto& g : degeneracy) {
            if (std::find(g.begin(), g.end(), j) != g.end()) return g.size();
        }
        return 1;
    }

    /// Eigenvalues of A in the column order of V: (lambda, -lambda).
    Eigen::VectorXd signed_eigenvalues() const {
        Eigen::VectorXd e(2 * lambda.size());
        e << lambda, -lambda;
        return e;
    }
};

namespace detail {

inline void assemble_dual_basis(LinearSpectrum& s) {
    const Eigen::Index n = s.lambda.size();
    const auto rho = s.rho0.asDiagonal();
    s.L = (s.Q.transpose() * rho * s.Q).diagonal();
    const Eigen::MatrixXd rqli = rho * s.Q * s.lambda.cwiseInverse().asDiagonal();
    s.V.resize(2 * n, 2 * n);
    s.V << rqli, -rqli, s.Q, s.Q;
    const Eigen::MatrixXd qll = s.Q * s.L.cwiseInverse().asDiagonal() * s.lambda.asDiagonal();
    const Eigen::MatrixXd rql = rho * s.Q * s.L.cwiseInverse().asDiagonal();
    s.W.resize(2 * n, 2 * n);
    s.W << 0.5 * qll, -0.5 * qll, 0.5 * rql, 0.5 * rql;
}

inline std::vector<std::vector<std::size_t>> group_equal(const Eigen::VectorXd& ascending, double rel) {
    std::vector<std::vector<std::size_t>> groups;
    const double scale = ascending.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 1; j < ascending.size(); ++j) {
        if (std::abs(ascending(j) - ascending(j - 1)) <= rel * scale) {
            const auto prev = static_cast<std::size_t>(j - 1);
            if (!groups.empty() && groups.back().back() == prev) {
                groups.back().push_back(static_cast<std::size_t>(j));
            } else {
                groups.push_back({prev, static_cast<std::size_t>(j)});
            }
        }
    }
    return groups;
}

} // namespace detail

/// Eigen-decomposition of A through the symmetric congruence
/// rho^1/2 alpha rho^1/2 = U diag(lambda^2) U^T, q^i = rho^-1/2 u^i.
inline LinearSpectrum eigensystem(const CouplingModel& coupling, const BackgroundState& bg,
                                  EigenvectorNormalization norm = EigenvectorNormalization::LastComponent) {
    bg.validate_against(coupling);
    const PositivityReport pos = positivity_report(coupling);
    if (!pos.is_positive_definite) throw UnstableBackground(pos);

    const Eigen::VectorXd rho = bg.rho();
    const Eigen::VectorXd sqrt_rho = rho.cwiseSqrt();
    const Eigen::MatrixXd sym = sqrt_rho.asDiagonal() * coupling.alpha() * sqrt_rho.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw NumericalError("eigensystem: symmetric eigensolver failed");

    LinearSpectrum s;
    s.rho0 = rho;
    const Eigen::VectorXd mu = solver.eigenvalues();  // ascending
    if (mu.minCoeff() <= 0.0) throw UnstableBackground(pos);
    s.lambda = mu.cwiseSqrt();
    s.Q = sqrt_rho.cwiseInverse().asDiagonal() * solver.eigenvectors();

    // A pair group of size two yields a simple eigenvalue with the exact
    // eigenvector e_i1 - e_i2; substitute it for the numerical column.
    if (coupling.is_structured()) {
        const auto deg = degeneracy_report(coupling, bg);
        for (const auto& rep : deg.repeated) {
            if (rep.group.size() != 2 || !rep.is_real()) continue;
            Eigen::Index best = 0;
            (mu.array() - rep.lambda_squared).abs().minCoeff(&best);
            const bool simple = (best == 0 || !nearly_equal(mu(best - 1), mu(best), 1e-9)) &&
                                (best + 1 == mu.size() || !nearly_equal(mu(best + 1), mu(best), 1e-9));
            if (!simple) continue;
            s.lambda(best) = std::sqrt(rep.lambda_squared);
            s.Q.col(best).setZero();
            s.Q(static_cast<Eigen::Index>(rep.group[0]), best) = 1.0;
            s.Q(static_cast<Eigen::Index>(rep.group[1]), best) = -1.0;
        }
    }
    for (Eigen::Index j = 0; j < s.Q.cols(); ++j) normalize_column(s.Q.col(j), norm);
    detail::assemble_dual_basis(s);
    s.degeneracy = detail::group_equal(s.lambda, 1e-9);
    return s;
}

/// Exact eigenvectors for a permanently degenerate group: the k-th has
/// q = e_{i1} - e_{i(k+1)} and v = (sign rho q / lambda; q).
inline std::vector<Eigen::VectorXd> degenerate_eigenvectors(const std::vector<std::size_t>& group_indices,
                                                            int lambda_sign, const CouplingModel& coupling,
                                                            const BackgroundState& bg, double lambda_value) {
    const auto& s = coupling.structured_form();
    bg.validate_against(coupling);
    if (group_indices.size() < 2) throw ConfigError("degenerate_eigenvectors: need at least two indices");
    if (lambda_sign != 1 && lambda_sign != -1) throw ConfigError("degenerate_eigenvectors: sign must be +-1");
    const std::size_t n = s.g.size();
    for (std::size_t idx : group_indices) {
        if (idx >= n) throw ConfigError("degenerate_eigenvectors: index out of range");
    }
    const std::size_t i1 = group_indices.front();
    for (std::size_t idx : group_indices) {
        if (!nearly_equal(bg.rho0[idx] * s.g[idx], bg.rho0[i1] * s.g[i1]) ||
            !nearly_equal(bg.rho0[idx], bg.rho0[i1])) {
            throw ConfigError("degenerate_eigenvectors: indices do not share a (rho0 g, rho0) pair");
        }
    }
    const double expected_sq = bg.rho0[i1] * (s.g[i1] - s.h);
    if (!(expected_sq > 0.0) || !(lambda_value > 0.0) ||
        !nearly_equal(lambda_value * lambda_value, expected_sq, 1e-10)) {
        throw ConfigError("degenerate_eigenvectors: lambda must equal sqrt(rho0*(g* - h)) > 0");
    }
    const Eigen::VectorXd rho = bg.rho();
    std::vector<Eigen::VectorXd> out;
    for (std::size_t k = 1; k < group_indices.size(); ++k) {
        Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        q(static_cast<Eigen::Index>(i1)) = 1.0;
        q(static_cast<Eigen::Index>(group_indices[k])) = -1.0;
        Eigen::VectorXd v(2 * q.size());
        v << (static_cast<double>(lambda_sign) / lambda_value) * rho.cwiseProduct(q), q;
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace kdvred::spectrum
