#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kdvred/error.hpp"
#include "kdvred/model.hpp"
#include "kdvred/spectrum.hpp"

namespace kdvred::reduction {

/// KdV model d_tau f + B f f' + A f''' = 0 of one branch of A, together with
/// the eigen-direction (a; b) = V e_j and its dual (w_rho; w_v) = W e_j.
struct KdvModel {
    int branch = 0;  ///< signed, one-based; positive = right mover
    double lambda = 0.0;
    double A = 0.0;
    double B = 0.0;
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    Eigen::VectorXd w_rho;
    Eigen::VectorXd w_v;

    bool is_linear(double tol = 1e-12) const { return std::abs(B) <= tol; }
};

struct ScalingParams {
    double epsilon = 0.2;
    double soliton_speed = 2.5;

    void validate() const {
        if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("scaling: epsilon must lie in (0, 1)");
        if (!(soliton_speed > 0.0) || !std::isfinite(soliton_speed)) {
            throw ConfigError("scaling: soliton_speed must be positive");
        }
    }
};

/// Coefficients for the column q of Q (eigenvalue lambda^2 of alpha rho).
/// sign = +1 selects the right mover, -1 the left mover.
///
///   A = -(hbar^2 / 4) sum_k w_v[k] a[k] / rho0_k
///   B = sum_k (2 w_rho[k] a[k] b[k] + w_v[k] b[k]^2)
inline KdvModel kdv_coefficients_from_column(double lambda, const Eigen::VectorXd& q, const BackgroundState& bg,
                                             int sign) {
    if (!(lambda > 0.0)) throw ConfigError("kdv_coefficients: lambda must be positive");
    const Eigen::VectorXd rho = bg.rho();
    const double l = q.dot(rho.cwiseProduct(q));
    KdvModel m;
    m.lambda = sign * lambda;
    m.a = (sign / lambda) * rho.cwiseProduct(q);
    m.b = q;
    m.w_rho = (sign * 0.5 * lambda / l) * q;
    m.w_v = (0.5 / l) * rho.cwiseProduct(q);
    m.A = -0.25 * bg.hbar * bg.hbar * m.w_v.cwiseProduct(m.a).cwiseQuotient(rho).sum();
    m.B = (2.0 * m.w_rho.cwiseProduct(m.a).cwiseProduct(m.b) + m.w_v.cwiseProduct(m.b.cwiseAbs2())).sum();
    return m;
}

/// Projection route for branch +-j (one-based, ascending lambda order).
inline KdvModel kdv_coefficients(const spectrum::LinearSpectrum& spec, const BackgroundState& bg, int branch) {
    const int n = static_cast<int>(spec.size());
    if (branch == 0 || branch > n || branch < -n) {
        throw ConfigError("kdv_coefficients: branch must be within +-1.." + std::to_string(n));
    }
    const auto j = static_cast<std::size_t>(std::abs(branch) - 1);
    if (spec.multiplicity(j) > 1) {
        throw ConfigError("kdv_coefficients: branch " + std::to_string(branch) +
                          " has a repeated eigenvalue; its dynamics is a coupled KdV system, which is not supported");
    }
    const auto col = static_cast<Eigen::Index>(j);
    KdvModel m = kdv_coefficients_from_column(spec.lambda(col), spec.Q.col(col), bg, branch > 0 ? 1 : -1);
    m.branch = branch;
    // Dual columns straight from W (same values, kept as the source of truth).
    const Eigen::Index vcol = branch > 0 ? col : col + static_cast<Eigen::Index>(n);
    m.a = spec.V.col(vcol).head(n);
    m.b = spec.V.col(vcol).tail(n);
    m.w_rho = spec.W.col(vcol).head(n);
    m.w_v = spec.W.col(vcol).tail(n);
    return m;
}

/// A = g1 rho01 + g2 rho02, C = g1 rho01 - g2 rho02, B = discriminant root.
struct ClosedFormN2 {
    double A_sum = 0.0;
    double C_diff = 0.0;
    double B_disc = 0.0;
};

/// X, Y, Z, W of the N = 3 case with g1 = g2 and rho01 = rho02.
struct ClosedFormN3 {
    double X = 0.0;
    double Y = 0.0;
    double Z = 0.0;
    double W = 0.0;
};

struct ClosedFormCoefficients {
    double lambda = 0.0;
    double A = 0.0;
    double B = 0.0;
};

inline ClosedFormN2 closed_form_n2(const CouplingModel& coupling, const BackgroundState& bg) {
    const auto& s = coupling.structured_form();
    bg.validate_against(coupling);
    if (s.g.size() != 2) throw ConfigError("closed_form_n2: requires N = 2");
    if (!(s.h > 0.0)) throw ConfigError("closed_form_n2: requires h > 0");
    const double g1 = s.g[0], g2 = s.g[1], h = s.h, r1 = bg.rho0[0], r2 = bg.rho0[1];
    ClosedFormN2 c;
    c.A_sum = g1 * r1 + g2 * r2;
    c.C_diff = g1 * r1 - g2 * r2;
    c.B_disc = std::sqrt(g1 * g1 * r1 * r1 - 2.0 * g1 * g2 * r1 * r2 + 4.0 * h * h * r1 * r2 + g2 * g2 * r2 * r2);
    return c;
}

/// Explicit right-mover coefficients for N = 2. which = 1 is the faster
/// branch lambda = sqrt((A + B)/2), which = 2 the slower one.
inline ClosedFormCoefficients closed_form_n2_branch(const CouplingModel& coupling, const BackgroundState& bg,
                                                    int which) {
    const ClosedFormN2 c = closed_form_n2(coupling, bg);
    const double h = coupling.structured_form().h, r1 = bg.rho0[0];
    const double hb2 = bg.hbar * bg.hbar;
    const double A = c.A_sum, B = c.B_disc, C = c.C_diff;
    ClosedFormCoefficients out;
    if (which == 1) {
        out.lambda = std::sqrt(0.5 * (A + B));
        out.A = -hb2 / (4.0 * std::sqrt(2.0)) / std::sqrt(A + B);
        out.B = 3.0 / (8.0 * h * B * r1) * ((C + B) * (C + B) + 2.0 * h * (B - C) * r1);
    } else if (which == 2) {
        out.lambda = std::sqrt(0.5 * (A - B));
        out.A = -hb2 / (4.0 * std::sqrt(2.0)) / std::sqrt(A - B);
        out.B = -3.0 / (8.0 * h * B * r1) * ((C - B) * (C - B) - 2.0 * h * (C + B) * r1);
    } else {
        throw ConfigError("closed_form_n2_branch: which must be 1 or 2");
    }
    return out;
}

inline ClosedFormN3 closed_form_n3(const CouplingModel& coupling, const BackgroundState& bg) {
    const auto& s = coupling.structured_form();
    bg.validate_against(coupling);
    if (s.g.size() != 3) throw ConfigError("closed_form_n3: requires N = 3");
    if (!spectrum::nearly_equal(s.g[0], s.g[1]) || !spectrum::nearly_equal(bg.rho0[0], bg.rho0[1])) {
        throw ConfigError("closed_form_n3: requires g1 = g2 and rho01 = rho02");
    }
    const double g1 = s.g[0], g3 = s.g[2], h = s.h, r1 = bg.rho0[0], r3 = bg.rho0[2];
    ClosedFormN3 c;
    c.X = g1 * r1 + h * r1 + g3 * r3;
    c.Y = std::sqrt((g1 + h) * (g1 + h) * r1 * r1 - 2.0 * (g1 * g3 + h * (g3 - 4.0 * h)) * r1 * r3 + g3 * g3 * r3 * r3);
    c.Z = (g1 + h) * r1 - g3 * r3 + 2.0 * h * r3;
    c.W = g1 * r1 - 3.0 * h * r1 - g3 * r3;
    return c;
}

/// Explicit right-mover coefficients for the N = 3 degenerate-pair case:
/// which = 1 the linear branch sqrt((g1 - h) rho01), 2 and 3 the
/// branches sqrt((X -+ Y)/2).
inline ClosedFormCoefficients closed_form_n3_branch(const CouplingModel& coupling, const BackgroundState& bg,
                                                    int which) {
    const ClosedFormN3 c = closed_form_n3(coupling, bg);
    const auto& s = coupling.structured_form();
    const double g1 = s.g[0], h = s.h, r1 = bg.rho0[0], r3 = bg.rho0[2];
    const double hb2 = bg.hbar * bg.hbar;
    const double X = c.X, Y = c.Y, Z = c.Z, W = c.W;
    ClosedFormCoefficients out;
    switch (which) {
    case 1:
        out.lambda = std::sqrt((g1 - h) * r1);
        out.A = -hb2 / (8.0 * out.lambda);
        out.B = 0.0;
        break;
    case 2:
        out.lambda = std::sqrt(0.5 * (X - Y));
        out.A = -hb2 / (4.0 * std::sqrt(2.0)) / std::sqrt(X - Y);
        out.B = 3.0 * (2.0 * std::pow(Y - Z, 3) * r1 + std::pow(W + Y, 3) * r3) /
                (4.0 * (W + Y) * (Y - Z) * (Y - Z) * r1 + 2.0 * std::pow(W + Y, 3) * r3);
        break;
    case 3:
        out.lambda = std::sqrt(0.5 * (X + Y));
        out.A = -hb2 / (4.0 * std::sqrt(2.0)) / std::sqrt(X + Y);
        out.B = 3.0 * (-2.0 * std::pow(Y + Z, 3) * r1 + std::pow(W - Y, 3) * r3) /
                (4.0 * (W - Y) * (Y + Z) * (Y + Z) * r1 + 2.0 * std::pow(W - Y, 3) * r3);
        break;
    default:
        throw ConfigError("closed_form_n3_branch: which must be 1, 2 or 3");
    }
    return out;
}

/// KdV solitary wave f = (3 V A / B) sech^2((sqrt(V)/2)(xi - A V tau)).
class SolitonProfile {
public:
    SolitonProfile(double A, double B, double speed) : A_(A), B_(B), speed_(speed) {
        if (std::abs(B) <= 1e-12) {
            throw ConfigError("soliton_profile: B = 0 has no solitary wave; use the linear spectral evolution");
        }
        if (!(speed > 0.0)) throw ConfigError("soliton_profile: speed must be positive");
    }

    double amplitude() const { return 3.0 * speed_ * A_ / B_; }
    double wavenumber() const { return 0.5 * std::sqrt(speed_); }
    /// Velocity in the (xi, tau) frame.
    double frame_speed() const { return A_ * speed_; }

    double operator()(double xi, double tau) const {
        const double c = std::cosh(wavenumber() * (xi - frame_speed() * tau));
        return amplitude() / (c * c);
    }

    /// Antiderivative in xi, zero at xi = A V tau.
    double integral(double xi, double tau) const {
        return amplitude() * std::tanh(wavenumber() * (xi - frame_speed() * tau)) / wavenumber();
    }

private:
    double A_;
    double B_;
    double speed_;
};

inline SolitonProfile soliton_profile(const KdvModel& model, const ScalingParams& scaling) {
    scaling.validate();
    return SolitonProfile(model.A, model.B, scaling.soliton_speed);
}

/// Generic profile f(xi, tau).
using WaveProfile = std::function<double(double, double)>;

struct HydroFields {
    std::vector<std::vector<double>> rho;
    std::vector<std::vector<double>> v;
};

/// rho_k = rho0_k + eps^2 a_k f(eps(x - lambda t), eps^3 t), v_k = eps^2 b_k f(...).
inline HydroFields reconstruct_fields(const KdvModel& model, const WaveProfile& profile, const ScalingParams& scaling,
                                      const BackgroundState& bg, std::span<const double> x, double t) {
    const double eps = scaling.epsilon;
    const double eps2 = eps * eps;
    const double tau = eps2 * eps * t;
    const std::size_t n = bg.size();
    HydroFields out;
    out.rho.assign(n, std::vector<double>(x.size()));
    out.v.assign(n, std::vector<double>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = profile(eps * (x[i] - model.lambda * t), tau);
        for (std::size_t k = 0; k < n; ++k) {
            const auto ki = static_cast<Eigen::Index>(k);
            out.rho[k][i] = bg.rho0[k] + eps2 * model.a(ki) * f;
            out.v[k][i] = eps2 * model.b(ki) * f;
        }
    }
    return out;
}

inline HydroFields reconstruct_fields(const KdvModel& model, const SolitonProfile& profile,
                                      const ScalingParams& scaling, const BackgroundState& bg,
                                      std::span<const double> x, double t) {
    return reconstruct_fields(model, WaveProfile(profile), scaling, bg, x, t);
}

/// Lab-frame propagation speed of the soliton: lambda + A V eps^2.
inline double lab_speed(const KdvModel& model, const ScalingParams& scaling) {
    return model.lambda + model.A * scaling.soliton_speed * scaling.epsilon * scaling.epsilon;
}

/// Phi_k(x) = integral of v_k, evaluated analytically for a soliton
/// reconstruction (zero at the soliton centre).
struct SolitonPhase {
    KdvModel model;
    SolitonProfile profile;
    ScalingParams scaling;
    double t = 0.0;

    double operator()(std::size_t k, double x) const {
        const double eps = scaling.epsilon;
        const double xi = eps * (x - model.lambda * t);
        const double tau = eps * eps * eps * t;
        // d xi = eps dx
        return eps * eps * model.b(static_cast<Eigen::Index>(k)) * profile.integral(xi, tau) / eps;
    }
};

using PhaseRule = std::function<double(std::size_t, double)>;

using ComplexField = std::vector<std::complex<double>>;

/// psi_k = sqrt(rho_k) exp(i (m / hbar) Phi_k) with Phi_k from the analytic
/// rule when given, otherwise the cumulative trapezoid of v_k from the
/// first grid point (Phi = 0 there).
inline std::vector<ComplexField> madelung_synthesize(const HydroFields& fields, std::span<const double> x,
                                                     const BackgroundState& bg,
                                                     const std::optional<PhaseRule>& closed_form_phase = std::nullopt) {
    const std::size_t n = fields.rho.size();
    if (fields.v.size() != n) throw ConfigError("madelung_synthesize: rho and v species counts differ");
    std::vector<ComplexField> psi(n, ComplexField(x.size()));
    const double phase_scale = bg.mass / bg.hbar;
    for (std::size_t k = 0; k < n; ++k) {
        if (fields.rho[k].size() != x.size() || fields.v[k].size() != x.size()) {
            throw ConfigError("madelung_synthesize: field length does not match the grid");
        }
        double phi = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = fields.rho[k][i];
            if (!(r > 0.0)) {
                throw ConfigError("madelung_synthesize: non-positive density for species " + std::to_string(k + 1) +
                                  " at x = " + std::to_string(x[i]));
            }
            if (closed_form_phase) {
                phi = (*closed_form_phase)(k, x[i]);
            } else if (i > 0) {
                phi += 0.5 * (x[i] - x[i - 1]) * (fields.v[k][i] + fields.v[k][i - 1]);
            }
            psi[k][i] = std::polar(std::sqrt(r), phase_scale * phi);
        }
    }
    return psi;
}

} // namespace kdvred::reduction
