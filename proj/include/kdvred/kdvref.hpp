#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kdvred/error.hpp"
#include "kdvred/fft.hpp"
#include "kdvred/model.hpp"
#include "kdvred/reduction.hpp"

namespace kdvred::kdvref {

/// Periodic profile samples f(xi_i, tau) with xi_i = xi_min + i * length / n.
struct KdvGridState {
    double xi_min = 0.0;
    double length = 1.0;
    double tau = 0.0;
    std::vector<double> f;

    std::size_t size() const { return f.size(); }
    double dxi() const { return length / static_cast<double>(f.size()); }
    double xi(std::size_t i) const { return xi_min + static_cast<double>(i) * dxi(); }

    void validate() const {
        if (f.size() < 4) throw ConfigError("kdv grid: need at least 4 samples");
        if (!(length > 0.0)) throw ConfigError("kdv grid: length must be positive");
        for (double v : f) {
            if (!std::isfinite(v)) throw ConfigError("kdv grid: non-finite sample");
        }
    }
};

/// Samples a profile f(xi, tau) on a periodic grid.
template <typename Profile>
KdvGridState sample(const Profile& profile, double xi_min, double length, std::size_t n, double tau = 0.0) {
    KdvGridState s{xi_min, length, tau, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) s.f[i] = profile(s.xi(i), tau);
    return s;
}

inline double integral(const KdvGridState& s) {
    double sum = 0.0;
    for (double v : s.f) sum += v;
    return sum * s.dxi();
}

inline double l2_norm_squared(const KdvGridState& s) {
    double sum = 0.0;
    for (double v : s.f) sum += v * v;
    return sum * s.dxi();
}

/// Exact evolution of f_tau + A f''' = 0: mode k picks up exp(i A k^3 tau).
inline KdvGridState linear_kdv_evolve(const KdvGridState& f0, double A_coef, double tau_end) {
    f0.validate();
    const std::size_t n = f0.size();
    const double dtau = tau_end - f0.tau;
    Fft fft(n);
    std::vector<std::complex<double>> fh(f0.f.begin(), f0.f.end());
    fft.forward(fh);
    const auto k = Fft::wavenumbers(n, f0.length);
    for (std::size_t i = 0; i < n; ++i) fh[i] *= std::polar(1.0, A_coef * k[i] * k[i] * k[i] * dtau);
    fft.inverse(fh);
    KdvGridState out = f0;
    out.tau = tau_end;
    for (std::size_t i = 0; i < n; ++i) out.f[i] = fh[i].real();
    return out;
}

struct NumericKdvOptions {
    /// dt <= dispersive_cfl * dxi^3 / |A|.
    double dispersive_cfl = 1.0;
    /// dt <= advective_cfl * dxi / (|B| max|f|).
    double advective_cfl = 0.1;
};

/// Pseudo-spectral solver for f_tau + B f f' + A f''' = 0 with the
/// dispersive term absorbed into an integrating factor and classical RK4 in
/// time. The zero mode is never touched, so the mean of f is conserved to
/// round-off.
inline KdvGridState numeric_kdv_evolve(const KdvGridState& f0, double A, double B, double tau_end,
                                       const NumericKdvOptions& opt = {}) {
    f0.validate();
    const std::size_t n = f0.size();
    const double span = tau_end - f0.tau;
    if (span < 0.0) throw ConfigError("numeric_kdv_evolve: tau_end precedes the initial time");
    KdvGridState out = f0;
    out.tau = tau_end;
    if (span == 0.0) return out;

    const double dxi = f0.dxi();
    const double fmax = std::max(1e-300, std::abs(*std::max_element(f0.f.begin(), f0.f.end(), [](double a, double b) {
        return std::abs(a) < std::abs(b);
    })));
    double dt_max = span;
    if (A != 0.0) dt_max = std::min(dt_max, opt.dispersive_cfl * dxi * dxi * dxi / std::abs(A));
    if (B != 0.0) dt_max = std::min(dt_max, opt.advective_cfl * dxi / (std::abs(B) * fmax));
    const auto n_steps = static_cast<std::size_t>(std::ceil(span / dt_max));
    const double dt = span / static_cast<double>(n_steps);

    Fft fft(n);
    const auto k = Fft::wavenumbers(n, f0.length);
    using C = std::complex<double>;
    std::vector<C> vh(f0.f.begin(), f0.f.end());
    fft.forward(vh);
    const double initial_l2 = l2_norm_squared(f0);

    // u_hat(tau) = E(tau) v_hat, E = exp(i A k^3 tau); v_hat' = E^-1 N(E v_hat),
    // N(u_hat) = -(B/2) i k FFT(u^2).
    std::vector<C> work(n), phys(n);
    auto rhs = [&](const std::vector<C>& v, double s, std::vector<C>& out_v) {
        for (std::size_t i = 0; i < n; ++i) work[i] = v[i] * std::polar(1.0, A * k[i] * k[i] * k[i] * s);
        phys = work;
        fft.inverse(phys);
        for (auto& z : phys) z = C(z.real() * z.real(), 0.0);
        fft.forward(phys);
        out_v.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            out_v[i] = C(0.0, -0.5 * B * k[i]) * phys[i] * std::polar(1.0, -A * k[i] * k[i] * k[i] * s);
        }
    };

    std::vector<C> k1, k2, k3, k4, tmp(n);
    double s = 0.0;
    for (std::size_t step = 0; step < n_steps; ++step) {
        rhs(vh, s, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = vh[i] + 0.5 * dt * k1[i];
        rhs(tmp, s + 0.5 * dt, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = vh[i] + 0.5 * dt * k2[i];
        rhs(tmp, s + 0.5 * dt, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = vh[i] + dt * k3[i];
        rhs(tmp, s + dt, k4);
        for (std::size_t i = 0; i < n; ++i) vh[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        s += dt;
        if ((step + 1) % 256 == 0 || step + 1 == n_steps) {
            double l2 = 0.0;
            for (const auto& z : vh) l2 += std::norm(z);
            l2 *= dxi / static_cast<double>(n);  // Parseval
            if (!std::isfinite(l2) || (initial_l2 > 0.0 && l2 > 100.0 * initial_l2)) {
                throw NumericalError("numeric_kdv_evolve: instability (norm growth) at tau = " +
                                     std::to_string(f0.tau + s));
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) work[i] = vh[i] * std::polar(1.0, A * k[i] * k[i] * k[i] * span);
    fft.inverse(work);
    for (std::size_t i = 0; i < n; ++i) out.f[i] = work[i].real();
    return out;
}

/// Densities of the soliton reconstruction at lab time t; the peak sits at
/// x = Lambda t with Lambda = lambda + A V eps^2.
inline std::vector<std::vector<double>> analytic_soliton_at(const reduction::KdvModel& model,
                                                            const reduction::ScalingParams& scaling,
                                                            const BackgroundState& bg, std::span<const double> x,
                                                            double t) {
    const auto profile = reduction::soliton_profile(model, scaling);
    return reduction::reconstruct_fields(model, profile, scaling, bg, x, t).rho;
}

/// Location of the extremum of |y - baseline| refined by a parabola through
/// the three samples around the discrete maximum.
inline double peak_position(std::span<const double> x, std::span<const double> y, double baseline) {
    if (x.size() != y.size() || x.size() < 3) throw ConfigError("peak_position: need matching series of >= 3 samples");
    std::size_t best = 0;
    double best_val = -1.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = std::abs(y[i] - baseline);
        if (d > best_val) {
            best_val = d;
            best = i;
        }
    }
    if (best == 0 || best + 1 == y.size()) return x[best];
    const double ym = std::abs(y[best - 1] - baseline), y0 = best_val, yp = std::abs(y[best + 1] - baseline);
    const double denom = ym - 2.0 * y0 + yp;
    if (denom == 0.0) return x[best];
    const double offset = 0.5 * (ym - yp) / denom;
    return x[best] + offset * (x[best + 1] - x[best]);
}

} // namespace kdvred::kdvref
