#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kdvred/error.hpp"
#include "kdvred/fft.hpp"
#include "kdvred/grid.hpp"
#include "kdvred/model.hpp"

namespace kdvred::nls {

using Complex = std::complex<double>;
using ComplexField = std::vector<Complex>;

enum class Scheme { ExplicitLeapfrog, SplitStepVerification };
enum class Boundary { Periodic, ClampedBackground };

/// Grid, time and the N complex amplitudes at that time.
struct FieldState {
    Grid grid;
    double time = 0.0;
    std::vector<ComplexField> psi;
    bool periodic = true;

    std::size_t species() const { return psi.size(); }

    void validate() const {
        grid.validate();
        if (psi.empty()) throw ConfigError("field state: no species");
        for (const auto& p : psi) {
            if (p.size() != grid.n_points) throw ConfigError("field state: amplitude length does not match grid");
        }
    }
};

struct IntegratorConfig {
    double dt = 0.0;
    Scheme scheme = Scheme::ExplicitLeapfrog;
    Boundary boundary = Boundary::Periodic;

    /// Leapfrog stability bound dt <= m dx^2 / (4 hbar).
    static double stability_bound(const Grid& grid, const BackgroundState& bg) {
        const double dx = grid.dx();
        return bg.mass * dx * dx / (4.0 * bg.hbar);
    }

    /// dt = dx^2 / 8 scaled by m / hbar.
    static double default_dt(const Grid& grid, const BackgroundState& bg) {
        const double dx = grid.dx();
        return bg.mass * dx * dx / (8.0 * bg.hbar);
    }
};

/// Chemical potential mu_k = sum_j alpha_kj rho0_j of the uniform background;
/// psi_k = sqrt(rho0_k) exp(-i mu_k t / hbar) solves the NLS exactly.
inline std::vector<double> background_potential(const CouplingModel& coupling, const BackgroundState& bg) {
    const Eigen::VectorXd mu = coupling.alpha() * bg.rho();
    return {mu.data(), mu.data() + mu.size()};
}

inline FieldState uniform_background(const Grid& grid, const BackgroundState& bg, bool periodic = true) {
    FieldState s;
    s.grid = grid;
    s.periodic = periodic;
    s.psi.assign(bg.size(), ComplexField(grid.n_points));
    for (std::size_t k = 0; k < bg.size(); ++k) {
        for (auto& z : s.psi[k]) z = Complex(std::sqrt(bg.rho0[k]), 0.0);
    }
    return s;
}

/// Removes the phase mismatch between the two ends of a periodic grid: half
/// of the mismatch is absorbed on each side by a smooth ramp
/// theta(s) = s - sin(2 pi s) / (2 pi) confined to the outer `fraction` of
/// the domain, so the phase gradient is continuous. Returns the mismatch of
/// each species in radians.
inline std::vector<double> apply_seam_ramp(FieldState& state, double fraction = 0.1) {
    if (!(fraction > 0.0 && fraction <= 0.5)) throw ConfigError("seam ramp: fraction must lie in (0, 0.5]");
    const std::size_t n = state.grid.n_points;
    const double width = fraction * state.grid.length();
    const double two_pi = 2.0 * std::acos(-1.0);
    auto smooth = [two_pi](double s) { return s - std::sin(two_pi * s) / two_pi; };
    std::vector<double> mismatch(state.species());
    for (std::size_t k = 0; k < state.species(); ++k) {
        auto& p = state.psi[k];
        const double delta = std::arg(p.front() * std::conj(p.back()));
        mismatch[k] = delta;
        for (std::size_t i = 0; i < n; ++i) {
            // Position measured so that x_max (the image of x_min) sits at the seam.
            const double from_left = state.grid.x(i) - state.grid.x_min;
            const double to_right = state.grid.x_max - state.grid.x(i);
            double theta = 0.0;
            if (from_left < width) theta = -0.5 * delta * (1.0 - smooth(from_left / width));
            if (to_right < width) theta = 0.5 * delta * (1.0 - smooth(to_right / width));
            if (theta != 0.0) p[i] *= std::polar(1.0, theta);
        }
    }
    return mismatch;
}

/// Integral of |psi_k|^2 per species (rectangle rule on the periodic grid,
/// trapezoid otherwise).
inline std::vector<double> norms(const FieldState& state) {
    std::vector<double> out(state.species(), 0.0);
    const double dx = state.grid.dx();
    const std::size_t n = state.grid.n_points;
    for (std::size_t k = 0; k < state.species(); ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = (!state.periodic && (i == 0 || i + 1 == n)) ? 0.5 : 1.0;
            sum += w * std::norm(state.psi[k][i]);
        }
        out[k] = sum * dx;
    }
    return out;
}

namespace detail {

/// Centered difference (psi_{i+1} - psi_{i-1}) / 2dx, one-sided at the ends
/// of a non-periodic grid.
inline Complex first_difference(const ComplexField& p, std::size_t i, double dx, bool periodic) {
    const std::size_t n = p.size();
    if (periodic) {
        const std::size_t ip = (i + 1 == n) ? 0 : i + 1;
        const std::size_t im = (i == 0) ? n - 1 : i - 1;
        return (p[ip] - p[im]) / (2.0 * dx);
    }
    if (i == 0) return (p[1] - p[0]) / dx;
    if (i + 1 == n) return (p[n - 1] - p[n - 2]) / dx;
    return (p[i + 1] - p[i - 1]) / (2.0 * dx);
}

} // namespace detail

/// H = integral sum_k (hbar^2 |d_x psi_k|^2 / 2m + sum_j alpha_kj / 2 |psi_k|^2 |psi_j|^2) dx.
inline double hamiltonian(const FieldState& state, const CouplingModel& coupling, const BackgroundState& bg) {
    const std::size_t n = state.grid.n_points;
    const std::size_t ns = state.species();
    const double dx = state.grid.dx();
    const auto& alpha = coupling.alpha();
    const double kinetic = bg.hbar * bg.hbar / (2.0 * bg.mass);
    std::vector<double> dens(ns);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = (!state.periodic && (i == 0 || i + 1 == n)) ? 0.5 : 1.0;
        double e = 0.0;
        for (std::size_t k = 0; k < ns; ++k) {
            dens[k] = std::norm(state.psi[k][i]);
            e += kinetic * std::norm(detail::first_difference(state.psi[k], i, dx, state.periodic));
        }
        for (std::size_t k = 0; k < ns; ++k) {
            for (std::size_t j = 0; j < ns; ++j) {
                e += 0.5 * alpha(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * dens[k] * dens[j];
            }
        }
        total += w * e;
    }
    return total * dx;
}

struct DensityVelocity {
    std::vector<std::vector<double>> rho;
    /// NaN where |psi|^2 is below the density floor.
    std::vector<std::vector<double>> v;
};

inline constexpr double density_floor = 1e-12;

/// rho_k = |psi_k|^2 and v_k = (hbar/m) d_x arg psi_k from the phase of
/// psi_{i+1} conj(psi_{i-1}), which is free of branch cuts.
inline DensityVelocity density_velocity(const FieldState& state, const BackgroundState& bg) {
    const std::size_t n = state.grid.n_points;
    const double dx = state.grid.dx();
    const double scale = bg.hbar / bg.mass;
    DensityVelocity out;
    out.rho.assign(state.species(), std::vector<double>(n));
    out.v.assign(state.species(), std::vector<double>(n));
    for (std::size_t k = 0; k < state.species(); ++k) {
        const auto& p = state.psi[k];
        for (std::size_t i = 0; i < n; ++i) out.rho[k][i] = std::norm(p[i]);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t ip = i + 1, im = i - 1;
            double span = 2.0 * dx;
            if (state.periodic) {
                ip = (i + 1 == n) ? 0 : i + 1;
                im = (i == 0) ? n - 1 : i - 1;
            } else if (i == 0) {
                im = 0;
                span = dx;
            } else if (i + 1 == n) {
                ip = n - 1;
                span = dx;
            }
            if (out.rho[k][i] < density_floor || out.rho[k][ip] < density_floor || out.rho[k][im] < density_floor) {
                out.v[k][i] = std::numeric_limits<double>::quiet_NaN();
            } else {
                out.v[k][i] = scale * std::arg(p[ip] * std::conj(p[im])) / span;
            }
        }
    }
    return out;
}

/// Time integrator for i hbar d_t psi_k = -(hbar^2/2m) d_xx psi_k + (sum_j alpha_kj |psi_j|^2) psi_k.
///
/// The fields are advanced in the frame co-rotating with the background,
/// phi_k = psi_k exp(i mu_k (t - t0) / hbar), so a uniform background is an
/// exact fixed point; state() returns psi.
///
/// ExplicitLeapfrog keeps two time levels and is bootstrapped by one RK4
/// step; SplitStepVerification is Strang splitting with an exact Fourier
/// kinetic propagator (periodic only).
class Integrator {
public:
    Integrator(FieldState initial, CouplingModel coupling, BackgroundState bg, IntegratorConfig cfg)
        : coupling_(std::move(coupling)), bg_(std::move(bg)), cfg_(cfg), current_(std::move(initial)) {
        current_.validate();
        bg_.validate_against(coupling_);
        if (current_.species() != bg_.size()) throw ConfigError("integrator: species count mismatch");
        if (!(cfg_.dt > 0.0) || !std::isfinite(cfg_.dt)) throw ConfigError("integrator: dt must be positive");
        current_.periodic = (cfg_.boundary == Boundary::Periodic);
        if (cfg_.scheme == Scheme::ExplicitLeapfrog) {
            const double bound = IntegratorConfig::stability_bound(current_.grid, bg_);
            if (cfg_.dt > bound * (1.0 + 1e-12)) {
                throw ConfigError("integrator: dt = " + std::to_string(cfg_.dt) +
                                  " exceeds the leapfrog stability bound m dx^2/(4 hbar) = " + std::to_string(bound));
            }
        } else if (cfg_.boundary != Boundary::Periodic) {
            throw ConfigError("integrator: split-step verification requires a periodic boundary");
        }
        mu_ = background_potential(coupling_, bg_);
        for (const auto& p : current_.psi) edge_values_.push_back({p.front(), p.back()});
        frame_time_ = current_.time;
        check_finite();
    }

    const FieldState& state() const {
        if (view_steps_ != steps_ || view_.psi.empty() || view_.time != current_.time) {
            view_ = current_;
            for (std::size_t k = 0; k < view_.psi.size(); ++k) {
                const Complex rot = std::polar(1.0, -mu_[k] * (current_.time - frame_time_) / bg_.hbar);
                for (auto& z : view_.psi[k]) z *= rot;
            }
            view_steps_ = steps_;
        }
        return view_;
    }
    std::size_t steps_taken() const { return steps_; }
    double dt() const { return dt_sign_ * cfg_.dt; }
    const IntegratorConfig& config() const { return cfg_; }

    void step() {
        if (cfg_.scheme == Scheme::SplitStepVerification) {
            split_step();
        } else if (!previous_) {
            bootstrap();
        } else {
            leapfrog_step();
        }
        ++steps_;
        if (steps_ % 64 == 0) check_finite();
    }

    void advance(std::size_t n_steps) {
        for (std::size_t i = 0; i < n_steps; ++i) step();
        check_finite();
    }

    /// Number of whole steps from the current time to t.
    std::size_t steps_until(double t) const {
        const double n = (t - current_.time) / dt();
        return n <= 0.0 ? 0 : static_cast<std::size_t>(std::llround(n));
    }

    void advance_to(double t) { advance(steps_until(t)); }

    /// Flips the direction of time. For leapfrog the two stored levels are
    /// exchanged, making the scheme retrace its steps.
    void reverse() {
        dt_sign_ = -dt_sign_;
        if (previous_) std::swap(*previous_, current_);
    }

private:
    using Fields = std::vector<ComplexField>;

    /// -(i/hbar) (H - mu) phi, written into out.
    void time_derivative(const Fields& psi, Fields& out) const {
        const std::size_t n = current_.grid.n_points;
        const std::size_t ns = psi.size();
        const double dx = current_.grid.dx();
        const double kin = -bg_.hbar * bg_.hbar / (2.0 * bg_.mass * dx * dx);
        const Complex factor(0.0, -1.0 / bg_.hbar);
        const auto& alpha = coupling_.alpha();
        const bool periodic = cfg_.boundary == Boundary::Periodic;
        dens_.resize(ns);
        for (std::size_t k = 0; k < ns; ++k) {
            dens_[k].resize(n);
            for (std::size_t i = 0; i < n; ++i) dens_[k][i] = std::norm(psi[k][i]);
        }
        out.resize(ns);
        for (std::size_t k = 0; k < ns; ++k) {
            out[k].resize(n);
            const auto& p = psi[k];
            auto& o = out[k];
            for (std::size_t i = 0; i < n; ++i) {
                double v = -mu_[k];
                for (std::size_t j = 0; j < ns; ++j) {
                    v += alpha(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * dens_[j][i];
                }
                Complex lap;
                if (i == 0) {
                    lap = periodic ? p[1] - 2.0 * p[0] + p[n - 1] : Complex{};
                } else if (i + 1 == n) {
                    lap = periodic ? p[0] - 2.0 * p[i] + p[i - 1] : Complex{};
                } else {
                    lap = p[i + 1] - 2.0 * p[i] + p[i - 1];
                }
                o[i] = factor * (kin * lap + v * p[i]);
            }
            if (!periodic) {
                // Pinned edges are at rest in the co-rotating frame.
                o.front() = Complex{};
                o.back() = Complex{};
            }
        }
    }

    void pin_edges(Fields& psi) const {
        if (cfg_.boundary == Boundary::Periodic) return;
        for (std::size_t k = 0; k < psi.size(); ++k) {
            psi[k].front() = edge_values_[k].first;
            psi[k].back() = edge_values_[k].second;
        }
    }

    void bootstrap() {
        const double h = dt();
        const double t = current_.time;
        const Fields& y = current_.psi;
        Fields k1, k2, k3, k4, tmp = y;
        auto axpy = [&](const Fields& base, const Fields& d, double c, Fields& outv) {
            outv = base;
            for (std::size_t k = 0; k < base.size(); ++k) {
                for (std::size_t i = 0; i < base[k].size(); ++i) outv[k][i] += c * d[k][i];
            }
        };
        time_derivative(y, k1);
        axpy(y, k1, 0.5 * h, tmp);
        time_derivative(tmp, k2);
        axpy(y, k2, 0.5 * h, tmp);
        time_derivative(tmp, k3);
        axpy(y, k3, h, tmp);
        time_derivative(tmp, k4);
        Fields next = y;
        for (std::size_t k = 0; k < y.size(); ++k) {
            for (std::size_t i = 0; i < y[k].size(); ++i) {
                next[k][i] += (h / 6.0) * (k1[k][i] + 2.0 * k2[k][i] + 2.0 * k3[k][i] + k4[k][i]);
            }
        }
        previous_ = std::make_unique<FieldState>(current_);
        current_.psi = std::move(next);
        current_.time = t + h;
        pin_edges(current_.psi);
    }

    void leapfrog_step() {
        const double h = dt();
        time_derivative(current_.psi, deriv_);
        auto& prev = previous_->psi;
        for (std::size_t k = 0; k < prev.size(); ++k) {
            for (std::size_t i = 0; i < prev[k].size(); ++i) prev[k][i] += 2.0 * h * deriv_[k][i];
        }
        previous_->time = current_.time + h;
        std::swap(*previous_, current_);
        pin_edges(current_.psi);
    }

    void split_step() {
        const std::size_t n = current_.grid.n_points;
        const double h = dt();
        if (!fft_) {
            fft_ = std::make_unique<Fft>(n);
            const auto k = Fft::wavenumbers(n, current_.grid.length(), false);
            kinetic_.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                kinetic_[i] = std::polar(1.0, -bg_.hbar * k[i] * k[i] * h / (2.0 * bg_.mass));
            }
            kinetic_dt_ = h;
        } else if (kinetic_dt_ != h) {
            const auto k = Fft::wavenumbers(n, current_.grid.length(), false);
            for (std::size_t i = 0; i < n; ++i) {
                kinetic_[i] = std::polar(1.0, -bg_.hbar * k[i] * k[i] * h / (2.0 * bg_.mass));
            }
            kinetic_dt_ = h;
        }
        auto& psi = current_.psi;
        nonlinear_phase(psi, 0.5 * h);
        for (auto& p : psi) {
            fft_->forward(p);
            for (std::size_t i = 0; i < n; ++i) p[i] *= kinetic_[i];
            fft_->inverse(p);
        }
        nonlinear_phase(psi, 0.5 * h);
        current_.time += h;
    }

    void nonlinear_phase(Fields& psi, double h) const {
        const std::size_t ns = psi.size();
        const std::size_t n = current_.grid.n_points;
        const auto& alpha = coupling_.alpha();
        std::vector<double> dens(ns);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < ns; ++k) dens[k] = std::norm(psi[k][i]);
            for (std::size_t k = 0; k < ns; ++k) {
                double v = -mu_[k];
                for (std::size_t j = 0; j < ns; ++j) {
                    v += alpha(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * dens[j];
                }
                psi[k][i] *= std::polar(1.0, -v * h / bg_.hbar);
            }
        }
    }

    void check_finite() const {
        for (std::size_t k = 0; k < current_.psi.size(); ++k) {
            for (const auto& z : current_.psi[k]) {
                if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
                    throw NumericalError("NLS integration failed: non-finite amplitude in species " +
                                         std::to_string(k + 1) + " at step " + std::to_string(steps_) +
                                         " (t = " + std::to_string(current_.time) + ")");
                }
            }
        }
    }

    CouplingModel coupling_;
    BackgroundState bg_;
    IntegratorConfig cfg_;
    FieldState current_;
    std::unique_ptr<FieldState> previous_;
    std::vector<double> mu_;
    std::vector<std::pair<Complex, Complex>> edge_values_;
    double frame_time_ = 0.0;
    double dt_sign_ = 1.0;
    std::size_t steps_ = 0;

    mutable FieldState view_;
    mutable std::size_t view_steps_ = 0;
    mutable std::vector<std::vector<double>> dens_;
    Fields deriv_;
    std::unique_ptr<Fft> fft_;
    std::vector<Complex> kinetic_;
    double kinetic_dt_ = 0.0;
};

} // namespace kdvred::nls
