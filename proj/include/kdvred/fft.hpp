#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace kdvred {

namespace detail {
/// FFTW planning is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

/// Complex 1-D transform pair of fixed length (unnormalized forward,
/// inverse scaled by 1/n). Plans use FFTW_ESTIMATE so results do not depend
/// on timing measurements.
class Fft {
public:
    explicit Fft(std::size_t n) : n_(n), buffer_(n) {
        std::lock_guard lock(detail::fftw_planner_mutex());
        auto* data = reinterpret_cast<fftw_complex*>(buffer_.data());
        forward_ = fftw_plan_dft_1d(static_cast<int>(n), data, data, FFTW_FORWARD, FFTW_ESTIMATE);
        backward_ = fftw_plan_dft_1d(static_cast<int>(n), data, data, FFTW_BACKWARD, FFTW_ESTIMATE);
    }

    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;

    ~Fft() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    std::size_t size() const { return n_; }

    void forward(std::vector<std::complex<double>>& data) {
        run(forward_, data);
    }

    void inverse(std::vector<std::complex<double>>& data) {
        run(backward_, data);
        const double scale = 1.0 / static_cast<double>(n_);
        for (auto& z : data) z *= scale;
    }

    /// Angular wavenumbers 2 pi m / length in FFT order. With zero_nyquist the
    /// Nyquist mode (even n) is assigned 0 so odd derivatives stay real.
    static std::vector<double> wavenumbers(std::size_t n, double length, bool zero_nyquist = true) {
        std::vector<double> k(n);
        const double base = 2.0 * 3.14159265358979323846 / length;
        for (std::size_t i = 0; i < n; ++i) {
            const auto m = static_cast<long long>(i);
            const auto half = static_cast<long long>(n / 2);
            long long mode = m <= half ? m : m - static_cast<long long>(n);
            if (zero_nyquist && n % 2 == 0 && m == half) mode = 0;
            k[i] = base * static_cast<double>(mode);
        }
        return k;
    }

private:
    void run(fftw_plan plan, std::vector<std::complex<double>>& data) {
        std::copy(data.begin(), data.end(), buffer_.begin());
        auto* buf = reinterpret_cast<fftw_complex*>(buffer_.data());
        fftw_execute_dft(plan, buf, buf);
        std::copy(buffer_.begin(), buffer_.end(), data.begin());
    }

    std::size_t n_;
    std::vector<std::complex<double>> buffer_;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

} // namespace kdvred
