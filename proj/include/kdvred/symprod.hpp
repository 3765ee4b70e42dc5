#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kdvred::symprod {

/// All elementary symmetric polynomials e_0..e_N of the entries.
///
/// Uses the triangle recurrence e_k(n) = e_k(n-1) + x_n e_{k-1}(n-1),
/// updated in place from high to low order so each entry is read
/// before it is overwritten.
template <typename Real = double>
std::vector<Real> elem_sym_all(std::span<const Real> values) {
    std::vector<Real> e(values.size() + 1, Real{0});
    e[0] = Real{1};
    for (std::size_t n = 0; n < values.size(); ++n) {
        const Real x = values[n];
        for (std::size_t k = n + 1; k > 0; --k) {
            e[k] += x * e[k - 1];
        }
    }
    return e;
}

template <typename Real = double>
std::vector<Real> elem_sym_all(const std::vector<Real>& values) {
    return elem_sym_all<Real>(std::span<const Real>(values));
}

/// e_k of the entries; 1 for k = 0 and 0 for k > N.
template <typename Real = double>
Real elem_sym(std::span<const Real> values, std::size_t k) {
    if (k == 0) return Real{1};
    if (k > values.size()) return Real{0};
    // Only orders up to k are needed.
    std::vector<Real> e(k + 1, Real{0});
    e[0] = Real{1};
    for (std::size_t n = 0; n < values.size(); ++n) {
        const Real x = values[n];
        const std::size_t top = n + 1 < k ? n + 1 : k;
        for (std::size_t j = top; j > 0; --j) {
            e[j] += x * e[j - 1];
        }
    }
    return e[k];
}

template <typename Real = double>
Real elem_sym(const std::vector<Real>& values, std::size_t k) {
    return elem_sym<Real>(std::span<const Real>(values), k);
}

} // namespace kdvred::symprod
