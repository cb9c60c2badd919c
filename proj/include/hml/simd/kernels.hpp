#pragma once

#include <cstddef>
#include <span>

// Vector kernels behind all heavy inner loops (distances, projections, CRC
// residuals). A scalar reference implementation always exists; an AVX2+FMA
// variant is selected at runtime when the CPU supports it. The two are
// equivalence-tested against each other in tests/test_simd_kernels.cpp.
//
// Backend selection order: HML_SIMD environment variable ("scalar", "avx2",
// "auto"), then CPU detection. set_backend() overrides both.

namespace hml::simd {

enum class Backend { scalar = 0, avx2 = 1 };

const char* backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();
void set_backend(Backend b); // throws hml::Error(ConfigConflict) if unavailable

double dot(const double* a, const double* b, std::size_t n);
double l2_sqr(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n); // y += alpha * x
void scale(double alpha, double* x, std::size_t n);                 // x *= alpha

inline double dot(std::span<const double> a, std::span<const double> b) {
    return dot(a.data(), b.data(), a.size());
}
inline double l2_sqr(std::span<const double> a, std::span<const double> b) {
    return l2_sqr(a.data(), b.data(), a.size());
}
inline double sum(std::span<const double> x) { return sum(x.data(), x.size()); }

// Reference kernels, always compiled; the oracle side of the equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double l2_sqr(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
} // namespace scalar

// AVX2+FMA kernels; declared unconditionally, defined only on x86-64 builds.
// Call through the dispatched entry points unless testing.
namespace avx2 {
bool compiled_in();
double dot(const double* a, const double* b, std::size_t n);
double l2_sqr(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
} // namespace avx2

} // namespace hml::simd
