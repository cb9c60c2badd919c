#include "hml/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "hml/error.hpp"

namespace hml::simd {

namespace {

struct KernelTable {
    double (*dot)(const double*, const double*, std::size_t);
    double (*l2_sqr)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
};

constexpr KernelTable kScalarTable{scalar::dot, scalar::l2_sqr, scalar::sum,
                                   scalar::axpy, scalar::scale};
constexpr KernelTable kAvx2Table{avx2::dot, avx2::l2_sqr, avx2::sum,
                                 avx2::axpy, avx2::scale};

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend pick_default() {
    if (const char* env = std::getenv("HML_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && backend_available(Backend::avx2))
            return Backend::avx2;
        // "auto" or anything unrecognized falls through to detection
    }
    return backend_available(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

std::atomic<const KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const KernelTable* table_for(Backend b) {
    return b == Backend::avx2 ? &kAvx2Table : &kScalarTable;
}

const KernelTable* active_table() {
    const KernelTable* t = g_table.load(std::memory_order_acquire);
    if (t) return t;
    const Backend b = pick_default();
    g_backend.store(b, std::memory_order_relaxed);
    t = table_for(b);
    g_table.store(t, std::memory_order_release);
    return t;
}

} // namespace

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

bool backend_available(Backend b) {
    switch (b) {
        case Backend::scalar: return true;
        case Backend::avx2: return avx2::compiled_in() && cpu_has_avx2();
    }
    return false;
}

Backend active_backend() {
    active_table();
    return g_backend.load(std::memory_order_relaxed);
}

void set_backend(Backend b) {
    if (!backend_available(b))
        fail(ErrorCode::ConfigConflict,
             std::string("SIMD backend not available on this host: ") + backend_name(b));
    g_backend.store(b, std::memory_order_relaxed);
    g_table.store(table_for(b), std::memory_order_release);
}

double dot(const double* a, const double* b, std::size_t n) {
    return active_table()->dot(a, b, n);
}
double l2_sqr(const double* a, const double* b, std::size_t n) {
    return active_table()->l2_sqr(a, b, n);
}
double sum(const double* x, std::size_t n) { return active_table()->sum(x, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active_table()->axpy(alpha, x, y, n);
}
void scale(double alpha, double* x, std::size_t n) { active_table()->scale(alpha, x, n); }

} // namespace hml::simd
