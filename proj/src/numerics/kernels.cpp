#include "plad/numerics/kernels.hpp"

#include <omp.h>

#include <algorithm>

namespace plad::num::kernels {

namespace {

int g_threads = 0;  // 0: OpenMP default

inline int threads_for(std::size_t work) {
    if (work < kParallelThreshold) return 1;
    return g_threads > 0 ? g_threads : omp_get_max_threads();
}

// Row kernels. The inner j loop is contiguous in B and C so it vectorizes;
// each C element sees its k terms in ascending order.
inline void row_nn(const double* a_row, const double* b, double* c_row, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a_row[p];
        const double* b_row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

inline void row_nt(const double* a_row, const double* b, double* c_row, std::size_t k, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        const double* b_row = b + j * k;
        double acc = c_row[j];
        for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
        c_row[j] = acc;
    }
}

inline void row_tn(const double* a, std::size_t i, std::size_t m, const double* b, double* c_row, std::size_t k,
                   std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        const double* b_row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

}  // namespace

void set_num_threads(int n) { g_threads = std::max(0, n); }

int num_threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const int nt = threads_for(m * k * n);
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        row_nn(a + i * k, b, c + i * n, k, n);
    }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const int nt = threads_for(m * k * n);
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        row_nt(a + i * k, b, c + i * n, k, n);
    }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const int nt = threads_for(m * k * n);
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        row_tn(a, static_cast<std::size_t>(i), m, b, c + i * n, k, n);
    }
}

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) row_nn(a + i * k, b, c + i * n, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) row_nt(a + i * k, b, c + i * n, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) row_tn(a, i, m, b, c + i * n, k, n);
}

}  // namespace serial

}  // namespace plad::num::kernels
