#pragma once

#include <cstddef>

// Dense matrix kernels. All variants accumulate into C (row-major).
//
//   gemm_nn: C[m x n] += A[m x k] * B[k x n]
//   gemm_nt: C[m x n] += A[m x k] * B[n x k]^T
//   gemm_tn: C[m x n] += A[k x m]^T * B[k x n]
//
// The default entry points split output rows across OpenMP threads once the
// problem is large enough. Every output element is accumulated over k in
// ascending order by exactly one thread, so results are bit-identical to the
// serial reference in plad::num::kernels::serial regardless of thread count.
namespace plad::num::kernels {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// Problems with fewer multiply-adds than this run on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

// Thread control shared by all parallel regions in the library.
void set_num_threads(int n);
int num_threads();

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace serial

}  // namespace plad::num::kernels
