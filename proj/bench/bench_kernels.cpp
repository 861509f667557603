#include <benchmark/benchmark.h>

#include <vector>

#include "plad/lm/inference.hpp"
#include "plad/lm/model.hpp"
#include "plad/numerics/kernels.hpp"
#include "plad/numerics/random.hpp"

namespace {

using namespace plad;

std::vector<double> random_matrix(std::size_t n, std::uint64_t seed) {
    num::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    return v;
}

template <auto Gemm>
void gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(n * n, 1), b = random_matrix(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        std::fill(c.begin(), c.end(), 0.0);
        Gemm(a.data(), b.data(), c.data(), n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void serial_gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    num::kernels::serial::gemm_nn(a, b, c, m, k, n);
}
void omp_gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    num::kernels::gemm_nn(a, b, c, m, k, n);
}
void serial_gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    num::kernels::serial::gemm_nt(a, b, c, m, k, n);
}
void omp_gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    num::kernels::gemm_nt(a, b, c, m, k, n);
}

BENCHMARK(gemm<serial_gemm_nn>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(gemm<omp_gemm_nn>)->Name("gemm_nn/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(gemm<serial_gemm_nt>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(gemm<omp_gemm_nt>)->Name("gemm_nt/omp")->RangeMultiplier(2)->Range(32, 256);

// End-to-end cost of one greedy decode with the default teacher and student.
void greedy(benchmark::State& state, lm::ArchConfig arch) {
    const lm::Vocabulary vocab({"a", "b", "c", "d", "e", "f", "g", "h", "="});
    const auto model = lm::init_model(arch, vocab, 7);
    const lm::Tokens prompt = {0, 1, 2, 3, 4, 5, 6, 7, 8};
    for (auto _ : state) benchmark::DoNotOptimize(lm::greedy_decode(model, prompt, 12));
}
BENCHMARK_CAPTURE(greedy, teacher, lm::teacher_arch());
BENCHMARK_CAPTURE(greedy, student, lm::student_arch());

}  // namespace

BENCHMARK_MAIN();
