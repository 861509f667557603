#include "plad/train/trainer.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>

#include "plad/numerics/kernels.hpp"
#include "plad/numerics/random.hpp"
#include "plad/train/adapter.hpp"

namespace plad::train {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct ItemGrad {
    double loss = 0.0;
    double weight = 0.0;
    std::array<double, 2> metrics{};
    std::vector<num::Tensor> grads;
};

std::vector<num::Tensor*> trainable_tensors(lm::ModelParams& model, std::optional<lm::AdapterSet>& adapters) {
    std::vector<num::Tensor*> out;
    if (adapters) {
        for (auto& a : adapters->adapters) {
            out.push_back(&a.a);
            out.push_back(&a.b);
        }
    } else {
        for (auto& t : model.tensors) out.push_back(&t);
    }
    return out;
}

}  // namespace

std::size_t planned_steps(std::size_t n_items, const TrainConfig& cfg) {
    const auto b = static_cast<std::size_t>(cfg.batch_size);
    return static_cast<std::size_t>(cfg.epochs) * ((n_items + b - 1) / b);
}

double learning_rate_at(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) return 0.0;
    return cfg.learning_rate * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

TrainResult run_training(const lm::ModelParams& initial, const TrainConfig& cfg, const Loop& loop) {
    cfg.validate();
    TrainResult res;
    res.model = initial;
    const std::size_t total = planned_steps(loop.n_items, cfg);
    if (total == 0) return res;

    std::optional<lm::AdapterSet> adapters;
    if (cfg.lora) adapters = apply_adapter(res.model, *cfg.lora, num::mix_seed(cfg.seed ^ 0x1a2b3c4dull));
    const auto mode = adapters ? lm::Trainable::adapters : lm::Trainable::full;
    std::vector<num::Tensor*> params = trainable_tensors(res.model, adapters);
    std::vector<num::Tensor> m1, m2;
    for (auto* p : params) {
        m1.emplace_back(p->shape(), 0.0);
        m2.emplace_back(p->shape(), 0.0);
    }

    num::Rng order_rng(num::mix_seed(cfg.seed));
    std::vector<std::size_t> order(loop.n_items);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto bsz = static_cast<std::size_t>(cfg.batch_size);
    const int threads = num::kernels::num_threads();

    std::size_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        num::shuffle(order, order_rng);
        for (std::size_t start = 0; start < order.size(); start += bsz) {
            const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                 order.begin() + static_cast<std::ptrdiff_t>(
                                                                     std::min(order.size(), start + bsz)));
            if (loop.before_batch) loop.before_batch(res.model, adapters ? &*adapters : nullptr, batch);

            std::vector<ItemGrad> items(batch.size());
            std::exception_ptr failure;
            const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
            for (std::ptrdiff_t i = 0; i < n; ++i) {
                try {
                    num::Tape tape;
                    num::Rng dropout(num::mix_seed(cfg.seed ^ num::mix_seed(step * 65536 + static_cast<std::size_t>(i))));
                    lm::Binding b(tape, res.model, mode, adapters ? &*adapters : nullptr, &dropout);
                    ItemOutput out = loop.item_loss(b, batch[static_cast<std::size_t>(i)]);
                    ItemGrad& ig = items[static_cast<std::size_t>(i)];
                    ig.loss = out.loss.value().item();
                    ig.weight = out.weight;
                    ig.metrics = out.metrics;
                    if (tape.requires_grad(out.loss)) {
                        tape.backward(out.loss);
                        for (num::Var v : b.trainable_vars()) ig.grads.push_back(tape.grad(v));
                    }
                } catch (...) {
#pragma omp critical(plad_train_failure)
                    if (!failure) failure = std::current_exception();
                }
            }
            if (failure) std::rethrow_exception(failure);

            double wsum = 0.0;
            for (const auto& ig : items) wsum += ig.weight;
            if (!(wsum > 0.0)) throw std::invalid_argument("batch has zero total weight");
            StepLog entry;
            entry.step = static_cast<int>(step);
            for (const auto& ig : items) {
                entry.loss += ig.weight * ig.loss / wsum;
                for (std::size_t k = 0; k < entry.metrics.size(); ++k) entry.metrics[k] += ig.weight * ig.metrics[k] / wsum;
            }
            if (!std::isfinite(entry.loss)) {
                throw TrainingDiverged("loss became " + std::to_string(entry.loss) + " at step " + std::to_string(step) +
                                       " (" + to_string(cfg.loss) + ", lr " + std::to_string(cfg.learning_rate) + ")");
            }

            std::vector<num::Tensor> grad;
            for (auto* p : params) grad.emplace_back(p->shape(), 0.0);
            for (const auto& ig : items) {
                if (ig.grads.empty()) continue;
                const double w = ig.weight / wsum;
                for (std::size_t p = 0; p < grad.size(); ++p) {
                    double* g = grad[p].data();
                    const double* s = ig.grads[p].data();
                    for (std::size_t j = 0; j < grad[p].size(); ++j) g[j] += w * s[j];
                }
            }
            double norm2 = 0.0;
            for (const auto& g : grad) {
                for (double v : g.values()) norm2 += v * v;
            }
            if (!std::isfinite(norm2)) throw TrainingDiverged("non-finite gradient at step " + std::to_string(step));
            const double norm = std::sqrt(norm2);
            const double clip = (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) ? cfg.max_grad_norm / norm : 1.0;

            const double lr = learning_rate_at(cfg, step, total);
            const double t = static_cast<double>(step + 1);
            const double c1 = 1.0 - std::pow(kAdamBeta1, t);
            const double c2 = 1.0 - std::pow(kAdamBeta2, t);
            for (std::size_t p = 0; p < params.size(); ++p) {
                double* w = params[p]->data();
                double* a = m1[p].data();
                double* v = m2[p].data();
                const double* g = grad[p].data();
                for (std::size_t j = 0; j < params[p]->size(); ++j) {
                    const double gj = g[j] * clip;
                    a[j] = kAdamBeta1 * a[j] + (1.0 - kAdamBeta1) * gj;
                    v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * gj * gj;
                    w[j] -= lr * (a[j] / c1) / (std::sqrt(v[j] / c2) + kAdamEps);
                }
            }
            entry.lr = lr;
            res.log.push_back(entry);
            ++step;
        }
    }
    if (adapters) res.model = merge_adapter(res.model, *adapters);
    return res;
}

void write_step_log_csv(std::ostream& out, const std::vector<StepLog>& log) {
    out << "step,loss,lr\n";
    out.precision(10);
    for (const auto& e : log) out << e.step << "," << e.loss << "," << e.lr << "\n";
}

}  // namespace plad::train
