#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "plad/numerics/tensor.hpp"

namespace plad::num {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
};

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
// reverse index order is a reverse topological order of the graph.
//
// A tape is single-writer. Independent tapes share nothing and can be used
// from different threads.
class Tape {
public:
    // Receives the adjoint of the node's output and scatters it to parents.
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    // Borrows `value` without copying; it must outlive the tape.
    Var borrow(const Tensor& value, bool requires_grad);

    const Tensor& value(Var v) const;
    // Adjoint accumulated by backward(); zeros if nothing flowed into v.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const;

    // Seeds d(loss)/d(loss) = 1 and runs every recorded backward function once.
    void backward(Var loss);
    void reset();

    std::size_t size() const noexcept { return nodes_.size(); }
    bool grad_enabled() const noexcept { return grad_enabled_; }

    // Op-author interface.
    Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
    Tensor& grad_accumulator(Var v);

private:
    struct Node {
        Tensor owned;
        const Tensor* borrowed = nullptr;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;

        const Tensor& value() const { return borrowed ? *borrowed : owned; }
    };

    const Node& node(Var v) const;

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
    bool backward_done_ = false;
};

// Elementwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var mul_const(Var a, const Tensor& c);
Var gelu(Var a);
Var tanh(Var a);
Var hinge(Var a);  // max(0, a)

// x[T x n] + bias[n] on every row.
Var add_row(Var x, Var bias);

Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T

// Row-wise layer normalization with gain and bias of length cols.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Gathers rows of table[V x d] -> [ids.size() x d].
Var embedding(Var table, std::span<const int> ids);

// Multi-head causal scaled dot-product attention on [T x d] inputs.
Var causal_attention(Var q, Var k, Var v, std::size_t n_heads);

// Row-wise (log-)softmax of x / gamma.
Var log_softmax_rows(Var x, double gamma = 1.0);
Var softmax_rows(Var x, double gamma = 1.0);

// Reductions to a scalar.
Var sum(Var a);
Var dot_const(Var a, const Tensor& weights);  // sum(a * weights)

}  // namespace plad::num
