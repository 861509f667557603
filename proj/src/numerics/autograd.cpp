#include "plad/numerics/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "plad/numerics/kernels.hpp"

namespace plad::num {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::borrow(const Tensor& value, bool requires_grad) {
    Node n;
    n.borrowed = &value;
    n.requires_grad = requires_grad && grad_enabled_;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw std::invalid_argument("variable does not belong to this tape");
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value(); }

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.has_grad) return n.grad;
    return Tensor(n.value().shape(), 0.0);
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
    bool needs = false;
    for (Var p : parents) {
        if (p.tape != this) throw std::invalid_argument("operands live on different tapes");
        needs = needs || nodes_[p.id].requires_grad;
    }
    Node n;
    n.owned = std::move(value);
    n.requires_grad = needs && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_accumulator(Var v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value().shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    const Node& root = node(loss);
    if (root.value().size() != 1) {
        throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_string(root.value().shape()));
    }
    if (backward_done_) throw std::logic_error("backward() called twice on the same tape without reset()");
    if (!root.requires_grad) throw std::logic_error("loss does not depend on any differentiable leaf");
    backward_done_ = true;
    grad_accumulator(loss)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward && n.has_grad) n.backward(*this, n.grad);
    }
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

namespace {

Tape& tape_of(Var a, Var b) {
    if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument("operands live on different tapes");
    return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
    }
}

void require_matrix(const Tensor& a, const char* op) {
    if (a.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

void axpy(Tensor& dst, const Tensor& src, double s = 1.0) {
    double* d = dst.data();
    const double* x = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s * x[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(t.value(a), t.value(b), "add");
    Tensor out = t.value(a);
    axpy(out, t.value(b));
    return t.push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) axpy(t.grad_accumulator(a), g);
        if (t.requires_grad(b)) axpy(t.grad_accumulator(b), g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(t.value(a), t.value(b), "sub");
    Tensor out = t.value(a);
    axpy(out, t.value(b), -1.0);
    return t.push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) axpy(t.grad_accumulator(a), g);
        if (t.requires_grad(b)) axpy(t.grad_accumulator(b), g, -1.0);
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require_same_shape(av, bv, "mul");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return t.push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_accumulator(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_accumulator(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (double& v : out.values()) v *= s;
    return t.push(std::move(out), {a}, [a, s](Tape& t, const Tensor& g) { axpy(t.grad_accumulator(a), g, s); });
}

Var add_scalar(Var a, double s) {
    Tape& t = *a.tape;
    Tensor out = t.value(a);
    for (double& v : out.values()) v += s;
    return t.push(std::move(out), {a}, [a](Tape& t, const Tensor& g) { axpy(t.grad_accumulator(a), g); });
}

Var mul_const(Var a, const Tensor& c) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    require_same_shape(av, c, "mul_const");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c[i];
    auto mask = std::make_shared<Tensor>(c);
    return t.push(std::move(out), {a}, [a, mask](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_accumulator(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
    });
}

Var gelu(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = t.value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
    }
    return t.push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor& ga = t.grad_accumulator(a);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = x[i];
            const double u = kGeluC * (v + 0.044715 * v * v * v);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
            ga[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
        }
    });
}

Var tanh(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = t.value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    const std::size_t self = t.size();
    return t.push(std::move(out), {a}, [a, self](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(Var{&t, self});
        Tensor& ga = t.grad_accumulator(a);
        for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var hinge(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = t.value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(0.0, x[i]);
    return t.push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor& ga = t.grad_accumulator(a);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] > 0.0) ga[i] += g[i];
        }
    });
}

Var add_row(Var x, Var bias) {
    Tape& t = tape_of(x, bias);
    const Tensor& xv = t.value(x);
    const Tensor& bv = t.value(bias);
    if (bv.size() != xv.cols()) {
        throw std::invalid_argument("add_row: bias " + shape_string(bv.shape()) + " does not match rows of " +
                                    shape_string(xv.shape()));
    }
    Tensor out = xv;
    const std::size_t n = xv.cols();
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
    }
    return t.push(std::move(out), {x, bias}, [x, bias, n](Tape& t, const Tensor& g) {
        if (t.requires_grad(x)) axpy(t.grad_accumulator(x), g);
        if (t.requires_grad(bias)) {
            Tensor& gb = t.grad_accumulator(bias);
            const std::size_t rows = g.size() / n;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
            }
        }
    });
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require_matrix(av, "matmul");
    require_matrix(bv, "matmul");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) {
        throw std::invalid_argument("matmul: inner dimensions disagree " + shape_string(av.shape()) + " x " +
                                    shape_string(bv.shape()));
    }
    Tensor out({m, n}, 0.0);
    kernels::gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
    return t.push(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) kernels::gemm_nt(g.data(), t.value(b).data(), t.grad_accumulator(a).data(), m, n, k);
        if (t.requires_grad(b)) kernels::gemm_tn(t.value(a).data(), g.data(), t.grad_accumulator(b).data(), k, m, n);
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require_matrix(av, "matmul_nt");
    require_matrix(bv, "matmul_nt");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    if (bv.cols() != k) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree " + shape_string(av.shape()) + " x " +
                                    shape_string(bv.shape()) + "^T");
    }
    Tensor out({m, n}, 0.0);
    kernels::gemm_nt(av.data(), bv.data(), out.data(), m, k, n);
    return t.push(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
        // dA = G * B, dB = G^T * A
        if (t.requires_grad(a)) kernels::gemm_nn(g.data(), t.value(b).data(), t.grad_accumulator(a).data(), m, n, k);
        if (t.requires_grad(b)) kernels::gemm_tn(g.data(), t.value(a).data(), t.grad_accumulator(b).data(), n, m, k);
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    Tape& t = tape_of(x, gain);
    tape_of(x, bias);
    const Tensor& xv = t.value(x);
    const std::size_t n = xv.cols(), rows = xv.rows();
    if (t.value(gain).size() != n || t.value(bias).size() != n) {
        throw std::invalid_argument("layer_norm: gain/bias length must equal " + std::to_string(n));
    }
    auto xhat = std::make_shared<Tensor>(xv.shape());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    Tensor out(xv.shape());
    const Tensor& gv = t.value(gain);
    const Tensor& bv = t.value(bias);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * n;
        double mean = 0.0;
        for (std::size_t c = 0; c < n; ++c) mean += xr[c];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < n; ++c) {
            const double h = (xr[c] - mean) * is;
            (*xhat)[r * n + c] = h;
            out[r * n + c] = h * gv[c] + bv[c];
        }
    }
    return t.push(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std, n, rows](Tape& t, const Tensor& g) {
        const Tensor& gv = t.value(gain);
        if (t.requires_grad(gain) || t.requires_grad(bias)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    if (t.requires_grad(gain)) t.grad_accumulator(gain)[c] += g[r * n + c] * (*xhat)[r * n + c];
                    if (t.requires_grad(bias)) t.grad_accumulator(bias)[c] += g[r * n + c];
                }
            }
        }
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_accumulator(x);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                const double d = g[r * n + c] * gv[c];
                mean_d += d;
                mean_dx += d * (*xhat)[r * n + c];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t c = 0; c < n; ++c) {
                const double d = g[r * n + c] * gv[c];
                gx[r * n + c] += (*inv_std)[r] * (d - mean_d - (*xhat)[r * n + c] * mean_dx);
            }
        }
    });
}

Var embedding(Var table, std::span<const int> ids) {
    Tape& t = *table.tape;
    const Tensor& tv = t.value(table);
    require_matrix(tv, "embedding");
    const std::size_t d = tv.cols();
    if (ids.empty()) throw std::invalid_argument("embedding: empty id list");
    auto idx = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
    Tensor out({ids.size(), d});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const int id = ids[r];
        if (id < 0 || static_cast<std::size_t>(id) >= tv.rows()) {
            throw std::out_of_range("embedding: id " + std::to_string(id) + " outside table of " +
                                    std::to_string(tv.rows()) + " rows");
        }
        std::copy_n(tv.data() + static_cast<std::size_t>(id) * d, d, out.data() + r * d);
    }
    return t.push(std::move(out), {table}, [table, idx, d](Tape& t, const Tensor& g) {
        Tensor& gt = t.grad_accumulator(table);
        for (std::size_t r = 0; r < idx->size(); ++r) {
            double* dst = gt.data() + static_cast<std::size_t>((*idx)[r]) * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += g[r * d + c];
        }
    });
}

Var causal_attention(Var q, Var k, Var v, std::size_t n_heads) {
    Tape& t = tape_of(q, k);
    tape_of(q, v);
    const Tensor& qv = t.value(q);
    const Tensor& kv = t.value(k);
    const Tensor& vv = t.value(v);
    require_same_shape(qv, kv, "causal_attention");
    require_same_shape(qv, vv, "causal_attention");
    const std::size_t T = qv.rows(), d = qv.cols();
    if (n_heads == 0 || d % n_heads != 0) throw std::invalid_argument("causal_attention: width not divisible by heads");
    const std::size_t dh = d / n_heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

    // probs[h][i][j] for j <= i, stored densely as [heads x T x T].
    auto probs = std::make_shared<std::vector<double>>(n_heads * T * T, 0.0);
    Tensor out({T, d}, 0.0);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < T; ++i) {
            double* p = probs->data() + (h * T + i) * T;
            double mx = -1e300;
            for (std::size_t j = 0; j <= i; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += qv[i * d + off + c] * kv[j * d + off + c];
                p[j] = s * sc;
                mx = std::max(mx, p[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                p[j] = std::exp(p[j] - mx);
                z += p[j];
            }
            for (std::size_t j = 0; j <= i; ++j) {
                p[j] /= z;
                for (std::size_t c = 0; c < dh; ++c) out[i * d + off + c] += p[j] * vv[j * d + off + c];
            }
        }
    }
    return t.push(std::move(out), {q, k, v}, [q, k, v, probs, T, d, dh, n_heads, sc](Tape& t, const Tensor& g) {
        const Tensor& qv = t.value(q);
        const Tensor& kv = t.value(k);
        const Tensor& vv = t.value(v);
        const bool gq = t.requires_grad(q), gk = t.requires_grad(k), gvv = t.requires_grad(v);
        Tensor* dq = gq ? &t.grad_accumulator(q) : nullptr;
        Tensor* dk = gk ? &t.grad_accumulator(k) : nullptr;
        Tensor* dv = gvv ? &t.grad_accumulator(v) : nullptr;
        std::vector<double> dp(T);
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < T; ++i) {
                const double* p = probs->data() + (h * T + i) * T;
                const double* gi = g.data() + i * d + off;
                double dot = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vv[j * d + off + c];
                    dp[j] = s;
                    dot += s * p[j];
                    if (dv) {
                        for (std::size_t c = 0; c < dh; ++c) (*dv)[j * d + off + c] += p[j] * gi[c];
                    }
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    const double ds = p[j] * (dp[j] - dot) * sc;
                    if (ds == 0.0) continue;
                    for (std::size_t c = 0; c < dh; ++c) {
                        if (dq) (*dq)[i * d + off + c] += ds * kv[j * d + off + c];
                        if (dk) (*dk)[j * d + off + c] += ds * qv[i * d + off + c];
                    }
                }
            }
        }
    });
}

Var log_softmax_rows(Var x, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("log_softmax_rows: temperature must be positive");
    Tape& t = *x.tape;
    const Tensor& xv = t.value(x);
    const std::size_t n = xv.cols();
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        auto ls = log_softmax_temperature(xv.row(r), gamma);
        std::copy(ls.begin(), ls.end(), out.data() + r * n);
    }
    const std::size_t self = t.size();
    return t.push(std::move(out), {x}, [x, self, gamma, n](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(Var{&t, self});
        Tensor& gx = t.grad_accumulator(x);
        const std::size_t rows = y.size() / n;
        for (std::size_t r = 0; r < rows; ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < n; ++c) gs += g[r * n + c];
            for (std::size_t c = 0; c < n; ++c) {
                gx[r * n + c] += (g[r * n + c] - std::exp(y[r * n + c]) * gs) / gamma;
            }
        }
    });
}

Var softmax_rows(Var x, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("softmax_rows: temperature must be positive");
    Tape& t = *x.tape;
    Tensor out = softmax_temperature(t.value(x), gamma);
    const std::size_t n = out.cols();
    const std::size_t self = t.size();
    return t.push(std::move(out), {x}, [x, self, gamma, n](Tape& t, const Tensor& g) {
        const Tensor& p = t.value(Var{&t, self});
        Tensor& gx = t.grad_accumulator(x);
        const std::size_t rows = p.size() / n;
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * p[r * n + c];
            for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += p[r * n + c] * (g[r * n + c] - dot) / gamma;
        }
    });
}

Var sum(Var a) {
    Tape& t = *a.tape;
    double s = 0.0;
    for (double v : t.value(a).values()) s += v;
    return t.push(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
        for (double& v : t.grad_accumulator(a).values()) v += g[0];
    });
}

Var dot_const(Var a, const Tensor& weights) {
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    require_same_shape(av, weights, "dot_const");
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * weights[i];
    auto w = std::make_shared<Tensor>(weights);
    return t.push(Tensor::scalar(s), {a}, [a, w](Tape& t, const Tensor& g) { axpy(t.grad_accumulator(a), *w, g[0]); });
}

}  // namespace plad::num
