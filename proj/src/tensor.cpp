#include "npd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace npd::ad {

namespace {

std::atomic<std::uint64_t> g_tape_counter{1};

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Builds the output node. The op is recorded on the tape only when at least
// one input requires gradients; otherwise the history is dropped.
Tensor make_result(const std::string& op, Shape shape, std::vector<double> value,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    const bool tracked = std::any_of(parents.begin(), parents.end(),
                                     [](const auto& p) { return p->requires_grad; });
    if (tracked) {
        node->requires_grad = true;
        node->tape_pos = g_tape_counter.fetch_add(1, std::memory_order_relaxed);
        node->parents = std::move(parents);
        node->backward = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

// (outer, extent, inner) view of `shape` around `axis`.
struct AxisView {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    v.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

// out[m,n] += a[m,k] * b[n,k]^T
void mm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
           std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* br = b + j * k;
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += ar[t] * br[t];
            out[i * n + j] += s;
        }
    }
}

// out[m,n] += a[k,m]^T * b[k,n]
void mm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
           std::size_t n) {
    for (std::size_t t = 0; t < k; ++t) {
        const double* ar = a + t * m;
        const double* br = b + t * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = ar[i];
            if (av == 0.0) continue;
            double* orow = out + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
        }
    }
}

template <class F>
Tensor unary(const std::string& op, const Tensor& a, F&& f,
             std::function<double(double x, double y)> dydx) {
    std::vector<double> out(a.numel());
    const auto in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return make_result(op, a.shape(), std::move(out), {a.node()},
                       [dydx = std::move(dydx)](Node& self) {
                           Node& x = *self.parents[0];
                           if (!x.requires_grad) return;
                           auto& gx = x.grad_buffer();
                           for (std::size_t i = 0; i < gx.size(); ++i)
                               gx[i] += self.grad[i] * dydx(x.value[i], self.value[i]);
                       });
}

void require_same(const std::string& op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(ad::numel(shape), value);
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.empty()) shape = {1};
    for (auto e : shape)
        if (e == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
    if (ad::numel(shape) != values.size())
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not hold " +
                                    std::to_string(values.size()) + " values");
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    node->op = "leaf";
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item: tensor has shape " + shape_str(shape()));
    return node_->value[0];
}

Tensor& Tensor::set_name(std::string name) {
    node_->name = std::move(name);
    return *this;
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void backward(const Tensor& scalar_output) {
    if (scalar_output.numel() != 1)
        throw std::invalid_argument("backward: output must be scalar, got shape " +
                                    shape_str(scalar_output.shape()));
    if (!scalar_output.requires_grad())
        throw std::invalid_argument("backward: output does not depend on any tensor requiring grad");

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{scalar_output.node().get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!n->requires_grad || !seen.insert(n).second) continue;
        order.push_back(n);
        for (auto& p : n->parents) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->tape_pos > b->tape_pos; });

    // Interior grads are scratch space for this sweep.
    for (Node* n : order)
        if (n->backward) n->grad.assign(n->value.size(), 0.0);
    scalar_output.node()->grad_buffer()[0] += 1.0;
    for (Node* n : order)
        if (n->backward) n->backward(*n);
}

namespace kernels {

void matmul_acc_serial(const double* a, const double* b, double* out, std::size_t m,
                       std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a[i * k + t];
            if (av == 0.0) continue;
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

void matmul_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                std::size_t n) {
    // Rows are independent and each row keeps the serial summation order.
    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n > (1u << 16))
    for (long i = 0; i < rows; ++i) {
        double* orow = out + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a[i * k + t];
            if (av == 0.0) continue;
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(0))
        shape_error("matmul", a.shape(), b.shape());
    const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
    std::vector<double> out(m * n, 0.0);
    kernels::matmul_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
    return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                       [m, k, n](Node& self) {
                           Node& x = *self.parents[0];
                           Node& y = *self.parents[1];
                           if (x.requires_grad)
                               mm_nt(self.grad.data(), y.value.data(), x.grad_buffer().data(), m,
                                     n, k);
                           if (y.requires_grad)
                               mm_tn(x.value.data(), self.grad.data(), y.grad_buffer().data(), k,
                                     m, n);
                       });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    if (a.rank() != 3 || b.rank() != 3 || a.size(0) != b.size(0))
        shape_error("bmm", a.shape(), b.shape());
    const std::size_t batch = a.size(0), m = a.size(1), k = a.size(2);
    const std::size_t n = transpose_b ? b.size(1) : b.size(2);
    if ((transpose_b ? b.size(2) : b.size(1)) != k) shape_error("bmm", a.shape(), b.shape());
    std::vector<double> out(batch * m * n, 0.0);
    for (std::size_t s = 0; s < batch; ++s) {
        const double* as = a.values().data() + s * m * k;
        const double* bs = b.values().data() + s * k * n;
        double* os = out.data() + s * m * n;
        if (transpose_b)
            mm_nt(as, bs, os, m, k, n);
        else
            kernels::matmul_acc_serial(as, bs, os, m, k, n);
    }
    return make_result(
        "bmm", {batch, m, n}, std::move(out), {a.node(), b.node()},
        [batch, m, k, n, transpose_b](Node& self) {
            Node& x = *self.parents[0];
            Node& y = *self.parents[1];
            for (std::size_t s = 0; s < batch; ++s) {
                const double* g = self.grad.data() + s * m * n;
                const double* xs = x.value.data() + s * m * k;
                const double* ys = y.value.data() + s * k * n;
                if (x.requires_grad) {
                    double* gx = x.grad_buffer().data() + s * m * k;
                    if (transpose_b)
                        kernels::matmul_acc_serial(g, ys, gx, m, n, k);  // G[m,n] B[n,k]
                    else
                        mm_nt(g, ys, gx, m, n, k);  // G[m,n] B[k,n]^T
                }
                if (y.requires_grad) {
                    double* gy = y.grad_buffer().data() + s * k * n;
                    if (transpose_b)
                        mm_tn(g, xs, gy, n, m, k);  // G^T[n,m] A[m,k]
                    else
                        mm_tn(xs, g, gy, k, m, n);  // A^T[k,m] G[m,n]
                }
            }
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return make_result("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return make_result("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        if (self.parents[0]->requires_grad) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->requires_grad) {
            auto& g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& x = *self.parents[0];
        Node& y = *self.parents[1];
        if (x.requires_grad) {
            auto& g = x.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
        }
        if (y.requires_grad) {
            auto& g = y.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        "scale", a, [factor](double x) { return factor * x; },
        [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
    return unary(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sin(const Tensor& a) {
    return unary(
        "sin", a, [](double x) { return std::sin(x); },
        [](double x, double) { return std::cos(x); });
}

Tensor softmax(const Tensor& a) {
    const std::size_t len = a.shape().back();
    const std::size_t rows = a.numel() / len;
    std::vector<double> out(a.numel());
    const auto in = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = in.data() + r * len;
        double* y = out.data() + r * len;
        const double mx = *std::max_element(x, x + len);
        double z = 0.0;
        for (std::size_t j = 0; j < len; ++j) z += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < len; ++j) y[j] /= z;
    }
    return make_result("softmax", a.shape(), std::move(out), {a.node()}, [rows, len](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        auto& gx = x.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * len;
            const double* g = self.grad.data() + r * len;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < len; ++j) gx[r * len + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_result("sum", {1}, {s}, {a.node()}, [](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        auto& g = x.grad_buffer();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean_axis(const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) throw std::invalid_argument("mean_axis: axis out of range for " + shape_str(a.shape()));
    const AxisView v = axis_view(a.shape(), axis);
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.size(i));
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(v.outer * v.inner, 0.0);
    const auto in = a.values();
    const double inv = 1.0 / static_cast<double>(v.extent);
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t e = 0; e < v.extent; ++e)
            for (std::size_t i = 0; i < v.inner; ++i)
                out[o * v.inner + i] += in[(o * v.extent + e) * v.inner + i] * inv;
    return make_result("mean_axis", std::move(out_shape), std::move(out), {a.node()},
                       [v, inv](Node& self) {
                           Node& x = *self.parents[0];
                           if (!x.requires_grad) return;
                           auto& g = x.grad_buffer();
                           for (std::size_t o = 0; o < v.outer; ++o)
                               for (std::size_t e = 0; e < v.extent; ++e)
                                   for (std::size_t i = 0; i < v.inner; ++i)
                                       g[(o * v.extent + e) * v.inner + i] +=
                                           self.grad[o * v.inner + i] * inv;
                       });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& ref = parts.front().shape();
    if (axis >= ref.size()) throw std::invalid_argument("concat: axis out of range for " + shape_str(ref));
    std::size_t total = 0;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != ref.size()) shape_error("concat", ref, s);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != ref[i]) shape_error("concat", ref, s);
        extents.push_back(s[axis]);
        total += s[axis];
    }
    Shape out_shape = ref;
    out_shape[axis] = total;
    const AxisView v = axis_view(out_shape, axis);
    std::vector<double> out(numel(out_shape));
    std::size_t offset = 0;
    std::vector<std::shared_ptr<Node>> nodes;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto in = parts[p].values();
        const std::size_t block = extents[p] * v.inner;
        for (std::size_t o = 0; o < v.outer; ++o)
            std::copy_n(in.data() + o * block, block, out.data() + (o * total + offset) * v.inner);
        offset += extents[p];
        nodes.push_back(parts[p].node());
    }
    return make_result("concat", std::move(out_shape), std::move(out), std::move(nodes),
                       [v, total, extents](Node& self) {
                           std::size_t offset = 0;
                           for (std::size_t p = 0; p < self.parents.size(); ++p) {
                               Node& x = *self.parents[p];
                               const std::size_t block = extents[p] * v.inner;
                               if (x.requires_grad) {
                                   auto& g = x.grad_buffer();
                                   for (std::size_t o = 0; o < v.outer; ++o) {
                                       const double* src =
                                           self.grad.data() + (o * total + offset) * v.inner;
                                       for (std::size_t i = 0; i < block; ++i)
                                           g[o * block + i] += src[i];
                                   }
                               }
                               offset += extents[p];
                           }
                       });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= a.rank() || begin >= end || end > a.size(axis))
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") on axis " + std::to_string(axis) +
                                    " invalid for " + shape_str(a.shape()));
    const AxisView v = axis_view(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape[axis] = end - begin;
    const std::size_t block = (end - begin) * v.inner;
    std::vector<double> out(v.outer * block);
    const auto in = a.values();
    for (std::size_t o = 0; o < v.outer; ++o)
        std::copy_n(in.data() + (o * v.extent + begin) * v.inner, block, out.data() + o * block);
    return make_result("slice", std::move(out_shape), std::move(out), {a.node()},
                       [v, begin, block](Node& self) {
                           Node& x = *self.parents[0];
                           if (!x.requires_grad) return;
                           auto& g = x.grad_buffer();
                           for (std::size_t o = 0; o < v.outer; ++o)
                               for (std::size_t i = 0; i < block; ++i)
                                   g[(o * v.extent + begin) * v.inner + i] +=
                                       self.grad[o * block + i];
                       });
}

Tensor broadcast(const Tensor& a, const Shape& target) {
    const Shape& src = a.shape();
    if (src.size() > target.size()) shape_error("broadcast", src, target);
    const std::size_t lead = target.size() - src.size();
    // Stride into the source for each target axis; 0 on expanded axes.
    std::vector<std::size_t> stride(target.size(), 0);
    std::size_t s = 1;
    for (std::size_t i = src.size(); i-- > 0;) {
        if (src[i] != target[lead + i] && src[i] != 1) shape_error("broadcast", src, target);
        stride[lead + i] = src[i] == 1 ? 0 : s;
        s *= src[i];
    }
    const std::size_t n = numel(target);
    std::vector<std::size_t> index(n);
    std::vector<std::size_t> counter(target.size(), 0);
    std::size_t cur = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        index[flat] = cur;
        for (std::size_t ax = target.size(); ax-- > 0;) {
            cur += stride[ax];
            if (++counter[ax] < target[ax]) break;
            cur -= stride[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    std::vector<double> out(n);
    const auto in = a.values();
    for (std::size_t i = 0; i < n; ++i) out[i] = in[index[i]];
    return make_result("broadcast", target, std::move(out), {a.node()},
                       [index = std::move(index)](Node& self) {
                           Node& x = *self.parents[0];
                           if (!x.requires_grad) return;
                           auto& g = x.grad_buffer();
                           for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
                       });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
    std::vector<double> out(a.values().begin(), a.values().end());
    return make_result("reshape", std::move(shape), std::move(out), {a.node()}, [](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        auto& g = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor squared_error(const Tensor& a, const Tensor& b) {
    require_same("squared_error", a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        s += d * d;
    }
    return make_result("squared_error", {1}, {s}, {a.node(), b.node()}, [](Node& self) {
        Node& x = *self.parents[0];
        Node& y = *self.parents[1];
        const double g = self.grad[0];
        if (x.requires_grad) {
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * g * (x.value[i] - y.value[i]);
        }
        if (y.requires_grad) {
            auto& gy = y.grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) gy[i] -= 2.0 * g * (x.value[i] - y.value[i]);
        }
    });
}

}  // namespace npd::ad
