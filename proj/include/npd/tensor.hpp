#pragma once

// Dense 64-bit tensors with reverse-mode automatic differentiation.
//
// Every tensor produced by an op whose inputs require gradients is stamped
// with a monotonically increasing tape position. backward() collects the
// ancestors of a scalar output and replays their adjoints in reverse tape
// order. Tensors that do not require gradients never get a grad buffer.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace npd::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::uint64_t tape_pos = 0;
    std::string op;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into its parents' grad buffers.
    std::function<void(Node&)> backward;

    // Returns the grad buffer, allocating zeros on first use.
    std::vector<double>& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const double> values() const { return node_->value; }
    // Direct mutation is meant for leaves (parameters, inputs) between passes.
    std::span<double> mutable_values() { return node_->value; }
    double item() const;
    double at(std::size_t flat_index) const { return node_->value.at(flat_index); }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string name);
    const std::string& op() const { return node_->op; }
    std::uint64_t tape_pos() const { return node_->tape_pos; }

    // Copy of the values with no history.
    Tensor detach() const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Reverse sweep from a single-element tensor. Gradients accumulate into the
// grad buffers of every reachable tensor that requires them.
void backward(const Tensor& scalar_output);

// ---- primitive ops ----

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
// Batched product over the leading axis: [B,m,k] x [B,k,n], or with
// transpose_b, [B,m,k] x [B,n,k]^T.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sin(const Tensor& a);

Tensor softmax(const Tensor& a);  // over the last axis

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor mean_axis(const Tensor& a, std::size_t axis);  // removes `axis`

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
// Right-aligned broadcast: missing leading axes and extent-1 axes expand.
Tensor broadcast(const Tensor& a, const Shape& target);
Tensor reshape(const Tensor& a, Shape shape);

// sum((a - b)^2) -> scalar
Tensor squared_error(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- raw kernels (exposed for the serial/parallel comparison) ----

namespace kernels {
// out[m,n] += a[m,k] * b[k,n]
void matmul_acc_serial(const double* a, const double* b, double* out, std::size_t m,
                       std::size_t k, std::size_t n);
void matmul_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                std::size_t n);
}  // namespace kernels

}  // namespace npd::ad
