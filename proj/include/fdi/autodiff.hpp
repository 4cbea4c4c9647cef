#pragma once

// Reverse-mode automatic differentiation over dense row-major float64 arrays.
//
// A Tensor is a cheap handle onto a shared graph node. Operations record
// their inputs and a backward closure only while gradient tracking is
// enabled on the calling thread (see NoGradGuard); graphs are never shared
// between threads.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fdi {
class Rng;
}

namespace fdi::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient flows in
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    /// Allocates the gradient buffer on first use.
    std::vector<double>& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    /// Leaf that accumulates gradients (a trainable parameter).
    static Tensor parameter(Shape shape, std::vector<double> values);
    static Tensor scalar(double v);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() { return node_->value; }
    double item() const;
    double at(std::size_t i) const { return node_->value.at(i); }

    bool requires_grad() const { return node_->requires_grad; }
    /// Gradient of the last backward pass; zeros if nothing flowed in.
    std::vector<double> grad() const;
    void zero_grad();

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Elementwise and reductions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Linear algebra. `linear` applies x·W + b over the last axis of x.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Batched [G,M,K]x[G,K,N]; with transpose_b, b is [G,N,K].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Shape manipulation.
Tensor reshape(const Tensor& x, Shape shape);
/// [B,A,C] -> [B,C,A]
Tensor swap_last_axes(const Tensor& x);
/// [B,T,H*D] -> [B*H,T,D]
Tensor split_heads(const Tensor& x, std::size_t heads);
/// [B*H,T,D] -> [B,T,H*D]
Tensor merge_heads(const Tensor& x, std::size_t heads);
/// [B,T,D] -> [B,D] at step t.
Tensor select_step(const Tensor& x, std::size_t t);
/// T tensors [B,D] -> [B,T,D].
Tensor stack_steps(const std::vector<Tensor>& steps);
/// Columns [start, start+len) of a [B,N] tensor.
Tensor slice_columns(const Tensor& x, std::size_t start, std::size_t len);
/// [B,T,D] -> [B,D], mean over T.
Tensor mean_over_steps(const Tensor& x);
/// Adds the first T rows of table [Tmax,D] to every batch element of [B,T,D].
Tensor add_positional(const Tensor& x, const Tensor& table);

// Neural-network primitives.
/// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// x [B,Cin,L], weight [Cout,Cin,K], bias [Cout] -> [B,Cout,(L+2p-K)/s+1].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
/// Non-overlapping windows along the last axis of [B,C,L]; trailing remainder dropped.
Tensor max_pool1d(const Tensor& x, std::size_t size);
Tensor avg_pool1d(const Tensor& x, std::size_t size);
/// Inverted dropout: kept entries are scaled by 1/(1-p). Identity when !training.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

/// mean_b weight[label_b] * -log softmax(logits_b)[label_b]; logits [B,K].
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels,
                              std::span<const double> class_weights);

/// Runs reverse accumulation from a single-element tensor.
void backward(const Tensor& loss);

/// Clears parameter gradients, runs backward, and returns copies of the
/// gradient of each tensor in `wrt` (zeros for those the loss does not reach).
std::vector<std::vector<double>> gradients(const Tensor& loss, std::span<const Tensor> wrt);

}  // namespace fdi::ad
