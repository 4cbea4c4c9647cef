#include "fdi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "fdi/errors.hpp"
#include "fdi/rng.hpp"

namespace fdi::ad {

namespace {

thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

void require(bool cond, const std::string& msg) {
    if (!cond) throw ArgumentError(msg);
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// Creates the output node; records provenance only when some input tracks
// gradients and recording is enabled.
Tensor make_output(Shape shape, std::vector<double> value, const char* op,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    if (t_grad_enabled && any_requires_grad(inputs)) {
        node->requires_grad = true;
        for (const Tensor* t : inputs) node->parents.push_back(t->ptr());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

// Gradient buffer of an input, or nullptr when it does not track gradients.
double* gbuf(const NodePtr& n) { return n->requires_grad ? n->grad_buffer().data() : nullptr; }

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T. B is transposed once so the inner loop is a
// contiguous axpy, like gemm_nn.
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
    thread_local std::vector<double> bt;
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn(m, k, n, a, bt.data(), c);
}

// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a + p * m;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = ap[i];
            if (av == 0.0) continue;
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

template <typename F, typename D>
Tensor unary(const Tensor& x, const char* op, F f, D dfdy_from_xy) {
    std::vector<double> out(x.size());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    NodePtr xn = x.ptr();
    return make_output(x.shape(), std::move(out), op, {&x}, [xn, dfdy_from_xy](Node& self) {
        double* gx = gbuf(xn);
        if (!gx) return;
        for (std::size_t i = 0; i < self.value.size(); ++i)
            gx[i] += self.grad[i] * dfdy_from_xy(xn->value[i], self.value[i]);
    });
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
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

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    require(numel(shape) == values.size(),
            "tensor shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                " values");
    for (std::size_t d : shape) require(d > 0, "tensor dimensions must be positive");
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    t.node_->op = "parameter";
    return t;
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

double Tensor::item() const {
    require(size() == 1, "item() requires a single-element tensor, got " + shape_str(shape()));
    return node_->value[0];
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    NodePtr an = a.ptr(), bn = b.ptr();
    return make_output(a.shape(), std::move(out), "add", {&a, &b}, [an, bn](Node& self) {
        if (double* g = gbuf(an))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        if (double* g = gbuf(bn))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    NodePtr an = a.ptr(), bn = b.ptr();
    return make_output(a.shape(), std::move(out), "mul", {&a, &b}, [an, bn](Node& self) {
        if (double* g = gbuf(an))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bn->value[i];
        if (double* g = gbuf(bn))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * an->value[i];
    });
}

Tensor scale(const Tensor& a, double s) {
    return unary(
        a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    NodePtr xn = x.ptr();
    return make_output({1}, {s}, "sum", {&x}, [xn](Node& self) {
        if (double* g = gbuf(xn))
            for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    gemm_nn(m, k, n, a.values().data(), b.values().data(), out.data());
    NodePtr an = a.ptr(), bn = b.ptr();
    return make_output({m, n}, std::move(out), "matmul", {&a, &b}, [an, bn, m, k, n](Node& self) {
        if (double* g = gbuf(an)) gemm_nt(m, n, k, self.grad.data(), bn->value.data(), g);
        if (double* g = gbuf(bn)) gemm_tn(k, m, n, an->value.data(), self.grad.data(), g);
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require(weight.rank() == 2, "linear: weight must be rank 2");
    const std::size_t k = weight.dim(0), n = weight.dim(1);
    require(x.rank() >= 1 && x.shape().back() == k,
            "linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                shape_str(weight.shape()));
    require(bias.rank() == 1 && bias.dim(0) == n, "linear: bias must have " + std::to_string(n) + " entries");
    const std::size_t m = x.size() / k;
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) std::copy(bias.values().begin(), bias.values().end(), out.begin() + i * n);
    gemm_nn(m, k, n, x.values().data(), weight.values().data(), out.data());
    Shape shape = x.shape();
    shape.back() = n;
    NodePtr xn = x.ptr(), wn = weight.ptr(), bn = bias.ptr();
    return make_output(std::move(shape), std::move(out), "linear", {&x, &weight, &bias},
                       [xn, wn, bn, m, k, n](Node& self) {
                           if (double* g = gbuf(xn)) gemm_nt(m, n, k, self.grad.data(), wn->value.data(), g);
                           if (double* g = gbuf(wn)) gemm_tn(k, m, n, xn->value.data(), self.grad.data(), g);
                           if (double* g = gbuf(bn))
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                       });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0), "bmm: rank-3 inputs with equal batch required");
    const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
    require((transpose_b ? b.dim(2) : b.dim(1)) == k,
            "bmm: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(g * m * n, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::size_t i = 0; i < g; ++i) {
        if (transpose_b)
            gemm_nt(m, k, n, av + i * m * k, bv + i * n * k, out.data() + i * m * n);
        else
            gemm_nn(m, k, n, av + i * m * k, bv + i * k * n, out.data() + i * m * n);
    }
    NodePtr an = a.ptr(), bn = b.ptr();
    return make_output({g, m, n}, std::move(out), "bmm", {&a, &b},
                       [an, bn, g, m, k, n, transpose_b](Node& self) {
                           double* ga = gbuf(an);
                           double* gb = gbuf(bn);
                           for (std::size_t i = 0; i < g; ++i) {
                               const double* dc = self.grad.data() + i * m * n;
                               const double* ai = an->value.data() + i * m * k;
                               const double* bi = bn->value.data() + i * k * n;
                               if (transpose_b) {
                                   // C = A B^T, B is [N,K]
                                   if (ga) gemm_nn(m, n, k, dc, bi, ga + i * m * k);
                                   if (gb) gemm_tn(n, m, k, dc, ai, gb + i * n * k);
                               } else {
                                   if (ga) gemm_nt(m, n, k, dc, bi, ga + i * m * k);
                                   if (gb) gemm_tn(k, m, n, ai, dc, gb + i * k * n);
                               }
                           }
                       });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(numel(shape) == x.size(), "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    std::vector<double> out(x.values().begin(), x.values().end());
    NodePtr xn = x.ptr();
    return make_output(std::move(shape), std::move(out), "reshape", {&x}, [xn](Node& self) {
        if (double* g = gbuf(xn))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor swap_last_axes(const Tensor& x) {
    require(x.rank() == 3, "swap_last_axes: rank-3 input required");
    const std::size_t b = x.dim(0), r = x.dim(1), c = x.dim(2);
    std::vector<double> out(x.size());
    const double* xv = x.values().data();
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[n * r * c + j * r + i] = xv[n * r * c + i * c + j];
    NodePtr xn = x.ptr();
    return make_output({b, c, r}, std::move(out), "swap_last_axes", {&x}, [xn, b, r, c](Node& self) {
        double* g = gbuf(xn);
        if (!g) return;
        for (std::size_t n = 0; n < b; ++n)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[n * r * c + i * c + j] += self.grad[n * r * c + j * r + i];
    });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
    require(x.rank() == 3 && heads > 0 && x.dim(2) % heads == 0, "split_heads: width not divisible by heads");
    const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2) / heads;
    std::vector<double> out(x.size());
    const double* xv = x.values().data();
    // out[(n*H+h), s, e] = x[n, s, h*d+e]
    auto src = [=](std::size_t n, std::size_t h, std::size_t s) { return (n * t + s) * heads * d + h * d; };
    auto dst = [=](std::size_t n, std::size_t h, std::size_t s) { return ((n * heads + h) * t + s) * d; };
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < t; ++s) std::copy_n(xv + src(n, h, s), d, out.data() + dst(n, h, s));
    NodePtr xn = x.ptr();
    return make_output({b * heads, t, d}, std::move(out), "split_heads", {&x}, [xn, b, heads, t, d, src, dst](Node& self) {
        double* g = gbuf(xn);
        if (!g) return;
        for (std::size_t n = 0; n < b; ++n)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t s = 0; s < t; ++s)
                    for (std::size_t e = 0; e < d; ++e) g[src(n, h, s) + e] += self.grad[dst(n, h, s) + e];
    });
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
    require(x.rank() == 3 && heads > 0 && x.dim(0) % heads == 0, "merge_heads: batch not divisible by heads");
    const std::size_t b = x.dim(0) / heads, t = x.dim(1), d = x.dim(2);
    std::vector<double> out(x.size());
    const double* xv = x.values().data();
    auto merged = [=](std::size_t n, std::size_t h, std::size_t s) { return (n * t + s) * heads * d + h * d; };
    auto split = [=](std::size_t n, std::size_t h, std::size_t s) { return ((n * heads + h) * t + s) * d; };
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < t; ++s) std::copy_n(xv + split(n, h, s), d, out.data() + merged(n, h, s));
    NodePtr xn = x.ptr();
    return make_output({b, t, heads * d}, std::move(out), "merge_heads", {&x},
                       [xn, b, heads, t, d, merged, split](Node& self) {
                           double* g = gbuf(xn);
                           if (!g) return;
                           for (std::size_t n = 0; n < b; ++n)
                               for (std::size_t h = 0; h < heads; ++h)
                                   for (std::size_t s = 0; s < t; ++s)
                                       for (std::size_t e = 0; e < d; ++e)
                                           g[split(n, h, s) + e] += self.grad[merged(n, h, s) + e];
                       });
}

Tensor select_step(const Tensor& x, std::size_t step) {
    require(x.rank() == 3 && step < x.dim(1), "select_step: step out of range");
    const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
    std::vector<double> out(b * d);
    for (std::size_t n = 0; n < b; ++n) std::copy_n(x.values().data() + (n * t + step) * d, d, out.data() + n * d);
    NodePtr xn = x.ptr();
    return make_output({b, d}, std::move(out), "select_step", {&x}, [xn, b, t, d, step](Node& self) {
        double* g = gbuf(xn);
        if (!g) return;
        for (std::size_t n = 0; n < b; ++n)
            for (std::size_t e = 0; e < d; ++e) g[(n * t + step) * d + e] += self.grad[n * d + e];
    });
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
    require(!steps.empty() && steps.front().rank() == 2, "stack_steps: non-empty list of [B,D] tensors required");
    const std::size_t b = steps.front().dim(0), d = steps.front().dim(1), t = steps.size();
    std::vector<double> out(b * t * d);
    bool track = false;
    for (std::size_t s = 0; s < t; ++s) {
        require(steps[s].shape() == steps.front().shape(), "stack_steps: ragged steps");
        for (std::size_t n = 0; n < b; ++n)
            std::copy_n(steps[s].values().data() + n * d, d, out.data() + (n * t + s) * d);
        track = track || steps[s].requires_grad();
    }
    auto node = std::make_shared<Node>();
    node->shape = {b, t, d};
    node->value = std::move(out);
    node->op = "stack_steps";
    if (t_grad_enabled && track) {
        node->requires_grad = true;
        for (const Tensor& s : steps) node->parents.push_back(s.ptr());
        node->backward_fn = [b, t, d](Node& self) {
            for (std::size_t s = 0; s < t; ++s) {
                double* g = gbuf(self.parents[s]);
                if (!g) continue;
                for (std::size_t n = 0; n < b; ++n)
                    for (std::size_t e = 0; e < d; ++e) g[n * d + e] += self.grad[(n * t + s) * d + e];
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor slice_columns(const Tensor& x, std::size_t start, std::size_t len) {
    require(x.rank() == 2 && len > 0 && start + len <= x.dim(1), "slice_columns: range out of bounds");
    const std::size_t b = x.dim(0), n = x.dim(1);
    std::vector<double> out(b * len);
    for (std::size_t i = 0; i < b; ++i) std::copy_n(x.values().data() + i * n + start, len, out.data() + i * len);
    NodePtr xn = x.ptr();
    return make_output({b, len}, std::move(out), "slice_columns", {&x}, [xn, b, n, start, len](Node& self) {
        double* g = gbuf(xn);
        if (!g) return;
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < len; ++j) g[i * n + start + j] += self.grad[i * len + j];
    });
}

Tensor mean_over_steps(const Tensor& x) {
    require(x.rank() == 3, "mean_over_steps: rank-3 input required");
    const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
    std::vector<double> out(b * d, 0.0);
    const double inv = 1.0 / static_cast<double>(t);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t e = 0; e < d; ++e) out[n * d + e] += inv * x.values()[(n * t + s) * d + e];
    NodePtr xn = x.ptr();
    return make_output({b, d}, std::move(out), "mean_over_steps", {&x}, [xn, b, t, d, inv](Node& self) {
        double* g = gbuf(xn);
        if (!g) return;
        for (std::size_t n = 0; n < b; ++n)
            for (std::size_t s = 0; s < t; ++s)
                for (std::size_t e = 0; e < d; ++e) g[(n * t + s) * d + e] += inv * self.grad[n * d + e];
    });
}

Tensor add_positional(const Tensor& x, const Tensor& table) {
    require(x.rank() == 3 && table.rank() == 2 && table.dim(1) == x.dim(2),
            "add_positional: table " + shape_str(table.shape()) + " incompatible with " + shape_str(x.shape()));
    const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
    if (t > table.dim(0))
        throw ConfigError("sequence of " + std::to_string(t) + " tokens exceeds positional table of " +
                          std::to_string(table.dim(0)));
    std::vector<double> out(x.values().begin(), x.values().end());
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < t * d; ++i) out[n * t * d + i] += table.values()[i];
    NodePtr xn = x.ptr(), tn = table.ptr();
    return make_output(x.shape(), std::move(out), "add_positional", {&x, &table}, [xn, tn, b, t, d](Node& self) {
        if (double* g = gbuf(xn))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        if (double* g = gbuf(tn))
            for (std::size_t n = 0; n < b; ++n)
                for (std::size_t i = 0; i < t * d; ++i) g[i] += self.grad[n * t * d + i];
    });
}

Tensor softmax(const Tensor& x) {
    require(x.rank() >= 1, "softmax: empty shape");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    std::vector<double> out(x.size());
    const double* xv = x.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv + r * n;
        double* yr = out.data() + r * n;
        const double mx = *std::max_element(xr, xr + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (yr[j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
    }
    NodePtr xn = x.ptr();
    return make_output(x.shape(), std::move(out), "softmax", {&x}, [xn, rows, n](Node& self) {
        double* g = gbuf(xn);
        if (!g) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * n;
            const double* dy = self.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t d = x.shape().back();
    require(gamma.size() == d && beta.size() == d, "layer_norm: gamma/beta width mismatch");
    const std::size_t rows = x.size() / d;
    std::vector<double> out(x.size());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    const double* xv = x.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mu) * rs;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = gamma.values()[j] * h + beta.values()[j];
        }
    }
    NodePtr xn = x.ptr(), gn = gamma.ptr(), bn = beta.ptr();
    return make_output(x.shape(), std::move(out), "layer_norm", {&x, &gamma, &beta},
                       [xn, gn, bn, xhat, rstd, rows, d](Node& self) {
                           double* gx = gbuf(xn);
                           double* gg = gbuf(gn);
                           double* gb = gbuf(bn);
                           std::vector<double> dxhat(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* dy = self.grad.data() + r * d;
                               const double* h = xhat->data() + r * d;
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t j = 0; j < d; ++j) {
                                   dxhat[j] = dy[j] * gn->value[j];
                                   m1 += dxhat[j];
                                   m2 += dxhat[j] * h[j];
                                   if (gg) gg[j] += dy[j] * h[j];
                                   if (gb) gb[j] += dy[j];
                               }
                               if (!gx) continue;
                               m1 /= static_cast<double>(d);
                               m2 /= static_cast<double>(d);
                               for (std::size_t j = 0; j < d; ++j)
                                   gx[r * d + j] += (*rstd)[r] * (dxhat[j] - m1 - h[j] * m2);
                           }
                       });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require(x.rank() == 3 && weight.rank() == 3 && weight.dim(1) == x.dim(1),
            "conv1d: input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(weight.shape()));
    require(stride > 0, "conv1d: stride must be positive");
    const std::size_t b = x.dim(0), cin = x.dim(1), len = x.dim(2);
    const std::size_t cout = weight.dim(0), k = weight.dim(2);
    require(bias.size() == cout, "conv1d: bias width mismatch");
    if (len + 2 * padding < k)
        throw ConfigError("conv1d: kernel " + std::to_string(k) + " longer than padded input " +
                          std::to_string(len + 2 * padding));
    const std::size_t lout = (len + 2 * padding - k) / stride + 1;
    const std::size_t rows = cin * k;
    // im2col: cols[n][(c*k + q), t] = x[n, c, t*stride + q - padding], 0 outside.
    auto cols = std::make_shared<std::vector<double>>(b * rows * lout, 0.0);
    const double* xv = x.values().data();
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t q = 0; q < k; ++q) {
                double* dst = cols->data() + (n * rows + c * k + q) * lout;
                const double* xc = xv + (n * cin + c) * len;
                for (std::size_t t = 0; t < lout; ++t) {
                    const std::ptrdiff_t p =
                        static_cast<std::ptrdiff_t>(t * stride + q) - static_cast<std::ptrdiff_t>(padding);
                    if (p >= 0 && p < static_cast<std::ptrdiff_t>(len)) dst[t] = xc[p];
                }
            }
    std::vector<double> out(b * cout * lout);
    for (std::size_t n = 0; n < b; ++n) {
        double* yn = out.data() + n * cout * lout;
        for (std::size_t o = 0; o < cout; ++o) std::fill(yn + o * lout, yn + (o + 1) * lout, bias.values()[o]);
        gemm_nn(cout, rows, lout, weight.values().data(), cols->data() + n * rows * lout, yn);
    }
    NodePtr xn = x.ptr(), wn = weight.ptr(), bn = bias.ptr();
    return make_output({b, cout, lout}, std::move(out), "conv1d", {&x, &weight, &bias},
                       [=](Node& self) {
                           double* gx = gbuf(xn);
                           double* gw = gbuf(wn);
                           double* gb = gbuf(bn);
                           std::vector<double> dcol(gx ? rows * lout : 0);
                           for (std::size_t n = 0; n < b; ++n) {
                               const double* dy = self.grad.data() + n * cout * lout;
                               if (gb)
                                   for (std::size_t o = 0; o < cout; ++o)
                                       for (std::size_t t = 0; t < lout; ++t) gb[o] += dy[o * lout + t];
                               if (gw) gemm_nt(cout, lout, rows, dy, cols->data() + n * rows * lout, gw);
                               if (!gx) continue;
                               std::fill(dcol.begin(), dcol.end(), 0.0);
                               gemm_tn(rows, cout, lout, wn->value.data(), dy, dcol.data());
                               for (std::size_t c = 0; c < cin; ++c)
                                   for (std::size_t q = 0; q < k; ++q) {
                                       const double* src = dcol.data() + (c * k + q) * lout;
                                       double* gxc = gx + (n * cin + c) * len;
                                       for (std::size_t t = 0; t < lout; ++t) {
                                           const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(t * stride + q) -
                                                                    static_cast<std::ptrdiff_t>(padding);
                                           if (p >= 0 && p < static_cast<std::ptrdiff_t>(len)) gxc[p] += src[t];
                                       }
                                   }
                           }
                       });
}

Tensor max_pool1d(const Tensor& x, std::size_t size) {
    require(x.rank() == 3 && size > 0, "max_pool1d: rank-3 input and positive size required");
    const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2), lout = len / size;
    if (lout == 0)
        throw ConfigError("max_pool1d: pooling " + std::to_string(size) + " collapses length " + std::to_string(len));
    std::vector<double> out(rows * lout);
    auto arg = std::make_shared<std::vector<std::size_t>>(rows * lout);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < lout; ++t) {
            std::size_t best = r * len + t * size;
            for (std::size_t q = 1; q < size; ++q) {
                const std::size_t i = r * len + t * size + q;
                if (x.values()[i] > x.values()[best]) best = i;
            }
            (*arg)[r * lout + t] = best;
            out[r * lout + t] = x.values()[best];
        }
    NodePtr xn = x.ptr();
    return make_output({x.dim(0), x.dim(1), lout}, std::move(out), "max_pool1d", {&x}, [xn, arg](Node& self) {
        double* g = gbuf(xn);
        if (!g) return;
        for (std::size_t i = 0; i < arg->size(); ++i) g[(*arg)[i]] += self.grad[i];
    });
}

Tensor avg_pool1d(const Tensor& x, std::size_t size) {
    require(x.rank() == 3 && size > 0, "avg_pool1d: rank-3 input and positive size required");
    const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2), lout = len / size;
    if (lout == 0)
        throw ConfigError("avg_pool1d: pooling " + std::to_string(size) + " collapses length " + std::to_string(len));
    const double inv = 1.0 / static_cast<double>(size);
    std::vector<double> out(rows * lout, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < lout; ++t)
            for (std::size_t q = 0; q < size; ++q) out[r * lout + t] += inv * x.values()[r * len + t * size + q];
    NodePtr xn = x.ptr();
    return make_output({x.dim(0), x.dim(1), lout}, std::move(out), "avg_pool1d", {&x},
                       [xn, rows, len, lout, size, inv](Node& self) {
                           double* g = gbuf(xn);
                           if (!g) return;
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t t = 0; t < lout; ++t)
                                   for (std::size_t q = 0; q < size; ++q)
                                       g[r * len + t * size + q] += inv * self.grad[r * lout + t];
                       });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    require(p >= 0.0 && p < 1.0, "dropout: probability must be in [0,1)");
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
        out[i] = x.values()[i] * (*mask)[i];
    }
    NodePtr xn = x.ptr();
    return make_output(x.shape(), std::move(out), "dropout", {&x}, [xn, mask](Node& self) {
        if (double* g = gbuf(xn))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    });
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels,
                              std::span<const double> class_weights) {
    require(logits.rank() == 2, "weighted_cross_entropy: logits must be [batch, classes]");
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    if (labels.empty()) throw ArgumentError("weighted_cross_entropy: empty batch");
    require(labels.size() == b, "weighted_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                                    std::to_string(b));
    require(class_weights.size() == k, "weighted_cross_entropy: expected " + std::to_string(k) + " class weights");
    for (double w : class_weights) require(w > 0.0 && std::isfinite(w), "weighted_cross_entropy: weights must be positive");
    for (double v : logits.values())
        if (!std::isfinite(v)) throw NumericError("weighted_cross_entropy: non-finite logit");
    for (int l : labels) require(l >= 0 && static_cast<std::size_t>(l) < k, "weighted_cross_entropy: label out of range");

    auto probs = std::make_shared<std::vector<double>>(b * k);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* z = logits.values().data() + i * k;
        const double mx = *std::max_element(z, z + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += ((*probs)[i * k + j] = std::exp(z[j] - mx));
        for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] /= s;
        const auto l = static_cast<std::size_t>(labels[i]);
        loss += class_weights[l] * (mx + std::log(s) - z[l]);
    }
    loss /= static_cast<double>(b);
    std::vector<int> lab(labels.begin(), labels.end());
    std::vector<double> w(class_weights.begin(), class_weights.end());
    NodePtr ln = logits.ptr();
    return make_output({1}, {loss}, "weighted_cross_entropy", {&logits},
                       [ln, probs, lab = std::move(lab), w = std::move(w), b, k](Node& self) {
                           double* g = gbuf(ln);
                           if (!g) return;
                           const double up = self.grad[0] / static_cast<double>(b);
                           for (std::size_t i = 0; i < b; ++i) {
                               const auto l = static_cast<std::size_t>(lab[i]);
                               const double c = up * w[l];
                               for (std::size_t j = 0; j < k; ++j)
                                   g[i * k + j] += c * ((*probs)[i * k + j] - (j == l ? 1.0 : 0.0));
                           }
                       });
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ArgumentError("backward: loss must be a single-element tensor");
    if (!loss.requires_grad()) throw ArgumentError("backward: loss was produced without gradient tracking");

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
    seen.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order)
        if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
    loss.node().grad_buffer()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

std::vector<std::vector<double>> gradients(const Tensor& loss, std::span<const Tensor> wrt) {
    for (const Tensor& t : wrt) t.node().grad.clear();
    backward(loss);
    std::vector<std::vector<double>> out;
    out.reserve(wrt.size());
    for (const Tensor& t : wrt) out.push_back(t.grad());
    return out;
}

}  // namespace fdi::ad
