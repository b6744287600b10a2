#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "gtprune/common.hpp"

namespace gtprune {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

// One node of the reverse-mode trace: the op tag, parent references, and
// whatever the backward closure captured from the forward pass.
struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;  // leaf parameter: grads persist and accumulate
    bool needs_grad = false;     // reachable from some requires_grad leaf
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Value-semantics handle over a trace node. Copies share the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::vector<double>& value() { return node_->value; }
    const std::vector<double>& value() const { return node_->value; }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<double>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    bool requires_grad() const { return node_->requires_grad; }
    double item() const;
    double at(std::size_t r, std::size_t c) const;

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& ptr() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// While an instance is alive, newly created ops record no parents/closures;
// forwards run as pure evaluation (used by eval passes).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Additive-mask surrogate for -inf; finite so gradients stay finite.
constexpr double kNegMask = -1e9;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& x, const Tensor& v);   // [n,d] + [d], broadcast over rows
Tensor scale_rows(const Tensor& x, const Tensor& s);   // row i of x scaled by s[i]
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x, const Tensor& additive_mask = Tensor());
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor colsum(const Tensor& x);  // [n,d] -> [1,d]
Tensor detach(const Tensor& x);

// Forward takes the hard values; backward passes the incoming gradient to
// `soft` unchanged (straight-through estimator).
Tensor straight_through(const Tensor& soft, const std::vector<double>& hard);

// Forward = w, elementwise-masked; backward = identity into w (the dense
// gradient, recorded for regrowth; the optimizer is responsible for not
// updating masked entries).
Tensor apply_mask_st(const Tensor& w, const std::vector<double>& mask);

enum class Reduction { mean, sum };
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels,
                                 Reduction reduction = Reduction::mean);

void backward(const Tensor& loss);
void zero_grad(const std::vector<Tensor>& params);

}  // namespace gtprune
