#include "gtprune/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace gtprune {

namespace {

thread_local int g_no_grad_depth = 0;

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> value) {
    auto n = std::make_shared<TensorNode>();
    check(shape_numel(shape) == value.size(),
          "tensor: shape " + shape_str(shape) + " does not match " + std::to_string(value.size()) + " values");
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

bool any_needs_grad(std::initializer_list<const Tensor*> inputs) {
    if (g_no_grad_depth > 0) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && (t->node()->requires_grad || t->node()->needs_grad)) return true;
    return false;
}

Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::initializer_list<const Tensor*> inputs,
               std::function<void(TensorNode&)> backward_fn) {
    auto n = make_node(std::move(shape), std::move(value));
    n->op = op;
    if (any_needs_grad(inputs)) {
        n->needs_grad = true;
        for (const Tensor* t : inputs) n->parents.push_back(t->ptr());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

void require_2d(const Tensor& t, const char* who) {
    check(t.shape().size() == 2, std::string(who) + ": expected a 2-d tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    check(a.shape() == b.shape(),
          std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::vector<double> vals(shape_numel(shape), v);
    return from(std::move(shape), std::move(vals), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    auto n = make_node(std::move(shape), std::move(values));
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

std::size_t Tensor::rows() const {
    require_2d(*this, "rows");
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    require_2d(*this, "cols");
    return node_->shape[1];
}

double Tensor::item() const {
    check(numel() == 1, "item: tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    require_2d(*this, "at");
    return node_->value[r * node_->shape[1] + c];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], p = b.shape()[1];
    check(k == k2, "matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

    std::vector<double> out(m * p);
    {
        MapC am(a.value().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        MapC bm(b.value().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        MapM om(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
        om.noalias() = am * bm;
    }
    auto an = a.ptr();
    auto bn = b.ptr();
    return make_op("matmul", {m, p}, std::move(out), {&a, &b}, [an, bn, m, k, p](TensorNode& self) {
        MapC g(self.grad.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
        if (an->needs_grad) {
            an->ensure_grad();
            MapM ag(an->grad.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
            MapC bm(bn->value.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
            ag.noalias() += g * bm.transpose();
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            MapM bg(bn->grad.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
            MapC am(an->value.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
            bg.noalias() += am.transpose() * g;
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const std::size_t n = a.shape()[0], d = a.shape()[1];
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j * n + i] = a.value()[i * d + j];
    auto an = a.ptr();
    return make_op("transpose", {d, n}, std::move(out), {&a}, [an, n, d](TensorNode& self) {
        if (!an->needs_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) an->grad[i * d + j] += self.grad[j * n + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    auto an = a.ptr();
    auto bn = b.ptr();
    return make_op("add", a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    auto an = a.ptr();
    auto bn = b.ptr();
    return make_op("sub", a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    auto an = a.ptr();
    auto bn = b.ptr();
    return make_op("mul", a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    require_2d(x, "add_rowvec");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    check(v.numel() == d, "add_rowvec: vector length " + std::to_string(v.numel()) + " vs row width " + std::to_string(d));
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.value()[i * d + j] + v.value()[j];
    auto xn = x.ptr();
    auto vn = v.ptr();
    return make_op("add_rowvec", x.shape(), std::move(out), {&x, &v}, [xn, vn, n, d](TensorNode& self) {
        if (xn->needs_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (vn->needs_grad) {
            vn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) vn->grad[j] += self.grad[i * d + j];
        }
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    require_2d(x, "scale_rows");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    check(s.numel() == n, "scale_rows: scale length " + std::to_string(s.numel()) + " vs rows " + std::to_string(n));
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.value()[i * d + j] * s.value()[i];
    auto xn = x.ptr();
    auto sn = s.ptr();
    return make_op("scale_rows", x.shape(), std::move(out), {&x, &s}, [xn, sn, n, d](TensorNode& self) {
        if (xn->needs_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) xn->grad[i * d + j] += self.grad[i * d + j] * sn->value[i];
        }
        if (sn->needs_grad) {
            sn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += self.grad[i * d + j] * xn->value[i * d + j];
                sn->grad[i] += acc;
            }
        }
    });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * c;
    auto xn = x.ptr();
    return make_op("scale", x.shape(), std::move(out), {&x}, [xn, c](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * c;
    });
}

Tensor add_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] + c;
    auto xn = x.ptr();
    return make_op("add_scalar", x.shape(), std::move(out), {&x}, [xn](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    });
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.value()[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    auto xn = x.ptr();
    return make_op("gelu", x.shape(), std::move(out), {&x}, [xn](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double v = xn->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            xn->grad[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
    auto xn = x.ptr();
    return make_op("relu", x.shape(), std::move(out), {&x}, [xn](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (xn->value[i] > 0.0) xn->grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.value()[i]));
    auto xn = x.ptr();
    return make_op("sigmoid", x.shape(), std::move(out), {&x}, [xn](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = self.value[i];
            xn->grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor softmax_rows(const Tensor& x, const Tensor& additive_mask) {
    require_2d(x, "softmax_rows");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    const bool masked = additive_mask.defined();
    if (masked) require_same_shape(x, additive_mask, "softmax_rows mask");

    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        bool any_unmasked = false;
        for (std::size_t j = 0; j < d; ++j) {
            const bool is_masked = masked && additive_mask.value()[i * d + j] <= kNegMask * 0.5;
            if (!is_masked) any_unmasked = true;
            const double z = x.value()[i * d + j] + (masked ? additive_mask.value()[i * d + j] : 0.0);
            mx = std::max(mx, z);
        }
        check(any_unmasked, "softmax_rows: row " + std::to_string(i) + " is fully masked");
        double denom = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double z = x.value()[i * d + j] + (masked ? additive_mask.value()[i * d + j] : 0.0);
            out[i * d + j] = std::exp(z - mx);
            denom += out[i * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= denom;
    }
    auto xn = x.ptr();
    return make_op("softmax_rows", x.shape(), std::move(out), {&x}, [xn, n, d](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.value[i * d + j];
            for (std::size_t j = 0; j < d; ++j)
                xn->grad[i * d + j] += self.value[i * d + j] * (self.grad[i * d + j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_2d(x, "layer_norm");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    check(d >= 1, "layer_norm: d must be >= 1");
    check(eps > 0.0, "layer_norm: eps must be positive");
    check(gain.numel() == d && bias.numel() == d, "layer_norm: gain/bias length must equal row width");

    std::vector<double> out(n * d);
    std::vector<double> mean(n), inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += x.value()[i * d + j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x.value()[i * d + j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        mean[i] = mu;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (x.value()[i * d + j] - mu) * inv_std[i];
            out[i * d + j] = xh * gain.value()[j] + bias.value()[j];
        }
    }
    auto xn = x.ptr();
    auto gn = gain.ptr();
    auto bn = bias.ptr();
    return make_op("layer_norm", x.shape(), std::move(out), {&x, &gain, &bias},
                   [xn, gn, bn, n, d, mean, inv_std](TensorNode& self) {
        const double dd = static_cast<double>(d);
        for (std::size_t i = 0; i < n; ++i) {
            // xh recovered from saved statistics
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double xh = (xn->value[i * d + j] - mean[i]) * inv_std[i];
                const double dxh = self.grad[i * d + j] * gn->value[j];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh;
            }
            if (xn->needs_grad) {
                xn->ensure_grad();
                for (std::size_t j = 0; j < d; ++j) {
                    const double xh = (xn->value[i * d + j] - mean[i]) * inv_std[i];
                    const double dxh = self.grad[i * d + j] * gn->value[j];
                    xn->grad[i * d + j] += inv_std[i] * (dxh - sum_dxh / dd - xh * sum_dxh_xh / dd);
                }
            }
            if (gn->needs_grad) {
                gn->ensure_grad();
                for (std::size_t j = 0; j < d; ++j) {
                    const double xh = (xn->value[i * d + j] - mean[i]) * inv_std[i];
                    gn->grad[j] += self.grad[i * d + j] * xh;
                }
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (std::size_t j = 0; j < d; ++j) bn->grad[j] += self.grad[i * d + j];
            }
        }
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    require_2d(x, "gather_rows");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    std::vector<double> out(idx.size() * d);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        check(idx[r] < n, "gather_rows: index " + std::to_string(idx[r]) + " out of range for " + std::to_string(n) + " rows");
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.value()[idx[r] * d + j];
    }
    auto xn = x.ptr();
    return make_op("gather_rows", {idx.size(), d}, std::move(out), {&x}, [xn, idx, d](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < d; ++j) xn->grad[idx[r] * d + j] += self.grad[r * d + j];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_cols: no parts");
    const std::size_t n = parts[0].shape()[0];
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        check(p.shape()[0] == n, "concat_cols: row count mismatch");
        total += p.shape()[1];
    }
    std::vector<double> out(n * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t pd = p.shape()[1];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < pd; ++j) out[i * total + off + j] = p.value()[i * pd + j];
        off += pd;
    }
    auto node = make_node({n, total}, std::move(out));
    node->op = "concat_cols";
    bool needs = false;
    if (g_no_grad_depth == 0)
        for (const auto& p : parts)
            if (p.node()->needs_grad) needs = true;
    if (needs) {
        node->needs_grad = true;
        std::vector<std::shared_ptr<TensorNode>> ps;
        std::vector<std::size_t> widths;
        for (const auto& p : parts) {
            ps.push_back(p.ptr());
            widths.push_back(p.shape()[1]);
        }
        node->parents = ps;
        node->backward_fn = [ps, widths, n, total](TensorNode& self) {
            std::size_t off2 = 0;
            for (std::size_t k = 0; k < ps.size(); ++k) {
                if (ps[k]->needs_grad) {
                    ps[k]->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < widths[k]; ++j)
                            ps[k]->grad[i * widths[k] + j] += self.grad[i * total + off2 + j];
                }
                off2 += widths[k];
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_rows: no parts");
    const std::size_t d = parts[0].shape()[1];
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        check(p.shape()[1] == d, "concat_rows: column count mismatch");
        total += p.shape()[0];
    }
    std::vector<double> out;
    out.reserve(total * d);
    for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
    auto node = make_node({total, d}, std::move(out));
    node->op = "concat_rows";
    bool needs = false;
    if (g_no_grad_depth == 0)
        for (const auto& p : parts)
            if (p.node()->needs_grad) needs = true;
    if (needs) {
        node->needs_grad = true;
        std::vector<std::shared_ptr<TensorNode>> ps;
        std::vector<std::size_t> heights;
        for (const auto& p : parts) {
            ps.push_back(p.ptr());
            heights.push_back(p.shape()[0]);
        }
        node->parents = ps;
        node->backward_fn = [ps, heights, d](TensorNode& self) {
            std::size_t row0 = 0;
            for (std::size_t k = 0; k < ps.size(); ++k) {
                if (ps[k]->needs_grad) {
                    ps[k]->ensure_grad();
                    for (std::size_t i = 0; i < heights[k]; ++i)
                        for (std::size_t j = 0; j < d; ++j)
                            ps[k]->grad[i * d + j] += self.grad[(row0 + i) * d + j];
                }
                row0 += heights[k];
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    auto xn = x.ptr();
    return make_op("sum_all", {1}, {s}, {&x}, [xn](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (double& g : xn->grad) g += self.grad[0];
    });
}

Tensor mean_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    auto xn = x.ptr();
    return make_op("mean_all", {1}, {s * inv}, {&x}, [xn, inv](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (double& g : xn->grad) g += self.grad[0] * inv;
    });
}

Tensor colsum(const Tensor& x) {
    require_2d(x, "colsum");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += x.value()[i * d + j];
    auto xn = x.ptr();
    return make_op("colsum", {std::size_t{1}, d}, std::move(out), {&x}, [xn, n, d](TensorNode& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) xn->grad[i * d + j] += self.grad[j];
    });
}

Tensor detach(const Tensor& x) {
    return Tensor::from(x.shape(), x.value(), false);
}

Tensor straight_through(const Tensor& soft, const std::vector<double>& hard) {
    check(soft.numel() == hard.size(), "straight_through: size mismatch");
    auto sn = soft.ptr();
    return make_op("straight_through", soft.shape(), hard, {&soft}, [sn](TensorNode& self) {
        if (!sn->needs_grad) return;
        sn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) sn->grad[i] += self.grad[i];
    });
}

Tensor apply_mask_st(const Tensor& w, const std::vector<double>& mask) {
    check(w.numel() == mask.size(), "apply_mask_st: mask size mismatch");
    std::vector<double> out(w.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.value()[i] * mask[i];
    auto wn = w.ptr();
    return make_op("apply_mask_st", w.shape(), std::move(out), {&w}, [wn](TensorNode& self) {
        if (!wn->needs_grad) return;
        wn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) wn->grad[i] += self.grad[i];
    });
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels, Reduction reduction) {
    require_2d(logits, "cross_entropy_with_logits");
    const std::size_t n = logits.shape()[0], c = logits.shape()[1];
    check(labels.size() == n, "cross_entropy_with_logits: label count mismatch");
    for (int y : labels)
        check(y >= 0 && static_cast<std::size_t>(y) < c,
              "cross_entropy_with_logits: label " + std::to_string(y) + " out of range for " + std::to_string(c) + " classes");

    std::vector<double> probs(n * c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits.value()[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.value()[i * c + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[i * c + j] = std::exp(logits.value()[i * c + j] - mx);
            denom += probs[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= denom;
        total += (mx + std::log(denom)) - logits.value()[i * c + static_cast<std::size_t>(labels[i])];
    }
    const double norm = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
    auto ln = logits.ptr();
    return make_op("cross_entropy", {1}, {total * norm}, {&logits},
                   [ln, labels, probs, n, c, norm](TensorNode& self) {
        if (!ln->needs_grad) return;
        ln->ensure_grad();
        const double g = self.grad[0] * norm;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const double onehot = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
                ln->grad[i * c + j] += g * (probs[i * c + j] - onehot);
            }
    });
}

void backward(const Tensor& loss) {
    check(loss.defined(), "backward: undefined tensor");
    check(loss.numel() == 1, "backward: loss must be scalar, got shape " + shape_str(loss.shape()));

    // Iterative post-order DFS; the resulting order is deterministic
    // because parent lists are ordered.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node(), 0});
    visited.insert(loss.node());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    // Intermediates restart from zero each call; leaf (requires_grad)
    // buffers persist so repeated calls accumulate.
    for (TensorNode* n : topo) {
        if (n->requires_grad) {
            n->ensure_grad();
        } else {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    loss.node()->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn && n->needs_grad) n->backward_fn(*n);
    }
}

void zero_grad(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) p.node()->grad.assign(p.numel(), 0.0);
}

}  // namespace gtprune
