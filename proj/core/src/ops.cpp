#include "diffaug/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "diffaug/errors.hpp"
#include "diffaug/parallel.hpp"

namespace diffaug::ops {

using detail::Node;

namespace {

[[noreturn]] void dim_error(const char* op, const std::string& detail) {
    throw DimensionError(std::string(op) + ": " + detail);
}

void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(op) +
                               ": non-finite value in output");
        }
    }
}

// Builds the output node. When grad is disabled or no parent needs it, the
// result is a plain leaf and the closure is dropped.
Tensor make_op(const char* name, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backprop) {
    check_finite(name, value);
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const auto& p : parents) n->parents.push_back(p.node_ptr());
        n->backprop = std::move(backprop);
    }
    return Tensor::wrap(std::move(n));
}

bool wants_grad(Node& out, size_t parent) {
    return out.parents[parent]->requires_grad;
}

std::vector<double>& pgrad(Node& out, size_t parent) {
    return out.parents[parent]->ensure_grad();
}

const std::vector<double>& pval(Node& out, size_t parent) {
    return out.parents[parent]->value;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        dim_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
}

}  // namespace

void mat_mul_raw(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n, bool trans_a, bool trans_b,
                 bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    if (!trans_a && !trans_b) {
        parallel_for(m, [&](size_t i0, size_t i1) {
            for (size_t i = i0; i < i1; ++i) {
                const double* ar = a + i * k;
                double* cr = c + i * n;
                for (size_t p = 0; p < k; ++p) {
                    double av = ar[p];
                    const double* br = b + p * n;
                    for (size_t j = 0; j < n; ++j) cr[j] += av * br[j];
                }
            }
        });
    } else if (!trans_a && trans_b) {
        // b is (n, k); c[i,j] += dot(a[i,:], b[j,:])
        parallel_for(m, [&](size_t i0, size_t i1) {
            for (size_t i = i0; i < i1; ++i) {
                const double* ar = a + i * k;
                double* cr = c + i * n;
                for (size_t j = 0; j < n; ++j) {
                    const double* br = b + j * k;
                    double acc = 0.0;
                    for (size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
                    cr[j] += acc;
                }
            }
        });
    } else if (trans_a && !trans_b) {
        // a is (k, m); c[i,j] += sum_p a[p,i] * b[p,j]
        parallel_for(m, [&](size_t i0, size_t i1) {
            for (size_t p = 0; p < k; ++p) {
                const double* ar = a + p * m;
                const double* br = b + p * n;
                for (size_t i = i0; i < i1; ++i) {
                    double av = ar[i];
                    double* cr = c + i * n;
                    for (size_t j = 0; j < n; ++j) cr[j] += av * br[j];
                }
            }
        });
    } else {
        // a is (k, m), b is (n, k)
        parallel_for(m, [&](size_t i0, size_t i1) {
            for (size_t i = i0; i < i1; ++i) {
                double* cr = c + i * n;
                for (size_t j = 0; j < n; ++j) {
                    const double* br = b + j * k;
                    double acc = 0.0;
                    for (size_t p = 0; p < k; ++p) acc += a[p * m + i] * br[p];
                    cr[j] += acc;
                }
            }
        });
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_op("add", a.shape(), std::move(out), {a, b}, [](Node& o) {
        for (size_t p = 0; p < 2; ++p) {
            if (!wants_grad(o, p)) continue;
            auto& g = pgrad(o, p);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_op("sub", a.shape(), std::move(out), {a, b}, [](Node& o) {
        if (wants_grad(o, 0)) {
            auto& g = pgrad(o, 0);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (wants_grad(o, 1)) {
            auto& g = pgrad(o, 1);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_op("mul", a.shape(), std::move(out), {a, b}, [](Node& o) {
        if (wants_grad(o, 0)) {
            auto& g = pgrad(o, 0);
            const auto& bv2 = pval(o, 1);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bv2[i];
        }
        if (wants_grad(o, 1)) {
            auto& g = pgrad(o, 1);
            const auto& av2 = pval(o, 0);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * av2[i];
        }
    });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.size());
    const auto& xv = x.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
    return make_op("scale", x.shape(), std::move(out), {x}, [c](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        for (size_t i = 0; i < g.size(); ++i) g[i] += c * o.grad[i];
    });
}

Tensor add_const(const Tensor& x, double c) {
    std::vector<double> out(x.size());
    const auto& xv = x.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c;
    return make_op("add_const", x.shape(), std::move(out), {x}, [](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

Tensor exp(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto& xv = x.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
    return make_op("exp", x.shape(), std::move(out), {x}, [](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.value[i];
    });
}

Tensor silu(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto& xv = x.value();
    for (size_t i = 0; i < out.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-xv[i]));
        out[i] = xv[i] * s;
    }
    return make_op("silu", x.shape(), std::move(out), {x}, [](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        const auto& xv2 = pval(o, 0);
        for (size_t i = 0; i < g.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-xv2[i]));
            g[i] += o.grad[i] * (s * (1.0 + xv2[i] * (1.0 - s)));
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto& xv = x.value();
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    return make_op("sigmoid", x.shape(), std::move(out), {x}, [](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        for (size_t i = 0; i < g.size(); ++i) {
            double s = o.value[i];
            g[i] += o.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 ||
        a.dim(1) != b.dim(0)) {
        dim_error("matmul", "incompatible shapes " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
    }
    size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    mat_mul_raw(a.value().data(), b.value().data(), out.data(), m, k, n,
                false, false, true);
    return make_op("matmul", {m, n}, std::move(out), {a, b},
                   [m, k, n](Node& o) {
                       if (wants_grad(o, 0)) {
                           // dA = dC * B^T
                           mat_mul_raw(o.grad.data(), pval(o, 1).data(),
                                       pgrad(o, 0).data(), m, n, k, false,
                                       true, true);
                       }
                       if (wants_grad(o, 1)) {
                           // dB = A^T * dC
                           mat_mul_raw(pval(o, 0).data(), o.grad.data(),
                                       pgrad(o, 1).data(), k, m, n, true,
                                       false, true);
                       }
                   });
}

Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2) {
        dim_error("transpose", "expected 2-D, got " + shape_str(a.shape()));
    }
    size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    const auto& av = a.value();
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    return make_op("transpose", {n, m}, std::move(out), {a}, [m, n](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
    });
}

Tensor add_bias_rows(const Tensor& x, const Tensor& bias) {
    if (x.shape().size() != 2 || bias.shape().size() != 1 ||
        x.dim(1) != bias.dim(0)) {
        dim_error("add_bias_rows", "x " + shape_str(x.shape()) + ", bias " +
                                       shape_str(bias.shape()));
    }
    size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(n * d);
    const auto& xv = x.value();
    const auto& bv = bias.value();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] + bv[j];
    return make_op("add_bias_rows", x.shape(), std::move(out), {x, bias},
                   [n, d](Node& o) {
                       if (wants_grad(o, 0)) {
                           auto& g = pgrad(o, 0);
                           for (size_t i = 0; i < g.size(); ++i)
                               g[i] += o.grad[i];
                       }
                       if (wants_grad(o, 1)) {
                           auto& g = pgrad(o, 1);
                           for (size_t i = 0; i < n; ++i)
                               for (size_t j = 0; j < d; ++j)
                                   g[j] += o.grad[i * d + j];
                       }
                   });
}

Tensor narrow_rows(const Tensor& x, size_t r0, size_t rows) {
    if (x.shape().size() != 2 || r0 + rows > x.dim(0)) {
        dim_error("narrow_rows", "slice [" + std::to_string(r0) + "," +
                                     std::to_string(r0 + rows) + ") of " +
                                     shape_str(x.shape()));
    }
    size_t d = x.dim(1);
    std::vector<double> out(x.value().begin() + r0 * d,
                            x.value().begin() + (r0 + rows) * d);
    return make_op("narrow_rows", {rows, d}, std::move(out), {x},
                   [r0, rows, d](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       for (size_t i = 0; i < rows * d; ++i)
                           g[r0 * d + i] += o.grad[i];
                   });
}

Tensor narrow_cols(const Tensor& x, size_t c0, size_t cols) {
    if (x.shape().size() != 2 || c0 + cols > x.dim(1)) {
        dim_error("narrow_cols", "slice [" + std::to_string(c0) + "," +
                                     std::to_string(c0 + cols) + ") of " +
                                     shape_str(x.shape()));
    }
    size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(n * cols);
    const auto& xv = x.value();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < cols; ++j)
            out[i * cols + j] = xv[i * d + c0 + j];
    return make_op("narrow_cols", {n, cols}, std::move(out), {x},
                   [c0, cols, n, d](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       for (size_t i = 0; i < n; ++i)
                           for (size_t j = 0; j < cols; ++j)
                               g[i * d + c0 + j] += o.grad[i * cols + j];
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) dim_error("concat_rows", "no inputs");
    size_t d = parts[0].dim(1);
    size_t total = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.dim(1) != d) {
            dim_error("concat_rows", "column mismatch at " +
                                         shape_str(p.shape()));
        }
        total += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(total * d);
    std::vector<size_t> row_counts;
    for (const auto& p : parts) {
        out.insert(out.end(), p.value().begin(), p.value().end());
        row_counts.push_back(p.dim(0));
    }
    return make_op("concat_rows", {total, d}, std::move(out), parts,
                   [row_counts, d](Node& o) {
                       size_t off = 0;
                       for (size_t p = 0; p < row_counts.size(); ++p) {
                           size_t len = row_counts[p] * d;
                           if (wants_grad(o, p)) {
                               auto& g = pgrad(o, p);
                               for (size_t i = 0; i < len; ++i)
                                   g[i] += o.grad[off + i];
                           }
                           off += len;
                       }
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) dim_error("concat_cols", "no inputs");
    size_t n = parts[0].dim(0);
    size_t total = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.dim(0) != n) {
            dim_error("concat_cols",
                      "row mismatch at " + shape_str(p.shape()));
        }
        total += p.dim(1);
    }
    std::vector<double> out(n * total);
    std::vector<size_t> col_counts;
    size_t off = 0;
    for (const auto& p : parts) {
        size_t d = p.dim(1);
        const auto& pv = p.value();
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < d; ++j)
                out[i * total + off + j] = pv[i * d + j];
        col_counts.push_back(d);
        off += d;
    }
    return make_op("concat_cols", {n, total}, std::move(out), parts,
                   [col_counts, n, total](Node& o) {
                       size_t off2 = 0;
                       for (size_t p = 0; p < col_counts.size(); ++p) {
                           size_t d = col_counts[p];
                           if (wants_grad(o, p)) {
                               auto& g = pgrad(o, p);
                               for (size_t i = 0; i < n; ++i)
                                   for (size_t j = 0; j < d; ++j)
                                       g[i * d + j] +=
                                           o.grad[i * total + off2 + j];
                           }
                           off2 += d;
                       }
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size()) {
        dim_error("reshape", shape_str(x.shape()) + " -> " + shape_str(shape) +
                                 " changes element count");
    }
    std::vector<double> out = x.value();
    return make_op("reshape", std::move(shape), std::move(out), {x},
                   [](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                   });
}

Tensor mean(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    double n = static_cast<double>(x.size());
    return make_op("mean", {1}, {s / n}, {x}, [n](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        double gy = o.grad[0] / n;
        for (size_t i = 0; i < g.size(); ++i) g[i] += gy;
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    return make_op("sum", {1}, {s}, {x}, [](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0];
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape("mse", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    double s = 0.0;
    for (size_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        s += d * d;
    }
    double n = static_cast<double>(a.size());
    return make_op("mse", {1}, {s / n}, {a, b}, [n](Node& o) {
        const auto& av2 = pval(o, 0);
        const auto& bv2 = pval(o, 1);
        double gy = 2.0 * o.grad[0] / n;
        if (wants_grad(o, 0)) {
            auto& g = pgrad(o, 0);
            for (size_t i = 0; i < g.size(); ++i)
                g[i] += gy * (av2[i] - bv2[i]);
        }
        if (wants_grad(o, 1)) {
            auto& g = pgrad(o, 1);
            for (size_t i = 0; i < g.size(); ++i)
                g[i] -= gy * (av2[i] - bv2[i]);
        }
    });
}

Tensor softmax(const Tensor& x) {
    if (x.shape().size() != 2) {
        dim_error("softmax", "expected 2-D, got " + shape_str(x.shape()));
    }
    size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(n * d);
    const auto& xv = x.value();
    for (size_t i = 0; i < n; ++i) {
        const double* row = xv.data() + i * d;
        double m = row[0];
        for (size_t j = 1; j < d; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (size_t j = 0; j < d; ++j) {
            out[i * d + j] = std::exp(row[j] - m);
            z += out[i * d + j];
        }
        for (size_t j = 0; j < d; ++j) out[i * d + j] /= z;
    }
    return make_op("softmax", x.shape(), std::move(out), {x}, [n, d](Node& o) {
        if (!wants_grad(o, 0)) return;
        auto& g = pgrad(o, 0);
        for (size_t i = 0; i < n; ++i) {
            const double* y = o.value.data() + i * d;
            const double* gy = o.grad.data() + i * d;
            double dot = 0.0;
            for (size_t j = 0; j < d; ++j) dot += gy[j] * y[j];
            for (size_t j = 0; j < d; ++j)
                g[i * d + j] += y[j] * (gy[j] - dot);
        }
    });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k,
                            const Tensor& v) {
    if (q.shape().size() != 2 || k.shape().size() != 2 ||
        v.shape().size() != 2 || q.dim(1) != k.dim(1) ||
        k.dim(0) != v.dim(0)) {
        dim_error("scaled_dot_attention",
                  "q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                      ", v " + shape_str(v.shape()));
    }
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
    return matmul(softmax(scores), v);
}

Tensor cross_entropy_logits(const Tensor& logits,
                            const std::vector<size_t>& labels) {
    if (logits.shape().size() != 2 || logits.dim(0) != labels.size()) {
        dim_error("cross_entropy_logits",
                  "logits " + shape_str(logits.shape()) + ", labels n=" +
                      std::to_string(labels.size()));
    }
    size_t n = logits.dim(0), k = logits.dim(1);
    for (size_t lab : labels) {
        if (lab >= k) {
            throw ContractError("cross_entropy_logits: label out of range");
        }
    }
    const auto& xv = logits.value();
    std::vector<double> probs(n * k);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double* row = xv.data() + i * k;
        double m = row[0];
        for (size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (size_t j = 0; j < k; ++j) {
            probs[i * k + j] = std::exp(row[j] - m);
            z += probs[i * k + j];
        }
        for (size_t j = 0; j < k; ++j) probs[i * k + j] /= z;
        loss += m + std::log(z) - row[labels[i]];
    }
    loss /= static_cast<double>(n);
    return make_op("cross_entropy_logits", {1}, {loss}, {logits},
                   [n, k, labels, probs](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       double gy = o.grad[0] / static_cast<double>(n);
                       for (size_t i = 0; i < n; ++i) {
                           for (size_t j = 0; j < k; ++j) {
                               double p = probs[i * k + j];
                               double t = (j == labels[i]) ? 1.0 : 0.0;
                               g[i * k + j] += gy * (p - t);
                           }
                       }
                   });
}

Tensor bce_with_logits(const Tensor& logits,
                       const std::vector<double>& targets) {
    if (logits.size() != targets.size()) {
        dim_error("bce_with_logits", "logits n=" + std::to_string(logits.size()) +
                                         ", targets n=" +
                                         std::to_string(targets.size()));
    }
    const auto& xv = logits.value();
    size_t n = xv.size();
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double x = xv[i];
        loss += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= static_cast<double>(n);
    return make_op("bce_with_logits", {1}, {loss}, {logits},
                   [n, targets](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       const auto& xv2 = pval(o, 0);
                       double gy = o.grad[0] / static_cast<double>(n);
                       for (size_t i = 0; i < n; ++i) {
                           double s = 1.0 / (1.0 + std::exp(-xv2[i]));
                           g[i] += gy * (s - targets[i]);
                       }
                   });
}

Tensor embedding(const Tensor& table, const std::vector<size_t>& ids) {
    if (table.shape().size() != 2) {
        dim_error("embedding", "table " + shape_str(table.shape()));
    }
    size_t v = table.dim(0), d = table.dim(1);
    for (size_t id : ids) {
        if (id >= v) throw ContractError("embedding: id out of range");
    }
    size_t n = ids.size();
    std::vector<double> out(n * d);
    const auto& tv = table.value();
    for (size_t i = 0; i < n; ++i) {
        std::memcpy(out.data() + i * d, tv.data() + ids[i] * d,
                    d * sizeof(double));
    }
    return make_op("embedding", {n, d}, std::move(out), {table},
                   [ids, d](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       for (size_t i = 0; i < ids.size(); ++i)
                           for (size_t j = 0; j < d; ++j)
                               g[ids[i] * d + j] += o.grad[i * d + j];
                   });
}

namespace {

struct ConvDims {
    size_t b, c, h, w, oc, kh, kw, oh, ow, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, size_t stride,
                   size_t pad) {
    if (x.shape().size() != 4 || w.shape().size() != 4 || stride == 0) {
        dim_error("conv2d", "x " + shape_str(x.shape()) + ", w " +
                                shape_str(w.shape()));
    }
    ConvDims d{};
    d.b = x.dim(0);
    d.c = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.oc = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    d.stride = stride;
    d.pad = pad;
    if (w.dim(1) != d.c) {
        dim_error("conv2d", "input channels " + std::to_string(d.c) +
                                " vs kernel channels " +
                                std::to_string(w.dim(1)));
    }
    if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw) {
        dim_error("conv2d", "kernel larger than padded input");
    }
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

// col: (b*oh*ow, c*kh*kw)
std::vector<double> im2col(const std::vector<double>& x, const ConvDims& d) {
    size_t kk = d.c * d.kh * d.kw;
    std::vector<double> col(d.b * d.oh * d.ow * kk, 0.0);
    parallel_for(d.b * d.oh, [&](size_t lo, size_t hi) {
        for (size_t bi = lo; bi < hi; ++bi) {
            size_t b = bi / d.oh, oh = bi % d.oh;
            for (size_t ow = 0; ow < d.ow; ++ow) {
                double* crow = col.data() + ((b * d.oh + oh) * d.ow + ow) * kk;
                for (size_t c = 0; c < d.c; ++c) {
                    const double* xc = x.data() + (b * d.c + c) * d.h * d.w;
                    for (size_t kh = 0; kh < d.kh; ++kh) {
                        long ih = static_cast<long>(oh * d.stride + kh) -
                                  static_cast<long>(d.pad);
                        double* dst = crow + (c * d.kh + kh) * d.kw;
                        if (ih < 0 || ih >= static_cast<long>(d.h)) continue;
                        for (size_t kw = 0; kw < d.kw; ++kw) {
                            long iw = static_cast<long>(ow * d.stride + kw) -
                                      static_cast<long>(d.pad);
                            if (iw < 0 || iw >= static_cast<long>(d.w))
                                continue;
                            dst[kw] = xc[ih * d.w + iw];
                        }
                    }
                }
            }
        }
    });
    return col;
}

void col2im_add(const std::vector<double>& col, const ConvDims& d,
                std::vector<double>& dx) {
    size_t kk = d.c * d.kh * d.kw;
    for (size_t b = 0; b < d.b; ++b) {
        for (size_t oh = 0; oh < d.oh; ++oh) {
            for (size_t ow = 0; ow < d.ow; ++ow) {
                const double* crow =
                    col.data() + ((b * d.oh + oh) * d.ow + ow) * kk;
                for (size_t c = 0; c < d.c; ++c) {
                    double* xc = dx.data() + (b * d.c + c) * d.h * d.w;
                    for (size_t kh = 0; kh < d.kh; ++kh) {
                        long ih = static_cast<long>(oh * d.stride + kh) -
                                  static_cast<long>(d.pad);
                        if (ih < 0 || ih >= static_cast<long>(d.h)) continue;
                        const double* src = crow + (c * d.kh + kh) * d.kw;
                        for (size_t kw = 0; kw < d.kw; ++kw) {
                            long iw = static_cast<long>(ow * d.stride + kw) -
                                      static_cast<long>(d.pad);
                            if (iw < 0 || iw >= static_cast<long>(d.w))
                                continue;
                            xc[ih * d.w + iw] += src[kw];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              size_t stride, size_t pad) {
    ConvDims d = conv_dims(x, w, stride, pad);
    bool has_bias = bias.defined();
    if (has_bias &&
        (bias.shape().size() != 1 || bias.dim(0) != d.oc)) {
        dim_error("conv2d", "bias " + shape_str(bias.shape()) + " vs oc=" +
                                std::to_string(d.oc));
    }
    size_t rows = d.b * d.oh * d.ow;
    size_t kk = d.c * d.kh * d.kw;
    std::vector<double> col = im2col(x.value(), d);
    // y2[r, oc] = col[r, :] . w[oc, :]
    std::vector<double> y2(rows * d.oc);
    mat_mul_raw(col.data(), w.value().data(), y2.data(), rows, kk, d.oc,
                false, true, true);
    std::vector<double> out(d.b * d.oc * d.oh * d.ow);
    const double* bv = has_bias ? bias.value().data() : nullptr;
    for (size_t b = 0; b < d.b; ++b)
        for (size_t oc = 0; oc < d.oc; ++oc)
            for (size_t p = 0; p < d.oh * d.ow; ++p)
                out[(b * d.oc + oc) * d.oh * d.ow + p] =
                    y2[(b * d.oh * d.ow + p) * d.oc + oc] +
                    (bv ? bv[oc] : 0.0);

    std::vector<Tensor> parents = {x, w};
    if (has_bias) parents.push_back(bias);
    auto saved_col = std::make_shared<std::vector<double>>(std::move(col));
    return make_op(
        "conv2d", {d.b, d.oc, d.oh, d.ow}, std::move(out), parents,
        [d, rows, kk, has_bias, saved_col](Node& o) {
            // dY2 from the NCHW grad layout
            std::vector<double> dy2(rows * d.oc);
            for (size_t b = 0; b < d.b; ++b)
                for (size_t oc = 0; oc < d.oc; ++oc)
                    for (size_t p = 0; p < d.oh * d.ow; ++p)
                        dy2[(b * d.oh * d.ow + p) * d.oc + oc] =
                            o.grad[(b * d.oc + oc) * d.oh * d.ow + p];
            if (wants_grad(o, 1)) {
                // dW[oc, k] = sum_r dY2[r, oc] col[r, k]
                mat_mul_raw(dy2.data(), saved_col->data(),
                            pgrad(o, 1).data(), d.oc, rows, kk, true, false,
                            true);
            }
            if (wants_grad(o, 0)) {
                std::vector<double> dcol(rows * kk);
                mat_mul_raw(dy2.data(), pval(o, 1).data(), dcol.data(), rows,
                            d.oc, kk, false, false, true);
                col2im_add(dcol, d, pgrad(o, 0));
            }
            if (has_bias && wants_grad(o, 2)) {
                auto& g = pgrad(o, 2);
                for (size_t r = 0; r < rows; ++r)
                    for (size_t oc = 0; oc < d.oc; ++oc)
                        g[oc] += dy2[r * d.oc + oc];
            }
        });
}

Tensor upsample_nearest2(const Tensor& x) {
    if (x.shape().size() != 4) {
        dim_error("upsample_nearest2", "expected NCHW, got " +
                                           shape_str(x.shape()));
    }
    size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::vector<double> out(b * c * 4 * h * w);
    const auto& xv = x.value();
    for (size_t bc = 0; bc < b * c; ++bc) {
        const double* src = xv.data() + bc * h * w;
        double* dst = out.data() + bc * 4 * h * w;
        for (size_t i = 0; i < h; ++i)
            for (size_t j = 0; j < w; ++j) {
                double v = src[i * w + j];
                dst[(2 * i) * 2 * w + 2 * j] = v;
                dst[(2 * i) * 2 * w + 2 * j + 1] = v;
                dst[(2 * i + 1) * 2 * w + 2 * j] = v;
                dst[(2 * i + 1) * 2 * w + 2 * j + 1] = v;
            }
    }
    return make_op("upsample_nearest2", {b, c, 2 * h, 2 * w}, std::move(out),
                   {x}, [b, c, h, w](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       for (size_t bc = 0; bc < b * c; ++bc) {
                           const double* gy = o.grad.data() + bc * 4 * h * w;
                           double* gx = g.data() + bc * h * w;
                           for (size_t i = 0; i < h; ++i)
                               for (size_t j = 0; j < w; ++j)
                                   gx[i * w + j] +=
                                       gy[(2 * i) * 2 * w + 2 * j] +
                                       gy[(2 * i) * 2 * w + 2 * j + 1] +
                                       gy[(2 * i + 1) * 2 * w + 2 * j] +
                                       gy[(2 * i + 1) * 2 * w + 2 * j + 1];
                       }
                   });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4 ||
        a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
        a.dim(3) != b.dim(3)) {
        dim_error("concat_channels", shape_str(a.shape()) + " + " +
                                         shape_str(b.shape()));
    }
    size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    size_t s = a.dim(2) * a.dim(3);
    std::vector<double> out(n * (ca + cb) * s);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < n; ++i) {
        std::memcpy(out.data() + i * (ca + cb) * s, av.data() + i * ca * s,
                    ca * s * sizeof(double));
        std::memcpy(out.data() + i * (ca + cb) * s + ca * s,
                    bv.data() + i * cb * s, cb * s * sizeof(double));
    }
    return make_op("concat_channels", {n, ca + cb, a.dim(2), a.dim(3)},
                   std::move(out), {a, b}, [n, ca, cb, s](Node& o) {
                       for (size_t i = 0; i < n; ++i) {
                           const double* gy = o.grad.data() + i * (ca + cb) * s;
                           if (wants_grad(o, 0)) {
                               auto& g = pgrad(o, 0);
                               for (size_t j = 0; j < ca * s; ++j)
                                   g[i * ca * s + j] += gy[j];
                           }
                           if (wants_grad(o, 1)) {
                               auto& g = pgrad(o, 1);
                               for (size_t j = 0; j < cb * s; ++j)
                                   g[i * cb * s + j] += gy[ca * s + j];
                           }
                       }
                   });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& tb) {
    if (x.shape().size() != 4 || tb.shape().size() != 2 ||
        tb.dim(0) != x.dim(0) || tb.dim(1) != x.dim(1)) {
        dim_error("add_channel_bias", "x " + shape_str(x.shape()) + ", tb " +
                                          shape_str(tb.shape()));
    }
    size_t n = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
    std::vector<double> out(x.size());
    const auto& xv = x.value();
    const auto& tv = tb.value();
    for (size_t bc = 0; bc < n * c; ++bc) {
        double v = tv[bc];
        for (size_t j = 0; j < s; ++j) out[bc * s + j] = xv[bc * s + j] + v;
    }
    return make_op("add_channel_bias", x.shape(), std::move(out), {x, tb},
                   [n, c, s](Node& o) {
                       if (wants_grad(o, 0)) {
                           auto& g = pgrad(o, 0);
                           for (size_t i = 0; i < g.size(); ++i)
                               g[i] += o.grad[i];
                       }
                       if (wants_grad(o, 1)) {
                           auto& g = pgrad(o, 1);
                           for (size_t bc = 0; bc < n * c; ++bc) {
                               double acc = 0.0;
                               for (size_t j = 0; j < s; ++j)
                                   acc += o.grad[bc * s + j];
                               g[bc] += acc;
                           }
                       }
                   });
}

Tensor nchw_to_tokens(const Tensor& x) {
    if (x.shape().size() != 4) {
        dim_error("nchw_to_tokens", "expected NCHW, got " +
                                        shape_str(x.shape()));
    }
    size_t b = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
    std::vector<double> out(b * s * c);
    const auto& xv = x.value();
    for (size_t bi = 0; bi < b; ++bi)
        for (size_t ci = 0; ci < c; ++ci)
            for (size_t p = 0; p < s; ++p)
                out[(bi * s + p) * c + ci] = xv[(bi * c + ci) * s + p];
    return make_op("nchw_to_tokens", {b * s, c}, std::move(out), {x},
                   [b, c, s](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       for (size_t bi = 0; bi < b; ++bi)
                           for (size_t ci = 0; ci < c; ++ci)
                               for (size_t p = 0; p < s; ++p)
                                   g[(bi * c + ci) * s + p] +=
                                       o.grad[(bi * s + p) * c + ci];
                   });
}

Tensor tokens_to_nchw(const Tensor& x, size_t b, size_t c, size_t h,
                      size_t w) {
    size_t s = h * w;
    if (x.shape().size() != 2 || x.dim(0) != b * s || x.dim(1) != c) {
        dim_error("tokens_to_nchw", "tokens " + shape_str(x.shape()) +
                                        " vs target (" + std::to_string(b) +
                                        "," + std::to_string(c) + "," +
                                        std::to_string(h) + "," +
                                        std::to_string(w) + ")");
    }
    std::vector<double> out(b * c * s);
    const auto& xv = x.value();
    for (size_t bi = 0; bi < b; ++bi)
        for (size_t ci = 0; ci < c; ++ci)
            for (size_t p = 0; p < s; ++p)
                out[(bi * c + ci) * s + p] = xv[(bi * s + p) * c + ci];
    return make_op("tokens_to_nchw", {b, c, h, w}, std::move(out), {x},
                   [b, c, s](Node& o) {
                       if (!wants_grad(o, 0)) return;
                       auto& g = pgrad(o, 0);
                       for (size_t bi = 0; bi < b; ++bi)
                           for (size_t ci = 0; ci < c; ++ci)
                               for (size_t p = 0; p < s; ++p)
                                   g[(bi * s + p) * c + ci] +=
                                       o.grad[(bi * c + ci) * s + p];
                   });
}

namespace {

// Shared group-norm core over a logical (batch, channels, spatial) view.
Tensor group_norm_impl(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, size_t groups, double eps,
                       size_t b, size_t c, size_t s) {
    if (groups == 0 || c % groups != 0) {
        dim_error("group_norm", "channels " + std::to_string(c) +
                                    " not divisible by groups " +
                                    std::to_string(groups));
    }
    if (gamma.size() != c || beta.size() != c) {
        dim_error("group_norm", "gamma/beta size must equal channels");
    }
    size_t cg = c / groups;      // channels per group
    size_t m = cg * s;           // elements per group
    const auto& xv = x.value();
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    std::vector<double> out(xv.size());
    std::vector<double> means(b * groups), istds(b * groups);
    for (size_t bi = 0; bi < b; ++bi) {
        for (size_t g = 0; g < groups; ++g) {
            const double* xg = xv.data() + (bi * c + g * cg) * s;
            double mu = 0.0;
            for (size_t i = 0; i < m; ++i) mu += xg[i];
            mu /= static_cast<double>(m);
            double var = 0.0;
            for (size_t i = 0; i < m; ++i) {
                double d = xg[i] - mu;
                var += d * d;
            }
            var /= static_cast<double>(m);
            double istd = 1.0 / std::sqrt(var + eps);
            means[bi * groups + g] = mu;
            istds[bi * groups + g] = istd;
            double* og = out.data() + (bi * c + g * cg) * s;
            for (size_t ci = 0; ci < cg; ++ci) {
                double ga = gv[g * cg + ci];
                double be = bv[g * cg + ci];
                for (size_t p = 0; p < s; ++p) {
                    og[ci * s + p] =
                        ga * (xg[ci * s + p] - mu) * istd + be;
                }
            }
        }
    }
    return make_op(
        "group_norm", x.shape(), std::move(out), {x, gamma, beta},
        [b, c, s, groups, cg, m, means, istds](Node& o) {
            const auto& xv2 = pval(o, 0);
            const auto& gv2 = pval(o, 1);
            for (size_t bi = 0; bi < b; ++bi) {
                for (size_t g = 0; g < groups; ++g) {
                    double mu = means[bi * groups + g];
                    double istd = istds[bi * groups + g];
                    const double* xg = xv2.data() + (bi * c + g * cg) * s;
                    const double* gy = o.grad.data() + (bi * c + g * cg) * s;
                    // s1 = sum dxhat, s2 = sum dxhat * xhat
                    double s1 = 0.0, s2 = 0.0;
                    for (size_t ci = 0; ci < cg; ++ci) {
                        double ga = gv2[g * cg + ci];
                        for (size_t p = 0; p < s; ++p) {
                            double xh = (xg[ci * s + p] - mu) * istd;
                            double dxh = gy[ci * s + p] * ga;
                            s1 += dxh;
                            s2 += dxh * xh;
                        }
                    }
                    if (wants_grad(o, 0)) {
                        auto& gx = pgrad(o, 0);
                        double* gxg = gx.data() + (bi * c + g * cg) * s;
                        double inv_m = 1.0 / static_cast<double>(m);
                        for (size_t ci = 0; ci < cg; ++ci) {
                            double ga = gv2[g * cg + ci];
                            for (size_t p = 0; p < s; ++p) {
                                double xh = (xg[ci * s + p] - mu) * istd;
                                double dxh = gy[ci * s + p] * ga;
                                gxg[ci * s + p] +=
                                    istd * (dxh - (s1 + xh * s2) * inv_m);
                            }
                        }
                    }
                    if (wants_grad(o, 1)) {
                        auto& gg = pgrad(o, 1);
                        for (size_t ci = 0; ci < cg; ++ci) {
                            double acc = 0.0;
                            for (size_t p = 0; p < s; ++p) {
                                double xh = (xg[ci * s + p] - mu) * istd;
                                acc += o.grad[(bi * c + g * cg + ci) * s + p] * xh;
                            }
                            gg[g * cg + ci] += acc;
                        }
                    }
                    if (wants_grad(o, 2)) {
                        auto& gb = pgrad(o, 2);
                        for (size_t ci = 0; ci < cg; ++ci) {
                            double acc = 0.0;
                            for (size_t p = 0; p < s; ++p)
                                acc += o.grad[(bi * c + g * cg + ci) * s + p];
                            gb[g * cg + ci] += acc;
                        }
                    }
                }
            }
        });
}

}  // namespace

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  size_t groups, double eps) {
    if (x.shape().size() != 4) {
        dim_error("group_norm", "expected NCHW, got " + shape_str(x.shape()));
    }
    return group_norm_impl(x, gamma, beta, groups, eps, x.dim(0), x.dim(1),
                           x.dim(2) * x.dim(3));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    if (x.shape().size() != 2) {
        dim_error("layer_norm", "expected 2-D, got " + shape_str(x.shape()));
    }
    return group_norm_impl(x, gamma, beta, 1, eps, x.dim(0), x.dim(1), 1);
}

}  // namespace diffaug::ops
