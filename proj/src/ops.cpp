#include "vr/ops.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <utility>

#include "vr/kernels.hpp"

namespace vr::ops {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

std::string shp(const Tensor& t) { return Tensor::shape_str(t.shape()); }

void check_rank2ish(const Tensor& t, const char* op) {
    if (t.rank() < 1 || t.rank() > 2) {
        throw ShapeError(std::string(op) + ": rank-" + std::to_string(t.rank()) +
                         " tensor " + shp(t) + " not supported");
    }
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite input value");
        }
    }
}

// Builds the output node. Parents are always captured (VJPs read their data);
// backward only walks the ones that require grad.
Tensor finish(std::vector<int> shape, std::vector<double> data,
              std::vector<Tensor> parents, std::function<void(TensorNode&)> vjp) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    bool rg = false;
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
    if (rg) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const Tensor& p : parents) n->parents.push_back(p.node());
        n->vjp = std::move(vjp);
    }
    return Tensor::wrap(std::move(n));
}

void add_into(TensorNode& parent, const std::vector<double>& g) {
    if (parent.requires_grad) accumulate_grad(parent, g);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2ish(a, "matmul");
    check_rank2ish(b, "matmul");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions disagree: " + shp(a) + " x " + shp(b));
    }
    std::vector<double> out(static_cast<size_t>(m) * n);
    kernels::matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
    return finish({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& node) {
        const auto& g = node.grad;
        TensorNode& pa = *node.parents[0];
        TensorNode& pb = *node.parents[1];
        if (pa.requires_grad) {
            std::vector<double> da(static_cast<size_t>(m) * k);
            kernels::matmul_nt(g.data(), pb.data.data(), da.data(), m, n, k);
            accumulate_grad(pa, da);
        }
        if (pb.requires_grad) {
            std::vector<double> db(static_cast<size_t>(k) * n);
            kernels::matmul_tn(pa.data.data(), g.data(), db.data(), k, m, n);
            accumulate_grad(pb, db);
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_rank2ish(a, "matmul_nt");
    check_rank2ish(b, "matmul_nt");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw ShapeError("matmul_nt: inner dimensions disagree: " + shp(a) + " x " + shp(b) +
                         "^T");
    }
    std::vector<double> out(static_cast<size_t>(m) * n);
    kernels::matmul_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
    return finish({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& node) {
        const auto& g = node.grad;
        TensorNode& pa = *node.parents[0];
        TensorNode& pb = *node.parents[1];
        if (pa.requires_grad) {
            std::vector<double> da(static_cast<size_t>(m) * k);
            kernels::matmul_nn(g.data(), pb.data.data(), da.data(), m, n, k);
            accumulate_grad(pa, da);
        }
        if (pb.requires_grad) {
            std::vector<double> db(static_cast<size_t>(n) * k);
            kernels::matmul_tn(g.data(), pa.data.data(), db.data(), n, m, k);
            accumulate_grad(pb, db);
        }
    });
}

namespace {

Tensor elementwise_pair(const Tensor& a, const Tensor& b, const char* op,
                        double (*f)(double, double),
                        void (*back)(const std::vector<double>&, TensorNode&, TensorNode&)) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shp(a) + " vs " + shp(b));
    }
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.values()[i], b.values()[i]);
    return finish(a.shape(), std::move(out), {a, b}, [back](TensorNode& node) {
        back(node.grad, *node.parents[0], *node.parents[1]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_pair(
        a, b, "add", [](double x, double y) { return x + y; },
        [](const std::vector<double>& g, TensorNode& pa, TensorNode& pb) {
            add_into(pa, g);
            add_into(pb, g);
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_pair(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](const std::vector<double>& g, TensorNode& pa, TensorNode& pb) {
            add_into(pa, g);
            if (pb.requires_grad) {
                std::vector<double> neg(g.size());
                for (size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
                accumulate_grad(pb, neg);
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_pair(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](const std::vector<double>& g, TensorNode& pa, TensorNode& pb) {
            if (pa.requires_grad) {
                std::vector<double> da(g.size());
                for (size_t i = 0; i < g.size(); ++i) da[i] = g[i] * pb.data[i];
                accumulate_grad(pa, da);
            }
            if (pb.requires_grad) {
                std::vector<double> db(g.size());
                for (size_t i = 0; i < g.size(); ++i) db[i] = g[i] * pa.data[i];
                accumulate_grad(pb, db);
            }
        });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    return finish(a.shape(), std::move(out), {a}, [c](TensorNode& node) {
        TensorNode& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        std::vector<double> da(node.grad.size());
        for (size_t i = 0; i < da.size(); ++i) da[i] = node.grad[i] * c;
        accumulate_grad(pa, da);
    });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    check_rank2ish(a, "add_rowvec");
    const int m = a.rows(), n = a.cols();
    if (v.size() != n) {
        throw ShapeError("add_rowvec: vector " + shp(v) + " does not match row width of " +
                         shp(a));
    }
    std::vector<double> out(a.values().size());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<size_t>(i) * n + j] = a.values()[static_cast<size_t>(i) * n + j] +
                                                  v.values()[static_cast<size_t>(j)];
        }
    }
    return finish(a.shape(), std::move(out), {a, v}, [m, n](TensorNode& node) {
        TensorNode& pa = *node.parents[0];
        TensorNode& pv = *node.parents[1];
        add_into(pa, node.grad);
        if (pv.requires_grad) {
            std::vector<double> dv(static_cast<size_t>(n), 0.0);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) dv[j] += node.grad[static_cast<size_t>(i) * n + j];
            }
            accumulate_grad(pv, dv);
        }
    });
}

Tensor softmax_rows(const Tensor& x, double temperature) {
    check_rank2ish(x, "softmax_rows");
    if (!(temperature > 0.0)) {
        throw ValueError("softmax_rows: temperature must be positive, got " +
                         std::to_string(temperature));
    }
    check_finite(x, "softmax_rows");
    const int m = x.rows(), n = x.cols();
    std::vector<double> out(x.values().size());
    kernels::softmax_rows(x.values().data(), out.data(), m, n, temperature);
    // y depends on x only through x/temperature
    return finish(x.shape(), std::move(out), {x}, [m, n, temperature](TensorNode& node) {
        TensorNode& px = *node.parents[0];
        if (!px.requires_grad) return;
        const auto& y = node.data;
        const auto& g = node.grad;
        std::vector<double> dx(y.size());
        for (int i = 0; i < m; ++i) {
            const size_t off = static_cast<size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g[off + j] * y[off + j];
            for (int j = 0; j < n; ++j) {
                dx[off + j] = y[off + j] * (g[off + j] - dot) / temperature;
            }
        }
        accumulate_grad(px, dx);
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    check_rank2ish(x, "layer_norm");
    const int m = x.rows(), n = x.cols();
    if (gain.size() != n || bias.size() != n) {
        throw ShapeError("layer_norm: gain " + shp(gain) + " / bias " + shp(bias) +
                         " do not match row width of " + shp(x));
    }
    if (!(eps > 0.0)) throw ValueError("layer_norm: eps must be positive");
    std::vector<double> out(x.values().size());
    std::vector<double> xhat(x.values().size());
    std::vector<double> inv_std(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const size_t off = static_cast<size_t>(i) * n;
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += x.values()[off + j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = x.values()[off + j] - mean;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(i)] = is;
        for (int j = 0; j < n; ++j) {
            const double h = (x.values()[off + j] - mean) * is;
            xhat[off + j] = h;
            out[off + j] = h * gain.values()[static_cast<size_t>(j)] +
                           bias.values()[static_cast<size_t>(j)];
        }
    }
    return finish(x.shape(), std::move(out), {x, gain, bias},
                  [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& node) {
                      TensorNode& px = *node.parents[0];
                      TensorNode& pg = *node.parents[1];
                      TensorNode& pb = *node.parents[2];
                      const auto& g = node.grad;
                      if (px.requires_grad) {
                          std::vector<double> dx(g.size());
                          for (int i = 0; i < m; ++i) {
                              const size_t off = static_cast<size_t>(i) * n;
                              // gy = dL/dxhat per element
                              double mean_gy = 0.0, mean_gy_xhat = 0.0;
                              for (int j = 0; j < n; ++j) {
                                  const double gy = g[off + j] * pg.data[static_cast<size_t>(j)];
                                  dx[off + j] = gy;
                                  mean_gy += gy;
                                  mean_gy_xhat += gy * xhat[off + j];
                              }
                              mean_gy /= n;
                              mean_gy_xhat /= n;
                              const double is = inv_std[static_cast<size_t>(i)];
                              for (int j = 0; j < n; ++j) {
                                  dx[off + j] = (dx[off + j] - mean_gy -
                                                 xhat[off + j] * mean_gy_xhat) *
                                                is;
                              }
                          }
                          accumulate_grad(px, dx);
                      }
                      if (pg.requires_grad) {
                          std::vector<double> dg(static_cast<size_t>(n), 0.0);
                          for (int i = 0; i < m; ++i) {
                              const size_t off = static_cast<size_t>(i) * n;
                              for (int j = 0; j < n; ++j) dg[j] += g[off + j] * xhat[off + j];
                          }
                          accumulate_grad(pg, dg);
                      }
                      if (pb.requires_grad) {
                          std::vector<double> db(static_cast<size_t>(n), 0.0);
                          for (int i = 0; i < m; ++i) {
                              const size_t off = static_cast<size_t>(i) * n;
                              for (int j = 0; j < n; ++j) db[j] += g[off + j];
                          }
                          accumulate_grad(pb, db);
                      }
                  });
}

Tensor clamp_values(const Tensor& x, double lo, double hi) {
    if (lo > hi) {
        throw ValueError("clamp_values: lo " + std::to_string(lo) + " exceeds hi " +
                         std::to_string(hi));
    }
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = std::min(hi, std::max(lo, x.values()[i]));
    }
    return finish(x.shape(), std::move(out), {x}, [lo, hi](TensorNode& node) {
        TensorNode& px = *node.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(node.grad.size());
        for (size_t i = 0; i < dx.size(); ++i) {
            const double v = px.data[i];
            dx[i] = (v >= lo && v <= hi) ? node.grad[i] : 0.0;
        }
        accumulate_grad(px, dx);
    });
}

Tensor stop_gradient(const Tensor& x) {
    // fresh leaf node: same values, no parents, never requires grad
    auto n = std::make_shared<TensorNode>();
    n->shape = x.shape();
    n->data = x.values();
    return Tensor::wrap(std::move(n));
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double v = x.values()[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    return finish(x.shape(), std::move(out), {x}, [](TensorNode& node) {
        TensorNode& px = *node.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(node.grad.size());
        for (size_t i = 0; i < dx.size(); ++i) {
            const double v = px.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            dx[i] = node.grad[i] * (cdf + v * pdf);
        }
        accumulate_grad(px, dx);
    });
}

Tensor abs_elems(const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x.values()[i]);
    return finish(x.shape(), std::move(out), {x}, [](TensorNode& node) {
        TensorNode& px = *node.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(node.grad.size());
        for (size_t i = 0; i < dx.size(); ++i) {
            const double v = px.data[i];
            const double s = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            dx[i] = node.grad[i] * s;
        }
        accumulate_grad(px, dx);
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
    check_rank2ish(x, "gather_rows");
    const int m = x.rows(), n = x.cols();
    const int k = static_cast<int>(indices.size());
    std::vector<double> out(static_cast<size_t>(k) * n);
    for (int i = 0; i < k; ++i) {
        const int r = indices[static_cast<size_t>(i)];
        if (r < 0 || r >= m) {
            throw ValueError("gather_rows: index " + std::to_string(r) + " outside " +
                             std::to_string(m) + " rows");
        }
        std::memcpy(out.data() + static_cast<size_t>(i) * n,
                    x.values().data() + static_cast<size_t>(r) * n, sizeof(double) * n);
    }
    return finish({k, n}, std::move(out), {x}, [indices, n](TensorNode& node) {
        TensorNode& px = *node.parents[0];
        if (!px.requires_grad) return;
        if (px.grad.empty()) px.grad.assign(px.data.size(), 0.0);
        for (size_t i = 0; i < indices.size(); ++i) {
            const size_t src = i * static_cast<size_t>(n);
            const size_t dst = static_cast<size_t>(indices[i]) * n;
            for (int j = 0; j < n; ++j) px.grad[dst + j] += node.grad[src + j];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ValueError("concat_rows: no parts");
    const int n = parts[0].cols();
    int total_rows = 0;
    for (const Tensor& p : parts) {
        check_rank2ish(p, "concat_rows");
        if (p.cols() != n) {
            throw ShapeError("concat_rows: column mismatch " + shp(parts[0]) + " vs " + shp(p));
        }
        total_rows += p.rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(total_rows) * n);
    for (const Tensor& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return finish({total_rows, n}, std::move(out), parts, [](TensorNode& node) {
        size_t off = 0;
        for (auto& p : node.parents) {
            const size_t len = p->data.size();
            if (p->requires_grad) {
                if (p->grad.empty()) p->grad.assign(len, 0.0);
                for (size_t i = 0; i < len; ++i) p->grad[i] += node.grad[off + i];
            }
            off += len;
        }
    });
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    check_rank2ish(x, "slice_cols");
    const int m = x.rows(), n = x.cols();
    if (c0 < 0 || c1 > n || c0 >= c1) {
        throw ValueError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for width " + std::to_string(n));
    }
    const int w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(m) * w);
    for (int i = 0; i < m; ++i) {
        std::memcpy(out.data() + static_cast<size_t>(i) * w,
                    x.values().data() + static_cast<size_t>(i) * n + c0, sizeof(double) * w);
    }
    return finish({m, w}, std::move(out), {x}, [m, n, c0, w](TensorNode& node) {
        TensorNode& px = *node.parents[0];
        if (!px.requires_grad) return;
        if (px.grad.empty()) px.grad.assign(px.data.size(), 0.0);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < w; ++j) {
                px.grad[static_cast<size_t>(i) * n + c0 + j] +=
                    node.grad[static_cast<size_t>(i) * w + j];
            }
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ValueError("concat_cols: no parts");
    const int m = parts[0].rows();
    int total_cols = 0;
    std::vector<int> widths;
    for (const Tensor& p : parts) {
        check_rank2ish(p, "concat_cols");
        if (p.rows() != m) {
            throw ShapeError("concat_cols: row mismatch " + shp(parts[0]) + " vs " + shp(p));
        }
        widths.push_back(p.cols());
        total_cols += p.cols();
    }
    std::vector<double> out(static_cast<size_t>(m) * total_cols);
    int off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const int w = widths[pi];
        for (int i = 0; i < m; ++i) {
            std::memcpy(out.data() + static_cast<size_t>(i) * total_cols + off,
                        parts[pi].values().data() + static_cast<size_t>(i) * w,
                        sizeof(double) * w);
        }
        off += w;
    }
    return finish({m, total_cols}, std::move(out), parts,
                  [m, total_cols, widths](TensorNode& node) {
                      int off = 0;
                      for (size_t pi = 0; pi < node.parents.size(); ++pi) {
                          const int w = widths[pi];
                          TensorNode& p = *node.parents[pi];
                          if (p.requires_grad) {
                              if (p.grad.empty()) p.grad.assign(p.data.size(), 0.0);
                              for (int i = 0; i < m; ++i) {
                                  for (int j = 0; j < w; ++j) {
                                      p.grad[static_cast<size_t>(i) * w + j] +=
                                          node.grad[static_cast<size_t>(i) * total_cols + off + j];
                                  }
                              }
                          }
                          off += w;
                      }
                  });
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return finish({1}, {s}, {x}, [](TensorNode& node) {
        TensorNode& px = *node.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(px.data.size(), node.grad[0]);
        accumulate_grad(px, dx);
    });
}

Tensor mean_all(const Tensor& x) {
    if (x.size() == 0) throw ValueError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : x.values()) s += v;
    const double inv = 1.0 / static_cast<double>(x.size());
    return finish({1}, {s * inv}, {x}, [inv](TensorNode& node) {
        TensorNode& px = *node.parents[0];
        if (!px.requires_grad) return;
        std::vector<double> dx(px.data.size(), node.grad[0] * inv);
        accumulate_grad(px, dx);
    });
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets) {
    check_rank2ish(logits, "cross_entropy_logits");
    const int m = logits.rows(), n = logits.cols();
    if (static_cast<int>(targets.size()) != m) {
        throw ShapeError("cross_entropy_logits: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
    }
    check_finite(logits, "cross_entropy_logits");
    // cache the row softmax for the backward pass
    std::vector<double> probs(logits.values().size());
    kernels::softmax_rows(logits.values().data(), probs.data(), m, n, 1.0);
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        const int t = targets[static_cast<size_t>(i)];
        if (t < 0 || t >= n) {
            throw ValueError("cross_entropy_logits: target " + std::to_string(t) + " outside " +
                             std::to_string(n) + " classes");
        }
        loss -= std::log(probs[static_cast<size_t>(i) * n + t]);
    }
    loss /= m;
    if (!std::isfinite(loss)) throw NumericError("cross_entropy_logits: non-finite loss");
    return finish({1}, {loss}, {logits},
                  [m, n, targets, probs = std::move(probs)](TensorNode& node) {
                      TensorNode& px = *node.parents[0];
                      if (!px.requires_grad) return;
                      const double g = node.grad[0] / m;
                      std::vector<double> dx(probs.size());
                      for (int i = 0; i < m; ++i) {
                          const size_t off = static_cast<size_t>(i) * n;
                          for (int j = 0; j < n; ++j) dx[off + j] = g * probs[off + j];
                          dx[off + targets[static_cast<size_t>(i)]] -= g;
                      }
                      accumulate_grad(px, dx);
                  });
}

Tensor kl_shifted(const Tensor& p, const Tensor& q, double eps) {
    if (p.shape() != q.shape()) {
        throw ShapeError("kl_shifted: shape mismatch " + shp(p) + " vs " + shp(q));
    }
    if (!(eps > 0.0)) throw ValueError("kl_shifted: eps must be positive");
    check_rank2ish(p, "kl_shifted");
    double total = 0.0;
    for (size_t i = 0; i < p.values().size(); ++i) {
        const double ps = p.values()[i] + eps;
        const double qs = q.values()[i] + eps;
        total += ps * std::log(ps / qs);
    }
    if (!std::isfinite(total)) throw NumericError("kl_shifted: non-finite divergence");
    return finish({1}, {total}, {p, q}, [eps](TensorNode& node) {
        TensorNode& pp = *node.parents[0];
        TensorNode& pq = *node.parents[1];
        const double g = node.grad[0];
        if (pp.requires_grad) {
            std::vector<double> dp(pp.data.size());
            for (size_t i = 0; i < dp.size(); ++i) {
                dp[i] = g * (std::log((pp.data[i] + eps) / (pq.data[i] + eps)) + 1.0);
            }
            accumulate_grad(pp, dp);
        }
        if (pq.requires_grad) {
            std::vector<double> dq(pq.data.size());
            for (size_t i = 0; i < dq.size(); ++i) {
                dq[i] = -g * (pp.data[i] + eps) / (pq.data[i] + eps);
            }
            accumulate_grad(pq, dq);
        }
    });
}

}  // namespace vr::ops
