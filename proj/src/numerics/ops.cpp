#include "hart/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hart/numerics/kernels.hpp"

namespace hart::num {
namespace {

struct Dims {
    std::size_t rows;
    std::size_t cols;
};

Dims dims2(const Tensor& x) { return {x.rows(), x.cols()}; }

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

void require_finite(const Tensor& x, const char* op) {
    if (!x.all_finite()) throw NumericError(std::string(op) + ": non-finite input");
}

// Gradient buffer of `v` if it wants one, else nullptr.
double* grad_ptr(Tape& t, Var v) {
    return t.requires_grad(v) ? t.grad_slot(v).data() : nullptr;
}

bool any_grad(const Tape& t, std::initializer_list<Var> vs) {
    return std::any_of(vs.begin(), vs.end(), [&](Var v) { return t.requires_grad(v); });
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const auto [m, k] = dims2(av);
    const auto [k2, n] = dims2(bv);
    require(k == k2, "matmul: inner dims " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
    Tensor out({m, n});
    kernels::active().gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
    return t.push(std::move(out), any_grad(t, {a, b}),
                  [a, b, m, k, n](Tape& t, const Tensor& g) {
                      const auto& kt = kernels::active();
                      if (double* ga = grad_ptr(t, a)) {
                          kt.gemm_nt(g.data(), t.value(b).data(), ga, m, n, k);
                      }
                      if (double* gb = grad_ptr(t, b)) {
                          kt.gemm_tn(t.value(a).data(), g.data(), gb, k, m, n);
                      }
                  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const auto [m, k] = dims2(av);
    const auto [n, k2] = dims2(bv);
    require(k == k2, "matmul_nt: inner dims " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()) + "^T");
    Tensor out({m, n});
    kernels::active().gemm_nt(av.data(), bv.data(), out.data(), m, k, n);
    return t.push(std::move(out), any_grad(t, {a, b}),
                  [a, b, m, k, n](Tape& t, const Tensor& g) {
                      const auto& kt = kernels::active();
                      // dA = G * B, dB = G^T * A
                      if (double* ga = grad_ptr(t, a)) {
                          kt.gemm_nn(g.data(), t.value(b).data(), ga, m, n, k);
                      }
                      if (double* gb = grad_ptr(t, b)) {
                          kt.gemm_tn(g.data(), t.value(a).data(), gb, n, m, k);
                      }
                  });
}

Var add(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.numel() == bv.numel(), "add: " + shape_str(av.shape()) + " vs " +
                                          shape_str(bv.shape()));
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return t.push(std::move(out), any_grad(t, {a, b}), [a, b](Tape& t, const Tensor& g) {
        t.accumulate_grad(a, g);
        t.accumulate_grad(b, g);
    });
}

Var sub(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.numel() == bv.numel(), "sub: " + shape_str(av.shape()) + " vs " +
                                          shape_str(bv.shape()));
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return t.push(std::move(out), any_grad(t, {a, b}), [a, b](Tape& t, const Tensor& g) {
        t.accumulate_grad(a, g);
        if (double* gb = grad_ptr(t, b)) {
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.numel() == bv.numel(), "mul: " + shape_str(av.shape()) + " vs " +
                                          shape_str(bv.shape()));
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return t.push(std::move(out), any_grad(t, {a, b}), [a, b](Tape& t, const Tensor& g) {
        if (double* ga = grad_ptr(t, a)) {
            const Tensor& bv = t.value(b);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
        }
        if (double* gb = grad_ptr(t, b)) {
            const Tensor& av = t.value(a);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Tape& t, Var a, double s) {
    Tensor out = t.value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return t.push(std::move(out), t.requires_grad(a), [a, s](Tape& t, const Tensor& g) {
        double* ga = t.grad_slot(a).data();
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += s * g[i];
    });
}

Var add_row(Tape& t, Var a, Var row) {
    const Tensor& av = t.value(a);
    const Tensor& rv = t.value(row);
    const auto [m, n] = dims2(av);
    require(rv.numel() == n, "add_row: row of " + std::to_string(rv.numel()) +
                                 " for matrix " + shape_str(av.shape()));
    Tensor out = av;
    for (std::size_t i = 0; i < m; ++i) {
        double* o = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += rv[j];
    }
    return t.push(std::move(out), any_grad(t, {a, row}),
                  [a, row, m, n](Tape& t, const Tensor& g) {
                      t.accumulate_grad(a, g);
                      if (double* gr = grad_ptr(t, row)) {
                          for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
                          }
                      }
                  });
}

Var tanh(Tape& t, Var a) {
    Tensor out = t.value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    const Var y{t.size()};
    return t.push(std::move(out), t.requires_grad(a), [a, y](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(y);
        double* ga = t.grad_slot(a).data();
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
    });
}

Var gelu(Tape& t, Var a) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double k = 0.044715;
    const Tensor& av = t.value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) {
        const double x = av[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x)));
    }
    return t.push(std::move(out), t.requires_grad(a), [a](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        double* ga = t.grad_slot(a).data();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double x = av[i];
            const double u = c * (x + k * x * x * x);
            const double th = std::tanh(u);
            const double du = c * (1.0 + 3.0 * k * x * x);
            ga[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
        }
    });
}

Var embedding(Tape& t, Var table, std::span<const int> ids) {
    const Tensor& tv = t.value(table);
    const auto [vocab, d] = dims2(tv);
    Tensor out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw std::out_of_range("embedding: id " + std::to_string(ids[i]) +
                                    " outside [0, " + std::to_string(vocab) + ")");
        }
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d,
                    out.data() + i * d);
    }
    std::vector<int> idv(ids.begin(), ids.end());
    return t.push(std::move(out), t.requires_grad(table),
                  [table, idv = std::move(idv), d](Tape& t, const Tensor& g) {
                      double* gt = t.grad_slot(table).data();
                      for (std::size_t i = 0; i < idv.size(); ++i) {
                          double* dst = gt + static_cast<std::size_t>(idv[i]) * d;
                          const double* src = g.data() + i * d;
                          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                      }
                  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t m = t.value(parts[0]).rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    bool needs = false;
    for (Var p : parts) {
        const Tensor& pv = t.value(p);
        require(pv.rows() == m, "concat_cols: row count mismatch");
        widths.push_back(pv.cols());
        total += pv.cols();
        needs = needs || t.requires_grad(p);
    }
    Tensor out({m, total});
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const Tensor& pv = t.value(parts[pi]);
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(pv.data() + i * widths[pi], widths[pi], out.data() + i * total + off);
        }
        off += widths[pi];
    }
    std::vector<Var> pv(parts.begin(), parts.end());
    return t.push(std::move(out), needs,
                  [pv = std::move(pv), widths, m, total](Tape& t, const Tensor& g) {
                      std::size_t off = 0;
                      for (std::size_t pi = 0; pi < pv.size(); ++pi) {
                          if (double* gp = grad_ptr(t, pv[pi])) {
                              for (std::size_t i = 0; i < m; ++i) {
                                  const double* src = g.data() + i * total + off;
                                  double* dst = gp + i * widths[pi];
                                  for (std::size_t j = 0; j < widths[pi]; ++j) dst[j] += src[j];
                              }
                          }
                          off += widths[pi];
                      }
                  });
}

Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t width) {
    const Tensor& av = t.value(a);
    const auto [m, n] = dims2(av);
    require(start + width <= n, "slice_cols: [" + std::to_string(start) + ", " +
                                    std::to_string(start + width) + ") of " +
                                    std::to_string(n) + " columns");
    Tensor out({m, width});
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(av.data() + i * n + start, width, out.data() + i * width);
    }
    return t.push(std::move(out), t.requires_grad(a),
                  [a, start, width, m, n](Tape& t, const Tensor& g) {
                      double* ga = t.grad_slot(a).data();
                      for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t j = 0; j < width; ++j) {
                              ga[i * n + start + j] += g[i * width + j];
                          }
                      }
                  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const std::size_t n = t.value(parts[0]).cols();
    std::size_t rows = 0;
    bool needs = false;
    for (Var p : parts) {
        require(t.value(p).cols() == n, "concat_rows: column count mismatch");
        rows += t.value(p).rows();
        needs = needs || t.requires_grad(p);
    }
    Tensor out({rows, n});
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& pv = t.value(p);
        std::copy_n(pv.data(), pv.numel(), out.data() + off);
        off += pv.numel();
    }
    std::vector<Var> pv(parts.begin(), parts.end());
    return t.push(std::move(out), needs, [pv = std::move(pv)](Tape& t, const Tensor& g) {
        std::size_t off = 0;
        for (Var p : pv) {
            const std::size_t cnt = t.value(p).numel();
            if (double* gp = grad_ptr(t, p)) {
                for (std::size_t j = 0; j < cnt; ++j) gp[j] += g[off + j];
            }
            off += cnt;
        }
    });
}

Var masked_fill(Tape& t, Var a, std::span<const std::uint8_t> fill_where, double value) {
    Tensor out = t.value(a);
    require(fill_where.size() == out.numel(), "masked_fill: mask size mismatch");
    for (std::size_t i = 0; i < out.numel(); ++i) {
        if (fill_where[i]) out[i] = value;
    }
    std::vector<std::uint8_t> mask(fill_where.begin(), fill_where.end());
    return t.push(std::move(out), t.requires_grad(a),
                  [a, mask = std::move(mask)](Tape& t, const Tensor& g) {
                      double* ga = t.grad_slot(a).data();
                      for (std::size_t i = 0; i < g.numel(); ++i) {
                          if (!mask[i]) ga[i] += g[i];
                      }
                  });
}

Tensor softmax_rows(const Tensor& a) {
    require_finite(a, "softmax_rows");
    const auto [m, n] = dims2(a);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a.data() + i * n;
        double* y = out.data() + i * n;
        const double mx = *std::max_element(x, x + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        const double inv = 1.0 / s;
        for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
    }
    return out;
}

Var softmax_rows(Tape& t, Var a) {
    Tensor out = softmax_rows(t.value(a));
    const auto [m, n] = dims2(out);
    const Var y{t.size()};
    return t.push(std::move(out), t.requires_grad(a), [a, y, m, n](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(y);
        double* ga = t.grad_slot(a).data();
        for (std::size_t i = 0; i < m; ++i) {
            const double* yr = yv.data() + i * n;
            const double* gr = g.data() + i * n;
            double dotv = 0.0;
            for (std::size_t j = 0; j < n; ++j) dotv += yr[j] * gr[j];
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += yr[j] * (gr[j] - dotv);
        }
    });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = t.value(x);
    require_finite(xv, "layer_norm");
    const auto [m, n] = dims2(xv);
    require(n >= 1, "layer_norm: empty rows");
    require(t.value(gamma).numel() == n && t.value(beta).numel() == n,
            "layer_norm: gain/bias length must equal row width " + std::to_string(n));
    const Tensor& gv = t.value(gamma);
    const Tensor& bv = t.value(beta);
    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    std::vector<double> rstd(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = xv.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xr[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(n);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xr[j] - mu) * rstd[i];
            xhat[i * n + j] = h;
            out[i * n + j] = h * gv[j] + bv[j];
        }
    }
    return t.push(std::move(out), any_grad(t, {x, gamma, beta}),
                  [x, gamma, beta, m, n, xhat = std::move(xhat),
                   rstd = std::move(rstd)](Tape& t, const Tensor& g) {
                      const Tensor& gv = t.value(gamma);
                      double* gg = grad_ptr(t, gamma);
                      double* gb = grad_ptr(t, beta);
                      double* gx = grad_ptr(t, x);
                      const double inv_n = 1.0 / static_cast<double>(n);
                      for (std::size_t i = 0; i < m; ++i) {
                          const double* gr = g.data() + i * n;
                          const double* hr = xhat.data() + i * n;
                          double s1 = 0.0;  // sum dy*gamma
                          double s2 = 0.0;  // sum dy*gamma*xhat
                          for (std::size_t j = 0; j < n; ++j) {
                              if (gg) gg[j] += gr[j] * hr[j];
                              if (gb) gb[j] += gr[j];
                              const double d = gr[j] * gv[j];
                              s1 += d;
                              s2 += d * hr[j];
                          }
                          if (gx) {
                              for (std::size_t j = 0; j < n; ++j) {
                                  const double d = gr[j] * gv[j];
                                  gx[i * n + j] +=
                                      rstd[i] * (d - inv_n * s1 - hr[j] * inv_n * s2);
                              }
                          }
                      }
                  });
}

Var masked_mean_rows(Tape& t, Var a, std::span<const std::uint8_t> row_keep) {
    const Tensor& av = t.value(a);
    const auto [m, n] = dims2(av);
    require(row_keep.size() == m, "masked_mean_rows: mask length " +
                                      std::to_string(row_keep.size()) + " for " +
                                      std::to_string(m) + " rows");
    std::size_t count = 0;
    for (auto k : row_keep) count += k ? 1 : 0;
    if (count == 0) throw NumericError("masked_mean_rows: every row is masked");
    Tensor out({1, n});
    for (std::size_t i = 0; i < m; ++i) {
        if (!row_keep[i]) continue;
        for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
    std::vector<std::uint8_t> keep(row_keep.begin(), row_keep.end());
    return t.push(std::move(out), t.requires_grad(a),
                  [a, keep = std::move(keep), m, n, inv](Tape& t, const Tensor& g) {
                      double* ga = t.grad_slot(a).data();
                      for (std::size_t i = 0; i < m; ++i) {
                          if (!keep[i]) continue;
                          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
                      }
                  });
}

Var sum(Tape& t, Var a) {
    const Tensor& av = t.value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
    return t.push(Tensor({1}, {s}), t.requires_grad(a), [a](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_slot(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g[0];
    });
}

Var mean(Tape& t, Var a) {
    const std::size_t n = t.value(a).numel();
    require(n > 0, "mean: empty tensor");
    return scale(t, sum(t, a), 1.0 / static_cast<double>(n));
}

std::vector<double> row_nll(const Tensor& logits, std::span<const int> targets) {
    const auto [m, v] = dims2(logits);
    require(targets.size() == m, "row_nll: " + std::to_string(targets.size()) +
                                     " targets for " + std::to_string(m) + " rows");
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        if (targets[i] < 0) continue;
        if (static_cast<std::size_t>(targets[i]) >= v) {
            throw std::out_of_range("row_nll: target " + std::to_string(targets[i]) +
                                    " outside vocabulary of " + std::to_string(v));
        }
        const double* x = logits.data() + i * v;
        const double mx = *std::max_element(x, x + v);
        double s = 0.0;
        for (std::size_t j = 0; j < v; ++j) s += std::exp(x[j] - mx);
        out[i] = (std::log(s) + mx) - x[targets[i]];
    }
    return out;
}

Var cross_entropy_sum(Tape& t, Var logits, std::span<const int> targets) {
    const Tensor& lv = t.value(logits);
    require_finite(lv, "cross_entropy_sum");
    const std::vector<double> nll = row_nll(lv, targets);
    double s = 0.0;
    for (std::size_t i = 0; i < nll.size(); ++i) {
        if (targets[i] >= 0) s += nll[i];
    }
    std::vector<int> tg(targets.begin(), targets.end());
    return t.push(Tensor({1}, {s}), t.requires_grad(logits),
                  [logits, tg = std::move(tg)](Tape& t, const Tensor& g) {
                      const Tensor& lv = t.value(logits);
                      const std::size_t v = lv.cols();
                      double* gl = t.grad_slot(logits).data();
                      for (std::size_t i = 0; i < tg.size(); ++i) {
                          if (tg[i] < 0) continue;
                          const double* x = lv.data() + i * v;
                          const double mx = *std::max_element(x, x + v);
                          double s = 0.0;
                          for (std::size_t j = 0; j < v; ++j) s += std::exp(x[j] - mx);
                          for (std::size_t j = 0; j < v; ++j) {
                              gl[i * v + j] += g[0] * std::exp(x[j] - mx) / s;
                          }
                          gl[i * v + static_cast<std::size_t>(tg[i])] -= g[0];
                      }
                  });
}

Var dropout(Tape& t, Var a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const Tensor& av = t.value(a);
    std::vector<double> keep(av.numel());
    const double s = 1.0 / (1.0 - p);
    for (auto& k : keep) k = rng.uniform() >= p ? s : 0.0;
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= keep[i];
    return t.push(std::move(out), t.requires_grad(a),
                  [a, keep = std::move(keep)](Tape& t, const Tensor& g) {
                      double* ga = t.grad_slot(a).data();
                      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * keep[i];
                  });
}

}  // namespace hart::num
