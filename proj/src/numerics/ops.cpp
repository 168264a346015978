#include "mate/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mate/numerics/kernels.hpp"

namespace mate::num {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) {
    throw ShapeError(what);
  }
}

void require_same_shape(Var a, Var b, const char* op) {
  require(a.value().same_shape(b.value()), std::string(op) + ": shape mismatch " +
                                               shape_string(a.value().shape()) + " vs " +
                                               shape_string(b.value().shape()));
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) {
    throw std::invalid_argument("operands recorded on different tapes");
  }
  return *a.tape;
}

Tensor matrix_like(std::size_t rows, std::size_t cols) { return Tensor::matrix(rows, cols); }

void accumulate(Tensor& into, const Tensor& from, double alpha = 1.0) {
  kernels::active().axpy(alpha, from.data(), into.data(), from.size());
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.rows(), "matmul: inner dims " + shape_string(av.shape()) + " x " +
                                      shape_string(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = matrix_like(m, n);
  kernels::active().gemm_nn(m, n, k, av.data(), bv.data(), out.data());
  return t.record(std::move(out), {a, b}, [a, b, m, n, k](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    const auto& kt = kernels::active();
    if (tp.requires_grad(a.id)) {
      kt.gemm_nt(m, k, n, g.data(), tp.value(b.id).data(), tp.grad(a.id).data());
    }
    if (tp.requires_grad(b.id)) {
      kt.gemm_tn(k, n, m, tp.value(a.id).data(), g.data(), tp.grad(b.id).data());
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.cols(), "matmul_nt: inner dims " + shape_string(av.shape()) + " x " +
                                      shape_string(bv.shape()) + "^T");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out = matrix_like(m, n);
  kernels::active().gemm_nt(m, n, k, av.data(), bv.data(), out.data());
  return t.record(std::move(out), {a, b}, [a, b, m, n, k](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    const auto& kt = kernels::active();
    if (tp.requires_grad(a.id)) {
      kt.gemm_nn(m, k, n, g.data(), tp.value(b.id).data(), tp.grad(a.id).data());
    }
    if (tp.requires_grad(b.id)) {
      kt.gemm_tn(n, k, m, g.data(), tp.value(a.id).data(), tp.grad(b.id).data());
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  accumulate(out, b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(a.id)) accumulate(tp.grad(a.id), g);
    if (tp.requires_grad(b.id)) accumulate(tp.grad(b.id), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  accumulate(out, b.value(), -1.0);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(a.id)) accumulate(tp.grad(a.id), g);
    if (tp.requires_grad(b.id)) accumulate(tp.grad(b.id), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(a.id)) {
      Tensor& ga = tp.grad(a.id);
      const Tensor& bv = tp.value(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b.id)) {
      Tensor& gb = tp.grad(b.id);
      const Tensor& av = tp.value(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& tp, std::uint32_t self) {
    accumulate(tp.grad(a.id), tp.grad(self), s);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Tensor& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == a.cols(),
          "add_row: row " + shape_string(rv.shape()) + " vs " + shape_string(a.value().shape()));
  Tensor out = a.value();
  const std::size_t n = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    kernels::active().axpy(1.0, rv.data(), out.data() + r * n, n);
  }
  return t.record(std::move(out), {a, row}, [a, row, n](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(a.id)) accumulate(tp.grad(a.id), g);
    if (tp.requires_grad(row.id)) {
      Tensor& gr = tp.grad(row.id);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        kernels::active().axpy(1.0, g.data() + r * n, gr.data(), n);
      }
    }
  });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var gelu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = gelu_value(v);
  return a.tape->record(std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(a.id);
    Tensor& ga = tp.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_slope(x[i]);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), d = xv.cols();
  require(gain.value().size() == d && bias.value().size() == d,
          "layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  Tensor out = matrix_like(rows, d);
  Tensor normed = matrix_like(rows, d);
  std::vector<double> inv_std(rows);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = xv.row(r);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (in[c] - mu) * is;
      normed(r, c) = h;
      out(r, c) = h * gv[c] + bv[c];
    }
  }
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, rows, d, normed = std::move(normed),
                   inv_std = std::move(inv_std)](Tape& tp, std::uint32_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& gv = tp.value(gain.id);
                    if (tp.requires_grad(gain.id) || tp.requires_grad(bias.id)) {
                      Tensor* gg = tp.requires_grad(gain.id) ? &tp.grad(gain.id) : nullptr;
                      Tensor* gb = tp.requires_grad(bias.id) ? &tp.grad(bias.id) : nullptr;
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < d; ++c) {
                          if (gg) (*gg)[c] += g(r, c) * normed(r, c);
                          if (gb) (*gb)[c] += g(r, c);
                        }
                      }
                    }
                    if (tp.requires_grad(x.id)) {
                      Tensor& gx = tp.grad(x.id);
                      std::vector<double> dh(d);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double mean_dh = 0.0, mean_dh_h = 0.0;
                        for (std::size_t c = 0; c < d; ++c) {
                          dh[c] = g(r, c) * gv[c];
                          mean_dh += dh[c];
                          mean_dh_h += dh[c] * normed(r, c);
                        }
                        mean_dh /= static_cast<double>(d);
                        mean_dh_h /= static_cast<double>(d);
                        for (std::size_t c = 0; c < d; ++c) {
                          gx(r, c) += inv_std[r] * (dh[c] - mean_dh - normed(r, c) * mean_dh_h);
                        }
                      }
                    }
                  });
}

Var softmax_rows(Var scores, std::span<const bool> key_valid) {
  const Tensor& sv = scores.value();
  const std::size_t rows = sv.rows(), cols = sv.cols();
  require(key_valid.empty() || key_valid.size() == cols,
          "softmax_rows: key mask has " + std::to_string(key_valid.size()) + " entries for " +
              std::to_string(cols) + " columns");
  Tensor out = matrix_like(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (key_valid.empty() || key_valid[c]) mx = std::max(mx, sv(r, c));
    }
    if (!std::isfinite(mx)) continue;  // no valid key: all-zero row
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (key_valid.empty() || key_valid[c]) {
        const double e = std::exp(sv(r, c) - mx);
        out(r, c) = e;
        z += e;
      }
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= z;
  }
  return scores.tape->record(std::move(out), {scores}, [scores, rows, cols](Tape& tp,
                                                                            std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& p = tp.value(self);
    Tensor& gs = tp.grad(scores.id);
    for (std::size_t r = 0; r < rows; ++r) {
      const double inner = kernels::active().dot(g.data() + r * cols, p.data() + r * cols, cols);
      for (std::size_t c = 0; c < cols; ++c) gs(r, c) += p(r, c) * (g(r, c) - inner);
    }
  });
}

Var log_softmax_rows(Var logits) {
  const Tensor& lv = logits.value();
  const std::size_t rows = lv.rows(), cols = lv.cols();
  require(cols >= 1, "log_softmax_rows: need at least one class");
  Tensor out = matrix_like(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, lv(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(lv(r, c) - mx);
    const double log_z = std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = (lv(r, c) - mx) - log_z;
  }
  return logits.tape->record(std::move(out), {logits}, [logits, rows, cols](Tape& tp,
                                                                            std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gl = tp.grad(logits.id);
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gsum += g(r, c);
      for (std::size_t c = 0; c < cols; ++c) gl(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
    }
  });
}

Var cross_entropy_rows(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  const std::size_t rows = lv.rows(), cols = lv.cols();
  require(labels.size() == rows, "cross_entropy: " + std::to_string(labels.size()) +
                                     " labels for " + std::to_string(rows) + " rows");
  Tensor out = matrix_like(rows, 1);
  Tensor probs = matrix_like(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[r]) +
                              " outside [0," + std::to_string(cols) + ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, lv(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs(r, c) = std::exp(lv(r, c) - mx);
      z += probs(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) probs(r, c) /= z;
    out(r, 0) = std::log(z) - (lv(r, static_cast<std::size_t>(labels[r])) - mx);
  }
  std::vector<int> label_copy(labels.begin(), labels.end());
  return logits.tape->record(
      std::move(out), {logits},
      [logits, rows, cols, probs = std::move(probs), label_copy = std::move(label_copy)](
          Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& gl = tp.grad(logits.id);
        for (std::size_t r = 0; r < rows; ++r) {
          const double gr = g(r, 0);
          for (std::size_t c = 0; c < cols; ++c) gl(r, c) += gr * probs(r, c);
          gl(r, static_cast<std::size_t>(label_copy[r])) -= gr;
        }
      });
}

Var cross_entropy(Var logits, int label) {
  require(logits.rows() == 1, "cross_entropy: expects a single logits row");
  const int labels[1] = {label};
  return cross_entropy_rows(logits, labels);
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  const std::size_t d = tv.cols();
  Tensor out = matrix_like(ids.size(), d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                              std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
  }
  std::vector<int> id_copy(ids.begin(), ids.end());
  return table.tape->record(std::move(out), {table},
                            [table, d, id_copy = std::move(id_copy)](Tape& tp, std::uint32_t self) {
                              const Tensor& g = tp.grad(self);
                              Tensor& gt = tp.grad(table.id);
                              for (std::size_t r = 0; r < id_copy.size(); ++r) {
                                kernels::active().axpy(
                                    1.0, g.data() + r * d,
                                    gt.data() + static_cast<std::size_t>(id_copy[r]) * d, d);
                              }
                            });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.cols() == d, "concat_rows: column mismatch");
    require(p.tape == parts.front().tape, "concat_rows: mixed tapes");
    total += p.rows();
  }
  Tensor out = matrix_like(total, d);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + offset * d);
    offset += p.rows();
  }
  return parts.front().tape->record(std::move(out), parts, [parts, d](Tape& tp,
                                                                      std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t n = tp.value(p.id).rows() * d;
      if (tp.requires_grad(p.id)) {
        kernels::active().axpy(1.0, g.data() + offset * d, tp.grad(p.id).data(), n);
      }
      offset += tp.value(p.id).rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row mismatch");
    require(p.tape == parts.front().tape, "concat_cols: mixed tapes");
    total += p.cols();
  }
  Tensor out = matrix_like(rows, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * v.cols(), v.cols(), out.data() + r * total + offset);
    }
    offset += v.cols();
  }
  return parts.front().tape->record(std::move(out), parts, [parts, rows, total](
                                                               Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t w = tp.value(p.id).cols();
      if (tp.requires_grad(p.id)) {
        Tensor& gp = tp.grad(p.id);
        for (std::size_t r = 0; r < rows; ++r) {
          kernels::active().axpy(1.0, g.data() + r * total + offset, gp.data() + r * w, w);
        }
      }
      offset += w;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require(begin <= end && end <= xv.rows(), "slice_rows: [" + std::to_string(begin) + "," +
                                                std::to_string(end) + ") outside " +
                                                std::to_string(xv.rows()) + " rows");
  const std::size_t d = xv.cols();
  Tensor out = matrix_like(end - begin, d);
  std::copy_n(xv.data() + begin * d, (end - begin) * d, out.data());
  return x.tape->record(std::move(out), {x}, [x, begin, end, d](Tape& tp, std::uint32_t self) {
    kernels::active().axpy(1.0, tp.grad(self).data(), tp.grad(x.id).data() + begin * d,
                           (end - begin) * d);
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require(begin <= end && end <= xv.cols(), "slice_cols: [" + std::to_string(begin) + "," +
                                                std::to_string(end) + ") outside " +
                                                std::to_string(xv.cols()) + " cols");
  const std::size_t rows = xv.rows(), d = xv.cols(), w = end - begin;
  Tensor out = matrix_like(rows, w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * d + begin, w, out.data() + r * w);
  }
  return x.tape->record(std::move(out), {x}, [x, begin, rows, d, w](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(x.id);
    for (std::size_t r = 0; r < rows; ++r) {
      kernels::active().axpy(1.0, g.data() + r * w, gx.data() + r * d + begin, w);
    }
  });
}

Var select(Var x, std::span<const std::pair<std::size_t, std::size_t>> coords) {
  const Tensor& xv = x.value();
  Tensor out = matrix_like(coords.size(), 1);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto [r, c] = coords[i];
    require(r < xv.rows() && c < xv.cols(), "select: coordinate outside tensor");
    out(i, 0) = xv(r, c);
  }
  std::vector<std::pair<std::size_t, std::size_t>> copy(coords.begin(), coords.end());
  return x.tape->record(std::move(out), {x}, [x, copy = std::move(copy)](Tape& tp,
                                                                         std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(x.id);
    for (std::size_t i = 0; i < copy.size(); ++i) gx(copy[i].first, copy[i].second) += g[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape->record(Tensor::scalar(s), {x}, [x](Tape& tp, std::uint32_t self) {
    const double g = tp.grad(self)[0];
    for (double& v : tp.grad(x.id).values()) v += g;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  require(n > 0, "mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.value().size() == b.value().size(), "dot: size mismatch");
  const double s = kernels::active().dot(a.value().data(), b.value().data(), a.value().size());
  return t.record(Tensor::scalar(s), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const double g = tp.grad(self)[0];
    if (tp.requires_grad(a.id)) accumulate(tp.grad(a.id), tp.value(b.id), g);
    if (tp.requires_grad(b.id)) accumulate(tp.grad(b.id), tp.value(a.id), g);
  });
}

Var mean_pool(Var seq, std::span<const bool> valid) {
  const Tensor& sv = seq.value();
  const std::size_t rows = sv.rows(), d = sv.cols();
  require(valid.empty() || valid.size() == rows, "mean_pool: mask has " + std::to_string(valid.size()) +
                                                     " entries for " + std::to_string(rows) + " rows");
  std::vector<bool> mask(rows, true);
  if (!valid.empty()) mask.assign(valid.begin(), valid.end());
  const std::size_t count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (count == 0) {
    throw std::invalid_argument("empty pool");
  }
  const double w = 1.0 / static_cast<double>(count);
  Tensor out = matrix_like(1, d);
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r]) kernels::active().axpy(1.0, sv.data() + r * d, out.data(), d);
  }
  for (double& v : out.values()) v *= w;
  return seq.tape->record(std::move(out), {seq},
                          [seq, rows, d, w, mask = std::move(mask)](Tape& tp, std::uint32_t self) {
                            const Tensor& g = tp.grad(self);
                            Tensor& gs = tp.grad(seq.id);
                            for (std::size_t r = 0; r < rows; ++r) {
                              if (mask[r]) kernels::active().axpy(w, g.data(), gs.data() + r * d, d);
                            }
                          });
}

std::size_t conv1d_output_length(std::size_t frames, std::size_t stride) {
  if (stride == 0) {
    throw std::invalid_argument("conv1d: stride must be positive");
  }
  return (frames + stride - 1) / stride;
}

std::size_t conv_output_length(std::size_t frames, std::span<const std::size_t> strides) {
  for (std::size_t s : strides) frames = conv1d_output_length(frames, s);
  return frames;
}

Var conv1d(Var input, Var weight, Var bias, std::size_t kernel_width, std::size_t stride) {
  Tape& t = tape_of(input, weight);
  const Tensor& xv = input.value();
  if (stride == 0) {
    throw std::invalid_argument("conv1d: stride must be positive");
  }
  if (kernel_width == 0 || kernel_width % 2 == 0) {
    throw std::invalid_argument("conv1d: kernel width must be odd");
  }
  if (xv.rows() == 0) {
    throw std::invalid_argument("empty sequence");
  }
  const std::size_t frames = xv.rows(), in_ch = xv.cols();
  require(weight.rows() == kernel_width * in_ch,
          "conv1d: weight " + shape_string(weight.value().shape()) + " does not match width " +
              std::to_string(kernel_width) + " x " + std::to_string(in_ch) + " channels");
  const std::size_t out_ch = weight.cols();
  const std::size_t out_frames = conv1d_output_length(frames, stride);
  const std::size_t pad = (kernel_width - 1) / 2;
  const std::size_t patch = kernel_width * in_ch;

  // im2col: one row per output frame, taps laid out consecutively.
  Tensor cols = matrix_like(out_frames, patch);
  for (std::size_t o = 0; o < out_frames; ++o) {
    for (std::size_t q = 0; q < kernel_width; ++q) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + q) -
                                 static_cast<std::ptrdiff_t>(pad);
      if (src < 0 || static_cast<std::size_t>(src) >= frames) continue;
      std::copy_n(xv.data() + static_cast<std::size_t>(src) * in_ch, in_ch,
                  cols.data() + o * patch + q * in_ch);
    }
  }
  Tensor out = matrix_like(out_frames, out_ch);
  kernels::active().gemm_nn(out_frames, out_ch, patch, cols.data(), weight.value().data(),
                            out.data());
  const Tensor& bv = bias.value();
  require(bv.size() == out_ch, "conv1d: bias size mismatch");
  for (std::size_t o = 0; o < out_frames; ++o) {
    kernels::active().axpy(1.0, bv.data(), out.data() + o * out_ch, out_ch);
  }
  return t.record(
      std::move(out), {input, weight, bias},
      [input, weight, bias, frames, in_ch, out_ch, out_frames, pad, patch, kernel_width, stride,
       cols = std::move(cols)](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.grad(self);
        const auto& kt = kernels::active();
        if (tp.requires_grad(weight.id)) {
          kt.gemm_tn(patch, out_ch, out_frames, cols.data(), g.data(), tp.grad(weight.id).data());
        }
        if (tp.requires_grad(bias.id)) {
          Tensor& gb = tp.grad(bias.id);
          for (std::size_t o = 0; o < out_frames; ++o) kt.axpy(1.0, g.data() + o * out_ch, gb.data(), out_ch);
        }
        if (tp.requires_grad(input.id)) {
          Tensor dcols = Tensor::matrix(out_frames, patch);
          kt.gemm_nt(out_frames, patch, out_ch, g.data(), tp.value(weight.id).data(), dcols.data());
          Tensor& gx = tp.grad(input.id);
          for (std::size_t o = 0; o < out_frames; ++o) {
            for (std::size_t q = 0; q < kernel_width; ++q) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + q) -
                                         static_cast<std::ptrdiff_t>(pad);
              if (src < 0 || static_cast<std::size_t>(src) >= frames) continue;
              kt.axpy(1.0, dcols.data() + o * patch + q * in_ch,
                      gx.data() + static_cast<std::size_t>(src) * in_ch, in_ch);
            }
          }
        }
      });
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) {
    return x;
  }
  if (rate >= 1.0) {
    throw std::invalid_argument("dropout rate must be below 1");
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(x.value().shape(), 0.0);
  for (double& m : mask.values()) m = keep(rng) ? keep_scale : 0.0;
  return mul(x, x.tape->constant(std::move(mask)));
}

}  // namespace mate::num
