#include "p2c/graph.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "p2c/errors.h"

namespace p2c {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t) throw ShapeError(std::string(op) + ": null tensor");
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a || !b) throw ShapeError(std::string(op) + ": null tensor");
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

bool Graph::records(std::initializer_list<const Tensor*> inputs) const {
  if (mode_ == GradMode::kNoGrad) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return *t && t->requires_grad(); });
}

Tensor Graph::output(Shape shape, std::vector<double> values,
                     bool requires_grad) {
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ: " +
                     shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  const bool grad = records({&a, &b});
  Tensor result = output({m, n}, std::move(out), grad);
  if (grad) {
    record(result, [a, b, result, m, k, n]() mutable {
      const auto g = result.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        const auto bv = b.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        const auto av = a.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
      }
    });
  }
  return result;
}

Tensor Graph::matvec(const Tensor& m, const Tensor& v) {
  require_rank(m, 2, "matvec");
  require_rank(v, 1, "matvec");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (v.dim(0) != cols) {
    throw ShapeError("matvec: " + shape_to_string(m.shape()) + " x " +
                     shape_to_string(v.shape()));
  }
  std::vector<double> out(rows, 0.0);
  const auto mv = m.values();
  const auto vv = v.values();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = mv.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * vv[j];
    out[i] = acc;
  }
  const bool grad = records({&m, &v});
  Tensor result = output({rows}, std::move(out), grad);
  if (grad) {
    record(result, [m, v, result, rows, cols]() mutable {
      const auto g = result.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad_buffer();
        const auto vv = v.values();
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          double* row = gm.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) row[j] += gi * vv[j];
        }
      }
      if (v.requires_grad()) {
        auto& gv = v.grad_buffer();
        const auto mv = m.values();
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          const double* row = mv.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) gv[j] += gi * row[j];
        }
      }
    });
  }
  return result;
}

Tensor Graph::matvec_transposed(const Tensor& m, const Tensor& v) {
  require_rank(m, 2, "matvec_transposed");
  require_rank(v, 1, "matvec_transposed");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (v.dim(0) != rows) {
    throw ShapeError("matvec_transposed: " + shape_to_string(m.shape()) +
                     "^T x " + shape_to_string(v.shape()));
  }
  std::vector<double> out(cols, 0.0);
  const auto mv = m.values();
  const auto vv = v.values();
  for (std::size_t i = 0; i < rows; ++i) {
    const double vi = vv[i];
    const double* row = mv.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += row[j] * vi;
  }
  const bool grad = records({&m, &v});
  Tensor result = output({cols}, std::move(out), grad);
  if (grad) {
    record(result, [m, v, result, rows, cols]() mutable {
      const auto g = result.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad_buffer();
        const auto vv = v.values();
        for (std::size_t i = 0; i < rows; ++i) {
          double* row = gm.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) row[j] += vv[i] * g[j];
        }
      }
      if (v.requires_grad()) {
        auto& gv = v.grad_buffer();
        const auto mv = m.values();
        for (std::size_t i = 0; i < rows; ++i) {
          const double* row = mv.data() + i * cols;
          double acc = 0.0;
          for (std::size_t j = 0; j < cols; ++j) acc += row[j] * g[j];
          gv[i] += acc;
        }
      }
    });
  }
  return result;
}

Tensor Graph::elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case ElementwiseOp::kMultiply:
      return multiply(a, b);
    case ElementwiseOp::kAdd:
      return add(a, b);
    case ElementwiseOp::kSigmoid:
      return sigmoid(a);
    case ElementwiseOp::kTanh:
      return tanh(a);
  }
  throw DomainError("elementwise: unknown op");
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const bool grad = records({&a, &b});
  Tensor result = output(a.shape(), std::move(out), grad);
  if (grad) {
    record(result, [a, b, result]() mutable {
      const auto g = result.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto& gt = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return result;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const bool grad = records({&a, &b});
  Tensor result = output(a.shape(), std::move(out), grad);
  if (grad) {
    record(result, [a, b, result]() mutable {
      const auto g = result.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return result;
}

Tensor Graph::multiply(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "multiply");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool grad = records({&a, &b});
  Tensor result = output(a.shape(), std::move(out), grad);
  if (grad) {
    record(result, [a, b, result]() mutable {
      const auto g = result.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        const auto bv = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        const auto av = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return result;
}

Tensor Graph::sigmoid(const Tensor& a) {
  if (!a) throw ShapeError("sigmoid: null tensor");
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(av[i]);
  const bool grad = records({&a});
  Tensor result = output(a.shape(), std::move(out), grad);
  if (grad) {
    record(result, [a, result]() mutable {
      const auto g = result.grad();
      const auto y = result.values();
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }
  return result;
}

Tensor Graph::tanh(const Tensor& a) {
  if (!a) throw ShapeError("tanh: null tensor");
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  const bool grad = records({&a});
  Tensor result = output(a.shape(), std::move(out), grad);
  if (grad) {
    record(result, [a, result]() mutable {
      const auto g = result.grad();
      const auto y = result.values();
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }
  return result;
}

Tensor Graph::scale(const Tensor& a, double factor) {
  if (!a) throw ShapeError("scale: null tensor");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& x : out) x *= factor;
  const bool grad = records({&a});
  Tensor result = output(a.shape(), std::move(out), grad);
  if (grad) {
    record(result, [a, result, factor]() mutable {
      const auto g = result.grad();
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return result;
}

Tensor Graph::sum(const Tensor& a) {
  if (!a) throw ShapeError("sum: null tensor");
  double total = 0.0;
  for (double x : a.values()) total += x;
  const bool grad = records({&a});
  Tensor result = output({1}, {total}, grad);
  if (grad) {
    record(result, [a, result]() mutable {
      const double g = result.grad()[0];
      auto& ga = a.grad_buffer();
      for (double& x : ga) x += g;
    });
  }
  return result;
}

Tensor Graph::add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw ShapeError("add_n: no terms");
  std::vector<double> out(terms[0].values().begin(), terms[0].values().end());
  bool grad = false;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    require_same_shape(terms[0], terms[t], "add_n");
    if (t > 0) {
      const auto v = terms[t].values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    }
    grad = grad || records({&terms[t]});
  }
  Tensor result = output(terms[0].shape(), std::move(out), grad);
  if (grad) {
    std::vector<Tensor> inputs(terms.begin(), terms.end());
    record(result, [inputs, result]() mutable {
      const auto g = result.grad();
      for (Tensor& t : inputs) {
        if (!t.requires_grad()) continue;
        auto& gt = t.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return result;
}

Tensor Graph::slice(const Tensor& v, std::size_t offset, std::size_t length) {
  require_rank(v, 1, "slice");
  if (length == 0 || offset + length > v.size()) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " +
                     std::to_string(offset + length) + ") of " +
                     shape_to_string(v.shape()));
  }
  const auto vv = v.values();
  std::vector<double> out(vv.begin() + offset, vv.begin() + offset + length);
  const bool grad = records({&v});
  Tensor result = output({length}, std::move(out), grad);
  if (grad) {
    record(result, [v, result, offset]() mutable {
      const auto g = result.grad();
      auto& gv = v.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gv[offset + i] += g[i];
    });
  }
  return result;
}

Tensor Graph::concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  std::vector<double> out;
  bool grad = false;
  for (const Tensor& p : parts) {
    require_rank(p, 1, "concat");
    out.insert(out.end(), p.values().begin(), p.values().end());
    grad = grad || records({&p});
  }
  const std::size_t n = out.size();
  Tensor result = output({n}, std::move(out), grad);
  if (grad) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    record(result, [inputs, result]() mutable {
      const auto g = result.grad();
      std::size_t offset = 0;
      for (Tensor& p : inputs) {
        if (p.requires_grad()) {
          auto& gp = p.grad_buffer();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return result;
}

Tensor Graph::stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t width = rows[0].size();
  std::vector<double> out;
  out.reserve(rows.size() * width);
  bool grad = false;
  for (const Tensor& r : rows) {
    require_rank(r, 1, "stack_rows");
    if (r.size() != width) {
      throw ShapeError("stack_rows: row widths differ: " +
                       shape_to_string(rows[0].shape()) + " vs " +
                       shape_to_string(r.shape()));
    }
    out.insert(out.end(), r.values().begin(), r.values().end());
    grad = grad || records({&r});
  }
  Tensor result = output({rows.size(), width}, std::move(out), grad);
  if (grad) {
    std::vector<Tensor> inputs(rows.begin(), rows.end());
    record(result, [inputs, result, width]() mutable {
      const auto g = result.grad();
      for (std::size_t r = 0; r < inputs.size(); ++r) {
        if (!inputs[r].requires_grad()) continue;
        auto& gr = inputs[r].grad_buffer();
        for (std::size_t i = 0; i < width; ++i) gr[i] += g[r * width + i];
      }
    });
  }
  return result;
}

Tensor Graph::row(const Tensor& m, std::size_t index) {
  require_rank(m, 2, "row");
  if (index >= m.dim(0)) {
    throw DomainError("row " + std::to_string(index) + " out of range for " +
                      shape_to_string(m.shape()));
  }
  const std::size_t cols = m.dim(1);
  const auto mv = m.values();
  std::vector<double> out(mv.begin() + index * cols,
                          mv.begin() + (index + 1) * cols);
  const bool grad = records({&m});
  Tensor result = output({cols}, std::move(out), grad);
  if (grad) {
    record(result, [m, result, index, cols]() mutable {
      const auto g = result.grad();
      auto& gm = m.grad_buffer();
      for (std::size_t i = 0; i < cols; ++i) gm[index * cols + i] += g[i];
    });
  }
  return result;
}

Tensor Graph::softmax(const Tensor& v) {
  require_rank(v, 1, "softmax");
  const auto vv = v.values();
  const double mx = *std::max_element(vv.begin(), vv.end());
  std::vector<double> out(vv.size());
  double z = 0.0;
  for (std::size_t i = 0; i < vv.size(); ++i) {
    out[i] = std::exp(vv[i] - mx);
    z += out[i];
  }
  for (double& x : out) x /= z;
  const bool grad = records({&v});
  Tensor result = output(v.shape(), std::move(out), grad);
  if (grad) {
    record(result, [v, result]() mutable {
      const auto g = result.grad();
      const auto y = result.values();
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
      auto& gv = v.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += y[i] * (g[i] - dot);
    });
  }
  return result;
}

Tensor Graph::log_softmax(const Tensor& v) {
  require_rank(v, 1, "log_softmax");
  const auto vv = v.values();
  const double mx = *std::max_element(vv.begin(), vv.end());
  double z = 0.0;
  for (double x : vv) z += std::exp(x - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> out(vv.size());
  for (std::size_t i = 0; i < vv.size(); ++i) out[i] = vv[i] - log_z;
  const bool grad = records({&v});
  Tensor result = output(v.shape(), std::move(out), grad);
  if (grad) {
    record(result, [v, result]() mutable {
      const auto g = result.grad();
      const auto y = result.values();
      double total = 0.0;
      for (double x : g) total += x;
      auto& gv = v.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i] - std::exp(y[i]) * total;
    });
  }
  return result;
}

Tensor Graph::attend(const Tensor& keys, const Tensor& query,
                     std::vector<double>* weights) {
  require_rank(keys, 2, "attend");
  require_rank(query, 1, "attend");
  const std::size_t n = keys.dim(0), d = keys.dim(1);
  if (query.dim(0) != d) {
    throw ShapeError("attend: keys " + shape_to_string(keys.shape()) +
                     " vs query " + shape_to_string(query.shape()));
  }
  const auto kv = keys.values();
  const auto qv = query.values();
  std::vector<double> score(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += kv[j * d + i] * qv[i];
    score[j] = acc;
  }
  const double mx = *std::max_element(score.begin(), score.end());
  std::vector<double> unnorm(n);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    unnorm[j] = std::exp(score[j] - mx);
    z += unnorm[j];
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d; ++i) out[i] += unnorm[j] * kv[j * d + i];
  for (double& x : out) x /= z;
  std::vector<double> alpha(n);
  for (std::size_t j = 0; j < n; ++j) alpha[j] = unnorm[j] / z;
  if (weights != nullptr) *weights = alpha;

  const bool grad = records({&keys, &query});
  Tensor result = output({d}, std::move(out), grad);
  if (grad) {
    record(result, [keys, query, result, alpha = std::move(alpha), n, d]() mutable {
      const auto g = result.grad();
      const auto kv = keys.values();
      const auto qv = query.values();
      // d(alpha_j) = k_j . g ; d(score) = alpha * (d(alpha) - alpha . d(alpha))
      std::vector<double> dscore(n);
      double mean = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += kv[j * d + i] * g[i];
        dscore[j] = acc;
        mean += alpha[j] * acc;
      }
      for (std::size_t j = 0; j < n; ++j) dscore[j] = alpha[j] * (dscore[j] - mean);
      if (keys.requires_grad()) {
        auto& gk = keys.grad_buffer();
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < d; ++i)
            gk[j * d + i] += alpha[j] * g[i] + dscore[j] * qv[i];
      }
      if (query.requires_grad()) {
        auto& gq = query.grad_buffer();
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < d; ++i) gq[i] += dscore[j] * kv[j * d + i];
      }
    });
  }
  return result;
}

Tensor Graph::cross_entropy(const Tensor& logits, std::size_t gold) {
  require_rank(logits, 1, "cross_entropy");
  if (gold >= logits.size()) {
    throw DomainError("cross_entropy: gold index " + std::to_string(gold) +
                      " out of range " + shape_to_string(logits.shape()));
  }
  const auto lv = logits.values();
  const double mx = *std::max_element(lv.begin(), lv.end());
  double z = 0.0;
  for (double x : lv) z += std::exp(x - mx);
  const double log_z = mx + std::log(z);
  const bool grad = records({&logits});
  Tensor result = output({1}, {log_z - lv[gold]}, grad);
  if (grad) {
    record(result, [logits, result, gold, log_z]() mutable {
      const double g = result.grad()[0];
      const auto lv = logits.values();
      auto& gl = logits.grad_buffer();
      for (std::size_t i = 0; i < lv.size(); ++i) gl[i] += g * std::exp(lv[i] - log_z);
      gl[gold] -= g;
    });
  }
  return result;
}

Tensor Graph::dropout(const Tensor& v, double rate, std::mt19937_64& rng) {
  if (!v) throw ShapeError("dropout: null tensor");
  if (rate < 0.0 || rate >= 1.0) {
    throw DomainError("dropout rate must be in [0, 1), got " +
                      std::to_string(rate));
  }
  if (rate == 0.0) return v;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(v.size());
  for (double& m : mask) m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return multiply(v, Tensor::from(v.shape(), std::move(mask)));
}

void Graph::backward(const Tensor& loss) {
  if (!loss) throw DomainError("backward: null loss");
  if (loss.size() != 1) {
    throw DomainError("backward: loss must be scalar, got " +
                      shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw DomainError("backward: loss does not require grad");
  }
  Tensor root = loss;
  root.grad_buffer()[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    // Entries off the path to the loss never received a gradient.
    if (it->out.has_grad()) it->rule();
  }
  tape_.clear();
}

}  // namespace p2c
