#ifndef P2C_GRAPH_H_
#define P2C_GRAPH_H_

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "p2c/tensor.h"

namespace p2c {

enum class GradMode {
  kRecord,  // operations on grad-requiring inputs are taped
  kNoGrad,  // pure evaluation; nothing is taped
};

enum class ElementwiseOp { kMultiply, kAdd, kSigmoid, kTanh };

// Define-by-run tape of differentiable operations.
//
// Every operation whose inputs require gradients appends one entry holding
// its backward rule. Since an entry is appended only after its operands
// exist, tape order is a topological order and backward() simply walks it
// in reverse. A Graph is single-threaded; concurrent workers use their own.
class Graph {
 public:
  explicit Graph(GradMode mode = GradMode::kRecord) : mode_(mode) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  GradMode mode() const { return mode_; }
  std::size_t size() const { return tape_.size(); }

  // [m x k] * [k x n] -> [m x n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  // [m x n] * [n] -> [m]
  Tensor matvec(const Tensor& m, const Tensor& v);
  // transpose([m x n]) * [m] -> [n]
  Tensor matvec_transposed(const Tensor& m, const Tensor& v);

  Tensor elementwise(ElementwiseOp op, const Tensor& a,
                     const Tensor& b = Tensor());
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor multiply(const Tensor& a, const Tensor& b);
  Tensor sigmoid(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor scale(const Tensor& a, double factor);

  // Sum of all elements, as a scalar.
  Tensor sum(const Tensor& a);
  // Elementwise sum of equally shaped tensors.
  Tensor add_n(std::span<const Tensor> terms);

  // Vector helpers.
  Tensor slice(const Tensor& v, std::size_t offset, std::size_t length);
  Tensor concat(std::span<const Tensor> parts);
  Tensor stack_rows(std::span<const Tensor> rows);
  Tensor row(const Tensor& m, std::size_t index);

  Tensor softmax(const Tensor& v);
  Tensor log_softmax(const Tensor& v);

  // Soft attention of `query` over the rows of `keys`:
  //   weights = softmax(keys * query),  result = transpose(keys) * weights.
  // The weighted sum is normalized after accumulation, so identical rows
  // reproduce themselves exactly. `weights`, if given, receives the
  // distribution.
  Tensor attend(const Tensor& keys, const Tensor& query,
                std::vector<double>* weights = nullptr);

  // -log softmax(logits)[gold], as a scalar.
  Tensor cross_entropy(const Tensor& logits, std::size_t gold);

  // Inverted dropout; identity when rate == 0.
  Tensor dropout(const Tensor& v, double rate, std::mt19937_64& rng);

  // Accumulates d(loss)/d(leaf) into every reachable grad-requiring tensor,
  // then clears the tape.
  void backward(const Tensor& loss);

  void clear() { tape_.clear(); }

 private:
  bool records(std::initializer_list<const Tensor*> inputs) const;
  Tensor output(Shape shape, std::vector<double> values, bool requires_grad);
  void record(const Tensor& out, std::function<void()> rule) {
    tape_.push_back({out, std::move(rule)});
  }

  struct Entry {
    Tensor out;
    std::function<void()> rule;
  };

  GradMode mode_;
  std::vector<Entry> tape_;
};

}  // namespace p2c

#endif  // P2C_GRAPH_H_
