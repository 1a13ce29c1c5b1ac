#ifndef P2C_TESTS_SUPPORT_H_
#define P2C_TESTS_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "p2c/graph.h"
#include "p2c/tensor.h"
#include "p2c/tolerances.h"

namespace p2c::testing {

struct GradReport {
  double max_rel_error = 0;
  std::string worst;  // "name[index]"
  std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric),
                                 Tolerances::kGradientScaleFloor});
  return std::abs(analytic - numeric) / scale;
}

// Compares backward() against central differences for every element of
// every tensor in `params`. `loss` must build the same scalar each call.
inline GradReport check_gradients(
    std::vector<std::pair<std::string, Tensor>> params,
    const std::function<Tensor(Graph&)>& loss) {
  for (auto& [name, t] : params) t.zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  const double h = Tolerances::kFiniteDifferenceStep;
  GradReport report;
  for (auto& [name, t] : params) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      double up;
      {
        Graph g(GradMode::kNoGrad);
        up = loss(g).item();
      }
      values[i] = saved - h;
      double down;
      {
        Graph g(GradMode::kNoGrad);
        down = loss(g).item();
      }
      values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double err = rel_error(a, numeric);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace p2c::testing

#endif  // P2C_TESTS_SUPPORT_H_
