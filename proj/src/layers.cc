#include "p2c/layers.h"

#include <array>

#include "p2c/errors.h"

namespace p2c {

Tensor gru_step(Graph& g, const GruParams& p, const Tensor& x,
                const Tensor& h) {
  const std::size_t hidden = p.hidden();
  const Tensor wx = g.add(g.matvec(p.w, x), p.b);
  const Tensor uh = g.matvec(p.u_gates, h);
  const Tensor r = g.sigmoid(g.add(g.slice(wx, 0, hidden), g.slice(uh, 0, hidden)));
  const Tensor z =
      g.sigmoid(g.add(g.slice(wx, hidden, hidden), g.slice(uh, hidden, hidden)));
  const Tensor n = g.tanh(
      g.add(g.slice(wx, 2 * hidden, hidden), g.matvec(p.u_cand, g.multiply(r, h))));
  // z * h + (1 - z) * n == n + z * (h - n)
  return g.add(n, g.multiply(z, g.sub(h, n)));
}

LstmState lstm_step(Graph& g, const LstmParams& p, const Tensor& x,
                    const LstmState& state) {
  const std::size_t hidden = p.hidden();
  const Tensor gates =
      g.add(g.add(g.matvec(p.w, x), g.matvec(p.u, state.h)), p.b);
  const Tensor i = g.sigmoid(g.slice(gates, 0, hidden));
  const Tensor f = g.sigmoid(g.slice(gates, hidden, hidden));
  const Tensor cand = g.tanh(g.slice(gates, 2 * hidden, hidden));
  const Tensor o = g.sigmoid(g.slice(gates, 3 * hidden, hidden));
  LstmState next;
  next.c = g.add(g.multiply(f, state.c), g.multiply(i, cand));
  next.h = g.multiply(o, g.tanh(next.c));
  return next;
}

std::vector<Tensor> run_bigru(Graph& g, const GruParams& forward,
                              const GruParams& backward,
                              std::span<const Tensor> inputs) {
  const std::size_t n = inputs.size();
  if (n == 0) throw DomainError("run_bigru: empty sequence");
  std::vector<Tensor> fwd(n), bwd(n);
  Tensor h = Tensor::zeros({forward.hidden()});
  for (std::size_t t = 0; t < n; ++t) {
    h = gru_step(g, forward, inputs[t], h);
    fwd[t] = h;
  }
  h = Tensor::zeros({backward.hidden()});
  for (std::size_t t = n; t-- > 0;) {
    h = gru_step(g, backward, inputs[t], h);
    bwd[t] = h;
  }
  std::vector<Tensor> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::array<Tensor, 2> parts = {fwd[t], bwd[t]};
    out[t] = g.concat(parts);
  }
  return out;
}

BiLstmOutput run_bilstm(Graph& g, const LstmParams& forward,
                        const LstmParams& backward,
                        std::span<const Tensor> inputs) {
  const std::size_t n = inputs.size();
  if (n == 0) throw DomainError("run_bilstm: empty sequence");
  BiLstmOutput result;
  std::vector<Tensor> fwd(n), bwd(n);
  LstmState s{Tensor::zeros({forward.hidden()}), Tensor::zeros({forward.hidden()})};
  for (std::size_t t = 0; t < n; ++t) {
    s = lstm_step(g, forward, inputs[t], s);
    fwd[t] = s.h;
  }
  result.forward_final = s;
  s = {Tensor::zeros({backward.hidden()}), Tensor::zeros({backward.hidden()})};
  for (std::size_t t = n; t-- > 0;) {
    s = lstm_step(g, backward, inputs[t], s);
    bwd[t] = s.h;
  }
  result.backward_final = s;
  result.outputs.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::array<Tensor, 2> parts = {fwd[t], bwd[t]};
    result.outputs[t] = g.concat(parts);
  }
  return result;
}

GatedAttentionResult gated_attention(Graph& g,
                                     std::span<const Tensor> pinyin_rows,
                                     std::span<const Tensor> context_rows,
                                     std::size_t hops) {
  if (hops < 1) throw DomainError("gated_attention: hops must be >= 1");
  GatedAttentionResult result;
  result.rows.assign(pinyin_rows.begin(), pinyin_rows.end());
  if (context_rows.empty()) return result;

  const std::size_t width = context_rows[0].size();
  for (const Tensor& p : pinyin_rows) {
    if (p.rank() != 1 || p.size() != width) {
      throw ShapeError("gated_attention: pinyin row " +
                       shape_to_string(p.shape()) + " vs context width " +
                       std::to_string(width));
    }
  }
  const Tensor context = g.stack_rows(context_rows);
  result.weights.resize(hops);
  for (std::size_t hop = 0; hop < hops; ++hop) {
    auto& hop_weights = result.weights[hop];
    hop_weights.resize(result.rows.size());
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      const Tensor beta = g.attend(context, result.rows[i], &hop_weights[i]);
      result.rows[i] = g.multiply(result.rows[i], beta);
    }
  }
  return result;
}

}  // namespace p2c
