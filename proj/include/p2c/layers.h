#ifndef P2C_LAYERS_H_
#define P2C_LAYERS_H_

#include <cstddef>
#include <span>
#include <vector>

#include "p2c/graph.h"
#include "p2c/tensor.h"

namespace p2c {

// Gated recurrent unit:
//   r = sigmoid(W_r x + U_r h + b_r)
//   z = sigmoid(W_z x + U_z h + b_z)
//   n = tanh(W_n x + U_n (r * h) + b_n)
//   h' = z * h + (1 - z) * n
struct GruParams {
  Tensor w;        // [3H x I], rows ordered r, z, n
  Tensor u_gates;  // [2H x H], rows ordered r, z
  Tensor u_cand;   // [H x H]
  Tensor b;        // [3H]

  std::size_t hidden() const { return u_cand.dim(0); }
};

Tensor gru_step(Graph& g, const GruParams& p, const Tensor& x, const Tensor& h);

// Long short-term memory cell with gates ordered i, f, g, o.
struct LstmParams {
  Tensor w;  // [4H x I]
  Tensor u;  // [4H x H]
  Tensor b;  // [4H]

  std::size_t hidden() const { return u.dim(1); }
};

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState lstm_step(Graph& g, const LstmParams& p, const Tensor& x,
                    const LstmState& state);

// Bidirectional GRU over `inputs`; row i is [forward_i ; backward_i].
std::vector<Tensor> run_bigru(Graph& g, const GruParams& forward,
                              const GruParams& backward,
                              std::span<const Tensor> inputs);

struct BiLstmOutput {
  std::vector<Tensor> outputs;  // [forward_i ; backward_i]
  LstmState forward_final;      // after the last position
  LstmState backward_final;     // after the first position
};

BiLstmOutput run_bilstm(Graph& g, const LstmParams& forward,
                        const LstmParams& backward,
                        std::span<const Tensor> inputs);

// Per-hop attention distributions: weights[hop][pinyin_row][context_row].
using AttentionHops = std::vector<std::vector<std::vector<double>>>;

struct GatedAttentionResult {
  std::vector<Tensor> rows;
  AttentionHops weights;
};

// Gated attention of each pinyin row over the context rows:
//   alpha_i = softmax(H_c p_i),  beta_i = H_c^T alpha_i,  x_i = p_i * beta_i
// Each further hop uses the previous hop's x_i as the query against the
// same context. An empty context passes the pinyin rows through unchanged.
GatedAttentionResult gated_attention(Graph& g,
                                     std::span<const Tensor> pinyin_rows,
                                     std::span<const Tensor> context_rows,
                                     std::size_t hops);

}  // namespace p2c

#endif  // P2C_LAYERS_H_
