// Independent scalar re-implementations of the message-passing updates and
// the encoder forward pass, used as oracles against the library's tape
// path. Everything here is plain double loops over ParamStore values; no
// Tape involvement.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "scorebeam/hmgat.hpp"
#include "scorebeam/ncsn.hpp"

namespace oracle {

using scorebeam::ParamStore;
using scorebeam::Tensor;

inline std::vector<double> matvec(const Tensor& w, const std::vector<double>& x) {
  std::vector<double> out(w.rows(), 0.0);
  for (int64_t i = 0; i < w.rows(); ++i) {
    for (int64_t j = 0; j < w.cols(); ++j) out[i] += w.at(i, j) * x[j];
  }
  return out;
}

inline double leaky(double v, double slope) { return v > 0.0 ? v : slope * v; }

inline std::vector<double> row_of(const Tensor& m, int64_t r) {
  std::vector<double> out(m.cols());
  for (int64_t j = 0; j < m.cols(); ++j) out[j] = m.at(r, j);
  return out;
}

// Eq. (9)-(11): multi-head attention over all nodes (self included),
// averaged across heads, plus the residual map.
inline Tensor node_update(const Tensor& x, const Tensor& e, const ParamStore& params,
                          const std::string& layer_prefix, int64_t heads, double slope) {
  const int64_t k = x.rows();
  const Tensor& theta_r = *params.get(layer_prefix + ".node.res");
  const int64_t f_out = theta_r.rows();
  Tensor out = Tensor::zeros({k, f_out});
  for (int64_t m = 0; m < heads; ++m) {
    const std::string hp = layer_prefix + ".node.head" + std::to_string(m);
    const Tensor& theta = *params.get(hp + ".theta");
    const Tensor& phi = *params.get(hp + ".edge_proj");
    const Tensor& a = *params.get(hp + ".attn");
    const int64_t d_out = phi.rows();
    for (int64_t i = 0; i < k; ++i) {
      const auto ti = matvec(theta, row_of(x, i));
      std::vector<double> scores(k);
      for (int64_t j = 0; j < k; ++j) {
        const auto tj = matvec(theta, row_of(x, j));
        const auto pe = matvec(phi, row_of(e, i * k + j));
        double s = 0.0;
        for (int64_t t = 0; t < f_out; ++t) s += a.data[t] * ti[t];
        for (int64_t t = 0; t < f_out; ++t) s += a.data[f_out + t] * tj[t];
        for (int64_t t = 0; t < d_out; ++t) s += a.data[2 * f_out + t] * pe[t];
        scores[j] = leaky(s, slope);
      }
      double denom = 0.0;
      for (double s : scores) denom += std::exp(s);
      for (int64_t j = 0; j < k; ++j) {
        const double alpha = std::exp(scores[j]) / denom;
        const auto tj = matvec(theta, row_of(x, j));
        for (int64_t t = 0; t < f_out; ++t) {
          out.at(i, t) += alpha * tj[t] / static_cast<double>(heads);
        }
      }
    }
  }
  for (int64_t i = 0; i < k; ++i) {
    const auto ri = matvec(theta_r, row_of(x, i));
    for (int64_t t = 0; t < f_out; ++t) out.at(i, t) += ri[t];
  }
  return out;
}

// Eq. (12)-(14): attention over edges sharing the source node, plus the
// residual map and the incident-node term.
inline Tensor edge_update(const Tensor& x, const Tensor& e, const ParamStore& params,
                          const std::string& layer_prefix, int64_t heads, double slope) {
  const int64_t k = x.rows();
  const Tensor& phi_r = *params.get(layer_prefix + ".edge.res");
  const Tensor& theta_n = *params.get(layer_prefix + ".edge.node_pair");
  const int64_t d_out = phi_r.rows();
  Tensor out = Tensor::zeros({k * k, d_out});
  for (int64_t m = 0; m < heads; ++m) {
    const std::string hp = layer_prefix + ".edge.head" + std::to_string(m);
    const Tensor& phi = *params.get(hp + ".proj");
    const Tensor& theta_hat = *params.get(hp + ".src_proj");
    const Tensor& b = *params.get(hp + ".attn");
    const int64_t f_out = theta_hat.rows();
    for (int64_t i = 0; i < k; ++i) {
      const auto txi = matvec(theta_hat, row_of(x, i));
      for (int64_t j = 0; j < k; ++j) {
        const auto pij = matvec(phi, row_of(e, i * k + j));
        std::vector<double> scores(k);
        for (int64_t n = 0; n < k; ++n) {
          const auto pin = matvec(phi, row_of(e, i * k + n));
          double s = 0.0;
          for (int64_t t = 0; t < d_out; ++t) s += b.data[t] * pij[t];
          for (int64_t t = 0; t < d_out; ++t) s += b.data[d_out + t] * pin[t];
          for (int64_t t = 0; t < f_out; ++t) s += b.data[2 * d_out + t] * txi[t];
          scores[n] = leaky(s, slope);
        }
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s);
        for (int64_t n = 0; n < k; ++n) {
          const double beta = std::exp(scores[n]) / denom;
          const auto pin = matvec(phi, row_of(e, i * k + n));
          for (int64_t t = 0; t < d_out; ++t) {
            out.at(i * k + j, t) += beta * pin[t] / static_cast<double>(heads);
          }
        }
      }
    }
  }
  for (int64_t i = 0; i < k; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      const auto rij = matvec(phi_r, row_of(e, i * k + j));
      std::vector<double> pair(2 * x.cols());
      for (int64_t t = 0; t < x.cols(); ++t) {
        pair[t] = x.at(i, t);
        pair[x.cols() + t] = x.at(j, t);
      }
      const auto nij = matvec(theta_n, pair);
      for (int64_t t = 0; t < d_out; ++t) out.at(i * k + j, t) += rij[t] + nij[t];
    }
  }
  return out;
}

// Step-by-step re-implementation of the conditioned encoder forward pass
// for a single sample: input projection, J blocks of (LN -> scale/shift ->
// multi-head self-attention -> gated residual -> LN -> scale/shift -> GELU
// FFN -> gated residual), output projection.
inline Tensor encoder_forward(const Tensor& tokens /*K x 2NT*/,
                              const std::vector<double>& cond /*D*/,
                              const ParamStore& params, const std::string& in_proj,
                              const std::vector<std::string>& block_prefixes,
                              const std::string& out_proj, int64_t heads) {
  const int64_t k = tokens.rows();
  const Tensor& w_in = *params.get(in_proj);
  const int64_t d = w_in.cols();
  const int64_t dh = d / heads;

  auto matmul_plain = [](const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros({a.rows(), b.cols()});
    for (int64_t i = 0; i < a.rows(); ++i)
      for (int64_t p = 0; p < a.cols(); ++p)
        for (int64_t j = 0; j < b.cols(); ++j) out.at(i, j) += a.at(i, p) * b.at(p, j);
    return out;
  };

  Tensor h = matmul_plain(tokens, w_in);

  auto layer_norm = [](const Tensor& m) {
    Tensor out = m;
    for (int64_t i = 0; i < m.rows(); ++i) {
      double mu = 0.0;
      for (int64_t j = 0; j < m.cols(); ++j) mu += m.at(i, j);
      mu /= static_cast<double>(m.cols());
      double var = 0.0;
      for (int64_t j = 0; j < m.cols(); ++j) var += (m.at(i, j) - mu) * (m.at(i, j) - mu);
      var /= static_cast<double>(m.cols());
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      for (int64_t j = 0; j < m.cols(); ++j) out.at(i, j) = (m.at(i, j) - mu) * inv;
    }
    return out;
  };

  for (const std::string& bp : block_prefixes) {
    // attention sub-block
    const auto scale = matvec(*params.get(bp + ".mha.scale"), cond);
    const auto shift = matvec(*params.get(bp + ".mha.shift"), cond);
    const auto gate = matvec(*params.get(bp + ".mha.gate"), cond);
    Tensor am = layer_norm(h);
    for (int64_t i = 0; i < k; ++i)
      for (int64_t j = 0; j < d; ++j) am.at(i, j) = am.at(i, j) * scale[j] + shift[j];
    Tensor q = matmul_plain(am, *params.get(bp + ".mha.wq"));
    Tensor kk = matmul_plain(am, *params.get(bp + ".mha.wk"));
    Tensor v = matmul_plain(am, *params.get(bp + ".mha.wv"));
    Tensor concat = Tensor::zeros({k, d});
    for (int64_t c = 0; c < heads; ++c) {
      for (int64_t i = 0; i < k; ++i) {
        std::vector<double> scores(k, 0.0);
        for (int64_t j = 0; j < k; ++j) {
          double s = 0.0;
          for (int64_t t = 0; t < dh; ++t) s += q.at(i, c * dh + t) * kk.at(j, c * dh + t);
          scores[j] = s / std::sqrt(static_cast<double>(dh));
        }
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s);
        for (int64_t j = 0; j < k; ++j) {
          const double w = std::exp(scores[j]) / denom;
          for (int64_t t = 0; t < dh; ++t) concat.at(i, c * dh + t) += w * v.at(j, c * dh + t);
        }
      }
    }
    Tensor mha = matmul_plain(concat, *params.get(bp + ".mha.wo"));
    for (int64_t i = 0; i < k; ++i)
      for (int64_t j = 0; j < d; ++j) h.at(i, j) += mha.at(i, j) * gate[j];

    // FFN sub-block
    const auto scale2 = matvec(*params.get(bp + ".ffn.scale"), cond);
    const auto shift2 = matvec(*params.get(bp + ".ffn.shift"), cond);
    const auto gate2 = matvec(*params.get(bp + ".ffn.gate"), cond);
    Tensor am2 = layer_norm(h);
    for (int64_t i = 0; i < k; ++i)
      for (int64_t j = 0; j < d; ++j) am2.at(i, j) = am2.at(i, j) * scale2[j] + shift2[j];
    Tensor hidden = matmul_plain(am2, *params.get(bp + ".ffn.w1"));
    for (double& vv : hidden.data) vv = 0.5 * vv * (1.0 + std::erf(vv * M_SQRT1_2));
    Tensor ffn = matmul_plain(hidden, *params.get(bp + ".ffn.w2"));
    for (int64_t i = 0; i < k; ++i)
      for (int64_t j = 0; j < d; ++j) h.at(i, j) += ffn.at(i, j) * gate2[j];
  }
  return matmul_plain(h, *params.get(out_proj));
}

// NCSN forward for one sample at a 1-based level: tokens are the stacked
// re/im features of the perturbed CSI columns.
inline scorebeam::ComplexMatrix ncsn_forward(const scorebeam::NcsnModel& model,
                                             const scorebeam::ComplexMatrix& h_bar,
                                             int64_t level) {
  const int64_t nt = h_bar.n_rows;
  const int64_t k = h_bar.n_cols;
  Tensor tokens = Tensor::zeros({k, 2 * nt});
  for (int64_t u = 0; u < k; ++u) {
    for (int64_t t = 0; t < nt; ++t) {
      tokens.at(u, t) = h_bar.re.at(t, u);
      tokens.at(u, nt + t) = h_bar.im.at(t, u);
    }
  }
  const auto cond = row_of(*model.params().get("embed"), level - 1);
  std::vector<std::string> blocks;
  for (int64_t j = 0; j < model.config().blocks; ++j) {
    blocks.push_back("block" + std::to_string(j));
  }
  const Tensor rows = encoder_forward(tokens, cond, model.params(), "in_proj", blocks,
                                      "out_proj", model.config().heads);
  scorebeam::ComplexMatrix out(nt, k);
  for (int64_t u = 0; u < k; ++u) {
    for (int64_t t = 0; t < nt; ++t) {
      out.re.at(t, u) = rows.at(u, t);
      out.im.at(t, u) = rows.at(u, nt + t);
    }
  }
  return out;
}

}  // namespace oracle
