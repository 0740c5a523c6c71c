#include "scorebeam/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace scorebeam {

namespace {

Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

void init_teb(ParamStore& params, const std::string& prefix, const TebParams& shape,
              Rng& rng) {
  if (shape.dim % shape.heads != 0) {
    throw std::invalid_argument("encoder dim must be divisible by head count");
  }
  const int64_t d = shape.dim;
  params.add(prefix + ".mha.scale", uniform_init({d, d}, d, rng));
  params.add(prefix + ".mha.shift", uniform_init({d, d}, d, rng));
  params.add(prefix + ".mha.gate", uniform_init({d, d}, d, rng));
  params.add(prefix + ".mha.wq", uniform_init({d, d}, d, rng));
  params.add(prefix + ".mha.wk", uniform_init({d, d}, d, rng));
  params.add(prefix + ".mha.wv", uniform_init({d, d}, d, rng));
  params.add(prefix + ".mha.wo", uniform_init({d, d}, d, rng));
  params.add(prefix + ".ffn.scale", uniform_init({d, d}, d, rng));
  params.add(prefix + ".ffn.shift", uniform_init({d, d}, d, rng));
  params.add(prefix + ".ffn.gate", uniform_init({d, d}, d, rng));
  params.add(prefix + ".ffn.w1", uniform_init({d, shape.ffn_dim}, d, rng));
  params.add(prefix + ".ffn.w2", uniform_init({shape.ffn_dim, d}, shape.ffn_dim, rng));
}

Var teb_forward(Tape& tape, const ParamStore& params, const std::string& prefix,
                const TebParams& shape, Var tokens, Var cond, int64_t users,
                double dropout_rate, Rng* dropout_rng, bool training) {
  const int64_t d = shape.dim;
  const int64_t head_dim = d / shape.heads;
  const int64_t rows = tokens.val().shape[0];
  if (rows % users != 0) throw std::invalid_argument("token rows not a multiple of K");
  const bool drop = training && dropout_rng && dropout_rate > 0.0;

  auto modulate = [&](Var h, const std::string& sub) {
    Var scale = tape.matmul(cond, tape.transpose(tape.param(params, prefix + sub + ".scale")));
    Var shift = tape.matmul(cond, tape.transpose(tape.param(params, prefix + sub + ".shift")));
    return tape.add(tape.mul(tape.layer_norm_rows(h), scale), shift);
  };
  auto gate = [&](const std::string& sub) {
    return tape.matmul(cond, tape.transpose(tape.param(params, prefix + sub + ".gate")));
  };

  // attention sub-block
  Var am = modulate(tokens, ".mha");
  Var q = tape.matmul(am, tape.param(params, prefix + ".mha.wq"));
  Var k = tape.matmul(am, tape.param(params, prefix + ".mha.wk"));
  Var v = tape.matmul(am, tape.param(params, prefix + ".mha.wv"));
  std::vector<int64_t> groups(rows);
  for (int64_t r = 0; r < rows; ++r) groups[r] = r / users;
  std::vector<Var> head_out;
  head_out.reserve(shape.heads);
  for (int64_t c = 0; c < shape.heads; ++c) {
    Var qh = tape.slice_cols(q, c * head_dim, head_dim);
    Var kh = tape.slice_cols(k, c * head_dim, head_dim);
    Var vh = tape.slice_cols(v, c * head_dim, head_dim);
    Var scores = tape.mul_scalar(tape.block_scores(qh, kh, users),
                                 1.0 / std::sqrt(static_cast<double>(head_dim)));
    Var attn = tape.softmax_rows(scores);
    if (drop) attn = tape.dropout(attn, dropout_rate, *dropout_rng, true);
    head_out.push_back(tape.attend_rows(attn, vh, groups));
  }
  Var mha = tape.matmul(tape.concat(head_out, 1), tape.param(params, prefix + ".mha.wo"));
  tokens = tape.add(tokens, tape.mul(mha, gate(".mha")));

  // feed-forward sub-block
  Var am2 = modulate(tokens, ".ffn");
  Var hidden = tape.gelu(tape.matmul(am2, tape.param(params, prefix + ".ffn.w1")));
  if (drop) hidden = tape.dropout(hidden, dropout_rate, *dropout_rng, true);
  Var ffn = tape.matmul(hidden, tape.param(params, prefix + ".ffn.w2"));
  return tape.add(tokens, tape.mul(ffn, gate(".ffn")));
}

Tensor csi_tokens(const std::vector<const ComplexMatrix*>& samples) {
  if (samples.empty()) throw std::invalid_argument("csi_tokens: empty batch");
  const int64_t nt = samples[0]->n_rows;
  const int64_t k = samples[0]->n_cols;
  Tensor rows = Tensor::zeros({static_cast<int64_t>(samples.size()) * k, 2 * nt});
  for (size_t b = 0; b < samples.size(); ++b) {
    const ComplexMatrix& m = *samples[b];
    if (m.n_rows != nt || m.n_cols != k) {
      throw std::invalid_argument("csi_tokens: inconsistent sample shapes");
    }
    for (int64_t u = 0; u < k; ++u) {
      const int64_t r = static_cast<int64_t>(b) * k + u;
      for (int64_t t = 0; t < nt; ++t) {
        rows.at(r, t) = m.re.at(t, u);
        rows.at(r, nt + t) = m.im.at(t, u);
      }
    }
  }
  return rows;
}

ComplexMatrix csi_from_rows(const Tensor& rows, int64_t sample, int64_t users,
                            int64_t tx_antennas) {
  ComplexMatrix m(tx_antennas, users);
  for (int64_t u = 0; u < users; ++u) {
    const int64_t r = sample * users + u;
    for (int64_t t = 0; t < tx_antennas; ++t) {
      m.re.at(t, u) = rows.at(r, t);
      m.im.at(t, u) = rows.at(r, tx_antennas + t);
    }
  }
  return m;
}

}  // namespace scorebeam
