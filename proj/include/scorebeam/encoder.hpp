#pragma once

#include <string>
#include <vector>

#include "scorebeam/complexm.hpp"
#include "scorebeam/tape.hpp"

namespace scorebeam {

/// Conditioned transformer encoder block over token rows.
///
/// Tokens are (R x D) with rows grouped in consecutive blocks of `users`
/// (one block per CSI sample); self-attention never crosses blocks and
/// there is no positional encoding, so token order within a block is
/// immaterial. `cond` is a conditioning matrix, either (1 x D) shared by
/// all rows or (R x D) per row; each sub-block applies layer norm, a
/// scale/shift modulation derived from `cond`, and a gated residual.
struct TebParams {
  int64_t dim = 64;      // D
  int64_t ffn_dim = 256; // D'
  int64_t heads = 4;     // C, must divide D
};

void init_teb(ParamStore& params, const std::string& prefix, const TebParams& shape,
              Rng& rng);

Var teb_forward(Tape& tape, const ParamStore& params, const std::string& prefix,
                const TebParams& shape, Var tokens, Var cond, int64_t users,
                double dropout_rate, Rng* dropout_rng, bool training);

/// Stacks CSI matrices into token rows: row (b*K + k) = [Re(h_k); Im(h_k)]
/// of sample b, shape (B*K) x 2N_T.
Tensor csi_tokens(const std::vector<const ComplexMatrix*>& samples);

/// Inverse of csi_tokens for one sample's block of rows.
ComplexMatrix csi_from_rows(const Tensor& rows, int64_t sample, int64_t users,
                            int64_t tx_antennas);

}  // namespace scorebeam
