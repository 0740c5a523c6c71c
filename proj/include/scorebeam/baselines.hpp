#pragma once

#include "scorebeam/hmgat.hpp"

namespace scorebeam {

enum class BaselineKind { pzf, equal_power_random };

/// Phase zero-forcing: analog entries take the channel phases at modulus
/// 1/sqrt(N_T); digital columns come from the (pseudo-)inverse of the
/// effective channel H^H P_RF, normalized against the effective precoder;
/// equal power split.
HbfSolution pzf(const ComplexMatrix& h, const SystemConfig& config);

/// Random unit-modulus analog phases and random digital columns, equal
/// power split. A sanity floor, feasible by construction.
HbfSolution equal_power_random(const ComplexMatrix& h, const SystemConfig& config,
                               Rng& rng);

HbfSolution run_baseline(BaselineKind kind, const ComplexMatrix& h,
                         const SystemConfig& config, Rng& rng);

/// Exhaustive search over quantized analog phases (2^phase_bits values per
/// entry), a ZF digital stage per analog candidate, and a power simplex
/// grid. Micro instances only (K <= 2, N_T <= 2, phase_bits <= 4).
double tiny_grid_oracle(const ComplexMatrix& h, const SystemConfig& config,
                        int phase_bits, int power_grid);

}  // namespace scorebeam
