#pragma once

// Sufficient statistics updates: fit local parameters per arriving
// minibatch and add the expected counts onto lambda, with no global
// re-iteration. Equivalent to the streaming engine running a primitive
// that performs local steps plus exactly one global update.

#include <cstdint>

#include "ldastream/sda.hpp"
#include "ldastream/vb.hpp"

namespace ldastream {

/// lambda_prev + sum_{d in C} n_dv phi_dvk with phi fit against lambda_prev.
inline Matrix ssu_step(const Matrix& lambda_prev, const Minibatch& batch, const Vector& alpha,
                       const VBConfig& vb_cfg) {
  if (batch.docs.empty()) return lambda_prev;
  const ElogBeta elog_beta(lambda_prev);
  std::vector<LocalVariational> locals(batch.docs.size());
  for (std::size_t d = 0; d < batch.docs.size(); ++d)
    locals[d] = local_vb(batch.docs[d], elog_beta, alpha, vb_cfg);
  return global_lambda_update(lambda_prev, batch.docs, locals);
}

/// Streams from lambda^(0) = eta exactly (no random initialization).
template <BatchSource S>
Matrix run_ssu(S& stream, const Matrix& eta, const Vector& alpha, const VBConfig& vb_cfg,
               const ProgressHook& hook = {}) {
  detail::WallClock clock;
  Matrix lambda = eta;
  std::uint64_t batches = 0, tokens = 0;
  while (auto batch = stream.next()) {
    tokens += static_cast<std::uint64_t>(batch->token_count());
    ++batches;
    lambda = ssu_step(lambda, *batch, alpha, vb_cfg);
    if (hook) hook(ProgressEvent{clock.seconds(), batches, tokens, 0}, lambda);
  }
  return lambda;
}

/// The streaming-engine primitive whose composition is bit-identical to
/// run_ssu: local steps then one global update.
struct SingleIterationVBPrimitive {
  Vector alpha;
  VBConfig vb_cfg;

  Matrix operator()(const Minibatch& batch, const Matrix& prior) const {
    return ssu_step(prior, batch, alpha, vb_cfg);
  }
};

}  // namespace ldastream
