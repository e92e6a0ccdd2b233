#pragma once

// Stochastic variational inference for LDA: noisy natural-gradient steps
// toward the posterior of a pre-specified corpus size D, with learning
// rate rho_t = (tau0 + t)^-kappa.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "ldastream/sda.hpp"
#include "ldastream/vb.hpp"

namespace ldastream {

struct SVIConfig {
  std::int64_t total_docs = 0;  // D, fixed in advance
  double tau0 = 64.0;
  double kappa = 0.5;
  std::optional<std::int64_t> max_steps;  // T

  void validate() const {
    if (total_docs < 1) throw std::invalid_argument("SVIConfig: total_docs must be >= 1");
    if (tau0 < 0.0) throw std::invalid_argument("SVIConfig: tau0 must be >= 0");
    if (!(kappa >= 0.5 && kappa <= 1.0)) throw std::invalid_argument("SVIConfig: kappa must be in [0.5, 1]");
  }
};

/// rho_t = (tau0 + t)^-kappa for t >= 1.
inline double learning_rate(std::int64_t t, const SVIConfig& cfg) {
  if (t < 1) throw std::invalid_argument("learning_rate: t must be >= 1");
  return std::pow(cfg.tau0 + static_cast<double>(t), -cfg.kappa);
}

/// One step: fit local parameters against the incoming lambda, form the
/// full-corpus-scaled candidate lambda~ = eta + (D/|C|) sum n phi, then
/// blend lambda <- (1 - rho) lambda + rho lambda~.
inline Matrix svi_step(const Matrix& lambda, const Minibatch& batch, double rho, const SVIConfig& cfg,
                       const Matrix& eta, const Vector& alpha, const VBConfig& vb_cfg) {
  if (batch.docs.empty()) throw std::invalid_argument("svi_step: empty minibatch");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("svi_step: rho must be in (0, 1]");
  const ElogBeta elog_beta(lambda);
  std::vector<LocalVariational> locals(batch.docs.size());
  for (std::size_t d = 0; d < batch.docs.size(); ++d)
    locals[d] = local_vb(batch.docs[d], elog_beta, alpha, vb_cfg);
  const double scale = static_cast<double>(cfg.total_docs) / static_cast<double>(batch.docs.size());
  Matrix lambda_hat = eta;
  for (std::size_t d = 0; d < batch.docs.size(); ++d) {
    const Document& doc = batch.docs[d];
    const Matrix& phi = locals[d].phi;
    for (Eigen::Index j = 0; j < phi.rows(); ++j) {
      const auto [v, n] = doc.counts[static_cast<std::size_t>(j)];
      lambda_hat.col(v) += (scale * static_cast<double>(n)) * phi.row(j).transpose();
    }
  }
  return (1.0 - rho) * lambda + rho * lambda_hat;
}

/// Single pass over the stream, t = 1, 2, ... per minibatch. The final
/// partial minibatch uses its true size in the D/|C| factor.
template <BatchSource S>
Matrix run_svi(S& stream, const SVIConfig& cfg, const Matrix& eta, const Vector& alpha, const VBConfig& vb_cfg,
               const ProgressHook& hook = {}, std::optional<Matrix> lambda_init = std::nullopt) {
  cfg.validate();
  detail::WallClock clock;
  Matrix lambda = lambda_init ? std::move(*lambda_init) : init_lambda(eta, vb_cfg.init_seed);
  std::int64_t t = 0;
  std::uint64_t tokens = 0;
  while (auto batch = stream.next()) {
    ++t;
    if (cfg.max_steps && t > *cfg.max_steps) break;
    tokens += static_cast<std::uint64_t>(batch->token_count());
    lambda = svi_step(lambda, *batch, learning_rate(t, cfg), cfg, eta, alpha, vb_cfg);
    if (hook)
      hook(ProgressEvent{clock.seconds(), static_cast<std::uint64_t>(t), tokens, 0}, lambda);
  }
  return lambda;
}

}  // namespace ldastream
