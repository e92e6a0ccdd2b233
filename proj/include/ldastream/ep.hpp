#pragma once

// Batch expectation propagation for LDA over the collapsed (z-integrated)
// posterior. Each (document, word-type) pair with n_dv >= 1 owns a site:
// a K x V beta contribution and a length-K theta contribution. The global
// parameters are reconstructed additively:
//
//   lambda_k = prior_k + sum_{d,v} n_dv * beta_site_kdv
//   gamma_d  = alpha   + sum_v    n_dv * theta_site_dv
//
// One site refinement removes one occurrence of (d,v) from the totals
// (cavity), tilts the cavity with the likelihood factor sum_k theta_k
// beta_kv, moment-matches the tilted distribution back into the Dirichlet
// family, and blends the site at rate 1/n_dv.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ldastream/corpus.hpp"
#include "ldastream/expfam.hpp"

namespace ldastream {

struct EPConfig {
  double tol = 1e-4;   // mean absolute site change per sweep
  int max_sweeps = 50;
  bool keep_sites = false;
  bool validate_reconstruction = false;
};

struct CavityParams {
  Matrix lambda_cavity;  // K x V
  Vector gamma_cavity;   // K
};

struct TiltedMoments {
  Matrix beta_mean;     // K x V
  Matrix beta_second;   // K x V
  Vector theta_mean;    // K
  Vector theta_second;  // K
  Vector weights;       // K mixture weights, sum to 1
};

struct MatchedParams {
  Matrix lambda_hat;  // K x V
  Vector gamma_hat;   // K
};

// Site storage plus running totals; the reconstruction identity above ties
// the two together and is what the tests check.
struct EPSiteState {
  std::vector<std::vector<Matrix>> beta_sites;   // [doc][entry] -> K x V
  std::vector<std::vector<Vector>> theta_sites;  // [doc][entry] -> K
  Matrix lambda;                                 // running beta totals
  std::vector<Vector> gamma;                     // running theta totals per doc

  EPSiteState(const Minibatch& batch, const Matrix& prior, const Vector& alpha) : lambda(prior) {
    const Eigen::Index K = prior.rows(), V = prior.cols();
    beta_sites.resize(batch.docs.size());
    theta_sites.resize(batch.docs.size());
    gamma.assign(batch.docs.size(), alpha);
    for (std::size_t d = 0; d < batch.docs.size(); ++d) {
      const std::size_t nnz = batch.docs[d].counts.size();
      beta_sites[d].assign(nnz, Matrix::Zero(K, V));
      theta_sites[d].assign(nnz, Vector::Zero(K));
    }
  }
};

/// Totals minus one occurrence's site. Returns nullopt (skip) when any
/// cavity entry is non-positive; a skip never touches stored state.
inline std::optional<CavityParams> cavity(const EPSiteState& state, std::size_t doc, std::size_t entry) {
  CavityParams cav;
  cav.lambda_cavity = state.lambda - state.beta_sites[doc][entry];
  cav.gamma_cavity = state.gamma[doc] - state.theta_sites[doc][entry];
  if (!(cav.lambda_cavity.minCoeff() > 0.0) || !(cav.gamma_cavity.minCoeff() > 0.0)) return std::nullopt;
  return cav;
}

/// Exact moments of beta and theta under the tilted distribution
///   q~ ∝ [prod_k Dir(beta_k | cavity_k)] Dir(theta | cavity_gamma)
///        * sum_k theta_k beta_kv,
/// computed by decomposing q~ into K conjugate mixture components:
/// component k bumps lambda_kv and gamma_k by one pseudo-count and carries
/// weight proportional to (gamma_k / sum gamma) * (lambda_kv / sum_u lambda_ku).
inline TiltedMoments tilted_moments(const CavityParams& cav, std::int32_t v) {
  const Eigen::Index K = cav.lambda_cavity.rows(), V = cav.lambda_cavity.cols();
  const Vector row_sums = cav.lambda_cavity.rowwise().sum();
  const double gamma_total = cav.gamma_cavity.sum();

  TiltedMoments m;
  m.weights.resize(K);
  for (Eigen::Index k = 0; k < K; ++k)
    m.weights[k] = (cav.gamma_cavity[k] / gamma_total) * (cav.lambda_cavity(k, v) / row_sums[k]);
  m.weights /= m.weights.sum();

  m.beta_mean.resize(K, V);
  m.beta_second.resize(K, V);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double w = m.weights[k];
    const double s0 = row_sums[k], s1 = s0 + 1.0;
    for (Eigen::Index u = 0; u < V; ++u) {
      const double p0 = cav.lambda_cavity(k, u);
      const double p1 = p0 + (u == v ? 1.0 : 0.0);
      m.beta_mean(k, u) = (1.0 - w) * (p0 / s0) + w * (p1 / s1);
      m.beta_second(k, u) =
          (1.0 - w) * (p0 * (p0 + 1.0) / (s0 * (s0 + 1.0))) + w * (p1 * (p1 + 1.0) / (s1 * (s1 + 1.0)));
    }
  }

  m.theta_mean.resize(K);
  m.theta_second.resize(K);
  const double g1 = gamma_total + 1.0, g2 = gamma_total + 2.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double g = cav.gamma_cavity[k];
    const double w = m.weights[k];
    m.theta_mean[k] = (g + w) / g1;
    m.theta_second[k] = ((1.0 - w) * g * (g + 1.0) + w * (g + 1.0) * (g + 2.0)) / (g1 * g2);
  }
  return m;
}

/// Dirichlet parameters whose first and averaged second moments match the
/// tilted beta moments: a per-topic concentration times the mean row.
/// Throws std::domain_error when the inferred concentration is not a
/// positive finite number; batch_ep treats that as a skip.
inline Matrix moment_match_beta(const TiltedMoments& m) {
  const Eigen::Index K = m.beta_mean.rows();
  Matrix lambda_hat(K, m.beta_mean.cols());
  for (Eigen::Index k = 0; k < K; ++k) {
    const double num = (m.beta_second.row(k) - m.beta_mean.row(k)).sum();
    const double den = (m.beta_mean.row(k).cwiseProduct(m.beta_mean.row(k)) - m.beta_second.row(k)).sum();
    const double scale = num / den;
    if (!(scale > 0.0) || !std::isfinite(scale))
      throw std::domain_error("moment_match: non-positive beta concentration for topic " + std::to_string(k));
    lambda_hat.row(k) = scale * m.beta_mean.row(k);
  }
  return lambda_hat;
}

inline Vector moment_match_theta(const TiltedMoments& m) {
  const double num = (m.theta_second - m.theta_mean).sum();
  const double den = (m.theta_mean.cwiseProduct(m.theta_mean) - m.theta_second).sum();
  const double scale = num / den;
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw std::domain_error("moment_match: non-positive theta concentration");
  return scale * m.theta_mean;
}

inline MatchedParams moment_match(const TiltedMoments& m) {
  return MatchedParams{moment_match_beta(m), moment_match_theta(m)};
}

/// Blends the (doc, entry) site at rate 1/n_dv toward the matched
/// parameters and restores the running totals (which land exactly on
/// lambda_hat / gamma_hat).
inline void site_update(EPSiteState& state, std::size_t doc, std::size_t entry, std::int32_t n_dv,
                        const MatchedParams& matched, const CavityParams& cav) {
  const double inv_n = 1.0 / static_cast<double>(n_dv);
  Matrix& bsite = state.beta_sites[doc][entry];
  Vector& tsite = state.theta_sites[doc][entry];
  bsite = inv_n * (matched.lambda_hat - cav.lambda_cavity) + (1.0 - inv_n) * bsite;
  tsite = inv_n * (matched.gamma_hat - cav.gamma_cavity) + (1.0 - inv_n) * tsite;
  state.lambda = matched.lambda_hat;
  state.gamma[doc] = matched.gamma_hat;
}

struct EPDiagnostics {
  int sweeps = 0;
  std::int64_t updates = 0;
  std::int64_t skips = 0;
  std::vector<std::int64_t> skips_per_sweep;
  double max_reconstruction_error = 0.0;  // populated when validate_reconstruction
};

struct BatchEPResult {
  Matrix lambda;
  EPDiagnostics diagnostics;
  std::optional<EPSiteState> sites;  // populated when keep_sites
};

namespace detail {
inline double reconstruction_error(const EPSiteState& state, const Minibatch& batch, const Matrix& prior,
                                   const Vector& alpha) {
  Matrix lambda = prior;
  double err = 0.0;
  for (std::size_t d = 0; d < batch.docs.size(); ++d) {
    Vector gamma = alpha;
    for (std::size_t j = 0; j < batch.docs[d].counts.size(); ++j) {
      const double n = static_cast<double>(batch.docs[d].counts[j].second);
      lambda += n * state.beta_sites[d][j];
      gamma += n * state.theta_sites[d][j];
    }
    err = std::max(err, (gamma - state.gamma[d]).cwiseAbs().maxCoeff() /
                            std::max(1.0, state.gamma[d].cwiseAbs().maxCoeff()));
  }
  err = std::max(err, (lambda - state.lambda).cwiseAbs().maxCoeff() /
                          std::max(1.0, state.lambda.cwiseAbs().maxCoeff()));
  return err;
}
}  // namespace detail

/// Sweeps all (d,v) pairs with n_dv >= 1 in document order then word-id
/// order until the mean absolute site change drops below cfg.tol or the
/// sweep cap is hit. The prior may be a running posterior. Returns
/// lambda = prior + sum n_dv * beta_site.
inline BatchEPResult batch_ep_detailed(const Minibatch& batch, const Matrix& prior, const Vector& alpha,
                                       const EPConfig& cfg) {
  BatchEPResult result;
  if (batch.docs.empty()) {
    result.lambda = prior;
    return result;
  }
  EPSiteState state(batch, prior, alpha);

  std::int64_t total_entries = 0;
  for (const Document& doc : batch.docs)
    total_entries += static_cast<std::int64_t>(doc.counts.size()) * (prior.rows() * prior.cols() + prior.rows());

  for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    double abs_change = 0.0;
    std::int64_t sweep_skips = 0;
    for (std::size_t d = 0; d < batch.docs.size(); ++d) {
      const Document& doc = batch.docs[d];
      for (std::size_t j = 0; j < doc.counts.size(); ++j) {
        const auto [v, n] = doc.counts[j];
        auto cav = cavity(state, d, j);
        if (!cav) {
          ++sweep_skips;
          continue;
        }
        MatchedParams matched;
        try {
          const TiltedMoments m = tilted_moments(*cav, v);
          // a 1-dimensional simplex is a point mass: moment matching is
          // under-determined there, and the exact conjugate bump stands in
          matched.lambda_hat =
              prior.cols() == 1 ? Matrix(cav->lambda_cavity + m.weights) : moment_match_beta(m);
          matched.gamma_hat =
              prior.rows() == 1 ? Vector(cav->gamma_cavity.array() + 1.0) : moment_match_theta(m);
        } catch (const std::domain_error&) {
          ++sweep_skips;
          continue;
        }
        const Matrix bsite_old = state.beta_sites[d][j];
        const Vector tsite_old = state.theta_sites[d][j];
        site_update(state, d, j, n, matched, *cav);
        abs_change += (state.beta_sites[d][j] - bsite_old).cwiseAbs().sum();
        abs_change += (state.theta_sites[d][j] - tsite_old).cwiseAbs().sum();
        ++result.diagnostics.updates;
        if (cfg.validate_reconstruction)
          result.diagnostics.max_reconstruction_error =
              std::max(result.diagnostics.max_reconstruction_error,
                       detail::reconstruction_error(state, batch, prior, alpha));
      }
    }
    ++result.diagnostics.sweeps;
    result.diagnostics.skips += sweep_skips;
    result.diagnostics.skips_per_sweep.push_back(sweep_skips);
    if (abs_change / static_cast<double>(total_entries) < cfg.tol) break;
  }

  result.lambda = state.lambda;
  if (cfg.keep_sites) result.sites = std::move(state);
  return result;
}

inline Matrix batch_ep(const Minibatch& batch, const Matrix& prior, const Vector& alpha, const EPConfig& cfg) {
  return batch_ep_detailed(batch, prior, alpha, cfg).lambda;
}

}  // namespace ldastream
