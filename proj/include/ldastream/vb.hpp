#pragma once

// Batch mean-field variational Bayes for LDA: the per-document local
// subroutine, the global lambda update, ELBO evaluation, and the
// prior-parameterized batch primitive used by the streaming engine.
//
// lambda is K x V (topic by word); a document's responsibilities phi are
// stored densely per word type present in the document, rows aligned with
// Document::counts.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldastream/corpus.hpp"
#include "ldastream/expfam.hpp"

namespace ldastream {

struct VBConfig {
  double local_tol = 1e-3;      // mean |d gamma| per sweep
  int local_max_iters = 100;
  double global_tol = 1e-3;     // mean |d lambda| relative to mean |lambda|
  int global_max_iters = 100;
  std::uint64_t init_seed = 0;
  bool track_elbo = false;
};

// The global state every algorithm here estimates: Dirichlet parameters
// lambda over topics, with the prior eta kept alongside.
struct TopicPosterior {
  Matrix lambda;  // K x V
  Matrix eta;     // K x V

  Eigen::Index num_topics() const { return lambda.rows(); }
  Eigen::Index vocab_size() const { return lambda.cols(); }
};

struct LocalVariational {
  Vector gamma;  // K
  Matrix phi;    // nnz x K, rows aligned with Document::counts, rows sum to 1
};

// E_q[log beta_kv] = psi(lambda_kv) - psi(sum_u lambda_ku), precomputed for
// one immutable lambda snapshot and shared across documents.
struct ElogBeta {
  Matrix elog;  // K x V

  explicit ElogBeta(const Matrix& lambda) : elog(lambda.rows(), lambda.cols()) {
    const Vector row_sums = lambda.rowwise().sum();
    for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
      const double psi_total = digamma(row_sums[k]);
      for (Eigen::Index v = 0; v < lambda.cols(); ++v) elog(k, v) = digamma(lambda(k, v)) - psi_total;
    }
  }
};

/// eta + Gamma(100, noise_mean/100) noise per entry, deterministic per seed.
inline Matrix init_lambda(const Matrix& eta, std::uint64_t seed, double noise_mean = 1.0) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma_draw(100.0, noise_mean / 100.0);
  Matrix lambda(eta.rows(), eta.cols());
  for (Eigen::Index k = 0; k < eta.rows(); ++k)
    for (Eigen::Index v = 0; v < eta.cols(); ++v) lambda(k, v) = eta(k, v) + gamma_draw(rng);
  return lambda;
}

namespace detail {
inline Vector elog_theta(const Vector& gamma) {
  const double psi_total = digamma(gamma.sum());
  Vector out(gamma.size());
  for (Eigen::Index k = 0; k < gamma.size(); ++k) out[k] = digamma(gamma[k]) - psi_total;
  return out;
}
}  // namespace detail

/// Coordinate ascent on (gamma_d, phi_d) against a fixed lambda snapshot.
/// phi rows are computed in log space with a per-row max subtraction;
/// converged when the mean absolute gamma change over one sweep drops
/// below cfg.local_tol.
inline LocalVariational local_vb(const Document& doc, const ElogBeta& elog_beta, const Vector& alpha,
                                 const VBConfig& cfg) {
  const Eigen::Index K = alpha.size();
  const Eigen::Index nnz = static_cast<Eigen::Index>(doc.counts.size());
  LocalVariational lv;
  lv.phi = Matrix::Zero(nnz, K);
  if (nnz == 0) {
    lv.gamma = alpha;
    return lv;
  }
  const double total = static_cast<double>(doc.total_tokens());
  lv.gamma = alpha.array() + total / static_cast<double>(K);

  for (int sweep = 0; sweep < cfg.local_max_iters; ++sweep) {
    const Vector elog_th = detail::elog_theta(lv.gamma);
    Vector gamma_new = alpha;
    for (Eigen::Index j = 0; j < nnz; ++j) {
      const auto [v, n] = doc.counts[static_cast<std::size_t>(j)];
      Eigen::ArrayXd logp = elog_th.array() + elog_beta.elog.col(v).array();
      logp -= logp.maxCoeff();
      Eigen::ArrayXd row = logp.exp();
      row /= row.sum();
      lv.phi.row(j) = row.transpose();
      gamma_new.array() += static_cast<double>(n) * row;
    }
    const double change = (gamma_new - lv.gamma).cwiseAbs().mean();
    lv.gamma = gamma_new;
    if (change < cfg.local_tol) break;
  }
  return lv;
}

inline LocalVariational local_vb(const Document& doc, const Matrix& lambda, const Vector& alpha,
                                 const VBConfig& cfg) {
  return local_vb(doc, ElogBeta(lambda), alpha, cfg);
}

/// lambda_kv = prior_kv + sum_d n_dv phi_dvk. Adds exactly sum_d N_d of
/// pseudo-count mass since every phi row sums to 1.
inline Matrix global_lambda_update(const Matrix& prior, const std::vector<Document>& docs,
                                   const std::vector<LocalVariational>& locals) {
  if (docs.size() != locals.size())
    throw std::invalid_argument("global_lambda_update: docs and locals misaligned");
  Matrix lambda = prior;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const Document& doc = docs[d];
    const Matrix& phi = locals[d].phi;
    if (phi.rows() != static_cast<Eigen::Index>(doc.counts.size()))
      throw std::invalid_argument("global_lambda_update: phi rows misaligned with document " + std::to_string(d));
    for (Eigen::Index j = 0; j < phi.rows(); ++j) {
      const auto [v, n] = doc.counts[static_cast<std::size_t>(j)];
      lambda.col(v) += static_cast<double>(n) * phi.row(j).transpose();
    }
  }
  return lambda;
}

/// The analytic evidence lower bound for the current variational state.
/// `prior` stands in for eta when the batch runs against a running
/// posterior. Throws if any term goes non-finite, naming the term.
inline double elbo(const Matrix& lambda, const std::vector<Vector>& gammas, const std::vector<Matrix>& phis,
                   const std::vector<Document>& docs, const Matrix& prior, const Vector& alpha) {
  if (gammas.size() != docs.size() || phis.size() != docs.size())
    throw std::invalid_argument("elbo: docs/gammas/phis misaligned");
  const Eigen::Index K = lambda.rows();

  const ElogBeta elog_beta(lambda);

  // beta prior cross-entropy and beta entropy
  double beta_prior_term = 0.0, beta_entropy_term = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    double prior_lg = std::lgamma(prior.row(k).sum());
    double lambda_lg = std::lgamma(lambda.row(k).sum());
    for (Eigen::Index v = 0; v < lambda.cols(); ++v) {
      prior_lg -= std::lgamma(prior(k, v));
      lambda_lg -= std::lgamma(lambda(k, v));
      beta_prior_term += (prior(k, v) - 1.0) * elog_beta.elog(k, v);
      beta_entropy_term -= (lambda(k, v) - 1.0) * elog_beta.elog(k, v);
    }
    beta_prior_term += prior_lg;
    beta_entropy_term -= lambda_lg;
  }

  const double alpha_lg_const = std::lgamma(alpha.sum()) - alpha.unaryExpr([](double a) {
                                                                 return std::lgamma(a);
                                                               }).sum();
  double theta_prior_term = 0.0, theta_entropy_term = 0.0, z_theta_term = 0.0, z_beta_term = 0.0,
         z_entropy_term = 0.0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const Vector& gamma = gammas[d];
    const Vector elog_th = detail::elog_theta(gamma);
    theta_prior_term += alpha_lg_const + ((alpha.array() - 1.0) * elog_th.array()).sum();
    double gamma_lg = std::lgamma(gamma.sum());
    for (Eigen::Index k = 0; k < K; ++k) gamma_lg -= std::lgamma(gamma[k]);
    theta_entropy_term -= gamma_lg + ((gamma.array() - 1.0) * elog_th.array()).sum();

    const Matrix& phi = phis[d];
    for (Eigen::Index j = 0; j < phi.rows(); ++j) {
      const auto [v, n] = docs[d].counts[static_cast<std::size_t>(j)];
      const double nd = static_cast<double>(n);
      for (Eigen::Index k = 0; k < K; ++k) {
        const double p = phi(j, k);
        if (p <= 0.0) continue;  // x log x -> 0
        z_theta_term += nd * p * elog_th[k];
        z_beta_term += nd * p * elog_beta.elog(k, v);
        z_entropy_term -= nd * p * std::log(p);
      }
    }
  }

  const struct {
    const char* name;
    double value;
  } terms[] = {{"beta_prior", beta_prior_term},   {"theta_prior", theta_prior_term},
               {"z_given_theta", z_theta_term},   {"w_given_z_beta", z_beta_term},
               {"beta_entropy", beta_entropy_term}, {"theta_entropy", theta_entropy_term},
               {"z_entropy", z_entropy_term}};
  double total = 0.0;
  for (const auto& t : terms) {
    if (!std::isfinite(t.value)) throw std::runtime_error(std::string("elbo: non-finite term ") + t.name);
    total += t.value;
  }
  return total;
}

struct BatchVBResult {
  Matrix lambda;
  int iterations = 0;
  std::vector<double> elbo_trace;  // one entry per outer iteration when tracked
};

/// Alternates {local_vb for all docs} / {global update against `prior`}
/// until the mean absolute lambda change falls below
/// cfg.global_tol * mean(|lambda|) or the iteration cap. The prior may be
/// any positive K x V matrix (a stream's running posterior), not only eta.
/// `lambda_init` overrides the warm start at `prior`.
inline BatchVBResult batch_vb_detailed(const Minibatch& batch, const Matrix& prior, const Vector& alpha,
                                       const VBConfig& cfg, std::optional<Matrix> lambda_init = std::nullopt) {
  BatchVBResult result;
  result.lambda = lambda_init ? std::move(*lambda_init) : prior;
  if (batch.docs.empty()) {
    result.lambda = prior;
    return result;
  }
  const std::size_t D = batch.docs.size();
  std::vector<LocalVariational> locals(D);
  for (int iter = 0; iter < cfg.global_max_iters; ++iter) {
    const ElogBeta elog_beta(result.lambda);
    for (std::size_t d = 0; d < D; ++d) locals[d] = local_vb(batch.docs[d], elog_beta, alpha, cfg);
    Matrix lambda_new = global_lambda_update(prior, batch.docs, locals);
    const double change = (lambda_new - result.lambda).cwiseAbs().mean();
    const double scale = lambda_new.cwiseAbs().mean();
    result.lambda = std::move(lambda_new);
    ++result.iterations;
    if (cfg.track_elbo) {
      std::vector<Vector> gammas(D);
      std::vector<Matrix> phis(D);
      for (std::size_t d = 0; d < D; ++d) {
        gammas[d] = locals[d].gamma;
        phis[d] = locals[d].phi;
      }
      result.elbo_trace.push_back(elbo(result.lambda, gammas, phis, batch.docs, prior, alpha));
    }
    if (change < cfg.global_tol * scale) break;
  }
  return result;
}

inline Matrix batch_vb(const Minibatch& batch, const Matrix& prior, const Vector& alpha, const VBConfig& cfg,
                       std::optional<Matrix> lambda_init = std::nullopt) {
  return batch_vb_detailed(batch, prior, alpha, cfg, std::move(lambda_init)).lambda;
}

}  // namespace ldastream
