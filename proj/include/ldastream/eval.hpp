#pragma once

// Held-out log predictive probability: fit gamma on each test document's
// training words, then score its held-out words under the factorized
// approximation p(w) ~= sum_k E[theta_dk] E[beta_kw].

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ldastream/corpus.hpp"
#include "ldastream/expfam.hpp"
#include "ldastream/vb.hpp"

namespace ldastream {

struct PredictiveScore {
  double log_prob_sum = 0.0;
  std::int64_t heldout_token_count = 0;
  double score = 0.0;  // log_prob_sum / heldout_token_count
  std::int64_t docs_scored = 0;
  std::int64_t docs_skipped = 0;
};

/// sum_k (gamma_k / sum gamma) * (lambda_kw / sum_u lambda_ku); the
/// probabilities over all w sum to 1.
inline double predictive_word_prob(const Vector& gamma_d, const Matrix& lambda, std::int32_t w) {
  const double gamma_total = gamma_d.sum();
  double p = 0.0;
  for (Eigen::Index k = 0; k < lambda.rows(); ++k)
    p += (gamma_d[k] / gamma_total) * (lambda(k, w) / lambda.row(k).sum());
  return p;
}

/// Per-token average log predictive probability over the split. gamma is
/// fit with the same LocalVB settings used in training; documents whose
/// train side is empty are skipped and counted. Scoring never mutates
/// lambda. Documents are scored in parallel when threads > 1 and reduced
/// in document order, so the result does not depend on thread count.
inline PredictiveScore score_heldout(const EvalSplit& split, const Matrix& lambda, const Vector& alpha,
                                     const VBConfig& vb_cfg, int threads = 1) {
  if (split.heldout_tokens() == 0) throw std::invalid_argument("score_heldout: split has no held-out tokens");
  const ElogBeta elog_beta(lambda);
  const Vector row_sums = lambda.rowwise().sum();

  struct DocResult {
    double log_prob = 0.0;
    std::int64_t tokens = 0;
    bool skipped = false;
  };
  std::vector<DocResult> results(split.docs.size());

  auto score_doc = [&](std::size_t i) {
    const HeldoutDoc& hd = split.docs[i];
    if (hd.train.empty() || hd.test.empty()) {
      results[i].skipped = true;
      return;
    }
    const Vector gamma = local_vb(hd.train, elog_beta, alpha, vb_cfg).gamma;
    const double gamma_total = gamma.sum();
    for (const auto& [w, n] : hd.test.counts) {
      double p = 0.0;
      for (Eigen::Index k = 0; k < lambda.rows(); ++k)
        p += (gamma[k] / gamma_total) * (lambda(k, w) / row_sums[k]);
      results[i].log_prob += static_cast<double>(n) * std::log(p);
      results[i].tokens += n;
    }
  };

  if (threads <= 1 || split.docs.size() < 2) {
    for (std::size_t i = 0; i < split.docs.size(); ++i) score_doc(i);
  } else {
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), split.docs.size());
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < split.docs.size(); i += n_threads) score_doc(i);
      });
    for (std::thread& t : pool) t.join();
  }

  PredictiveScore score;
  for (const DocResult& r : results) {
    if (r.skipped) {
      ++score.docs_skipped;
      continue;
    }
    score.log_prob_sum += r.log_prob;
    score.heldout_token_count += r.tokens;
    ++score.docs_scored;
  }
  if (score.heldout_token_count == 0) throw std::invalid_argument("score_heldout: no scoreable held-out tokens");
  score.score = score.log_prob_sum / static_cast<double>(score.heldout_token_count);
  return score;
}

}  // namespace ldastream
