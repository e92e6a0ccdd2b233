#pragma once

// Experiment driver behind the CLI: configuration validation, algorithm
// dispatch, periodic held-out evaluation, metrics emission, and checkpoint
// output.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ldastream/checkpoint.hpp"
#include "ldastream/corpus.hpp"
#include "ldastream/ep.hpp"
#include "ldastream/eval.hpp"
#include "ldastream/metrics.hpp"
#include "ldastream/sda.hpp"
#include "ldastream/ssu.hpp"
#include "ldastream/svi.hpp"
#include "ldastream/vb.hpp"

namespace ldastream {

enum class Algorithm { batch_vb, sda_vb, sda_ep, svi, ssu };
enum class Execution { sequential, sync, async };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::batch_vb: return "batch-vb";
    case Algorithm::sda_vb: return "sda-vb";
    case Algorithm::sda_ep: return "sda-ep";
    case Algorithm::svi: return "svi";
    case Algorithm::ssu: return "ssu";
  }
  return "?";
}

inline std::string to_string(Execution e) {
  switch (e) {
    case Execution::sequential: return "sequential";
    case Execution::sync: return "sync";
    case Execution::async: return "async";
  }
  return "?";
}

// Raised for invalid flag combinations; the CLI maps it to exit code 2.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  Algorithm algorithm = Algorithm::sda_vb;
  Execution execution = Execution::sequential;
  int workers = 1;
  std::int64_t minibatch_size = 32768;
  int num_topics = 100;
  double alpha = 0.01;  // 1/K for the default K
  double eta = 0.01;
  std::optional<std::int64_t> svi_total_docs;  // D
  double tau0 = 64.0;
  double kappa = 0.5;
  std::int64_t eval_every = 0;  // batches between evaluations; 0 = final only
  double holdout_fraction = 0.2;
  std::int64_t test_docs = 0;
  std::uint64_t seed = 42;
  std::string vocab_path;
  std::string corpus_path;
  std::string metrics_path;               // --out
  std::optional<std::string> checkpoint_path;
  std::optional<std::string> export_split_prefix;
  AsyncMode async_mode = AsyncMode::snapshot_prior;
  VBConfig vb;
  EPConfig ep;
  int eval_threads = 1;

  void validate() const {
    if (vocab_path.empty() || corpus_path.empty()) throw config_error("--vocab and --corpus are required");
    if (execution != Execution::sequential && algorithm != Algorithm::sda_vb && algorithm != Algorithm::sda_ep)
      throw config_error("--execution sync/async is only valid for sda-vb and sda-ep");
    if (algorithm == Algorithm::svi && !svi_total_docs) throw config_error("--svi-D is required for --algorithm svi");
    if (algorithm != Algorithm::svi && svi_total_docs)
      throw config_error("--svi-D is only valid for --algorithm svi");
    if (workers < 1) throw config_error("--workers must be >= 1");
    if (minibatch_size < 1) throw config_error("--minibatch-size must be >= 1");
    if (num_topics < 1) throw config_error("--K must be >= 1");
    if (!(alpha > 0.0) || !(eta > 0.0)) throw config_error("--alpha and --eta must be > 0");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
      throw config_error("--holdout-fraction must be in (0,1)");
    if (test_docs < 0) throw config_error("--test-docs must be >= 0");
    if (eval_every > 0 && test_docs == 0) throw config_error("--eval-every requires --test-docs > 0");
  }

  std::string canonical_string() const {
    std::ostringstream s;
    s << to_string(algorithm) << '|' << to_string(execution) << '|' << workers << '|' << minibatch_size << '|'
      << num_topics << '|' << alpha << '|' << eta << '|' << (svi_total_docs ? *svi_total_docs : -1) << '|'
      << tau0 << '|' << kappa << '|' << eval_every << '|' << holdout_fraction << '|' << test_docs << '|' << seed
      << '|' << (async_mode == AsyncMode::fixed_prior ? "fixed-prior" : "snapshot-prior") << '|' << vocab_path
      << '|' << corpus_path;
    return s.str();
  }

  std::string config_hash() const {
    std::ostringstream s;
    s << std::hex << fnv1a_hash(canonical_string());
    return s.str();
  }
};

struct RunResult {
  Matrix lambda;
  std::uint64_t batches_seen = 0;
  std::uint64_t tokens_seen = 0;
  std::optional<PredictiveScore> final_score;
};

// Prior-parameterized VB primitive for the streaming engine. Each batch
// re-seeds its own lambda initialization from (seed, batch_index) so that
// runs are reproducible no matter which worker handles the batch.
struct BatchVBPrimitive {
  Vector alpha;
  VBConfig vb_cfg;
  std::uint64_t seed = 0;

  Matrix operator()(const Minibatch& batch, const Matrix& prior) const {
    if (batch.docs.empty()) return prior;
    Matrix init = init_lambda(prior, detail::mix_seed(seed, static_cast<std::uint64_t>(batch.batch_index)));
    return batch_vb(batch, prior, alpha, vb_cfg, std::move(init));
  }
};

struct BatchEPPrimitive {
  Vector alpha;
  EPConfig ep_cfg;

  Matrix operator()(const Minibatch& batch, const Matrix& prior) const {
    return batch_ep(batch, prior, alpha, ep_cfg);
  }
};

inline RunResult run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count(); };

  const Vocabulary vocab = load_vocabulary(cfg.vocab_path);
  const std::int32_t V = vocab.size();
  const Eigen::Index K = cfg.num_topics;
  const Matrix eta = Matrix::Constant(K, V, cfg.eta);
  const Vector alpha = Vector::Constant(K, cfg.alpha);

  EvalSplit split;
  if (cfg.test_docs > 0) {
    std::vector<Document> test_docs;
    CorpusFileReader head(cfg.corpus_path, V);
    for (std::int64_t i = 0; i < cfg.test_docs; ++i) {
      auto doc = head.next();
      if (!doc) throw config_error("--test-docs exceeds the number of corpus documents");
      test_docs.push_back(std::move(*doc));
    }
    split = build_eval_split(test_docs, cfg.holdout_fraction, cfg.seed);
    if (cfg.export_split_prefix) export_eval_split(split, *cfg.export_split_prefix);
  }

  MetricsWriter metrics;
  if (!cfg.metrics_path.empty())
    metrics = MetricsWriter(cfg.metrics_path, to_string(cfg.algorithm), cfg.workers, cfg.config_hash());

  auto evaluate = [&](const Matrix& lambda) -> std::optional<PredictiveScore> {
    if (split.docs.empty()) return std::nullopt;
    return score_heldout(split, lambda, alpha, cfg.vb, cfg.eval_threads);
  };

  RunResult result;
  ProgressHook hook = [&](const ProgressEvent& ev, const Matrix& lambda) {
    result.batches_seen = ev.batches_applied;
    result.tokens_seen = ev.tokens_applied;
    if (cfg.eval_every > 0 && ev.batches_applied % static_cast<std::uint64_t>(cfg.eval_every) == 0) {
      if (auto score = evaluate(lambda); score && metrics)
        metrics.write(elapsed(), ev.batches_applied, ev.tokens_applied, score->score);
    }
  };

  VBConfig vb_cfg = cfg.vb;
  vb_cfg.init_seed = cfg.seed;

  CorpusFileReader reader(cfg.corpus_path, V, cfg.test_docs);
  MinibatchStream stream(reader.producer(), cfg.minibatch_size);

  switch (cfg.algorithm) {
    case Algorithm::batch_vb: {
      Minibatch all;
      all.batch_index = 0;
      while (auto doc = reader.next()) all.docs.push_back(std::move(*doc));
      result.tokens_seen = static_cast<std::uint64_t>(all.token_count());
      result.batches_seen = all.docs.empty() ? 0 : 1;
      result.lambda = batch_vb(all, eta, alpha, vb_cfg, init_lambda(eta, cfg.seed));
      break;
    }
    case Algorithm::sda_vb:
    case Algorithm::sda_ep: {
      auto dispatch = [&](auto&& prim) -> Matrix {
        switch (cfg.execution) {
          case Execution::sequential:
            return run_sequential(stream, prim, eta, hook).xi_post;
          case Execution::sync:
            return run_parallel_sync(stream, prim, cfg.workers, eta, hook).xi_post;
          case Execution::async:
            return run_async(stream, prim, cfg.workers, eta, cfg.async_mode, hook).xi_post;
        }
        throw config_error("unreachable execution mode");
      };
      if (cfg.algorithm == Algorithm::sda_vb)
        result.lambda = dispatch(BatchVBPrimitive{alpha, vb_cfg, cfg.seed});
      else
        result.lambda = dispatch(BatchEPPrimitive{alpha, cfg.ep});
      break;
    }
    case Algorithm::svi: {
      SVIConfig svi_cfg;
      svi_cfg.total_docs = *cfg.svi_total_docs;
      svi_cfg.tau0 = cfg.tau0;
      svi_cfg.kappa = cfg.kappa;
      result.lambda = run_svi(stream, svi_cfg, eta, alpha, vb_cfg, hook);
      break;
    }
    case Algorithm::ssu: {
      result.lambda = run_ssu(stream, eta, alpha, vb_cfg, hook);
      break;
    }
  }

  result.final_score = evaluate(result.lambda);
  if (metrics && result.final_score)
    metrics.write(elapsed(), result.batches_seen, result.tokens_seen, result.final_score->score);
  if (cfg.checkpoint_path) save_checkpoint(result.lambda, *cfg.checkpoint_path);
  return result;
}

}  // namespace ldastream
