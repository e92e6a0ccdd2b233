// Command-line experiment driver.
//
//   ldastream run   --algorithm sda-vb --vocab v.txt --corpus c.txt ...
//   ldastream synth --docs 2000 --vocab-size 100 --topics 5 --out-prefix data/syn
//
// `run` trains the selected algorithm over a minibatch stream, evaluates
// held-out log predictive probability at the configured cadence, and
// writes a CSV metrics file plus an optional posterior checkpoint.

#include <exception>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "ldastream/driver.hpp"
#include "ldastream/synth.hpp"

namespace {

int run_command(ldastream::RunConfig& cfg) {
  using namespace ldastream;
  try {
    cfg.validate();
  } catch (const config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  }
  try {
    RunResult result = run_experiment(cfg);
    std::cout << "batches=" << result.batches_seen << " tokens=" << result.tokens_seen;
    if (result.final_score)
      std::cout << " log_pred_prob=" << result.final_score->score << " docs_scored=" << result.final_score->docs_scored
                << " docs_skipped=" << result.final_score->docs_skipped;
    std::cout << "\n";
    return 0;
  } catch (const config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
}

int synth_command(const ldastream::GenerativeConfig& cfg, const std::string& prefix) {
  using namespace ldastream;
  try {
    SynthCorpus corpus = generate_corpus(cfg);
    write_corpus(corpus.docs, prefix + ".corpus.txt");
    write_synthetic_vocabulary(cfg.vocab_size, prefix + ".vocab.txt");
    write_ground_truth(corpus, prefix + ".truth.txt");
    std::cout << "wrote " << prefix << ".corpus.txt (" << corpus.docs.size() << " docs), " << prefix
              << ".vocab.txt, " << prefix << ".truth.txt\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "synth failed: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming Bayesian inference for latent Dirichlet allocation"};
  app.require_subcommand(1);

  ldastream::RunConfig cfg;
  const std::map<std::string, ldastream::Algorithm> algo_names{{"batch-vb", ldastream::Algorithm::batch_vb},
                                                               {"sda-vb", ldastream::Algorithm::sda_vb},
                                                               {"sda-ep", ldastream::Algorithm::sda_ep},
                                                               {"svi", ldastream::Algorithm::svi},
                                                               {"ssu", ldastream::Algorithm::ssu}};
  const std::map<std::string, ldastream::Execution> exec_names{{"sequential", ldastream::Execution::sequential},
                                                               {"sync", ldastream::Execution::sync},
                                                               {"async", ldastream::Execution::async}};
  const std::map<std::string, ldastream::AsyncMode> async_names{
      {"snapshot-prior", ldastream::AsyncMode::snapshot_prior},
      {"fixed-prior", ldastream::AsyncMode::fixed_prior}};

  CLI::App* run = app.add_subcommand("run", "train an algorithm over a corpus stream");
  run->set_config("--config");
  run->add_option("--algorithm", cfg.algorithm, "batch-vb | sda-vb | sda-ep | svi | ssu")
      ->transform(CLI::CheckedTransformer(algo_names, CLI::ignore_case));
  run->add_option("--execution", cfg.execution, "sequential | sync | async (sda-* only)")
      ->transform(CLI::CheckedTransformer(exec_names, CLI::ignore_case));
  run->add_option("--workers", cfg.workers, "worker threads for sync/async execution");
  run->add_option("--minibatch-size", cfg.minibatch_size, "documents per minibatch");
  run->add_option("--K", cfg.num_topics, "number of topics");
  run->add_option("--alpha", cfg.alpha, "symmetric Dirichlet prior on topic proportions");
  run->add_option("--eta", cfg.eta, "symmetric Dirichlet prior on topics");
  run->add_option("--svi-D", cfg.svi_total_docs, "SVI's pre-specified corpus size D");
  run->add_option("--tau0", cfg.tau0, "SVI learning-rate offset");
  run->add_option("--kappa", cfg.kappa, "SVI learning-rate decay in [0.5,1]");
  run->add_option("--eval-every", cfg.eval_every, "evaluate every N batches (0 = final only)");
  run->add_option("--holdout-fraction", cfg.holdout_fraction, "per-document held-out word fraction");
  run->add_option("--test-docs", cfg.test_docs, "documents reserved from the corpus head for testing");
  run->add_option("--seed", cfg.seed, "seed for initialization and splits");
  run->add_option("--vocab", cfg.vocab_path, "vocabulary file, one token per line")->required();
  run->add_option("--corpus", cfg.corpus_path, "corpus file, one ID:COUNT document per line")->required();
  run->add_option("--out", cfg.metrics_path, "metrics CSV output path");
  run->add_option("--checkpoint", cfg.checkpoint_path, "posterior checkpoint output path");
  run->add_option("--export-split", cfg.export_split_prefix, "write <prefix>.train/.test split files");
  run->add_option("--async-mode", cfg.async_mode, "snapshot-prior | fixed-prior")
      ->transform(CLI::CheckedTransformer(async_names, CLI::ignore_case));
  run->add_option("--eval-threads", cfg.eval_threads, "threads for held-out scoring");
  run->add_option("--local-tol", cfg.vb.local_tol, "LocalVB convergence tolerance");
  run->add_option("--local-max-iters", cfg.vb.local_max_iters, "LocalVB sweep cap");
  run->add_option("--global-tol", cfg.vb.global_tol, "batch VB relative lambda tolerance");
  run->add_option("--global-max-iters", cfg.vb.global_max_iters, "batch VB outer iteration cap");
  run->add_option("--ep-tol", cfg.ep.tol, "batch EP site-change tolerance");
  run->add_option("--ep-max-sweeps", cfg.ep.max_sweeps, "batch EP sweep cap");

  ldastream::GenerativeConfig gen;
  std::string prefix = "synthetic";
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus from the generative model");
  synth->add_option("--docs", gen.num_docs, "number of documents")->required();
  synth->add_option("--vocab-size", gen.vocab_size, "vocabulary size")->required();
  synth->add_option("--topics", gen.num_topics, "number of topics")->required();
  synth->add_option("--doc-length", gen.doc_length, "tokens per document (or Poisson mean)");
  synth->add_flag("--poisson-lengths", gen.poisson_lengths, "draw document lengths from a Poisson");
  synth->add_option("--gen-alpha", gen.alpha, "symmetric Dirichlet for topic proportions");
  synth->add_option("--gen-eta", gen.eta, "symmetric Dirichlet for topics");
  synth->add_option("--seed", gen.seed, "generator seed");
  synth->add_option("--out-prefix", prefix, "output path prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) return run_command(cfg);
  return synth_command(gen, prefix);
}
