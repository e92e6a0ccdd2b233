#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ldastream/driver.hpp"
#include "ldastream/synth.hpp"
#include "oracles.hpp"

using namespace ldastream;

namespace {

struct Fixture {
  std::string dir;
  std::string vocab_path;
  std::string corpus_path;

  explicit Fixture(const std::string& name, std::int64_t docs = 40, std::int32_t vocab = 12,
                   std::int32_t topics = 3, std::uint64_t seed = 17) {
    dir = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::create_directories(dir);
    GenerativeConfig gen;
    gen.num_docs = docs;
    gen.vocab_size = vocab;
    gen.num_topics = topics;
    gen.doc_length = 20;
    gen.seed = seed;
    SynthCorpus corpus = generate_corpus(gen);
    vocab_path = dir + "/vocab.txt";
    corpus_path = dir + "/corpus.txt";
    write_corpus(corpus.docs, corpus_path);
    write_synthetic_vocabulary(vocab, vocab_path);
  }

  RunConfig base_config() const {
    RunConfig cfg;
    cfg.num_topics = 3;
    cfg.alpha = 1.0 / 3.0;
    cfg.eta = 0.1;
    cfg.minibatch_size = 8;
    cfg.vocab_path = vocab_path;
    cfg.corpus_path = corpus_path;
    return cfg;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unif(1e-8, 1e6);
  Matrix lambda(4, 7);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda.data()[i] = unif(rng);
  const std::string path = (std::filesystem::temp_directory_path() / "ldastream_ckpt_test").string();
  save_checkpoint(lambda, path);
  Matrix back = load_checkpoint(path);
  REQUIRE(oracle::same_bits(lambda, back));

  std::ofstream bad(path);
  bad << "something else\n";
  bad.close();
  CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("header"));
}

TEST_CASE("config validation catches invalid combinations", "[errors]") {
  Fixture fx("ldastream_driver_validate");
  RunConfig cfg = fx.base_config();
  cfg.algorithm = Algorithm::svi;
  CHECK_THROWS_AS(cfg.validate(), config_error);  // svi without D

  cfg = fx.base_config();
  cfg.algorithm = Algorithm::ssu;
  cfg.execution = Execution::async;
  CHECK_THROWS_AS(cfg.validate(), config_error);  // async only for sda-*

  cfg = fx.base_config();
  cfg.svi_total_docs = 100;
  CHECK_THROWS_AS(cfg.validate(), config_error);  // D given for non-svi

  cfg = fx.base_config();
  cfg.eval_every = 2;
  CHECK_THROWS_AS(cfg.validate(), config_error);  // eval cadence without test docs

  cfg = fx.base_config();
  cfg.vocab_path.clear();
  CHECK_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("ssu with eval-every=1 writes one record per batch plus a final record") {
  Fixture fx("ldastream_driver_ssu", 21);
  RunConfig cfg = fx.base_config();
  cfg.algorithm = Algorithm::ssu;
  cfg.minibatch_size = 4;
  cfg.test_docs = 5;
  cfg.eval_every = 1;
  cfg.metrics_path = fx.dir + "/metrics.csv";
  RunResult result = run_experiment(cfg);
  CHECK(result.batches_seen == 4);  // 16 training docs / 4

  std::ifstream in(cfg.metrics_path);
  std::string line;
  std::getline(in, line);  // header
  CHECK(line.rfind("wall_seconds,", 0) == 0);
  int records = 0;
  std::uint64_t last_tokens = 0;
  while (std::getline(in, line)) {
    ++records;
    std::istringstream fields(line);
    std::string wall, batches, tokens;
    std::getline(fields, wall, ',');
    std::getline(fields, batches, ',');
    std::getline(fields, tokens, ',');
    const std::uint64_t t = std::stoull(tokens);
    CHECK(t >= last_tokens);  // monotone in tokens seen
    last_tokens = t;
    CHECK(line.find("ssu") != std::string::npos);
    CHECK(line.find(cfg.config_hash()) != std::string::npos);
  }
  CHECK(records == 4 + 1);
}

TEST_CASE("async one-worker run produces a checkpoint bit-identical to sequential") {
  Fixture fx("ldastream_driver_async1", 30);
  RunConfig cfg = fx.base_config();
  cfg.algorithm = Algorithm::sda_vb;
  cfg.minibatch_size = 6;
  cfg.seed = 99;

  cfg.execution = Execution::sequential;
  cfg.checkpoint_path = fx.dir + "/seq.ckpt";
  run_experiment(cfg);

  cfg.execution = Execution::async;
  cfg.workers = 1;
  cfg.checkpoint_path = fx.dir + "/async1.ckpt";
  run_experiment(cfg);

  REQUIRE(slurp(fx.dir + "/seq.ckpt") == slurp(fx.dir + "/async1.ckpt"));
}

TEST_CASE("sda-ep runs end to end through the driver") {
  Fixture fx("ldastream_driver_ep", 12);
  RunConfig cfg = fx.base_config();
  cfg.algorithm = Algorithm::sda_ep;
  cfg.eta = 1.0;  // unit prior keeps the positivity check quiet
  cfg.minibatch_size = 6;
  cfg.test_docs = 4;
  RunResult result = run_experiment(cfg);
  CHECK(result.batches_seen == 2);
  REQUIRE(result.final_score.has_value());
  CHECK(result.final_score->score < 0.0);
  CHECK((result.lambda.array() > 0.0).all());
}

TEST_CASE("export-split writes train/test files aligned with the corpus head") {
  Fixture fx("ldastream_driver_split", 25);
  RunConfig cfg = fx.base_config();
  cfg.algorithm = Algorithm::ssu;
  cfg.test_docs = 6;
  cfg.export_split_prefix = fx.dir + "/split";
  run_experiment(cfg);

  std::ifstream train(fx.dir + "/split.train"), test(fx.dir + "/split.test");
  REQUIRE(train.good());
  REQUIRE(test.good());
  std::ifstream corpus(fx.corpus_path);
  std::string train_line, test_line, corpus_line;
  int pairs = 0;
  while (std::getline(train, train_line) && std::getline(test, test_line)) {
    REQUIRE(std::getline(corpus, corpus_line));
    Document train_doc = parse_document(train_line, 12);
    Document test_doc = parse_document(test_line, 12);
    Document original = parse_document(corpus_line, 12);
    CHECK(train_doc.total_tokens() + test_doc.total_tokens() == original.total_tokens());
    ++pairs;
  }
  CHECK(pairs == 6);
}
