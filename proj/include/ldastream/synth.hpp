#pragma once

// Synthetic LDA corpus generation from the generative model:
// beta_k ~ Dir(eta), theta_d ~ Dir(alpha), z_dn ~ Cat(theta_d),
// w_dn ~ Cat(beta_{z_dn}). Used by the acceptance suite and the CLI's
// synth subcommand.

#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldastream/corpus.hpp"
#include "ldastream/expfam.hpp"

namespace ldastream {

struct GenerativeConfig {
  std::int64_t num_docs = 0;
  std::int32_t vocab_size = 0;
  std::int32_t num_topics = 0;
  double doc_length = 100.0;    // fixed length, or the Poisson mean
  bool poisson_lengths = false;
  double alpha = 0.2;           // symmetric Dir prior on theta
  double eta = 0.5;             // symmetric Dir prior on beta
  std::uint64_t seed = 0;

  void validate() const {
    if (num_docs < 1 || vocab_size < 1 || num_topics < 1)
      throw std::invalid_argument("GenerativeConfig: sizes must be positive");
    if (!(alpha > 0.0) || !(eta > 0.0) || !(doc_length > 0.0))
      throw std::invalid_argument("GenerativeConfig: hyperparameters must be positive");
  }
};

struct SynthCorpus {
  std::vector<Document> docs;
  Matrix true_beta;   // K x V, rows on the simplex
  Matrix true_theta;  // D x K, rows on the simplex
};

namespace detail {
inline Vector sample_dirichlet(std::mt19937_64& rng, Eigen::Index dim, double concentration) {
  std::gamma_distribution<double> gamma_draw(concentration, 1.0);
  Vector draw(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    double g = 0.0;
    while (g <= 0.0) g = gamma_draw(rng);  // guards against underflow at tiny concentration
    draw[i] = g;
  }
  return draw / draw.sum();
}

inline Eigen::Index sample_categorical(std::mt19937_64& rng, const Vector& probs) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    u -= probs[i];
    if (u < 0.0) return i;
  }
  return probs.size() - 1;
}
}  // namespace detail

/// Deterministic per seed. Documents satisfy every Document invariant and
/// round-trip through the corpus file format.
inline SynthCorpus generate_corpus(const GenerativeConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SynthCorpus out;
  out.true_beta.resize(cfg.num_topics, cfg.vocab_size);
  out.true_theta.resize(cfg.num_docs, cfg.num_topics);
  for (std::int32_t k = 0; k < cfg.num_topics; ++k)
    out.true_beta.row(k) = detail::sample_dirichlet(rng, cfg.vocab_size, cfg.eta).transpose();

  std::poisson_distribution<std::int64_t> poisson(cfg.doc_length);
  out.docs.reserve(static_cast<std::size_t>(cfg.num_docs));
  for (std::int64_t d = 0; d < cfg.num_docs; ++d) {
    const Vector theta = detail::sample_dirichlet(rng, cfg.num_topics, cfg.alpha);
    out.true_theta.row(d) = theta.transpose();
    const std::int64_t length =
        cfg.poisson_lengths ? poisson(rng) : static_cast<std::int64_t>(cfg.doc_length);
    std::map<std::int32_t, std::int32_t> counts;
    for (std::int64_t n = 0; n < length; ++n) {
      const Eigen::Index z = detail::sample_categorical(rng, theta);
      const Eigen::Index w = detail::sample_categorical(rng, out.true_beta.row(z).transpose());
      counts[static_cast<std::int32_t>(w)] += 1;
    }
    Document doc;
    doc.doc_id = d;
    for (const auto& [v, c] : counts) doc.counts.emplace_back(v, c);
    out.docs.push_back(std::move(doc));
  }
  return out;
}

inline void write_corpus(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const Document& doc : docs) out << format_document(doc) << '\n';
}

/// Synthetic vocabulary: tokens w0 .. w{V-1}.
inline void write_synthetic_vocabulary(std::int32_t vocab_size, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
  for (std::int32_t v = 0; v < vocab_size; ++v) out << 'w' << v << '\n';
}

/// Ground-truth sidecar: dimensions, then beta rows, then theta rows.
inline void write_ground_truth(const SynthCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ground-truth file: " + path);
  out << "ldastream-truth v1\n";
  out << corpus.true_beta.rows() << ' ' << corpus.true_beta.cols() << ' ' << corpus.true_theta.rows() << '\n';
  out.precision(17);
  for (Eigen::Index k = 0; k < corpus.true_beta.rows(); ++k) {
    for (Eigen::Index v = 0; v < corpus.true_beta.cols(); ++v)
      out << corpus.true_beta(k, v) << (v + 1 == corpus.true_beta.cols() ? '\n' : ' ');
  }
  for (Eigen::Index d = 0; d < corpus.true_theta.rows(); ++d) {
    for (Eigen::Index k = 0; k < corpus.true_theta.cols(); ++k)
      out << corpus.true_theta(d, k) << (k + 1 == corpus.true_theta.cols() ? '\n' : ' ');
  }
}

}  // namespace ldastream
