#pragma once

// Vocabulary and bag-of-words corpus IO, minibatch streaming, and held-out
// split construction.
//
// File formats (both UTF-8, LF):
//   vocabulary: one token per line; line order defines 0-based word ids.
//   corpus:     one document per line; zero or more "ID:COUNT" pairs
//               separated by single spaces; ID in [0,V), COUNT >= 1;
//               an empty line is an empty document.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ldastream {

class parse_error : public std::runtime_error {
 public:
  parse_error(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

struct Vocabulary {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::int32_t> index;

  std::int32_t size() const { return static_cast<std::int32_t>(tokens.size()); }
};

// Sparse bag of words; entries sorted by word id, all counts >= 1.
struct Document {
  std::vector<std::pair<std::int32_t, std::int32_t>> counts;
  std::int64_t doc_id = 0;

  std::int64_t total_tokens() const {
    std::int64_t n = 0;
    for (const auto& [v, c] : counts) n += c;
    return n;
  }
  bool empty() const { return counts.empty(); }
};

struct Minibatch {
  std::vector<Document> docs;
  std::int64_t batch_index = 0;

  std::int64_t token_count() const {
    std::int64_t n = 0;
    for (const Document& d : docs) n += d.total_tokens();
    return n;
  }
};

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  Vocabulary vocab;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto [it, inserted] = vocab.index.emplace(line, static_cast<std::int32_t>(vocab.tokens.size()));
    if (!inserted)
      throw std::runtime_error("duplicate token \"" + line + "\" in " + path + ": lines " +
                               std::to_string(it->second + 1) + " and " + std::to_string(line_no));
    vocab.tokens.push_back(line);
  }
  if (vocab.tokens.empty()) throw std::runtime_error("empty vocabulary file: " + path);
  return vocab;
}

/// Parses one "ID:COUNT ID:COUNT ..." line. Repeated ids are summed.
inline Document parse_document(const std::string& line, std::int32_t vocab_size, std::int64_t doc_id = 0) {
  std::map<std::int32_t, std::int64_t> merged;
  std::size_t pos = 0;
  const std::size_t n = line.size();
  while (pos < n) {
    if (line[pos] == ' ') {
      ++pos;
      continue;
    }
    const std::size_t start = pos;
    std::size_t colon = line.find(':', pos);
    std::size_t end = line.find(' ', pos);
    if (end == std::string::npos) end = n;
    if (colon == std::string::npos || colon >= end)
      throw parse_error("malformed pair, expected ID:COUNT", start);
    std::int64_t id = 0, count = 0;
    try {
      std::size_t used = 0;
      id = std::stoll(line.substr(start, colon - start), &used);
      if (used != colon - start) throw std::invalid_argument("trailing");
      count = std::stoll(line.substr(colon + 1, end - colon - 1), &used);
      if (used != end - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw parse_error("malformed pair, expected ID:COUNT", start);
    }
    if (id < 0 || id >= vocab_size)
      throw parse_error("word id " + std::to_string(id) + " out of range [0," + std::to_string(vocab_size) + ")",
                        start);
    if (count <= 0) throw parse_error("count must be positive, got " + std::to_string(count), colon + 1);
    merged[static_cast<std::int32_t>(id)] += count;
    pos = end;
  }
  Document doc;
  doc.doc_id = doc_id;
  doc.counts.reserve(merged.size());
  for (const auto& [id, count] : merged)
    doc.counts.emplace_back(id, static_cast<std::int32_t>(count));
  return doc;
}

inline std::string format_document(const Document& doc) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [v, c] : doc.counts) {
    if (!first) out << ' ';
    out << v << ':' << c;
    first = false;
  }
  return out.str();
}

// Single-consumer minibatch cursor over a document producer. Constant
// memory beyond one chunk; not thread-safe on its own (the SDA engine
// serializes access).
class MinibatchStream {
 public:
  using DocProducer = std::function<std::optional<Document>()>;

  MinibatchStream(DocProducer producer, std::int64_t batch_size)
      : producer_(std::move(producer)), batch_size_(batch_size) {
    if (batch_size_ < 1) throw std::invalid_argument("minibatch size must be >= 1");
  }

  std::optional<Minibatch> next() {
    if (done_) return std::nullopt;
    Minibatch batch;
    batch.batch_index = next_index_;
    batch.docs.reserve(static_cast<std::size_t>(batch_size_));
    while (static_cast<std::int64_t>(batch.docs.size()) < batch_size_) {
      std::optional<Document> doc = producer_();
      if (!doc) {
        done_ = true;
        break;
      }
      batch.docs.push_back(std::move(*doc));
    }
    if (batch.docs.empty()) return std::nullopt;
    ++next_index_;
    return batch;
  }

 private:
  DocProducer producer_;
  std::int64_t batch_size_;
  std::int64_t next_index_ = 0;
  bool done_ = false;
};

inline MinibatchStream::DocProducer vector_doc_producer(std::vector<Document> docs) {
  auto state = std::make_shared<std::pair<std::vector<Document>, std::size_t>>(std::move(docs), 0);
  return [state]() -> std::optional<Document> {
    if (state->second >= state->first.size()) return std::nullopt;
    return state->first[state->second++];
  };
}

/// Consecutive non-overlapping chunks of `size` documents in source order;
/// the final chunk may be smaller.
inline std::vector<Minibatch> stream_minibatches(const std::vector<Document>& docs, std::int64_t size) {
  MinibatchStream stream(vector_doc_producer(docs), size);
  std::vector<Minibatch> out;
  while (auto b = stream.next()) out.push_back(std::move(*b));
  return out;
}

// Streams documents off a corpus file, one line at a time. `skip_docs`
// lines at the head are consumed without being emitted (they are the
// reserved test documents).
class CorpusFileReader {
 public:
  CorpusFileReader(const std::string& path, std::int32_t vocab_size, std::int64_t skip_docs = 0)
      : in_(std::make_shared<std::ifstream>(path)), vocab_size_(vocab_size) {
    if (!*in_) throw std::runtime_error("cannot open corpus file: " + path);
    std::string line;
    for (std::int64_t i = 0; i < skip_docs; ++i) {
      if (!std::getline(*in_, line)) throw std::runtime_error("corpus has fewer than skip_docs lines: " + path);
      ++line_no_;
    }
  }

  std::optional<Document> next() {
    std::string line;
    if (!std::getline(*in_, line)) return std::nullopt;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Document doc = parse_document(line, vocab_size_, line_no_);
    ++line_no_;
    return doc;
  }

  MinibatchStream::DocProducer producer() {
    auto self = *this;
    return [self]() mutable { return self.next(); };
  }

 private:
  std::shared_ptr<std::ifstream> in_;
  std::int32_t vocab_size_;
  std::int64_t line_no_ = 0;
};

// A test document split into training words (used to fit gamma) and
// held-out test words (scored).
struct HeldoutDoc {
  Document train;
  Document test;
};

struct EvalSplit {
  std::vector<HeldoutDoc> docs;
  std::int64_t docs_excluded = 0;  // N_d < 2, unusable for train/test

  std::int64_t heldout_tokens() const {
    std::int64_t n = 0;
    for (const auto& hd : docs) n += hd.test.total_tokens();
    return n;
  }
};

namespace detail {
// splitmix64 step; mixes (seed, doc_id) into an independent stream key.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a42a4f7c2b5dULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Assigns each token independently to the test side with probability
/// `fraction` under a generator keyed by (seed, doc_id). If one side ends
/// up empty, one token of the lowest word id is moved across so both sides
/// are non-empty. Token-exact: train + test == doc.
inline HeldoutDoc split_heldout(const Document& doc, double fraction, std::uint64_t seed) {
  if (doc.total_tokens() < 2) throw std::invalid_argument("split_heldout requires N_d >= 2");
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must be in (0,1)");
  std::mt19937_64 rng(detail::mix_seed(seed, static_cast<std::uint64_t>(doc.doc_id)));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::map<std::int32_t, std::int32_t> train, test;
  for (const auto& [v, c] : doc.counts)
    for (std::int32_t i = 0; i < c; ++i)
      (unif(rng) < fraction ? test : train)[v] += 1;

  auto move_lowest = [](std::map<std::int32_t, std::int32_t>& from, std::map<std::int32_t, std::int32_t>& to) {
    auto it = from.begin();
    to[it->first] += 1;
    if (--it->second == 0) from.erase(it);
  };
  if (train.empty()) move_lowest(test, train);
  if (test.empty()) move_lowest(train, test);

  HeldoutDoc out;
  out.train.doc_id = out.test.doc_id = doc.doc_id;
  for (const auto& [v, c] : train) out.train.counts.emplace_back(v, c);
  for (const auto& [v, c] : test) out.test.counts.emplace_back(v, c);
  return out;
}

/// Splits every document with N_d >= 2; shorter documents are excluded and
/// counted, not fatal.
inline EvalSplit build_eval_split(const std::vector<Document>& test_docs, double fraction, std::uint64_t seed) {
  EvalSplit split;
  for (const Document& doc : test_docs) {
    if (doc.total_tokens() < 2) {
      ++split.docs_excluded;
      continue;
    }
    split.docs.push_back(split_heldout(doc, fraction, seed));
  }
  return split;
}

/// Debug export: writes `<prefix>.train` and `<prefix>.test` in the corpus
/// format, line i of each corresponding to test document i.
inline void export_eval_split(const EvalSplit& split, const std::string& prefix) {
  std::ofstream train_out(prefix + ".train"), test_out(prefix + ".test");
  if (!train_out || !test_out) throw std::runtime_error("cannot write split files at prefix: " + prefix);
  for (const auto& hd : split.docs) {
    train_out << format_document(hd.train) << '\n';
    test_out << format_document(hd.test) << '\n';
  }
}

}  // namespace ldastream
