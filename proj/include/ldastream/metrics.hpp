#pragma once

// Metrics emission: one comma-separated record per evaluation,
//   wall_seconds,batches_seen,tokens_seen,log_pred_prob,algorithm,workers,config_hash
// Plots are produced externally; this tool emits data only.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ldastream {

inline std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct MetricsRecord {
  double wall_seconds = 0.0;
  std::uint64_t batches_seen = 0;
  std::uint64_t tokens_seen = 0;
  double log_pred_prob = 0.0;
  std::string algorithm;
  int workers = 1;
  std::string config_hash;
};

class MetricsWriter {
 public:
  MetricsWriter() = default;

  MetricsWriter(const std::string& path, std::string algorithm, int workers, std::string config_hash)
      : out_(std::make_shared<std::ofstream>(path)),
        algorithm_(std::move(algorithm)),
        workers_(workers),
        config_hash_(std::move(config_hash)) {
    if (!*out_) throw std::runtime_error("cannot write metrics file: " + path);
    *out_ << "wall_seconds,batches_seen,tokens_seen,log_pred_prob,algorithm,workers,config_hash\n";
  }

  void write(double wall_seconds, std::uint64_t batches, std::uint64_t tokens, double log_pred_prob) {
    if (!out_) return;
    *out_ << std::setprecision(10) << wall_seconds << ',' << batches << ',' << tokens << ','
          << std::setprecision(12) << log_pred_prob << ',' << algorithm_ << ',' << workers_ << ','
          << config_hash_ << '\n';
    out_->flush();
  }

  explicit operator bool() const { return static_cast<bool>(out_); }

 private:
  std::shared_ptr<std::ofstream> out_;
  std::string algorithm_;
  int workers_ = 1;
  std::string config_hash_;
};

}  // namespace ldastream
