#pragma once

// Posterior checkpoint file, shared by every algorithm. Text format with a
// versioned header; entries are hexadecimal floating point so a checkpoint
// round-trips bit-exactly:
//
//   ldastream-checkpoint v1
//   K V
//   <V hexfloat entries per row, K rows>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ldastream/expfam.hpp"

namespace ldastream {

inline void save_checkpoint(const Matrix& lambda, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << "ldastream-checkpoint v1\n" << lambda.rows() << ' ' << lambda.cols() << '\n';
  char buf[64];
  for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
    for (Eigen::Index v = 0; v < lambda.cols(); ++v) {
      std::snprintf(buf, sizeof(buf), "%a", lambda(k, v));
      out << buf << (v + 1 == lambda.cols() ? '\n' : ' ');
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Matrix load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "ldastream-checkpoint v1")
    throw std::runtime_error("unrecognized checkpoint header in " + path + ": " + header);
  Eigen::Index rows = 0, cols = 0;
  in >> rows >> cols;
  if (rows < 1 || cols < 1) throw std::runtime_error("bad checkpoint dimensions in " + path);
  Matrix lambda(rows, cols);
  std::string token;
  for (Eigen::Index k = 0; k < rows; ++k)
    for (Eigen::Index v = 0; v < cols; ++v) {
      if (!(in >> token)) throw std::runtime_error("truncated checkpoint: " + path);
      lambda(k, v) = std::strtod(token.c_str(), nullptr);
    }
  return lambda;
}

}  // namespace ldastream
