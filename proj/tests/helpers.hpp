#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kcd/matrix.hpp"
#include "kcd/rng.hpp"
#include "kcd/tensor.hpp"

namespace kcdtest {

// Scratch directory removed at scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    dir_ = std::filesystem::temp_directory_path() /
           ("kcd-test-" + tag + "-" + std::to_string(++counter) + "-" +
            std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

inline kcd::Matrix random_matrix(std::size_t rows, std::size_t cols, kcd::Rng& rng,
                                 double lo = -1.0, double hi = 1.0) {
  kcd::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline kcd::PooledActivations random_pooled(std::size_t b, std::size_t c, kcd::Rng& rng) {
  kcd::PooledActivations p;
  p.data = random_matrix(b, c, rng);
  return p;
}

inline kcd::ActivationTensor random_tensor(std::size_t b, std::size_t c, std::size_t h,
                                           std::size_t w, kcd::Dtype dtype, kcd::Rng& rng) {
  kcd::ActivationTensor t(b, c, h, w, dtype);
  for (double& v : t.data) v = rng.uniform(-10.0, 10.0);
  t.quantize_to_dtype();
  return t;
}

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// All permutations of {0..n-1} in lexicographic order; the exhaustive
// oracle for assignment tests (n <= 8).
inline std::vector<std::vector<std::size_t>> all_permutations(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<std::vector<std::size_t>> out;
  do {
    out.push_back(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

// Brute-force maximum of sum_j m(perm[j], j) over all permutations.
inline double brute_force_best_gamma(const kcd::Matrix& m) {
  double best = -1e300;
  for (const auto& perm : all_permutations(m.rows())) {
    double g = 0.0;
    for (std::size_t j = 0; j < m.rows(); ++j) g += m(perm[j], j);
    best = std::max(best, g);
  }
  return best;
}

}  // namespace kcdtest
