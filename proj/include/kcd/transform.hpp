#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcd/error.hpp"
#include "kcd/matrix.hpp"
#include "kcd/npy.hpp"
#include "kcd/tensor.hpp"
#include "kcd/version.hpp"

namespace kcd {

enum class TransformKind { Identity, Permutation, IndexMap, Linear, Residual };

inline std::string to_string(TransformKind k) {
  switch (k) {
    case TransformKind::Identity: return "identity";
    case TransformKind::Permutation: return "permutation";
    case TransformKind::IndexMap: return "index_map";
    case TransformKind::Linear: return "linear";
    case TransformKind::Residual: return "residual";
  }
  return "identity";
}

inline TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "identity") return TransformKind::Identity;
  if (s == "permutation") return TransformKind::Permutation;
  if (s == "index_map") return TransformKind::IndexMap;
  if (s == "linear") return TransformKind::Linear;
  if (s == "residual") return TransformKind::Residual;
  fail(ErrorCategory::FormatError, "unknown transform kind '" + s + "'");
}

struct Provenance {
  std::string metric;
  std::string strategy;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> sources;  // input name -> content hash
};

// A channel transform applied to teacher features before the distillation
// loss. Index kinds reorder channels; linear/residual kinds mix them.
// Row-vector convention throughout: pooled rows are right-multiplied.
struct Transformation {
  TransformKind kind = TransformKind::Identity;
  std::size_t channels = 0;
  std::vector<std::size_t> map;  // map[j] = source channel for output channel j
  Matrix linear;                 // c x c
  Matrix res_w1, res_w2;         // c x hidden, hidden x c
  std::vector<double> res_b1, res_b2;
  Provenance provenance;

  void validate() const {
    switch (kind) {
      case TransformKind::Identity:
        break;
      case TransformKind::Permutation: {
        if (map.size() != channels)
          fail(ErrorCategory::ShapeMismatch, "permutation map length != channels");
        std::vector<bool> seen(channels, false);
        for (std::size_t j : map) {
          if (j >= channels || seen[j])
            fail(ErrorCategory::InvalidValue, "map is not a bijection");
          seen[j] = true;
        }
        break;
      }
      case TransformKind::IndexMap:
        if (map.size() != channels)
          fail(ErrorCategory::ShapeMismatch, "index map length != channels");
        for (std::size_t j : map)
          if (j >= channels) fail(ErrorCategory::InvalidValue, "map entry out of range");
        break;
      case TransformKind::Linear:
        if (linear.rows() != channels || linear.cols() != channels)
          fail(ErrorCategory::ShapeMismatch, "linear weight must be channels x channels");
        if (!linear.all_finite()) fail(ErrorCategory::InvalidValue, "non-finite weight");
        break;
      case TransformKind::Residual: {
        const std::size_t hidden = res_w1.cols();
        if (res_w1.rows() != channels || res_w2.rows() != hidden ||
            res_w2.cols() != channels || res_b1.size() != hidden ||
            res_b2.size() != channels)
          fail(ErrorCategory::ShapeMismatch, "residual weight shapes do not chain");
        if (!res_w1.all_finite() || !res_w2.all_finite())
          fail(ErrorCategory::InvalidValue, "non-finite weight");
        break;
      }
    }
  }
};

inline Transformation identity_transform(std::size_t channels) {
  Transformation t;
  t.kind = TransformKind::Identity;
  t.channels = channels;
  t.provenance.strategy = "identity";
  return t;
}

namespace detail {

inline void residual_row(const Transformation& t, const double* x, double* y) {
  const std::size_t c = t.channels;
  const std::size_t hidden = t.res_w1.cols();
  std::vector<double> z(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    double acc = t.res_b1[k];
    for (std::size_t i = 0; i < c; ++i) acc += x[i] * t.res_w1(i, k);
    z[k] = acc > 0.0 ? acc : 0.0;
  }
  for (std::size_t j = 0; j < c; ++j) {
    double acc = x[j] + t.res_b2[j];
    for (std::size_t k = 0; k < hidden; ++k) acc += z[k] * t.res_w2(k, j);
    y[j] = acc;
  }
}

}  // namespace detail

inline Matrix apply_transform(const Transformation& t, const Matrix& x) {
  if (t.channels != x.cols())
    fail(ErrorCategory::ShapeMismatch, "transform channels != feature channels");
  switch (t.kind) {
    case TransformKind::Identity:
      return x;
    case TransformKind::Permutation:
    case TransformKind::IndexMap: {
      Matrix out(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t j = 0; j < x.cols(); ++j) out(r, j) = x(r, t.map[j]);
      return out;
    }
    case TransformKind::Linear:
      return matmul(x, t.linear);
    case TransformKind::Residual: {
      Matrix out(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r)
        detail::residual_row(t, x.row(r).data(), out.row(r).data());
      return out;
    }
  }
  fail(ErrorCategory::Internal, "unreachable transform kind");
}

inline PooledActivations apply_transform(const Transformation& t,
                                         const PooledActivations& x) {
  PooledActivations out;
  out.source_shape = x.source_shape;
  out.data = apply_transform(t, x.data);
  return out;
}

// 4-d tensors: index kinds copy whole spatial slices; linear/residual kinds
// act as a 1x1 channel mixing at every spatial position.
inline ActivationTensor apply_transform(const Transformation& t, const ActivationTensor& x) {
  if (t.channels != x.c)
    fail(ErrorCategory::ShapeMismatch, "transform channels != tensor channels");
  ActivationTensor out(x.b, x.c, x.h, x.w, x.dtype);
  switch (t.kind) {
    case TransformKind::Identity:
      out.data = x.data;
      break;
    case TransformKind::Permutation:
    case TransformKind::IndexMap:
      for (std::size_t bi = 0; bi < x.b; ++bi)
        for (std::size_t j = 0; j < x.c; ++j) {
          auto src = x.channel(bi, t.map[j]);
          auto dst = out.channel(bi, j);
          std::copy(src.begin(), src.end(), dst.begin());
        }
      break;
    case TransformKind::Linear:
      for (std::size_t bi = 0; bi < x.b; ++bi)
        for (std::size_t p = 0; p < x.spatial(); ++p)
          for (std::size_t j = 0; j < x.c; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.c; ++i)
              acc += x.channel(bi, i)[p] * t.linear(i, j);
            out.channel(bi, j)[p] = acc;
          }
      break;
    case TransformKind::Residual: {
      std::vector<double> xin(x.c), yout(x.c);
      for (std::size_t bi = 0; bi < x.b; ++bi)
        for (std::size_t p = 0; p < x.spatial(); ++p) {
          for (std::size_t i = 0; i < x.c; ++i) xin[i] = x.channel(bi, i)[p];
          detail::residual_row(t, xin.data(), yout.data());
          for (std::size_t j = 0; j < x.c; ++j) out.channel(bi, j)[p] = yout[j];
        }
      break;
    }
  }
  return out;
}

// --- serialization ---------------------------------------------------------
//
// A transform record is JSON; linear/residual weights live in sidecar NPY
// files named after the record so the pair can be moved together.

inline void save_transform(const Transformation& t, const std::string& path) {
  t.validate();
  nlohmann::json j;
  j["format"] = "kcd-transform/1";
  j["kind"] = to_string(t.kind);
  j["channels"] = t.channels;
  if (t.kind == TransformKind::Permutation || t.kind == TransformKind::IndexMap)
    j["map"] = t.map;
  const std::filesystem::path p(path);
  const std::string stem = p.filename().string();
  if (t.kind == TransformKind::Linear) {
    npy::write_matrix(t.linear, path + ".w.npy");
    j["weights"] = {{"w", stem + ".w.npy"}};
  } else if (t.kind == TransformKind::Residual) {
    Matrix b1(1, t.res_b1.size()), b2(1, t.res_b2.size());
    b1.data() = t.res_b1;
    b2.data() = t.res_b2;
    npy::write_matrix(t.res_w1, path + ".w1.npy");
    npy::write_matrix(b1, path + ".b1.npy");
    npy::write_matrix(t.res_w2, path + ".w2.npy");
    npy::write_matrix(b2, path + ".b2.npy");
    j["weights"] = {{"w1", stem + ".w1.npy"},
                    {"b1", stem + ".b1.npy"},
                    {"w2", stem + ".w2.npy"},
                    {"b2", stem + ".b2.npy"}};
  }
  j["provenance"] = {{"metric", t.provenance.metric},
                     {"strategy", t.provenance.strategy},
                     {"seed", t.provenance.seed},
                     {"sources", t.provenance.sources},
                     {"tool", std::string(kToolName) + " " + kToolVersion}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCategory::IoError, "cannot write: " + path);
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorCategory::IoError, "write failed: " + path);
}

inline Transformation load_transform(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::IoError, "cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::FormatError, "bad transform record " + path + ": " + e.what());
  }
  Transformation t;
  try {
    if (j.value("format", "") != "kcd-transform/1")
      fail(ErrorCategory::FormatError, "not a kcd transform record: " + path);
    t.kind = transform_kind_from_string(j.at("kind").get<std::string>());
    t.channels = j.at("channels").get<std::size_t>();
    if (j.contains("map")) t.map = j["map"].get<std::vector<std::size_t>>();
    const auto dir = std::filesystem::path(path).parent_path();
    const auto sidecar = [&](const std::string& name) {
      return (dir / j.at("weights").at(name).get<std::string>()).string();
    };
    if (t.kind == TransformKind::Linear) {
      t.linear = npy::read_matrix(sidecar("w"));
    } else if (t.kind == TransformKind::Residual) {
      t.res_w1 = npy::read_matrix(sidecar("w1"));
      t.res_w2 = npy::read_matrix(sidecar("w2"));
      t.res_b1 = npy::read_matrix(sidecar("b1")).data();
      t.res_b2 = npy::read_matrix(sidecar("b2")).data();
    }
    if (j.contains("provenance")) {
      const auto& p = j["provenance"];
      t.provenance.metric = p.value("metric", "");
      t.provenance.strategy = p.value("strategy", "");
      t.provenance.seed = p.value("seed", std::uint64_t{0});
      if (p.contains("sources"))
        t.provenance.sources = p["sources"].get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::FormatError, "bad transform record " + path + ": " + e.what());
  }
  t.validate();
  return t;
}

}  // namespace kcd
