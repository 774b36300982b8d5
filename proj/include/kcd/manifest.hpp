#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcd/error.hpp"
#include "kcd/npy.hpp"
#include "kcd/tensor.hpp"

namespace kcd {

struct ManifestEntry {
  std::string tensor_path;
  std::string labels_path;
  std::string split_tag;
  std::string layer_tag;
};

// Binds activation dumps to label files so downstream stages consume one
// uniform (pooled features, labels) pair. Paths are relative to the
// manifest file itself.
struct ActivationManifest {
  std::vector<ManifestEntry> entries;
  std::int64_t dataset_seed = 0;
  std::filesystem::path base_dir;

  std::string resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p.string() : (base_dir / p).string();
  }
};

inline ActivationManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::IoError, "cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::FormatError, "bad manifest " + path + ": " + e.what());
  }
  ActivationManifest m;
  m.base_dir = std::filesystem::path(path).parent_path();
  try {
    if (j.value("format", "") != "kcd-manifest/1")
      fail(ErrorCategory::FormatError, "not a kcd manifest: " + path);
    m.dataset_seed = j.value("dataset_seed", std::int64_t{0});
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.tensor_path = e.at("tensor").get<std::string>();
      entry.labels_path = e.at("labels").get<std::string>();
      entry.split_tag = e.value("split", "");
      entry.layer_tag = e.value("layer", "");
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::FormatError, "bad manifest " + path + ": " + e.what());
  }
  return m;
}

inline void save_manifest(const ActivationManifest& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "kcd-manifest/1";
  j["dataset_seed"] = m.dataset_seed;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je{{"tensor", e.tensor_path}, {"labels", e.labels_path}};
    if (!e.split_tag.empty()) je["split"] = e.split_tag;
    if (!e.layer_tag.empty()) je["layer"] = e.layer_tag;
    j["entries"].push_back(je);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCategory::IoError, "cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

struct ActivationSet {
  PooledActivations pooled;
  std::vector<std::int64_t> labels;
};

// Pools each shard as it is read and concatenates rows in manifest order;
// identical to pooling one concatenated tensor because pooling is
// per-sample. Empty filter strings match every entry.
inline ActivationSet load_activation_set(const ActivationManifest& m,
                                         const std::string& split_filter = "",
                                         const std::string& layer_filter = "") {
  ActivationSet out;
  std::size_t channels = 0;
  std::vector<Matrix> blocks;
  std::size_t total_rows = 0;
  for (const auto& e : m.entries) {
    if (!split_filter.empty() && e.split_tag != split_filter) continue;
    if (!layer_filter.empty() && e.layer_tag != layer_filter) continue;
    const ActivationTensor t = npy::read_tensor(m.resolve(e.tensor_path));
    const auto labels = npy::read_labels(m.resolve(e.labels_path));
    if (labels.size() != t.b)
      fail(ErrorCategory::ShapeMismatch,
           "label count " + std::to_string(labels.size()) + " != batch " +
               std::to_string(t.b) + " for " + e.tensor_path);
    PooledActivations pooled = global_average_pool(t);
    if (channels == 0) {
      channels = pooled.channels();
      out.pooled.source_shape = pooled.source_shape;
    } else if (pooled.channels() != channels) {
      fail(ErrorCategory::ShapeMismatch,
           "shard channel count " + std::to_string(pooled.channels()) +
               " != " + std::to_string(channels) + " for " + e.tensor_path);
    }
    total_rows += pooled.samples();
    blocks.push_back(std::move(pooled.data));
    out.labels.insert(out.labels.end(), labels.begin(), labels.end());
  }
  if (blocks.empty())
    fail(ErrorCategory::ConfigError, "manifest selects no entries");
  out.pooled.data = Matrix(total_rows, channels);
  std::size_t row = 0;
  for (const auto& block : blocks) {
    std::copy(block.data().begin(), block.data().end(),
              out.pooled.data.data().begin() +
                  static_cast<std::ptrdiff_t>(row * channels));
    row += block.rows();
  }
  return out;
}

}  // namespace kcd
