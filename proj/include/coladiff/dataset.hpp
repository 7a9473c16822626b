#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "coladiff/phantom.hpp"

namespace coladiff {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);

/// Ratio such as 140:25:35 for train/val/test.
struct SplitRatio {
  std::int64_t train = 140;
  std::int64_t val = 25;
  std::int64_t test = 35;

  static SplitRatio parse(const std::string& text);
  /// Largest-remainder apportionment of n samples; exact whenever n is a
  /// multiple of the ratio sum.
  std::array<std::size_t, 3> counts(std::size_t n) const;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::vector<std::string> modalities;
  std::int64_t image_size = 0;
  std::string generator_config_hash;
  std::map<std::string, std::uint64_t> seeds;

  const std::vector<std::string>& ids(Split s) const;
  std::size_t total() const { return train.size() + val.size() + test.size(); }
};

inline constexpr const char* kManifestFile = "manifest.json";

/// Writes `<path>` as little-endian float32 plus a `<path stem>.json` sidecar
/// recording shape, dtype and grid name.
void write_grid(const std::filesystem::path& raw_file, const torch::Tensor& grid,
                const std::string& name);

struct GridFile {
  torch::Tensor grid;
  std::string name;
};

/// Reads a grid written by write_grid, validating the payload size against
/// the sidecar shape.
GridFile read_grid(const std::filesystem::path& raw_file);

/// Lays the samples out under root (root/<id>/<modality>.raw,
/// root/<id>/tissue.raw, root/manifest.json). Samples are assigned to splits
/// in order.
DatasetManifest write_dataset(const std::vector<SliceSample>& samples, const SplitRatio& ratio,
                              const std::filesystem::path& root,
                              const std::string& generator_config_hash = "");

/// Read side of the on-disk dataset; samples are loaded on demand.
class Dataset {
 public:
  /// Parses the manifest and checks that every listed file exists.
  static Dataset open(const std::filesystem::path& root);

  const DatasetManifest& manifest() const { return manifest_; }
  SliceSample load(const std::string& id) const;
  std::vector<SliceSample> load_split(Split s) const;

 private:
  explicit Dataset(DatasetManifest m) : manifest_(std::move(m)) {}
  DatasetManifest manifest_;
};

inline Dataset read_dataset(const std::filesystem::path& root) { return Dataset::open(root); }

}  // namespace coladiff
