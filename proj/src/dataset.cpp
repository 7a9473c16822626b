#include "coladiff/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace coladiff {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTissueName = "tissue";

fs::path sidecar_path(const fs::path& raw_file) {
  auto p = raw_file;
  p.replace_extension(".json");
  return p;
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("missing file " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed json in " + file.string() + ": " + e.what());
  }
}

void check_sample_files(const DatasetManifest& m, const std::string& id) {
  const fs::path dir = m.root / id;
  std::vector<std::string> names = m.modalities;
  names.emplace_back(kTissueName);
  for (const auto& name : names) {
    const fs::path raw = dir / (name + ".raw");
    if (!fs::exists(raw) || !fs::exists(sidecar_path(raw))) {
      throw std::runtime_error("sample '" + id + "' is missing file " + raw.string());
    }
  }
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

SplitRatio SplitRatio::parse(const std::string& text) {
  std::array<std::int64_t, 3> parts{};
  std::stringstream ss(text);
  std::string field;
  std::size_t n = 0;
  while (std::getline(ss, field, ':')) {
    if (n == 3) throw std::invalid_argument("split ratio needs exactly three fields: " + text);
    try {
      std::size_t used = 0;
      parts[n] = std::stoll(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad split ratio field '" + field + "'");
    }
    ++n;
  }
  if (n != 3) throw std::invalid_argument("split ratio needs exactly three fields: " + text);
  if (parts[0] <= 0 || parts[1] < 0 || parts[2] < 0) {
    throw std::invalid_argument("split ratio fields must be non-negative with train > 0");
  }
  return {parts[0], parts[1], parts[2]};
}

std::array<std::size_t, 3> SplitRatio::counts(std::size_t n) const {
  const std::array<std::int64_t, 3> r{train, val, test};
  const auto total = static_cast<std::uint64_t>(train + val + test);
  std::array<std::size_t, 3> out{};
  std::array<std::uint64_t, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::uint64_t scaled = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(r[i]);
    out[i] = static_cast<std::size_t>(scaled / total);
    remainder[i] = scaled % total;
    assigned += out[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++out[order[k % 3]];
  return out;
}

const std::vector<std::string>& DatasetManifest::ids(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  throw std::logic_error("unknown split");
}

void write_grid(const fs::path& raw_file, const torch::Tensor& grid, const std::string& name) {
  const auto data = grid.to(torch::kFloat32).contiguous();
  std::vector<std::uint32_t> words(static_cast<std::size_t>(data.numel()));
  std::memcpy(words.data(), data.data_ptr<float>(), words.size() * sizeof(float));
  for (auto& w : words) w = to_little(w);

  std::ofstream out(raw_file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + raw_file.string());
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw std::runtime_error("short write to " + raw_file.string());

  json meta;
  meta["name"] = name;
  meta["shape"] = grid.sizes().vec();
  meta["dtype"] = "float32";
  meta["byte_order"] = "little";
  std::ofstream side(sidecar_path(raw_file));
  side << meta.dump(2) << '\n';
}

GridFile read_grid(const fs::path& raw_file) {
  const json meta = read_json(sidecar_path(raw_file));
  if (meta.value("dtype", "") != "float32" || meta.value("byte_order", "") != "little") {
    throw std::runtime_error("unsupported grid encoding in " + sidecar_path(raw_file).string());
  }
  const auto shape = meta.at("shape").get<std::vector<std::int64_t>>();
  const std::int64_t count =
      std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());

  std::ifstream in(raw_file, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("missing file " + raw_file.string());
  const auto bytes = static_cast<std::int64_t>(in.tellg());
  if (bytes != count * static_cast<std::int64_t>(sizeof(float))) {
    throw std::runtime_error("shape mismatch in " + raw_file.string() + ": expected " +
                             std::to_string(count) + " floats, found " + std::to_string(bytes) +
                             " bytes");
  }
  in.seekg(0);
  std::vector<std::uint32_t> words(static_cast<std::size_t>(count));
  in.read(reinterpret_cast<char*>(words.data()), bytes);
  for (auto& w : words) w = to_little(w);

  auto grid = torch::empty(shape, torch::kFloat32);
  std::memcpy(grid.data_ptr<float>(), words.data(), words.size() * sizeof(float));
  return {grid, meta.value("name", "")};
}

DatasetManifest write_dataset(const std::vector<SliceSample>& samples, const SplitRatio& ratio,
                              const fs::path& root, const std::string& generator_config_hash) {
  if (samples.empty()) throw std::invalid_argument("write_dataset: no samples");

  DatasetManifest m;
  m.root = root;
  m.modalities = samples.front().modalities();
  m.image_size = samples.front().size();
  m.generator_config_hash = generator_config_hash;

  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.sample_id).second) {
      throw std::invalid_argument("duplicate sample id '" + s.sample_id + "'");
    }
    if (s.modalities() != m.modalities) {
      throw std::invalid_argument("sample '" + s.sample_id + "' has a different modality set");
    }
  }

  fs::create_directories(root);
  const auto counts = ratio.counts(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.size() != m.image_size) {
      throw std::invalid_argument("sample '" + s.sample_id + "' has a different image size");
    }
    const fs::path dir = root / s.sample_id;
    fs::create_directories(dir);
    for (const auto& [name, image] : s.images) {
      if (image.sizes() != s.tissue.labels.sizes()) {
        throw std::invalid_argument("sample '" + s.sample_id + "' grid shape mismatch");
      }
      write_grid(dir / (name + ".raw"), image, name);
    }
    write_grid(dir / (std::string(kTissueName) + ".raw"), s.tissue.labels.to(torch::kFloat32),
               kTissueName);
    m.seeds[s.sample_id] = s.rng_seed;
    if (i < counts[0]) {
      m.train.push_back(s.sample_id);
    } else if (i < counts[0] + counts[1]) {
      m.val.push_back(s.sample_id);
    } else {
      m.test.push_back(s.sample_id);
    }
  }

  json j;
  j["format"] = "coladiff-dataset";
  j["version"] = 1;
  j["image_size"] = m.image_size;
  j["modalities"] = m.modalities;
  j["generator_config_hash"] = m.generator_config_hash;
  j["splits"] = {{"train", m.train}, {"val", m.val}, {"test", m.test}};
  json seeds = json::object();
  for (const auto& [id, seed] : m.seeds) seeds[id] = seed;
  j["seeds"] = seeds;
  std::ofstream out(root / kManifestFile);
  if (!out) throw std::runtime_error("cannot write manifest under " + root.string());
  out << j.dump(2) << '\n';
  return m;
}

Dataset Dataset::open(const fs::path& root) {
  const fs::path manifest_file = root / kManifestFile;
  if (!fs::exists(manifest_file)) {
    throw std::runtime_error("no " + std::string(kManifestFile) + " under " + root.string());
  }
  const json j = read_json(manifest_file);
  DatasetManifest m;
  m.root = root;
  try {
    m.image_size = j.at("image_size").get<std::int64_t>();
    m.modalities = j.at("modalities").get<std::vector<std::string>>();
    m.generator_config_hash = j.value("generator_config_hash", "");
    m.train = j.at("splits").at("train").get<std::vector<std::string>>();
    m.val = j.at("splits").at("val").get<std::vector<std::string>>();
    m.test = j.at("splits").at("test").get<std::vector<std::string>>();
    if (j.contains("seeds")) {
      for (const auto& [id, seed] : j.at("seeds").items()) m.seeds[id] = seed.get<std::uint64_t>();
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + manifest_file.string() + ": " + e.what());
  }

  std::set<std::string> seen;
  for (const auto* ids : {&m.train, &m.val, &m.test}) {
    for (const auto& id : *ids) {
      if (!seen.insert(id).second) {
        throw std::runtime_error("sample '" + id + "' appears in more than one split");
      }
      check_sample_files(m, id);
    }
  }
  return Dataset(std::move(m));
}

SliceSample Dataset::load(const std::string& id) const {
  check_sample_files(manifest_, id);
  const fs::path dir = manifest_.root / id;
  const std::vector<std::int64_t> expected{manifest_.image_size, manifest_.image_size};

  SliceSample s;
  s.sample_id = id;
  if (const auto it = manifest_.seeds.find(id); it != manifest_.seeds.end()) s.rng_seed = it->second;
  for (const auto& name : manifest_.modalities) {
    GridFile g = read_grid(dir / (name + ".raw"));
    if (std::find(manifest_.modalities.begin(), manifest_.modalities.end(), g.name) ==
        manifest_.modalities.end()) {
      throw std::runtime_error("sample '" + id + "' carries unknown modality '" + g.name + "'");
    }
    if (g.name != name) {
      throw std::runtime_error("sample '" + id + "' file " + name + ".raw is labelled '" + g.name +
                               "'");
    }
    if (g.grid.sizes().vec() != expected) {
      throw std::runtime_error("sample '" + id + "' modality '" + name +
                               "' does not match the manifest image size");
    }
    s.images.emplace(name, g.grid);
  }
  GridFile t = read_grid(dir / (std::string(kTissueName) + ".raw"));
  if (t.grid.sizes().vec() != expected) {
    throw std::runtime_error("sample '" + id + "' tissue map does not match the manifest image size");
  }
  s.tissue.labels = t.grid.round().to(torch::kInt64);
  return s;
}

std::vector<SliceSample> Dataset::load_split(Split s) const {
  std::vector<SliceSample> out;
  const auto& ids = manifest_.ids(s);
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load(id));
  return out;
}

}  // namespace coladiff
