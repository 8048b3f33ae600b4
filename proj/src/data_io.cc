// Copyright 2026 The auxstep Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "auxstep/data_io.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "auxstep/error.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "byte layout assumes a little-endian host");

constexpr char kTensorMagic[4] = {'D', 'T', 'E', 'N'};
constexpr char kContainerMagic[4] = {'D', 'C', 'K', 'P'};
constexpr std::uint8_t kContainerVersion = 1;
constexpr int kManifestVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string_view what)
      : bytes_(bytes), what_(what) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string(what_) + ": truncated data");
    }
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

std::string generic_relative(const fs::path& target, const fs::path& dir) {
  const fs::path a = fs::absolute(target).lexically_normal();
  const fs::path b = fs::absolute(dir).lexically_normal();
  return a.lexically_relative(b).generic_string();
}

std::string relocate(const std::string& rel, const fs::path& from,
                     const fs::path& to) {
  if (rel.empty()) return rel;
  return generic_relative(from / rel, to);
}

void require_exact_shape(const DenseArray& a, const Shape& shape,
                         const std::string& what) {
  if (a.shape != shape) {
    throw ShapeError(what + ": expected " + shape_string(shape) + ", got " +
                     shape_string(a.shape));
  }
}

}  // namespace

std::string_view to_string(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kU16: return "u16";
  }
  return "unknown";
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU16: return 2;
  }
  return 0;
}

std::size_t DenseArray::numel() const {
  return std::visit([](const auto& v) { return v.size(); }, values);
}

DenseArray DenseArray::f32(Shape shape, std::vector<float> values) {
  return {std::move(shape), std::move(values)};
}
DenseArray DenseArray::f64(Shape shape, std::vector<double> values) {
  return {std::move(shape), std::move(values)};
}
DenseArray DenseArray::u16(Shape shape, std::vector<std::uint16_t> values) {
  return {std::move(shape), std::move(values)};
}

std::string encode_tensor(const DenseArray& array) {
  if (array.shape.size() > 255) {
    throw ValidationError("tensor file: at most 255 dimensions");
  }
  std::size_t expected = 1;
  for (std::size_t e : array.shape) {
    if (e > std::numeric_limits<std::uint32_t>::max()) {
      throw ValidationError("tensor file: extent exceeds 32 bits");
    }
    expected *= e;
  }
  if (expected != array.numel()) {
    throw ShapeError("tensor file: shape " + shape_string(array.shape) +
                     " holds " + std::to_string(expected) + " values, got " +
                     std::to_string(array.numel()));
  }
  std::string out(kTensorMagic, 4);
  put<std::uint8_t>(out, kTensorFormatVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(array.dtype()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(array.shape.size()));
  for (std::size_t e : array.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  std::visit(
      [&](const auto& v) {
        out.append(reinterpret_cast<const char*>(v.data()),
                   v.size() * sizeof(v[0]));
      },
      array.values);
  return out;
}

DenseArray decode_tensor(std::string_view bytes) {
  Reader r(bytes, "tensor file");
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kTensorMagic, 4)) {
    throw FormatError("bad magic: not a tensor file");
  }
  r.take(4);
  const auto version = r.get<std::uint8_t>();
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const auto code = r.get<std::uint8_t>();
  if (code > 2) throw FormatError("unknown dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const auto ndim = r.get<std::uint8_t>();
  Shape shape(ndim);
  std::size_t n = 1;
  for (auto& e : shape) {
    e = r.get<std::uint32_t>();
    n *= e;
  }
  const std::size_t payload = n * dtype_size(dtype);
  if (r.remaining() < payload) {
    throw FormatError("tensor file: truncated payload (" +
                      std::to_string(r.remaining()) + " of " +
                      std::to_string(payload) + " bytes)");
  }
  if (r.remaining() > payload) throw FormatError("tensor file: trailing bytes");
  const std::string_view raw = r.take(payload);
  DenseArray out;
  out.shape = std::move(shape);
  switch (dtype) {
    case DType::kF32: out.values = std::vector<float>(n); break;
    case DType::kF64: out.values = std::vector<double>(n); break;
    case DType::kU16: out.values = std::vector<std::uint16_t>(n); break;
  }
  std::visit([&](auto& v) { std::memcpy(v.data(), raw.data(), payload); },
             out.values);
  return out;
}

void write_tensor(const fs::path& path, const DenseArray& array) {
  const bool finite = std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v[0])>;
        if constexpr (std::is_floating_point_v<T>) {
          return std::all_of(v.begin(), v.end(),
                             [](T x) { return std::isfinite(x); });
        }
        return true;
      },
      array.values);
  if (!finite) {
    throw ValidationError("write_tensor: non-finite value in " + path.string());
  }
  atomic_write(path, encode_tensor(array));
}

DenseArray read_tensor(const fs::path& path) {
  try {
    return decode_tensor(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor to_tensor(const DenseArray& array) {
  std::vector<double> values = std::visit(
      [](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
      array.values);
  return Tensor(array.shape, std::move(values));
}

DenseArray from_tensor(const Tensor& tensor, DType dtype) {
  const auto d = tensor.data();
  switch (dtype) {
    case DType::kF32:
      return DenseArray::f32(tensor.shape(), std::vector<float>(d.begin(), d.end()));
    case DType::kF64:
      return DenseArray::f64(tensor.shape(), std::vector<double>(d.begin(), d.end()));
    case DType::kU16: {
      std::vector<std::uint16_t> out(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(d[i] >= 0.0 && d[i] <= 65535.0) || d[i] != std::floor(d[i])) {
          throw ValidationError("from_tensor: value " + std::to_string(d[i]) +
                                " is not representable as u16");
        }
        out[i] = static_cast<std::uint16_t>(d[i]);
      }
      return DenseArray::u16(tensor.shape(), std::move(out));
    }
  }
  throw ValidationError("from_tensor: unknown dtype");
}

void atomic_write(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) {
    throw IoError("cannot create directory " + path.parent_path().string() +
                  ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw IoError("failed writing " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return std::move(buffer).str();
}

const DenseArray& Container::at(std::string_view name) const {
  for (const auto& [key, value] : entries) {
    if (key == name) return value;
  }
  throw FormatError("container: missing entry '" + std::string(name) + "'");
}

bool Container::contains(std::string_view name) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const auto& e) { return e.first == name; });
}

std::string encode_container(const Container& container) {
  std::string out(kContainerMagic, 4);
  put<std::uint8_t>(out, kContainerVersion);
  const std::string header = container.header.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(container.entries.size()));
  for (const auto& [name, array] : container.entries) {
    const std::string blob = encode_tensor(array);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, blob.size());
    out += blob;
  }
  return out;
}

Container decode_container(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kContainerMagic, 4)) {
    throw FormatError("bad magic: not a checkpoint container");
  }
  Reader r(bytes, "container");
  r.take(4);
  const auto version = r.get<std::uint8_t>();
  if (version != kContainerVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  Container c;
  const auto header_len = r.get<std::uint32_t>();
  try {
    c.header = json::parse(r.take(header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("container: bad header: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.take(r.get<std::uint32_t>()));
    const auto blob_len = r.get<std::uint64_t>();
    if (blob_len > r.remaining()) throw FormatError("container: truncated data");
    if (!seen.insert(name).second) {
      throw FormatError("container: duplicate entry '" + name + "'");
    }
    c.entries.emplace_back(std::move(name), decode_tensor(r.take(blob_len)));
  }
  if (r.remaining() != 0) throw FormatError("container: trailing bytes");
  return c;
}

void write_container(const fs::path& path, const Container& container) {
  atomic_write(path, encode_container(container));
}

Container read_container(const fs::path& path) {
  try {
    return decode_container(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string_view to_string(DatasetRole role) {
  return role == DatasetRole::kDepth ? "depth" : "auxiliary";
}

DatasetRole parse_dataset_role(std::string_view name) {
  if (name == "depth") return DatasetRole::kDepth;
  if (name == "auxiliary") return DatasetRole::kAuxiliary;
  throw ValidationError("unknown dataset role '" + std::string(name) + "'");
}

bool DatasetManifest::has_task(std::string_view task) const {
  return std::find(tasks.begin(), tasks.end(), task) != tasks.end();
}

fs::path DatasetManifest::resolve(const std::string& relative) const {
  if (relative.empty()) throw ValidationError("manifest: empty path");
  return base_dir / relative;
}

json manifest_to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const SampleEntry& s : m.samples) {
    json e = {{"id", s.id}, {"image", s.image}};
    if (!s.depth.empty()) e["depth"] = s.depth;
    if (!s.seg.empty()) e["seg"] = s.seg;
    if (!s.presence.empty()) e["presence"] = s.presence;
    if (s.dominant) e["dominant"] = *s.dominant;
    samples.push_back(std::move(e));
  }
  json excluded = json::array();
  for (const Exclusion& x : m.excluded) {
    excluded.push_back({{"id", x.id}, {"reason", x.reason}});
  }
  return {{"format", "auxstep.manifest"},
          {"version", kManifestVersion},
          {"name", m.name},
          {"role", to_string(m.role)},
          {"tasks", m.tasks},
          {"num_classes", m.num_classes},
          {"height", m.height},
          {"width", m.width},
          {"split", m.split},
          {"samples", std::move(samples)},
          {"excluded", std::move(excluded)}};
}

DatasetManifest manifest_from_json(const json& doc, fs::path base_dir) {
  DatasetManifest m;
  try {
    if (doc.at("format") != "auxstep.manifest") {
      throw FormatError("manifest: unexpected format tag");
    }
    if (doc.at("version") != kManifestVersion) {
      throw FormatError("manifest: unsupported version");
    }
    m.name = doc.at("name").get<std::string>();
    m.role = parse_dataset_role(doc.at("role").get<std::string>());
    m.tasks = doc.at("tasks").get<std::vector<std::string>>();
    m.num_classes = doc.at("num_classes").get<std::size_t>();
    m.height = doc.at("height").get<std::size_t>();
    m.width = doc.at("width").get<std::size_t>();
    m.split = doc.value("split", "all");
    std::set<std::string> ids;
    for (const json& e : doc.at("samples")) {
      SampleEntry s;
      s.id = e.at("id").get<std::string>();
      s.image = e.at("image").get<std::string>();
      s.depth = e.value("depth", "");
      s.seg = e.value("seg", "");
      s.presence = e.value("presence", "");
      if (e.contains("dominant")) s.dominant = e.at("dominant").get<std::uint16_t>();
      if (!ids.insert(s.id).second) {
        throw FormatError("manifest: duplicate sample id '" + s.id + "'");
      }
      m.samples.push_back(std::move(s));
    }
    if (doc.contains("excluded")) {
      for (const json& e : doc.at("excluded")) {
        m.excluded.push_back({e.at("id").get<std::string>(),
                              e.at("reason").get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (m.height == 0 || m.width == 0) {
    throw FormatError("manifest: height and width must be positive");
  }
  const bool needs_depth = m.role == DatasetRole::kDepth || m.has_task("depth");
  for (const SampleEntry& s : m.samples) {
    if (needs_depth && s.depth.empty()) {
      throw FormatError("manifest: sample '" + s.id + "' lacks a depth path");
    }
    if (m.has_task("segmentation") && s.seg.empty()) {
      throw FormatError("manifest: sample '" + s.id + "' lacks a seg path");
    }
  }
  m.base_dir = std::move(base_dir);
  return m;
}

DatasetManifest read_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return manifest_from_json(doc, fs::absolute(path).parent_path());
}

void validate_manifest(const DatasetManifest& m) {
  for (std::size_t i = 0; i < m.size(); ++i) load_sample(m, i);
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path dir = fs::absolute(path).parent_path();
  DatasetManifest out = manifest;
  for (SampleEntry& s : out.samples) {
    s.image = relocate(s.image, manifest.base_dir, dir);
    s.depth = relocate(s.depth, manifest.base_dir, dir);
    s.seg = relocate(s.seg, manifest.base_dir, dir);
    s.presence = relocate(s.presence, manifest.base_dir, dir);
  }
  atomic_write(path, manifest_to_json(out).dump(2) + "\n");
}

Mask depth_validity(const Tensor& depth) {
  Mask m{{depth.numel()}, std::vector<std::uint8_t>(depth.numel())};
  const auto d = depth.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    m.values[i] = std::isfinite(d[i]) && d[i] > 0.0;
  }
  return m;
}

Sample load_sample(const DatasetManifest& m, std::size_t index) {
  if (index >= m.size()) {
    throw ValidationError("load_sample: index " + std::to_string(index) +
                          " out of range for " + std::to_string(m.size()) +
                          " samples");
  }
  const SampleEntry& e = m.samples[index];
  const std::string where = "sample '" + e.id + "'";
  Sample s;
  s.id = e.id;
  DenseArray image = read_tensor(m.resolve(e.image));
  if (image.dtype() == DType::kU16) {
    throw FormatError(where + ": image must be floating point");
  }
  require_exact_shape(image, {3, m.height, m.width}, where + " image");
  s.image = to_tensor(image);
  for (double v : s.image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(where + ": image values must lie in [0, 1]");
    }
  }
  if (!e.depth.empty()) {
    DenseArray depth = read_tensor(m.resolve(e.depth));
    if (depth.dtype() == DType::kU16) {
      throw FormatError(where + ": depth must be floating point");
    }
    require_exact_shape(depth, {m.height, m.width}, where + " depth");
    depth.shape = {1, m.height, m.width};
    s.depth = to_tensor(depth);
    s.valid = depth_validity(s.depth);
    if (m.role == DatasetRole::kDepth && s.valid.count() == 0) {
      throw ValidationError(where + ": no valid depth pixels");
    }
  }
  if (!e.seg.empty()) {
    DenseArray seg = read_tensor(m.resolve(e.seg));
    if (seg.dtype() != DType::kU16) {
      throw FormatError(where + ": segmentation must be u16");
    }
    require_exact_shape(seg, {m.height, m.width}, where + " seg");
    s.seg = LabelMap{m.height, m.width,
                     std::get<std::vector<std::uint16_t>>(std::move(seg.values))};
    for (std::uint16_t id : s.seg.ids) {
      if (id != kIgnoreId && id >= m.num_classes) {
        throw ValidationError(where + ": class id " + std::to_string(id) +
                              " exceeds num_classes " +
                              std::to_string(m.num_classes));
      }
    }
  }
  return s;
}

std::size_t subset_size(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("subset fraction must lie in (0, 1], got " +
                          std::to_string(fraction));
  }
  const double scaled = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(scaled - 1e-9 * std::max(1.0, scaled)));
  k = std::min(k, n);
  if (k == 0) throw ValidationError("subset would be empty");
  return k;
}

DatasetManifest subset_fraction(const DatasetManifest& manifest, double fraction,
                                std::uint64_t seed) {
  const std::size_t k = subset_size(manifest.size(), fraction);
  std::vector<std::size_t> order =
      permutation(manifest.size(), derive_seed(seed, "subset"));
  order.resize(k);
  std::sort(order.begin(), order.end());
  DatasetManifest out = manifest;
  out.samples.clear();
  for (std::size_t i : order) out.samples.push_back(manifest.samples[i]);
  return out;
}

DatasetManifest mldc_export(const DatasetManifest& seg_manifest,
                            const fs::path& out_dir, bool overwrite) {
  if (!seg_manifest.has_task("segmentation")) {
    throw ValidationError("mldc_export: dataset '" + seg_manifest.name +
                          "' has no segmentation labels");
  }
  const fs::path manifest_path = out_dir / "manifest.json";
  if (fs::exists(manifest_path) && !overwrite) {
    throw ValidationError("mldc_export: " + manifest_path.string() +
                          " exists (use --force to overwrite)");
  }
  const std::size_t k = seg_manifest.num_classes;
  DatasetManifest out = seg_manifest;
  out.base_dir = fs::absolute(out_dir);
  out.role = DatasetRole::kAuxiliary;
  for (const char* task : {"mldc", "slc"}) {
    if (!out.has_task(task)) out.tasks.push_back(task);
  }
  out.samples.clear();
  for (const SampleEntry& e : seg_manifest.samples) {
    DenseArray seg = read_tensor(seg_manifest.resolve(e.seg));
    if (seg.dtype() != DType::kU16) {
      throw FormatError("sample '" + e.id + "': segmentation must be u16");
    }
    require_exact_shape(seg, {seg_manifest.height, seg_manifest.width},
                        "sample '" + e.id + "' seg");
    LabelMap labels{seg_manifest.height, seg_manifest.width,
                    std::get<std::vector<std::uint16_t>>(std::move(seg.values))};
    const bool any = std::any_of(labels.ids.begin(), labels.ids.end(),
                                 [](std::uint16_t id) { return id != kIgnoreId; });
    if (!any) {
      spdlog::warn("mldc_export: skipping sample '{}': every pixel is ignored",
                   e.id);
      out.excluded.push_back({e.id, "all pixels ignored"});
      continue;
    }
    const std::vector<double> presence = mldc_target(labels, k);
    std::vector<std::uint16_t> stored(presence.begin(), presence.end());
    const std::string rel = "presence/" + e.id + ".dten";
    write_tensor(out.base_dir / rel, DenseArray::u16({k}, std::move(stored)));
    SampleEntry exported = e;
    exported.image = relocate(e.image, seg_manifest.base_dir, out.base_dir);
    exported.depth = relocate(e.depth, seg_manifest.base_dir, out.base_dir);
    exported.seg = relocate(e.seg, seg_manifest.base_dir, out.base_dir);
    exported.presence = rel;
    exported.dominant = dominant_class(labels, k);
    out.samples.push_back(std::move(exported));
  }
  write_manifest(manifest_path, out);
  return out;
}

AuxSourceMixer::AuxSourceMixer(std::vector<std::string> dataset_ids,
                               std::vector<std::size_t> sizes,
                               std::uint64_t seed)
    : ids_(std::move(dataset_ids)), sizes_(std::move(sizes)), seed_(seed) {
  if (ids_.empty()) throw ValidationError("aux mixer: no sources");
  if (ids_.size() != sizes_.size()) {
    throw ValidationError("aux mixer: ids and sizes differ in length");
  }
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] == 0) {
      throw ValidationError("aux mixer: source '" + ids_[i] + "' is empty");
    }
    total_ += sizes_[i];
  }
}

std::size_t AuxSourceMixer::draw(std::uint64_t step) const {
  if (ids_.size() == 1) return 0;
  Engine engine(derive_seed(derive_seed(seed_, "mix"), step));
  std::uint64_t r = uniform_index(engine, total_);
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (r < sizes_[i]) return i;
    r -= sizes_[i];
  }
  return sizes_.size() - 1;
}

AuxSourceMixer mixed_aux_source(const std::vector<DatasetManifest>& manifests,
                                std::uint64_t seed) {
  if (manifests.empty()) throw ValidationError("mixed_aux_source: no manifests");
  std::vector<std::string> ids;
  std::vector<std::size_t> sizes;
  for (const DatasetManifest& m : manifests) {
    ids.push_back(m.name);
    sizes.push_back(m.size());
  }
  return AuxSourceMixer(std::move(ids), std::move(sizes), seed);
}

BatchStream::BatchStream(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {
  if (n == 0) throw ValidationError("batch stream: empty dataset");
  reshuffle();
}

void BatchStream::reshuffle() {
  order_ = permutation(n_, derive_seed(derive_seed(seed_, "epoch"), epoch_));
}

std::vector<std::size_t> BatchStream::next(std::size_t batch_size) {
  if (n_ == 0) throw ValidationError("batch stream: not initialized");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  while (out.size() < batch_size) {
    if (position_ == n_) {
      ++epoch_;
      position_ = 0;
      reshuffle();
    }
    out.push_back(order_[position_++]);
  }
  return out;
}

void BatchStream::restore(State state) {
  if (state.position > n_) throw FormatError("batch stream: position out of range");
  epoch_ = state.epoch;
  position_ = state.position;
  reshuffle();
}

}  // namespace auxstep
