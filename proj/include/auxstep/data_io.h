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


// On-disk tensors, checkpoint containers, dataset manifests and the samplers
// that feed the trainer.
//
// Tensor file layout (all integers little-endian):
//   "DTEN" | version u8 (=1) | dtype u8 (0 f32, 1 f64, 2 u16) | ndim u8 |
//   ndim x u32 extents | row-major payload

#ifndef AUXSTEP_DATA_IO_H_
#define AUXSTEP_DATA_IO_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "auxstep/losses.h"
#include "auxstep/tensor.h"

namespace auxstep {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU16 = 2 };

std::string_view to_string(DType dtype);
std::size_t dtype_size(DType dtype);

// A typed n-d array as stored on disk.
struct DenseArray {
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint16_t>>
      values;

  DType dtype() const { return static_cast<DType>(values.index()); }
  std::size_t numel() const;

  static DenseArray f32(Shape shape, std::vector<float> values);
  static DenseArray f64(Shape shape, std::vector<double> values);
  static DenseArray u16(Shape shape, std::vector<std::uint16_t> values);

  bool operator==(const DenseArray& other) const = default;
};

inline constexpr std::uint8_t kTensorFormatVersion = 1;

// Throws FormatError for a bad magic, version, dtype, truncation or trailing
// bytes; messages start with "bad magic", "unsupported version", ...
std::string encode_tensor(const DenseArray& array);
DenseArray decode_tensor(std::string_view bytes);

// write_tensor rejects non-finite floating-point values (ValidationError) and
// replaces the destination atomically.
void write_tensor(const std::filesystem::path& path, const DenseArray& array);
DenseArray read_tensor(const std::filesystem::path& path);

// Conversions between stored arrays and in-memory double tensors. u16 values
// convert exactly; f32 narrowing is the caller's choice.
Tensor to_tensor(const DenseArray& array);
DenseArray from_tensor(const Tensor& tensor, DType dtype = DType::kF64);

// Writes `bytes` to a sibling temporary file and renames it over `path`, so a
// failure never leaves a partial file behind.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Named-array container used for checkpoints:
//   "DCKP" | version u8 | u32 header length | JSON header |
//   u32 count | count x (u32 name length | name | u64 blob length | DTEN blob)
struct Container {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, DenseArray>> entries;

  const DenseArray& at(std::string_view name) const;
  bool contains(std::string_view name) const;
};

std::string encode_container(const Container& container);
Container decode_container(std::string_view bytes);
void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);

enum class DatasetRole { kDepth, kAuxiliary };

std::string_view to_string(DatasetRole role);
DatasetRole parse_dataset_role(std::string_view name);

// Paths are stored relative to the manifest's directory.
struct SampleEntry {
  std::string id;
  std::string image;
  std::string depth;
  std::string seg;
  std::string presence;                 // MLDC exports only
  std::optional<std::uint16_t> dominant;  // MLDC exports only

  bool operator==(const SampleEntry& other) const = default;
};

struct Exclusion {
  std::string id;
  std::string reason;

  bool operator==(const Exclusion& other) const = default;
};

struct DatasetManifest {
  std::string name;
  DatasetRole role = DatasetRole::kDepth;
  std::vector<std::string> tasks;  // e.g. "depth", "segmentation", "mldc"
  std::size_t num_classes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::string split = "all";  // train | test | all
  std::vector<SampleEntry> samples;
  std::vector<Exclusion> excluded;
  // Directory the relative paths resolve against; not serialized.
  std::filesystem::path base_dir;

  std::size_t size() const { return samples.size(); }
  bool has_task(std::string_view task) const;
  std::filesystem::path resolve(const std::string& relative) const;
};

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& doc,
                                   std::filesystem::path base_dir);

// Reading checks the schema; validate_manifest additionally opens every
// referenced file and checks shapes against the declared H, W and K.
DatasetManifest read_manifest(const std::filesystem::path& path);
void validate_manifest(const DatasetManifest& manifest);
// Paths are rewritten relative to the destination directory.
void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& manifest);

struct Sample {
  std::string id;
  Tensor image;    // [3, H, W] in [0, 1]
  Tensor depth;    // [1, H, W]; undefined when the dataset has no depth
  Mask valid;      // H * W; valid depth pixels
  LabelMap seg;    // empty when the dataset has no segmentation
};

// Invalid depth is any value <= 0 or non-finite. Depth-role samples must have
// at least one valid pixel.
Sample load_sample(const DatasetManifest& manifest, std::size_t index);
Mask depth_validity(const Tensor& depth);

// ceil(fraction * N) entries sampled without replacement (tolerance 1e-9),
// returned in their original order. A fixed seed yields nested subsets across
// fractions because every fraction takes a prefix of one permutation.
DatasetManifest subset_fraction(const DatasetManifest& manifest, double fraction,
                                std::uint64_t seed);
std::size_t subset_size(std::size_t n, double fraction);

// Writes per-sample presence vectors (u16 0/1, length K) under out_dir and
// returns the exported manifest (also written to out_dir/manifest.json).
// Samples whose labels are all ignored are skipped, logged and listed in
// `excluded`.
DatasetManifest mldc_export(const DatasetManifest& seg_manifest,
                            const std::filesystem::path& out_dir,
                            bool overwrite = false);

// Chooses the auxiliary source of each step with probability proportional to
// source size. Draw t depends only on (seed, t), so the stream resumes from a
// step index alone.
class AuxSourceMixer {
 public:
  AuxSourceMixer(std::vector<std::string> dataset_ids,
                 std::vector<std::size_t> sizes, std::uint64_t seed);

  std::size_t draw(std::uint64_t step) const;
  const std::string& dataset_id(std::size_t source) const { return ids_.at(source); }
  std::size_t num_sources() const { return ids_.size(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }

 private:
  std::vector<std::string> ids_;
  std::vector<std::size_t> sizes_;
  std::size_t total_ = 0;
  std::uint64_t seed_ = 0;
};

AuxSourceMixer mixed_aux_source(const std::vector<DatasetManifest>& manifests,
                                std::uint64_t seed);

// Epoch-shuffled minibatch indices over [0, n). The permutation for epoch e is
// derived from (seed, e), so (epoch, position) is the complete state.
class BatchStream {
 public:
  BatchStream() = default;
  BatchStream(std::size_t n, std::uint64_t seed);

  // Batches wrap across epoch boundaries.
  std::vector<std::size_t> next(std::size_t batch_size);

  struct State {
    std::uint64_t epoch = 0;
    std::uint64_t position = 0;
  };
  State state() const { return {epoch_, position_}; }
  void restore(State state);

 private:
  void reshuffle();

  std::size_t n_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t position_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace auxstep

#endif  // AUXSTEP_DATA_IO_H_
