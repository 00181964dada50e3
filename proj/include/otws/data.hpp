#pragma once

// Datasets, file formats and model checkpoints.
//
// raw_grid (little-endian):
//   "OTG1" | u32 count | u32 rows | u32 cols | count * rows * cols f64
// IDX (big-endian header, as used by MNIST):
//   magic 0x00000803: u32 count | u32 rows | u32 cols | u8 pixels
//   magic 0x00000804: u32 count | u32 rows | u32 cols | u32 3 | u8 RGB
// checkpoint (little-endian):
//   "OTWSCKPT" | u32 version | u32 header_len | header JSON |
//   u32 tensor_count | tensors | u32 crc32(tensor section)
//   tensor = u32 name_len | name | u32 ndim | u64 dims[ndim] | f64 payload

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "otws/measures.hpp"
#include "otws/models.hpp"

namespace otws {

enum class DatasetKind { random_r3, idx_images, raw_grid };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::random_r3;
  long count = 1;     // for files: maximum number of images, 0 for all
  int rows = 14;      // grid size for generated data
  int cols = 14;
  double floor = 1e-6;  // added to every pixel before normalization
  std::uint64_t seed = 0;
  std::string path;

  void validate() const;
};

// Pixels r^3 with r ~ U[0, 1], plus the floor, normalized.
std::vector<DiscreteMeasure> gen_random_r3(const DatasetSpec& spec);

// Grayscale (0x803) or RGB (0x804, converted with 0.299/0.587/0.114 luma
// weights) IDX images scaled to [0, 1], floored and normalized.
std::vector<DiscreteMeasure> load_idx_images(const std::string& path, const DatasetSpec& spec);

// Intensities to a strictly positive probability vector on a rows x cols grid.
DiscreteMeasure image_to_measure(const Vector& intensities, int rows, int cols, double floor);

struct RawGrid {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<Vector> images;
};

void write_raw_grid(const std::string& path, const RawGrid& grid);
void write_raw_grid(const std::string& path, const std::vector<DiscreteMeasure>& measures);
RawGrid read_raw_grid(const std::string& path);
// Images that already are strictly positive probability vectors are taken
// verbatim; anything else goes through the floor-and-normalize pipeline.
std::vector<DiscreteMeasure> load_raw_grid(const std::string& path, const DatasetSpec& spec);

// Dispatches on spec.kind.
std::vector<DiscreteMeasure> load_dataset(const DatasetSpec& spec);

// 8-bit binary PGM of a measure, scaled so the largest weight is white.
void write_pgm(const std::string& path, const DiscreteMeasure& measure);

// CSV with header i,j,value (row-major).
void write_matrix_csv(std::ostream& out, const Matrix& m);
void write_matrix_csv(const std::string& path, const Matrix& m);
// CSV with header i,value.
void write_vector_csv(const std::string& path, const Vector& v);

// ---------------------------------------------------------------- checkpoints

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;

  bool operator==(const NamedTensor&) const = default;
};

struct CheckpointHeader {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  GeneratorConfig generator;
  ApproximatorConfig approximator;
  double bn_eps = BatchNorm1d::kDefaultEps;
  double bn_momentum = BatchNorm1d::kDefaultMomentum;
  std::string layer_order = "linear-relu-batchnorm";
  std::uint64_t seed = 0;
  long outer_iterations = 0;
  long samples_seen = 0;
};

struct ModelCheckpoint {
  CheckpointHeader header;
  std::vector<NamedTensor> tensors;

  const NamedTensor& tensor(const std::string& name) const;
};

ModelCheckpoint make_checkpoint(const Generator& generator, const Approximator& approximator,
                                const CheckpointHeader& progress);

// Rebuilds both models from a checkpoint; throws ConsistencyError naming the
// offending tensor when shapes disagree with the header.
std::pair<Generator, Approximator> restore_models(const ModelCheckpoint& checkpoint);

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::string& path);
// IoError on unreadable files, CorruptionError on truncation or checksum
// mismatch, ConsistencyError on version or shape mismatches.
ModelCheckpoint load_checkpoint(const std::string& path);

std::uint32_t crc32_of(const std::vector<unsigned char>& bytes);

}  // namespace otws
