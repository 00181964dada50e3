#include "otws/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "json.hpp"

namespace otws {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    buffer_.insert(buffer_.end(), p, p + size);
  }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buffer_.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buffer_.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<unsigned char>& buffer() { return buffer_; }

 private:
  std::vector<unsigned char> buffer_;
};

// Bounds-checked little-endian reader; the exception type is chosen by the
// caller (format vs. corruption errors).
template <typename Fail>
class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, Fail fail) : bytes_(bytes), fail_(fail) {}

  void need(std::size_t n, const char* what) {
    if (offset_ + n > bytes_.size()) fail_(std::string("truncated data while reading ") + what, offset_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[offset_ + k]) << (8 * k);
    offset_ += 4;
    return v;
  }
  std::uint32_t u32_big_endian(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v = (v << 8) | bytes_[offset_ + k];
    offset_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes_[offset_ + k]) << (8 * k);
    offset_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
    offset_ += n;
    return s;
  }
  const unsigned char* take(std::size_t n, const char* what) {
    need(n, what);
    const unsigned char* p = bytes_.data() + offset_;
    offset_ += n;
    return p;
  }
  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  const std::vector<unsigned char>& bytes_;
  Fail fail_;
  std::size_t offset_ = 0;
};

[[noreturn]] void throw_format(const std::string& what, std::size_t offset) { throw FormatError(what, offset); }

[[noreturn]] void throw_corruption(const std::string& what, std::size_t offset) {
  throw CorruptionError(what + " (byte offset " + std::to_string(offset) + ")");
}

using FormatReader = ByteReader<decltype(&throw_format)>;
using CorruptionReader = ByteReader<decltype(&throw_corruption)>;

constexpr char kRawGridMagic[4] = {'O', 'T', 'G', '1'};
constexpr char kCheckpointMagic[8] = {'O', 'T', 'W', 'S', 'C', 'K', 'P', 'T'};

}  // namespace

void DatasetSpec::validate() const {
  if (count < 0 || (kind == DatasetKind::random_r3 && count < 1))
    throw InvalidArgument("dataset count must be >= 1");
  if (!(floor > 0.0)) throw InvalidArgument("dataset positivity floor must be positive");
  if (rows <= 0 || cols <= 0) throw InvalidArgument("dataset grid size must be positive");
}

DiscreteMeasure image_to_measure(const Vector& intensities, int rows, int cols, double floor) {
  if (intensities.size() != static_cast<Eigen::Index>(rows) * cols)
    throw InvalidArgument("image size does not match its grid");
  return DiscreteMeasure::normalized(intensities.array() + floor, make_grid(rows, cols));
}

std::vector<DiscreteMeasure> gen_random_r3(const DatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const GeometryPtr grid = make_grid(spec.rows, spec.cols);
  const int size = spec.rows * spec.cols;
  std::vector<DiscreteMeasure> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  Vector pixels(size);
  for (long k = 0; k < spec.count; ++k) {
    for (int p = 0; p < size; ++p) {
      const double r = uniform(rng);
      pixels[p] = r * r * r + spec.floor;
    }
    out.push_back(DiscreteMeasure::normalized(pixels, grid));
  }
  return out;
}

std::vector<DiscreteMeasure> load_idx_images(const std::string& path, const DatasetSpec& spec) {
  if (!(spec.floor > 0.0)) throw InvalidArgument("dataset positivity floor must be positive");
  const std::vector<unsigned char> bytes = read_file(path);
  FormatReader in(bytes, &throw_format);
  const std::uint32_t magic = in.u32_big_endian("IDX magic");
  if (magic != 0x00000803u && magic != 0x00000804u)
    throw FormatError("unsupported IDX magic 0x" + [&] {
      std::ostringstream hex;
      hex << std::hex << std::setw(8) << std::setfill('0') << magic;
      return hex.str();
    }() + " in " + path, 0);
  const std::uint32_t count = in.u32_big_endian("IDX image count");
  const std::uint32_t rows = in.u32_big_endian("IDX rows");
  const std::uint32_t cols = in.u32_big_endian("IDX cols");
  std::uint32_t channels = 1;
  if (magic == 0x00000804u) {
    channels = in.u32_big_endian("IDX channels");
    if (channels != 3) throw FormatError("4-d IDX images must have 3 channels", in.offset() - 4);
  }
  if (rows == 0 || cols == 0) throw FormatError("IDX image dimensions must be positive", 8);
  const std::size_t take = spec.count > 0 ? std::min<std::size_t>(count, static_cast<std::size_t>(spec.count)) : count;
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<DiscreteMeasure> out;
  out.reserve(take);
  Vector image(static_cast<Eigen::Index>(pixels));
  for (std::size_t k = 0; k < take; ++k) {
    const unsigned char* raw = in.take(pixels * channels, "IDX pixels");
    for (std::size_t p = 0; p < pixels; ++p) {
      if (channels == 1) {
        image[static_cast<Eigen::Index>(p)] = raw[p] / 255.0;
      } else {
        const unsigned char* rgb = raw + 3 * p;
        image[static_cast<Eigen::Index>(p)] = (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]) / 255.0;
      }
    }
    out.push_back(image_to_measure(image, static_cast<int>(rows), static_cast<int>(cols), spec.floor));
  }
  return out;
}

void write_raw_grid(const std::string& path, const RawGrid& grid) {
  ByteWriter w;
  w.bytes(kRawGridMagic, 4);
  w.u32(static_cast<std::uint32_t>(grid.images.size()));
  w.u32(grid.rows);
  w.u32(grid.cols);
  for (const Vector& image : grid.images) {
    if (image.size() != static_cast<Eigen::Index>(grid.rows) * grid.cols)
      throw InvalidArgument("raw_grid image size does not match rows * cols");
    for (Eigen::Index k = 0; k < image.size(); ++k) w.f64(image[k]);
  }
  write_file(path, w.buffer());
}

void write_raw_grid(const std::string& path, const std::vector<DiscreteMeasure>& measures) {
  RawGrid grid;
  if (!measures.empty()) {
    grid.rows = static_cast<std::uint32_t>(measures.front().geometry()->rows());
    grid.cols = static_cast<std::uint32_t>(measures.front().geometry()->cols());
  }
  for (const auto& m : measures) {
    if (m.geometry()->rows() != static_cast<int>(grid.rows) || m.geometry()->cols() != static_cast<int>(grid.cols))
      throw InvalidArgument("raw_grid measures must share one grid");
    grid.images.push_back(m.weights());
  }
  write_raw_grid(path, grid);
}

RawGrid read_raw_grid(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  FormatReader in(bytes, &throw_format);
  if (in.text(4, "raw_grid magic") != std::string(kRawGridMagic, 4))
    throw FormatError("not a raw_grid file: " + path, 0);
  RawGrid grid;
  const std::uint32_t count = in.u32("raw_grid count");
  grid.rows = in.u32("raw_grid rows");
  grid.cols = in.u32("raw_grid cols");
  const std::size_t pixels = static_cast<std::size_t>(grid.rows) * grid.cols;
  if (in.remaining() != static_cast<std::size_t>(count) * pixels * 8)
    throw FormatError("raw_grid payload size does not match header", in.offset());
  grid.images.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    Vector image(static_cast<Eigen::Index>(pixels));
    for (std::size_t p = 0; p < pixels; ++p) image[static_cast<Eigen::Index>(p)] = in.f64("raw_grid payload");
    grid.images.push_back(std::move(image));
  }
  return grid;
}

std::vector<DiscreteMeasure> load_raw_grid(const std::string& path, const DatasetSpec& spec) {
  if (!(spec.floor > 0.0)) throw InvalidArgument("dataset positivity floor must be positive");
  const RawGrid grid = read_raw_grid(path);
  const int rows = static_cast<int>(grid.rows);
  const int cols = static_cast<int>(grid.cols);
  const GeometryPtr geometry = make_grid(rows, cols);
  const std::size_t take =
      spec.count > 0 ? std::min<std::size_t>(grid.images.size(), static_cast<std::size_t>(spec.count))
                     : grid.images.size();
  std::vector<DiscreteMeasure> out;
  out.reserve(take);
  for (std::size_t k = 0; k < take; ++k) {
    const Vector& image = grid.images[k];
    const bool valid = image.allFinite() && image.minCoeff() > 0.0 &&
                       std::abs(pairwise_sum(image) - 1.0) <= DiscreteMeasure::kSumTolerance;
    if (valid) {
      out.emplace_back(image, geometry);
    } else {
      if (!image.allFinite() || image.minCoeff() < 0.0)
        throw FormatError("raw_grid image " + std::to_string(k) + " has negative or non-finite pixels", 16);
      out.push_back(image_to_measure(image, rows, cols, spec.floor));
    }
  }
  return out;
}

std::vector<DiscreteMeasure> load_dataset(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::random_r3:
      return gen_random_r3(spec);
    case DatasetKind::idx_images:
      return load_idx_images(spec.path, spec);
    case DatasetKind::raw_grid:
      return load_raw_grid(spec.path, spec);
  }
  throw InvalidArgument("unknown dataset kind");
}

void write_pgm(const std::string& path, const DiscreteMeasure& measure) {
  const int rows = measure.geometry()->rows();
  const int cols = measure.geometry()->cols();
  const double top = measure.weights().maxCoeff();
  std::ostringstream header;
  header << "P5\n" << cols << " " << rows << "\n255\n";
  std::vector<unsigned char> bytes;
  const std::string h = header.str();
  bytes.insert(bytes.end(), h.begin(), h.end());
  for (int k = 0; k < rows * cols; ++k) {
    const double level = top > 0.0 ? measure[k] / top : 0.0;
    bytes.push_back(static_cast<unsigned char>(std::lround(255.0 * std::clamp(level, 0.0, 1.0))));
  }
  write_file(path, bytes);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << "i,j,value\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << i << ',' << j << ',' << m(i, j) << '\n';
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_matrix_csv(out, m);
}

void write_vector_csv(const std::string& path, const Vector& v) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "i,value\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) out << i << ',' << v[i] << '\n';
}

// ---------------------------------------------------------------- checkpoints

namespace {

NamedTensor tensor_from(const std::string& name, const Matrix& m) {
  return {name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
          std::vector<double>(m.data(), m.data() + m.size())};
}

NamedTensor tensor_from(const std::string& name, const Vector& v) {
  return {name, {static_cast<std::uint64_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

void copy_into(const ModelCheckpoint& ckpt, const std::string& name, Matrix& m) {
  const NamedTensor& t = ckpt.tensor(name);
  if (t.shape != std::vector<std::uint64_t>{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())})
    throw ConsistencyError("checkpoint tensor " + name + " has a shape inconsistent with the header");
  std::copy(t.data.begin(), t.data.end(), m.data());
}

void copy_into(const ModelCheckpoint& ckpt, const std::string& name, Vector& v) {
  const NamedTensor& t = ckpt.tensor(name);
  if (t.shape != std::vector<std::uint64_t>{static_cast<std::uint64_t>(v.size())})
    throw ConsistencyError("checkpoint tensor " + name + " has a shape inconsistent with the header");
  std::copy(t.data.begin(), t.data.end(), v.data());
}

std::string approximator_name(const char* kind, int k, const char* field) {
  return std::string("approximator.") + kind + std::to_string(k) + "." + field;
}

nlohmann::json header_to_json(const CheckpointHeader& h) {
  return {
      {"version", h.version},
      {"generator", {{"latent_dim", h.generator.latent_dim}, {"n", h.generator.n},
                     {"lambda", h.generator.lambda}, {"c", h.generator.c}}},
      {"approximator", {{"n", h.approximator.n}, {"hidden", h.approximator.hidden()}}},
      {"batch_norm", {{"eps", h.bn_eps}, {"momentum", h.bn_momentum}}},
      {"layer_order", h.layer_order},
      {"seed", h.seed},
      {"outer_iterations", h.outer_iterations},
      {"samples_seen", h.samples_seen},
  };
}

CheckpointHeader header_from_json(const nlohmann::json& j) {
  CheckpointHeader h;
  h.version = j.at("version").get<std::uint32_t>();
  h.generator.latent_dim = j.at("generator").at("latent_dim").get<int>();
  h.generator.n = j.at("generator").at("n").get<int>();
  h.generator.lambda = j.at("generator").at("lambda").get<double>();
  h.generator.c = j.at("generator").at("c").get<double>();
  h.approximator.n = j.at("approximator").at("n").get<int>();
  h.bn_eps = j.at("batch_norm").at("eps").get<double>();
  h.bn_momentum = j.at("batch_norm").at("momentum").get<double>();
  h.layer_order = j.at("layer_order").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.outer_iterations = j.at("outer_iterations").get<long>();
  h.samples_seen = j.at("samples_seen").get<long>();
  return h;
}

// Expected tensor shapes implied by a header, in file order.
std::vector<std::pair<std::string, std::vector<std::uint64_t>>> expected_shapes(const CheckpointHeader& h) {
  using Shape = std::vector<std::uint64_t>;
  const auto n = static_cast<std::uint64_t>(h.approximator.n);
  const auto hidden = 6 * n;
  const auto gn = static_cast<std::uint64_t>(h.generator.n);
  const auto l = static_cast<std::uint64_t>(h.generator.latent_dim);
  std::vector<std::pair<std::string, Shape>> out = {
      {"generator.net.weight", Shape{2 * gn, l}},
      {"generator.net.bias", Shape{2 * gn}},
  };
  const std::uint64_t in_widths[3] = {2 * n, hidden, hidden};
  const std::uint64_t out_widths[3] = {hidden, hidden, n};
  for (int k = 0; k < 3; ++k) {
    out.push_back({approximator_name("linear", k, "weight"), Shape{out_widths[k], in_widths[k]}});
    out.push_back({approximator_name("linear", k, "bias"), Shape{out_widths[k]}});
    if (k < 2) {
      for (const char* field : {"gamma", "beta", "running_mean", "running_var"})
        out.push_back({approximator_name("batch_norm", k, field), Shape{hidden}});
    }
  }
  return out;
}

}  // namespace

const NamedTensor& ModelCheckpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ConsistencyError("checkpoint has no tensor named " + name);
}

ModelCheckpoint make_checkpoint(const Generator& generator, const Approximator& approximator,
                                const CheckpointHeader& progress) {
  ModelCheckpoint ckpt;
  ckpt.header = progress;
  ckpt.header.version = CheckpointHeader::kVersion;
  ckpt.header.generator = generator.config();
  ckpt.header.approximator = approximator.config();
  ckpt.header.bn_eps = approximator.batch_norm(0).eps();
  ckpt.header.bn_momentum = approximator.batch_norm(0).momentum();
  ckpt.tensors.push_back(tensor_from("generator.net.weight", generator.net().weight));
  ckpt.tensors.push_back(tensor_from("generator.net.bias", generator.net().bias));
  for (int k = 0; k < 3; ++k) {
    ckpt.tensors.push_back(tensor_from(approximator_name("linear", k, "weight"), approximator.linear(k).weight));
    ckpt.tensors.push_back(tensor_from(approximator_name("linear", k, "bias"), approximator.linear(k).bias));
    if (k < 2) {
      const BatchNorm1d& bn = approximator.batch_norm(k);
      ckpt.tensors.push_back(tensor_from(approximator_name("batch_norm", k, "gamma"), bn.gamma));
      ckpt.tensors.push_back(tensor_from(approximator_name("batch_norm", k, "beta"), bn.beta));
      ckpt.tensors.push_back(tensor_from(approximator_name("batch_norm", k, "running_mean"), bn.running_mean));
      ckpt.tensors.push_back(tensor_from(approximator_name("batch_norm", k, "running_var"), bn.running_var));
    }
  }
  return ckpt;
}

std::pair<Generator, Approximator> restore_models(const ModelCheckpoint& ckpt) {
  const CheckpointHeader& h = ckpt.header;
  if (h.generator.n != h.approximator.n)
    throw ConsistencyError("checkpoint header: generator and approximator disagree on n");
  for (const auto& [name, shape] : expected_shapes(h)) {
    if (ckpt.tensor(name).shape != shape)
      throw ConsistencyError("checkpoint tensor " + name + " has a shape inconsistent with the header");
  }
  Generator generator(h.generator);
  Approximator approximator(h.approximator);
  copy_into(ckpt, "generator.net.weight", generator.net().weight);
  copy_into(ckpt, "generator.net.bias", generator.net().bias);
  for (int k = 0; k < 3; ++k) {
    copy_into(ckpt, approximator_name("linear", k, "weight"), approximator.linear(k).weight);
    copy_into(ckpt, approximator_name("linear", k, "bias"), approximator.linear(k).bias);
    if (k < 2) {
      BatchNorm1d& bn = approximator.batch_norm(k);
      bn = BatchNorm1d(bn.features(), h.bn_eps, h.bn_momentum);
      copy_into(ckpt, approximator_name("batch_norm", k, "gamma"), bn.gamma);
      copy_into(ckpt, approximator_name("batch_norm", k, "beta"), bn.beta);
      copy_into(ckpt, approximator_name("batch_norm", k, "running_mean"), bn.running_mean);
      copy_into(ckpt, approximator_name("batch_norm", k, "running_var"), bn.running_var);
    }
  }
  return {std::move(generator), std::move(approximator)};
}

std::uint32_t crc32_of(const std::vector<unsigned char>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  ByteWriter payload;
  payload.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const NamedTensor& t : ckpt.tensors) {
    std::uint64_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.data.size()) throw ConsistencyError("tensor " + t.name + " payload does not match its shape");
    payload.u32(static_cast<std::uint32_t>(t.name.size()));
    payload.bytes(t.name.data(), t.name.size());
    payload.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) payload.u64(d);
    for (double x : t.data) payload.f64(x);
  }
  const std::string header = header_to_json(ckpt.header).dump();
  ByteWriter file;
  file.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  file.u32(ckpt.header.version);
  file.u32(static_cast<std::uint32_t>(header.size()));
  file.bytes(header.data(), header.size());
  file.bytes(payload.buffer().data(), payload.buffer().size());
  file.u32(crc32_of(payload.buffer()));
  write_file(path, file.buffer());
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  CorruptionReader in(bytes, &throw_corruption);
  if (in.text(sizeof(kCheckpointMagic), "checkpoint magic") != std::string(kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw CorruptionError("not a checkpoint file: " + path);
  const std::uint32_t version = in.u32("checkpoint version");
  if (version != CheckpointHeader::kVersion)
    throw ConsistencyError("checkpoint " + path + " has format version " + std::to_string(version) +
                           ", this build reads version " + std::to_string(CheckpointHeader::kVersion));
  const std::uint32_t header_len = in.u32("header length");
  const std::string header_text = in.text(header_len, "header");
  ModelCheckpoint ckpt;
  try {
    ckpt.header = header_from_json(nlohmann::json::parse(header_text));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("checkpoint header is not valid: " + std::string(e.what()));
  }
  if (ckpt.header.version != version) throw ConsistencyError("checkpoint header version disagrees with file version");

  // The checksum covers everything between the header and the trailing crc.
  if (in.remaining() < 4) throw_corruption("truncated checkpoint", in.offset());
  const std::size_t payload_begin = in.offset();
  const std::size_t payload_end = bytes.size() - 4;
  const std::vector<unsigned char> payload(bytes.begin() + static_cast<std::ptrdiff_t>(payload_begin),
                                           bytes.begin() + static_cast<std::ptrdiff_t>(payload_end));
  std::uint32_t stored = 0;
  for (int k = 0; k < 4; ++k) stored |= static_cast<std::uint32_t>(bytes[payload_end + k]) << (8 * k);

  CorruptionReader body(payload, &throw_corruption);
  const std::uint32_t count = body.u32("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor tensor;
    const std::uint32_t name_len = body.u32("tensor name length");
    tensor.name = body.text(name_len, "tensor name");
    const std::uint32_t ndim = body.u32("tensor rank");
    std::uint64_t elements = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      tensor.shape.push_back(body.u64("tensor shape"));
      elements *= tensor.shape.back();
    }
    if (elements > body.remaining() / 8) throw_corruption("truncated tensor " + tensor.name, payload_begin + body.offset());
    tensor.data.resize(static_cast<std::size_t>(elements));
    for (auto& x : tensor.data) x = body.f64("tensor payload");
    ckpt.tensors.push_back(std::move(tensor));
  }
  if (body.remaining() != 0) throw_corruption("trailing bytes after tensors", payload_begin + body.offset());
  if (crc32_of(payload) != stored) throw CorruptionError("checkpoint checksum mismatch in " + path);

  for (const auto& [name, shape] : expected_shapes(ckpt.header)) {
    if (ckpt.tensor(name).shape != shape)
      throw ConsistencyError("checkpoint tensor " + name + " has a shape inconsistent with the header");
  }
  return ckpt;
}

}  // namespace otws
