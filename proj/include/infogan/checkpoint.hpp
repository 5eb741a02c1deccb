#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "infogan/config.hpp"
#include "infogan/data_io.hpp"
#include "infogan/error.hpp"
#include "infogan/models.hpp"

namespace infogan {

// Layout (little-endian throughout):
//   "IGAN0001"            8-byte magic
//   u32 version           kCheckpointVersion
//   u32 height, u32 width image geometry
//   u64 n, n bytes        TrainingConfig text
//   u64 count             number of tensors
//   count x { u32 name_len, name, u32 ndim, ndim x u64 dim, prod(dims) x f64 }
inline constexpr char kCheckpointMagic[8] = {'I', 'G', 'A', 'N', '0', '0', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainingConfig config;
  std::size_t height = 0;
  std::size_t width = 0;
  ModelPair model;
};

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }

  template <class T>
  void le(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits;
    std::memcpy(&bits, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }

  void str(const std::string& s, bool wide) {
    if (wide) {
      le<std::uint64_t>(s.size());
    } else {
      le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    }
    out_ += s;
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (n > bytes_.size() - pos_) {
      throw FormatError(std::string("checkpoint: truncated while reading ") + what + " at offset " +
                        std::to_string(pos_));
    }
  }

  template <class T>
  T le(const char* what) {
    need(sizeof(T), what);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, &bits, sizeof(T));
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const ModelPair& model, const TrainingConfig& cfg, std::size_t height,
                                     std::size_t width) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(height));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(width));
  w.str(cfg.to_text(), true);
  w.le<std::uint64_t>(model.entries().size());
  for (const NamedTensor& e : model.entries()) {
    w.str(e.name, false);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) w.le<std::uint64_t>(d);
    for (double v : e.value.data()) w.le<double>(v);
  }
  return w.take();
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  const std::string magic = r.str(sizeof(kCheckpointMagic), "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("checkpoint: bad magic (not an IGAN0001 file)");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.height = r.le<std::uint32_t>("height");
  ck.width = r.le<std::uint32_t>("width");
  const auto config_len = r.le<std::uint64_t>("config length");
  r.need(config_len, "config text");
  try {
    ck.config = TrainingConfig::parse(r.str(config_len, "config text"));
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint: embedded config is invalid: ") + e.what());
  }
  const auto count = r.le<std::uint64_t>("tensor count");
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint32_t>("name length");
    std::string name = r.str(name_len, "name");
    const auto ndim = r.le<std::uint32_t>("rank");
    if (ndim == 0 || ndim > 8) throw FormatError("checkpoint: invalid rank for '" + name + "'");
    Shape shape;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = r.le<std::uint64_t>("dimension");
      if (dim == 0 || total > r.remaining() / dim) {
        throw FormatError("checkpoint: invalid dimension for '" + name + "'");
      }
      shape.push_back(dim);
      total *= dim;
    }
    if (total > r.remaining() / sizeof(double)) {
      throw FormatError("checkpoint: truncated while reading tensor payload of '" + name + "'");
    }
    std::vector<double> data(total);
    for (double& v : data) v = r.le<double>("tensor payload");
    tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after last tensor");
  try {
    ck.model = ModelPair::from_entries(ck.config.model_config(ck.height * ck.width), std::move(tensors));
  } catch (const StructuralError& e) {
    throw FormatError(std::string("checkpoint: tensors do not match the embedded config: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const ModelPair& model, const TrainingConfig& cfg, std::size_t height, std::size_t width,
                            const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(model, cfg, height, width));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: '" + path.string() + "'");
  return decode_checkpoint(read_file(path));
}

}  // namespace infogan
