#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dcnn/dataset.hpp"
#include "dcnn/errors.hpp"
#include "dcnn/model.hpp"
#include "dcnn/trainer.hpp"

#include <nlohmann/json.hpp>

namespace dcnn {
namespace detail {

// Byte-by-byte little-endian I/O, independent of host endianness.

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  static_assert(std::is_integral_v<T>);
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw FormatError("unexpected end of file");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<U>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return static_cast<T>(u);
}

inline void write_f32(std::ostream& os, float v) { write_le(os, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_le<std::uint32_t>(is)); }
inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& is) {
  return std::bit_cast<double>(read_le<std::uint64_t>(is));
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const std::uint32_t n = read_le<std::uint32_t>(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError("unexpected end of file in string");
  return s;
}

inline void expect_magic(std::istream& is, const char* magic, const char* what) {
  char buf[8];
  if (!is.read(buf, 8) || std::string_view(buf, 8) != std::string_view(magic, 8))
    throw FormatError(std::string("not a ") + what + " file (bad magic)");
}

}  // namespace detail

// --- segment cache ---------------------------------------------------------
// Header: magic, version, M, K, label names, counts. Payload: per segment a
// label index, a user id, then M*K little-endian f32 values. Round-trips
// bit-exactly: load(save(x)) re-saves to identical bytes.

inline constexpr char kCacheMagic[9] = "DCNSEG01";
inline constexpr char kCheckpointMagic[9] = "DCNCKPT1";

inline void save_segment_cache(std::ostream& os, const SegmentSet& set) {
  if (set.train.empty() && set.test.empty()) throw ConfigError("cannot cache an empty SegmentSet");
  const Tensor& first = (set.train.empty() ? set.test : set.train).front().image;
  const std::int64_t variates = first.extent(1), window = first.extent(2);
  os.write(kCacheMagic, 8);
  detail::write_le<std::uint32_t>(os, 1);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(variates));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(window));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(set.label_names.size()));
  for (const std::string& name : set.label_names) detail::write_string(os, name);
  detail::write_le<std::uint64_t>(os, set.train.size());
  detail::write_le<std::uint64_t>(os, set.test.size());
  auto dump = [&](const std::vector<Segment>& segments) {
    for (const Segment& segment : segments) {
      if (segment.image.extent(1) != variates || segment.image.extent(2) != window)
        throw ShapeError("cache: segments disagree on image shape");
      detail::write_le<std::int32_t>(os, segment.label);
      detail::write_le<std::int32_t>(os, segment.user_id);
      for (std::int64_t i = 0; i < segment.image.size(); ++i)
        detail::write_f32(os, static_cast<float>(segment.image[i]));
    }
  };
  dump(set.train);
  dump(set.test);
  if (!os) throw IoError("failed writing segment cache");
}

inline SegmentSet load_segment_cache(std::istream& is) {
  detail::expect_magic(is, kCacheMagic, "segment cache");
  const std::uint32_t version = detail::read_le<std::uint32_t>(is);
  if (version != 1) throw FormatError("unsupported cache version " + std::to_string(version));
  const std::int64_t variates = detail::read_le<std::uint32_t>(is);
  const std::int64_t window = detail::read_le<std::uint32_t>(is);
  const std::uint32_t n_labels = detail::read_le<std::uint32_t>(is);
  SegmentSet set;
  for (std::uint32_t i = 0; i < n_labels; ++i) set.label_names.push_back(detail::read_string(is));
  const std::uint64_t n_train = detail::read_le<std::uint64_t>(is);
  const std::uint64_t n_test = detail::read_le<std::uint64_t>(is);
  auto slurp = [&](std::vector<Segment>& segments, std::uint64_t count) {
    segments.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      Segment segment;
      segment.label = detail::read_le<std::int32_t>(is);
      segment.user_id = detail::read_le<std::int32_t>(is);
      if (segment.label < 0 || segment.label >= static_cast<int>(n_labels))
        throw FormatError("cache: label index out of range");
      segment.image = Tensor({1, variates, window});
      for (std::int64_t j = 0; j < segment.image.size(); ++j)
        segment.image[j] = static_cast<double>(detail::read_f32(is));
      segments.push_back(std::move(segment));
    }
  };
  slurp(set.train, n_train);
  slurp(set.test, n_test);
  return set;
}

inline void save_segment_cache(const std::string& path, const SegmentSet& set) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_segment_cache(os, set);
}

inline SegmentSet load_segment_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return load_segment_cache(is);
}

// --- checkpoint -------------------------------------------------------------
// Magic, version, digest of the canonical network description, the
// description itself, then every parameter tensor in declaration order
// (w0, b0, w1, b1, ...) as little-endian f64.

inline void save_checkpoint(std::ostream& os, const NetworkConfig& cfg, const ModelParams& params) {
  const std::string text = config_text(cfg);
  os.write(kCheckpointMagic, 8);
  detail::write_le<std::uint32_t>(os, 1);
  detail::write_le<std::uint64_t>(os, fnv1a64(text));
  detail::write_string(os, text);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.weights.size() * 2));
  auto dump = [&](const Tensor& t) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::int64_t a = 0; a < t.rank(); ++a)
      detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.extent(static_cast<std::size_t>(a))));
    for (std::int64_t i = 0; i < t.size(); ++i) detail::write_f64(os, t[i]);
  };
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    dump(params.weights[i]);
    dump(params.biases[i]);
  }
  if (!os) throw IoError("failed writing checkpoint");
}

struct Checkpoint {
  NetworkConfig config;
  ModelParams params;
};

inline Checkpoint load_checkpoint(std::istream& is) {
  detail::expect_magic(is, kCheckpointMagic, "checkpoint");
  const std::uint32_t version = detail::read_le<std::uint32_t>(is);
  if (version != 1) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t digest = detail::read_le<std::uint64_t>(is);
  const std::string text = detail::read_string(is);
  if (fnv1a64(text) != digest)
    throw FormatError("checkpoint digest does not match its network description");
  Checkpoint ckpt;
  ckpt.config = parse_config_text(text);
  const std::uint32_t n_tensors = detail::read_le<std::uint32_t>(is);
  if (n_tensors % 2 != 0 || n_tensors / 2 != ckpt.config.layers.size())
    throw FormatError("checkpoint tensor count does not match layer count");
  auto slurp = [&]() {
    const std::uint32_t rank = detail::read_le<std::uint32_t>(is);
    Extents shape;
    for (std::uint32_t a = 0; a < rank; ++a) shape.push_back(detail::read_le<std::uint32_t>(is));
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = detail::read_f64(is);
    return t;
  };
  for (std::uint32_t i = 0; i < n_tensors / 2; ++i) {
    ckpt.params.weights.push_back(slurp());
    ckpt.params.biases.push_back(slurp());
  }
  ckpt.params.opt_weights.resize(ckpt.params.weights.size());
  ckpt.params.opt_biases.resize(ckpt.params.biases.size());
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const NetworkConfig& cfg,
                            const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(os, cfg, params);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return load_checkpoint(is);
}

// --- run log -----------------------------------------------------------------
// One epoch per line. Everything except wall_s is deterministic for a fixed
// seed; pass include_timing=false to get the canonical byte stream used for
// reproducibility comparisons.

inline std::string runlog_to_jsonl(const RunLog& log, bool include_timing = true) {
  std::ostringstream os;
  for (const EpochRecord& r : log.epochs) {
    nlohmann::json line;
    line["epoch"] = r.epoch;
    line["train_loss"] = r.train_loss;
    line["train_xent"] = r.train_xent;
    line["l2"] = r.l2;
    line["train_acc"] = r.train_acc;
    if (r.test.total > 0) {
      nlohmann::json test;
      test["accuracy"] = r.test.accuracy;
      test["weighted_f1"] = r.test.weighted_f1;
      test["macro_f1"] = r.test.macro_f1;
      nlohmann::json f1 = nlohmann::json::array(), precision = nlohmann::json::array(),
                     recall = nlohmann::json::array(), support = nlohmann::json::array();
      for (const ClassMetrics& m : r.test.per_class) {
        f1.push_back(m.f1);
        precision.push_back(m.precision);
        recall.push_back(m.recall);
        support.push_back(m.support);
      }
      test["f1"] = f1;
      test["precision"] = precision;
      test["recall"] = recall;
      test["support"] = support;
      test["confusion"] = r.test.confusion;
      line["test"] = test;
    }
    if (include_timing) line["wall_s"] = r.wall_s;
    os << line.dump() << '\n';
  }
  return os.str();
}

inline void save_runlog(const std::string& path, const RunLog& log, bool include_timing = true) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << runlog_to_jsonl(log, include_timing);
  if (!os) throw IoError("failed writing run log");
}

}  // namespace dcnn
