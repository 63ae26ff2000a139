#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dcnn/errors.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/tensor.hpp"

namespace dcnn {

struct Sample {
  int user_id = 0;
  int label = 0;
  std::int64_t timestamp = 0;  // nanoseconds as recorded
  double x = 0.0, y = 0.0, z = 0.0;
};

/// Ordered class names plus raw-file aliases (v2 folds Upstairs and
/// Downstairs into Stairs; v1 keeps them apart).
struct LabelSet {
  std::vector<std::string> names;
  std::map<std::string, int, std::less<>> index;

  int lookup(std::string_view activity) const {
    auto it = index.find(activity);
    return it == index.end() ? -1 : it->second;
  }
};

inline LabelSet v1_labels() {
  LabelSet labels;
  labels.names = {"Walking", "Jogging", "Upstairs", "Downstairs", "Sitting", "Standing"};
  for (std::size_t i = 0; i < labels.names.size(); ++i)
    labels.index[labels.names[i]] = static_cast<int>(i);
  return labels;
}

inline LabelSet v2_labels() {
  LabelSet labels;
  labels.names = {"Walking", "Jogging", "Stairs", "Sitting", "Standing", "LyingDown"};
  for (std::size_t i = 0; i < labels.names.size(); ++i)
    labels.index[labels.names[i]] = static_cast<int>(i);
  labels.index["Upstairs"] = 2;
  labels.index["Downstairs"] = 2;
  labels.index["Lying Down"] = 5;
  return labels;
}

struct ParseResult {
  std::vector<Sample> samples;
  std::size_t skipped_malformed = 0;
  std::size_t skipped_unknown_label = 0;

  std::size_t skipped() const { return skipped_malformed + skipped_unknown_label; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool parse_i64(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  std::string buf(s);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(buf.c_str(), &end, 10);
  if (errno != 0 || end != buf.c_str() + buf.size()) return false;
  out = v;
  return true;
}

inline bool parse_f64(std::string_view s, double& out) {
  if (s.empty()) return false;
  std::string buf(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(buf.c_str(), &end);
  if (errno != 0 || end != buf.c_str() + buf.size() || !std::isfinite(v)) return false;
  out = v;
  return true;
}

inline void split_fields(std::string_view record, std::vector<std::string_view>& fields) {
  fields.clear();
  std::size_t start = 0;
  for (std::size_t i = 0; i <= record.size(); ++i) {
    if (i == record.size() || record[i] == ',') {
      fields.push_back(trim(record.substr(start, i - start)));
      start = i + 1;
    }
  }
}

}  // namespace detail

/// Parses the WISDM raw format: records `user,activity,timestamp,x,y,z;`
/// separated by semicolons and/or newlines. Malformed records (wrong field
/// count, empty or non-numeric fields) and records with activities outside
/// the label set are skipped and counted, matching how the raw files mix
/// clean and broken lines.
inline ParseResult parse_wisdm(std::istream& in, const LabelSet& labels) {
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading input stream");

  ParseResult result;
  std::vector<std::string_view> fields;
  std::string_view rest(content);
  while (!rest.empty()) {
    const std::size_t cut = rest.find(';');
    std::string_view record = detail::trim(rest.substr(0, cut));
    rest = cut == std::string_view::npos ? std::string_view() : rest.substr(cut + 1);
    if (record.empty()) continue;

    detail::split_fields(record, fields);
    if (fields.size() != 6) {
      ++result.skipped_malformed;
      continue;
    }
    Sample sample;
    std::int64_t user = 0;
    if (!detail::parse_i64(fields[0], user) || !detail::parse_i64(fields[2], sample.timestamp) ||
        !detail::parse_f64(fields[3], sample.x) || !detail::parse_f64(fields[4], sample.y) ||
        !detail::parse_f64(fields[5], sample.z)) {
      ++result.skipped_malformed;
      continue;
    }
    sample.user_id = static_cast<int>(user);
    sample.label = labels.lookup(fields[1]);
    if (sample.label < 0) {
      ++result.skipped_unknown_label;
      continue;
    }
    result.samples.push_back(sample);
  }
  if (result.samples.empty()) throw FormatError("no valid samples in input");
  return result;
}

enum class SplitMode { random_fraction, by_user };

struct SegmentSpec {
  std::int64_t window = 100;  // K
  std::int64_t step = 100;    // step == window means non-overlapping
  std::int64_t variates = 3;  // M
  SplitMode mode = SplitMode::random_fraction;
  double train_frac = 0.8;
  std::vector<int> train_users;
  std::vector<int> test_users;
  std::int64_t gap_ns = 0;  // > 0 splits a run at recording gaps
};

struct Segment {
  Tensor image;  // [1, M, K], rows are (x, y, z)
  int label = 0;
  int user_id = 0;
};

struct SegmentSet {
  std::vector<Segment> train;
  std::vector<Segment> test;
  std::vector<std::string> label_names;
};

/// Slides a window over every (user, contiguous activity) run; windows never
/// span users, activity changes, or (when gap_ns is set) recording gaps.
/// Output order is canonical: user ascending, then file order, then offset.
inline std::vector<Segment> make_segments(const std::vector<Sample>& samples,
                                          const SegmentSpec& spec) {
  if (spec.window < 1) throw ConfigError("window length K must be >= 1");
  if (spec.step < 1 || spec.step > spec.window)
    throw ConfigError("step must satisfy 1 <= step <= K");
  if (spec.variates != 3) throw ConfigError("only 3 variates (x, y, z) are supported");

  std::map<int, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < samples.size(); ++i) by_user[samples[i].user_id].push_back(i);

  std::vector<Segment> segments;
  const std::int64_t window = spec.window;
  for (const auto& [user, idx] : by_user) {
    std::size_t run_start = 0;
    for (std::size_t i = 1; i <= idx.size(); ++i) {
      const bool label_change =
          i < idx.size() && samples[idx[i]].label != samples[idx[run_start]].label;
      const bool gap = i < idx.size() && spec.gap_ns > 0 &&
                       samples[idx[i]].timestamp - samples[idx[i - 1]].timestamp > spec.gap_ns;
      if (i == idx.size() || label_change || gap) {
        const std::int64_t run_len = static_cast<std::int64_t>(i - run_start);
        for (std::int64_t off = 0; off + window <= run_len; off += spec.step) {
          Segment segment;
          segment.image = Tensor({1, 3, window});
          segment.label = samples[idx[run_start]].label;
          segment.user_id = user;
          double* img = segment.image.data();
          for (std::int64_t k = 0; k < window; ++k) {
            const Sample& s = samples[idx[run_start + static_cast<std::size_t>(off + k)]];
            img[k] = s.x;
            img[window + k] = s.y;
            img[2 * window + k] = s.z;
          }
          segments.push_back(std::move(segment));
        }
        run_start = i;
      }
    }
  }
  return segments;
}

/// random_fraction: seed-driven shuffle, first round(frac*n) to train.
/// by_user: membership by user id; the lists must be disjoint and cover
/// every user that produced segments.
inline SegmentSet split(std::vector<Segment> segments, const SegmentSpec& spec,
                        const std::vector<std::string>& label_names, std::uint64_t seed) {
  SegmentSet set;
  set.label_names = label_names;
  if (spec.mode == SplitMode::random_fraction) {
    if (!(spec.train_frac > 0.0 && spec.train_frac < 1.0))
      throw ConfigError("train_frac must lie in (0,1)");
    Rng rng = make_stream(seed, 0x5117);
    deterministic_shuffle(segments, rng);
    const std::size_t n_train = static_cast<std::size_t>(
        std::llround(spec.train_frac * static_cast<double>(segments.size())));
    for (std::size_t i = 0; i < segments.size(); ++i)
      (i < n_train ? set.train : set.test).push_back(std::move(segments[i]));
  } else {
    std::set<int> train_users(spec.train_users.begin(), spec.train_users.end());
    std::set<int> test_users(spec.test_users.begin(), spec.test_users.end());
    for (int u : train_users)
      if (test_users.count(u))
        throw ConfigError("user " + std::to_string(u) + " appears in both train and test lists");
    for (Segment& segment : segments) {
      if (train_users.count(segment.user_id)) {
        set.train.push_back(std::move(segment));
      } else if (test_users.count(segment.user_id)) {
        set.test.push_back(std::move(segment));
      } else {
        throw ConfigError("user " + std::to_string(segment.user_id) +
                          " is in neither the train nor the test user list");
      }
    }
  }
  return set;
}

enum class NormalizeMode { none, per_channel_standardize };

/// Standardization uses train-set statistics only and applies them to both
/// splits; a zero-variance channel keeps divisor 1 and warns.
inline SegmentSet normalize(SegmentSet set, NormalizeMode mode) {
  if (mode == NormalizeMode::none || set.train.empty()) return set;

  const std::int64_t variates = set.train.front().image.extent(1);
  const std::int64_t window = set.train.front().image.extent(2);
  std::vector<double> mean(static_cast<std::size_t>(variates), 0.0);
  std::vector<double> sd(static_cast<std::size_t>(variates), 0.0);
  const double count = static_cast<double>(window * static_cast<std::int64_t>(set.train.size()));
  for (std::int64_t c = 0; c < variates; ++c) {
    double sum = 0.0;
    for (const Segment& segment : set.train) {
      const double* row = segment.image.data() + c * window;
      for (std::int64_t k = 0; k < window; ++k) sum += row[k];
    }
    mean[static_cast<std::size_t>(c)] = sum / count;
    double sq = 0.0;
    for (const Segment& segment : set.train) {
      const double* row = segment.image.data() + c * window;
      for (std::int64_t k = 0; k < window; ++k) {
        const double d = row[k] - mean[static_cast<std::size_t>(c)];
        sq += d * d;
      }
    }
    double variance = sq / count;
    if (variance == 0.0) {
      std::cerr << "normalize: channel " << c << " has zero variance, leaving scale at 1\n";
      variance = 1.0;
    }
    sd[static_cast<std::size_t>(c)] = std::sqrt(variance);
  }
  auto apply = [&](std::vector<Segment>& segments) {
    for (Segment& segment : segments)
      for (std::int64_t c = 0; c < variates; ++c) {
        double* row = segment.image.data() + c * window;
        for (std::int64_t k = 0; k < window; ++k)
          row[k] = (row[k] - mean[static_cast<std::size_t>(c)]) / sd[static_cast<std::size_t>(c)];
      }
  };
  apply(set.train);
  apply(set.test);
  return set;
}

inline std::vector<int> distinct_users(const std::vector<Sample>& samples) {
  std::set<int> users;
  for (const Sample& sample : samples) users.insert(sample.user_id);
  return {users.begin(), users.end()};
}

}  // namespace dcnn
