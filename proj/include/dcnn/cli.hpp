#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dcnn/dataset.hpp"
#include "dcnn/errors.hpp"
#include "dcnn/manifest.hpp"
#include "dcnn/metrics.hpp"
#include "dcnn/model.hpp"
#include "dcnn/serialize.hpp"
#include "dcnn/trainer.hpp"

namespace dcnn {

// exit codes: 0 ok, 2 user/config error, 3 training divergence
inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 2;
inline constexpr int kExitDivergence = 3;

namespace cli {

inline std::string default_cache_path(const RunManifest& manifest) {
  return manifest.cache_path.empty() ? manifest.out_dir + "/segments.bin" : manifest.cache_path;
}

inline std::string checkpoint_path(const RunManifest& manifest) {
  return manifest.out_dir + "/model.ckpt";
}

inline std::string runlog_path(const RunManifest& manifest) {
  return manifest.out_dir + "/runlog.jsonl";
}

inline std::string timing_path(const RunManifest& manifest) {
  return manifest.out_dir + "/runlog.timing.jsonl";
}

struct PublishedCounts {
  std::int64_t train = 0, test = 0;
};

// Instance counts published for the three standard constructions; used only
// to print the deviation after prepare.
inline bool published_counts_for(const std::string& kind, PublishedCounts& counts) {
  if (kind == "v1_split") counts = {8347, 2643};
  else if (kind == "v1_individual") counts = {41729, 13162};
  else if (kind == "v2") counts = {10396, 4456};
  else return false;
  return true;
}

/// Full raw-file -> SegmentSet pipeline shared by prepare and train.
inline SegmentSet build_segments(const RunManifest& manifest, std::ostream& out) {
  if (manifest.raw_path.empty()) throw ConfigError("no raw dataset path given (key 'raw')");
  std::ifstream raw(manifest.raw_path, std::ios::binary);
  if (!raw) throw IoError("cannot open raw dataset '" + manifest.raw_path + "'");

  const LabelSet labels = label_set_for(manifest);
  const ParseResult parsed = parse_wisdm(raw, labels);
  out << "parsed " << parsed.samples.size() << " samples (skipped " << parsed.skipped_malformed
      << " malformed, " << parsed.skipped_unknown_label << " unknown-label)\n";

  SegmentSpec spec = segment_spec_for(manifest);
  if (spec.mode == SplitMode::by_user && spec.train_users.empty() && spec.test_users.empty()) {
    const std::vector<int> users = distinct_users(parsed.samples);
    if (static_cast<std::int64_t>(users.size()) <= manifest.by_user_train_count)
      throw ConfigError("by_user split: dataset has " + std::to_string(users.size()) +
                        " users, cannot reserve " + std::to_string(manifest.by_user_train_count) +
                        " for training; set train_users/test_users explicitly");
    spec.train_users.assign(users.begin(), users.begin() + manifest.by_user_train_count);
    spec.test_users.assign(users.begin() + manifest.by_user_train_count, users.end());
    out << "by_user split: users " << spec.train_users.front() << ".." << spec.train_users.back()
        << " train, " << spec.test_users.front() << ".." << spec.test_users.back() << " test\n";
  }

  std::vector<Segment> segments = make_segments(parsed.samples, spec);
  SegmentSet set = split(std::move(segments), spec, labels.names, manifest.train.seed);
  set = normalize(std::move(set), normalize_mode_for(manifest));

  out << "segments: " << set.train.size() << " train / " << set.test.size() << " test (window "
      << spec.window << ", step " << spec.step << ")\n";
  PublishedCounts expected;
  if (published_counts_for(manifest.dataset, expected)) {
    auto deviation = [](std::int64_t got, std::int64_t want) {
      return 100.0 * (static_cast<double>(got) - static_cast<double>(want)) /
             static_cast<double>(want);
    };
    out << std::fixed << std::setprecision(2) << "published counts " << expected.train << "/"
        << expected.test << ", deviation " << deviation(static_cast<std::int64_t>(set.train.size()), expected.train)
        << "% / " << deviation(static_cast<std::int64_t>(set.test.size()), expected.test) << "%\n";
    out.unsetf(std::ios::fixed);
  }
  return set;
}

inline SegmentSet load_or_build_segments(const RunManifest& manifest, std::ostream& out,
                                         bool write_cache) {
  const std::string cache = default_cache_path(manifest);
  if (std::filesystem::exists(cache)) {
    out << "loading cache " << cache << "\n";
    return load_segment_cache(cache);
  }
  SegmentSet set = build_segments(manifest, out);
  if (write_cache) {
    std::filesystem::create_directories(std::filesystem::path(cache).parent_path().empty()
                                            ? "."
                                            : std::filesystem::path(cache).parent_path().string());
    save_segment_cache(cache, set);
    out << "wrote cache " << cache << "\n";
  }
  return set;
}

inline std::string describe_layer(const LayerSpec& spec) {
  std::ostringstream os;
  if (spec.kind == LayerKind::dense) {
    os << "FL " << spec.units << (spec.relu ? " relu" : "");
    return os.str();
  }
  const ConvParams& p = spec.conv;
  os << (spec.kind == LayerKind::dilated_conv ? "DL " : "SL ") << p.filter_rows << 'x'
     << p.filter_cols << " n" << p.out_channels << " d(" << p.dilation_rows << ','
     << p.dilation_cols << ") s(" << p.stride_rows << ',' << p.stride_cols << ") "
     << (p.padding == Padding::same ? "same" : "valid");
  return os.str();
}

inline void print_shape_table(const NetworkConfig& cfg, const std::string& name,
                              std::ostream& out) {
  const ShapeTable table = shape_check(cfg);
  out << "preset " << name << "  input " << extents_to_string(cfg.input_shape.extents()) << "\n";
  bool flat = false;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    if (!is_conv(cfg.layers[i]) && !flat) {
      out << "  flatten " << table.flatten << "\n";
      flat = true;
    }
    std::ostringstream desc;
    desc << "  " << (i + 1) << "  " << describe_layer(cfg.layers[i]);
    out << std::left << std::setw(40) << desc.str() << " -> "
        << extents_to_string(table.per_layer[i]) << "\n";
  }
}

}  // namespace cli

/// prepare: raw file -> segment cache, printing counts and deviations.
inline int cmd_prepare(const RunManifest& manifest, std::ostream& out) {
  std::filesystem::create_directories(manifest.out_dir);
  SegmentSet set = cli::build_segments(manifest, out);
  const std::string cache = cli::default_cache_path(manifest);
  const auto parent = std::filesystem::path(cache).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  save_segment_cache(cache, set);
  out << "wrote cache " << cache << "\n";
  return kExitOk;
}

/// train: cache (or raw) -> checkpoint + run log + final report.
inline int cmd_train(const RunManifest& manifest, std::ostream& out) {
  std::filesystem::create_directories(manifest.out_dir);
  SegmentSet set = cli::load_or_build_segments(manifest, out, true);
  const NetworkConfig cfg = network_for(manifest);
  TrainConfig tcfg = manifest.train;
  tcfg.validate();

  const TrainResult result = train(set, cfg, tcfg, selection_rule_for(manifest), &out);

  save_checkpoint(cli::checkpoint_path(manifest), cfg, result.params);
  // runlog.jsonl is the deterministic artifact; wall-clock times go next to it
  save_runlog(cli::runlog_path(manifest), result.log, /*include_timing=*/false);
  save_runlog(cli::timing_path(manifest), result.log, /*include_timing=*/true);
  out << "wrote checkpoint " << cli::checkpoint_path(manifest) << "\n";
  out << "wrote run log " << cli::runlog_path(manifest) << "\n";
  out << "best epoch " << result.best_epoch << ", selected epoch " << result.selected_epoch
      << "\n";
  if (!set.test.empty()) {
    const EvalReport report = evaluate(result.params, cfg, set.test);
    out << format_report(report, set.label_names, parse_report_format(manifest.format));
  }
  return kExitOk;
}

/// evaluate: checkpoint + cache -> per-class table on the chosen split.
inline int cmd_evaluate(const RunManifest& manifest, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(cli::checkpoint_path(manifest));
  const std::string cache = cli::default_cache_path(manifest);
  const SegmentSet set = load_segment_cache(cache);

  const std::vector<Segment>& segments =
      manifest.eval_split == "train" ? set.train : set.test;
  if (segments.empty()) throw ConfigError("evaluate: split '" + manifest.eval_split + "' is empty");
  const Tensor& image = segments.front().image;
  if (ckpt.config.input_shape.rows != image.extent(1) ||
      ckpt.config.input_shape.cols != image.extent(2))
    throw ConfigError("checkpoint expects input " +
                      extents_to_string(ckpt.config.input_shape.extents()) +
                      " but cache holds images [1," + std::to_string(image.extent(1)) + "," +
                      std::to_string(image.extent(2)) + "]");

  const EvalReport report = evaluate(ckpt.params, ckpt.config, segments);
  out << format_report(report, set.label_names, parse_report_format(manifest.format));
  return kExitOk;
}

/// shapes: layer-by-layer output extents; all three presets when none named.
inline int cmd_shapes(const std::string& preset_name, std::ostream& out) {
  const std::vector<std::string> names =
      preset_name.empty() ? std::vector<std::string>{"v1_split", "v1_individual", "v2"}
                          : std::vector<std::string>{preset_name};
  for (const std::string& name : names) cli::print_shape_table(preset(name), name, out);
  return kExitOk;
}

/// Maps library errors to the documented exit codes.
template <typename Fn>
int run_command(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUserError;
  }
}

}  // namespace dcnn
