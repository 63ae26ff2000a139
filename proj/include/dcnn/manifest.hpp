#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dcnn/adam.hpp"
#include "dcnn/dataset.hpp"
#include "dcnn/errors.hpp"
#include "dcnn/model.hpp"
#include "dcnn/trainer.hpp"

namespace dcnn {

/// Everything one run needs, collected from a flat `key = value` config file
/// with command-line overrides on top. Unset fields fall back to the dataset
/// kind's published defaults.
struct RunManifest {
  std::string dataset = "custom";  // v1_split | v1_individual | v2 | custom
  std::string raw_path;
  std::string cache_path;
  std::string labels = "v1";  // label set for custom datasets
  std::int64_t window = 100;
  std::int64_t step = 100;
  std::string split_mode = "random";  // random | by_user
  double train_frac = 0.8;
  std::vector<int> train_users;
  std::vector<int> test_users;
  std::int64_t by_user_train_count = 28;  // auto-partition when lists are empty
  std::int64_t gap_ns = 0;
  std::string normalize = "none";  // none | standardize

  std::string preset_name;
  std::string layers_text;  // explicit stack, overrides preset

  TrainConfig train;
  std::string select = "best";  // best | final
  std::string eval_split = "test";

  std::string out_dir = "runs/run";
  std::string format = "plain";
};

namespace detail {

inline std::vector<int> parse_user_list(const std::string& text) {
  std::vector<int> users;
  std::string token;
  std::istringstream is(text);
  while (std::getline(is, token, ',')) {
    const std::string_view sv = trim(token);
    if (sv.empty()) continue;
    const std::size_t dash = sv.find('-', 1);  // allow negative ids, not that WISDM has them
    std::int64_t lo = 0, hi = 0;
    if (dash == std::string_view::npos) {
      if (!parse_i64(sv, lo)) throw ConfigError("bad user id '" + std::string(sv) + "'");
      hi = lo;
    } else {
      if (!parse_i64(sv.substr(0, dash), lo) || !parse_i64(sv.substr(dash + 1), hi) || hi < lo)
        throw ConfigError("bad user range '" + std::string(sv) + "'");
    }
    for (std::int64_t u = lo; u <= hi; ++u) users.push_back(static_cast<int>(u));
  }
  return users;
}

inline std::int64_t to_i64(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  if (!parse_i64(trim(value), v)) throw ConfigError("key '" + key + "': expected integer, got '" + value + "'");
  return v;
}

inline double to_f64(const std::string& key, const std::string& value) {
  double v = 0;
  if (!parse_f64(trim(value), v)) throw ConfigError("key '" + key + "': expected number, got '" + value + "'");
  return v;
}

}  // namespace detail

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// `key = value` lines; '#' starts a comment; blank lines ignored.
inline KeyValues parse_kv_text(const std::string& text) {
  KeyValues pairs;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    const std::size_t eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(detail::trim(sv.substr(0, eq)));
    const std::string value(detail::trim(sv.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    pairs.emplace_back(key, value);
  }
  return pairs;
}

inline KeyValues parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_kv_text(text);
}

/// Published defaults per dataset kind: window/step/split rules and the
/// matching preset and L2 weight.
inline void apply_kind_defaults(RunManifest& manifest) {
  if (manifest.dataset == "v1_split") {
    manifest.labels = "v1";
    manifest.window = 100;
    manifest.step = 100;
    manifest.split_mode = "random";
    manifest.train_frac = 0.8;
    manifest.preset_name = "v1_split";
    manifest.train.l2_lambda = 1e-3;
  } else if (manifest.dataset == "v1_individual") {
    manifest.labels = "v1";
    manifest.window = 200;
    manifest.step = 20;
    manifest.split_mode = "by_user";
    manifest.by_user_train_count = 28;
    manifest.preset_name = "v1_individual";
    manifest.train.l2_lambda = 1e-5;
  } else if (manifest.dataset == "v2") {
    manifest.labels = "v2";
    manifest.window = 200;
    manifest.step = 200;
    manifest.split_mode = "random";
    manifest.train_frac = 0.8;
    manifest.preset_name = "v2";
    manifest.train.l2_lambda = 1e-5;
  } else if (manifest.dataset != "custom") {
    throw ConfigError("unknown dataset kind '" + manifest.dataset +
                      "' (expected v1_split, v1_individual, v2 or custom)");
  }
}

inline void apply_key(RunManifest& manifest, const std::string& key, const std::string& value) {
  if (key == "dataset") return;  // handled up front
  if (key == "raw") manifest.raw_path = value;
  else if (key == "cache") manifest.cache_path = value;
  else if (key == "labels") manifest.labels = value;
  else if (key == "window") manifest.window = detail::to_i64(key, value);
  else if (key == "step") manifest.step = detail::to_i64(key, value);
  else if (key == "split") manifest.split_mode = value;
  else if (key == "train_frac") manifest.train_frac = detail::to_f64(key, value);
  else if (key == "train_users") manifest.train_users = detail::parse_user_list(value);
  else if (key == "test_users") manifest.test_users = detail::parse_user_list(value);
  else if (key == "by_user_train_count") manifest.by_user_train_count = detail::to_i64(key, value);
  else if (key == "gap_ns") manifest.gap_ns = detail::to_i64(key, value);
  else if (key == "normalize") manifest.normalize = value;
  else if (key == "preset") manifest.preset_name = value;
  else if (key == "layers") manifest.layers_text = value;
  else if (key == "lr") manifest.train.learning_rate = detail::to_f64(key, value);
  else if (key == "beta1") manifest.train.beta1 = detail::to_f64(key, value);
  else if (key == "beta2") manifest.train.beta2 = detail::to_f64(key, value);
  else if (key == "epsilon") manifest.train.epsilon = detail::to_f64(key, value);
  else if (key == "batch") manifest.train.batch_size = detail::to_i64(key, value);
  else if (key == "l2") manifest.train.l2_lambda = detail::to_f64(key, value);
  else if (key == "epochs") manifest.train.epochs = detail::to_i64(key, value);
  else if (key == "seed") manifest.train.seed = static_cast<std::uint64_t>(detail::to_i64(key, value));
  else if (key == "select") manifest.select = value;
  else if (key == "eval_split") manifest.eval_split = value;
  else if (key == "out") manifest.out_dir = value;
  else if (key == "format") manifest.format = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

inline RunManifest manifest_from_pairs(const KeyValues& pairs) {
  RunManifest manifest;
  for (const auto& [key, value] : pairs)
    if (key == "dataset") manifest.dataset = value;
  apply_kind_defaults(manifest);
  for (const auto& [key, value] : pairs) apply_key(manifest, key, value);
  return manifest;
}

inline LabelSet label_set_for(const RunManifest& manifest) {
  if (manifest.labels == "v1") return v1_labels();
  if (manifest.labels == "v2") return v2_labels();
  throw ConfigError("unknown label set '" + manifest.labels + "' (expected v1 or v2)");
}

inline SegmentSpec segment_spec_for(const RunManifest& manifest) {
  SegmentSpec spec;
  spec.window = manifest.window;
  spec.step = manifest.step;
  spec.gap_ns = manifest.gap_ns;
  spec.train_frac = manifest.train_frac;
  spec.train_users = manifest.train_users;
  spec.test_users = manifest.test_users;
  if (manifest.split_mode == "random") spec.mode = SplitMode::random_fraction;
  else if (manifest.split_mode == "by_user") spec.mode = SplitMode::by_user;
  else throw ConfigError("unknown split mode '" + manifest.split_mode + "'");
  return spec;
}

inline NormalizeMode normalize_mode_for(const RunManifest& manifest) {
  if (manifest.normalize == "none") return NormalizeMode::none;
  if (manifest.normalize == "standardize") return NormalizeMode::per_channel_standardize;
  throw ConfigError("unknown normalize mode '" + manifest.normalize + "'");
}

/// Compact stack notation: `dl(fr,fc,filters,dr,dc) sl(fc,filters,sc) fl(units)`,
/// whitespace separated. Every conv layer and every dense layer except the
/// last gets a ReLU.
inline std::vector<LayerSpec> parse_layers_text(const std::string& text) {
  std::vector<LayerSpec> layers;
  std::istringstream is(text);
  std::string token;
  while (is >> token) {
    const std::size_t open = token.find('(');
    if (open == std::string::npos || token.back() != ')')
      throw ConfigError("bad layer token '" + token + "'");
    const std::string kind = token.substr(0, open);
    std::vector<std::int64_t> args;
    std::string arg;
    std::istringstream argstream(token.substr(open + 1, token.size() - open - 2));
    while (std::getline(argstream, arg, ',')) {
      std::int64_t v = 0;
      if (!detail::parse_i64(detail::trim(arg), v))
        throw ConfigError("bad layer argument in '" + token + "'");
      args.push_back(v);
    }
    if (kind == "dl" && args.size() == 5) {
      layers.push_back(dilated_layer(args[0], args[1], args[2], args[3], args[4]));
    } else if (kind == "sl" && args.size() == 3) {
      layers.push_back(strided_layer(args[0], args[1], args[2]));
    } else if (kind == "fl" && args.size() == 1) {
      layers.push_back(dense_layer(args[0], true));
    } else {
      throw ConfigError("bad layer token '" + token +
                        "' (expected dl(fr,fc,n,dr,dc), sl(fc,n,sc) or fl(units))");
    }
  }
  if (layers.empty()) throw ConfigError("layers: empty stack");
  if (layers.back().kind != LayerKind::dense)
    throw ConfigError("layers: final layer must be fl(num_classes)");
  layers.back().relu = false;
  return layers;
}

inline NetworkConfig network_for(const RunManifest& manifest) {
  const LabelSet labels = label_set_for(manifest);
  if (!manifest.layers_text.empty()) {
    NetworkConfig cfg;
    cfg.input_shape = Shape4{1, 1, 3, manifest.window};
    cfg.layers = parse_layers_text(manifest.layers_text);
    cfg.num_classes = static_cast<std::int64_t>(labels.names.size());
    validate_network(cfg);
    return cfg;
  }
  if (manifest.preset_name.empty())
    throw ConfigError("no network given: set preset or layers");
  NetworkConfig cfg = preset(manifest.preset_name);
  if (cfg.input_shape.cols != manifest.window)
    throw ConfigError("preset " + manifest.preset_name + " expects window " +
                      std::to_string(cfg.input_shape.cols) + ", manifest has " +
                      std::to_string(manifest.window));
  return cfg;
}

inline SelectionRule selection_rule_for(const RunManifest& manifest) {
  if (manifest.select == "best") return SelectionRule::best_weighted_f1;
  if (manifest.select == "final") return SelectionRule::final_epoch;
  throw ConfigError("unknown select rule '" + manifest.select + "' (expected best or final)");
}

}  // namespace dcnn
