#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "dcnn/adam.hpp"
#include "dcnn/dataset.hpp"
#include "dcnn/errors.hpp"
#include "dcnn/metrics.hpp"
#include "dcnn/model.hpp"
#include "dcnn/ops.hpp"
#include "dcnn/rng.hpp"

namespace dcnn {

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;  // train_xent + l2 at end of epoch
  double train_xent = 0.0;
  double l2 = 0.0;
  double train_acc = 0.0;
  EvalReport test;
  double wall_s = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
};

enum class SelectionRule { best_weighted_f1, final_epoch };

struct TrainResult {
  ModelParams params;
  RunLog log;
  int best_epoch = 0;      // epoch with the highest test weighted F1
  int selected_epoch = 0;  // epoch whose parameters are returned
};

namespace detail {

inline int argmax_lowest(const double* row, std::int64_t n) {
  int best = 0;
  for (std::int64_t k = 1; k < n; ++k)
    if (row[k] > row[best]) best = static_cast<int>(k);
  return best;
}

inline Tensor batch_images(const std::vector<const Segment*>& segments) {
  const Tensor& first = segments.front()->image;
  const std::int64_t rows = first.extent(1), cols = first.extent(2);
  Tensor batch({static_cast<std::int64_t>(segments.size()), 1, rows, cols});
  double* dst = batch.data();
  for (const Segment* segment : segments) {
    if (segment->image.extent(1) != rows || segment->image.extent(2) != cols)
      throw ShapeError("batch: segments disagree on image shape");
    std::copy(segment->image.data(), segment->image.data() + rows * cols, dst);
    dst += rows * cols;
  }
  return batch;
}

inline std::vector<const Tensor*> weight_pointers(const ModelParams& params) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(params.weights.size());
  for (const Tensor& w : params.weights) ptrs.push_back(&w);
  return ptrs;
}

}  // namespace detail

/// Argmax classification of every segment; ties break toward the lowest
/// class index. Segments are processed in order, in batches.
inline EvalReport evaluate(const ModelParams& params, const NetworkConfig& cfg,
                           const std::vector<Segment>& segments,
                           std::int64_t eval_batch = 256) {
  if (segments.empty()) throw ConfigError("evaluate: no segments given");
  std::vector<std::vector<std::int64_t>> confusion(
      static_cast<std::size_t>(cfg.num_classes),
      std::vector<std::int64_t>(static_cast<std::size_t>(cfg.num_classes), 0));
  std::vector<const Segment*> chunk;
  for (std::size_t start = 0; start < segments.size(); start += static_cast<std::size_t>(eval_batch)) {
    const std::size_t stop = std::min(segments.size(), start + static_cast<std::size_t>(eval_batch));
    chunk.clear();
    for (std::size_t i = start; i < stop; ++i) chunk.push_back(&segments[i]);
    const Tensor logits = forward(params, cfg, detail::batch_images(chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const int predicted =
          detail::argmax_lowest(logits.data() + static_cast<std::int64_t>(i) * cfg.num_classes,
                                cfg.num_classes);
      confusion[static_cast<std::size_t>(chunk[i]->label)][static_cast<std::size_t>(predicted)]++;
    }
  }
  return report_from_confusion(std::move(confusion));
}

/// Final per-class table for a finished run: the last epoch's test report in
/// label order plus aggregates. An empty log yields just the header.
inline std::string report(const RunLog& log, const std::vector<std::string>& labels,
                          ReportFormat format) {
  if (log.epochs.empty() || log.epochs.back().test.total == 0) {
    EvalReport empty;
    empty.confusion.assign(labels.size(), std::vector<std::int64_t>(labels.size(), 0));
    empty.per_class.resize(labels.size());
    const std::string text = format_report(empty, labels, format);
    const std::size_t first_line = text.find('\n');
    return first_line == std::string::npos ? text : text.substr(0, first_line + 1);
  }
  return format_report(log.epochs.back().test, labels, format);
}

/// Mini-batch training: per epoch a seed-and-epoch-keyed shuffle, batches of
/// cfg.batch_size (short final batch kept), cross-entropy plus L2, one Adam
/// step per parameter tensor, then a test-set evaluation. The per-epoch
/// train statistics are accumulated per sample and reduced in dataset order,
/// so they do not depend on the shuffle.
inline TrainResult train(const SegmentSet& set, const NetworkConfig& cfg, const TrainConfig& tcfg,
                         SelectionRule rule = SelectionRule::best_weighted_f1,
                         std::ostream* progress = nullptr) {
  tcfg.validate();
  if (set.train.empty()) throw ConfigError("train: training set is empty");
  if (static_cast<std::int64_t>(set.label_names.size()) != cfg.num_classes &&
      !set.label_names.empty())
    throw ConfigError("train: label count does not match num_classes");

  TrainResult result;
  result.params = init_params(cfg, tcfg.seed);
  ModelParams& params = result.params;

  std::vector<Tensor> best_weights, best_biases;
  double best_f1 = -1.0;

  const std::size_t n_train = set.train.size();
  std::vector<std::size_t> order(n_train);
  std::vector<double> sample_xent(n_train);
  std::vector<unsigned char> sample_hit(n_train);
  std::vector<const Segment*> chunk;
  std::vector<int> labels;
  ForwardCache cache;

  for (std::int64_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_stream(tcfg.seed, 0x0E50000ULL + static_cast<std::uint64_t>(epoch));
    deterministic_shuffle(order, shuffle_rng);

    for (std::size_t start = 0; start < n_train;
         start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t stop =
          std::min(n_train, start + static_cast<std::size_t>(tcfg.batch_size));
      chunk.clear();
      labels.clear();
      for (std::size_t i = start; i < stop; ++i) {
        chunk.push_back(&set.train[order[i]]);
        labels.push_back(set.train[order[i]].label);
      }
      const Tensor batch = detail::batch_images(chunk);
      const Tensor logits = forward(params, cfg, batch, &cache);
      const SoftmaxXent sx = softmax_xent_forward(logits, labels);
      if (!std::isfinite(sx.loss))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(start / static_cast<std::size_t>(tcfg.batch_size)));
      for (std::size_t i = start; i < stop; ++i) {
        sample_xent[order[i]] = sx.per_sample[i - start];
        const int predicted = detail::argmax_lowest(
            logits.data() + static_cast<std::int64_t>(i - start) * cfg.num_classes,
            cfg.num_classes);
        sample_hit[order[i]] = predicted == labels[i - start] ? 1 : 0;
      }
      const Tensor d_logits = softmax_xent_backward(sx.probs, labels);
      const ModelGradients grads = backward(params, cfg, cache, d_logits, tcfg.l2_lambda);
      for (std::size_t i = 0; i < params.weights.size(); ++i) {
        adam_step(params.weights[i], grads.weights[i], params.opt_weights[i], tcfg);
        adam_step(params.biases[i], grads.biases[i], params.opt_biases[i], tcfg);
      }
    }

    EpochRecord record;
    record.epoch = static_cast<int>(epoch);
    double xent_sum = 0.0;
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < n_train; ++i) {
      xent_sum += sample_xent[i];
      hits += sample_hit[i];
    }
    record.train_xent = xent_sum / static_cast<double>(n_train);
    record.l2 = tcfg.l2_lambda > 0.0
                    ? l2_penalty(detail::weight_pointers(params), tcfg.l2_lambda).loss
                    : 0.0;
    record.train_loss = record.train_xent + record.l2;
    record.train_acc = static_cast<double>(hits) / static_cast<double>(n_train);
    if (!set.test.empty()) {
      record.test = evaluate(params, cfg, set.test);
      if (record.test.weighted_f1 > best_f1) {
        best_f1 = record.test.weighted_f1;
        result.best_epoch = static_cast<int>(epoch);
        best_weights = params.weights;
        best_biases = params.biases;
      }
    }
    record.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(std::move(record));

    if (progress) {
      const EpochRecord& r = result.log.epochs.back();
      (*progress) << "epoch " << r.epoch << "/" << tcfg.epochs << "  loss " << r.train_loss
                  << "  train_acc " << r.train_acc;
      if (!set.test.empty())
        (*progress) << "  test_acc " << r.test.accuracy << "  test_wf1 " << r.test.weighted_f1;
      (*progress) << "  (" << r.wall_s << "s)\n";
    }
  }

  result.selected_epoch = static_cast<int>(tcfg.epochs);
  if (rule == SelectionRule::best_weighted_f1 && result.best_epoch > 0) {
    params.weights = std::move(best_weights);
    params.biases = std::move(best_biases);
    result.selected_epoch = result.best_epoch;
  }
  return result;
}

}  // namespace dcnn
