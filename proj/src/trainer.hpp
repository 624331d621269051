#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "config.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "optimizer.hpp"
#include "segnet.hpp"

namespace evuav {

enum class LossKind { Bce, Stc };

struct TrainConfig {
  int epochs = 50;
  double lr_start = 1e-2;
  double lr_end = 1e-3;
  AdamConfig adam;
  LossKind loss = LossKind::Stc;
  STCConfig stc;
  std::uint64_t seed = 0;
  std::uint64_t window_us = 8'000'000;  // streams are cut into windows of this length
  double threshold = 0.5;

  void check() const;
  double lr_at(int epoch) const { return linear_lr(lr_start, lr_end, epoch, epochs); }

  static TrainConfig from_config(const KeyValueConfig& kv);
  void to_config(KeyValueConfig& kv) const;
};

const std::vector<std::string>& train_config_keys();

struct EpochLog {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double lr = 0.0;
  double val_iou = 0.0;
};

// "epoch<TAB>loss<TAB>lr<TAB>val_iou"
std::string format_epoch(const EpochLog& e);

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_iou = -1.0;
};

// Per-event confidences for a whole stream: windows of `window_us` starting at
// the first event are voxelized, run through the network, and broadcast back.
std::vector<double> predict_stream(const SegNet& net, const EventStream& stream, std::uint64_t window_us);

// Seeded shuffle each epoch, one Adam step per window. Validation IoU is
// measured after every epoch (on the training set when `val` is empty) and
// `net` ends holding the best-validation parameters.
TrainResult train(SegNet& net, const std::vector<EventStream>& train_set, const std::vector<EventStream>& val,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

// Segmentation + detection scores for labeled streams given per-event confidences.
DetectionReport evaluate(const std::vector<EventStream>& gt, const std::vector<std::vector<double>>& conf,
                         double threshold, const DetectionConfig& det);

}  // namespace evuav
