#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "event_core.hpp"

namespace evuav {

// Positive iff confidence > threshold.
std::vector<std::uint8_t> threshold_predictions(std::span<const double> conf, double threshold = 0.5);

struct SegmentationScores {
  double iou = 1.0;
  double acc = 1.0;  // recall over target events
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// IoU = TP / (TP + FP + FN); ACC = TP / (TP + FN). Both are 1 when their
// denominator is empty.
SegmentationScores segmentation_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

struct DetectionConfig {
  double match_radius_px = 5.0;
  double match_window_ms = 50.0;
  std::int64_t voxel_t_us = 1000;
  // Volume length for the false-alarm denominator; defaults to the span of
  // the stream's timestamps.
  std::optional<std::uint64_t> duration_us;
};

struct DetectionScores {
  double pd = 1.0;
  double fa = 0.0;
  std::size_t instances = 0;
  std::size_t detected = 0;
  std::size_t false_voxels = 0;
  std::uint64_t volume = 0;
};

// Target instances are 8-connected pixel components of gt-positive events
// within each match_window slice; predicted clusters are built the same way
// from predicted-positive events. An instance is detected when a predicted
// cluster centroid in the same slice lies within match_radius of its centroid.
// Fa counts predicted-positive (1 px x 1 px x voxel_t) voxels holding no
// gt-positive event, over the W x H x T voxel volume.
DetectionScores detection_metrics(std::span<const std::uint8_t> pred, const EventStream& gt,
                                  const DetectionConfig& cfg = {});

struct SequenceReport {
  std::string name;
  SegmentationScores seg;
  DetectionScores det;
};

struct DetectionReport {
  double iou = 1.0, acc = 1.0, pd = 1.0, fa = 0.0;
  std::vector<SequenceReport> sequences;
};

// Pools counts over all sequences before forming the ratios.
DetectionReport aggregate_report(std::vector<SequenceReport> sequences);

// "metric<TAB>value" lines for iou, acc, pd, fa.
std::string format_report(const DetectionReport& report);

}  // namespace evuav
