#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "config.hpp"
#include "error.hpp"

namespace evuav {

namespace {

struct Component {
  double cx = 0.0, cy = 0.0;
};

std::uint64_t pack(std::uint64_t slice, std::uint32_t x, std::uint32_t y) { return (slice << 32) | (x << 16) | y; }

// 8-connected components of the occupied pixels of each slice; returns the
// centroids grouped by slice.
std::unordered_map<std::uint64_t, std::vector<Component>> slice_components(const EventStream& s,
                                                                           std::span<const std::uint8_t> mask,
                                                                           std::uint64_t window_us) {
  std::vector<std::uint64_t> cells;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!mask[i]) continue;
    const Event& e = s.events[i];
    cells.push_back(pack(e.t / window_us, e.x, e.y));
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  std::unordered_set<std::uint64_t> open(cells.begin(), cells.end());

  std::unordered_map<std::uint64_t, std::vector<Component>> out;
  std::vector<std::uint64_t> stack;
  for (const std::uint64_t seed : cells) {
    if (!open.erase(seed)) continue;
    const std::uint64_t slice = seed >> 32;
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::uint64_t c = stack.back();
      stack.pop_back();
      const auto x = static_cast<std::int64_t>((c >> 16) & 0xffff), y = static_cast<std::int64_t>(c & 0xffff);
      sx += static_cast<double>(x);
      sy += static_cast<double>(y);
      ++n;
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          const std::int64_t nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx > 0xffff || ny > 0xffff) continue;
          const std::uint64_t k = pack(slice, static_cast<std::uint32_t>(nx), static_cast<std::uint32_t>(ny));
          if (open.erase(k)) stack.push_back(k);
        }
      }
    }
    out[slice].push_back({sx / static_cast<double>(n), sy / static_cast<double>(n)});
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> threshold_predictions(std::span<const double> conf, double threshold) {
  std::vector<std::uint8_t> out(conf.size());
  for (std::size_t i = 0; i < conf.size(); ++i) out[i] = conf[i] > threshold ? 1 : 0;
  return out;
}

SegmentationScores segmentation_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  require(pred.size() == gt.size(), "segmentation_metrics: prediction and ground truth differ in length");
  SegmentationScores s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && gt[i]) ++s.tp;
    else if (pred[i]) ++s.fp;
    else if (gt[i]) ++s.fn;
    else ++s.tn;
  }
  const std::size_t uni = s.tp + s.fp + s.fn;
  s.iou = uni ? static_cast<double>(s.tp) / static_cast<double>(uni) : 1.0;
  s.acc = (s.tp + s.fn) ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn) : 1.0;
  return s;
}

DetectionScores detection_metrics(std::span<const std::uint8_t> pred, const EventStream& gt,
                                  const DetectionConfig& cfg) {
  require(gt.has_labels(), "detection_metrics: ground-truth stream has no labels");
  require(pred.size() == gt.size(), "detection_metrics: one prediction per event expected");
  require(cfg.match_radius_px >= 0.0 && cfg.match_window_ms > 0.0 && cfg.voxel_t_us > 0,
          "detection_metrics: radius must be >= 0, window and voxel length > 0");
  const std::span<const std::uint8_t> labels = *gt.labels;
  DetectionScores d;

  const auto window_us = static_cast<std::uint64_t>(std::llround(cfg.match_window_ms * 1000.0));
  require(window_us > 0, "detection_metrics: match window below 1 us");
  const auto gt_parts = slice_components(gt, labels, window_us);
  const auto pred_parts = slice_components(gt, pred, window_us);
  const double r2 = cfg.match_radius_px * cfg.match_radius_px;
  for (const auto& [slice, instances] : gt_parts) {
    const auto it = pred_parts.find(slice);
    for (const Component& inst : instances) {
      ++d.instances;
      if (it == pred_parts.end()) continue;
      for (const Component& c : it->second) {
        const double dx = c.cx - inst.cx, dy = c.cy - inst.cy;
        if (dx * dx + dy * dy <= r2) {
          ++d.detected;
          break;
        }
      }
    }
  }
  d.pd = d.instances ? static_cast<double>(d.detected) / static_cast<double>(d.instances) : 1.0;

  const std::uint64_t t0 = gt.empty() ? 0 : gt.events.front().t;
  const auto vt = static_cast<std::uint64_t>(cfg.voxel_t_us);
  std::unordered_set<std::uint64_t> gt_voxels;
  std::vector<std::uint64_t> pred_voxels;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Event& e = gt.events[i];
    const std::uint64_t key = pack((e.t - t0) / vt, e.x, e.y);
    if (labels[i]) gt_voxels.insert(key);
    if (pred[i]) pred_voxels.push_back(key);
  }
  std::sort(pred_voxels.begin(), pred_voxels.end());
  pred_voxels.erase(std::unique(pred_voxels.begin(), pred_voxels.end()), pred_voxels.end());
  for (auto k : pred_voxels) d.false_voxels += gt_voxels.count(k) == 0;

  std::uint64_t nt = 0;
  if (cfg.duration_us) {
    nt = (*cfg.duration_us + vt - 1) / vt;
  } else if (!gt.empty()) {
    nt = (gt.events.back().t - t0) / vt + 1;
  }
  d.volume = static_cast<std::uint64_t>(gt.width) * static_cast<std::uint64_t>(gt.height) * nt;
  d.fa = d.volume ? static_cast<double>(d.false_voxels) / static_cast<double>(d.volume) : 0.0;
  return d;
}

DetectionReport aggregate_report(std::vector<SequenceReport> sequences) {
  DetectionReport r;
  std::size_t tp = 0, fp = 0, fn = 0, inst = 0, det = 0, fv = 0;
  std::uint64_t vol = 0;
  for (const auto& s : sequences) {
    tp += s.seg.tp;
    fp += s.seg.fp;
    fn += s.seg.fn;
    inst += s.det.instances;
    det += s.det.detected;
    fv += s.det.false_voxels;
    vol += s.det.volume;
  }
  r.iou = (tp + fp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fp + fn) : 1.0;
  r.acc = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
  r.pd = inst ? static_cast<double>(det) / static_cast<double>(inst) : 1.0;
  r.fa = vol ? static_cast<double>(fv) / static_cast<double>(vol) : 0.0;
  r.sequences = std::move(sequences);
  return r;
}

std::string format_report(const DetectionReport& r) {
  return "iou\t" + format_double(r.iou) + "\nacc\t" + format_double(r.acc) + "\npd\t" + format_double(r.pd) +
         "\nfa\t" + format_double(r.fa) + "\n";
}

}  // namespace evuav
