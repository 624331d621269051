#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "error.hpp"

namespace evuav {

void TrainConfig::check() const {
  require(epochs >= 1, "TrainConfig: epochs must be >= 1");
  require(lr_start >= lr_end && lr_end > 0.0, "TrainConfig: need lr_start >= lr_end > 0");
  require(window_us > 0, "TrainConfig: window must be positive");
  stc.check();
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "train.epochs",    "train.lr_start",          "train.lr_end",   "train.beta1",     "train.beta2",
      "train.eps",       "train.loss",              "train.stc_k",    "train.stc_tau",   "train.stc_gamma",
      "train.stc_center", "train.stc_detach",       "train.window_us", "train.threshold"};
  return keys;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) {
  TrainConfig c;
  c.epochs = static_cast<int>(kv.get_int("train.epochs", c.epochs));
  c.lr_start = kv.get_double("train.lr_start", c.lr_start);
  c.lr_end = kv.get_double("train.lr_end", c.lr_end);
  c.adam.beta1 = kv.get_double("train.beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("train.beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("train.eps", c.adam.eps);
  const std::string loss = kv.get_string("train.loss", "stc");
  if (loss == "bce") c.loss = LossKind::Bce;
  else if (loss == "stc") c.loss = LossKind::Stc;
  else fail(ErrorKind::Validation, "train.loss must be 'bce' or 'stc', got '" + loss + "'");
  c.stc.k = static_cast<int>(kv.get_int("train.stc_k", c.stc.k));
  c.stc.tau = static_cast<int>(kv.get_int("train.stc_tau", c.stc.tau));
  c.stc.gamma = kv.get_double("train.stc_gamma", c.stc.gamma);
  c.stc.include_center = kv.get_bool("train.stc_center", c.stc.include_center);
  c.stc.detach_weights = kv.get_bool("train.stc_detach", c.stc.detach_weights);
  c.window_us = static_cast<std::uint64_t>(kv.get_int("train.window_us", static_cast<std::int64_t>(c.window_us)));
  c.threshold = kv.get_double("train.threshold", c.threshold);
  c.seed = kv.get_u64("seed", c.seed);
  return c;
}

void TrainConfig::to_config(KeyValueConfig& kv) const {
  kv.set("train.epochs", std::to_string(epochs));
  kv.set("train.lr_start", format_double(lr_start));
  kv.set("train.lr_end", format_double(lr_end));
  kv.set("train.beta1", format_double(adam.beta1));
  kv.set("train.beta2", format_double(adam.beta2));
  kv.set("train.eps", format_double(adam.eps));
  kv.set("train.loss", loss == LossKind::Bce ? "bce" : "stc");
  kv.set("train.stc_k", std::to_string(stc.k));
  kv.set("train.stc_tau", std::to_string(stc.tau));
  kv.set("train.stc_gamma", format_double(stc.gamma));
  kv.set("train.stc_center", stc.include_center ? "true" : "false");
  kv.set("train.stc_detach", stc.detach_weights ? "true" : "false");
  kv.set("train.window_us", std::to_string(window_us));
  kv.set("train.threshold", format_double(threshold));
  kv.set("seed", std::to_string(seed));
}

std::string format_epoch(const EpochLog& e) {
  return std::to_string(e.epoch) + "\t" + format_double(e.loss) + "\t" + format_double(e.lr) + "\t" +
         format_double(e.val_iou);
}

namespace {

struct Sample {
  std::size_t sequence = 0;
  std::size_t window = 0;
  SparseGrid grid;
  std::vector<std::uint8_t> targets;
};

// Non-empty windows [t0 + k W, t0 + (k + 1) W) of a stream.
std::vector<std::pair<std::uint64_t, EventStream>> windows_of(const EventStream& s, std::uint64_t window_us) {
  std::vector<std::pair<std::uint64_t, EventStream>> out;
  if (s.empty()) return out;
  const std::uint64_t t0 = s.events.front().t, t_last = s.events.back().t;
  for (std::uint64_t start = t0; start <= t_last; start += window_us) {
    EventStream w = slice_window(s, start, start + window_us);
    if (!w.empty()) out.emplace_back(start, std::move(w));
  }
  return out;
}

TimeAxis window_axis(std::uint64_t start, std::uint64_t window_us, const VoxelSize& vs) {
  return {start, static_cast<std::int64_t>((window_us + vs.t - 1) / vs.t)};
}

}  // namespace

std::vector<double> predict_stream(const SegNet& net, const EventStream& stream, std::uint64_t window_us) {
  std::vector<double> out;
  out.reserve(stream.size());
  const VoxelSize& vs = net.config().voxel_size;
  for (const auto& [start, w] : windows_of(stream, window_us)) {
    const SparseGrid grid = voxelize(w, vs, window_axis(start, window_us, vs));
    const auto conf = net.forward(grid);
    const auto per_event = scatter_predictions(grid, conf, w);
    out.insert(out.end(), per_event.begin(), per_event.end());
  }
  return out;
}

DetectionReport evaluate(const std::vector<EventStream>& gt, const std::vector<std::vector<double>>& conf,
                         double threshold, const DetectionConfig& det) {
  require(gt.size() == conf.size(), "evaluate: one confidence vector per sequence expected");
  std::vector<SequenceReport> seqs;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    require(gt[i].has_labels(), "evaluate: sequence " + std::to_string(i) + " has no labels");
    const auto pred = threshold_predictions(conf[i], threshold);
    SequenceReport r;
    r.name = "seq" + std::to_string(i);
    r.seg = segmentation_metrics(pred, *gt[i].labels);
    r.det = detection_metrics(pred, gt[i], det);
    seqs.push_back(std::move(r));
  }
  return aggregate_report(std::move(seqs));
}

TrainResult train(SegNet& net, const std::vector<EventStream>& train_set, const std::vector<EventStream>& val,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.check();
  const VoxelSize& vs = net.config().voxel_size;
  std::vector<Sample> samples;
  for (std::size_t s = 0; s < train_set.size(); ++s) {
    require(train_set[s].has_labels(), "train: sequence " + std::to_string(s) + " has no labels");
    std::size_t k = 0;
    for (const auto& [start, w] : windows_of(train_set[s], cfg.window_us)) {
      Sample smp;
      smp.sequence = s;
      smp.window = k++;
      smp.grid = voxelize(w, vs, window_axis(start, cfg.window_us, vs));
      smp.targets = lift_labels(smp.grid, w).labels;
      samples.push_back(std::move(smp));
    }
  }
  require(!samples.empty(), "train: no events in the training set");
  const std::vector<EventStream>& val_set = val.empty() ? train_set : val;

  std::mt19937_64 rng(cfg.seed);
  Adam adam(cfg.adam);
  TrainResult result;
  std::vector<LayerParams> best = net.params();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr_at(epoch);
    double total = 0.0;
    for (const std::size_t idx : order) {
      Sample& smp = samples[idx];
      SegNetPass pass;
      const auto conf = net.forward(smp.grid, &pass);
      const LossResult loss = cfg.loss == LossKind::Bce ? bce_loss_mean(conf, smp.targets)
                                                        : stc_loss_mean(smp.grid, conf, smp.targets, cfg.stc);
      if (!std::isfinite(loss.value)) {
        fail(ErrorKind::Runtime, "train: non-finite loss on sequence " + std::to_string(smp.sequence) + " window " +
                                     std::to_string(smp.window) + " (epoch " + std::to_string(epoch + 1) + ", " +
                                     std::to_string(smp.grid.size()) + " active voxels)");
      }
      net.backward(pass, loss.grad);
      adam.step(net.params(), lr);
      total += loss.value;
    }

    std::vector<std::vector<double>> conf;
    for (const auto& s : val_set) conf.push_back(predict_stream(net, s, cfg.window_us));
    const DetectionReport rep = evaluate(val_set, conf, cfg.threshold, {});
    EpochLog e{epoch + 1, total / static_cast<double>(samples.size()), lr, rep.iou};
    result.log.push_back(e);
    if (e.val_iou > result.best_val_iou) {
      result.best_val_iou = e.val_iou;
      result.best_epoch = e.epoch;
      best = net.params();
    }
    if (on_epoch) on_epoch(e);
  }
  for (std::size_t i = 0; i < best.size(); ++i) net.params()[i].values = best[i].values;
  return result;
}

}  // namespace evuav
