#include "pipeline.hpp"

#include <algorithm>

#include "error.hpp"
#include "gradcheck.hpp"
#include "synth.hpp"

namespace evuav {

namespace {

const std::vector<std::string> kEvalKeys = {"eval.threshold", "eval.match_radius_px", "eval.match_window_ms",
                                            "eval.voxel_t_us", "eval.duration_us"};
const std::vector<std::string> kGradcheckKeys = {"gradcheck.samples", "gradcheck.step", "gradcheck.floor",
                                                 "gradcheck.tolerance", "gradcheck.gain",
                                                 "gradcheck.voxels_per_cluster"};
const std::vector<std::string> kAblateKeys = {"ablate.train_sequences", "ablate.test_sequences", "ablate.tables"};

void add(std::set<std::string>& s, const std::vector<std::string>& keys) { s.insert(keys.begin(), keys.end()); }

std::set<std::string> split_names(const std::string& text) {
  std::set<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    std::string item = text.substr(start, end - start);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.insert(item);
    start = end + 1;
  }
  return out;
}

int round_up(int v, int m) { return (v + m - 1) / m * m; }

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"synth", "annotate", "voxelize", "train",
                                                 "infer", "eval",     "gradcheck", "ablate"};
  return names;
}

std::set<std::string> command_keys(const std::string& command) {
  std::set<std::string> k{"seed"};
  if (command == "synth") {
    add(k, scene_config_keys());
    k.insert("synth.format");
  } else if (command == "annotate") {
    add(k, {"annotate.delta_t_us", "annotate.margin"});
  } else if (command == "voxelize") {
    k.insert("model.voxel_size");
  } else if (command == "train") {
    add(k, model_config_keys());
    add(k, train_config_keys());
  } else if (command == "infer") {
    k.insert("train.window_us");
  } else if (command == "eval") {
    add(k, kEvalKeys);
  } else if (command == "gradcheck") {
    add(k, model_config_keys());
    add(k, kGradcheckKeys);
  } else if (command == "ablate") {
    add(k, scene_config_keys());
    add(k, model_config_keys());
    add(k, train_config_keys());
    add(k, kEvalKeys);
    add(k, kAblateKeys);
  } else {
    fail(ErrorKind::Validation, "unknown command '" + command + "'");
  }
  return k;
}

void check_command_config(const std::string& command, const KeyValueConfig& kv) {
  kv.reject_unknown(command_keys(command));
}

EvalSettings EvalSettings::from_config(const KeyValueConfig& kv) {
  EvalSettings e;
  e.threshold = kv.get_double("eval.threshold", e.threshold);
  e.detection.match_radius_px = kv.get_double("eval.match_radius_px", e.detection.match_radius_px);
  e.detection.match_window_ms = kv.get_double("eval.match_window_ms", e.detection.match_window_ms);
  e.detection.voxel_t_us = kv.get_int("eval.voxel_t_us", e.detection.voxel_t_us);
  if (kv.has("eval.duration_us")) e.detection.duration_us = kv.get_u64("eval.duration_us", 0);
  if (!(e.threshold >= 0.0 && e.threshold <= 1.0)) fail(ErrorKind::Validation, "eval.threshold must be in [0, 1]");
  if (!(e.detection.match_radius_px >= 0.0) || !(e.detection.match_window_ms > 0.0) || e.detection.voxel_t_us <= 0) {
    fail(ErrorKind::Validation, "eval: radius must be >= 0, window and voxel length > 0");
  }
  return e;
}

void EvalSettings::to_config(KeyValueConfig& kv) const {
  kv.set("eval.threshold", format_double(threshold));
  kv.set("eval.match_radius_px", format_double(detection.match_radius_px));
  kv.set("eval.match_window_ms", format_double(detection.match_window_ms));
  kv.set("eval.voxel_t_us", std::to_string(detection.voxel_t_us));
  if (detection.duration_us) kv.set("eval.duration_us", std::to_string(*detection.duration_us));
}

KeyValueConfig effective_config(const std::string& command, const KeyValueConfig& kv) {
  check_command_config(command, kv);
  const auto keys = command_keys(command);
  auto has_ns = [&](const std::string& prefix) {
    return std::any_of(keys.begin(), keys.end(), [&](const std::string& k) { return k.starts_with(prefix); });
  };
  KeyValueConfig out;
  out.set("seed", std::to_string(kv.get_u64("seed", 0)));
  if (has_ns("scene.")) out.merge(scene_config_defaults());
  if (has_ns("model.")) {
    KeyValueConfig m;
    ModelConfig::from_config(kv).to_config(m);
    for (const auto& [k, v] : m.entries()) {
      if (keys.count(k)) out.set(k, v);
    }
  }
  if (has_ns("train.")) {
    KeyValueConfig t;
    TrainConfig::from_config(kv).to_config(t);
    for (const auto& [k, v] : t.entries()) {
      if (keys.count(k)) out.set(k, v);
    }
  }
  if (has_ns("eval.")) EvalSettings::from_config(kv).to_config(out);
  if (command == "synth") out.set("synth.format", "binary");
  if (command == "annotate") {
    out.set("annotate.delta_t_us", "50000");
    out.set("annotate.margin", "0");
  }
  if (command == "gradcheck") {
    const GradcheckConfig g;
    out.set("gradcheck.samples", std::to_string(g.samples_per_layer));
    out.set("gradcheck.step", format_double(g.step));
    out.set("gradcheck.floor", format_double(g.floor));
    out.set("gradcheck.tolerance", format_double(g.tolerance));
    out.set("gradcheck.gain", format_double(g.gain));
    out.set("gradcheck.voxels_per_cluster", std::to_string(g.voxels_per_cluster));
  }
  if (command == "ablate") {
    out.set("ablate.train_sequences", "4");
    out.set("ablate.test_sequences", "2");
    out.set("ablate.tables", "components,branches,dilations");
  }
  // user values win, verbatim; the model/train blocks above are already normalized
  for (const auto& [k, v] : kv.entries()) {
    if (!out.has(k) || !(k.starts_with("model.") || k.starts_with("train.") || k.starts_with("eval."))) out.set(k, v);
  }
  return out;
}

std::string ablation_header() { return "table\tconfig\tiou\tacc\tpd\tfa\tparams"; }

std::string format_ablation_row(const AblationRow& r) {
  return r.table + "\t" + r.label + "\t" + format_double(r.report.iou) + "\t" + format_double(r.report.acc) + "\t" +
         format_double(r.report.pd) + "\t" + format_double(r.report.fa) + "\t" + std::to_string(r.parameters);
}

std::vector<AblationRow> ablation_grid(const ModelConfig& base, const std::set<std::string>& tables) {
  for (const auto& t : tables) {
    if (t != "components" && t != "branches" && t != "dilations") {
      fail(ErrorKind::Validation, "ablate.tables: unknown table '" + t + "' (components, branches, dilations)");
    }
  }
  std::vector<AblationRow> rows;
  if (tables.count("components")) {
    struct Toggle {
      bool gdsc, pa, stc;
      const char* label;
    };
    for (const Toggle& t : {Toggle{false, false, false, "base"}, Toggle{true, false, false, "gdsc"},
                            Toggle{false, true, false, "pa"}, Toggle{false, false, true, "stc"},
                            Toggle{true, true, false, "gdsc+pa"}, Toggle{true, true, true, "gdsc+pa+stc"}}) {
      AblationRow r;
      r.table = "components";
      r.label = t.label;
      r.model = base;
      r.model.use_gdsc = t.gdsc;
      r.model.use_patch_attention = t.pa;
      r.loss = t.stc ? LossKind::Stc : LossKind::Bce;
      rows.push_back(r);
    }
  }
  if (tables.count("branches")) {
    for (int b = 1; b <= 5; ++b) {
      AblationRow r;
      r.table = "branches";
      r.label = std::to_string(b);
      r.model = base;
      r.model.use_gdsc = true;
      r.model.branches = b;
      r.model.dilation_rates.clear();
      for (int d = 1; d <= b; ++d) r.model.dilation_rates.push_back(d);
      for (int& c : r.model.stage_channels) c = round_up(c, b);
      rows.push_back(r);
    }
  }
  if (tables.count("dilations")) {
    for (const auto& set : std::vector<std::vector<int>>{{1, 2, 3, 4}, {1, 2, 3, 5}, {1, 3, 5, 7}, {1, 3, 5, 9}}) {
      AblationRow r;
      r.table = "dilations";
      r.model = base;
      r.model.use_gdsc = true;
      r.model.branches = 4;
      r.model.dilation_rates = set;
      for (int& c : r.model.stage_channels) c = round_up(c, 4);
      for (std::size_t i = 0; i < set.size(); ++i) r.label += (i ? "," : "") + std::to_string(set[i]);
      rows.push_back(r);
    }
  }
  for (auto& r : rows) r.model.check();
  return rows;
}

std::vector<AblationRow> run_ablation(const KeyValueConfig& kv, const std::function<void(const AblationRow&)>& on_row) {
  check_command_config("ablate", kv);
  const auto n_train = kv.get_int("ablate.train_sequences", 4);
  const auto n_test = kv.get_int("ablate.test_sequences", 2);
  if (n_train < 1 || n_test < 1) fail(ErrorKind::Validation, "ablate: need at least one train and one test sequence");
  const std::uint64_t seed = kv.get_u64("seed", 0);
  const ModelConfig base = ModelConfig::from_config(kv);
  const TrainConfig train_cfg = TrainConfig::from_config(kv);
  const EvalSettings eval = EvalSettings::from_config(kv);
  auto rows = ablation_grid(base, split_names(kv.get_string("ablate.tables", "components,branches,dilations")));

  std::vector<EventStream> train_set, test_set;
  for (std::int64_t i = 0; i < n_train + n_test; ++i) {
    KeyValueConfig s = kv;
    s.set("seed", std::to_string(seed + static_cast<std::uint64_t>(i)));
    (i < n_train ? train_set : test_set).push_back(generate(SceneSpec::from_config(s)));
  }

  for (auto& row : rows) {
    TrainConfig tc = train_cfg;
    if (row.table == "components") tc.loss = row.loss;
    row.loss = tc.loss;
    SegNet net(row.model);
    net.init(seed);
    row.parameters = net.parameter_count();
    train(net, train_set, {}, tc);
    std::vector<std::vector<double>> conf;
    for (const auto& s : test_set) conf.push_back(predict_stream(net, s, tc.window_us));
    row.report = evaluate(test_set, conf, eval.threshold, eval.detection);
    if (on_row) on_row(row);
  }
  return rows;
}

}  // namespace evuav
