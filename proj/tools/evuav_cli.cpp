// evuav command-line tool. Talks to the library only through evuav.h.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evuav/evuav.h"

namespace {

// Exit codes: 0 ok, 1 bad input (usage, parse, validation), 2 runtime failure.
constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitRuntime = 2;

struct Failure {
  evuav_status status;
  std::string message;
};

void check(evuav_status st, const std::string& what = {}) {
  if (st != EVUAV_OK) throw Failure{st, (what.empty() ? "" : what + ": ") + evuav_last_error()};
}

int exit_code(evuav_status st) {
  switch (st) {
    case EVUAV_OK: return kExitOk;
    case EVUAV_ERR_IO:
    case EVUAV_ERR_RUNTIME: return kExitRuntime;
    default: return kExitInput;
  }
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<evuav_config, Deleter<evuav_config, evuav_config_free>>;
using StreamPtr = std::unique_ptr<evuav_stream, Deleter<evuav_stream, evuav_stream_free>>;
using ModelPtr = std::unique_ptr<evuav_model, Deleter<evuav_model, evuav_model_free>>;
using GridPtr = std::unique_ptr<evuav_grid, Deleter<evuav_grid, evuav_grid_free>>;

std::string take(char* s) {
  std::string out = s ? s : "";
  evuav_string_free(s);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Failure{EVUAV_ERR_IO, "cannot write " + path};
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  if (std::fclose(f) != 0 || !ok) throw Failure{EVUAV_ERR_IO, "write failed for " + path};
}

std::string labels_for(const std::string& events) { return events + ".labels"; }

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed;
  int threads = 0;
};

ConfigPtr load_config(const Common& c, const std::string& command) {
  evuav_config* raw = nullptr;
  if (c.config_path.empty()) check(evuav_config_new(&raw));
  else check(evuav_config_load(c.config_path.c_str(), &raw), "config");
  ConfigPtr cfg(raw);
  for (const auto& o : c.overrides) check(evuav_config_apply(cfg.get(), o.c_str()), "--set " + o);
  if (!c.seed.empty()) check(evuav_config_set(cfg.get(), "seed", c.seed.c_str()));
  check(evuav_config_check(cfg.get(), command.c_str()), command);
  return cfg;
}

std::string get(const evuav_config* cfg, const char* key) {
  char* v = nullptr;
  check(evuav_config_get(cfg, key, &v), key);
  return take(v);
}

// Effective config beside the primary output, or on stderr when there is none.
void dump_effective(const evuav_config* cfg, const std::string& command, const std::string& output) {
  evuav_config* raw = nullptr;
  check(evuav_config_effective(cfg, command.c_str(), &raw), "config");
  ConfigPtr eff(raw);
  char* text = nullptr;
  check(evuav_config_to_text(eff.get(), &text));
  const std::string body = take(text);
  if (output.empty()) std::fprintf(stderr, "# effective config\n%s", body.c_str());
  else write_text(output + ".run.cfg", body);
}

StreamPtr load_stream(const std::string& path, bool labels) {
  evuav_stream* raw = nullptr;
  std::size_t warnings = 0;
  const std::string lp = labels_for(path);
  check(evuav_stream_load(path.c_str(), EVUAV_FORMAT_AUTO, labels ? lp.c_str() : nullptr, &raw, &warnings), path);
  if (warnings) std::fprintf(stderr, "warning: %s: %zu events out of time order, sorted\n", path.c_str(), warnings);
  return StreamPtr(raw);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- subcommands

struct SynthArgs {
  std::string out, labels;
};

void run_synth(const Common& c, const SynthArgs& a) {
  auto cfg = load_config(c, "synth");
  evuav_config* eff_raw = nullptr;
  check(evuav_config_effective(cfg.get(), "synth", &eff_raw));
  ConfigPtr eff(eff_raw);
  const std::string fmt = get(eff.get(), "synth.format");
  if (fmt != "binary" && fmt != "text") throw Failure{EVUAV_ERR_VALIDATION, "synth.format must be binary or text"};
  evuav_stream* raw = nullptr;
  check(evuav_synth(cfg.get(), &raw), "synth");
  StreamPtr s(raw);
  const std::string lp = a.labels.empty() ? labels_for(a.out) : a.labels;
  check(evuav_stream_save(s.get(), a.out.c_str(), fmt == "text" ? EVUAV_FORMAT_TEXT : EVUAV_FORMAT_BINARY, lp.c_str()),
        a.out);
  const std::size_t n = evuav_stream_size(s.get());
  std::vector<std::uint8_t> labels(n);
  check(evuav_stream_labels(s.get(), labels.data(), n));
  std::size_t pos = 0;
  for (auto l : labels) pos += l;
  std::fprintf(stderr, "synth: %zu events, %zu target events\n", n, pos);
  dump_effective(cfg.get(), "synth", a.out);
}

struct AnnotateArgs {
  std::string events, boxes, out, frames_dir, make_boxes;
};

void run_annotate(const Common& c, const AnnotateArgs& a) {
  auto cfg = load_config(c, "annotate");
  evuav_config* eff_raw = nullptr;
  check(evuav_config_effective(cfg.get(), "annotate", &eff_raw));
  ConfigPtr eff(eff_raw);
  const long long dt = std::stoll(get(eff.get(), "annotate.delta_t_us"));
  const int margin = std::stoi(get(eff.get(), "annotate.margin"));
  if (dt <= 0 || margin < 0) throw Failure{EVUAV_ERR_VALIDATION, "annotate.delta_t_us must be > 0, margin >= 0"};
  if (a.boxes.empty() && a.frames_dir.empty() && a.make_boxes.empty()) {
    throw Failure{EVUAV_ERR_VALIDATION, "annotate: nothing to do (give --boxes, --frames or --make-boxes)"};
  }
  auto s = load_stream(a.events, !a.make_boxes.empty());
  std::string primary;
  if (!a.frames_dir.empty()) {
    std::size_t frames = 0;
    check(evuav_annotate_export_frames(s.get(), static_cast<std::uint64_t>(dt), a.frames_dir.c_str(), &frames),
          a.frames_dir);
    std::fprintf(stderr, "annotate: wrote %zu frames to %s\n", frames, a.frames_dir.c_str());
    primary = a.frames_dir + "/frames";
  }
  if (!a.make_boxes.empty()) {
    check(evuav_annotate_make_boxes(s.get(), static_cast<std::uint64_t>(dt), margin, a.make_boxes.c_str()),
          a.make_boxes);
    primary = a.make_boxes;
  }
  if (!a.boxes.empty()) {
    if (a.out.empty()) throw Failure{EVUAV_ERR_VALIDATION, "annotate: --boxes needs --out for the label file"};
    const std::size_t n = evuav_stream_size(s.get());
    std::vector<std::uint8_t> labels(n);
    check(evuav_annotate_boxes(s.get(), a.boxes.c_str(), labels.data(), n), a.boxes);
    check(evuav_labels_save(labels.data(), n, a.out.c_str()), a.out);
    std::size_t pos = 0;
    for (auto l : labels) pos += l;
    std::fprintf(stderr, "annotate: %zu of %zu events inside boxes\n", pos, n);
    primary = a.out;
  }
  dump_effective(cfg.get(), "annotate", primary);
}

struct VoxelizeArgs {
  std::string events, out;
};

void run_voxelize(const Common& c, const VoxelizeArgs& a) {
  auto cfg = load_config(c, "voxelize");
  auto s = load_stream(a.events, false);
  evuav_grid* raw = nullptr;
  check(evuav_voxelize(s.get(), cfg.get(), &raw), "voxelize");
  GridPtr g(raw);
  check(evuav_grid_save(g.get(), a.out.c_str()), a.out);
  std::fprintf(stderr, "voxelize: %zu events -> %zu active voxels\n", evuav_stream_size(s.get()),
               evuav_grid_size(g.get()));
  dump_effective(cfg.get(), "voxelize", a.out);
}

struct TrainArgs {
  std::vector<std::string> train, val;
  std::string out;
};

void print_epoch(int epoch, double loss, double lr, double val_iou, void* user) {
  auto* log = static_cast<std::string*>(user);
  char line[160];
  std::snprintf(line, sizeof line, "%d\t%.17g\t%.17g\t%.17g\n", epoch, loss, lr, val_iou);
  std::fputs(line, stdout);
  std::fflush(stdout);
  *log += line;
}

void run_train(const Common& c, const TrainArgs& a) {
  auto cfg = load_config(c, "train");
  evuav_config* eff_raw = nullptr;
  check(evuav_config_effective(cfg.get(), "train", &eff_raw));
  ConfigPtr eff(eff_raw);
  const auto seed = std::stoull(get(eff.get(), "seed"));
  std::vector<StreamPtr> owned;
  std::vector<const evuav_stream*> tr, va;
  for (const auto& p : a.train) {
    owned.push_back(load_stream(p, true));
    tr.push_back(owned.back().get());
  }
  for (const auto& p : a.val) {
    owned.push_back(load_stream(p, true));
    va.push_back(owned.back().get());
  }
  evuav_model* raw = nullptr;
  check(evuav_model_create(cfg.get(), seed, &raw), "model");
  ModelPtr m(raw);
  std::fprintf(stderr, "train: %zu parameters, %zu training sequences\n", evuav_model_parameter_count(m.get()),
               tr.size());
  std::string log = "epoch\tloss\tlr\tval_iou\n";
  std::fputs(log.c_str(), stdout);
  int best = 0;
  check(evuav_train(m.get(), tr.data(), tr.size(), va.data(), va.size(), cfg.get(), print_epoch, &log, &best), "train");
  check(evuav_model_save(m.get(), a.out.c_str()), a.out);
  write_text(a.out + ".log", log);
  std::fprintf(stderr, "train: kept epoch %d\n", best);
  dump_effective(cfg.get(), "train", a.out);
}

struct InferArgs {
  std::string model, events, out;
};

void run_infer(const Common& c, const InferArgs& a) {
  auto cfg = load_config(c, "infer");
  evuav_config* eff_raw = nullptr;
  check(evuav_config_effective(cfg.get(), "infer", &eff_raw));
  ConfigPtr eff(eff_raw);
  const auto window = std::stoull(get(eff.get(), "train.window_us"));
  evuav_model* raw = nullptr;
  check(evuav_model_load(a.model.c_str(), &raw), a.model);
  ModelPtr m(raw);
  auto s = load_stream(a.events, false);
  const std::size_t n = evuav_stream_size(s.get());
  std::vector<double> conf(n);
  const auto t0 = std::chrono::steady_clock::now();
  check(evuav_infer(m.get(), s.get(), window, conf.data(), n), "infer");
  const double sec = seconds_since(t0);
  check(evuav_predictions_save(conf.data(), n, a.out.c_str()), a.out);
  std::fprintf(stderr, "infer: %zu events in %.3f s (%.0f events/s)\n", n, sec, sec > 0 ? n / sec : 0.0);
  dump_effective(cfg.get(), "infer", a.out);
}

struct EvalArgs {
  std::vector<std::string> events, preds;
  std::string out;
};

void run_eval(const Common& c, const EvalArgs& a) {
  auto cfg = load_config(c, "eval");
  if (a.events.size() != a.preds.size()) {
    throw Failure{EVUAV_ERR_VALIDATION, "eval: need one --pred file per --events file"};
  }
  std::vector<StreamPtr> owned;
  std::vector<const evuav_stream*> gt;
  std::vector<std::unique_ptr<double, void (*)(void*)>> conf_owned;
  std::vector<const double*> conf;
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    owned.push_back(load_stream(a.events[i], true));
    gt.push_back(owned.back().get());
    double* p = nullptr;
    std::size_t n = 0;
    check(evuav_predictions_load(a.preds[i].c_str(), &p, &n), a.preds[i]);
    conf_owned.emplace_back(p, evuav_buffer_free);
    if (n != evuav_stream_size(gt.back())) {
      throw Failure{EVUAV_ERR_VALIDATION, a.preds[i] + ": " + std::to_string(n) + " predictions for " +
                                              std::to_string(evuav_stream_size(gt.back())) + " events"};
    }
    conf.push_back(p);
  }
  evuav_report rep{};
  char* text = nullptr;
  check(evuav_eval(gt.data(), conf.data(), gt.size(), cfg.get(), &rep, &text), "eval");
  const std::string report = take(text);
  std::fputs(report.c_str(), stdout);
  if (!a.out.empty()) write_text(a.out, report);
  dump_effective(cfg.get(), "eval", a.out);
}

struct GradcheckArgs {
  std::string out;
};

void print_layer(const char* name, int checked, int skipped, double err, void* user) {
  auto* text = static_cast<std::string*>(user);
  char line[256];
  std::snprintf(line, sizeof line, "%s\t%.3e\t%d\t%d\n", name, err, checked, skipped);
  std::fputs(line, stdout);
  *text += line;
}

int run_gradcheck(const Common& c, const GradcheckArgs& a) {
  auto cfg = load_config(c, "gradcheck");
  std::string text = "layer\tmax_rel_error\tchecked\tskipped\n";
  std::fputs(text.c_str(), stdout);
  int passed = 0;
  check(evuav_gradcheck(cfg.get(), print_layer, &text, &passed), "gradcheck");
  const std::string verdict = passed ? "PASS\n" : "FAIL\n";
  std::fputs(verdict.c_str(), stdout);
  if (!a.out.empty()) write_text(a.out, text + verdict);
  dump_effective(cfg.get(), "gradcheck", a.out);
  return passed ? kExitOk : kExitRuntime;
}

struct AblateArgs {
  std::string out;
};

void print_row(const char* row, void* user) {
  auto* text = static_cast<std::string*>(user);
  std::printf("%s\n", row);
  std::fflush(stdout);
  *text += std::string(row) + "\n";
}

void run_ablate(const Common& c, const AblateArgs& a) {
  auto cfg = load_config(c, "ablate");
  std::string text = std::string(evuav_ablation_header()) + "\n";
  std::fputs(text.c_str(), stdout);
  check(evuav_ablate(cfg.get(), print_row, &text), "ablate");
  if (!a.out.empty()) write_text(a.out, text);
  dump_effective(cfg.get(), "ablate", a.out);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "key=value config file");
  sub->add_option("-s,--set", c.overrides, "override a config key (key=value), repeatable");
  sub->add_option("--seed", c.seed, "random seed (same as --set seed=N)");
  sub->add_option("-j,--threads", c.threads, "worker threads (default: EVUAV_THREADS or 1)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evuav: small moving object segmentation in event streams"};
  app.require_subcommand(1);
  Common common;
  SynthArgs synth;
  AnnotateArgs annotate;
  VoxelizeArgs voxelize;
  TrainArgs train;
  InferArgs infer;
  EvalArgs eval;
  GradcheckArgs gradcheck;
  AblateArgs ablate;

  auto* s = app.add_subcommand("synth", "generate a labeled synthetic event stream");
  s->add_option("-o,--out", synth.out, "event file to write")->required();
  s->add_option("--labels", synth.labels, "label file (default: <out>.labels)");

  auto* an = app.add_subcommand("annotate", "frames, boxes and box-to-event labels");
  an->add_option("-e,--events", annotate.events, "event file")->required();
  an->add_option("--boxes", annotate.boxes, "box file to turn into event labels");
  an->add_option("-o,--out", annotate.out, "label file written from --boxes");
  an->add_option("--frames", annotate.frames_dir, "directory for PGM occupancy frames");
  an->add_option("--make-boxes", annotate.make_boxes, "write tight boxes around the labeled events (<events>.labels)");

  auto* v = app.add_subcommand("voxelize", "dump the sparse voxel grid of an event file");
  v->add_option("-e,--events", voxelize.events, "event file")->required();
  v->add_option("-o,--out", voxelize.out, "voxel text file")->required();

  auto* t = app.add_subcommand("train", "train a segmentation model");
  t->add_option("--train", train.train, "training event files (labels at <file>.labels)")->required();
  t->add_option("--val", train.val, "validation event files (default: training set)");
  t->add_option("-o,--out", train.out, "checkpoint to write")->required();

  auto* i = app.add_subcommand("infer", "per-event confidences from a checkpoint");
  i->add_option("-m,--model", infer.model, "checkpoint")->required();
  i->add_option("-e,--events", infer.events, "event file")->required();
  i->add_option("-o,--out", infer.out, "prediction file to write")->required();

  auto* e = app.add_subcommand("eval", "IoU, ACC, Pd and Fa of predictions against labels");
  e->add_option("-e,--events", eval.events, "labeled event files")->required();
  e->add_option("-p,--pred", eval.preds, "prediction files, one per event file")->required();
  e->add_option("-o,--out", eval.out, "report file");

  auto* g = app.add_subcommand("gradcheck", "finite-difference check of every layer's gradient");
  g->add_option("-o,--out", gradcheck.out, "report file");

  auto* ab = app.add_subcommand("ablate", "train and score the ablation grids on synthetic data");
  ab->add_option("-o,--out", ablate.out, "table file");

  for (auto* sub : {s, an, v, t, i, e, g, ab}) add_common(sub, common);

  if (argc < 2) {
    std::fputs(app.help().c_str(), stderr);
    return kExitInput;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::fprintf(stderr, "error: %s\n\n%s", ex.what(), app.help().c_str());
    return kExitInput;
  }

  try {
    int threads = common.threads;
    if (threads == 0) {
      if (const char* env = std::getenv("EVUAV_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || n < 1) throw Failure{EVUAV_ERR_VALIDATION, "EVUAV_THREADS must be >= 1"};
        threads = static_cast<int>(n);
      } else {
        threads = 1;
      }
    }
    check(evuav_set_threads(threads), "threads");

    if (s->parsed()) run_synth(common, synth);
    else if (an->parsed()) run_annotate(common, annotate);
    else if (v->parsed()) run_voxelize(common, voxelize);
    else if (t->parsed()) run_train(common, train);
    else if (i->parsed()) run_infer(common, infer);
    else if (e->parsed()) run_eval(common, eval);
    else if (g->parsed()) return run_gradcheck(common, gradcheck);
    else if (ab->parsed()) run_ablate(common, ablate);
    return kExitOk;
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", evuav_status_name(f.status), f.message.c_str());
    return exit_code(f.status);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitInput;
  }
}
