#include "evuav/evuav.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "annotate.hpp"
#include "binary_io.hpp"
#include "config.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "segnet.hpp"
#include "synth.hpp"
#include "trainer.hpp"
#include "voxel_grid.hpp"

struct evuav_config {
  evuav::KeyValueConfig kv;
};
struct evuav_stream {
  evuav::EventStream s;
};
struct evuav_grid {
  evuav::SparseGrid g;
};
struct evuav_model {
  evuav::SegNet net;
};

namespace {

using evuav::ErrorKind;

thread_local std::string g_last_error;

constexpr char kPredMagic[] = "EVUAVPR1";

evuav_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::Parse: return EVUAV_ERR_PARSE;
    case ErrorKind::Validation: return EVUAV_ERR_VALIDATION;
    case ErrorKind::Contract: return EVUAV_ERR_CONTRACT;
    case ErrorKind::Io: return EVUAV_ERR_IO;
    case ErrorKind::Runtime: return EVUAV_ERR_RUNTIME;
  }
  return EVUAV_ERR_RUNTIME;
}

template <class Fn>
evuav_status guard(Fn&& fn) {
  try {
    fn();
    return EVUAV_OK;
  } catch (const evuav::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return EVUAV_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EVUAV_ERR_RUNTIME;
  }
}

template <class Fn>
evuav_status guard_args(bool ok, Fn&& fn) {
  if (!ok) {
    g_last_error = "null argument";
    return EVUAV_ERR_ARGUMENT;
  }
  return guard(std::forward<Fn>(fn));
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

evuav::EventFormat format_for(evuav_format f, const std::string& path) {
  if (f == EVUAV_FORMAT_TEXT) return evuav::EventFormat::Text;
  if (f == EVUAV_FORMAT_BINARY) return evuav::EventFormat::Binary;
  if (f != EVUAV_FORMAT_AUTO) evuav::fail(ErrorKind::Contract, "unknown event format");
  return evuav::detect_format(path);
}

std::vector<evuav::EventStream> gather(const evuav_stream* const* s, std::size_t n) {
  std::vector<evuav::EventStream> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!s[i]) evuav::fail(ErrorKind::Contract, "null stream at index " + std::to_string(i));
    out.push_back(s[i]->s);
  }
  return out;
}

const evuav::KeyValueConfig& kv_or_empty(const evuav_config* cfg) {
  static const evuav::KeyValueConfig empty;
  return cfg ? cfg->kv : empty;
}

}  // namespace

extern "C" {

const char* evuav_last_error(void) { return g_last_error.c_str(); }

const char* evuav_status_name(evuav_status s) {
  switch (s) {
    case EVUAV_OK: return "ok";
    case EVUAV_ERR_PARSE: return "parse error";
    case EVUAV_ERR_VALIDATION: return "validation error";
    case EVUAV_ERR_CONTRACT: return "contract violation";
    case EVUAV_ERR_IO: return "i/o error";
    case EVUAV_ERR_RUNTIME: return "runtime error";
    case EVUAV_ERR_ARGUMENT: return "bad argument";
  }
  return "unknown status";
}

const char* evuav_version(void) { return "0.1.0"; }

evuav_status evuav_set_threads(int threads) {
  return guard([&] {
    if (threads < 1) evuav::fail(ErrorKind::Validation, "thread count must be >= 1");
    evuav::set_thread_count(threads);
  });
}

int evuav_get_threads(void) { return evuav::thread_count(); }

void evuav_string_free(char* s) { std::free(s); }
void evuav_buffer_free(void* p) { std::free(p); }

// ---- configuration

evuav_status evuav_config_new(evuav_config** out) {
  return guard_args(out, [&] { *out = new evuav_config{}; });
}

evuav_status evuav_config_load(const char* path, evuav_config** out) {
  return guard_args(path && out, [&] { *out = new evuav_config{evuav::KeyValueConfig::load(path)}; });
}

evuav_status evuav_config_parse(const char* text, evuav_config** out) {
  return guard_args(text && out, [&] { *out = new evuav_config{evuav::KeyValueConfig::parse(text)}; });
}

evuav_status evuav_config_set(evuav_config* cfg, const char* key, const char* value) {
  return guard_args(cfg && key && value, [&] {
    if (!*key) evuav::fail(ErrorKind::Validation, "empty config key");
    cfg->kv.set(key, value);
  });
}

evuav_status evuav_config_apply(evuav_config* cfg, const char* assignment) {
  return guard_args(cfg && assignment, [&] { cfg->kv.apply_override(assignment); });
}

evuav_status evuav_config_get(const evuav_config* cfg, const char* key, char** value) {
  return guard_args(cfg && key && value, [&] {
    if (!cfg->kv.has(key)) evuav::fail(ErrorKind::Validation, std::string("config key '") + key + "' not set");
    *value = dup(cfg->kv.get_string(key, ""));
  });
}

evuav_status evuav_config_to_text(const evuav_config* cfg, char** text) {
  return guard_args(cfg && text, [&] { *text = dup(cfg->kv.to_text()); });
}

evuav_status evuav_config_check(const evuav_config* cfg, const char* command) {
  return guard_args(cfg && command, [&] { evuav::check_command_config(command, cfg->kv); });
}

evuav_status evuav_config_effective(const evuav_config* cfg, const char* command, evuav_config** out) {
  return guard_args(cfg && command && out,
                    [&] { *out = new evuav_config{evuav::effective_config(command, cfg->kv)}; });
}

void evuav_config_free(evuav_config* cfg) { delete cfg; }

// ---- streams

evuav_status evuav_stream_create(const evuav_event* events, size_t count, int width, int height,
                                 const uint8_t* labels, evuav_stream** out) {
  return guard_args(out && (events || count == 0), [&] {
    auto h = std::make_unique<evuav_stream>();
    h->s.width = width;
    h->s.height = height;
    h->s.events.reserve(count);
    for (size_t i = 0; i < count; ++i) h->s.events.push_back({events[i].t, events[i].x, events[i].y, events[i].pol});
    if (labels) h->s.labels.emplace(labels, labels + count);
    evuav::sort_by_time(h->s);
    evuav::validate(h->s);
    *out = h.release();
  });
}

evuav_status evuav_stream_load(const char* path, evuav_format format, const char* labels_path, evuav_stream** out,
                               size_t* sort_warnings) {
  return guard_args(path && out, [&] {
    auto r = evuav::load_events(path, format_for(format, path));
    if (labels_path) evuav::attach_labels(r.stream, labels_path);
    if (sort_warnings) *sort_warnings = r.sort_warnings;
    *out = new evuav_stream{std::move(r.stream)};
  });
}

evuav_status evuav_stream_save(const evuav_stream* s, const char* path, evuav_format format, const char* labels_path) {
  return guard_args(s && path, [&] {
    const auto fmt = format == EVUAV_FORMAT_TEXT ? evuav::EventFormat::Text : evuav::EventFormat::Binary;
    evuav::write_events(s->s, path, fmt);
    if (labels_path) {
      if (!s->s.has_labels()) evuav::fail(ErrorKind::Validation, "stream has no labels to write");
      evuav::write_labels(*s->s.labels, labels_path);
    }
  });
}

evuav_status evuav_labels_save(const uint8_t* labels, size_t count, const char* path) {
  return guard_args((labels || count == 0) && path, [&] {
    for (size_t i = 0; i < count; ++i) {
      if (labels[i] > 1) evuav::fail(ErrorKind::Validation, "labels must be 0 or 1");
    }
    evuav::write_labels({labels, count}, path);
  });
}

evuav_status evuav_stream_set_labels(evuav_stream* s, const uint8_t* labels, size_t count) {
  return guard_args(s && (labels || count == 0), [&] {
    if (count != s->s.size()) evuav::fail(ErrorKind::Validation, "label count does not match event count");
    auto copy = s->s;
    copy.labels.emplace(labels, labels + count);
    evuav::validate(copy);
    s->s.labels = std::move(copy.labels);
  });
}

size_t evuav_stream_size(const evuav_stream* s) { return s ? s->s.size() : 0; }

evuav_status evuav_stream_dims(const evuav_stream* s, int* width, int* height) {
  return guard_args(s && width && height, [&] {
    *width = s->s.width;
    *height = s->s.height;
  });
}

evuav_status evuav_stream_events(const evuav_stream* s, evuav_event* out, size_t count) {
  return guard_args(s && (out || count == 0), [&] {
    if (count != s->s.size()) evuav::fail(ErrorKind::Contract, "output buffer size does not match event count");
    for (size_t i = 0; i < count; ++i) {
      const auto& e = s->s.events[i];
      out[i] = {e.t, e.x, e.y, e.pol};
    }
  });
}

int evuav_stream_has_labels(const evuav_stream* s) { return s && s->s.has_labels() ? 1 : 0; }

evuav_status evuav_stream_labels(const evuav_stream* s, uint8_t* out, size_t count) {
  return guard_args(s && (out || count == 0), [&] {
    if (!s->s.has_labels()) evuav::fail(ErrorKind::Validation, "stream has no labels");
    if (count != s->s.size()) evuav::fail(ErrorKind::Contract, "output buffer size does not match event count");
    std::copy(s->s.labels->begin(), s->s.labels->end(), out);
  });
}

evuav_status evuav_stream_slice(const evuav_stream* s, uint64_t t0, uint64_t t1, evuav_stream** out) {
  return guard_args(s && out, [&] { *out = new evuav_stream{evuav::slice_window(s->s, t0, t1)}; });
}

void evuav_stream_free(evuav_stream* s) { delete s; }

evuav_status evuav_synth(const evuav_config* cfg, evuav_stream** out) {
  return guard_args(out, [&] {
    *out = new evuav_stream{evuav::generate(evuav::SceneSpec::from_config(kv_or_empty(cfg)))};
  });
}

evuav_status evuav_curve_stats(const evuav_stream* s, double us_per_px, double* target_nn, double* other_nn) {
  return guard_args(s && target_nn && other_nn, [&] {
    const auto cs = evuav::curve_stats(s->s, us_per_px);
    *target_nn = cs.target_mean_nn.value_or(-1.0);
    *other_nn = cs.other_mean_nn.value_or(-1.0);
  });
}

// ---- grid

evuav_status evuav_voxelize(const evuav_stream* s, const evuav_config* cfg, evuav_grid** out) {
  return guard_args(s && out, [&] {
    const auto mc = evuav::ModelConfig::from_config(kv_or_empty(cfg));
    *out = new evuav_grid{evuav::voxelize(s->s, mc.voxel_size)};
  });
}

size_t evuav_grid_size(const evuav_grid* g) { return g ? g->g.size() : 0; }

evuav_status evuav_grid_voxel(const evuav_grid* g, size_t row, int32_t key[3], double features[2]) {
  return guard_args(g && key && features, [&] {
    if (row >= g->g.size()) evuav::fail(ErrorKind::Contract, "voxel row out of range");
    const auto& k = g->g.active->key(row);
    key[0] = k.ix;
    key[1] = k.iy;
    key[2] = k.it;
    features[0] = g->g.features.at(row, 0);
    features[1] = g->g.features.at(row, 1);
  });
}

evuav_status evuav_grid_save(const evuav_grid* g, const char* path) {
  return guard_args(g && path, [&] {
    const auto& gr = g->g;
    std::string text = "voxel_size " + std::to_string(gr.voxel_size.x) + " " + std::to_string(gr.voxel_size.y) + " " +
                       std::to_string(gr.voxel_size.t) + " t_base " + std::to_string(gr.t_base);
    if (gr.active) {
      const auto& d = gr.dims();
      text += " dims " + std::to_string(d.nx) + " " + std::to_string(d.ny) + " " + std::to_string(d.nt);
    }
    text += "\n";
    for (size_t i = 0; i < gr.size(); ++i) {
      const auto& k = gr.active->key(i);
      text += std::to_string(k.ix) + " " + std::to_string(k.iy) + " " + std::to_string(k.it) + " " +
              evuav::format_double(gr.features.at(i, 0)) + " " + evuav::format_double(gr.features.at(i, 1)) + "\n";
    }
    evuav::binio::Writer w;
    w.bytes(text.data(), text.size());
    w.save(path);
  });
}

void evuav_grid_free(evuav_grid* g) { delete g; }

// ---- annotation

evuav_status evuav_annotate_boxes(const evuav_stream* s, const char* box_path, uint8_t* labels, size_t count) {
  return guard_args(s && box_path && (labels || count == 0), [&] {
    if (count != s->s.size()) evuav::fail(ErrorKind::Contract, "label buffer size does not match event count");
    const auto bf = evuav::read_boxes(box_path);
    const auto l = evuav::boxes_to_event_labels(s->s, bf.boxes, bf.delta_t_us);
    std::copy(l.begin(), l.end(), labels);
  });
}

evuav_status evuav_annotate_export_frames(const evuav_stream* s, uint64_t delta_t_us, const char* dir,
                                          size_t* frames) {
  return guard_args(s && dir && frames, [&] {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) evuav::fail(ErrorKind::Io, std::string("cannot create directory ") + dir + ": " + ec.message());
    const auto fr = evuav::accumulate_frames(s->s, delta_t_us);
    for (const auto& f : fr) {
      char name[64];
      std::snprintf(name, sizeof name, "frame_%06lld.pgm", static_cast<long long>(f.index));
      evuav::write_pgm(f, (std::filesystem::path(dir) / name).string());
    }
    *frames = fr.size();
  });
}

evuav_status evuav_annotate_make_boxes(const evuav_stream* s, uint64_t delta_t_us, int margin, const char* box_path) {
  return guard_args(s && box_path, [&] {
    evuav::BoxFile bf;
    bf.delta_t_us = delta_t_us;
    bf.boxes = evuav::boxes_from_labels(s->s, delta_t_us, margin);
    evuav::write_boxes(bf, box_path);
  });
}

// ---- model

evuav_status evuav_model_create(const evuav_config* cfg, uint64_t seed, evuav_model** out) {
  return guard_args(out, [&] {
    auto mc = evuav::ModelConfig::from_config(kv_or_empty(cfg));
    mc.check();
    auto h = new evuav_model{evuav::SegNet(mc)};
    h->net.init(seed);
    *out = h;
  });
}

evuav_status evuav_model_load(const char* path, evuav_model** out) {
  return guard_args(path && out, [&] { *out = new evuav_model{evuav::load_checkpoint(path)}; });
}

evuav_status evuav_model_save(const evuav_model* m, const char* path) {
  return guard_args(m && path, [&] { evuav::save_checkpoint(m->net, path); });
}

size_t evuav_model_parameter_count(const evuav_model* m) { return m ? m->net.parameter_count() : 0; }

void evuav_model_free(evuav_model* m) { delete m; }

evuav_status evuav_train(evuav_model* m, const evuav_stream* const* train, size_t n_train,
                         const evuav_stream* const* val, size_t n_val, const evuav_config* cfg, evuav_epoch_fn on_epoch,
                         void* user, int* best_epoch) {
  return guard_args(m && (train || n_train == 0) && (val || n_val == 0), [&] {
    const auto tc = evuav::TrainConfig::from_config(kv_or_empty(cfg));
    const auto result = evuav::train(m->net, gather(train, n_train), gather(val, n_val), tc,
                                     [&](const evuav::EpochLog& e) {
                                       if (on_epoch) on_epoch(e.epoch, e.loss, e.lr, e.val_iou, user);
                                     });
    if (best_epoch) *best_epoch = result.best_epoch;
  });
}

evuav_status evuav_infer(const evuav_model* m, const evuav_stream* s, uint64_t window_us, double* conf, size_t count) {
  return guard_args(m && s && (conf || count == 0), [&] {
    if (count != s->s.size()) evuav::fail(ErrorKind::Contract, "confidence buffer size does not match event count");
    if (window_us == 0) evuav::fail(ErrorKind::Validation, "window must be positive");
    const auto c = evuav::predict_stream(m->net, s->s, window_us);
    std::copy(c.begin(), c.end(), conf);
  });
}

evuav_status evuav_predictions_save(const double* conf, size_t count, const char* path) {
  return guard_args((conf || count == 0) && path, [&] {
    evuav::binio::Writer w;
    w.bytes(kPredMagic, 8);
    w.u64(count);
    for (size_t i = 0; i < count; ++i) w.f64(conf[i]);
    w.save(path);
  });
}

evuav_status evuav_predictions_load(const char* path, double** conf, size_t* count) {
  return guard_args(path && conf && count, [&] {
    const std::string bytes = evuav::binio::read_file(path);
    evuav::binio::Reader r(bytes, path);
    if (bytes.size() < 16 || r.str(8) != std::string(kPredMagic, 8)) {
      evuav::fail(ErrorKind::Parse, std::string(path) + ": missing EVUAVPR1 magic");
    }
    const auto n = r.u64();
    if (r.remaining() != n * 8) {
      evuav::fail(ErrorKind::Parse, std::string(path) + ": header says " + std::to_string(n) + " values, file holds " +
                                        std::to_string(r.remaining() / 8));
    }
    auto* buf = static_cast<double*>(std::malloc(std::max<size_t>(1, n) * sizeof(double)));
    if (!buf) throw std::bad_alloc();
    for (size_t i = 0; i < n; ++i) buf[i] = r.f64();
    *conf = buf;
    *count = n;
  });
}

// ---- evaluation

evuav_status evuav_eval(const evuav_stream* const* gt, const double* const* conf, size_t n, const evuav_config* cfg,
                        evuav_report* out, char** text) {
  return guard_args((gt && conf) || n == 0, [&] {
    if (!out) evuav::fail(ErrorKind::Contract, "null report");
    const auto settings = evuav::EvalSettings::from_config(kv_or_empty(cfg));
    auto streams = gather(gt, n);
    std::vector<std::vector<double>> c;
    for (size_t i = 0; i < n; ++i) {
      if (!conf[i] && streams[i].size()) evuav::fail(ErrorKind::Contract, "null confidence array");
      c.emplace_back(conf[i], conf[i] + streams[i].size());
    }
    const auto rep = evuav::evaluate(streams, c, settings.threshold, settings.detection);
    *out = {rep.iou, rep.acc, rep.pd, rep.fa};
    if (text) *text = dup(evuav::format_report(rep));
  });
}

// ---- checks

evuav_status evuav_gradcheck(const evuav_config* cfg, evuav_layer_fn on_layer, void* user, int* passed) {
  return guard_args(passed, [&] {
    const auto& kv = kv_or_empty(cfg);
    const auto mc = evuav::ModelConfig::from_config(kv);
    mc.check();
    evuav::GradcheckConfig g;
    g.seed = kv.get_u64("seed", g.seed);
    g.samples_per_layer = static_cast<int>(kv.get_int("gradcheck.samples", g.samples_per_layer));
    g.step = kv.get_double("gradcheck.step", g.step);
    g.floor = kv.get_double("gradcheck.floor", g.floor);
    g.tolerance = kv.get_double("gradcheck.tolerance", g.tolerance);
    g.gain = kv.get_double("gradcheck.gain", g.gain);
    g.voxels_per_cluster =
        static_cast<std::size_t>(kv.get_int("gradcheck.voxels_per_cluster", static_cast<std::int64_t>(g.voxels_per_cluster)));
    if (g.samples_per_layer < 1 || !(g.step > 0.0) || !(g.floor > 0.0) || !(g.tolerance > 0.0)) {
      evuav::fail(ErrorKind::Validation, "gradcheck: samples, step, floor and tolerance must be positive");
    }
    const auto layers = evuav::gradcheck_model(mc, g);
    int ok = 1;
    for (const auto& l : layers) {
      if (!(l.max_rel_error < g.tolerance)) ok = 0;
      if (on_layer) on_layer(l.name.c_str(), l.checked, l.skipped, l.max_rel_error, user);
    }
    *passed = ok;
  });
}

evuav_status evuav_ablate(const evuav_config* cfg, evuav_row_fn on_row, void* user) {
  return guard([&] {
    evuav::run_ablation(kv_or_empty(cfg), [&](const evuav::AblationRow& r) {
      if (on_row) on_row(evuav::format_ablation_row(r).c_str(), user);
    });
  });
}

const char* evuav_ablation_header(void) {
  static const std::string h = evuav::ablation_header();
  return h.c_str();
}

}  // extern "C"
