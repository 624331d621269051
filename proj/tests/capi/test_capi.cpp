#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "evuav/evuav.h"
#include "scratch.hpp"

using evuav::testing::ScratchDir;

namespace {

evuav_config* config(std::initializer_list<const char*> assignments) {
  evuav_config* c = nullptr;
  REQUIRE(evuav_config_new(&c) == EVUAV_OK);
  for (const char* a : assignments) REQUIRE(evuav_config_apply(c, a) == EVUAV_OK);
  return c;
}

std::string take(char* s) {
  std::string out(s);
  evuav_string_free(s);
  return out;
}

evuav_stream* tiny_scene(const char* seed) {
  auto* c = config({"scene.width=32", "scene.height=24", "scene.duration_us=200000", "scene.edge_count=1",
                    "scene.noise_rate=2"});
  evuav_config_set(c, "seed", seed);
  evuav_stream* s = nullptr;
  REQUIRE(evuav_synth(c, &s) == EVUAV_OK);
  evuav_config_free(c);
  return s;
}

const char* kTinyModel[] = {"model.channels=4,8,8", "model.patch_size=4,4,16"};

}  // namespace

TEST_CASE("null arguments and error text") {
  CHECK(evuav_config_new(nullptr) == EVUAV_ERR_ARGUMENT);
  CHECK(std::strlen(evuav_last_error()) > 0);
  CHECK(evuav_stream_size(nullptr) == 0);
  CHECK(evuav_stream_has_labels(nullptr) == 0);
  evuav_config_free(nullptr);
  evuav_stream_free(nullptr);
  evuav_model_free(nullptr);
  evuav_grid_free(nullptr);
  CHECK(std::string(evuav_status_name(EVUAV_ERR_PARSE)) != evuav_status_name(EVUAV_ERR_IO));
}

TEST_CASE("config round trip and key checks") {
  auto* c = config({"seed=7", "train.epochs=3"});
  char* v = nullptr;
  REQUIRE(evuav_config_get(c, "train.epochs", &v) == EVUAV_OK);
  CHECK(take(v) == "3");
  CHECK(evuav_config_get(c, "nope", &v) == EVUAV_ERR_VALIDATION);
  CHECK(evuav_config_apply(c, "no-equals-sign") == EVUAV_ERR_VALIDATION);
  CHECK(evuav_config_check(c, "train") == EVUAV_OK);
  CHECK(evuav_config_check(c, "synth") == EVUAV_ERR_VALIDATION);
  CHECK(std::string(evuav_last_error()).find("train.epochs") != std::string::npos);
  CHECK(evuav_config_check(c, "fly") == EVUAV_ERR_VALIDATION);

  evuav_config* eff = nullptr;
  REQUIRE(evuav_config_effective(c, "train", &eff) == EVUAV_OK);
  REQUIRE(evuav_config_get(eff, "train.lr_start", &v) == EVUAV_OK);
  CHECK(std::stod(take(v)) == 1e-2);
  char* text = nullptr;
  REQUIRE(evuav_config_to_text(eff, &text) == EVUAV_OK);
  evuav_config* back = nullptr;
  const std::string t = take(text);
  REQUIRE(evuav_config_parse(t.c_str(), &back) == EVUAV_OK);
  REQUIRE(evuav_config_to_text(back, &text) == EVUAV_OK);
  CHECK(take(text) == t);
  evuav_config_free(back);
  evuav_config_free(eff);
  evuav_config_free(c);
}

TEST_CASE("stream create, slice, save and load") {
  const evuav_event ev[] = {{300, 1, 1, 1}, {100, 2, 2, -1}, {200, 3, 3, 1}};
  const std::uint8_t lab[] = {1, 0, 0};
  evuav_stream* s = nullptr;
  REQUIRE(evuav_stream_create(ev, 3, 10, 10, lab, &s) == EVUAV_OK);
  CHECK(evuav_stream_size(s) == 3);
  std::vector<evuav_event> out(3);
  REQUIRE(evuav_stream_events(s, out.data(), 3) == EVUAV_OK);
  CHECK(out[0].t == 100);
  CHECK(out[2].t == 300);
  std::uint8_t l[3];
  REQUIRE(evuav_stream_labels(s, l, 3) == EVUAV_OK);
  CHECK(l[2] == 1);  // label travels with its event
  CHECK(evuav_stream_labels(s, l, 2) == EVUAV_ERR_CONTRACT);

  evuav_stream* part = nullptr;
  REQUIRE(evuav_stream_slice(s, 150, 300, &part) == EVUAV_OK);
  CHECK(evuav_stream_size(part) == 1);
  evuav_stream_free(part);

  ScratchDir dir;
  for (auto fmt : {EVUAV_FORMAT_TEXT, EVUAV_FORMAT_BINARY}) {
    const auto path = dir.file(fmt == EVUAV_FORMAT_TEXT ? "ev.txt" : "ev.bin");
    const auto lpath = path + ".labels";
    REQUIRE(evuav_stream_save(s, path.c_str(), fmt, lpath.c_str()) == EVUAV_OK);
    evuav_stream* r = nullptr;
    size_t warnings = 99;
    REQUIRE(evuav_stream_load(path.c_str(), EVUAV_FORMAT_AUTO, lpath.c_str(), &r, &warnings) == EVUAV_OK);
    CHECK(warnings == 0);
    std::vector<evuav_event> back(3);
    REQUIRE(evuav_stream_events(r, back.data(), 3) == EVUAV_OK);
    for (int i = 0; i < 3; ++i) {
      CHECK(back[i].t == out[i].t);
      CHECK(back[i].x == out[i].x);
      CHECK(back[i].pol == out[i].pol);
    }
    CHECK(evuav_stream_has_labels(r));
    evuav_stream_free(r);
  }
  evuav_stream* r = nullptr;
  CHECK(evuav_stream_load(dir.file("missing").c_str(), EVUAV_FORMAT_AUTO, nullptr, &r, nullptr) == EVUAV_ERR_IO);
  dir.write("bad.txt", "width 10 height 10\n1 2\n");
  CHECK(evuav_stream_load(dir.file("bad.txt").c_str(), EVUAV_FORMAT_TEXT, nullptr, &r, nullptr) == EVUAV_ERR_PARSE);
  const evuav_event off[] = {{0, 10, 0, 1}};
  CHECK(evuav_stream_create(off, 1, 10, 10, nullptr, &r) == EVUAV_ERR_VALIDATION);
  evuav_stream_free(s);
}

TEST_CASE("voxelize through the handle") {
  const evuav_event ev[] = {{0, 0, 0, 1}, {10, 0, 0, -1}, {1500, 3, 4, 1}};
  evuav_stream* s = nullptr;
  REQUIRE(evuav_stream_create(ev, 3, 10, 10, nullptr, &s) == EVUAV_OK);
  auto* c = config({});
  evuav_grid* g = nullptr;
  REQUIRE(evuav_voxelize(s, c, &g) == EVUAV_OK);
  REQUIRE(evuav_grid_size(g) == 2);
  std::int32_t key[3];
  double f[2];
  REQUIRE(evuav_grid_voxel(g, 0, key, f) == EVUAV_OK);
  CHECK(key[0] == 0);
  CHECK(f[0] == 2.0);
  CHECK(f[1] == 0.0);
  REQUIRE(evuav_grid_voxel(g, 1, key, f) == EVUAV_OK);
  CHECK(key[0] == 3);
  CHECK(key[1] == 4);
  CHECK(key[2] == 1);
  CHECK(evuav_grid_voxel(g, 2, key, f) == EVUAV_ERR_CONTRACT);
  evuav_grid_free(g);
  evuav_config_free(c);
  evuav_stream_free(s);
}

TEST_CASE("train, save, load, infer and eval") {
  REQUIRE(evuav_set_threads(1) == EVUAV_OK);
  evuav_stream* s = tiny_scene("1");
  auto* c = config({kTinyModel[0], kTinyModel[1], "train.epochs=2", "train.window_us=100000"});
  evuav_model* m = nullptr;
  REQUIRE(evuav_model_create(c, 3, &m) == EVUAV_OK);
  CHECK(evuav_model_parameter_count(m) > 0);

  std::vector<int> epochs;
  auto cb = [](int e, double, double, double, void* u) { static_cast<std::vector<int>*>(u)->push_back(e); };
  int best = 0;
  const evuav_stream* train[] = {s};
  REQUIRE(evuav_train(m, train, 1, nullptr, 0, c, cb, &epochs, &best) == EVUAV_OK);
  CHECK(epochs == std::vector<int>{1, 2});
  CHECK((best == 1 || best == 2));

  const size_t n = evuav_stream_size(s);
  std::vector<double> conf(n), conf2(n);
  REQUIRE(evuav_infer(m, s, 100000, conf.data(), n) == EVUAV_OK);
  ScratchDir dir;
  const auto ck = dir.file("model.ck");
  REQUIRE(evuav_model_save(m, ck.c_str()) == EVUAV_OK);
  evuav_model* m2 = nullptr;
  REQUIRE(evuav_model_load(ck.c_str(), &m2) == EVUAV_OK);
  REQUIRE(evuav_infer(m2, s, 100000, conf2.data(), n) == EVUAV_OK);
  CHECK(conf == conf2);

  const auto pp = dir.file("pred.bin");
  REQUIRE(evuav_predictions_save(conf.data(), n, pp.c_str()) == EVUAV_OK);
  double* loaded = nullptr;
  size_t count = 0;
  REQUIRE(evuav_predictions_load(pp.c_str(), &loaded, &count) == EVUAV_OK);
  CHECK(count == n);
  CHECK(std::memcmp(loaded, conf.data(), n * sizeof(double)) == 0);
  evuav_buffer_free(loaded);

  auto* ec = config({});
  const double* confs[] = {conf.data()};
  evuav_report rep{};
  char* text = nullptr;
  REQUIRE(evuav_eval(train, confs, 1, ec, &rep, &text) == EVUAV_OK);
  const std::string t = take(text);
  CHECK(t.find("iou\t") == 0);
  CHECK(rep.iou >= 0.0);
  CHECK(rep.iou <= 1.0);
  CHECK(rep.pd >= 0.0);

  evuav_stream* unlabeled = nullptr;
  const evuav_event one[] = {{0, 0, 0, 1}};
  REQUIRE(evuav_stream_create(one, 1, 32, 24, nullptr, &unlabeled) == EVUAV_OK);
  const evuav_stream* bad[] = {unlabeled};
  CHECK(evuav_train(m, bad, 1, nullptr, 0, c, nullptr, nullptr, nullptr) != EVUAV_OK);
  CHECK(evuav_infer(m, s, 100000, conf.data(), n - 1) == EVUAV_ERR_CONTRACT);
  CHECK(evuav_model_load(dir.file("nothing").c_str(), &m2) == EVUAV_ERR_IO);

  evuav_stream_free(unlabeled);
  evuav_config_free(ec);
  evuav_model_free(m2);
  evuav_model_free(m);
  evuav_config_free(c);
  evuav_stream_free(s);
}

TEST_CASE("annotation helpers") {
  evuav_stream* s = tiny_scene("2");
  ScratchDir dir;
  const auto boxes = dir.file("boxes.txt");
  REQUIRE(evuav_annotate_make_boxes(s, 50000, 0, boxes.c_str()) == EVUAV_OK);
  const size_t n = evuav_stream_size(s);
  std::vector<std::uint8_t> from_boxes(n), truth(n);
  REQUIRE(evuav_annotate_boxes(s, boxes.c_str(), from_boxes.data(), n) == EVUAV_OK);
  REQUIRE(evuav_stream_labels(s, truth.data(), n) == EVUAV_OK);
  for (size_t i = 0; i < n; ++i) {
    if (truth[i]) CHECK(from_boxes[i] == 1);
  }
  size_t frames = 0;
  REQUIRE(evuav_annotate_export_frames(s, 50000, dir.path().string().c_str(), &frames) == EVUAV_OK);
  CHECK(frames >= 4);
  CHECK_FALSE(evuav::testing::slurp(dir.file("frame_000000.pgm")).empty());
  evuav_stream_free(s);
}

TEST_CASE("gradcheck and ablation header") {
  auto* c = config({"model.channels=4,4,8", "model.patch_size=4,4,8", "gradcheck.samples=2"});
  int passed = 0, layers = 0;
  auto cb = [](const char*, int checked, int, double, void* u) {
    if (checked > 0) ++*static_cast<int*>(u);
  };
  REQUIRE(evuav_gradcheck(c, cb, &layers, &passed) == EVUAV_OK);
  CHECK(passed == 1);
  CHECK(layers > 5);
  CHECK(std::string(evuav_ablation_header()).rfind("table\t", 0) == 0);
  evuav_config_free(c);
}
