#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <sstream>
#include <string>

#include "doctest.h"
#include "evuav/evuav.h"
#include "scratch.hpp"

using evuav::testing::ScratchDir;
using evuav::testing::slurp;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(const ScratchDir& dir, const std::string& args) {
  const auto out = dir.file("stdout"), err = dir.file("stderr");
  const std::string cmd = std::string(EVUAV_CLI) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const std::string kScene =
    " -s scene.width=32 -s scene.height=24 -s scene.duration_us=200000 -s scene.edge_count=1 -s scene.noise_rate=2";
const std::string kModel = " -s model.channels=4,8,8 -s model.patch_size=4,4,16";

}  // namespace

TEST_CASE("usage errors exit with 1") {
  ScratchDir dir;
  CHECK(run(dir, "").code == 1);
  CHECK(run(dir, "fly").code == 1);
  CHECK(run(dir, "synth").code == 1);  // --out missing
  const auto r = run(dir, "synth -o " + dir.file("a.bin") + " -s train.epochs=3");
  CHECK(r.code == 1);
  CHECK(r.err.find("train.epochs") != std::string::npos);
  CHECK(run(dir, "infer -m " + dir.file("none") + " -e " + dir.file("none") + " -o x").code == 2);  // i/o
  CHECK(run(dir, "synth -o " + dir.file("a.bin") + " --threads 0").code == 1);
  CHECK(run(dir, "--help").code == 0);
}

TEST_CASE("synth, train, infer and eval agree with the library") {
  ScratchDir dir;
  const auto ev = dir.file("ev.bin"), ck = dir.file("m.ck"), pred = dir.file("p.bin"), rep = dir.file("r.txt");
  REQUIRE(run(dir, "synth --seed 4 -o " + ev + kScene).code == 0);
  CHECK_FALSE(slurp(ev + ".labels").empty());
  CHECK(slurp(ev + ".run.cfg").find("seed=4") != std::string::npos);
  REQUIRE(run(dir, "train --train " + ev + " -o " + ck + kModel + " -s train.epochs=2 -s train.window_us=100000")
              .code == 0);
  CHECK(slurp(ck + ".cfg").find("model.channels=4,8,8") != std::string::npos);
  REQUIRE(run(dir, "infer -m " + ck + " -e " + ev + " -o " + pred + " -s train.window_us=100000").code == 0);
  const auto r = run(dir, "eval -e " + ev + " -p " + pred + " -o " + rep);
  REQUIRE(r.code == 0);
  const std::string report = slurp(rep);

  // Same numbers through the library.
  evuav_stream* s = nullptr;
  REQUIRE(evuav_stream_load(ev.c_str(), EVUAV_FORMAT_AUTO, (ev + ".labels").c_str(), &s, nullptr) == EVUAV_OK);
  double* conf = nullptr;
  size_t n = 0;
  REQUIRE(evuav_predictions_load(pred.c_str(), &conf, &n) == EVUAV_OK);
  REQUIRE(n == evuav_stream_size(s));
  evuav_model* m = nullptr;
  REQUIRE(evuav_model_load(ck.c_str(), &m) == EVUAV_OK);
  std::vector<double> mine(n);
  REQUIRE(evuav_infer(m, s, 100000, mine.data(), n) == EVUAV_OK);
  CHECK(std::equal(mine.begin(), mine.end(), conf));
  evuav_config* c = nullptr;
  evuav_config_new(&c);
  const evuav_stream* gt[] = {s};
  const double* cs[] = {conf};
  evuav_report out{};
  char* text = nullptr;
  REQUIRE(evuav_eval(gt, cs, 1, c, &out, &text) == EVUAV_OK);
  CHECK(report == std::string(text));
  evuav_string_free(text);
  evuav_config_free(c);
  evuav_model_free(m);
  evuav_buffer_free(conf);
  evuav_stream_free(s);

  CHECK(run(dir, "eval -e " + ev + " -p " + pred + " " + pred).code == 1);
}

TEST_CASE("runs are byte-for-byte reproducible") {
  ScratchDir dir;
  for (const char* tag : {"a", "b"}) {
    const std::string ev = dir.file(std::string(tag) + ".bin"), ck = dir.file(std::string(tag) + ".ck");
    REQUIRE(run(dir, "synth --seed 9 --threads 1 -o " + ev + kScene).code == 0);
    REQUIRE(run(dir, "train --threads 1 --train " + ev + " -o " + ck + kModel +
                         " -s train.epochs=2 -s train.window_us=100000")
                .code == 0);
    REQUIRE(run(dir, "infer --threads 1 -m " + ck + " -e " + ev + " -o " + dir.file(std::string(tag) + ".pred") +
                         " -s train.window_us=100000")
                .code == 0);
  }
  for (const char* suffix : {".bin", ".bin.labels", ".ck", ".pred"}) {
    const auto a = slurp(dir.file(std::string("a") + suffix)), b = slurp(dir.file(std::string("b") + suffix));
    CHECK_MESSAGE(a == b, suffix);
    CHECK_FALSE(a.empty());
  }
}

TEST_CASE("annotate round trip and voxelize") {
  ScratchDir dir;
  const auto ev = dir.file("ev.txt");
  REQUIRE(run(dir, "synth --seed 2 -s synth.format=text -o " + ev + kScene).code == 0);
  const auto boxes = dir.file("boxes.txt");
  REQUIRE(run(dir, "annotate -e " + ev + " --make-boxes " + boxes).code == 0);
  CHECK(slurp(boxes).rfind("delta_t_us 50000", 0) == 0);
  const auto lab = dir.file("from_boxes.labels");
  REQUIRE(run(dir, "annotate -e " + ev + " --boxes " + boxes + " -o " + lab).code == 0);
  CHECK(slurp(lab).size() == slurp(ev + ".labels").size());
  const auto vox = dir.file("vox.txt");
  REQUIRE(run(dir, "voxelize -e " + ev + " -o " + vox).code == 0);
  CHECK(slurp(vox).rfind("voxel_size 1 1 1000", 0) == 0);
}

TEST_CASE("gradcheck exit code") {
  ScratchDir dir;
  const auto r = run(dir, "gradcheck -s model.channels=4,4,8 -s model.patch_size=4,4,8 -s gradcheck.samples=2");
  CHECK(r.code == 0);
  CHECK(r.out.find("stem.weight") != std::string::npos);
  CHECK(run(dir, "gradcheck -s gradcheck.tolerance=0").code == 1);
  CHECK(run(dir, "gradcheck -s model.channels=4,4,8 -s model.patch_size=4,4,8 -s gradcheck.samples=2 "
                 "-s gradcheck.tolerance=1e-300")
            .code == 2);
}
