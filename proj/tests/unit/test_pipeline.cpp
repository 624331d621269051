#include <set>

#include "doctest.h"
#include "error.hpp"
#include "pipeline.hpp"

using namespace evuav;

TEST_CASE("ablation grid has the expected rows") {
  ModelConfig base;
  base.stage_channels = {8, 12, 20};
  const auto rows = ablation_grid(base, {"components", "branches", "dilations"});
  REQUIRE(rows.size() == 15);

  const std::vector<std::string> comp{"base", "gdsc", "pa", "stc", "gdsc+pa", "gdsc+pa+stc"};
  for (int i = 0; i < 6; ++i) {
    CHECK(rows[i].table == "components");
    CHECK(rows[i].label == comp[i]);
  }
  CHECK_FALSE(rows[0].model.use_gdsc);
  CHECK_FALSE(rows[0].model.use_patch_attention);
  CHECK(rows[0].loss == LossKind::Bce);
  CHECK(rows[5].model.use_gdsc);
  CHECK(rows[5].model.use_patch_attention);
  CHECK(rows[5].loss == LossKind::Stc);
  CHECK(rows[3].loss == LossKind::Stc);
  CHECK_FALSE(rows[3].model.use_gdsc);

  for (int b = 1; b <= 5; ++b) {
    const auto& r = rows[5 + b];
    CHECK(r.table == "branches");
    CHECK(r.label == std::to_string(b));
    CHECK(r.model.branches == b);
    REQUIRE(r.model.dilation_rates.size() == static_cast<std::size_t>(b));
    for (int d = 0; d < b; ++d) CHECK(r.model.dilation_rates[d] == d + 1);
    for (std::size_t s = 0; s < 3; ++s) {
      const int c = r.model.stage_channels[s];
      CHECK(c % b == 0);
      CHECK(c >= base.stage_channels[s]);
      CHECK(c - base.stage_channels[s] < b);
    }
  }
  CHECK(rows[8].model.stage_channels == std::vector<int>{9, 12, 21});
  CHECK(rows[10].model.stage_channels == std::vector<int>{10, 15, 20});

  const std::vector<std::string> dil{"1,2,3,4", "1,2,3,5", "1,3,5,7", "1,3,5,9"};
  for (int i = 0; i < 4; ++i) {
    CHECK(rows[11 + i].table == "dilations");
    CHECK(rows[11 + i].label == dil[i]);
    CHECK(rows[11 + i].model.stage_channels == std::vector<int>{8, 12, 20});
  }
  CHECK(rows[14].model.dilation_rates == std::vector<int>{1, 3, 5, 9});
}

TEST_CASE("ablation grid subsets and errors") {
  CHECK(ablation_grid(ModelConfig{}, {"dilations"}).size() == 4);
  CHECK(ablation_grid(ModelConfig{}, {}).empty());
  CHECK_THROWS_AS(ablation_grid(ModelConfig{}, {"losses"}), Error);
}

TEST_CASE("ablation row formatting") {
  AblationRow r;
  r.table = "branches";
  r.label = "3";
  r.parameters = 1234;
  r.report.iou = 0.5;
  r.report.fa = 1.25e-6;
  const auto line = format_ablation_row(r);
  CHECK(line.rfind("branches\t3\t", 0) == 0);
  CHECK(line.find("\t1234") != std::string::npos);
  CHECK(ablation_header() == "table\tconfig\tiou\tacc\tpd\tfa\tparams");
}
