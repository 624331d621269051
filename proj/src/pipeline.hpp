#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "config.hpp"
#include "metrics.hpp"
#include "segnet.hpp"
#include "trainer.hpp"

namespace evuav {

// Subcommands understood by the command-line tool.
const std::vector<std::string>& command_names();

// Config keys each subcommand accepts; anything else is rejected.
std::set<std::string> command_keys(const std::string& command);

// Throws a validation error on an unknown command or key.
void check_command_config(const std::string& command, const KeyValueConfig& kv);

// Every key the command reads, with defaults filled in.
KeyValueConfig effective_config(const std::string& command, const KeyValueConfig& kv);

struct EvalSettings {
  double threshold = 0.5;
  DetectionConfig detection;

  static EvalSettings from_config(const KeyValueConfig& kv);
  void to_config(KeyValueConfig& kv) const;
};

struct AblationRow {
  std::string table;   // components, branches or dilations
  std::string label;
  ModelConfig model;
  LossKind loss = LossKind::Stc;
  std::size_t parameters = 0;
  DetectionReport report;
};

// "table\tconfig\tiou\tacc\tpd\tfa\tparams"
std::string ablation_header();
std::string format_ablation_row(const AblationRow& row);

// Configurations of the three ablation grids, without results:
//   components: GDSC / patch attention / STC loss toggles (six rows)
//   branches:   1..5 branches, dilations 1..B, widths rounded up to multiples of B
//   dilations:  (1,2,3,4) (1,2,3,5) (1,3,5,7) (1,3,5,9)
// `tables` selects a subset by name.
std::vector<AblationRow> ablation_grid(const ModelConfig& base, const std::set<std::string>& tables);

// Generates ablate.train_sequences + ablate.test_sequences scenes from the
// scene keys (seeds seed, seed+1, ...), trains every grid row from the same
// init seed, and reports test metrics per row as it finishes.
std::vector<AblationRow> run_ablation(const KeyValueConfig& kv,
                                      const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace evuav
