#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memtax/config.hpp"
#include "memtax/features.hpp"

namespace memtax {

inline const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> commands = {"index", "featurize", "taxonomy", "stats",
                                                    "train", "evaluate",  "cohort",   "synth"};
  return commands;
}

// Runs one stage. Outputs are written to a staging directory under the
// output directory and renamed into place only after the stage succeeds.
void run_command(const std::string& command, const RunConfig& config);

// Seeded subset of `ids` (round(fraction * n) of them, ascending) standing in
// for the population; shared by the stats and train stages.
std::vector<std::uint64_t> representative_ids(std::vector<std::uint64_t> ids, double fraction,
                                              std::uint64_t seed);

struct CohortInput {
  std::string name;
  std::vector<std::uint64_t> memorized_ids;
};

struct CohortRow {
  std::string name;
  std::size_t memorized = 0;
  std::array<std::size_t, 3> counts{};
  std::array<std::optional<double>, 3> percent;  // undefined when memorized == 0
};

// Per cohort, memorized counts and shares by taxonomy category. Unknown sample
// ids raise ValidationError; repeated cohort names raise ConfigError.
std::vector<CohortRow> cohort_report(const std::vector<CohortInput>& cohorts,
                                     std::span<const FeatureRecord> records);

nlohmann::ordered_json to_json(const std::vector<CohortRow>& rows);
// One row per cohort with count and percent columns per category.
std::string cohort_csv(const std::vector<CohortRow>& rows);

}  // namespace memtax
