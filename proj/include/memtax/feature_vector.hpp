#pragma once

#include <string>
#include <vector>

#include "memtax/features.hpp"

namespace memtax {

// Canonical numeric feature order used by the statistics and the predictors.
// Counts enter as log1p(count) and perplexities as log(perplexity); template
// kinds become two 0/1 indicators.
const std::vector<std::string>& model_feature_names();

std::size_t model_feature_index(const std::string& name);  // throws ArgumentError

// Throws ValidationError when a perplexity is missing.
std::vector<double> model_features(const FeatureRecord& record);

}  // namespace memtax
