#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "moalign/env.hpp"
#include "moalign/loop.hpp"
#include "moalign/policy.hpp"

namespace moalign {

/// Shortest round-trip decimal rendering (17 significant digits) so replayed
/// runs compare byte-identical.
std::string format_double(double v);

std::string to_json(const Environment& env);
Environment environment_from_json(const std::string& text);

std::string to_json(const Policy& policy);
Policy policy_from_json(const std::string& text);

/// JSONL: one header record (schema, objective, size, shortfall) followed by
/// one record per pair.
std::string to_jsonl(const PreferenceDataset& dataset, bool shortfall);
PreferenceDataset dataset_from_jsonl(const std::string& text);

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// CSV table of the per-weight metric rows (17-significant-digit floats).
std::string metrics_csv(const IterationRecord& record, int n_objectives);

/// CSV of all sweep points for one axis pair with an on_front marker and
/// per-axis direction columns.
std::string front_csv(const std::vector<ParetoPoint>& points,
                      const std::vector<ParetoPoint>& front,
                      std::pair<int, int> axes,
                      const std::vector<Scorer>& scorers);

/// Summary JSON: warnings, plan shortfalls, chosen-score quantiles, and
/// reference scorer means.
std::string summary_json(const IterationRecord& record,
                         const std::vector<Scorer>& scorers);

/// Writes iter_<i>/datasets/*.jsonl, policies/*.json (plus next_ref.json),
/// metrics.csv, fronts_<a>_<b>.csv, and summary.json under `root`.
void write_iteration(const std::filesystem::path& root,
                     const IterationRecord& record, const Environment& env,
                     const std::vector<Scorer>& scorers);

}  // namespace moalign
