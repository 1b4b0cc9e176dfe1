#include "moalign/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace moalign {

namespace {

using nlohmann::json;

constexpr const char* kEnvSchema = "moalign.env.v1";
constexpr const char* kPolicySchema = "moalign.policy.v1";
constexpr const char* kDatasetSchema = "moalign.dataset.v1";
constexpr const char* kSummarySchema = "moalign.summary.v1";

void require_schema(const json& j, const char* expected) {
  if (!j.contains("schema") || j.at("schema").get<std::string>() != expected)
    throw std::runtime_error(std::string("expected schema ") + expected);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string to_json(const Environment& env) {
  json j;
  j["schema"] = kEnvSchema;
  j["dim"] = env.dim;
  j["n_objectives"] = env.n_objectives;
  j["n_prompts"] = env.n_prompts;
  j["n_responses"] = env.n_responses;
  j["b"] = env.b;
  j["rho"] = env.rho;
  json phi = json::array();
  for (const auto& row : env.phi) {
    json prow = json::array();
    for (const auto& f : row) prow.push_back(f.values);
    phi.push_back(std::move(prow));
  }
  j["phi"] = std::move(phi);
  json theta = json::array();
  for (const auto& t : env.theta_star)
    theta.push_back(json{{"theta", t.theta}, {"bound", t.bound}});
  j["theta_star"] = std::move(theta);
  j["reference"] = env.reference;
  j["patient"] = env.patient;
  j["group"] = env.group;
  return j.dump(2) + "\n";
}

Environment environment_from_json(const std::string& text) {
  json j = json::parse(text);
  require_schema(j, kEnvSchema);
  Environment env;
  env.dim = j.at("dim").get<int>();
  env.n_objectives = j.at("n_objectives").get<int>();
  env.n_prompts = j.at("n_prompts").get<int>();
  env.n_responses = j.at("n_responses").get<int>();
  env.b = j.at("b").get<double>();
  env.rho = j.at("rho").get<std::vector<double>>();
  for (const auto& prow : j.at("phi")) {
    std::vector<FeatureVector> row;
    for (const auto& f : prow)
      row.emplace_back(f.get<std::vector<double>>());
    env.phi.push_back(std::move(row));
  }
  for (const auto& t : j.at("theta_star"))
    env.theta_star.emplace_back(t.at("theta").get<std::vector<double>>(),
                                t.at("bound").get<double>());
  env.reference = j.at("reference").get<std::vector<ResponseId>>();
  env.patient = j.at("patient").get<std::vector<int>>();
  env.group = j.at("group").get<std::vector<std::vector<int>>>();
  env.validate();
  return env;
}

std::string to_json(const Policy& policy) {
  json j;
  j["schema"] = kPolicySchema;
  j["base"] = policy.base;
  j["heads"] = policy.heads;
  return j.dump(2) + "\n";
}

Policy policy_from_json(const std::string& text) {
  json j = json::parse(text);
  require_schema(j, kPolicySchema);
  Policy p;
  p.base = j.at("base").get<std::vector<double>>();
  p.heads = j.at("heads").get<std::vector<std::vector<double>>>();
  if (!p.finite()) throw std::runtime_error("policy file has non-finite values");
  for (const auto& h : p.heads)
    if (h.size() != p.base.size())
      throw std::runtime_error("policy file has inconsistent head dimensions");
  return p;
}

std::string to_jsonl(const PreferenceDataset& dataset, bool shortfall) {
  std::ostringstream out;
  json header{{"schema", kDatasetSchema},
              {"objective", dataset.objective},
              {"size", dataset.size()},
              {"shortfall", shortfall}};
  out << header.dump() << "\n";
  for (const auto& p : dataset.pairs) {
    json row{{"objective", p.objective},
             {"prompt", p.prompt},
             {"chosen", p.chosen},
             {"rejected", p.rejected},
             {"score_chosen", p.score_chosen},
             {"score_rejected", p.score_rejected}};
    out << row.dump() << "\n";
  }
  return out.str();
}

PreferenceDataset dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("dataset file is empty");
  json header = json::parse(line);
  require_schema(header, kDatasetSchema);
  int objective = header.at("objective").get<int>();
  std::vector<PreferencePair> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    pairs.emplace_back(row.at("prompt").get<PromptId>(),
                       row.at("chosen").get<ResponseId>(),
                       row.at("rejected").get<ResponseId>(),
                       row.at("objective").get<int>(),
                       row.at("score_chosen").get<double>(),
                       row.at("score_rejected").get<double>());
  }
  if (pairs.size() != header.at("size").get<std::size_t>())
    throw std::runtime_error("dataset file size field disagrees with records");
  return PreferenceDataset(objective, std::move(pairs));
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string metrics_csv(const IterationRecord& record, int n_objectives) {
  std::ostringstream out;
  out << "iteration";
  for (int k = 0; k < n_objectives; ++k) out << ",w" << k;
  for (int k = 0; k < n_objectives; ++k) out << ",expected_reward_" << k;
  for (int k = 0; k < n_objectives; ++k) out << ",scorer_mean_" << k;
  out << ",subopt\n";
  for (const auto& row : record.metrics) {
    out << record.iteration;
    for (std::size_t k = 0; k < row.weight.size(); ++k)
      out << "," << format_double(row.weight[k]);
    for (double v : row.expected_reward) out << "," << format_double(v);
    for (double v : row.scorer_mean) out << "," << format_double(v);
    out << "," << format_double(row.subopt) << "\n";
  }
  return out.str();
}

std::string front_csv(const std::vector<ParetoPoint>& points,
                      const std::vector<ParetoPoint>& front,
                      std::pair<int, int> axes,
                      const std::vector<Scorer>& scorers) {
  auto on_front = [&](const ParetoPoint& p) {
    for (const auto& q : front)
      if (q.weight == p.weight && q.values == p.values) return true;
    return false;
  };
  std::ostringstream out;
  std::size_t n = points.empty() ? 0 : points.front().weight.size();
  out << "";
  for (std::size_t k = 0; k < n; ++k) out << (k ? "," : "") << "w" << k;
  out << ",metric_a,metric_b,direction_a,direction_b,on_front\n";
  for (const auto& p : points) {
    for (std::size_t k = 0; k < p.weight.size(); ++k)
      out << (k ? "," : "") << format_double(p.weight[k]);
    out << "," << format_double(p.values.at(axes.first)) << ","
        << format_double(p.values.at(axes.second)) << ","
        << (scorers.at(axes.first).higher_better ? "higher" : "reversed") << ","
        << (scorers.at(axes.second).higher_better ? "higher" : "reversed") << ","
        << (on_front(p) ? "true" : "false") << "\n";
  }
  return out.str();
}

std::string summary_json(const IterationRecord& record,
                         const std::vector<Scorer>& scorers) {
  json j;
  j["schema"] = kSummarySchema;
  j["iteration"] = record.iteration;
  j["warnings"] = record.warnings;
  json plans = json::array();
  for (const auto& plan : record.plans)
    plans.push_back(json{{"requested", plan.requested},
                         {"total", plan.total},
                         {"capacity", plan.capacity},
                         {"shortfall", plan.shortfall}});
  j["plans"] = std::move(plans);
  json quantiles = json::array();
  for (const auto& q : record.chosen_quantiles)
    quantiles.push_back(std::vector<double>(q.begin(), q.end()));
  j["chosen_score_quantiles"] = std::move(quantiles);
  j["reference_scorer_mean"] = record.reference_scorer_mean;
  json names = json::array();
  for (const auto& s : scorers)
    names.push_back(json{{"name", s.name}, {"higher_better", s.higher_better}});
  j["scorers"] = std::move(names);
  return j.dump(2) + "\n";
}

void write_iteration(const std::filesystem::path& root,
                     const IterationRecord& record, const Environment& env,
                     const std::vector<Scorer>& scorers) {
  namespace fs = std::filesystem;
  fs::path dir = root / ("iter_" + std::to_string(record.iteration));
  fs::create_directories(dir / "datasets");
  fs::create_directories(dir / "policies");

  for (std::size_t k = 0; k < record.datasets.size(); ++k)
    write_file(dir / "datasets" / ("objective_" + std::to_string(k) + ".jsonl"),
               to_jsonl(record.datasets[k], record.plans[k].shortfall));

  for (std::size_t i = 0; i < record.policies.size(); ++i) {
    json j = json::parse(to_json(record.policies[i].second));
    j["weight"] = record.policies[i].first.values();
    write_file(dir / "policies" / ("policy_" + std::to_string(i) + ".json"),
               j.dump(2) + "\n");
  }
  write_file(dir / "policies" / "next_ref.json", to_json(record.next_reference));

  write_file(dir / "metrics.csv", metrics_csv(record, env.n_objectives));

  std::vector<ParetoPoint> points = make_pareto_points(record.metrics, scorers);
  for (int a = 0; a < env.n_objectives; ++a) {
    for (int b = a + 1; b < env.n_objectives; ++b) {
      auto front = pareto_front(points, {a, b});
      write_file(dir / ("fronts_" + std::to_string(a) + "_" + std::to_string(b) +
                        ".csv"),
                 front_csv(points, front, {a, b}, scorers));
    }
  }
  write_file(dir / "summary.json", summary_json(record, scorers));
}

}  // namespace moalign
