// moalign: deterministic command-line harness around the alignment library.
//
// Subcommands: env-gen, data-build, iterate, verify, pareto. A single JSON
// config (see default_config) drives every run; any config path can be
// overridden on the command line as `--section.key value`. Exit codes:
// 0 success, 1 usage/config error, 2 verification failure, 3 runtime error.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moalign/align.hpp"
#include "moalign/env.hpp"
#include "moalign/loop.hpp"
#include "moalign/pdc.hpp"
#include "moalign/policy.hpp"
#include "moalign/rng.hpp"
#include "moalign/serialize.hpp"
#include "moalign/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moalign;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json default_config() {
  return json{
      {"schema", "moalign.config.v1"},
      {"env",
       {{"d", 16},
        {"n_objectives", 3},
        {"num_prompts", 400},
        {"candidates_per_prompt", 64},
        {"B", 1.0},
        {"prompts_per_patient", 2},
        {"group_count", 6},
        {"rho_alpha", 0.0},
        {"prompt_noise", 0.3}}},
      {"hp",
       {{"beta", 0.5},
        {"lambda", 0.01},
        {"delta", 0.1},
        {"weight_grid_step", 0.2},
        {"iterations", 3},
        {"pairs_per_objective", 1000},
        {"learning_rate", 0.05},
        {"epochs", 60},
        {"batch_size", 16},
        {"seed", 1}}},
      {"pdc",
       {{"samples_per_prompt", 1}, {"dedup_low", 0.5}, {"dedup_high", 0.8}}},
      {"verify",
       {{"trials", 500},
        {"pairs", 500},
        {"d", 4},
        {"n_objectives", 3},
        {"num_prompts", 20},
        {"candidates_per_prompt", 6},
        {"C", 1.0},
        {"calibrate", true},
        {"calibration_trials", 200}}},
      {"output_dir", "out"},
      {"jobs", 1}};
}

void merge_checked(json& base, const json& overlay, const std::string& prefix) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key()))
      throw UsageError("unknown config key: " + path);
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge_checked(slot, it.value(), path);
    } else if (slot.is_object() != it.value().is_object()) {
      throw UsageError("config key has wrong shape: " + path);
    } else {
      slot = it.value();
    }
  }
}

json* resolve_path(json& config, const std::string& dotted) {
  json* node = &config;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
  }
  return node;
}

void apply_override(json& config, const std::string& key, const std::string& value) {
  json* slot = resolve_path(config, key);
  if (!slot || slot->is_object())
    throw UsageError("unknown config key: --" + key);
  if (slot->is_string()) {
    *slot = value;
    return;
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded() || parsed.is_object() || parsed.is_array())
    throw UsageError("cannot parse value for --" + key + ": " + value);
  *slot = parsed;
}

struct Args {
  std::string command;
  json config = default_config();
  std::optional<std::string> env_file;
  std::optional<std::string> policy_file;
  std::optional<std::string> out;
  std::optional<std::string> which;
  std::optional<std::string> resume_from;
  std::optional<std::string> iter_dir;
  std::optional<std::string> axes;
};

const char* kUsage =
    "usage: moalign <env-gen|data-build|iterate|verify|pareto> [options]\n"
    "  common: --config FILE  --out PATH  --jobs N  --<config.path> VALUE\n"
    "  data-build: --env FILE [--policy FILE]\n"
    "  iterate:    [--env FILE] [--resume-from DIR/iter_k]\n"
    "  verify:     --which lemma1|theorem1\n"
    "  pareto:     --iter DIR [--axes A,B]\n"
    "env MOALIGN_SEED overrides hp.seed\n";

Args parse_args(int argc, char** argv) {
  if (argc < 2) throw UsageError("missing subcommand");
  Args args;
  args.command = argv[1];
  std::optional<std::string> config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
  for (int i = 2; i < argc; ++i) {
    std::string flag = argv[i];
    if (flag.rfind("--", 0) != 0)
      throw UsageError("expected a --flag, got: " + flag);
    if (i + 1 >= argc) throw UsageError("flag needs a value: " + flag);
    std::string value = argv[++i];
    std::string key = flag.substr(2);
    if (key == "config") config_file = value;
    else if (key == "env") args.env_file = value;
    else if (key == "policy") args.policy_file = value;
    else if (key == "out") args.out = value;
    else if (key == "which") args.which = value;
    else if (key == "resume-from") args.resume_from = value;
    else if (key == "iter") args.iter_dir = value;
    else if (key == "axes") args.axes = value;
    else overrides.emplace_back(key, value);
  }
  if (config_file) {
    json filed = json::parse(read_file(*config_file), nullptr, false);
    if (filed.is_discarded())
      throw UsageError("config file is not valid JSON: " + *config_file);
    merge_checked(args.config, filed, "");
  }
  for (const auto& [key, value] : overrides)
    apply_override(args.config, key, value);
  if (const char* s = std::getenv("MOALIGN_SEED")) {
    args.config["hp"]["seed"] = std::stoull(s);
  }
  return args;
}

GenParams gen_params(const json& config) {
  const json& e = config.at("env");
  GenParams gp;
  gp.d = e.at("d").get<int>();
  gp.n_objectives = e.at("n_objectives").get<int>();
  gp.num_prompts = e.at("num_prompts").get<int>();
  gp.candidates_per_prompt = e.at("candidates_per_prompt").get<int>();
  gp.B = e.at("B").get<double>();
  gp.prompts_per_patient = e.at("prompts_per_patient").get<int>();
  gp.group_count = e.at("group_count").get<int>();
  gp.rho_alpha = e.at("rho_alpha").get<double>();
  gp.prompt_noise = e.at("prompt_noise").get<double>();
  return gp;
}

Hyperparameters hyper(const json& config) {
  const json& h = config.at("hp");
  Hyperparameters hp;
  hp.beta = h.at("beta").get<double>();
  hp.lambda = h.at("lambda").get<double>();
  hp.delta = h.at("delta").get<double>();
  hp.weight_grid_step = h.at("weight_grid_step").get<double>();
  hp.iterations = h.at("iterations").get<int>();
  hp.pairs_per_objective = h.at("pairs_per_objective").get<long>();
  hp.learning_rate = h.at("learning_rate").get<double>();
  hp.epochs = h.at("epochs").get<int>();
  hp.batch_size = h.at("batch_size").get<int>();
  hp.seed = h.at("seed").get<std::uint64_t>();
  hp.validate();
  return hp;
}

Environment load_or_generate_env(const Args& args, const Hyperparameters& hp) {
  if (args.env_file) return environment_from_json(read_file(*args.env_file));
  return Environment::generate(gen_params(args.config), derive_seed(hp.seed, 100));
}

int cmd_env_gen(const Args& args) {
  Hyperparameters hp = hyper(args.config);
  Environment env =
      Environment::generate(gen_params(args.config), derive_seed(hp.seed, 100));
  fs::path out = args.out ? fs::path(*args.out)
                          : fs::path(args.config.at("output_dir")
                                         .get<std::string>()) /
                                "env.json";
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file(out, to_json(env));
  std::cout << "wrote " << out.string() << ": d=" << env.dim
            << " objectives=" << env.n_objectives
            << " prompts=" << env.n_prompts
            << " responses=" << env.n_responses << "\n";
  return 0;
}

int cmd_data_build(const Args& args) {
  if (!args.env_file) throw UsageError("data-build requires --env");
  Hyperparameters hp = hyper(args.config);
  Environment env = environment_from_json(read_file(*args.env_file));
  Policy policy = args.policy_file
                      ? policy_from_json(read_file(*args.policy_file))
                      : fit_sft(env);
  const json& p = args.config.at("pdc");
  BuildResult built = build_all(
      policy, env, env.builtin_scorers(), hp.pairs_per_objective,
      derive_seed(hp.seed, 101), p.at("samples_per_prompt").get<int>(),
      p.at("dedup_low").get<double>(), p.at("dedup_high").get<double>());
  fs::path out = args.out ? fs::path(*args.out)
                          : fs::path(args.config.at("output_dir").get<std::string>());
  fs::create_directories(out);
  json report{{"schema", "moalign.build_report.v1"}, {"objectives", json::array()}};
  for (std::size_t k = 0; k < built.datasets.size(); ++k) {
    fs::path file = out / ("objective_" + std::to_string(k) + ".jsonl");
    write_file(file, to_jsonl(built.datasets[k], built.plans[k].shortfall));
    json groups = json::object();
    for (const auto& [label, members] : built.pools[k].groups)
      groups[std::to_string(label)] = members.size();
    report["objectives"].push_back(
        json{{"objective", k},
             {"pairs", built.datasets[k].size()},
             {"requested", built.plans[k].requested},
             {"capacity", built.plans[k].capacity},
             {"shortfall", built.plans[k].shortfall},
             {"group_sizes", std::move(groups)}});
    std::cout << "objective " << k << ": " << built.datasets[k].size()
              << " pairs" << (built.plans[k].shortfall ? " (shortfall)" : "")
              << "\n";
  }
  write_file(out / "build_report.json", report.dump(2) + "\n");
  return 0;
}

int cmd_iterate(const Args& args) {
  Hyperparameters hp = hyper(args.config);
  Environment env = load_or_generate_env(args, hp);
  fs::path out = args.out ? fs::path(*args.out)
                          : fs::path(args.config.at("output_dir").get<std::string>());
  fs::create_directories(out);
  write_file(out / "env.json", to_json(env));

  std::vector<Scorer> scorers = env.builtin_scorers();
  IterationConfig ic;
  ic.hp = hp;
  const json& p = args.config.at("pdc");
  ic.samples_per_prompt = p.at("samples_per_prompt").get<int>();
  ic.dedup_low = p.at("dedup_low").get<double>();
  ic.dedup_high = p.at("dedup_high").get<double>();
  ic.jobs = args.config.at("jobs").get<int>();

  LoopState state;
  state.sft = fit_sft(env);
  if (args.resume_from) {
    fs::path prev(*args.resume_from);
    std::string name = prev.filename().string();
    if (name.rfind("iter_", 0) != 0)
      throw UsageError("--resume-from must point at an iter_<k> directory");
    state.reference = policy_from_json(read_file(prev / "policies" / "next_ref.json"));
    state.next_iteration = std::stoi(name.substr(5)) + 1;
  } else {
    state.reference = state.sft;
    write_file(out / "sft.json", to_json(state.sft));
    WeightMetrics sft_row = evaluate_policy(
        env, state.reference, WeightVector::uniform(env.n_objectives), scorers,
        hp.beta, state.reference);
    IterationRecord sft_record;
    sft_record.iteration = 0;
    sft_record.metrics.push_back(sft_row);
    write_file(out / "sft_metrics.csv", metrics_csv(sft_record, env.n_objectives));
  }

  std::vector<std::vector<ParetoPoint>> clouds;
  while (state.next_iteration <= hp.iterations) {
    IterationRecord record = run_iteration(state, env, scorers, ic);
    write_iteration(out, record, env, scorers);
    clouds.push_back(make_pareto_points(record.metrics, scorers));
    std::cout << "iteration " << record.iteration << ": "
              << record.policies.size() << " weight points, subopt(uniform)="
              << format_double(record.metrics.back().subopt) << "\n";
  }
  if (clouds.size() >= 2) {
    std::ostringstream prog;
    prog << "axis_a,axis_b,from,to,fraction_dominated\n";
    for (int a = 0; a < env.n_objectives; ++a)
      for (int b = a + 1; b < env.n_objectives; ++b)
        for (const auto& fp : front_progression(clouds, {a, b}))
          prog << a << "," << b << "," << fp.from << "," << fp.to << ","
               << format_double(fp.fraction) << "\n";
    write_file(out / "front_progression.csv", prog.str());
  }
  return 0;
}

int cmd_verify(const Args& args) {
  if (!args.which || (*args.which != "lemma1" && *args.which != "theorem1"))
    throw UsageError("verify requires --which lemma1|theorem1");
  Hyperparameters hp = hyper(args.config);
  const json& v = args.config.at("verify");
  int trials = v.at("trials").get<int>();
  if (trials < 100) throw UsageError("verify requires at least 100 trials");

  TrialConfig tc;
  tc.d = v.at("d").get<int>();
  tc.n_objectives = *args.which == "lemma1" ? 1 : v.at("n_objectives").get<int>();
  tc.pairs = v.at("pairs").get<long>();
  tc.delta = hp.delta;
  tc.lambda = hp.lambda;
  tc.B = args.config.at("env").at("B").get<double>();
  tc.C = v.at("C").get<double>();
  tc.beta = hp.beta;
  tc.num_prompts = v.at("num_prompts").get<int>();
  tc.candidates_per_prompt = v.at("candidates_per_prompt").get<int>();
  tc.jobs = args.config.at("jobs").get<int>();

  if (v.at("calibrate").get<bool>()) {
    TrialConfig cal = tc;
    cal.n_objectives = 1;
    tc.C = calibrate_constant(cal, v.at("calibration_trials").get<int>(),
                              derive_seed(hp.seed, 200));
    std::cout << "calibrated C=" << format_double(tc.C) << "\n";
  }
  VerifyResult result =
      *args.which == "lemma1"
          ? verify_lemma1(tc, trials, derive_seed(hp.seed, 201))
          : verify_theorem1(tc, trials, derive_seed(hp.seed, 202));

  fs::path out = args.out
                     ? fs::path(*args.out)
                     : fs::path(args.config.at("output_dir").get<std::string>()) /
                           ("verify_" + *args.which + ".csv");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ostringstream csv;
  csv << "trial,K,d,weight,rho,error,bound,violated\n";
  for (const auto& row : result.rows) {
    std::string w;
    for (std::size_t k = 0; k < row.weight.size(); ++k)
      w += (k ? ";" : "") + format_double(row.weight[k]);
    csv << row.trial << "," << tc.pairs << "," << tc.d << "," << w << ","
        << format_double(row.rho) << "," << format_double(row.error) << ","
        << format_double(row.bound) << "," << (row.violated ? "true" : "false")
        << "\n";
  }
  write_file(out, csv.str());

  double slack =
      tc.delta + 2.0 * std::sqrt(tc.delta * (1.0 - tc.delta) / trials);
  std::cout << *args.which << ": violation fraction "
            << format_double(result.violation_fraction) << " (threshold "
            << format_double(slack) << "), report " << out.string() << "\n";
  return result.violation_fraction <= slack ? 0 : 2;
}

int cmd_pareto(const Args& args) {
  if (!args.iter_dir) throw UsageError("pareto requires --iter DIR");
  fs::path dir(*args.iter_dir);
  if (!fs::exists(dir / "metrics.csv") || !fs::exists(dir / "summary.json"))
    throw std::runtime_error("missing metrics.csv or summary.json in " +
                             dir.string());
  json summary = json::parse(read_file(dir / "summary.json"));
  std::vector<Scorer> scorers;
  for (const auto& s : summary.at("scorers"))
    scorers.push_back(Scorer{s.at("name").get<std::string>(),
                             s.at("higher_better").get<bool>(), {}});
  int n = static_cast<int>(scorers.size());

  std::istringstream in(read_file(dir / "metrics.csv"));
  std::string line;
  std::getline(in, line);  // header: iteration,w*,expected_reward_*,scorer_mean_*,subopt
  std::vector<ParetoPoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> cols;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cols.push_back(std::stod(cell));
    if (static_cast<int>(cols.size()) != 2 + 3 * n)
      throw std::runtime_error("metrics.csv column count mismatch");
    ParetoPoint p;
    p.weight.assign(cols.begin() + 1, cols.begin() + 1 + n);
    for (int k = 0; k < n; ++k) {
      double v = cols[1 + 2 * n + static_cast<std::size_t>(k)];
      p.values.push_back(scorers[k].higher_better ? v : -v);
    }
    points.push_back(std::move(p));
  }

  std::vector<std::pair<int, int>> pairs;
  if (args.axes) {
    auto comma = args.axes->find(',');
    if (comma == std::string::npos) throw UsageError("--axes expects A,B");
    pairs.emplace_back(std::stoi(args.axes->substr(0, comma)),
                       std::stoi(args.axes->substr(comma + 1)));
  } else {
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  }
  fs::path out = args.out ? fs::path(*args.out) : dir;
  fs::create_directories(out);
  for (auto [a, b] : pairs) {
    auto front = pareto_front(points, {a, b});
    fs::path file =
        out / ("pareto_" + std::to_string(a) + "_" + std::to_string(b) + ".csv");
    write_file(file, front_csv(points, front, {a, b}, scorers));
    std::cout << "wrote " << file.string() << " (" << front.size()
              << " front points of " << points.size() << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    Args args = parse_args(argc, argv);
    if (args.command == "env-gen") return cmd_env_gen(args);
    if (args.command == "data-build") return cmd_data_build(args);
    if (args.command == "iterate") return cmd_iterate(args);
    if (args.command == "verify") return cmd_verify(args);
    if (args.command == "pareto") return cmd_pareto(args);
    throw UsageError("unknown subcommand: " + args.command);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << kUsage;
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
