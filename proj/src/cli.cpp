#include "nasoa/cli.h"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nasoa/arch_encoding.h"
#include "nasoa/cost_model.h"
#include "nasoa/moo_search.h"
#include "nasoa/online_predictor.h"
#include "nasoa/schedule_generator.h"
#include "nasoa/zoo_analysis.h"

namespace nasoa::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingInput("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Applies key=value lines to options not given on the command line.
void apply_config(CLI::App* cmd, const std::string& path) {
  std::istringstream in(slurp(path));
  std::string line;
  int n = 0;
  std::set<std::string> keys;
  while (std::getline(in, line)) {
    ++n;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    const std::string where = path + ":" + std::to_string(n);
    if (eq == std::string::npos) throw BadInput(where + ": expected key=value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key == "config" || key == "help") throw BadInput(where + ": '" + key + "' not allowed");
    if (!keys.insert(key).second) throw BadInput(where + ": duplicate key '" + key + "'");
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr) throw BadInput(where + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw BadInput(where + ": " + e.what());
    }
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key=value file; keys are the long flag names");
  sub->add_option("--out", c.out, "run directory (default runs/<timestamp>-<command>-seed<seed>)");
  sub->add_option("--seed", c.seed, "random seed");
}

fs::path run_dir(const Common& c, const std::string& command) {
  fs::path dir;
  if (!c.out.empty()) {
    dir = c.out;
  } else {
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &utc);
    dir = fs::path("runs") / (std::string(stamp) + "-" + command + "-seed" + std::to_string(c.seed));
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_manifest(const fs::path& dir, const std::string& command, const Common& c,
                    const std::vector<std::string>& args, const std::vector<std::string>& files) {
  std::ofstream os = open_out(dir / "manifest.txt");
  os << "command=" << command << "\n";
  os << "config=" << (c.config.empty() ? "-" : c.config) << "\n";
  os << "config_hash=" << (c.config.empty() ? "-" : fnv1a_hex(slurp(c.config))) << "\n";
  os << "seed=" << c.seed << "\n";
  os << "version=" << kVersion << "\n";
  os << "output_dir=" << dir.string() << "\n";
  os << "args=";
  for (std::size_t i = 0; i < args.size(); ++i) os << (i ? " " : "") << args[i];
  os << "\n";
  for (const std::string& f : files) os << "output=" << f << "\n";
}

// ---------------------------------------------------------------------------
// search

struct SearchArgs {
  std::string phase = "both";
  int nodes = 24;
  int generations = 20;
  double tmax = std::numeric_limits<double>::infinity();
  int k = 12;
  int keep = 10;
  int elite = 0;
  int threads = 1;
};

ojson zoo_json(const std::vector<ZooEntry>& zoo) {
  ojson arr = ojson::array();
  for (const ZooEntry& e : zoo) {
    arr.push_back({{"name", e.name},
                   {"encoding", e.encoding},
                   {"reference_accuracy", e.reference_accuracy},
                   {"step_time_ms", e.step_time_ms},
                   {"params", e.costs.params},
                   {"macs", e.costs.macs},
                   {"activations", e.costs.activations}});
  }
  return ojson{{"entries", arr}};
}

std::vector<BlockSpec> reference_blocks() {
  std::vector<BlockSpec> out;
  std::set<std::string> seen;
  for (const ZooEntry& e : reference_zoo()) {
    if (seen.insert(serialize_block(e.spec.block)).second) out.push_back(e.spec.block);
  }
  return out;
}

std::vector<std::string> cmd_search(const SearchArgs& a, const Common& c, const fs::path& dir,
                                    std::ostream& out) {
  SearchConfig cfg;
  cfg.nodes = a.nodes;
  cfg.generations = a.generations;
  cfg.max_step_time_ms = a.tmax;
  cfg.seed = c.seed;
  cfg.elite_size = a.elite;
  cfg.threads = a.threads;
  const Evaluator eval = surrogate_evaluator();

  std::vector<std::pair<std::string, const SearchResult*>> phases;
  TwoPhaseResult two;
  SearchResult single;
  if (a.phase == "both") {
    two.block_phase = run_search(cfg, BlockSpace(), eval);
    if (two.block_phase.front.empty()) {
      throw BadInput("no block-phase architecture meets --tmax " + num(a.tmax) + " ms");
    }
    two.selected_blocks = select_blocks(two.block_phase, a.keep);
    SearchConfig macro = cfg;
    macro.phase = SearchPhase::kMacro;
    two.macro_phase = run_search(macro, MacroSpace(two.selected_blocks), eval);
    phases = {{"block", &two.block_phase}, {"macro", &two.macro_phase}};
  } else if (a.phase == "block") {
    single = run_search(cfg, BlockSpace(), eval);
    phases = {{"block", &single}};
  } else {
    cfg.phase = SearchPhase::kMacro;
    single = run_search(cfg, MacroSpace(reference_blocks()), eval);
    phases = {{"macro", &single}};
  }
  const SearchResult& final_phase = *phases.back().second;

  {
    std::ofstream os = open_out(dir / "history.jsonl");
    for (const auto& [name, r] : phases) {
      for (const Individual& ind : r->history) {
        ojson j{{"phase", name},
                {"generation", ind.generation},
                {"encoding", ind.encoding},
                {"accuracy", ind.objectives.accuracy},
                {"step_time_ms", ind.objectives.step_time_ms},
                {"rank_at_end", ind.rank},
                {"feasible", ind.feasible}};
        if (!ind.error.empty()) j["error"] = ind.error;
        os << j.dump() << "\n";
      }
    }
  }
  {
    std::ofstream os = open_out(dir / "pareto.csv");
    os << "encoding,accuracy,step_time_ms,crowding\n";
    for (std::size_t i : final_phase.front) {
      const Individual& ind = final_phase.history[i];
      os << ind.encoding << "," << num(ind.objectives.accuracy) << ","
         << num(ind.objectives.step_time_ms) << "," << num(ind.crowding) << "\n";
    }
  }
  {
    std::ofstream os = open_out(dir / "front_scatter.csv");
    os << "phase,generation,encoding,accuracy,step_time_ms,feasible,on_front\n";
    for (const auto& [name, r] : phases) {
      const std::set<std::size_t> front(r->front.begin(), r->front.end());
      for (std::size_t i = 0; i < r->history.size(); ++i) {
        const Individual& ind = r->history[i];
        os << name << "," << ind.generation << "," << ind.encoding << ","
           << num(ind.objectives.accuracy) << "," << num(ind.objectives.step_time_ms) << ","
           << (ind.feasible ? 1 : 0) << "," << (front.count(i) ? 1 : 0) << "\n";
      }
    }
  }
  std::vector<ZooEntry> zoo;
  if (!final_phase.front.empty()) zoo = make_zoo(final_phase, a.k);
  open_out(dir / "zoo.json") << zoo_json(zoo).dump(2) << "\n";

  out << "search: " << final_phase.history.size() << " evaluations in the last phase, front of "
      << final_phase.front.size() << ", zoo of " << zoo.size() << " -> " << dir.string() << "\n";
  return {"history.jsonl", "pareto.csv", "front_scatter.csv", "zoo.json"};
}

// ---------------------------------------------------------------------------
// zoo

struct ZooArgs {
  std::string in;
  int k = 12;
  std::string report;
  std::vector<int> batches{32, 64, 128};
  std::vector<int> resolutions{224};
};

SearchResult read_pareto(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  if (line != "encoding,accuracy,step_time_ms,crowding") throw BadInput(p.string() + ": bad header");
  SearchResult r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 4) throw BadInput(p.string() + ": expected 4 columns in '" + line + "'");
    Individual ind;
    try {
      ind.spec = parse_architecture(f[0]);
      ind.objectives = {std::stod(f[1]), std::stod(f[2])};
      ind.crowding = std::stod(f[3]);
    } catch (const std::exception& e) {
      throw BadInput(p.string() + ": " + e.what());
    }
    ind.encoding = f[0];
    ind.feasible = true;
    ind.rank = 1;
    r.front.push_back(r.history.size());
    r.history.push_back(std::move(ind));
  }
  return r;
}

struct HistoryRow {
  std::string phase;
  std::string encoding;
  Objectives objectives;
};

std::vector<HistoryRow> read_history(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<HistoryRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.at("feasible").get<bool>()) continue;
      rows.push_back({j.at("phase").get<std::string>(), j.at("encoding").get<std::string>(),
                      {j.at("accuracy").get<double>(), j.at("step_time_ms").get<double>()}});
    } catch (const nlohmann::json::exception& e) {
      throw BadInput(p.string() + ": " + e.what());
    }
  }
  return rows;
}

// Refits after removing any columns the rank check names.
RegressionResult fit_dropping(DesignMatrix x, std::span<const double> y) {
  std::vector<std::string> dropped = drop_constant_columns(x);
  for (;;) {
    try {
      RegressionResult r = regression_analysis(x, y);
      r.dropped.insert(r.dropped.begin(), dropped.begin(), dropped.end());
      return r;
    } catch (const RankDeficientError& e) {
      for (const std::string& name : e.columns()) {
        const auto it = std::find(x.names.begin(), x.names.end(), name);
        if (it == x.names.end()) throw;
        const auto col = static_cast<std::size_t>(it - x.names.begin());
        x.names.erase(it);
        for (auto& row : x.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(col));
        dropped.push_back(name);
      }
      if (e.columns().empty()) throw;
    }
  }
}

std::vector<std::string> cmd_zoo(const ZooArgs& a, const fs::path& dir, std::ostream& out) {
  const fs::path in(a.in);
  const SearchResult front = read_pareto(in / "pareto.csv");
  if (front.front.empty()) throw BadInput((in / "pareto.csv").string() + ": empty front");
  const std::vector<ZooEntry> zoo = make_zoo(front, a.k);
  open_out(dir / "zoo.json") << zoo_json(zoo).dump(2) << "\n";

  const StepTimeTable table = build_step_time_table(zoo, a.batches, a.resolutions);
  {
    std::ofstream os = open_out(dir / "step_times.csv");
    os << "name,batch,resolution,step_time_ms\n";
    for (const auto& [key, ms] : table.entries()) {
      os << std::get<0>(key) << "," << std::get<1>(key) << "," << std::get<2>(key) << "," << num(ms)
         << "\n";
    }
  }
  std::vector<std::string> files{"zoo.json", "step_times.csv"};

  const std::vector<HistoryRow> history = read_history(in / "history.jsonl");
  std::map<std::string, std::vector<const HistoryRow*>> by_phase;
  std::set<std::pair<std::string, std::string>> seen;
  for (const HistoryRow& h : history) {
    if (seen.insert({h.phase, h.encoding}).second) by_phase[h.phase].push_back(&h);
  }
  std::ofstream eff = open_out(dir / "efficiency.csv");
  eff << "phase,encoding,accuracy,step_time_ms,efficiency_score\n";
  files.push_back("efficiency.csv");
  std::ostringstream report;
  for (const std::string phase : {"block", "macro"}) {
    const auto it = by_phase.find(phase);
    if (it == by_phase.end()) continue;
    std::vector<Objectives> objs;
    std::vector<ArchitectureSpec> specs;
    for (const HistoryRow* h : it->second) {
      objs.push_back(h->objectives);
      specs.push_back(parse_architecture(h->encoding));
    }
    std::vector<double> score;
    try {
      score = efficiency_score(objs);
    } catch (const std::invalid_argument& e) {
      report << phase << " phase: no regression (" << e.what() << ")\n\n";
      continue;
    }
    for (std::size_t i = 0; i < objs.size(); ++i) {
      eff << phase << "," << it->second[i]->encoding << "," << num(objs[i].accuracy) << ","
          << num(objs[i].step_time_ms) << "," << num(score[i]) << "\n";
    }
    if (a.report != "regression") continue;
    const DesignMatrix x = phase == "block" ? block_features(specs) : macro_features(specs);
    const std::string title = phase == "block" ? "Block-level terms vs efficiency score"
                                               : "Macro-level terms vs efficiency score";
    try {
      report << format_regression(fit_dropping(x, score), title) << "\n";
    } catch (const std::invalid_argument& e) {
      report << title << ": not enough points (" << e.what() << ")\n\n";
    }
  }
  if (a.report == "regression") {
    open_out(dir / "regression.txt") << report.str();
    files.push_back("regression.txt");
    out << report.str();
  }
  out << "zoo: " << zoo.size() << " entries from " << front.front.size() << " front members -> "
      << dir.string() << "\n";
  return files;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string zoo;
  int tasks = 5000;
  bool adaptive = true;
  std::string fixed = "3,6,10,14";
  int offline = 0;
  int passes = 1;
  std::string protocol = "own";
  double lr = stream_predictor_preset().learning_rate;
  double smoothing = stream_predictor_preset().smoothing;
  int layers = 10;
  int width = 64;
  double noise = 0.01;
  bool regret_only = false;
  int horizon = 6400;
  double c = 1.0;
  int experts = 8;
};

std::vector<ZooEntry> load_zoo(const std::string& path) {
  if (path.empty() || path == "builtin") return reference_zoo();
  const std::string text = slurp(path);
  std::vector<ZooEntry> zoo;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& e : j.at("entries")) {
      ZooEntry z;
      z.name = e.at("name").get<std::string>();
      z.encoding = e.at("encoding").get<std::string>();
      z.spec = parse_architecture(z.encoding);
      z.reference_accuracy = e.at("reference_accuracy").get<double>();
      z.step_time_ms = e.at("step_time_ms").get<double>();
      z.costs = evaluate_costs(z.spec, SurrogateConfig{}, ValidityRules{});
      zoo.push_back(std::move(z));
    }
  } catch (const std::exception& e) {
    throw BadInput(path + ": " + e.what());
  }
  if (zoo.empty()) throw BadInput(path + ": zoo has no entries");
  return zoo;
}

std::vector<int> parse_depths(const std::string& text) {
  std::vector<int> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  for (std::string cell; std::getline(ss, cell, ',');) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cell.size() || v < 1) throw CLI::ValidationError("--fixed", "bad depth '" + cell + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> cmd_regret(const SimulateArgs& a, const fs::path& dir, std::ostream& out) {
  const RegretResult r = regret_experiment(a.experts, a.horizon, a.c, alternating_losses(a.experts), true);
  {
    std::ofstream os = open_out(dir / "regret.csv");
    write_regret_csv(os, r.trace);
  }
  const double bound = regret_bound(a.experts, a.horizon, a.c);
  open_out(dir / "regret_summary.csv") << "L,T,C,played_avg,best_avg,gap,bound\n"
                                       << a.experts << "," << a.horizon << "," << num(a.c) << ","
                                       << num(r.played_avg) << "," << num(r.best_avg) << ","
                                       << num(r.gap) << "," << num(bound) << "\n";
  out << "regret: gap " << num(r.gap) << " bound " << num(bound) << " -> " << dir.string() << "\n";
  return {"regret.csv", "regret_summary.csv"};
}

std::vector<std::string> cmd_simulate(const SimulateArgs& a, const Common& c, const fs::path& dir,
                                      std::ostream& out) {
  if (a.regret_only) return cmd_regret(a, dir, out);

  const std::vector<ZooEntry> zoo = load_zoo(a.zoo);
  const int batches[] = {32, 64, 128};
  const int res[] = {224};
  const StepTimeTable table = build_step_time_table(zoo, batches, res);
  const ZooView view{zoo, &table, 224};

  SimulationConfig cfg;
  cfg.tasks = a.tasks;
  cfg.seed = c.seed;
  cfg.adaptive = a.adaptive;
  cfg.fixed_depths = parse_depths(a.fixed);
  cfg.protocol = a.protocol == "shared" ? StreamProtocol::kSharedProbe : StreamProtocol::kOwnDecision;
  cfg.predictor.learning_rate = a.lr;
  cfg.predictor.smoothing = a.smoothing;
  cfg.predictor.layers = a.layers;
  cfg.predictor.width = a.width;
  cfg.predictor.seed = c.seed;
  cfg.offline_samples = a.offline;
  cfg.offline_passes = a.passes;
  cfg.oracle = {c.seed, a.noise};
  const SimulationReport rep = simulate_stream(cfg, view);

  {
    std::ofstream os = open_out(dir / "metrics.csv");
    os << "model,n,all_mae,all_mse,seg_20_40_mae,seg_20_40_mse,seg_80_100_mae,seg_80_100_mse\n";
    // Statistics over an empty segment are left blank.
    auto cells = [](const ErrorStats& e) {
      return e.count ? num(e.mae) + "," + num(e.mse) : std::string(",");
    };
    for (const PredictorReport& p : rep.predictors) {
      os << p.name << "," << p.overall.count << "," << cells(p.overall) << "," << cells(p.seg_20_40)
         << "," << cells(p.seg_80_100) << "\n";
    }
  }
  {
    std::ofstream os = open_out(dir / "decisions.jsonl");
    for (std::size_t t = 0; t < rep.records.size(); ++t) {
      const StreamRecord& r = rep.records[t];
      const TaskMeta& m = r.request.meta;
      ojson j{{"task", t},
              {"num_classes", m.num_classes},
              {"avg_images_per_class", m.avg_images_per_class},
              {"std_images_per_class", m.std_images_per_class},
              {"domain_similarity", m.domain_similarity},
              {"train_set_size", m.train_set_size},
              {"batch_size", m.batch_size},
              {"time_limit_s", r.request.time_limit_s},
              {"model", r.decision.name},
              {"learning_rate", r.decision.regime.learning_rate},
              {"num_iterations", r.decision.regime.num_iterations},
              {"frozen_stages", r.decision.regime.frozen_stages},
              {"predicted", r.decision.predicted},
              {"accuracy", r.decision_accuracy},
              {"candidates", r.decision.candidates}};
      os << j.dump() << "\n";
    }
  }
  std::vector<std::string> files{"metrics.csv", "decisions.jsonl"};
  if (a.adaptive) {
    std::ofstream os = open_out(dir / "regret.csv");
    write_regret_csv(os, rep.adaptive_trace);
    files.push_back("regret.csv");
  }
  for (const PredictorReport& p : rep.predictors) {
    char line[160];
    std::snprintf(line, sizeof line, "%-18s MAE %.4f  20-40%% %.4f  80-100%% %.4f\n", p.name.c_str(),
                  p.overall.mae, p.seg_20_40.mae, p.seg_80_100.mae);
    out << line;
  }
  out << "simulate: " << rep.records.size() << " tasks -> " << dir.string() << "\n";
  return files;
}

}  // namespace

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-efficient architecture search and online fine-tuning schedules", "nasoa"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  SearchArgs sa;
  CLI::App* search = app.add_subcommand("search", "two-phase evolutionary search");
  add_common(search, common);
  search->add_option("--phase", sa.phase, "block, macro or both")
      ->check(CLI::IsMember({"block", "macro", "both"}));
  search->add_option("--nodes", sa.nodes, "offspring per generation")->check(CLI::PositiveNumber);
  search->add_option("--generations", sa.generations)->check(CLI::NonNegativeNumber);
  search->add_option("--tmax", sa.tmax, "step-time limit in ms")->check(CLI::PositiveNumber);
  search->add_option("--k", sa.k, "zoo size")->check(CLI::PositiveNumber);
  search->add_option("--keep", sa.keep, "blocks carried into the macro phase")
      ->check(CLI::PositiveNumber);
  search->add_option("--elite", sa.elite, "elite pool size (0: nodes)")->check(CLI::NonNegativeNumber);
  search->add_option("--threads", sa.threads, "evaluation threads (0: all cores)")
      ->check(CLI::NonNegativeNumber);

  ZooArgs za;
  CLI::App* zoo = app.add_subcommand("zoo", "model zoo, step-time table and regression report");
  add_common(zoo, common);
  zoo->add_option("--in", za.in, "search run directory")->required();
  zoo->add_option("--k", za.k, "zoo size")->check(CLI::PositiveNumber);
  zoo->add_option("--report", za.report)->check(CLI::IsMember({"", "regression"}));
  zoo->add_option("--batches", za.batches)->delimiter(',')->check(CLI::PositiveNumber);
  zoo->add_option("--resolutions", za.resolutions)->delimiter(',')->check(CLI::PositiveNumber);

  SimulateArgs ma;
  CLI::App* sim = app.add_subcommand("simulate", "online schedule generator on a synthetic stream");
  add_common(sim, common);
  sim->add_option("--zoo", ma.zoo, "zoo.json (default: the built-in ET-NAS zoo)");
  sim->add_option("--tasks", ma.tasks)->check(CLI::NonNegativeNumber);
  sim->add_flag("--adaptive,!--no-adaptive", ma.adaptive, "include the adaptive predictor");
  sim->add_option("--fixed", ma.fixed, "fixed-depth baselines, e.g. 3,6,10,14 or none");
  sim->add_option("--offline", ma.offline, "offline warm-start samples")->check(CLI::NonNegativeNumber);
  sim->add_option("--passes", ma.passes)->check(CLI::PositiveNumber);
  sim->add_option("--protocol", ma.protocol, "own or shared")
      ->check(CLI::IsMember({"own", "shared"}));
  sim->add_option("--lr", ma.lr)->check(CLI::PositiveNumber);
  sim->add_option("--smoothing", ma.smoothing)->check(CLI::Range(0.0, 1.0));
  sim->add_option("--layers", ma.layers)->check(CLI::PositiveNumber);
  sim->add_option("--width", ma.width)->check(CLI::PositiveNumber);
  sim->add_option("--noise", ma.noise)->check(CLI::Range(0.0, 0.5));
  sim->add_flag("--regret-only", ma.regret_only, "run the Hedge regret experiment only");
  sim->add_option("--T", ma.horizon, "regret horizon")->check(CLI::PositiveNumber);
  sim->add_option("--C", ma.c, "regret constant")->check(CLI::PositiveNumber);
  sim->add_option("--L", ma.experts, "regret experts")->check(CLI::PositiveNumber);

  std::vector<const char*> argv{"nasoa"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::FileError& e) {
    err << "error: " << e.what() << "\n";
    return kMissingInput;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    if (!common.config.empty()) apply_config(cmd, common.config);
    if (cmd == zoo && !fs::exists(fs::path(za.in) / "pareto.csv")) {
      throw MissingInput("no pareto.csv in " + za.in);
    }
    if (cmd == sim && !ma.regret_only && !ma.zoo.empty() && ma.zoo != "builtin" &&
        !fs::exists(ma.zoo)) {
      throw MissingInput("zoo file not found: " + ma.zoo);
    }
    if (cmd == sim) parse_depths(ma.fixed);
    const fs::path dir = run_dir(common, cmd->get_name());
    std::vector<std::string> files;
    if (cmd == search) files = cmd_search(sa, common, dir, out);
    if (cmd == zoo) files = cmd_zoo(za, dir, out);
    if (cmd == sim) files = cmd_simulate(ma, common, dir, out);
    write_manifest(dir, cmd->get_name(), common, args, files);
    return kOk;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << "\n";
    return kMissingInput;
  } catch (const BadInput& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

}  // namespace nasoa::cli
