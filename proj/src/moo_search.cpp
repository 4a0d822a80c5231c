#include "nasoa/moo_search.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace nasoa {

bool dominates(const Objectives& a, const Objectives& b) {
  const bool no_worse = a.accuracy >= b.accuracy && a.step_time_ms <= b.step_time_ms;
  const bool better = a.accuracy > b.accuracy || a.step_time_ms < b.step_time_ms;
  return no_worse && better;
}

std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const Objectives> pop) {
  const std::size_t n = pop.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<std::size_t>> fronts(1);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      if (dominates(pop[p], pop[q])) {
        dominated[p].push_back(q);
        ++count[q];
      } else if (dominates(pop[q], pop[p])) {
        dominated[q].push_back(p);
        ++count[p];
      }
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (count[p] == 0) fronts[0].push_back(p);
  }
  while (!fronts.back().empty()) {
    std::vector<std::size_t> next;
    for (std::size_t p : fronts.back()) {
      for (std::size_t q : dominated[p]) {
        if (--count[q] == 0) next.push_back(q);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(next));
  }
  fronts.pop_back();
  return fronts;
}

std::vector<double> crowding_distance(std::span<const Objectives> front) {
  const std::size_t n = front.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> d(n, 0.0);
  if (n <= 2) {
    std::fill(d.begin(), d.end(), kInf);
    return d;
  }
  for (int obj = 0; obj < 2; ++obj) {
    auto value = [&](std::size_t i) {
      return obj == 0 ? front[i].accuracy : front[i].step_time_ms;
    };
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
    const double range = value(idx.back()) - value(idx.front());
    if (range <= 0) continue;
    d[idx.front()] = kInf;
    d[idx.back()] = kInf;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      d[idx[k]] += (value(idx[k + 1]) - value(idx[k - 1])) / range;
    }
  }
  return d;
}

double hypervolume(std::span<const Objectives> points, const Objectives& ref) {
  if (points.empty()) return 0;
  // Dominated points are dropped first so that adding one never re-slices the sum.
  std::vector<Objectives> pts;
  const auto fronts = non_dominated_sort(points);
  for (std::size_t i : fronts.front()) {
    const Objectives& p = points[i];
    if (p.accuracy > ref.accuracy && p.step_time_ms < ref.step_time_ms) pts.push_back(p);
  }
  std::sort(pts.begin(), pts.end(), [](const Objectives& a, const Objectives& b) {
    return a.step_time_ms < b.step_time_ms;
  });
  double area = 0;
  double best = ref.accuracy;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    best = std::max(best, pts[i].accuracy);
    const double next = i + 1 < pts.size() ? pts[i + 1].step_time_ms : ref.step_time_ms;
    area += (next - pts[i].step_time_ms) * (best - ref.accuracy);
  }
  return area;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kMutationAttempts = 1000;

template <typename Fn>
ArchitectureSpec redraw_until(const SearchSpace& space, Fn draw) {
  for (int i = 0; i < kMutationAttempts; ++i) {
    ArchitectureSpec a = draw();
    if (space.admissible(a)) return a;
  }
  throw std::runtime_error("search space: no admissible candidate after redraws");
}

}  // namespace

BlockSpace::BlockSpace(MacroSpec macro, int first_channel, ValidityRules rules)
    : macro_(std::move(macro)), first_channel_(first_channel), rules_(rules) {}

ArchitectureSpec BlockSpace::sample(Rng& rng) const {
  return redraw_until(*this, [&] { return ArchitectureSpec{random_block(rng), first_channel_, macro_}; });
}

ArchitectureSpec BlockSpace::mutate(const ArchitectureSpec& parent, Rng& rng) const {
  return redraw_until(*this, [&] {
    ArchitectureSpec a = parent;
    a.block = mutate_block(parent.block, rng);
    return a;
  });
}

bool BlockSpace::admissible(const ArchitectureSpec& a) const { return validate(a, rules_).ok(); }

MacroSpace::MacroSpace(std::vector<BlockSpec> blocks, int min_blocks, int max_blocks,
                       ValidityRules rules)
    : blocks_(std::move(blocks)), min_blocks_(min_blocks), max_blocks_(max_blocks), rules_(rules) {
  if (blocks_.empty()) throw std::invalid_argument("MacroSpace: no candidate blocks");
}

ArchitectureSpec MacroSpace::sample(Rng& rng) const {
  return redraw_until(*this, [&] {
    const BlockSpec& b = blocks_[rng.index(blocks_.size())];
    MacroMutation m = random_macro(rng, min_blocks_, max_blocks_);
    return ArchitectureSpec{b, m.first_channel, std::move(m.macro)};
  });
}

ArchitectureSpec MacroSpace::mutate(const ArchitectureSpec& parent, Rng& rng) const {
  return redraw_until(*this, [&] {
    const int kinds = blocks_.size() > 1 ? 5 : 4;
    for (;;) {
      const int k = static_cast<int>(rng.index(static_cast<std::size_t>(kinds)));
      if (k == 4) {
        ArchitectureSpec a = parent;
        const auto cur = static_cast<std::size_t>(
            std::find(blocks_.begin(), blocks_.end(), parent.block) - blocks_.begin());
        std::size_t j = rng.index(blocks_.size() - 1);
        if (j >= cur) ++j;
        a.block = blocks_[j];
        return a;
      }
      const auto kind = static_cast<MacroMutationKind>(k);
      if (!applicable(parent.macro, parent.first_channel, kind)) continue;
      MacroMutation m = mutate_macro(parent.macro, parent.first_channel, kind, rng);
      return ArchitectureSpec{parent.block, m.first_channel, std::move(m.macro)};
    }
  });
}

bool MacroSpace::admissible(const ArchitectureSpec& a) const {
  return std::find(blocks_.begin(), blocks_.end(), a.block) != blocks_.end() &&
         validate(a, rules_).ok();
}

TinySpace::TinySpace(Limits limits) : limits_(std::move(limits)) {
  const char* blocks[] = {"0-", "2-", "3-", "4-"};
  for (const char* btext : blocks) {
    const BlockSpec b = parse_block(btext);
    for (int fc : limits_.first_channels) {
      for (int total = limits_.min_blocks; total <= limits_.max_blocks; ++total) {
        // Stage sizes: compositions of `total` into 4 positive parts.
        for (int s1 = 1; s1 <= total - 3; ++s1) {
          for (int s2 = 1; s1 + s2 <= total - 2; ++s2) {
            for (int s3 = 1; s1 + s2 + s3 <= total - 1; ++s3) {
              const int sizes[4] = {s1, s2, s3, total - s1 - s2 - s3};
              for (int mask = 0; mask < (1 << total); ++mask) {
                if (__builtin_popcount(static_cast<unsigned>(mask)) > limits_.max_doublings) continue;
                MacroSpec m;
                int pos = 0;
                for (int s = 0; s < 4; ++s) {
                  for (int i = 0; i < sizes[s]; ++i, ++pos) {
                    m.stages[s].push_back((mask >> pos) & 1 ? 2 : 1);
                  }
                }
                ArchitectureSpec a{b, fc, std::move(m)};
                if (admissible(a)) all_.push_back(std::move(a));
              }
            }
          }
        }
      }
    }
  }
}

ArchitectureSpec TinySpace::sample(Rng& rng) const { return all_[rng.index(all_.size())]; }

ArchitectureSpec TinySpace::mutate(const ArchitectureSpec& parent, Rng& rng) const {
  return redraw_until(*this, [&] {
    // Operator replacement, a 1<->2 multiplier flip, and the four macro kinds,
    // uniform over applicable ones. The flip keeps the space connected: the
    // macro kinds alone never change the number of doublings.
    ArchitectureSpec a = parent;
    for (;;) {
      const int k = static_cast<int>(rng.index(6));
      if (k == 4) {
        a.block = mutate_block(parent.block, BlockMutationKind::kReplaceOp, rng);
        return a;
      }
      if (k == 5) {
        auto& stage = a.macro.stages[rng.index(4)];
        int& v = stage[rng.index(stage.size())];
        v = v == 1 ? 2 : 1;
        return a;
      }
      const auto kind = static_cast<MacroMutationKind>(k);
      if (!applicable(parent.macro, parent.first_channel, kind)) continue;
      MacroMutation m = mutate_macro(parent.macro, parent.first_channel, kind, rng);
      a.macro = std::move(m.macro);
      a.first_channel = m.first_channel;
      return a;
    }
  });
}

bool TinySpace::admissible(const ArchitectureSpec& a) const {
  if (a.block.num_ops() != 1 || a.block.ops[0] == OpCode::kConv1x1 || !a.block.skips.empty()) {
    return false;
  }
  const auto& fcs = limits_.first_channels;
  if (std::find(fcs.begin(), fcs.end(), a.first_channel) == fcs.end()) return false;
  const int total = a.macro.total_blocks();
  if (total < limits_.min_blocks || total > limits_.max_blocks) return false;
  int doublings = 0;
  for (const auto& s : a.macro.stages) {
    if (s.empty()) return false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != 1 && s[i] != 2) return false;
      if (s[i] == 2 && i > 0 && limits_.doubling_at_stage_start) return false;
      doublings += s[i] == 2;
    }
  }
  return doublings <= limits_.max_doublings;
}

// ---------------------------------------------------------------------------

Evaluator surrogate_evaluator(SurrogateConfig cfg, ValidityRules rules) {
  return [cfg, rules](const ArchitectureSpec& a) {
    const CostReport r = evaluate_costs(a, cfg, rules);
    return Objectives{surrogate_accuracy(r, a, cfg), r.step_time_ms};
  };
}

namespace {

bool better(const Individual& a, const Individual& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  return a.crowding > b.crowding;
}

}  // namespace

std::vector<ArchitectureSpec> next_generation(std::span<const Individual> elites, int n, Rng& rng,
                                              const SearchSpace& space,
                                              const std::unordered_set<std::string>& seen,
                                              int retries) {
  if (elites.empty()) throw std::invalid_argument("next_generation: no elites");
  std::vector<ArchitectureSpec> out;
  std::unordered_set<std::string> batch;
  for (int k = 0; k < n; ++k) {
    ArchitectureSpec child;
    std::string enc;
    for (int attempt = 0; attempt <= retries; ++attempt) {
      const Individual& a = elites[rng.index(elites.size())];
      const Individual& b = elites[rng.index(elites.size())];
      const Individual& parent = better(b, a) ? b : a;
      child = space.mutate(parent.spec, rng);
      enc = serialize_architecture(child);
      if (!seen.contains(enc) && !batch.contains(enc)) break;
    }
    batch.insert(enc);
    out.push_back(std::move(child));
  }
  return out;
}

namespace {

class Archive {
 public:
  Archive(const SearchConfig& cfg, const Evaluator& eval) : cfg_(cfg), eval_(eval) {}

  std::vector<Individual> history;
  std::unordered_set<std::string> seen;

  void evaluate(std::vector<ArchitectureSpec> specs, int generation) {
    const std::size_t base = history.size();
    std::vector<std::size_t> todo;
    std::unordered_map<std::string, std::size_t> first_in_batch;
    std::vector<std::pair<std::size_t, std::size_t>> copies;  // (entry, evaluated twin)
    for (ArchitectureSpec& s : specs) {
      Individual ind;
      ind.encoding = serialize_architecture(s);
      ind.spec = std::move(s);
      ind.generation = generation;
      const std::size_t at = history.size();
      if (auto it = cache_.find(ind.encoding); it != cache_.end()) {
        copy_result(ind, history[it->second]);
      } else if (auto jt = first_in_batch.find(ind.encoding); jt != first_in_batch.end()) {
        copies.emplace_back(at, jt->second);
      } else {
        first_in_batch.emplace(ind.encoding, at);
        todo.push_back(at);
      }
      history.push_back(std::move(ind));
    }

    run_parallel(todo);

    for (const auto& [entry, twin] : copies) copy_result(history[entry], history[twin]);
    for (std::size_t i = base; i < history.size(); ++i) {
      cache_.emplace(history[i].encoding, i);
      seen.insert(history[i].encoding);
    }
  }

  /// First occurrence of every feasible encoding.
  std::vector<std::size_t> unique_feasible(int up_to_generation) const {
    std::vector<std::size_t> out;
    std::unordered_set<std::string> used;
    for (std::size_t i = 0; i < history.size(); ++i) {
      const Individual& ind = history[i];
      if (ind.generation > up_to_generation || !ind.feasible) continue;
      if (used.insert(ind.encoding).second) out.push_back(i);
    }
    return out;
  }

 private:
  static void copy_result(Individual& dst, const Individual& src) {
    dst.objectives = src.objectives;
    dst.feasible = src.feasible;
    dst.error = src.error;
  }

  void evaluate_one(Individual& ind) {
    try {
      ind.objectives = eval_(ind.spec);
      const bool finite =
          std::isfinite(ind.objectives.accuracy) && std::isfinite(ind.objectives.step_time_ms);
      if (!finite) {
        ind.error = "non-finite objectives";
        ind.feasible = false;
      } else {
        ind.feasible = ind.objectives.step_time_ms <= cfg_.max_step_time_ms;
      }
    } catch (const std::exception& e) {
      ind.objectives = {};
      ind.error = e.what();
      ind.feasible = false;
    }
  }

  void run_parallel(const std::vector<std::size_t>& todo) {
    unsigned threads = cfg_.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                         : static_cast<unsigned>(std::max(1, cfg_.threads));
    threads = std::min<unsigned>(threads, static_cast<unsigned>(todo.size()));
    if (threads <= 1) {
      for (std::size_t i : todo) evaluate_one(history[i]);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < todo.size(); k = next++) evaluate_one(history[todo[k]]);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  const SearchConfig& cfg_;
  const Evaluator& eval_;
  std::unordered_map<std::string, std::size_t> cache_;
};

// Rank and crowd the given history entries; returns them as fronts.
std::vector<std::vector<std::size_t>> rank_entries(std::vector<Individual>& history,
                                                   const std::vector<std::size_t>& ids) {
  std::vector<Objectives> obj;
  for (std::size_t i : ids) obj.push_back(history[i].objectives);
  auto fronts = non_dominated_sort(obj);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t f = 0; f < fronts.size(); ++f) {
    std::vector<Objectives> fo;
    for (std::size_t k : fronts[f]) fo.push_back(obj[k]);
    const auto cd = crowding_distance(fo);
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < fronts[f].size(); ++k) {
      Individual& ind = history[ids[fronts[f][k]]];
      ind.rank = static_cast<int>(f) + 1;
      ind.crowding = cd[k];
      members.push_back(ids[fronts[f][k]]);
    }
    out.push_back(std::move(members));
  }
  return out;
}

std::vector<Individual> select_elites(std::vector<Individual>& history,
                                      const std::vector<std::size_t>& ids, std::size_t size) {
  std::vector<Individual> elites;
  for (auto& front : rank_entries(history, ids)) {
    if (elites.size() + front.size() > size) {
      std::stable_sort(front.begin(), front.end(), [&](std::size_t a, std::size_t b) {
        return history[a].crowding > history[b].crowding;
      });
    }
    for (std::size_t i : front) {
      if (elites.size() == size) break;
      elites.push_back(history[i]);
    }
    if (elites.size() == size) break;
  }
  return elites;
}

}  // namespace

SearchResult run_search(const SearchConfig& cfg, const SearchSpace& space,
                        const Evaluator& evaluator) {
  if (cfg.nodes < 1) throw std::invalid_argument("run_search: nodes must be >= 1");
  if (!(cfg.max_step_time_ms > 0)) throw std::invalid_argument("run_search: tmax must be > 0");
  Rng rng(cfg.seed);
  Archive archive(cfg, evaluator);
  const std::size_t elite_size =
      static_cast<std::size_t>(cfg.elite_size > 0 ? cfg.elite_size : cfg.nodes);

  auto fresh = [&] {
    std::vector<ArchitectureSpec> specs;
    std::unordered_set<std::string> batch;
    for (int k = 0; k < cfg.nodes; ++k) {
      ArchitectureSpec a;
      for (int attempt = 0; attempt <= cfg.duplicate_retries; ++attempt) {
        a = space.sample(rng);
        const std::string enc = serialize_architecture(a);
        if (!archive.seen.contains(enc) && !batch.contains(enc)) break;
      }
      batch.insert(serialize_architecture(a));
      specs.push_back(std::move(a));
    }
    return specs;
  };

  archive.evaluate(fresh(), 0);
  for (int g = 1; g <= cfg.generations; ++g) {
    const auto ids = archive.unique_feasible(g - 1);
    std::vector<ArchitectureSpec> offspring;
    if (ids.empty()) {
      offspring = fresh();
    } else {
      const auto elites = select_elites(archive.history, ids, elite_size);
      offspring = next_generation(elites, cfg.nodes, rng, space, archive.seen,
                                  cfg.duplicate_retries);
    }
    archive.evaluate(std::move(offspring), g);
  }

  SearchResult result;
  result.history = std::move(archive.history);
  for (Individual& ind : result.history) {
    ind.rank = 0;
    ind.crowding = 0;
  }

  // Final ranking over unique feasible encodings; duplicates share it.
  std::vector<std::size_t> ids;
  std::unordered_map<std::string, std::size_t> first;
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    const Individual& ind = result.history[i];
    if (!ind.feasible) continue;
    if (first.emplace(ind.encoding, i).second) ids.push_back(i);
  }
  const auto fronts = rank_entries(result.history, ids);
  for (Individual& ind : result.history) {
    if (!ind.feasible) continue;
    const Individual& src = result.history[first.at(ind.encoding)];
    ind.rank = src.rank;
    ind.crowding = src.crowding;
  }
  if (!fronts.empty()) result.front = fronts[0];

  result.reference = {0, 0};
  if (!ids.empty()) {
    result.reference = {std::numeric_limits<double>::infinity(), 0};
    for (std::size_t i : ids) {
      result.reference.accuracy =
          std::min(result.reference.accuracy, result.history[i].objectives.accuracy);
      result.reference.step_time_ms =
          std::max(result.reference.step_time_ms, result.history[i].objectives.step_time_ms);
    }
  }
  for (int g = 0; g <= cfg.generations; ++g) {
    std::vector<Objectives> pts;
    for (std::size_t i : ids) {
      if (result.history[i].generation <= g) pts.push_back(result.history[i].objectives);
    }
    result.hypervolume.push_back(pts.empty() ? 0.0 : hypervolume(pts, result.reference));
  }
  return result;
}

std::vector<BlockSpec> select_blocks(const SearchResult& r, int keep) {
  struct Tally {
    int count = 0;
    double crowding = 0;
    BlockSpec block;
  };
  std::map<std::string, Tally> tally;
  for (std::size_t i : r.front) {
    const Individual& ind = r.history[i];
    Tally& t = tally[serialize_block(ind.spec.block)];
    ++t.count;
    t.crowding = std::max(t.crowding, ind.crowding);
    t.block = ind.spec.block;
  }
  std::vector<std::pair<std::string, Tally>> rows(tally.begin(), tally.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.crowding > b.second.crowding;
  });
  std::vector<BlockSpec> out;
  for (const auto& [enc, t] : rows) {
    if (static_cast<int>(out.size()) == keep) break;
    out.push_back(t.block);
  }
  return out;
}

TwoPhaseResult run_two_phase(const SearchConfig& block_cfg, const SearchConfig& macro_cfg,
                             const Evaluator& evaluator, int keep, ValidityRules rules) {
  if (keep < 1) throw std::invalid_argument("run_two_phase: keep must be >= 1");
  TwoPhaseResult out;
  out.block_phase = run_search(block_cfg, BlockSpace(resnet50_macro(), 64, rules), evaluator);
  out.selected_blocks = select_blocks(out.block_phase, keep);
  if (out.selected_blocks.empty()) {
    throw std::runtime_error("block phase produced an empty front");
  }
  out.macro_phase =
      run_search(macro_cfg, MacroSpace(out.selected_blocks, 10, 50, rules), evaluator);
  return out;
}

}  // namespace nasoa
