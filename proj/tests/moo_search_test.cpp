#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "nasoa/moo_search.h"

namespace nasoa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Objectives> random_population(Rng& rng, std::size_t n, int levels) {
  std::vector<Objectives> pop;
  for (std::size_t i = 0; i < n; ++i) {
    // Coarse levels force ties on one or both objectives.
    pop.push_back({double(rng.index(levels)) / levels, 1.0 + double(rng.index(levels))});
  }
  return pop;
}

// O(n^3): peel off the non-dominated remainder until empty.
std::vector<int> brute_force_ranks(const std::vector<Objectives>& pop) {
  std::vector<int> rank(pop.size(), 0);
  int r = 0;
  std::size_t left = pop.size();
  while (left > 0) {
    ++r;
    std::vector<std::size_t> layer;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (rank[i] != 0) continue;
      bool dominated = false;
      for (std::size_t j = 0; j < pop.size() && !dominated; ++j) {
        dominated = rank[j] == 0 && dominates(pop[j], pop[i]);
      }
      if (!dominated) layer.push_back(i);
    }
    for (std::size_t i : layer) rank[i] = r;
    left -= layer.size();
  }
  return rank;
}

TEST(Dominates, Examples) {
  EXPECT_TRUE(dominates({0.9, 10}, {0.7, 20}));
  EXPECT_FALSE(dominates({0.9, 10}, {0.8, 5}));
  EXPECT_FALSE(dominates({0.9, 10}, {0.9, 10}));
  EXPECT_TRUE(dominates({0.9, 10}, {0.9, 11}));
}

TEST(Dominates, StrictPartialOrder) {
  Rng rng(1);
  for (int t = 0; t < 20000; ++t) {
    const auto p = random_population(rng, 3, 4);
    EXPECT_FALSE(dominates(p[0], p[0]));
    if (dominates(p[0], p[1])) EXPECT_FALSE(dominates(p[1], p[0]));
    if (dominates(p[0], p[1]) && dominates(p[1], p[2])) EXPECT_TRUE(dominates(p[0], p[2]));
  }
}

TEST(NonDominatedSort, Examples) {
  const std::vector<Objectives> one{{0.5, 1}};
  EXPECT_EQ(non_dominated_sort(one), (std::vector<std::vector<std::size_t>>{{0}}));
  const std::vector<Objectives> three{{0.9, 10}, {0.8, 5}, {0.7, 20}};
  EXPECT_EQ(non_dominated_sort(three), (std::vector<std::vector<std::size_t>>{{0, 1}, {2}}));
}

TEST(NonDominatedSort, MatchesBruteForce) {
  Rng rng(2);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 1 + rng.index(500);
    const auto pop = random_population(rng, n, t % 2 ? 12 : 1000);
    const auto fronts = non_dominated_sort(pop);
    std::vector<int> rank(n, 0);
    std::size_t total = 0;
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      for (std::size_t i : fronts[f]) {
        EXPECT_EQ(rank[i], 0);
        rank[i] = int(f) + 1;
      }
      total += fronts[f].size();
    }
    EXPECT_EQ(total, n);
    EXPECT_EQ(rank, brute_force_ranks(pop));
  }
}

TEST(CrowdingDistance, SmallFrontsAllInfinite) {
  const std::vector<Objectives> two{{0.1, 1}, {0.2, 2}};
  EXPECT_EQ(crowding_distance(two), (std::vector<double>{kInf, kInf}));
  const std::vector<Objectives> one{{0.1, 1}};
  EXPECT_EQ(crowding_distance(one), (std::vector<double>{kInf}));
}

TEST(CrowdingDistance, EvenlySpacedMiddleIsTwo) {
  const std::vector<Objectives> f{{0.1, 1}, {0.2, 2}, {0.3, 3}};
  const auto d = crowding_distance(f);
  EXPECT_EQ(d[0], kInf);
  EXPECT_DOUBLE_EQ(d[1], 2.0);
  EXPECT_EQ(d[2], kInf);
}

TEST(CrowdingDistance, ZeroRangeContributesNothing) {
  const std::vector<Objectives> f{{0.5, 1}, {0.5, 2}, {0.5, 4}, {0.5, 5}};
  const auto d = crowding_distance(f);
  EXPECT_EQ(d[0], kInf);
  EXPECT_DOUBLE_EQ(d[1], 0.75);
  EXPECT_DOUBLE_EQ(d[2], 0.75);
  EXPECT_EQ(d[3], kInf);
}

TEST(CrowdingDistance, InfiniteExactlyAtBoundary) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    auto pop = random_population(rng, 3 + rng.index(40), 1000);
    std::vector<Objectives> front;
    const auto fronts = non_dominated_sort(pop);
    for (std::size_t i : fronts[0]) front.push_back(pop[i]);
    if (front.size() < 3) continue;
    const auto d = crowding_distance(front);
    double amin = kInf, amax = -kInf, tmin = kInf, tmax = -kInf;
    for (const auto& o : front) {
      amin = std::min(amin, o.accuracy);
      amax = std::max(amax, o.accuracy);
      tmin = std::min(tmin, o.step_time_ms);
      tmax = std::max(tmax, o.step_time_ms);
    }
    for (std::size_t i = 0; i < front.size(); ++i) {
      const bool boundary = front[i].accuracy == amin || front[i].accuracy == amax ||
                            front[i].step_time_ms == tmin || front[i].step_time_ms == tmax;
      EXPECT_EQ(std::isinf(d[i]), boundary);
    }
  }
}

// Exact union area on the compressed coordinate grid.
double grid_hypervolume(const std::vector<Objectives>& pts, const Objectives& ref) {
  std::vector<double> xs{ref.step_time_ms}, ys{ref.accuracy};
  for (const auto& p : pts) {
    xs.push_back(p.step_time_ms);
    ys.push_back(p.accuracy);
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double area = 0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      const double cx = 0.5 * (xs[i] + xs[i + 1]);
      const double cy = 0.5 * (ys[j] + ys[j + 1]);
      if (cx > ref.step_time_ms || cy < ref.accuracy) continue;
      bool covered = false;
      for (const auto& p : pts) covered |= p.step_time_ms <= cx && p.accuracy >= cy;
      if (covered) area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
    }
  }
  return area;
}

TEST(Hypervolume, HandCase) {
  const std::vector<Objectives> pts{{0.5, 1}, {0.8, 3}};
  EXPECT_DOUBLE_EQ(hypervolume(pts, {0, 4}), 0.5 * 3 + 0.3 * 1);
  EXPECT_EQ(hypervolume({}, {0, 4}), 0.0);
}

TEST(Hypervolume, MatchesGrid) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto pts = random_population(rng, 1 + rng.index(30), 50);
    const Objectives ref{0.1, 40};
    EXPECT_NEAR(hypervolume(pts, ref), grid_hypervolume(pts, ref), 1e-9);
  }
}

// Records which parents were mutated.
class RecordingSpace : public SearchSpace {
 public:
  mutable std::vector<std::string> parents;
  BlockSpace inner;
  ArchitectureSpec sample(Rng& rng) const override { return inner.sample(rng); }
  ArchitectureSpec mutate(const ArchitectureSpec& p, Rng& rng) const override {
    parents.push_back(serialize_architecture(p));
    return inner.mutate(p, rng);
  }
  bool admissible(const ArchitectureSpec& a) const override { return inner.admissible(a); }
};

Individual make_individual(const std::string& enc, int rank, double crowding) {
  Individual ind;
  ind.spec = parse_architecture(enc);
  ind.encoding = enc;
  ind.rank = rank;
  ind.crowding = crowding;
  ind.feasible = true;
  return ind;
}

TEST(NextGeneration, ExactlyNValidOffspring) {
  const BlockSpace space;
  const std::vector<Individual> elites{
      make_individual("10001-_64_411-2111-211111-211", 1, kInf),
      make_individual("020-_64_411-2111-211111-211", 1, 0.5),
      make_individual("031-_64_411-2111-211111-211", 2, kInf)};
  Rng rng(5);
  const auto kids = next_generation(elites, 24, rng, space, {});
  ASSERT_EQ(kids.size(), 24u);
  for (const auto& k : kids) {
    EXPECT_EQ(parse_architecture(serialize_architecture(k)), k);
    EXPECT_TRUE(space.admissible(k));
  }
}

TEST(NextGeneration, SingleEliteIsEveryParent) {
  RecordingSpace space;
  const std::string enc = "10001-_64_411-2111-211111-211";
  const std::vector<Individual> elites{make_individual(enc, 1, kInf)};
  Rng rng(6);
  const auto kids = next_generation(elites, 24, rng, space, {});
  EXPECT_EQ(kids.size(), 24u);
  for (const auto& p : space.parents) EXPECT_EQ(p, enc);
  for (const auto& k : kids) EXPECT_EQ(k.macro, parse_architecture(enc).macro);
}

TEST(NextGeneration, TournamentPrefersRankThenCrowding) {
  RecordingSpace space;
  const std::vector<Individual> elites{
      make_individual("10001-_64_411-2111-211111-211", 1, 0.1),
      make_individual("020-_64_411-2111-211111-211", 1, 0.9),
      make_individual("031-_64_411-2111-211111-211", 2, kInf)};
  Rng rng(7);
  next_generation(elites, 3000, rng, space, {}, 0);
  std::map<std::string, int> n;
  for (const auto& p : space.parents) ++n[p];
  // P(pick) for the three: 5/9, 3/9, 1/9.
  EXPECT_NEAR(n[elites[1].encoding] / 3000.0, 5.0 / 9, 0.03);
  EXPECT_NEAR(n[elites[0].encoding] / 3000.0, 3.0 / 9, 0.03);
  EXPECT_NEAR(n[elites[2].encoding] / 3000.0, 1.0 / 9, 0.03);
}

TEST(NextGeneration, DeterministicAndAvoidsSeen) {
  const BlockSpace space;
  const std::vector<Individual> elites{make_individual("02031-_64_411-2111-211111-211", 1, kInf)};
  Rng a(8), b(8);
  std::unordered_set<std::string> seen;
  const auto ka = next_generation(elites, 24, a, space, seen);
  const auto kb = next_generation(elites, 24, b, space, seen);
  EXPECT_EQ(ka, kb);
  std::set<std::string> uniq;
  for (const auto& k : ka) uniq.insert(serialize_architecture(k));
  EXPECT_EQ(uniq.size(), 24u);
}

TEST(NextGeneration, DuplicatesAdmittedWhenNeighbourhoodExhausted) {
  // "2-" has four operator neighbours and one legal skip; all are seen.
  const BlockSpace space;
  const std::vector<Individual> elites{make_individual("2-_64_411-2111-211111-211", 1, kInf)};
  std::unordered_set<std::string> seen;
  for (const char* b : {"0-", "1-", "3-", "4-", "2-c01"}) {
    seen.insert(std::string(b) + "_64_411-2111-211111-211");
  }
  Rng rng(9);
  const auto kids = next_generation(elites, 10, rng, space, seen);
  ASSERT_EQ(kids.size(), 10u);
  for (const auto& k : kids) EXPECT_TRUE(seen.contains(serialize_architecture(k)));
}

TEST(RunSearch, HistoryBookkeeping) {
  SearchConfig cfg;
  cfg.nodes = 4;
  cfg.generations = 2;
  cfg.seed = 9;
  const auto r = run_search(cfg, BlockSpace(), surrogate_evaluator());
  EXPECT_EQ(r.history.size(), 12u);
  for (std::size_t i = 0; i < r.history.size(); ++i) EXPECT_EQ(r.history[i].generation, int(i / 4));
  EXPECT_EQ(r.hypervolume.size(), 3u);
}

TEST(RunSearch, TmaxBelowEverything) {
  SearchConfig cfg;
  cfg.nodes = 6;
  cfg.generations = 3;
  cfg.max_step_time_ms = 1e-6;
  const auto r = run_search(cfg, BlockSpace(), surrogate_evaluator());
  EXPECT_TRUE(r.front.empty());
  EXPECT_EQ(r.history.size(), 24u);
  for (const auto& ind : r.history) EXPECT_FALSE(ind.feasible);
}

TEST(RunSearch, EvaluatorFailureMarksInfeasible) {
  const Evaluator base = surrogate_evaluator();
  const Evaluator flaky = [&](const ArchitectureSpec& a) {
    if (a.block.num_ops() == 1) throw std::runtime_error("boom");
    return base(a);
  };
  SearchConfig cfg;
  cfg.nodes = 12;
  cfg.generations = 4;
  cfg.seed = 3;
  const auto r = run_search(cfg, BlockSpace(), flaky);
  int failed = 0;
  for (const auto& ind : r.history) {
    if (ind.spec.block.num_ops() == 1) {
      EXPECT_FALSE(ind.feasible);
      EXPECT_EQ(ind.error, "boom");
      ++failed;
    }
  }
  EXPECT_GT(failed, 0);
  for (std::size_t i : r.front) EXPECT_NE(r.history[i].spec.block.num_ops(), 1);
}

TEST(RunSearch, FrontInvariants) {
  SearchConfig cfg;
  cfg.nodes = 12;
  cfg.generations = 8;
  cfg.seed = 11;
  cfg.max_step_time_ms = 120;
  const auto r = run_search(cfg, BlockSpace(), surrogate_evaluator());
  ASSERT_FALSE(r.front.empty());
  for (std::size_t i : r.front) {
    const Individual& f = r.history[i];
    EXPECT_TRUE(f.feasible);
    EXPECT_LE(f.objectives.step_time_ms, 120);
    EXPECT_EQ(f.rank, 1);
    for (const auto& h : r.history) {
      if (h.feasible) EXPECT_FALSE(dominates(h.objectives, f.objectives));
    }
  }
  for (std::size_t g = 1; g < r.hypervolume.size(); ++g) {
    EXPECT_GE(r.hypervolume[g], r.hypervolume[g - 1]);
  }
}

TEST(RunSearch, ReproducibleAndThreadInvariant) {
  SearchConfig cfg;
  cfg.nodes = 10;
  cfg.generations = 5;
  cfg.seed = 12;
  const auto a = run_search(cfg, BlockSpace(), surrogate_evaluator());
  cfg.threads = 4;
  const auto b = run_search(cfg, BlockSpace(), surrogate_evaluator());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].encoding, b.history[i].encoding);
    EXPECT_EQ(a.history[i].objectives.accuracy, b.history[i].objectives.accuracy);
    EXPECT_EQ(a.history[i].objectives.step_time_ms, b.history[i].objectives.step_time_ms);
    EXPECT_EQ(a.history[i].rank, b.history[i].rank);
  }
  EXPECT_EQ(a.front, b.front);
  EXPECT_EQ(a.hypervolume, b.hypervolume);
}

TEST(TinySpace, EnumerationAndMembership) {
  const TinySpace space;
  EXPECT_EQ(space.all().size(), 1800u);
  std::set<std::string> uniq;
  for (const auto& a : space.all()) {
    EXPECT_TRUE(space.admissible(a));
    EXPECT_TRUE(validate(a).ok());
    uniq.insert(serialize_architecture(a));
  }
  EXPECT_EQ(uniq.size(), space.all().size());
  Rng rng(13);
  for (int i = 0; i < 2000; ++i) {
    const auto m = space.mutate(space.sample(rng), rng);
    EXPECT_TRUE(uniq.contains(serialize_architecture(m)));
  }
}

TEST(TinySpace, SearchRecoversTrueFront) {
  const TinySpace space;
  const Evaluator eval = surrogate_evaluator();
  std::vector<Objectives> obj;
  for (const auto& a : space.all()) obj.push_back(eval(a));
  std::set<std::string> truth;
  const auto fronts = non_dominated_sort(obj);
  for (std::size_t i : fronts[0]) truth.insert(serialize_architecture(space.all()[i]));
  SearchConfig cfg;
  cfg.nodes = 24;
  cfg.generations = 20;
  cfg.elite_size = 48;
  cfg.seed = 1;
  const auto r = run_search(cfg, space, eval);
  std::size_t hit = 0;
  for (std::size_t i : r.front) hit += truth.contains(r.history[i].encoding);
  EXPECT_GE(double(hit) / double(truth.size()), 0.9);
}

TEST(MacroSpace, InitialBlockCounts) {
  const MacroSpace space({parse_block("020-"), parse_block("10001-")});
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    const auto a = space.sample(rng);
    EXPECT_GE(a.macro.total_blocks(), 10);
    EXPECT_LE(a.macro.total_blocks(), 50);
    EXPECT_TRUE(space.admissible(a));
  }
}

TEST(MacroSpace, MutationKeepsCandidateBlocks) {
  const std::vector<BlockSpec> blocks{parse_block("020-"), parse_block("10001-"), parse_block("2-")};
  const MacroSpace space(blocks);
  Rng rng(15);
  auto a = space.sample(rng);
  std::set<std::string> seen_blocks;
  for (int i = 0; i < 500; ++i) {
    a = space.mutate(a, rng);
    EXPECT_TRUE(space.admissible(a));
    seen_blocks.insert(serialize_block(a.block));
  }
  EXPECT_EQ(seen_blocks.size(), 3u);
}

TEST(SelectBlocks, FrequencyThenCrowding) {
  SearchResult r;
  const char* encs[] = {"020-_64_11-21-21-21", "020-_64_11-21-21-211", "2-_64_11-21-21-21",
                        "031-_64_11-21-21-21"};
  const double crowd[] = {1.0, 0.5, 0.2, 0.9};
  for (int i = 0; i < 4; ++i) {
    r.history.push_back(make_individual(encs[i], 1, crowd[i]));
    r.front.push_back(std::size_t(i));
  }
  const auto top = select_blocks(r, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(serialize_block(top[0]), "020-");
  EXPECT_EQ(serialize_block(top[1]), "031-");
  EXPECT_EQ(select_blocks(r, 10).size(), 3u);
}

TEST(RunTwoPhase, KeepRestrictsPhaseTwo) {
  SearchConfig b;
  b.nodes = 8;
  b.generations = 3;
  b.seed = 16;
  SearchConfig m = b;
  m.phase = SearchPhase::kMacro;
  for (int keep : {1, 3}) {
    const auto r = run_two_phase(b, m, surrogate_evaluator(), keep);
    EXPECT_LE(r.selected_blocks.size(), std::size_t(keep));
    for (const auto& ind : r.block_phase.history) EXPECT_EQ(ind.spec.macro, resnet50_macro());
    for (const auto& ind : r.macro_phase.history) {
      EXPECT_NE(std::find(r.selected_blocks.begin(), r.selected_blocks.end(), ind.spec.block),
                r.selected_blocks.end());
      if (ind.generation == 0) {
        EXPECT_GE(ind.spec.macro.total_blocks(), 10);
        EXPECT_LE(ind.spec.macro.total_blocks(), 50);
      }
    }
  }
}

}  // namespace
}  // namespace nasoa
