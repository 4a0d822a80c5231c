#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "nasoa/arch_encoding.h"
#include "nasoa/cost_model.h"
#include "nasoa/random.h"

namespace nasoa {

/// Accuracy is maximized, step time minimized.
struct Objectives {
  double accuracy = 0;
  double step_time_ms = 0;
};

bool dominates(const Objectives& a, const Objectives& b);

struct Individual {
  ArchitectureSpec spec;
  std::string encoding;
  Objectives objectives;
  bool feasible = false;
  int rank = 0;  // 1-based front index; 0 when not ranked (infeasible)
  double crowding = 0;
  int generation = 0;
  std::string error;  // evaluator failure, if any
};

/// Fronts of indices into `pop`, best first.
std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const Objectives> pop);

/// Crowding distance of every member of one front, in input order.
std::vector<double> crowding_distance(std::span<const Objectives> front);

/// Area dominated by `points` and bounded by `ref` (worst accuracy, worst time).
double hypervolume(std::span<const Objectives> points, const Objectives& ref);

/// The candidate space of one search phase.
class SearchSpace {
 public:
  virtual ~SearchSpace() = default;
  virtual ArchitectureSpec sample(Rng& rng) const = 0;
  /// One mutation step; the result is always admissible.
  virtual ArchitectureSpec mutate(const ArchitectureSpec& parent, Rng& rng) const = 0;
  virtual bool admissible(const ArchitectureSpec& a) const = 0;
};

/// Block phase: macro and first channel fixed, blocks vary.
class BlockSpace : public SearchSpace {
 public:
  explicit BlockSpace(MacroSpec macro = resnet50_macro(), int first_channel = 64,
                      ValidityRules rules = {});
  ArchitectureSpec sample(Rng& rng) const override;
  ArchitectureSpec mutate(const ArchitectureSpec& parent, Rng& rng) const override;
  bool admissible(const ArchitectureSpec& a) const override;

 private:
  MacroSpec macro_;
  int first_channel_;
  ValidityRules rules_;
};

/// Macro phase over a fixed list of candidate blocks. With more than one
/// candidate, swapping the block is a fifth mutation kind.
class MacroSpace : public SearchSpace {
 public:
  explicit MacroSpace(std::vector<BlockSpec> blocks, int min_blocks = 10, int max_blocks = 50,
                      ValidityRules rules = {});
  ArchitectureSpec sample(Rng& rng) const override;
  ArchitectureSpec mutate(const ArchitectureSpec& parent, Rng& rng) const override;
  bool admissible(const ArchitectureSpec& a) const override;
  const std::vector<BlockSpec>& blocks() const { return blocks_; }

 private:
  std::vector<BlockSpec> blocks_;
  int min_blocks_;
  int max_blocks_;
  ValidityRules rules_;
};

/// Exhaustively enumerable space: single-op blocks 0/2/3/4 and, by default,
/// first channel 32 or 64, 4-6 blocks with every stage non-empty, multipliers
/// 1 or 2 with a 2 only as the first block of a stage (1800 architectures).
struct TinySpaceLimits {
  std::vector<int> first_channels{32, 64};
  int min_blocks = 4;
  int max_blocks = 6;
  int max_doublings = 3;
  bool doubling_at_stage_start = true;
};

class TinySpace : public SearchSpace {
 public:
  using Limits = TinySpaceLimits;
  explicit TinySpace(Limits limits = {});
  ArchitectureSpec sample(Rng& rng) const override;
  ArchitectureSpec mutate(const ArchitectureSpec& parent, Rng& rng) const override;
  bool admissible(const ArchitectureSpec& a) const override;
  const std::vector<ArchitectureSpec>& all() const { return all_; }

 private:
  Limits limits_;
  std::vector<ArchitectureSpec> all_;
};

enum class SearchPhase { kBlock, kMacro };

struct SearchConfig {
  int nodes = 24;  // offspring per generation, also initial population and elite pool size
  double max_step_time_ms = std::numeric_limits<double>::infinity();
  int generations = 20;
  std::uint64_t seed = 0;
  SearchPhase phase = SearchPhase::kBlock;
  int elite_size = 0;  // 0 -> nodes
  int duplicate_retries = 10;
  int threads = 1;  // 0 -> hardware concurrency
};

using Evaluator = std::function<Objectives(const ArchitectureSpec&)>;

/// Surrogate accuracy and estimated step time.
Evaluator surrogate_evaluator(SurrogateConfig cfg = {}, ValidityRules rules = {});

struct SearchResult {
  std::vector<Individual> history;     // every evaluation, in (generation, offspring) order
  std::vector<std::size_t> front;      // indices into history: rank-1 feasible, unique encodings
  std::vector<double> hypervolume;     // per generation, of the feasible front so far
  Objectives reference;                // hypervolume reference point
};

/// Binary tournament on (rank, crowding) over `elites`, then one mutation per
/// offspring. Encodings in `seen` are redrawn up to `retries` times.
std::vector<ArchitectureSpec> next_generation(std::span<const Individual> elites, int n, Rng& rng,
                                              const SearchSpace& space,
                                              const std::unordered_set<std::string>& seen,
                                              int retries = 10);

SearchResult run_search(const SearchConfig& cfg, const SearchSpace& space,
                        const Evaluator& evaluator);

struct TwoPhaseResult {
  SearchResult block_phase;
  std::vector<BlockSpec> selected_blocks;
  SearchResult macro_phase;
};

/// The `keep` most frequent blocks on the block-phase front (ties by higher
/// crowding, then encoding).
std::vector<BlockSpec> select_blocks(const SearchResult& r, int keep);

TwoPhaseResult run_two_phase(const SearchConfig& block_cfg, const SearchConfig& macro_cfg,
                             const Evaluator& evaluator, int keep, ValidityRules rules = {});

}  // namespace nasoa
