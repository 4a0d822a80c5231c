#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "nasoa/arch_encoding.h"
#include "nasoa/cost_model.h"
#include "nasoa/moo_search.h"

namespace nasoa {

struct ZooEntry {
  std::string name;
  ArchitectureSpec spec;
  std::string encoding;
  double reference_accuracy = 0;  // [0, 1]
  CostReport costs;               // at 224 px / 1000 classes
  double step_time_ms = 0;        // batch 64, 224 px
};

/// Indices (ascending) of the members kept in the zoo: everything when the
/// front has at most k members, otherwise the k largest crowding distances,
/// ties broken by lower step time.
std::vector<std::size_t> select_zoo(std::span<const Objectives> front, int k);

/// Zoo from a finished search: select_zoo over the front, names M01, M02, ...
/// in order of increasing step time.
std::vector<ZooEntry> make_zoo(const SearchResult& r, int k, const SurrogateConfig& cfg = {},
                               const ValidityRules& rules = {});

/// The twelve ET-NAS reference models with their table accuracy and step time.
std::vector<ZooEntry> reference_zoo();

class StepTimeTable {
 public:
  void set(const std::string& name, int batch, int resolution, double ms);
  /// Throws std::out_of_range on a missing key.
  double lookup(const std::string& name, int batch, int resolution) const;
  bool contains(const std::string& name, int batch, int resolution) const;

  using Key = std::tuple<std::string, int, int>;
  const std::map<Key, double>& entries() const { return table_; }

 private:
  std::map<Key, double> table_;
};

/// Step time of an entry at (batch, resolution): linear in batch, the MAC and
/// activation terms quadratic in resolution, anchored at the entry's batch-64
/// 224 px time.
double scaled_step_time(const ZooEntry& e, int batch, int resolution, const StepTimeModel& m);

StepTimeTable build_step_time_table(std::span<const ZooEntry> zoo, std::span<const int> batches,
                                    std::span<const int> resolutions,
                                    const StepTimeModel& m = SurrogateConfig::default_step_time());

/// Negated z-score (population std) of each point's non-dominated rank.
std::vector<double> efficiency_score(std::span<const Objectives> points);

struct DesignMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  /// Levels absorbed into the intercept; reported with coefficient 0.
  std::vector<std::string> reference_terms;
};

/// Block-level predictors: per-op channel change ratios (log2), skip counts
/// by kind, output channel, operator counts against conv3x3.
DesignMatrix block_features(std::span<const ArchitectureSpec> archs);

/// Macro-level predictors: first channel, doubling indicators at global block
/// positions 1-5, blocks per stage.
DesignMatrix macro_features(std::span<const ArchitectureSpec> archs);

/// Removes columns with no variation; returns their names.
std::vector<std::string> drop_constant_columns(DesignMatrix& x);

class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> columns)
      : std::runtime_error(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

struct RegressionTerm {
  std::string name;
  double coef = 0;
  double se = 0;
  double t = 0;
  double p = 1;
  bool reference = false;
};

struct RegressionResult {
  std::vector<RegressionTerm> terms;  // predictors then reference levels
  double intercept = 0;
  double r_squared = 0;
  int n = 0;
  bool standardized = false;
  std::vector<std::string> dropped;
  std::vector<double> residuals;
};

struct RegressionOptions {
  bool standardize = true;
};

/// OLS with intercept via the normal equations.
RegressionResult regression_analysis(const DesignMatrix& x, std::span<const double> y,
                                     const RegressionOptions& opt = {});

/// Two-sided Student-t tail probability.
double t_pvalue(double t, double dof);

std::string format_regression(const RegressionResult& r, const std::string& title);

}  // namespace nasoa
