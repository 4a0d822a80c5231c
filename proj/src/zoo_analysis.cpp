#include "nasoa/zoo_analysis.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

namespace nasoa {

std::vector<std::size_t> select_zoo(std::span<const Objectives> front, int k) {
  if (front.empty()) throw std::invalid_argument("select_zoo: empty front");
  if (k < 1) throw std::invalid_argument("select_zoo: k must be >= 1");
  std::vector<std::size_t> idx(front.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (front.size() <= static_cast<std::size_t>(k)) return idx;

  const std::vector<double> crowd = crowding_distance(front);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (crowd[a] != crowd[b]) return crowd[a] > crowd[b];
    return front[a].step_time_ms < front[b].step_time_ms;
  });
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

std::string zoo_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "M%02zu", i + 1);
  return buf;
}

}  // namespace

std::vector<ZooEntry> make_zoo(const SearchResult& r, int k, const SurrogateConfig& cfg,
                               const ValidityRules& rules) {
  std::vector<Objectives> objs;
  for (std::size_t i : r.front) objs.push_back(r.history[i].objectives);
  const std::vector<std::size_t> keep = select_zoo(objs, k);

  std::vector<ZooEntry> zoo;
  for (std::size_t j : keep) {
    const Individual& ind = r.history[r.front[j]];
    ZooEntry e;
    e.spec = ind.spec;
    e.encoding = ind.encoding;
    e.reference_accuracy = ind.objectives.accuracy;
    e.costs = evaluate_costs(ind.spec, cfg, rules);
    e.step_time_ms = ind.objectives.step_time_ms;
    zoo.push_back(std::move(e));
  }
  std::stable_sort(zoo.begin(), zoo.end(), [](const ZooEntry& a, const ZooEntry& b) {
    if (a.step_time_ms != b.step_time_ms) return a.step_time_ms < b.step_time_ms;
    return a.encoding < b.encoding;
  });
  for (std::size_t i = 0; i < zoo.size(); ++i) zoo[i].name = zoo_name(i);
  return zoo;
}

std::vector<ZooEntry> reference_zoo() {
  std::vector<ZooEntry> zoo;
  SurrogateConfig cfg;
  for (const CalibrationRow& row : et_nas_reference()) {
    ZooEntry e;
    e.name = row.name;
    e.encoding = row.encoding;
    e.spec = parse_architecture(row.encoding);
    e.reference_accuracy = row.top1 / 100.0;
    e.costs = evaluate_costs(e.spec, cfg);
    e.step_time_ms = row.step_time_ms;
    zoo.push_back(std::move(e));
  }
  return zoo;
}

void StepTimeTable::set(const std::string& name, int batch, int resolution, double ms) {
  if (!(ms > 0) || !std::isfinite(ms)) {
    throw std::invalid_argument("StepTimeTable: step time must be positive for " + name);
  }
  table_[Key{name, batch, resolution}] = ms;
}

double StepTimeTable::lookup(const std::string& name, int batch, int resolution) const {
  auto it = table_.find(Key{name, batch, resolution});
  if (it == table_.end()) {
    throw std::out_of_range("no step time for " + name + " at batch " + std::to_string(batch) +
                            ", " + std::to_string(resolution) + " px");
  }
  return it->second;
}

bool StepTimeTable::contains(const std::string& name, int batch, int resolution) const {
  return table_.count(Key{name, batch, resolution}) > 0;
}

double scaled_step_time(const ZooEntry& e, int batch, int resolution, const StepTimeModel& m) {
  const double s = static_cast<double>(resolution) / 224.0;
  const double spatial = m.ms_per_gmac * e.costs.macs * 1e-9 +
                         m.ms_per_mact * e.costs.activations * 1e-6;
  const double fixed = m.ms_per_mparam * e.costs.params * 1e-6;
  const double base = spatial + fixed;
  const double scaled = s * s * spatial + fixed;
  const double ratio = base > 0 ? scaled / base : s * s;
  return e.step_time_ms * ratio * (static_cast<double>(batch) / 64.0);
}

StepTimeTable build_step_time_table(std::span<const ZooEntry> zoo, std::span<const int> batches,
                                    std::span<const int> resolutions, const StepTimeModel& m) {
  if (zoo.empty()) throw std::invalid_argument("build_step_time_table: empty zoo");
  StepTimeTable t;
  for (const ZooEntry& e : zoo) {
    for (int b : batches) {
      for (int r : resolutions) t.set(e.name, b, r, scaled_step_time(e, b, r, m));
    }
  }
  return t;
}

std::vector<double> efficiency_score(std::span<const Objectives> points) {
  const auto fronts = non_dominated_sort(points);
  std::vector<double> rank(points.size());
  for (std::size_t f = 0; f < fronts.size(); ++f) {
    for (std::size_t i : fronts[f]) rank[i] = static_cast<double>(f + 1);
  }
  if (fronts.size() < 2) throw std::invalid_argument("efficiency_score: zero rank variance");
  const double n = static_cast<double>(points.size());
  const double mean = std::accumulate(rank.begin(), rank.end(), 0.0) / n;
  double var = 0;
  for (double r : rank) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> s(points.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = -(rank[i] - mean) / sd;
  return s;
}

// ---------------------------------------------------------------------------

namespace {

double log2_ratio(const BlockSpec& b, std::size_t k) {
  if (k >= b.ratios.size()) return 0;
  return static_cast<double>(b.ratios[k].id) - 2.0;
}

}  // namespace

DesignMatrix block_features(std::span<const ArchitectureSpec> archs) {
  DesignMatrix x;
  x.names = {"OP1 Channel Change Ratio",
             "OP2 Channel Change Ratio",
             "Num of skip connection (add)",
             "Num of skip connection (concat)",
             "Output_channel",
             "conv1x1",
             "conv3x3, w group=2",
             "conv3x3, w group=4",
             "Separable conv3x3"};
  x.reference_terms = {"conv3x3 (ref)"};
  for (const ArchitectureSpec& a : archs) {
    const BlockSpec& b = a.block;
    double add = 0, concat = 0;
    for (const SkipSpec& s : b.skips) (s.kind == MergeKind::kAdd ? add : concat) += 1;
    std::array<double, kNumOps> ops{};
    for (OpCode op : b.ops) ops[static_cast<int>(op)] += 1;
    const auto plan = plan_blocks(a);
    const double out = plan.empty() ? 0 : std::log2(static_cast<double>(plan.back().out_channels));
    x.rows.push_back({log2_ratio(b, 0), log2_ratio(b, 1), add, concat, out, ops[1], ops[2], ops[3],
                      ops[4]});
  }
  return x;
}

DesignMatrix macro_features(std::span<const ArchitectureSpec> archs) {
  DesignMatrix x;
  x.names = {"Channel Size"};
  for (int k = 1; k <= 5; ++k) x.names.push_back("Double Channel Position " + std::to_string(k));
  for (int s = 1; s <= 4; ++s) x.names.push_back("Num block in Stage-" + std::to_string(s));
  for (const ArchitectureSpec& a : archs) {
    std::vector<double> row{std::log2(static_cast<double>(a.first_channel))};
    std::vector<int> mults;
    for (const auto& stage : a.macro.stages) mults.insert(mults.end(), stage.begin(), stage.end());
    for (std::size_t k = 0; k < 5; ++k) row.push_back(k < mults.size() && mults[k] >= 2 ? 1 : 0);
    for (const auto& stage : a.macro.stages) row.push_back(static_cast<double>(stage.size()));
    x.rows.push_back(std::move(row));
  }
  return x;
}

std::vector<std::string> drop_constant_columns(DesignMatrix& x) {
  std::vector<std::string> dropped;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < x.names.size(); ++j) {
    bool constant = true;
    for (const auto& row : x.rows) {
      if (row[j] != x.rows.front()[j]) {
        constant = false;
        break;
      }
    }
    if (constant && !x.rows.empty()) {
      dropped.push_back(x.names[j]);
    } else {
      keep.push_back(j);
    }
  }
  DesignMatrix out;
  out.reference_terms = x.reference_terms;
  for (std::size_t j : keep) out.names.push_back(x.names[j]);
  for (const auto& row : x.rows) {
    std::vector<double> r;
    for (std::size_t j : keep) r.push_back(row[j]);
    out.rows.push_back(std::move(r));
  }
  x = std::move(out);
  return dropped;
}

double t_pvalue(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(dof);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return std::clamp(p, 0.0, 1.0);
}

RegressionResult regression_analysis(const DesignMatrix& x, std::span<const double> y,
                                     const RegressionOptions& opt) {
  const auto n = static_cast<Eigen::Index>(x.rows.size());
  const auto p = static_cast<Eigen::Index>(x.names.size());
  if (static_cast<std::size_t>(n) != y.size()) {
    throw std::invalid_argument("regression_analysis: row count differs from response length");
  }
  if (n <= p + 1) {
    throw std::invalid_argument("regression_analysis: need more observations than terms");
  }

  Eigen::MatrixXd a(n, p + 1);
  a.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x.rows[static_cast<std::size_t>(i)].size() != static_cast<std::size_t>(p)) {
      throw std::invalid_argument("regression_analysis: ragged design matrix");
    }
    for (Eigen::Index j = 0; j < p; ++j) a(i, j + 1) = x.rows[static_cast<std::size_t>(i)][j];
  }
  if (opt.standardize) {
    for (Eigen::Index j = 1; j <= p; ++j) {
      const double mean = a.col(j).mean();
      const double sd = std::sqrt((a.col(j).array() - mean).square().sum() / static_cast<double>(n));
      if (sd > 0) a.col(j) = (a.col(j).array() - mean) / sd;
    }
  }

  // Columns that add nothing to the span of the columns before them.
  std::vector<std::string> deficient;
  {
    Eigen::Index rank = 0;
    for (Eigen::Index j = 0; j <= p; ++j) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.leftCols(j + 1));
      qr.setThreshold(1e-10);
      if (qr.rank() == rank) {
        deficient.push_back(j == 0 ? "(intercept)" : x.names[static_cast<std::size_t>(j - 1)]);
      } else {
        rank = qr.rank();
      }
    }
  }
  if (!deficient.empty()) {
    std::string msg = "regression_analysis: rank-deficient design; dependent columns:";
    for (const auto& c : deficient) msg += " [" + c + "]";
    throw RankDeficientError(msg, deficient);
  }

  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::MatrixXd gram = a.transpose() * a;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::VectorXd beta = ldlt.solve(a.transpose() * yv);
  const Eigen::VectorXd resid = yv - a * beta;
  const Eigen::MatrixXd gram_inv = ldlt.solve(Eigen::MatrixXd::Identity(p + 1, p + 1));

  const double dof = static_cast<double>(n - p - 1);
  const double rss = resid.squaredNorm();
  const double sigma2 = rss / dof;
  const double tss = (yv.array() - yv.mean()).square().sum();

  RegressionResult r;
  r.n = static_cast<int>(n);
  r.standardized = opt.standardize;
  r.intercept = beta(0);
  r.r_squared = tss > 0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 1.0;
  r.residuals.assign(resid.data(), resid.data() + n);
  for (Eigen::Index j = 1; j <= p; ++j) {
    RegressionTerm t;
    t.name = x.names[static_cast<std::size_t>(j - 1)];
    t.coef = beta(j);
    t.se = std::sqrt(std::max(0.0, sigma2 * gram_inv(j, j)));
    if (t.se > 0) {
      t.t = t.coef / t.se;
    } else {
      t.t = t.coef == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), t.coef);
    }
    t.p = t_pvalue(t.t, dof);
    r.terms.push_back(std::move(t));
  }
  for (const auto& ref : x.reference_terms) {
    RegressionTerm t;
    t.name = ref;
    t.reference = true;
    r.terms.push_back(std::move(t));
  }
  return r;
}

std::string format_regression(const RegressionResult& r, const std::string& title) {
  std::size_t width = 5;
  for (const auto& t : r.terms) width = std::max(width, t.name.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s  n=%d  R-sq=%.1f%%%s\n", title.c_str(), r.n,
                100.0 * r.r_squared, r.standardized ? "  (standardized predictors)" : "");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %9s\n", static_cast<int>(width), "Terms", "Coef",
                "SE Coef", "T-Value", "P-Value");
  os << buf;
  for (const auto& t : r.terms) {
    if (t.reference) {
      std::snprintf(buf, sizeof buf, "%-*s %9.3f %9s %9s %9s\n", static_cast<int>(width),
                    t.name.c_str(), 0.0, "-", "-", "-");
    } else {
      std::snprintf(buf, sizeof buf, "%-*s %9.3f %9.3f %9.2f %9.2f\n", static_cast<int>(width),
                    t.name.c_str(), t.coef, t.se, t.t, t.p);
    }
    os << buf;
  }
  if (!r.dropped.empty()) {
    os << "dropped (no variation):";
    for (const auto& d : r.dropped) os << " [" << d << "]";
    os << "\n";
  }
  return os.str();
}

}  // namespace nasoa
