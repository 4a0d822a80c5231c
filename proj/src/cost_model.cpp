#include "nasoa/cost_model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace nasoa {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kConv: return "conv";
    case NodeKind::kMaxPool: return "maxpool";
    case NodeKind::kAvgPool: return "avgpool";
    case NodeKind::kAdd: return "add";
    case NodeKind::kConcat: return "concat";
    case NodeKind::kGlobalPool: return "gpool";
    case NodeKind::kLinear: return "linear";
  }
  return "?";
}

namespace {

// fit_step_time over et_nas_reference() at 224 px / 1000 classes.
constexpr double kFittedMsPerGmac = 6.3005858319546686;
constexpr double kFittedMsPerMact = 4.5778816735841721;
constexpr double kFittedMsPerMparam = 1.4795223867168483;

int down(int size, int stride) { return (size + stride - 1) / stride; }

long op_groups(OpCode op, long cin) {
  switch (op) {
    case OpCode::kConv3x3Group2: return 2;
    case OpCode::kConv3x3Group4: return 4;
    case OpCode::kConv3x3Depthwise: return cin;
    default: return 1;
  }
}

class GraphBuilder {
 public:
  explicit GraphBuilder(LayerGraph& g) : g_(g) {}

  int add(LayerNode node, std::initializer_list<int> producers) {
    const int id = static_cast<int>(g_.nodes.size());
    g_.nodes.push_back(std::move(node));
    for (int p : producers) g_.edges.push_back({p, id});
    return id;
  }

  int conv(int src, int kernel, long cout, int stride, long groups, std::string label) {
    const LayerNode& in = g_.nodes[src];
    LayerNode n;
    n.kind = NodeKind::kConv;
    n.kernel = kernel;
    n.stride = stride;
    n.groups = groups;
    n.in_channels = in.out_channels;
    n.out_channels = cout;
    n.in_size = in.out_size;
    n.out_size = down(in.out_size, stride);
    n.label = std::move(label);
    return add(std::move(n), {src});
  }

  int pool(int src, NodeKind kind, std::string label) {
    const LayerNode& in = g_.nodes[src];
    LayerNode n;
    n.kind = kind;
    n.kernel = kind == NodeKind::kMaxPool ? 3 : 2;
    n.stride = 2;
    n.in_channels = in.out_channels;
    n.out_channels = in.out_channels;
    n.in_size = in.out_size;
    n.out_size = down(in.out_size, 2);
    n.label = std::move(label);
    return add(std::move(n), {src});
  }

  int merge(NodeKind kind, int dst, int src, std::string label) {
    const LayerNode& d = g_.nodes[dst];
    const LayerNode& s = g_.nodes[src];
    LayerNode n;
    n.kind = kind;
    n.in_channels = kind == NodeKind::kConcat ? d.out_channels + s.out_channels : d.out_channels;
    n.out_channels = n.in_channels;
    n.in_size = d.out_size;
    n.out_size = d.out_size;
    n.label = std::move(label);
    return add(std::move(n), {dst, src});
  }

  const LayerNode& node(int id) const { return g_.nodes[id]; }

 private:
  LayerGraph& g_;
};

}  // namespace

LayerGraph build_graph(const ArchitectureSpec& a, int resolution, int classes,
                       const ValidityRules& rules) {
  LayerGraph g;
  g.resolution = resolution;
  g.classes = classes;
  GraphBuilder b(g);

  LayerNode input;
  input.kind = NodeKind::kConv;  // placeholder source; excluded from costs
  input.in_channels = g.input_channels;
  input.out_channels = g.input_channels;
  input.in_size = resolution;
  input.out_size = resolution;
  input.label = "input";
  const int in_id = b.add(input, {});

  int cur = b.conv(in_id, 3, a.first_channel, 2, 1, "stem.conv");
  cur = b.pool(cur, NodeKind::kMaxPool, "stem.pool");

  const BlockSpec& blk = a.block;
  const int n = blk.num_ops();
  const std::optional<int> host = stride_host(blk);

  for (const BlockPlan& p : plan_blocks(a)) {
    const std::string prefix =
        "s" + std::to_string(p.stage) + ".b" + std::to_string(p.index) + ".";
    if (p.downsample && !host) {
      throw BuildError(prefix + "down-sampling block has no stride host");
    }
    const BlockChannels ch = infer_block_channels(blk, p.in_channels, p.out_channels);
    if (ch.fractional) throw BuildError(prefix + "fractional channel count");

    std::vector<int> point(static_cast<std::size_t>(n + 1), -1);
    point[0] = cur;
    for (int k = 1; k <= n; ++k) {
      const OpCode op = blk.ops[k - 1];
      const long cin = b.node(point[k - 1]).out_channels;
      const int stride = (p.downsample && *host == k - 1) ? 2 : 1;
      const long groups = op_groups(op, cin);
      if (cin % groups != 0 || ch.op_out[k - 1] % groups != 0) {
        throw BuildError(prefix + "op" + std::to_string(k) + " grouping mismatch");
      }
      int value = b.conv(point[k - 1], op_kernel(op), ch.op_out[k - 1], stride, groups,
                         prefix + "op" + std::to_string(k) + "." + op_name(op));
      for (const SkipSpec& s : blk.skips) {
        if (s.to != k) continue;
        const std::string tag = std::string(s.kind == MergeKind::kAdd ? "a" : "c") +
                                std::to_string(s.from) + std::to_string(s.to);
        int src = point[s.from];
        const long want = b.node(value).out_channels;
        if (s.kind == MergeKind::kAdd && b.node(src).out_channels != want) {
          if (rules.add_merge == AddMergePolicy::kStrict) {
            throw BuildError(prefix + "skip " + tag + " joins " +
                             std::to_string(b.node(src).out_channels) + " and " +
                             std::to_string(want) + " channels");
          }
          const int stride = b.node(src).out_size > b.node(value).out_size ? 2 : 1;
          src = b.conv(src, 1, want, stride, 1, prefix + tag + ".proj");
        }
        while (b.node(src).out_size > b.node(value).out_size) {
          src = b.pool(src, NodeKind::kAvgPool, prefix + tag + ".pool");
        }
        if (s.kind == MergeKind::kAdd) {
          value = b.merge(NodeKind::kAdd, value, src, prefix + tag);
        } else {
          value = b.merge(NodeKind::kConcat, value, src, prefix + tag);
        }
      }
      point[k] = value;
    }

    int out = point[n];
    if (b.node(out).out_channels != p.out_channels) {
      out = b.conv(out, 1, p.out_channels, 1, 1, prefix + "fuse");
    }
    int shortcut = cur;
    if (p.in_channels != p.out_channels || p.downsample) {
      shortcut = b.conv(cur, 1, p.out_channels, p.downsample ? 2 : 1, 1, prefix + "proj");
    }
    cur = b.merge(NodeKind::kAdd, out, shortcut, prefix + "residual");
    g.stage_out_channels[static_cast<std::size_t>(p.stage - 1)] = p.out_channels;
    ++g.num_blocks;
  }

  LayerNode gp;
  gp.kind = NodeKind::kGlobalPool;
  gp.in_channels = b.node(cur).out_channels;
  gp.out_channels = gp.in_channels;
  gp.in_size = b.node(cur).out_size;
  gp.out_size = 1;
  gp.label = "head.pool";
  const int gp_id = b.add(gp, {cur});

  LayerNode fc;
  fc.kind = NodeKind::kLinear;
  fc.in_channels = gp.out_channels;
  fc.out_channels = classes;
  fc.in_size = 1;
  fc.out_size = 1;
  fc.label = "head.fc";
  b.add(fc, {gp_id});
  return g;
}

CostReport count_costs(const LayerGraph& g) {
  CostReport r;
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {  // node 0 is the input
    const LayerNode& n = g.nodes[i];
    const double spatial = static_cast<double>(n.out_size) * n.out_size;
    switch (n.kind) {
      case NodeKind::kConv: {
        const double weights = static_cast<double>(n.kernel) * n.kernel *
                               static_cast<double>(n.in_channels) *
                               static_cast<double>(n.out_channels) / static_cast<double>(n.groups);
        r.params += weights + 2.0 * static_cast<double>(n.out_channels);
        r.macs += weights * spatial;
        r.activations += static_cast<double>(n.out_channels) * spatial;
        break;
      }
      case NodeKind::kLinear: {
        const double weights = static_cast<double>(n.in_channels) * n.out_channels;
        r.params += weights;
        r.macs += weights;
        r.activations += static_cast<double>(n.out_channels);
        break;
      }
      default:
        r.activations += static_cast<double>(n.out_channels) * spatial;
        break;
    }
  }
  return r;
}

StepTimeModel SurrogateConfig::default_step_time() {
  return StepTimeModel{kFittedMsPerGmac, kFittedMsPerMact, kFittedMsPerMparam};
}

double estimate_step_time(const CostReport& r, const StepTimeModel& m) {
  return m.ms_per_gmac * r.macs * 1e-9 + m.ms_per_mact * r.activations * 1e-6 +
         m.ms_per_mparam * r.params * 1e-6;
}

double surrogate_accuracy(const CostReport& r, const ArchitectureSpec& a,
                          const SurrogateConfig& cfg) {
  const double capacity = std::log1p(r.params / cfg.param_ref);
  double acc = cfg.acc_floor + cfg.acc_span * (1.0 - std::exp(-cfg.gain * capacity));

  const double total = a.macro.total_blocks();
  double imbalance = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    const double share = static_cast<double>(a.macro.stages[s].size()) / total;
    const double d = share - cfg.ideal_stage_share[s];
    imbalance += d * d;
  }
  acc -= cfg.balance_weight * imbalance;
  acc -= cfg.skip_weight * static_cast<double>(a.block.skips.size());
  return std::clamp(acc, 0.0, 1.0);
}

CostReport evaluate_costs(const ArchitectureSpec& a, const SurrogateConfig& cfg,
                          const ValidityRules& rules) {
  CostReport r = count_costs(build_graph(a, cfg.resolution, cfg.classes, rules));
  r.step_time_ms = estimate_step_time(r, cfg.step_time);
  return r;
}

namespace {

// name, encoding, MParam, GMac, MAct, top-1, inference ms, step ms
constexpr CalibrationRow kEtNas[] = {
    {"ET-NAS-A", "2-_32_2-11-112-1121112", 2.6, 0.23, 1.3, 62.06, 5.30, 14.74},
    {"ET-NAS-B", "031-_32_1-1-221-11121", 3.9, 0.39, 1.3, 66.92, 5.92, 15.78},
    {"ET-NAS-C", "011-_32_2-211-2-111122", 7.1, 0.58, 2.0, 71.29, 8.94, 26.28},
    {"ET-NAS-D", "031-_64_1-1-221-11121", 15.2, 1.55, 2.6, 74.46, 14.54, 36.30},
    {"ET-NAS-E", "011-_64_21-211-121-11111121", 21.4, 2.61, 4.7, 76.87, 25.34, 61.95},
    {"ET-NAS-F", "10001-_64_4-111-11122-1111111111111112", 28.4, 2.31, 6.8, 78.80, 33.83, 93.04},
    {"ET-NAS-G", "211-_64_41-211-121-11111121", 49.3, 5.68, 8.4, 80.41, 53.08, 133.97},
    {"ET-NAS-H", "10001-_64_4-111111111-211112111112-11111", 44.0, 5.33, 10.9, 80.92, 76.80,
     193.40},
    {"ET-NAS-I", "02031-a02_64_111-2111-21111111111111111111111-211", 72.4, 13.13, 14.6, 81.38,
     94.60, 265.13},
    {"ET-NAS-J", "211-_64_411-2111-21111111111111111111111-211", 103.0, 18.16, 15.9, 82.08,
     131.92, 370.28},
    {"ET-NAS-K", "02031-a02_64_1121-111111111111111111111111111-21111111211111-1", 87.3, 27.51,
     31.3, 82.42, 185.75, 505.00},
    {"ET-NAS-L", "23311-a02c12_64_211-2111-21111111111111111111111-211", 130.4, 23.46, 19.4,
     82.65, 191.89, 542.52},
};

constexpr std::pair<const char*, const char*> kResNets[] = {
    {"ResNet18", "020-_64_11-21-21-21"},
    {"ResNet34", "020-_64_111-2111-211111-211"},
    {"ResNet50", "10001-_64_411-2111-211111-211"},
    {"Wide ResNet50", "11011-_64_411-2111-211111-211"},
};

}  // namespace

std::span<const CalibrationRow> et_nas_reference() { return kEtNas; }

std::span<const std::pair<const char*, const char*>> resnet_reference() { return kResNets; }

StepTimeModel fit_step_time(std::span<const CostReport> costs, std::span<const double> step_ms) {
  if (costs.size() != step_ms.size() || costs.empty()) {
    throw std::invalid_argument("fit_step_time: size mismatch");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(costs.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = costs[i].macs * 1e-9;
    x(i, 1) = costs[i].activations * 1e-6;
    x(i, 2) = costs[i].params * 1e-6;
    y(i) = step_ms[i];
  }
  // Enumerate the 7 non-empty supports; keep the best one whose unconstrained
  // solution is non-negative. For 3 variables this is exact NNLS.
  double best_rss = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  for (int mask = 1; mask < 8; ++mask) {
    std::vector<int> cols;
    for (int c = 0; c < 3; ++c) {
      if (mask & (1 << c)) cols.push_back(c);
    }
    Eigen::MatrixXd sub(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
    const Eigen::VectorXd coef = sub.colPivHouseholderQr().solve(y);
    if ((coef.array() < 0).any()) continue;
    const double rss = (sub * coef - y).squaredNorm();
    if (rss < best_rss) {
      best_rss = rss;
      best.setZero();
      for (std::size_t j = 0; j < cols.size(); ++j) best(cols[j]) = coef(static_cast<Eigen::Index>(j));
    }
  }
  return StepTimeModel{best(0), best(1), best(2)};
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: bad sizes");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace nasoa
