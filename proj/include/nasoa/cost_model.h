#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nasoa/arch_encoding.h"

namespace nasoa {

enum class NodeKind { kConv, kMaxPool, kAvgPool, kAdd, kConcat, kGlobalPool, kLinear };

const char* to_string(NodeKind kind);

struct LayerNode {
  NodeKind kind = NodeKind::kConv;
  int kernel = 1;
  int stride = 1;
  long groups = 1;
  long in_channels = 0;
  long out_channels = 0;
  int in_size = 0;   // pixels per side
  int out_size = 0;
  std::string label;
};

struct LayerEdge {
  int producer = 0;
  int consumer = 0;
};

struct LayerGraph {
  int input_channels = 3;
  int resolution = 224;
  int classes = 1000;
  std::vector<LayerNode> nodes;
  std::vector<LayerEdge> edges;  // producers always precede consumers

  int num_blocks = 0;
  std::array<long, 4> stage_out_channels{};
};

class BuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Expands an encoding into a concrete layer graph. Stem is conv3x3/2 then
/// max-pool/2; stages 2-4 halve resolution in their first block; head is
/// global pool + linear.
LayerGraph build_graph(const ArchitectureSpec& a, int resolution = 224, int classes = 1000,
                       const ValidityRules& rules = {});

struct CostReport {
  double params = 0;
  double macs = 0;
  double activations = 0;
  double step_time_ms = 0;
};

CostReport count_costs(const LayerGraph& g);

/// Linear step-time proxy, coefficients per GMac, per MAct and per MParam, in
/// milliseconds at the calibration operating point (batch 64, 224 px).
struct StepTimeModel {
  double ms_per_gmac = 0;
  double ms_per_mact = 0;
  double ms_per_mparam = 0;
};

struct SurrogateConfig {
  StepTimeModel step_time = default_step_time();
  int resolution = 224;
  int classes = 1000;
  int batch_size = 64;

  // accuracy = floor + span * (1 - exp(-gain * log1p(params / param_ref)))
  //            - balance_weight * sum_s (share_s - ideal_s)^2
  //            - skip_weight * explicit_skips
  double acc_floor = 0.40;
  double acc_span = 0.45;
  double param_ref = 2.0e6;
  double gain = 0.65;
  std::array<double, 4> ideal_stage_share{0.15, 0.20, 0.45, 0.20};
  double balance_weight = 0.30;
  double skip_weight = 0.01;

  static StepTimeModel default_step_time();
};

double estimate_step_time(const CostReport& r, const StepTimeModel& m);

double surrogate_accuracy(const CostReport& r, const ArchitectureSpec& a,
                          const SurrogateConfig& cfg);

/// Costs + step time at the configured resolution/classes.
CostReport evaluate_costs(const ArchitectureSpec& a, const SurrogateConfig& cfg,
                          const ValidityRules& rules = {});

/// A reference architecture with published step time, used for calibration.
struct CalibrationRow {
  const char* name = "";
  const char* encoding = "";
  double mparams = 0;
  double gmacs = 0;
  double mact = 0;
  double top1 = 0;          // percent
  double inference_ms = 0;
  double step_time_ms = 0;  // batch 64
};

/// The twelve ET-NAS reference models.
std::span<const CalibrationRow> et_nas_reference();

/// The ResNet-family encodings (ResNet18/34/50, Wide ResNet50).
std::span<const std::pair<const char*, const char*>> resnet_reference();

/// Non-negative least squares fit of the step-time proxy (exact, by active
/// set enumeration over the three coefficients).
StepTimeModel fit_step_time(std::span<const CostReport> costs, std::span<const double> step_ms);

double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace nasoa
