#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nasoa/online_predictor.h"
#include "nasoa/random.h"
#include "nasoa/zoo_analysis.h"

namespace nasoa {

struct TaskMeta {
  int num_classes = 10;
  double avg_images_per_class = 100;
  double std_images_per_class = 0;
  double domain_similarity = 0.5;  // externally supplied EMD score
  long train_set_size = 1000;
  int batch_size = 64;
};

/// Learning rate decays x0.1 at 3/7 and 6/7 of the iterations.
struct Regime {
  double learning_rate = 0.01;
  long num_iterations = 1;
  int frozen_stages = -1;  // -1: nothing frozen

  double lr_at(long iteration) const;
};

struct Request {
  TaskMeta meta;
  double time_limit_s = 0;
};

struct RegimeGrid {
  std::vector<double> learning_rates{0.1, 0.01, 0.001, 0.0001};
  std::vector<int> frozen_stages{-1, 0, 1, 2, 3};
};

/// Read-only view of the zoo the scheduler chooses from.
struct ZooView {
  std::span<const ZooEntry> entries;
  const StepTimeTable* table = nullptr;
  int resolution = 224;

  double step_time_ms(std::size_t entry, int batch) const;
};

struct Candidate {
  std::size_t entry = 0;
  Regime regime;
  double step_time_ms = 0;
};

struct Decision {
  std::size_t entry = 0;
  std::string name;
  Regime regime;
  double predicted = 0;
  std::size_t candidates = 0;
  double step_time_ms = 0;
};

class NoFeasibleCandidate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterations of the largest whole number of epochs that fits in the time
/// limit; 0 when not even one epoch fits.
long max_iterations(double time_limit_s, double step_time_ms, const TaskMeta& meta);
/// Same, with the step time looked up for the task's batch size.
long max_iterations(double time_limit_s, const ZooView& zoo, std::size_t entry,
                    const TaskMeta& meta);

/// One-hot model, reference accuracy, the six task scalars, iterations, lr
/// and frozen stages; count-like inputs on a log scale.
Eigen::VectorXd make_features(const ZooView& zoo, std::size_t entry, const Regime& regime,
                              const TaskMeta& meta);
inline int feature_dim(std::size_t zoo_size) { return static_cast<int>(zoo_size) + 9; }

/// Every feasible entry crossed with the grid; throws NoFeasibleCandidate.
std::vector<Candidate> enumerate_candidates(const ZooView& zoo, const RegimeGrid& grid,
                                            const Request& req);
/// h candidates drawn from the full list (without replacement while possible).
std::vector<Candidate> sample_candidates(const ZooView& zoo, const RegimeGrid& grid,
                                         const Request& req, int h, Rng& rng);

using Scorer = std::function<double(const Eigen::VectorXd&)>;

/// Argmax of the scorer; ties to lower step time, lower lr, encoding, then
/// fewer frozen stages.
Decision choose(const ZooView& zoo, std::span<const Candidate> candidates, const Request& req,
                const Scorer& score);
/// Same with precomputed scores, one per candidate.
Decision choose(const ZooView& zoo, std::span<const Candidate> candidates,
                std::span<const double> scores);
Decision generate(const Request& req, const Scorer& score, const ZooView& zoo,
                  const RegimeGrid& grid);
Decision generate(const Request& req, const AdaptiveMLP& predictor, const ZooView& zoo,
                  const RegimeGrid& grid);

/// Ground-truth accuracy of fine-tuning an entry under a regime.
using TaskOracle = std::function<double(const ZooEntry&, const Regime&, const TaskMeta&)>;

struct SyntheticOracleConfig {
  std::uint64_t seed = 0;
  double noise = 0.01;  // half-width of the hashed uniform noise
};

/// Smooth landscape: reference accuracy, saturating training length, a
/// bell in log lr whose peak moves with domain similarity, and a frozen-stage
/// optimum that moves with dataset size.
TaskOracle synthetic_oracle(const SyntheticOracleConfig& cfg = {});

struct TaskStreamConfig {
  std::uint64_t seed = 0;
  std::vector<int> batch_sizes{32, 64, 128};
  double min_epochs = 1.0;   // time limit relative to one epoch of the fastest entry
  double max_epochs = 40.0;
};

/// Random task requests; the time limit always admits at least one entry.
class TaskStream {
 public:
  TaskStream(TaskStreamConfig cfg, const ZooView& zoo);
  Request next();

 private:
  TaskStreamConfig cfg_;
  ZooView zoo_;
  Rng rng_;
};

struct StepOutcome {
  Decision decision;
  double observed = 0;
  Observation observation;
};

StepOutcome online_step(const Request& req, AdaptiveMLP& predictor, const ZooView& zoo,
                        const RegimeGrid& grid, const TaskOracle& oracle);

struct OfflineConfig {
  int samples = 0;  // H_M
  int passes = 1;
  std::uint64_t seed = 0;
};

struct MetaSample {
  Eigen::VectorXd features;
  double accuracy = 0;
};

/// Draws H_M random (task, entry, regime) triples and their oracle accuracy.
std::vector<MetaSample> collect_meta_dataset(const ZooView& zoo, const RegimeGrid& grid,
                                             TaskStream& tasks, const TaskOracle& oracle,
                                             int samples, Rng& rng);

/// Collects a meta-dataset and replays it through observe `passes` times.
void train_offline(AdaptiveMLP& predictor, const ZooView& zoo, const RegimeGrid& grid,
                   TaskStream& tasks, const TaskOracle& oracle, const OfflineConfig& cfg);

struct ErrorStats {
  double mae = 0;
  double mse = 0;
  std::size_t count = 0;
};

struct PredictorReport {
  std::string name;
  ErrorStats overall;
  ErrorStats seg_20_40;
  ErrorStats seg_80_100;
};

/// Segment [lo, hi) of a stream of length n, as fractions.
ErrorStats segment_errors(std::span<const double> abs_errors, double lo, double hi);

enum class StreamProtocol {
  /// Each predictor runs online_step and is scored on its own choice.
  kOwnDecision,
  /// One random candidate per task, shared by every predictor.
  kSharedProbe,
};

/// Predictor settings of the online simulation preset.
PredictorConfig stream_predictor_preset();

struct SimulationConfig {
  int tasks = 5000;
  StreamProtocol protocol = StreamProtocol::kOwnDecision;
  std::uint64_t seed = 0;
  bool adaptive = true;
  std::vector<int> fixed_depths{3, 6, 10, 14};
  PredictorConfig predictor = stream_predictor_preset();  // layers/input_dim set per predictor
  int offline_samples = 0;
  int offline_passes = 1;
  TaskStreamConfig stream;
  SyntheticOracleConfig oracle;
  TaskOracle custom_oracle;  // replaces the synthetic oracle when set
};

struct StreamRecord {
  Request request;
  Candidate probe;           // candidate the first predictor was scored on
  double observed = 0;       // oracle accuracy of the probe
  Decision decision;         // the first predictor's argmax choice
  double decision_accuracy = 0;
};

struct SimulationReport {
  std::vector<PredictorReport> predictors;
  std::vector<StreamRecord> records;
  std::vector<TraceRow> adaptive_trace;
};

/// Runs every predictor over the same task stream. Under kOwnDecision each
/// predictor picks, is scored on and learns from its own argmax candidate.
/// Under kSharedProbe a random candidate is drawn once per task and every
/// predictor is scored on and learns from it.
SimulationReport simulate_stream(const SimulationConfig& cfg, const ZooView& zoo,
                                 const RegimeGrid& grid = {});

}  // namespace nasoa
