#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nasoa {

/// Running per-feature mean and variance (Welford).
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim);

  void update(const Eigen::VectorXd& x);
  /// (x - mean) / sd clipped to +-kClip; features seen fewer than twice, or
  /// with zero spread, are only centred.
  Eigen::VectorXd transform(const Eigen::VectorXd& x) const;
  static constexpr double kClip = 5.0;

  std::uint64_t count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& m2() const { return m2_; }
  void restore(std::uint64_t count, Eigen::VectorXd mean, Eigen::VectorXd m2);

 private:
  std::uint64_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

struct PredictorConfig {
  int layers = 10;
  int width = 64;
  int input_dim = 1;
  double beta = 0.99;
  double learning_rate = 0.01;
  double smoothing = 0.0;  // alpha floor s / L after renormalization; 0 = off
  double residual_clip = 0.0;  // > 0: Huber loss with this threshold for SGD
  bool adaptive = true;    // false: only the top head, alpha pinned at e_L
  bool standardize = true;
  bool record_trace = false;
  std::uint64_t seed = 0;
};

struct Prediction {
  double raw = 0;
  double clipped = 0;
  Eigen::VectorXd layer_outputs;  // f_1..f_L, unclipped
};

struct Gradients {
  std::vector<Eigen::MatrixXd> phi;
  std::vector<Eigen::VectorXd> head;
  double loss = 0;  // sum_l alpha_l * 0.5 * (f_l - y)^2 (Huber when clipping)
};

struct TraceRow {
  std::vector<double> alpha;
  std::vector<double> loss;
  double played = 0;
};

struct Observation {
  Prediction prediction;
  std::vector<double> hedge_loss;
  bool sgd_applied = true;
  std::string sgd_error;
};

/// Depth-adaptive MLP regressor: every hidden layer feeds a scalar head and
/// the prediction is the alpha-weighted mix of the heads.
class AdaptiveMLP {
 public:
  explicit AdaptiveMLP(const PredictorConfig& cfg);

  const PredictorConfig& config() const { return cfg_; }
  int layers() const { return cfg_.layers; }

  /// Normalizes x with the running statistics, then runs the network.
  Prediction predict(const Eigen::VectorXd& x) const;
  /// Runs the network on an already-normalized input.
  Prediction forward(const Eigen::VectorXd& z) const;
  /// Raw predictions for the columns of x.
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& x) const;

  /// alpha_l <- alpha_l * beta^loss_l, renormalized; losses must lie in [0, 1].
  void hedge_update(std::span<const double> losses);
  void hedge_update(std::span<const double> losses, double beta);

  /// Gradients of sum_l alpha_l * 0.5 * (f_l - y)^2 at a normalized input.
  Gradients gradients(const Eigen::VectorXd& z, double y) const;
  /// One SGD step at a normalized input; returns false (weights untouched)
  /// when a gradient entry is not finite.
  bool sgd_update(const Eigen::VectorXd& z, double y, std::string* error = nullptr);

  /// predict, hedge on clipped absolute errors, SGD, then fold x into the
  /// normalizer.
  Observation observe(const Eigen::VectorXd& x, double y);

  const Eigen::VectorXd& alpha() const { return alpha_; }
  void set_alpha(const Eigen::VectorXd& a);
  Eigen::MatrixXd& phi(int l) { return phi_[static_cast<std::size_t>(l)]; }
  const Eigen::MatrixXd& phi(int l) const { return phi_[static_cast<std::size_t>(l)]; }
  Eigen::VectorXd& head(int l) { return head_[static_cast<std::size_t>(l)]; }
  const Eigen::VectorXd& head(int l) const { return head_[static_cast<std::size_t>(l)]; }
  const RunningNormalizer& normalizer() const { return norm_; }
  const std::vector<TraceRow>& trace() const { return trace_; }

  void save(std::ostream& os) const;
  static AdaptiveMLP load(std::istream& is);

 private:
  PredictorConfig cfg_;
  std::vector<Eigen::MatrixXd> phi_;   // width x (fan_in + 1), last column bias
  std::vector<Eigen::VectorXd> head_;  // width + 1, last entry bias
  Eigen::VectorXd alpha_;
  RunningNormalizer norm_;
  std::vector<TraceRow> trace_;
};

/// Loss vector for step t (0-based).
using LossSource = std::function<std::vector<double>(int t)>;

struct RegretResult {
  double played_avg = 0;  // (1/T) sum_t alpha^(t) . loss^(t)
  double best_avg = 0;    // min over fixed alpha = best single expert
  double gap = 0;         // played_avg - best_avg
  std::vector<TraceRow> trace;
};

/// Hedge alone with beta = sqrt(T) / (sqrt(T) + C).
RegretResult regret_experiment(int experts, int horizon, double c, const LossSource& source,
                               bool keep_trace = false);

/// Right side of the average-regret bound: (C/2 + ln L (1 + C) / C) / sqrt(T).
double regret_bound(int experts, int horizon, double c);

/// Experts 1 and 2 alternate (1, 0) / (0, 1); the rest always lose 1.
LossSource alternating_losses(int experts);

/// CSV with columns t, alpha_1..L, loss_1..L, played_loss.
void write_regret_csv(std::ostream& os, std::span<const TraceRow> trace);

}  // namespace nasoa
