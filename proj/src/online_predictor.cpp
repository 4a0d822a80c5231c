#include "nasoa/online_predictor.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "nasoa/random.h"

namespace nasoa {

RunningNormalizer::RunningNormalizer(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

void RunningNormalizer::update(const Eigen::VectorXd& x) {
  ++count_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(x - mean_);
}

Eigen::VectorXd RunningNormalizer::transform(const Eigen::VectorXd& x) const {
  Eigen::VectorXd z = x - mean_;
  if (count_ < 2) return z.cwiseMax(-kClip).cwiseMin(kClip);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double var = m2_(i) / static_cast<double>(count_);
    if (var > 1e-12) z(i) /= std::sqrt(var);
    z(i) = std::clamp(z(i), -kClip, kClip);
  }
  return z;
}

void RunningNormalizer::restore(std::uint64_t count, Eigen::VectorXd mean, Eigen::VectorXd m2) {
  count_ = count;
  mean_ = std::move(mean);
  m2_ = std::move(m2);
}

AdaptiveMLP::AdaptiveMLP(const PredictorConfig& cfg) : cfg_(cfg), norm_(cfg.input_dim) {
  if (cfg.layers < 1) throw std::invalid_argument("AdaptiveMLP: need at least one layer");
  if (cfg.width < 1 || cfg.input_dim < 1) {
    throw std::invalid_argument("AdaptiveMLP: width and input dimension must be positive");
  }
  if (!(cfg.beta > 0 && cfg.beta < 1)) throw std::invalid_argument("AdaptiveMLP: beta not in (0,1)");
  Rng rng(cfg.seed);
  for (int l = 0; l < cfg.layers; ++l) {
    const int fan_in = l == 0 ? cfg.input_dim : cfg.width;
    const double limit = std::sqrt(6.0 / fan_in);
    Eigen::MatrixXd m(cfg.width, fan_in + 1);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
    }
    phi_.push_back(std::move(m));
    head_.push_back(Eigen::VectorXd::Zero(cfg.width + 1));
  }
  alpha_ = Eigen::VectorXd::Constant(cfg.layers, 1.0 / cfg.layers);
  if (!cfg.adaptive) {
    alpha_.setZero();
    alpha_(cfg.layers - 1) = 1.0;
  }
}

Prediction AdaptiveMLP::predict(const Eigen::VectorXd& x) const {
  if (x.size() != cfg_.input_dim) {
    throw std::invalid_argument("AdaptiveMLP::predict: expected " + std::to_string(cfg_.input_dim) +
                                " features, got " + std::to_string(x.size()));
  }
  return forward(cfg_.standardize ? norm_.transform(x) : x);
}

namespace {

double affine(const Eigen::MatrixXd& w, const Eigen::VectorXd& h, Eigen::Index row) {
  const Eigen::Index n = h.size();
  return w.row(row).head(n).dot(h) + w(row, n);
}

}  // namespace

Prediction AdaptiveMLP::forward(const Eigen::VectorXd& z) const {
  Prediction p;
  p.layer_outputs.resize(cfg_.layers);
  Eigen::VectorXd h = z;
  for (int l = 0; l < cfg_.layers; ++l) {
    const Eigen::MatrixXd& w = phi_[l];
    Eigen::VectorXd next(cfg_.width);
    for (Eigen::Index r = 0; r < next.size(); ++r) next(r) = std::max(0.0, affine(w, h, r));
    h = std::move(next);
    const Eigen::VectorXd& v = head_[l];
    p.layer_outputs(l) = v.head(cfg_.width).dot(h) + v(cfg_.width);
  }
  p.raw = alpha_.dot(p.layer_outputs);
  p.clipped = std::clamp(p.raw, 0.0, 1.0);
  return p;
}

Eigen::VectorXd AdaptiveMLP::predict_batch(const Eigen::MatrixXd& x) const {
  if (x.rows() != cfg_.input_dim) {
    throw std::invalid_argument("AdaptiveMLP::predict_batch: expected " +
                                std::to_string(cfg_.input_dim) + " features, got " +
                                std::to_string(x.rows()));
  }
  Eigen::MatrixXd h(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    h.col(c) = cfg_.standardize ? norm_.transform(x.col(c)) : Eigen::VectorXd(x.col(c));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.cols());
  for (int l = 0; l < cfg_.layers; ++l) {
    const Eigen::MatrixXd& w = phi_[l];
    const Eigen::Index n = h.rows();
    Eigen::MatrixXd next = w.leftCols(n) * h;
    next.colwise() += w.col(n);
    h = next.cwiseMax(0.0);
    if (alpha_(l) == 0) continue;
    const Eigen::VectorXd& v = head_[l];
    Eigen::VectorXd f = h.transpose() * v.head(cfg_.width);
    f.array() += v(cfg_.width);
    out += alpha_(l) * f;
  }
  return out;
}

void AdaptiveMLP::hedge_update(std::span<const double> losses) {
  hedge_update(losses, cfg_.beta);
}

void AdaptiveMLP::hedge_update(std::span<const double> losses, double beta) {
  if (static_cast<int>(losses.size()) != cfg_.layers) {
    throw std::invalid_argument("hedge_update: loss vector length differs from layer count");
  }
  for (double v : losses) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("hedge_update: loss outside [0, 1]");
  }
  if (!cfg_.adaptive) return;
  for (int l = 0; l < cfg_.layers; ++l) alpha_(l) *= std::pow(beta, losses[l]);
  alpha_ /= alpha_.sum();
  if (cfg_.smoothing > 0) {
    const double floor = cfg_.smoothing / cfg_.layers;
    for (int l = 0; l < cfg_.layers; ++l) alpha_(l) = std::max(alpha_(l), floor);
    alpha_ /= alpha_.sum();
  }
}

void AdaptiveMLP::set_alpha(const Eigen::VectorXd& a) {
  if (a.size() != cfg_.layers) throw std::invalid_argument("set_alpha: wrong length");
  if ((a.array() < 0).any() || std::fabs(a.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("set_alpha: not on the simplex");
  }
  alpha_ = a;
}

Gradients AdaptiveMLP::gradients(const Eigen::VectorXd& z, double y) const {
  const int n_layers = cfg_.layers;
  const int w = cfg_.width;
  // Forward pass keeping inputs and pre-activations.
  std::vector<Eigen::VectorXd> input(n_layers), pre(n_layers), act(n_layers);
  Eigen::VectorXd h = z;
  for (int l = 0; l < n_layers; ++l) {
    input[l] = h;
    pre[l].resize(w);
    for (Eigen::Index r = 0; r < w; ++r) pre[l](r) = affine(phi_[l], h, r);
    act[l] = pre[l].cwiseMax(0.0);
    h = act[l];
  }

  Gradients g;
  g.phi.resize(n_layers);
  g.head.resize(n_layers);
  Eigen::VectorXd upstream = Eigen::VectorXd::Zero(w);  // dLoss/dh_l from layers above
  for (int l = n_layers - 1; l >= 0; --l) {
    const Eigen::VectorXd& v = head_[l];
    const double f = v.head(w).dot(act[l]) + v(w);
    const double r = f - y;
    const double c = cfg_.residual_clip;
    double err = alpha_(l) * r;
    if (c > 0 && std::fabs(r) > c) {
      err = alpha_(l) * std::copysign(c, r);
      g.loss += alpha_(l) * c * (std::fabs(r) - 0.5 * c);
    } else {
      g.loss += 0.5 * alpha_(l) * r * r;
    }

    g.head[l].resize(w + 1);
    g.head[l].head(w) = err * act[l];
    g.head[l](w) = err;

    const Eigen::VectorXd dh = upstream + err * v.head(w);
    Eigen::VectorXd dpre(w);
    for (Eigen::Index r = 0; r < w; ++r) dpre(r) = pre[l](r) > 0 ? dh(r) : 0.0;

    const Eigen::Index fan = input[l].size();
    g.phi[l].resize(w, fan + 1);
    g.phi[l].leftCols(fan) = dpre * input[l].transpose();
    g.phi[l].col(fan) = dpre;
    upstream = phi_[l].leftCols(fan).transpose() * dpre;
  }
  return g;
}

bool AdaptiveMLP::sgd_update(const Eigen::VectorXd& z, double y, std::string* error) {
  const Gradients g = gradients(z, y);
  for (int l = 0; l < cfg_.layers; ++l) {
    if (!g.phi[l].allFinite() || !g.head[l].allFinite()) {
      if (error) *error = "non-finite gradient at layer " + std::to_string(l + 1);
      return false;
    }
  }
  const double eta = cfg_.learning_rate;
  for (int l = 0; l < cfg_.layers; ++l) {
    phi_[l] -= eta * g.phi[l];
    head_[l] -= eta * g.head[l];
  }
  return true;
}

Observation AdaptiveMLP::observe(const Eigen::VectorXd& x, double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("observe: target outside [0, 1]");
  if (x.size() != cfg_.input_dim) throw std::invalid_argument("observe: feature dimension mismatch");
  const Eigen::VectorXd z = cfg_.standardize ? norm_.transform(x) : x;

  Observation o;
  o.prediction = forward(z);
  o.hedge_loss.resize(static_cast<std::size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    const double f = o.prediction.layer_outputs(l);
    // A diverged head is charged the largest possible loss.
    o.hedge_loss[l] = std::isnan(f) ? 1.0 : std::fabs(std::clamp(f, 0.0, 1.0) - y);
  }
  if (cfg_.record_trace) {
    TraceRow row;
    row.alpha.assign(alpha_.data(), alpha_.data() + alpha_.size());
    row.loss = o.hedge_loss;
    for (int l = 0; l < cfg_.layers; ++l) row.played += alpha_(l) * o.hedge_loss[l];
    trace_.push_back(std::move(row));
  }
  hedge_update(o.hedge_loss);
  o.sgd_applied = sgd_update(z, y, &o.sgd_error);
  norm_.update(x);
  return o;
}

// ---------------------------------------------------------------------------
// Binary format: magic, version, dimensions, hyperparameters, then every
// matrix row-major, alpha, and the normalizer state. Host byte order.

namespace {

constexpr char kMagic[8] = {'N', 'A', 'S', 'O', 'A', 'M', 'L', 'P'};
constexpr std::uint32_t kVersion = 2;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("AdaptiveMLP::load: truncated file");
  return v;
}

void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put(os, m(r, c));
  }
}

void get_matrix(std::istream& is, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(is);
  }
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put(os, v(i));
}

void get_vector(std::istream& is, Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = get<double>(is);
}

}  // namespace

void AdaptiveMLP::save(std::ostream& os) const {
  os.write(kMagic, sizeof kMagic);
  put(os, kVersion);
  put<std::int32_t>(os, cfg_.layers);
  put<std::int32_t>(os, cfg_.width);
  put<std::int32_t>(os, cfg_.input_dim);
  put(os, cfg_.beta);
  put(os, cfg_.learning_rate);
  put(os, cfg_.smoothing);
  put(os, cfg_.residual_clip);
  put<std::uint8_t>(os, cfg_.adaptive);
  put<std::uint8_t>(os, cfg_.standardize);
  put<std::uint64_t>(os, cfg_.seed);
  for (const auto& m : phi_) put_matrix(os, m);
  for (const auto& v : head_) put_vector(os, v);
  put_vector(os, alpha_);
  put<std::uint64_t>(os, norm_.count());
  put_vector(os, norm_.mean());
  put_vector(os, norm_.m2());
}

AdaptiveMLP AdaptiveMLP::load(std::istream& is) {
  char magic[sizeof kMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("AdaptiveMLP::load: not a predictor file");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) {
    throw std::runtime_error("AdaptiveMLP::load: unsupported version " + std::to_string(version));
  }
  PredictorConfig cfg;
  cfg.layers = get<std::int32_t>(is);
  cfg.width = get<std::int32_t>(is);
  cfg.input_dim = get<std::int32_t>(is);
  cfg.beta = get<double>(is);
  cfg.learning_rate = get<double>(is);
  cfg.smoothing = get<double>(is);
  cfg.residual_clip = get<double>(is);
  cfg.adaptive = get<std::uint8_t>(is) != 0;
  cfg.standardize = get<std::uint8_t>(is) != 0;
  cfg.seed = get<std::uint64_t>(is);
  AdaptiveMLP m(cfg);
  for (auto& p : m.phi_) get_matrix(is, p);
  for (auto& v : m.head_) get_vector(is, v);
  get_vector(is, m.alpha_);
  const auto count = get<std::uint64_t>(is);
  Eigen::VectorXd mean(cfg.input_dim), m2(cfg.input_dim);
  get_vector(is, mean);
  get_vector(is, m2);
  m.norm_.restore(count, std::move(mean), std::move(m2));
  return m;
}

// ---------------------------------------------------------------------------

RegretResult regret_experiment(int experts, int horizon, double c, const LossSource& source,
                               bool keep_trace) {
  if (experts < 1 || horizon < 1 || !(c > 0)) {
    throw std::invalid_argument("regret_experiment: need L >= 1, T >= 1, C > 0");
  }
  const double beta = std::sqrt(horizon) / (std::sqrt(horizon) + c);
  std::vector<double> alpha(experts, 1.0 / experts), total(experts, 0.0);
  RegretResult r;
  double played = 0;
  for (int t = 0; t < horizon; ++t) {
    const std::vector<double> loss = source(t);
    if (static_cast<int>(loss.size()) != experts) {
      throw std::invalid_argument("regret_experiment: loss vector has wrong length");
    }
    double step = 0;
    for (int l = 0; l < experts; ++l) {
      if (!(loss[l] >= 0.0 && loss[l] <= 1.0)) {
        throw std::invalid_argument("regret_experiment: loss outside [0, 1]");
      }
      step += alpha[l] * loss[l];
      total[l] += loss[l];
    }
    played += step;
    if (keep_trace) r.trace.push_back({alpha, loss, step});
    double sum = 0;
    for (int l = 0; l < experts; ++l) sum += alpha[l] *= std::pow(beta, loss[l]);
    for (double& a : alpha) a /= sum;
  }
  r.played_avg = played / horizon;
  r.best_avg = *std::min_element(total.begin(), total.end()) / horizon;
  r.gap = r.played_avg - r.best_avg;
  return r;
}

double regret_bound(int experts, int horizon, double c) {
  return (c / 2 + std::log(static_cast<double>(experts)) * (1 + c) / c) / std::sqrt(horizon);
}

LossSource alternating_losses(int experts) {
  return [experts](int t) {
    std::vector<double> loss(static_cast<std::size_t>(experts), 1.0);
    if (experts >= 1) loss[0] = t % 2 == 0 ? 1.0 : 0.0;
    if (experts >= 2) loss[1] = t % 2 == 0 ? 0.0 : 1.0;
    return loss;
  };
}

void write_regret_csv(std::ostream& os, std::span<const TraceRow> trace) {
  const std::size_t n = trace.empty() ? 0 : trace.front().alpha.size();
  os << "t";
  for (std::size_t l = 1; l <= n; ++l) os << ",alpha_" << l;
  for (std::size_t l = 1; l <= n; ++l) os << ",loss_" << l;
  os << ",played_loss\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (std::size_t t = 0; t < trace.size(); ++t) {
    os << t + 1;
    for (double a : trace[t].alpha) os << ',' << num(a);
    for (double v : trace[t].loss) os << ',' << num(v);
    os << ',' << num(trace[t].played) << '\n';
  }
}

}  // namespace nasoa
