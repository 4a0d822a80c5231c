#include "nasoa/schedule_generator.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace nasoa {

double Regime::lr_at(long iteration) const {
  double lr = learning_rate;
  if (iteration * 7 >= num_iterations * 3) lr *= 0.1;
  if (iteration * 7 >= num_iterations * 6) lr *= 0.1;
  return lr;
}

double ZooView::step_time_ms(std::size_t entry, int batch) const {
  if (table == nullptr) throw std::logic_error("ZooView: no step-time table");
  return table->lookup(entries[entry].name, batch, resolution);
}

long max_iterations(double time_limit_s, double step_time_ms, const TaskMeta& meta) {
  if (!(step_time_ms > 0)) throw std::invalid_argument("max_iterations: step time must be positive");
  if (meta.batch_size < 1 || meta.train_set_size < 1) {
    throw std::invalid_argument("max_iterations: batch size and train set size must be positive");
  }
  if (!(time_limit_s > 0)) return 0;
  const double step_s = step_time_ms / 1000.0;
  // floor(T / s) with a guard against quotients such as 359 / 0.1 landing just
  // below an integer.
  const double q = time_limit_s / step_s;
  if (q >= static_cast<double>(std::numeric_limits<long>::max() / 2)) {
    throw std::overflow_error("max_iterations: iteration budget out of range");
  }
  auto iterations = static_cast<long>(std::floor(q));
  const double tol = 1e-9 * time_limit_s;
  while (static_cast<double>(iterations + 1) * step_s <= time_limit_s + tol) ++iterations;
  while (iterations > 0 && static_cast<double>(iterations) * step_s > time_limit_s + tol) --iterations;

  const long per_epoch = (meta.train_set_size + meta.batch_size - 1) / meta.batch_size;
  const long epochs = iterations / per_epoch;
  return epochs * per_epoch;
}

long max_iterations(double time_limit_s, const ZooView& zoo, std::size_t entry,
                    const TaskMeta& meta) {
  return max_iterations(time_limit_s, zoo.step_time_ms(entry, meta.batch_size), meta);
}

Eigen::VectorXd make_features(const ZooView& zoo, std::size_t entry, const Regime& regime,
                              const TaskMeta& meta) {
  const std::size_t k = zoo.entries.size();
  if (entry >= k) throw std::out_of_range("make_features: entry index out of range");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(feature_dim(k));
  x(static_cast<Eigen::Index>(entry)) = 1.0;
  auto i = static_cast<Eigen::Index>(k);
  x(i++) = zoo.entries[entry].reference_accuracy;
  x(i++) = std::log(static_cast<double>(meta.num_classes));
  x(i++) = std::log(meta.avg_images_per_class);
  x(i++) = std::log1p(meta.std_images_per_class);
  x(i++) = meta.domain_similarity;
  x(i++) = std::log(static_cast<double>(meta.train_set_size));
  x(i++) = std::log(static_cast<double>(std::max(1L, regime.num_iterations)));
  x(i++) = std::log10(regime.learning_rate);
  x(i++) = regime.frozen_stages;
  return x;
}

std::vector<Candidate> enumerate_candidates(const ZooView& zoo, const RegimeGrid& grid,
                                            const Request& req) {
  std::vector<Candidate> out;
  for (std::size_t e = 0; e < zoo.entries.size(); ++e) {
    const double step = zoo.step_time_ms(e, req.meta.batch_size);
    const long iters = max_iterations(req.time_limit_s, step, req.meta);
    if (iters < 1) continue;
    for (double lr : grid.learning_rates) {
      for (int f : grid.frozen_stages) out.push_back({e, Regime{lr, iters, f}, step});
    }
  }
  if (out.empty()) {
    throw NoFeasibleCandidate("no zoo entry fits one epoch in " +
                              std::to_string(req.time_limit_s) + " s");
  }
  return out;
}

std::vector<Candidate> sample_candidates(const ZooView& zoo, const RegimeGrid& grid,
                                         const Request& req, int h, Rng& rng) {
  std::vector<Candidate> all = enumerate_candidates(zoo, grid, req);
  std::vector<Candidate> out;
  out.reserve(static_cast<std::size_t>(std::max(h, 0)));
  std::size_t left = all.size();
  for (int i = 0; i < h; ++i) {
    if (left == 0) left = all.size();  // pool exhausted: start a fresh round
    const std::size_t j = rng.index(left);
    out.push_back(all[j]);
    std::swap(all[j], all[left - 1]);
    --left;
  }
  return out;
}

namespace {

// True when a is preferred to b at equal predicted accuracy.
bool tie_better(const ZooView& zoo, const Candidate& a, const Candidate& b) {
  if (a.step_time_ms != b.step_time_ms) return a.step_time_ms < b.step_time_ms;
  if (a.regime.learning_rate != b.regime.learning_rate) {
    return a.regime.learning_rate < b.regime.learning_rate;
  }
  const std::string& ea = zoo.entries[a.entry].encoding;
  const std::string& eb = zoo.entries[b.entry].encoding;
  if (ea != eb) return ea < eb;
  return a.regime.frozen_stages < b.regime.frozen_stages;
}

}  // namespace

Decision choose(const ZooView& zoo, std::span<const Candidate> candidates, const Request& req,
                const Scorer& score) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const Candidate& c : candidates) {
    scores.push_back(score(make_features(zoo, c.entry, c.regime, req.meta)));
  }
  return choose(zoo, candidates, scores);
}

Decision choose(const ZooView& zoo, std::span<const Candidate> candidates,
                std::span<const double> scores) {
  if (candidates.empty()) throw NoFeasibleCandidate("no candidates to choose from");
  if (scores.size() != candidates.size()) {
    throw std::invalid_argument("choose: one score per candidate required");
  }
  std::size_t best = candidates.size();
  double best_score = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    const double s = scores[i];
    if (std::isnan(s)) continue;
    if (best == candidates.size() || s > best_score ||
        (s == best_score && tie_better(zoo, c, candidates[best]))) {
      best = i;
      best_score = s;
    }
  }
  if (best == candidates.size()) throw std::runtime_error("choose: every prediction is NaN");
  const Candidate& c = candidates[best];
  Decision d;
  d.entry = c.entry;
  d.name = zoo.entries[c.entry].name;
  d.regime = c.regime;
  d.predicted = best_score;
  d.candidates = candidates.size();
  d.step_time_ms = c.step_time_ms;
  return d;
}

Decision generate(const Request& req, const Scorer& score, const ZooView& zoo,
                  const RegimeGrid& grid) {
  const std::vector<Candidate> cands = enumerate_candidates(zoo, grid, req);
  return choose(zoo, cands, req, score);
}

Decision generate(const Request& req, const AdaptiveMLP& predictor, const ZooView& zoo,
                  const RegimeGrid& grid) {
  const std::vector<Candidate> cands = enumerate_candidates(zoo, grid, req);
  Eigen::MatrixXd x(feature_dim(zoo.entries.size()), static_cast<Eigen::Index>(cands.size()));
  for (std::size_t i = 0; i < cands.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) =
        make_features(zoo, cands[i].entry, cands[i].regime, req.meta);
  }
  const Eigen::VectorXd scores = predictor.predict_batch(x);
  return choose(zoo, cands, std::span<const double>(scores.data(), cands.size()));
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TaskOracle synthetic_oracle(const SyntheticOracleConfig& cfg) {
  return [cfg](const ZooEntry& e, const Regime& r, const TaskMeta& m) {
    const double epochs = static_cast<double>(r.num_iterations) * m.batch_size /
                          static_cast<double>(m.train_set_size);
    const double sat = 1.0 - std::exp(-epochs / 8.0);
    const double best_log_lr = -1.5 - 2.0 * m.domain_similarity;
    const double lr_term = -std::pow(std::log10(r.learning_rate) - best_log_lr, 2);
    const double best_frozen =
        std::clamp(3.0 - 1.5 * std::log10(static_cast<double>(m.train_set_size) / 500.0), -1.0, 3.0);
    const double frozen_term = -std::pow((r.frozen_stages - best_frozen) / 2.0, 2);
    const double logit = -1.0 + 6.0 * (e.reference_accuracy - 0.6) + 2.5 * sat + 0.35 * lr_term +
                         0.6 * frozen_term - 0.5 * std::log10(static_cast<double>(m.num_classes)) +
                         0.8 * m.domain_similarity;
    double acc = sigmoid(logit);

    std::uint64_t h = mix64(cfg.seed ^ fnv1a(e.encoding.empty() ? e.name : e.encoding));
    for (std::uint64_t v :
         {bits(r.learning_rate), static_cast<std::uint64_t>(r.num_iterations),
          static_cast<std::uint64_t>(r.frozen_stages + 1), static_cast<std::uint64_t>(m.num_classes),
          bits(m.avg_images_per_class), bits(m.std_images_per_class), bits(m.domain_similarity),
          static_cast<std::uint64_t>(m.train_set_size), static_cast<std::uint64_t>(m.batch_size)}) {
      h = mix64(h ^ v);
    }
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
    acc += cfg.noise * (2.0 * u - 1.0);
    return std::clamp(acc, 0.0, 1.0);
  };
}

TaskStream::TaskStream(TaskStreamConfig cfg, const ZooView& zoo)
    : cfg_(std::move(cfg)), zoo_(zoo), rng_(cfg_.seed) {
  if (zoo_.entries.empty()) throw std::invalid_argument("TaskStream: empty zoo");
  if (cfg_.batch_sizes.empty()) throw std::invalid_argument("TaskStream: no batch sizes");
}

Request TaskStream::next() {
  Request r;
  TaskMeta& m = r.meta;
  m.num_classes = static_cast<int>(std::lround(rng_.log_uniform(5, 1000)));
  m.avg_images_per_class = rng_.log_uniform(20, 1000);
  m.std_images_per_class = m.avg_images_per_class * rng_.uniform(0, 0.6);
  m.domain_similarity = rng_.uniform();
  m.train_set_size = std::max(1L, std::lround(m.num_classes * m.avg_images_per_class));
  m.batch_size = rng_.pick(std::span<const int>(cfg_.batch_sizes));

  const long per_epoch = (m.train_set_size + m.batch_size - 1) / m.batch_size;
  double fastest = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < zoo_.entries.size(); ++e) {
    fastest = std::min(fastest, zoo_.step_time_ms(e, m.batch_size));
  }
  const double epoch_s = fastest / 1000.0 * static_cast<double>(per_epoch);
  r.time_limit_s = epoch_s * rng_.log_uniform(cfg_.min_epochs, cfg_.max_epochs) * (1 + 1e-6);
  return r;
}

StepOutcome online_step(const Request& req, AdaptiveMLP& predictor, const ZooView& zoo,
                        const RegimeGrid& grid, const TaskOracle& oracle) {
  StepOutcome out;
  out.decision = generate(req, predictor, zoo, grid);
  out.observed = oracle(zoo.entries[out.decision.entry], out.decision.regime, req.meta);
  out.observation = predictor.observe(
      make_features(zoo, out.decision.entry, out.decision.regime, req.meta), out.observed);
  return out;
}

std::vector<MetaSample> collect_meta_dataset(const ZooView& zoo, const RegimeGrid& grid,
                                             TaskStream& tasks, const TaskOracle& oracle,
                                             int samples, Rng& rng) {
  std::vector<MetaSample> data;
  for (int i = 0; i < samples; ++i) {
    const Request req = tasks.next();
    const std::vector<Candidate> cands = enumerate_candidates(zoo, grid, req);
    const Candidate& c = cands[rng.index(cands.size())];
    data.push_back({make_features(zoo, c.entry, c.regime, req.meta),
                    oracle(zoo.entries[c.entry], c.regime, req.meta)});
  }
  return data;
}

void train_offline(AdaptiveMLP& predictor, const ZooView& zoo, const RegimeGrid& grid,
                   TaskStream& tasks, const TaskOracle& oracle, const OfflineConfig& cfg) {
  if (cfg.samples <= 0) return;
  Rng rng(cfg.seed);
  const std::vector<MetaSample> data = collect_meta_dataset(zoo, grid, tasks, oracle, cfg.samples, rng);
  for (int pass = 0; pass < cfg.passes; ++pass) {
    for (const MetaSample& s : data) predictor.observe(s.features, s.accuracy);
  }
}

ErrorStats segment_errors(std::span<const double> abs_errors, double lo, double hi) {
  const std::size_t n = abs_errors.size();
  const auto begin = static_cast<std::size_t>(std::floor(lo * static_cast<double>(n)));
  const auto end = static_cast<std::size_t>(std::floor(hi * static_cast<double>(n)));
  ErrorStats s;
  for (std::size_t i = begin; i < end && i < n; ++i) {
    s.mae += abs_errors[i];
    s.mse += abs_errors[i] * abs_errors[i];
    ++s.count;
  }
  if (s.count > 0) {
    s.mae /= static_cast<double>(s.count);
    s.mse /= static_cast<double>(s.count);
  }
  return s;
}

PredictorConfig stream_predictor_preset() {
  PredictorConfig pc;
  pc.learning_rate = 0.05;
  pc.smoothing = 0.01;
  pc.residual_clip = 1.0;
  return pc;
}

SimulationReport simulate_stream(const SimulationConfig& cfg, const ZooView& zoo,
                                 const RegimeGrid& grid) {
  SimulationReport rep;
  const int dim = feature_dim(zoo.entries.size());

  struct Slot {
    std::string name;
    AdaptiveMLP model;
    std::vector<double> errors;
  };
  std::vector<Slot> slots;
  auto add = [&](const std::string& name, int layers, bool adaptive) {
    PredictorConfig pc = cfg.predictor;
    pc.layers = layers;
    pc.input_dim = dim;
    pc.adaptive = adaptive;
    pc.record_trace = adaptive;
    if (!adaptive) pc.smoothing = 0;
    slots.push_back({name, AdaptiveMLP(pc), {}});
  };
  if (cfg.adaptive) add("Adaptive MLP", cfg.predictor.layers, true);
  for (int l : cfg.fixed_depths) add("Fixed MLP (L=" + std::to_string(l) + ")", l, false);

  const TaskOracle oracle = cfg.custom_oracle ? cfg.custom_oracle : synthetic_oracle(cfg.oracle);

  if (cfg.offline_samples > 0) {
    TaskStreamConfig sc = cfg.stream;
    sc.seed = mix64(cfg.seed ^ 0x0ff11e);
    TaskStream warm(sc, zoo);
    Rng rng(mix64(cfg.seed ^ 0x5a3b1e));
    const auto data = collect_meta_dataset(zoo, grid, warm, oracle, cfg.offline_samples, rng);
    for (Slot& s : slots) {
      for (int pass = 0; pass < cfg.offline_passes; ++pass) {
        for (const MetaSample& m : data) s.model.observe(m.features, m.accuracy);
      }
    }
  }

  TaskStreamConfig sc = cfg.stream;
  sc.seed = cfg.seed;
  TaskStream stream(sc, zoo);
  Rng probe_rng(mix64(cfg.seed ^ 0x9b0be));
  for (int t = 0; t < cfg.tasks; ++t) {
    StreamRecord rec;
    rec.request = stream.next();
    if (cfg.protocol == StreamProtocol::kOwnDecision) {
      for (std::size_t i = 0; i < slots.size(); ++i) {
        Slot& s = slots[i];
        const StepOutcome out = online_step(rec.request, s.model, zoo, grid, oracle);
        s.errors.push_back(std::fabs(out.observation.prediction.clipped - out.observed));
        if (i == 0) {
          rec.decision = out.decision;
          rec.decision_accuracy = out.observed;
          rec.probe = {out.decision.entry, out.decision.regime, out.decision.step_time_ms};
          rec.observed = out.observed;
        }
      }
    } else {
      const std::vector<Candidate> cands = enumerate_candidates(zoo, grid, rec.request);
      rec.probe = cands[probe_rng.index(cands.size())];
      rec.observed = oracle(zoo.entries[rec.probe.entry], rec.probe.regime, rec.request.meta);
      if (!slots.empty()) {
        rec.decision = generate(rec.request, slots.front().model, zoo, grid);
        rec.decision_accuracy =
            oracle(zoo.entries[rec.decision.entry], rec.decision.regime, rec.request.meta);
      }
      const Eigen::VectorXd x =
          make_features(zoo, rec.probe.entry, rec.probe.regime, rec.request.meta);
      for (Slot& s : slots) {
        const Observation o = s.model.observe(x, rec.observed);
        s.errors.push_back(std::fabs(o.prediction.clipped - rec.observed));
      }
    }
    rep.records.push_back(std::move(rec));
  }

  for (Slot& s : slots) {
    PredictorReport pr;
    pr.name = s.name;
    pr.overall = segment_errors(s.errors, 0.0, 1.0);
    pr.seg_20_40 = segment_errors(s.errors, 0.2, 0.4);
    pr.seg_80_100 = segment_errors(s.errors, 0.8, 1.0);
    rep.predictors.push_back(std::move(pr));
  }
  if (cfg.adaptive && !slots.empty()) rep.adaptive_trace = slots.front().model.trace();
  return rep;
}

}  // namespace nasoa
