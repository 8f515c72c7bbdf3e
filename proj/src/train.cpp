#include "mal2gcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "mal2gcn/digest.hpp"
#include "mal2gcn/error.hpp"
#include "single_step.hpp"

namespace mal2gcn {

std::string_view to_string(StopReason reason) {
  return reason == StopReason::kEarlyStopping ? "early_stopping" : "max_epochs";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DataError("learning rate must be > 0");
  if (batch_size == 0 || patience == 0 || max_epochs == 0) {
    throw DataError("batch size, patience and epochs must be >= 1");
  }
  if (h1 == 0 || h2 == 0 || hg == 0) throw DataError("layer sizes must be >= 1");
  if (adversarial_training) adversarial_training->attack.validate();
}

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  last_improved_ = val_loss < best_loss_;
  if (last_improved_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

std::pair<double, double> evaluate_samples(const ModelParams& m,
                                           const std::vector<GraphSample>& samples,
                                           Precision precision) {
  if (samples.empty()) return {0.0, 0.0};
  std::vector<const GraphSample*> all;
  for (const auto& s : samples) all.push_back(&s);
  const auto scores = forward_batch(m, all, precision);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    loss += binary_cross_entropy(scores[i], all[i]->label);
    correct += ((scores[i] >= 0.5) == (all[i]->label >= 0.5)) ? 1 : 0;
  }
  const double n = static_cast<double>(samples.size());
  return {loss / n, static_cast<double>(correct) / n};
}

namespace {

void require_labels(const Corpus& corpus, std::string_view name) {
  if (corpus.records.empty()) throw DataError(std::string(name) + " corpus is empty");
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (!corpus.records[i].label) {
      throw DataError(std::string(name) + " record " + std::to_string(i + 1) + " (graph " +
                      corpus.records[i].graph_id + ") has no label");
    }
  }
}

bool has_both_labels(const Corpus& corpus) {
  bool malware = false, benign = false;
  for (const auto& g : corpus.records) {
    malware = malware || g.label == Label::kMalware;
    benign = benign || g.label == Label::kBenign;
  }
  return malware && benign;
}

std::vector<Fcg> adversarial_graphs(const Corpus& train_set, const AdversarialTraining& at,
                                    std::uint64_t seed) {
  std::vector<const Fcg*> malware;
  for (const auto& g : train_set.records) {
    if (g.label == Label::kMalware) malware.push_back(&g);
  }
  std::vector<double> overheads;
  for (double o : at.attack.overheads) {
    if (o > 0.0) overheads.push_back(o);
  }
  if (at.count == 0) return {};
  if (malware.empty()) throw DataError("adversarial training needs malware in the train corpus");
  if (overheads.empty()) throw DataError("adversarial training needs a positive overhead");

  std::mt19937_64 rng(mix_seed(seed, 0xad7));
  std::vector<Fcg> out;
  out.reserve(at.count);
  for (std::size_t k = 0; k < at.count; ++k) {
    const Fcg& source = *malware[std::uniform_int_distribution<std::size_t>(0, malware.size() - 1)(rng)];
    const double overhead =
        overheads[std::uniform_int_distribution<std::size_t>(0, overheads.size() - 1)(rng)];
    const Fcg base = normalize_fcg(source);
    const auto pert = generate_attack(base, at.pool, overhead, at.attack.modes, rng(),
                                      at.attack.target_fraction, at.attack.tokens_per_dead_node);
    Fcg adv = apply_perturbation(base, pert);
    adv.graph_id = source.graph_id + "#adv" + std::to_string(k);
    adv.label = Label::kMalware;
    out.push_back(std::move(adv));
  }
  return out;
}

class Adam {
 public:
  Adam(const ModelParams& shape, double lr) : lr_(lr) {
    for (const auto& block : shape.blocks()) {
      m_.push_back(Eigen::VectorXd::Zero(block.size()));
      v_.push_back(Eigen::VectorXd::Zero(block.size()));
    }
  }

  void step(ModelParams& params, const ModelParams& grads) {
    begin();
    auto p = params.blocks();
    auto g = grads.blocks();
    for (std::size_t b = 0; b < p.size(); ++b) {
      update(p[b].data(), g[b].data(), m_[b].data(), v_[b].data(), p[b].size(), nullptr);
    }
  }

  // Float gradients; also refreshes the float weight copy.
  void step(ModelParams& params, SingleStep& single) {
    begin();
    auto p = params.blocks();
    const auto g = single.grad_blocks();
    const auto pf = single.weight_blocks();
    for (std::size_t b = 0; b < g.size(); ++b) {
      update(p[b].data(), g[b].data(), m_[b].data(), v_[b].data(), p[b].size(), pf[b].data());
    }
    const double gb = single.grad_b_out();
    update(&params.b_out, &gb, m_.back().data(), v_.back().data(), 1, nullptr);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  void begin() {
    ++t_;
    c1_ = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    c2_ = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  }

  template <typename G>
  void update(double* __restrict p, const G* __restrict g, double* __restrict m,
              double* __restrict v,
              Eigen::Index n, float* __restrict pf) const {
    auto one = [&](Eigen::Index i) {
      const double gi = g[i];
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
      p[i] -= lr_ * (m[i] / c1_) / (std::sqrt(v[i] / c2_) + kEpsilon);
    };
    if (pf) {
      for (Eigen::Index i = 0; i < n; ++i) {
        one(i);
        pf[i] = static_cast<float>(p[i]);
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) one(i);
    }
  }

  double lr_;
  std::size_t t_ = 0;
  double c1_ = 0.0;
  double c2_ = 0.0;
  std::vector<Eigen::VectorXd> m_;
  std::vector<Eigen::VectorXd> v_;
};

}  // namespace

TrainResult train(const Corpus& train_set, const Corpus& val_set, const Vocabulary& vocab,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  require_labels(train_set, "train");
  require_labels(val_set, "validation");
  if (!has_both_labels(val_set)) throw DataError("validation corpus needs both labels");
  if (vocab.dim() == 0) throw DataError("vocabulary is empty");

  TrainResult result;
  std::vector<GraphSample> train_samples;
  train_samples.reserve(train_set.records.size());
  for (const auto& g : train_set.records) train_samples.push_back(make_sample(g, vocab));
  if (cfg.adversarial_training) {
    for (const auto& g : adversarial_graphs(train_set, *cfg.adversarial_training, cfg.seed)) {
      train_samples.push_back(make_sample(g, vocab));
      ++result.report.adversarial_added;
    }
  }
  std::vector<GraphSample> val_samples;
  val_samples.reserve(val_set.records.size());
  for (const auto& g : val_set.records) val_samples.push_back(make_sample(g, vocab));

  const Dims dims{vocab.dim(), cfg.h1, cfg.h2, cfg.hg};
  ModelParams params = init_params(dims, cfg.nonneg_gcn, cfg.nonneg_gclf, cfg.readout, cfg.seed);
  ModelParams best = params;
  std::optional<SingleStep> single;
  Adam adam(params, cfg.learning_rate);
  if (cfg.precision == Precision::kSingle) {
    single.emplace(params);
  }
  EarlyStopping stopper(cfg.patience);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5f));

  std::vector<const GraphSample*> order;
  order.reserve(train_samples.size());
  for (const auto& s : train_samples) order.push_back(&s);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[std::uniform_int_distribution<std::size_t>(0, i - 1)(shuffle_rng)]);
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 1; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const auto batch_span = std::span(order).subspan(start, len);
      double loss = 0.0;
      std::optional<LossAndGradients> step;
      if (single) {
        const auto r = single->run(params, batch_span);
        loss = r.loss;
        correct += r.correct;
      } else {
        step = loss_and_gradients(params, batch_span, cfg.precision);
        loss = step->loss;
        correct += step->correct;
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch));
      }
      loss_sum += loss * static_cast<double>(len);
      if (single) {
        adam.step(params, *single);
      } else {
        adam.step(params, step->grads);
      }
      if (cfg.projection_cadence == ProjectionCadence::kPerStep) {
        project_nonnegative_in_place(params);
        if (single) single->sync(params);
      }
    }
    project_nonnegative_in_place(params);
    if (single) single->sync(params);

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    std::tie(stats.val_loss, stats.val_accuracy) = evaluate_samples(params, val_samples, cfg.precision);
    if (!std::isfinite(stats.val_loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    const bool stop = stopper.update(stats.val_loss);
    if (stopper.last_improved()) best = params;
    if (stop) {
      result.report.stop_reason = StopReason::kEarlyStopping;
      break;
    }
  }

  project_nonnegative_in_place(best);
  result.report.best_epoch = stopper.best_epoch();
  result.report.min_governed_weight = min_governed_weight(best);
  result.report.nonneg_audit_passed = governed_weights_nonnegative(best);
  result.model = std::move(best);
  return result;
}

}  // namespace mal2gcn
