#include "ralign/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"
#include "ralign/simd.hpp"

namespace ralign {
namespace {

void check_dim(const RerankerHead& head, std::size_t n, const char* what) {
  if (n != head.dim()) {
    throw ValidationError(std::string("head: ") + what + " dim " + std::to_string(n) + " != head dim " +
                          std::to_string(head.dim()));
  }
}

// Scores phi = e_q^T W e_d + b, reusing `scratch` for W e_d.
double score_with(const RerankerHead& head, std::span<const double> e_q, std::span<const double> e_d,
                  std::vector<double>& scratch) {
  scratch.resize(head.dim());
  simd::gemv(head.weights(), head.dim(), head.dim(), e_d, scratch);
  return simd::dot(e_q, scratch) + head.bias();
}

const EmbeddingVector& lookup(const EmbeddingMap& map, const std::string& id, const char* what) {
  auto it = map.find(id);
  if (it == map.end()) throw ValidationError(std::string("train: missing ") + what + " embedding for " + id);
  return it->second;
}

}  // namespace

RerankerHead::RerankerHead(std::size_t dim, std::vector<double> weights, double bias, double tau)
    : dim_(dim), weights_(std::move(weights)), bias_(bias), tau_(tau) {
  if (dim_ == 0 || weights_.size() != dim_ * dim_) throw ValidationError("head: W must be dim x dim");
  if (!(tau_ > 0.0) || !std::isfinite(tau_)) throw ValidationError("head: tau must be positive");
  if (!std::isfinite(bias_)) throw ValidationError("head: non-finite bias");
  for (double w : weights_) {
    if (!std::isfinite(w)) throw ValidationError("head: non-finite weight");
  }
}

RerankerHead RerankerHead::identity(std::size_t dim, double tau) {
  std::vector<double> w(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) w[i * dim + i] = 1.0;
  return RerankerHead(dim, std::move(w), 0.0, tau);
}

Json RerankerHead::to_json(const std::string& config_digest) const {
  return Json{{"dim", dim_}, {"tau", tau_}, {"b", bias_}, {"W", weights_}, {"config_digest", config_digest}};
}

RerankerHead RerankerHead::from_json(const Json& j) {
  try {
    return RerankerHead(j.at("dim").get<std::size_t>(), j.at("W").get<std::vector<double>>(), j.at("b").get<double>(),
                        j.at("tau").get<double>());
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("head checkpoint: ") + e.what());
  }
}

void RerankerHead::save(const std::filesystem::path& path, const std::string& config_digest) const {
  write_text_file(path, dump_json(to_json(config_digest)) + "\n");
}

RerankerHead RerankerHead::load(const std::filesystem::path& path) {
  Json j = Json::parse(read_text_file(path), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");
  return from_json(j);
}

double head_score(const RerankerHead& head, std::span<const double> e_q, std::span<const double> e_d) {
  check_dim(head, e_q.size(), "query");
  check_dim(head, e_d.size(), "document");
  std::vector<double> scratch;
  return score_with(head, e_q, e_d, scratch);
}

double info_nce_loss(double phi_pos, std::span<const double> phi_negs, double tau) {
  if (phi_negs.empty()) throw ValidationError("info_nce_loss: no negatives");
  if (!(tau > 0.0)) throw ValidationError("info_nce_loss: tau must be positive");
  const double z_pos = phi_pos / tau;
  double z_max = z_pos;
  std::size_t max_at = 0;  // 0 = positive, i + 1 = negative i
  for (std::size_t i = 0; i < phi_negs.size(); ++i) {
    const double z = phi_negs[i] / tau;
    if (z > z_max) {
      z_max = z;
      max_at = i + 1;
    }
  }
  // loss = (z_max - z_pos) + log(1 + sum over non-max terms of exp(z - z_max))
  double rest = max_at == 0 ? 0.0 : std::exp(z_pos - z_max);
  for (std::size_t i = 0; i < phi_negs.size(); ++i) {
    if (i + 1 == max_at) continue;
    rest += std::exp(phi_negs[i] / tau - z_max);
  }
  return (z_max - z_pos) + std::log1p(rest);
}

InfoNceGradients info_nce_gradients(const RerankerHead& head, std::span<const double> e_q,
                                    std::span<const double> e_pos, std::span<const EmbeddingVector> e_negs) {
  if (e_negs.empty()) throw ValidationError("info_nce_gradients: no negatives");
  check_dim(head, e_q.size(), "query");
  check_dim(head, e_pos.size(), "positive");
  for (const auto& e : e_negs) check_dim(head, e.dim(), "negative");

  const double tau = head.tau();
  InfoNceGradients g;
  std::vector<double> scratch;
  g.phi_pos = score_with(head, e_q, e_pos, scratch);
  g.phi_negs.reserve(e_negs.size());
  for (const auto& e : e_negs) g.phi_negs.push_back(score_with(head, e_q, e.values(), scratch));
  g.loss = info_nce_loss(g.phi_pos, g.phi_negs, tau);

  // Softmax over phi / tau.
  double z_max = g.phi_pos / tau;
  for (double p : g.phi_negs) z_max = std::max(z_max, p / tau);
  double denom = std::exp(g.phi_pos / tau - z_max);
  std::vector<double> w(g.phi_negs.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(g.phi_negs[i] / tau - z_max);
    denom += w[i];
  }
  g.dphi_negs.resize(w.size());
  double neg_sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    g.dphi_negs[i] = (w[i] / denom) / tau;
    neg_sum += g.dphi_negs[i];
  }
  // p_pos - 1 = -sum(p_neg); this form avoids cancellation when p_pos ~ 1.
  g.dphi_pos = -neg_sum;
  g.grad_bias = g.dphi_pos + neg_sum;

  // dL/dW = e_q (sum_j dphi_j e_j)^T
  std::vector<double> direction(e_pos.begin(), e_pos.end());
  for (double& x : direction) x *= g.dphi_pos;
  for (std::size_t i = 0; i < e_negs.size(); ++i) simd::axpy(g.dphi_negs[i], e_negs[i].values(), direction);
  g.grad_weights.assign(head.dim() * head.dim(), 0.0);
  simd::rank1(1.0, e_q, direction, g.grad_weights);
  return g;
}

Json TrainReport::to_json() const {
  return Json{{"epoch_loss", epoch_loss}, {"train_top1", train_top1}, {"steps", steps}};
}

TrainResult train(const std::vector<TrainingGroup>& groups, const EmbeddingMap& query_vecs,
                  const EmbeddingMap& doc_vecs, const PipelineConfig& config) {
  validate_config(config);
  if (groups.empty()) throw ValidationError("train: no training groups");

  // Resolve and normalize every embedding before the loop.
  struct Example {
    EmbeddingVector query;
    EmbeddingVector pos;
    std::vector<EmbeddingVector> negs;
  };
  std::vector<Example> examples;
  examples.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.neg_doc_ids.empty()) throw ValidationError("train: group " + g.query_id + " has no negatives");
    Example ex{lookup(query_vecs, g.query_id, "query").normalized(), lookup(doc_vecs, g.pos_doc_id, "doc").normalized(),
               {}};
    for (const auto& id : g.neg_doc_ids) ex.negs.push_back(lookup(doc_vecs, id, "doc").normalized());
    examples.push_back(std::move(ex));
  }
  const std::size_t dim = examples.front().query.dim();

  RerankerHead head = RerankerHead::identity(dim, config.tau);
  std::vector<double> m_w(dim * dim, 0.0), v_w(dim * dim, 0.0);
  double m_b = 0.0, v_b = 0.0;
  simd::AdamStep step;
  step.lr = config.learning_rate;
  step.beta1 = 0.9;
  step.beta2 = 0.999;
  step.eps = 1e-8;

  TrainReport report;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  long t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    CounterRng rng(query_seed(config.seed, "epoch:" + std::to_string(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform(i))]);
    }
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const auto& ex = examples[idx];
      auto g = info_nce_gradients(head, ex.query.values(), ex.pos.values(), ex.negs);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("train: non-finite loss at step " + std::to_string(t), t);
      }
      loss_sum += g.loss;
      ++t;
      step.bias_correction1 = 1.0 - std::pow(step.beta1, static_cast<double>(t));
      step.bias_correction2 = 1.0 - std::pow(step.beta2, static_cast<double>(t));
      step.weight_decay = config.weight_decay;
      simd::adamw(head.mutable_weights(), g.grad_weights, m_w, v_w, step);
      step.weight_decay = 0.0;
      double b = head.bias();
      simd::adamw(std::span<double>(&b, 1), std::span<const double>(&g.grad_bias, 1), std::span<double>(&m_b, 1),
                  std::span<double>(&v_b, 1), step);
      head.set_bias(b);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(examples.size()));
  }
  report.steps = t;

  std::size_t correct = 0;
  std::vector<double> scratch;
  for (const auto& ex : examples) {
    const double pos = score_with(head, ex.query.values(), ex.pos.values(), scratch);
    bool best = true;
    for (const auto& n : ex.negs) {
      if (score_with(head, ex.query.values(), n.values(), scratch) >= pos) {
        best = false;
        break;
      }
    }
    if (best) ++correct;
  }
  report.train_top1 = static_cast<double>(correct) / static_cast<double>(examples.size());
  return TrainResult{std::move(head), std::move(report)};
}

std::vector<RankedId> rank_candidates(std::span<const Candidate> candidates, int k2,
                                      const std::function<double(std::span<const double>)>& score) {
  if (k2 < 1) throw ValidationError("rerank: k2 must be positive");
  std::vector<RankedId> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) scored.push_back({c.doc_id, score(c.embedding)});
  std::sort(scored.begin(), scored.end(), [](const RankedId& a, const RankedId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  scored.resize(std::min(scored.size(), static_cast<std::size_t>(k2)));
  return scored;
}

std::vector<std::string> rerank_with_head(const RerankerHead& head, std::span<const double> e_q,
                                          std::span<const Candidate> candidates, int k2) {
  check_dim(head, e_q.size(), "query");
  std::vector<double> scratch;
  auto ranked = rank_candidates(candidates, k2, [&](std::span<const double> e_d) {
    check_dim(head, e_d.size(), "document");
    return score_with(head, e_q, e_d, scratch);
  });
  std::vector<std::string> ids;
  for (auto& r : ranked) ids.push_back(std::move(r.doc_id));
  return ids;
}

std::vector<std::string> rerank_by_cosine(std::span<const double> e_q, std::span<const Candidate> candidates,
                                          int k2) {
  auto ranked = rank_candidates(candidates, k2, [&](std::span<const double> e_d) {
    if (e_d.size() != e_q.size()) throw ValidationError("rerank: dim mismatch");
    return simd::dot(e_q, e_d);
  });
  std::vector<std::string> ids;
  for (auto& r : ranked) ids.push_back(std::move(r.doc_id));
  return ids;
}

}  // namespace ralign
