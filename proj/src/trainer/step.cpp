#include <cmath>
#include <numbers>
#include <sstream>

#include "mgp/errors.hpp"
#include "mgp/ops.hpp"
#include "mgp/trainer.hpp"

namespace mgp::train {

void Adadelta::step(ParamSet<float>& params, double lr) {
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    auto& sq = sq_avg_[name];
    auto& acc = acc_delta_[name];
    if (sq.empty()) sq = Tensor<float>(p.shape());
    if (acc.empty()) acc = Tensor<float>(p.shape());
    const float* g = p.grad().ptr();
    float* w = p.mutable_value().ptr();
    float* s = sq.ptr();
    float* a = acc.ptr();
    const auto rho = static_cast<float>(rho_), eps = static_cast<float>(eps_), rate = static_cast<float>(lr);
    for (std::size_t i = 0, n = p.value().size(); i < n; ++i) {
      s[i] = rho * s[i] + (1.0f - rho) * g[i] * g[i];
      const float delta = std::sqrt(a[i] + eps) / std::sqrt(s[i] + eps) * g[i];
      a[i] = rho * a[i] + (1.0f - rho) * delta * delta;
      w[i] -= rate * delta;
    }
  }
}

std::map<std::string, Tensor<float>> Adadelta::state() const {
  std::map<std::string, Tensor<float>> out;
  for (const auto& [name, t] : sq_avg_) out.emplace("sq_avg." + name, t);
  for (const auto& [name, t] : acc_delta_) out.emplace("acc_delta." + name, t);
  return out;
}

void Adadelta::load_state(const std::map<std::string, Tensor<float>>& state) {
  sq_avg_.clear();
  acc_delta_.clear();
  for (const auto& [key, t] : state) {
    if (key.rfind("sq_avg.", 0) == 0) sq_avg_[key.substr(7)] = t;
    else if (key.rfind("acc_delta.", 0) == 0) acc_delta_[key.substr(10)] = t;
    else throw FormatError("unexpected optimizer state entry '" + key + "'");
  }
}

double scheduled_lr(const TrainConfig& cfg, std::size_t t, std::size_t total) {
  if (cfg.schedule == Schedule::kConstant || total == 0) return cfg.lr;
  return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total)));
}

double clip_grad_norm(ParamSet<float>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad().data()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto factor = static_cast<float>(max_norm / (norm + 1e-6));
    for (auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      for (float& g : p.grad_buffer().data()) g *= factor;
    }
  }
  return norm;
}

StepResult train_step(MgpModel<float>& model, Adadelta& opt, const Tensor<float>& images,
                      const std::vector<Labels>& labels, const TrainConfig& cfg, double lr) {
  const ModelConfig& mc = model.config();
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw DimensionError("train_step: " + std::to_string(labels.size()) + " labels for images " +
                         shape_str(images.shape()));
  }
  for (auto& [name, p] : model.params()) p.zero_grad();

  auto out = model.forward(images);
  StepResult result;
  Var<float> total;
  for (auto g : model::kAllGranularities) {
    const auto gi = static_cast<std::size_t>(g);
    if (!mc.has_head(g)) continue;
    std::vector<std::int32_t> targets;
    targets.reserve(labels.size() * mc.T);
    for (const auto& l : labels) {
      if (!l[gi]) throw ConfigError("missing " + std::string(tok::to_string(g)) + " labels");
      targets.insert(targets.end(), l[gi]->ids.begin(), l[gi]->ids.end());
    }
    std::optional<std::int32_t> ignore;
    if (cfg.ignore_pad) ignore = 0;  // pad id is 0 for every codec
    auto loss = nn::cross_entropy(out.head(g).logits, targets, ignore);
    result.losses[gi] = loss.value()[0];
    result.logits[gi] = out.head(g).logits.value();
    const double w = cfg.loss_weights[gi];
    if (w > 0.0) {
      auto term = w == 1.0 ? loss : nn::scale(loss, static_cast<float>(w));
      total = total.defined() ? nn::add(total, term) : term;
    }
  }
  if (total.defined()) result.total = total.value()[0];

  bool finite = std::isfinite(result.total);
  for (const auto& l : result.losses) finite = finite && (!l || std::isfinite(*l));
  if (!finite) {
    std::ostringstream msg;
    msg << "non-finite loss:";
    for (auto g : model::kAllGranularities) {
      const auto& l = result.losses[static_cast<std::size_t>(g)];
      if (l) msg << ' ' << tok::to_string(g) << '=' << *l;
    }
    throw NumericError(msg.str());
  }

  if (total.defined()) {
    total.backward();
    result.grad_norm = clip_grad_norm(model.params(), cfg.clip_norm);
    opt.step(model.params(), lr);
  }
  for (auto& [name, p] : model.params()) p.zero_grad();
  return result;
}

}  // namespace mgp::train
