#include "siamgcn/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace siamgcn {

void LossConfig::validate() const {
  if (!(margin > 0.0 && margin <= 1.0)) throw ValidationError("loss margin must lie in (0, 1]");
  if (!(lambda_weight >= 0.0)) throw ValidationError("loss lambda must be >= 0");
  if (!(l2_coeff >= 0.0)) throw ValidationError("l2 coefficient must be >= 0");
}

LossValue global_loss(std::span<const double> similarities, std::span<const std::uint8_t> match,
                      const LossConfig& cfg) {
  if (similarities.size() != match.size()) {
    throw ValidationError("global_loss: similarities and match flags differ in length");
  }
  double sum_pos = 0.0;
  double sum_neg = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  for (std::size_t i = 0; i < similarities.size(); ++i) {
    if (match[i]) {
      sum_pos += similarities[i];
      ++n_pos;
    } else {
      sum_neg += similarities[i];
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("global_loss: batch needs both matching and non-matching pairs");
  }
  const double mean_pos = sum_pos / static_cast<double>(n_pos);
  const double mean_neg = sum_neg / static_cast<double>(n_neg);

  double ss_pos = 0.0;
  double ss_neg = 0.0;
  for (std::size_t i = 0; i < similarities.size(); ++i) {
    const double d = similarities[i] - (match[i] ? mean_pos : mean_neg);
    (match[i] ? ss_pos : ss_neg) += d * d;
  }
  const double var_pos = ss_pos / static_cast<double>(n_pos);
  const double var_neg = ss_neg / static_cast<double>(n_neg);

  const double slack = cfg.margin - (mean_pos - mean_neg);
  const bool hinge_active = slack > 0.0;

  LossValue out;
  out.loss = (var_pos + var_neg) + cfg.lambda_weight * (hinge_active ? slack : 0.0);
  out.d_similarity.resize(similarities.size());
  for (std::size_t i = 0; i < similarities.size(); ++i) {
    const double n = static_cast<double>(match[i] ? n_pos : n_neg);
    const double mean = match[i] ? mean_pos : mean_neg;
    double g = 2.0 * (similarities[i] - mean) / n;
    if (hinge_active) g += (match[i] ? -cfg.lambda_weight : cfg.lambda_weight) / n;
    out.d_similarity[i] = g;
  }
  return out;
}

L2Value l2_penalty(const Vector& fc_weights, double coeff) {
  return {coeff * fc_weights.squaredNorm(), 2.0 * coeff * fc_weights};
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw ValidationError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                          std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty() && state.step == 0) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size()) {
    throw ValidationError("adam_step: optimizer state was sized for a different parameter set");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double m_corr = 1.0 - std::pow(state.beta1, t);
  const double v_corr = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    params[i] -= state.learning_rate * (m / m_corr) / (std::sqrt(v / v_corr) + state.epsilon);
  }
}

void adam_step(SiameseModel& model, ModelGradients& grads, AdamState& state) {
  auto p_blocks = parameter_blocks(model);
  auto g_blocks = parameter_blocks(grads);
  if (p_blocks.size() != g_blocks.size()) throw ValidationError("adam_step: gradient structure mismatch");

  std::vector<double> flat_params;
  std::vector<double> flat_grads;
  flat_params.reserve(model.parameter_count());
  flat_grads.reserve(model.parameter_count());
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    if (p_blocks[b].size() != g_blocks[b].size()) {
      throw ValidationError("adam_step: gradient block " + std::to_string(b) + " has the wrong size");
    }
    flat_params.insert(flat_params.end(), p_blocks[b].begin(), p_blocks[b].end());
    flat_grads.insert(flat_grads.end(), g_blocks[b].begin(), g_blocks[b].end());
  }
  adam_step(flat_params, flat_grads, state);
  std::size_t offset = 0;
  for (auto& block : p_blocks) {
    std::copy_n(flat_params.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
    offset += block.size();
  }
}

}  // namespace siamgcn
